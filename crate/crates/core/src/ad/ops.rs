//! Op definitions: forward builders on [`Tape`] and the reverse-mode rules.

use super::{accumulate, Tape, TensorId};
use ndarray::linalg::general_mat_mul;
use ndarray::{concatenate, s, Array2, Array3, ArrayD, ArrayView2, Axis, Ix2, Ix3, IxDyn, Slice, Zip};

/// Tape operation. Each variant stores its parent ids plus the constants its
/// backward rule needs; target shapes are implicit in the node value.
pub enum Op {
    Leaf,
    Add { a: TensorId, b: TensorId },
    Sub { a: TensorId, b: TensorId },
    Mul { a: TensorId, b: TensorId },
    Scale { a: TensorId, c: f64 },
    AddScalar { a: TensorId, c: f64 },
    /// 2-D `a [m,k] · b [k,n]`.
    MatMul { a: TensorId, b: TensorId },
    /// 3-D batched matmul `[B,m,k] · [B,k,n]`; with `trans_b`, `b` is `[B,n,k]`
    /// and each batch computes `a · bᵀ`.
    BatchMatMul { a: TensorId, b: TensorId, trans_b: bool },
    Sigmoid { a: TensorId },
    Tanh { a: TensorId },
    Gelu { a: TensorId },
    Exp { a: TensorId },
    /// Elementwise `x^c` for constant `c`; inputs must be non-negative when
    /// `c` is fractional.
    PowConst { a: TensorId, c: f64 },
    /// Log-softmax over the last axis.
    LogSoftmax { a: TensorId },
    /// Softmax over the last axis.
    Softmax { a: TensorId },
    /// `(x - mean) / sqrt(var + eps)` over the last axis (population
    /// variance) — the core of layer normalization, without the affine part.
    Normalize { a: TensorId, eps: f64 },
    SumAxis { a: TensorId, axis: usize },
    MeanAxis { a: TensorId, axis: usize },
    SumAll { a: TensorId },
    Reshape { a: TensorId },
    Permute { a: TensorId, perm: Vec<usize> },
    Concat { parts: Vec<TensorId>, axis: usize },
    SliceAxis { a: TensorId, axis: usize, start: usize, end: usize },
    BroadcastTo { a: TensorId },
    /// Same-padded 1-D convolution over time. `x` is `[N,T,Cin]`, `w` is
    /// `[kernel·Cin, Cout]` with rows ordered tap-major, `b` is `[Cout]`.
    /// Patches are rebuilt in the backward pass instead of being cached.
    Conv1d {
        x: TensorId,
        w: TensorId,
        b: TensorId,
        kernel: usize,
        dilation: usize,
    },
    /// Elementwise multiply by a stored constant mask (dropout etc.).
    MaskMul { a: TensorId, mask: ArrayD<f64> },
}

// ── shape helpers ──────────────────────────────────────────────────────────

fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let nd = a.len().max(b.len());
    let mut out = vec![0usize; nd];
    for i in 0..nd {
        let da = if i < nd - a.len() { 1 } else { a[i - (nd - a.len())] };
        let db = if i < nd - b.len() { 1 } else { b[i - (nd - b.len())] };
        assert!(
            da == db || da == 1 || db == 1,
            "incompatible broadcast: {a:?} vs {b:?}"
        );
        out[i] = da.max(db);
    }
    out
}

/// Reduce `g` back to `target` shape by summing broadcast axes.
fn sum_to_shape(mut g: ArrayD<f64>, target: &[usize]) -> ArrayD<f64> {
    while g.ndim() > target.len() {
        g = g.sum_axis(Axis(0));
    }
    for i in 0..target.len() {
        if target[i] == 1 && g.shape()[i] > 1 {
            g = g.sum_axis(Axis(i)).insert_axis(Axis(i));
        }
    }
    if !g.is_standard_layout() {
        g = g.as_standard_layout().to_owned();
    }
    g
}

fn zip2(a: &ArrayD<f64>, b: &ArrayD<f64>, f: impl Fn(f64, f64) -> f64) -> ArrayD<f64> {
    let sh = broadcast_shape(a.shape(), b.shape());
    let av = a.broadcast(IxDyn(&sh)).expect("broadcast lhs");
    let bv = b.broadcast(IxDyn(&sh)).expect("broadcast rhs");
    let mut out = ArrayD::zeros(IxDyn(&sh));
    Zip::from(&mut out).and(&av).and(&bv).for_each(|o, &x, &y| *o = f(x, y));
    out
}

fn reshape_std(a: ArrayD<f64>, shape: &[usize]) -> ArrayD<f64> {
    let a = if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().to_owned()
    };
    a.into_shape_with_order(IxDyn(shape)).expect("reshape size mismatch")
}

fn mm(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), b.ncols()));
    general_mat_mul(1.0, &a, &b, 0.0, &mut out);
    out
}

fn map1(a: &ArrayD<f64>, f: impl Fn(f64) -> f64) -> ArrayD<f64> {
    a.mapv(f)
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

// ── forward builders ───────────────────────────────────────────────────────

impl Tape {
    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let v = zip2(self.value(a), self.value(b), |x, y| x + y);
        let ng = self.needs_grad(&[a, b]);
        self.push_node(v, Op::Add { a, b }, ng)
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let v = zip2(self.value(a), self.value(b), |x, y| x - y);
        let ng = self.needs_grad(&[a, b]);
        self.push_node(v, Op::Sub { a, b }, ng)
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let v = zip2(self.value(a), self.value(b), |x, y| x * y);
        let ng = self.needs_grad(&[a, b]);
        self.push_node(v, Op::Mul { a, b }, ng)
    }

    pub fn scale(&mut self, a: TensorId, c: f64) -> TensorId {
        let v = map1(self.value(a), |x| x * c);
        let ng = self.needs_grad(&[a]);
        self.push_node(v, Op::Scale { a, c }, ng)
    }

    pub fn add_scalar(&mut self, a: TensorId, c: f64) -> TensorId {
        let v = map1(self.value(a), |x| x + c);
        let ng = self.needs_grad(&[a]);
        self.push_node(v, Op::AddScalar { a, c }, ng)
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let av = self.value(a).view().into_dimensionality::<Ix2>().expect("matmul lhs 2-D");
        let bv = self.value(b).view().into_dimensionality::<Ix2>().expect("matmul rhs 2-D");
        assert_eq!(av.ncols(), bv.nrows(), "matmul inner dims");
        let v = mm(av, bv).into_dyn();
        let ng = self.needs_grad(&[a, b]);
        self.push_node(v, Op::MatMul { a, b }, ng)
    }

    pub fn batch_matmul(&mut self, a: TensorId, b: TensorId, trans_b: bool) -> TensorId {
        let av = self.value(a).view().into_dimensionality::<Ix3>().expect("bmm lhs 3-D");
        let bv = self.value(b).view().into_dimensionality::<Ix3>().expect("bmm rhs 3-D");
        let (bsz, m, k) = av.dim();
        let (b2, n) = if trans_b {
            assert_eq!(bv.dim().2, k, "bmm inner dims (trans)");
            (bv.dim().0, bv.dim().1)
        } else {
            assert_eq!(bv.dim().1, k, "bmm inner dims");
            (bv.dim().0, bv.dim().2)
        };
        assert_eq!(bsz, b2, "bmm batch dims");
        let mut out = Array3::<f64>::zeros((bsz, m, n));
        for ib in 0..bsz {
            let ai = av.index_axis(Axis(0), ib);
            let bi = bv.index_axis(Axis(0), ib);
            let bi = if trans_b { bi.reversed_axes() } else { bi };
            let mut oi = out.index_axis_mut(Axis(0), ib);
            general_mat_mul(1.0, &ai, &bi, 0.0, &mut oi);
        }
        let ng = self.needs_grad(&[a, b]);
        self.push_node(out.into_dyn(), Op::BatchMatMul { a, b, trans_b }, ng)
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        let v = map1(self.value(a), stable_sigmoid);
        let ng = self.needs_grad(&[a]);
        self.push_node(v, Op::Sigmoid { a }, ng)
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        let v = map1(self.value(a), f64::tanh);
        let ng = self.needs_grad(&[a]);
        self.push_node(v, Op::Tanh { a }, ng)
    }

    pub fn gelu(&mut self, a: TensorId) -> TensorId {
        let v = map1(self.value(a), gelu);
        let ng = self.needs_grad(&[a]);
        self.push_node(v, Op::Gelu { a }, ng)
    }

    pub fn exp(&mut self, a: TensorId) -> TensorId {
        let v = map1(self.value(a), f64::exp);
        let ng = self.needs_grad(&[a]);
        self.push_node(v, Op::Exp { a }, ng)
    }

    pub fn pow_const(&mut self, a: TensorId, c: f64) -> TensorId {
        let v = map1(self.value(a), |x| x.powf(c));
        let ng = self.needs_grad(&[a]);
        self.push_node(v, Op::PowConst { a, c }, ng)
    }

    pub fn log_softmax(&mut self, a: TensorId) -> TensorId {
        let src = self.value(a);
        let mut v = src.clone();
        {
            let n = *src.shape().last().unwrap();
            let rows = src.len() / n;
            let mut v2 = v
                .view_mut()
                .into_shape_with_order((rows, n))
                .expect("log_softmax rows");
            for mut row in v2.rows_mut() {
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
                row.mapv_inplace(|x| x - lse);
            }
        }
        let ng = self.needs_grad(&[a]);
        self.push_node(v, Op::LogSoftmax { a }, ng)
    }

    pub fn softmax(&mut self, a: TensorId) -> TensorId {
        let src = self.value(a);
        let mut v = src.clone();
        {
            let n = *src.shape().last().unwrap();
            let rows = src.len() / n;
            let mut v2 = v
                .view_mut()
                .into_shape_with_order((rows, n))
                .expect("softmax rows");
            for mut row in v2.rows_mut() {
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                row.mapv_inplace(|x| {
                    let e = (x - m).exp();
                    z += e;
                    e
                });
                row.mapv_inplace(|x| x / z);
            }
        }
        let ng = self.needs_grad(&[a]);
        self.push_node(v, Op::Softmax { a }, ng)
    }

    pub fn normalize(&mut self, a: TensorId, eps: f64) -> TensorId {
        let src = self.value(a);
        let mut v = src.clone();
        {
            let n = *src.shape().last().unwrap();
            let rows = src.len() / n;
            let mut v2 = v
                .view_mut()
                .into_shape_with_order((rows, n))
                .expect("normalize rows");
            for mut row in v2.rows_mut() {
                let mean = row.sum() / n as f64;
                let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
                let inv = 1.0 / (var + eps).sqrt();
                row.mapv_inplace(|x| (x - mean) * inv);
            }
        }
        let ng = self.needs_grad(&[a]);
        self.push_node(v, Op::Normalize { a, eps }, ng)
    }

    pub fn sum_axis_op(&mut self, a: TensorId, axis: usize) -> TensorId {
        let v = self.value(a).sum_axis(Axis(axis));
        let v = if v.is_standard_layout() { v } else { v.as_standard_layout().to_owned() };
        let ng = self.needs_grad(&[a]);
        self.push_node(v, Op::SumAxis { a, axis }, ng)
    }

    pub fn mean_axis_op(&mut self, a: TensorId, axis: usize) -> TensorId {
        let len = self.shape(a)[axis] as f64;
        let v = self.value(a).sum_axis(Axis(axis)) / len;
        let v = if v.is_standard_layout() { v } else { v.as_standard_layout().to_owned() };
        let ng = self.needs_grad(&[a]);
        self.push_node(v, Op::MeanAxis { a, axis }, ng)
    }

    pub fn sum_all(&mut self, a: TensorId) -> TensorId {
        let v = ArrayD::from_elem(IxDyn(&[]), self.value(a).sum());
        let ng = self.needs_grad(&[a]);
        self.push_node(v, Op::SumAll { a }, ng)
    }

    pub fn reshape(&mut self, a: TensorId, shape: &[usize]) -> TensorId {
        let v = reshape_std(self.value(a).clone(), shape);
        let ng = self.needs_grad(&[a]);
        self.push_node(v, Op::Reshape { a }, ng)
    }

    pub fn permute(&mut self, a: TensorId, perm: &[usize]) -> TensorId {
        let v = self
            .value(a)
            .view()
            .permuted_axes(IxDyn(perm))
            .as_standard_layout()
            .to_owned();
        let ng = self.needs_grad(&[a]);
        self.push_node(v, Op::Permute { a, perm: perm.to_vec() }, ng)
    }

    pub fn concat(&mut self, parts: &[TensorId], axis: usize) -> TensorId {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = concatenate(Axis(axis), &views).expect("concat shape mismatch");
        let v = if v.is_standard_layout() { v } else { v.as_standard_layout().to_owned() };
        let ng = self.needs_grad(parts);
        self.push_node(v, Op::Concat { parts: parts.to_vec(), axis }, ng)
    }

    pub fn slice_axis_op(&mut self, a: TensorId, axis: usize, start: usize, end: usize) -> TensorId {
        let v = self
            .value(a)
            .slice_axis(Axis(axis), Slice::from(start..end))
            .as_standard_layout()
            .to_owned();
        let ng = self.needs_grad(&[a]);
        self.push_node(v, Op::SliceAxis { a, axis, start, end }, ng)
    }

    pub fn broadcast_to(&mut self, a: TensorId, shape: &[usize]) -> TensorId {
        let v = self
            .value(a)
            .broadcast(IxDyn(shape))
            .expect("broadcast_to incompatible")
            .to_owned();
        let ng = self.needs_grad(&[a]);
        self.push_node(v, Op::BroadcastTo { a }, ng)
    }

    pub fn conv1d(
        &mut self,
        x: TensorId,
        w: TensorId,
        b: TensorId,
        kernel: usize,
        dilation: usize,
    ) -> TensorId {
        assert!(kernel % 2 == 1, "conv1d requires odd kernel for same padding");
        let xs = self.shape(x);
        let (nb, t, c) = (xs[0], xs[1], xs[2]);
        let ws = self.shape(w);
        assert_eq!(ws[0], kernel * c, "conv1d weight rows = kernel*Cin");
        let cout = ws[1];
        assert_eq!(self.shape(b), &[cout], "conv1d bias shape");

        let patches = conv_patches(self.value(x), kernel, dilation);
        let w2 = self.value(w).view().into_dimensionality::<Ix2>().unwrap();
        let mut y2 = mm(patches.view(), w2);
        let bv = self.value(b).view().into_dimensionality::<ndarray::Ix1>().unwrap();
        y2 += &bv;
        let v = y2.into_shape_with_order((nb, t, cout)).unwrap().into_dyn();
        let ng = self.needs_grad(&[x, w, b]);
        self.push_node(v, Op::Conv1d { x, w, b, kernel, dilation }, ng)
    }

    pub fn mask_mul(&mut self, a: TensorId, mask: ArrayD<f64>) -> TensorId {
        assert_eq!(self.shape(a), mask.shape(), "mask shape mismatch");
        let v = self.value(a) * &mask;
        let ng = self.needs_grad(&[a]);
        self.push_node(v, Op::MaskMul { a, mask }, ng)
    }
}

/// Extract dilated same-padded patches: `[N,T,Cin] -> [N·T, kernel·Cin]`,
/// rows ordered tap-major to match the conv weight layout.
fn conv_patches(x: &ArrayD<f64>, kernel: usize, dilation: usize) -> Array2<f64> {
    let xv = x.view().into_dimensionality::<Ix3>().expect("conv input 3-D");
    let (nb, t, c) = xv.dim();
    let half = (kernel - 1) / 2;
    let mut patches = Array3::<f64>::zeros((nb, t, kernel * c));
    for j in 0..kernel {
        let off = (j as isize - half as isize) * dilation as isize;
        let t0 = (-off).max(0) as usize;
        let t1 = ((t as isize - off).max(0) as usize).min(t);
        if t0 >= t1 {
            continue;
        }
        let src0 = (t0 as isize + off) as usize;
        let src1 = (t1 as isize + off) as usize;
        patches
            .slice_mut(s![.., t0..t1, j * c..(j + 1) * c])
            .assign(&xv.slice(s![.., src0..src1, ..]));
    }
    patches
        .into_shape_with_order((nb * t, kernel * c))
        .unwrap()
}

// ── backward rules ─────────────────────────────────────────────────────────

pub(crate) fn backward_one(
    tape: &Tape,
    node: usize,
    g: &ArrayD<f64>,
    grads: &mut Vec<Option<ArrayD<f64>>>,
) {
    let nodes = &tape.nodes;
    let needs = |id: TensorId| nodes[id.0].needs_grad;
    match &nodes[node].op {
        Op::Leaf => {}
        Op::Add { a, b } => {
            if needs(*a) {
                accumulate(&mut grads[a.0], sum_to_shape(g.clone(), nodes[a.0].value.shape()));
            }
            if needs(*b) {
                accumulate(&mut grads[b.0], sum_to_shape(g.clone(), nodes[b.0].value.shape()));
            }
        }
        Op::Sub { a, b } => {
            if needs(*a) {
                accumulate(&mut grads[a.0], sum_to_shape(g.clone(), nodes[a.0].value.shape()));
            }
            if needs(*b) {
                accumulate(&mut grads[b.0], sum_to_shape(-g.clone(), nodes[b.0].value.shape()));
            }
        }
        Op::Mul { a, b } => {
            if needs(*a) {
                let d = zip2(g, &nodes[b.0].value, |gi, bi| gi * bi);
                accumulate(&mut grads[a.0], sum_to_shape(d, nodes[a.0].value.shape()));
            }
            if needs(*b) {
                let d = zip2(g, &nodes[a.0].value, |gi, ai| gi * ai);
                accumulate(&mut grads[b.0], sum_to_shape(d, nodes[b.0].value.shape()));
            }
        }
        Op::Scale { a, c } => {
            if needs(*a) {
                accumulate(&mut grads[a.0], g.mapv(|x| x * c));
            }
        }
        Op::AddScalar { a, .. } => {
            if needs(*a) {
                accumulate(&mut grads[a.0], g.clone());
            }
        }
        Op::MatMul { a, b } => {
            let av = nodes[a.0].value.view().into_dimensionality::<Ix2>().unwrap();
            let bv = nodes[b.0].value.view().into_dimensionality::<Ix2>().unwrap();
            let gv = g.view().into_dimensionality::<Ix2>().unwrap();
            if needs(*a) {
                accumulate(&mut grads[a.0], mm(gv, bv.reversed_axes()).into_dyn());
            }
            if needs(*b) {
                accumulate(&mut grads[b.0], mm(av.reversed_axes(), gv).into_dyn());
            }
        }
        Op::BatchMatMul { a, b, trans_b } => {
            let av = nodes[a.0].value.view().into_dimensionality::<Ix3>().unwrap();
            let bv = nodes[b.0].value.view().into_dimensionality::<Ix3>().unwrap();
            let gv = g.view().into_dimensionality::<Ix3>().unwrap();
            let bsz = av.dim().0;
            if needs(*a) {
                let mut da = Array3::<f64>::zeros(av.dim());
                for ib in 0..bsz {
                    let gi = gv.index_axis(Axis(0), ib);
                    let bi = bv.index_axis(Axis(0), ib);
                    let bi = if *trans_b { bi } else { bi.reversed_axes() };
                    let mut di = da.index_axis_mut(Axis(0), ib);
                    general_mat_mul(1.0, &gi, &bi, 0.0, &mut di);
                }
                accumulate(&mut grads[a.0], da.into_dyn());
            }
            if needs(*b) {
                let mut db = Array3::<f64>::zeros(bv.dim());
                for ib in 0..bsz {
                    let gi = gv.index_axis(Axis(0), ib);
                    let ai = av.index_axis(Axis(0), ib);
                    let mut di = db.index_axis_mut(Axis(0), ib);
                    if *trans_b {
                        // y = a·bᵀ  ⇒  db = gᵀ·a
                        general_mat_mul(1.0, &gi.reversed_axes(), &ai, 0.0, &mut di);
                    } else {
                        general_mat_mul(1.0, &ai.reversed_axes(), &gi, 0.0, &mut di);
                    }
                }
                accumulate(&mut grads[b.0], db.into_dyn());
            }
        }
        Op::Sigmoid { a } => {
            if needs(*a) {
                let y = &nodes[node].value;
                let d = Zip::from(g).and(y).map_collect(|&gi, &yi| gi * yi * (1.0 - yi));
                accumulate(&mut grads[a.0], d);
            }
        }
        Op::Tanh { a } => {
            if needs(*a) {
                let y = &nodes[node].value;
                let d = Zip::from(g).and(y).map_collect(|&gi, &yi| gi * (1.0 - yi * yi));
                accumulate(&mut grads[a.0], d);
            }
        }
        Op::Gelu { a } => {
            if needs(*a) {
                let x = &nodes[a.0].value;
                let d = Zip::from(g).and(x).map_collect(|&gi, &xi| gi * gelu_grad(xi));
                accumulate(&mut grads[a.0], d);
            }
        }
        Op::Exp { a } => {
            if needs(*a) {
                let y = &nodes[node].value;
                let d = Zip::from(g).and(y).map_collect(|&gi, &yi| gi * yi);
                accumulate(&mut grads[a.0], d);
            }
        }
        Op::PowConst { a, c } => {
            if needs(*a) {
                let x = &nodes[a.0].value;
                let c = *c;
                let d = Zip::from(g).and(x).map_collect(|&gi, &xi| {
                    if xi == 0.0 && c < 1.0 {
                        0.0 // subgradient at the boundary; only hit when the base saturates
                    } else {
                        gi * c * xi.powf(c - 1.0)
                    }
                });
                accumulate(&mut grads[a.0], d);
            }
        }
        Op::LogSoftmax { a } => {
            if needs(*a) {
                let y = &nodes[node].value;
                let mut d = g.clone();
                let n = *y.shape().last().unwrap();
                let rows = y.len() / n;
                let yv = y.view().into_shape_with_order((rows, n)).unwrap();
                let mut dv = d.view_mut().into_shape_with_order((rows, n)).unwrap();
                for (mut drow, yrow) in dv.rows_mut().into_iter().zip(yv.rows()) {
                    let gsum: f64 = drow.sum();
                    Zip::from(&mut drow).and(&yrow).for_each(|di, &yi| {
                        *di -= yi.exp() * gsum;
                    });
                }
                accumulate(&mut grads[a.0], d);
            }
        }
        Op::Softmax { a } => {
            if needs(*a) {
                let y = &nodes[node].value;
                let mut d = g.clone();
                let n = *y.shape().last().unwrap();
                let rows = y.len() / n;
                let yv = y.view().into_shape_with_order((rows, n)).unwrap();
                let mut dv = d.view_mut().into_shape_with_order((rows, n)).unwrap();
                for (mut drow, yrow) in dv.rows_mut().into_iter().zip(yv.rows()) {
                    let dot: f64 = drow.iter().zip(yrow.iter()).map(|(&di, &yi)| di * yi).sum();
                    Zip::from(&mut drow).and(&yrow).for_each(|di, &yi| {
                        *di = yi * (*di - dot);
                    });
                }
                accumulate(&mut grads[a.0], d);
            }
        }
        Op::Normalize { a, eps } => {
            if needs(*a) {
                let x = &nodes[a.0].value;
                let y = &nodes[node].value;
                let mut d = g.clone();
                let n = *y.shape().last().unwrap();
                let rows = y.len() / n;
                let nf = n as f64;
                let xv = x.view().into_shape_with_order((rows, n)).unwrap();
                let yv = y.view().into_shape_with_order((rows, n)).unwrap();
                let mut dv = d.view_mut().into_shape_with_order((rows, n)).unwrap();
                for ((mut drow, yrow), xrow) in
                    dv.rows_mut().into_iter().zip(yv.rows()).zip(xv.rows())
                {
                    let mean = xrow.sum() / nf;
                    let var = xrow.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / nf;
                    let inv = 1.0 / (var + eps).sqrt();
                    let gmean: f64 = drow.sum() / nf;
                    let gymean: f64 =
                        drow.iter().zip(yrow.iter()).map(|(&di, &yi)| di * yi).sum::<f64>() / nf;
                    Zip::from(&mut drow).and(&yrow).for_each(|di, &yi| {
                        *di = (*di - gmean - yi * gymean) * inv;
                    });
                }
                accumulate(&mut grads[a.0], d);
            }
        }
        Op::SumAxis { a, axis } => {
            if needs(*a) {
                let target = nodes[a.0].value.shape();
                let gx = g
                    .clone()
                    .insert_axis(Axis(*axis))
                    .broadcast(IxDyn(target))
                    .unwrap()
                    .to_owned();
                accumulate(&mut grads[a.0], gx);
            }
        }
        Op::MeanAxis { a, axis } => {
            if needs(*a) {
                let target = nodes[a.0].value.shape();
                let scale = 1.0 / target[*axis] as f64;
                let gx = g
                    .mapv(|x| x * scale)
                    .insert_axis(Axis(*axis))
                    .broadcast(IxDyn(target))
                    .unwrap()
                    .to_owned();
                accumulate(&mut grads[a.0], gx);
            }
        }
        Op::SumAll { a } => {
            if needs(*a) {
                let gs = g.iter().next().copied().unwrap_or(0.0);
                accumulate(
                    &mut grads[a.0],
                    ArrayD::from_elem(IxDyn(nodes[a.0].value.shape()), gs),
                );
            }
        }
        Op::Reshape { a } => {
            if needs(*a) {
                accumulate(&mut grads[a.0], reshape_std(g.clone(), nodes[a.0].value.shape()));
            }
        }
        Op::Permute { a, perm } => {
            if needs(*a) {
                let mut inv = vec![0usize; perm.len()];
                for (i, &p) in perm.iter().enumerate() {
                    inv[p] = i;
                }
                let gx = g
                    .view()
                    .permuted_axes(IxDyn(&inv))
                    .as_standard_layout()
                    .to_owned();
                accumulate(&mut grads[a.0], gx);
            }
        }
        Op::Concat { parts, axis } => {
            let mut off = 0usize;
            for &p in parts {
                let ext = nodes[p.0].value.shape()[*axis];
                if needs(p) {
                    let gp = g
                        .slice_axis(Axis(*axis), Slice::from(off..off + ext))
                        .as_standard_layout()
                        .to_owned();
                    accumulate(&mut grads[p.0], gp);
                }
                off += ext;
            }
        }
        Op::SliceAxis { a, axis, start, end } => {
            if needs(*a) {
                let mut gx = ArrayD::zeros(IxDyn(nodes[a.0].value.shape()));
                gx.slice_axis_mut(Axis(*axis), Slice::from(*start..*end))
                    .assign(g);
                accumulate(&mut grads[a.0], gx);
            }
        }
        Op::BroadcastTo { a } => {
            if needs(*a) {
                accumulate(&mut grads[a.0], sum_to_shape(g.clone(), nodes[a.0].value.shape()));
            }
        }
        Op::Conv1d { x, w, b, kernel, dilation } => {
            let xs = nodes[x.0].value.shape().to_vec();
            let (nb, t, c) = (xs[0], xs[1], xs[2]);
            let cout = nodes[node].value.shape()[2];
            let g2 = g
                .view()
                .into_shape_with_order((nb * t, cout))
                .expect("conv grad rows");
            if needs(*w) {
                let patches = conv_patches(&nodes[x.0].value, *kernel, *dilation);
                accumulate(&mut grads[w.0], mm(patches.t(), g2).into_dyn());
            }
            if needs(*b) {
                accumulate(&mut grads[b.0], g2.sum_axis(Axis(0)).into_dyn());
            }
            if needs(*x) {
                let w2 = nodes[w.0].value.view().into_dimensionality::<Ix2>().unwrap();
                let dp = mm(g2, w2.reversed_axes());
                let dp3 = dp.into_shape_with_order((nb, t, kernel * c)).unwrap();
                let mut dx = Array3::<f64>::zeros((nb, t, c));
                let half = (kernel - 1) / 2;
                for j in 0..*kernel {
                    let off = (j as isize - half as isize) * *dilation as isize;
                    let t0 = (-off).max(0) as usize;
                    let t1 = ((t as isize - off).max(0) as usize).min(t);
                    if t0 >= t1 {
                        continue;
                    }
                    let src0 = (t0 as isize + off) as usize;
                    let src1 = (t1 as isize + off) as usize;
                    let mut dst = dx.slice_mut(s![.., src0..src1, ..]);
                    let add = dp3.slice(s![.., t0..t1, j * c..(j + 1) * c]);
                    Zip::from(&mut dst).and(&add).for_each(|d, &s| *d += s);
                }
                accumulate(&mut grads[x.0], dx.into_dyn());
            }
        }
        Op::MaskMul { a, mask } => {
            if needs(*a) {
                accumulate(&mut grads[a.0], g * mask);
            }
        }
    }
}

/// Reference (naive) same-padded dilated convolution, used by tests to pin
/// the fused implementation.
#[cfg(test)]
pub(crate) fn conv1d_reference(
    x: &ArrayD<f64>,
    w: &ArrayD<f64>,
    b: &ArrayD<f64>,
    kernel: usize,
    dilation: usize,
) -> ArrayD<f64> {
    let xv = x.view().into_dimensionality::<Ix3>().unwrap();
    let wv = w.view().into_dimensionality::<Ix2>().unwrap();
    let bv = b.view().into_dimensionality::<ndarray::Ix1>().unwrap();
    let (nb, t, c) = xv.dim();
    let cout = wv.ncols();
    let half = (kernel - 1) / 2;
    let mut y = Array3::<f64>::zeros((nb, t, cout));
    for n in 0..nb {
        for ti in 0..t {
            for co in 0..cout {
                let mut acc = bv[co];
                for j in 0..kernel {
                    let ts = ti as isize + (j as isize - half as isize) * dilation as isize;
                    if ts < 0 || ts >= t as isize {
                        continue;
                    }
                    for ci in 0..c {
                        acc += xv[(n, ts as usize, ci)] * wv[(j * c + ci, co)];
                    }
                }
                y[(n, ti, co)] = acc;
            }
        }
    }
    y.into_dyn()
}
