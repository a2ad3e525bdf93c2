//! Named parameter tensors: registry, deterministic initialization, and
//! flat scalar addressing for finite-difference sweeps.
//!
//! Initialization: weight matrices draw from `U(±1/√fan_in)`, biases start at
//! zero, normalization scales at one, and the class token / positional table
//! from `N(0, 0.02²)`. All tensors are drawn in registration order from a
//! single seeded stream, so the same seed reproduces the same bytes.

use crate::config::ModelConfig;
use crate::error::CoreError;
use crate::rng::stream;
use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    FanInUniform(usize),
    Zero,
    One,
    Normal02,
}

struct TensorSpec {
    name: String,
    shape: Vec<usize>,
    init: Init,
    decay: bool,
}

fn spec(name: impl Into<String>, shape: &[usize], init: Init, decay: bool) -> TensorSpec {
    TensorSpec {
        name: name.into(),
        shape: shape.to_vec(),
        init,
        decay,
    }
}

/// Architecture-ordered tensor registry. The order is load-bearing: init
/// draws, optimizer state, checkpoints, and gradient collection all index by
/// position in this list.
fn registry(cfg: &ModelConfig) -> Vec<TensorSpec> {
    let mut v = Vec::new();
    let (d, h, p) = (cfg.embed_dim, cfg.gru_hidden, cfg.attn_pool_dim);
    let s1 = cfg.seq_len + 1;

    // Stem conv: raw channels -> stem width, kernel 5.
    v.push(spec(
        "wle.stem.w",
        &[5 * cfg.in_channels, cfg.stem_width],
        Init::FanInUniform(5 * cfg.in_channels),
        true,
    ));
    v.push(spec("wle.stem.b", &[cfg.stem_width], Init::Zero, false));
    v.push(spec("wle.stem.ln.scale", &[cfg.stem_width], Init::One, false));
    v.push(spec("wle.stem.ln.shift", &[cfg.stem_width], Init::Zero, false));

    // Multi-dilation blocks with SE attention.
    let mut cin = cfg.stem_width;
    for (i, &cout) in cfg.block_widths.iter().enumerate() {
        let b = format!("wle.block{}", i + 1);
        for dil in [1usize, 2, 4] {
            v.push(spec(
                format!("{b}.conv_d{dil}.w"),
                &[3 * cin, cout],
                Init::FanInUniform(3 * cin),
                true,
            ));
            v.push(spec(format!("{b}.conv_d{dil}.b"), &[cout], Init::Zero, false));
        }
        v.push(spec(format!("{b}.ln.scale"), &[cout], Init::One, false));
        v.push(spec(format!("{b}.ln.shift"), &[cout], Init::Zero, false));
        let mid = cout / cfg.se_reduction;
        v.push(spec(format!("{b}.se.fc1.w"), &[cout, mid], Init::FanInUniform(cout), true));
        v.push(spec(format!("{b}.se.fc1.b"), &[mid], Init::Zero, false));
        v.push(spec(format!("{b}.se.fc2.w"), &[mid, cout], Init::FanInUniform(mid), true));
        v.push(spec(format!("{b}.se.fc2.b"), &[cout], Init::Zero, false));
        cin = cout;
    }

    // Bidirectional GRU over window timesteps; gates ordered (reset, update,
    // candidate) within the 3H axis.
    for dir in ["fwd", "bwd"] {
        let g = format!("wle.gru.{dir}");
        v.push(spec(format!("{g}.w_ih"), &[cin, 3 * h], Init::FanInUniform(cin), true));
        v.push(spec(format!("{g}.w_hh"), &[h, 3 * h], Init::FanInUniform(h), true));
        v.push(spec(format!("{g}.b_ih"), &[3 * h], Init::Zero, false));
        v.push(spec(format!("{g}.b_hh"), &[3 * h], Init::Zero, false));
    }

    // Attention pooling over timesteps, then projection to the embedding.
    v.push(spec("wle.pool.w", &[2 * h, p], Init::FanInUniform(2 * h), true));
    v.push(spec("wle.pool.b", &[p], Init::Zero, false));
    v.push(spec("wle.pool.v", &[p], Init::FanInUniform(p), true));
    v.push(spec("wle.proj.w", &[2 * h, d], Init::FanInUniform(2 * h), true));
    v.push(spec("wle.proj.b", &[d], Init::Zero, false));

    // Sequence transformer: class token, positions, one pre-LN layer.
    v.push(spec("wat.cls", &[1, 1, d], Init::Normal02, true));
    v.push(spec("wat.pos", &[1, s1, d], Init::Normal02, true));
    v.push(spec("wat.ln1.scale", &[d], Init::One, false));
    v.push(spec("wat.ln1.shift", &[d], Init::Zero, false));
    for wn in ["wq", "wk", "wv", "wo"] {
        v.push(spec(format!("wat.attn.{wn}.w"), &[d, d], Init::FanInUniform(d), true));
        v.push(spec(format!("wat.attn.{wn}.b"), &[d], Init::Zero, false));
    }
    v.push(spec("wat.ln2.scale", &[d], Init::One, false));
    v.push(spec("wat.ln2.shift", &[d], Init::Zero, false));
    v.push(spec("wat.ff.fc1.w", &[d, cfg.wat_ff], Init::FanInUniform(d), true));
    v.push(spec("wat.ff.fc1.b", &[cfg.wat_ff], Init::Zero, false));
    v.push(spec("wat.ff.fc2.w", &[cfg.wat_ff, d], Init::FanInUniform(cfg.wat_ff), true));
    v.push(spec("wat.ff.fc2.b", &[d], Init::Zero, false));
    v.push(spec("wat.ln_f.scale", &[d], Init::One, false));
    v.push(spec("wat.ln_f.shift", &[d], Init::Zero, false));

    // Heads: scenario from the class token; gated local/context action.
    v.push(spec("head.scenario.w", &[d, cfg.n_scenarios], Init::FanInUniform(d), true));
    v.push(spec("head.scenario.b", &[cfg.n_scenarios], Init::Zero, false));
    v.push(spec("head.action.loc.w", &[d, cfg.n_actions], Init::FanInUniform(d), true));
    v.push(spec("head.action.ctx.w", &[d, cfg.n_actions], Init::FanInUniform(d), true));
    v.push(spec(
        "head.action.gate.fc1.w",
        &[2 * d, cfg.gate_hidden],
        Init::FanInUniform(2 * d),
        true,
    ));
    v.push(spec("head.action.gate.fc1.b", &[cfg.gate_hidden], Init::Zero, false));
    v.push(spec("head.action.gate.fc2.w", &[cfg.gate_hidden, 1], Init::FanInUniform(cfg.gate_hidden), true));
    v.push(spec("head.action.gate.fc2.b", &[1], Init::Zero, false));

    v
}

/// A named, ordered set of parameter tensors (also used for gradients,
/// optimizer moments, and the EMA shadow).
#[derive(Clone)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<ArrayD<f64>>,
    decay: Vec<bool>,
    index: BTreeMap<String, usize>,
    /// Cumulative scalar offsets per tensor; last entry = total scalar count.
    offsets: Vec<usize>,
}

impl ParamSet {
    fn from_tensors(names: Vec<String>, tensors: Vec<ArrayD<f64>>, decay: Vec<bool>) -> Self {
        let mut index = BTreeMap::new();
        let mut offsets = Vec::with_capacity(names.len() + 1);
        let mut off = 0usize;
        for (i, n) in names.iter().enumerate() {
            index.insert(n.clone(), i);
            offsets.push(off);
            off += tensors[i].len();
        }
        offsets.push(off);
        ParamSet {
            names,
            tensors,
            decay,
            index,
            offsets,
        }
    }

    pub fn n_tensors(&self) -> usize {
        self.tensors.len()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn tensor(&self, i: usize) -> &ArrayD<f64> {
        &self.tensors[i]
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut ArrayD<f64> {
        &mut self.tensors[i]
    }

    pub fn decays(&self, i: usize) -> bool {
        self.decay[i]
    }

    pub fn get(&self, name: &str) -> Option<&ArrayD<f64>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ArrayD<f64>)> {
        self.names.iter().map(|s| s.as_str()).zip(self.tensors.iter())
    }

    /// Same names/shapes, all zeros — for gradients and moments.
    pub fn zeros_like(&self) -> ParamSet {
        let tensors = self
            .tensors
            .iter()
            .map(|t| ArrayD::zeros(IxDyn(t.shape())))
            .collect();
        ParamSet::from_tensors(self.names.clone(), tensors, self.decay.clone())
    }

    fn locate(&self, flat: usize) -> (usize, usize) {
        debug_assert!(flat < self.scalar_count());
        // offsets is sorted; binary search for the owning tensor.
        let ti = match self.offsets.binary_search(&flat) {
            Ok(i) if i < self.tensors.len() => i,
            Ok(i) => i - 1,
            Err(i) => i - 1,
        };
        (ti, flat - self.offsets[ti])
    }

    pub fn get_scalar(&self, flat: usize) -> f64 {
        let (ti, off) = self.locate(flat);
        self.tensors[ti].as_slice().expect("standard layout")[off]
    }

    pub fn set_scalar(&mut self, flat: usize, v: f64) {
        let (ti, off) = self.locate(flat);
        self.tensors[ti].as_slice_mut().expect("standard layout")[off] = v;
    }

    /// Name and within-tensor offset of a flat index (for diagnostics).
    pub fn describe_scalar(&self, flat: usize) -> (String, usize) {
        let (ti, off) = self.locate(flat);
        (self.names[ti].clone(), off)
    }

    /// Verify two sets are structurally identical (names and shapes).
    pub fn check_compatible(&self, other: &ParamSet) -> Result<(), CoreError> {
        if self.names != other.names {
            return Err(CoreError::Checkpoint("parameter name lists differ".into()));
        }
        for (a, b) in self.tensors.iter().zip(other.tensors.iter()) {
            if a.shape() != b.shape() {
                return Err(CoreError::Checkpoint("parameter shapes differ".into()));
            }
        }
        Ok(())
    }
}

fn draw(shape: &[usize], init: Init, rng: &mut ChaCha8Rng) -> ArrayD<f64> {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = match init {
        Init::FanInUniform(fan_in) => {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
        }
        Init::Zero => vec![0.0; n],
        Init::One => vec![1.0; n],
        Init::Normal02 => (0..n)
            .map(|_| {
                // Box-Muller from two uniforms; two draws per value keeps the
                // stream layout independent of rejection behavior.
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                0.02 * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect(),
    };
    ArrayD::from_shape_vec(IxDyn(shape), data).unwrap()
}

/// Total scalar parameter count for an architecture.
pub fn param_count(cfg: &ModelConfig) -> usize {
    registry(cfg)
        .iter()
        .map(|s| s.shape.iter().product::<usize>())
        .sum()
}

/// Initialize all parameters for `cfg` from `seed`. Deterministic: the same
/// seed and config produce bit-identical tensors.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> ParamSet {
    let specs = registry(cfg);
    let mut rng = stream(seed, "model/init");
    let mut names = Vec::with_capacity(specs.len());
    let mut tensors = Vec::with_capacity(specs.len());
    let mut decay = Vec::with_capacity(specs.len());
    for s in specs {
        tensors.push(draw(&s.shape, s.init, &mut rng));
        names.push(s.name);
        decay.push(s.decay);
    }
    ParamSet::from_tensors(names, tensors, decay)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let cfg = ModelConfig::tiny();
        let a = init_params(&cfg, 9);
        let b = init_params(&cfg, 9);
        for ((_, ta), (_, tb)) in a.iter().zip(b.iter()) {
            assert_eq!(
                ta.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                tb.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
        let c = init_params(&cfg, 10);
        let diff = a
            .iter()
            .zip(c.iter())
            .any(|((_, ta), (_, tc))| ta.iter().zip(tc.iter()).any(|(x, y)| x != y));
        assert!(diff, "different seeds must give different parameters");
    }

    #[test]
    fn default_param_count_matches_architecture() {
        // Hand-tallied from the registry shapes for the default widths.
        let cfg = ModelConfig::default();
        let p = init_params(&cfg, 0);
        assert_eq!(p.scalar_count(), 717_493);
    }

    #[test]
    fn decay_flags_exclude_biases_and_norms() {
        let cfg = ModelConfig::default();
        let p = init_params(&cfg, 0);
        for i in 0..p.n_tensors() {
            let name = p.name(i);
            let expect = !(name.ends_with(".b")
                || name.ends_with(".b_ih")
                || name.ends_with(".b_hh")
                || name.contains(".ln")
                || name.ends_with(".scale")
                || name.ends_with(".shift"));
            assert_eq!(p.decays(i), expect, "decay flag for {name}");
        }
        // Spot checks.
        let idx = |n: &str| (0..p.n_tensors()).find(|&i| p.name(i) == n).unwrap();
        assert!(p.decays(idx("wle.stem.w")));
        assert!(!p.decays(idx("wle.stem.b")));
        assert!(!p.decays(idx("wat.ln1.scale")));
        assert!(p.decays(idx("wat.cls")));
        assert!(p.decays(idx("wat.pos")));
    }

    #[test]
    fn scalar_addressing_roundtrip() {
        let cfg = ModelConfig::tiny();
        let mut p = init_params(&cfg, 3);
        let n = p.scalar_count();
        assert!(n > 10_000);
        for flat in [0usize, 1, 491, n / 2, n - 1] {
            let v = p.get_scalar(flat);
            p.set_scalar(flat, v + 1.0);
            assert_eq!(p.get_scalar(flat), v + 1.0);
            p.set_scalar(flat, v);
        }
        // Flattened view walks tensors in registration order.
        let (name0, _) = p.describe_scalar(0);
        assert_eq!(name0, "wle.stem.w");
        let (name_last, _) = p.describe_scalar(n - 1);
        assert_eq!(name_last, "head.action.gate.fc2.b");
    }

    #[test]
    fn init_bounds_respect_fan_in() {
        let cfg = ModelConfig::default();
        let p = init_params(&cfg, 1);
        let w = p.get("wle.stem.w").unwrap();
        let bound = 1.0 / ((5.0 * 8.0) as f64).sqrt();
        assert!(w.iter().all(|&v| v.abs() < bound));
        let ln = p.get("wat.ln1.scale").unwrap();
        assert!(ln.iter().all(|&v| v == 1.0));
        let b = p.get("wle.proj.b").unwrap();
        assert!(b.iter().all(|&v| v == 0.0));
    }
}
