//! Forward graph construction: window encoder, sequence transformer, heads.
//!
//! The whole model is expressed as tape ops over a flat batch of windows
//! `[B·S, T, C]` (channels last). The window encoder treats every window
//! independently; the sequence transformer reshapes to `[B, S, D]`, prepends
//! a class token, and mixes across the sequence axis.

use super::params::ParamSet;
use crate::ad::{Tape, TensorId};
use crate::config::ModelConfig;
use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Tape handles for every parameter, bound in registration order.
pub struct ParamNodes {
    ids: Vec<TensorId>,
    index: BTreeMap<String, usize>,
}

impl ParamNodes {
    /// Insert every tensor of `params` into the tape. `trainable` controls
    /// whether gradients flow (bind constants for inference).
    pub fn bind(tape: &mut Tape, params: &ParamSet, trainable: bool) -> ParamNodes {
        let mut ids = Vec::with_capacity(params.n_tensors());
        let mut index = BTreeMap::new();
        for i in 0..params.n_tensors() {
            let t = params.tensor(i).clone();
            let id = if trainable { tape.leaf(t) } else { tape.constant(t) };
            index.insert(params.name(i).to_string(), i);
            ids.push(id);
        }
        ParamNodes { ids, index }
    }

    pub fn id(&self, name: &str) -> TensorId {
        self.ids[*self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))]
    }

    pub fn ids(&self) -> &[TensorId] {
        &self.ids
    }
}

/// Dropout behavior for one forward build.
pub enum DropoutMode<'a> {
    /// Draw fresh masks from the stream (training).
    Train(&'a mut ChaCha8Rng),
    /// Identity (evaluation / gradient checking).
    Eval,
}

/// Everything downstream consumers need from one forward pass.
pub struct ForwardOutput {
    /// Per-window embeddings `e_t`, `[B, S, D]`.
    pub window_embeddings: TensorId,
    /// Sequence summary token `h_cls`, `[B, D]`.
    pub cls_embedding: TensorId,
    /// Contextualized window tokens `h_t`, `[B, S, D]`.
    pub context_tokens: TensorId,
    /// `[B, n_scenarios]`.
    pub scenario_logits: TensorId,
    /// `[B, S, n_actions]`.
    pub action_logits: TensorId,
    /// Context-gate activations, `[B, S, 1]`.
    pub gate: TensorId,
}

const LN_EPS: f64 = 1e-5;

fn ln_affine(tape: &mut Tape, x: TensorId, scale: TensorId, shift: TensorId) -> TensorId {
    let n = tape.normalize(x, LN_EPS);
    let s = tape.mul(n, scale);
    tape.add(s, shift)
}

/// Apply `w` (+ optional bias) along the last axis of a 3-D tensor.
fn linear3(
    tape: &mut Tape,
    x: TensorId,
    w: TensorId,
    b: Option<TensorId>,
) -> TensorId {
    let sh = tape.shape(x).to_vec();
    let (d0, d1, din) = (sh[0], sh[1], sh[2]);
    let dout = tape.shape(w)[1];
    let flat = tape.reshape(x, &[d0 * d1, din]);
    let mut y = tape.matmul(flat, w);
    if let Some(b) = b {
        y = tape.add(y, b);
    }
    tape.reshape(y, &[d0, d1, dout])
}

fn dropout(tape: &mut Tape, x: TensorId, p: f64, mode: &mut DropoutMode) -> TensorId {
    let DropoutMode::Train(rng) = mode else { return x };
    if p <= 0.0 {
        return x;
    }
    let keep = 1.0 - p;
    let shape = tape.shape(x).to_vec();
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n)
        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    let mask = ArrayD::from_shape_vec(IxDyn(&shape), data).unwrap();
    tape.mask_mul(x, mask)
}

/// One GRU direction. Returns per-timestep states in time order, each
/// `[N, 1, H]`. Gate layout along the 3H axis: reset, update, candidate;
/// the candidate's hidden contribution is gated by reset before the tanh.
fn gru_direction(
    tape: &mut Tape,
    x: TensorId,
    w_ih: TensorId,
    w_hh: TensorId,
    b_ih: TensorId,
    b_hh: TensorId,
    hidden: usize,
    reverse: bool,
) -> Vec<TensorId> {
    let sh = tape.shape(x).to_vec();
    let (n, t) = (sh[0], sh[1]);
    let h = hidden;

    let xz = linear3(tape, x, w_ih, Some(b_ih)); // [N, T, 3H]
    let mut state = tape.constant(ArrayD::zeros(IxDyn(&[n, h])));
    let mut outs: Vec<Option<TensorId>> = vec![None; t];

    let times: Vec<usize> = if reverse {
        (0..t).rev().collect()
    } else {
        (0..t).collect()
    };
    for ti in times {
        let xg3 = tape.slice_axis_op(xz, 1, ti, ti + 1);
        let xg = tape.reshape(xg3, &[n, 3 * h]);
        let hg_lin = tape.matmul(state, w_hh);
        let hg = tape.add(hg_lin, b_hh);

        let xr = tape.slice_axis_op(xg, 1, 0, h);
        let xu = tape.slice_axis_op(xg, 1, h, 2 * h);
        let xn = tape.slice_axis_op(xg, 1, 2 * h, 3 * h);
        let hr = tape.slice_axis_op(hg, 1, 0, h);
        let hu = tape.slice_axis_op(hg, 1, h, 2 * h);
        let hn = tape.slice_axis_op(hg, 1, 2 * h, 3 * h);

        let r_in = tape.add(xr, hr);
        let r = tape.sigmoid(r_in);
        let u_in = tape.add(xu, hu);
        let u = tape.sigmoid(u_in);
        let rn = tape.mul(r, hn);
        let n_in = tape.add(xn, rn);
        let cand = tape.tanh(n_in);

        // state' = (1-u)·cand + u·state
        let uc = tape.mul(u, cand);
        let us = tape.mul(u, state);
        let diff = tape.sub(cand, uc);
        state = tape.add(diff, us);

        outs[ti] = Some(tape.reshape(state, &[n, 1, h]));
    }
    outs.into_iter().map(|o| o.unwrap()).collect()
}

/// Encode a flat batch of windows `[N, T, C]` into embeddings `[N, D]`:
/// stem conv → three multi-dilation SE blocks → BiGRU → attention pooling →
/// linear projection.
fn encode_windows(
    tape: &mut Tape,
    pn: &ParamNodes,
    cfg: &ModelConfig,
    x: TensorId,
    mode: &mut DropoutMode,
) -> TensorId {
    let n = tape.shape(x)[0];
    let t = cfg.window_len;
    let h = cfg.gru_hidden;

    // Stem.
    let mut cur = {
        let w = pn.id("wle.stem.w");
        let b = pn.id("wle.stem.b");
        let c = tape.conv1d(x, w, b, 5, 1);
        let ln = ln_affine(tape, c, pn.id("wle.stem.ln.scale"), pn.id("wle.stem.ln.shift"));
        tape.gelu(ln)
    };

    // Multi-dilation blocks with SE channel reweighting and residuals where
    // widths match.
    let mut cin = cfg.stem_width;
    for (i, &cout) in cfg.block_widths.iter().enumerate() {
        let prefix = format!("wle.block{}", i + 1);
        let input = cur;
        let mut acc: Option<TensorId> = None;
        for dil in [1usize, 2, 4] {
            let w = pn.id(&format!("{prefix}.conv_d{dil}.w"));
            let b = pn.id(&format!("{prefix}.conv_d{dil}.b"));
            let y = tape.conv1d(input, w, b, 3, dil);
            acc = Some(match acc {
                None => y,
                Some(a) => tape.add(a, y),
            });
        }
        let summed = acc.unwrap();
        let ln = ln_affine(
            tape,
            summed,
            pn.id(&format!("{prefix}.ln.scale")),
            pn.id(&format!("{prefix}.ln.shift")),
        );
        let act = tape.gelu(ln);

        // Squeeze-and-excitation: global average over time, bottleneck MLP,
        // sigmoid channel gates.
        let squeeze = tape.mean_axis_op(act, 1); // [N, C]
        let f1 = tape.matmul(squeeze, pn.id(&format!("{prefix}.se.fc1.w")));
        let f1 = tape.add(f1, pn.id(&format!("{prefix}.se.fc1.b")));
        let f1 = tape.gelu(f1);
        let f2 = tape.matmul(f1, pn.id(&format!("{prefix}.se.fc2.w")));
        let f2 = tape.add(f2, pn.id(&format!("{prefix}.se.fc2.b")));
        let gates = tape.sigmoid(f2);
        let gates3 = tape.reshape(gates, &[n, 1, cout]);
        let mut out = tape.mul(act, gates3);

        if cin == cout {
            out = tape.add(out, input);
        }
        cur = dropout(tape, out, cfg.dropout_wle, mode);
        cin = cout;
    }

    // Bidirectional GRU over timesteps.
    let fwd = gru_direction(
        tape,
        cur,
        pn.id("wle.gru.fwd.w_ih"),
        pn.id("wle.gru.fwd.w_hh"),
        pn.id("wle.gru.fwd.b_ih"),
        pn.id("wle.gru.fwd.b_hh"),
        h,
        false,
    );
    let bwd = gru_direction(
        tape,
        cur,
        pn.id("wle.gru.bwd.w_ih"),
        pn.id("wle.gru.bwd.w_hh"),
        pn.id("wle.gru.bwd.b_ih"),
        pn.id("wle.gru.bwd.b_hh"),
        h,
        true,
    );
    let hf = tape.concat(&fwd, 1);
    let hb = tape.concat(&bwd, 1);
    let hcat = tape.concat(&[hf, hb], 2); // [N, T, 2H]

    // Additive attention pooling: score = v·tanh(W·h + b).
    let proj = linear3(tape, hcat, pn.id("wle.pool.w"), Some(pn.id("wle.pool.b")));
    let tanh = tape.tanh(proj); // [N, T, P]
    let p = cfg.attn_pool_dim;
    let flat = tape.reshape(tanh, &[n * t, p]);
    let v = pn.id("wle.pool.v");
    let v2 = tape.reshape(v, &[p, 1]);
    let scores_flat = tape.matmul(flat, v2); // [N·T, 1]
    let scores = tape.reshape(scores_flat, &[n, t]);
    let alpha = tape.softmax(scores);
    let alpha3 = tape.reshape(alpha, &[n, t, 1]);
    let weighted = tape.mul(hcat, alpha3);
    let pooled = tape.sum_axis_op(weighted, 1); // [N, 2H]

    let e = tape.matmul(pooled, pn.id("wle.proj.w"));
    tape.add(e, pn.id("wle.proj.b")) // [N, D]
}

fn split_heads(tape: &mut Tape, x: TensorId, b: usize, s1: usize, heads: usize, dh: usize) -> TensorId {
    let r = tape.reshape(x, &[b, s1, heads, dh]);
    let p = tape.permute(r, &[0, 2, 1, 3]);
    tape.reshape(p, &[b * heads, s1, dh])
}

/// One pre-LN transformer layer over class token + window embeddings, then a
/// final layer norm. Returns `(h_cls [B,D], h_ctx [B,S,D])`.
fn sequence_transformer(
    tape: &mut Tape,
    pn: &ParamNodes,
    cfg: &ModelConfig,
    e: TensorId, // [B, S, D]
    mode: &mut DropoutMode,
) -> (TensorId, TensorId) {
    let b = tape.shape(e)[0];
    let s = cfg.seq_len;
    let s1 = s + 1;
    let d = cfg.embed_dim;
    let heads = cfg.wat_heads;
    let dh = cfg.head_dim();

    let cls = pn.id("wat.cls");
    let cls_b = tape.broadcast_to(cls, &[b, 1, d]);
    let tokens = tape.concat(&[cls_b, e], 1); // [B, S+1, D]
    let mut tokens = tape.add(tokens, pn.id("wat.pos"));

    // Attention sublayer (pre-LN).
    let a_in = ln_affine(tape, tokens, pn.id("wat.ln1.scale"), pn.id("wat.ln1.shift"));
    let q = linear3(tape, a_in, pn.id("wat.attn.wq.w"), Some(pn.id("wat.attn.wq.b")));
    let k = linear3(tape, a_in, pn.id("wat.attn.wk.w"), Some(pn.id("wat.attn.wk.b")));
    let v = linear3(tape, a_in, pn.id("wat.attn.wv.w"), Some(pn.id("wat.attn.wv.b")));
    let qh = split_heads(tape, q, b, s1, heads, dh);
    let kh = split_heads(tape, k, b, s1, heads, dh);
    let vh = split_heads(tape, v, b, s1, heads, dh);
    let scores = tape.batch_matmul(qh, kh, true);
    let scores = tape.scale(scores, 1.0 / (dh as f64).sqrt());
    let probs = tape.softmax(scores);
    let ctx = tape.batch_matmul(probs, vh, false); // [B·h, S1, dh]
    let ctx = tape.reshape(ctx, &[b, heads, s1, dh]);
    let ctx = tape.permute(ctx, &[0, 2, 1, 3]);
    let merged = tape.reshape(ctx, &[b, s1, d]);
    let attn_out = linear3(tape, merged, pn.id("wat.attn.wo.w"), Some(pn.id("wat.attn.wo.b")));
    let attn_out = dropout(tape, attn_out, cfg.dropout_wat, mode);
    tokens = tape.add(tokens, attn_out);

    // Feed-forward sublayer (pre-LN).
    let f_in = ln_affine(tape, tokens, pn.id("wat.ln2.scale"), pn.id("wat.ln2.shift"));
    let f1 = linear3(tape, f_in, pn.id("wat.ff.fc1.w"), Some(pn.id("wat.ff.fc1.b")));
    let f1 = tape.gelu(f1);
    let f2 = linear3(tape, f1, pn.id("wat.ff.fc2.w"), Some(pn.id("wat.ff.fc2.b")));
    let f2 = dropout(tape, f2, cfg.dropout_wat, mode);
    tokens = tape.add(tokens, f2);

    let tokens = ln_affine(tape, tokens, pn.id("wat.ln_f.scale"), pn.id("wat.ln_f.shift"));

    let cls_tok = tape.slice_axis_op(tokens, 1, 0, 1);
    let h_cls = tape.reshape(cls_tok, &[b, d]);
    let h_ctx = tape.slice_axis_op(tokens, 1, 1, s1);
    (h_cls, h_ctx)
}

/// Full forward pass over a batch of sequences.
///
/// `x` is the flat window tensor `[B·S, T, C]` (sequence-major: windows of
/// sequence 0 first). Returns logits and intermediate embeddings.
pub fn forward(
    tape: &mut Tape,
    pn: &ParamNodes,
    cfg: &ModelConfig,
    x: TensorId,
    bsz: usize,
    mode: &mut DropoutMode,
) -> ForwardOutput {
    let s = cfg.seq_len;
    let d = cfg.embed_dim;
    debug_assert_eq!(tape.shape(x)[0], bsz * s, "window batch must be B·S");
    debug_assert_eq!(tape.shape(x)[1], cfg.window_len);
    debug_assert_eq!(tape.shape(x)[2], cfg.in_channels);

    let e_flat = encode_windows(tape, pn, cfg, x, mode); // [B·S, D]
    let e = tape.reshape(e_flat, &[bsz, s, d]);

    let (h_cls, h_ctx) = sequence_transformer(tape, pn, cfg, e, mode);

    // Scenario head on the summary token.
    let sw = pn.id("head.scenario.w");
    let sb = pn.id("head.scenario.b");
    let s_lin = tape.matmul(h_cls, sw);
    let scenario_logits = tape.add(s_lin, sb);

    // Gated action head: local logits from the window embedding, contextual
    // logits from the transformer token, mixed by a learned gate.
    let a_loc = linear3(tape, e, pn.id("head.action.loc.w"), None);
    let a_ctx = linear3(tape, h_ctx, pn.id("head.action.ctx.w"), None);
    let gate_in = tape.concat(&[e, h_ctx], 2); // [B, S, 2D]
    let g1 = linear3(
        tape,
        gate_in,
        pn.id("head.action.gate.fc1.w"),
        Some(pn.id("head.action.gate.fc1.b")),
    );
    let g1 = tape.gelu(g1);
    let g2 = linear3(
        tape,
        g1,
        pn.id("head.action.gate.fc2.w"),
        Some(pn.id("head.action.gate.fc2.b")),
    );
    let gate = tape.sigmoid(g2); // [B, S, 1]

    let g_ctx = tape.mul(gate, a_ctx);
    let neg_gate = tape.scale(gate, -1.0);
    let inv_gate = tape.add_scalar(neg_gate, 1.0);
    let g_loc = tape.mul(inv_gate, a_loc);
    let action_logits = tape.add(g_loc, g_ctx);

    ForwardOutput {
        window_embeddings: e,
        cls_embedding: h_cls,
        context_tokens: h_ctx,
        scenario_logits,
        action_logits,
        gate,
    }
}
