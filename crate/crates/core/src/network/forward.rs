use super::{Block, DgmConfig, Gate};
use crate::autodiff::{Coeff, Real};

#[inline]
fn dot<P: Coeff<S>, S: Real>(w: &[P], v: &[S], init: S) -> S {
    w.iter().zip(v).fold(init, |acc, (&w, &v)| acc + w.times(v))
}

/// Raw DGM output `W·S^{L+1} + b` at `(t, x)`, generic over the weight type
/// `P` and the activation type `S`.
///
/// This is the reference evaluation: `f64` weights with `f64` or
/// [`Jet2`](crate::autodiff::Jet2) activations for values and directional
/// derivatives, tape variables for both when differentiating through the
/// tape.
pub fn forward<P: Coeff<S>, S: Real>(cfg: &DgmConfig, params: &[P], t: S, x: &[S]) -> S {
    let layout = cfg.layout();
    let n = cfg.hidden;
    let nin = cfg.d + 1;
    let mut z = Vec::with_capacity(nin);
    z.push(t);
    z.extend_from_slice(x);

    let pre = |ublock: Block, wblock: Option<(Block, &[S])>, bblock: Block, i: usize| -> S {
        let uo = layout.offset(ublock) + i * nin;
        let bias = params[layout.offset(bblock) + i].as_real(&t);
        let mut acc = dot(&params[uo..uo + nin], &z, bias);
        if let Some((wb, s)) = wblock {
            let wo = layout.offset(wb) + i * n;
            acc = dot(&params[wo..wo + n], s, acc);
        }
        acc
    };

    let mut s: Vec<S> = (0..n)
        .map(|i| pre(Block::InputWeight, None, Block::InputBias, i).tanh())
        .collect();

    for l in 0..cfg.layers {
        let gate = |g: Gate, state: &[S], i: usize| {
            pre(Block::GateInput(g, l), Some((Block::GateState(g, l), state)), Block::GateBias(g, l), i).tanh()
        };
        let zg: Vec<S> = (0..n).map(|i| gate(Gate::Z, &s, i)).collect();
        let gg: Vec<S> = (0..n).map(|i| gate(Gate::G, &s, i)).collect();
        let rg: Vec<S> = (0..n).map(|i| gate(Gate::R, &s, i)).collect();
        let sr: Vec<S> = s.iter().zip(&rg).map(|(&a, &b)| a * b).collect();
        let hg: Vec<S> = (0..n).map(|i| gate(Gate::H, &sr, i)).collect();
        s = (0..n).map(|i| hg[i] - gg[i] * hg[i] + zg[i] * s[i]).collect();
    }

    let wo = layout.offset(Block::OutputWeight);
    let bias = params[layout.offset(Block::OutputBias)].as_real(&t);
    dot(&params[wo..wo + n], &s, bias)
}

/// Forward pass of the raw DGM output that keeps every activation, plus
/// the matching reverse sweep for parameter gradients.
///
/// This is the hot path of training. It computes exactly what [`forward`]
/// computes and its gradient is checked against the scalar tape.
#[derive(Debug, Clone)]
pub struct DgmTrace {
    cfg: DgmConfig,
    z: Vec<f64>,
    // S¹..S^{L+1}, n each
    states: Vec<f64>,
    // per layer: Z, G, R, H, S⊙R; n each
    gates: Vec<f64>,
    ds: Vec<f64>,
    ds_next: Vec<f64>,
}

#[inline]
fn matvec_acc(w: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o += super::kernel::dot(&w[i * cols..(i + 1) * cols], v);
    }
}

/// `grad_w += a vᵀ`, `back += wᵀ a` (when given).
#[inline]
fn outer_acc(w: &[f64], a: &[f64], v: &[f64], grad_w: &mut [f64], back: Option<&mut [f64]>) {
    let cols = v.len();
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        let g = &mut grad_w[i * cols..(i + 1) * cols];
        for j in 0..cols {
            g[j] += ai * v[j];
        }
    }
    if let Some(back) = back {
        for (i, &ai) in a.iter().enumerate() {
            let row = &w[i * cols..(i + 1) * cols];
            for j in 0..cols {
                back[j] += row[j] * ai;
            }
        }
    }
}

impl DgmTrace {
    pub fn new(cfg: &DgmConfig) -> Self {
        let n = cfg.hidden;
        DgmTrace {
            cfg: *cfg,
            z: vec![0.0; cfg.d + 1],
            states: vec![0.0; (cfg.layers + 1) * n],
            gates: vec![0.0; cfg.layers * 5 * n],
            ds: vec![0.0; n],
            ds_next: vec![0.0; n],
        }
    }

    pub fn forward(&mut self, params: &[f64], t: f64, x: &[f64]) -> f64 {
        let cfg = self.cfg;
        let layout = cfg.layout();
        let n = cfg.hidden;
        self.z[0] = t;
        self.z[1..].copy_from_slice(x);

        {
            let s1 = &mut self.states[..n];
            let bo = layout.offset(Block::InputBias);
            s1.copy_from_slice(&params[bo..bo + n]);
            let wo = layout.offset(Block::InputWeight);
            matvec_acc(&params[wo..wo + n * (cfg.d + 1)], &self.z, s1);
            s1.iter_mut().for_each(|v| *v = super::kernel::tanh(*v));
        }

        for l in 0..cfg.layers {
            let (prev, rest) = self.states.split_at_mut((l + 1) * n);
            let s = &prev[l * n..];
            let gates = &mut self.gates[l * 5 * n..(l + 1) * 5 * n];
            let (zgr, tail) = gates.split_at_mut(3 * n);
            let (hg, sr) = tail.split_at_mut(n);
            for (k, g) in [Gate::Z, Gate::G, Gate::R].into_iter().enumerate() {
                let out = &mut zgr[k * n..(k + 1) * n];
                let bo = layout.offset(Block::GateBias(g, l));
                out.copy_from_slice(&params[bo..bo + n]);
                let uo = layout.offset(Block::GateInput(g, l));
                matvec_acc(&params[uo..uo + n * (cfg.d + 1)], &self.z, out);
                let wo = layout.offset(Block::GateState(g, l));
                matvec_acc(&params[wo..wo + n * n], s, out);
                out.iter_mut().for_each(|v| *v = super::kernel::tanh(*v));
            }
            let r = &zgr[2 * n..3 * n];
            for i in 0..n {
                sr[i] = s[i] * r[i];
            }
            let bo = layout.offset(Block::GateBias(Gate::H, l));
            hg.copy_from_slice(&params[bo..bo + n]);
            let uo = layout.offset(Block::GateInput(Gate::H, l));
            matvec_acc(&params[uo..uo + n * (cfg.d + 1)], &self.z, hg);
            let wo = layout.offset(Block::GateState(Gate::H, l));
            matvec_acc(&params[wo..wo + n * n], sr, hg);
            hg.iter_mut().for_each(|v| *v = super::kernel::tanh(*v));

            let next = &mut rest[..n];
            for i in 0..n {
                let (zi, gi, hi) = (zgr[i], zgr[n + i], hg[i]);
                next[i] = hi - gi * hi + zi * s[i];
            }
        }

        let last = &self.states[cfg.layers * n..];
        let wo = layout.offset(Block::OutputWeight);
        params[layout.offset(Block::OutputBias)] + super::kernel::dot(&params[wo..wo + n], last)
    }

    /// Accumulates `upstream · ∂out/∂θ` into `grad` for the most recent
    /// [`forward`](Self::forward) call.
    pub fn backward(&mut self, params: &[f64], upstream: f64, grad: &mut [f64]) {
        let cfg = self.cfg;
        let layout = cfg.layout();
        let n = cfg.hidden;
        let nin = cfg.d + 1;

        let last = &self.states[cfg.layers * n..];
        let wo = layout.offset(Block::OutputWeight);
        for i in 0..n {
            grad[wo + i] += upstream * last[i];
            self.ds[i] = upstream * params[wo + i];
        }
        grad[layout.offset(Block::OutputBias)] += upstream;

        // adjoint buffers for the four gate pre-activations
        let mut a = vec![0.0; 4 * n];
        let mut dsr = vec![0.0; n];
        for l in (0..cfg.layers).rev() {
            let s = &self.states[l * n..(l + 1) * n];
            let gates = &self.gates[l * 5 * n..(l + 1) * 5 * n];
            let (zg, gg, rg, hg, sr) = (
                &gates[..n],
                &gates[n..2 * n],
                &gates[2 * n..3 * n],
                &gates[3 * n..4 * n],
                &gates[4 * n..],
            );
            let (a_zgr, a_h) = a.split_at_mut(3 * n);
            for i in 0..n {
                let d = self.ds[i];
                a_h[i] = d * (1.0 - gg[i]) * (1.0 - hg[i] * hg[i]);
                a_zgr[n + i] = -d * hg[i] * (1.0 - gg[i] * gg[i]);
                a_zgr[i] = d * s[i] * (1.0 - zg[i] * zg[i]);
                self.ds_next[i] = d * zg[i];
            }

            // H gate reads S⊙R
            let uo = layout.offset(Block::GateInput(Gate::H, l));
            let wo = layout.offset(Block::GateState(Gate::H, l));
            let bo = layout.offset(Block::GateBias(Gate::H, l));
            let (gu, rest) = grad[uo..].split_at_mut(n * nin);
            outer_acc(&params[uo..uo + n * nin], a_h, &self.z, gu, None);
            dsr.iter_mut().for_each(|v| *v = 0.0);
            outer_acc(&params[wo..wo + n * n], a_h, sr, &mut rest[..n * n], Some(&mut dsr));
            for i in 0..n {
                grad[bo + i] += a_h[i];
                self.ds_next[i] += dsr[i] * rg[i];
                a_zgr[2 * n + i] = dsr[i] * s[i] * (1.0 - rg[i] * rg[i]);
            }

            for (k, g) in [Gate::Z, Gate::G, Gate::R].into_iter().enumerate() {
                let ak = &a_zgr[k * n..(k + 1) * n];
                let uo = layout.offset(Block::GateInput(g, l));
                let wo = layout.offset(Block::GateState(g, l));
                let bo = layout.offset(Block::GateBias(g, l));
                let (gu, rest) = grad[uo..].split_at_mut(n * nin);
                outer_acc(&params[uo..uo + n * nin], ak, &self.z, gu, None);
                outer_acc(&params[wo..wo + n * n], ak, s, &mut rest[..n * n], Some(&mut self.ds_next));
                for i in 0..n {
                    grad[bo + i] += ak[i];
                }
            }
            std::mem::swap(&mut self.ds, &mut self.ds_next);
        }

        let s1 = &self.states[..n];
        for i in 0..n {
            a[i] = self.ds[i] * (1.0 - s1[i] * s1[i]);
        }
        let wo = layout.offset(Block::InputWeight);
        let bo = layout.offset(Block::InputBias);
        outer_acc(&params[wo..wo + n * nin], &a[..n], &self.z, &mut grad[wo..wo + n * nin], None);
        for i in 0..n {
            grad[bo + i] += a[i];
        }
    }
}

/// Convenience: raw output via a fresh trace.
pub fn forward_traced(cfg: &DgmConfig, params: &[f64], t: f64, x: &[f64]) -> f64 {
    DgmTrace::new(cfg).forward(params, t, x)
}
