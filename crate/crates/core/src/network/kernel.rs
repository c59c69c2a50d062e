//! Batched-channel DGM evaluation in plain `f64`.
//!
//! Activations are stored channel-major: channel 0 is the value, channels
//! `1..=q` hold first derivatives along `q` directions and, when enabled, the
//! last channel holds the *sum* over directions of the second derivatives.
//! The summed channel closes on itself because every primitive's second
//! derivative is linear in the incoming second derivatives:
//!
//! - `tanh`: `y'' = s·a'' − 2ys·a'²` with `s = 1 − y²`
//! - product: `(ab)'' = a''b + 2a'b' + ab''`
//!
//! so only the first-order cross terms need per-direction storage.

use super::{Block, DgmConfig, Gate};

/// Unrolled dot product with four partial sums.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `tanh` through `expm1`, about twice as fast as the libm routine here
/// and within a few ulp of it.
#[inline]
pub(crate) fn tanh(a: f64) -> f64 {
    if a.abs() > 20.0 {
        return a.signum();
    }
    let e = (2.0 * a).exp_m1();
    e / (e + 2.0)
}

/// Channel geometry.
#[derive(Debug, Clone, Copy)]
struct Shape {
    n: usize,
    q: usize,
    second: bool,
}

impl Shape {
    fn channels(&self) -> usize {
        1 + self.q + self.second as usize
    }
    fn d2(&self) -> usize {
        1 + self.q
    }
}

/// `out_c += W · in_c` for every channel; the bias only enters channel 0.
fn affine_acc(w: &[f64], n_in: usize, input: &[f64], out: &mut [f64], n_out: usize, channels: usize) {
    for c in 0..channels {
        let inp = &input[c * n_in..(c + 1) * n_in];
        let o = &mut out[c * n_out..(c + 1) * n_out];
        for (i, oi) in o.iter_mut().enumerate() {
            *oi += dot(&w[i * n_in..(i + 1) * n_in], inp);
        }
    }
}

fn tanh_channels(a: &mut [f64], sh: Shape) {
    let n = sh.n;
    for i in 0..n {
        let y = tanh(a[i]);
        let s = 1.0 - y * y;
        a[i] = y;
        let mut sq = 0.0;
        for k in 1..=sh.q {
            let d = a[k * n + i];
            sq += d * d;
            a[k * n + i] = s * d;
        }
        if sh.second {
            let j = sh.d2() * n + i;
            a[j] = s * a[j] - 2.0 * y * s * sq;
        }
    }
}

/// `out = a ⊙ b` channelwise.
fn mul_channels(a: &[f64], b: &[f64], out: &mut [f64], sh: Shape) {
    let n = sh.n;
    for i in 0..n {
        let (av, bv) = (a[i], b[i]);
        out[i] = av * bv;
        let mut cross = 0.0;
        for k in 1..=sh.q {
            let (ad, bd) = (a[k * n + i], b[k * n + i]);
            out[k * n + i] = ad * bv + av * bd;
            cross += ad * bd;
        }
        if sh.second {
            let j = sh.d2() * n + i;
            out[j] = a[j] * bv + 2.0 * cross + av * b[j];
        }
    }
}

/// Reusable buffers for [`eval_channels`].
#[derive(Debug, Clone, Default)]
pub struct ChannelScratch {
    z: Vec<f64>,
    s: Vec<f64>,
    gates: Vec<f64>,
    tmp: Vec<f64>,
}

/// Raw DGM output with derivative channels.
///
/// `first` holds `q` seeds of length `d + 1` (time first) and `second`, if
/// given, the second-order seed of length `d + 1` summed over directions.
/// Writes `[value, d1_1..d1_q, (Σ d2)]` into `out`.
pub fn eval_channels(
    cfg: &DgmConfig,
    params: &[f64],
    t: f64,
    x: &[f64],
    first: &[f64],
    second: Option<&[f64]>,
    scratch: &mut ChannelScratch,
    out: &mut [f64],
) {
    let layout = cfg.layout();
    let nin = cfg.d + 1;
    let n = cfg.hidden;
    let q = first.len() / nin;
    debug_assert_eq!(first.len(), q * nin);
    let sh = Shape { n, q, second: second.is_some() };
    let nc = sh.channels();
    debug_assert_eq!(out.len(), nc);

    let z = &mut scratch.z;
    z.clear();
    z.push(t);
    z.extend_from_slice(x);
    z.extend_from_slice(first);
    if let Some(s2) = second {
        z.extend_from_slice(s2);
    }
    let z = &scratch.z;

    let init = |buf: &mut Vec<f64>, len: usize| {
        buf.clear();
        buf.resize(len, 0.0);
    };
    init(&mut scratch.s, nc * n);
    init(&mut scratch.gates, 5 * nc * n);
    init(&mut scratch.tmp, nc * n);

    let pre = |out: &mut [f64], ublock: Block, bblock: Block| {
        let bo = layout.offset(bblock);
        out[..n].copy_from_slice(&params[bo..bo + n]);
        out[n..].iter_mut().for_each(|v| *v = 0.0);
        let uo = layout.offset(ublock);
        affine_acc(&params[uo..uo + n * nin], nin, z, out, n, nc);
    };

    pre(&mut scratch.s, Block::InputWeight, Block::InputBias);
    tanh_channels(&mut scratch.s, sh);

    for l in 0..cfg.layers {
        let (zgr, rest) = scratch.gates.split_at_mut(3 * nc * n);
        let (h, zs) = rest.split_at_mut(nc * n);
        for (k, g) in [Gate::Z, Gate::G, Gate::R].into_iter().enumerate() {
            let gk = &mut zgr[k * nc * n..(k + 1) * nc * n];
            pre(gk, Block::GateInput(g, l), Block::GateBias(g, l));
            let wo = layout.offset(Block::GateState(g, l));
            affine_acc(&params[wo..wo + n * n], n, &scratch.s, gk, n, nc);
            tanh_channels(gk, sh);
        }
        let r = &zgr[2 * nc * n..];
        mul_channels(&scratch.s, r, &mut scratch.tmp, sh);
        pre(h, Block::GateInput(Gate::H, l), Block::GateBias(Gate::H, l));
        let wo = layout.offset(Block::GateState(Gate::H, l));
        affine_acc(&params[wo..wo + n * n], n, &scratch.tmp, h, n, nc);
        tanh_channels(h, sh);

        // S ← H − G⊙H + Z⊙S
        let zg = &zgr[..nc * n];
        let gg = &zgr[nc * n..2 * nc * n];
        let mut gh = std::mem::take(&mut scratch.tmp);
        mul_channels(gg, h, &mut gh, sh);
        mul_channels(zg, &scratch.s, zs, sh);
        for j in 0..nc * n {
            scratch.s[j] = h[j] - gh[j] + zs[j];
        }
        scratch.tmp = gh;
    }

    let wo = layout.offset(Block::OutputWeight);
    let w = &params[wo..wo + n];
    for c in 0..nc {
        out[c] = dot(w, &scratch.s[c * n..(c + 1) * n]);
    }
    out[0] += params[layout.offset(Block::OutputBias)];
}

/// Raw DGM output in plain `f64`.
pub fn forward_value(cfg: &DgmConfig, params: &[f64], t: f64, x: &[f64], scratch: &mut ChannelScratch) -> f64 {
    let mut out = [0.0];
    eval_channels(cfg, params, t, x, &[], None, scratch, &mut out);
    out[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Jet2;
    use crate::network::{forward, init_params};

    #[test]
    fn dot_matches_naive() {
        for len in [0, 1, 3, 4, 7, 33] {
            let a: Vec<f64> = (0..len).map(|i| (i as f64 * 0.37).sin()).collect();
            let b: Vec<f64> = (0..len).map(|i| (i as f64 * 0.91).cos()).collect();
            let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            assert!((dot(&a, &b) - naive).abs() < 1e-14);
        }
    }

    #[test]
    fn tanh_close_to_libm() {
        for k in -4000..=4000 {
            let a = k as f64 * 0.0077;
            let (f, r) = (tanh(a), a.tanh());
            assert!((f - r).abs() <= 4.0 * f64::EPSILON * r.abs().max(1e-300) + 1e-300, "{a}: {f} vs {r}");
        }
        assert_eq!(tanh(0.0), 0.0);
        assert_eq!(tanh(50.0), 1.0);
        assert_eq!(tanh(-50.0), -1.0);
    }

    #[test]
    fn value_matches_generic() {
        let cfg = DgmConfig::new(3, 2, 9).unwrap();
        let p = init_params(&cfg, 4);
        let mut sc = ChannelScratch::default();
        for k in 0..10 {
            let t = 0.05 * k as f64;
            let x = [0.3 - 0.1 * k as f64, 0.7, -0.2 * k as f64];
            let a = forward_value(&cfg, &p, t, &x, &mut sc);
            let b: f64 = forward(&cfg, &p[..], t, &x);
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }

    #[test]
    fn channels_match_separate_jet_passes() {
        let cfg = DgmConfig::new(3, 2, 7).unwrap();
        let p = init_params(&cfg, 8);
        let (t, x) = (0.21, [0.4, -0.9, 0.15]);
        let first = [0.0, 0.3, -0.1, 0.2, 0.5, 0.0, 0.7, -0.4];
        let second = [1.0, 0.2, -0.3, 0.6];
        let mut out = [0.0; 4];
        eval_channels(&cfg, &p, t, &x, &first, Some(&second), &mut ChannelScratch::default(), &mut out);

        let mut d2 = 0.0;
        for k in 0..2 {
            let seed = &first[k * 4..(k + 1) * 4];
            let tj = Jet2::new(t, seed[0], second[0] / 2.0);
            let xj: Vec<Jet2> = (0..3).map(|i| Jet2::new(x[i], seed[i + 1], second[i + 1] / 2.0)).collect();
            let j: Jet2 = forward(&cfg, &p[..], tj, &xj);
            assert!((j.val - out[0]).abs() < 1e-13);
            assert!((j.d1 - out[1 + k]).abs() < 1e-13);
            d2 += j.d2;
        }
        assert!((d2 - out[3]).abs() < 1e-12, "{d2} vs {}", out[3]);
    }
}
