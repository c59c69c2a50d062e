use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use super::{eval_channels, forward, forward_value, ChannelScratch, DgmConfig, DgmNetwork};
use crate::autodiff::{Jet2, Real};
use crate::error::{Error, Result};
use crate::field::{DirectionalJet, Field, SpaceTimePoint};
use crate::problems::Terminal;

/// Time factor `B(t, x)` of the hard constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Damping {
    /// `(T − t)/T`.
    TimeToHorizon { horizon: f64 },
    /// `B ≡ 0`: the field is `A` alone.
    Zero,
}

/// `u = A + B·v` with `A = φ(x)`; `B` vanishes at `t = T`, so the terminal
/// condition holds for every parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardConstraint {
    pub terminal: Terminal,
    pub damping: Damping,
}

impl HardConstraint {
    pub fn time_to_horizon(terminal: Terminal, horizon: f64) -> Self {
        HardConstraint { terminal, damping: Damping::TimeToHorizon { horizon } }
    }

    pub fn a<S: Real>(&self, _t: S, x: &[S]) -> S {
        self.terminal.eval(x)
    }

    pub fn b<S: Real>(&self, t: S) -> S {
        match self.damping {
            Damping::TimeToHorizon { horizon } => (-t).add_const(horizon).scale(1.0 / horizon),
            Damping::Zero => t.lift(0.0),
        }
    }

    /// `A(t, x) + B(t, x)·v`.
    pub fn apply<S: Real>(&self, t: S, x: &[S], v: S) -> S {
        self.a(t, x) + self.b(t) * v
    }
}

/// The hard-constrained network field `A + B·v_θ` over borrowed parameters.
#[derive(Debug, Clone, Copy)]
pub struct HpinnField<'a> {
    pub config: DgmConfig,
    pub params: &'a [f64],
    pub constraint: &'a HardConstraint,
}

impl<'a> HpinnField<'a> {
    pub fn new(config: DgmConfig, params: &'a [f64], constraint: &'a HardConstraint) -> Self {
        debug_assert_eq!(params.len(), config.param_count());
        HpinnField { config, params, constraint }
    }
}

impl HpinnField<'_> {
    /// Generic evaluation, usable with any [`Real`].
    pub fn eval<S: Real>(&self, t: S, x: &[S]) -> S {
        let v = forward(&self.config, self.params, t, x);
        self.constraint.apply(t, x, v)
    }
}

thread_local! {
    static SCRATCH: RefCell<ChannelScratch> = RefCell::new(ChannelScratch::default());
}

impl Field for HpinnField<'_> {
    fn dim(&self) -> usize {
        self.config.d
    }

    fn value(&self, t: f64, x: &[f64]) -> f64 {
        let v = SCRATCH.with(|s| forward_value(&self.config, self.params, t, x, &mut s.borrow_mut()));
        self.constraint.apply(t, x, v)
    }

    fn jet(&self, t: Jet2, x: &[Jet2]) -> Result<Jet2> {
        Ok(self.eval(t, x))
    }

    /// One batched pass through the network; the constraint factors `A`
    /// and `B` are cheap and go through per-direction jets.
    fn directional(&self, t: f64, x: &[f64], first: &[f64], second: &[f64]) -> Result<DirectionalJet> {
        let nin = x.len() + 1;
        let q = first.len() / nin;
        let mut raw = vec![0.0; q + 2];
        SCRATCH.with(|s| {
            eval_channels(&self.config, self.params, t, x, first, Some(second), &mut s.borrow_mut(), &mut raw)
        });
        let (v, v2) = (raw[0], raw[q + 1]);
        let passes = q.max(1);
        let share = 1.0 / passes as f64;
        let hc = self.constraint;
        let mut xj = vec![Jet2::default(); x.len()];
        let mut out = DirectionalJet { value: f64::NAN, first: Vec::with_capacity(q), second_sum: 0.0 };
        let mut a2 = 0.0;
        let mut b2 = 0.0;
        let mut cross = 0.0;
        let mut a0 = 0.0;
        let mut b0 = 0.0;
        for k in 0..passes {
            let seed = |i: usize| if q == 0 { 0.0 } else { first[k * nin + i] };
            let tj = Jet2::new(t, seed(0), second[0] * share);
            for i in 0..x.len() {
                xj[i] = Jet2::new(x[i], seed(i + 1), second[i + 1] * share);
            }
            let a = hc.a(tj, &xj);
            let b = hc.b(tj);
            a0 = a.val;
            b0 = b.val;
            a2 += a.d2;
            b2 += b.d2;
            if q > 0 {
                let v1 = raw[1 + k];
                out.first.push(a.d1 + b.d1 * v + b.val * v1);
                cross += b.d1 * v1;
            }
        }
        out.value = a0 + b0 * v;
        out.second_sum = a2 + b2 * v + 2.0 * cross + b0 * v2;
        Ok(out)
    }
}

fn check_dim(net: &DgmNetwork, point: &SpaceTimePoint) -> Result<()> {
    if point.dim() != net.config.d {
        return Err(Error::DimensionMismatch { expected: net.config.d, got: point.dim() });
    }
    Ok(())
}

/// Raw network output `W·S^{L+1} + b`.
pub fn dgm_forward(net: &DgmNetwork, point: &SpaceTimePoint) -> Result<f64> {
    check_dim(net, point)?;
    Ok(forward(&net.config, &net.theta, point.t, &point.x))
}

pub fn hpinn_eval(net: &DgmNetwork, hc: &HardConstraint, point: &SpaceTimePoint) -> Result<f64> {
    check_dim(net, point)?;
    let v = forward(&net.config, &net.theta, point.t, &point.x);
    Ok(hc.apply(point.t, &point.x, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::DgmNetwork;

    fn net(d: usize, seed: u64) -> DgmNetwork {
        DgmNetwork::initialized(DgmConfig::new(d, 2, 6).unwrap(), seed).unwrap()
    }

    #[test]
    fn terminal_holds_for_any_params() {
        let hc = HardConstraint::time_to_horizon(Terminal::SquaredNorm, 0.5);
        for seed in 0..5 {
            let n = net(3, seed);
            let p = SpaceTimePoint::new(0.5, vec![1.0, -0.5, 0.25]);
            assert_eq!(hpinn_eval(&n, &hc, &p).unwrap(), 1.0 + 0.25 + 0.0625);
        }
    }

    #[test]
    fn zero_damping_returns_a() {
        let hc = HardConstraint { terminal: Terminal::SquaredNorm, damping: Damping::Zero };
        let n = net(2, 1);
        let p = SpaceTimePoint::new(0.1, vec![2.0, 1.0]);
        assert_eq!(hpinn_eval(&n, &hc, &p).unwrap(), 5.0);
    }

    #[test]
    fn min_terminal_at_horizon() {
        let hc = HardConstraint::time_to_horizon(Terminal::MinCoordinate, 1.0);
        let n = net(3, 2);
        let p = SpaceTimePoint::new(1.0, vec![3.0, 1.0, 2.0]);
        assert_eq!(hpinn_eval(&n, &hc, &p).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let n = net(3, 0);
        let p = SpaceTimePoint::new(0.0, vec![1.0]);
        assert!(matches!(dgm_forward(&n, &p), Err(Error::DimensionMismatch { expected: 3, got: 1 })));
    }

    #[test]
    fn forward_is_deterministic() {
        let p = SpaceTimePoint::new(0.2, vec![0.3, -0.7, 1.1]);
        let a = dgm_forward(&net(3, 9), &p).unwrap();
        let b = dgm_forward(&net(3, 9), &p).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
