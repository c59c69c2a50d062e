use serde::{Deserialize, Serialize};

use crate::autodiff::{Jet2, Real};
use crate::error::Result;

/// A space-time point `(t, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub t: f64,
    pub x: Vec<f64>,
}

impl SpaceTimePoint {
    pub fn new(t: f64, x: Vec<f64>) -> Self {
        SpaceTimePoint { t, x }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// Value, first derivatives along several directions and the sum of the
/// second derivatives along them.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalJet {
    pub value: f64,
    pub first: Vec<f64>,
    pub second_sum: f64,
}

/// A scalar solution field `u(t, x)` that can be evaluated on plain values
/// and on second-order jets.
pub trait Field: Sync {
    fn dim(&self) -> usize;
    fn value(&self, t: f64, x: &[f64]) -> f64;
    fn jet(&self, t: Jet2, x: &[Jet2]) -> Result<Jet2>;

    /// Derivatives of `h ↦ Σ_k u((t, x) + h·f_k + (h²/2)·s/q)` at zero.
    ///
    /// `first` holds the `q` seeds `f_k` of length `d + 1` (time first) and
    /// `second` the seed `s`; with `q = 0` one pass along `s` alone is made.
    /// The default makes one jet pass per direction.
    fn directional(&self, t: f64, x: &[f64], first: &[f64], second: &[f64]) -> Result<DirectionalJet> {
        let nin = x.len() + 1;
        let q = first.len() / nin;
        let passes = q.max(1);
        let share = 1.0 / passes as f64;
        let mut out = DirectionalJet { value: f64::NAN, first: Vec::with_capacity(q), second_sum: 0.0 };
        let mut xj = vec![Jet2::default(); x.len()];
        for k in 0..passes {
            let seed = |i: usize| if q == 0 { 0.0 } else { first[k * nin + i] };
            let tj = Jet2::new(t, seed(0), second[0] * share);
            for i in 0..x.len() {
                xj[i] = Jet2::new(x[i], seed(i + 1), second[i + 1] * share);
            }
            let j = self.jet(tj, &xj)?;
            out.value = j.val;
            if q > 0 {
                out.first.push(j.d1);
            }
            out.second_sum += j.d2;
        }
        Ok(out)
    }
}

/// A field written once against [`Real`]; gets [`Field`] for free.
pub trait RealField: Sync {
    fn dim(&self) -> usize;
    fn eval<S: Real>(&self, t: S, x: &[S]) -> S;
}

impl<F: RealField> Field for F {
    fn dim(&self) -> usize {
        RealField::dim(self)
    }

    fn value(&self, t: f64, x: &[f64]) -> f64 {
        self.eval(t, x)
    }

    fn jet(&self, t: Jet2, x: &[Jet2]) -> Result<Jet2> {
        Ok(self.eval(t, x))
    }
}
