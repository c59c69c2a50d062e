use crate::field::{Field, SpaceTimePoint};

/// Weights of the unrolled Polyak recursion over a block of `k` epochs:
/// `[(1−α/h)^k, (α/h)(1−α/h)^{k−1}, …, (α/h)(1−α/h)^0]`, block start first.
pub fn block_weights(alpha: f64, h: f64, k: usize) -> Vec<f64> {
    let r = alpha / h;
    let keep = 1.0 - r;
    let mut w = Vec::with_capacity(k + 1);
    w.push(keep.powi(k as i32));
    for j in 1..=k {
        w.push(r * keep.powi((k - j) as i32));
    }
    w
}

/// `(1−α/h)^K u_start + Σⱼ (α/h)(1−α/h)^{K−j} u_j` at `point`.
pub fn block_target_eval<F: Field + ?Sized>(
    start: &F,
    snapshots: &[&F],
    alpha: f64,
    h: f64,
    point: &SpaceTimePoint,
) -> f64 {
    let w = block_weights(alpha, h, snapshots.len());
    let (t, x) = (point.t, &point.x);
    let mut acc = if w[0] == 0.0 { 0.0 } else { w[0] * start.value(t, x) };
    for (wj, f) in w[1..].iter().zip(snapshots) {
        if *wj != 0.0 {
            acc += wj * f.value(t, x);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Real;
    use crate::field::RealField;
    use proptest::prelude::*;

    struct Affine(f64, f64);
    impl RealField for Affine {
        fn dim(&self) -> usize {
            1
        }
        fn eval<S: Real>(&self, t: S, x: &[S]) -> S {
            x[0].scale(self.0).add_const(self.1) + t
        }
    }

    #[test]
    fn alpha_equal_h_returns_last_snapshot() {
        let start = Affine(1.0, 0.3);
        let snaps = [Affine(2.0, -0.1), Affine(-0.7, 1.9), Affine(0.123, 4.56)];
        let refs: Vec<&Affine> = snaps.iter().collect();
        let p = SpaceTimePoint::new(0.2, vec![1.7]);
        let v = block_target_eval(&start, &refs, 0.5, 0.5, &p);
        assert_eq!(v, snaps[2].value(0.2, &[1.7]));
    }

    #[test]
    fn single_epoch_block_is_plain_polyak() {
        let start = Affine(1.0, 0.3);
        let snap = Affine(2.0, -0.1);
        let p = SpaceTimePoint::new(0.0, vec![0.5]);
        let v = block_target_eval(&start, &[&snap], 0.4, 0.5, &p);
        let expected = 0.2 * start.value(0.0, &[0.5]) + 0.8 * snap.value(0.0, &[0.5]);
        assert!((v - expected).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn weights_form_a_simplex(h in 0.01f64..2.0, frac in 0.001f64..1.0, k in 1usize..40) {
            let alpha = frac * h;
            let w = block_weights(alpha, h, k);
            prop_assert_eq!(w.len(), k + 1);
            prop_assert!(w.iter().all(|&v| v >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-14);
        }
    }
}
