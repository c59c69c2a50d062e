use crate::error::{Error, Result};
use crate::field::{Field, SpaceTimePoint};

/// Largest `|η u|` accepted before `e^{ηu}` is considered out of range.
pub const EXP_GUARD: f64 = 700.0;

/// `(u, ∂_t u + b·∇u + ½Tr[σσᵀ∇²u])` at `(t, x)`.
///
/// Sums the second derivatives at `h = 0` of
/// `h ↦ u(t + h²/(2q), x + (h/√2)σ_j + (h²/(2q)) b)` over the `q` columns
/// `σ_j` through [`Field::directional`], with no Hessian. An empty column
/// list is treated as a single zero column.
pub fn local_terms<F: Field + ?Sized>(
    field: &F,
    t: f64,
    x: &[f64],
    drift: &[f64],
    sigma_cols: &[Vec<f64>],
) -> Result<(f64, f64)> {
    let d = x.len();
    if drift.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: drift.len() });
    }
    let nin = d + 1;
    let q = sigma_cols.len().max(1);
    let mut first = vec![0.0; q * nin];
    for (j, col) in sigma_cols.iter().enumerate() {
        if col.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: col.len() });
        }
        for k in 0..d {
            first[j * nin + 1 + k] = col[k] * std::f64::consts::FRAC_1_SQRT_2;
        }
    }
    let mut second = Vec::with_capacity(nin);
    second.push(1.0);
    second.extend_from_slice(drift);
    let out = field.directional(t, x, &first, &second)?;
    Ok((out.value, out.second_sum))
}

/// `∂_t u + b·∇u + ½Tr[σσᵀ∇²u]` at `point`.
pub fn local_operator<F: Field + ?Sized>(
    field: &F,
    point: &SpaceTimePoint,
    drift: &[f64],
    sigma_cols: &[Vec<f64>],
) -> Result<f64> {
    local_terms(field, point.t, &point.x, drift, sigma_cols).map(|(_, op)| op)
}

/// `(u, ∂_t u + Δu − η‖∇u‖²)` at `(t, x)`.
///
/// Uses `ψ(h) = Σᵢ exp(−η u(t + h²/(2d), x + h eᵢ))`, whose second
/// derivative at zero is `∂_t v + Δv` for `v = e^{−ηu}`, mapped back with
/// `−(e^{ηu}/η)·ψ''(0)`. The chain rule is applied to the directional jet of
/// `u` rather than to `v`.
pub fn hjb_terms<F: Field + ?Sized>(field: &F, t: f64, x: &[f64], eta: f64) -> Result<(f64, f64)> {
    if eta == 0.0 || !eta.is_finite() {
        return Err(Error::config(format!("log-transform operator needs a finite nonzero eta (got {eta})")));
    }
    let d = x.len();
    let nin = d + 1;
    let mut first = vec![0.0; d * nin];
    for i in 0..d {
        first[i * nin + 1 + i] = 1.0;
    }
    let mut second = vec![0.0; nin];
    second[0] = 1.0;
    let out = field.directional(t, x, &first, &second)?;
    let u = out.value;
    if (eta * u).abs() > EXP_GUARD {
        return Err(Error::Overflow(format!(
            "exp(eta*u) out of range at u = {u:.6e}, eta = {eta}; rescale the problem or reduce eta"
        )));
    }
    // with v = e^{−ηu}: Σ v'' = v(η²Σu'² − ηΣu''), and −(e^{ηu}/η)·Σ v''
    // collapses to Σu'' − ηΣu'²
    let grad_sq: f64 = out.first.iter().map(|g| g * g).sum();
    Ok((u, out.second_sum - eta * grad_sq))
}

pub fn hjb_local_operator<F: Field + ?Sized>(field: &F, point: &SpaceTimePoint, eta: f64) -> Result<f64> {
    hjb_terms(field, point.t, &point.x, eta).map(|(_, op)| op)
}
