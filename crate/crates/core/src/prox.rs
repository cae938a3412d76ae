//! Transport cost integrand and the proximal maps of the primal objective.

use crate::config::ModelParams;
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Per-component prox parameters after folding the cell weights into the step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxWeights {
    pub lambda_eff_phi: f64,
    pub lambda_eff_psi: f64,
    pub lambda_eff_bc: f64,
}

impl ProxWeights {
    /// `λΔxΔy` for the bulk pairs and `λΔx` for the boundary values.
    pub fn new(lambda: f64, grid: &Grid) -> Self {
        Self {
            lambda_eff_phi: lambda * grid.cell_area(),
            lambda_eff_psi: lambda * grid.cell_area(),
            lambda_eff_bc: lambda * grid.dx,
        }
    }

    pub fn uniform(lambda_eff: f64) -> Self {
        Self { lambda_eff_phi: lambda_eff, lambda_eff_psi: lambda_eff, lambda_eff_bc: lambda_eff }
    }
}

/// `𝓓(ρ, m) = ‖m‖²/M` with the usual extended-value conventions.
pub fn distance_integrand(m: [f64; 2], mobility: f64) -> f64 {
    let m2 = m[0] * m[0] + m[1] * m[1];
    if mobility > 0.0 {
        m2 / mobility
    } else if mobility == 0.0 && m2 == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Prox of the `φ` transport cost: the density is untouched, the momentum shrinks.
pub fn prox_phi(phi: f64, m: [f64; 2], weights: &ProxWeights, params: &ModelParams) -> (f64, [f64; 2]) {
    let mob = params.mobility_phi();
    let f = mob / (mob + weights.lambda_eff_phi);
    (phi, [f * m[0], f * m[1]])
}

/// Bracket width below which a root is accepted regardless of its size.
const PSI_ABS_TOL: f64 = 1e-16;
const PSI_MAX_ITER: usize = 100;

/// Bound-preserving prox of the surfactant transport cost.
///
/// The optimal momentum is `M(ψ̃) m / (M(ψ̃) + λ)`; substituting it leaves a
/// strictly convex scalar problem in `ψ̃ ∈ [0, 1]` whose stationarity
/// condition is `f(ψ̃) = (ψ̃ − ψ)(λ + M)² − (λ/2) M′ ‖m‖² = 0`.
pub fn prox_psi(psi: f64, m: [f64; 2], weights: &ProxWeights, params: &ModelParams) -> Result<(f64, [f64; 2])> {
    let lam = weights.lambda_eff_psi;
    let m2 = m[0] * m[0] + m[1] * m[1];
    let slack = m2 / (2.0 * lam * params.pe_psi);
    if psi <= -slack {
        return Ok((0.0, [0.0, 0.0]));
    }
    if psi >= 1.0 + slack {
        return Ok((1.0, [0.0, 0.0]));
    }
    if m2 == 0.0 {
        // 0 < ψ < 1 here
        return Ok((psi, [0.0, 0.0]));
    }
    let root = psi_root(psi, m2, lam, params.pe_psi)?;
    let mob = params.mobility_psi(root);
    let f = mob / (mob + lam);
    Ok((root, [f * m[0], f * m[1]]))
}

/// Root of the reduced stationarity condition `h(t) = f(t)/(λ + M(t)²)` on
/// `(0, 1)`; `h` is increasing with `h(0) < 0 < h(1)`.
fn psi_root(psi: f64, m2: f64, lam: f64, pe: f64) -> Result<f64> {
    let eps = 1e-9;
    let h_and_dh = |t: f64| {
        let mob = t * (1.0 - t) / pe;
        let dmob = (1.0 - 2.0 * t) / pe;
        let s = mob + lam;
        let h = t - psi - 0.5 * lam * m2 * dmob / (s * s);
        let dh = 1.0 - 0.5 * lam * m2 * (-2.0 / (pe * s * s) - 2.0 * dmob * dmob / (s * s * s));
        (h, dh)
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut t = psi.clamp(eps, 1.0 - eps);
    let mut step_old = 1.0f64;
    for _ in 0..PSI_MAX_ITER {
        let (h, dh) = h_and_dh(t);
        if h == 0.0 {
            return Ok(t);
        }
        if h < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = t - h / dh;
        // Newton only while it stays in the bracket and at least halves the step
        let next = if dh > 0.0 && newton >= lo && newton <= hi && (newton - t).abs() <= 0.5 * step_old {
            newton
        } else {
            0.5 * (lo + hi)
        };
        step_old = (next - t).abs();
        // roots next to 0 only shrink the bracket absolutely
        if step_old <= 2.0 * f64::EPSILON * t.max(next) || hi - lo <= (2.0 * f64::EPSILON * hi).max(PSI_ABS_TOL) {
            return Ok(next);
        }
        t = next;
    }
    Err(Error::Numerical(format!(
        "prox_psi root did not converge (psi = {psi}, |m|^2 = {m2}, lambda = {lam})"
    )))
}

/// Prox of `(Pe_s/2)(x − anchor)²` with step `λ_eff_bc`.
pub fn prox_boundary(input: &[f64], anchor: &[f64], weights: &ProxWeights, pe_s: f64, out: &mut [f64]) {
    let w = weights.lambda_eff_bc * pe_s;
    for ((o, &x), &a) in out.iter_mut().zip(input).zip(anchor) {
        *o = (x + w * a) / (1.0 + w);
    }
}

/// Applies every componentwise prox to a flat primal vector in place.
///
/// With `anchor = None` the boundary block is left untouched (the caller
/// slaves it to the interior).
pub(crate) fn prox_all(
    u: &mut [f64],
    n: usize,
    anchor: Option<&[f64]>,
    weights: &ProxWeights,
    params: &ModelParams,
) -> Result<()> {
    let (phi_part, rest) = u.split_at_mut(3 * n);
    let (psi_part, bc) = rest.split_at_mut(3 * n);

    let mob = params.mobility_phi();
    let f = mob / (mob + weights.lambda_eff_phi);
    for v in &mut phi_part[n..] {
        *v *= f;
    }

    let (psi, mom) = psi_part.split_at_mut(n);
    let (mx, my) = mom.split_at_mut(n);
    for k in 0..n {
        let (p, m) = prox_psi(psi[k], [mx[k], my[k]], weights, params)?;
        psi[k] = p;
        mx[k] = m[0];
        my[k] = m[1];
    }

    if let Some(a) = anchor {
        let w = weights.lambda_eff_bc * params.pe_s;
        for (x, &c) in bc.iter_mut().zip(a) {
            *x = (*x + w * c) / (1.0 + w);
        }
    }
    Ok(())
}
