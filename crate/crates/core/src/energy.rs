//! Discrete free energy and its exact gradient.

use crate::config::ModelParams;
use crate::grid::{Grid, State};
use crate::wall::WallPotential;

/// Floor used for `ψ` inside the logarithmic derivative.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyBreakdown {
    /// Dirichlet energy (including the substrate edge) plus double well.
    pub f_gl: f64,
    pub f_sur: f64,
    pub f_ad: f64,
    pub f_wf: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    fn new(f_gl: f64, f_sur: f64, f_ad: f64, f_wf: f64) -> Self {
        Self { f_gl, f_sur, f_ad, f_wf, total: f_gl + f_sur + f_ad + f_wf }
    }
}

/// Gradient blocks of the discrete energy.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyGradient {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub phi_bc: Vec<f64>,
}

/// `ψ log ψ + (1−ψ) log(1−ψ)` with `0 log 0 = 0`; `+∞` outside `[0, 1]`.
pub fn mixing_entropy(psi: f64) -> f64 {
    if !(0.0..=1.0).contains(&psi) {
        return f64::INFINITY;
    }
    let xlogx = |x: f64| if x == 0.0 { 0.0 } else { x * x.ln() };
    xlogx(psi) + xlogx(1.0 - psi)
}

fn double_well(phi: f64) -> f64 {
    let s = phi * phi - 1.0;
    0.25 * s * s
}

/// Energy of `(φ, ψ, φ_bc)`; momenta are ignored.
pub fn total_energy(state: &State, grid: &Grid, params: &ModelParams) -> EnergyBreakdown {
    energy_parts(state.phi(), state.psi(), state.phi_bc(), grid, params)
}

pub(crate) fn energy_parts(
    phi: &[f64],
    psi: &[f64],
    bc: &[f64],
    grid: &Grid,
    params: &ModelParams,
) -> EnergyBreakdown {
    let (nx, ny, dx, dy) = (grid.nx, grid.ny, grid.dx, grid.dy);
    let area = dx * dy;
    let cn2 = params.cn * params.cn;

    let mut dirichlet = 0.0;
    for j in 0..ny {
        let row = &phi[j * nx..(j + 1) * nx];
        for i in 0..nx - 1 {
            let g = row[i + 1] - row[i];
            dirichlet += g * g;
        }
    }
    dirichlet *= 0.5 * cn2 * area / (dx * dx);
    let mut dirichlet_y = 0.0;
    for k in 0..(ny - 1) * nx {
        let g = phi[k + nx] - phi[k];
        dirichlet_y += g * g;
    }
    dirichlet += 0.5 * cn2 * area / (dy * dy) * dirichlet_y;
    let substrate: f64 = (0..nx).map(|i| (phi[i] - bc[i]).powi(2)).sum();
    dirichlet += cn2 * dx / dy * substrate;

    let mut well = 0.0;
    let mut entropy = 0.0;
    let mut ad = 0.0;
    let half_ex = 0.5 / params.ex;
    for (&p, &s) in phi.iter().zip(psi) {
        let p2 = p * p;
        well += double_well(p);
        entropy += mixing_entropy(s);
        ad += half_ex * s * p2 - 0.25 * s * (p2 - 1.0) * (p2 - 1.0);
    }

    let wall = WallPotential::from_params(params);
    let f_wf = params.cn * dx * bc.iter().map(|&b| wall.gamma_wf(b)).sum::<f64>();
    EnergyBreakdown::new(dirichlet + well * area, params.pi_coeff * entropy * area, ad * area, f_wf)
}

/// Exact gradient of [`total_energy`] with respect to `φ`, `ψ` and `φ_bc`.
pub fn grad_energy(state: &State, grid: &Grid, params: &ModelParams) -> EnergyGradient {
    let n = grid.len();
    let mut g = EnergyGradient { phi: vec![0.0; n], psi: vec![0.0; n], phi_bc: vec![0.0; grid.nx] };
    grad_parts(
        state.phi(),
        state.psi(),
        state.phi_bc(),
        grid,
        params,
        &mut g.phi,
        &mut g.psi,
        &mut g.phi_bc,
    );
    g
}

/// Writes the gradient blocks into caller buffers.
#[allow(clippy::too_many_arguments)]
pub(crate) fn grad_parts(
    phi: &[f64],
    psi: &[f64],
    bc: &[f64],
    grid: &Grid,
    params: &ModelParams,
    g_phi: &mut [f64],
    g_psi: &mut [f64],
    g_bc: &mut [f64],
) {
    let (nx, ny, dx, dy) = (grid.nx, grid.ny, grid.dx, grid.dy);
    let area = dx * dy;
    let cn2 = params.cn * params.cn;
    let cx = cn2 * area / (dx * dx);
    let cy = cn2 * area / (dy * dy);
    let inv_ex = 1.0 / params.ex;

    for j in 0..ny {
        for i in 0..nx {
            let k = i + nx * j;
            let p = phi[k];
            // −Cn² L ΔxΔy with one-sided closure at the walls
            let mut lap = 0.0;
            if i > 0 {
                lap += cx * (p - phi[k - 1]);
            }
            if i + 1 < nx {
                lap += cx * (p - phi[k + 1]);
            }
            if j > 0 {
                lap += cy * (p - phi[k - nx]);
            }
            if j + 1 < ny {
                lap += cy * (p - phi[k + nx]);
            }
            let s = psi[k];
            let p2 = p * p;
            let bulk = p2 * p - p + inv_ex * s * p - s * p * (p2 - 1.0);
            g_phi[k] = lap + bulk * area;

            let sc = s.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP);
            let log_term = params.pi_coeff * (sc / (1.0 - sc)).ln();
            g_psi[k] = (log_term + 0.5 * inv_ex * p2 - 0.25 * (p2 - 1.0) * (p2 - 1.0)) * area;
        }
    }

    let wall = WallPotential::from_params(params);
    for i in 0..nx {
        let s = 2.0 * cn2 * (phi[i] - bc[i]) / dy;
        g_phi[i] += s * dx;
        g_bc[i] = (-s + params.cn * wall.gamma_wf_prime(bc[i])) * dx;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::random_uniform_ic;
    use std::f64::consts::{LN_2, PI};

    fn right_angle() -> ModelParams {
        let mut p = ModelParams::benchmark();
        p.theta_s = PI / 2.0;
        p.set_gamma_sum(0.3);
        p
    }

    #[test]
    fn uniform_phase_energy() {
        let g = Grid::new(10, 5, 0.0, 1.0, 0.0, 0.5).unwrap();
        let p = right_angle();
        let s = State::from_fields(&g, &vec![1.0; 50], &vec![0.5; 50], &[1.0; 10]);
        let e = total_energy(&s, &g, &p);
        assert!(e.f_gl.abs() < 1e-15);
        assert!((e.f_sur + p.pi_coeff * LN_2 * 0.5).abs() < 1e-14);
        assert!((e.f_ad - 0.5 / p.ex * 0.5 * 0.5).abs() < 1e-14);
        assert!((e.f_wf - p.cn * 0.15).abs() < 1e-15);
        assert!((e.total - (e.f_gl + e.f_sur + e.f_ad + e.f_wf)).abs() <= 1e-12 * e.total.abs());
    }

    #[test]
    fn zero_phase_and_empty_surfactant() {
        let g = Grid::new(6, 4, 0.0, 1.0, 0.0, 0.5).unwrap();
        let p = right_angle();
        let s = State::from_fields(&g, &[0.0; 24], &[0.0; 24], &[0.0; 6]);
        let e = total_energy(&s, &g, &p);
        assert!((e.f_gl - g.cell_area() * 24.0 * 0.25).abs() < 1e-15);
        assert_eq!(e.f_sur, 0.0);
        assert_eq!(e.f_ad, 0.0);
        let bad = State::from_fields(&g, &[0.0; 24], &[-0.1; 24], &[0.0; 6]);
        assert_eq!(total_energy(&bad, &g, &p).total, f64::INFINITY);
    }

    #[test]
    fn uniform_gradient_interior() {
        let g = Grid::new(6, 5, 0.0, 1.0, 0.0, 0.5).unwrap();
        let p = ModelParams::benchmark();
        let s = State::from_fields(&g, &[1.0; 30], &[0.2; 30], &[1.0; 6]);
        let gr = grad_energy(&s, &g, &p);
        let expected = 0.2 / p.ex * g.cell_area();
        for j in 0..5 {
            for i in 0..6 {
                assert!((gr.phi[g.idx(i, j)] - expected).abs() < 1e-15);
            }
        }
        // γ′(±1) = 0 and φ_bc matches the first row
        assert!(gr.phi_bc.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn boundary_gradient_vanishes_at_right_angle() {
        let g = Grid::new(5, 4, 0.0, 1.0, 0.0, 0.5).unwrap();
        let p = right_angle();
        let phi = random_uniform_ic(&g, -0.5, 1.0, 4);
        let bc = phi[..5].to_vec();
        let s = State::from_fields(&g, &phi, &[0.3; 20], &bc);
        assert!(grad_energy(&s, &g, &p).phi_bc.iter().all(|v| v.abs() < 1e-16));
    }

    fn random_state(g: &Grid, seed: u64) -> State {
        let phi = random_uniform_ic(g, -1.2, 2.4, seed);
        let psi = random_uniform_ic(g, 0.1, 0.8, seed + 1);
        let bc = random_uniform_ic(g, -1.0, 2.0, seed + 2)[..g.nx].to_vec();
        State::from_fields(g, &phi, &psi, &bc)
    }

    fn random_dir(len: usize, lo: f64, width: f64, seed: u64) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| lo + width * rng.random::<f64>()).collect()
    }

    fn fd_oracle(s: &State, g: &Grid, p: &ModelParams, dir: &[f64], h: f64) -> f64 {
        let shifted = |t: f64| {
            let data: Vec<f64> = s.as_flat().iter().zip(dir).map(|(a, d)| a + t * d).collect();
            total_energy(&State::from_flat(g, data).unwrap(), g, p).total
        };
        (shifted(h) - shifted(-h)) / (2.0 * h)
    }

    fn flat_gradient(s: &State, g: &Grid, p: &ModelParams) -> Vec<f64> {
        let gr = grad_energy(s, g, p);
        let mut out = State::zeros(g);
        let m = out.split_mut();
        m.phi.copy_from_slice(&gr.phi);
        m.psi.copy_from_slice(&gr.psi);
        m.phi_bc.copy_from_slice(&gr.phi_bc);
        out.into_flat()
    }

    #[test]
    fn gradient_matches_central_differences() {
        let g = Grid::new(8, 6, 0.0, 1.0, 0.0, 0.6).unwrap();
        let p = ModelParams::benchmark();
        for seed in 0..5 {
            let s = random_state(&g, 10 * seed);
            let dir = random_dir(s.len(), -1.0, 2.0, 99 + seed);
            let gd: f64 = flat_gradient(&s, &g, &p).iter().zip(dir.iter()).map(|(a, b)| a * b).sum();
            let fd = fd_oracle(&s, &g, &p, &dir, 1e-6);
            assert!((gd - fd).abs() <= 1e-6 * gd.abs().max(1e-3), "seed {seed}: {gd} vs {fd}");
        }
    }

    #[test]
    fn taylor_remainder_is_second_order() {
        let g = Grid::new(8, 6, 0.0, 1.0, 0.0, 0.6).unwrap();
        let p = ModelParams::benchmark();
        let s = random_state(&g, 3);
        let dir = random_dir(s.len(), -0.1, 0.2, 8);
        let grad = flat_gradient(&s, &g, &p);
        let gd: f64 = grad.iter().zip(dir.iter()).map(|(a, b)| a * b).sum();
        let e0 = total_energy(&s, &g, &p).total;
        let rem = |h: f64| {
            let data: Vec<f64> = s.as_flat().iter().zip(dir.iter()).map(|(a, d)| a + h * d).collect();
            (total_energy(&State::from_flat(&g, data).unwrap(), &g, &p).total - e0 - h * gd).abs()
        };
        let order = (rem(1e-2) / rem(5e-3)).log2();
        assert!(order >= 1.9, "observed order {order}");
    }

    #[test]
    fn bulk_terms_translation_invariant() {
        let g = Grid::new(40, 20, 0.0, 1.0, 0.0, 0.5).unwrap();
        let mut p = ModelParams::benchmark();
        p.cn = 0.01;
        let droplet = |shift: f64| {
            let phi = crate::grid::tanh_droplet_ic(&g, &[(0.4 + shift, 0.25)], 0.1, p.cn);
            let psi: Vec<f64> = phi.iter().map(|v| 0.02 + 0.01 * v).collect();
            State::from_fields(&g, &phi, &psi, &[-1.0; 40])
        };
        let a = total_energy(&droplet(0.0), &g, &p);
        let b = total_energy(&droplet(5.0 * g.dx), &g, &p);
        let bulk = |e: EnergyBreakdown| e.f_gl + e.f_sur + e.f_ad;
        assert!((bulk(a) - bulk(b)).abs() <= 1e-10 * bulk(a).abs());
    }
}
