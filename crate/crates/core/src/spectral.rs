//! Cosine transforms, the spectrum of one `AAᵀ` block, and the dual
//! proximal maps of the preconditioned solver.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{norm, Grid};

/// Orthonormal 1-D DCT-II / DCT-III of fixed length via one complex FFT of
/// the even/odd reordered input, applied to a batch of strided lines. Two
/// real lines share each complex transform.
struct Dct1 {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    twiddle: Vec<Complex64>,
    scale: Vec<f64>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

/// Placement of a batch of lines inside a flat block.
#[derive(Clone, Copy)]
struct Lines {
    count: usize,
    /// Offset between consecutive lines.
    line_stride: usize,
    /// Offset between consecutive entries of one line.
    elem_stride: usize,
}

impl Lines {
    #[inline]
    fn at(&self, line: usize, i: usize) -> usize {
        line * self.line_stride + i * self.elem_stride
    }
}

/// Makhoul's reordering: even entries ascending, then odd entries descending.
#[inline]
fn reorder(n: usize, k: usize) -> usize {
    if 2 * k < n {
        2 * k
    } else {
        2 * (n - 1 - k) + 1
    }
}

impl Dct1 {
    fn new(n: usize, lines: usize, planner: &mut FftPlanner<f64>) -> Self {
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        let scratch_len = fft.get_inplace_scratch_len().max(ifft.get_inplace_scratch_len());
        let twiddle = (0..n).map(|k| Complex64::from_polar(1.0, -PI * k as f64 / (2.0 * n as f64))).collect();
        let scale = (0..n)
            .map(|k| if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() })
            .collect();
        Self {
            n,
            fft,
            ifft,
            twiddle,
            scale,
            buf: vec![Complex64::new(0.0, 0.0); n * lines.div_ceil(2)],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    fn forward(&mut self, data: &mut [f64], lines: Lines) {
        let n = self.n;
        let pairs = lines.count.div_ceil(2);
        let buf = &mut self.buf[..n * pairs];
        for (p, chunk) in buf.chunks_exact_mut(n).enumerate() {
            let (la, lb) = (2 * p, 2 * p + 1);
            let has_b = lb < lines.count;
            for (k, z) in chunk.iter_mut().enumerate() {
                let i = reorder(n, k);
                let b = if has_b { data[lines.at(lb, i)] } else { 0.0 };
                *z = Complex64::new(data[lines.at(la, i)], b);
            }
        }
        self.fft.process_with_scratch(buf, &mut self.scratch);
        for (p, chunk) in buf.chunks_exact(n).enumerate() {
            let (la, lb) = (2 * p, 2 * p + 1);
            let has_b = lb < lines.count;
            for k in 0..n {
                let z = chunk[k];
                let zc = chunk[(n - k) % n].conj();
                let va = 0.5 * (z + zc);
                data[lines.at(la, k)] = (self.twiddle[k] * va).re * self.scale[k];
                if has_b {
                    let vb = Complex64::new(0.0, -0.5) * (z - zc);
                    data[lines.at(lb, k)] = (self.twiddle[k] * vb).re * self.scale[k];
                }
            }
        }
    }

    fn inverse(&mut self, data: &mut [f64], lines: Lines) {
        let n = self.n;
        let pairs = lines.count.div_ceil(2);
        let buf = &mut self.buf[..n * pairs];
        let spectrum = |line: usize, k: usize| {
            let re = data[lines.at(line, k)] / self.scale[k];
            let im = if k == 0 { 0.0 } else { -data[lines.at(line, n - k)] / self.scale[n - k] };
            self.twiddle[k].conj() * Complex64::new(re, im)
        };
        for (p, chunk) in buf.chunks_exact_mut(n).enumerate() {
            let (la, lb) = (2 * p, 2 * p + 1);
            let has_b = lb < lines.count;
            for (k, z) in chunk.iter_mut().enumerate() {
                let a = spectrum(la, k);
                *z = if has_b { a + Complex64::new(0.0, 1.0) * spectrum(lb, k) } else { a };
            }
        }
        self.ifft.process_with_scratch(buf, &mut self.scratch);
        let inv_n = 1.0 / n as f64;
        for (p, chunk) in buf.chunks_exact(n).enumerate() {
            let (la, lb) = (2 * p, 2 * p + 1);
            let has_b = lb < lines.count;
            for (k, z) in chunk.iter().enumerate() {
                let i = reorder(n, k);
                data[lines.at(la, i)] = z.re * inv_n;
                if has_b {
                    data[lines.at(lb, i)] = z.im * inv_n;
                }
            }
        }
    }
}

/// Transform workspaces and the eigenvalues `λ_mn` of one `AAᵀ` block.
pub struct SpectralPlan {
    nx: usize,
    ny: usize,
    eig: Vec<f64>,
    dct_x: Dct1,
    dct_y: Dct1,
}

impl std::fmt::Debug for SpectralPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralPlan").field("nx", &self.nx).field("ny", &self.ny).finish()
    }
}

impl SpectralPlan {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        let (nx, ny) = (grid.nx, grid.ny);
        let lx: Vec<f64> = (0..nx).map(|m| (PI * m as f64 / nx as f64).sin().powi(2) / (grid.dx * grid.dx)).collect();
        let ly: Vec<f64> = (0..ny).map(|n| (PI * n as f64 / ny as f64).sin().powi(2) / (grid.dy * grid.dy)).collect();
        let mut eig = Vec::with_capacity(nx * ny);
        for &b in &ly {
            for &a in &lx {
                eig.push(1.0 + a + b);
            }
        }
        Self {
            nx,
            ny,
            eig,
            dct_x: Dct1::new(nx, ny, &mut planner),
            dct_y: Dct1::new(ny, nx, &mut planner),
        }
    }

    fn rows(&self) -> Lines {
        Lines { count: self.ny, line_stride: self.nx, elem_stride: 1 }
    }

    fn columns(&self) -> Lines {
        Lines { count: self.nx, line_stride: 1, elem_stride: self.nx }
    }

    /// `λ_mn` in x-fastest order; entry 0 is the constant mode.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eig
    }

    pub fn lambda_max(&self) -> f64 {
        self.eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn block_len(&self) -> usize {
        self.nx * self.ny
    }

    /// Orthonormal 2-D DCT-II in place.
    pub fn dct_forward(&mut self, f: &mut [f64]) {
        assert_eq!(f.len(), self.nx * self.ny);
        self.dct_x.forward(f, self.rows());
        self.dct_y.forward(f, self.columns());
    }

    /// Orthonormal 2-D DCT-III (inverse of [`Self::dct_forward`]) in place.
    pub fn dct_inverse(&mut self, f: &mut [f64]) {
        assert_eq!(f.len(), self.nx * self.ny);
        self.dct_y.inverse(f, self.columns());
        self.dct_x.inverse(f, self.rows());
    }

    /// Solves `(shift·I + scale·B) u = b` for one block `B` of `AAᵀ`, in place.
    pub fn solve_block(&mut self, b: &mut [f64], shift: f64, scale: f64) -> Result<()> {
        self.dct_forward(b);
        for (k, (v, &l)) in b.iter_mut().zip(&self.eig).enumerate() {
            let d = shift + scale * l;
            if d.abs() < 1e-14 {
                return Err(Error::SingularMode { m: k % self.nx, n: k / self.nx, denominator: d });
            }
            *v /= d;
        }
        self.dct_inverse(b);
        Ok(())
    }

    /// [`Self::solve_block`] applied to both blocks of a dual vector.
    pub fn solve_dual(&mut self, v: &mut [f64], shift: f64, scale: f64) -> Result<()> {
        let n = self.block_len();
        self.solve_block(&mut v[..n], shift, scale)?;
        self.solve_block(&mut v[n..], shift, scale)
    }

    /// Exact `Prox^{C₂}` of the ball indicator with `C₂ = λAAᵀ`: the
    /// minimiser of `½‖ỹ − y‖²_{C₂⁻¹}` over `‖ỹ − b‖ ≤ δ`. Overwrites `y`
    /// with the minimiser and returns the multiplier `μ`.
    pub fn dual_prox_exact(&mut self, y: &mut [f64], b: &[f64], delta: f64, lambda: f64) -> Result<f64> {
        for (yi, bi) in y.iter_mut().zip(b) {
            *yi -= bi;
        }
        let mu = self.dual_prox_exact_offset(y, delta, [lambda, lambda])?;
        for (yi, bi) in y.iter_mut().zip(b) {
            *yi += bi;
        }
        Ok(mu)
    }

    /// Same problem in the shifted variable: maps `c = y − b` to `ỹ − b`.
    /// Keeping the offset avoids cancellation when `μ` is large. `scales`
    /// holds the `λ` of the `φ` and `ψ` blocks of `C₂`.
    pub fn dual_prox_exact_offset(&mut self, c: &mut [f64], delta: f64, scales: [f64; 2]) -> Result<f64> {
        let n = self.block_len();
        if norm(c) < delta {
            return Ok(0.0);
        }
        self.dct_forward(&mut c[..n]);
        self.dct_forward(&mut c[n..]);
        let spectrum: Vec<f64> =
            self.eig.iter().map(|&l| scales[0] * l).chain(self.eig.iter().map(|&l| scales[1] * l)).collect();
        let sol = secular_solve(c, &spectrum, delta)?;
        c.copy_from_slice(&sol.x);
        self.dct_inverse(&mut c[..n]);
        self.dct_inverse(&mut c[n..]);
        Ok(sol.mu)
    }
}

/// `0` inside the ball, `(1 − δ/‖z‖) z` outside: `z − P_δ(z)`.
pub fn dual_prox_inexact(z: &[f64], delta: f64, out: &mut [f64]) {
    let nz = norm(z);
    if nz < delta {
        out.fill(0.0);
    } else {
        let f = 1.0 - delta / nz;
        for (o, &v) in out.iter_mut().zip(z) {
            *o = f * v;
        }
    }
}

/// Solution of the spectral secular problem.
#[derive(Debug, Clone)]
pub struct SecularSolution {
    pub mu: f64,
    /// `x_i = c_i / (1 + μ e_i)` plus any degenerate slack.
    pub x: Vec<f64>,
    pub degenerate: bool,
}

const SECULAR_MAX_ITER: usize = 200;

/// Finds `μ > −1/max(e)` with `Σ c_i²/(1 + μ e_i)² = δ²` and returns the
/// corresponding `x`.
///
/// If every coefficient on the top eigenvalue vanishes and the sum stays
/// below `δ²` as `μ → −1/max(e)`, the remaining slack is placed on the first
/// top mode.
pub fn secular_solve(c: &[f64], e: &[f64], delta: f64) -> Result<SecularSolution> {
    assert_eq!(c.len(), e.len());
    let e_max = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e_min = e.iter().cloned().fold(f64::INFINITY, f64::min);
    let norm_at = |mu: f64| -> f64 {
        c.iter().zip(e).map(|(&ci, &ei)| (ci / (1.0 + mu * ei)).powi(2)).sum::<f64>().sqrt()
    };
    let c_norm = norm(c);
    let mu_floor = if e_max > 0.0 { -1.0 / e_max } else { f64::NEG_INFINITY };

    let (mut lo, mut hi);
    if c_norm >= delta {
        if c_norm == delta {
            return Ok(SecularSolution { mu: 0.0, x: c.to_vec(), degenerate: false });
        }
        lo = 0.0;
        hi = if e_min > 0.0 { (c_norm / delta - 1.0) / e_min } else { 1.0 };
        let mut guard = 0;
        while norm_at(hi) > delta {
            hi *= 2.0;
            guard += 1;
            if guard > 200 {
                return Err(Error::Numerical("secular equation: no upper bracket".into()));
            }
        }
    } else {
        // the ball is larger than the unconstrained step: move μ below zero
        hi = 0.0;
        lo = mu_floor;
        let top: Vec<usize> = (0..e.len()).filter(|&i| e[i] == e_max).collect();
        if top.iter().all(|&i| c[i] == 0.0) {
            let rest: f64 = c
                .iter()
                .zip(e)
                .filter(|(_, &ei)| ei != e_max)
                .map(|(&ci, &ei)| (ci / (1.0 + mu_floor * ei)).powi(2))
                .sum();
            if rest <= delta * delta {
                let mut x: Vec<f64> = c
                    .iter()
                    .zip(e)
                    .map(|(&ci, &ei)| if ei == e_max { 0.0 } else { ci / (1.0 + mu_floor * ei) })
                    .collect();
                x[top[0]] = (delta * delta - rest).sqrt();
                return Ok(SecularSolution { mu: mu_floor, x, degenerate: true });
            }
        }
    }

    // g(μ) = 1/‖x(μ)‖ − 1/δ is increasing; safeguarded Newton.
    let g_and_dg = |mu: f64| {
        let mut s = 0.0;
        let mut ds = 0.0;
        for (&ci, &ei) in c.iter().zip(e) {
            let d = 1.0 + mu * ei;
            let x2 = ci * ci / (d * d);
            s += x2;
            ds += -2.0 * x2 * ei / d;
        }
        let nrm = s.sqrt();
        (1.0 / nrm - 1.0 / delta, -0.5 * ds / (s * nrm))
    };
    let mut mu = if c_norm > delta { lo } else { hi };
    for _ in 0..SECULAR_MAX_ITER {
        let (g, dg) = g_and_dg(mu);
        if !g.is_finite() {
            mu = 0.5 * (lo + hi);
            continue;
        }
        if g.abs() * delta <= 1e-14 {
            break;
        }
        if g < 0.0 {
            lo = mu;
        } else {
            hi = mu;
        }
        let newton = mu - g / dg;
        let next = if dg > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - mu).abs() <= 1e-16 * mu.abs().max(1e-300) {
            mu = next;
            break;
        }
        mu = next;
    }
    let r = norm_at(mu);
    if (r - delta).abs() > 1e-8 * delta {
        return Err(Error::Numerical(format!(
            "secular equation did not converge: |x| = {r:e}, delta = {delta:e}, mu = {mu:e}"
        )));
    }
    let x = c.iter().zip(e).map(|(&ci, &ei)| ci / (1.0 + mu * ei)).collect();
    Ok(SecularSolution { mu, x, degenerate: false })
}
