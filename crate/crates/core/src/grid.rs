//! Cell-centred grid, scalar fields and the packed primal/dual vectors.

use std::f64::consts::SQRT_2;
use std::ops::{Deref, DerefMut, Range};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Uniform cell-centred grid on `[a, b] × [c, d]`. The substrate is `y = c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub dx: f64,
    pub dy: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::Config(format!("grid needs at least 2x2 cells, got {nx}x{ny}")));
        }
        let (dx, dy) = ((b - a) / nx as f64, (d - c) / ny as f64);
        if !(dx > 0.0 && dy > 0.0) {
            return Err(Error::Config("grid bounds must satisfy a < b and c < d".into()));
        }
        Ok(Self { nx, ny, a, b, c, d, dx, dy })
    }

    /// Grid of `[a, b] × [c, d]` with spacings as close as possible to `h`.
    pub fn with_spacing(a: f64, b: f64, c: f64, d: f64, hx: f64, hy: f64) -> Result<Self> {
        let nx = ((b - a) / hx).round() as usize;
        let ny = ((d - c) / hy).round() as usize;
        Self::new(nx, ny, a, b, c, d)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// Flat index, x fastest.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    pub fn x(&self, i: usize) -> f64 {
        self.a + (i as f64 + 0.5) * self.dx
    }

    pub fn y(&self, j: usize) -> f64 {
        self.c + (j as f64 + 0.5) * self.dy
    }

    pub fn centers(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.ny).flat_map(move |j| (0..self.nx).map(move |i| (self.x(i), self.y(j))))
    }
}

/// One value per cell centre, x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Field(pub Vec<f64>);

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Self(vec![0.0; grid.len()])
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        Self(vec![value; grid.len()])
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        Self(grid.centers().map(|(x, y)| f(x, y)).collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Field {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Field {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Field {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// `ΔxΔy Σ f`.
pub fn mass(f: &[f64], grid: &Grid) -> f64 {
    f.iter().sum::<f64>() * grid.cell_area()
}

/// `max |f − g|`.
pub fn linf_diff(f: &[f64], g: &[f64]) -> f64 {
    assert_eq!(f.len(), g.len());
    f.iter().zip(g).fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
}

pub fn min_max(f: &[f64]) -> (f64, f64) {
    f.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Primal unknown `u = (φ, m_φˣ, m_φʸ, ψ, m_ψˣ, m_ψʸ, φ_bc)` stored as one
/// flat vector of length `6N + nx` in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    n: usize,
    nx: usize,
    data: Vec<f64>,
}

/// Mutable views of every component of a [`State`].
pub struct StateMut<'a> {
    pub phi: &'a mut [f64],
    pub m_phi_x: &'a mut [f64],
    pub m_phi_y: &'a mut [f64],
    pub psi: &'a mut [f64],
    pub m_psi_x: &'a mut [f64],
    pub m_psi_y: &'a mut [f64],
    pub phi_bc: &'a mut [f64],
}

impl State {
    pub fn zeros(grid: &Grid) -> Self {
        let n = grid.len();
        Self { n, nx: grid.nx, data: vec![0.0; 6 * n + grid.nx] }
    }

    /// State with the given fields and zero momenta.
    pub fn from_fields(grid: &Grid, phi: &[f64], psi: &[f64], phi_bc: &[f64]) -> Self {
        assert_eq!(phi.len(), grid.len());
        assert_eq!(psi.len(), grid.len());
        assert_eq!(phi_bc.len(), grid.nx);
        let mut s = Self::zeros(grid);
        s.phi_mut().copy_from_slice(phi);
        s.psi_mut().copy_from_slice(psi);
        s.phi_bc_mut().copy_from_slice(phi_bc);
        s
    }

    /// Rebuilds a state from its flat layout.
    pub fn from_flat(grid: &Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != 6 * grid.len() + grid.nx {
            return Err(Error::Config(format!(
                "flat state has length {}, expected {}",
                data.len(),
                6 * grid.len() + grid.nx
            )));
        }
        Ok(Self { n: grid.len(), nx: grid.nx, data })
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn block(&self, k: usize) -> Range<usize> {
        k * self.n..(k + 1) * self.n
    }

    pub fn phi(&self) -> &[f64] {
        &self.data[self.block(0)]
    }
    pub fn m_phi_x(&self) -> &[f64] {
        &self.data[self.block(1)]
    }
    pub fn m_phi_y(&self) -> &[f64] {
        &self.data[self.block(2)]
    }
    pub fn psi(&self) -> &[f64] {
        &self.data[self.block(3)]
    }
    pub fn m_psi_x(&self) -> &[f64] {
        &self.data[self.block(4)]
    }
    pub fn m_psi_y(&self) -> &[f64] {
        &self.data[self.block(5)]
    }
    pub fn phi_bc(&self) -> &[f64] {
        &self.data[6 * self.n..]
    }

    pub fn phi_mut(&mut self) -> &mut [f64] {
        let r = self.block(0);
        &mut self.data[r]
    }
    pub fn psi_mut(&mut self) -> &mut [f64] {
        let r = self.block(3);
        &mut self.data[r]
    }
    pub fn phi_bc_mut(&mut self) -> &mut [f64] {
        let n = self.n;
        &mut self.data[6 * n..]
    }

    pub fn split_mut(&mut self) -> StateMut<'_> {
        let n = self.n;
        let (phi, rest) = self.data.split_at_mut(n);
        let (m_phi_x, rest) = rest.split_at_mut(n);
        let (m_phi_y, rest) = rest.split_at_mut(n);
        let (psi, rest) = rest.split_at_mut(n);
        let (m_psi_x, rest) = rest.split_at_mut(n);
        let (m_psi_y, phi_bc) = rest.split_at_mut(n);
        StateMut { phi, m_phi_x, m_phi_y, psi, m_psi_x, m_psi_y, phi_bc }
    }

    /// Copy with all momenta set to zero.
    pub fn without_momenta(&self) -> Self {
        let mut s = self.clone();
        let n = self.n;
        for k in [1, 2, 4, 5] {
            s.data[k * n..(k + 1) * n].fill(0.0);
        }
        s
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn cells(&self) -> usize {
        self.n
    }
}

/// Dual variable: one block per continuity equation (φ then ψ), length `2N`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    n: usize,
    data: Vec<f64>,
}

impl DualState {
    pub fn zeros(grid: &Grid) -> Self {
        Self { n: grid.len(), data: vec![0.0; 2 * grid.len()] }
    }

    pub fn from_blocks(phi_block: &[f64], psi_block: &[f64]) -> Self {
        assert_eq!(phi_block.len(), psi_block.len());
        let mut data = Vec::with_capacity(2 * phi_block.len());
        data.extend_from_slice(phi_block);
        data.extend_from_slice(psi_block);
        Self { n: phi_block.len(), data }
    }

    pub fn from_flat(grid: &Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != 2 * grid.len() {
            return Err(Error::Config(format!(
                "flat dual has length {}, expected {}",
                data.len(),
                2 * grid.len()
            )));
        }
        Ok(Self { n: grid.len(), data })
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn phi_block(&self) -> &[f64] {
        &self.data[..self.n]
    }

    pub fn psi_block(&self) -> &[f64] {
        &self.data[self.n..]
    }

    pub fn blocks_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        self.data.split_at_mut(self.n)
    }

    pub fn norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Radius equivalent of the `tanh(10 − r/(√2 Cn))` droplet profile.
pub fn offset_form_radius(offset: f64, cn: f64) -> f64 {
    offset * SQRT_2 * cn
}

/// `(n−1) + Σ_k tanh((R − |x − x_k|)/(√2 Cn))` for `n` droplet centres; with a
/// single centre this is the plain `tanh((R − r)/(√2 Cn))` cap.
pub fn tanh_droplet_ic(grid: &Grid, centers: &[(f64, f64)], radius: f64, cn: f64) -> Field {
    let offset = centers.len().saturating_sub(1) as f64;
    let w = SQRT_2 * cn;
    Field::from_fn(grid, |x, y| {
        offset
            + centers
                .iter()
                .map(|&(cx, cy)| ((radius - ((x - cx).powi(2) + (y - cy).powi(2)).sqrt()) / w).tanh())
                .sum::<f64>()
    })
}

/// Film of the given length and height sitting on the substrate, centred at
/// `x_center`: `tanh(min(l/2 − |x − x_c|, h − (y − c)) / (√2 Cn))`.
pub fn thin_film_ic(grid: &Grid, x_center: f64, length: f64, height: f64, cn: f64) -> Field {
    let w = SQRT_2 * cn;
    let c = grid.c;
    Field::from_fn(grid, |x, y| {
        let d = (0.5 * length - (x - x_center).abs()).min(height - (y - c));
        (d / w).tanh()
    })
}

/// `mean + amplitude·ξ` with `ξ ~ U[0, 1)` drawn per cell from a seeded ChaCha8 stream.
pub fn random_uniform_ic(grid: &Grid, mean: f64, amplitude: f64, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Field((0..grid.len()).map(|_| mean + amplitude * rng.random::<f64>()).collect())
}

/// First row of a field (the cells touching the substrate).
pub fn substrate_row(grid: &Grid, f: &[f64]) -> Vec<f64> {
    f[..grid.nx].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_grid() -> Grid {
        Grid::new(100, 50, 0.0, 1.0, 0.0, 0.5).unwrap()
    }

    #[test]
    fn geometry() {
        let g = Grid::new(4, 3, 0.0, 1.0, 0.0, 0.75).unwrap();
        assert_eq!(g.dx, 0.25);
        assert_eq!(g.dy, 0.25);
        assert_eq!(g.x(0), 0.125);
        assert_eq!(g.y(2), 0.625);
        assert_eq!(g.idx(1, 2), 9);
        assert!(Grid::new(1, 3, 0.0, 1.0, 0.0, 1.0).is_err());
        assert!(Grid::new(3, 3, 1.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn mass_of_constants() {
        let g = unit_grid();
        assert!((mass(&Field::constant(&g, 1.0), &g) - 0.5).abs() < 1e-12);
        assert_eq!(mass(&Field::zeros(&g), &g), 0.0);
    }

    #[test]
    fn mass_matches_bruteforce_sum() {
        let g = Grid::new(4, 3, 0.0, 2.0, 0.0, 1.0).unwrap();
        let f = random_uniform_ic(&g, -0.5, 1.0, 11);
        let mut brute = 0.0;
        for j in 0..3 {
            for i in 0..4 {
                brute += f[i + 4 * j] * (0.5 * (1.0 / 3.0));
            }
        }
        assert!((mass(&f, &g) - brute).abs() < 1e-14);
    }

    #[test]
    fn linf_and_minmax() {
        let g = Grid::new(5, 5, 0.0, 1.0, 0.0, 1.0).unwrap();
        let f = random_uniform_ic(&g, 0.0, 1.0, 1);
        let h = random_uniform_ic(&g, 0.0, 1.0, 2);
        assert_eq!(linf_diff(&f, &f), 0.0);
        assert_eq!(linf_diff(&Field::constant(&g, 1.0), &Field::zeros(&g)), 1.0);
        let mut oracle = 0.0f64;
        for k in 0..25 {
            oracle = oracle.max((f[k] - h[k]).abs());
        }
        assert_eq!(linf_diff(&f, &h), oracle);
        let (lo, hi) = min_max(&f);
        assert!(f.iter().all(|&v| v >= lo && v <= hi));
        assert!(f.contains(&lo) && f.contains(&hi));
    }

    #[test]
    fn single_droplet_profile() {
        let cn = 0.025;
        let g = Grid::new(2, 2, 0.0, 1.0, 0.0, 0.5).unwrap();
        let at = |x: f64, y: f64| {
            let r = ((x - 0.5f64).powi(2) + y * y).sqrt();
            ((0.3 - r) / (SQRT_2 * cn)).tanh()
        };
        assert!((at(0.5, 0.0) - 1.0).abs() < 1e-7);
        assert!(at(0.8, 0.0).abs() < 1e-14);
        let f = tanh_droplet_ic(&g, &[(0.5, 0.0)], 0.3, cn);
        for (k, (x, y)) in g.centers().enumerate() {
            assert!((f[k] - at(x, y)).abs() < 1e-15);
        }
    }

    #[test]
    fn multi_droplet_offsets() {
        let cn = 0.01;
        let g = Grid::new(200, 40, 0.0, 1.0, 0.0, 0.4).unwrap();
        let r = offset_form_radius(10.0, cn);
        let f = tanh_droplet_ic(&g, &[(0.25, 0.0), (0.75, 0.0)], r, cn);
        let (lo, hi) = min_max(&f);
        assert!(lo > -1.0 - 1e-12 && hi < 1.0 + 1e-12);
        // inside the first droplet, outside both
        assert!(f[g.idx(50, 0)] > 0.99);
        assert!(f[g.idx(100, 0)] < -0.99);
    }

    #[test]
    fn thin_film_profile() {
        let g = Grid::new(300, 100, -1.5, 1.5, 0.0, 0.5).unwrap();
        let f = thin_film_ic(&g, 0.0, 2.5, 0.03, 0.006);
        assert!(f[g.idx(150, 0)] > 0.9);
        assert!(f[g.idx(150, 20)] < -0.99);
        assert!(f[g.idx(5, 0)] < -0.99);
    }

    #[test]
    fn surfactant_noise_bounds() {
        let g = unit_grid();
        let f = random_uniform_ic(&g, 0.02, 0.001, 7);
        assert!(f.iter().all(|&v| (0.02..=0.021).contains(&v)));
        assert_eq!(f, random_uniform_ic(&g, 0.02, 0.001, 7));
        assert_ne!(f, random_uniform_ic(&g, 0.02, 0.001, 8));
    }

    #[test]
    fn state_layout() {
        let g = Grid::new(3, 2, 0.0, 1.0, 0.0, 1.0).unwrap();
        let phi: Vec<f64> = (0..6).map(|k| k as f64).collect();
        let psi: Vec<f64> = (0..6).map(|k| 10.0 + k as f64).collect();
        let s = State::from_fields(&g, &phi, &psi, &[7.0, 8.0, 9.0]);
        assert_eq!(s.len(), 6 * 6 + 3);
        assert_eq!(s.phi(), &phi[..]);
        assert_eq!(s.psi(), &psi[..]);
        assert_eq!(s.phi_bc(), &[7.0, 8.0, 9.0]);
        assert!(s.m_phi_x().iter().all(|&v| v == 0.0));
        assert!(State::from_flat(&g, vec![0.0; 5]).is_err());
    }

    proptest! {
        #[test]
        fn state_flat_round_trip(data in proptest::collection::vec(-1e3f64..1e3, 6 * 12 + 4)) {
            let g = Grid::new(4, 3, 0.0, 1.0, 0.0, 1.0).unwrap();
            let s = State::from_flat(&g, data.clone()).unwrap();
            let back = State::from_flat(&g, s.clone().into_flat()).unwrap();
            prop_assert_eq!(&s, &back);
            prop_assert_eq!(s.into_flat(), data);
        }

        #[test]
        fn mass_is_linear(alpha in -10.0f64..10.0, beta in -10.0f64..10.0, seed in 0u64..1000) {
            let g = Grid::new(6, 5, 0.0, 1.3, 0.0, 0.7).unwrap();
            let f = random_uniform_ic(&g, -0.5, 1.0, seed);
            let h = random_uniform_ic(&g, -0.5, 1.0, seed + 1);
            let comb: Vec<f64> = f.iter().zip(h.iter()).map(|(a, b)| alpha * a + beta * b).collect();
            let lhs = mass(&comb, &g);
            let rhs = alpha * mass(&f, &g) + beta * mass(&h, &g);
            let scale = alpha.abs() * mass(&f.iter().map(|v| v.abs()).collect::<Vec<_>>(), &g)
                + beta.abs() * mass(&h.iter().map(|v| v.abs()).collect::<Vec<_>>(), &g);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale.max(1e-300));
        }
    }
}
