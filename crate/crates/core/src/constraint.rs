//! Discrete continuity equations `Au = b` with reflected no-flux ghosts.

use crate::grid::{norm, DualState, Grid, State};

/// Matrix-free `A` and `Aᵀ` on a fixed grid.
#[derive(Debug, Clone, Copy)]
pub struct ConstraintOperator {
    grid: Grid,
}

/// `out[i] += s · (D m)[i]` along one axis, where `D` is the central
/// difference with odd ghosts `m₋₁ = −m₀`, `m_n = −m_{n−1}`.
#[inline]
fn add_div(m: &[f64], s: f64, len: usize, stride: usize, out: &mut [f64]) {
    let at = |i: usize| m[i * stride];
    out[0] += s * (at(0) + at(1));
    for i in 1..len - 1 {
        out[i * stride] += s * (at(i + 1) - at(i - 1));
    }
    out[(len - 1) * stride] -= s * (at(len - 1) + at(len - 2));
}

/// `out[i] = s · (Dᵀ v)[i]` along one axis.
#[inline]
fn set_div_t(v: &[f64], s: f64, len: usize, stride: usize, out: &mut [f64]) {
    let at = |i: usize| v[i * stride];
    out[0] = s * (at(0) - at(1));
    for i in 1..len - 1 {
        out[i * stride] = s * (at(i - 1) - at(i + 1));
    }
    out[(len - 1) * stride] = s * (at(len - 2) - at(len - 1));
}

impl ConstraintOperator {
    pub fn new(grid: &Grid) -> Self {
        Self { grid: *grid }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// One continuity block: `ρ + (1/2Δx) D_x mˣ + (1/2Δy) D_y mʸ`.
    fn block(&self, rho: &[f64], mx: &[f64], my: &[f64], out: &mut [f64]) {
        let g = &self.grid;
        let (nx, ny) = (g.nx, g.ny);
        out.copy_from_slice(rho);
        let sx = 0.5 / g.dx;
        for j in 0..ny {
            let r = j * nx..(j + 1) * nx;
            add_div(&mx[r.clone()], sx, nx, 1, &mut out[r]);
        }
        let sy = 0.5 / g.dy;
        for i in 0..nx {
            add_div(&my[i..], sy, ny, nx, &mut out[i..]);
        }
    }

    fn block_t(&self, v: &[f64], rho: &mut [f64], mx: &mut [f64], my: &mut [f64]) {
        let g = &self.grid;
        let (nx, ny) = (g.nx, g.ny);
        rho.copy_from_slice(v);
        let sx = 0.5 / g.dx;
        for j in 0..ny {
            let r = j * nx..(j + 1) * nx;
            set_div_t(&v[r.clone()], sx, nx, 1, &mut mx[r]);
        }
        let sy = 0.5 / g.dy;
        for i in 0..nx {
            set_div_t(&v[i..], sy, ny, nx, &mut my[i..]);
        }
    }

    /// `out = A u` for a flat primal vector.
    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        let n = self.grid.len();
        let (o1, o2) = out.split_at_mut(n);
        self.block(&u[..n], &u[n..2 * n], &u[2 * n..3 * n], o1);
        self.block(&u[3 * n..4 * n], &u[4 * n..5 * n], &u[5 * n..6 * n], o2);
    }

    /// `out = Aᵀ v`; the boundary block of `out` is zeroed.
    pub fn apply_t_into(&self, v: &[f64], out: &mut [f64]) {
        let n = self.grid.len();
        let (phi_part, rest) = out.split_at_mut(3 * n);
        let (psi_part, bc) = rest.split_at_mut(3 * n);
        let (r, m) = phi_part.split_at_mut(n);
        let (mx, my) = m.split_at_mut(n);
        self.block_t(&v[..n], r, mx, my);
        let (r, m) = psi_part.split_at_mut(n);
        let (mx, my) = m.split_at_mut(n);
        self.block_t(&v[n..], r, mx, my);
        bc.fill(0.0);
    }

    pub fn apply_a(&self, u: &State) -> DualState {
        let mut out = DualState::zeros(&self.grid);
        self.apply_into(u.as_flat(), out.as_flat_mut());
        out
    }

    pub fn apply_at(&self, v: &DualState) -> State {
        let mut out = State::zeros(&self.grid);
        self.apply_t_into(v.as_flat(), out.as_flat_mut());
        out
    }

    /// Right-hand side: the previous fields `(φᵏ, ψᵏ)`.
    pub fn build_b(&self, prev: &State) -> DualState {
        DualState::from_blocks(prev.phi(), prev.psi())
    }

    /// `Au − b` and its Euclidean norm.
    pub fn residual(&self, u: &State, b: &DualState) -> (DualState, f64) {
        let mut r = self.apply_a(u);
        for (x, y) in r.as_flat_mut().iter_mut().zip(b.as_flat()) {
            *x -= y;
        }
        let nrm = norm(r.as_flat());
        (r, nrm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{dot, random_uniform_ic};
    use rand::{Rng, SeedableRng};

    fn random_vec(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
    }

    /// Appendix-style dense assembly from the Kronecker blocks.
    fn dense_a(g: &Grid) -> Vec<Vec<f64>> {
        let d = |n: usize| {
            let mut m = vec![vec![0.0; n]; n];
            m[0][0] = 1.0;
            m[0][1] = 1.0;
            for i in 1..n - 1 {
                m[i][i - 1] = -1.0;
                m[i][i + 1] = 1.0;
            }
            m[n - 1][n - 2] = -1.0;
            m[n - 1][n - 1] = -1.0;
            m
        };
        let (nx, ny, n) = (g.nx, g.ny, g.len());
        let (dnx, dny) = (d(nx), d(ny));
        let cols = 6 * n + nx;
        let mut a = vec![vec![0.0; cols]; 2 * n];
        for blk in 0..2 {
            let off = 3 * n * blk;
            for j in 0..ny {
                for i in 0..nx {
                    let row = blk * n + i + nx * j;
                    a[row][off + i + nx * j] = 1.0;
                    // I_Ny ⊗ D_Nx
                    for ii in 0..nx {
                        a[row][off + n + ii + nx * j] += dnx[i][ii] / (2.0 * g.dx);
                    }
                    // D_Ny ⊗ I_Nx
                    for jj in 0..ny {
                        a[row][off + 2 * n + i + nx * jj] += dny[j][jj] / (2.0 * g.dy);
                    }
                }
            }
        }
        a
    }

    fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter().map(|r| dot(r, x)).collect()
    }

    #[test]
    fn zero_momentum_is_identity() {
        let g = Grid::new(5, 4, 0.0, 1.0, 0.0, 0.8).unwrap();
        let phi = random_uniform_ic(&g, -1.0, 2.0, 1);
        let psi = random_uniform_ic(&g, 0.0, 1.0, 2);
        let s = State::from_fields(&g, &phi, &psi, &[0.3; 5]);
        let op = ConstraintOperator::new(&g);
        let au = op.apply_a(&s);
        assert_eq!(au.phi_block(), &phi[..]);
        assert_eq!(au.psi_block(), &psi[..]);
        let (_, r) = op.residual(&s, &op.build_b(&s));
        assert_eq!(r, 0.0);
    }

    #[test]
    fn matches_dense_assembly() {
        for (nx, ny) in [(4, 3), (2, 2), (8, 8), (5, 7)] {
            let g = Grid::new(nx, ny, 0.0, 1.0, 0.0, 0.6).unwrap();
            let a = dense_a(&g);
            let op = ConstraintOperator::new(&g);
            let u = random_vec(6 * g.len() + nx, 3);
            let dense = matvec(&a, &u);
            let mut fast = vec![0.0; 2 * g.len()];
            op.apply_into(&u, &mut fast);
            for (x, y) in dense.iter().zip(&fast) {
                assert!((x - y).abs() <= 1e-14 * x.abs().max(1.0));
            }
            let v = random_vec(2 * g.len(), 4);
            let mut at = vec![0.0; 6 * g.len() + nx];
            op.apply_t_into(&v, &mut at);
            for (c, &got) in at.iter().enumerate() {
                let expect: f64 = (0..2 * g.len()).map(|r| a[r][c] * v[r]).sum();
                assert!((expect - got).abs() <= 1e-14 * expect.abs().max(1.0));
            }
        }
    }

    #[test]
    fn constant_x_momentum() {
        let g = Grid::new(6, 3, 0.0, 1.0, 0.0, 0.5).unwrap();
        let mut u = vec![0.0; 6 * 18 + 6];
        u[18..36].fill(1.0);
        let op = ConstraintOperator::new(&g);
        let mut out = vec![0.0; 36];
        op.apply_into(&u, &mut out);
        let dense = matvec(&dense_a(&g), &u);
        for j in 0..3 {
            assert_eq!(out[1 + 6 * j], 0.0);
            assert!((out[6 * j] - 1.0 / g.dx).abs() < 1e-12);
            assert!((out[5 + 6 * j] + 1.0 / g.dx).abs() < 1e-12);
        }
        assert_eq!(out, dense);
    }

    #[test]
    fn adjoint_identity_and_sparsity() {
        let g = Grid::new(5, 4, 0.0, 1.0, 0.0, 1.0).unwrap();
        let op = ConstraintOperator::new(&g);
        let u = random_vec(6 * 20 + 5, 10);
        let v = random_vec(40, 11);
        let mut au = vec![0.0; 40];
        let mut atv = vec![0.0; 125];
        op.apply_into(&u, &mut au);
        op.apply_t_into(&v, &mut atv);
        let (l, r) = (dot(&au, &v), dot(&u, &atv));
        assert!((l - r).abs() <= 1e-12 * l.abs().max(1.0));
        assert!(atv[120..].iter().all(|&x| x == 0.0));

        let a = dense_a(&g);
        let mut e = vec![0.0; 40];
        e[7] = 1.0;
        op.apply_t_into(&e, &mut atv);
        for c in 0..125 {
            assert_eq!(atv[c] != 0.0, a[7][c] != 0.0, "column {c}");
        }
        op.apply_t_into(&[0.0; 40], &mut atv);
        assert!(atv.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn momentum_telescopes() {
        let g = Grid::new(7, 5, 0.0, 1.0, 0.0, 1.0).unwrap();
        let op = ConstraintOperator::new(&g);
        let u = random_vec(6 * 35 + 7, 21);
        let mut au = vec![0.0; 70];
        op.apply_into(&u, &mut au);
        let s_phi: f64 = u[..35].iter().sum();
        let s_psi: f64 = u[105..140].iter().sum();
        assert!((au[..35].iter().sum::<f64>() - s_phi).abs() < 1e-12 * (1.0 + s_phi.abs()) * 10.0);
        assert!((au[35..].iter().sum::<f64>() - s_psi).abs() < 1e-12 * (1.0 + s_psi.abs()) * 10.0);
    }

    #[test]
    fn residual_matches_dense() {
        let g = Grid::new(4, 3, 0.0, 1.0, 0.0, 1.0).unwrap();
        let op = ConstraintOperator::new(&g);
        let u = State::from_flat(&g, random_vec(76, 5)).unwrap();
        let prev = State::from_flat(&g, random_vec(76, 6)).unwrap();
        let b = op.build_b(&prev);
        let (r, nrm) = op.residual(&u, &b);
        let dense: Vec<f64> = matvec(&dense_a(&g), u.as_flat()).iter().zip(b.as_flat()).map(|(x, y)| x - y).collect();
        for (x, y) in dense.iter().zip(r.as_flat()) {
            assert!((x - y).abs() < 1e-13);
        }
        assert!((nrm - dense.iter().map(|x| x * x).sum::<f64>().sqrt()).abs() < 1e-12);
    }
}
