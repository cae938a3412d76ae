//! Post-processing of `φ` fields: interface extraction, contact angle and
//! connected components of the liquid phase.

use std::collections::VecDeque;

use crate::grid::Grid;

/// Upper end of the band of interface points used for the circle fit.
pub const ANGLE_FIT_TOP: f64 = 0.2;

/// Zero crossing of `φ` on a segment between two cell centres, tagged with
/// the index of the cell on the `φ > 0` side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfacePoint {
    pub x: f64,
    pub y: f64,
    pub liquid_cell: usize,
}

/// `φ = 0` level set by linear interpolation between neighbouring cell
/// centres, horizontally and vertically.
pub fn interface_points(phi: &[f64], grid: &Grid) -> Vec<InterfacePoint> {
    let mut out = Vec::new();
    let mut push = |a: usize, b: usize, (xa, ya): (f64, f64), (xb, yb): (f64, f64)| {
        let (fa, fb) = (phi[a], phi[b]);
        if (fa > 0.0) == (fb > 0.0) {
            return;
        }
        let s = fa / (fa - fb);
        out.push(InterfacePoint {
            x: xa + s * (xb - xa),
            y: ya + s * (yb - ya),
            liquid_cell: if fa > 0.0 { a } else { b },
        });
    };
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let k = grid.idx(i, j);
            let p = (grid.x(i), grid.y(j));
            if i + 1 < grid.nx {
                push(k, grid.idx(i + 1, j), p, (grid.x(i + 1), grid.y(j)));
            }
            if j + 1 < grid.ny {
                push(k, grid.idx(i, j + 1), p, (grid.x(i), grid.y(j + 1)));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub xc: f64,
    pub yc: f64,
    pub r: f64,
}

/// Algebraic least-squares circle through `points` (Kåsa fit): minimises
/// `Σ (x² + y² + Dx + Ey + F)²`. Needs three points not on a line.
pub fn fit_circle(points: &[(f64, f64)]) -> Option<Circle> {
    if points.len() < 3 {
        return None;
    }
    // centre the data for conditioning
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut m = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for &(x, y) in points {
        let (u, v) = (x - mx, y - my);
        let row = [u, v, 1.0];
        let z = -(u * u + v * v);
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] += row[a] * row[b];
            }
            rhs[a] += row[a] * z;
        }
    }
    let [d, e, f] = solve3(m, rhs)?;
    let (uc, vc) = (-0.5 * d, -0.5 * e);
    let r2 = uc * uc + vc * vc - f;
    if !(r2 > 0.0) {
        return None;
    }
    Some(Circle { xc: uc + mx, yc: vc + my, r: r2.sqrt() })
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    let scale = m.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    if d.abs() <= 1e-14 * scale.powi(3) {
        return None;
    }
    let mut x = [0.0; 3];
    for (c, xc) in x.iter_mut().enumerate() {
        let mut mc = m;
        for r in 0..3 {
            mc[r][c] = b[r];
        }
        *xc = det(&mc) / d;
    }
    Some(x)
}

/// Contact angle (radians, measured through the `φ > 0` phase) of the largest
/// liquid component: circle fit to its interface points with
/// `y − c ∈ [2Δy, 0.2]`, then `cos θ = −(y_c − c)/R`.
pub fn contact_angle(phi: &[f64], grid: &Grid) -> Option<f64> {
    let labels = component_labels(phi, grid);
    let largest = largest_label(&labels)?;
    let pts: Vec<(f64, f64)> = interface_points(phi, grid)
        .into_iter()
        .filter(|p| labels[p.liquid_cell] == Some(largest))
        .map(|p| (p.x, p.y - grid.c))
        .filter(|&(_, y)| y >= 2.0 * grid.dy && y <= ANGLE_FIT_TOP)
        .collect();
    let c = fit_circle(&pts)?;
    Some((-c.yc / c.r).clamp(-1.0, 1.0).acos())
}

/// Labels of the 4-connected components of `{φ > 0}`; `None` for `φ ≤ 0`.
pub fn component_labels(phi: &[f64], grid: &Grid) -> Vec<Option<usize>> {
    let mut labels = vec![None; phi.len()];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for start in 0..phi.len() {
        if phi[start] <= 0.0 || labels[start].is_some() {
            continue;
        }
        labels[start] = Some(next);
        queue.push_back(start);
        while let Some(k) = queue.pop_front() {
            let (i, j) = (k % grid.nx, k / grid.nx);
            let mut visit = |q: usize| {
                if phi[q] > 0.0 && labels[q].is_none() {
                    labels[q] = Some(next);
                    queue.push_back(q);
                }
            };
            if i > 0 {
                visit(k - 1);
            }
            if i + 1 < grid.nx {
                visit(k + 1);
            }
            if j > 0 {
                visit(k - grid.nx);
            }
            if j + 1 < grid.ny {
                visit(k + grid.nx);
            }
        }
        next += 1;
    }
    labels
}

fn largest_label(labels: &[Option<usize>]) -> Option<usize> {
    let count = labels.iter().flatten().max().map_or(0, |&m| m + 1);
    let mut sizes = vec![0usize; count];
    for l in labels.iter().flatten() {
        sizes[*l] += 1;
    }
    (0..count).max_by_key(|&l| sizes[l])
}

/// Number of 4-connected components of `{φ > 0}`.
pub fn count_components(phi: &[f64], grid: &Grid) -> usize {
    component_labels(phi, grid).iter().flatten().max().map_or(0, |&m| m + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{tanh_droplet_ic, Field};

    #[test]
    fn circle_fit_recovers_exact_circle() {
        let pts: Vec<(f64, f64)> = (0..40)
            .map(|k| {
                let a = 0.1 + 1.2 * k as f64 / 39.0;
                (0.3 + 0.25 * a.cos(), -0.1 + 0.25 * a.sin())
            })
            .collect();
        let c = fit_circle(&pts).unwrap();
        assert!((c.xc - 0.3).abs() < 1e-12 && (c.yc + 0.1).abs() < 1e-12 && (c.r - 0.25).abs() < 1e-12);
        assert!(fit_circle(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]).is_none());
        assert!(fit_circle(&pts[..2]).is_none());
    }

    /// Cap of a circle centred at height `yc` meets `y = 0` at angle
    /// `acos(−yc/R)`.
    #[test]
    fn contact_angle_of_spherical_caps() {
        let g = Grid::new(200, 100, 0.0, 1.0, 0.0, 0.5).unwrap();
        for theta_deg in [60.0f64, 90.0, 120.0] {
            let r = 0.25;
            let yc = -r * theta_deg.to_radians().cos();
            let phi = Field::from_fn(&g, |x, y| r - ((x - 0.5).powi(2) + (y - yc).powi(2)).sqrt());
            let got = contact_angle(&phi, &g).unwrap().to_degrees();
            assert!((got - theta_deg).abs() < 0.5, "{theta_deg}: {got}");
        }
    }

    #[test]
    fn components_of_droplets() {
        let g = Grid::new(100, 20, 0.0, 2.0, 0.0, 0.4).unwrap();
        let two = tanh_droplet_ic(&g, &[(0.75, 0.0), (1.25, 0.0)], 0.14, 0.01);
        assert_eq!(count_components(&two, &g), 2);
        let merged = tanh_droplet_ic(&g, &[(0.9, 0.0), (1.1, 0.0)], 0.14, 0.01);
        assert_eq!(count_components(&merged, &g), 1);
        assert_eq!(count_components(&vec![-1.0; g.len()], &g), 0);
        // diagonal neighbours are not connected
        let g2 = Grid::new(2, 2, 0.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(count_components(&[1.0, -1.0, -1.0, 1.0], &g2), 2);
    }

    #[test]
    fn interface_points_lie_on_zero_level() {
        let g = Grid::new(20, 10, 0.0, 1.0, 0.0, 0.5).unwrap();
        let phi = Field::from_fn(&g, |x, _| x - 0.52);
        let pts = interface_points(&phi, &g);
        assert_eq!(pts.len(), 10);
        for p in pts {
            assert!((p.x - 0.52).abs() < 1e-12);
            assert!(phi[p.liquid_cell] > 0.0);
        }
    }
}
