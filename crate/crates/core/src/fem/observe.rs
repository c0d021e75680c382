use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::mesh::{main_diagonal, Mesh};
use super::solve::FemSolution;

/// Point-evaluation functionals, one per interior point, in layout order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObservationLayout {
    points: Vec<[f64; 2]>,
}

impl ObservationLayout {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        for p in &points {
            check_interior(*p)?;
        }
        Ok(Self { points })
    }

    /// `m x m` lattice at `(i/(m+1), j/(m+1))`, `i, j = 1..m`, row-major in `j`.
    pub fn lattice(m: usize) -> Self {
        let d = (m + 1) as f64;
        let points = (1..=m)
            .flat_map(|j| (1..=m).map(move |i| [i as f64 / d, j as f64 / d]))
            .collect();
        Self { points }
    }

    /// The 36-point experiment layout, `lattice(6)`.
    pub fn default_experiment() -> Self {
        Self::lattice(6)
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn check_interior(p: [f64; 2]) -> Result<()> {
    if p[0] > 0.0 && p[0] < 1.0 && p[1] > 0.0 && p[1] < 1.0 {
        Ok(())
    } else {
        Err(Error::PointOutsideDomain { x: p[0], y: p[1] })
    }
}

/// Evaluates the P1 interpolant of nodal `values` (level with `n` cells per
/// side) at a point of the closed unit square.
pub(crate) fn interpolate(values: &[f64], n: usize, p: [f64; 2]) -> f64 {
    let side = n + 1;
    let (sx, sy) = (p[0] * n as f64, p[1] * n as f64);
    let i = (sx.floor() as usize).min(n - 1);
    let j = (sy.floor() as usize).min(n - 1);
    let (xi, eta) = (sx - i as f64, sy - j as f64);
    let u = |di: usize, dj: usize| values[(j + dj) * side + i + di];
    let (u00, u10, u01, u11) = (u(0, 0), u(1, 0), u(0, 1), u(1, 1));
    if main_diagonal(i, j) {
        if xi >= eta {
            u00 + xi * (u10 - u00) + eta * (u11 - u10)
        } else {
            u00 + xi * (u11 - u01) + eta * (u01 - u00)
        }
    } else if xi + eta <= 1.0 {
        u00 + xi * (u10 - u00) + eta * (u01 - u00)
    } else {
        u11 + (1.0 - xi) * (u01 - u11) + (1.0 - eta) * (u10 - u11)
    }
}

/// Observation vector `(O_1(u), ..., O_k(u))`.
pub fn observe(u: &FemSolution, layout: &ObservationLayout) -> Result<Vec<f64>> {
    let n = u.level().cells_per_side();
    layout
        .points()
        .iter()
        .map(|&p| {
            check_interior(p)?;
            Ok(interpolate(u.values(), n, p))
        })
        .collect()
}

/// P1 L2 norm of a nodal field via element mass matrices.
fn p1_l2_norm(mesh: &Mesh, values: &[f64]) -> f64 {
    let area = 0.5 * mesh.h() * mesh.h();
    let mut s = 0.0;
    for t in mesh.triangles() {
        let [a, b, c] = t.map(|n| values[n]);
        // (area / 12) * v^T [[2,1,1],[1,2,1],[1,1,2]] v
        s += area / 12.0 * (2.0 * (a * a + b * b + c * c) + 2.0 * (a * b + b * c + c * a));
    }
    s.sqrt()
}

/// `|u_a - u_b|_{L2}` after prolonging the coarser field to the finer mesh.
pub fn l2_norm_difference(u_a: &FemSolution, u_b: &FemSolution) -> Result<f64> {
    let level = u_a.level().max(u_b.level());
    let a = u_a.prolong_to(level)?;
    let b = u_b.prolong_to(level)?;
    let diff: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
    Ok(p1_l2_norm(&Mesh::new(level), &diff))
}

/// `|u_h - g|_{L2}` for a closed-form `g`, by a degree-4 six-point rule per
/// triangle.
pub fn l2_error_against(u: &FemSolution, exact: impl Fn([f64; 2]) -> f64) -> f64 {
    const RULE: [(f64, f64, f64); 6] = [
        (0.445948490915965, 0.445948490915965, 0.223381589678011),
        (0.445948490915965, 0.108103018168070, 0.223381589678011),
        (0.108103018168070, 0.445948490915965, 0.223381589678011),
        (0.091576213509771, 0.091576213509771, 0.109951743655322),
        (0.091576213509771, 0.816847572980459, 0.109951743655322),
        (0.816847572980459, 0.091576213509771, 0.109951743655322),
    ];
    let mesh = Mesh::new(u.level());
    let area = 0.5 * mesh.h() * mesh.h();
    let nodes = mesh.nodes();
    let mut s = 0.0;
    for t in mesh.triangles() {
        let p = t.map(|n| nodes[n]);
        let v = t.map(|n| u.values()[n]);
        for &(l1, l2, w) in &RULE {
            let l0 = 1.0 - l1 - l2;
            let x = [
                l0 * p[0][0] + l1 * p[1][0] + l2 * p[2][0],
                l0 * p[0][1] + l1 * p[1][1] + l2 * p[2][1],
            ];
            let uh = l0 * v[0] + l1 * v[1] + l2 * v[2];
            let e = uh - exact(x);
            s += w * area * e * e;
        }
    }
    s.sqrt()
}
