use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dyadic refinement level `l`: mesh size `h = 2^-l` on the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct MeshLevel(u32);

impl MeshLevel {
    pub const MIN: u32 = 1;
    pub const MAX: u32 = 10;

    pub fn new(l: u32) -> Result<Self> {
        if (Self::MIN..=Self::MAX).contains(&l) {
            Ok(Self(l))
        } else {
            Err(Error::LevelOutOfRange(l))
        }
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// Cells per side, `2^l`.
    pub fn cells_per_side(self) -> usize {
        1 << self.0
    }

    pub fn h(self) -> f64 {
        1.0 / self.cells_per_side() as f64
    }

    pub fn node_count(self) -> usize {
        let s = self.cells_per_side() + 1;
        s * s
    }

    pub fn triangle_count(self) -> usize {
        2 * self.cells_per_side() * self.cells_per_side()
    }

    /// The next coarser level, if any.
    pub fn coarser(self) -> Option<Self> {
        (self.0 > Self::MIN).then(|| Self(self.0 - 1))
    }
}

impl TryFrom<u32> for MeshLevel {
    type Error = Error;

    fn try_from(l: u32) -> Result<Self> {
        Self::new(l)
    }
}

impl From<MeshLevel> for u32 {
    fn from(l: MeshLevel) -> u32 {
        l.0
    }
}

/// Uniform triangulation of `[0,1]^2`.
///
/// Nodes are numbered row-major, `index = j * (2^l + 1) + i` for the node at
/// `(i h, j h)`. Each square cell is split along one diagonal; the diagonal
/// alternates in a checkerboard pattern (main diagonal when `i + j` is even,
/// anti-diagonal otherwise). With this pattern the level-`l` mesh is a
/// refinement of the level-`l-1` mesh, so coarse P1 fields are exactly
/// representable on finer meshes.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    level: MeshLevel,
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
}

pub fn build_mesh(l: u32) -> Result<Mesh> {
    Ok(Mesh::new(MeshLevel::new(l)?))
}

impl Mesh {
    pub fn new(level: MeshLevel) -> Self {
        let n = level.cells_per_side();
        let h = level.h();
        let side = n + 1;

        let mut nodes = Vec::with_capacity(side * side);
        for j in 0..side {
            for i in 0..side {
                nodes.push([i as f64 * h, j as f64 * h]);
            }
        }

        let mut triangles = Vec::with_capacity(level.triangle_count());
        for j in 0..n {
            for i in 0..n {
                let n00 = j * side + i;
                let n10 = n00 + 1;
                let n01 = n00 + side;
                let n11 = n01 + 1;
                if main_diagonal(i, j) {
                    triangles.push([n00, n10, n11]);
                    triangles.push([n00, n11, n01]);
                } else {
                    triangles.push([n00, n10, n01]);
                    triangles.push([n10, n11, n01]);
                }
            }
        }

        Self {
            level,
            nodes,
            triangles,
        }
    }

    pub fn level(&self) -> MeshLevel {
        self.level
    }

    pub fn h(&self) -> f64 {
        self.level.h()
    }

    /// Nodes per side, `2^l + 1`.
    pub fn side(&self) -> usize {
        self.level.cells_per_side() + 1
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * self.side() + i
    }
}

/// Whether cell `(i, j)` is split along its main diagonal.
pub(crate) fn main_diagonal(i: usize, j: usize) -> bool {
    (i + j) % 2 == 0
}

/// Calls `f(ci, cj, weight)` for the coarse nodes whose P1 interpolation gives
/// the value at fine node `(fi, fj)`. Weights sum to one.
pub(crate) fn for_each_parent(fi: usize, fj: usize, mut f: impl FnMut(usize, usize, f64)) {
    match (fi % 2, fj % 2) {
        (0, 0) => f(fi / 2, fj / 2, 1.0),
        (1, 0) => {
            f(fi / 2, fj / 2, 0.5);
            f(fi / 2 + 1, fj / 2, 0.5);
        }
        (0, 1) => {
            f(fi / 2, fj / 2, 0.5);
            f(fi / 2, fj / 2 + 1, 0.5);
        }
        _ => {
            let (ci, cj) = (fi / 2, fj / 2);
            if main_diagonal(ci, cj) {
                f(ci, cj, 0.5);
                f(ci + 1, cj + 1, 0.5);
            } else {
                f(ci + 1, cj, 0.5);
                f(ci, cj + 1, 0.5);
            }
        }
    }
}

/// Per-node strictly positive diffusion coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    values: Vec<f64>,
    provenance: String,
}

impl CoefficientField {
    pub fn new(values: Vec<f64>, provenance: impl Into<String>) -> Result<Self> {
        if let Some((node, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
        {
            return Err(Error::NonPositiveCoefficient { node, value });
        }
        Ok(Self {
            values,
            provenance: provenance.into(),
        })
    }

    pub fn from_fn(
        mesh: &Mesh,
        f: impl Fn([f64; 2]) -> f64,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        Self::new(mesh.nodes().iter().map(|&x| f(x)).collect(), provenance)
    }

    pub fn constant(mesh: &Mesh, value: f64) -> Result<Self> {
        Self::new(vec![value; mesh.nodes().len()], format!("constant {value}"))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }
}
