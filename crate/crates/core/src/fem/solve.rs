use std::io::Write;

use crate::error::{invalid, Error, Result};

use super::linalg::{pcg, BandCholesky, Multigrid, StencilMatrix};
use super::mesh::{for_each_parent, CoefficientField, Mesh, MeshLevel};

/// Highest level solved with the banded direct factorization.
pub const DIRECT_SOLVE_MAX_LEVEL: u32 = 5;

/// Relative residual target of the iterative path.
pub const CG_TOLERANCE: f64 = 1e-12;

/// Dirichlet values on the faces `x1 = 0` and `x1 = 1`; the faces `x2 = 0`
/// and `x2 = 1` carry a homogeneous Neumann condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySpec {
    pub left: f64,
    pub right: f64,
}

impl Default for BoundarySpec {
    fn default() -> Self {
        Self {
            left: 0.0,
            right: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverChoice {
    /// Direct up to [`DIRECT_SOLVE_MAX_LEVEL`], multigrid-preconditioned CG above.
    Auto,
    Direct,
    Iterative,
}

/// Nodal P1 solution on a level-`l` mesh, row-major node order.
#[derive(Debug, Clone, PartialEq)]
pub struct FemSolution {
    level: MeshLevel,
    values: Vec<f64>,
    dofs: usize,
}

impl FemSolution {
    pub fn new(level: MeshLevel, values: Vec<f64>) -> Result<Self> {
        if values.len() != level.node_count() {
            return Err(Error::DimensionMismatch {
                expected: level.node_count(),
                got: values.len(),
            });
        }
        let n = level.cells_per_side();
        Ok(Self {
            level,
            values,
            dofs: (n - 1) * (n + 1),
        })
    }

    pub fn level(&self) -> MeshLevel {
        self.level
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Number of free (non-Dirichlet) unknowns of the solve.
    pub fn dofs(&self) -> usize {
        self.dofs
    }

    /// P1 interpolation onto the next finer mesh.
    pub fn refine(&self) -> Result<Self> {
        let fine = MeshLevel::new(self.level.get() + 1)?;
        let (cs, fs) = (self.level.cells_per_side() + 1, fine.cells_per_side() + 1);
        let mut values = vec![0.0; fine.node_count()];
        for fj in 0..fs {
            for fi in 0..fs {
                let mut v = 0.0;
                for_each_parent(fi, fj, |ci, cj, w| v += w * self.values[cj * cs + ci]);
                values[fj * fs + fi] = v;
            }
        }
        Self::new(fine, values)
    }

    /// Repeated P1 prolongation to `level` (no-op when already there).
    pub fn prolong_to(&self, level: MeshLevel) -> Result<Self> {
        if level < self.level {
            return Err(invalid(format!(
                "cannot prolong level {} to coarser level {}",
                self.level.get(),
                level.get()
            )));
        }
        let mut u = self.clone();
        while u.level < level {
            u = u.refine()?;
        }
        Ok(u)
    }

    /// Writes `x,y,value` rows in node order.
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        let mesh = Mesh::new(self.level);
        writeln!(out, "x,y,value")?;
        for (x, v) in mesh.nodes().iter().zip(&self.values) {
            writeln!(out, "{},{},{}", x[0], x[1], v)?;
        }
        Ok(())
    }
}

/// Local P1 stiffness for unit coefficient: `area * grad(l_a) . grad(l_b)`.
fn local_stiffness(p: [[f64; 2]; 3]) -> ([[f64; 3]; 3], f64) {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let area = 0.5 * det;
    let mut g = [[0.0; 2]; 3];
    for a in 0..3 {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        g[a] = [(p[b][1] - p[c][1]) / det, (p[c][0] - p[b][0]) / det];
    }
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
        }
    }
    (k, area)
}

/// Assembled operator and right-hand side on the free nodes.
struct System {
    matrix: StencilMatrix,
    rhs: Vec<f64>,
}

/// Galerkin system for `div(K grad u) = f`. The weak form reads
/// `a(u, v) = -(f, v)`, so the load enters the right-hand side negated.
fn assemble(
    mesh: &Mesh,
    k_nodal: &[f64],
    source: Option<&dyn Fn([f64; 2]) -> f64>,
    bc: BoundarySpec,
) -> System {
    let n = mesh.level().cells_per_side();
    let side = n + 1;
    let mut matrix = StencilMatrix::zeros(n);
    let mut rhs = vec![0.0; matrix.dim()];
    let nodes = mesh.nodes();

    for tri in mesh.triangles() {
        let p = tri.map(|v| nodes[v]);
        let (kl, area) = local_stiffness(p);
        let k_elem = (k_nodal[tri[0]] + k_nodal[tri[1]] + k_nodal[tri[2]]) / 3.0;

        let mut load = [0.0; 3];
        if let Some(f) = source {
            let mid = |a: usize, b: usize| [(p[a][0] + p[b][0]) * 0.5, (p[a][1] + p[b][1]) * 0.5];
            let fm = [f(mid(1, 2)), f(mid(2, 0)), f(mid(0, 1))];
            // edge-midpoint rule; basis a is 1/2 on its two adjacent edges.
            load = [
                area / 6.0 * (fm[1] + fm[2]),
                area / 6.0 * (fm[2] + fm[0]),
                area / 6.0 * (fm[0] + fm[1]),
            ];
        }

        for a in 0..3 {
            let (ia, ja) = (tri[a] % side, tri[a] / side);
            if ia == 0 || ia == n {
                continue;
            }
            let row = ja * (n - 1) + (ia - 1);
            rhs[row] -= load[a];
            for b in 0..3 {
                let (ib, jb) = (tri[b] % side, tri[b] / side);
                let v = k_elem * kl[a][b];
                if ib == 0 {
                    rhs[row] -= v * bc.left;
                } else if ib == n {
                    rhs[row] -= v * bc.right;
                } else {
                    matrix.add(ia, ja, ib as isize - ia as isize, jb as isize - ja as isize, v);
                }
            }
        }
    }
    System { matrix, rhs }
}

/// Nodal values of `k` on the next coarser mesh (nested-node injection).
fn inject(k: &[f64], fine_side: usize) -> Vec<f64> {
    let cs = fine_side / 2 + 1;
    let mut out = Vec::with_capacity(cs * cs);
    for cj in 0..cs {
        for ci in 0..cs {
            out.push(k[2 * cj * fine_side + 2 * ci]);
        }
    }
    out
}

fn check_sizes(mesh: &Mesh, k: &CoefficientField) -> Result<()> {
    if k.values().len() != mesh.nodes().len() {
        return Err(Error::DimensionMismatch {
            expected: mesh.nodes().len(),
            got: k.values().len(),
        });
    }
    Ok(())
}

/// Solves `div(K grad u) = f` with the boundary data of [`BoundarySpec`].
pub fn assemble_and_solve(
    mesh: &Mesh,
    k: &CoefficientField,
    f: &dyn Fn([f64; 2]) -> f64,
    bc: BoundarySpec,
) -> Result<FemSolution> {
    solve_with(mesh, k, f, bc, SolverChoice::Auto)
}

pub fn solve_with(
    mesh: &Mesh,
    k: &CoefficientField,
    f: &dyn Fn([f64; 2]) -> f64,
    bc: BoundarySpec,
    choice: SolverChoice,
) -> Result<FemSolution> {
    check_sizes(mesh, k)?;
    let level = mesh.level();
    let System { matrix, rhs } = assemble(mesh, k.values(), Some(f), bc);

    let direct = match choice {
        SolverChoice::Auto => level.get() <= DIRECT_SOLVE_MAX_LEVEL,
        SolverChoice::Direct => true,
        SolverChoice::Iterative => false,
    };
    let free = if direct || level.get() == MeshLevel::MIN {
        let chol = BandCholesky::factor(&matrix)?;
        let mut x = rhs;
        chol.solve_in_place(&mut x);
        x
    } else {
        let mg = build_multigrid(mesh, k.values(), matrix.clone(), bc)?;
        pcg(&matrix, &mg, &rhs, CG_TOLERANCE, 500)?.0
    };

    let n = level.cells_per_side();
    let side = n + 1;
    let mut values = vec![0.0; side * side];
    for j in 0..side {
        values[j * side] = bc.left;
        values[j * side + n] = bc.right;
        values[j * side + 1..j * side + n].copy_from_slice(&free[j * (n - 1)..(j + 1) * (n - 1)]);
    }
    FemSolution::new(level, values)
}

fn build_multigrid(
    mesh: &Mesh,
    k_fine: &[f64],
    fine: StencilMatrix,
    bc: BoundarySpec,
) -> Result<Multigrid> {
    const COARSEST: u32 = 2;
    let mut ops = vec![fine];
    let mut k = k_fine.to_vec();
    let mut level = mesh.level();
    while level.get() > COARSEST {
        k = inject(&k, level.cells_per_side() + 1);
        level = level.coarser().expect("level above coarsest");
        let coarse = Mesh::new(level);
        ops.push(assemble(&coarse, &k, None, bc).matrix);
    }
    Multigrid::new(ops, 2)
}

/// Whether the eliminated stiffness matrix for `k` is symmetric and admits a
/// Cholesky factorization.
pub fn stiffness_is_spd(mesh: &Mesh, k: &CoefficientField) -> Result<bool> {
    check_sizes(mesh, k)?;
    let sys = assemble(mesh, k.values(), None, BoundarySpec::default());
    Ok(sys.matrix.is_symmetric(1e-14) && BandCholesky::factor(&sys.matrix).is_ok())
}
