//! The coupled block system and its direct solution.
//!
//! Unknowns are ordered `[u (mesh nodes), phi (boundary edges), a_inf?]`.
//! Block rows: `[A_V, -C] [u; phi] = f + t0` and
//! `[(M_half - K) R, V] [u; phi] = (M_half - K) u0`, where `R` restricts
//! nodal values to the boundary nodes.

use std::fmt::Write as _;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Par};

use crate::bem::{BoundaryMesh, LayerMatrices};
use crate::dual::DualDecomposition;
use crate::error::{Error, Result};
use crate::fvm::{boundary_kinds, FvmSystem};
use crate::mesh::Mesh;
use crate::model::{BoundaryKind, ProblemSpec, Radiation};
use crate::sparse::{CsrMatrix, TripletBuilder};

#[derive(Debug, Clone)]
pub struct CoupledSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub n_nodes: usize,
    pub n_edges: usize,
    pub far_field: bool,
    pub upwind: bool,
}

impl CoupledSystem {
    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    /// Rows of the boundary integral equation.
    pub fn bem_rows(&self) -> std::ops::Range<usize> {
        self.n_nodes..self.n_nodes + self.n_edges
    }
}

fn check_dims(fvm: &FvmSystem, layers: &LayerMatrices, bm: &BoundaryMesh) -> Result<(usize, usize)> {
    let n = fvm.a.n_rows;
    let m = bm.n_edges();
    if fvm.a.n_cols != n || fvm.coupling.n_rows != n || fvm.rhs_f.len() != n || fvm.rhs_t0.len() != n {
        return Err(Error::DimensionMismatch("finite volume blocks disagree on the node count".into()));
    }
    if fvm.coupling.n_cols != m || layers.v.nrows() != m || layers.k.shape() != (m, m) || layers.m_half.shape() != (m, m) {
        return Err(Error::DimensionMismatch(format!(
            "coupling has {} columns, V is {}x{}, K is {}x{}, boundary has {m} edges",
            fvm.coupling.n_cols,
            layers.v.nrows(),
            layers.v.ncols(),
            layers.k.nrows(),
            layers.k.ncols()
        )));
    }
    if bm.mesh_vertex.iter().any(|&v| v >= n) {
        return Err(Error::DimensionMismatch("boundary node outside the mesh".into()));
    }
    Ok((n, m))
}

fn assemble_blocks(fvm: &FvmSystem, layers: &LayerMatrices, bm: &BoundaryMesh, spec: &ProblemSpec, extra: usize) -> Result<(TripletBuilder, Vec<f64>, usize, usize)> {
    let (n, m) = check_dims(fvm, layers, bm)?;
    let dim = n + m + extra;
    let mut b = TripletBuilder::with_capacity(dim, dim, fvm.a.nnz() + fvm.coupling.nnz() + 2 * m * m + 2 * m);
    for (i, j, v) in fvm.a.triplets() {
        b.add(i, j, v);
    }
    for (i, k, v) in fvm.coupling.triplets() {
        b.add(i, n + k, -v);
    }
    let hmk = layers.half_minus_k();
    for e in 0..m {
        for a in 0..m {
            let v = hmk[(e, a)];
            if v != 0.0 {
                b.add(n + e, bm.mesh_vertex[a], v);
            }
        }
        for f in 0..m {
            b.add(n + e, n + f, layers.v[(e, f)]);
        }
    }
    let mut rhs = fvm.rhs();
    let u0: Vec<f64> = bm.points.iter().map(|&p| (spec.u0)(p)).collect();
    for e in 0..m {
        rhs.push((0..m).map(|a| hmk[(e, a)] * u0[a]).sum());
    }
    rhs.resize(dim, 0.0);
    Ok((b, rhs, n, m))
}

/// Block system for the log-growth radiation condition.
pub fn assemble_system(fvm: &FvmSystem, layers: &LayerMatrices, bm: &BoundaryMesh, spec: &ProblemSpec) -> Result<CoupledSystem> {
    let (b, rhs, n, m) = assemble_blocks(fvm, layers, bm, spec, 0)?;
    Ok(CoupledSystem { matrix: b.build(), rhs, n_nodes: n, n_edges: m, far_field: false, upwind: fvm.upwind.is_some() })
}

/// Block system with the far-field constant `a_inf` as an extra unknown and
/// the side condition `sum_E h_E phi_E = 0`.
///
/// With the representation `u_e = DL[u_e] - SL[phi] + a_inf` the boundary
/// rows read `(1/2 - K) u + V phi - a_inf = (1/2 - K) u0`, so `a_inf` enters
/// with coefficient `-h_E` and equals the far-field value of `u_e`.
pub fn assemble_system_scaled(fvm: &FvmSystem, layers: &LayerMatrices, bm: &BoundaryMesh, spec: &ProblemSpec) -> Result<CoupledSystem> {
    if spec.radiation != Radiation::FarField {
        return Err(Error::RadiationMismatch);
    }
    let (mut b, rhs, n, m) = assemble_blocks(fvm, layers, bm, spec, 1)?;
    let last = n + m;
    for e in 0..m {
        let h = bm.segment(e).length;
        b.add(n + e, last, -h);
        b.add(last, n + e, h);
    }
    Ok(CoupledSystem { matrix: b.build(), rhs, n_nodes: n, n_edges: m, far_field: true, upwind: fvm.upwind.is_some() })
}

/// Discrete solution: nodal `u_h`, edgewise `phi_h`, optional `a_inf`.
#[derive(Debug, Clone)]
pub struct DiscreteSolution {
    pub u: Vec<f64>,
    pub phi: Vec<f64>,
    pub a_inf: Option<f64>,
    /// `max_i |r_i| / max_i (sum_j |a_ij x_j| + |b_i|)` over all rows.
    pub residual: f64,
    /// The same measure over the boundary integral rows only.
    pub bem_residual: f64,
    pub upwind: bool,
}

/// Scaled residual `max |Ax - b| / max (|A||x| + |b|)` over `rows`.
pub fn scaled_residual(a: &CsrMatrix, x: &[f64], b: &[f64], rows: std::ops::Range<usize>) -> f64 {
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for i in rows {
        let mut r = -b[i];
        let mut s = b[i].abs();
        for (j, v) in a.row(i) {
            r += v * x[j];
            s += (v * x[j]).abs();
        }
        num = num.max(r.abs());
        den = den.max(s);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn to_faer(a: &CsrMatrix) -> Result<SparseColMat<usize, f64>> {
    let trip: Vec<Triplet<usize, usize, f64>> = a.triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
    SparseColMat::try_new_from_triplets(a.n_rows, a.n_cols, &trip).map_err(|e| Error::Singular(format!("{e:?}")))
}

/// Sparse LU solve with up to eight steps of iterative refinement.
pub fn solve(system: &CoupledSystem) -> Result<DiscreteSolution> {
    faer::set_global_parallelism(Par::Seq);
    let dim = system.dim();
    let a = to_faer(&system.matrix)?;
    let lu = a.sp_lu().map_err(|e| Error::Singular(format!("{e:?}")))?;
    let mut x = Mat::<f64>::from_fn(dim, 1, |i, _| system.rhs[i]);
    lu.solve_in_place(x.as_mut());
    let mut xv: Vec<f64> = (0..dim).map(|i| x[(i, 0)]).collect();
    if xv.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("factorization produced non-finite values".into()));
    }
    let all = 0..dim;
    for _ in 0..8 {
        let r = scaled_residual(&system.matrix, &xv, &system.rhs, all.clone());
        if r <= 1e-14 && scaled_residual(&system.matrix, &xv, &system.rhs, system.bem_rows()) <= 1e-13 {
            break;
        }
        let ax = system.matrix.mul_vec(&xv);
        let mut r = Mat::<f64>::from_fn(dim, 1, |i, _| system.rhs[i] - ax[i]);
        lu.solve_in_place(r.as_mut());
        for (i, v) in xv.iter_mut().enumerate() {
            *v += r[(i, 0)];
        }
    }
    let residual = scaled_residual(&system.matrix, &xv, &system.rhs, all);
    if !residual.is_finite() || residual > 1e-6 {
        return Err(Error::Singular(format!("scaled residual {residual:e} after refinement")));
    }
    let bem_residual = scaled_residual(&system.matrix, &xv, &system.rhs, system.bem_rows());
    let (n, m) = (system.n_nodes, system.n_edges);
    Ok(DiscreteSolution {
        u: xv[..n].to_vec(),
        phi: xv[n..n + m].to_vec(),
        a_inf: system.far_field.then(|| xv[n + m]),
        residual,
        bem_residual,
        upwind: system.upwind,
    })
}

impl DiscreteSolution {
    /// Plain-text dump: `u <n>` and the nodal values, `phi <m>` and the edge
    /// values, then `a_inf <value>` when present.
    pub fn to_dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "u {}", self.u.len());
        for v in &self.u {
            let _ = writeln!(s, "{v:e}");
        }
        let _ = writeln!(s, "phi {}", self.phi.len());
        for v in &self.phi {
            let _ = writeln!(s, "{v:e}");
        }
        if let Some(a) = self.a_inf {
            let _ = writeln!(s, "a_inf {a:e}");
        }
        s
    }

    /// `u0 - u_h` at the boundary nodes.
    pub fn boundary_defect(&self, bm: &BoundaryMesh, spec: &ProblemSpec) -> Vec<f64> {
        bm.points.iter().zip(&bm.mesh_vertex).map(|(&p, &v)| (spec.u0)(p) - self.u[v]).collect()
    }

    /// `sum_E h_E phi_E`.
    pub fn phi_mean(&self, bm: &BoundaryMesh) -> f64 {
        self.phi.iter().zip(bm.segments()).map(|(p, s)| p * s.length).sum()
    }
}

/// Everything assembled on one mesh.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Mesh,
    pub dual: DualDecomposition,
    pub boundary: BoundaryMesh,
    pub layers: LayerMatrices,
    pub fvm: FvmSystem,
    pub kinds: Vec<BoundaryKind>,
}

impl Discretization {
    pub fn new(mesh: Mesh, spec: &ProblemSpec, upwind: bool) -> Result<Self> {
        let dual = DualDecomposition::new(&mesh);
        let boundary = BoundaryMesh::from_mesh(&mesh)?;
        let (layers, fvm) = rayon::join(|| LayerMatrices::assemble(&boundary), || FvmSystem::assemble(&mesh, &dual, spec, upwind));
        let kinds = boundary_kinds(&mesh, spec);
        Ok(Self { mesh, dual, boundary, layers, fvm, kinds })
    }

    pub fn system(&self, spec: &ProblemSpec) -> Result<CoupledSystem> {
        match spec.radiation {
            Radiation::LogGrowth => assemble_system(&self.fvm, &self.layers, &self.boundary, spec),
            Radiation::FarField => assemble_system_scaled(&self.fvm, &self.layers, &self.boundary, spec),
        }
    }

    pub fn solve(&self, spec: &ProblemSpec) -> Result<DiscreteSolution> {
        solve(&self.system(spec)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_initial_mesh, Domain};
    use crate::model::{builtin_problem, Example};

    #[test]
    fn dimensions() {
        let spec = builtin_problem(Example::Ex3).unwrap();
        let d = Discretization::new(build_initial_mesh(Domain::LShape, 48).unwrap(), &spec, true).unwrap();
        let s = d.system(&spec).unwrap();
        assert_eq!(s.dim(), 33 + 16 + 1);
        assert_eq!(*s.rhs.last().unwrap(), 0.0);
        let plain = assemble_system(&d.fvm, &d.layers, &d.boundary, &spec).unwrap();
        assert_eq!(plain.dim(), 33 + 16);
        let ex1 = builtin_problem(Example::Ex1).unwrap();
        assert!(matches!(assemble_system_scaled(&d.fvm, &d.layers, &d.boundary, &ex1), Err(Error::RadiationMismatch)));
    }

    #[test]
    fn scaled_variant_enforces_constraint() {
        let spec = builtin_problem(Example::Ex3).unwrap();
        let d = Discretization::new(build_initial_mesh(Domain::LShape, 48).unwrap(), &spec, true).unwrap();
        let sol = d.solve(&spec).unwrap();
        assert!(sol.phi_mean(&d.boundary).abs() < 1e-10);
        assert!(sol.a_inf.is_some());
        assert!(sol.residual < 1e-10 && sol.bem_residual < 1e-10);
    }

    #[test]
    fn dump_format() {
        let sol = DiscreteSolution { u: vec![1.0, 2.0], phi: vec![0.5], a_inf: Some(3.0), residual: 0.0, bem_residual: 0.0, upwind: false };
        let d = sol.to_dump();
        assert!(d.starts_with("u 2\n"));
        assert!(d.contains("phi 1\n"));
        assert!(d.ends_with("a_inf 3e0\n"));
    }
}
