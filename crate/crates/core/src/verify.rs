//! True errors against closed-form solutions and identity checks for the
//! assembled discretization.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::bem::{v_quadratic_form, Accuracy, BoundaryMesh};
use crate::dual::box_subtriangles;
use crate::error::{Error, Result};
use crate::estimator::{boundary_positions, jump_at, residual_at};
use crate::fvm::{assemble_av, integrate_segment, integrate_triangle};
use crate::mesh::{Mesh, Point};
use crate::model::{Diffusion, ExactSolution, ProblemSpec};
use crate::quadrature::gauss;
use crate::solver::{DiscreteSolution, Discretization};
use crate::dual::DualDecomposition;

/// Levels of the graded split toward a singular vertex.
pub const SINGULAR_LEVELS: usize = 4;
/// Boundary refinement factor for the `V` norm (three bisections).
pub const VNORM_PARTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub energy: f64,
    pub vnorm: f64,
    /// `energy + vnorm`.
    pub e_h: f64,
}

impl ErrorReport {
    pub fn new(energy: f64, vnorm: f64) -> Self {
        Self { energy, vnorm, e_h: energy + vnorm }
    }

    /// `eta / E_h`.
    pub fn efficiency(&self, eta: f64) -> f64 {
        eta / self.e_h
    }
}

/// Integrate over a triangle whose first vertex is singular: the corner
/// triangle is halved `levels` times, the trapezoids use the degree-6 rule.
fn integrate_graded(p: [Point; 3], levels: usize, g: &mut impl FnMut(Point) -> f64) -> f64 {
    if levels == 0 {
        return integrate_triangle(p, &mut *g);
    }
    let m1 = 0.5 * (p[0] + p[1]);
    let m2 = 0.5 * (p[0] + p[2]);
    integrate_graded([p[0], m1, m2], levels - 1, g) + integrate_triangle([m1, p[1], p[2]], &mut *g) + integrate_triangle([m1, p[2], m2], &mut *g)
}

/// `(||A^1/2 grad(u - u_h)||^2 + ||(1/2 div b + c)^1/2 (u - u_h)||^2)^1/2`.
pub fn energy_error(mesh: &Mesh, spec: &ProblemSpec, u_h: &[f64]) -> Result<f64> {
    let exact = spec.exact.clone().ok_or(Error::NoExactSolution)?;
    let singular = exact.singular_point();
    let sum: f64 = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let g = mesh.geometry(t);
            let tri = mesh.triangles()[t];
            let ul = [u_h[tri[0]], u_h[tri[1]], u_h[tri[2]]];
            let grad_h = g.grad_lambda[0] * ul[0] + g.grad_lambda[1] * ul[1] + g.grad_lambda[2] * ul[2];
            let anchor = g.barycenter;
            let mut f = |x: Point| {
                let l = g.barycentric(x);
                let e = exact.u(x) - (ul[0] * l[0] + ul[1] * l[1] + ul[2] * l[2]);
                let de = exact.grad_u(x) - grad_h;
                de.dot(&(spec.diffusion.matrix(x, anchor) * de)) + spec.coercivity(x, anchor) * e * e
            };
            let corner = singular.and_then(|s| g.vertices.iter().position(|v| (v - s).norm() <= 1e-12));
            match corner {
                Some(k) => integrate_graded([g.vertices[k], g.vertices[(k + 1) % 3], g.vertices[(k + 2) % 3]], SINGULAR_LEVELS, &mut f),
                None => integrate_triangle(g.vertices, f),
            }
        })
        .sum();
    Ok(sum.max(0.0).sqrt())
}

/// `delta = P0(phi) - phi_h` on the boundary split into `parts` pieces per
/// edge, with `phi = du_e/dn`.
pub fn vnorm_defect(bm: &BoundaryMesh, exact: &dyn ExactSolution, phi_h: &[f64], parts: usize) -> (BoundaryMesh, Vec<f64>) {
    let (fine, parent) = bm.subdivide(parts);
    let rule = gauss(8);
    let delta = fine
        .segments()
        .iter()
        .zip(&parent)
        .map(|(s, &k)| rule.integrate(0.0, 1.0, |t| exact.grad_u_e(s.point(t)).dot(&s.normal)) - phi_h[k])
        .collect();
    (fine, delta)
}

/// `||phi - phi_h||_V` through the fine-boundary projection.
pub fn vnorm_error(bm: &BoundaryMesh, spec: &ProblemSpec, phi_h: &[f64]) -> Result<f64> {
    let exact = spec.exact.clone().ok_or(Error::NoExactSolution)?;
    if phi_h.len() != bm.n_edges() {
        return Err(Error::DimensionMismatch(format!("{} densities for {} edges", phi_h.len(), bm.n_edges())));
    }
    let (fine, delta) = vnorm_defect(bm, exact.as_ref(), phi_h, VNORM_PARTS);
    Ok(v_quadratic_form(&fine, &delta, Accuracy::Adaptive).max(0.0).sqrt())
}

pub fn errors(disc: &Discretization, spec: &ProblemSpec, sol: &DiscreteSolution) -> Result<ErrorReport> {
    let (energy, vnorm) = rayon::join(|| energy_error(&disc.mesh, spec, &sol.u), || vnorm_error(&disc.boundary, spec, &sol.phi));
    Ok(ErrorReport::new(energy?, vnorm?))
}

/// Per-node defect of `int_Vi R + sum_E int_{E ∩ Vi} J`.
#[derive(Debug, Clone)]
pub struct ProporthoReport {
    pub defects: Vec<f64>,
    /// `max_i (int_Vi |R| + sum_E int_{E ∩ Vi} |J|)`.
    pub scale: f64,
}

impl ProporthoReport {
    pub fn max_defect(&self) -> f64 {
        self.defects.iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            0.0
        } else {
            self.max_defect() / self.scale
        }
    }
}

/// Galerkin orthogonality of the residuals against box indicators.
pub fn check_proportho(disc: &Discretization, spec: &ProblemSpec, sol: &DiscreteSolution) -> ProporthoReport {
    let mesh = &disc.mesh;
    let n = mesh.n_vertices();
    let positions = boundary_positions(mesh);
    let per_t: Vec<[(f64, f64); 3]> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let g = mesh.geometry(t);
            let tri = mesh.triangles()[t];
            let ul = [sol.u[tri[0]], sol.u[tri[1]], sol.u[tri[2]]];
            let mut out = [(0.0, 0.0); 3];
            for (k, o) in out.iter_mut().enumerate() {
                for p in box_subtriangles(&g, k) {
                    o.0 += integrate_triangle(p, |x| residual_at(&g, spec, ul, x));
                    o.1 += integrate_triangle(p, |x| residual_at(&g, spec, ul, x).abs());
                }
            }
            out
        })
        .collect();
    let mut defects = vec![0.0; n];
    let mut scale = vec![0.0; n];
    for (t, v) in per_t.iter().enumerate() {
        for k in 0..3 {
            let i = mesh.triangles()[t][k];
            defects[i] += v[k].0;
            scale[i] += v[k].1;
        }
    }
    let per_e: Vec<[(f64, f64); 2]> = (0..mesh.edges().len())
        .into_par_iter()
        .map(|e| {
            let nodes = mesh.edges()[e].nodes;
            let mid = 0.5 * (mesh.vertices()[nodes[0]] + mesh.vertices()[nodes[1]]);
            let mut out = [(0.0, 0.0); 2];
            for (o, &v) in out.iter_mut().zip(&nodes) {
                let a = mesh.vertices()[v];
                let j = |x| jump_at(mesh, spec, sol, &disc.kinds, &positions, e, x);
                *o = (integrate_segment(a, mid, j), integrate_segment(a, mid, |x| j(x).abs()));
            }
            out
        })
        .collect();
    for (e, v) in per_e.iter().enumerate() {
        for (k, &i) in mesh.edges()[e].nodes.iter().enumerate() {
            defects[i] += v[k].0;
            scale[i] += v[k].1;
        }
    }
    ProporthoReport { defects, scale: scale.iter().fold(0.0, |m: f64, &s| m.max(s)) }
}

/// P1 finite element stiffness matrix for elementwise constant `alpha`.
pub fn fem_stiffness(mesh: &Mesh, alpha: &[f64]) -> Vec<HashMap<usize, f64>> {
    let mut rows = vec![HashMap::new(); mesh.n_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let g = mesh.geometry(t);
        for k in 0..3 {
            for l in 0..3 {
                *rows[tri[k]].entry(tri[l]).or_insert(0.0) += alpha[t] * g.area * g.grad_lambda[k].dot(&g.grad_lambda[l]);
            }
        }
    }
    rows
}

/// `max |A_V - A_FEM|` entrywise for `A = alpha_T I`, `b = 0`, `c = 0`.
pub fn fem_equivalence_check(mesh: &Mesh, alpha: &[f64]) -> Result<f64> {
    if alpha.len() != mesh.n_triangles() {
        return Err(Error::DimensionMismatch(format!("{} values for {} elements", alpha.len(), mesh.n_triangles())));
    }
    let by_center: HashMap<(u64, u64), f64> = (0..mesh.n_triangles())
        .map(|t| {
            let c = mesh.geometry(t).barycenter;
            ((c.x.to_bits(), c.y.to_bits()), alpha[t])
        })
        .collect();
    let mut spec = ProblemSpec::diffusion_only(mesh.clone(), 1.0);
    spec.diffusion = Diffusion::Scalar(Arc::new(move |_, c: Point| by_center[&(c.x.to_bits(), c.y.to_bits())]));
    let av = assemble_av(mesh, &DualDecomposition::new(mesh), &spec);
    let fem = fem_stiffness(mesh, alpha);
    let mut dev: f64 = 0.0;
    for (i, row) in fem.iter().enumerate() {
        for (&j, &v) in row {
            dev = dev.max((av.get(i, j) - v).abs());
        }
        for (j, v) in av.row(i) {
            if !row.contains_key(&j) {
                dev = dev.max(v.abs());
            }
        }
    }
    Ok(dev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bem::v_self_entry;
    use crate::mesh::{build_initial_mesh, Domain};
    use approx::assert_relative_eq;

    struct Quadratic;

    impl ExactSolution for Quadratic {
        fn u(&self, x: Point) -> f64 {
            x.x * x.x
        }
        fn grad_u(&self, x: Point) -> Point {
            Point::new(2.0 * x.x, 0.0)
        }
        fn hessian_u(&self, _: Point) -> nalgebra::Matrix2<f64> {
            nalgebra::Matrix2::new(2.0, 0.0, 0.0, 0.0)
        }
        fn u_e(&self, _: Point) -> f64 {
            0.0
        }
        fn grad_u_e(&self, _: Point) -> Point {
            Point::zeros()
        }
    }

    #[test]
    fn monomial_energy() {
        let mesh = Mesh::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)], vec![[0, 1, 2]]).unwrap();
        let mut spec = ProblemSpec::diffusion_only(mesh.clone(), 1.0);
        spec.exact = Some(Arc::new(Quadratic));
        let e = energy_error(&mesh, &spec, &[0.0; 3]).unwrap();
        assert_relative_eq!(e, (4.0f64 / 12.0).sqrt(), max_relative = 1e-13);
    }

    #[test]
    fn graded_rule_is_exact_for_polynomials() {
        let p = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        let v = integrate_graded(p, 4, &mut |x: Point| x.x * x.x * x.y);
        assert_relative_eq!(v, 2.0 / 120.0, max_relative = 1e-13);
    }

    #[test]
    fn single_fine_edge_vnorm() {
        let bm = BoundaryMesh::from_polygon(vec![Point::new(0.0, 0.0), Point::new(0.2, 0.0), Point::new(0.2, 0.2), Point::new(0.0, 0.2)]).unwrap();
        let mut delta = vec![0.0; 4];
        delta[2] = 1.0;
        let v = v_quadratic_form(&bm, &delta, Accuracy::Adaptive).sqrt();
        assert_relative_eq!(v, v_self_entry(0.2).sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn fvm_matches_fem_stiffness() {
        let mesh = build_initial_mesh(Domain::LShape, 48).unwrap();
        let alpha: Vec<f64> = (0..mesh.n_triangles()).map(|t| 1.0 + (t % 5) as f64).collect();
        assert!(fem_equivalence_check(&mesh, &alpha).unwrap() <= 1e-13);
    }
}
