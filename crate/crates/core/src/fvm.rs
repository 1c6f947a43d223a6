//! Vertex-centered finite volume forms on the Donald dual mesh: the box
//! balance `A_V`, its full-upwind variant, the coupling mass term and the
//! load vector.

use rayon::prelude::*;

use crate::dual::{box_subtriangles, BoundarySegment, DualDecomposition, DualSegment};
use crate::mesh::{ElementGeometry, Mesh, Point};
use crate::model::{BoundaryKind, ProblemSpec};
use crate::quadrature::{gauss, triangle_degree6};
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Gauss points per dual or boundary segment.
pub const SEGMENT_POINTS: usize = 4;

/// `int_T g` over a triangle given by its corners, degree-6 rule.
pub fn integrate_triangle(p: [Point; 3], mut g: impl FnMut(Point) -> f64) -> f64 {
    let area = 0.5 * crate::mesh::cross(p[1] - p[0], p[2] - p[0]).abs();
    triangle_degree6().iter().map(|(l, w)| w * g(p[0] * l[0] + p[1] * l[1] + p[2] * l[2])).sum::<f64>() * area
}

/// `int g ds` over the segment `[a, b]`.
pub fn integrate_segment(a: Point, b: Point, mut g: impl FnMut(Point) -> f64) -> f64 {
    let len = (b - a).norm();
    gauss(SEGMENT_POINTS).iter().map(|(t, w)| w * g(a + (b - a) * t)).sum::<f64>() * len
}

/// Inflow/outflow class of every boundary edge, by the sign of `b . n` at
/// the edge midpoint; indexed like `Mesh::boundary()`.
pub fn boundary_kinds(mesh: &Mesh, spec: &ProblemSpec) -> Vec<BoundaryKind> {
    mesh.boundary()
        .iter()
        .map(|be| {
            let mid = (mesh.vertices()[be.from] + mesh.vertices()[be.to]) * 0.5;
            spec.classify(mid, mesh.outward_normal(be))
        })
        .collect()
}

/// Interface fluxes `int_{tau_ij} b . n_i ds` per primal edge, with `i < j`
/// the edge's nodes, summed over both adjacent triangles.
#[derive(Debug, Clone)]
pub struct UpwindTable {
    pub flux: Vec<f64>,
    pub length: Vec<f64>,
    nodes: Vec<[usize; 2]>,
}

impl UpwindTable {
    pub fn new(mesh: &Mesh, dual: &DualDecomposition, spec: &ProblemSpec) -> Self {
        let mut flux = vec![0.0; mesh.edges().len()];
        let mut length = vec![0.0; mesh.edges().len()];
        for s in &dual.interior {
            flux[s.edge] += integrate_segment(s.start, s.end, |x| spec.b(x).dot(&s.normal));
            length[s.edge] += s.length;
        }
        Self { flux, length, nodes: mesh.edges().iter().map(|e| e.nodes).collect() }
    }

    /// `beta_ij` for the stored orientation `i < j`.
    pub fn beta(&self, edge: usize) -> f64 {
        self.flux[edge] / self.length[edge]
    }

    /// `a_j` if `beta_ij < 0`, else `a_i`.
    pub fn upwind_node(&self, edge: usize) -> usize {
        let [i, j] = self.nodes[edge];
        if self.beta(edge) < 0.0 {
            j
        } else {
            i
        }
    }
}

#[derive(Debug, Clone)]
pub struct FvmSystem {
    pub a: CsrMatrix,
    /// `n x m`, entry `h_E / 2` for the endpoints of boundary edge `E`.
    pub coupling: CsrMatrix,
    pub rhs_f: Vec<f64>,
    pub rhs_t0: Vec<f64>,
    pub upwind: Option<UpwindTable>,
}

impl FvmSystem {
    pub fn assemble(mesh: &Mesh, dual: &DualDecomposition, spec: &ProblemSpec, upwind: bool) -> Self {
        let (a, table) = if upwind {
            let table = UpwindTable::new(mesh, dual, spec);
            (assemble_av_up(mesh, dual, spec, &table), Some(table))
        } else {
            (assemble_av(mesh, dual, spec), None)
        };
        let (rhs_f, rhs_t0) = assemble_load(mesh, dual, spec);
        Self { a, coupling: assemble_coupling(mesh), rhs_f, rhs_t0, upwind: table }
    }

    pub fn rhs(&self) -> Vec<f64> {
        self.rhs_f.iter().zip(&self.rhs_t0).map(|(a, b)| a + b).collect()
    }
}

type Local = Vec<(usize, usize, f64)>;

fn segment_entries(g: &ElementGeometry, tri: &[usize; 3], s: &DualSegment, spec: &ProblemSpec, convection: bool, out: &mut Local) {
    let anchor = g.barycenter;
    let mut coef = [0.0; 3];
    for (t, w) in gauss(SEGMENT_POINTS).iter() {
        let x = s.start + (s.end - s.start) * t;
        let a = spec.diffusion.matrix(x, anchor);
        let lam = g.barycentric(x);
        let bn = if convection { spec.b(x).dot(&s.normal) } else { 0.0 };
        for k in 0..3 {
            coef[k] += w * s.length * (-(a * g.grad_lambda[k]).dot(&s.normal) + bn * lam[k]);
        }
    }
    for k in 0..3 {
        out.push((s.i, tri[k], coef[k]));
        out.push((s.j, tri[k], -coef[k]));
    }
}

fn reaction_entries(g: &ElementGeometry, tri: &[usize; 3], spec: &ProblemSpec, out: &mut Local) {
    let anchor = g.barycenter;
    for k in 0..3 {
        for l in 0..3 {
            let v: f64 = box_subtriangles(g, k)
                .iter()
                .map(|&p| integrate_triangle(p, |x| (spec.reaction)(x, anchor) * g.barycentric(x)[l]))
                .sum();
            if v != 0.0 {
                out.push((tri[k], tri[l], v));
            }
        }
    }
}

/// `int b . n u_h` over an outflow half-edge, for the two edge nodes.
fn outflow_entries(s: &BoundarySegment, spec: &ProblemSpec, out: &mut Local) {
    let mut own = 0.0;
    let mut other = 0.0;
    for (t, w) in gauss(SEGMENT_POINTS).iter() {
        let x = s.start + (s.end - s.start) * t;
        let bn = spec.b(x).dot(&s.normal) * w * s.length;
        own += bn * (1.0 - 0.5 * t);
        other += bn * 0.5 * t;
    }
    out.push((s.node, s.node, own));
    out.push((s.node, s.other, other));
}

fn assemble_form(mesh: &Mesh, dual: &DualDecomposition, spec: &ProblemSpec, central: bool) -> TripletBuilder {
    let n = mesh.n_vertices();
    let locals: Vec<Local> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let g = mesh.geometry(t);
            let tri = &mesh.triangles()[t];
            let mut out = Vec::with_capacity(27);
            for s in dual.segments_of(t) {
                segment_entries(&g, tri, s, spec, central, &mut out);
            }
            reaction_entries(&g, tri, spec, &mut out);
            out
        })
        .collect();
    let mut b = TripletBuilder::with_capacity(n, n, locals.iter().map(Vec::len).sum::<usize>() + 4 * dual.boundary.len());
    for l in locals {
        for (i, j, v) in l {
            b.add(i, j, v);
        }
    }
    let kinds = boundary_kinds(mesh, spec);
    let mut out = Vec::new();
    for s in &dual.boundary {
        if kinds[s.boundary_index] == BoundaryKind::Outflow {
            outflow_entries(s, spec, &mut out);
        }
    }
    for (i, j, v) in out {
        b.add(i, j, v);
    }
    b
}

/// Finite volume form with central convection.
pub fn assemble_av(mesh: &Mesh, dual: &DualDecomposition, spec: &ProblemSpec) -> CsrMatrix {
    assemble_form(mesh, dual, spec, true).build()
}

/// Finite volume form with full upwinding on interior dual interfaces.
pub fn assemble_av_up(mesh: &Mesh, dual: &DualDecomposition, spec: &ProblemSpec, table: &UpwindTable) -> CsrMatrix {
    let mut b = assemble_form(mesh, dual, spec, false);
    for (e, edge) in mesh.edges().iter().enumerate() {
        let [i, j] = edge.nodes;
        let up = table.upwind_node(e);
        b.add(i, up, table.flux[e]);
        b.add(j, up, -table.flux[e]);
    }
    b.build()
}

/// `<phi_h, I_h* v_h>_Gamma`: `h_E / 2` for each endpoint of boundary edge `E`.
pub fn assemble_coupling(mesh: &Mesh) -> CsrMatrix {
    let mut b = TripletBuilder::new(mesh.n_vertices(), mesh.n_boundary_edges());
    for (k, be) in mesh.boundary().iter().enumerate() {
        let h = (mesh.vertices()[be.to] - mesh.vertices()[be.from]).norm();
        b.add(be.from, k, 0.5 * h);
        b.add(be.to, k, 0.5 * h);
    }
    b.build()
}

/// `(int_{V_i} f, int_{dV_i ∩ Gamma} t0)`.
pub fn assemble_load(mesh: &Mesh, dual: &DualDecomposition, spec: &ProblemSpec) -> (Vec<f64>, Vec<f64>) {
    let n = mesh.n_vertices();
    let locals: Vec<[f64; 3]> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let g = mesh.geometry(t);
            let anchor = g.barycenter;
            let mut v = [0.0; 3];
            for (k, vk) in v.iter_mut().enumerate() {
                *vk = box_subtriangles(&g, k).iter().map(|&p| integrate_triangle(p, |x| (spec.source)(x, anchor))).sum();
            }
            v
        })
        .collect();
    let mut rhs_f = vec![0.0; n];
    for (t, v) in locals.iter().enumerate() {
        for k in 0..3 {
            rhs_f[mesh.triangles()[t][k]] += v[k];
        }
    }
    let kinds = boundary_kinds(mesh, spec);
    let mut rhs_t0 = vec![0.0; n];
    for s in &dual.boundary {
        let anchor = mesh.geometry(s.triangle).barycenter;
        let kind = kinds[s.boundary_index];
        rhs_t0[s.node] += integrate_segment(s.start, s.end, |x| (spec.t0)(x, anchor, s.normal, kind));
    }
    (rhs_f, rhs_t0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_initial_mesh, Domain};
    use crate::model::{builtin_problem, Convection, Example};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    #[test]
    fn constants_in_kernel_of_diffusion() {
        let mesh = build_initial_mesh(Domain::LShape, 48).unwrap();
        let dual = DualDecomposition::new(&mesh);
        let spec = builtin_problem(Example::Ex1).unwrap();
        let a = assemble_av(&mesh, &dual, &spec);
        for v in a.mul_vec(&vec![1.0; mesh.n_vertices()]) {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn reaction_sums_to_area() {
        let mesh = build_initial_mesh(Domain::Square, 16).unwrap();
        let dual = DualDecomposition::new(&mesh);
        let mut spec = ProblemSpec::diffusion_only(mesh.clone(), 1.0);
        spec.reaction = Arc::new(|_, _| 1.0);
        let with = assemble_av(&mesh, &dual, &spec);
        spec.reaction = Arc::new(|_, _| 0.0);
        let without = assemble_av(&mesh, &dual, &spec);
        let total: f64 = with.values.iter().sum::<f64>() - without.values.iter().sum::<f64>();
        assert_relative_eq!(total, 0.25, max_relative = 1e-13);
    }

    #[test]
    fn upwind_equals_central_without_convection() {
        let mesh = build_initial_mesh(Domain::Square, 16).unwrap();
        let dual = DualDecomposition::new(&mesh);
        let spec = ProblemSpec::diffusion_only(mesh.clone(), 2.0);
        let table = UpwindTable::new(&mesh, &dual, &spec);
        let a = assemble_av(&mesh, &dual, &spec).to_dense();
        let b = assemble_av_up(&mesh, &dual, &spec, &table).to_dense();
        for (ra, rb) in a.iter().zip(&b) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn outward_convection_uses_own_node() {
        // b = x - center points away from the center node everywhere
        let mesh = build_initial_mesh(Domain::Square, 4).unwrap();
        let dual = DualDecomposition::new(&mesh);
        let mut spec = ProblemSpec::diffusion_only(mesh.clone(), 1.0);
        spec.convection = Convection::affine(Point::new(-0.25, -0.25), nalgebra::Matrix2::identity());
        let table = UpwindTable::new(&mesh, &dual, &spec);
        let center = mesh.vertices().iter().position(|p| (p - Point::new(0.25, 0.25)).norm() < 1e-14).unwrap();
        for (e, edge) in mesh.edges().iter().enumerate() {
            if edge.nodes.contains(&center) {
                assert_eq!(table.upwind_node(e), center);
            }
        }
    }

    #[test]
    fn coupling_and_load() {
        let mesh = build_initial_mesh(Domain::LShape, 300).unwrap();
        let c = assemble_coupling(&mesh);
        let col_sums = c.triplets().fold(vec![0.0; mesh.n_boundary_edges()], |mut acc, (_, j, v)| {
            acc[j] += v;
            acc
        });
        for (k, be) in mesh.boundary().iter().enumerate() {
            assert_relative_eq!(col_sums[k], (mesh.vertices()[be.to] - mesh.vertices()[be.from]).norm(), max_relative = 1e-14);
        }
        let dual = DualDecomposition::new(&mesh);
        let spec = builtin_problem(Example::Ex3).unwrap();
        let (f, t0) = assemble_load(&mesh, &dual, &spec);
        assert_relative_eq!(f.iter().sum::<f64>(), 0.75, max_relative = 1e-12);
        assert!(t0.iter().all(|&v| v == 0.0));
        let mut ones = ProblemSpec::diffusion_only(mesh.clone(), 1.0);
        ones.source = Arc::new(|_, _| 1.0);
        ones.t0 = Arc::new(|_, _, _, _| 1.0);
        let (f, t0) = assemble_load(&mesh, &dual, &ones);
        for (fi, ai) in f.iter().zip(&dual.box_areas) {
            assert_relative_eq!(fi, ai, max_relative = 1e-13);
        }
        assert_relative_eq!(t0.iter().sum::<f64>(), 2.0, max_relative = 1e-13);
    }
}
