//! Galerkin boundary elements for the 2D Laplace single and double layer
//! operators on a closed polygon, with fundamental solution
//! `G(z) = -log|z| / (2 pi)`.
//!
//! Inner integrals over a straight segment are evaluated in closed form; outer
//! integrals use Gauss rules, graded toward a shared vertex for adjacent
//! segments and subdivided for nearby disjoint ones.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::quadrature::{gauss, graded_toward_zero};

#[derive(Debug, Clone, Copy)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
    pub length: f64,
    pub tangent: Point,
    /// Outward normal for a counterclockwise polygon.
    pub normal: Point,
}

impl Segment {
    pub fn new(a: Point, b: Point) -> Self {
        let d = b - a;
        let length = d.norm();
        let tangent = d / length;
        Self { a, b, length, tangent, normal: Point::new(tangent.y, -tangent.x) }
    }

    pub fn point(&self, t: f64) -> Point {
        self.a + (self.b - self.a) * t
    }

    pub fn midpoint(&self) -> Point {
        (self.a + self.b) * 0.5
    }

    /// `(p, s)` with `y(t) - x = (p + t) tangent + s normal`.
    fn local(&self, x: Point) -> (f64, f64) {
        let d = self.a - x;
        (d.dot(&self.tangent), d.dot(&self.normal))
    }

    pub fn distance(&self, x: Point) -> f64 {
        let t = ((x - self.a).dot(&self.tangent)).clamp(0.0, self.length);
        (self.a + self.tangent * t - x).norm()
    }
}

/// `int_0^h log|(p + t) tangent + s normal| dt`, twice the antiderivative
/// difference of `u log(u^2 + s^2) - 2u + 2s atan(u/s)`, halved.
fn log_integral(p: f64, s: f64, h: f64) -> f64 {
    let f = |u: f64| {
        let r2 = u * u + s * s;
        let log_part = if r2 == 0.0 { 0.0 } else { u * r2.ln() };
        let atan_part = if s == 0.0 { 0.0 } else { 2.0 * s * (u / s).atan() };
        log_part - 2.0 * u + atan_part
    };
    0.5 * (f(p + h) - f(p))
}

/// Single layer potential of a unit density on `seg` at `x`.
pub fn single_layer(seg: &Segment, x: Point) -> f64 {
    let (p, s) = seg.local(x);
    -log_integral(p, s, seg.length) / (2.0 * PI)
}

fn single_layer_on_line(seg: &Segment, x: Point) -> f64 {
    let (p, _) = seg.local(x);
    -log_integral(p, 0.0, seg.length) / (2.0 * PI)
}

/// Double layer potentials at `x` of the two hat functions on `seg`
/// (start node, end node).
pub fn double_layer_hats(seg: &Segment, x: Point) -> (f64, f64) {
    let (p, s) = seg.local(x);
    if s == 0.0 {
        return (0.0, 0.0);
    }
    let h = seg.length;
    let i0 = (s * h).atan2(p * (p + h) + s * s);
    let i1 = 0.5 * s * (((p + h) * (p + h) + s * s) / (p * p + s * s)).ln() - p * i0;
    (-(i0 - i1 / h) / (2.0 * PI), -(i1 / h) / (2.0 * PI))
}

/// Closed polygonal boundary, nodes in counterclockwise cycle order; edge `k`
/// joins node `k` and node `k + 1 (mod m)`.
#[derive(Debug, Clone)]
pub struct BoundaryMesh {
    pub points: Vec<Point>,
    /// Mesh vertex of every node.
    pub mesh_vertex: Vec<usize>,
    segments: Vec<Segment>,
}

impl BoundaryMesh {
    pub fn from_mesh(mesh: &Mesh) -> Result<Self> {
        let nodes: Vec<usize> = mesh.boundary().iter().map(|b| b.from).collect();
        let points = nodes.iter().map(|&v| mesh.vertices()[v]).collect();
        Self::with_vertices(points, nodes)
    }

    pub fn from_polygon(points: Vec<Point>) -> Result<Self> {
        let ids = (0..points.len()).collect();
        Self::with_vertices(points, ids)
    }

    fn with_vertices(points: Vec<Point>, mesh_vertex: Vec<usize>) -> Result<Self> {
        let m = points.len();
        if m < 3 {
            return Err(Error::InvalidMesh("a closed boundary needs at least three edges".into()));
        }
        let mut segments = Vec::with_capacity(m);
        for k in 0..m {
            let (a, b) = (points[k], points[(k + 1) % m]);
            if (b - a).norm() == 0.0 {
                return Err(Error::DegenerateEdge(k));
            }
            segments.push(Segment::new(a, b));
        }
        Ok(Self { points, mesh_vertex, segments })
    }

    pub fn n_edges(&self) -> usize {
        self.segments.len()
    }

    pub fn segment(&self, k: usize) -> &Segment {
        &self.segments[k]
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.length).collect()
    }

    /// Nodes of edge `k`.
    pub fn edge_nodes(&self, k: usize) -> [usize; 2] {
        [k, (k + 1) % self.n_edges()]
    }

    /// Split every edge into `parts` equal pieces; returns the fine mesh and
    /// the coarse edge of every fine edge.
    pub fn subdivide(&self, parts: usize) -> (BoundaryMesh, Vec<usize>) {
        let mut pts = Vec::with_capacity(self.n_edges() * parts);
        let mut parent = Vec::with_capacity(self.n_edges() * parts);
        for (k, s) in self.segments.iter().enumerate() {
            for j in 0..parts {
                pts.push(s.point(j as f64 / parts as f64));
                parent.push(k);
            }
        }
        let fine = BoundaryMesh::from_polygon(pts).expect("subdivision of a valid boundary is valid");
        (fine, parent)
    }

    fn relation(&self, i: usize, j: usize) -> Relation {
        let m = self.n_edges();
        if i == j {
            Relation::Same
        } else if (i + 1) % m == j {
            // end of i is the start of j
            Relation::SharedVertex { outer_at_end: true }
        } else if (j + 1) % m == i {
            Relation::SharedVertex { outer_at_end: false }
        } else {
            Relation::Disjoint
        }
    }

    /// Single layer potential of a piecewise constant density.
    pub fn single_layer_potential(&self, phi: &[f64], x: Point) -> f64 {
        self.segments.iter().zip(phi).map(|(s, &p)| p * single_layer(s, x)).sum()
    }

    /// Double layer potential of a continuous piecewise linear density.
    pub fn double_layer_potential(&self, g: &[f64], x: Point) -> f64 {
        self.double_layer_potential_skip(g, x, None)
    }

    fn double_layer_potential_skip(&self, g: &[f64], x: Point, skip: Option<usize>) -> f64 {
        let mut v = 0.0;
        for (k, s) in self.segments.iter().enumerate() {
            if Some(k) == skip {
                continue;
            }
            let [a, b] = self.edge_nodes(k);
            let (da, db) = double_layer_hats(s, x);
            v += g[a] * da + g[b] * db;
        }
        v
    }

    /// Even-odd point-in-polygon test; points within `1e-12` of the
    /// boundary count as inside.
    pub fn contains_closed(&self, x: Point) -> bool {
        if self.segments.iter().any(|s| s.distance(x) <= 1e-12) {
            return true;
        }
        let mut inside = false;
        for s in &self.segments {
            let (a, b) = (s.a, s.b);
            if (a.y > x.y) != (b.y > x.y) {
                let xc = a.x + (x.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if x.x < xc {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

#[derive(Debug, Clone, Copy)]
enum Relation {
    Same,
    SharedVertex { outer_at_end: bool },
    Disjoint,
}

/// Quadrature effort for disjoint pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Accuracy {
    /// 16-point Gauss, subdivided near the other segment.
    Full,
    /// Fewer points for well-separated pairs.
    Adaptive,
}

fn outer_integral(outer: &Segment, other: &Segment, rel: Relation, acc: Accuracy, mut g: impl FnMut(Point) -> f64) -> f64 {
    let h = outer.length;
    match rel {
        Relation::Same => unreachable!("self pairs are handled in closed form"),
        Relation::SharedVertex { outer_at_end } => {
            let (p, q) = if outer_at_end { (outer.b, outer.a) } else { (outer.a, outer.b) };
            h * graded_toward_zero(|t| g(p + (q - p) * t))
        }
        Relation::Disjoint => {
            let dist = other.distance(outer.a).min(other.distance(outer.b)).min(outer.distance(other.a)).min(outer.distance(other.b));
            let scale = h.max(other.length);
            let (order, pieces) = match acc {
                Accuracy::Adaptive if dist > 6.0 * scale => (3, 1),
                Accuracy::Adaptive if dist > 2.0 * scale => (6, 1),
                _ => (16, ((2.0 * h / dist).ceil() as usize).clamp(1, 64)),
            };
            let rule = gauss(order);
            let mut total = 0.0;
            for k in 0..pieces {
                let (t0, t1) = (k as f64 / pieces as f64, (k + 1) as f64 / pieces as f64);
                total += rule.integrate(t0, t1, |t| g(outer.point(t)));
            }
            total * h
        }
    }
}

/// `(h^2 / 2 pi)(3/2 - ln h)`.
pub fn v_self_entry(h: f64) -> f64 {
    h * h / (2.0 * PI) * (1.5 - h.ln())
}

fn v_entry(bm: &BoundaryMesh, i: usize, j: usize, acc: Accuracy) -> f64 {
    let (si, sj) = (bm.segment(i), bm.segment(j));
    match bm.relation(i, j) {
        Relation::Same => v_self_entry(si.length),
        rel => outer_integral(si, sj, rel, acc, |x| single_layer(sj, x)),
    }
}

/// Galerkin single layer matrix `<V chi_j, chi_i>` for piecewise constants.
pub fn assemble_v(bm: &BoundaryMesh) -> DMatrix<f64> {
    assemble_v_with(bm, Accuracy::Full)
}

pub fn assemble_v_with(bm: &BoundaryMesh, acc: Accuracy) -> DMatrix<f64> {
    let m = bm.n_edges();
    let rows: Vec<Vec<f64>> = (0..m).into_par_iter().map(|i| (i..m).map(|j| v_entry(bm, i, j, acc)).collect()).collect();
    let mut v = DMatrix::zeros(m, m);
    for (i, row) in rows.iter().enumerate() {
        for (k, &val) in row.iter().enumerate() {
            v[(i, i + k)] = val;
            v[(i + k, i)] = val;
        }
    }
    v
}

/// `delta^T V delta` without storing `V`.
pub fn v_quadratic_form(bm: &BoundaryMesh, delta: &[f64], acc: Accuracy) -> f64 {
    let m = bm.n_edges();
    let rows: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| {
            if delta[i] == 0.0 {
                return 0.0;
            }
            let off: f64 = (i + 1..m).filter(|&j| delta[j] != 0.0).map(|j| v_entry(bm, i, j, acc) * delta[j]).sum();
            delta[i] * (v_entry(bm, i, i, acc) * delta[i] + 2.0 * off)
        })
        .collect();
    rows.iter().sum()
}

/// Galerkin double layer matrix `<chi_E, K eta_a>`, rows boundary edges,
/// columns boundary nodes.
pub fn assemble_k(bm: &BoundaryMesh) -> DMatrix<f64> {
    let m = bm.n_edges();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let si = bm.segment(i);
            let mut row = vec![0.0; m];
            for j in 0..m {
                let rel = bm.relation(i, j);
                if let Relation::Same = rel {
                    continue;
                }
                let sj = bm.segment(j);
                let [a, b] = bm.edge_nodes(j);
                let ia = outer_integral(si, sj, rel, Accuracy::Full, |x| double_layer_hats(sj, x).0);
                let ib = outer_integral(si, sj, rel, Accuracy::Full, |x| double_layer_hats(sj, x).1);
                row[a] += ia;
                row[b] += ib;
            }
            row
        })
        .collect();
    DMatrix::from_fn(m, m, |i, j| rows[i][j])
}

/// `<chi_E, eta_a / 2>`: `h_E / 4` for both endpoints of `E`.
pub fn assemble_m_half(bm: &BoundaryMesh) -> DMatrix<f64> {
    let m = bm.n_edges();
    let mut mh = DMatrix::zeros(m, m);
    for k in 0..m {
        let [a, b] = bm.edge_nodes(k);
        let h = bm.segment(k).length;
        mh[(k, a)] += 0.25 * h;
        mh[(k, b)] += 0.25 * h;
    }
    mh
}

/// Assembled boundary integral operators on one boundary mesh.
#[derive(Debug, Clone)]
pub struct LayerMatrices {
    pub v: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub m_half: DMatrix<f64>,
}

impl LayerMatrices {
    pub fn assemble(bm: &BoundaryMesh) -> Self {
        let (v, k) = rayon::join(|| assemble_v(bm), || assemble_k(bm));
        Self { v, k, m_half: assemble_m_half(bm) }
    }

    /// `M_half - K`.
    pub fn half_minus_k(&self) -> DMatrix<f64> {
        &self.m_half - &self.k
    }
}

/// `w = 1/2 g - K g - V phi` on the boundary, with `g = u0 - u_h` given at
/// the boundary nodes.
#[derive(Debug, Clone)]
pub struct BoundaryResidual<'a> {
    bm: &'a BoundaryMesh,
    g: Vec<f64>,
    phi: Vec<f64>,
}

impl<'a> BoundaryResidual<'a> {
    pub fn new(bm: &'a BoundaryMesh, g: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if g.len() != bm.n_edges() || phi.len() != bm.n_edges() {
            return Err(Error::DimensionMismatch(format!(
                "boundary data of lengths {} and {} for {} edges",
                g.len(),
                phi.len(),
                bm.n_edges()
            )));
        }
        Ok(Self { bm, g, phi })
    }

    /// `w` at parameter `t` in `(0, 1)` of edge `k`.
    pub fn at(&self, k: usize, t: f64) -> Result<f64> {
        let seg = self.bm.segment(k);
        let x = seg.point(t);
        let tol = 1e-12;
        if t * seg.length <= tol || (1.0 - t) * seg.length <= tol {
            return Err(Error::PointAtNode { x: x.x, y: x.y });
        }
        let [a, b] = self.bm.edge_nodes(k);
        let gx = self.g[a] * (1.0 - t) + self.g[b] * t;
        let kg = self.bm.double_layer_potential_skip(&self.g, x, Some(k));
        let mut vphi = 0.0;
        for (j, s) in self.bm.segments().iter().enumerate() {
            vphi += self.phi[j] * if j == k { single_layer_on_line(s, x) } else { single_layer(s, x) };
        }
        Ok(0.5 * gx - kg - vphi)
    }

    /// `w` at a point of the boundary.
    pub fn eval(&self, x: Point) -> Result<f64> {
        if self.bm.points.iter().any(|p| (p - x).norm() <= 1e-12) {
            return Err(Error::PointAtNode { x: x.x, y: x.y });
        }
        let (k, seg) = self
            .bm
            .segments()
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.distance(x).total_cmp(&b.1.distance(x)))
            .expect("boundary has edges");
        let t = (x - seg.a).dot(&seg.tangent) / seg.length;
        self.at(k, t)
    }

    /// Central difference quotient of `w` along edge `k` with spacing
    /// `h_E / 20` about the midpoint.
    pub fn arc_derivative(&self, k: usize) -> Result<f64> {
        arc_derivative(|t| self.at(k, t), self.bm.segment(k).length)
    }
}

/// `(w(x2) - w(x1)) / |x2 - x1|` with `x1, x2` at parameters `1/2 -+ 1/40`.
pub fn arc_derivative(mut w: impl FnMut(f64) -> Result<f64>, length: f64) -> Result<f64> {
    let d = 1.0 / 40.0;
    Ok((w(0.5 + d)? - w(0.5 - d)?) / (length / 20.0))
}

/// Exterior representation `DL[trace] - SL[phi] + a_inf` at `x` outside the
/// closed domain; `trace = u_h - u0` at the boundary nodes.
pub fn eval_exterior(bm: &BoundaryMesh, trace: &[f64], phi: &[f64], a_inf: f64, x: Point) -> Result<f64> {
    if bm.contains_closed(x) {
        return Err(Error::PointInsideDomain { x: x.x, y: x.y });
    }
    Ok(bm.double_layer_potential(trace, x) - bm.single_layer_potential(phi, x) + a_inf)
}

/// Cholesky test for positive definiteness.
pub fn is_positive_definite(v: &DMatrix<f64>) -> bool {
    v.clone().cholesky().is_some()
}

pub fn apply(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(x)).iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn square(n_per_side: usize, side: f64) -> BoundaryMesh {
        let corners = [Point::new(0.0, 0.0), Point::new(side, 0.0), Point::new(side, side), Point::new(0.0, side)];
        let mut pts = Vec::new();
        for c in 0..4 {
            let (a, b) = (corners[c], corners[(c + 1) % 4]);
            for k in 0..n_per_side {
                pts.push(a + (b - a) * (k as f64 / n_per_side as f64));
            }
        }
        BoundaryMesh::from_polygon(pts).unwrap()
    }

    #[test]
    fn self_entry_closed_form() {
        let bm = square(2, 0.5);
        let v = assemble_v(&bm);
        assert_relative_eq!(v[(0, 0)], v_self_entry(0.25), max_relative = 1e-14);
    }

    #[test]
    fn far_pair_midpoint_expansion() {
        let h = 1e-3;
        let d = 0.4;
        let s1 = Segment::new(Point::new(0.0, 0.0), Point::new(h, 0.0));
        let s2 = Segment::new(Point::new(d, 0.3), Point::new(d, 0.3 + h));
        let dist = (s2.midpoint() - s1.midpoint()).norm();
        let got = outer_integral(&s1, &s2, Relation::Disjoint, Accuracy::Full, |x| single_layer(&s2, x));
        let approx = -(h * h) / (2.0 * PI) * dist.ln();
        assert!(((got - approx) / approx).abs() <= (h / dist).powi(2));
    }

    #[test]
    fn v_symmetric_positive_definite() {
        let bm = square(3, 0.5);
        let v = assemble_v(&bm);
        assert_eq!(v, v.transpose());
        assert!(is_positive_definite(&v));
    }

    #[test]
    fn row_identity_and_collinear_zero() {
        let bm = square(2, 0.5);
        let l = LayerMatrices::assemble(&bm);
        // node 1 only touches edges 0 and 1, which lie on the same line as edge 0
        assert_eq!(l.k[(0, 1)], 0.0);
        let ones = vec![1.0; bm.n_edges()];
        let r = apply(&l.half_minus_k(), &ones);
        for (k, v) in r.iter().enumerate() {
            assert!((v - bm.segment(k).length).abs() < 1e-12, "{k}: {v}");
        }
    }

    #[test]
    fn constant_residual_identity() {
        let bm = square(2, 0.5);
        let c = 1.7;
        let res = BoundaryResidual::new(&bm, vec![c; 8], vec![0.0; 8]).unwrap();
        for k in 0..8 {
            assert_relative_eq!(res.at(k, 0.3).unwrap(), c, max_relative = 1e-12);
            assert!(res.arc_derivative(k).unwrap().abs() < 1e-9);
        }
        assert!(matches!(res.eval(Point::new(0.0, 0.0)), Err(Error::PointAtNode { .. })));
    }

    #[test]
    fn exterior_representation() {
        let bm = square(2, 0.5);
        assert_eq!(eval_exterior(&bm, &[0.0; 8], &[0.0; 8], 7.0, Point::new(1.0, 1.0)).unwrap(), 7.0);
        assert!(eval_exterior(&bm, &[0.0; 8], &[0.0; 8], 0.0, Point::new(0.2, 0.2)).is_err());
        assert!(eval_exterior(&bm, &[0.0; 8], &[0.0; 8], 0.0, Point::new(0.5, 0.2)).is_err());
    }

    #[test]
    fn degenerate_edge_rejected() {
        let p = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        assert!(matches!(BoundaryMesh::from_polygon(p), Err(Error::DegenerateEdge(1))));
    }
}
