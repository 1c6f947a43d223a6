//! Donald dual mesh: control volumes around each vertex bounded by segments
//! joining edge midpoints and element barycenters.

use crate::error::{Error, Result};
use crate::mesh::{ElementGeometry, Mesh, Point};

/// Dual segment `[m_ij, c_T]` inside triangle `T`, separating the boxes of
/// nodes `i < j`.
#[derive(Debug, Clone, Copy)]
pub struct DualSegment {
    pub triangle: usize,
    pub i: usize,
    pub j: usize,
    /// Primal edge joining `i` and `j`.
    pub edge: usize,
    /// Local indices of `i` and `j` in the triangle.
    pub local: [usize; 2],
    pub start: Point,
    pub end: Point,
    /// Unit normal pointing from `V_i` into `V_j`.
    pub normal: Point,
    pub length: f64,
}

/// Boundary half-edge `[a_i, m_E]` of the box of node `i`.
#[derive(Debug, Clone, Copy)]
pub struct BoundarySegment {
    pub node: usize,
    /// The other endpoint of the primal boundary edge.
    pub other: usize,
    /// Position in `Mesh::boundary()`.
    pub boundary_index: usize,
    pub triangle: usize,
    pub start: Point,
    pub end: Point,
    /// Outward normal of the domain.
    pub normal: Point,
    pub length: f64,
}

#[derive(Debug, Clone)]
pub struct DualDecomposition {
    /// Three segments per triangle, triangle `t` owns `3t..3t+3`.
    pub interior: Vec<DualSegment>,
    /// Two half-edges per boundary edge, in boundary cycle order.
    pub boundary: Vec<BoundarySegment>,
    /// `|V_i|` per node.
    pub box_areas: Vec<f64>,
}

impl DualDecomposition {
    pub fn new(mesh: &Mesh) -> Self {
        let mut interior = Vec::with_capacity(3 * mesh.n_triangles());
        let mut box_areas = vec![0.0; mesh.n_vertices()];
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let g = mesh.geometry(t);
            for k in 0..3 {
                let (la, lb) = (k, (k + 1) % 3);
                let (a, b) = (tri[la], tri[lb]);
                let (li, lj) = if a < b { (la, lb) } else { (lb, la) };
                let start = g.edge_midpoints[k];
                let end = g.barycenter;
                let d = end - start;
                let length = d.norm();
                let mut normal = Point::new(d.y, -d.x) / length;
                if normal.dot(&(g.vertices[lj] - g.vertices[li])) < 0.0 {
                    normal = -normal;
                }
                interior.push(DualSegment {
                    triangle: t,
                    i: tri[li],
                    j: tri[lj],
                    edge: mesh.triangle_edges()[t][k],
                    local: [li, lj],
                    start,
                    end,
                    normal,
                    length,
                });
                box_areas[tri[k]] += g.area / 3.0;
            }
        }
        let mut boundary = Vec::with_capacity(2 * mesh.n_boundary_edges());
        for (bi, be) in mesh.boundary().iter().enumerate() {
            let normal = mesh.outward_normal(be);
            let (pa, pb) = (mesh.vertices()[be.from], mesh.vertices()[be.to]);
            let mid = (pa + pb) * 0.5;
            let half = 0.5 * (pb - pa).norm();
            for (node, other, p) in [(be.from, be.to, pa), (be.to, be.from, pb)] {
                boundary.push(BoundarySegment {
                    node,
                    other,
                    boundary_index: bi,
                    triangle: be.triangle,
                    start: p,
                    end: mid,
                    normal,
                    length: half,
                });
            }
        }
        Self { interior, boundary, box_areas }
    }

    pub fn segments_of(&self, t: usize) -> &[DualSegment] {
        &self.interior[3 * t..3 * t + 3]
    }

    /// `sum_i v_i |V_i|`, the integral of the dual interpolant.
    pub fn integrate_nodal(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.box_areas).map(|(v, a)| v * a).sum()
    }
}

/// The two sub-triangles `(a_k, m_next, c_T)` and `(a_k, c_T, m_prev)` whose
/// union is `V_k ∩ T` for local vertex `k`.
pub fn box_subtriangles(g: &ElementGeometry, k: usize) -> [[Point; 3]; 2] {
    let a = g.vertices[k];
    let m_next = g.edge_midpoints[k];
    let m_prev = g.edge_midpoints[(k + 2) % 3];
    [[a, m_next, g.barycenter], [a, g.barycenter, m_prev]]
}

/// Dual-piecewise-constant function: the value of node `i` on `V_i`.
#[derive(Debug, Clone)]
pub struct DualFunction<'a> {
    mesh: &'a Mesh,
    values: Vec<f64>,
}

/// Piecewise constant interpolant of nodal values on the dual boxes.
pub fn interpolate_piecewise_constant<'a>(mesh: &'a Mesh, values: &[f64]) -> Result<DualFunction<'a>> {
    if values.len() != mesh.n_vertices() {
        return Err(Error::DimensionMismatch(format!(
            "{} nodal values for {} mesh nodes",
            values.len(),
            mesh.n_vertices()
        )));
    }
    Ok(DualFunction { mesh, values: values.to_vec() })
}

impl DualFunction<'_> {
    /// Box membership inside a triangle is the largest barycentric
    /// coordinate; ties go to the smallest node index.
    pub fn owner(&self, x: Point) -> Result<usize> {
        let (t, l) = self.mesh.locate(x).ok_or(Error::PointOutsideDomain { x: x.x, y: x.y })?;
        let tri = self.mesh.triangles()[t];
        let max = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tol = 1e-12;
        Ok((0..3).filter(|&k| l[k] >= max - tol).map(|k| tri[k]).min().unwrap_or(tri[0]))
    }

    pub fn eval(&self, x: Point) -> Result<f64> {
        Ok(self.values[self.owner(x)?])
    }
}
