//! Conforming triangulations of polygonal domains with red-green-blue refinement.
//!
//! Triangles are stored counterclockwise and rotated so that the local edge
//! `(t[0], t[1])` is the refinement edge. Local edge `k` of a triangle joins
//! `t[k]` and `t[(k + 1) % 3]`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::Vector2;

use crate::error::{Error, Result};

pub type Point = Vector2<f64>;

/// Benchmark domains of the structured generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// `(-1/4, 1/4)^2` minus the closed lower-right quadrant.
    LShape,
    /// `(0, 1/2)^2`.
    Square,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::LShape => "L-shape",
            Domain::Square => "square",
        }
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lshape" | "l-shape" | "l" => Ok(Domain::LShape),
            "square" => Ok(Domain::Square),
            _ => Err(Error::UnknownDomain(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    /// Endpoints, smaller index first.
    pub nodes: [usize; 2],
    pub triangles: [usize; 2],
    pub n_triangles: usize,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.n_triangles == 1
    }

    pub fn adjacent(&self) -> &[usize] {
        &self.triangles[..self.n_triangles]
    }
}

/// Oriented boundary edge: `Omega` lies to the left of `from -> to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub edge: usize,
    pub from: usize,
    pub to: usize,
    pub triangle: usize,
}

/// Per-element geometric data.
#[derive(Debug, Clone)]
pub struct ElementGeometry {
    pub vertices: [Point; 3],
    pub area: f64,
    /// Element diameter `h_T` (longest edge).
    pub diameter: f64,
    pub barycenter: Point,
    /// Midpoint of local edge `k`.
    pub edge_midpoints: [Point; 3],
    /// Length `h_E` of local edge `k`.
    pub edge_lengths: [f64; 3],
    /// Gradients of the barycentric coordinates.
    pub grad_lambda: [Point; 3],
}

impl ElementGeometry {
    pub fn new(vertices: [Point; 3]) -> Self {
        let [p0, p1, p2] = vertices;
        let area = 0.5 * cross(p1 - p0, p2 - p0);
        let edge_lengths = [(p1 - p0).norm(), (p2 - p1).norm(), (p0 - p2).norm()];
        let grad = |a: Point, b: Point| {
            let e = b - a;
            Point::new(-e.y, e.x) / (2.0 * area)
        };
        Self {
            vertices,
            area,
            diameter: edge_lengths.iter().copied().fold(0.0, f64::max),
            barycenter: (p0 + p1 + p2) / 3.0,
            edge_midpoints: [(p0 + p1) * 0.5, (p1 + p2) * 0.5, (p2 + p0) * 0.5],
            edge_lengths,
            grad_lambda: [grad(p1, p2), grad(p2, p0), grad(p0, p1)],
        }
    }

    /// Map barycentric coordinates to a point.
    pub fn point(&self, lambda: [f64; 3]) -> Point {
        self.vertices[0] * lambda[0] + self.vertices[1] * lambda[1] + self.vertices[2] * lambda[2]
    }

    pub fn barycentric(&self, x: Point) -> [f64; 3] {
        let [p0, p1, p2] = self.vertices;
        let l0 = 0.5 * cross(p1 - x, p2 - x) / self.area;
        let l1 = 0.5 * cross(p2 - x, p0 - x) / self.area;
        [l0, l1, 1.0 - l0 - l1]
    }

    pub fn inradius(&self) -> f64 {
        2.0 * self.area / self.edge_lengths.iter().sum::<f64>()
    }
}

pub fn cross(a: Point, b: Point) -> f64 {
    a.x * b.y - a.y * b.x
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    triangle_edges: Vec<[usize; 3]>,
    boundary: Vec<BoundaryEdge>,
}

/// Result of one refinement step.
#[derive(Debug, Clone)]
pub struct Refinement {
    pub mesh: Mesh,
    /// Parent triangle of every child triangle.
    pub parent: Vec<usize>,
}

impl Mesh {
    /// Build a mesh from arbitrary triangles. Orientation is normalized to
    /// counterclockwise and the longest edge becomes the refinement edge
    /// (ties go to the lexicographically smallest `(min, max)` node pair).
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mut oriented = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut tri = *tri;
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            let a = cross(vertices[tri[1]] - vertices[tri[0]], vertices[tri[2]] - vertices[tri[0]]);
            if a < 0.0 {
                tri.swap(1, 2);
            }
            let lengths: Vec<f64> = (0..3)
                .map(|k| (vertices[tri[(k + 1) % 3]] - vertices[tri[k]]).norm_squared())
                .collect();
            let longest = lengths.iter().copied().fold(0.0, f64::max);
            let key = |k: usize| {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                (a.min(b), a.max(b))
            };
            let best = (0..3)
                .filter(|&k| lengths[k] >= longest * (1.0 - 1e-12))
                .min_by_key(|&k| key(k))
                .unwrap_or(0);
            tri.rotate_left(best);
            oriented.push(tri);
        }
        Self::with_refinement_edges(vertices, oriented)
    }

    /// Build a mesh whose triangles are already counterclockwise with the
    /// refinement edge first.
    pub fn with_refinement_edges(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        for (t, tri) in triangles.iter().enumerate() {
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("triangle {t} repeats a vertex")));
            }
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            let a = cross(vertices[tri[1]] - vertices[tri[0]], vertices[tri[2]] - vertices[tri[0]]);
            let scale = (vertices[tri[1]] - vertices[tri[0]]).norm_squared();
            if a <= 1e-14 * scale {
                return Err(Error::InvalidMesh(format!("triangle {t} is degenerate or clockwise")));
            }
        }

        let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 2);
        let mut edges: Vec<Edge> = Vec::with_capacity(triangles.len() * 2);
        let mut directed: Vec<(usize, usize)> = Vec::with_capacity(triangles.len() * 2);
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut te = [0; 3];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let idx = *lookup.entry(key).or_insert_with(|| {
                    edges.push(Edge { nodes: [key.0, key.1], triangles: [usize::MAX; 2], n_triangles: 0 });
                    directed.push((a, b));
                    edges.len() - 1
                });
                let edge = &mut edges[idx];
                if edge.n_triangles == 2 {
                    return Err(Error::InvalidMesh(format!("edge {:?} has more than two triangles", edge.nodes)));
                }
                if edge.n_triangles == 1 && directed[idx] == (a, b) {
                    return Err(Error::InvalidMesh(format!("inconsistent orientation across edge {:?}", edge.nodes)));
                }
                edge.triangles[edge.n_triangles] = t;
                edge.n_triangles += 1;
                te[k] = idx;
            }
            triangle_edges.push(te);
        }

        // Oriented boundary edges, chained into a single cycle.
        let mut next: HashMap<usize, usize> = HashMap::new();
        let mut oriented = Vec::new();
        for (idx, e) in edges.iter().enumerate() {
            if e.is_boundary() {
                let (from, to) = directed[idx];
                if next.insert(from, oriented.len()).is_some() {
                    return Err(Error::InvalidMesh(format!("boundary is pinched at vertex {from}")));
                }
                oriented.push(BoundaryEdge { edge: idx, from, to, triangle: e.triangles[0] });
            }
        }
        if oriented.is_empty() {
            return Err(Error::InvalidMesh("mesh has no boundary".into()));
        }
        let start = (0..oriented.len()).min_by_key(|&i| oriented[i].from).unwrap_or(0);
        let mut boundary = Vec::with_capacity(oriented.len());
        let mut cur = start;
        loop {
            boundary.push(oriented[cur]);
            let to = oriented[cur].to;
            match next.get(&to) {
                Some(&n) if n == start => break,
                Some(&n) => cur = n,
                None => return Err(Error::InvalidMesh("boundary is not closed".into())),
            }
            if boundary.len() > oriented.len() {
                return Err(Error::InvalidMesh("boundary walk does not terminate".into()));
            }
        }
        if boundary.len() != oriented.len() {
            return Err(Error::InvalidMesh(format!(
                "boundary consists of more than one cycle ({} of {} edges reached)",
                boundary.len(),
                oriented.len()
            )));
        }

        Ok(Self { vertices, triangles, edges, triangle_edges, boundary })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Global edge index of local edge `k` of every triangle.
    pub fn triangle_edges(&self) -> &[[usize; 3]] {
        &self.triangle_edges
    }

    /// Boundary edges in cycle order.
    pub fn boundary(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_boundary_edges(&self) -> usize {
        self.boundary.len()
    }

    pub fn geometry(&self, t: usize) -> ElementGeometry {
        let [a, b, c] = self.triangles[t];
        ElementGeometry::new([self.vertices[a], self.vertices[b], self.vertices[c]])
    }

    pub fn area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.geometry(t).area).sum()
    }

    /// Unit outward normal of a boundary edge.
    pub fn outward_normal(&self, b: &BoundaryEdge) -> Point {
        let d = self.vertices[b.to] - self.vertices[b.from];
        Point::new(d.y, -d.x) / d.norm()
    }

    /// Largest distance between two boundary vertices.
    pub fn domain_diameter(&self) -> f64 {
        let pts: Vec<Point> = self.boundary.iter().map(|b| self.vertices[b.from]).collect();
        let mut d: f64 = 0.0;
        for (i, p) in pts.iter().enumerate() {
            for q in &pts[i + 1..] {
                d = d.max((p - q).norm());
            }
        }
        d
    }

    /// Max over elements of `h_T / (2 r_T)`.
    pub fn shape_regularity(&self) -> f64 {
        (0..self.n_triangles())
            .map(|t| {
                let g = self.geometry(t);
                g.diameter / (2.0 * g.inradius())
            })
            .fold(0.0, f64::max)
    }

    /// Smallest interior angle over all elements, in radians.
    pub fn min_angle(&self) -> f64 {
        let mut min = f64::INFINITY;
        for t in 0..self.n_triangles() {
            let g = self.geometry(t);
            for k in 0..3 {
                let p = g.vertices[k];
                let u = g.vertices[(k + 1) % 3] - p;
                let v = g.vertices[(k + 2) % 3] - p;
                let ang = cross(u, v).atan2(u.dot(&v));
                min = min.min(ang);
            }
        }
        min
    }

    /// Triangle containing `x` and the barycentric coordinates of `x` there.
    pub fn locate(&self, x: Point) -> Option<(usize, [f64; 3])> {
        const TOL: f64 = 1e-12;
        (0..self.n_triangles()).find_map(|t| {
            let l = self.geometry(t).barycentric(x);
            l.iter().all(|&v| v >= -TOL).then_some((t, l))
        })
    }

    /// Boundary polygon as a point list in cycle order.
    pub fn boundary_polygon(&self) -> Vec<Point> {
        self.boundary.iter().map(|b| self.vertices[b.from]).collect()
    }

    /// Red-green-blue refinement. Marked triangles are refined red; the
    /// closure marks the refinement edge of every triangle with a marked
    /// edge, and the remaining triangles are closed by green or blue patterns.
    pub fn refine_rgb(&self, marked: &[usize]) -> Result<Refinement> {
        if marked.is_empty() {
            return Ok(Refinement { mesh: self.clone(), parent: (0..self.n_triangles()).collect() });
        }
        let mut edge_marked = vec![false; self.edges.len()];
        let mut work = Vec::new();
        for &t in marked {
            if t >= self.n_triangles() {
                return Err(Error::InvalidMesh(format!("marked triangle {t} does not exist")));
            }
            for &e in &self.triangle_edges[t] {
                if !edge_marked[e] {
                    edge_marked[e] = true;
                    work.extend_from_slice(self.edges[e].adjacent());
                }
            }
        }
        while let Some(t) = work.pop() {
            let refe = self.triangle_edges[t][0];
            if !edge_marked[refe] {
                edge_marked[refe] = true;
                work.extend_from_slice(self.edges[refe].adjacent());
            }
        }

        let mut vertices = self.vertices.clone();
        let mut midpoint = vec![usize::MAX; self.edges.len()];
        for (e, edge) in self.edges.iter().enumerate() {
            if edge_marked[e] {
                midpoint[e] = vertices.len();
                let [a, b] = edge.nodes;
                vertices.push((self.vertices[a] + self.vertices[b]) * 0.5);
            }
        }

        let mut triangles = Vec::with_capacity(self.n_triangles() * 2);
        let mut parent = Vec::with_capacity(self.n_triangles() * 2);
        for (t, &[n1, n2, n3]) in self.triangles.iter().enumerate() {
            let [e12, e23, e31] = self.triangle_edges[t];
            let (m12, m23, m31) = (midpoint[e12], midpoint[e23], midpoint[e31]);
            let children: Vec<[usize; 3]> = match (edge_marked[e12], edge_marked[e23], edge_marked[e31]) {
                (false, false, false) => vec![[n1, n2, n3]],
                (true, false, false) => vec![[n3, n1, m12], [n2, n3, m12]],
                (true, true, false) => vec![[n3, n1, m12], [m12, n2, m23], [n3, m12, m23]],
                (true, false, true) => vec![[n1, m12, m31], [m12, n3, m31], [n2, n3, m12]],
                (true, true, true) => vec![[n1, m12, m31], [m12, n2, m23], [m31, m23, n3], [m23, m31, m12]],
                _ => unreachable!("closure leaves a marked edge without its refinement edge"),
            };
            for c in children {
                triangles.push(c);
                parent.push(t);
            }
        }
        let mesh = Mesh::with_refinement_edges(vertices, triangles)?;
        Ok(Refinement { mesh, parent })
    }

    /// Plain-text dump: header, then vertices, triangles and boundary edges.
    pub fn to_dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "vertices {} triangles {} boundary_edges {}",
            self.n_vertices(),
            self.n_triangles(),
            self.n_boundary_edges()
        );
        for v in &self.vertices {
            let _ = writeln!(s, "{:e} {:e}", v.x, v.y);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        for b in &self.boundary {
            let _ = writeln!(s, "{} {}", b.from, b.to);
        }
        s
    }

    /// Parse the dump format. Triangle vertex order is kept as given.
    pub fn from_dump(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidMesh(format!("mesh dump: {msg}"));
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty input"))?.split_whitespace().collect();
        if header.len() != 6 || header[0] != "vertices" || header[2] != "triangles" || header[4] != "boundary_edges" {
            return Err(bad("malformed header"));
        }
        let count = |s: &str| s.parse::<usize>().map_err(|_| bad("bad count"));
        let (nv, nt) = (count(header[1])?, count(header[3])?);
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let l = lines.next().ok_or_else(|| bad("missing vertex line"))?;
            let v: Vec<f64> = l.split_whitespace().map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad("bad coordinate"))?;
            if v.len() != 2 {
                return Err(bad("vertex line needs two coordinates"));
            }
            vertices.push(Point::new(v[0], v[1]));
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let l = lines.next().ok_or_else(|| bad("missing triangle line"))?;
            let v: Vec<usize> = l.split_whitespace().map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad("bad index"))?;
            if v.len() != 3 {
                return Err(bad("triangle line needs three indices"));
            }
            triangles.push([v[0], v[1], v[2]]);
        }
        Mesh::new(vertices, triangles)
    }
}

/// Structured initial mesh on a benchmark domain.
///
/// The domain is covered by squares of equal size; each square is split
/// criss-cross into four triangles, or along one diagonal into two when the
/// target count only fits that pattern. The L-shape with `k` squares per
/// quadrant side has `12 k^2` (criss-cross) or `6 k^2` (diagonal) elements,
/// the square `4 k^2` or `2 k^2`.
pub fn build_initial_mesh(domain: Domain, target_elements: usize) -> Result<Mesh> {
    let (per_square_cross, per_square_diag) = match domain {
        Domain::LShape => (12, 6),
        Domain::Square => (4, 2),
    };
    let fits = |per: usize| -> Option<usize> {
        if target_elements % per != 0 {
            return None;
        }
        let k2 = target_elements / per;
        let k = (k2 as f64).sqrt().round() as usize;
        (k >= 1 && k * k == k2).then_some(k)
    };
    let (k, criss_cross) = match (fits(per_square_cross), fits(per_square_diag)) {
        (Some(k), _) => (k, true),
        (None, Some(k)) => (k, false),
        _ => return Err(Error::UnachievableElementCount { domain: domain.name(), target: target_elements }),
    };

    let (origin, cells, spacing) = match domain {
        Domain::LShape => (Point::new(-0.25, -0.25), 2 * k, 0.5 / (2 * k) as f64),
        Domain::Square => (Point::new(0.0, 0.0), k, 0.5 / k as f64),
    };
    let keep = |i: usize, j: usize| match domain {
        // drop the lower-right quadrant
        Domain::LShape => !(i >= k && j < k),
        Domain::Square => true,
    };

    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut vertices = Vec::new();
    for j in 0..=cells {
        for i in 0..=cells {
            let used = [(i, j), (i.wrapping_sub(1), j), (i, j.wrapping_sub(1)), (i.wrapping_sub(1), j.wrapping_sub(1))]
                .iter()
                .any(|&(ci, cj)| ci < cells && cj < cells && keep(ci, cj));
            if used {
                index.insert((i, j), vertices.len());
                vertices.push(origin + Point::new(i as f64 * spacing, j as f64 * spacing));
            }
        }
    }
    let mut triangles = Vec::new();
    for j in 0..cells {
        for i in 0..cells {
            if !keep(i, j) {
                continue;
            }
            let p00 = index[&(i, j)];
            let p10 = index[&(i + 1, j)];
            let p11 = index[&(i + 1, j + 1)];
            let p01 = index[&(i, j + 1)];
            if criss_cross {
                let c = vertices.len();
                vertices.push(origin + Point::new((i as f64 + 0.5) * spacing, (j as f64 + 0.5) * spacing));
                triangles.extend_from_slice(&[[p00, p10, c], [p10, p11, c], [p11, p01, c], [p01, p00, c]]);
            } else {
                triangles.extend_from_slice(&[[p00, p10, p11], [p00, p11, p01]]);
            }
        }
    }
    Mesh::new(vertices, triangles)
}
