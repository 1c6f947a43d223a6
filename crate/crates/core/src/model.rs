//! Problem data: coefficients, sources, coupling jumps, radiation condition,
//! and the three benchmark problems with their exact solutions.
//!
//! Coefficient fields take `(x, anchor)`. The anchor is a point of the element
//! the evaluation belongs to (its barycenter) and selects the piece of a
//! piecewise-defined field, so that evaluations on element edges lying on a
//! discontinuity are unambiguous.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::Matrix2;

use crate::error::{Error, Result};
use crate::mesh::{build_initial_mesh, Domain, ElementGeometry, Mesh, Point};
use crate::quadrature::{triangle_degree4, triangle_degree6};

pub type Field<T> = Arc<dyn Fn(Point, Point) -> T + Send + Sync>;
pub type PointField<T> = Arc<dyn Fn(Point) -> T + Send + Sync>;
/// Flux jump `t0(x, anchor, outward normal, inflow/outflow)`.
pub type TraceFlux = Arc<dyn Fn(Point, Point, Point, BoundaryKind) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    Inflow,
    Outflow,
}

#[derive(Clone)]
pub enum Diffusion {
    /// Piecewise constant scalar `alpha`, `A = alpha I`.
    Scalar(Field<f64>),
    /// Full symmetric matrix with its row divergence `(div A)_j = sum_i d_i A_ij`.
    Matrix { a: Field<Matrix2<f64>>, divergence: Field<Point> },
}

impl Diffusion {
    pub fn constant(alpha: f64) -> Self {
        Diffusion::Scalar(Arc::new(move |_, _| alpha))
    }

    pub fn matrix(&self, x: Point, anchor: Point) -> Matrix2<f64> {
        match self {
            Diffusion::Scalar(a) => Matrix2::identity() * a(x, anchor),
            Diffusion::Matrix { a, .. } => a(x, anchor),
        }
    }

    pub fn divergence(&self, x: Point, anchor: Point) -> Point {
        match self {
            Diffusion::Scalar(_) => Point::zeros(),
            Diffusion::Matrix { divergence, .. } => divergence(x, anchor),
        }
    }

    /// Smallest eigenvalue of `A(x)`.
    pub fn lambda_min(&self, x: Point, anchor: Point) -> f64 {
        match self {
            Diffusion::Scalar(a) => a(x, anchor),
            Diffusion::Matrix { a, .. } => {
                let m = a(x, anchor);
                let (p, q, r) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
                0.5 * (p + r) - (0.25 * (p - r) * (p - r) + q * q).sqrt()
            }
        }
    }

    pub fn is_scalar(&self) -> bool {
        matches!(self, Diffusion::Scalar(_))
    }
}

#[derive(Clone)]
pub struct Convection {
    pub b: PointField<Point>,
    pub divergence: PointField<f64>,
}

impl Convection {
    pub fn zero() -> Self {
        Self::constant(Point::zeros())
    }

    pub fn constant(v: Point) -> Self {
        Self { b: Arc::new(move |_| v), divergence: Arc::new(|_| 0.0) }
    }

    /// `b(x) = v + M x`.
    pub fn affine(v: Point, m: Matrix2<f64>) -> Self {
        let div = m.trace();
        Self { b: Arc::new(move |x| v + m * x), divergence: Arc::new(move |_| div) }
    }
}

/// Far-field behavior of the exterior solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Radiation {
    /// `u_e = C log|x| + O(1/|x|)`.
    LogGrowth,
    /// `u_e = a_inf + O(1/|x|)` with `<du_e/dn, 1> = 0`.
    FarField,
}

#[derive(Debug, Clone)]
pub enum InitialMesh {
    Structured { domain: Domain, elements: usize },
    Given(Mesh),
}

impl InitialMesh {
    pub fn build(&self) -> Result<Mesh> {
        match self {
            InitialMesh::Structured { domain, elements } => build_initial_mesh(*domain, *elements),
            InitialMesh::Given(m) => Ok(m.clone()),
        }
    }
}

/// Closed-form interior and exterior solution.
pub trait ExactSolution: Send + Sync {
    fn u(&self, x: Point) -> f64;
    fn grad_u(&self, x: Point) -> Point;
    fn hessian_u(&self, x: Point) -> Matrix2<f64>;
    fn u_e(&self, x: Point) -> f64;
    fn grad_u_e(&self, x: Point) -> Point;
    /// Point where `grad u` is singular, if any.
    fn singular_point(&self) -> Option<Point> {
        None
    }
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub initial_mesh: InitialMesh,
    pub diffusion: Diffusion,
    pub convection: Convection,
    pub reaction: Field<f64>,
    pub source: Field<f64>,
    pub u0: PointField<f64>,
    pub t0: TraceFlux,
    pub radiation: Radiation,
    pub exact: Option<Arc<dyn ExactSolution>>,
    /// Whether runs use the upwind scheme unless told otherwise.
    pub upwind_default: bool,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("initial_mesh", &self.initial_mesh)
            .field("scalar_diffusion", &self.diffusion.is_scalar())
            .field("radiation", &self.radiation)
            .field("has_exact", &self.exact.is_some())
            .finish()
    }
}

impl ProblemSpec {
    /// Pure diffusion `A = alpha I` with zero data on the given mesh.
    pub fn diffusion_only(mesh: Mesh, alpha: f64) -> Self {
        Self {
            name: "diffusion".into(),
            initial_mesh: InitialMesh::Given(mesh),
            diffusion: Diffusion::constant(alpha),
            convection: Convection::zero(),
            reaction: Arc::new(|_, _| 0.0),
            source: Arc::new(|_, _| 0.0),
            u0: Arc::new(|_| 0.0),
            t0: Arc::new(|_, _, _, _| 0.0),
            radiation: Radiation::LogGrowth,
            exact: None,
            upwind_default: false,
        }
    }

    /// `b(x)` evaluated pointwise.
    pub fn b(&self, x: Point) -> Point {
        (self.convection.b)(x)
    }

    /// `1/2 div b + c`.
    pub fn coercivity(&self, x: Point, anchor: Point) -> f64 {
        0.5 * (self.convection.divergence)(x) + (self.reaction)(x, anchor)
    }

    /// Minimum of `1/2 div b + c` over the element's degree-4 quadrature
    /// points and its vertices.
    pub fn coercivity_min(&self, g: &ElementGeometry) -> f64 {
        let anchor = g.barycenter;
        triangle_degree4()
            .points
            .iter()
            .map(|&l| g.point(l))
            .chain(g.vertices)
            .map(|x| self.coercivity(x, anchor))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn classify(&self, x: Point, normal: Point) -> BoundaryKind {
        classify_boundary(x, normal, &self.convection)
    }

    /// Replace `f`, `u0`, `t0` by the data computed from the exact solution.
    pub fn with_derived_data(mut self) -> Result<Self> {
        let d = derive_data_from_exact(&self)?;
        self.source = d.source;
        self.u0 = d.u0;
        self.t0 = d.t0;
        Ok(self)
    }
}

/// Inflow iff `b(x) . n(x) < 0`.
pub fn classify_boundary(x: Point, normal: Point, convection: &Convection) -> BoundaryKind {
    if (convection.b)(x).dot(&normal) < 0.0 {
        BoundaryKind::Inflow
    } else {
        BoundaryKind::Outflow
    }
}

pub struct DerivedData {
    pub source: Field<f64>,
    pub u0: PointField<f64>,
    pub t0: TraceFlux,
}

/// `f = div(-A grad u + b u) + c u`, `u0 = u - u_e`, and
/// `t0 = (A grad u - [inflow] b u) . n - du_e/dn` from the exact solution.
pub fn derive_data_from_exact(spec: &ProblemSpec) -> Result<DerivedData> {
    let exact = spec.exact.clone().ok_or(Error::NoExactSolution)?;
    let (diff, conv, react) = (spec.diffusion.clone(), spec.convection.clone(), spec.reaction.clone());
    let ex = exact.clone();
    let source: Field<f64> = Arc::new(move |x, anchor| {
        let a = diff.matrix(x, anchor);
        let grad = ex.grad_u(x);
        let hess = ex.hessian_u(x);
        let div_a_grad = diff.divergence(x, anchor).dot(&grad) + a.component_mul(&hess).sum();
        let u = ex.u(x);
        -div_a_grad + (conv.divergence)(x) * u + (conv.b)(x).dot(&grad) + react(x, anchor) * u
    });
    let ex = exact.clone();
    let u0: PointField<f64> = Arc::new(move |x| ex.u(x) - ex.u_e(x));
    let (diff, conv) = (spec.diffusion.clone(), spec.convection.clone());
    let t0: TraceFlux = Arc::new(move |x, anchor, n, kind| {
        let mut flux = diff.matrix(x, anchor) * exact.grad_u(x);
        if kind == BoundaryKind::Inflow {
            flux -= (conv.b)(x) * exact.u(x);
        }
        flux.dot(&n) - exact.grad_u_e(x).dot(&n)
    });
    Ok(DerivedData { source, u0, t0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example {
    Ex1,
    Ex2,
    Ex3,
}

impl FromStr for Example {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ex1" | "1" => Ok(Example::Ex1),
            "ex2" | "2" => Ok(Example::Ex2),
            "ex3" | "3" => Ok(Example::Ex3),
            _ => Err(Error::UnknownExample(s.to_string())),
        }
    }
}

impl Example {
    pub fn name(self) -> &'static str {
        match self {
            Example::Ex1 => "ex1",
            Example::Ex2 => "ex2",
            Example::Ex3 => "ex3",
        }
    }
}

/// `log|x - center|`.
fn log_exterior(center: Point, x: Point) -> (f64, Point) {
    let d = x - center;
    let r2 = d.norm_squared();
    (0.5 * r2.ln(), d / r2)
}

/// `u = r^(2/3) sin(2 phi / 3)` on the L-shape, `u_e = log|x - (-1/8, 1/8)|`.
pub struct Ex1Exact;

impl Ex1Exact {
    fn polar(x: Point) -> (f64, f64) {
        let mut phi = x.y.atan2(x.x);
        if phi < 0.0 {
            phi += 2.0 * std::f64::consts::PI;
        }
        (x.norm(), phi)
    }
}

impl ExactSolution for Ex1Exact {
    fn u(&self, x: Point) -> f64 {
        let (r, phi) = Self::polar(x);
        r.powf(2.0 / 3.0) * (2.0 * phi / 3.0).sin()
    }

    fn grad_u(&self, x: Point) -> Point {
        let (r, phi) = Self::polar(x);
        if r == 0.0 {
            return Point::zeros();
        }
        let s = 2.0 / 3.0 * r.powf(-1.0 / 3.0);
        Point::new(-s * (phi / 3.0).sin(), s * (phi / 3.0).cos())
    }

    fn hessian_u(&self, x: Point) -> Matrix2<f64> {
        let (r, phi) = Self::polar(x);
        if r == 0.0 {
            return Matrix2::zeros();
        }
        let s = 2.0 / 9.0 * r.powf(-4.0 / 3.0);
        let xx = s * (4.0 * phi / 3.0).sin();
        let xy = -s * (4.0 * phi / 3.0).cos();
        Matrix2::new(xx, xy, xy, -xx)
    }

    fn u_e(&self, x: Point) -> f64 {
        log_exterior(Point::new(-0.125, 0.125), x).0
    }

    fn grad_u_e(&self, x: Point) -> Point {
        log_exterior(Point::new(-0.125, 0.125), x).1
    }

    fn singular_point(&self) -> Option<Point> {
        Some(Point::zeros())
    }
}

/// `u = (1 - tanh((1/4 - x1) / 0.02)) / 2`, `u_e = log|x - (1/4, 1/4)|`.
pub struct Ex2Exact;

impl Ex2Exact {
    fn s(x: Point) -> f64 {
        (0.25 - x.x) / 0.02
    }
}

impl ExactSolution for Ex2Exact {
    fn u(&self, x: Point) -> f64 {
        0.5 * (1.0 - Self::s(x).tanh())
    }

    fn grad_u(&self, x: Point) -> Point {
        let t = Self::s(x).tanh();
        Point::new(25.0 * (1.0 - t * t), 0.0)
    }

    fn hessian_u(&self, x: Point) -> Matrix2<f64> {
        let t = Self::s(x).tanh();
        Matrix2::new(2500.0 * (1.0 - t * t) * t, 0.0, 0.0, 0.0)
    }

    fn u_e(&self, x: Point) -> f64 {
        log_exterior(Point::new(0.25, 0.25), x).0
    }

    fn grad_u_e(&self, x: Point) -> Point {
        log_exterior(Point::new(0.25, 0.25), x).1
    }
}

fn ex1_diffusion() -> Diffusion {
    Diffusion::Matrix {
        a: Arc::new(|x: Point, _| {
            let off = 160.0 * x.x * x.y;
            Matrix2::new(10.0 + x.x.cos(), off, off, 10.0 + x.y.sin())
        }),
        divergence: Arc::new(|x: Point, _| Point::new(-x.x.sin() + 160.0 * x.x, 160.0 * x.y + x.y.cos())),
    }
}

fn zero_field() -> Field<f64> {
    Arc::new(|_, _| 0.0)
}

/// Benchmark problem with its default convection.
pub fn builtin_problem(example: Example) -> Result<ProblemSpec> {
    match example {
        Example::Ex1 => ProblemSpec {
            name: "ex1".into(),
            initial_mesh: InitialMesh::Structured { domain: Domain::LShape, elements: 48 },
            diffusion: ex1_diffusion(),
            convection: Convection::zero(),
            reaction: zero_field(),
            source: zero_field(),
            u0: Arc::new(|_| 0.0),
            t0: Arc::new(|_, _, _, _| 0.0),
            radiation: Radiation::LogGrowth,
            exact: Some(Arc::new(Ex1Exact)),
            upwind_default: false,
        }
        .with_derived_data(),
        Example::Ex2 => ex2_with_convection(1000.0),
        Example::Ex3 => Ok(ProblemSpec {
            name: "ex3".into(),
            initial_mesh: InitialMesh::Structured { domain: Domain::LShape, elements: 48 },
            diffusion: Diffusion::Scalar(Arc::new(|_, anchor: Point| {
                if anchor.x > 0.0 {
                    0.5
                } else if anchor.y <= 0.0 {
                    10.0
                } else {
                    50.0
                }
            })),
            convection: Convection::constant(Point::new(15000.0, 10000.0)),
            reaction: Arc::new(|_, _| 0.01),
            source: Arc::new(|x: Point, _| {
                if (-0.2..=-0.1).contains(&x.x) && (-0.2..=-0.05).contains(&x.y) {
                    50.0
                } else {
                    0.0
                }
            }),
            u0: Arc::new(|_| 0.0),
            t0: Arc::new(|_, _, _, _| 0.0),
            radiation: Radiation::FarField,
            exact: None,
            upwind_default: true,
        }),
    }
}

/// The shock problem with `b = factor (x1, 0)`.
pub fn ex2_with_convection(factor: f64) -> Result<ProblemSpec> {
    ProblemSpec {
        name: "ex2".into(),
        initial_mesh: InitialMesh::Structured { domain: Domain::Square, elements: 64 },
        diffusion: Diffusion::Scalar(Arc::new(|_, anchor: Point| if anchor.y < 0.25 { 0.42 } else { 10.0 })),
        convection: Convection::affine(Point::zeros(), Matrix2::new(factor, 0.0, 0.0, 0.0)),
        reaction: zero_field(),
        source: zero_field(),
        u0: Arc::new(|_| 0.0),
        t0: Arc::new(|_, _, _, _| 0.0),
        radiation: Radiation::LogGrowth,
        exact: Some(Arc::new(Ex2Exact)),
        upwind_default: true,
    }
    .with_derived_data()
}

/// Outcome of [`validate`].
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    /// Sample points where `1/2 div b + c < -1e-12`.
    pub coercivity_violations: Vec<Point>,
    pub domain_diameter: f64,
    /// Elements across which a piecewise coefficient jumps.
    pub misaligned_elements: Vec<usize>,
}

impl ValidationReport {
    pub fn diameter_ok(&self) -> bool {
        self.domain_diameter < 1.0
    }

    pub fn passed(&self) -> bool {
        self.coercivity_violations.is_empty() && self.diameter_ok() && self.misaligned_elements.is_empty()
    }
}

/// Check weak coerciveness, `diam(Omega) < 1`, and that the mesh resolves the
/// discontinuities of the diffusion and reaction coefficients.
pub fn validate(spec: &ProblemSpec, mesh: &Mesh) -> ValidationReport {
    let mut report = ValidationReport { domain_diameter: mesh.domain_diameter(), ..Default::default() };
    for t in 0..mesh.n_triangles() {
        let g = mesh.geometry(t);
        let anchor = g.barycenter;
        for x in triangle_degree4().points.iter().map(|&l| g.point(l)).chain(g.vertices) {
            if spec.coercivity(x, anchor) < -1e-12 {
                report.coercivity_violations.push(x);
            }
        }
        let aligned = triangle_degree6().points.iter().map(|&l| g.point(l)).all(|x| {
            let (a1, a2) = (spec.diffusion.matrix(x, x), spec.diffusion.matrix(x, anchor));
            let (c1, c2) = ((spec.reaction)(x, x), (spec.reaction)(x, anchor));
            (a1 - a2).abs().max() <= 1e-12 * (1.0 + a2.abs().max()) && (c1 - c2).abs() <= 1e-12 * (1.0 + c2.abs())
        });
        if !aligned {
            report.misaligned_elements.push(t);
        }
    }
    report
}

/// Piecewise constant function given by closed rectangles; the first
/// rectangle containing the point wins.
#[derive(Debug, Clone, Default)]
pub struct PiecewiseConstant {
    pub default: f64,
    /// `([x0, x1, y0, y1], value)`.
    pub rects: Vec<([f64; 4], f64)>,
}

impl PiecewiseConstant {
    pub fn eval(&self, p: Point) -> f64 {
        self.rects
            .iter()
            .find(|(r, _)| (r[0]..=r[1]).contains(&p.x) && (r[2]..=r[3]).contains(&p.y))
            .map_or(self.default, |&(_, v)| v)
    }
}

/// Keys understood by [`problem_from_config`].
pub const PROBLEM_KEYS: &[&str] = &[
    "example",
    "conv_factor",
    "mesh",
    "domain",
    "elements",
    "alpha",
    "alpha_rect",
    "reaction",
    "reaction_rect",
    "source",
    "source_rect",
    "convection",
    "u0",
    "t0",
    "radiation",
    "upwind",
];

/// Parse `key = value` lines. Blank lines and `#` comments are skipped;
/// repeated keys keep every value in order.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, Vec<String>>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        out.entry(k.trim().to_string()).or_default().push(v.trim().to_string());
    }
    Ok(out)
}

fn floats(s: &str, n: usize, key: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = s
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("{key}: expected numbers, got `{s}`")))?;
    if v.len() != n {
        return Err(Error::Config(format!("{key}: expected {n} numbers, got {}", v.len())));
    }
    Ok(v)
}

fn single<'a>(cfg: &'a BTreeMap<String, Vec<String>>, key: &str) -> Option<&'a str> {
    cfg.get(key).and_then(|v| v.last()).map(String::as_str)
}

fn piecewise(cfg: &BTreeMap<String, Vec<String>>, key: &str, rect_key: &str, default: f64) -> Result<PiecewiseConstant> {
    let default = match single(cfg, key) {
        Some(s) => floats(s, 1, key)?[0],
        None => default,
    };
    let rects = cfg
        .get(rect_key)
        .into_iter()
        .flatten()
        .map(|s| floats(s, 5, rect_key).map(|v| ([v[0], v[1], v[2], v[3]], v[4])))
        .collect::<Result<_>>()?;
    Ok(PiecewiseConstant { default, rects })
}

/// Build a problem from configuration entries. `example = ex1|ex2|ex3`
/// selects a benchmark; `example = custom` reads a mesh (`mesh = path` to a
/// dump file, or `domain` plus `elements`) and piecewise constant tables.
pub fn problem_from_config(cfg: &BTreeMap<String, Vec<String>>, base_dir: &Path) -> Result<ProblemSpec> {
    let example = single(cfg, "example").ok_or_else(|| Error::Config("missing key `example`".into()))?;
    if example != "custom" {
        let ex: Example = example.parse()?;
        return match (ex, single(cfg, "conv_factor")) {
            (Example::Ex2, Some(f)) => ex2_with_convection(floats(f, 1, "conv_factor")?[0]),
            _ => builtin_problem(ex),
        };
    }
    let initial_mesh = if let Some(path) = single(cfg, "mesh") {
        let text = std::fs::read_to_string(base_dir.join(path))?;
        InitialMesh::Given(Mesh::from_dump(&text)?)
    } else {
        let domain: Domain = single(cfg, "domain").unwrap_or("square").parse()?;
        let elements = single(cfg, "elements")
            .unwrap_or("64")
            .parse()
            .map_err(|_| Error::Config("elements: expected an integer".into()))?;
        InitialMesh::Structured { domain, elements }
    };
    let alpha = piecewise(cfg, "alpha", "alpha_rect", 1.0)?;
    let reaction = piecewise(cfg, "reaction", "reaction_rect", 0.0)?;
    let source = piecewise(cfg, "source", "source_rect", 0.0)?;
    let b = match single(cfg, "convection") {
        Some(s) => {
            let v = floats(s, 2, "convection")?;
            Point::new(v[0], v[1])
        }
        None => Point::zeros(),
    };
    let u0 = single(cfg, "u0").map(|s| floats(s, 1, "u0")).transpose()?.map_or(0.0, |v| v[0]);
    let t0 = single(cfg, "t0").map(|s| floats(s, 1, "t0")).transpose()?.map_or(0.0, |v| v[0]);
    let radiation = match single(cfg, "radiation").unwrap_or("log") {
        "log" => Radiation::LogGrowth,
        "far-field" | "far_field" => Radiation::FarField,
        other => return Err(Error::Config(format!("radiation: unknown variant `{other}`"))),
    };
    Ok(ProblemSpec {
        name: "custom".into(),
        initial_mesh,
        diffusion: Diffusion::Scalar(Arc::new(move |_, anchor| alpha.eval(anchor))),
        convection: Convection::constant(b),
        reaction: Arc::new(move |_, anchor| reaction.eval(anchor)),
        source: Arc::new(move |x, _| source.eval(x)),
        u0: Arc::new(move |_| u0),
        t0: Arc::new(move |_, _, _, _| t0),
        radiation,
        exact: None,
        upwind_default: b != Point::zeros(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn builtin_values() {
        let ex2 = builtin_problem(Example::Ex2).unwrap();
        let p = Point::new(0.1, 0.1);
        assert_eq!(ex2.diffusion.lambda_min(p, p), 0.42);
        let ex3 = builtin_problem(Example::Ex3).unwrap();
        let p = Point::new(-0.15, -0.1);
        assert_eq!((ex3.source)(p, p), 50.0);
        let ex1 = builtin_problem(Example::Ex1).unwrap();
        let o = Point::zeros();
        assert_eq!(ex1.diffusion.matrix(o, o), Matrix2::new(11.0, 0.0, 0.0, 10.0));
        assert!("ex4".parse::<Example>().is_err());
    }

    #[test]
    fn boundary_classification() {
        let ex2 = builtin_problem(Example::Ex2).unwrap();
        assert_eq!(ex2.classify(Point::new(0.0, 0.2), Point::new(-1.0, 0.0)), BoundaryKind::Outflow);
        assert_eq!(ex2.classify(Point::new(0.5, 0.2), Point::new(1.0, 0.0)), BoundaryKind::Outflow);
        let ex3 = builtin_problem(Example::Ex3).unwrap();
        assert_eq!(ex3.classify(Point::new(-0.1, -0.25), Point::new(0.0, -1.0)), BoundaryKind::Inflow);
    }

    #[test]
    fn ex1_derivatives_match_finite_differences() {
        let e = Ex1Exact;
        let h = 1e-5;
        for p in [Point::new(-0.1, 0.1), Point::new(0.13, 0.02), Point::new(-0.2, -0.17)] {
            let g = e.grad_u(p);
            let dx = (e.u(p + Point::new(h, 0.0)) - e.u(p - Point::new(h, 0.0))) / (2.0 * h);
            let dy = (e.u(p + Point::new(0.0, h)) - e.u(p - Point::new(0.0, h))) / (2.0 * h);
            assert!((g.x - dx).abs() < 1e-7 && (g.y - dy).abs() < 1e-7);
            let hs = e.hessian_u(p);
            let gx = (e.grad_u(p + Point::new(h, 0.0)) - e.grad_u(p - Point::new(h, 0.0))) / (2.0 * h);
            assert!((hs[(0, 0)] - gx.x).abs() < 1e-5 && (hs[(0, 1)] - gx.y).abs() < 1e-5);
        }
        // zero on both straight edges through the corner
        assert!(e.u(Point::new(0.1, 0.0)).abs() < 1e-15);
        assert!(e.u(Point::new(0.0, -0.1)).abs() < 1e-15);
    }

    #[test]
    fn harmonic_data_gives_zero_source() {
        struct Harmonic;
        impl ExactSolution for Harmonic {
            fn u(&self, x: Point) -> f64 {
                x.x * x.x - x.y * x.y
            }
            fn grad_u(&self, x: Point) -> Point {
                Point::new(2.0 * x.x, -2.0 * x.y)
            }
            fn hessian_u(&self, _: Point) -> Matrix2<f64> {
                Matrix2::new(2.0, 0.0, 0.0, -2.0)
            }
            fn u_e(&self, x: Point) -> f64 {
                log_exterior(Point::new(0.25, 0.25), x).0
            }
            fn grad_u_e(&self, x: Point) -> Point {
                log_exterior(Point::new(0.25, 0.25), x).1
            }
        }
        let mesh = build_initial_mesh(Domain::Square, 2).unwrap();
        let mut spec = ProblemSpec::diffusion_only(mesh, 1.0);
        spec.exact = Some(Arc::new(Harmonic));
        let spec = spec.with_derived_data().unwrap();
        for p in [Point::new(0.1, 0.2), Point::new(0.4, 0.05)] {
            assert!((spec.source)(p, p).abs() < 1e-14);
        }
        let t0 = (spec.t0)(Point::new(0.5, 0.1), Point::new(0.4, 0.1), Point::new(1.0, 0.0), BoundaryKind::Outflow);
        assert_relative_eq!(t0, 1.0 - 0.25 / (0.0625 + 0.0225), max_relative = 1e-13);
    }

    #[test]
    fn validation() {
        let ex2 = builtin_problem(Example::Ex2).unwrap();
        let mesh = ex2.initial_mesh.build().unwrap();
        assert!(validate(&ex2, &mesh).passed());
        let ex3 = builtin_problem(Example::Ex3).unwrap();
        let mesh = ex3.initial_mesh.build().unwrap();
        assert!(validate(&ex3, &mesh).passed());
        let mut bad = ex3.clone();
        bad.convection = Convection::affine(Point::zeros(), Matrix2::new(-10.0, 0.0, 0.0, 0.0));
        bad.reaction = zero_field();
        let r = validate(&bad, &mesh);
        assert_eq!(r.coercivity_violations.len(), mesh.n_triangles() * 9);
        // ex2 on a mesh that does not resolve x2 = 1/4
        let coarse = build_initial_mesh(Domain::Square, 4).unwrap();
        assert!(!validate(&ex2, &coarse).misaligned_elements.is_empty());
    }

    #[test]
    fn config_parsing() {
        let text = "example = custom\ndomain = square\nelements = 16\nalpha = 2\nalpha_rect = 0 0.25 0 0.5 5 # left half\nconvection = 1 0\n";
        let cfg = parse_config(text).unwrap();
        let spec = problem_from_config(&cfg, Path::new(".")).unwrap();
        let p = Point::new(0.1, 0.1);
        assert_eq!(spec.diffusion.lambda_min(p, p), 5.0);
        let q = Point::new(0.4, 0.1);
        assert_eq!(spec.diffusion.lambda_min(q, q), 2.0);
        assert!(spec.upwind_default);
        assert!(parse_config("no equals sign").is_err());
        let cfg = parse_config("example = custom\nconvection = 1\n").unwrap();
        assert!(problem_from_config(&cfg, Path::new(".")).is_err());
    }
}
