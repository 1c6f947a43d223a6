//! Residual error indicators: the robust indicator with its upwind addition,
//! the non-robust indicator, and diagnostics (reliability constant,
//! quasi-monotonicity of the diffusion).

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;

use crate::bem::BoundaryResidual;
use crate::error::{Error, Result};
use crate::fvm::{integrate_segment, integrate_triangle, SEGMENT_POINTS};
use crate::mesh::{ElementGeometry, Mesh, Point};
use crate::model::{BoundaryKind, ProblemSpec};
use crate::quadrature::gauss;
use crate::solver::{DiscreteSolution, Discretization};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Robust,
    NonRobust,
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "robust" => Ok(EstimatorKind::Robust),
            "nonrobust" | "non-robust" => Ok(EstimatorKind::NonRobust),
            _ => Err(Error::Config(format!("unknown estimator `{s}`"))),
        }
    }
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Robust => "robust",
            EstimatorKind::NonRobust => "nonrobust",
        }
    }
}

/// `min{beta^-1/2, h alpha^-1/2}`, the second argument when `beta` vanishes.
pub fn mu(beta: f64, h: f64, alpha: f64) -> f64 {
    let second = h / alpha.sqrt();
    if beta < 1e-14 {
        second
    } else {
        second.min(1.0 / beta.sqrt())
    }
}

/// Coefficient weights of the robust indicator.
#[derive(Debug, Clone)]
pub struct CoefficientScales {
    /// Smallest eigenvalue of `A` at the barycenter.
    pub alpha_t: Vec<f64>,
    pub beta_t: Vec<f64>,
    pub mu_t: Vec<f64>,
    /// Per mesh edge: max of the adjacent `alpha_T`.
    pub alpha_e: Vec<f64>,
    /// Per mesh edge: min of the adjacent `beta_T`.
    pub beta_e: Vec<f64>,
    pub mu_e: Vec<f64>,
}

impl CoefficientScales {
    pub fn new(mesh: &Mesh, spec: &ProblemSpec) -> Self {
        let per_t: Vec<(f64, f64, f64)> = (0..mesh.n_triangles())
            .into_par_iter()
            .map(|t| {
                let g = mesh.geometry(t);
                let alpha = spec.diffusion.lambda_min(g.barycenter, g.barycenter);
                let beta = spec.coercivity_min(&g);
                (alpha, beta, mu(beta, g.diameter, alpha))
            })
            .collect();
        let alpha_t: Vec<f64> = per_t.iter().map(|v| v.0).collect();
        let beta_t: Vec<f64> = per_t.iter().map(|v| v.1).collect();
        let mu_t = per_t.iter().map(|v| v.2).collect();
        let mut alpha_e = Vec::with_capacity(mesh.edges().len());
        let mut beta_e = Vec::with_capacity(mesh.edges().len());
        let mut mu_e = Vec::with_capacity(mesh.edges().len());
        for e in mesh.edges() {
            let adj = e.adjacent();
            let a = adj.iter().map(|&t| alpha_t[t]).fold(f64::NEG_INFINITY, f64::max);
            let b = adj.iter().map(|&t| beta_t[t]).fold(f64::INFINITY, f64::min);
            let h = (mesh.vertices()[e.nodes[1]] - mesh.vertices()[e.nodes[0]]).norm();
            alpha_e.push(a);
            beta_e.push(b);
            mu_e.push(mu(b, h, a));
        }
        Self { alpha_t, beta_t, mu_t, alpha_e, beta_e, mu_e }
    }
}

/// Residual `R = f - div(-A grad u_h + b u_h) - c u_h` at `x` in element `g`,
/// for an affine `u_h` with vertex values `ul`.
pub fn residual_at(g: &ElementGeometry, spec: &ProblemSpec, ul: [f64; 3], x: Point) -> f64 {
    let anchor = g.barycenter;
    let grad = g.grad_lambda[0] * ul[0] + g.grad_lambda[1] * ul[1] + g.grad_lambda[2] * ul[2];
    let l = g.barycentric(x);
    let u = ul[0] * l[0] + ul[1] * l[1] + ul[2] * l[2];
    (spec.source)(x, anchor) + spec.diffusion.divergence(x, anchor).dot(&grad)
        - (spec.convection.divergence)(x) * u
        - spec.b(x).dot(&grad)
        - (spec.reaction)(x, anchor) * u
}

fn local_values(mesh: &Mesh, u: &[f64], t: usize) -> [f64; 3] {
    let tri = mesh.triangles()[t];
    [u[tri[0]], u[tri[1]], u[tri[2]]]
}

fn red_children(p: [Point; 3]) -> [[Point; 3]; 4] {
    let [a, b, c] = p;
    let m = [0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)];
    [[a, m[0], m[2]], [m[0], b, m[1]], [m[2], m[1], c], [m[1], m[2], m[0]]]
}

/// Degree-6 quadrature on red children, split once more where the parent
/// and children values differ by more than `1e-12` relative. The depth is
/// capped because `R` need not be square integrable at singular corners.
fn integrate_adaptive(p: [Point; 3], whole: f64, depth: usize, g: &impl Fn(Point) -> f64) -> f64 {
    let parts = red_children(p).map(|q| (q, integrate_triangle(q, g)));
    let sum: f64 = parts.iter().map(|v| v.1).sum();
    if depth == 0 || (sum - whole).abs() <= 1e-12 * sum.abs() {
        return sum;
    }
    parts.iter().map(|&(q, v)| integrate_adaptive(q, v, depth - 1, g)).sum()
}

/// `||R||_{L2(T)}` by composite degree-6 quadrature.
pub fn element_residual(mesh: &Mesh, spec: &ProblemSpec, u: &[f64], t: usize) -> f64 {
    let g = mesh.geometry(t);
    let ul = local_values(mesh, u, t);
    let f = |x| residual_at(&g, spec, ul, x).powi(2);
    integrate_adaptive(g.vertices, integrate_triangle(g.vertices, f), 1, &f).sqrt()
}

/// Position of every boundary edge in `Mesh::boundary()`, by mesh edge.
pub fn boundary_positions(mesh: &Mesh) -> Vec<Option<usize>> {
    let mut pos = vec![None; mesh.edges().len()];
    for (k, b) in mesh.boundary().iter().enumerate() {
        pos[b.edge] = Some(k);
    }
    pos
}

/// Edge residual `J` on mesh edge `e` at `x`. Interior edges use the outward
/// normal of the first adjacent triangle.
pub fn jump_at(mesh: &Mesh, spec: &ProblemSpec, sol: &DiscreteSolution, kinds: &[BoundaryKind], positions: &[Option<usize>], e: usize, x: Point) -> f64 {
    let edge = &mesh.edges()[e];
    let flux = |t: usize| {
        let g = mesh.geometry(t);
        let ul = local_values(mesh, &sol.u, t);
        let grad = g.grad_lambda[0] * ul[0] + g.grad_lambda[1] * ul[1] + g.grad_lambda[2] * ul[2];
        let f = -(spec.diffusion.matrix(x, g.barycenter) * grad);
        (g, ul, f)
    };
    let t = edge.triangles[0];
    let (g, ul, flux_t) = flux(t);
    let k = mesh.triangle_edges()[t].iter().position(|&v| v == e).expect("edge belongs to its triangle");
    let d = g.vertices[(k + 1) % 3] - g.vertices[k];
    let n = Point::new(d.y, -d.x) / d.norm();
    match positions[e] {
        None => {
            let (_, _, flux_other) = flux(edge.triangles[1]);
            (flux_t - flux_other).dot(&n)
        }
        Some(pos) => {
            let kind = kinds[pos];
            let mut v = flux_t.dot(&n);
            if kind == BoundaryKind::Inflow {
                let l = g.barycentric(x);
                let u = ul[0] * l[0] + ul[1] * l[1] + ul[2] * l[2];
                v += spec.b(x).dot(&n) * u;
            }
            v + sol.phi[pos] + (spec.t0)(x, g.barycenter, n, kind)
        }
    }
}

/// `||J||_{L2(E)}` on mesh edge `e`.
pub fn edge_jump(mesh: &Mesh, spec: &ProblemSpec, sol: &DiscreteSolution, kinds: &[BoundaryKind], positions: &[Option<usize>], e: usize) -> f64 {
    let [a, b] = mesh.edges()[e].nodes;
    let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
    integrate_segment(pa, pb, |x| jump_at(mesh, spec, sol, kinds, positions, e, x).powi(2)).sqrt()
}

/// Per-element indicator parts; `eta2 = volume + jump_interior +
/// jump_boundary + bem`.
#[derive(Debug, Clone)]
pub struct IndicatorReport {
    pub eta2: Vec<f64>,
    pub eta_up2: Vec<f64>,
    pub volume: Vec<f64>,
    pub jump_interior: Vec<f64>,
    pub jump_boundary: Vec<f64>,
    pub bem: Vec<f64>,
}

impl IndicatorReport {
    /// `(sum_T eta_T^2 + eta_T,up^2)^(1/2)`.
    pub fn eta(&self) -> f64 {
        self.eta2.iter().zip(&self.eta_up2).map(|(a, b)| a + b).sum::<f64>().sqrt()
    }

    /// `(sum_T eta_T,up^2)^(1/2)`.
    pub fn eta_up(&self) -> f64 {
        self.eta_up2.iter().sum::<f64>().sqrt()
    }

    /// Values used for marking.
    pub fn marking_values(&self) -> Vec<f64> {
        self.eta2.iter().zip(&self.eta_up2).map(|(a, b)| a + b).collect()
    }

    /// One line per element: `T eta_T2 eta_up_T2 vol jump_int jump_bnd bem`.
    pub fn to_dump(&self) -> String {
        let mut s = String::new();
        for t in 0..self.eta2.len() {
            let _ = writeln!(
                s,
                "{t} {:e} {:e} {:e} {:e} {:e} {:e}",
                self.eta2[t], self.eta_up2[t], self.volume[t], self.jump_interior[t], self.jump_boundary[t], self.bem[t]
            );
        }
        s
    }
}

/// Per-edge data shared by both indicators.
struct EdgeData {
    /// `||J||^2` per mesh edge.
    jump2: Vec<f64>,
    /// `h_E^2 q_E^2` per boundary position, `q_E` the arc-length difference
    /// quotient of `(1/2 - K)(u0 - u_h) - V phi_h`.
    tangential: Vec<f64>,
}

fn edge_data(disc: &Discretization, spec: &ProblemSpec, sol: &DiscreteSolution) -> Result<EdgeData> {
    let mesh = &disc.mesh;
    let positions = boundary_positions(mesh);
    let jump2: Vec<f64> = (0..mesh.edges().len())
        .into_par_iter()
        .map(|e| edge_jump(mesh, spec, sol, &disc.kinds, &positions, e).powi(2))
        .collect();
    let residual = BoundaryResidual::new(&disc.boundary, sol.boundary_defect(&disc.boundary, spec), sol.phi.clone())?;
    let tangential: Vec<f64> = (0..disc.boundary.n_edges())
        .into_par_iter()
        .map(|k| {
            let h = disc.boundary.segment(k).length;
            residual.arc_derivative(k).map(|q| h * h * q * q)
        })
        .collect::<Result<_>>()?;
    Ok(EdgeData { jump2, tangential })
}

fn indicators(disc: &Discretization, spec: &ProblemSpec, sol: &DiscreteSolution, scales: Option<&CoefficientScales>) -> Result<IndicatorReport> {
    let mesh = &disc.mesh;
    let data = edge_data(disc, spec, sol)?;
    let positions = boundary_positions(mesh);
    let parts: Vec<[f64; 4]> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let g = mesh.geometry(t);
            let r = element_residual(mesh, spec, &sol.u, t);
            let volume = match scales {
                Some(s) => s.mu_t[t].powi(2) * r * r,
                None => g.diameter * g.diameter * r * r,
            };
            let (mut ji, mut jb, mut bem) = (0.0, 0.0, 0.0);
            for (k, &e) in mesh.triangle_edges()[t].iter().enumerate() {
                let weight = match scales {
                    Some(s) => s.mu_e[e] / s.alpha_e[e].sqrt(),
                    None => g.edge_lengths[k],
                };
                match positions[e] {
                    None => ji += 0.5 * weight * data.jump2[e],
                    Some(pos) => {
                        jb += weight * data.jump2[e];
                        bem += data.tangential[pos];
                    }
                }
            }
            [volume, ji, jb, bem]
        })
        .collect();
    let n = parts.len();
    let mut report = IndicatorReport {
        eta2: Vec::with_capacity(n),
        eta_up2: vec![0.0; n],
        volume: Vec::with_capacity(n),
        jump_interior: Vec::with_capacity(n),
        jump_boundary: Vec::with_capacity(n),
        bem: Vec::with_capacity(n),
    };
    for p in parts {
        report.volume.push(p[0]);
        report.jump_interior.push(p[1]);
        report.jump_boundary.push(p[2]);
        report.bem.push(p[3]);
        report.eta2.push(p[0] + p[1] + p[2] + p[3]);
    }
    Ok(report)
}

/// Robust indicator without the upwind addition.
pub fn eta_robust(disc: &Discretization, spec: &ProblemSpec, sol: &DiscreteSolution, scales: &CoefficientScales) -> Result<IndicatorReport> {
    indicators(disc, spec, sol, Some(scales))
}

/// Non-robust indicator with plain `h_T`, `h_E` weights.
pub fn eta_nonrobust(disc: &Discretization, spec: &ProblemSpec, sol: &DiscreteSolution) -> Result<IndicatorReport> {
    indicators(disc, spec, sol, None)
}

/// `alpha_T^-1/2 mu_T sum ||b . n_i (u_h - u_h,ij)||^2` over the element's
/// dual segments.
pub fn eta_upwind(disc: &Discretization, spec: &ProblemSpec, sol: &DiscreteSolution, scales: &CoefficientScales) -> Result<Vec<f64>> {
    let table = match (&disc.fvm.upwind, sol.upwind) {
        (Some(t), true) => t,
        _ => return Err(Error::NotUpwind),
    };
    let mesh = &disc.mesh;
    Ok((0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let g = mesh.geometry(t);
            let ul = local_values(mesh, &sol.u, t);
            let mut sum = 0.0;
            for s in disc.dual.segments_of(t) {
                let up = sol.u[table.upwind_node(s.edge)];
                for (q, w) in gauss(SEGMENT_POINTS).iter() {
                    let x = s.start + (s.end - s.start) * q;
                    let l = g.barycentric(x);
                    let u = ul[0] * l[0] + ul[1] * l[1] + ul[2] * l[2];
                    sum += w * s.length * (spec.b(x).dot(&s.normal) * (u - up)).powi(2);
                }
            }
            scales.mu_t[t] / scales.alpha_t[t].sqrt() * sum
        })
        .collect())
}

/// Indicator of the requested kind; the robust one includes the upwind
/// addition when the solution was computed with upwinding.
pub fn estimate(disc: &Discretization, spec: &ProblemSpec, sol: &DiscreteSolution, kind: EstimatorKind) -> Result<IndicatorReport> {
    match kind {
        EstimatorKind::NonRobust => eta_nonrobust(disc, spec, sol),
        EstimatorKind::Robust => {
            let scales = CoefficientScales::new(&disc.mesh, spec);
            let mut report = eta_robust(disc, spec, sol, &scales)?;
            if sol.upwind {
                report.eta_up2 = eta_upwind(disc, spec, sol, &scales)?;
            }
            Ok(report)
        }
    }
}

/// Reliability constant diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reliability {
    pub c_harm: f64,
    /// `1 / min{eps, C_harm}`.
    pub factor: f64,
    /// `C_K / (4 (1 - eps))`: `C_harm > 0` above it.
    pub positivity_threshold: f64,
    /// `(4 eps (1 - eps) + C_K) / (4 (1 - eps)^2)`: the factor equals
    /// `1 / eps` above it.
    pub saturation_threshold: f64,
}

pub fn reliability_constant(eps: f64, alpha_min: f64, c_k: f64) -> Result<Reliability> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidEpsilon(eps));
    }
    let positivity_threshold = c_k / (4.0 * (1.0 - eps));
    let margin = (1.0 - eps) * alpha_min - 0.25 * c_k;
    if margin <= 0.0 {
        return Err(Error::ReliabilityHypothesis { margin, threshold: positivity_threshold });
    }
    let a = (1.0 - eps) * alpha_min;
    let c_harm = 0.5 * (a + 1.0 - ((a - 1.0).powi(2) + c_k).sqrt());
    Ok(Reliability {
        c_harm,
        factor: 1.0 / eps.min(c_harm),
        positivity_threshold,
        saturation_threshold: (4.0 * eps * (1.0 - eps) + c_k) / (4.0 * (1.0 - eps).powi(2)),
    })
}

/// Elementwise constant diffusion values grouped into subdomains.
#[derive(Debug, Clone)]
pub struct SubdomainPartition {
    pub element_subdomain: Vec<usize>,
    pub alpha: Vec<f64>,
}

impl SubdomainPartition {
    pub fn from_values(values: &[f64]) -> Self {
        let mut alpha: Vec<f64> = Vec::new();
        let element_subdomain = values
            .iter()
            .map(|&v| match alpha.iter().position(|&a| a == v) {
                Some(k) => k,
                None => {
                    alpha.push(v);
                    alpha.len() - 1
                }
            })
            .collect();
        Self { element_subdomain, alpha }
    }

    pub fn from_spec(spec: &ProblemSpec, mesh: &Mesh) -> Result<Self> {
        if !spec.diffusion.is_scalar() {
            return Err(Error::MatrixDiffusion);
        }
        let values: Vec<f64> = (0..mesh.n_triangles())
            .map(|t| {
                let c = mesh.geometry(t).barycenter;
                spec.diffusion.lambda_min(c, c)
            })
            .collect();
        Ok(Self::from_values(&values))
    }

    pub fn alpha_of(&self, t: usize) -> f64 {
        self.alpha[self.element_subdomain[t]]
    }
}

#[derive(Debug, Clone)]
pub struct QuasiMonotonicityReport {
    pub node_ok: Vec<bool>,
}

impl QuasiMonotonicityReport {
    pub fn passed(&self) -> bool {
        self.node_ok.iter().all(|&b| b)
    }

    pub fn failed_nodes(&self) -> Vec<usize> {
        (0..self.node_ok.len()).filter(|&i| !self.node_ok[i]).collect()
    }
}

/// For every node `a` and every patch element `T`, the elements of the patch
/// with `alpha >= alpha_T` that are edge-connected to `T` through edges at
/// `a` must include every element of maximal `alpha` in the patch.
pub fn check_quasi_monotonicity(mesh: &Mesh, partition: &SubdomainPartition) -> QuasiMonotonicityReport {
    let mut patches = vec![Vec::new(); mesh.n_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        for &v in tri {
            patches[v].push(t);
        }
    }
    let node_ok = patches
        .iter()
        .enumerate()
        .map(|(a, patch)| {
            let alpha: Vec<f64> = patch.iter().map(|&t| partition.alpha_of(t)).collect();
            let max = alpha.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let shares_edge_at_a = |p: usize, q: usize| {
                let (tp, tq) = (mesh.triangles()[patch[p]], mesh.triangles()[patch[q]]);
                tp.iter().filter(|&&v| v != a && tq.contains(&v)).count() == 1
            };
            (0..patch.len()).all(|start| {
                let mut seen = vec![false; patch.len()];
                seen[start] = true;
                let mut queue = VecDeque::from([start]);
                while let Some(p) = queue.pop_front() {
                    for q in 0..patch.len() {
                        if !seen[q] && alpha[q] >= alpha[start] && shares_edge_at_a(p, q) {
                            seen[q] = true;
                            queue.push_back(q);
                        }
                    }
                }
                (0..patch.len()).all(|q| alpha[q] < max || seen[q])
            })
        })
        .collect();
    QuasiMonotonicityReport { node_ok }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reliability_numbers() {
        let r = reliability_constant(0.1, 1.0, 1.0).unwrap();
        assert_relative_eq!(r.saturation_threshold, 1.36 / 3.24, max_relative = 1e-14);
        assert_eq!(format!("{:.4}", r.saturation_threshold), "0.4198");
        assert_relative_eq!(r.factor, 10.0, max_relative = 1e-14);
        let r = reliability_constant(0.5, 10.0, 0.5).unwrap();
        assert_relative_eq!(r.c_harm, 0.5 * (6.0 - 16.5f64.sqrt()), max_relative = 1e-14);
        assert_relative_eq!(r.factor, 2.0, max_relative = 1e-14);
        assert!(matches!(reliability_constant(0.1, 0.2, 1.0), Err(Error::ReliabilityHypothesis { .. })));
        assert!(matches!(reliability_constant(1.0, 1.0, 1.0), Err(Error::InvalidEpsilon(_))));
    }

    #[test]
    fn c_harm_vanishes_monotonically_at_threshold() {
        let t = 1.0 / (4.0 * 0.9);
        let mut prev = f64::INFINITY;
        for k in 1..12 {
            let c = reliability_constant(0.1, t + 0.5f64.powi(k), 1.0).unwrap().c_harm;
            assert!(c > 0.0 && c < prev);
            prev = c;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn mu_branches() {
        assert_eq!(mu(0.0, 0.5, 4.0), 0.25);
        assert_eq!(mu(100.0, 0.5, 4.0), 0.1);
        assert_eq!(mu(1e-16, 0.5, 4.0), 0.25);
    }
}
