//! Bulk marking and the solve, estimate, mark, refine loop.

use std::fmt::Write as _;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::estimator::{estimate, EstimatorKind, IndicatorReport};
use crate::mesh::Mesh;
use crate::model::ProblemSpec;
use crate::solver::{DiscreteSolution, Discretization};
use crate::verify::{errors, ErrorReport};

/// Smallest set of elements whose indicators sum to at least `theta` times
/// the total. Ties are broken by ascending element index; the result is
/// sorted by index.
pub fn doerfler_mark(indicators: &[f64], theta: f64) -> Result<Vec<usize>> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidTheta(theta));
    }
    if indicators.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Config("indicators must be finite and non-negative".into()));
    }
    let total: f64 = indicators.iter().sum();
    if total == 0.0 {
        return Err(Error::ZeroIndicators);
    }
    if theta == 1.0 {
        return Ok((0..indicators.len()).collect());
    }
    let mut order: Vec<usize> = (0..indicators.len()).collect();
    order.sort_by(|&a, &b| indicators[b].total_cmp(&indicators[a]).then(a.cmp(&b)));
    let goal = theta * total;
    let mut sum = 0.0;
    let mut marked = Vec::new();
    for t in order {
        if sum >= goal {
            break;
        }
        sum += indicators[t];
        marked.push(t);
    }
    marked.sort_unstable();
    Ok(marked)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopCriteria {
    /// No solve is attempted on meshes with more elements.
    pub max_elements: usize,
    pub max_steps: usize,
}

impl Default for StopCriteria {
    fn default() -> Self {
        Self { max_elements: 100_000, max_steps: usize::MAX }
    }
}

/// Quantity summed by the bulk criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Marking {
    /// `eta_T^2 + eta_T,up^2`.
    #[default]
    Squared,
    /// `(eta_T^2 + eta_T,up^2)^(1/2)`; a diagnostic variant.
    Unsquared,
}

impl std::str::FromStr for Marking {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" => Ok(Marking::Squared),
            "unsquared" => Ok(Marking::Unsquared),
            _ => Err(Error::Config(format!("unknown marking quantity `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveConfig {
    pub theta: f64,
    pub estimator: EstimatorKind,
    pub upwind: bool,
    pub stop: StopCriteria,
    pub marking: Marking,
}

impl AdaptiveConfig {
    pub fn new(theta: f64, upwind: bool) -> Self {
        Self { theta, estimator: EstimatorKind::Robust, upwind, stop: StopCriteria::default(), marking: Marking::Squared }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub n_elements: usize,
    pub n_boundary: usize,
    pub eta: f64,
    pub eta_up: f64,
    pub errors: Option<ErrorReport>,
    pub seconds: f64,
    /// `sum_E h_E phi_E`.
    pub phi_mean: f64,
    pub residual: f64,
    pub bem_residual: f64,
    pub n_marked: usize,
}

impl StepRecord {
    pub fn e_h(&self) -> Option<f64> {
        self.errors.map(|e| e.e_h)
    }

    pub fn efficiency(&self) -> Option<f64> {
        self.errors.map(|e| e.efficiency(self.eta))
    }
}

#[derive(Debug, Clone, Default)]
pub struct ConvergenceHistory {
    pub steps: Vec<StepRecord>,
    /// Set when the loop ended on an error.
    pub failure: Option<String>,
}

pub const CSV_HEADER: &str = "step,N,m,eta,eta_up,E_h,eff_index,seconds";

impl ConvergenceHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.steps {
            let opt = |v: Option<f64>| v.map(|v| format!("{v:.12e}")).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{:.12e},{:.12e},{},{},{:.3}",
                r.step,
                r.n_elements,
                r.n_boundary,
                r.eta,
                r.eta_up,
                opt(r.e_h()),
                opt(r.efficiency()),
                r.seconds
            );
        }
        s
    }

    pub fn n_elements(&self) -> Vec<f64> {
        self.steps.iter().map(|r| r.n_elements as f64).collect()
    }

    pub fn etas(&self) -> Vec<f64> {
        self.steps.iter().map(|r| r.eta).collect()
    }

    /// `E_h` per step; empty without an exact solution.
    pub fn e_hs(&self) -> Vec<f64> {
        self.steps.iter().filter_map(StepRecord::e_h).collect()
    }
}

/// Everything known about one step, handed to the loop observer.
pub struct StepView<'a> {
    pub step: usize,
    pub discretization: &'a Discretization,
    pub solution: &'a DiscreteSolution,
    pub indicators: &'a IndicatorReport,
    pub record: &'a StepRecord,
    /// Elements that will be refined; empty on the final step.
    pub marked: &'a [usize],
}

pub fn adaptive_loop(spec: &ProblemSpec, config: &AdaptiveConfig) -> ConvergenceHistory {
    adaptive_loop_with(spec, config, |_| Ok(()))
}

/// Adaptive loop calling `observer` after every step. Errors end the loop
/// and are stored in the history.
pub fn adaptive_loop_with(spec: &ProblemSpec, config: &AdaptiveConfig, mut observer: impl FnMut(&StepView<'_>) -> Result<()>) -> ConvergenceHistory {
    let mut history = ConvergenceHistory::default();
    let mesh = match spec.initial_mesh.build() {
        Ok(m) => m,
        Err(e) => {
            history.failure = Some(e.to_string());
            return history;
        }
    };
    if let Err(e) = run_steps(spec, config, mesh, &mut history, &mut observer) {
        history.failure = Some(e.to_string());
    }
    history
}

fn run_steps(
    spec: &ProblemSpec,
    config: &AdaptiveConfig,
    mut mesh: Mesh,
    history: &mut ConvergenceHistory,
    observer: &mut impl FnMut(&StepView<'_>) -> Result<()>,
) -> Result<()> {
    if !(config.theta > 0.0 && config.theta <= 1.0) {
        return Err(Error::InvalidTheta(config.theta));
    }
    let mut step = 0;
    while step < config.stop.max_steps && mesh.n_triangles() <= config.stop.max_elements {
        let start = Instant::now();
        let disc = Discretization::new(mesh, spec, config.upwind)?;
        let sol = disc.solve(spec)?;
        let indicators = estimate(&disc, spec, &sol, config.estimator)?;
        let errs = if spec.exact.is_some() { Some(errors(&disc, spec, &sol)?) } else { None };
        let last = step + 1 == config.stop.max_steps;
        let marked = if last {
            Vec::new()
        } else {
            let mut values = indicators.marking_values();
            if config.marking == Marking::Unsquared {
                values.iter_mut().for_each(|v| *v = v.sqrt());
            }
            doerfler_mark(&values, config.theta)?
        };
        let record = StepRecord {
            step,
            n_elements: disc.mesh.n_triangles(),
            n_boundary: disc.mesh.n_boundary_edges(),
            eta: indicators.eta(),
            eta_up: indicators.eta_up(),
            errors: errs,
            seconds: start.elapsed().as_secs_f64(),
            phi_mean: sol.phi_mean(&disc.boundary),
            residual: sol.residual,
            bem_residual: sol.bem_residual,
            n_marked: marked.len(),
        };
        observer(&StepView { step, discretization: &disc, solution: &sol, indicators: &indicators, record: &record, marked: &marked })?;
        history.steps.push(record);
        if last {
            break;
        }
        mesh = disc.mesh.refine_rgb(&marked)?.mesh;
        step += 1;
    }
    Ok(())
}
