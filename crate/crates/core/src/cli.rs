//! Experiment runner: history CSV, mesh, solution and indicator dumps, and
//! exterior field samples.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;

use crate::adapt::{adaptive_loop_with, AdaptiveConfig, ConvergenceHistory, Marking, StepView, StopCriteria};
use crate::bem::eval_exterior;
use crate::error::{Error, Result};
use crate::estimator::EstimatorKind;
use crate::model::{builtin_problem, ex2_with_convection, parse_config, problem_from_config, Example, ProblemSpec, Radiation};
use crate::solver::{DiscreteSolution, Discretization};

/// Rectangle of exterior sample points, `n` per direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub n: usize,
}

impl GridSpec {
    pub const DEFAULT: GridSpec = GridSpec { x: [-0.75, 0.75], y: [-0.75, 0.75], n: 61 };
}

impl std::str::FromStr for GridSpec {
    type Err = Error;

    /// `xmin,xmax,ymin,ymax,n`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = || Error::Config(format!("grid: expected xmin,xmax,ymin,ymax,n, got `{s}`"));
        if parts.len() != 5 {
            return Err(bad());
        }
        let v: Vec<f64> = parts[..4].iter().map(|p| p.parse()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
        let n: usize = parts[4].parse().map_err(|_| bad())?;
        if n < 2 || v[0] >= v[1] || v[2] >= v[3] {
            return Err(bad());
        }
        Ok(GridSpec { x: [v[0], v[1]], y: [v[2], v[3]], n })
    }
}

/// Problem source of a run.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSource {
    Example(Example),
    ConfigFile(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemSource,
    pub theta: f64,
    pub estimator: EstimatorKind,
    pub marking: Marking,
    /// `None` uses the problem's default.
    pub upwind: Option<bool>,
    pub stop: StopCriteria,
    pub out: PathBuf,
    pub dump_mesh: bool,
    pub dump_indicators: bool,
    /// Exterior samples of the final step; the far-field example always
    /// writes them.
    pub exterior_grid: Option<GridSpec>,
    /// Scales `b = factor (x1, 0)` of the shock example.
    pub conv_factor: Option<f64>,
}

impl RunConfig {
    pub fn new(example: Example, out: impl Into<PathBuf>) -> Self {
        Self {
            problem: ProblemSource::Example(example),
            theta: 0.5,
            estimator: EstimatorKind::Robust,
            marking: Marking::Squared,
            upwind: None,
            stop: StopCriteria::default(),
            out: out.into(),
            dump_mesh: false,
            dump_indicators: false,
            exterior_grid: None,
            conv_factor: None,
        }
    }

    pub fn problem(&self) -> Result<ProblemSpec> {
        match (&self.problem, self.conv_factor) {
            (ProblemSource::Example(Example::Ex2), Some(f)) => ex2_with_convection(f),
            (ProblemSource::Example(_), Some(_)) => Err(Error::Config("conv-factor applies to ex2 only".into())),
            (ProblemSource::Example(e), None) => builtin_problem(*e),
            (ProblemSource::ConfigFile(path), f) => {
                let mut cfg = parse_config(&fs::read_to_string(path)?)?;
                if let Some(f) = f {
                    cfg.insert("conv_factor".into(), vec![f.to_string()]);
                }
                let base = path.parent().unwrap_or(Path::new("."));
                problem_from_config(&cfg, base)
            }
        }
    }

    fn config_upwind(&self) -> Result<Option<bool>> {
        let ProblemSource::ConfigFile(path) = &self.problem else {
            return Ok(None);
        };
        let cfg = parse_config(&fs::read_to_string(path)?)?;
        match cfg.get("upwind").and_then(|v| v.last()).map(String::as_str) {
            None => Ok(None),
            Some("true" | "yes" | "1") => Ok(Some(true)),
            Some("false" | "no" | "0") => Ok(Some(false)),
            Some(other) => Err(Error::Config(format!("upwind: expected a boolean, got `{other}`"))),
        }
    }

    pub fn adaptive(&self, spec: &ProblemSpec) -> Result<AdaptiveConfig> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::InvalidTheta(self.theta));
        }
        let upwind = match self.upwind {
            Some(u) => u,
            None => self.config_upwind()?.unwrap_or(spec.upwind_default),
        };
        Ok(AdaptiveConfig { theta: self.theta, estimator: self.estimator, upwind, stop: self.stop, marking: self.marking })
    }
}

/// Result of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub history: ConvergenceHistory,
    pub files: Vec<PathBuf>,
}

/// `x y value` lines of the exterior solution on the grid points strictly
/// outside the closed domain.
pub fn exterior_samples(disc: &Discretization, spec: &ProblemSpec, sol: &DiscreteSolution, grid: &GridSpec) -> Result<String> {
    let trace: Vec<f64> = sol.boundary_defect(&disc.boundary, spec).iter().map(|v| -v).collect();
    let a_inf = sol.a_inf.unwrap_or(0.0);
    let mut s = String::new();
    for j in 0..grid.n {
        for i in 0..grid.n {
            let x = grid.x[0] + (grid.x[1] - grid.x[0]) * i as f64 / (grid.n - 1) as f64;
            let y = grid.y[0] + (grid.y[1] - grid.y[0]) * j as f64 / (grid.n - 1) as f64;
            let p = crate::mesh::Point::new(x, y);
            match eval_exterior(&disc.boundary, &trace, &sol.phi, a_inf, p) {
                Ok(v) => {
                    let _ = writeln!(s, "{x:e} {y:e} {v:e}");
                }
                Err(Error::PointInsideDomain { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(s)
}

fn write(files: &mut Vec<PathBuf>, path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text)?;
    files.push(path);
    Ok(())
}

fn run_to(config: &RunConfig, history_name: &str) -> Result<RunOutcome> {
    let spec = config.problem()?;
    let adaptive = config.adaptive(&spec)?;
    fs::create_dir_all(&config.out)?;
    let grid = match (config.exterior_grid, spec.radiation) {
        (Some(g), _) => Some(g),
        (None, Radiation::FarField) => Some(GridSpec::DEFAULT),
        (None, Radiation::LogGrowth) => None,
    };
    let mut files = Vec::new();
    let mut exterior = None;
    let history = adaptive_loop_with(&spec, &adaptive, |v: &StepView<'_>| {
        if config.dump_mesh {
            write(&mut files, config.out.join(format!("mesh_{:03}.txt", v.step)), &v.discretization.mesh.to_dump())?;
            write(&mut files, config.out.join(format!("solution_{:03}.txt", v.step)), &v.solution.to_dump())?;
        }
        if config.dump_indicators {
            write(&mut files, config.out.join(format!("indicators_{:03}.txt", v.step)), &v.indicators.to_dump())?;
        }
        if let Some(g) = &grid {
            exterior = Some(exterior_samples(v.discretization, &spec, v.solution, g)?);
        }
        Ok(())
    });
    write(&mut files, config.out.join(history_name), &history.to_csv())?;
    if let Some(text) = exterior {
        write(&mut files, config.out.join("exterior.txt"), &text)?;
    }
    match &history.failure {
        Some(msg) => Err(Error::Singular(format!("run stopped after {} steps: {msg}", history.steps.len()))),
        None => Ok(RunOutcome { history, files }),
    }
}

/// Run the adaptive loop and write the artifacts; the history CSV is
/// written even when the loop fails.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    run_to(config, "history.csv")
}

/// One adaptive run per convection factor, written to `history_b<factor>.csv`.
pub fn sweep_convection(base: &RunConfig, factors: &[f64]) -> Result<Vec<(f64, ConvergenceHistory)>> {
    if base.problem != ProblemSource::Example(Example::Ex2) {
        return Err(Error::Config("the convection sweep needs the ex2 problem".into()));
    }
    let mut out = Vec::with_capacity(factors.len());
    for &f in factors {
        let cfg = RunConfig { conv_factor: Some(f), ..base.clone() };
        let outcome = run_to(&cfg, &format!("history_b{f}.csv"))?;
        out.push((f, outcome.history));
    }
    Ok(out)
}

/// Least squares slope of `ln y` against `ln x` over the last `window`
/// points.
pub fn fit_slope(x: &[f64], y: &[f64], window: usize) -> Option<f64> {
    let n = x.len().min(y.len());
    if window < 2 || n < window {
        return None;
    }
    let pts: Vec<(f64, f64)> = (n - window..n).map(|i| (x[i].ln(), y[i].ln())).collect();
    let w = window as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / w;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / w;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Command line of the `fvbem` binary.
#[derive(Debug, Parser)]
#[command(name = "fvbem", about = "Adaptive finite volume / boundary element coupling")]
pub struct Cli {
    /// Benchmark: ex1, ex2 or ex3.
    #[arg(long, default_value = "ex1", conflicts_with = "config")]
    pub example: String,
    /// Problem configuration file (`key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Bulk parameter; 1 refines uniformly.
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    /// robust or nonrobust.
    #[arg(long, default_value = "robust")]
    pub estimator: String,
    /// Bulk criterion quantity: squared or unsquared indicators.
    #[arg(long, default_value = "squared")]
    pub marking: String,
    /// Force the upwind scheme.
    #[arg(long, conflicts_with = "central")]
    pub upwind: bool,
    /// Force the central scheme.
    #[arg(long)]
    pub central: bool,
    #[arg(long, default_value_t = 100_000)]
    pub max_elements: usize,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Write mesh and solution dumps for every step.
    #[arg(long)]
    pub dump_mesh: bool,
    #[arg(long)]
    pub dump_indicators: bool,
    /// Convection factor for ex2.
    #[arg(long)]
    pub conv_factor: Option<f64>,
    /// Exterior sample grid `xmin,xmax,ymin,ymax,n`.
    #[arg(long)]
    pub grid: Option<String>,
    /// Comma separated convection factors; runs one ex2 loop per factor.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Option<Vec<f64>>,
}

impl Cli {
    pub fn run_config(&self) -> Result<RunConfig> {
        let problem = match &self.config {
            Some(p) => ProblemSource::ConfigFile(p.clone()),
            None => ProblemSource::Example(self.example.parse()?),
        };
        let upwind = if self.upwind {
            Some(true)
        } else if self.central {
            Some(false)
        } else {
            None
        };
        Ok(RunConfig {
            problem,
            theta: self.theta,
            estimator: self.estimator.parse()?,
            marking: self.marking.parse()?,
            upwind,
            stop: StopCriteria { max_elements: self.max_elements, max_steps: self.max_steps.unwrap_or(usize::MAX) },
            out: self.out.clone(),
            dump_mesh: self.dump_mesh,
            dump_indicators: self.dump_indicators,
            exterior_grid: self.grid.as_deref().map(str::parse).transpose()?,
            conv_factor: self.conv_factor,
        })
    }

    /// Execute and print a summary; the return value is the process exit
    /// code.
    pub fn execute(&self) -> i32 {
        let config = match self.run_config() {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return 2;
            }
        };
        let result = match &self.sweep {
            Some(factors) => sweep_convection(&config, factors).map(|runs| {
                for (f, h) in runs {
                    if let Some(last) = h.steps.last() {
                        println!("b = {f}: {} steps, final efficiency {:?}", h.steps.len(), last.efficiency());
                    }
                }
            }),
            None => run(&config).map(|o| {
                print!("{}", o.history.to_csv());
            }),
        };
        match result {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                1
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn slope_of_power_law() {
        let x = [10.0, 40.0, 160.0, 640.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.5)).collect();
        assert_relative_eq!(fit_slope(&x, &y, 3).unwrap(), -0.5, max_relative = 1e-12);
        assert!(fit_slope(&x, &y, 5).is_none());
    }

    #[test]
    fn grid_parsing() {
        let g: GridSpec = "-1,1,-2,2,11".parse().unwrap();
        assert_eq!(g, GridSpec { x: [-1.0, 1.0], y: [-2.0, 2.0], n: 11 });
        assert!("1,-1,0,1,3".parse::<GridSpec>().is_err());
        assert!("0,1,0,1".parse::<GridSpec>().is_err());
    }

    #[test]
    fn flags() {
        let cli = Cli::parse_from(["fvbem", "--example", "ex2", "--theta", "1", "--upwind", "--max-steps", "3", "--conv-factor", "10"]);
        let cfg = cli.run_config().unwrap();
        assert_eq!(cfg.problem, ProblemSource::Example(Example::Ex2));
        assert_eq!(cfg.upwind, Some(true));
        assert_eq!(cfg.stop.max_steps, 3);
        assert_eq!(cfg.conv_factor, Some(10.0));
        let bad = RunConfig { conv_factor: Some(10.0), ..RunConfig::new(Example::Ex1, "x") };
        assert!(bad.problem().is_err());
    }
}
