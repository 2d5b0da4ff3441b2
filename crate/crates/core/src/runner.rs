//! Experiment runner: single solves and convergence sweeps driven by a JSON config.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_pde_system, DegreeHistogram, SparseMatrix};
use crate::error::{Error, Result};
use crate::geometry::{generate_nodes, GeneratorKind, GeneratorSpec, NodeSet, Point};
use crate::kernels::PhsKernel;
use crate::problems::{problem_nist_peak, problem_section4, ProblemSpec};
use crate::solver::{error_norms, solve};
use crate::weights::AdaptivityConfig;

/// Sweeps whose errors all sit below this are not fitted meaningfully.
pub const NOISE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Section4,
    NistPeak,
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "section4" => Ok(Self::Section4),
            "nist-peak" => Ok(Self::NistPeak),
            other => Err(Error::Config(format!("unknown problem '{other}'"))),
        }
    }
}

fn default_k() -> u32 {
    2
}

fn default_m() -> u32 {
    3
}

fn default_alpha() -> f64 {
    1000.0
}

fn default_center() -> Point {
    [0.5, 0.5]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub generator: GeneratorSpec,
    #[serde(rename = "N")]
    pub n: Vec<usize>,
    pub g: u32,
    #[serde(default = "default_k")]
    pub k: u32,
    #[serde(default = "default_m")]
    pub m: u32,
    #[serde(default)]
    pub adaptive: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Peak sharpness for `nist-peak`.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_center")]
    pub center: Point,
}

impl RunConfig {
    pub fn new(problem: ProblemKind, generator: GeneratorSpec, n: Vec<usize>, g: u32) -> Self {
        Self {
            problem,
            generator,
            n,
            g,
            k: default_k(),
            m: default_m(),
            adaptive: false,
            seed: 0,
            out_dir: None,
            alpha: default_alpha(),
            center: default_center(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n.is_empty() {
            return Err(Error::Config("N list is empty".into()));
        }
        if self.n.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("N list must be strictly increasing, got {:?}", self.n)));
        }
        if !(1..=10).contains(&self.g) {
            return Err(Error::Config(format!("g must lie in [1, 10], got {}", self.g)));
        }
        if self.k == 0 {
            return Err(Error::Config("operator order k must be positive".into()));
        }
        PhsKernel::new(self.m).map_err(|e| Error::Config(e.to_string()))?;
        if self.generator.kind == GeneratorKind::PeakAdapted && self.generator.params.is_none() {
            return Err(Error::Config("peak-adapted generator needs params".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }

    pub fn problem_spec(&self) -> ProblemSpec {
        match self.problem {
            ProblemKind::Section4 => problem_section4(),
            ProblemKind::NistPeak => problem_nist_peak(self.alpha, self.center),
        }
    }

    pub fn adaptivity(&self) -> AdaptivityConfig {
        let cfg = AdaptivityConfig::new(self.g, self.k);
        AdaptivityConfig { adaptive: self.adaptive, ..cfg }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRecord {
    #[serde(rename = "N")]
    pub n: usize,
    pub h_e: f64,
    pub nnz: usize,
    pub max_error: f64,
    pub rel_l2_error: f64,
    pub seconds: f64,
    pub degrees: String,
}

/// Everything produced by one solve.
#[derive(Debug, Clone)]
pub struct SolveArtifacts {
    pub nodes: NodeSet,
    pub matrix: SparseMatrix,
    pub histogram: DegreeHistogram,
    pub solution: Vec<f64>,
    pub exact: Vec<f64>,
    pub record: ConvergenceRecord,
}

/// Generates nodes, assembles, solves and measures errors for `n` nodes.
pub fn solve_case(config: &RunConfig, n: usize) -> Result<SolveArtifacts> {
    solve_problem(config, &config.problem_spec(), n)
}

/// [`solve_case`] for a problem other than the config's named one.
pub fn solve_problem(config: &RunConfig, problem: &ProblemSpec, n: usize) -> Result<SolveArtifacts> {
    let start = Instant::now();
    let kernel = PhsKernel::new(config.m)?;
    let nodes = generate_nodes(&config.generator, n, problem.domain, config.seed)
        .map_err(|e| Error::in_stage("node generation", e))?;
    let (matrix, rhs, histogram) = assemble_pde_system(&nodes, problem, &config.adaptivity(), &kernel)
        .map_err(|e| Error::in_stage("assembly", e))?;
    let report = solve(&matrix, &rhs)
        .and_then(|r| r.into_result())
        .map_err(|e| Error::in_stage("solve", e))?;
    let exact: Vec<f64> = nodes.points().iter().map(|p| problem.exact(p)).collect();
    let norms = error_norms(&report.solution, &exact)?;
    let record = ConvergenceRecord {
        n: nodes.len(),
        h_e: nodes.effective_fill_distance()?,
        nnz: matrix.nnz(),
        max_error: norms.max_abs,
        rel_l2_error: norms.rel_l2,
        seconds: start.elapsed().as_secs_f64(),
        degrees: histogram.summary(),
    };
    Ok(SolveArtifacts { nodes, matrix, histogram, solution: report.solution, exact, record })
}

/// Writes `solution.csv`, `pattern.csv` and `degrees.csv` into `dir`.
pub fn write_artifacts(artifacts: &SolveArtifacts, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("solution.csv"))?));
    w.write_record(["x", "y", "u_numeric", "u_exact", "abs_error"])?;
    for ((p, u), e) in artifacts.nodes.points().iter().zip(&artifacts.solution).zip(&artifacts.exact) {
        w.write_record(&[
            p[0].to_string(),
            p[1].to_string(),
            u.to_string(),
            e.to_string(),
            (u - e).abs().to_string(),
        ])?;
    }
    w.flush()?;
    artifacts
        .matrix
        .write_pattern_csv(BufWriter::new(File::create(dir.join("pattern.csv"))?))?;
    artifacts
        .histogram
        .write_csv(BufWriter::new(File::create(dir.join("degrees.csv"))?))?;
    Ok(())
}

/// Single solve at the config's only `N`; writes outputs when `out_dir` is set.
pub fn run_solve(config: &RunConfig) -> Result<ConvergenceRecord> {
    config.validate()?;
    let [n] = config.n[..] else {
        return Err(Error::Config(format!("solve takes a single N, got {:?}", config.n)));
    };
    let artifacts = solve_case(config, n)?;
    if let Some(dir) = &config.out_dir {
        write_artifacts(&artifacts, dir)?;
    }
    Ok(artifacts.record)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceSummary {
    pub records: Vec<ConvergenceRecord>,
    pub slope: f64,
    /// All errors are below [`NOISE_FLOOR`]; the slope carries no information.
    pub below_noise_floor: bool,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Runs every `N` of the sweep in order and fits the convergence slope.
/// Per-point outputs go to `out_dir/N<n>/`, the summary to `out_dir/convergence.csv`.
pub fn run_convergence(config: &RunConfig) -> Result<ConvergenceSummary> {
    run_convergence_for(config, &config.problem_spec())
}

pub fn run_convergence_for(config: &RunConfig, problem: &ProblemSpec) -> Result<ConvergenceSummary> {
    config.validate()?;
    if config.n.len() < 3 {
        return Err(Error::Config(format!("a sweep needs at least 3 values of N, got {}", config.n.len())));
    }
    let mut records = Vec::with_capacity(config.n.len());
    for &n in &config.n {
        let artifacts = solve_problem(config, problem, n)?;
        if let Some(dir) = &config.out_dir {
            write_artifacts(&artifacts, &dir.join(format!("N{n}")))?;
        }
        records.push(artifacts.record);
    }
    if records.windows(2).any(|w| w[1].h_e >= w[0].h_e) {
        return Err(Error::Config("generated node counts do not refine monotonically".into()));
    }
    let h: Vec<f64> = records.iter().map(|r| r.h_e).collect();
    let e: Vec<f64> = records.iter().map(|r| r.max_error.max(f64::MIN_POSITIVE)).collect();
    let summary = ConvergenceSummary {
        slope: loglog_slope(&h, &e),
        below_noise_floor: records.iter().all(|r| r.max_error <= NOISE_FLOOR),
        records,
    };
    if let Some(dir) = &config.out_dir {
        write_convergence_csv(&summary, &dir.join("convergence.csv"))?;
    }
    Ok(summary)
}

pub fn write_convergence_csv(summary: &ConvergenceSummary, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["N", "h_e", "nnz", "max_error", "rel_l2", "seconds", "slope"])?;
    for r in &summary.records {
        w.write_record(&[
            r.n.to_string(),
            r.h_e.to_string(),
            r.nnz.to_string(),
            r.max_error.to_string(),
            r.rel_l2_error.to_string(),
            format!("{:.3}", r.seconds),
            summary.slope.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_config() {
        let cfg = RunConfig::from_json(
            r#"{"problem":"nist-peak","generator":{"kind":"peak-adapted",
                "params":{"x_peak":[0.5,0.5],"r_min":0.004,"r_max":0.03,"R":0.2}},
                "N":[2470],"g":8,"k":2,"m":3,"adaptive":true,"seed":7,"out_dir":"out"}"#,
        )
        .unwrap();
        assert_eq!(cfg.problem, ProblemKind::NistPeak);
        assert_eq!(cfg.n, vec![2470]);
        assert_eq!(cfg.generator.params.unwrap().falloff, 0.2);
        assert!(cfg.adaptive);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = r#""generator":{"kind":"tensor-grid"},"g":4"#;
        for bad in [
            format!(r#"{{"problem":"section4",{base},"N":[900,400]}}"#),
            format!(r#"{{"problem":"section4",{base},"N":[400,400]}}"#),
            format!(r#"{{"problem":"section5",{base},"N":[400]}}"#),
            format!(r#"{{"problem":"section4",{base},"N":[]}}"#),
            format!(r#"{{"problem":"section4",{base},"N":[400],"m":4}}"#),
            r#"{"problem":"section4","generator":{"kind":"tensor-grid"},"g":11,"N":[400]}"#.to_string(),
            r#"{"problem":"nist-peak","generator":{"kind":"peak-adapted"},"g":8,"N":[400]}"#.to_string(),
        ] {
            assert!(matches!(RunConfig::from_json(&bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn slope_of_power_law() {
        let h = [0.1, 0.05, 0.025, 0.0125];
        let e: Vec<f64> = h.iter().map(|v: &f64| 3.0 * v.powi(4)).collect();
        assert!((loglog_slope(&h, &e) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn single_solve_on_grid() {
        let cfg = RunConfig::new(ProblemKind::Section4, GeneratorSpec::new(GeneratorKind::TensorGrid), vec![441], 4);
        let rec = run_solve(&cfg).unwrap();
        assert_eq!(rec.n, 441);
        assert!(rec.max_error.is_finite() && rec.max_error < 1e-2);
        let sweep = RunConfig { n: vec![100, 400], ..cfg };
        assert!(run_solve(&sweep).is_err());
    }
}
