//! Seeded experiment runner with CSV and JSON reporting.
//!
//! Trial `t` at grid index `g` runs with `trial_seed(master, g, t)` (see
//! [`crate::rng::trial_seed`]), so rows do not depend on scheduling. Trials run on a
//! worker pool and are written in `(grid, trial)` order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compression::{scheme_by_name, EncodeOutcome, SharedScheme};
use crate::distances::{kl_gaussians, tv, tv_mc};
use crate::error::{Error, Result};
use crate::gaussmodels::{Distribution, LabeledSample};
use crate::learners::learn_gaussian_efficient;
use crate::lowerbound::{make_lb_family, pairwise_kl, tv_pair_lower};
use crate::nets::{hull_contains_ball, sample_hull_points, HULL_M_MULTIPLIER, HULL_RHO};
use crate::rng::{derive_seed, rng_from_seed, trial_seed};

/// First line of `rows.csv`.
pub const ROWS_HEADER: &str = "# compresslearn rows v1";
/// First line of `summary.csv`.
pub const SUMMARY_HEADER: &str = "# compresslearn summary v1";

const DEFAULT_N_MC: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SchemeRoundtrip,
    LearnCurve,
    LowerboundAudit,
    HullProbe,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::SchemeRoundtrip => "scheme_roundtrip",
            ExperimentKind::LearnCurve => "learn_curve",
            ExperimentKind::LowerboundAudit => "lowerbound_audit",
            ExperimentKind::HullProbe => "hull_probe",
        }
    }
}

/// The swept parameter and its values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Grid {
    N(Vec<u64>),
    Eps(Vec<f64>),
    Contamination(Vec<f64>),
}

impl Grid {
    pub fn param(&self) -> &'static str {
        match self {
            Grid::N(_) => "n",
            Grid::Eps(_) => "eps",
            Grid::Contamination(_) => "contamination",
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::N(v) => v.iter().map(|&n| n as f64).collect(),
            Grid::Eps(v) | Grid::Contamination(v) => v.clone(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Grid::N(v) => v.len(),
            Grid::Eps(v) | Grid::Contamination(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Experiment description, read from JSON.
///
/// ```json
/// {"experiment": "scheme_roundtrip", "scheme": "g1d",
///  "distribution": {"type": "gaussian", "mean": [0], "cov": [[1]]},
///  "grid": {"eps": [0.1, 0.2]}, "trials": 100, "seed": 7}
/// ```
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Target for `scheme_roundtrip` and `learn_curve`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<Distribution>,
    /// Scheme name for `scheme_roundtrip`; defaults by target type.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
    pub grid: Grid,
    pub trials: u32,
    pub seed: u64,
    /// Reserved for learners with a candidate budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    /// Accuracy when the grid is not over `eps`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Dimension for `hull_probe` and `lowerbound_audit`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Subspace ratio for `lowerbound_audit` (default 9).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    /// Family size for `lowerbound_audit` (default 32).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family_size: Option<usize>,
    /// Fraction of each `scheme_roundtrip` sample replaced by a far point mass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contamination: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_mc: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl ExperimentConfig {
    /// Parses and validates; JSON errors carry line and column.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.grid.is_empty() {
            return Err(Error::config("grid", "must contain at least one value"));
        }
        let vals = self.grid.values();
        match &self.grid {
            Grid::N(v) if v.contains(&0) => return Err(Error::config("grid.n", "sizes must be positive")),
            Grid::Eps(_) if vals.iter().any(|&e| !(e > 0.0 && e < 1.0)) => {
                return Err(Error::config("grid.eps", "values must lie in (0, 1)"))
            }
            Grid::Contamination(_) if vals.iter().any(|&c| !(0.0..1.0).contains(&c)) => {
                return Err(Error::config("grid.contamination", "values must lie in [0, 1)"))
            }
            _ => {}
        }
        if let Some(e) = self.eps {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::config("eps", "must lie in (0, 1)"));
            }
        }
        if let Some(c) = self.contamination {
            if !(0.0..1.0).contains(&c) {
                return Err(Error::config("contamination", "must lie in [0, 1)"));
            }
        }
        if self.n_mc == Some(0) {
            return Err(Error::config("n_mc", "must be positive"));
        }
        match self.experiment {
            ExperimentKind::SchemeRoundtrip => {
                let dist = self.need_distribution()?;
                if matches!(self.grid, Grid::Contamination(_)) {
                    return Err(Error::config("grid", "scheme_roundtrip sweeps `n` or `eps`"));
                }
                self.scheme_for(dist)?;
            }
            ExperimentKind::LearnCurve => {
                if self.need_distribution()?.as_gaussian().is_none() {
                    return Err(Error::config("distribution", "learn_curve needs a single Gaussian"));
                }
                if !matches!(self.grid, Grid::N(_)) {
                    return Err(Error::config("grid", "learn_curve sweeps `n`"));
                }
            }
            ExperimentKind::LowerboundAudit => {
                if !matches!(self.grid, Grid::Eps(_)) {
                    return Err(Error::config("grid", "lowerbound_audit sweeps `eps`"));
                }
            }
            ExperimentKind::HullProbe => {
                if !matches!(self.grid, Grid::Contamination(_)) {
                    return Err(Error::config("grid", "hull_probe sweeps `contamination`"));
                }
            }
        }
        Ok(())
    }

    fn need_distribution(&self) -> Result<&Distribution> {
        self.distribution
            .as_ref()
            .ok_or_else(|| Error::config("distribution", format!("required for {}", self.experiment.as_str())))
    }

    fn scheme_for(&self, dist: &Distribution) -> Result<SharedScheme> {
        let (d, k) = (dist.dim(), dist.as_mixture().map_or(1, |m| m.k()));
        let name = match (&self.scheme, dist) {
            (Some(n), _) => n.as_str(),
            (None, Distribution::Mixture(_)) => "mixture",
            (None, Distribution::Gaussian(_)) if d == 1 => "g1d",
            (None, Distribution::Gaussian(_)) => "gd",
        };
        let s = scheme_by_name(name, d, k).map_err(|e| Error::config("scheme", e.to_string()))?;
        if s.dim() != d {
            return Err(Error::config("scheme", format!("`{name}` works in dimension {}, target has {d}", s.dim())));
        }
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub experiment: ExperimentKind,
    pub grid_param: String,
    pub grid_index: u32,
    pub grid_value: f64,
    pub trial: u32,
    pub seed: u64,
    pub success: bool,
    /// NaN when the trial failed or the experiment has no TV target.
    pub tv_error: f64,
    pub kl_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub grid_index: u32,
    pub grid_value: f64,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub tv_mean: f64,
    pub tv_std: f64,
    pub kl_mean: f64,
    pub kl_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: ExperimentKind,
    pub grid_param: String,
    pub rows: Vec<SummaryRow>,
    /// Least-squares slope of `ln(tv_mean)` against `ln(n)` for `n` sweeps.
    pub loglog_slope: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub rows: Vec<ExperimentRow>,
    pub summary: Summary,
}

/// Runs every `(grid, trial)` cell. `workers = None` uses the global pool.
pub fn run_experiment(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let cells: Vec<(u32, f64, u32)> = cfg
        .grid
        .values()
        .into_iter()
        .enumerate()
        .flat_map(|(g, v)| (0..cfg.trials).map(move |t| (g as u32, v, t)))
        .collect();
    let run = || {
        cells
            .par_iter()
            .map(|&(g, v, t)| run_trial(cfg, g, v, t))
            .collect::<Result<Vec<_>>>()
    };
    let rows = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::invalid(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    let summary = summarize(&rows)?;
    Ok(ExperimentOutput { rows, summary })
}

fn run_trial(cfg: &ExperimentConfig, g: u32, value: f64, t: u32) -> Result<ExperimentRow> {
    let seed = trial_seed(cfg.seed, g, t);
    let n_mc = cfg.n_mc.unwrap_or(DEFAULT_N_MC);
    let mut row = ExperimentRow {
        experiment: cfg.experiment,
        grid_param: cfg.grid.param().to_string(),
        grid_index: g,
        grid_value: value,
        trial: t,
        seed,
        success: false,
        tv_error: f64::NAN,
        kl_error: f64::NAN,
    };
    let mut rng = rng_from_seed(seed);
    match cfg.experiment {
        ExperimentKind::SchemeRoundtrip => {
            let truth = cfg.need_distribution()?;
            let scheme = cfg.scheme_for(truth)?;
            let (eps, n) = match cfg.grid {
                Grid::Eps(_) => (value, scheme.spec(value)?.m_samples),
                _ => {
                    let eps = cfg.eps.unwrap_or(0.2);
                    (eps, value as usize)
                }
            };
            let mut sample = truth.sample(n, &mut rng);
            if let Some(c) = cfg.contamination {
                contaminate(&mut sample, truth, c, &mut rng);
            }
            let outcome = match scheme.encode(truth, &sample, eps, &mut rng) {
                Ok(o) => o,
                Err(Error::SampleTooShort { .. }) => EncodeOutcome::Failed("sample too short".into()),
                Err(e) => return Err(e),
            };
            if let EncodeOutcome::Ok(msg) = outcome {
                let dec = scheme.decode(&msg, &sample.points, eps)?;
                let d = tv(truth, &dec, n_mc, derive_seed(seed, 1))?;
                row.tv_error = d.value;
                row.success = d.value <= eps;
                if let (Some(a), Some(b)) = (truth.as_gaussian(), dec.as_gaussian()) {
                    row.kl_error = kl_gaussians(a, b)?;
                }
            }
        }
        ExperimentKind::LearnCurve => {
            let truth = cfg.need_distribution()?;
            let g = truth.as_gaussian().expect("validated");
            let n = (value as usize) & !1;
            let sample = truth.sample(n, &mut rng);
            if let Ok(est) = learn_gaussian_efficient(&sample.points, g.dim()) {
                row.kl_error = kl_gaussians(g, &est)?;
                row.tv_error = tv(truth, &est.into(), n_mc, derive_seed(seed, 1))?.value;
                row.success = true;
            }
        }
        ExperimentKind::LowerboundAudit => {
            let (d, r) = (cfg.d.unwrap_or(18), cfg.r.unwrap_or(9));
            let m = cfg.family_size.unwrap_or(32);
            if let Ok(fam) = make_lb_family(d, r, value, m, seed) {
                let separated = (0..m).all(|a| (0..m).all(|b| tv_pair_lower(&fam, a, b).is_ok()));
                let kl = pairwise_kl(&fam);
                row.kl_error = kl.max();
                row.success = separated && fam.frobenius_check().violations == 0 && row.kl_error <= fam.kl_bound() + 1e-12;
                if m >= 2 {
                    let (a, b): (Distribution, Distribution) = (fam.gaussian(0)?.into(), fam.gaussian(1)?.into());
                    row.tv_error = tv_mc(&a, &b, n_mc, derive_seed(seed, 1))?.value;
                }
            }
        }
        ExperimentKind::HullProbe => {
            let d = cfg.d.unwrap_or(5);
            let pts = sample_hull_points(d, HULL_M_MULTIPLIER, value, &mut rng);
            row.success = !pts.is_empty() && hull_contains_ball(&pts, HULL_RHO)?.contained;
        }
    }
    Ok(row)
}

/// Replaces each point with probability `c` by a point 100 standard deviations out along
/// the first axis.
fn contaminate(sample: &mut LabeledSample, truth: &Distribution, c: f64, rng: &mut impl Rng) {
    let spread = truth
        .components()
        .iter()
        .map(|(_, g)| g.cov().diagonal().max().sqrt())
        .fold(0.0, f64::max);
    let center = truth.components()[0].1.mean().clone();
    let mut far = center;
    far[0] += 100.0 * spread;
    for p in &mut sample.points {
        if rng.random::<f64>() < c {
            *p = far.clone();
        }
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() == 1 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Least-squares slope of `y` on `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Per-grid-point mean, standard deviation (over finite values) and success rate.
pub fn summarize(rows: &[ExperimentRow]) -> Result<Summary> {
    let first = rows.first().ok_or(Error::Empty("experiment rows"))?;
    let mut groups: Vec<SummaryRow> = Vec::new();
    let mut idx = 0;
    while idx < rows.len() {
        let g = rows[idx].grid_index;
        let end = idx + rows[idx..].iter().take_while(|r| r.grid_index == g).count();
        let chunk = &rows[idx..end];
        let tvs: Vec<f64> = chunk.iter().map(|r| r.tv_error).filter(|v| v.is_finite()).collect();
        let kls: Vec<f64> = chunk.iter().map(|r| r.kl_error).filter(|v| v.is_finite()).collect();
        let (tv_mean, tv_std) = mean_std(&tvs);
        let (kl_mean, kl_std) = mean_std(&kls);
        let successes = chunk.iter().filter(|r| r.success).count();
        groups.push(SummaryRow {
            grid_index: g,
            grid_value: chunk[0].grid_value,
            trials: chunk.len(),
            successes,
            success_rate: successes as f64 / chunk.len() as f64,
            tv_mean,
            tv_std,
            kl_mean,
            kl_std,
        });
        idx = end;
    }
    let loglog_slope = if first.grid_param == "n" {
        let pts: Vec<(f64, f64)> = groups
            .iter()
            .filter(|s| s.tv_mean > 0.0 && s.grid_value > 0.0)
            .map(|s| (s.grid_value.ln(), s.tv_mean.ln()))
            .collect();
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        fit_slope(&x, &y)
    } else {
        None
    };
    Ok(Summary {
        experiment: first.experiment,
        grid_param: first.grid_param.clone(),
        rows: groups,
        loglog_slope,
    })
}

pub fn rows_csv(rows: &[ExperimentRow]) -> String {
    let mut s = String::new();
    s.push_str(ROWS_HEADER);
    s.push('\n');
    s.push_str("experiment,grid_param,grid_index,grid_value,trial,seed,success,tv_error,kl_error\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.experiment.as_str(),
            r.grid_param,
            r.grid_index,
            r.grid_value,
            r.trial,
            r.seed,
            u8::from(r.success),
            r.tv_error,
            r.kl_error
        );
    }
    s
}

pub fn summary_csv(summary: &Summary) -> String {
    let mut s = String::new();
    s.push_str(SUMMARY_HEADER);
    s.push('\n');
    s.push_str("experiment,grid_param,grid_index,grid_value,trials,successes,success_rate,tv_mean,tv_std,kl_mean,kl_std,loglog_slope\n");
    let slope = summary.loglog_slope.map(|v| v.to_string()).unwrap_or_default();
    for r in &summary.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            summary.experiment.as_str(),
            summary.grid_param,
            r.grid_index,
            r.grid_value,
            r.trials,
            r.successes,
            r.success_rate,
            r.tv_mean,
            r.tv_std,
            r.kl_mean,
            r.kl_std,
            slope
        );
    }
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub crate_version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub rows: usize,
    pub rows_sha256: String,
    pub summary_sha256: String,
}

/// Runs `cfg` and writes `rows.csv`, `summary.csv` and `run-manifest.json` into `dir`.
pub fn run_to_dir(cfg: &ExperimentConfig, dir: &Path, workers: Option<usize>) -> Result<RunManifest> {
    let out = run_experiment(cfg, workers)?;
    fs::create_dir_all(dir)?;
    let rows = rows_csv(&out.rows);
    let summary = summary_csv(&out.summary);
    fs::write(dir.join("rows.csv"), &rows)?;
    fs::write(dir.join("summary.csv"), &summary)?;
    let manifest = RunManifest {
        schema: "compresslearn run-manifest v1".into(),
        crate_version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        config: cfg.clone(),
        rows: out.rows.len(),
        rows_sha256: sha256_hex(rows.as_bytes()),
        summary_sha256: sha256_hex(summary.as_bytes()),
    };
    fs::write(dir.join("run-manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}
