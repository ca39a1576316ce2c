use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use compresslearn::compression::scheme_by_name;
use compresslearn::distances::{kl_gaussians, tv, tv_frobenius_proxy};
use compresslearn::harness::{run_to_dir, ExperimentConfig};
use compresslearn::learners::{
    agnostic_sample_split, learn_from_compression, learn_mixture_agnostic, learn_sample_split, LearnOptions,
};
use compresslearn::lowerbound::{fano_report, make_lb_family, pairwise_frobenius, pairwise_kl};
use compresslearn::{derive_seed, rng_from_seed, Distribution};

#[derive(Parser)]
#[command(name = "compresslearn", version, about = "Sample-compression density estimation for Gaussians")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Kl,
    Tv,
    Proxy,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    G1d,
    Gd,
    Axis,
    Mixture,
}

impl SchemeArg {
    fn name(self) -> &'static str {
        match self {
            SchemeArg::G1d => "g1d",
            SchemeArg::Gd => "gd",
            SchemeArg::Axis => "axis",
            SchemeArg::Mixture => "mixture",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Distance between two distributions, printed as one JSON record.
    Distances {
        /// Inline JSON or a path to a JSON file.
        #[arg(long)]
        p: String,
        #[arg(long)]
        q: String,
        #[arg(long, value_enum, default_value = "tv")]
        metric: Metric,
        #[arg(long, default_value_t = 100_000)]
        n_mc: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Draws a sample from a known target and learns it through a compression scheme.
    Learn {
        #[arg(long)]
        target: String,
        #[arg(long, value_enum)]
        scheme: SchemeArg,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 4096)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also encode the target itself and add its message to the candidates.
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Builds a lower-bound family and writes it with its pairwise matrices and Fano report.
    Lowerbound {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long = "M", short = 'M')]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs an experiment config and writes rows.csv, summary.csv and run-manifest.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; output does not depend on this.
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn read_distribution(arg: &str) -> Result<Distribution> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        fs::read_to_string(arg).with_context(|| format!("reading {arg}"))?
    };
    serde_json::from_str(&text).with_context(|| format!("parsing distribution {arg}"))
}

fn emit(value: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn matrix_csv(n: usize, at: impl Fn(usize, usize) -> f64) -> String {
    (0..n)
        .map(|i| (0..n).map(|j| at(i, j).to_string()).collect::<Vec<_>>().join(",") + "\n")
        .collect()
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Distances { p, q, metric, n_mc, seed } => {
            let (p, q) = (read_distribution(&p)?, read_distribution(&q)?);
            let record = match metric {
                Metric::Tv => {
                    let e = tv(&p, &q, n_mc, seed)?;
                    json!({"value": e.value, "std_error": e.std_error, "method": e.method})
                }
                Metric::Kl | Metric::Proxy => {
                    let (Some(a), Some(b)) = (p.as_gaussian(), q.as_gaussian()) else {
                        bail!("this metric needs two single Gaussians");
                    };
                    let (value, method) = match metric {
                        Metric::Kl => (kl_gaussians(a, b)?, "closed_form"),
                        _ => (tv_frobenius_proxy(a, b)?, "frobenius_proxy"),
                    };
                    json!({"value": value, "std_error": 0.0, "method": method})
                }
            };
            println!("{record}");
        }
        Command::Learn { target, scheme, eps, delta, budget, seed, oracle, out } => {
            let truth = read_distribution(&target)?;
            let d = truth.dim();
            let k = truth.as_mixture().map_or(1, |m| m.k());
            let mut opts = LearnOptions::new(budget, seed);
            if oracle {
                opts = opts.with_oracle(truth.clone());
            }
            let sampler_seed = derive_seed(seed, 2);
            let result = match scheme {
                SchemeArg::Mixture => {
                    let split = agnostic_sample_split(d, k, eps, delta, &opts)?;
                    let sample = truth.sample(split.total(), &mut rng_from_seed(sampler_seed));
                    learn_mixture_agnostic(&sample, k, eps, delta, &opts)?
                }
                other => {
                    let s = scheme_by_name(other.name(), d, k)?;
                    if s.dim() != d {
                        bail!("scheme `{}` works in dimension {}, target has {d}", other.name(), s.dim());
                    }
                    let split = learn_sample_split(&*s, eps, delta, &opts)?;
                    let sample = truth.sample(split.total(), &mut rng_from_seed(sampler_seed));
                    learn_from_compression(&*s, &sample, eps, delta, &opts)?
                }
            };
            let dist = tv(&truth, &result.estimate, 100_000, derive_seed(seed, 3))?;
            let record = json!({
                "estimate": result.estimate,
                "tv_to_target": dist.value,
                "tv_std_error": dist.std_error,
                "candidate_count": result.candidate_count.to_string(),
                "evaluated": result.evaluated,
                "decoded": result.decoded,
                "budget_capped": result.budget_capped,
                "winner": result.winner,
            });
            emit(&record, out.as_deref())?;
        }
        Command::Lowerbound { d, r, eps, m, seed, out } => {
            let fam = make_lb_family(d, r, eps, m, seed)?;
            emit(&fam.to_json_value(), Some(&out))?;
            let kl = pairwise_kl(&fam);
            let fr = pairwise_frobenius(&fam);
            let stem = out.with_extension("");
            let sibling = |suffix: &str| PathBuf::from(format!("{}{suffix}", stem.display()));
            fs::write(sibling("-kl.csv"), matrix_csv(m, |i, j| kl[(i, j)]))?;
            fs::write(sibling("-frobenius.csv"), matrix_csv(m, |i, j| fr[(i, j)]))?;
            emit(&serde_json::to_value(fano_report(&fam, eps))?, Some(&sibling("-fano.json")))?;
        }
        Command::Run { config, out, workers } => {
            let cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let manifest = run_to_dir(&cfg, &out, workers)?;
            eprintln!("{} rows written to {}", manifest.rows, out.display());
        }
    }
    Ok(())
}
