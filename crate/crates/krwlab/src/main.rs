//! `krwlab` — experiment harness for killed random walk computations.
//!
//! Every run resolves a configuration (TOML document overridden by flags),
//! executes deterministically under the given seed, and writes a manifest
//! plus CSV (and SVG for curve experiments) into the output directory.

mod cache;
mod config;
mod report;
mod runner;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use config::{
    parse_point_flag, parse_u32_list, ExhaustionSpec, ExperimentConfig, Kind, KillingSpec,
    OffspringSpec,
};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "krwlab", version, about = "killed random walk workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML configuration document; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// lattice dimension
    #[arg(long, short = 'd')]
    d: Option<usize>,
    /// killing field, e.g. indicator:0:0.5 or powerlaw:1.6
    #[arg(long)]
    killing: Option<String>,
    /// segment exhaustion slopes "b_minus,b_plus" (d = 1)
    #[arg(long)]
    segment: Option<String>,
    /// half-space exhaustion "axis,plus|minus[,truncation]"
    #[arg(long)]
    halfspace: Option<String>,
    /// solver tolerance
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact escape-probability solve on one exhaustion index
    Solve {
        #[command(flatten)]
        common: Common,
        /// exhaustion index R
        #[arg(long = "R")]
        r_index: Option<u32>,
        /// report the conditioned step law from this point
        #[arg(long)]
        x: Option<String>,
    },
    /// Escape-ratio curve u_R(x)/u_R(x0) over increasing R
    Ratio {
        #[command(flatten)]
        common: Common,
        #[arg(long = "R")]
        r_list: Option<String>,
        #[arg(long)]
        x: Option<String>,
        #[arg(long)]
        x0: Option<String>,
    },
    /// Two-exhaustion directional experiment for the power-law field
    Counterexample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        alpha: Option<f64>,
        /// start radius r (probes at (±r, 0))
        #[arg(long)]
        r: Option<i32>,
        #[arg(long = "R")]
        r_list: Option<String>,
    },
    /// Table of the planar potential kernel
    PotentialKernel {
        #[command(flatten)]
        common: Common,
        /// table over |x|_inf <= max
        #[arg(long)]
        max: Option<i32>,
    },
    /// Closed-form two-point hitting probabilities vs Monte Carlo
    Hitting {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pairs: Option<u32>,
        #[arg(long)]
        samples: Option<u64>,
    },
    /// SRW Green function by finite-box solve (d >= 3)
    Green {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        x: Option<String>,
        #[arg(long = "box")]
        box_radius: Option<i64>,
    },
    /// Radial table of the bush-hitting killing estimate
    SnakeK {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        max_radius: Option<u32>,
        #[arg(long)]
        table_samples: Option<u64>,
        #[arg(long)]
        node_cap: Option<usize>,
        /// finite offspring pmf "p0,p1,..." (default geometric 1/2)
        #[arg(long)]
        mu: Option<String>,
    },
    /// Snake escape estimator vs the killed-walk estimator
    SnakeEscape {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        x: Option<String>,
        #[arg(long = "R")]
        r_index: Option<u32>,
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long)]
        node_cap: Option<usize>,
        #[arg(long)]
        mu: Option<String>,
    },
    /// Sample the conditioned snake and export it
    SnakeCondition {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        x: Option<String>,
        #[arg(long)]
        prefix_len: Option<usize>,
        #[arg(long)]
        max_radius: Option<u32>,
        #[arg(long)]
        mu: Option<String>,
    },
    /// Killed Brownian motion annulus survival scaling
    KbmAnnulus {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long = "r-list")]
        r_list: Option<String>,
        #[arg(long)]
        samples: Option<u64>,
    },
    /// Killed Brownian motion directional escape asymmetry
    KbmDirectional {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        r: Option<i32>,
        #[arg(long)]
        n_doublings: Option<u32>,
        #[arg(long)]
        samples: Option<u64>,
    },
    /// Trapped / not-trapped classification of a killing field
    Trapping {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cutoff: Option<u32>,
    },
}

fn base_config(kind: Kind, common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let cfg = ExperimentConfig::from_toml(&text)?;
            if cfg.kind != kind {
                anyhow::bail!(
                    "config document is for `{}` but the `{}` subcommand was invoked",
                    cfg.kind.as_str(),
                    kind.as_str()
                );
            }
            cfg
        }
        None => ExperimentConfig::new(kind),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(d) = common.d {
        cfg.dim = d;
    }
    if let Some(k) = &common.killing {
        cfg.killing = Some(KillingSpec::parse_cli(k)?);
    }
    if let Some(seg) = &common.segment {
        let parts: Vec<&str> = seg.split(',').collect();
        if parts.len() != 2 {
            anyhow::bail!("--segment expects b_minus,b_plus");
        }
        cfg.exhaustion = Some(ExhaustionSpec::Segment {
            b_minus: parts[0].trim().parse()?,
            b_plus: parts[1].trim().parse()?,
        });
    }
    if let Some(hs) = &common.halfspace {
        let parts: Vec<&str> = hs.split(',').collect();
        if parts.len() < 2 || parts.len() > 3 {
            anyhow::bail!("--halfspace expects axis,sign[,truncation]");
        }
        cfg.exhaustion = Some(ExhaustionSpec::Halfspace {
            axis: parts[0].trim().parse()?,
            sign: parts[1].trim().to_string(),
            truncation: if parts.len() == 3 {
                parts[2].trim().parse()?
            } else {
                8
            },
        });
    }
    if let Some(tol) = common.tol {
        cfg.params.tol = Some(tol);
    }
    Ok(cfg)
}

fn parse_mu(mu: &Option<String>) -> Result<Option<OffspringSpec>> {
    match mu {
        None => Ok(None),
        Some(s) if s == "geometric" => Ok(Some(OffspringSpec::Geometric)),
        Some(s) => {
            let pmf: Vec<f64> = s
                .split(',')
                .map(|v| v.trim().parse::<f64>().context("offspring pmf entry"))
                .collect::<Result<_>>()?;
            Ok(Some(OffspringSpec::Finite { pmf }))
        }
    }
}

fn set_point(dst: &mut Option<Vec<i32>>, src: &Option<String>) -> Result<()> {
    if let Some(s) = src {
        *dst = Some(parse_point_flag(s)?);
    }
    Ok(())
}

fn set_list(dst: &mut Option<Vec<u32>>, src: &Option<String>) -> Result<()> {
    if let Some(s) = src {
        *dst = Some(parse_u32_list(s)?);
    }
    Ok(())
}

fn build_config(command: &Command) -> Result<ExperimentConfig> {
    Ok(match command {
        Command::Solve { common, r_index, x } => {
            let mut cfg = base_config(Kind::Solve, common)?;
            if r_index.is_some() {
                cfg.params.r_index = *r_index;
            }
            set_point(&mut cfg.params.x, x)?;
            cfg
        }
        Command::Ratio {
            common,
            r_list,
            x,
            x0,
        } => {
            let mut cfg = base_config(Kind::Ratio, common)?;
            set_list(&mut cfg.params.r_list, r_list)?;
            set_point(&mut cfg.params.x, x)?;
            set_point(&mut cfg.params.x0, x0)?;
            cfg
        }
        Command::Counterexample {
            common,
            alpha,
            r,
            r_list,
        } => {
            let mut cfg = base_config(Kind::Counterexample, common)?;
            if alpha.is_some() {
                cfg.params.alpha = *alpha;
            }
            if r.is_some() {
                cfg.params.start_radius = *r;
            }
            set_list(&mut cfg.params.r_list, r_list)?;
            cfg
        }
        Command::PotentialKernel { common, max } => {
            let mut cfg = base_config(Kind::PotentialKernel, common)?;
            if max.is_some() {
                cfg.params.max_norm = *max;
            }
            cfg
        }
        Command::Hitting {
            common,
            pairs,
            samples,
        } => {
            let mut cfg = base_config(Kind::Hitting, common)?;
            if pairs.is_some() {
                cfg.params.pairs = *pairs;
            }
            if samples.is_some() {
                cfg.params.samples = *samples;
            }
            cfg
        }
        Command::Green {
            common,
            x,
            box_radius,
        } => {
            let mut cfg = base_config(Kind::Green, common)?;
            if cfg.dim == 2 {
                cfg.dim = 3;
            }
            set_point(&mut cfg.params.x, x)?;
            if box_radius.is_some() {
                cfg.params.box_radius = *box_radius;
            }
            cfg
        }
        Command::SnakeK {
            common,
            max_radius,
            table_samples,
            node_cap,
            mu,
        } => {
            let mut cfg = base_config(Kind::SnakeK, common)?;
            if max_radius.is_some() {
                cfg.params.max_radius = *max_radius;
            }
            if table_samples.is_some() {
                cfg.params.table_samples = *table_samples;
            }
            if node_cap.is_some() {
                cfg.params.node_cap = *node_cap;
            }
            if let Some(spec) = parse_mu(mu)? {
                cfg.offspring = Some(spec);
            }
            cfg
        }
        Command::SnakeEscape {
            common,
            x,
            r_index,
            samples,
            node_cap,
            mu,
        } => {
            let mut cfg = base_config(Kind::SnakeEscape, common)?;
            set_point(&mut cfg.params.x, x)?;
            if r_index.is_some() {
                cfg.params.r_index = *r_index;
            }
            if samples.is_some() {
                cfg.params.samples = *samples;
            }
            if node_cap.is_some() {
                cfg.params.node_cap = *node_cap;
            }
            if let Some(spec) = parse_mu(mu)? {
                cfg.offspring = Some(spec);
            }
            cfg
        }
        Command::SnakeCondition {
            common,
            x,
            prefix_len,
            max_radius,
            mu,
        } => {
            let mut cfg = base_config(Kind::SnakeCondition, common)?;
            set_point(&mut cfg.params.x, x)?;
            if prefix_len.is_some() {
                cfg.params.prefix_len = *prefix_len;
            }
            if max_radius.is_some() {
                cfg.params.max_radius = *max_radius;
            }
            if let Some(spec) = parse_mu(mu)? {
                cfg.offspring = Some(spec);
            }
            cfg
        }
        Command::KbmAnnulus {
            common,
            alpha,
            dt,
            r_list,
            samples,
        } => {
            let mut cfg = base_config(Kind::KbmAnnulus, common)?;
            if alpha.is_some() {
                cfg.params.alpha = *alpha;
            }
            if dt.is_some() {
                cfg.params.dt = *dt;
            }
            set_list(&mut cfg.params.r_list, r_list)?;
            if samples.is_some() {
                cfg.params.samples = *samples;
            }
            cfg
        }
        Command::KbmDirectional {
            common,
            alpha,
            dt,
            r,
            n_doublings,
            samples,
        } => {
            let mut cfg = base_config(Kind::KbmDirectional, common)?;
            if alpha.is_some() {
                cfg.params.alpha = *alpha;
            }
            if dt.is_some() {
                cfg.params.dt = *dt;
            }
            if r.is_some() {
                cfg.params.start_radius = *r;
            }
            if n_doublings.is_some() {
                cfg.params.n_doublings = *n_doublings;
            }
            if samples.is_some() {
                cfg.params.samples = *samples;
            }
            cfg
        }
        Command::Trapping { common, cutoff } => {
            let mut cfg = base_config(Kind::Trapping, common)?;
            if cutoff.is_some() {
                cfg.params.cutoff = *cutoff;
            }
            cfg
        }
    })
}

fn main() {
    let cli = Cli::parse();
    let cfg = match build_config(&cli.command) {
        Ok(cfg) => cfg,
        Err(err) => {
            eprintln!("configuration error: {err:#}");
            std::process::exit(2);
        }
    };
    match runner::run(&cfg) {
        Ok(report) => {
            for line in &report.summary {
                println!("{line}");
            }
            println!("manifest: {}", report.manifest_path.display());
        }
        Err(err) => {
            eprintln!("run failed: {err:#}");
            std::process::exit(1);
        }
    }
}
