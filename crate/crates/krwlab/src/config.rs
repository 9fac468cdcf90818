//! Declarative experiment configuration: one TOML document per run, with
//! command-line flags overriding document fields.

use anyhow::{bail, Context, Result};
use krw_core::snake::OffspringLaw;
use krw_core::{Exhaustion, HalfSpaceSign, KillingField, Point};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::PathBuf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Solve,
    Ratio,
    Counterexample,
    PotentialKernel,
    Hitting,
    Green,
    SnakeK,
    SnakeEscape,
    SnakeCondition,
    KbmAnnulus,
    KbmDirectional,
    Trapping,
}

impl Kind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Kind::Solve => "solve",
            Kind::Ratio => "ratio",
            Kind::Counterexample => "counterexample",
            Kind::PotentialKernel => "potential-kernel",
            Kind::Hitting => "hitting",
            Kind::Green => "green",
            Kind::SnakeK => "snake-k",
            Kind::SnakeEscape => "snake-escape",
            Kind::SnakeCondition => "snake-condition",
            Kind::KbmAnnulus => "kbm-annulus",
            Kind::KbmDirectional => "kbm-directional",
            Kind::Trapping => "trapping",
        }
    }
}

/// Killing field in declarative form.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase", deny_unknown_fields)]
pub enum KillingSpec {
    Indicator { points: Vec<Vec<i32>>, rate: f64 },
    Powerlaw { alpha: f64 },
    Logcorrected { c: f64 },
    Zero,
    Tabulated {
        entries: Vec<(Vec<i32>, f64)>,
        default: Box<KillingSpec>,
    },
}

impl KillingSpec {
    pub fn to_field(&self, dim: usize) -> Result<KillingField> {
        let field = match self {
            KillingSpec::Indicator { points, rate } => {
                let pts: Vec<Point> = points
                    .iter()
                    .map(|c| point_of(c, dim, "killing.points"))
                    .collect::<Result<_>>()?;
                KillingField::indicator(pts, *rate)?
            }
            KillingSpec::Powerlaw { alpha } => KillingField::power_law(*alpha)?,
            KillingSpec::Logcorrected { c } => KillingField::log_corrected(*c)?,
            KillingSpec::Zero => KillingField::Zero,
            KillingSpec::Tabulated { entries, default } => {
                let mut table = HashMap::new();
                for (c, v) in entries {
                    table.insert(point_of(c, dim, "killing.entries")?, *v);
                }
                KillingField::tabulated(table, default.to_field(dim)?)?
            }
        };
        Ok(field)
    }

    /// Compact flag syntax: `zero`, `powerlaw:1.6`, `logcorrected:1.0`,
    /// `indicator:<pts>:<rate>` with points like `0` (origin) or
    /// `1,0;-1,0`.
    pub fn parse_cli(s: &str) -> Result<KillingSpec> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts[0] {
            "zero" => Ok(KillingSpec::Zero),
            "powerlaw" => {
                if parts.len() != 2 {
                    bail!("expected powerlaw:<alpha>, got `{s}`");
                }
                Ok(KillingSpec::Powerlaw {
                    alpha: parts[1].parse().context("killing alpha")?,
                })
            }
            "logcorrected" => {
                if parts.len() != 2 {
                    bail!("expected logcorrected:<c>, got `{s}`");
                }
                Ok(KillingSpec::Logcorrected {
                    c: parts[1].parse().context("killing c")?,
                })
            }
            "indicator" => {
                if parts.len() != 3 {
                    bail!("expected indicator:<points>:<rate>, got `{s}`");
                }
                let points = parts[1]
                    .split(';')
                    .map(|p| {
                        if p == "0" {
                            Ok(vec![])
                        } else {
                            p.split(',')
                                .map(|v| v.parse::<i32>().context("indicator point"))
                                .collect()
                        }
                    })
                    .collect::<Result<Vec<Vec<i32>>>>()?;
                Ok(KillingSpec::Indicator {
                    points,
                    rate: parts[2].parse().context("indicator rate")?,
                })
            }
            other => bail!("unknown killing variant `{other}`"),
        }
    }
}

/// Exhaustion in declarative form.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase", deny_unknown_fields)]
pub enum ExhaustionSpec {
    Ball,
    Halfspace {
        axis: usize,
        sign: String,
        #[serde(default = "default_truncation")]
        truncation: u32,
    },
    Segment { b_minus: u32, b_plus: u32 },
}

fn default_truncation() -> u32 {
    8
}

impl ExhaustionSpec {
    pub fn to_exhaustion(&self) -> Result<Exhaustion> {
        Ok(match self {
            ExhaustionSpec::Ball => Exhaustion::Ball,
            ExhaustionSpec::Halfspace {
                axis,
                sign,
                truncation,
            } => {
                let sign = match sign.as_str() {
                    "plus" => HalfSpaceSign::Plus,
                    "minus" => HalfSpaceSign::Minus,
                    other => bail!("exhaustion.sign must be plus|minus, got `{other}`"),
                };
                Exhaustion::BallPlusHalfSpace {
                    axis: *axis,
                    sign,
                    truncation_factor: *truncation,
                }
            }
            ExhaustionSpec::Segment { b_minus, b_plus } => {
                Exhaustion::segment(*b_minus, *b_plus)?
            }
        })
    }
}

/// Offspring law in declarative form.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase", deny_unknown_fields)]
pub enum OffspringSpec {
    Geometric,
    Finite { pmf: Vec<f64> },
}

impl OffspringSpec {
    pub fn to_law(&self) -> Result<OffspringLaw> {
        Ok(match self {
            OffspringSpec::Geometric => OffspringLaw::geometric_half(),
            OffspringSpec::Finite { pmf } => OffspringLaw::finite(pmf.clone())?,
        })
    }
}

/// Flat per-experiment numeric parameters; each kind validates the fields it
/// needs and rejects what it cannot interpret.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    pub x: Option<Vec<i32>>,
    pub x0: Option<Vec<i32>>,
    pub r_list: Option<Vec<u32>>,
    pub r_index: Option<u32>,
    pub alpha: Option<f64>,
    pub start_radius: Option<i32>,
    pub samples: Option<u64>,
    pub node_cap: Option<usize>,
    pub spine_cap: Option<usize>,
    pub r1: Option<i64>,
    pub r2: Option<i64>,
    pub max_norm: Option<i32>,
    pub box_radius: Option<i64>,
    pub pairs: Option<u32>,
    pub pair_max_norm: Option<i32>,
    pub rho_factor: Option<i64>,
    pub dt: Option<f64>,
    pub max_time: Option<f64>,
    pub factor: Option<f64>,
    pub n_doublings: Option<u32>,
    pub tol: Option<f64>,
    pub cutoff: Option<u32>,
    pub max_radius: Option<u32>,
    pub prefix_len: Option<usize>,
    pub table_samples: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub killing: Option<KillingSpec>,
    pub exhaustion: Option<ExhaustionSpec>,
    pub offspring: Option<OffspringSpec>,
    #[serde(default)]
    pub params: Params,
}

fn default_seed() -> u64 {
    1
}
fn default_out() -> PathBuf {
    PathBuf::from("krwlab-out")
}
fn default_dim() -> usize {
    2
}

impl ExperimentConfig {
    pub fn new(kind: Kind) -> Self {
        ExperimentConfig {
            kind,
            seed: default_seed(),
            out_dir: default_out(),
            dim: default_dim(),
            killing: None,
            exhaustion: None,
            offspring: None,
            params: Params::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("config document rejected")
    }

    pub fn killing_field(&self) -> Result<KillingField> {
        self.killing
            .as_ref()
            .context("this experiment requires a [killing] section or --killing flag")?
            .to_field(self.dim)
    }

    pub fn exhaustion(&self) -> Result<Exhaustion> {
        match &self.exhaustion {
            Some(spec) => spec.to_exhaustion(),
            None => Ok(Exhaustion::Ball),
        }
    }

    pub fn offspring_law(&self) -> Result<OffspringLaw> {
        match &self.offspring {
            Some(spec) => spec.to_law(),
            None => Ok(OffspringLaw::geometric_half()),
        }
    }

    pub fn point(&self, coords: &Option<Vec<i32>>, what: &str) -> Result<Point> {
        let c = coords
            .as_ref()
            .with_context(|| format!("missing required point `{what}`"))?;
        point_of(c, self.dim, what)
    }
}

pub fn point_of(coords: &[i32], dim: usize, what: &str) -> Result<Point> {
    if coords.is_empty() {
        // shorthand for the origin
        return Ok(Point::origin(dim));
    }
    if coords.len() != dim {
        bail!(
            "{what}: point {:?} has {} coordinates but d = {dim}",
            coords,
            coords.len()
        );
    }
    Ok(Point::new(coords))
}

pub fn parse_point_flag(s: &str) -> Result<Vec<i32>> {
    if s == "0" {
        return Ok(vec![]);
    }
    s.split(',')
        .map(|v| v.trim().parse::<i32>().context("point coordinate"))
        .collect()
}

pub fn parse_u32_list(s: &str) -> Result<Vec<u32>> {
    s.split(',')
        .map(|v| v.trim().parse::<u32>().context("index list entry"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_roundtrip() {
        let text = r#"
kind = "ratio"
seed = 7
dim = 2

[killing]
variant = "indicator"
points = [[0, 0]]
rate = 1.0

[exhaustion]
variant = "halfspace"
axis = 0
sign = "minus"

[params]
x = [2, 0]
x0 = [1, 0]
r_list = [16, 32]
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.kind, Kind::Ratio);
        assert_eq!(cfg.seed, 7);
        cfg.killing_field().unwrap();
        let ex = cfg.exhaustion().unwrap();
        assert!(matches!(ex, Exhaustion::BallPlusHalfSpace { truncation_factor: 8, .. }));
    }

    #[test]
    fn unknown_fields_rejected_with_location() {
        let text = "kind = \"solve\"\nnonsense = 3\n";
        let err = ExperimentConfig::from_toml(text).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("nonsense") || msg.contains("line"), "{msg}");
    }

    #[test]
    fn killing_flag_syntax() {
        let k = KillingSpec::parse_cli("indicator:0:0.5").unwrap();
        let f = k.to_field(1).unwrap();
        assert_eq!(f.eval(&Point::origin(1)), 0.5);
        let k = KillingSpec::parse_cli("indicator:1,0;-1,0:1.0").unwrap();
        let f = k.to_field(2).unwrap();
        assert_eq!(f.eval(&Point::new(&[1, 0])), 1.0);
        assert_eq!(f.eval(&Point::new(&[0, 1])), 0.0);
        assert!(KillingSpec::parse_cli("powerlaw").is_err());
        assert!(KillingSpec::parse_cli("mystery:1").is_err());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut cfg = ExperimentConfig::new(Kind::Solve);
        cfg.dim = 2;
        let err = cfg.point(&Some(vec![1, 2, 3]), "x").unwrap_err();
        assert!(format!("{err}").contains("3 coordinates"));
    }
}
