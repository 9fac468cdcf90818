//! Killed Brownian motion in the plane: Euler paths with an exponential
//! killing clock, annulus survival scaling, winding concentration with the
//! skew-product cross-check, and directional exhaustion escape.

use crate::error::{KrwError, Result};
use crate::rng::RandomStream;
use crate::stats::Estimate;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Radial killing rate `k: R^2 -> [0, inf)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub enum ContinuousKilling {
    /// `k(x) = min(1, |x|^-alpha)`
    PowerLaw { alpha: f64 },
    Constant { rate: f64 },
    Zero,
}

impl ContinuousKilling {
    #[inline]
    pub fn rate(&self, r: f64) -> f64 {
        match self {
            ContinuousKilling::PowerLaw { alpha } => {
                if r <= 1.0 {
                    1.0
                } else {
                    r.powf(-alpha)
                }
            }
            ContinuousKilling::Constant { rate } => *rate,
            ContinuousKilling::Zero => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct KbmConfig {
    pub killing: ContinuousKilling,
    pub dt: f64,
    pub max_time: f64,
    pub stream: RandomStream,
}

impl KbmConfig {
    pub fn power_law(alpha: f64, dt: f64, max_time: f64, stream: RandomStream) -> Result<Self> {
        if !(0.0 < alpha && alpha < 2.0) {
            return Err(KrwError::InvalidParameter(format!(
                "alpha = {alpha} outside (0, 2)"
            )));
        }
        if dt <= 0.0 {
            return Err(KrwError::InvalidParameter("dt must be positive".into()));
        }
        Ok(KbmConfig {
            killing: ContinuousKilling::PowerLaw { alpha },
            dt,
            max_time,
            stream,
        })
    }

    /// `beta = (2 - alpha) / 4`, the exponent balancing killing and entropy:
    /// `2 - alpha - 2 beta = 2 beta`.
    pub fn beta(&self) -> f64 {
        match self.killing {
            ContinuousKilling::PowerLaw { alpha } => (2.0 - alpha) / 4.0,
            _ => f64::NAN,
        }
    }

    /// Resolution rule `dt <= 1e-2 * inner_radius^2` for annulus runs.
    pub fn check_resolution(&self, inner_radius: f64) -> Result<()> {
        if self.dt > 1e-2 * inner_radius * inner_radius {
            return Err(KrwError::InvalidParameter(format!(
                "dt = {} violates the resolution rule at inner radius {inner_radius}",
                self.dt
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub enum KbmOutcome {
    Escaped { pos: [f64; 2], time: f64 },
    Died { time: f64 },
    TimedOut,
}

impl KbmOutcome {
    pub fn escaped(&self) -> bool {
        matches!(self, KbmOutcome::Escaped { .. })
    }
}

/// Per-path record: outcome, unwrapped angular displacement, hazard
/// accumulated up to the stop, and whether any single step turned by pi/2
/// or more (winding bookkeeping unreliable for that path).
#[derive(Clone, Copy, Debug)]
pub struct PathRecord {
    pub outcome: KbmOutcome,
    pub delta_arg: f64,
    pub hazard_at_stop: f64,
    pub winding_violation: bool,
}

#[inline]
fn gauss_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    let m = (-2.0 * u1.ln()).sqrt();
    let a = 2.0 * std::f64::consts::PI * u2;
    (m * a.cos(), m * a.sin())
}

/// Euler path with `sqrt(dt) N(0, I_2)` increments, trapezoid hazard and an
/// `Exp(1)` killing threshold; death is declared at the first step whose
/// accumulated hazard crosses the threshold. `apply_killing = false` runs
/// the free motion while still accumulating the hazard (Feynman-Kac weights).
pub fn run_path(
    config: &KbmConfig,
    start: [f64; 2],
    stop: impl Fn(&[f64; 2]) -> bool,
    apply_killing: bool,
    track_angle: bool,
    rng: &mut ChaCha8Rng,
) -> PathRecord {
    let sdt = config.dt.sqrt();
    let xi = -(rng.gen::<f64>().max(1e-300)).ln();
    let mut pos = start;
    let mut t = 0.0;
    let mut hazard = 0.0;
    let mut rate_prev = config.killing.rate((pos[0] * pos[0] + pos[1] * pos[1]).sqrt());
    let mut delta_arg = 0.0;
    let mut violation = false;
    while t < config.max_time {
        let (g1, g2) = gauss_pair(rng);
        let new = [pos[0] + sdt * g1, pos[1] + sdt * g2];
        let r_new = (new[0] * new[0] + new[1] * new[1]).sqrt();
        let rate_new = config.killing.rate(r_new);
        hazard += 0.5 * config.dt * (rate_prev + rate_new);
        t += config.dt;
        if track_angle {
            let cross = pos[0] * new[1] - pos[1] * new[0];
            let dot = pos[0] * new[0] + pos[1] * new[1];
            let dth = cross.atan2(dot);
            if dth.abs() >= std::f64::consts::FRAC_PI_2 {
                violation = true;
            }
            delta_arg += dth;
        }
        pos = new;
        rate_prev = rate_new;
        if apply_killing && hazard >= xi {
            return PathRecord {
                outcome: KbmOutcome::Died { time: t },
                delta_arg,
                hazard_at_stop: hazard,
                winding_violation: violation,
            };
        }
        if stop(&pos) {
            return PathRecord {
                outcome: KbmOutcome::Escaped { pos, time: t },
                delta_arg,
                hazard_at_stop: hazard,
                winding_violation: violation,
            };
        }
    }
    PathRecord {
        outcome: KbmOutcome::TimedOut,
        delta_arg,
        hazard_at_stop: hazard,
        winding_violation: violation,
    }
}

/// Public single-path entry point with the named stop predicates.
pub enum StopRule {
    RadiusReached(f64),
    /// first entry to `{sign * x > 0} \ B(radius)` (the complement of a
    /// ball-plus-half-plane exhaustion)
    RegionEntered { positive_x: bool, radius: f64 },
}

pub fn simulate_until(
    config: &KbmConfig,
    start: [f64; 2],
    rule: &StopRule,
    rng: &mut ChaCha8Rng,
) -> KbmOutcome {
    let rec = match rule {
        StopRule::RadiusReached(r) => {
            let rr = r * r;
            run_path(
                config,
                start,
                |p| p[0] * p[0] + p[1] * p[1] >= rr,
                true,
                false,
                rng,
            )
        }
        StopRule::RegionEntered { positive_x, radius } => {
            let rr = radius * radius;
            let sgn = if *positive_x { 1.0 } else { -1.0 };
            run_path(
                config,
                start,
                |p| sgn * p[0] > 0.0 && p[0] * p[0] + p[1] * p[1] > rr,
                true,
                false,
                rng,
            )
        }
    };
    rec.outcome
}

fn chunked<T: Send>(
    samples: u64,
    stream: RandomStream,
    chunk: u64,
    f: impl Fn(&mut ChaCha8Rng, u64) -> T + Sync,
    fold: impl Fn(T, T) -> T + Sync + Send,
    zero: impl Fn() -> T + Sync + Send,
) -> T {
    let chunks = samples.div_ceil(chunk);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream.fork(c).rng();
            f(&mut rng, chunk.min(samples - c * chunk))
        })
        .reduce(zero, fold)
}

/// `P_r[tau(factor * r) < tau(Delta)]` started from `(r, 0)`; the rotational
/// invariance of the killing makes the single start point representative.
pub fn annulus_survival(
    config: &KbmConfig,
    r: f64,
    factor: f64,
    samples: u64,
) -> Result<Estimate> {
    if r < 1.0 {
        return Err(KrwError::InvalidParameter("need r >= 1".into()));
    }
    config.check_resolution(r)?;
    let target = (factor * r) * (factor * r);
    let hits = chunked(
        samples,
        config.stream,
        2048,
        |rng, m| {
            let mut h = 0u64;
            for _ in 0..m {
                let rec = run_path(
                    config,
                    [r, 0.0],
                    |p| p[0] * p[0] + p[1] * p[1] >= target,
                    true,
                    false,
                    rng,
                );
                if rec.outcome.escaped() {
                    h += 1;
                }
            }
            h
        },
        |a, b| a + b,
        || 0,
    );
    Ok(Estimate::bernoulli(hits, samples, config.stream))
}

/// Chained product of per-doubling annulus survivals
/// (`prod_i P_{2^i r}[tau(2^{i+1} r) < tau(Delta)]`), the rare-event route
/// for large targets. Standard errors combine by relative variance.
pub fn annulus_survival_chained(
    config: &KbmConfig,
    r: f64,
    n_doublings: u32,
    samples_per_level: u64,
) -> Result<Estimate> {
    let mut mean = 1.0f64;
    let mut rel_var = 0.0f64;
    for i in 0..n_doublings {
        let level = KbmConfig {
            stream: config.stream.fork(7000 + i as u64),
            ..*config
        };
        let e = annulus_survival(&level, r * 2f64.powi(i as i32), 2.0, samples_per_level)?;
        if e.mean == 0.0 {
            return Ok(Estimate {
                mean: 0.0,
                stderr: f64::NAN,
                n: samples_per_level,
                stream: config.stream,
            });
        }
        mean *= e.mean;
        rel_var += (e.stderr / e.mean).powi(2);
    }
    Ok(Estimate {
        mean,
        stderr: mean * rel_var.sqrt(),
        n: samples_per_level,
        stream: config.stream,
    })
}

/// Winding statistics among paths surviving from `(r,0)` to `2r`.
pub struct AngularReport {
    /// conditional frequency of `|delta arg| >= r^{-beta/2}`; `None` when
    /// fewer than 100 paths survived
    pub exceedance: Option<Estimate>,
    pub survivors: u64,
    pub mean_delta_arg: f64,
    pub stderr_delta_arg: f64,
    pub threshold: f64,
    pub winding_violations: u64,
}

pub fn angular_concentration(config: &KbmConfig, r: f64, samples: u64) -> Result<AngularReport> {
    if r < 4.0 {
        return Err(KrwError::InvalidParameter("need r >= 4".into()));
    }
    config.check_resolution(r)?;
    let threshold = r.powf(-config.beta() / 2.0);
    let target = 4.0 * r * r;
    let (exceed, survivors, sum, sum_sq, violations) = chunked(
        samples,
        config.stream,
        1024,
        |rng, m| {
            let mut acc = (0u64, 0u64, 0.0f64, 0.0f64, 0u64);
            for _ in 0..m {
                let rec = run_path(
                    config,
                    [r, 0.0],
                    |p| p[0] * p[0] + p[1] * p[1] >= target,
                    true,
                    true,
                    rng,
                );
                if rec.outcome.escaped() {
                    if rec.winding_violation {
                        acc.4 += 1;
                        continue;
                    }
                    acc.1 += 1;
                    acc.2 += rec.delta_arg;
                    acc.3 += rec.delta_arg * rec.delta_arg;
                    if rec.delta_arg.abs() >= threshold {
                        acc.0 += 1;
                    }
                }
            }
            acc
        },
        |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2, a.3 + b.3, a.4 + b.4),
        || (0, 0, 0.0, 0.0, 0),
    );
    // a path with an untrackable step cannot contribute a winding angle;
    // tolerate a sliver, fail loudly beyond it
    if violations * 1000 > survivors.max(1) {
        return Err(KrwError::WindingViolation(
            violations as usize,
            (survivors + violations) as usize,
        ));
    }
    let ex = if survivors >= 100 {
        Some(Estimate::bernoulli(
            exceed,
            survivors,
            config.stream,
        ))
    } else {
        None
    };
    let mean = sum / survivors.max(1) as f64;
    let var = (sum_sq / survivors.max(1) as f64 - mean * mean).max(0.0);
    Ok(AngularReport {
        exceedance: ex,
        survivors,
        mean_delta_arg: mean,
        stderr_delta_arg: (var / survivors.max(1) as f64).sqrt(),
        threshold,
        winding_violations: violations,
    })
}

/// Exit angles of survivors sampled through the skew-product route: the
/// radial part is the norm of a free planar BM killed through its radius,
/// and the angle is an independent one-dimensional BM run at the Bessel
/// clock `R_t = int ds / beta_s^2`.
pub fn skew_product_exit_angles(config: &KbmConfig, r: f64, samples: u64) -> Vec<f64> {
    let target = 4.0 * r * r;
    let sdt = config.dt.sqrt();
    let chunks = samples.div_ceil(1024);
    let mut parts: Vec<(u64, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = config.stream.fork(40_000 + c).rng();
            let rng = &mut rng;
            let m = 1024.min(samples - c * 1024);
            let mut out = Vec::new();
            for _ in 0..m {
                let xi = -(rng.gen::<f64>().max(1e-300)).ln();
                let mut pos = [r, 0.0];
                let mut clock = 0.0;
                let mut hazard = 0.0;
                let mut t = 0.0;
                let mut r2_prev = r * r;
                loop {
                    if t >= config.max_time {
                        break;
                    }
                    let (g1, g2) = gauss_pair(rng);
                    pos = [pos[0] + sdt * g1, pos[1] + sdt * g2];
                    let r2 = (pos[0] * pos[0] + pos[1] * pos[1]).max(1e-12);
                    hazard += 0.5
                        * config.dt
                        * (config.killing.rate(r2_prev.sqrt()) + config.killing.rate(r2.sqrt()));
                    clock += 0.5 * config.dt * (1.0 / r2_prev + 1.0 / r2);
                    r2_prev = r2;
                    t += config.dt;
                    if hazard >= xi {
                        break;
                    }
                    if r2 >= target {
                        let (z, _) = gauss_pair(rng);
                        out.push(clock.sqrt() * z);
                        break;
                    }
                }
            }
            (c, out)
        })
        .collect();
    parts.sort_by_key(|(c, _)| *c);
    parts.into_iter().flat_map(|(_, v)| v).collect()
}

/// Exit angles of survivors from the direct two-dimensional simulation.
pub fn direct_exit_angles(config: &KbmConfig, r: f64, samples: u64) -> Vec<f64> {
    let target = 4.0 * r * r;
    let chunks = samples.div_ceil(1024);
    let mut parts: Vec<(u64, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = config.stream.fork(50_000 + c).rng();
            let m = 1024.min(samples - c * 1024);
            let mut out = Vec::new();
            for _ in 0..m {
                let rec = run_path(
                    config,
                    [r, 0.0],
                    |p| p[0] * p[0] + p[1] * p[1] >= target,
                    true,
                    true,
                    &mut rng,
                );
                if rec.outcome.escaped() && !rec.winding_violation {
                    out.push(rec.delta_arg);
                }
            }
            (c, out)
        })
        .collect();
    parts.sort_by_key(|(c, _)| *c);
    parts.into_iter().flat_map(|(_, v)| v).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Plus,
    Minus,
}

/// Directional escape counts: `P_{(r,0)}[tau((Lambda^side)^c) < tau(Delta)]`
/// where `Lambda^+` attaches the left half-plane (escape right) and
/// `Lambda^-` the right one (escape left).
pub struct DirectionalOutcome {
    pub estimate: Estimate,
    pub timed_out: u64,
}

pub fn directional_escape(
    config: &KbmConfig,
    r: f64,
    n_doublings: u32,
    side: Side,
    samples: u64,
) -> Result<DirectionalOutcome> {
    directional_escape_from(config, [r, 0.0], r, n_doublings, side, samples)
}

/// As `directional_escape` from an arbitrary start (mirror checks).
pub fn directional_escape_from(
    config: &KbmConfig,
    start: [f64; 2],
    r: f64,
    n_doublings: u32,
    side: Side,
    samples: u64,
) -> Result<DirectionalOutcome> {
    if r < 1.0 {
        return Err(KrwError::InvalidParameter("need r >= 1".into()));
    }
    config.check_resolution(r)?;
    let radius = r * 2f64.powi(n_doublings as i32);
    let rr = radius * radius;
    let sgn = match side {
        Side::Plus => 1.0,
        Side::Minus => -1.0,
    };
    let (hits, timeouts) = chunked(
        samples,
        config.stream,
        2048,
        |rng, m| {
            let mut acc = (0u64, 0u64);
            for _ in 0..m {
                let rec = run_path(
                    config,
                    start,
                    |p| sgn * p[0] > 0.0 && p[0] * p[0] + p[1] * p[1] > rr,
                    true,
                    false,
                    rng,
                );
                match rec.outcome {
                    KbmOutcome::Escaped { .. } => acc.0 += 1,
                    KbmOutcome::TimedOut => acc.1 += 1,
                    KbmOutcome::Died { .. } => {}
                }
            }
            acc
        },
        |a, b| (a.0 + b.0, a.1 + b.1),
        || (0, 0),
    );
    Ok(DirectionalOutcome {
        estimate: Estimate::bernoulli(hits, samples, config.stream),
        timed_out: timeouts,
    })
}

/// Two-estimator Feynman-Kac pair for the event `tau(radius) <= tau(Delta)`:
/// the killed indicator run and the free run weighted by
/// `exp(-int_0^tau k)`.
pub fn feynman_kac_pair(
    config: &KbmConfig,
    start: [f64; 2],
    radius: f64,
    samples: u64,
) -> (Estimate, Estimate) {
    let rr = radius * radius;
    let hits = chunked(
        samples,
        config.stream,
        2048,
        |rng, m| {
            let mut h = 0u64;
            for _ in 0..m {
                let rec = run_path(
                    config,
                    start,
                    |p| p[0] * p[0] + p[1] * p[1] >= rr,
                    true,
                    false,
                    rng,
                );
                if rec.outcome.escaped() {
                    h += 1;
                }
            }
            h
        },
        |a, b| a + b,
        || 0,
    );
    let indicator = Estimate::bernoulli(hits, samples, config.stream);
    let weighted_stream = config.stream.fork(90_001);
    let (sum, sum_sq) = chunked(
        samples,
        weighted_stream,
        2048,
        |rng, m| {
            let mut acc = (0.0f64, 0.0f64);
            for _ in 0..m {
                let rec = run_path(
                    config,
                    start,
                    |p| p[0] * p[0] + p[1] * p[1] >= rr,
                    false,
                    false,
                    rng,
                );
                let w = match rec.outcome {
                    KbmOutcome::Escaped { .. } => (-rec.hazard_at_stop).exp(),
                    _ => 0.0,
                };
                acc.0 += w;
                acc.1 += w * w;
            }
            acc
        },
        |a, b| (a.0 + b.0, a.1 + b.1),
        || (0.0, 0.0),
    );
    let weighted = Estimate::from_moments(sum, sum_sq, samples, weighted_stream);
    (indicator, weighted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_critical_5pct, ks_statistic};

    fn cfg(killing: ContinuousKilling, dt: f64, seed: u64) -> KbmConfig {
        KbmConfig {
            killing,
            dt,
            max_time: 1.0e5,
            stream: RandomStream::new(seed, 0),
        }
    }

    #[test]
    fn no_killing_never_dies() {
        let c = cfg(ContinuousKilling::Zero, 0.01, 1);
        let e = annulus_survival(&c, 2.0, 2.0, 2000).unwrap();
        assert_eq!(e.mean, 1.0);
    }

    #[test]
    fn constant_killing_exponential_clock() {
        // survive to a fixed horizon: P = exp(-lambda t)
        let lambda = 0.7;
        let t_stop = 2.0;
        let c = KbmConfig {
            killing: ContinuousKilling::Constant { rate: lambda },
            dt: 1e-3,
            max_time: t_stop,
            stream: RandomStream::new(2, 0),
        };
        let n = 100_000u64;
        let survived = chunked(
            n,
            c.stream,
            4096,
            |rng, m| {
                let mut s = 0u64;
                for _ in 0..m {
                    let rec = run_path(&c, [0.0, 0.0], |_| false, true, false, rng);
                    if matches!(rec.outcome, KbmOutcome::TimedOut) {
                        s += 1;
                    }
                }
                s
            },
            |a, b| a + b,
            || 0,
        );
        let e = Estimate::bernoulli(survived, n, c.stream);
        let expect = (-lambda * t_stop).exp();
        assert!(
            (e.mean - expect).abs() <= 3.0 * e.stderr,
            "{} vs {expect}",
            e.mean
        );
    }

    #[test]
    fn feynman_kac_two_estimators_agree() {
        let c = cfg(ContinuousKilling::PowerLaw { alpha: 1.0 }, 5e-3, 3);
        let (a, b) = feynman_kac_pair(&c, [2.0, 0.0], 6.0, 60_000);
        assert!(
            a.agrees_with(&b, 3.0),
            "indicator {} +- {} vs weighted {} +- {}",
            a.mean,
            a.stderr,
            b.mean,
            b.stderr
        );
    }

    #[test]
    fn weaker_killing_survives_more() {
        let strong = cfg(ContinuousKilling::PowerLaw { alpha: 1.2 }, 0.02, 4);
        let weak = cfg(ContinuousKilling::PowerLaw { alpha: 1.9 }, 0.02, 4);
        let es = annulus_survival(&strong, 8.0, 2.0, 30_000).unwrap();
        let ew = annulus_survival(&weak, 8.0, 2.0, 30_000).unwrap();
        assert!(ew.mean > es.mean + es.combined_stderr(&ew));
    }

    #[test]
    fn chained_product_matches_direct() {
        let c = cfg(ContinuousKilling::PowerLaw { alpha: 1.0 }, 5e-3, 5);
        let direct = annulus_survival(&c, 3.0, 4.0, 60_000).unwrap();
        let chained = annulus_survival_chained(&c, 3.0, 2, 60_000).unwrap();
        assert!(
            direct.agrees_with(&chained, 3.0),
            "direct {} +- {} vs chained {} +- {}",
            direct.mean,
            direct.stderr,
            chained.mean,
            chained.stderr
        );
    }

    #[test]
    fn winding_symmetric_and_concentrating() {
        let c = cfg(ContinuousKilling::PowerLaw { alpha: 1.0 }, 0.02, 6);
        let rep8 = angular_concentration(&c, 8.0, 40_000).unwrap();
        assert!(rep8.survivors >= 100);
        // reflection symmetry: mean winding compatible with 0
        assert!(
            rep8.mean_delta_arg.abs() <= 3.0 * rep8.stderr_delta_arg,
            "mean {} +- {}",
            rep8.mean_delta_arg,
            rep8.stderr_delta_arg
        );
        let c16 = KbmConfig {
            stream: c.stream.fork(77),
            ..c
        };
        let rep16 = angular_concentration(&c16, 16.0, 60_000).unwrap();
        let (e8, e16) = (rep8.exceedance.unwrap(), rep16.exceedance.unwrap());
        // exceedance beyond r^{-beta/2} does not grow with r (2 sigma slack)
        assert!(
            e16.mean <= e8.mean + 2.0 * e8.combined_stderr(&e16),
            "{} then {}",
            e8.mean,
            e16.mean
        );
    }

    #[test]
    fn skew_product_angles_match_direct() {
        let c = cfg(ContinuousKilling::PowerLaw { alpha: 1.0 }, 5e-3, 7);
        let mut direct = direct_exit_angles(&c, 6.0, 30_000);
        let mut skew = skew_product_exit_angles(&c, 6.0, 30_000);
        assert!(direct.len() > 500 && skew.len() > 500);
        let d = ks_statistic(&mut direct, &mut skew);
        let crit = ks_critical_5pct(direct.len(), skew.len());
        assert!(d < crit, "KS {d:.4} vs critical {crit:.4}");
    }

    #[test]
    fn ldp_bound_holds_empirically() {
        // P[tau(B(x,r)^c) <= t] <= 4 exp(-r^2 / (8t))
        let c = cfg(ContinuousKilling::Zero, 1e-3, 8);
        let n = 20_000u64;
        for (r, t) in [(1.0, 0.5), (2.0, 1.0), (2.0, 4.0)] {
            let exits = chunked(
                n,
                c.stream.fork((r * 10.0 + t) as u64),
                2048,
                |rng, m| {
                    let mut cnt = 0u64;
                    let conf = KbmConfig { max_time: t, ..c };
                    for _ in 0..m {
                        let rec = run_path(
                            &conf,
                            [0.0, 0.0],
                            |p| p[0] * p[0] + p[1] * p[1] >= r * r,
                            false,
                            false,
                            rng,
                        );
                        if rec.outcome.escaped() {
                            cnt += 1;
                        }
                    }
                    cnt
                },
                |a, b| a + b,
                || 0,
            );
            let e = Estimate::bernoulli(exits, n, c.stream);
            let bound = 4.0 * (-r * r / (8.0 * t)).exp();
            assert!(
                e.mean <= bound + 3.0 * e.stderr,
                "r={r} t={t}: {} vs bound {bound}",
                e.mean
            );
        }
    }

    #[test]
    fn reflection_principle_1d() {
        // P_0[sup_{[0,t]} W >= x] = 2 P[N(0,t) >= x]
        let dt: f64 = 2e-5;
        let t = 1.0;
        let x = 1.0;
        let n = 30_000u64;
        let steps = (t / dt) as usize;
        let crossed = chunked(
            n,
            RandomStream::new(17, 0),
            512,
            |rng, m| {
                let mut cnt = 0u64;
                let sdt = dt.sqrt();
                for _ in 0..m {
                    let mut w = 0.0;
                    let mut spare: Option<f64> = None;
                    for _ in 0..steps {
                        let g = match spare.take() {
                            Some(v) => v,
                            None => {
                                let (a, b) = gauss_pair(rng);
                                spare = Some(b);
                                a
                            }
                        };
                        w += sdt * g;
                        if w >= x {
                            cnt += 1;
                            break;
                        }
                    }
                }
                cnt
            },
            |a, b| a + b,
            || 0,
        );
        let e = Estimate::bernoulli(crossed, n, RandomStream::new(17, 0));
        // 2 P[N(0,1) >= 1] = erfc(1/sqrt(2)) = 0.31731...
        let expect = 0.3173105078629141;
        // discrete sup misses excursions between grid points: allow the
        // O(sqrt(dt)) deficit on top of 3 sigma
        let bias = 0.6 * dt.sqrt() * 0.4;
        assert!(
            (e.mean - expect).abs() <= 3.0 * e.stderr + bias,
            "{} vs {expect}",
            e.mean
        );
    }

    #[test]
    fn directional_mirror_symmetry() {
        let c = cfg(ContinuousKilling::PowerLaw { alpha: 1.0 }, 0.02, 9);
        let a = directional_escape(&c, 4.0, 2, Side::Plus, 30_000).unwrap();
        let mirrored = KbmConfig {
            stream: c.stream.fork(1),
            ..c
        };
        let b =
            directional_escape_from(&mirrored, [-4.0, 0.0], 4.0, 2, Side::Minus, 30_000).unwrap();
        assert!(
            a.estimate.agrees_with(&b.estimate, 3.0),
            "{} vs {}",
            a.estimate.mean,
            b.estimate.mean
        );
    }

    #[test]
    fn plus_side_dominates_restricted_ball_exit() {
        // event inclusion: exiting B(2^n r) at angle within pi/4 of the
        // positive axis implies entering the plus-side escape region
        let c = cfg(ContinuousKilling::PowerLaw { alpha: 1.0 }, 0.02, 10);
        let n = 30_000u64;
        let r = 4.0;
        let doublings = 2u32;
        let target = r * 2f64.powi(doublings as i32);
        let chunks = n.div_ceil(2048);
        let hits: u64 = (0..chunks)
            .into_par_iter()
            .map(|ci| {
                let mut rng = c.stream.fork(600 + ci).rng();
                let m = 2048.min(n - ci * 2048);
                let mut cnt = 0u64;
                for _ in 0..m {
                    let rec = run_path(
                        &c,
                        [r, 0.0],
                        |p| p[0] * p[0] + p[1] * p[1] >= target * target,
                        true,
                        true,
                        &mut rng,
                    );
                    if rec.outcome.escaped()
                        && !rec.winding_violation
                        && rec.delta_arg.abs() <= std::f64::consts::FRAC_PI_4
                    {
                        cnt += 1;
                    }
                }
                cnt
            })
            .sum();
        let restricted = Estimate::bernoulli(hits, n, c.stream);
        let plus = directional_escape(
            &KbmConfig {
                stream: c.stream.fork(4),
                ..c
            },
            r,
            doublings,
            Side::Plus,
            n,
        )
        .unwrap();
        assert!(
            plus.estimate.mean + 3.0 * plus.estimate.combined_stderr(&restricted)
                >= restricted.mean,
            "plus {} vs restricted {}",
            plus.estimate.mean,
            restricted.mean
        );
    }

    #[test]
    fn resolution_rule_enforced() {
        let c = cfg(ContinuousKilling::PowerLaw { alpha: 1.0 }, 0.5, 11);
        assert!(annulus_survival(&c, 2.0, 2.0, 10).is_err());
    }
}
