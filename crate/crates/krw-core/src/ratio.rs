//! Ratio-limit estimation across exhaustions, the two-exhaustion
//! counterexample experiment, and the Doob-transformed conditioned walk.

use crate::error::{KrwError, Result};
use crate::exhaust::{Exhaustion, HalfSpaceSign};
use crate::harmonic::{solve_escape, SurvivalSolution};
use crate::killing::KillingField;
use crate::lattice::{neighbors, Point};
use crate::rng::RandomStream;
use crate::solver::SolveOptions;
use rand::Rng;

const UNDERFLOW_FLOOR: f64 = 1e-290;

/// Escape-probability ratios `u_R(x) / u_R(x0)` along a list of indices,
/// with a Cauchy-gap diagnostic on the tail.
#[derive(Clone, Debug)]
pub struct RatioCurve {
    pub x: Point,
    pub x0: Point,
    pub points: Vec<(u32, f64)>,
    /// Max |log ratio difference| between consecutive indices on the tail
    /// half of the list; an empirical error bar for the reported limit.
    pub cauchy_gap: f64,
}

impl RatioCurve {
    /// The limit estimate: last ratio, with the Cauchy gap as its error bar.
    pub fn limit(&self) -> f64 {
        self.points.last().map(|&(_, v)| v).unwrap_or(f64::NAN)
    }
}

fn checked_ratio(sol: &SurvivalSolution, x: &Point, x0: &Point) -> Result<f64> {
    let ux = sol.value(x);
    let u0 = sol.value(x0);
    for (p, v) in [(x, ux), (x0, u0)] {
        if v < UNDERFLOW_FLOOR {
            return Err(KrwError::Underflow {
                point: *p,
                value: v,
            });
        }
    }
    Ok(ux / u0)
}

/// One `solve_escape` per index in `r_list`; ratios of the solved values.
pub fn ratio_curve(
    k: &KillingField,
    exhaustion: &Exhaustion,
    dim: usize,
    x: &Point,
    x0: &Point,
    r_list: &[u32],
    opts: &SolveOptions,
) -> Result<RatioCurve> {
    if r_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(KrwError::InvalidParameter(
            "index list must be strictly increasing".into(),
        ));
    }
    let mut points = Vec::with_capacity(r_list.len());
    for &r in r_list {
        let sol = solve_escape(k, exhaustion, dim, r, opts)?;
        points.push((r, checked_ratio(&sol, x, x0)?));
    }
    let tail_start = points.len() / 2;
    let mut gap: f64 = 0.0;
    for w in points[tail_start..].windows(2) {
        gap = gap.max((w[1].1.ln() - w[0].1.ln()).abs());
    }
    Ok(RatioCurve {
        x: *x,
        x0: *x0,
        points,
        cauchy_gap: gap,
    })
}

/// Output of the two-exhaustion directional experiment.
#[derive(Clone, Debug)]
pub struct CounterexampleReport {
    pub alpha: f64,
    pub r: i32,
    /// Rows `(R, rho_plus, rho_minus, symmetry_residual)` where the residual
    /// is `|rho_plus * rho_minus - 1|`.
    pub rows: Vec<(u32, f64, f64, f64)>,
}

impl CounterexampleReport {
    /// Directional gap `rho_minus / rho_plus` at the largest index.
    pub fn final_gap(&self) -> f64 {
        self.rows
            .last()
            .map(|&(_, p, m, _)| m / p)
            .unwrap_or(f64::NAN)
    }
}

/// Exact solves of `P[escape Lambda^±_R before death]` for the power-law
/// field, from the mirror pair `(±r, 0)`.
///
/// `Lambda^+` glues the left half-plane to the ball (escape means leaving to
/// the right), `Lambda^-` the right half-plane. By the `x -> -x` symmetry of
/// the lattice, the killing and the mirrored domains,
/// `rho_minus = 1 / rho_plus` exactly.
pub fn counterexample_experiment(
    alpha: f64,
    r: i32,
    r_list: &[u32],
    truncation_factor: u32,
    opts: &SolveOptions,
) -> Result<CounterexampleReport> {
    if !(0.0 < alpha && alpha < 2.0) {
        return Err(KrwError::InvalidParameter(format!(
            "alpha = {alpha} outside (0, 2)"
        )));
    }
    if r < 2 {
        return Err(KrwError::InvalidParameter("need r >= 2".into()));
    }
    let k = KillingField::power_law(alpha)?;
    let plus = Exhaustion::BallPlusHalfSpace {
        axis: 0,
        sign: HalfSpaceSign::Minus,
        truncation_factor,
    };
    let minus = Exhaustion::BallPlusHalfSpace {
        axis: 0,
        sign: HalfSpaceSign::Plus,
        truncation_factor,
    };
    let left = Point::new(&[-r, 0]);
    let right = Point::new(&[r, 0]);
    let mut rows = Vec::new();
    for &rr in r_list {
        if rr <= r.unsigned_abs() {
            return Err(KrwError::InvalidParameter(
                "indices must exceed the start radius".into(),
            ));
        }
        let sol_plus = solve_escape(&k, &plus, 2, rr, opts)?;
        let sol_minus = solve_escape(&k, &minus, 2, rr, opts)?;
        let rho_plus = checked_ratio(&sol_plus, &left, &right)
            .map_err(|_| KrwError::Degenerate(format!("escape probabilities vanish at R={rr}")))?;
        let rho_minus = checked_ratio(&sol_minus, &left, &right)?;
        rows.push((rr, rho_plus, rho_minus, (rho_plus * rho_minus - 1.0).abs()));
    }
    Ok(CounterexampleReport { alpha, r, rows })
}

/// Doob transition rule `P(x,y) = (1 - k(x))/(2d) * w(y)/w(x)` for a
/// positive massive-harmonic weight `w`.
pub struct ConditionedKernel<K, W> {
    kill: K,
    pub dim: usize,
    weight: W,
}

pub fn build_conditioned_kernel<W: Fn(&Point) -> f64>(
    killing: KillingField,
    dim: usize,
    weight: W,
) -> ConditionedKernel<impl Fn(&Point) -> f64, W> {
    ConditionedKernel {
        kill: move |p: &Point| killing.eval(p),
        dim,
        weight,
    }
}

/// As `build_conditioned_kernel` with the killing given as a function, e.g.
/// a tabulated estimate.
pub fn conditioned_kernel_fn<K: Fn(&Point) -> f64, W: Fn(&Point) -> f64>(
    kill: K,
    dim: usize,
    weight: W,
) -> ConditionedKernel<K, W> {
    ConditionedKernel { kill, dim, weight }
}

impl<K: Fn(&Point) -> f64, W: Fn(&Point) -> f64> ConditionedKernel<K, W> {
    /// Unnormalized row; its mass falls short of 1 by the harmonic defect of
    /// the weight at `x`. Nonpositive weight at `x` is an error; weight-zero
    /// targets get probability zero.
    pub fn row(&self, x: &Point) -> Result<Vec<(Point, f64)>> {
        let wx = (self.weight)(x);
        if !(wx > 0.0) {
            return Err(KrwError::NonpositiveWeight(*x));
        }
        let q = (1.0 - (self.kill)(x)) / (2.0 * self.dim as f64);
        Ok(neighbors(x)
            .into_iter()
            .map(|y| {
                let wy = (self.weight)(&y).max(0.0);
                (y, q * wy / wx)
            })
            .collect())
    }

    pub fn row_mass(&self, x: &Point) -> Result<f64> {
        Ok(self.row(x)?.into_iter().map(|(_, p)| p).sum())
    }

    /// Row renormalized to a probability vector (on request; the default
    /// exposes the defect).
    pub fn row_normalized(&self, x: &Point) -> Result<Vec<(Point, f64)>> {
        let mut row = self.row(x)?;
        let mass: f64 = row.iter().map(|(_, p)| p).sum();
        if mass < 1e-12 {
            return Err(KrwError::DeadRow {
                point: *x,
                mass,
            });
        }
        for (_, p) in row.iter_mut() {
            *p /= mass;
        }
        Ok(row)
    }

    /// Sample one step from the normalized row.
    pub fn step(&self, x: &Point, rng: &mut impl Rng) -> Result<Point> {
        let row = self.row_normalized(x)?;
        let mut t: f64 = rng.gen();
        for (y, p) in &row {
            t -= p;
            if t <= 0.0 {
                return Ok(*y);
            }
        }
        Ok(row.last().unwrap().0)
    }
}

/// `steps` steps of the Doob walk; never visits a point of zero weight.
pub fn sample_conditioned_path<K: Fn(&Point) -> f64, W: Fn(&Point) -> f64>(
    kernel: &ConditionedKernel<K, W>,
    x0: &Point,
    steps: usize,
    stream: RandomStream,
) -> Result<Vec<Point>> {
    let mut rng = stream.rng();
    let mut path = Vec::with_capacity(steps + 1);
    let mut x = *x0;
    path.push(x);
    for _ in 0..steps {
        x = kernel.step(&x, &mut rng)?;
        path.push(x);
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::potential_kernel;

    #[test]
    fn ratio_of_point_with_itself_is_one() {
        let k = KillingField::indicator(vec![Point::origin(2)], 1.0).unwrap();
        let x = Point::new(&[2, 1]);
        let c = ratio_curve(
            &k,
            &Exhaustion::Ball,
            2,
            &x,
            &x,
            &[4, 8, 16],
            &SolveOptions::default(),
        )
        .unwrap();
        for (_, v) in c.points {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn ratio_list_must_increase() {
        let k = KillingField::Zero;
        assert!(ratio_curve(
            &k,
            &Exhaustion::Ball,
            2,
            &Point::new(&[1, 0]),
            &Point::new(&[2, 0]),
            &[8, 8],
            &SolveOptions::default(),
        )
        .is_err());
    }

    /// Ratios for the origin-killed planar walk approach
    /// a(2,0)/a(1,0) = 4 - 8/pi; loose tolerance at desk-test scale.
    #[test]
    fn ratio_converges_to_potential_kernel_ratio() {
        let k = KillingField::indicator(vec![Point::origin(2)], 1.0).unwrap();
        let c = ratio_curve(
            &k,
            &Exhaustion::Ball,
            2,
            &Point::new(&[2, 0]),
            &Point::new(&[1, 0]),
            &[16, 32, 64],
            &SolveOptions::default(),
        )
        .unwrap();
        let target = 4.0 - 8.0 / std::f64::consts::PI;
        assert!(
            (c.limit() - target).abs() / target < 0.05,
            "limit {} vs {target}",
            c.limit()
        );
        assert!(c.cauchy_gap < 0.05);
    }

    #[test]
    fn counterexample_reflection_identity_small_scale() {
        let rep = counterexample_experiment(1.6, 4, &[8, 12], 4, &SolveOptions::default())
            .unwrap();
        for (r, _, _, resid) in &rep.rows {
            assert!(*resid <= 1e-9, "residual {resid:.2e} at R={r}");
        }
    }

    #[test]
    fn counterexample_rejects_bad_alpha() {
        assert!(counterexample_experiment(0.0, 4, &[8], 4, &SolveOptions::default()).is_err());
        assert!(counterexample_experiment(2.0, 4, &[8], 4, &SolveOptions::default()).is_err());
    }

    #[test]
    fn srw_kernel_when_weight_constant() {
        let kern = build_conditioned_kernel(KillingField::Zero, 2, |_: &Point| 1.0);
        let row = kern.row(&Point::new(&[3, 3])).unwrap();
        assert_eq!(row.len(), 4);
        for (_, p) in &row {
            assert!((p - 0.25).abs() < 1e-15);
        }
        assert!((kern.row_mass(&Point::new(&[3, 3])).unwrap() - 1.0).abs() < 1e-15);
    }

    /// The potential kernel is massive harmonic for the origin-killed walk:
    /// rows away from 0 sum to 1.
    #[test]
    fn potential_kernel_weight_rows_sum_to_one() {
        let k = KillingField::indicator(vec![Point::origin(2)], 1.0).unwrap();
        let kern = build_conditioned_kernel(k, 2, |p: &Point| {
            potential_kernel(p).unwrap()
        });
        for c in [[1, 0], [2, 0], [3, -4], [-7, 2]] {
            let mass = kern.row_mass(&Point::new(&c)).unwrap();
            assert!((mass - 1.0).abs() <= 1e-9, "row mass {mass} at {c:?}");
        }
    }

    #[test]
    fn conditioned_walk_avoids_zero_weight() {
        let k = KillingField::indicator(vec![Point::origin(2)], 1.0).unwrap();
        let kern = build_conditioned_kernel(k, 2, |p: &Point| {
            potential_kernel(p).unwrap()
        });
        let path = sample_conditioned_path(
            &kern,
            &Point::new(&[1, 0]),
            200,
            RandomStream::new(21, 0),
        )
        .unwrap();
        assert_eq!(path.len(), 201);
        assert!(path.iter().all(|p| !p.is_origin()));
    }

    #[test]
    fn uniform_steps_under_constant_weight() {
        let kern = build_conditioned_kernel(KillingField::Zero, 2, |_: &Point| 1.0);
        let mut rng = RandomStream::new(5, 7).rng();
        let mut counts = [0u64; 4];
        let x = Point::origin(2);
        let n = 100_000;
        for _ in 0..n {
            let y = kern.step(&x, &mut rng).unwrap();
            let idx = match (y.coord(0), y.coord(1)) {
                (-1, 0) => 0,
                (1, 0) => 1,
                (0, -1) => 2,
                (0, 1) => 3,
                _ => unreachable!(),
            };
            counts[idx] += 1;
        }
        // 3 sigma per cell for Binomial(n, 1/4)
        let sd = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 / 4.0).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn nonpositive_weight_rejected() {
        let kern = build_conditioned_kernel(KillingField::Zero, 2, |p: &Point| {
            if p.is_origin() {
                0.0
            } else {
                1.0
            }
        });
        assert!(kern.row(&Point::origin(2)).is_err());
    }
}
