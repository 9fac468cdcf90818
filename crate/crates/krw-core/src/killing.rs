//! Killing fields `k: Z^d -> [0,1]` in named parametric variants.

use crate::error::{KrwError, Result};
use crate::lattice::{neighbors, Point};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet, VecDeque};

/// Site-dependent killing probability. Every evaluation lies in `[0,1]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum KillingField {
    /// Kill with probability `rate` on the finite set `points`, zero elsewhere.
    IndicatorSet { points: Vec<Point>, rate: f64 },
    /// `x -> min(1, |x|^-alpha)`; evaluates to 1 at the origin.
    PowerLaw { alpha: f64 },
    /// `x -> min(1, c / (|x|^2 ln max(|x|, e)))`.
    LogCorrected { c: f64 },
    /// Explicit table with a default rule outside it.
    Tabulated {
        table: HashMap<Point, f64>,
        default: Box<KillingField>,
    },
    /// No killing anywhere.
    Zero,
}

impl KillingField {
    pub fn indicator(points: Vec<Point>, rate: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(KrwError::InvalidParameter(format!(
                "indicator rate {rate} outside [0,1]"
            )));
        }
        Ok(KillingField::IndicatorSet { points, rate })
    }

    pub fn power_law(alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) {
            return Err(KrwError::InvalidParameter(format!(
                "power-law exponent {alpha} must be >= 0"
            )));
        }
        Ok(KillingField::PowerLaw { alpha })
    }

    pub fn log_corrected(c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(KrwError::InvalidParameter(format!(
                "log-corrected constant {c} must be > 0"
            )));
        }
        Ok(KillingField::LogCorrected { c })
    }

    /// Table values are validated to lie in `[0,1]` at construction.
    pub fn tabulated(table: HashMap<Point, f64>, default: KillingField) -> Result<Self> {
        for (p, &v) in &table {
            if !(0.0..=1.0).contains(&v) {
                return Err(KrwError::InvalidParameter(format!(
                    "tabulated value {v} at {p} outside [0,1]"
                )));
            }
        }
        Ok(KillingField::Tabulated {
            table,
            default: Box::new(default),
        })
    }

    /// Evaluate `k(x)`. Deterministic; respects the variant's formula exactly.
    pub fn eval(&self, x: &Point) -> f64 {
        match self {
            KillingField::IndicatorSet { points, rate } => {
                if points.contains(x) {
                    *rate
                } else {
                    0.0
                }
            }
            KillingField::PowerLaw { alpha } => {
                if x.is_origin() {
                    1.0
                } else {
                    x.norm().powf(-alpha).min(1.0)
                }
            }
            KillingField::LogCorrected { c } => {
                let r = x.norm();
                if r == 0.0 {
                    // c / (r^2 ln max(r,e)) -> +inf as r -> 0, so min(1, .) = 1
                    1.0
                } else {
                    (c / (r * r * r.max(std::f64::consts::E).ln())).min(1.0)
                }
            }
            KillingField::Tabulated { table, default } => {
                table.get(x).copied().unwrap_or_else(|| default.eval(x))
            }
            KillingField::Zero => 0.0,
        }
    }

    /// True when the variant is `k = 0` identically.
    pub fn is_zero(&self) -> bool {
        match self {
            KillingField::Zero => true,
            KillingField::IndicatorSet { points, rate } => points.is_empty() || *rate == 0.0,
            KillingField::Tabulated { table, default } => {
                default.is_zero() && table.values().all(|&v| v == 0.0)
            }
            _ => false,
        }
    }

    /// Radius beyond which `k < 1` is guaranteed for the bundled variants,
    /// if one exists. Used by the escape-set search.
    pub fn hard_kill_radius(&self) -> Option<f64> {
        match self {
            KillingField::Zero => Some(0.0),
            KillingField::IndicatorSet { points, rate } => {
                if *rate < 1.0 {
                    Some(0.0)
                } else {
                    Some(points.iter().map(|p| p.norm()).fold(0.0, f64::max))
                }
            }
            KillingField::PowerLaw { .. } => Some(1.0),
            KillingField::LogCorrected { c } => Some(c.sqrt().max(1.0)),
            KillingField::Tabulated { table, default } => {
                let d = default.hard_kill_radius()?;
                let t = table
                    .iter()
                    .filter(|(_, &v)| v >= 1.0)
                    .map(|(p, _)| p.norm())
                    .fold(0.0, f64::max);
                Some(d.max(t))
            }
        }
    }
}

/// Finite proxy for membership in the escape set `E_k`: true iff a
/// nearest-neighbor path from `x` to the sphere of radius `search_radius`
/// exists with `k < 1` at every vertex. Exact for fields with `k < 1`
/// outside a bounded set once the radius clears that set.
pub fn in_escape_set(k: &KillingField, x: &Point, search_radius: i64) -> bool {
    assert!(
        search_radius * search_radius >= x.norm2(),
        "search_radius must be at least |x|"
    );
    if k.eval(x) >= 1.0 {
        return false;
    }
    let r2 = search_radius * search_radius;
    let mut seen: HashSet<Point> = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(*x);
    queue.push_back(*x);
    while let Some(p) = queue.pop_front() {
        if p.norm2() >= r2 {
            return true;
        }
        for q in neighbors(&p) {
            if !seen.contains(&q) && k.eval(&q) < 1.0 {
                seen.insert(q);
                queue.push_back(q);
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_law_examples() {
        let k = KillingField::power_law(1.6).unwrap();
        let v = k.eval(&Point::new(&[3, 4]));
        assert!((v - 5.0_f64.powf(-1.6)).abs() < 1e-15);
        assert_eq!(k.eval(&Point::origin(2)), 1.0);
    }

    #[test]
    fn indicator_examples() {
        let k = KillingField::indicator(vec![Point::origin(2)], 1.0).unwrap();
        assert_eq!(k.eval(&Point::origin(2)), 1.0);
        assert_eq!(k.eval(&Point::new(&[1, 0])), 0.0);
    }

    #[test]
    fn zero_everywhere() {
        let k = KillingField::Zero;
        assert_eq!(k.eval(&Point::new(&[7, -2, 1])), 0.0);
    }

    #[test]
    fn tabulated_validation() {
        let mut t = HashMap::new();
        t.insert(Point::origin(2), 1.5);
        assert!(KillingField::tabulated(t, KillingField::Zero).is_err());
    }

    #[test]
    fn all_variants_in_unit_interval() {
        let fields = [
            KillingField::power_law(0.3).unwrap(),
            KillingField::log_corrected(5.0).unwrap(),
            KillingField::indicator(vec![Point::new(&[1, 1])], 0.7).unwrap(),
            KillingField::Zero,
        ];
        for k in &fields {
            for x in [
                Point::origin(2),
                Point::new(&[1, 0]),
                Point::new(&[-3, 9]),
                Point::new(&[100, -250]),
            ] {
                let v = k.eval(&x);
                assert!((0.0..=1.0).contains(&v), "{k:?} at {x} gave {v}");
            }
        }
    }

    #[test]
    fn radial_symmetry_exact() {
        // k(x) = k(y) whenever |x| = |y|, exactly.
        let pl = KillingField::power_law(1.3).unwrap();
        let lc = KillingField::log_corrected(2.0).unwrap();
        let pairs = [
            (Point::new(&[3, 4]), Point::new(&[5, 0])),
            (Point::new(&[3, 4]), Point::new(&[-4, 3])),
            (Point::new(&[6, 8]), Point::new(&[0, -10])),
        ];
        for (x, y) in pairs {
            assert_eq!(pl.eval(&x), pl.eval(&y));
            assert_eq!(lc.eval(&x), lc.eval(&y));
        }
    }

    #[test]
    fn escape_set_examples() {
        let k = KillingField::indicator(vec![Point::origin(2)], 1.0).unwrap();
        assert!(in_escape_set(&k, &Point::new(&[1, 0]), 10));
        assert!(!in_escape_set(&k, &Point::origin(2), 10));
    }

    #[test]
    fn escape_set_blocked_by_hard_sphere() {
        // k = 1 on every lattice point with |x|^2 in {4,5}: that annulus
        // separates the origin from infinity in Z^2.
        let mut wall = Vec::new();
        for x in -3i32..=3 {
            for y in -3i32..=3 {
                let n2 = (x as i64).pow(2) + (y as i64).pow(2);
                if n2 == 4 || n2 == 5 {
                    wall.push(Point::new(&[x, y]));
                }
            }
        }
        let k = KillingField::indicator(wall.clone(), 1.0).unwrap();

        // Oracle: flood-fill of the component of the origin among k < 1 sites.
        let mut comp = HashSet::new();
        let mut stack = vec![Point::origin(2)];
        comp.insert(Point::origin(2));
        let mut escaped = false;
        while let Some(p) = stack.pop() {
            if p.norm2() >= 100 {
                escaped = true;
                break;
            }
            for q in neighbors(&p) {
                if !comp.contains(&q) && k.eval(&q) < 1.0 {
                    comp.insert(q);
                    stack.push(q);
                }
            }
        }
        assert!(!escaped, "wall should enclose the origin");
        assert!(!in_escape_set(&k, &Point::origin(2), 10));
        // Just outside the wall the escape set is reachable.
        assert!(in_escape_set(&k, &Point::new(&[3, 0]), 10));
    }
}
