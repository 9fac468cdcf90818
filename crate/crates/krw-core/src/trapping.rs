//! Trapped / not-trapped classification of a killing field.
//!
//! In `d <= 2` a recurrent walk dies under any nonzero killing. For `d >= 3`
//! the dichotomy is governed by whether `sum |x|^{2-d} k(x)` diverges. A
//! finite computation can only probe the growth of partial sums, so the
//! classifier inspects increments `D_j = S(2^{j+1}) - S(2^j)` over a
//! geometric grid: a convergent sum has increment ratios bounded away from
//! one, while both logarithmic and power divergence push the extrapolated
//! ratio to one and beyond. Ambiguous growth is reported as `Inconclusive`
//! rather than forced into a verdict.

use crate::error::{KrwError, Result};
use crate::killing::KillingField;
use crate::lattice::MAX_DIM;
use crate::stats::linear_fit;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trapping {
    Trapped,
    NotTrapped,
    Inconclusive,
}

/// Radial profile `r -> k((r,0,...))` when the field is a function of |x|.
fn radial_profile(k: &KillingField) -> Option<Box<dyn Fn(f64) -> f64 + '_>> {
    match k {
        KillingField::PowerLaw { alpha } => {
            let a = *alpha;
            Some(Box::new(move |r: f64| {
                if r == 0.0 {
                    1.0
                } else {
                    r.powf(-a).min(1.0)
                }
            }))
        }
        KillingField::LogCorrected { c } => {
            let c = *c;
            Some(Box::new(move |r: f64| {
                if r == 0.0 {
                    1.0
                } else {
                    (c / (r * r * r.max(std::f64::consts::E).ln())).min(1.0)
                }
            }))
        }
        _ => None,
    }
}

/// True when `k` vanishes outside a bounded set.
fn finite_support(k: &KillingField) -> bool {
    match k {
        KillingField::Zero => true,
        KillingField::IndicatorSet { .. } => true,
        KillingField::Tabulated { default, .. } => finite_support(default),
        _ => false,
    }
}

/// Classify by Theorem-style divergence of `sum |x|^{2-d} k(x)`.
///
/// `cutoff` bounds the largest probed radius `M = 2^j <= cutoff`.
pub fn trapping_classifier(k: &KillingField, dim: usize, cutoff: u32) -> Result<Trapping> {
    if !(1..=MAX_DIM).contains(&dim) {
        return Err(KrwError::InvalidParameter(format!(
            "dimension {dim} outside 1..={MAX_DIM}"
        )));
    }
    if dim <= 2 {
        // recurrence: any nonzero killing is revisited forever
        return Ok(if k.is_zero() {
            Trapping::NotTrapped
        } else {
            Trapping::Trapped
        });
    }
    if k.is_zero() || finite_support(k) {
        // finitely many nonzero terms: the sum converges
        return Ok(Trapping::NotTrapped);
    }
    // the tail behavior of a table is its default rule's
    if let KillingField::Tabulated { default, .. } = k {
        return trapping_classifier(default, dim, cutoff);
    }
    let Some(profile) = radial_profile(k) else {
        return Ok(Trapping::Inconclusive);
    };

    // Increments of the partial sum over the geometric grid, via the radial
    // form: S(M) grows like the shell integral of r * k(r) (the surface
    // constant cancels in ratios).
    let j_max = (cutoff.max(64) as f64).log2().floor() as u32;
    let mut increments = Vec::new();
    for j in 1..=j_max {
        let a = 2f64.powi(j as i32 - 1);
        let b = 2f64.powi(j as i32);
        increments.push(simpson(|r| r * profile(r), a, b, 512));
    }
    // ratio of consecutive increments, extrapolated in 1/j
    let mut js = Vec::new();
    let mut ratios = Vec::new();
    for (i, w) in increments.windows(2).enumerate() {
        if w[0] > 0.0 {
            js.push(1.0 / (i as f64 + 1.0));
            ratios.push(w[1] / w[0]);
        }
    }
    if ratios.len() < 4 {
        return Ok(Trapping::Inconclusive);
    }
    let tail = ratios.len() / 2;
    let (limit_ratio, _) = linear_fit(&js[tail..], &ratios[tail..]);
    Ok(if limit_ratio >= 0.97 {
        Trapping::Trapped
    } else if limit_ratio <= 0.90 {
        Trapping::NotTrapped
    } else {
        Trapping::Inconclusive
    })
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = if n % 2 == 0 { n } else { n + 1 };
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Point;

    #[test]
    fn transient_fast_decay_not_trapped() {
        let k = KillingField::power_law(3.0).unwrap();
        assert_eq!(trapping_classifier(&k, 3, 4096).unwrap(), Trapping::NotTrapped);
    }

    #[test]
    fn log_corrected_is_trapped_in_d4() {
        let k = KillingField::log_corrected(1.0).unwrap();
        assert_eq!(trapping_classifier(&k, 4, 4096).unwrap(), Trapping::Trapped);
    }

    #[test]
    fn recurrent_dimensions_trap_any_nonzero_field() {
        let k = KillingField::indicator(vec![Point::origin(2)], 1.0).unwrap();
        assert_eq!(trapping_classifier(&k, 2, 64).unwrap(), Trapping::Trapped);
        let k1 = KillingField::indicator(vec![Point::origin(1)], 0.5).unwrap();
        assert_eq!(trapping_classifier(&k1, 1, 64).unwrap(), Trapping::Trapped);
        assert_eq!(
            trapping_classifier(&KillingField::Zero, 2, 64).unwrap(),
            Trapping::NotTrapped
        );
    }

    #[test]
    fn borderline_exponent_is_trapped() {
        // alpha = 2 sits exactly on the divergent side: sum r^{-1} diverges
        let k = KillingField::power_law(2.0).unwrap();
        assert_eq!(trapping_classifier(&k, 3, 4096).unwrap(), Trapping::Trapped);
        // alpha = 1.5 < 2 diverges as a power
        let k = KillingField::power_law(1.5).unwrap();
        assert_eq!(trapping_classifier(&k, 5, 4096).unwrap(), Trapping::Trapped);
    }

    #[test]
    fn finite_support_not_trapped_in_transient_dim() {
        let k = KillingField::indicator(vec![Point::origin(3)], 1.0).unwrap();
        assert_eq!(
            trapping_classifier(&k, 3, 64).unwrap(),
            Trapping::NotTrapped
        );
    }

    #[test]
    fn rejects_bad_dimension() {
        assert!(trapping_classifier(&KillingField::Zero, 6, 64).is_err());
        assert!(trapping_classifier(&KillingField::Zero, 0, 64).is_err());
    }
}
