//! Exhaustions of `Z^d`: increasing families of finite sets covering the lattice.

use crate::error::{KrwError, Result};
use crate::lattice::Point;
use serde::{Deserialize, Serialize};

/// Sign of a half-space along a coordinate axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HalfSpaceSign {
    /// `x[axis] >= 0`
    Plus,
    /// `x[axis] <= 0`
    Minus,
}

/// An indexed family `R -> Lambda_R` of subsets of `Z^d` with a membership
/// predicate. Unbounded variants carry a truncation schedule making every
/// `Lambda_R` finite.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Exhaustion {
    /// `Lambda_R = B(R) ∩ Z^d` (closed Euclidean ball).
    Ball,
    /// `Lambda_R = (B(R) ∪ half-space) ∩ B(m·R)`; `m >= 1` is the truncation
    /// schedule `R -> m·R`.
    BallPlusHalfSpace {
        axis: usize,
        sign: HalfSpaceSign,
        truncation_factor: u32,
    },
    /// `Lambda_R = [-b_minus·R, b_plus·R] ∩ Z`, only for `d = 1`.
    Segment1D { b_minus: u32, b_plus: u32 },
    /// Explicit increasing list of finite sets; index past the end clamps.
    ExplicitList { sets: Vec<Vec<Point>> },
}

impl Exhaustion {
    pub fn ball() -> Self {
        Exhaustion::Ball
    }

    /// Default truncation schedule is `8R`.
    pub fn ball_plus_half_space(axis: usize, sign: HalfSpaceSign) -> Self {
        Exhaustion::BallPlusHalfSpace {
            axis,
            sign,
            truncation_factor: 8,
        }
    }

    pub fn segment(b_minus: u32, b_plus: u32) -> Result<Self> {
        if b_minus == 0 || b_plus == 0 {
            return Err(KrwError::InvalidParameter(
                "segment slopes must be positive".into(),
            ));
        }
        Ok(Exhaustion::Segment1D { b_minus, b_plus })
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Exhaustion::BallPlusHalfSpace {
                axis,
                truncation_factor,
                ..
            } => {
                if *axis >= dim {
                    return Err(KrwError::InvalidParameter(format!(
                        "half-space axis {axis} out of range for d={dim}"
                    )));
                }
                if *truncation_factor < 1 {
                    return Err(KrwError::InvalidParameter(
                        "truncation schedule must satisfy R(R) >= R".into(),
                    ));
                }
                Ok(())
            }
            Exhaustion::Segment1D { .. } if dim != 1 => Err(KrwError::InvalidParameter(
                "segment exhaustion requires d = 1".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Membership of `x` in `Lambda_R`.
    pub fn contains(&self, r: u32, x: &Point) -> bool {
        let rr = (r as i64) * (r as i64);
        match self {
            Exhaustion::Ball => x.norm2() <= rr,
            Exhaustion::BallPlusHalfSpace {
                axis,
                sign,
                truncation_factor,
            } => {
                let t = (r as i64) * (*truncation_factor as i64);
                if x.norm2() > t * t {
                    return false;
                }
                if x.norm2() <= rr {
                    return true;
                }
                match sign {
                    HalfSpaceSign::Plus => x.coord(*axis) >= 0,
                    HalfSpaceSign::Minus => x.coord(*axis) <= 0,
                }
            }
            Exhaustion::Segment1D { b_minus, b_plus } => {
                let c = x.coord(0) as i64;
                -((*b_minus as i64) * r as i64) <= c && c <= (*b_plus as i64) * r as i64
            }
            Exhaustion::ExplicitList { sets } => {
                if sets.is_empty() {
                    return false;
                }
                let idx = (r as usize).min(sets.len() - 1);
                sets[idx].contains(x)
            }
        }
    }

    /// Per-axis bounds `(lo, hi)` of a box containing `Lambda_R`.
    pub fn bounding_box(&self, r: u32, dim: usize) -> (Vec<i64>, Vec<i64>) {
        match self {
            Exhaustion::Ball => (vec![-(r as i64); dim], vec![r as i64; dim]),
            Exhaustion::BallPlusHalfSpace {
                axis,
                sign,
                truncation_factor,
            } => {
                let t = (r as i64) * (*truncation_factor as i64);
                let mut lo = vec![-t; dim];
                let mut hi = vec![t; dim];
                match sign {
                    HalfSpaceSign::Plus => lo[*axis] = -(r as i64),
                    HalfSpaceSign::Minus => hi[*axis] = r as i64,
                }
                (lo, hi)
            }
            Exhaustion::Segment1D { b_minus, b_plus } => (
                vec![-((*b_minus as i64) * r as i64)],
                vec![(*b_plus as i64) * r as i64],
            ),
            Exhaustion::ExplicitList { sets } => {
                let mut lo = vec![i64::MAX; dim];
                let mut hi = vec![i64::MIN; dim];
                let idx = if sets.is_empty() {
                    return (vec![0; dim], vec![0; dim]);
                } else {
                    (r as usize).min(sets.len() - 1)
                };
                for p in &sets[idx] {
                    for (a, &c) in p.coords().iter().enumerate() {
                        lo[a] = lo[a].min(c as i64);
                        hi[a] = hi[a].max(c as i64);
                    }
                }
                if lo[0] == i64::MAX {
                    (vec![0; dim], vec![0; dim])
                } else {
                    (lo, hi)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;
    use rand::Rng;

    fn random_point(dim: usize, spread: i32, rng: &mut impl Rng) -> Point {
        let coords: Vec<i32> = (0..dim).map(|_| rng.gen_range(-spread..=spread)).collect();
        Point::new(&coords)
    }

    /// Membership monotonicity of every variant over 100 random points and
    /// 10 indices, plus the exhausting property.
    #[test]
    fn monotone_and_exhausting() {
        let variants: Vec<(usize, Exhaustion)> = vec![
            (2, Exhaustion::Ball),
            (3, Exhaustion::Ball),
            (
                2,
                Exhaustion::ball_plus_half_space(0, HalfSpaceSign::Minus),
            ),
            (1, Exhaustion::segment(2, 1).unwrap()),
        ];
        let mut rng = RandomStream::new(7, 0).rng();
        for (dim, ex) in variants {
            ex.validate(dim).unwrap();
            for _ in 0..100 {
                let x = random_point(dim, 40, &mut rng);
                let mut was_in = false;
                for r in 1..=10u32 {
                    let now_in = ex.contains(4 * r, &x);
                    assert!(!was_in || now_in, "{ex:?} lost {x} at R={}", 4 * r);
                    was_in = now_in;
                }
                // exhausting: some representable R contains x
                assert!(ex.contains(200, &x), "{ex:?} never absorbed {x}");
            }
        }
    }

    #[test]
    fn half_space_truncation_is_finite() {
        let ex = Exhaustion::ball_plus_half_space(0, HalfSpaceSign::Minus);
        // A far point inside the half-space but outside B(8R) is excluded.
        assert!(!ex.contains(4, &Point::new(&[-100, 0])));
        assert!(ex.contains(4, &Point::new(&[-30, 0])));
        assert!(ex.contains(4, &Point::new(&[3, 0])));
        assert!(!ex.contains(4, &Point::new(&[5, 0])));
    }
}
