//! Plain simple-random-walk Monte Carlo helpers.

use crate::error::{KrwError, Result};
use crate::lattice::Point;
use crate::rng::RandomStream;
use crate::stats::Estimate;
use rand::Rng;
use rayon::prelude::*;

/// One uniform nearest-neighbor step.
#[inline]
pub fn srw_step(x: &mut Point, dim: usize, rng: &mut impl Rng) {
    let r = rng.gen_range(0..2 * dim as u32);
    let axis = (r / 2) as usize;
    let delta = if r & 1 == 0 { -1 } else { 1 };
    *x = x.translated(axis, delta);
}

/// Monte Carlo estimate of `P_0[tau(∂B(r)) >= n]` for the SRW in `Z^dim`.
pub fn srw_exit_tail(
    dim: usize,
    r: i64,
    n: u64,
    samples: u64,
    stream: RandomStream,
) -> Result<Estimate> {
    if r < 1 {
        return Err(KrwError::InvalidParameter("radius must be >= 1".into()));
    }
    if n == 0 {
        return Ok(Estimate {
            mean: 1.0,
            stderr: 0.0,
            n: samples,
            stream,
        });
    }
    let rr = r * r;
    let chunk = 4096u64;
    let chunks = samples.div_ceil(chunk);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream.fork(c).rng();
            let m = chunk.min(samples - c * chunk);
            let mut still_in = 0u64;
            for _ in 0..m {
                let mut x = Point::origin(dim);
                let mut inside = true;
                for _ in 0..n {
                    srw_step(&mut x, dim, &mut rng);
                    if x.norm2() > rr {
                        inside = false;
                        break;
                    }
                }
                if inside {
                    still_in += 1;
                }
            }
            still_in
        })
        .sum();
    Ok(Estimate::bernoulli(hits, samples, stream))
}

/// Outcome counts of SRW runs from `x` absorbed at `y`, at the origin, or on
/// first exit of `B(rho)`; exit points are returned for boundary completion.
pub struct RestrictedHitting {
    pub hit_y: u64,
    pub hit_zero: u64,
    pub exits: Vec<Point>,
    pub n: u64,
}

/// Simulate `n` SRW paths from `x` until `tau(y) ∧ tau(0) ∧ tau(∂B(rho))`.
pub fn hit_before_zero_restricted(
    x: &Point,
    y: &Point,
    rho: i64,
    n: u64,
    stream: RandomStream,
) -> RestrictedHitting {
    assert_eq!(x.dim(), 2);
    let rr = rho * rho;
    let chunk = 2048u64;
    let chunks = n.div_ceil(chunk);
    let parts: Vec<(u64, u64, Vec<Point>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream.fork(c).rng();
            let m = chunk.min(n - c * chunk);
            let mut hit_y = 0u64;
            let mut hit_zero = 0u64;
            let mut exits = Vec::new();
            for _ in 0..m {
                let mut p = *x;
                loop {
                    if p == *y {
                        hit_y += 1;
                        break;
                    }
                    if p.is_origin() {
                        hit_zero += 1;
                        break;
                    }
                    if p.norm2() > rr {
                        exits.push(p);
                        break;
                    }
                    srw_step(&mut p, 2, &mut rng);
                }
            }
            (hit_y, hit_zero, exits)
        })
        .collect();
    let mut out = RestrictedHitting {
        hit_y: 0,
        hit_zero: 0,
        exits: Vec::new(),
        n,
    };
    for (hy, h0, ex) in parts {
        out.hit_y += hy;
        out.hit_zero += h0;
        out.exits.extend(ex);
    }
    out
}
