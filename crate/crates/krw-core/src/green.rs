//! SRW Green function in transient dimension, approximated by a finite-box
//! Dirichlet solve with a unit source at the origin.

use crate::error::{KrwError, Result};
use crate::killing::KillingField;
use crate::lattice::Point;
use crate::solver::{GridDomain, SolveOptions};

pub struct GreenEstimate {
    pub value: f64,
    /// `|g_box - g_smaller_box|`: boundary-sensitivity of the estimate.
    pub sensitivity: f64,
    pub boxes: (i64, i64),
}

fn green_solve(dim: usize, box_r: i64, opts: &SolveOptions) -> Result<(GridDomain, Vec<f64>)> {
    let lo = vec![-box_r; dim];
    let hi = vec![box_r; dim];
    let mut grid = GridDomain::build(
        dim,
        &lo,
        &hi,
        &KillingField::Zero,
        |p| p.norm2() <= box_r * box_r,
        0.0,
        |_| None,
    )?;
    grid.add_source(&Point::origin(dim), 1.0)?;
    let (u, _) = grid.solve(opts)?;
    Ok((grid, u))
}

/// `g(0, x)` for the SRW in `Z^dim`, `dim >= 3`, with zero boundary on
/// `B(box_r)`; the companion run at `box_r / 2` quantifies the truncation.
pub fn green_function(x: &Point, box_r: i64, opts: &SolveOptions) -> Result<GreenEstimate> {
    let dim = x.dim();
    if dim < 3 {
        return Err(KrwError::InvalidParameter(format!(
            "green function requires d >= 3, got d = {dim}"
        )));
    }
    if x.norm2() >= box_r * box_r {
        return Err(KrwError::InvalidParameter(format!(
            "|x| must be below the box radius {box_r}"
        )));
    }
    let (grid_big, u_big) = green_solve(dim, box_r, opts)?;
    let value = u_big[grid_big.index_of(x).unwrap()];
    let small = box_r / 2;
    let sensitivity = if x.norm2() < small * small {
        let (grid_s, u_s) = green_solve(dim, small, opts)?;
        (value - u_s[grid_s.index_of(x).unwrap()]).abs()
    } else {
        f64::NAN
    };
    Ok(GreenEstimate {
        value,
        sensitivity,
        boxes: (box_r, small),
    })
}
