//! Lattice points of `Z^d` for `d` in 1..=5 and nearest-neighbor geometry.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Largest supported dimension.
pub const MAX_DIM: usize = 5;

/// A site of `Z^d`. The dimension is carried by the point itself; all points
/// of one experiment share the same `dim`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Point {
    coords: [i32; MAX_DIM],
    dim: u8,
}

impl Point {
    pub fn new(coords: &[i32]) -> Self {
        assert!(
            !coords.is_empty() && coords.len() <= MAX_DIM,
            "dimension must be in 1..={MAX_DIM}, got {}",
            coords.len()
        );
        let mut c = [0i32; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Point {
            coords: c,
            dim: coords.len() as u8,
        }
    }

    /// Origin of `Z^d`.
    pub fn origin(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim));
        Point {
            coords: [0; MAX_DIM],
            dim: dim as u8,
        }
    }

    /// Unit vector `e_axis`.
    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut p = Self::origin(dim);
        p.coords[axis] = 1;
        p
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[i32] {
        &self.coords[..self.dim as usize]
    }

    pub fn coord(&self, axis: usize) -> i32 {
        assert!(axis < self.dim());
        self.coords[axis]
    }

    /// Squared Euclidean norm. Norms are Euclidean throughout.
    pub fn norm2(&self) -> i64 {
        self.coords()
            .iter()
            .map(|&c| (c as i64) * (c as i64))
            .sum()
    }

    pub fn norm(&self) -> f64 {
        (self.norm2() as f64).sqrt()
    }

    pub fn is_origin(&self) -> bool {
        self.coords().iter().all(|&c| c == 0)
    }

    pub fn translated(&self, axis: usize, delta: i32) -> Self {
        let mut p = *self;
        p.coords[axis] += delta;
        p
    }

    /// Componentwise difference `self - other`.
    pub fn sub(&self, other: &Point) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut p = *self;
        for a in 0..self.dim() {
            p.coords[a] -= other.coords[a];
        }
        p
    }

    pub fn neg(&self) -> Self {
        let mut p = *self;
        for a in 0..self.dim() {
            p.coords[a] = -p.coords[a];
        }
        p
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// The `2d` lattice neighbors of `x`, in axis order (`-e_1, +e_1, -e_2, ...`).
pub fn neighbors(x: &Point) -> Vec<Point> {
    let mut out = Vec::with_capacity(2 * x.dim());
    for axis in 0..x.dim() {
        out.push(x.translated(axis, -1));
        out.push(x.translated(axis, 1));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn neighbors_d1() {
        let n = neighbors(&Point::origin(1));
        let set: HashSet<_> = n.into_iter().collect();
        assert_eq!(
            set,
            HashSet::from([Point::new(&[-1]), Point::new(&[1])])
        );
    }

    #[test]
    fn neighbors_d2() {
        let n: HashSet<_> = neighbors(&Point::origin(2)).into_iter().collect();
        let expect: HashSet<_> = [[1, 0], [-1, 0], [0, 1], [0, -1]]
            .iter()
            .map(|c| Point::new(c))
            .collect();
        assert_eq!(n, expect);
    }

    #[test]
    fn neighbors_d4_count_and_distance() {
        let x = Point::new(&[3, -1, 2, 7]);
        let n = neighbors(&x);
        assert_eq!(n.len(), 8);
        for y in &n {
            assert_eq!(y.sub(&x).norm2(), 1);
        }
        let uniq: HashSet<_> = n.into_iter().collect();
        assert_eq!(uniq.len(), 8);
    }

    #[test]
    fn norm_is_euclidean() {
        assert_eq!(Point::new(&[3, 4]).norm(), 5.0);
        assert_eq!(Point::new(&[1, 1, 1, 1]).norm(), 2.0);
    }
}
