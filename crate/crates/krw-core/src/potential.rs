//! The two-dimensional potential kernel and closed-form hitting probabilities.
//!
//! `a(x)` is the average of `(1 - cos<x,theta>) / (1 - (cos t1 + cos t2)/2)`
//! over `[-pi,pi]^2`. Integrating one angle in closed form leaves
//!
//! `a(x) = (2/pi) ∫_0^pi [1 - cos(n1 t) e^{-n2 r(t)}] / sinh r(t) dt`
//!
//! with `cosh r = 2 - cos t` and `{n1, n2} = {|x_1|, |x_2|}`; the integrand
//! extends analytically through `t = 0`, so composite Gauss-Legendre reaches
//! machine accuracy. Putting the larger coordinate in the exponential keeps
//! the oscillation slow.

use crate::error::{KrwError, Result};
use crate::lattice::Point;

/// 16-point Gauss-Legendre nodes/weights on [-1, 1] (positive half; the rule
/// is symmetric).
const GL16_X: [f64; 8] = [
    0.0950125098376374,
    0.2816035507792589,
    0.4580167776572274,
    0.6178762444026438,
    0.7554044083550030,
    0.8656312023878318,
    0.9445750230732326,
    0.9894009349916499,
];
const GL16_W: [f64; 8] = [
    0.1894506104550685,
    0.1826034150449236,
    0.1691565193950025,
    0.1495959888165767,
    0.1246289712555339,
    0.0951585116824928,
    0.0622535239386479,
    0.0271524594117541,
];

fn gauss16(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = 0.0;
    for i in 0..8 {
        s += GL16_W[i] * (f(c + h * GL16_X[i]) + f(c - h * GL16_X[i]));
    }
    s * h
}

fn kernel_integrand(n1: f64, n2: f64, t: f64) -> f64 {
    // u = cosh r - 1 = 1 - cos t, computed cancellation-free
    let s = (0.5 * t).sin();
    let u = 2.0 * s * s;
    let sinh_r = (u * (2.0 + u)).sqrt();
    if sinh_r == 0.0 {
        // analytic limit at t = 0
        return n2;
    }
    let r = (1.0 + u + sinh_r).ln();
    (1.0 - (n1 * t).cos() * (-n2 * r).exp()) / sinh_r
}

/// Potential kernel `a(x)` of the planar simple random walk, `a(0) = 0`,
/// `a(e) = 1`, absolute accuracy well below 1e-9.
pub fn potential_kernel(x: &Point) -> Result<f64> {
    if x.dim() != 2 {
        return Err(KrwError::InvalidParameter(format!(
            "potential kernel requires d = 2, got d = {}",
            x.dim()
        )));
    }
    if x.is_origin() {
        return Ok(0.0);
    }
    let (mut n1, mut n2) = (x.coord(0).abs() as f64, x.coord(1).abs() as f64);
    if n1 > n2 {
        std::mem::swap(&mut n1, &mut n2);
    }
    // panel count tracks the oscillation frequency n1 and the boundary-layer
    // scale 1/n2 of the exponential factor
    let panels = 16.max(2 * n1 as usize).max(n2 as usize / 4);
    let mut total = 0.0;
    for p in 0..panels {
        let a = std::f64::consts::PI * p as f64 / panels as f64;
        let b = std::f64::consts::PI * (p + 1) as f64 / panels as f64;
        total += gauss16(|t| kernel_integrand(n1, n2, t), a, b);
    }
    Ok(2.0 * total / std::f64::consts::PI)
}

/// `P_x[tau(y) < tau(0)] = (a(x) + a(y) - a(x-y)) / (2 a(y))` for
/// `x, y != 0`.
pub fn hitting_before_zero(x: &Point, y: &Point) -> Result<f64> {
    if x.is_origin() || y.is_origin() {
        return Err(KrwError::InvalidParameter(
            "hitting formula requires x, y away from the origin".into(),
        ));
    }
    let ax = potential_kernel(x)?;
    let ay = potential_kernel(y)?;
    let axy = potential_kernel(&x.sub(y))?;
    Ok((ax + ay - axy) / (2.0 * ay))
}

/// Companion value `P_0[tau(y) < tau^+(0)] = 1 / (2 a(y))`.
pub fn hitting_from_origin(y: &Point) -> Result<f64> {
    if y.is_origin() {
        return Err(KrwError::InvalidParameter(
            "hitting formula requires y != 0".into(),
        ));
    }
    Ok(1.0 / (2.0 * potential_kernel(y)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::neighbors;
    use crate::rng::RandomStream;
    use rand::Rng;

    /// Full 2d midpoint-rule average of the defining lattice integral; slow
    /// and low-accuracy, used only to cross-check the reduced form.
    fn potential_kernel_2d_quadrature(x: &Point, n: usize) -> f64 {
        let h = 2.0 * std::f64::consts::PI / n as f64;
        let (x1, x2) = (x.coord(0) as f64, x.coord(1) as f64);
        let mut sum = 0.0;
        for i in 0..n {
            let t1 = -std::f64::consts::PI + (i as f64 + 0.5) * h;
            let c1 = t1.cos();
            for j in 0..n {
                let t2 = -std::f64::consts::PI + (j as f64 + 0.5) * h;
                let denom = 1.0 - 0.5 * (c1 + t2.cos());
                sum += (1.0 - (x1 * t1 + x2 * t2).cos()) / denom;
            }
        }
        sum * h * h / (4.0 * std::f64::consts::PI * std::f64::consts::PI)
    }

    #[test]
    fn kernel_at_origin_and_neighbors() {
        assert_eq!(potential_kernel(&Point::origin(2)).unwrap(), 0.0);
        for e in [[1, 0], [0, 1], [-1, 0], [0, -1]] {
            let v = potential_kernel(&Point::new(&e)).unwrap();
            assert!((v - 1.0).abs() < 1e-12, "a({e:?}) = {v}");
        }
    }

    #[test]
    fn kernel_classical_values() {
        let a11 = potential_kernel(&Point::new(&[1, 1])).unwrap();
        let a20 = potential_kernel(&Point::new(&[2, 0])).unwrap();
        assert!((a11 - 4.0 / std::f64::consts::PI).abs() < 1e-12);
        assert!((a20 - (4.0 - 8.0 / std::f64::consts::PI)).abs() < 1e-12);
        // recursion oracle: harmonicity at (1,0) plus diagonal symmetry gives
        // 2 a(1,1) + a(2,0) = 4 a(1,0) = 4 exactly
        assert!((2.0 * a11 + a20 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_matches_defining_quadrature() {
        for c in [[1, 0], [1, 1], [2, 0], [3, 2]] {
            let x = Point::new(&c);
            let fast = potential_kernel(&x).unwrap();
            let slow = potential_kernel_2d_quadrature(&x, 1024);
            assert!(
                (fast - slow).abs() < 5e-4,
                "{x}: reduced {fast} vs 2d rule {slow}"
            );
        }
    }

    #[test]
    fn kernel_is_discrete_harmonic_off_origin() {
        let mut rng = RandomStream::new(11, 0).rng();
        for _ in 0..40 {
            let x = Point::new(&[rng.gen_range(-60..=60), rng.gen_range(-60..=60)]);
            if x.is_origin() {
                continue;
            }
            let ax = potential_kernel(&x).unwrap();
            let mean: f64 = neighbors(&x)
                .iter()
                .map(|y| potential_kernel(y).unwrap())
                .sum::<f64>()
                / 4.0;
            assert!((mean - ax).abs() < 1e-10, "harmonic defect at {x}");
        }
        // at the origin the defect is exactly 1
        let mean: f64 = neighbors(&Point::origin(2))
            .iter()
            .map(|y| potential_kernel(y).unwrap())
            .sum::<f64>()
            / 4.0;
        assert!((mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_lattice_symmetries() {
        let a = |c: [i32; 2]| potential_kernel(&Point::new(&c)).unwrap();
        assert_eq!(a([3, 5]), a([5, 3]));
        assert_eq!(a([3, 5]), a([-3, 5]));
        assert_eq!(a([3, 5]), a([3, -5]));
    }

    #[test]
    fn hitting_formula_examples() {
        // x = y gives 1
        let y = Point::new(&[2, 3]);
        assert!((hitting_before_zero(&y, &y).unwrap() - 1.0).abs() < 1e-12);
        // x = (1,0), y = (-1,0): (2 - a(2,0)) / 2 = 4/pi - 1
        let p = hitting_before_zero(&Point::new(&[1, 0]), &Point::new(&[-1, 0])).unwrap();
        assert!((p - (4.0 / std::f64::consts::PI - 1.0)).abs() < 1e-12);
        assert!(hitting_before_zero(&Point::origin(2), &y).is_err());
    }

    #[test]
    fn hitting_values_in_unit_interval() {
        let mut rng = RandomStream::new(5, 1).rng();
        let mut checked = 0;
        while checked < 1000 {
            let x = Point::new(&[rng.gen_range(-50..=50), rng.gen_range(-50..=50)]);
            let y = Point::new(&[rng.gen_range(-50..=50), rng.gen_range(-50..=50)]);
            if x.is_origin() || y.is_origin() {
                continue;
            }
            let p = hitting_before_zero(&x, &y).unwrap();
            assert!((0.0..=1.0 + 1e-12).contains(&p), "p = {p} at {x},{y}");
            checked += 1;
        }
    }

    #[test]
    fn log_growth_constant_is_stable() {
        // a(x) - (2/pi) ln |x| settles to a constant
        let kappa = |c: [i32; 2]| {
            let x = Point::new(&c);
            potential_kernel(&x).unwrap()
                - 2.0 / std::f64::consts::PI * x.norm().ln()
        };
        let k1 = kappa([50, 0]);
        let k2 = kappa([120, 35]);
        let k3 = kappa([200, 0]);
        assert!((k1 - k3).abs() < 1e-3 && (k2 - k3).abs() < 1e-3);
    }
}
