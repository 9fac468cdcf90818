//! Escape-before-death probabilities, killed exit measures and the
//! path-splitting recomposition checks.

use crate::error::{KrwError, Result};
use crate::exhaust::Exhaustion;
use crate::killing::KillingField;
use crate::lattice::{neighbors, Point};
use crate::solver::{GridDomain, SolveOptions, SolveStats};
use std::collections::HashMap;

/// Exact values `u(x) = P_x[tau(Lambda_R^c) < tau(Delta)]` on a finite
/// computational domain, with solver metadata. `u = 1` outside the domain.
pub struct SurvivalSolution {
    pub dim: usize,
    pub r_index: u32,
    grid: GridDomain,
    u: Vec<f64>,
    pub stats: SolveStats,
}

impl SurvivalSolution {
    /// `u(x)`, with the boundary convention `u = 1` on `Lambda_R^c`.
    pub fn value(&self, x: &Point) -> f64 {
        match self.grid.index_of(x) {
            Some(i) => self.u[i],
            None => 1.0,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.grid.n_active
    }

    /// Iterate over `(site, u)` for every domain site.
    pub fn iter(&self) -> impl Iterator<Item = (Point, f64)> + '_ {
        self.grid
            .active_indices()
            .map(move |i| (self.grid.point_of(i), self.u[i]))
    }

    /// Exact conditional first-step law from `x` given the escape event:
    /// `P[S_1 = y | tau(Lambda_R^c) < tau(Delta)] = Q^k(x,y) u(y) / u(x)`.
    pub fn conditional_step_law(&self, k: &KillingField, x: &Point) -> Result<Vec<(Point, f64)>> {
        let ux = self.value(x);
        if ux < 1e-290 {
            return Err(KrwError::Underflow {
                point: *x,
                value: ux,
            });
        }
        let q = (1.0 - k.eval(x)) / (2.0 * self.dim as f64);
        Ok(neighbors(x)
            .into_iter()
            .map(|y| {
                let p = q * self.value(&y) / ux;
                (y, p)
            })
            .collect())
    }

    /// Max interior residual of the massive-harmonic equation, recomputed
    /// from scratch.
    pub fn residual(&self) -> f64 {
        self.grid.residual(&self.u)
    }
}

/// Solve `u(x) = (1 - k(x))/(2d) * sum_{y ~ x} u(y)` on `Lambda_R` with
/// `u = 1` on the complement, by sweep relaxation.
pub fn solve_escape(
    k: &KillingField,
    exhaustion: &Exhaustion,
    dim: usize,
    r_index: u32,
    opts: &SolveOptions,
) -> Result<SurvivalSolution> {
    solve_escape_with(&|p| k.eval(p), exhaustion, dim, r_index, opts)
}

/// As `solve_escape` with the killing given as a function.
pub fn solve_escape_with(
    kill: &dyn Fn(&Point) -> f64,
    exhaustion: &Exhaustion,
    dim: usize,
    r_index: u32,
    opts: &SolveOptions,
) -> Result<SurvivalSolution> {
    exhaustion.validate(dim)?;
    let (lo, hi) = exhaustion.bounding_box(r_index, dim);
    let grid = GridDomain::build_with(
        dim,
        &lo,
        &hi,
        kill,
        |p| exhaustion.contains(r_index, p),
        1.0,
        |_| None,
    )?;
    let (u, stats) = grid.solve(opts)?;
    Ok(SurvivalSolution {
        dim,
        r_index,
        grid,
        u,
        stats,
    })
}

/// Killed harmonic measure of a finite set: weights `H_D^k(v, w)` on the
/// outer boundary, death mass, and leaked remainder.
pub struct ExitMeasure {
    pub start: Point,
    pub weights: HashMap<Point, f64>,
    pub death: f64,
    pub leaked: f64,
}

impl ExitMeasure {
    pub fn total_exit_mass(&self) -> f64 {
        self.weights.values().sum()
    }
}

/// Propagate the killed walk started at `v` forward until the mass remaining
/// in `domain` is below `tol`.
pub fn exit_measure(
    k: &KillingField,
    dim: usize,
    domain: &[Point],
    v: &Point,
    tol: f64,
) -> Result<ExitMeasure> {
    if tol <= 0.0 {
        return Err(KrwError::InvalidParameter("tol must be positive".into()));
    }
    if !domain.contains(v) {
        return Err(KrwError::InvalidParameter(format!(
            "start {v} outside the domain"
        )));
    }
    let mut lo = vec![i64::MAX; dim];
    let mut hi = vec![i64::MIN; dim];
    for p in domain {
        for (a, &c) in p.coords().iter().enumerate() {
            lo[a] = lo[a].min(c as i64);
            hi[a] = hi[a].max(c as i64);
        }
    }
    let set: std::collections::HashSet<Point> = domain.iter().copied().collect();
    let grid = GridDomain::build(dim, &lo, &hi, k, |p| set.contains(p), 1.0, |_| None)?;
    let prop = grid.propagate(v, tol, u64::MAX, false)?;
    let mut weights = HashMap::new();
    for (i, &m) in prop.exit.iter().enumerate() {
        if m > 0.0 {
            weights.insert(grid.point_of(i), m);
        }
    }
    Ok(ExitMeasure {
        start: *v,
        weights,
        death: prop.death,
        leaked: prop.leaked,
    })
}

fn ball_points(dim: usize, r: i64) -> Vec<Point> {
    let lo = vec![-r; dim];
    let hi = vec![r; dim];
    let mut out = Vec::new();
    let mut coords = vec![0i64; dim];
    collect_box(&lo, &hi, 0, &mut coords, &mut |c| {
        let n2: i64 = c.iter().map(|&v| v * v).sum();
        if n2 <= r * r {
            let cc: Vec<i32> = c.iter().map(|&v| v as i32).collect();
            out.push(Point::new(&cc));
        }
    });
    out
}

fn collect_box(
    lo: &[i64],
    hi: &[i64],
    axis: usize,
    coords: &mut Vec<i64>,
    f: &mut impl FnMut(&[i64]),
) {
    if axis == lo.len() {
        f(coords);
        return;
    }
    for c in lo[axis]..=hi[axis] {
        coords[axis] = c;
        collect_box(lo, hi, axis + 1, coords, f);
    }
}

/// Flux measure through the outer boundary of `B(r_flux)`: mass of killed
/// paths from `init` that make their last visit to `B(r_flux)` at the step
/// into each boundary point, while confined to `grid`'s active set.
fn last_exit_flux(
    grid: &GridDomain,
    init: &[(usize, f64)],
    r_flux: i64,
    tol: f64,
) -> Result<HashMap<Point, f64>> {
    let prop = grid.propagate_measure(init, tol, u64::MAX, true)?;
    let two_d = 2.0 * grid.dim as f64;
    let mut flux: HashMap<Point, f64> = HashMap::new();
    let rr = r_flux * r_flux;
    for i in grid.active_indices() {
        let g = prop.visits[i];
        if g == 0.0 {
            continue;
        }
        let y = grid.point_of(i);
        if y.norm2() > rr {
            continue;
        }
        let k_y = grid.killing_at(i);
        let step = (1.0 - k_y) / two_d * g;
        for w in neighbors(&y) {
            if w.norm2() > rr {
                *flux.entry(w).or_insert(0.0) += step;
            }
        }
    }
    Ok(flux)
}

/// Recompose `P_x[tau(Lambda_R^c) < tau(Delta)]` from exit measures through
/// `∂B(r1)` and `∂B(r2)` (first-exit / last-exit split, `d >= 3` form) and
/// return the maximum absolute discrepancy against the direct solve over the
/// test set `xs`.
pub fn decomposition_check(
    k: &KillingField,
    exhaustion: &Exhaustion,
    dim: usize,
    r_index: u32,
    r1: i64,
    r2: i64,
    xs: &[Point],
    opts: &SolveOptions,
) -> Result<f64> {
    if dim < 3 {
        return Err(KrwError::InvalidParameter(
            "three-factor decomposition requires d >= 3 (use the 2d four-radius form)".into(),
        ));
    }
    if !(0 < r1 && r1 < r2) {
        return Err(KrwError::InvalidParameter("need 0 < r1 < r2".into()));
    }
    // B(r2) and its outer boundary must sit inside Lambda_R
    for p in ball_points(dim, r2 + 1) {
        if !exhaustion.contains(r_index, &p) {
            return Err(KrwError::InvalidParameter(format!(
                "B(r2)+boundary not inside Lambda_R (offending {p})"
            )));
        }
    }
    let sol = solve_escape(k, exhaustion, dim, r_index, opts)?;

    // full-domain grid for the middle (visit-collecting) propagation
    let (lo, hi) = exhaustion.bounding_box(r_index, dim);
    let grid = GridDomain::build(
        dim,
        &lo,
        &hi,
        k,
        |p| exhaustion.contains(r_index, p),
        1.0,
        |_| None,
    )?;

    // escape-avoiding-B(r2) solve: u3(w) = P_w[tau(Lambda^c) < tau(B(r2)) ^ tau(Delta)]
    let rr2 = r2 * r2;
    let grid3 = GridDomain::build(
        dim,
        &lo,
        &hi,
        k,
        |p| exhaustion.contains(r_index, p),
        1.0,
        |p| (p.norm2() <= rr2).then_some(0.0),
    )?;
    let (u3, _) = grid3.solve(opts)?;

    let ball1 = ball_points(dim, r1);
    let ptol = (opts.tol * 10.0).max(1e-14);
    let mut worst: f64 = 0.0;
    for x in xs {
        if x.norm2() > r1 * r1 {
            return Err(KrwError::InvalidParameter(format!(
                "test point {x} must lie in B(r1)"
            )));
        }
        // first factor: first-exit measure of B(r1)
        let em = exit_measure(k, dim, &ball1, x, ptol)?;
        let init: Vec<(usize, f64)> = em
            .weights
            .iter()
            .map(|(p, &m)| (grid.index_of(p).expect("exit point inside box"), m))
            .collect();
        // middle factor: last-exit flux through ∂B(r2) inside Lambda_R
        let flux = last_exit_flux(&grid, &init, r2, ptol)?;
        // third factor and recomposition
        let mut recomposed = 0.0;
        for (w, m) in &flux {
            let i = grid3.index_of(w).expect("flux point inside box");
            recomposed += m * u3[i];
        }
        let direct = sol.value(x);
        worst = worst.max((recomposed - direct).abs());
    }
    Ok(worst)
}

/// The 2d four-radius recomposition through `∂B(r0) .. ∂B(r3)`.
#[allow(clippy::too_many_arguments)]
pub fn decomposition_check_2d(
    k: &KillingField,
    exhaustion: &Exhaustion,
    r_index: u32,
    radii: (i64, i64, i64, i64),
    xs: &[Point],
    opts: &SolveOptions,
) -> Result<f64> {
    let dim = 2;
    let (r0, r1, r2, r3) = radii;
    if !(0 < r0 && r0 < r1 && r1 + 1 < r2 && r2 < r3) {
        return Err(KrwError::InvalidParameter(
            "need 0 < r0 < r1 < r2 < r3 with r1 + 1 <= r2".into(),
        ));
    }
    for p in ball_points(dim, r3 + 1) {
        if !exhaustion.contains(r_index, &p) {
            return Err(KrwError::InvalidParameter(format!(
                "B(r3)+boundary not inside Lambda_R (offending {p})"
            )));
        }
    }
    let sol = solve_escape(k, exhaustion, dim, r_index, opts)?;
    let ptol = (opts.tol * 10.0).max(1e-14);

    // stage grids
    let ball3 = GridDomain::build(
        dim,
        &[-r3, -r3],
        &[r3, r3],
        k,
        |p| p.norm2() <= r3 * r3,
        1.0,
        |_| None,
    )?;
    let ring10 = GridDomain::build(
        dim,
        &[-(r1 + 1), -(r1 + 1)],
        &[r1 + 1, r1 + 1],
        k,
        |p| p.norm2() <= r1 * r1 && p.norm2() > r0 * r0,
        1.0,
        |_| None,
    )?;
    let ring30 = GridDomain::build(
        dim,
        &[-r3, -r3],
        &[r3, r3],
        k,
        |p| p.norm2() <= r3 * r3 && p.norm2() > r0 * r0,
        1.0,
        |_| None,
    )?;
    let ring32 = GridDomain::build(
        dim,
        &[-(r3 + 1), -(r3 + 1)],
        &[r3 + 1, r3 + 1],
        k,
        |p| p.norm2() <= r3 * r3 && p.norm2() > r2 * r2,
        1.0,
        |_| None,
    )?;

    let mut worst: f64 = 0.0;
    for x in xs {
        if x.norm2() > r0 * r0 {
            return Err(KrwError::InvalidParameter(format!(
                "test point {x} must lie in B(r0)"
            )));
        }
        // last-exit flux through ∂B(r0), paths confined to B(r3)
        let ix = ball3
            .index_of(x)
            .filter(|&i| ball3.is_active(i))
            .ok_or(KrwError::EmptyDomain)?;
        let f1 = last_exit_flux(&ball3, &[(ix, 1.0)], r0, ptol)?;
        // first-exit of B(r1) avoiding B(r0)
        let init1: Vec<(usize, f64)> = f1
            .iter()
            .map(|(p, &m)| (ring10.index_of(p).expect("in ring"), m))
            .collect();
        let prop2 = ring10.propagate_measure(&init1, ptol, u64::MAX, false)?;
        let mut nu1: Vec<(usize, f64)> = Vec::new();
        for (i, &m) in prop2.exit.iter().enumerate() {
            if m > 0.0 {
                let v = ring10.point_of(i);
                if v.norm2() > r1 * r1 {
                    nu1.push((ring30.index_of(&v).expect("in big ring"), m));
                }
            }
        }
        // last-exit flux through ∂B(r2), paths confined to B(r3) \ B(r0)
        let f3 = last_exit_flux(&ring30, &nu1, r2, ptol)?;
        // first-exit of B(r3) avoiding B(r2)
        let init3: Vec<(usize, f64)> = f3
            .iter()
            .map(|(p, &m)| (ring32.index_of(p).expect("in outer ring"), m))
            .collect();
        let prop4 = ring32.propagate_measure(&init3, ptol, u64::MAX, false)?;
        // recomposition with the full escape solve at ∂B(r3)
        let mut recomposed = 0.0;
        for (i, &m) in prop4.exit.iter().enumerate() {
            if m > 0.0 {
                let z = ring32.point_of(i);
                if z.norm2() > r3 * r3 {
                    recomposed += m * sol.value(&z);
                }
            }
        }
        let direct = sol.value(x);
        worst = worst.max((recomposed - direct).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exhaust::Exhaustion;

    #[test]
    fn zero_killing_unit_escape() {
        let sol = solve_escape(
            &KillingField::Zero,
            &Exhaustion::Ball,
            2,
            8,
            &SolveOptions::default(),
        )
        .unwrap();
        for (_, u) in sol.iter() {
            assert!((u - 1.0).abs() < 1e-12);
        }
    }

    /// Gambler's ruin: d=1, k=(1/2)1_0, Lambda_R = [-2R, R]. The conditioned
    /// first-step-right probability from exact solves approaches 7/12.
    #[test]
    fn gamblers_ruin_first_step() {
        let k = KillingField::indicator(vec![Point::origin(1)], 0.5).unwrap();
        let ex = Exhaustion::segment(2, 1).unwrap();
        let mut prev_err = f64::INFINITY;
        for r in [25u32, 50, 100, 200] {
            let sol = solve_escape(&k, &ex, 1, r, &SolveOptions::default()).unwrap();
            let law = sol.conditional_step_law(&k, &Point::origin(1)).unwrap();
            let p_right = law
                .iter()
                .find(|(y, _)| y.coord(0) == 1)
                .map(|(_, p)| *p)
                .unwrap();
            let err = (p_right - 7.0 / 12.0).abs();
            assert!(err < prev_err, "error not decreasing at R={r}");
            prev_err = err;
            if r == 200 {
                assert!(err <= 5e-3, "error {err:.2e} at R=200");
            }
        }
    }

    /// Closed-form check of the same solve: the exact finite-R value is
    /// 1/4 + (2R+1)/(2(3R+2)).
    #[test]
    fn gamblers_ruin_exact_finite_r() {
        let k = KillingField::indicator(vec![Point::origin(1)], 0.5).unwrap();
        let ex = Exhaustion::segment(2, 1).unwrap();
        for r in [10u32, 40] {
            let sol = solve_escape(&k, &ex, 1, r, &SolveOptions::default()).unwrap();
            let law = sol.conditional_step_law(&k, &Point::origin(1)).unwrap();
            let p_right = law
                .iter()
                .find(|(y, _)| y.coord(0) == 1)
                .map(|(_, p)| *p)
                .unwrap();
            let rf = r as f64;
            let expect = 0.25 + 0.5 * (2.0 * rf + 1.0) / (3.0 * rf + 2.0);
            assert!(
                (p_right - expect).abs() < 1e-10,
                "R={r}: {p_right} vs {expect}"
            );
        }
    }

    #[test]
    fn step_law_rows_sum_to_one() {
        // power-law killing has k = 1 on the closed unit ball; test points
        // must lie in the escape set
        let k = KillingField::power_law(1.5).unwrap();
        let sol = solve_escape(&k, &Exhaustion::Ball, 2, 12, &SolveOptions::default()).unwrap();
        for x in [Point::new(&[2, 0]), Point::new(&[3, -2]), Point::new(&[0, 7])] {
            let law = sol.conditional_step_law(&k, &x).unwrap();
            let total: f64 = law.iter().map(|(_, p)| p).sum();
            assert!((total - 1.0).abs() <= 1e-12, "sum {total} at {x}");
        }
    }

    #[test]
    fn nested_domain_monotonicity() {
        // escaping a larger set is harder: u_{R'} <= u_R pointwise for R' > R
        let k = KillingField::power_law(2.2).unwrap();
        let a = solve_escape(&k, &Exhaustion::Ball, 2, 8, &SolveOptions::default()).unwrap();
        let b = solve_escape(&k, &Exhaustion::Ball, 2, 16, &SolveOptions::default()).unwrap();
        for (p, u_small) in a.iter() {
            assert!(b.value(&p) <= u_small + 1e-12, "monotonicity broken at {p}");
        }
    }

    #[test]
    fn monotone_killing() {
        let weak = KillingField::power_law(2.5).unwrap();
        let strong = KillingField::power_law(1.5).unwrap(); // larger k pointwise
        let a = solve_escape(&weak, &Exhaustion::Ball, 2, 10, &SolveOptions::default()).unwrap();
        let b = solve_escape(&strong, &Exhaustion::Ball, 2, 10, &SolveOptions::default()).unwrap();
        for (p, ua) in a.iter() {
            assert!(b.value(&p) <= ua + 1e-12);
        }
    }

    #[test]
    fn exit_measure_masses_account_to_one() {
        let k = KillingField::power_law(1.0).unwrap();
        let dom = ball_points(2, 2);
        let em = exit_measure(&k, 2, &dom, &Point::origin(2), 1e-12).unwrap();
        let total = em.total_exit_mass() + em.death + em.leaked;
        assert!((total - 1.0).abs() <= 1e-10, "mass {total}");
    }

    #[test]
    fn exit_measure_symmetry_no_killing() {
        let dom = ball_points(2, 2);
        let em = exit_measure(&KillingField::Zero, 2, &dom, &Point::origin(2), 1e-13).unwrap();
        assert!((em.total_exit_mass() - 1.0).abs() <= 1e-10);
        assert_eq!(em.death, 0.0);
        // invariant under the lattice rotation (x,y) -> (-y,x)
        for (p, w) in &em.weights {
            let q = Point::new(&[-p.coord(1), p.coord(0)]);
            let wq = em.weights.get(&q).copied().unwrap_or(0.0);
            assert!((w - wq).abs() <= 1e-12, "{p} vs {q}");
        }
    }

    /// 5x5 square, decaying killing: propagation matches a brute-force
    /// path-sum oracle truncated at length 40, within the geometric tail.
    #[test]
    fn exit_measure_vs_truncated_path_sum() {
        let k = KillingField::power_law(2.0).unwrap();
        let mut dom = Vec::new();
        for x in -2i32..=2 {
            for y in -2i32..=2 {
                dom.push(Point::new(&[x, y]));
            }
        }
        let v = Point::origin(2);
        let em = exit_measure(&k, 2, &dom, &v, 1e-14).unwrap();

        // oracle: exact step-by-step distribution over positions, 40 steps
        let mut cur: HashMap<Point, f64> = HashMap::from([(v, 1.0)]);
        let mut weights: HashMap<Point, f64> = HashMap::new();
        let mut in_mass = 1.0;
        for _ in 0..40 {
            let mut nxt: HashMap<Point, f64> = HashMap::new();
            for (p, m) in cur {
                let move_m = (1.0 - k.eval(&p)) / 4.0 * m;
                for q in neighbors(&p) {
                    if dom.contains(&q) {
                        *nxt.entry(q).or_insert(0.0) += move_m;
                    } else {
                        *weights.entry(q).or_insert(0.0) += move_m;
                    }
                }
            }
            in_mass = nxt.values().sum();
            cur = nxt;
        }
        // remaining mass bounds the truncation error
        assert!(in_mass < 1e-8, "tail bound too loose: {in_mass:.2e}");
        for (p, w) in &weights {
            let ours = em.weights.get(p).copied().unwrap_or(0.0);
            assert!(
                (ours - w).abs() <= 1e-8 + in_mass,
                "{p}: {ours} vs oracle {w}"
            );
        }
    }

    #[test]
    fn exit_measure_rejects_bad_tol() {
        let dom = ball_points(2, 1);
        assert!(exit_measure(&KillingField::Zero, 2, &dom, &Point::origin(2), 0.0).is_err());
    }

    #[test]
    fn decomposition_no_killing_small() {
        let d = decomposition_check(
            &KillingField::Zero,
            &Exhaustion::Ball,
            3,
            10,
            2,
            5,
            &[Point::origin(3), Point::new(&[1, 0, 0])],
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(d <= 1e-10, "discrepancy {d:.3e}");
    }

    #[test]
    fn decomposition_2d_no_killing_small() {
        let d = decomposition_check_2d(
            &KillingField::Zero,
            &Exhaustion::Ball,
            16,
            (2, 4, 8, 12),
            &[Point::origin(2), Point::new(&[1, 1])],
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(d <= 1e-10, "discrepancy {d:.3e}");
    }

    #[test]
    fn decomposition_rejects_bad_geometry() {
        assert!(decomposition_check(
            &KillingField::Zero,
            &Exhaustion::Ball,
            3,
            6,
            4,
            3,
            &[Point::origin(3)],
            &SolveOptions::default(),
        )
        .is_err());
        assert!(decomposition_check(
            &KillingField::Zero,
            &Exhaustion::Ball,
            2,
            10,
            2,
            5,
            &[Point::origin(2)],
            &SolveOptions::default(),
        )
        .is_err());
    }
}
