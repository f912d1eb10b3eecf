//! Shared brute-force LP oracle used by the randomized solver cross-check
//! and the acceptance suite: vertex enumeration for the optimum, plus
//! duality and complementary slackness certification.

use gridco::lp::{solve, LinearProgram, LpStatus};
use rand::Rng;

/// Gaussian elimination for the oracle; deliberately separate from the
/// solver's internals.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = a.len();
    for k in 0..n {
        let mut p = k;
        for r in k + 1..n {
            if a[r][k].abs() > a[p][k].abs() {
                p = r;
            }
        }
        if a[p][k].abs() < 1e-9 {
            return None;
        }
        a.swap(k, p);
        b.swap(k, p);
        for r in k + 1..n {
            let f = a[r][k] / a[k][k];
            for c in k..n {
                a[r][c] -= f * a[k][c];
            }
            b[r] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut v = b[k];
        for c in k + 1..n {
            v -= a[k][c] * x[c];
        }
        x[k] = v / a[k][k];
    }
    Some(x)
}

/// All-vertex enumeration over {inequality rows, bound facets}, with
/// equality rows always active. Returns the optimal objective, or None when
/// no feasible vertex exists (the feasible set is a box intersection, so
/// empty in that case).
pub fn oracle_optimum(lp: &LinearProgram) -> Option<f64> {
    let n = lp.objective.len();
    // candidate active constraints: (coeffs, rhs)
    let mut cons: Vec<(Vec<f64>, f64)> = Vec::new();
    for (row, &b) in lp.a_ub.iter().zip(&lp.b_ub) {
        cons.push((row.clone(), b));
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cons.push((e.clone(), lp.lower[j]));
        cons.push((e, lp.upper[j]));
    }
    let n_eq = lp.a_eq.len();
    let need = n - n_eq;
    let mut best: Option<f64> = None;
    let mut pick = vec![0usize; need];

    let feasible = |x: &[f64]| -> bool {
        for (row, &b) in lp.a_eq.iter().zip(&lp.b_eq) {
            let v: f64 = row.iter().zip(x).map(|(a, x)| a * x).sum();
            if (v - b).abs() > 1e-6 {
                return false;
            }
        }
        for (row, &b) in lp.a_ub.iter().zip(&lp.b_ub) {
            let v: f64 = row.iter().zip(x).map(|(a, x)| a * x).sum();
            if v > b + 1e-6 {
                return false;
            }
        }
        for j in 0..x.len() {
            if x[j] < lp.lower[j] - 1e-6 || x[j] > lp.upper[j] + 1e-6 {
                return false;
            }
        }
        true
    };

    fn combos(
        cons: &[(Vec<f64>, f64)],
        lp: &LinearProgram,
        pick: &mut Vec<usize>,
        depth: usize,
        start: usize,
        best: &mut Option<f64>,
        feasible: &dyn Fn(&[f64]) -> bool,
    ) {
        let need = pick.len();
        if depth == need {
            let n = lp.objective.len();
            let mut a = Vec::with_capacity(n);
            let mut b = Vec::with_capacity(n);
            for (row, rhs) in lp.a_eq.iter().zip(&lp.b_eq) {
                a.push(row.clone());
                b.push(*rhs);
            }
            for &k in pick.iter() {
                a.push(cons[k].0.clone());
                b.push(cons[k].1);
            }
            if let Some(x) = gauss_solve(a, b) {
                if feasible(&x) {
                    let obj: f64 = lp.objective.iter().zip(&x).map(|(c, x)| c * x).sum();
                    *best = Some(best.map_or(obj, |b: f64| b.min(obj)));
                }
            }
            return;
        }
        for k in start..cons.len() {
            pick[depth] = k;
            combos(cons, lp, pick, depth + 1, k + 1, best, feasible);
        }
    }

    combos(&cons, lp, &mut pick, 0, 0, &mut best, &feasible);
    best
}

pub fn random_lp(rng: &mut impl Rng) -> LinearProgram {
    let n = rng.gen_range(2..=8usize);
    let rows_cap = match n {
        0..=5 => 12,
        6 => 8,
        7 => 6,
        _ => 4,
    };
    let m = rng.gen_range(1..=rows_cap);
    let with_eq = n >= 3 && rng.gen_bool(0.25);
    let coeff = |rng: &mut dyn rand::RngCore| rng.gen_range(-10..=10) as f64;

    let mut a_ub = Vec::new();
    let mut b_ub = Vec::new();
    let mut a_eq = Vec::new();
    let mut b_eq = Vec::new();
    for r in 0..m {
        let row: Vec<f64> = (0..n).map(|_| coeff(rng)).collect();
        let b = rng.gen_range(-10..=10) as f64;
        if with_eq && r == 0 {
            a_eq.push(row);
            b_eq.push(b);
        } else {
            a_ub.push(row);
            b_ub.push(b);
        }
    }
    let lower = vec![0.0; n];
    let upper: Vec<f64> = (0..n).map(|_| rng.gen_range(1..=10) as f64).collect();
    let objective: Vec<f64> = (0..n).map(|_| coeff(rng)).collect();
    LinearProgram { objective, a_eq, b_eq, a_ub, b_ub, lower, upper }
}

pub fn check_certificates(lp: &LinearProgram, tag: usize) {
    let s = solve(lp).unwrap();
    assert_eq!(s.status, LpStatus::Optimal);
    // primal feasibility
    for (row, &b) in lp.a_eq.iter().zip(&lp.b_eq) {
        let v: f64 = row.iter().zip(&s.x).map(|(a, x)| a * x).sum();
        assert!((v - b).abs() <= 1e-8 * b.abs().max(1.0), "lp {tag}: eq residual");
    }
    let mut slacks = Vec::new();
    for (row, &b) in lp.a_ub.iter().zip(&lp.b_ub) {
        let v: f64 = row.iter().zip(&s.x).map(|(a, x)| a * x).sum();
        assert!(v <= b + 1e-8 * b.abs().max(1.0), "lp {tag}: ub violated");
        slacks.push(b - v);
    }
    // complementary slackness on rows and bounds
    for (slack, dual) in slacks.iter().zip(&s.duals_ub) {
        assert!(dual * slack <= 1e-8 * (1.0 + dual.abs()), "lp {tag}: row slackness");
    }
    for j in 0..lp.objective.len() {
        let sl = s.x[j] - lp.lower[j];
        let su = lp.upper[j] - s.x[j];
        assert!(
            s.reduced_lower[j] * sl <= 1e-8 * (1.0 + s.reduced_lower[j]),
            "lp {tag}: lower slackness"
        );
        assert!(
            s.reduced_upper[j] * su <= 1e-8 * (1.0 + s.reduced_upper[j]),
            "lp {tag}: upper slackness"
        );
    }
    // strong duality
    let gap = (s.objective - s.dual_objective(lp)).abs();
    assert!(gap <= 1e-6 * s.objective.abs().max(1.0), "lp {tag}: duality gap {gap}");
}

/// Draws random LPs until `count` feasible ones have been cross-checked
/// against the oracle; infeasible draws must also be flagged by the solver.
pub fn cross_check_random_lps(count: usize, seed: u64, stream: &str) {
    let mut rng = gridco::rng::stream(seed, stream);
    let mut feasible_count = 0usize;
    let mut attempts = 0usize;
    while feasible_count < count {
        attempts += 1;
        assert!(attempts < 10 * count, "random generator produced too few feasible LPs");
        let lp = random_lp(&mut rng);
        let oracle = oracle_optimum(&lp);
        let s = solve(&lp).unwrap();
        match oracle {
            None => {
                assert_eq!(
                    s.status,
                    LpStatus::Infeasible,
                    "solver disagrees with oracle on feasibility"
                );
            }
            Some(obj) => {
                assert_eq!(s.status, LpStatus::Optimal);
                assert!(
                    (s.objective - obj).abs() <= 1e-6 * obj.abs().max(1.0),
                    "objective {} vs oracle {}",
                    s.objective,
                    obj
                );
                check_certificates(&lp, feasible_count);
                feasible_count += 1;
            }
        }
    }
}
