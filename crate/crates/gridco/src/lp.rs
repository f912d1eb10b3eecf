//! Dense two-phase simplex solver with dual extraction.
//!
//! Problems here are small (a 30-bus DC-OPF clears with fewer than 150
//! standardized columns), so a dense tableau with Bland's anti-cycling rule
//! is exact enough and keeps the dual prices available from the final basis.

use thiserror::Error;

pub const FEAS_TOL: f64 = 1e-8;
const PIVOT_TOL: f64 = 1e-10;
const RC_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct LinearProgram {
    /// Objective coefficients (minimization).
    pub objective: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    /// Row-form `a . x <= b`.
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
    /// Per-variable bounds; -inf / +inf allowed.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// One per equality row: d(objective)/d(b_eq).
    pub duals_eq: Vec<f64>,
    /// One per inequality row, >= 0: -d(objective)/d(b_ub).
    pub duals_ub: Vec<f64>,
    /// Multiplier on the lower bound of each variable (>= 0).
    pub reduced_lower: Vec<f64>,
    /// Multiplier on the upper bound of each variable (>= 0).
    pub reduced_upper: Vec<f64>,
    pub objective: f64,
}

impl LpSolution {
    /// Lagrangian dual objective from the returned multipliers.
    pub fn dual_objective(&self, lp: &LinearProgram) -> f64 {
        let mut v = 0.0;
        for (y, b) in self.duals_eq.iter().zip(&lp.b_eq) {
            v += y * b;
        }
        for (y, b) in self.duals_ub.iter().zip(&lp.b_ub) {
            v -= y * b;
        }
        for j in 0..lp.objective.len() {
            if lp.lower[j].is_finite() {
                v += self.reduced_lower[j] * lp.lower[j];
            }
            if lp.upper[j].is_finite() {
                v -= self.reduced_upper[j] * lp.upper[j];
            }
        }
        v
    }
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("NaN coefficient in {0}")]
    Nan(&'static str),
    #[error("iteration limit exceeded ({0} pivots)")]
    IterationLimit(usize),
    #[error("inconsistent bounds on variable {0}: lower > upper")]
    BadBounds(usize),
}

impl LinearProgram {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Dimension(format!(
                "bounds length {}/{} vs {} variables",
                self.lower.len(),
                self.upper.len(),
                n
            )));
        }
        if self.a_eq.len() != self.b_eq.len() {
            return Err(LpError::Dimension(format!(
                "{} equality rows vs {} rhs entries",
                self.a_eq.len(),
                self.b_eq.len()
            )));
        }
        if self.a_ub.len() != self.b_ub.len() {
            return Err(LpError::Dimension(format!(
                "{} inequality rows vs {} rhs entries",
                self.a_ub.len(),
                self.b_ub.len()
            )));
        }
        for (r, row) in self.a_eq.iter().chain(self.a_ub.iter()).enumerate() {
            if row.len() != n {
                return Err(LpError::Dimension(format!(
                    "row {} has {} coefficients, expected {}",
                    r,
                    row.len(),
                    n
                )));
            }
        }
        let any_nan = |v: &[f64]| v.iter().any(|x| x.is_nan());
        if any_nan(&self.objective) {
            return Err(LpError::Nan("objective"));
        }
        if self.a_eq.iter().any(|r| any_nan(r)) || any_nan(&self.b_eq) {
            return Err(LpError::Nan("equality system"));
        }
        if self.a_ub.iter().any(|r| any_nan(r)) || any_nan(&self.b_ub) {
            return Err(LpError::Nan("inequality system"));
        }
        if any_nan(&self.lower) || any_nan(&self.upper) {
            return Err(LpError::Nan("bounds"));
        }
        for j in 0..n {
            if self.lower[j] > self.upper[j] + FEAS_TOL {
                return Err(LpError::BadBounds(j));
            }
        }
        Ok(())
    }
}

/// How an original variable maps into the nonnegative standard form.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// x = lower + x', x' >= 0.
    Shift { col: usize, lower: f64 },
    /// x = upper - x', x' >= 0 (lower unbounded).
    Flip { col: usize, upper: f64 },
    /// x = x+ - x- (both bounds unbounded).
    Split { pos: usize, neg: usize },
}

/// Which original row a standardized row came from.
#[derive(Debug, Clone, Copy)]
enum RowKind {
    Eq(usize),
    Ub(usize),
    /// Upper-bound row `x'_j <= upper_j - lower_j` for a shifted variable.
    Bound(usize),
}

struct StandardForm {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    cost: Vec<f64>,
    ncols: usize,
    var_map: Vec<VarMap>,
    row_kind: Vec<RowKind>,
    row_sign: Vec<f64>,
}

fn standardize(lp: &LinearProgram) -> StandardForm {
    let n = lp.num_vars();
    let mut var_map = Vec::with_capacity(n);
    let mut ncols = 0usize;
    let mut bound_rows: Vec<usize> = Vec::new(); // variable index per bound row
    for j in 0..n {
        let (l, u) = (lp.lower[j], lp.upper[j]);
        if l.is_finite() {
            var_map.push(VarMap::Shift { col: ncols, lower: l });
            ncols += 1;
            if u.is_finite() {
                bound_rows.push(j);
            }
        } else if u.is_finite() {
            var_map.push(VarMap::Flip { col: ncols, upper: u });
            ncols += 1;
        } else {
            var_map.push(VarMap::Split { pos: ncols, neg: ncols + 1 });
            ncols += 2;
        }
    }

    let m = lp.a_eq.len() + lp.a_ub.len() + bound_rows.len();
    let total_cols = ncols + lp.a_ub.len() + bound_rows.len(); // slacks
    let mut a = vec![vec![0.0; total_cols]; m];
    let mut b = vec![0.0; m];
    let mut row_kind = Vec::with_capacity(m);

    let fill_row = |a_row: &mut [f64], b_out: &mut f64, coeffs: &[f64], rhs: f64| {
        let mut shift = 0.0;
        for (j, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            match var_map[j] {
                VarMap::Shift { col, lower } => {
                    a_row[col] += c;
                    shift += c * lower;
                }
                VarMap::Flip { col, upper } => {
                    a_row[col] -= c;
                    shift += c * upper;
                }
                VarMap::Split { pos, neg } => {
                    a_row[pos] += c;
                    a_row[neg] -= c;
                }
            }
        }
        *b_out = rhs - shift;
    };

    let mut r = 0;
    for (i, row) in lp.a_eq.iter().enumerate() {
        fill_row(&mut a[r], &mut b[r], row, lp.b_eq[i]);
        row_kind.push(RowKind::Eq(i));
        r += 1;
    }
    for (i, row) in lp.a_ub.iter().enumerate() {
        fill_row(&mut a[r], &mut b[r], row, lp.b_ub[i]);
        a[r][ncols + i] = 1.0; // slack
        row_kind.push(RowKind::Ub(i));
        r += 1;
    }
    for (k, &j) in bound_rows.iter().enumerate() {
        let col = match var_map[j] {
            VarMap::Shift { col, .. } => col,
            _ => unreachable!(),
        };
        a[r][col] = 1.0;
        a[r][ncols + lp.a_ub.len() + k] = 1.0;
        b[r] = lp.upper[j] - lp.lower[j];
        row_kind.push(RowKind::Bound(j));
        r += 1;
    }

    // Objective on standardized columns (constant offset dropped; the final
    // objective is recomputed from the recovered x).
    let mut cost = vec![0.0; total_cols];
    for j in 0..n {
        let c = lp.objective[j];
        match var_map[j] {
            VarMap::Shift { col, .. } => cost[col] += c,
            VarMap::Flip { col, .. } => cost[col] -= c,
            VarMap::Split { pos, neg } => {
                cost[pos] += c;
                cost[neg] -= c;
            }
        }
    }

    // Nonnegative rhs.
    let mut row_sign = vec![1.0; m];
    for r in 0..m {
        if b[r] < 0.0 {
            row_sign[r] = -1.0;
            b[r] = -b[r];
            for v in a[r].iter_mut() {
                *v = -*v;
            }
        }
    }

    StandardForm { a, b, cost, ncols: total_cols, var_map, row_kind, row_sign }
}

enum PivotOutcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

/// Bland-rule primal simplex on a dictionary tableau. `tab[r]` holds the
/// current B^-1 A row, `rhs[r]` the basic value of `basis[r]`.
fn run_simplex(
    tab: &mut Vec<Vec<f64>>,
    rhs: &mut Vec<f64>,
    basis: &mut Vec<usize>,
    cost: &[f64],
    allowed_cols: usize,
    max_iter: usize,
) -> PivotOutcome {
    let m = tab.len();
    for _iter in 0..max_iter {
        // Reduced costs for nonbasic columns; Bland: smallest eligible index.
        let mut entering = None;
        'cols: for j in 0..allowed_cols {
            if basis.contains(&j) {
                continue;
            }
            let mut rc = cost[j];
            for r in 0..m {
                rc -= cost[basis[r]] * tab[r][j];
            }
            if rc < -RC_TOL {
                entering = Some(j);
                break 'cols;
            }
        }
        let Some(e) = entering else {
            return PivotOutcome::Optimal;
        };

        // Ratio test; ties broken by smallest basic variable index (Bland).
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for r in 0..m {
            let a_re = tab[r][e];
            if a_re > PIVOT_TOL {
                let ratio = rhs[r] / a_re;
                let better = match leave {
                    None => true,
                    Some(lr) => {
                        ratio < best - 1e-12
                            || (ratio < best + 1e-12 && basis[r] < basis[lr])
                    }
                };
                if better {
                    best = ratio;
                    leave = Some(r);
                }
            }
        }
        let Some(lr) = leave else {
            return PivotOutcome::Unbounded;
        };

        // Pivot on (lr, e).
        let piv = tab[lr][e];
        for v in tab[lr].iter_mut() {
            *v /= piv;
        }
        rhs[lr] /= piv;
        for r in 0..m {
            if r == lr {
                continue;
            }
            let f = tab[r][e];
            if f != 0.0 {
                for j in 0..tab[r].len() {
                    tab[r][j] -= f * tab[lr][j];
                }
                rhs[r] -= f * rhs[lr];
                if rhs[r] < 0.0 && rhs[r] > -1e-11 {
                    rhs[r] = 0.0;
                }
            }
        }
        basis[lr] = e;
    }
    PivotOutcome::IterationLimit
}

/// Solves `mat . x = rhs` by Gaussian elimination with partial pivoting.
fn solve_dense(mut mat: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
    let n = mat.len();
    for k in 0..n {
        let mut p = k;
        for r in k + 1..n {
            if mat[r][k].abs() > mat[p][k].abs() {
                p = r;
            }
        }
        mat.swap(k, p);
        rhs.swap(k, p);
        let piv = mat[k][k];
        if piv.abs() < 1e-14 {
            continue; // singular direction; leave zero
        }
        for r in k + 1..n {
            let f = mat[r][k] / piv;
            if f != 0.0 {
                for c in k..n {
                    mat[r][c] -= f * mat[k][c];
                }
                rhs[r] -= f * rhs[k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut v = rhs[k];
        for c in k + 1..n {
            v -= mat[k][c] * x[c];
        }
        x[k] = if mat[k][k].abs() < 1e-14 { 0.0 } else { v / mat[k][k] };
    }
    x
}

pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let n = lp.num_vars();
    let mut sf = standardize(lp);
    let mut m = sf.a.len();
    let max_iter = 50 * (m + sf.ncols).max(20);

    // Phase 1: slack columns with +1 coefficient start basic, everything else
    // gets an artificial.
    let mut basis: Vec<usize> = Vec::with_capacity(m);
    let mut n_art = 0usize;
    let mut art_col_of_row: Vec<Option<usize>> = vec![None; m];
    for r in 0..m {
        // look for a ready-made unit column among the slacks of this row
        let mut unit = None;
        for j in (0..sf.ncols).rev() {
            if sf.a[r][j] == 1.0 && sf.cost[j] == 0.0 {
                // must be zero in every other row to be a valid start column
                if (0..m).all(|r2| r2 == r || sf.a[r2][j] == 0.0) {
                    unit = Some(j);
                    break;
                }
            }
        }
        match unit {
            Some(j) => basis.push(j),
            None => {
                art_col_of_row[r] = Some(sf.ncols + n_art);
                basis.push(sf.ncols + n_art);
                n_art += 1;
            }
        }
    }
    let total = sf.ncols + n_art;
    let mut tab: Vec<Vec<f64>> = (0..m)
        .map(|r| {
            let mut row = vec![0.0; total];
            row[..sf.ncols].copy_from_slice(&sf.a[r]);
            if let Some(c) = art_col_of_row[r] {
                row[c] = 1.0;
            }
            row
        })
        .collect();
    let mut rhs = sf.b.clone();

    if n_art > 0 {
        let mut phase1_cost = vec![0.0; total];
        for c in sf.ncols..total {
            phase1_cost[c] = 1.0;
        }
        match run_simplex(&mut tab, &mut rhs, &mut basis, &phase1_cost, total, max_iter) {
            PivotOutcome::Optimal => {}
            PivotOutcome::Unbounded => unreachable!("phase 1 is bounded below by 0"),
            PivotOutcome::IterationLimit => return Err(LpError::IterationLimit(max_iter)),
        }
        let p1_obj: f64 = (0..m)
            .filter(|&r| basis[r] >= sf.ncols)
            .map(|r| rhs[r])
            .sum();
        if p1_obj > 1e-7 {
            return Ok(infeasible_solution(lp));
        }
        // Drive remaining zero-level artificials out of the basis.
        let mut drop_rows: Vec<usize> = Vec::new();
        for r in 0..m {
            if basis[r] >= sf.ncols {
                let mut pivot_col = None;
                for j in 0..sf.ncols {
                    if tab[r][j].abs() > PIVOT_TOL && !basis.contains(&j) {
                        pivot_col = Some(j);
                        break;
                    }
                }
                match pivot_col {
                    Some(j) => {
                        let piv = tab[r][j];
                        for v in tab[r].iter_mut() {
                            *v /= piv;
                        }
                        rhs[r] /= piv;
                        for r2 in 0..m {
                            if r2 == r {
                                continue;
                            }
                            let f = tab[r2][j];
                            if f != 0.0 {
                                for c in 0..total {
                                    tab[r2][c] -= f * tab[r][c];
                                }
                                rhs[r2] -= f * rhs[r];
                            }
                        }
                        basis[r] = j;
                    }
                    None => drop_rows.push(r), // redundant row
                }
            }
        }
        for &r in drop_rows.iter().rev() {
            tab.remove(r);
            rhs.remove(r);
            basis.remove(r);
            sf.a.remove(r);
            sf.b.remove(r);
            sf.row_kind.remove(r);
            sf.row_sign.remove(r);
        }
        m = tab.len();
    }

    // Phase 2 over the real columns only.
    let mut cost2 = vec![0.0; total];
    cost2[..sf.ncols].copy_from_slice(&sf.cost);
    match run_simplex(&mut tab, &mut rhs, &mut basis, &cost2, sf.ncols, max_iter) {
        PivotOutcome::Optimal => {}
        PivotOutcome::Unbounded => {
            return Ok(LpSolution {
                status: LpStatus::Unbounded,
                x: vec![0.0; n],
                duals_eq: vec![0.0; lp.a_eq.len()],
                duals_ub: vec![0.0; lp.a_ub.len()],
                reduced_lower: vec![0.0; n],
                reduced_upper: vec![0.0; n],
                objective: f64::NEG_INFINITY,
            })
        }
        PivotOutcome::IterationLimit => return Err(LpError::IterationLimit(max_iter)),
    }

    // Standardized primal values.
    let mut xs = vec![0.0; sf.ncols];
    for r in 0..m {
        if basis[r] < sf.ncols {
            xs[basis[r]] = rhs[r];
        }
    }
    let mut x = vec![0.0; n];
    for j in 0..n {
        x[j] = match sf.var_map[j] {
            VarMap::Shift { col, lower } => lower + xs[col],
            VarMap::Flip { col, upper } => upper - xs[col],
            VarMap::Split { pos, neg } => xs[pos] - xs[neg],
        };
    }
    let objective: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();

    // Duals from the final basis: solve B^T y = c_B over the original
    // standardized columns.
    let mut y = vec![0.0; m];
    if m > 0 {
        let mut bt = vec![vec![0.0; m]; m];
        let mut cb = vec![0.0; m];
        for (k, &bj) in basis.iter().enumerate() {
            debug_assert!(bj < sf.ncols, "artificial survived into phase 2");
            for r in 0..m {
                bt[k][r] = sf.a[r][bj];
            }
            cb[k] = cost2[bj];
        }
        y = solve_dense(bt, cb);
    }

    let mut duals_eq = vec![0.0; lp.a_eq.len()];
    let mut duals_ub = vec![0.0; lp.a_ub.len()];
    let mut reduced_lower = vec![0.0; n];
    let mut reduced_upper = vec![0.0; n];
    for r in 0..m {
        let d = y[r] * sf.row_sign[r]; // d(objective)/d(original rhs)
        match sf.row_kind[r] {
            RowKind::Eq(i) => duals_eq[i] = d,
            RowKind::Ub(i) => duals_ub[i] = (-d).max(0.0),
            RowKind::Bound(j) => reduced_upper[j] = (-d).max(0.0),
        }
    }
    for j in 0..n {
        match sf.var_map[j] {
            VarMap::Shift { col, .. } => {
                let mut rc = cost2[col];
                for r in 0..m {
                    rc -= y[r] * sf.a[r][col];
                }
                reduced_lower[j] = rc.max(0.0);
            }
            VarMap::Flip { col, .. } => {
                let mut rc = cost2[col];
                for r in 0..m {
                    rc -= y[r] * sf.a[r][col];
                }
                reduced_upper[j] = rc.max(0.0);
            }
            VarMap::Split { .. } => {}
        }
    }

    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        duals_eq,
        duals_ub,
        reduced_lower,
        reduced_upper,
        objective,
    })
}

fn infeasible_solution(lp: &LinearProgram) -> LpSolution {
    let n = lp.num_vars();
    LpSolution {
        status: LpStatus::Infeasible,
        x: vec![0.0; n],
        duals_eq: vec![0.0; lp.a_eq.len()],
        duals_ub: vec![0.0; lp.a_ub.len()],
        reduced_lower: vec![0.0; n],
        reduced_upper: vec![0.0; n],
        objective: f64::INFINITY,
    }
}
