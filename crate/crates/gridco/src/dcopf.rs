//! DC-OPF market clearing: builds the dispatch LP, solves it, and extracts
//! dispatch, flows, nodal prices (duals of the balance rows), and the
//! operational cost (total payment to generators at their bus LMP).

use crate::grid_model::NetworkCase;
use crate::lp::{self, LinearProgram, LpError, LpStatus};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone)]
pub struct ClearingInput {
    /// Per-generator bid price, $/MWh.
    pub bids: Vec<f64>,
    /// Per-bus demand, MW.
    pub demands: Vec<f64>,
    /// Per-line effective capacity, MW.
    pub capacities: Vec<f64>,
    /// Value of lost load; `None` disables shedding (clearing may then be
    /// infeasible).
    pub shed_penalty: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClearingResult {
    /// Cleared output per generator, MW.
    pub dispatch: Vec<f64>,
    /// Bus voltage angles, rad (slack = 0).
    pub angles: Vec<f64>,
    /// Flow per line in the from->to direction, MW.
    pub flows: Vec<f64>,
    /// Nodal price per bus, $/MWh.
    pub lmp: Vec<f64>,
    /// LMP at each generator's bus, $/MWh.
    pub gen_price: Vec<f64>,
    /// Sum of gen_price * dispatch, $ for the step.
    pub operational_cost: f64,
    /// Unserved demand per bus, MW.
    pub shed: Vec<f64>,
    /// Payment to the shed slack at the penalty price, $ for the step.
    pub shed_cost: f64,
    /// As-bid dispatch cost plus shed penalty, $ for the step (the LP
    /// objective value).
    pub bid_cost: f64,
    /// Shadow price of each line's capacity, $/MW per step; positive only
    /// when the line congests. Relaxing capacity of line l by dc lowers
    /// `bid_cost` by `line_congestion[l] * dc` to first order.
    pub line_congestion: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum ClearingError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("market clearing infeasible (capacity inadequate with shedding disabled)")]
    Infeasible,
    #[error("market clearing LP unbounded (malformed input)")]
    Unbounded,
    #[error("LP solver failure: {0}")]
    Solver(#[from] LpError),
}

fn check_dims(case: &NetworkCase, input: &ClearingInput) -> Result<(), ClearingError> {
    if input.bids.len() != case.generators.len() {
        return Err(ClearingError::Dimension(format!(
            "{} bids for {} generators",
            input.bids.len(),
            case.generators.len()
        )));
    }
    if input.demands.len() != case.buses.len() {
        return Err(ClearingError::Dimension(format!(
            "{} demands for {} buses",
            input.demands.len(),
            case.buses.len()
        )));
    }
    if input.capacities.len() != case.lines.len() {
        return Err(ClearingError::Dimension(format!(
            "{} capacities for {} lines",
            input.capacities.len(),
            case.lines.len()
        )));
    }
    Ok(())
}

/// Variable layout of the clearing LP: generators, then angles for every bus
/// except the slack, then (optionally) one shed variable per bus.
pub fn build_lp(case: &NetworkCase, input: &ClearingInput) -> Result<LinearProgram, ClearingError> {
    check_dims(case, input)?;
    let nb = case.buses.len();
    let ng = case.generators.len();
    let nl = case.lines.len();
    let with_shed = input.shed_penalty.is_some();

    // angle column for bus n (slack eliminated)
    let theta_col = |n: usize| -> Option<usize> {
        if n == case.slack_bus {
            None
        } else if n < case.slack_bus {
            Some(ng + n)
        } else {
            Some(ng + n - 1)
        }
    };
    let n_theta = nb - 1;
    let n_shed = if with_shed { nb } else { 0 };
    let n_vars = ng + n_theta + n_shed;

    let mut objective = vec![0.0; n_vars];
    for (i, &bid) in input.bids.iter().enumerate() {
        objective[i] = bid;
    }
    if let Some(penalty) = input.shed_penalty {
        for n in 0..nb {
            objective[ng + n_theta + n] = penalty;
        }
    }

    // One balance row per bus: sum(P_i at n) + shed_n - sum(B (theta_n - theta_m)) = D_n
    let mut a_eq = vec![vec![0.0; n_vars]; nb];
    let b_eq = input.demands.clone();
    for (i, gen) in case.generators.iter().enumerate() {
        a_eq[gen.bus][i] += 1.0;
    }
    if with_shed {
        for n in 0..nb {
            a_eq[n][ng + n_theta + n] += 1.0;
        }
    }
    for line in &case.lines {
        let b = line.susceptance;
        let (f, t) = (line.from_bus, line.to_bus);
        // leaving f: B (theta_f - theta_t); leaving t: B (theta_t - theta_f)
        if let Some(c) = theta_col(f) {
            a_eq[f][c] -= b;
            a_eq[t][c] += b;
        }
        if let Some(c) = theta_col(t) {
            a_eq[f][c] += b;
            a_eq[t][c] -= b;
        }
    }

    // Two rows per line: |B (theta_f - theta_t)| <= cap
    let mut a_ub = vec![vec![0.0; n_vars]; 2 * nl];
    let mut b_ub = vec![0.0; 2 * nl];
    for (l, line) in case.lines.iter().enumerate() {
        let b = line.susceptance;
        let (f, t) = (line.from_bus, line.to_bus);
        for (row, sign) in [(2 * l, 1.0), (2 * l + 1, -1.0)] {
            if let Some(c) = theta_col(f) {
                a_ub[row][c] += sign * b;
            }
            if let Some(c) = theta_col(t) {
                a_ub[row][c] -= sign * b;
            }
            b_ub[row] = input.capacities[l];
        }
    }

    let mut lower = vec![0.0; n_vars];
    let mut upper = vec![0.0; n_vars];
    for (i, gen) in case.generators.iter().enumerate() {
        lower[i] = 0.0;
        upper[i] = gen.p_max;
    }
    for c in ng..ng + n_theta {
        lower[c] = f64::NEG_INFINITY;
        upper[c] = f64::INFINITY;
    }
    if with_shed {
        for n in 0..nb {
            lower[ng + n_theta + n] = 0.0;
            upper[ng + n_theta + n] = input.demands[n];
        }
    }

    Ok(LinearProgram { objective, a_eq, b_eq, a_ub, b_ub, lower, upper })
}

pub fn clear_market(
    case: &NetworkCase,
    input: &ClearingInput,
) -> Result<ClearingResult, ClearingError> {
    let lp = build_lp(case, input)?;
    let sol = lp::solve(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(ClearingError::Infeasible),
        LpStatus::Unbounded => return Err(ClearingError::Unbounded),
    }

    let nb = case.buses.len();
    let ng = case.generators.len();
    let with_shed = input.shed_penalty.is_some();
    let n_theta = nb - 1;

    let dispatch: Vec<f64> = sol.x[..ng].to_vec();
    let mut angles = vec![0.0; nb];
    {
        let mut c = ng;
        for n in 0..nb {
            if n != case.slack_bus {
                angles[n] = sol.x[c];
                c += 1;
            }
        }
    }
    let flows: Vec<f64> = case
        .lines
        .iter()
        .map(|l| l.susceptance * (angles[l.from_bus] - angles[l.to_bus]))
        .collect();
    let lmp: Vec<f64> = sol.duals_eq.clone();
    let gen_price: Vec<f64> = case.generators.iter().map(|g| lmp[g.bus]).collect();
    let operational_cost: f64 = gen_price.iter().zip(&dispatch).map(|(p, d)| p * d).sum();
    let shed: Vec<f64> = if with_shed {
        sol.x[ng + n_theta..].to_vec()
    } else {
        vec![0.0; nb]
    };
    let shed_cost = input.shed_penalty.unwrap_or(0.0) * shed.iter().sum::<f64>();
    let bid_cost: f64 =
        input.bids.iter().zip(&dispatch).map(|(b, d)| b * d).sum::<f64>() + shed_cost;
    let line_congestion: Vec<f64> = (0..case.lines.len())
        .map(|l| sol.duals_ub[2 * l] + sol.duals_ub[2 * l + 1])
        .collect();

    Ok(ClearingResult {
        dispatch,
        angles,
        flows,
        lmp,
        gen_price,
        operational_cost,
        shed,
        shed_cost,
        bid_cost,
        line_congestion,
    })
}

/// Total payment to generators for the step (shed payments excluded).
pub fn operational_cost(result: &ClearingResult) -> f64 {
    result
        .gen_price
        .iter()
        .zip(&result.dispatch)
        .map(|(p, d)| p * d)
        .sum()
}
