//! Episode-level multi-agent market environment: observations, bid-price
//! construction with ratio constraints, stepping through T clearings, and
//! rewards/returns.

use crate::dcopf::{self, ClearingError, ClearingInput, ClearingResult};
use crate::grid_model::{DesignMode, NetworkCase};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reference capacity used to normalize design entries in observations, MW.
pub const DESIGN_REF_CAPACITY: f64 = 100.0;

/// Raw (unnormalized) local observation of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Total system demand for the upcoming step, MW.
    pub total_load: f64,
    /// The agent's applied bid at the previous step, $/MWh.
    pub own_prev_bid: f64,
    /// Episode design vector (one entry per candidate line).
    pub design: Vec<f64>,
}

impl Observation {
    pub fn dim(&self) -> usize {
        2 + self.design.len()
    }
}

/// Running per-episode extrema used to enforce the bid ratio limits.
#[derive(Debug, Clone, PartialEq)]
pub struct BidConstraintState {
    pub prev_bid: f64,
    pub episode_min: f64,
    pub episode_max: f64,
}

impl BidConstraintState {
    pub fn new(initial_bid: f64) -> Self {
        BidConstraintState {
            prev_bid: initial_bid,
            episode_min: initial_bid,
            episode_max: initial_bid,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observations: Vec<Observation>,
    /// Per-strategic-agent profit, $.
    pub rewards: Vec<f64>,
    pub clearing: ClearingResult,
    /// Applied bid per generator (strategic constrained, others truthful).
    pub applied_bids: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("design has {got} entries but the case has {want} candidate lines")]
    DesignDimension { got: usize, want: usize },
    #[error("{got} actions for {want} strategic agents")]
    ActionDimension { got: usize, want: usize },
    #[error("episode already finished (t = {0})")]
    EpisodeOver(usize),
    #[error("action {0} outside [0, 1] in strict mode")]
    ActionOutOfRange(f64),
    #[error(transparent)]
    Clearing(#[from] ClearingError),
    #[error("case error: {0}")]
    Case(#[from] crate::grid_model::CaseError),
}

/// Bid price from a normalized action: `cost * (alpha * action + 1)`.
/// Action 0 bids truthfully at marginal cost; action 1 bids at the cap.
pub fn bid_price(action: f64, marginal_cost: f64, alpha: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&action));
    marginal_cost * (alpha * action + 1.0)
}

/// Projects a proposed bid onto the feasible ratio interval: within
/// [0.9, 1.1] of the previous bid and keeping the episode max/min ratio at or
/// below 1.5. Returns the applied bid and the updated state.
pub fn constrain_bid(proposed: f64, state: &BidConstraintState) -> (f64, BidConstraintState) {
    let lo = (0.9 * state.prev_bid).max(state.episode_max / 1.5);
    let hi = (1.1 * state.prev_bid).min(1.5 * state.episode_min);
    // prev_bid itself is always inside both intervals, so lo <= hi
    assert!(
        lo <= hi + 1e-9,
        "empty feasible bid interval: [{lo}, {hi}] from {state:?}"
    );
    let applied = proposed.clamp(lo, hi);
    (
        applied,
        BidConstraintState {
            prev_bid: applied,
            episode_min: state.episode_min.min(applied),
            episode_max: state.episode_max.max(applied),
        },
    )
}

/// Discounted return `sum_t gamma^t r(t)` with t starting at 0.
pub fn episode_return(rewards: &[f64], gamma: f64) -> f64 {
    assert!(gamma > 0.0 && gamma < 1.0, "gamma must be in (0, 1)");
    let mut g = 0.0;
    let mut w = 1.0;
    for r in rewards {
        g += w * r;
        w *= gamma;
    }
    g
}

/// Design-policy return: `-(w_anu * sum_t C_oper(t) + C_exp)`.
pub fn total_return(step_costs: &[f64], w_anu: f64, expansion_cost: f64) -> f64 {
    assert!(w_anu > 0.0, "annualization factor must be positive");
    -(w_anu * step_costs.iter().sum::<f64>() + expansion_cost)
}

pub struct MarketEnv {
    case: NetworkCase,
    mode: DesignMode,
    fixed_increment: f64,
    shed_penalty: Option<f64>,
    /// Reject out-of-range actions instead of clamping.
    pub strict_actions: bool,
    strategic: Vec<usize>,
    peak_load: f64,
    // episode state
    t: usize,
    design: Vec<f64>,
    capacities: Vec<f64>,
    constraints: Vec<BidConstraintState>,
    started: bool,
    pub clamp_warnings: u64,
}

impl MarketEnv {
    pub fn new(
        case: NetworkCase,
        mode: DesignMode,
        fixed_increment: f64,
        shed_penalty: Option<f64>,
    ) -> Self {
        let strategic = case.strategic_generators();
        let peak_load = case.peak_total_demand();
        MarketEnv {
            case,
            mode,
            fixed_increment,
            shed_penalty,
            strict_actions: false,
            strategic,
            peak_load,
            t: 0,
            design: Vec::new(),
            capacities: Vec::new(),
            constraints: Vec::new(),
            started: false,
            clamp_warnings: 0,
        }
    }

    pub fn case(&self) -> &NetworkCase {
        &self.case
    }

    pub fn num_agents(&self) -> usize {
        self.strategic.len()
    }

    pub fn horizon(&self) -> usize {
        self.case.profile.horizon()
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn strategic_indices(&self) -> &[usize] {
        &self.strategic
    }

    pub fn obs_dim(&self) -> usize {
        2 + self.case.candidate_lines().len()
    }

    /// Normalized feature vector for the actor/critic networks: load scaled
    /// by the peak total load, bid by the agent's cap, design entries by a
    /// fixed reference capacity.
    pub fn obs_vector(&self, agent: usize, obs: &Observation) -> Vec<f64> {
        let gen = &self.case.generators[self.strategic[agent]];
        let cap = gen.marginal_cost * (1.0 + gen.alpha);
        let mut v = Vec::with_capacity(obs.dim());
        v.push(obs.total_load / self.peak_load);
        v.push(obs.own_prev_bid / cap);
        for d in &obs.design {
            v.push(d / DESIGN_REF_CAPACITY);
        }
        v
    }

    /// Starts an episode under `design` with truthful initial bids.
    pub fn reset_default(&mut self, design: &[f64]) -> Result<Vec<Observation>, EnvError> {
        let initial: Vec<f64> = self
            .strategic
            .iter()
            .map(|&i| self.case.generators[i].marginal_cost)
            .collect();
        self.reset(design, &initial)
    }

    pub fn reset(
        &mut self,
        design: &[f64],
        initial_bids: &[f64],
    ) -> Result<Vec<Observation>, EnvError> {
        let want = self.case.candidate_lines().len();
        if design.len() != want {
            return Err(EnvError::DesignDimension { got: design.len(), want });
        }
        if initial_bids.len() != self.strategic.len() {
            return Err(EnvError::ActionDimension {
                got: initial_bids.len(),
                want: self.strategic.len(),
            });
        }
        self.capacities =
            self.case
                .effective_capacities(design, self.mode, self.fixed_increment)?;
        self.design = design.to_vec();
        self.constraints = initial_bids
            .iter()
            .map(|&b| BidConstraintState::new(b))
            .collect();
        self.t = 0;
        self.started = true;
        Ok(self.observations())
    }

    fn observations(&self) -> Vec<Observation> {
        let t = self.t.min(self.horizon() - 1);
        let total_load = self.case.total_demand_at(t);
        self.constraints
            .iter()
            .map(|c| Observation {
                total_load,
                own_prev_bid: c.prev_bid,
                design: self.design.clone(),
            })
            .collect()
    }

    pub fn done(&self) -> bool {
        self.t >= self.horizon()
    }

    pub fn step(&mut self, actions: &[f64]) -> Result<StepOutcome, EnvError> {
        assert!(self.started, "reset must be called before step");
        if self.done() {
            return Err(EnvError::EpisodeOver(self.t));
        }
        if actions.len() != self.strategic.len() {
            return Err(EnvError::ActionDimension {
                got: actions.len(),
                want: self.strategic.len(),
            });
        }

        let mut bids: Vec<f64> = self
            .case
            .generators
            .iter()
            .map(|g| g.marginal_cost)
            .collect();
        for (k, (&gi, &raw)) in self.strategic.iter().zip(actions).enumerate() {
            let action = if (0.0..=1.0).contains(&raw) {
                raw
            } else if self.strict_actions {
                return Err(EnvError::ActionOutOfRange(raw));
            } else {
                self.clamp_warnings += 1;
                raw.clamp(0.0, 1.0)
            };
            let gen = &self.case.generators[gi];
            let proposed = bid_price(action, gen.marginal_cost, gen.alpha);
            let (applied, state) = constrain_bid(proposed, &self.constraints[k]);
            self.constraints[k] = state;
            bids[gi] = applied;
        }

        let input = ClearingInput {
            bids: bids.clone(),
            demands: self.case.demand_at(self.t),
            capacities: self.capacities.clone(),
            shed_penalty: self.shed_penalty,
        };
        let clearing = dcopf::clear_market(&self.case, &input)?;

        let rewards: Vec<f64> = self
            .strategic
            .iter()
            .map(|&gi| {
                (clearing.gen_price[gi] - self.case.generators[gi].marginal_cost)
                    * clearing.dispatch[gi]
            })
            .collect();

        self.t += 1;
        Ok(StepOutcome {
            observations: self.observations(),
            rewards,
            clearing,
            applied_bids: bids,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcopf::fixtures::{single_bus, two_bus};
    use crate::grid_model::{Bus, DemandProfile, Generator, Line};

    #[test]
    fn bid_price_examples() {
        assert_eq!(bid_price(0.0, 50.0, 1.0), 50.0);
        assert_eq!(bid_price(1.0, 50.0, 1.0), 100.0);
        assert!((bid_price(0.8, 55.0, 1.0) - 99.0).abs() < 1e-12);
    }

    #[test]
    fn constrain_bid_ratio_cap() {
        let st = BidConstraintState::new(50.0);
        let (b, st2) = constrain_bid(60.0, &st);
        assert!((b - 55.0).abs() < 1e-12);
        assert_eq!(st2.prev_bid, b);
        assert_eq!(st2.episode_max, b);
    }

    #[test]
    fn constrain_bid_interior() {
        let st = BidConstraintState::new(50.0);
        let (b, _) = constrain_bid(46.0, &st);
        assert_eq!(b, 46.0);
    }

    #[test]
    fn constrain_bid_episode_extrema_cap() {
        let st = BidConstraintState {
            prev_bid: 74.0,
            episode_min: 50.0,
            episode_max: 74.0,
        };
        let (b, _) = constrain_bid(80.0, &st);
        assert!((b - 75.0).abs() < 1e-12, "1.5 x episode_min binds, got {b}");
    }

    #[test]
    fn returns_arithmetic() {
        assert!((episode_return(&[100.0, 100.0], 0.99) - 199.0).abs() < 1e-12);
        assert_eq!(episode_return(&[0.0, 0.0, 0.0], 0.5), 0.0);
        assert!((episode_return(&[0.0, 0.0, 300.0], 0.99) - 294.03).abs() < 1e-9);

        let g = total_return(&[655_945.0], 182.5, 8.14e6);
        assert!((g - -(655_945.0 * 182.5 + 8.14e6)).abs() < 1e-6);
        assert!((g / 1e6 - -127.85).abs() < 0.01);
        assert_eq!(total_return(&[], 1.0, 0.0), 0.0);
        assert_eq!(total_return(&[1000.0], 1.0, 0.0), -1000.0);
    }

    fn monopoly_env() -> MarketEnv {
        MarketEnv::new(single_bus(), DesignMode::Continuous, 0.0, None)
    }

    #[test]
    fn reset_initializes_truthful() {
        let mut env = monopoly_env();
        let obs = env.reset_default(&[]).unwrap();
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].total_load, 50.0);
        assert_eq!(obs[0].own_prev_bid, 50.0);
    }

    #[test]
    fn reset_rejects_wrong_design_length() {
        let mut env = monopoly_env();
        assert!(matches!(
            env.reset_default(&[1.0]),
            Err(EnvError::DesignDimension { .. })
        ));
    }

    #[test]
    fn design_normalization_in_observation() {
        // single candidate line case
        let case = crate::grid_model::NetworkCase {
            slack_bus: 0,
            buses: vec![
                Bus { id: 0, demand_base: 0.0 },
                Bus { id: 1, demand_base: 50.0 },
            ],
            lines: vec![
                Line {
                    from_bus: 0,
                    to_bus: 1,
                    susceptance: 10.0,
                    base_capacity: 10.0,
                    expansion_cost: 1e5,
                    candidate: true,
                    name: None,
                },
            ],
            generators: vec![
                Generator { bus: 0, p_max: 100.0, marginal_cost: 10.0, strategic: false, alpha: 1.0 },
                Generator { bus: 1, p_max: 100.0, marginal_cost: 50.0, strategic: true, alpha: 1.0 },
            ],
            profile: DemandProfile { shape: vec![1.0] },
        };
        let mut env = MarketEnv::new(case, DesignMode::Continuous, 0.0, None);
        let obs = env.reset_default(&[76.1]).unwrap();
        let v = env.obs_vector(0, &obs[0]);
        assert_eq!(v.len(), 3);
        assert!((v[2] - 0.761).abs() < 1e-12);
        // prev bid 50 over cap 100
        assert!((v[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn monopoly_step_rewards() {
        let mut env = monopoly_env();
        env.reset_default(&[]).unwrap();
        // a = 1 proposes 100, the 1.1-ratio constraint clips to 55
        let out = env.step(&[1.0]).unwrap();
        assert!((out.applied_bids[0] - 55.0).abs() < 1e-9);
        assert!((out.rewards[0] - 250.0).abs() < 1e-6);

        let mut env2 = monopoly_env();
        env2.reset_default(&[]).unwrap();
        let out2 = env2.step(&[0.0]).unwrap();
        assert!((out2.applied_bids[0] - 50.0).abs() < 1e-9);
        assert!(out2.rewards[0].abs() < 1e-9);
    }

    #[test]
    fn truthful_duopoly_earns_zero() {
        let mut case = two_bus(30.0);
        case.generators[0].strategic = true;
        case.generators[1].strategic = true;
        let mut env = MarketEnv::new(case, DesignMode::Continuous, 0.0, None);
        env.reset_default(&[]).unwrap();
        let out = env.step(&[0.0, 0.0]).unwrap();
        assert!(out.rewards[0].abs() < 1e-9);
        assert!(out.rewards[1].abs() < 1e-9);
    }

    #[test]
    fn bid_series_respects_ratio_invariants() {
        // drive hard up then hard down; the logged bids must obey the limits
        let case = single_bus();
        let mut profile_case = case.clone();
        profile_case.profile = DemandProfile { shape: vec![1.0; 12] };
        let mut env = MarketEnv::new(profile_case, DesignMode::Continuous, 0.0, None);
        env.reset_default(&[]).unwrap();
        let mut bids = Vec::new();
        let actions = [1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0];
        for &a in &actions {
            let out = env.step(&[a]).unwrap();
            bids.push(out.applied_bids[0]);
        }
        let max = bids.iter().cloned().fold(f64::MIN, f64::max);
        let min = bids.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max / min <= 1.5 + 1e-9);
        let mut prev = 50.0;
        for &b in &bids {
            let ratio = b / prev;
            assert!((0.9 - 1e-9..=1.1 + 1e-9).contains(&ratio), "ratio {ratio}");
            prev = b;
        }
    }

    #[test]
    fn episode_is_deterministic() {
        let run = || {
            let mut env = monopoly_env();
            env.reset_default(&[]).unwrap();
            let out = env.step(&[0.63]).unwrap();
            (out.applied_bids, out.rewards, out.clearing.lmp)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn design_constant_within_episode() {
        let case = two_bus(30.0);
        let mut case = case;
        case.lines[0].candidate = true;
        case.generators[1].strategic = true;
        case.profile = DemandProfile { shape: vec![1.0, 1.0, 1.0] };
        let mut env = MarketEnv::new(case, DesignMode::Continuous, 0.0, None);
        let obs0 = env.reset_default(&[12.5]).unwrap();
        assert_eq!(obs0[0].design, vec![12.5]);
        for _ in 0..3 {
            let out = env.step(&[0.2]).unwrap();
            for o in &out.observations {
                assert_eq!(o.design, vec![12.5]);
            }
        }
        assert!(env.done());
        assert!(matches!(env.step(&[0.2]), Err(EnvError::EpisodeOver(_))));
    }
}
