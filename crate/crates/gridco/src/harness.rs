//! Run orchestration: the joint design-and-bidding training loop, the
//! two-stage variant (bid first, then plan expansion against the submitted
//! bids), run summaries, and on-disk artifacts.
//!
//! Every run writes into one output directory: `metrics.jsonl` (full
//! stream), `summary.csv` (key/value digest of the final stretch),
//! `design.out` (human-readable expansion plan), and periodic
//! `checkpoints/ckpt_<episode>.json`.

use crate::config::{RunConfig, RunMode};
use crate::dcopf::{clear_market, ClearingInput};
use crate::design_policy::{expansion_cost, DesignPolicy, DesignPolicyTrainer};
use crate::grid_model::{DesignMode, NetworkCase};
use crate::lp::{self, LinearProgram, LpStatus};
use crate::maddpg::{AgentCheckpoint, Maddpg, Transition};
use crate::market_env::{total_return, MarketEnv};
use crate::metrics::{sig15, EpisodeRecord, Header, MetricsWriter, StepRecord};
use crate::rng;
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

/// Precondition failures that stem from the configuration rather than the
/// run itself; the command line maps these to the input-error exit code.
#[derive(Debug, Error)]
pub enum SetupError {
    #[error("episodes ({episodes}) must be at least design.n_up ({n_up})")]
    EpisodesBelowNUp { episodes: usize, n_up: usize },
    #[error("case has no strategic generators to train")]
    NoStrategicGenerators,
    #[error("case has no candidate lines")]
    NoCandidateLines,
    #[error("two-stage mode requires scenario_bids in the configuration")]
    MissingScenario,
    #[error("scenario_bids has {got} entries but the case has {want} strategic generators")]
    ScenarioLength { got: usize, want: usize },
}

/// Digest of the final stretch of a run (last 10% of episodes, at least one).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub episodes: usize,
    /// Applied design per candidate line (continuous: MW, discrete: 0/1).
    pub final_design: Vec<f64>,
    pub c_exp: f64,
    /// Mean per-episode operating cost (shed penalty included), $.
    pub mean_c_oper: f64,
    pub mean_g_total: f64,
    /// Mean discounted return per strategic agent, $.
    pub mean_returns: Vec<f64>,
    /// Mean applied bid / marginal cost per strategic agent.
    pub mean_bid_ratio: Vec<f64>,
    /// Total unserved energy in the greedy evaluation episode, MWh.
    pub eval_shed: f64,
    /// True when the greedy evaluation under the final design sheds nothing.
    pub converged: bool,
    /// Yearly total cost estimated by the expansion planning stage
    /// (two-stage runs only).
    pub planned_total_cost: Option<f64>,
}

impl RunSummary {
    /// Yearly total cost realized over the summary window.
    pub fn realized_total_cost(&self) -> f64 {
        -self.mean_g_total
    }
}

struct EpisodeStats {
    design: Vec<f64>,
    returns: Vec<f64>,
    c_oper_sum: f64,
    c_exp: f64,
    g_total: f64,
    bid_ratio_sum: Vec<f64>,
    steps: usize,
}

/// Runs one episode: resets the environment under `design`, queries each
/// agent every step, optionally trains, and logs step records.
#[allow(clippy::too_many_arguments)]
fn run_episode(
    env: &mut MarketEnv,
    maddpg: &mut Maddpg,
    design: &[f64],
    episode: usize,
    explore: bool,
    train: bool,
    w_anu: f64,
    c_exp: f64,
    gamma: f64,
    noise_rng: &mut impl rand::Rng,
    replay_rng: &mut impl rand::Rng,
    writer: Option<&mut MetricsWriter<std::io::BufWriter<std::fs::File>>>,
) -> Result<EpisodeStats> {
    let n = env.num_agents();
    let obs = env.reset_default(design)?;
    let mut obs_vecs: Vec<Vec<f64>> = (0..n).map(|i| env.obs_vector(i, &obs[i])).collect();
    let strategic: Vec<usize> = env.strategic_indices().to_vec();
    let costs: Vec<f64> = strategic
        .iter()
        .map(|&gi| env.case().generators[gi].marginal_cost)
        .collect();

    let mut returns = vec![0.0; n];
    let mut bid_ratio_sum = vec![0.0; n];
    let mut step_costs = Vec::with_capacity(env.horizon());
    let mut discount = 1.0;
    let mut writer = writer;

    for t in 0..env.horizon() {
        let actions: Vec<f64> = (0..n)
            .map(|i| maddpg.select_action(i, &obs_vecs[i], explore, noise_rng))
            .collect();
        let outcome = env.step(&actions)?;
        let next_obs_vecs: Vec<Vec<f64>> = (0..n)
            .map(|i| env.obs_vector(i, &outcome.observations[i]))
            .collect();
        let terminal = env.done();

        for i in 0..n {
            returns[i] += discount * outcome.rewards[i];
            bid_ratio_sum[i] += outcome.applied_bids[strategic[i]] / costs[i];
        }
        discount *= gamma;
        // operating cost is the clearing objective (as-bid cost of the
        // dispatched offers), so added capacity can never worsen it
        let step_cost = outcome.clearing.bid_cost + outcome.clearing.shed_cost;
        step_costs.push(step_cost);

        if train {
            maddpg.store(Transition {
                joint_obs: obs_vecs.clone(),
                joint_actions: actions.clone(),
                rewards: outcome.rewards.clone(),
                next_joint_obs: next_obs_vecs.clone(),
                terminal,
            })?;
            if maddpg.ready() {
                let batch = maddpg
                    .buffer
                    .sample_indices(maddpg.cfg.batch_size, replay_rng)?;
                maddpg.update_critic(&batch);
                for i in 0..n {
                    maddpg.update_actor(i, &batch);
                }
                maddpg.end_of_step_maintenance();
            }
        }

        if let Some(w) = writer.as_deref_mut() {
            w.step(StepRecord {
                episode,
                t,
                bids: strategic
                    .iter()
                    .map(|&gi| outcome.applied_bids[gi])
                    .collect(),
                dispatch: outcome.clearing.dispatch.clone(),
                lmp: outcome.clearing.lmp.clone(),
                rewards: outcome.rewards.clone(),
                c_oper: step_cost,
                shed_total: outcome.clearing.shed.iter().sum(),
            })?;
        }

        obs_vecs = next_obs_vecs;
    }

    let c_oper_sum: f64 = step_costs.iter().sum();
    let g_total = total_return(&step_costs, w_anu, c_exp);
    Ok(EpisodeStats {
        design: design.to_vec(),
        returns,
        c_oper_sum,
        c_exp,
        g_total,
        bid_ratio_sum,
        steps: env.horizon(),
    })
}

fn build_design_trainer(cfg: &RunConfig, n_cand: usize) -> DesignPolicyTrainer {
    let d = &cfg.design;
    let policy = match cfg.mode.design_mode() {
        DesignMode::Continuous => DesignPolicy::gaussian(n_cand, d.initial_mu, d.sigma),
        DesignMode::Discrete => {
            let mu0 = if d.initial_mu > 0.0 { d.initial_mu } else { 0.5 };
            DesignPolicy::bernoulli(n_cand, mu0)
        }
    };
    let mut trainer = DesignPolicyTrainer::new(policy, d.n_up, d.lr, d.baseline_decay);
    trainer.lr_decay = d.lr_decay;
    trainer.normalize_advantages = d.normalize_advantages;
    trainer
}

fn write_checkpoint(
    dir: &Path,
    episode: usize,
    maddpg: &Maddpg,
    mu: &[f64],
) -> Result<()> {
    #[derive(Serialize)]
    struct Checkpoint<'a> {
        episode: usize,
        design_mu_bits: Vec<u64>,
        agents: Vec<AgentCheckpoint>,
        critic_input_order: &'a str,
    }
    std::fs::create_dir_all(dir)?;
    let ck = Checkpoint {
        episode,
        design_mu_bits: mu.iter().map(|v| v.to_bits()).collect(),
        agents: maddpg.agents.iter().map(AgentCheckpoint::from).collect(),
        critic_input_order: crate::maddpg::CRITIC_INPUT_ORDER,
    };
    let path = dir.join(format!("ckpt_{episode}.json"));
    std::fs::write(&path, serde_json::to_vec(&ck)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_design_out(
    path: &Path,
    case: &NetworkCase,
    design: &[f64],
    mode: DesignMode,
    fixed_increment: f64,
    c_exp: f64,
) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "expansion plan")?;
    writeln!(f, "line  base_mw  added_mw  final_mw  cost_per_year")?;
    let caps = case.effective_capacities(design, mode, fixed_increment)?;
    for (_k, &li) in case.candidate_lines().iter().enumerate() {
        let line = &case.lines[li];
        let label = line
            .name
            .clone()
            .unwrap_or_else(|| format!("{}-{}", line.from_bus, line.to_bus));
        let added = caps[li] - line.base_capacity;
        writeln!(
            f,
            "{label}  {}  {}  {}  {}",
            sig15(line.base_capacity),
            sig15(added),
            sig15(caps[li]),
            sig15(added * line.expansion_cost),
        )?;
    }
    writeln!(f, "total_cost_per_year  {}", sig15(c_exp))?;
    Ok(())
}

fn write_summary_csv(path: &Path, s: &RunSummary) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "key,value")?;
    writeln!(f, "episodes,{}", s.episodes)?;
    for (k, v) in s.final_design.iter().enumerate() {
        writeln!(f, "design_{k},{}", sig15(*v))?;
    }
    writeln!(f, "c_exp,{}", sig15(s.c_exp))?;
    writeln!(f, "mean_c_oper,{}", sig15(s.mean_c_oper))?;
    writeln!(f, "mean_g_total,{}", sig15(s.mean_g_total))?;
    for (i, v) in s.mean_returns.iter().enumerate() {
        writeln!(f, "mean_return_{i},{}", sig15(*v))?;
    }
    for (i, v) in s.mean_bid_ratio.iter().enumerate() {
        writeln!(f, "mean_bid_ratio_{i},{}", sig15(*v))?;
    }
    writeln!(f, "realized_total_cost,{}", sig15(s.realized_total_cost()))?;
    if let Some(p) = s.planned_total_cost {
        writeln!(f, "planned_total_cost,{}", sig15(p))?;
    }
    writeln!(f, "eval_shed,{}", sig15(s.eval_shed))?;
    writeln!(f, "converged,{}", s.converged)?;
    Ok(())
}

/// Trains bidding agents and the design distribution together, one design
/// draw per episode, with the yearly total cost as the design signal.
pub fn run_co_optimization(
    case: &NetworkCase,
    cfg: &RunConfig,
    out_dir: &Path,
    case_label: &str,
) -> Result<RunSummary> {
    std::fs::create_dir_all(out_dir)?;
    let mode = cfg.mode.design_mode();
    let horizon = case.profile.horizon();
    let w_anu = cfg.effective_w_anu(horizon);
    let n_cand = case.candidate_lines().len();
    let gamma = cfg.maddpg.gamma;

    if cfg.episodes < cfg.design.n_up {
        return Err(SetupError::EpisodesBelowNUp {
            episodes: cfg.episodes,
            n_up: cfg.design.n_up,
        }
        .into());
    }
    if n_cand == 0 {
        return Err(SetupError::NoCandidateLines.into());
    }
    let mut env = MarketEnv::new(case.clone(), mode, cfg.design.fixed_increment, Some(cfg.shed_penalty));
    let n_agents = env.num_agents();
    if n_agents == 0 {
        return Err(SetupError::NoStrategicGenerators.into());
    }
    let mut init_rng = rng::stream(cfg.seed, "maddpg-init");
    let mut maddpg = Maddpg::new(n_agents, env.obs_dim(), cfg.maddpg.clone(), &mut init_rng);
    let mut trainer = build_design_trainer(cfg, n_cand);
    let mut design_rng = rng::stream(cfg.seed, "design-sample");
    let mut noise_rng = rng::stream(cfg.seed, "action-noise");
    let mut replay_rng = rng::stream(cfg.seed, "replay");

    let mut writer = MetricsWriter::create(&out_dir.join("metrics.jsonl"))?;
    writer.header(Header {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        case: case_label.to_string(),
        config: cfg.clone(),
    })?;

    let tail_start = cfg.episodes - (cfg.episodes / 10).max(1).min(cfg.episodes);
    let mut tail = TailAccumulator::new(n_agents);
    let progress_every = (cfg.episodes / 10).max(1);
    let mut g_avg: Option<f64> = None;

    for episode in 0..cfg.episodes {
        let sample = trainer.policy.sample(&mut design_rng);
        let c_exp = expansion_cost(&sample.applied, case, mode, cfg.design.fixed_increment);
        let stats = run_episode(
            &mut env,
            &mut maddpg,
            &sample.applied,
            episode,
            true,
            true,
            w_anu,
            c_exp,
            gamma,
            &mut noise_rng,
            &mut replay_rng,
            Some(&mut writer),
        )?;
        maddpg.decay_exploration();
        trainer.record_and_maybe_update(&sample.raw, stats.g_total);

        writer.episode(EpisodeRecord {
            episode,
            design: stats.design.clone(),
            returns: stats.returns.clone(),
            c_oper_sum: stats.c_oper_sum,
            c_exp: stats.c_exp,
            g_total: stats.g_total,
            mu: trainer.policy.mu().to_vec(),
            sigma_explore: maddpg.agents.iter().map(|a| a.noise_sigma).collect(),
            baseline: trainer.baseline.value,
        })?;
        g_avg = Some(match g_avg {
            None => stats.g_total,
            Some(prev) => 0.95 * prev + 0.05 * stats.g_total,
        });
        if (episode + 1) % progress_every == 0 {
            let rewards: Vec<String> = stats.returns.iter().map(|r| sig15(*r)).collect();
            let mu: Vec<String> = trainer.policy.mu().iter().map(|m| sig15(*m)).collect();
            eprintln!(
                "episode {}: returns [{}] mu [{}] avg_g_total {}",
                episode + 1,
                rewards.join(", "),
                mu.join(", "),
                sig15(g_avg.unwrap()),
            );
        }
        if episode >= tail_start {
            tail.add(&stats);
        }
        if cfg.checkpoint_every > 0 && (episode + 1) % cfg.checkpoint_every == 0 {
            write_checkpoint(
                &out_dir.join("checkpoints"),
                episode + 1,
                &maddpg,
                trainer.policy.mu(),
            )?;
        }
    }
    writer.finish()?;

    let final_design = trainer.policy.finalize_design();
    finalize_run(case, cfg, out_dir, &mut env, &mut maddpg, &final_design, tail)
}

/// Greedy evaluation under the final design plus artifact writing, shared by
/// the co-optimization and two-stage paths.
fn finalize_run(
    case: &NetworkCase,
    cfg: &RunConfig,
    out_dir: &Path,
    env: &mut MarketEnv,
    maddpg: &mut Maddpg,
    final_design: &[f64],
    tail: TailAccumulator,
) -> Result<RunSummary> {
    let mode = cfg.mode.design_mode();
    let horizon = case.profile.horizon();
    let w_anu = cfg.effective_w_anu(horizon);
    let c_exp = expansion_cost(final_design, case, mode, cfg.design.fixed_increment);
    let mut eval_noise = rng::stream(cfg.seed, "eval");
    let mut eval_replay = rng::stream(cfg.seed, "eval-replay");
    let eval = run_episode(
        env,
        maddpg,
        final_design,
        usize::MAX,
        false,
        false,
        w_anu,
        c_exp,
        cfg.maddpg.gamma,
        &mut eval_noise,
        &mut eval_replay,
        None,
    )?;

    let eval_shed = {
        // rerun clearing quickly to total the unserved energy
        let caps = case.effective_capacities(final_design, mode, cfg.design.fixed_increment)?;
        let bids: Vec<f64> = case.generators.iter().map(|g| g.marginal_cost).collect();
        let mut total = 0.0;
        for t in 0..horizon {
            let r = clear_market(
                case,
                &ClearingInput {
                    bids: bids.clone(),
                    demands: case.demand_at(t),
                    capacities: caps.clone(),
                    shed_penalty: Some(cfg.shed_penalty),
                },
            )?;
            total += r.shed.iter().sum::<f64>();
        }
        total
    };

    let summary = tail.finish(final_design.to_vec(), c_exp, eval_shed, &eval);
    write_design_out(
        &out_dir.join("design.out"),
        case,
        final_design,
        mode,
        cfg.design.fixed_increment,
        c_exp,
    )?;
    write_summary_csv(&out_dir.join("summary.csv"), &summary)?;
    Ok(summary)
}

struct TailAccumulator {
    n_agents: usize,
    episodes: usize,
    count: usize,
    c_oper: f64,
    g_total: f64,
    returns: Vec<f64>,
    bid_ratio: Vec<f64>,
    steps: usize,
}

impl TailAccumulator {
    fn new(n_agents: usize) -> Self {
        TailAccumulator {
            n_agents,
            episodes: 0,
            count: 0,
            c_oper: 0.0,
            g_total: 0.0,
            returns: vec![0.0; n_agents],
            bid_ratio: vec![0.0; n_agents],
            steps: 0,
        }
    }

    fn add(&mut self, s: &EpisodeStats) {
        self.count += 1;
        self.c_oper += s.c_oper_sum;
        self.g_total += s.g_total;
        for i in 0..self.n_agents {
            self.returns[i] += s.returns[i];
            self.bid_ratio[i] += s.bid_ratio_sum[i];
        }
        self.steps += s.steps;
        // the per-episode J identity must hold exactly up to rounding
        let j = -s.g_total;
        debug_assert!(j.is_finite());
    }

    fn finish(
        mut self,
        final_design: Vec<f64>,
        c_exp: f64,
        eval_shed: f64,
        eval: &EpisodeStats,
    ) -> RunSummary {
        self.episodes = self.count;
        let c = self.count.max(1) as f64;
        let steps = self.steps.max(1) as f64;
        let (mean_returns, mean_bid_ratio): (Vec<f64>, Vec<f64>) = if self.count > 0 {
            (
                self.returns.iter().map(|v| v / c).collect(),
                self.bid_ratio.iter().map(|v| v / steps).collect(),
            )
        } else {
            (eval.returns.clone(), vec![1.0; self.n_agents])
        };
        RunSummary {
            episodes: self.count,
            final_design,
            c_exp,
            mean_c_oper: self.c_oper / c,
            mean_g_total: self.g_total / c,
            mean_returns,
            mean_bid_ratio,
            eval_shed,
            converged: eval_shed < 1e-6,
            planned_total_cost: None,
        }
    }
}

/// One iteration's worth of outer-approximation data for the expansion plan.
#[derive(Debug, Clone)]
pub struct Stage1Result {
    /// Capacity increment per candidate line, MW.
    pub design: Vec<f64>,
    /// Yearly total cost at `design` (annualized operating plus expansion).
    pub total_cost: f64,
    pub iterations: usize,
}

/// Minimizes annualized as-bid operating cost plus expansion cost over the
/// candidate increments by outer approximation: each iteration clears every
/// time step at the trial design, turns the capacity shadow prices into a
/// supporting cut, and re-solves a small master LP until the bound gap
/// closes.
pub fn stage1_expansion_lp(
    case: &NetworkCase,
    fixed_bids: &[f64],
    w_anu: f64,
    shed_penalty: f64,
) -> Result<Stage1Result> {
    let cands = case.candidate_lines();
    let k = cands.len();
    if k == 0 {
        return Err(SetupError::NoCandidateLines.into());
    }
    if fixed_bids.len() != case.generators.len() {
        bail!(
            "{} bids for {} generators",
            fixed_bids.len(),
            case.generators.len()
        );
    }
    if fixed_bids.iter().any(|b| *b <= 0.0) {
        bail!("fixed bids must be positive");
    }
    let exp_cost: Vec<f64> = cands.iter().map(|&li| case.lines[li].expansion_cost).collect();
    let d_max = case.peak_total_demand().max(100.0);

    // evaluates the annualized operating cost and its subgradient at d
    let evaluate = |d: &[f64]| -> Result<(f64, Vec<f64>)> {
        let caps = case.effective_capacities(d, DesignMode::Continuous, 0.0)?;
        let mut value = 0.0;
        let mut grad = vec![0.0; k];
        for t in 0..case.profile.horizon() {
            let r = clear_market(
                case,
                &ClearingInput {
                    bids: fixed_bids.to_vec(),
                    demands: case.demand_at(t),
                    capacities: caps.clone(),
                    shed_penalty: Some(shed_penalty),
                },
            )?;
            value += w_anu * r.bid_cost;
            for (j, &li) in cands.iter().enumerate() {
                grad[j] -= w_anu * r.line_congestion[li];
            }
        }
        Ok((value, grad))
    };

    // master LP variables: d_1..d_k, then eta (epigraph of the operating term)
    let mut cuts: Vec<(Vec<f64>, f64)> = Vec::new(); // (gradient, value at point) with point folded in rhs
    let mut d = vec![0.0; k];
    let mut best_d = d.clone();
    let mut best_f = f64::INFINITY;
    let max_iters = 200;

    for it in 1..=max_iters {
        let (op_value, grad) = evaluate(&d)?;
        let f_here = op_value + exp_cost.iter().zip(&d).map(|(c, x)| c * x).sum::<f64>();
        if f_here < best_f {
            best_f = f_here;
            best_d = d.clone();
        }
        // cut: eta >= op_value + grad . (x - d)
        let rhs = -op_value + grad.iter().zip(&d).map(|(g, x)| g * x).sum::<f64>();
        cuts.push((grad, rhs));

        let n_vars = k + 1;
        let mut objective = vec![0.0; n_vars];
        objective[..k].copy_from_slice(&exp_cost);
        objective[k] = 1.0;
        let mut a_ub = Vec::with_capacity(cuts.len());
        let mut b_ub = Vec::with_capacity(cuts.len());
        for (g, rhs) in &cuts {
            let mut row = vec![0.0; n_vars];
            row[..k].copy_from_slice(g);
            row[k] = -1.0;
            a_ub.push(row);
            b_ub.push(*rhs);
        }
        let mut lower = vec![0.0; n_vars];
        let mut upper = vec![d_max; n_vars];
        lower[k] = 0.0;
        upper[k] = f64::INFINITY;
        let lp = LinearProgram {
            objective,
            a_eq: vec![],
            b_eq: vec![],
            a_ub,
            b_ub,
            lower,
            upper,
        };
        let sol = lp::solve(&lp)?;
        if sol.status != LpStatus::Optimal {
            bail!("master LP not optimal: {:?}", sol.status);
        }
        let lower_bound = sol.objective;
        let gap = best_f - lower_bound;
        if gap <= 1e-6 * best_f.abs().max(1.0) {
            return Ok(Stage1Result { design: best_d, total_cost: best_f, iterations: it });
        }
        d = sol.x[..k].to_vec();
    }
    bail!("expansion planning did not converge in {max_iters} iterations");
}

/// Plans the expansion against a fixed exogenous bid scenario, then trains
/// the bidding agents on the expanded network with the design frozen, and
/// reports the planned and realized yearly costs side by side.
pub fn run_two_stage(
    case: &NetworkCase,
    cfg: &RunConfig,
    out_dir: &Path,
    case_label: &str,
) -> Result<RunSummary> {
    std::fs::create_dir_all(out_dir)?;
    let horizon = case.profile.horizon();
    let w_anu = cfg.effective_w_anu(horizon);
    let gamma = cfg.maddpg.gamma;
    let strategic = case.strategic_generators();

    let scenario = cfg
        .scenario_bids
        .as_ref()
        .ok_or(SetupError::MissingScenario)?;
    if scenario.len() != strategic.len() {
        return Err(SetupError::ScenarioLength {
            got: scenario.len(),
            want: strategic.len(),
        }
        .into());
    }
    let mut fixed_bids: Vec<f64> = case.generators.iter().map(|g| g.marginal_cost).collect();
    for (&gi, &b) in strategic.iter().zip(scenario) {
        fixed_bids[gi] = b;
    }
    let stage1 = stage1_expansion_lp(case, &fixed_bids, w_anu, cfg.shed_penalty)?;
    let fixed_design = stage1.design.clone();

    let mut env = MarketEnv::new(
        case.clone(),
        DesignMode::Continuous,
        cfg.design.fixed_increment,
        Some(cfg.shed_penalty),
    );
    let n_agents = env.num_agents();
    if n_agents == 0 {
        return Err(SetupError::NoStrategicGenerators.into());
    }
    let c_exp = expansion_cost(&fixed_design, case, DesignMode::Continuous, 0.0);
    let mut init_rng = rng::stream(cfg.seed, "maddpg-init");
    let mut maddpg = Maddpg::new(n_agents, env.obs_dim(), cfg.maddpg.clone(), &mut init_rng);
    let mut noise_rng = rng::stream(cfg.seed, "action-noise");
    let mut replay_rng = rng::stream(cfg.seed, "replay");

    let mut writer = MetricsWriter::create(&out_dir.join("metrics.jsonl"))?;
    writer.header(Header {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        case: case_label.to_string(),
        config: cfg.clone(),
    })?;

    let tail_start = cfg.episodes - (cfg.episodes / 10).max(1).min(cfg.episodes);
    let mut tail = TailAccumulator::new(n_agents);

    let progress_every = (cfg.episodes / 10).max(1);
    for episode in 0..cfg.episodes {
        let stats = run_episode(
            &mut env,
            &mut maddpg,
            &fixed_design,
            episode,
            true,
            true,
            w_anu,
            c_exp,
            gamma,
            &mut noise_rng,
            &mut replay_rng,
            Some(&mut writer),
        )?;
        maddpg.decay_exploration();
        writer.episode(EpisodeRecord {
            episode,
            design: fixed_design.clone(),
            returns: stats.returns.clone(),
            c_oper_sum: stats.c_oper_sum,
            c_exp,
            g_total: stats.g_total,
            mu: fixed_design.clone(),
            sigma_explore: maddpg.agents.iter().map(|a| a.noise_sigma).collect(),
            baseline: None,
        })?;
        if (episode + 1) % progress_every == 0 {
            let rewards: Vec<String> = stats.returns.iter().map(|r| sig15(*r)).collect();
            eprintln!(
                "episode {}: returns [{}] g_total {}",
                episode + 1,
                rewards.join(", "),
                sig15(stats.g_total),
            );
        }
        if episode >= tail_start {
            tail.add(&stats);
        }
        if cfg.checkpoint_every > 0 && (episode + 1) % cfg.checkpoint_every == 0 {
            write_checkpoint(&out_dir.join("checkpoints"), episode + 1, &maddpg, &fixed_design)?;
        }
    }
    writer.finish()?;

    let mut cfg2 = cfg.clone();
    cfg2.mode = RunMode::CoOptContinuous;
    let mut summary =
        finalize_run(case, &cfg2, out_dir, &mut env, &mut maddpg, &fixed_design, tail)?;
    summary.planned_total_cost = Some(stage1.total_cost);
    write_summary_csv(&out_dir.join("summary.csv"), &summary)?;
    Ok(summary)
}

/// Clears every time step with truthful bids at the base design and writes
/// the stream; no learning happens.
pub fn run_clear_only(
    case: &NetworkCase,
    cfg: &RunConfig,
    out_dir: &Path,
    case_label: &str,
) -> Result<RunSummary> {
    std::fs::create_dir_all(out_dir)?;
    let horizon = case.profile.horizon();
    let bids: Vec<f64> = case.generators.iter().map(|g| g.marginal_cost).collect();
    let caps: Vec<f64> = case.lines.iter().map(|l| l.base_capacity).collect();
    let strategic = case.strategic_generators();

    let mut writer = MetricsWriter::create(&out_dir.join("metrics.jsonl"))?;
    writer.header(Header {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        case: case_label.to_string(),
        config: cfg.clone(),
    })?;
    let mut c_oper = 0.0;
    let mut shed = 0.0;
    for t in 0..horizon {
        let r = clear_market(
            case,
            &ClearingInput {
                bids: bids.clone(),
                demands: case.demand_at(t),
                capacities: caps.clone(),
                shed_penalty: Some(cfg.shed_penalty),
            },
        )?;
        let step_cost = r.bid_cost + r.shed_cost;
        c_oper += step_cost;
        shed += r.shed.iter().sum::<f64>();
        writer.step(StepRecord {
            episode: 0,
            t,
            bids: strategic.iter().map(|&gi| bids[gi]).collect(),
            dispatch: r.dispatch.clone(),
            lmp: r.lmp.clone(),
            rewards: vec![0.0; strategic.len()],
            c_oper: step_cost,
            shed_total: r.shed.iter().sum(),
        })?;
    }
    writer.finish()?;

    let n_cand = case.candidate_lines().len();
    let w_anu = cfg.effective_w_anu(horizon);
    let summary = RunSummary {
        episodes: 1,
        final_design: vec![0.0; n_cand],
        c_exp: 0.0,
        mean_c_oper: c_oper,
        mean_g_total: -(w_anu * c_oper),
        mean_returns: vec![0.0; strategic.len()],
        mean_bid_ratio: vec![1.0; strategic.len()],
        eval_shed: shed,
        converged: shed < 1e-6,
        planned_total_cost: None,
    };
    write_summary_csv(&out_dir.join("summary.csv"), &summary)?;
    Ok(summary)
}

/// Entry point used by the command line: dispatches on the configured mode.
pub fn run(
    case: &NetworkCase,
    cfg: &RunConfig,
    out_dir: &Path,
    case_label: &str,
) -> Result<RunSummary> {
    match cfg.mode {
        RunMode::CoOptContinuous | RunMode::CoOptDiscrete => {
            run_co_optimization(case, cfg, out_dir, case_label)
        }
        RunMode::TwoStage => run_two_stage(case, cfg, out_dir, case_label),
        RunMode::ClearOnly => run_clear_only(case, cfg, out_dir, case_label),
    }
}
