//! Release acceptance suite. Each test checks one numbered criterion and
//! prints a single PASS or FAIL line; tolerances are pinned here, next to
//! the checks that use them.
//!
//! Two long 30-bus criteria (04 and 09) are marked #[ignore]; run them with
//! `cargo test --test acceptance -- --ignored` before a release.

mod common;

use gridco::config::{RunConfig, RunMode};
use gridco::dcopf::{clear_market, ClearingInput};
use gridco::design_policy::{expansion_cost, DesignPolicy, DesignPolicyTrainer};
use gridco::grid_model::{
    load_case, Bus, DemandProfile, DesignMode, Generator, Line, NetworkCase,
};
use gridco::maddpg::{Maddpg, MaddpgConfig, Transition};
use gridco::market_env::MarketEnv;
use gridco::neural::{Activation, Mlp};
use gridco::{harness, report, rng};
use rand::Rng;
use std::panic::AssertUnwindSafe;
use std::path::PathBuf;

fn criterion(number: usize, name: &str, body: impl FnOnce()) {
    let result = std::panic::catch_unwind(AssertUnwindSafe(body));
    match result {
        Ok(()) => println!("ACCEPTANCE {number:02} {name}: PASS"),
        Err(e) => {
            println!("ACCEPTANCE {number:02} {name}: FAIL");
            std::panic::resume_unwind(e);
        }
    }
}

fn case_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../cases")
        .join(name)
}

fn out_dir(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("gridco_acceptance_{name}"));
    let _ = std::fs::remove_dir_all(&d);
    d
}

#[test]
fn criterion_01_lp_solver_matches_the_vertex_oracle() {
    criterion(1, "lp solver vs vertex oracle", || {
        // 500 random feasible LPs; objective within 1e-6 of enumeration,
        // duality gap within 1e-6, complementary slackness within 1e-8
        // (tolerances pinned inside the shared oracle helpers)
        common::cross_check_random_lps(500, 4242, "acceptance-lp");
    });
}

#[test]
fn criterion_02_two_bus_clearing_fixtures() {
    criterion(2, "two-bus clearing fixtures", || {
        let tol = 1e-6;
        // cheap unit at bus 0, expensive at bus 1 next to a 60 MW load,
        // joined by one 30 MW line
        let case = NetworkCase {
            slack_bus: 0,
            buses: vec![
                Bus { id: 0, demand_base: 0.0 },
                Bus { id: 1, demand_base: 60.0 },
            ],
            lines: vec![Line {
                from_bus: 0,
                to_bus: 1,
                susceptance: 10.0,
                base_capacity: 30.0,
                expansion_cost: 0.0,
                candidate: false,
                name: None,
            }],
            generators: vec![
                Generator { bus: 0, p_max: 100.0, marginal_cost: 10.0, strategic: false, alpha: 1.0 },
                Generator { bus: 1, p_max: 100.0, marginal_cost: 20.0, strategic: false, alpha: 1.0 },
            ],
            profile: DemandProfile { shape: vec![1.0] },
        };
        let input = ClearingInput {
            bids: vec![10.0, 20.0],
            demands: case.demand_at(0),
            capacities: vec![30.0],
            shed_penalty: None,
        };
        let r = clear_market(&case, &input).unwrap();
        assert!((r.dispatch[0] - 30.0).abs() < tol, "dispatch {:?}", r.dispatch);
        assert!((r.dispatch[1] - 30.0).abs() < tol, "dispatch {:?}", r.dispatch);
        assert!((r.lmp[0] - 10.0).abs() < tol, "lmp {:?}", r.lmp);
        assert!((r.lmp[1] - 20.0).abs() < tol, "lmp {:?}", r.lmp);
        assert!((r.operational_cost - 900.0).abs() < tol, "cost {}", r.operational_cost);

        // with the line limit out of the way the cheap unit serves everything
        // and one uniform price clears both buses
        let input = ClearingInput { capacities: vec![200.0], ..input };
        let r = clear_market(&case, &input).unwrap();
        assert!((r.dispatch[0] - 60.0).abs() < tol);
        assert!(r.dispatch[1].abs() < tol);
        assert!((r.lmp[0] - 10.0).abs() < tol);
        assert!((r.lmp[1] - 10.0).abs() < tol);
    });
}

#[test]
fn criterion_03_expansion_cost_arithmetic() {
    criterion(3, "expansion cost arithmetic", || {
        let case = load_case(&case_path("ieee30.case")).unwrap();
        let k = case.candidate_lines().len();
        let tol = 1e-6;

        let mut d = vec![0.0; k];
        d[0] = 81.4;
        let c = expansion_cost(&d, &case, DesignMode::Continuous, 0.0);
        assert!((c - 8.14e6).abs() < tol, "81.4 MW -> {c}");

        d[0] = 76.1;
        let c = expansion_cost(&d, &case, DesignMode::Continuous, 0.0);
        assert!((c - 7.61e6).abs() < tol, "76.1 MW -> {c}");

        let mut sel = vec![0.0; k];
        sel[0] = 1.0;
        sel[1] = 1.0;
        let c = expansion_cost(&sel, &case, DesignMode::Discrete, 50.0);
        assert_eq!(c, 10.0e6, "two 50 MW builds");
    });
}

#[test]
#[ignore = "long 30-bus training run"]
fn criterion_04_annualized_operating_cost_in_range() {
    criterion(4, "annualized 30-bus operating cost", || {
        let case = load_case(&case_path("ieee30_twoline.case")).unwrap();
        let mut cfg = RunConfig::default();
        cfg.episodes = 3000;
        cfg.seed = 7;
        cfg.checkpoint_every = 0;
        cfg.maddpg.hidden_width = 64;
        cfg.maddpg.actor_layers = 4;
        cfg.maddpg.critic_layers = 3;
        cfg.maddpg.actor_lr = 1e-5;
        cfg.maddpg.critic_lr = 1e-4;
        cfg.maddpg.reward_scale = 1e5;
        cfg.design.sigma = 10.0;
        cfg.design.lr = 2.0;
        cfg.design.n_up = 10;
        let dir = out_dir("annual");
        let summary = harness::run(&case, &cfg, &dir, "ieee30_twoline.case").unwrap();
        assert!(summary.converged, "final design still sheds {}", summary.eval_shed);

        let w_anu = cfg.effective_w_anu(case.profile.horizon());
        assert!((w_anu - 8760.0 / 48.0).abs() < 1e-12);
        let annual = w_anu * summary.mean_c_oper;
        assert!(
            (100e6..=160e6).contains(&annual),
            "annual operating cost {annual}"
        );
    });
}

#[test]
fn criterion_05_score_function_gradient_and_convergence() {
    criterion(5, "score-function gradient estimator", || {
        // estimator check on G(w) = -(w - 5)^2 with sigma = 1: the
        // 1e5-sample mean of G(w) (w - mu) must sit within 3 standard errors
        // of the analytic d/dmu E[G] = -2 (mu - 5)
        let mut r = rng::stream(99, "acceptance-score");
        for mu in [0.0, 3.0, 7.0] {
            let n = 100_000;
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..n {
                let z = normal(&mut r);
                let w = mu + z;
                let g = -(w - 5.0) * (w - 5.0) * z;
                sum += g;
                sum_sq += g * g;
            }
            let mean = sum / n as f64;
            let var = (sum_sq / n as f64 - mean * mean).max(0.0);
            let se = (var / n as f64).sqrt();
            let analytic = -2.0 * (mu - 5.0);
            assert!(
                (mean - analytic).abs() <= 3.0 * se,
                "mu {mu}: estimate {mean} vs {analytic} (se {se})"
            );
        }

        // a one-parameter Gaussian policy trained on the same objective must
        // land within 0.5 of the optimum in at most 2000 updates
        let policy = DesignPolicy::gaussian(1, 0.0, 1.0);
        let mut trainer = DesignPolicyTrainer::new(policy, 4, 0.05, 0.9);
        let mut sample_rng = rng::stream(99, "acceptance-policy");
        let mut updates = 0;
        while updates < 2000 {
            let s = trainer.policy.sample(&mut sample_rng);
            let g = -(s.raw[0] - 5.0) * (s.raw[0] - 5.0);
            if trainer.record_and_maybe_update(&s.raw, g) {
                updates += 1;
            }
        }
        let mu = trainer.policy.mu()[0];
        assert!((mu - 5.0).abs() <= 0.5, "mu converged to {mu}");
    });
}

#[test]
fn criterion_06_backprop_matches_finite_differences() {
    criterion(6, "backprop vs finite differences", || {
        let mut r = rng::stream(7, "acceptance-fd");
        for trial in 0..20 {
            let sizes = vec![
                r.gen_range(2..=5usize),
                r.gen_range(3..=8usize),
                r.gen_range(3..=8usize),
                r.gen_range(1..=4usize),
            ];
            let act = if trial % 2 == 0 { Activation::Identity } else { Activation::Sigmoid };
            let mut net = Mlp::new(sizes.clone(), act, &mut r);
            // random biases keep every rectifier safely away from its kink,
            // where one-sided derivatives would disagree with the difference
            // quotient
            for layer in net.biases.iter_mut() {
                for b in layer.iter_mut() {
                    *b = r.gen_range(-0.5..0.5);
                }
            }
            let x: Vec<f64> = (0..sizes[0]).map(|_| r.gen_range(-1.0..1.0)).collect();
            let c: Vec<f64> = (0..*sizes.last().unwrap())
                .map(|_| r.gen_range(-1.0..1.0))
                .collect();
            let loss = |n: &Mlp| -> f64 {
                n.forward(&x).iter().zip(&c).map(|(o, w)| o * w).sum()
            };

            let cache = net.forward_cached(&x);
            let (grads, _) = net.backward(&cache, &c);

            let h = 1e-6;
            for l in 0..net.weights.len() {
                for j in 0..net.weights[l].len() {
                    let mut plus = net.clone();
                    plus.weights[l][j] += h;
                    let mut minus = net.clone();
                    minus.weights[l][j] -= h;
                    let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                    let g = grads.weights[l][j];
                    assert!(
                        (g - fd).abs() <= 1e-4 * fd.abs().max(1.0),
                        "trial {trial} weight [{l}][{j}]: {g} vs fd {fd}"
                    );
                }
                for j in 0..net.biases[l].len() {
                    let mut plus = net.clone();
                    plus.biases[l][j] += h;
                    let mut minus = net.clone();
                    minus.biases[l][j] -= h;
                    let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                    let g = grads.biases[l][j];
                    assert!(
                        (g - fd).abs() <= 1e-4 * fd.abs().max(1.0),
                        "trial {trial} bias [{l}][{j}]: {g} vs fd {fd}"
                    );
                }
            }
        }
    });
}

/// Single bus, one 100 MW strategic unit against a 50 MW flat load. With
/// `alpha = 0.1` the whole markup range stays inside the bid rules, so the
/// reward is smooth in the action and a monopolist should push to the cap.
fn captive_bus_case(n_strategic: usize) -> NetworkCase {
    NetworkCase {
        slack_bus: 0,
        buses: vec![Bus { id: 0, demand_base: 50.0 }],
        lines: vec![],
        generators: (0..n_strategic)
            .map(|_| Generator {
                bus: 0,
                p_max: 100.0,
                marginal_cost: 50.0,
                strategic: true,
                alpha: 0.1,
            })
            .collect(),
        profile: DemandProfile { shape: vec![1.0; 8] },
    }
}

/// Trains bidding agents on `case` for `episodes` episodes and returns the
/// per-episode mean greedy action (exploration off, separate evaluation
/// pass each episode).
fn train_bidders(case: &NetworkCase, episodes: usize, seed: u64) -> Vec<f64> {
    let mut cfg = MaddpgConfig::default();
    cfg.actor_lr = 1e-4;
    cfg.critic_lr = 1e-3;
    cfg.gamma = 0.95;
    cfg.tau = 0.01;
    cfg.hidden_width = 32;
    cfg.actor_layers = 3;
    cfg.critic_layers = 3;
    cfg.batch_size = 64;
    cfg.warmup_batches = 4;
    cfg.noise_sigma = 0.4;
    cfg.noise_decay = 0.999;
    cfg.noise_floor = 0.02;
    cfg.reward_scale = 250.0;

    let mut env = MarketEnv::new(case.clone(), DesignMode::Continuous, 0.0, None);
    let n = env.num_agents();
    let mut init_rng = rng::stream(seed, "maddpg-init");
    let mut maddpg = Maddpg::new(n, env.obs_dim(), cfg, &mut init_rng);
    let mut noise_rng = rng::stream(seed, "action-noise");
    let mut replay_rng = rng::stream(seed, "replay");

    let mut greedy_means = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        // training pass
        let obs = env.reset_default(&[]).unwrap();
        let mut obs_vecs: Vec<Vec<f64>> = (0..n).map(|i| env.obs_vector(i, &obs[i])).collect();
        while !env.done() {
            let actions: Vec<f64> = (0..n)
                .map(|i| maddpg.select_action(i, &obs_vecs[i], true, &mut noise_rng))
                .collect();
            let outcome = env.step(&actions).unwrap();
            let next: Vec<Vec<f64>> = (0..n)
                .map(|i| env.obs_vector(i, &outcome.observations[i]))
                .collect();
            maddpg
                .store(Transition {
                    joint_obs: obs_vecs.clone(),
                    joint_actions: actions,
                    rewards: outcome.rewards.clone(),
                    next_joint_obs: next.clone(),
                    terminal: env.done(),
                })
                .unwrap();
            if maddpg.ready() {
                let batch = maddpg
                    .buffer
                    .sample_indices(maddpg.cfg.batch_size, &mut replay_rng)
                    .unwrap();
                maddpg.update_critic(&batch);
                for i in 0..n {
                    maddpg.update_actor(i, &batch);
                }
                maddpg.end_of_step_maintenance();
            }
            obs_vecs = next;
        }
        maddpg.decay_exploration();

        // greedy evaluation pass
        let obs = env.reset_default(&[]).unwrap();
        let mut obs_vecs: Vec<Vec<f64>> = (0..n).map(|i| env.obs_vector(i, &obs[i])).collect();
        let mut action_sum = 0.0;
        let mut action_count = 0usize;
        while !env.done() {
            let actions: Vec<f64> = (0..n)
                .map(|i| maddpg.select_action(i, &obs_vecs[i], false, &mut noise_rng))
                .collect();
            action_sum += actions.iter().sum::<f64>();
            action_count += actions.len();
            let outcome = env.step(&actions).unwrap();
            obs_vecs = (0..n)
                .map(|i| env.obs_vector(i, &outcome.observations[i]))
                .collect();
        }
        greedy_means.push(action_sum / action_count as f64);
    }
    greedy_means
}

fn tail_mean(series: &[f64], window: usize) -> f64 {
    let tail = &series[series.len().saturating_sub(window)..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

#[test]
fn criterion_07_monopoly_exploits_and_competition_disciplines() {
    criterion(7, "monopoly vs duopoly bidding", || {
        let episodes = 2500;
        let seed = 12;
        let monopoly = train_bidders(&captive_bus_case(1), episodes, seed);
        let mono_tail = tail_mean(&monopoly, 200);
        assert!(mono_tail >= 0.9, "monopoly mean action {mono_tail}");

        let duopoly = train_bidders(&captive_bus_case(2), episodes, seed);
        let duo_tail = tail_mean(&duopoly, 200);
        assert!(
            duo_tail < mono_tail,
            "duopoly {duo_tail} not below monopoly {mono_tail}"
        );
    });
}

#[test]
fn criterion_08_co_optimization_near_the_brute_force_optimum() {
    criterion(8, "co-optimization vs grid sweep", || {
        let case = load_case(&case_path("toy3.case")).unwrap();
        let w_anu = 8760.0 / case.profile.horizon() as f64;

        // truthful yearly total cost of a fixed design
        let evaluate = |d: f64| -> f64 {
            let caps = case
                .effective_capacities(&[d], DesignMode::Continuous, 0.0)
                .unwrap();
            let bids: Vec<f64> = case.generators.iter().map(|g| g.marginal_cost).collect();
            let mut oper = 0.0;
            for t in 0..case.profile.horizon() {
                let r = clear_market(
                    &case,
                    &ClearingInput {
                        bids: bids.clone(),
                        demands: case.demand_at(t),
                        capacities: caps.clone(),
                        shed_penalty: Some(1e4),
                    },
                )
                .unwrap();
                oper += r.bid_cost;
            }
            w_anu * oper + expansion_cost(&[d], &case, DesignMode::Continuous, 0.0)
        };

        // brute force over 1 MW steps
        let mut best = f64::INFINITY;
        for d in 0..=60 {
            best = best.min(evaluate(d as f64));
        }

        let mut cfg = RunConfig::default();
        cfg.episodes = 3000;
        cfg.seed = 7;
        cfg.checkpoint_every = 0;
        cfg.maddpg.hidden_width = 16;
        cfg.maddpg.actor_layers = 3;
        cfg.maddpg.critic_layers = 3;
        cfg.design.sigma = 3.0;
        cfg.design.lr = 2.0;
        cfg.design.lr_decay = 0.997;
        cfg.design.n_up = 6;
        let dir = out_dir("coopt");
        let summary = harness::run(&case, &cfg, &dir, "toy3.case").unwrap();
        let achieved = evaluate(summary.final_design[0]);
        assert!(
            achieved <= 1.05 * best,
            "design {:?}: cost {achieved} vs optimum {best}",
            summary.final_design
        );
    });
}

#[test]
#[ignore = "long 30-bus training runs, required before a release"]
fn criterion_09_thirty_bus_expansion_pattern() {
    criterion(9, "30-bus expansion pattern", || {
        // continuous design on the two-candidate study
        let case = load_case(&case_path("ieee30_twoline.case")).unwrap();
        let mut cfg = RunConfig::default();
        cfg.episodes = 3000;
        cfg.seed = 7;
        cfg.checkpoint_every = 0;
        cfg.maddpg.hidden_width = 64;
        cfg.maddpg.actor_layers = 4;
        cfg.maddpg.critic_layers = 3;
        cfg.maddpg.actor_lr = 1e-5;
        cfg.maddpg.critic_lr = 1e-4;
        cfg.maddpg.reward_scale = 1e5;
        cfg.design.sigma = 10.0;
        cfg.design.lr = 2.0;
        cfg.design.n_up = 10;
        let dir = out_dir("pattern_cont");
        let summary = harness::run(&case, &cfg, &dir, "ieee30_twoline.case").unwrap();
        let names: Vec<_> = case
            .candidate_lines()
            .iter()
            .map(|&l| case.lines[l].name.clone().unwrap())
            .collect();
        let main = summary.final_design[names.iter().position(|n| n == "4-12").unwrap()];
        let spur = summary.final_design[names.iter().position(|n| n == "27-28").unwrap()];
        assert!(main > 20.0, "4-12 expansion only {main}");
        assert!(spur < 5.0, "27-28 expansion {spur}");

        // discrete selection over all six candidates
        let case = load_case(&case_path("ieee30.case")).unwrap();
        let mut cfg = cfg.clone();
        cfg.mode = RunMode::CoOptDiscrete;
        cfg.design.fixed_increment = 50.0;
        cfg.design.lr = 0.05;
        let dir = out_dir("pattern_disc");
        let summary = harness::run(&case, &cfg, &dir, "ieee30.case").unwrap();
        let names: Vec<_> = case
            .candidate_lines()
            .iter()
            .map(|&l| case.lines[l].name.clone().unwrap())
            .collect();
        for (name, &sel) in names.iter().zip(&summary.final_design) {
            let expected = if name == "1-2" || name == "4-12" { 1.0 } else { 0.0 };
            assert_eq!(sel, expected, "candidate {name} selected {sel}");
        }
    });
}

#[test]
fn criterion_10_runs_are_deterministic() {
    criterion(10, "byte-identical repeated runs", || {
        let case = load_case(&case_path("toy3.case")).unwrap();
        let mut cfg = RunConfig::default();
        cfg.episodes = 10;
        cfg.seed = 33;
        cfg.design.n_up = 5;
        cfg.checkpoint_every = 0;
        cfg.maddpg.hidden_width = 8;
        cfg.maddpg.actor_layers = 3;
        cfg.maddpg.critic_layers = 3;
        cfg.maddpg.batch_size = 8;
        cfg.maddpg.warmup_batches = 2;
        let d1 = out_dir("det_a");
        let d2 = out_dir("det_b");
        harness::run(&case, &cfg, &d1, "toy3.case").unwrap();
        harness::run(&case, &cfg, &d2, "toy3.case").unwrap();
        let a = std::fs::read(d1.join("metrics.jsonl")).unwrap();
        let b = std::fs::read(d2.join("metrics.jsonl")).unwrap();
        assert_eq!(a, b, "metrics streams differ between identical runs");
    });
}

#[test]
fn criterion_11_bid_rules_hold_on_a_logged_run() {
    criterion(11, "bid rule invariants", || {
        assert_eq!(report::EPISODE_RANGE_CAP, 1.5);
        assert_eq!(report::STEP_RATIO_BAND, (0.9, 1.1));

        let case = load_case(&case_path("toy3.case")).unwrap();
        let mut cfg = RunConfig::default();
        cfg.episodes = 10;
        cfg.seed = 5;
        cfg.design.n_up = 5;
        cfg.checkpoint_every = 0;
        cfg.maddpg.hidden_width = 8;
        cfg.maddpg.actor_layers = 3;
        cfg.maddpg.critic_layers = 3;
        cfg.maddpg.batch_size = 8;
        cfg.maddpg.warmup_batches = 2;
        let dir = out_dir("bid_rules");
        harness::run(&case, &cfg, &dir, "toy3.case").unwrap();
        let outcome =
            report::generate(&dir.join("metrics.jsonl"), &dir.join("report")).unwrap();
        assert!(outcome.ok(), "violations: {:?}", outcome.violations);
        assert!(outcome.steps > 0);
    });
}

fn normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
