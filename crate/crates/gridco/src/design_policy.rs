//! Stochastic transmission-design policy: per-line Gaussian (continuous
//! capacity increments) or Bernoulli (binary upgrades), trained with a
//! baseline-corrected score-function gradient on the episodic total-cost
//! return.

use crate::grid_model::{DesignMode, NetworkCase};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Bernoulli probabilities are clamped into [MU_FLOOR, 1 - MU_FLOOR] so the
/// score function stays finite.
pub const MU_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianDesignPolicy {
    pub mu: Vec<f64>,
    /// Fixed exploration standard deviation per line, MW.
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BernoulliDesignPolicy {
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum DesignPolicy {
    Gaussian(GaussianDesignPolicy),
    Bernoulli(BernoulliDesignPolicy),
}

/// A sampled design. `raw` is the unprojected draw used in the score
/// function; `applied` is what the environment sees (Gaussian draws are
/// projected onto R+).
#[derive(Debug, Clone)]
pub struct DesignSample {
    pub raw: Vec<f64>,
    pub applied: Vec<f64>,
}

impl DesignPolicy {
    pub fn gaussian(n: usize, mu0: f64, sigma: f64) -> Self {
        DesignPolicy::Gaussian(GaussianDesignPolicy {
            mu: vec![mu0; n],
            sigma: vec![sigma; n],
        })
    }

    pub fn bernoulli(n: usize, mu0: f64) -> Self {
        DesignPolicy::Bernoulli(BernoulliDesignPolicy {
            mu: vec![mu0.clamp(MU_FLOOR, 1.0 - MU_FLOOR); n],
        })
    }

    pub fn len(&self) -> usize {
        match self {
            DesignPolicy::Gaussian(p) => p.mu.len(),
            DesignPolicy::Bernoulli(p) => p.mu.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mode(&self) -> DesignMode {
        match self {
            DesignPolicy::Gaussian(_) => DesignMode::Continuous,
            DesignPolicy::Bernoulli(_) => DesignMode::Discrete,
        }
    }

    pub fn mu(&self) -> &[f64] {
        match self {
            DesignPolicy::Gaussian(p) => &p.mu,
            DesignPolicy::Bernoulli(p) => &p.mu,
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> DesignSample {
        match self {
            DesignPolicy::Gaussian(p) => {
                let raw: Vec<f64> = p
                    .mu
                    .iter()
                    .zip(&p.sigma)
                    .map(|(&m, &s)| m + s * gauss(rng))
                    .collect();
                let applied = raw.iter().map(|&w| w.max(0.0)).collect();
                DesignSample { raw, applied }
            }
            DesignPolicy::Bernoulli(p) => {
                let raw: Vec<f64> = p
                    .mu
                    .iter()
                    .map(|&m| if rng.gen::<f64>() < m { 1.0 } else { 0.0 })
                    .collect();
                DesignSample { applied: raw.clone(), raw }
            }
        }
    }

    /// Per-line d(ln p)/d(mu) at the raw draw.
    pub fn log_prob_grad(&self, raw: &[f64]) -> Vec<f64> {
        assert_eq!(raw.len(), self.len(), "design dimension mismatch");
        match self {
            DesignPolicy::Gaussian(p) => raw
                .iter()
                .zip(&p.mu)
                .zip(&p.sigma)
                .map(|((&w, &m), &s)| (w - m) / (s * s))
                .collect(),
            DesignPolicy::Bernoulli(p) => raw
                .iter()
                .zip(&p.mu)
                .map(|(&w, &m)| if w > 0.5 { 1.0 / m } else { -1.0 / (1.0 - m) })
                .collect(),
        }
    }

    /// Deterministic point design from the trained parameters.
    pub fn finalize_design(&self) -> Vec<f64> {
        match self {
            DesignPolicy::Gaussian(p) => p.mu.iter().map(|&m| m.max(0.0)).collect(),
            DesignPolicy::Bernoulli(p) => {
                p.mu.iter().map(|&m| if m > 0.5 { 1.0 } else { 0.0 }).collect()
            }
        }
    }
}

/// Standard normal via Box-Muller.
fn gauss(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Annualized expansion cost of a finalized design over the candidate lines.
pub fn expansion_cost(
    design: &[f64],
    case: &NetworkCase,
    mode: DesignMode,
    fixed_increment: f64,
) -> f64 {
    let cands = case.candidate_lines();
    assert_eq!(design.len(), cands.len(), "design dimension mismatch");
    cands
        .iter()
        .zip(design)
        .map(|(&li, &w)| {
            let c = case.lines[li].expansion_cost;
            match mode {
                DesignMode::Continuous => c * w.max(0.0),
                DesignMode::Discrete => {
                    if w > 0.5 {
                        c * fixed_increment
                    } else {
                        0.0
                    }
                }
            }
        })
        .sum()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineState {
    pub value: Option<f64>,
    pub decay: f64,
}

impl BaselineState {
    pub fn new(decay: f64) -> Self {
        BaselineState { value: None, decay }
    }

    /// Current baseline for an incoming return (the return itself on the
    /// first observation).
    pub fn get_or_init(&mut self, g: f64) -> f64 {
        *self.value.get_or_insert(g)
    }

    pub fn update(&mut self, g: f64) {
        let v = self.value.get_or_insert(g);
        *v = self.decay * *v + (1.0 - self.decay) * g;
    }
}

/// Batches episodes and applies the REINFORCE update every `n_up` episodes.
#[derive(Debug, Clone)]
pub struct DesignPolicyTrainer {
    pub policy: DesignPolicy,
    pub baseline: BaselineState,
    pub n_up: usize,
    pub lr: f64,
    /// Multiplicative learning-rate decay applied after each update.
    pub lr_decay: f64,
    /// Normalize advantages by their running standard deviation.
    pub normalize_advantages: bool,
    adv_var: f64,
    adv_var_init: bool,
    pending: Vec<(Vec<f64>, f64)>,
    pub updates: u64,
}

impl DesignPolicyTrainer {
    pub fn new(policy: DesignPolicy, n_up: usize, lr: f64, baseline_decay: f64) -> Self {
        assert!(n_up >= 1);
        DesignPolicyTrainer {
            policy,
            baseline: BaselineState::new(baseline_decay),
            n_up,
            lr,
            lr_decay: 1.0,
            normalize_advantages: true,
            adv_var: 1.0,
            adv_var_init: false,
            pending: Vec::new(),
            updates: 0,
        }
    }

    /// Records one episode; returns true when this call applied an update.
    pub fn record_and_maybe_update(&mut self, raw_design: &[f64], g_total: f64) -> bool {
        self.pending.push((raw_design.to_vec(), g_total));
        if self.pending.len() < self.n_up {
            return false;
        }

        let n = self.policy.len();
        let baseline = self.baseline.get_or_init(self.pending[0].1);
        let mut grad = vec![0.0; n];
        for (raw, g) in &self.pending {
            let mut adv = g - baseline;
            if self.normalize_advantages {
                // running EMA of advantage variance
                if !self.adv_var_init {
                    self.adv_var = (adv * adv).max(1e-12);
                    self.adv_var_init = true;
                } else {
                    self.adv_var = 0.99 * self.adv_var + 0.01 * adv * adv;
                }
                adv /= self.adv_var.sqrt().max(1e-9);
            }
            let score = self.policy.log_prob_grad(raw);
            for (gk, s) in grad.iter_mut().zip(score) {
                *gk += s * adv;
            }
        }
        let scale = self.lr / self.pending.len() as f64;
        match &mut self.policy {
            DesignPolicy::Gaussian(p) => {
                for (m, g) in p.mu.iter_mut().zip(&grad) {
                    *m += scale * g;
                }
            }
            DesignPolicy::Bernoulli(p) => {
                for (m, g) in p.mu.iter_mut().zip(&grad) {
                    *m = (*m + scale * g).clamp(MU_FLOOR, 1.0 - MU_FLOOR);
                }
            }
        }
        // baseline absorbs the batch only after the gradient used its
        // pre-update value
        for (_, g) in std::mem::take(&mut self.pending) {
            self.baseline.update(g);
        }
        self.lr *= self.lr_decay;
        self.updates += 1;
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_gaussian_sample() {
        let p = DesignPolicy::Gaussian(GaussianDesignPolicy {
            mu: vec![30.0, 0.0],
            sigma: vec![1e-12, 1e-12],
        });
        let mut rng = crate::rng::stream(3, "dp");
        let s = p.sample(&mut rng);
        assert!((s.applied[0] - 30.0).abs() < 1e-6);
        assert!(s.applied[1].abs() < 1e-6);
    }

    #[test]
    fn bernoulli_frequencies() {
        let mut rng = crate::rng::stream(4, "dp-bern");
        for mu in [0.99, 0.5] {
            let p = DesignPolicy::bernoulli(1, mu);
            let n = 10_000;
            let ones: f64 = (0..n)
                .map(|_| p.sample(&mut rng).applied[0])
                .sum();
            let freq = ones / n as f64;
            let se = (mu * (1.0 - mu) / n as f64).sqrt();
            assert!(
                (freq - mu).abs() <= 3.0 * se,
                "mu {mu}: freq {freq} outside 3 SE"
            );
        }
    }

    #[test]
    fn log_prob_grad_closed_forms() {
        let g = DesignPolicy::Gaussian(GaussianDesignPolicy {
            mu: vec![10.0],
            sigma: vec![2.0],
        });
        assert!((g.log_prob_grad(&[12.0])[0] - 0.5).abs() < 1e-12);

        let b = DesignPolicy::bernoulli(1, 0.25);
        assert!((b.log_prob_grad(&[1.0])[0] - 4.0).abs() < 1e-12);
        assert!((b.log_prob_grad(&[0.0])[0] + 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_sample_reinforce_step() {
        let mut t = DesignPolicyTrainer::new(DesignPolicy::gaussian(1, 0.0, 1.0), 1, 0.1, 0.95);
        t.normalize_advantages = false;
        // seed baseline at 0 so the advantage is exactly +1
        t.baseline.value = Some(0.0);
        assert!(t.record_and_maybe_update(&[1.0], 1.0));
        assert!((t.policy.mu()[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn zero_advantage_leaves_mu() {
        let mut t = DesignPolicyTrainer::new(DesignPolicy::gaussian(2, 3.0, 1.0), 2, 0.1, 0.95);
        t.baseline.value = Some(-7.0);
        t.record_and_maybe_update(&[2.0, 4.0], -7.0);
        t.record_and_maybe_update(&[3.5, 2.5], -7.0);
        assert_eq!(t.policy.mu(), &[3.0, 3.0]);
    }

    #[test]
    fn finalize_rules() {
        let g = DesignPolicy::Gaussian(GaussianDesignPolicy {
            mu: vec![76.1, -3.2],
            sigma: vec![5.0, 5.0],
        });
        assert_eq!(g.finalize_design(), vec![76.1, 0.0]);

        let b = DesignPolicy::Bernoulli(BernoulliDesignPolicy {
            mu: vec![0.9, 0.2, 0.7, 0.1, 0.3, 0.4],
        });
        assert_eq!(b.finalize_design(), vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);

        let tie = DesignPolicy::Bernoulli(BernoulliDesignPolicy { mu: vec![0.5] });
        assert_eq!(tie.finalize_design(), vec![0.0]);
    }

    #[test]
    fn expansion_cost_table_values() {
        use crate::grid_model::{Bus, DemandProfile, Generator, Line};
        let mk_case = |n_cand: usize| NetworkCase {
            slack_bus: 0,
            buses: vec![Bus { id: 0, demand_base: 1.0 }, Bus { id: 1, demand_base: 0.0 }],
            lines: (0..n_cand)
                .map(|_| Line {
                    from_bus: 0,
                    to_bus: 1,
                    susceptance: 1.0,
                    base_capacity: 10.0,
                    expansion_cost: 100_000.0,
                    candidate: true,
                    name: None,
                })
                .collect(),
            generators: vec![Generator {
                bus: 0,
                p_max: 10.0,
                marginal_cost: 50.0,
                strategic: false,
                alpha: 1.0,
            }],
            profile: DemandProfile { shape: vec![1.0] },
        };
        let case1 = mk_case(1);
        assert!((expansion_cost(&[81.4], &case1, DesignMode::Continuous, 0.0) - 8.14e6).abs() < 1e-6);
        assert!((expansion_cost(&[76.1], &case1, DesignMode::Continuous, 0.0) - 7.61e6).abs() < 1e-6);
        let case2 = mk_case(2);
        assert!(
            (expansion_cost(&[1.0, 1.0], &case2, DesignMode::Discrete, 50.0) - 10.0e6).abs() < 1e-6
        );
    }

    #[test]
    fn bernoulli_mu_stays_clamped() {
        let mut t = DesignPolicyTrainer::new(DesignPolicy::bernoulli(1, 0.5), 1, 10.0, 0.95);
        t.normalize_advantages = false;
        t.baseline.value = Some(0.0);
        let mut rng = crate::rng::stream(5, "dp-clamp");
        for k in 0..200 {
            let s = t.policy.sample(&mut rng);
            let g = if k % 3 == 0 { 1e6 } else { -1e6 };
            t.record_and_maybe_update(&s.raw, g);
            let m = t.policy.mu()[0];
            assert!((MU_FLOOR..=1.0 - MU_FLOOR).contains(&m), "mu {m}");
        }
    }

    /// The synthetic quadratic objective: analytic optimum of E[G] is mu = 5.
    #[test]
    fn gaussian_converges_on_quadratic() {
        let mut t = DesignPolicyTrainer::new(DesignPolicy::gaussian(1, 0.0, 1.0), 10, 0.01, 0.95);
        t.normalize_advantages = false;
        let mut rng = crate::rng::stream(6, "dp-quad");
        let mut updates = 0;
        while updates < 2000 {
            let s = t.policy.sample(&mut rng);
            let g = -(s.raw[0] - 5.0).powi(2);
            if t.record_and_maybe_update(&s.raw, g) {
                updates += 1;
            }
        }
        let mu = t.policy.mu()[0];
        assert!((mu - 5.0).abs() <= 0.5, "mu {mu}");
    }

    /// Monte-Carlo mean of the score-function estimator vs the analytic
    /// gradient, for both distributions and a nonzero constant baseline.
    #[test]
    fn estimator_is_unbiased() {
        let n = 100_000;
        let mut rng = crate::rng::stream(7, "dp-unbiased");
        for mu0 in [0.0, 3.0, 7.0] {
            let p = DesignPolicy::gaussian(1, mu0, 1.0);
            let baseline = -11.0;
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..n {
                let s = p.sample(&mut rng);
                let g = -(s.raw[0] - 5.0).powi(2);
                let est = p.log_prob_grad(&s.raw)[0] * (g - baseline);
                sum += est;
                sumsq += est * est;
            }
            let mean = sum / n as f64;
            let se = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
            let analytic = -2.0 * (mu0 - 5.0);
            assert!(
                (mean - analytic).abs() <= 3.0 * se,
                "gaussian mu {mu0}: {mean} vs {analytic} (se {se})"
            );
        }

        // Bernoulli: analytic gradient is G(1) - G(0)
        let p = DesignPolicy::bernoulli(1, 0.3);
        let (g1, g0) = (2.0, -1.0);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let s = p.sample(&mut rng);
            let g = if s.raw[0] > 0.5 { g1 } else { g0 };
            let est = p.log_prob_grad(&s.raw)[0] * (g - 0.77);
            sum += est;
            sumsq += est * est;
        }
        let mean = sum / n as f64;
        let se = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - (g1 - g0)).abs() <= 3.0 * se, "bernoulli: {mean} (se {se})");
    }
}
