//! Post-run reporting: cost breakdowns, bid and design trajectories, and
//! verification of the bidding rule invariants on the logged stream.

use crate::metrics::{self, sig15, Record};
use anyhow::{bail, Context, Result};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Episode-level cap on max(bid)/min(bid) per agent.
pub const EPISODE_RANGE_CAP: f64 = 1.5;
/// Step-to-step bid ratio band.
pub const STEP_RATIO_BAND: (f64, f64) = (0.9, 1.1);
/// Relative slack applied to both checks to absorb float rounding.
pub const RATIO_TOL: f64 = 1e-9;

#[derive(Debug)]
pub struct ReportOutcome {
    pub episodes: usize,
    pub steps: usize,
    pub violations: Vec<String>,
    /// Mean per-episode operating cost over the final 10% of episodes, $.
    pub mean_c_oper: f64,
    /// Expansion cost of the last logged episode, $.
    pub c_exp: f64,
    /// Mean design objective over the final 10% of episodes.
    pub mean_g_total: f64,
}

impl ReportOutcome {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Reads a metrics stream, writes `breakdown.csv`, `bids.csv`, and `mu.csv`
/// into `out_dir`, and checks the bid constraints on every logged episode.
pub fn generate(metrics_path: &Path, out_dir: &Path) -> Result<ReportOutcome> {
    let text = std::fs::read_to_string(metrics_path)
        .with_context(|| format!("reading {}", metrics_path.display()))?;
    let records = metrics::read_records(&text).context("parsing metrics stream")?;
    if !matches!(records.first(), Some(Record::Header(_))) {
        bail!("metrics stream does not start with a header record");
    }
    std::fs::create_dir_all(out_dir)?;

    // group step bids by episode, preserving time order
    let mut bids_by_episode: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
    let mut n_agents = 0usize;
    let mut steps = 0usize;

    let mut bids_csv = std::fs::File::create(out_dir.join("bids.csv"))?;
    let mut wrote_bids_header = false;
    let mut breakdown = std::fs::File::create(out_dir.join("breakdown.csv"))?;
    let mut wrote_breakdown_header = false;
    let mut mu_csv = std::fs::File::create(out_dir.join("mu.csv"))?;
    let mut wrote_mu_header = false;
    let mut episodes = 0usize;
    let mut episode_costs: Vec<(f64, f64, f64)> = Vec::new();

    for r in &records {
        match r {
            Record::Step(s) => {
                steps += 1;
                n_agents = n_agents.max(s.bids.len());
                if !wrote_bids_header {
                    let cols: Vec<String> =
                        (0..s.bids.len()).map(|i| format!("bid_{i}")).collect();
                    writeln!(bids_csv, "episode,t,{}", cols.join(","))?;
                    wrote_bids_header = true;
                }
                let vals: Vec<String> = s.bids.iter().map(|b| sig15(*b)).collect();
                writeln!(bids_csv, "{},{},{}", s.episode, s.t, vals.join(","))?;
                bids_by_episode.entry(s.episode).or_default().push(s.bids.clone());
            }
            Record::Episode(e) => {
                episodes += 1;
                episode_costs.push((e.c_oper_sum, e.c_exp, e.g_total));
                if !wrote_breakdown_header {
                    let cols: Vec<String> =
                        (0..e.returns.len()).map(|i| format!("return_{i}")).collect();
                    let tail = if cols.is_empty() { String::new() } else { format!(",{}", cols.join(",")) };
                    writeln!(breakdown, "episode,c_oper_sum,c_exp,g_total{tail}")?;
                    wrote_breakdown_header = true;
                }
                let rets: Vec<String> = e.returns.iter().map(|r| sig15(*r)).collect();
                let tail = if rets.is_empty() { String::new() } else { format!(",{}", rets.join(",")) };
                writeln!(
                    breakdown,
                    "{},{},{},{}{tail}",
                    e.episode,
                    sig15(e.c_oper_sum),
                    sig15(e.c_exp),
                    sig15(e.g_total)
                )?;
                if !wrote_mu_header {
                    let cols: Vec<String> =
                        (0..e.mu.len()).map(|i| format!("mu_{i}")).collect();
                    writeln!(mu_csv, "episode,{}", cols.join(","))?;
                    wrote_mu_header = true;
                }
                let vals: Vec<String> = e.mu.iter().map(|m| sig15(*m)).collect();
                writeln!(mu_csv, "{},{}", e.episode, vals.join(","))?;
            }
            Record::Header(_) => {}
        }
    }

    let mut violations = Vec::new();
    for (ep, rows) in &bids_by_episode {
        for agent in 0..n_agents {
            let series: Vec<f64> = rows.iter().map(|r| r[agent]).collect();
            check_episode(*ep, agent, &series, &mut violations);
        }
    }

    let (mean_c_oper, c_exp, mean_g_total) = if episode_costs.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        let window = (episode_costs.len() / 10).max(1);
        let tail = &episode_costs[episode_costs.len() - window..];
        let n = tail.len() as f64;
        (
            tail.iter().map(|t| t.0).sum::<f64>() / n,
            episode_costs.last().unwrap().1,
            tail.iter().map(|t| t.2).sum::<f64>() / n,
        )
    };

    Ok(ReportOutcome {
        episodes: episodes.max(bids_by_episode.len()),
        steps,
        violations,
        mean_c_oper,
        c_exp,
        mean_g_total,
    })
}

fn check_episode(episode: usize, agent: usize, bids: &[f64], out: &mut Vec<String>) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &b in bids {
        lo = lo.min(b);
        hi = hi.max(b);
    }
    if hi > lo * EPISODE_RANGE_CAP * (1.0 + RATIO_TOL) {
        out.push(format!(
            "episode {episode} agent {agent}: bid range {}/{} = {} exceeds {EPISODE_RANGE_CAP}",
            sig15(hi),
            sig15(lo),
            sig15(hi / lo)
        ));
    }
    for w in bids.windows(2) {
        let ratio = w[1] / w[0];
        if ratio < STEP_RATIO_BAND.0 * (1.0 - RATIO_TOL)
            || ratio > STEP_RATIO_BAND.1 * (1.0 + RATIO_TOL)
        {
            out.push(format!(
                "episode {episode} agent {agent}: step ratio {} outside [{}, {}]",
                sig15(ratio),
                STEP_RATIO_BAND.0,
                STEP_RATIO_BAND.1
            ));
        }
    }
}
