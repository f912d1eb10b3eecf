//! JSONL metrics stream and numeric formatting for CSV summaries.
//!
//! A metrics file starts with one header record carrying the full run
//! configuration, followed by interleaved step and episode records in
//! chronological order. Every record is a single JSON object on its own
//! line with a `kind` discriminator.

use crate::config::RunConfig;
use serde::{Deserialize, Serialize};
use std::io::{self, BufWriter, Write};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Header(Header),
    Step(StepRecord),
    Episode(EpisodeRecord),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Header {
    pub version: String,
    pub seed: u64,
    pub case: String,
    pub config: RunConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub episode: usize,
    pub t: usize,
    /// Applied (constrained) bid per strategic agent, $/MWh.
    pub bids: Vec<f64>,
    /// Dispatch per generator, MW.
    pub dispatch: Vec<f64>,
    /// Nodal price per bus, $/MWh.
    pub lmp: Vec<f64>,
    /// Profit per strategic agent, $.
    pub rewards: Vec<f64>,
    pub c_oper: f64,
    pub shed_total: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Applied design per candidate line (continuous: MW, discrete: 0/1).
    pub design: Vec<f64>,
    /// Discounted return per strategic agent, $.
    pub returns: Vec<f64>,
    pub c_oper_sum: f64,
    pub c_exp: f64,
    pub g_total: f64,
    /// Design distribution mean per candidate line.
    pub mu: Vec<f64>,
    /// Exploration noise spread per strategic agent.
    pub sigma_explore: Vec<f64>,
    pub baseline: Option<f64>,
}

pub struct MetricsWriter<W: Write> {
    out: W,
}

impl MetricsWriter<BufWriter<std::fs::File>> {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(MetricsWriter { out: BufWriter::new(std::fs::File::create(path)?) })
    }
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(out: W) -> Self {
        MetricsWriter { out }
    }

    pub fn write(&mut self, record: &Record) -> io::Result<()> {
        let line = serde_json::to_string(record)?;
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")
    }

    pub fn header(&mut self, h: Header) -> io::Result<()> {
        self.write(&Record::Header(h))
    }

    pub fn step(&mut self, r: StepRecord) -> io::Result<()> {
        self.write(&Record::Step(r))
    }

    pub fn episode(&mut self, r: EpisodeRecord) -> io::Result<()> {
        self.write(&Record::Episode(r))
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.out.flush()
    }
}

/// Reads a metrics stream back, failing on any malformed line.
pub fn read_records(text: &str) -> Result<Vec<Record>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

/// Formats with 15 significant digits, enough to round-trip the value for
/// plotting and comparisons without printing noise digits.
pub fn sig15(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let s = format!("{v:.*e}", 14);
    // prefer plain notation for moderate magnitudes
    let exp: i32 = s.split('e').nth(1).unwrap().parse().unwrap();
    if (-4..15).contains(&exp) {
        let decimals = (14 - exp).max(0) as usize;
        let t = format!("{v:.*}", decimals);
        let t = t.trim_end_matches('0').trim_end_matches('.').to_string();
        if t == "-0" { "0".to_string() } else { t }
    } else {
        s
    }
}
