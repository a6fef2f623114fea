use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::SnrSpec;
use crate::error::{domain, Error, Result};

pub const BABBLE_EXPERIMENT: &str = "babble";
pub const AUGMENT_EXPERIMENT: &str = "augment";
pub const RESULT_HEADER: [&str; 6] = ["experiment", "condition", "n_items", "cer_mean", "cer_std", "sra_mean"];

/// The varied factor of one result row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Condition {
    Snr(SnrSpec),
    Channels(usize),
    SineWave,
}

impl Condition {
    /// Plot and sort order: ascending SNR with clean last, or ascending
    /// channel count with sine-wave speech last.
    pub fn sort_key(&self) -> f64 {
        match self {
            Condition::Snr(s) => s.sort_key(),
            Condition::Channels(n) => *n as f64,
            Condition::SineWave => f64::INFINITY,
        }
    }

    /// Numbers are SNRs in the babble experiment and channel counts in the
    /// augmentation experiment.
    fn parse(experiment: &str, s: &str) -> Result<Self> {
        let t = s.trim();
        if t == "sinewave" {
            return Ok(Condition::SineWave);
        }
        if experiment == AUGMENT_EXPERIMENT {
            return t.parse().map(Condition::Channels).map_err(|_| domain!("bad channel condition {s:?}"));
        }
        t.parse().map(Condition::Snr)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Snr(s) => write!(f, "{s}"),
            Condition::Channels(n) => write!(f, "{n}"),
            Condition::SineWave => f.write_str("sinewave"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub condition: Condition,
    pub n_items: usize,
    pub cer_mean: f64,
    pub cer_std: f64,
    /// Absent for the speech-only model.
    pub sra_mean: Option<f64>,
}

/// Per-condition scores, serialised as CSV with a fixed header and six
/// decimal places.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn push(&mut self, row: ResultRow) -> Result<()> {
        if row.n_items == 0 || !(row.cer_mean >= 0.0) {
            return Err(domain!("result rows need items and a non-negative CER"));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(RESULT_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.experiment.clone(),
                r.condition.to_string(),
                r.n_items.to_string(),
                format!("{:.6}", r.cer_mean),
                format!("{:.6}", r.cer_std),
                r.sra_mean.map(|s| format!("{s:.6}")).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let fmt_err = |m: String| Error::Format(m);
        let header = rd.headers().map_err(|e| fmt_err(e.to_string()))?;
        if header.iter().ne(RESULT_HEADER) {
            return Err(fmt_err(format!("unexpected result header {header:?}")));
        }
        let mut table = ResultTable::default();
        for rec in rd.records() {
            let rec = rec.map_err(|e| fmt_err(e.to_string()))?;
            let num = |i: usize| rec[i].parse::<f64>().map_err(|_| fmt_err(format!("bad number {:?}", &rec[i])));
            table.push(ResultRow {
                experiment: rec[0].to_string(),
                condition: Condition::parse(&rec[0], &rec[1])?,
                n_items: rec[2].parse().map_err(|_| fmt_err(format!("bad count {:?}", &rec[2])))?,
                cer_mean: num(3)?,
                cer_std: num(4)?,
                sra_mean: if rec[5].is_empty() { None } else { Some(num(5)?) },
            })?;
        }
        Ok(table)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_csv(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}
