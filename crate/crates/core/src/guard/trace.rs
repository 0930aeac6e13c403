use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::StepOutcome;
use crate::numerics::LogValue;

/// One row of a bound trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub included: bool,
    pub d: usize,
    pub query_size: usize,
    pub tdp_bound: f64,
    pub log_statistic: LogValue,
}

impl From<&StepOutcome> for TraceRow {
    fn from(o: &StepOutcome) -> Self {
        TraceRow {
            t: o.t,
            included: o.included,
            d: o.d,
            query_size: o.query_size,
            tdp_bound: o.tdp_bound(),
            log_statistic: o.statistic,
        }
    }
}

impl TraceRow {
    pub const CSV_HEADER: &'static str = "t,included,d,|S|,tdp_bound,log_statistic";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.t, self.included, self.d, self.query_size, self.tdp_bound, self.log_statistic
        )
    }
}

/// Per-step record of a guard run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundTrace {
    pub rows: Vec<TraceRow>,
}

impl BoundTrace {
    pub fn push(&mut self, outcome: &StepOutcome) {
        self.rows.push(outcome.into());
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn bounds(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.d).collect()
    }

    pub fn final_bound(&self) -> usize {
        self.rows.last().map_or(0, |r| r.d)
    }

    /// Writes the trace as CSV, optionally prefixed with a `method` column.
    pub fn write_csv<W: Write>(&self, mut out: W, method: Option<&str>) -> io::Result<()> {
        match method {
            Some(_) => writeln!(out, "method,{}", TraceRow::CSV_HEADER)?,
            None => writeln!(out, "{}", TraceRow::CSV_HEADER)?,
        }
        for row in &self.rows {
            match method {
                Some(m) => writeln!(out, "{m},{}", row.to_csv())?,
                None => writeln!(out, "{}", row.to_csv())?,
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self, method: Option<&str>) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, method).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}
