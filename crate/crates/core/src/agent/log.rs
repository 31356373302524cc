use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One evaluation checkpoint. Losses and rates are interval means since the
/// previous checkpoint and are empty when nothing happened in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub eval_return: f64,
    pub normalized_return: f64,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub bplus_size: usize,
    pub bplus_online_frac: f64,
    pub route_positive_rate: Option<f64>,
    pub method: String,
    pub seed: u64,
    pub eval_return_std: f64,
    pub q_abs_max: Option<f64>,
}

pub const CSV_COLUMNS: [&str; 12] = [
    "step",
    "eval_return",
    "normalized_return",
    "critic_loss",
    "actor_loss",
    "bplus_size",
    "bplus_online_frac",
    "route_positive_rate",
    "method",
    "seed",
    "eval_return_std",
    "q_abs_max",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn last(&self) -> Option<&LogRow> {
        self.rows.last()
    }

    pub fn final_normalized(&self) -> Option<f64> {
        self.last().map(|r| r.normalized_return)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(CSV_COLUMNS).map_err(csv_err)?;
        for row in &self.rows {
            w.serialize(row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        if header != CSV_COLUMNS {
            return Err(Error::Schema(format!("unexpected CSV columns {header:?}")));
        }
        let rows = r.deserialize().collect::<std::result::Result<Vec<LogRow>, _>>().map_err(csv_err)?;
        Ok(Self { rows })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Schema(format!("csv: {e}"))
}
