//! One text line per round.
//!
//! ```text
//! round=3 clients=0,2,5 train_loss=0.4127 eval_loss=0.3981 accuracy=0.9125 ap=0.8,1,na,0.75,0.9,1 mean_ap=0.89 uplink=30360 downlink=30336 wall_s=0
//! ```
//!
//! Fields appear in this order, separated by single spaces. Floats use the
//! shortest representation that parses back to the same `f64`. `na` marks a
//! value that is undefined for the round (no training in an empty round, or a
//! label without positives), and `clients=-` an empty participant list.

use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::labels::NUM_LABELS;

pub const FIELDS: [&str; 10] = [
    "round",
    "clients",
    "train_loss",
    "eval_loss",
    "accuracy",
    "ap",
    "mean_ap",
    "uplink",
    "downlink",
    "wall_s",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RoundReport {
    pub round: u32,
    /// Participating client ids in ascending order.
    pub clients: Vec<usize>,
    /// Sample-weighted mean of the participants' local training losses.
    pub train_loss: Option<f64>,
    pub eval_loss: f64,
    pub accuracy: f64,
    pub ap: [Option<f64>; NUM_LABELS],
    pub mean_ap: Option<f64>,
    pub uplink: u64,
    pub downlink: u64,
    pub wall_s: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "na".to_string(), |x| x.to_string())
}

impl RoundReport {
    pub fn to_line(&self) -> String {
        let clients = if self.clients.is_empty() {
            "-".to_string()
        } else {
            let ids: Vec<String> = self.clients.iter().map(usize::to_string).collect();
            ids.join(",")
        };
        let ap: Vec<String> = self.ap.iter().map(|&v| opt(v)).collect();
        let mut line = String::new();
        write!(
            line,
            "round={} clients={} train_loss={} eval_loss={} accuracy={} ap={} mean_ap={} uplink={} downlink={} wall_s={}",
            self.round,
            clients,
            opt(self.train_loss),
            self.eval_loss,
            self.accuracy,
            ap.join(","),
            opt(self.mean_ap),
            self.uplink,
            self.downlink,
            self.wall_s,
        )
        .expect("writing to a String cannot fail");
        line
    }

    /// Parse one line; `line_no` is 1-based and only used in errors.
    pub fn parse_line(line: &str, line_no: usize) -> Result<Self> {
        let err = |message: String| Error::Parse { line: line_no, message };
        let mut values: [Option<&str>; FIELDS.len()] = [None; FIELDS.len()];
        for token in line.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| err(format!("token `{token}` is not key=value")))?;
            let slot = FIELDS
                .iter()
                .position(|&f| f == key)
                .ok_or_else(|| err(format!("unknown field `{key}`")))?;
            if values[slot].replace(value).is_some() {
                return Err(err(format!("duplicate field `{key}`")));
            }
        }
        let get = |i: usize| values[i].ok_or_else(|| err(format!("missing field `{}`", FIELDS[i])));
        let bad = |i: usize, v: &str| err(format!("field `{}`: cannot parse `{v}`", FIELDS[i]));
        let float = |i: usize, v: &str| v.parse::<f64>().map_err(|_| bad(i, v));
        let maybe = |i: usize, v: &str| if v == "na" { Ok(None) } else { float(i, v).map(Some) };

        let v = get(0)?;
        let round = v.parse().map_err(|_| bad(0, v))?;
        let v = get(1)?;
        let clients = if v == "-" {
            Vec::new()
        } else {
            v.split(',')
                .map(|c| c.parse().map_err(|_| bad(1, v)))
                .collect::<Result<Vec<usize>>>()?
        };
        let v = get(5)?;
        let parts: Vec<&str> = v.split(',').collect();
        if parts.len() != NUM_LABELS {
            return Err(err(format!("field `ap`: expected {NUM_LABELS} values, got {}", parts.len())));
        }
        let mut ap = [None; NUM_LABELS];
        for (slot, part) in ap.iter_mut().zip(parts) {
            *slot = maybe(5, part)?;
        }
        let v = get(7)?;
        let uplink = v.parse().map_err(|_| bad(7, v))?;
        let v = get(8)?;
        let downlink = v.parse().map_err(|_| bad(8, v))?;
        Ok(RoundReport {
            round,
            clients,
            train_loss: maybe(2, get(2)?)?,
            eval_loss: float(3, get(3)?)?,
            accuracy: float(4, get(4)?)?,
            ap,
            mean_ap: maybe(6, get(6)?)?,
            uplink,
            downlink,
            wall_s: float(9, get(9)?)?,
        })
    }
}

/// Append one line to `path`, creating the file if needed.
pub fn append_report(report: &RoundReport, path: impl AsRef<Path>) -> Result<()> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(file, "{}", report.to_line())?;
    Ok(())
}

/// Read every report in `path`. Blank lines are skipped; any malformed line
/// fails the whole read.
pub fn read_reports(path: impl AsRef<Path>) -> Result<Vec<RoundReport>> {
    parse_reports(&fs::read_to_string(path)?)
}

pub fn parse_reports(text: &str) -> Result<Vec<RoundReport>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| RoundReport::parse_line(l, i + 1))
        .collect()
}
