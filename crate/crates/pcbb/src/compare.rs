//! Side-by-side view of sweep summaries from the same scenario.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::experiment::Summary;
use crate::Error;

/// Rows of the comparison table.
pub const COMPARED: [(&str, &str); 3] = [
    ("reception_1000_1500", "reception (1000,1500] m"),
    ("delay_final_us", "delay final window (us)"),
    ("collision_final_ratio", "collision ratio final window"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub label: String,
    pub source: PathBuf,
    /// Means in [`COMPARED`] order.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub scenario_hash: String,
    pub columns: Vec<Column>,
}

/// One column per protocol per summary, in the order given.
pub fn compare(paths: &[PathBuf]) -> Result<Comparison, Error> {
    if paths.len() < 2 {
        return Err(Error::TooFewSummaries);
    }
    let summaries: Vec<(&Path, Summary)> = paths
        .iter()
        .map(|p| Summary::read(p).map(|s| (p.as_path(), s)))
        .collect::<Result<_, _>>()?;
    let (first_path, first) = &summaries[0];
    for (p, s) in &summaries[1..] {
        if s.scenario_hash != first.scenario_hash {
            return Err(Error::ScenarioMismatch {
                first: first_path.to_path_buf(),
                first_hash: first.scenario_hash.clone(),
                other: p.to_path_buf(),
                other_hash: s.scenario_hash.clone(),
            });
        }
    }

    let mut columns: Vec<Column> = Vec::new();
    for (p, s) in &summaries {
        for proto in s.protocols() {
            let mut label = proto.to_string();
            let dupes = columns
                .iter()
                .filter(|c| c.label.split(' ').next() == Some(proto))
                .count();
            if dupes > 0 {
                label = format!("{proto} ({})", dupes + 1);
            }
            columns.push(Column {
                label,
                source: p.to_path_buf(),
                values: COMPARED.iter().map(|(m, _)| s.get(proto, m).map(|r| r.mean)).collect(),
            });
        }
    }
    Ok(Comparison {
        scenario_hash: first.scenario_hash.clone(),
        columns,
    })
}

impl Comparison {
    /// A plain-text table with aligned columns.
    pub fn render(&self) -> String {
        let cell = |v: Option<f64>| match v {
            Some(x) if x.is_finite() => format!("{x:.4}"),
            _ => "-".to_string(),
        };
        let label_w = COMPARED
            .iter()
            .map(|(_, l)| l.len())
            .max()
            .unwrap_or(0)
            .max("metric".len());
        let widths: Vec<usize> = self
            .columns
            .iter()
            .map(|c| {
                c.values
                    .iter()
                    .map(|&v| cell(v).len())
                    .max()
                    .unwrap_or(1)
                    .max(c.label.len())
            })
            .collect();

        let mut out = String::new();
        let _ = writeln!(out, "scenario {}", self.scenario_hash);
        let _ = write!(out, "{:<label_w$}", "metric");
        for (c, w) in self.columns.iter().zip(&widths) {
            let _ = write!(out, "  {:>w$}", c.label);
        }
        out.push('\n');
        for (i, (_, name)) in COMPARED.iter().enumerate() {
            let _ = write!(out, "{name:<label_w$}");
            for (c, w) in self.columns.iter().zip(&widths) {
                let _ = write!(out, "  {:>w$}", cell(c.values[i]));
            }
            out.push('\n');
        }
        out
    }
}
