//! Completion parsing and metric computation.

pub mod extract;
pub mod score;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub use extract::{extract_choice, ParseStatus, Prediction};
pub use score::{score_run, Fraction, MetricsReport, ScoreError};

pub fn write_predictions<W: Write>(predictions: &[Prediction], mut out: W) -> std::io::Result<()> {
    for p in predictions {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_predictions(predictions: &[Prediction], path: &Path) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_predictions(predictions, &mut out)?;
    out.flush()
}

pub fn load_predictions(path: &Path) -> std::io::Result<Vec<Prediction>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", idx + 1))
        })?;
        out.push(p);
    }
    Ok(out)
}

/// Header and one data row in table column order.
pub fn metrics_csv(label: &str, metrics: &MetricsReport) -> String {
    let mut out = String::from("Strategy");
    for c in MetricsReport::COLUMNS {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    out.push_str(&csv_field(label));
    for cell in metrics.rendered() {
        out.push(',');
        out.push_str(&cell);
    }
    out.push('\n');
    out
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
