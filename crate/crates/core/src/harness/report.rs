use std::fmt::Write as _;
use std::io::{Read, Write};

use super::threshold::snr_threshold;
use super::{SerCurve, SerPoint};
use crate::codec::morph::{morph_data_rate, SfSet};
use crate::error::{Error, Result};
use crate::phy::lora_data_rate;

pub const CSV_HEADER: [&str; 8] = ["scheme", "config", "snr_db", "n_symbols", "n_errors", "ser", "ci_lo", "ci_hi"];

/// Writes every point of every curve, one row each.
pub fn write_csv<W: Write>(curves: &[SerCurve], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fail = |e: csv::Error| Error::Format(format!("CSV write failed: {e}"));
    w.write_record(CSV_HEADER).map_err(fail)?;
    for c in curves {
        for p in &c.points {
            let (lo, hi) = p.wilson();
            w.write_record([
                c.scheme.clone(),
                c.config.clone(),
                p.snr_db.to_string(),
                p.n_symbols.to_string(),
                p.n_errors.to_string(),
                p.ser.to_string(),
                format!("{lo:.6}"),
                format!("{hi:.6}"),
            ])
            .map_err(fail)?;
        }
    }
    w.flush().map_err(|e| Error::Format(format!("CSV write failed: {e}")))?;
    Ok(())
}

/// Bit rate implied by a CSV scheme/config pair, e.g. `("cor", "SH-[9,12]")`.
pub fn data_rate_for(scheme: &str, config: &str, bw: f64) -> Option<f64> {
    let sf = || config.strip_prefix("SF")?.parse::<u8>().ok();
    match scheme {
        "dechirp" => Some(lora_data_rate(sf()?, bw)),
        "ifo2" | "ifo2-neural" => Some(2.0 * bw / (1u64 << sf()?) as f64),
        "ostinato" => {
            let k: f64 = config.strip_prefix("k=")?.parse().ok()?;
            Some(lora_data_rate(12, bw) / k)
        }
        "cor" | "cor-nc" | "neural" => {
            let set: SfSet = config.trim_start_matches("SH-").trim_matches(['[', ']']).parse().ok()?;
            Some(morph_data_rate(set, bw))
        }
        _ => None,
    }
}

/// Reads curves written by [`write_csv`]; rows of one curve must be
/// contiguous.
pub fn read_csv<R: Read>(input: R, bw: f64) -> Result<Vec<SerCurve>> {
    let mut r = csv::Reader::from_reader(input);
    let bad = |m: String| Error::Format(format!("CSV: {m}"));
    let header = r.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut curves: Vec<SerCurve> = Vec::new();
    for row in r.records() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| row[i].parse::<f64>().map_err(|_| bad(format!("bad number '{}'", &row[i])));
        let int = |i: usize| row[i].parse::<usize>().map_err(|_| bad(format!("bad count '{}'", &row[i])));
        let point = SerPoint::new(num(2)?, int(3)?, int(4)?);
        match curves.last_mut() {
            Some(c) if c.scheme == row[0] && c.config == row[1] => c.merge([point]),
            _ => curves.push(SerCurve {
                scheme: row[0].to_string(),
                config: row[1].to_string(),
                bw,
                data_rate_bps: data_rate_for(&row[0], &row[1], bw).unwrap_or(f64::NAN),
                points: vec![point],
            }),
        }
    }
    Ok(curves)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scheme: String,
    pub config: String,
    /// `None` when the curve does not cross the target.
    pub threshold_db: Option<f64>,
    pub data_rate_bps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub csv: String,
    /// Sorted by threshold, lowest first; curves without a crossing last.
    pub summary: Vec<SummaryRow>,
}

impl CompareReport {
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<12} {:<12} {:>14} {:>16}", "scheme", "config", "threshold_dB", "data_rate_bps");
        for r in &self.summary {
            let t = r.threshold_db.map_or_else(|| "n/a".to_string(), |t| format!("{t:.1}"));
            let _ = writeln!(s, "{:<12} {:<12} {:>14} {:>16.2}", r.scheme, r.config, t, r.data_rate_bps);
        }
        s
    }
}

pub fn compare_report(curves: &[SerCurve], target: f64) -> Result<CompareReport> {
    if curves.len() < 2 {
        return Err(Error::Config("a comparison needs at least two curves".into()));
    }
    let bw = curves[0].bw;
    if let Some(c) = curves.iter().find(|c| c.bw != bw) {
        return Err(Error::Config(format!(
            "mixed bandwidths: {} Hz and {} Hz ({} {})",
            bw, c.bw, c.scheme, c.config
        )));
    }
    let mut buf = Vec::new();
    write_csv(curves, &mut buf)?;
    let mut summary: Vec<SummaryRow> = curves
        .iter()
        .map(|c| SummaryRow {
            scheme: c.scheme.clone(),
            config: c.config.clone(),
            threshold_db: snr_threshold(c, target).ok().map(|r| r.threshold_db),
            data_rate_bps: c.data_rate_bps,
        })
        .collect();
    summary.sort_by(|a, b| match (a.threshold_db, b.threshold_db) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(CompareReport {
        csv: String::from_utf8(buf).expect("CSV is UTF-8"),
        summary,
    })
}
