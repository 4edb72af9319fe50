use serde::{Deserialize, Serialize};

use super::{run_ser_sweep, Scheme, SerCurve, SweepConfig};
use crate::error::{Error, Result};

pub const DEFAULT_TARGET_SER: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub scheme: String,
    pub config: String,
    pub threshold_db: f64,
    pub target_ser: f64,
    /// Smallest spacing between grid points around the threshold.
    pub grid_step_db: f64,
}

/// Lowest grid SNR at which the SER, and the SER at every higher grid SNR,
/// is at most `target`. Point estimates only; no interpolation.
pub fn snr_threshold(curve: &SerCurve, target: f64) -> Result<ThresholdReport> {
    let pts = &curve.points;
    if pts.is_empty() {
        return Err(Error::Range("empty curve".into()));
    }
    let mut first_ok = pts.len();
    for i in (0..pts.len()).rev() {
        if pts[i].ser <= target {
            first_ok = i;
        } else {
            break;
        }
    }
    if first_ok == pts.len() {
        return Err(Error::Range(format!(
            "SER above {target} at the top of the grid ({} dB); extend the grid upwards",
            pts[pts.len() - 1].snr_db
        )));
    }
    if first_ok == 0 {
        return Err(Error::Range(format!(
            "SER already at most {target} at the bottom of the grid ({} dB); extend the grid downwards",
            pts[0].snr_db
        )));
    }
    let t = pts[first_ok].snr_db;
    let step = pts[first_ok].snr_db - pts[first_ok - 1].snr_db;
    let step = match pts.get(first_ok + 1) {
        Some(p) => step.min(p.snr_db - t),
        None => step,
    };
    Ok(ThresholdReport {
        scheme: curve.scheme.clone(),
        config: curve.config.clone(),
        threshold_db: t,
        target_ser: target,
        grid_step_db: step,
    })
}

/// Adds a point halfway below the coarse threshold (and halfway above if
/// missing) and recomputes the threshold on the merged curve.
pub fn refine_threshold(
    scheme: &Scheme,
    curve: &SerCurve,
    cfg: &SweepConfig,
    target: f64,
) -> Result<(SerCurve, ThresholdReport)> {
    let coarse = snr_threshold(curve, target)?;
    let half = coarse.grid_step_db / 2.0;
    let extra: Vec<f64> = [coarse.threshold_db - half, coarse.threshold_db + half]
        .into_iter()
        .filter(|s| curve.ser_at(*s).is_none())
        .collect();
    let added = run_ser_sweep(scheme, &extra, cfg)?;
    let mut merged = curve.clone();
    merged.merge(added.points);
    let report = snr_threshold(&merged, target)?;
    Ok((merged, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::SerPoint;

    fn curve(points: &[(f64, f64)]) -> SerCurve {
        SerCurve {
            scheme: "x".into(),
            config: "y".into(),
            bw: 125e3,
            data_rate_bps: 1.0,
            points: points
                .iter()
                .map(|&(s, ser)| SerPoint::new(s, 1000, (ser * 1000.0).round() as usize))
                .collect(),
        }
    }

    #[test]
    fn simple_crossing() {
        let c = curve(&[(-24.0, 0.03), (-23.0, 0.002), (-22.0, 0.0)]);
        let r = snr_threshold(&c, 0.01).unwrap();
        assert_eq!(r.threshold_db, -23.0);
        assert_eq!(r.grid_step_db, 1.0);
    }

    #[test]
    fn outlier_at_high_snr_pushes_threshold_up() {
        let c = curve(&[(-25.0, 0.2), (-24.0, 0.005), (-23.0, 0.02), (-22.0, 0.001), (-21.0, 0.0)]);
        assert_eq!(snr_threshold(&c, 0.01).unwrap().threshold_db, -22.0);
    }

    #[test]
    fn target_exactly_met_counts() {
        let c = curve(&[(-2.0, 0.5), (-1.0, 0.01), (0.0, 0.0)]);
        assert_eq!(snr_threshold(&c, 0.01).unwrap().threshold_db, -1.0);
    }

    #[test]
    fn no_crossing_is_range_error() {
        let high = curve(&[(-2.0, 0.5), (-1.0, 0.3)]);
        assert!(matches!(snr_threshold(&high, 0.01), Err(Error::Range(_))));
        let low = curve(&[(-2.0, 0.001), (-1.0, 0.0)]);
        assert!(matches!(snr_threshold(&low, 0.01), Err(Error::Range(_))));
    }

    #[test]
    fn refinement_lands_on_half_grid() {
        let scheme = Scheme::Dechirp { sf: 7 };
        let cfg = SweepConfig::new(500, 3);
        let grid: Vec<f64> = (-12..=-4).map(f64::from).collect();
        let coarse = run_ser_sweep(&scheme, &grid, &cfg).unwrap();
        let t = snr_threshold(&coarse, 0.01).unwrap().threshold_db;
        let (merged, fine) = refine_threshold(&scheme, &coarse, &cfg, 0.01).unwrap();
        assert_eq!(merged.points.len(), coarse.points.len() + 2);
        assert!(fine.threshold_db >= t - 0.5 && fine.threshold_db <= t);
        assert_eq!(fine.grid_step_db, 0.5);
    }
}
