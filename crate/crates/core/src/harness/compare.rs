//! Per-region comparison of predicted weights against Monte Carlo counts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sde::{wilson_interval, ExitHistogram};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompareError {
    #[error("{regions} regions but {weights} predicted weights")]
    MisalignedRegions { regions: usize, weights: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionVerdict {
    pub label: String,
    pub predicted: f64,
    pub empirical: f64,
    /// 3-sigma Wilson interval of the empirical proportion.
    pub band: (f64, f64),
    /// `(empirical - predicted)` over the binomial standard error at `predicted`.
    pub z_score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<f64>,
    pub pass: bool,
    pub reason: String,
}

/// Pass iff the predicted weight lies in the empirical 3-sigma Wilson
/// interval and, when an oracle value is given, within `oracle_tol`
/// (relative) of it.
pub fn compare(
    predicted: &[f64],
    empirical: &ExitHistogram,
    oracle: Option<&[f64]>,
    oracle_tol: f64,
) -> Result<Vec<RegionVerdict>, CompareError> {
    if predicted.len() != empirical.counts.len() || oracle.is_some_and(|o| o.len() != predicted.len()) {
        return Err(CompareError::MisalignedRegions {
            regions: empirical.counts.len(),
            weights: predicted.len(),
        });
    }
    let n = empirical.n_paths;
    Ok(predicted
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let k = empirical.counts[i];
            let p = if n == 0 { 0.0 } else { k as f64 / n as f64 };
            let band = wilson_interval(k, n, 3.0);
            let se = (a * (1.0 - a) / n.max(1) as f64).sqrt();
            let z_score = if se > 0.0 {
                (p - a) / se
            } else if p == a {
                0.0
            } else {
                f64::INFINITY.copysign(p - a)
            };
            let in_band = band.0 <= a && a <= band.1;
            let mut reason = format!(
                "predicted {a:.6} {} 3-sigma band [{:.6}, {:.6}] of empirical {p:.6} ({k}/{n}), z = {z_score:.2}",
                if in_band { "inside" } else { "outside" },
                band.0,
                band.1
            );
            let mut pass = in_band;
            let oracle_value = oracle.map(|o| o[i]);
            if let Some(o) = oracle_value {
                let rel = (a - o).abs() / o.abs().max(f64::MIN_POSITIVE);
                let ok = rel <= oracle_tol;
                pass &= ok;
                reason.push_str(&format!(
                    "; oracle {o:.6}, relative gap {rel:.3e} {} {oracle_tol:.3e}",
                    if ok { "<=" } else { ">" }
                ));
            }
            RegionVerdict {
                label: empirical.labels[i].clone(),
                predicted: a,
                empirical: p,
                band,
                z_score,
                oracle: oracle_value,
                pass,
                reason,
            }
        })
        .collect())
}
