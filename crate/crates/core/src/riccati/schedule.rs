use nalgebra::Vector2;

use super::CovTrajectory;
use crate::error::{Error, Result};

/// Observer gain as a function of time.
#[derive(Debug, Clone, PartialEq)]
pub enum GainSchedule {
    Constant(Vector2<f64>),
    /// Samples at `t`, linearly interpolated in between.
    Tabulated {
        t: Vec<f64>,
        k: Vec<Vector2<f64>>,
    },
    /// `k[i]` held on `[t[i], t[i+1])`; `k` has one entry fewer than `t`.
    Piecewise {
        t: Vec<f64>,
        k: Vec<Vector2<f64>>,
    },
}

impl GainSchedule {
    pub fn from_covariance(cov: &CovTrajectory, sigma_m: f64) -> Self {
        let k = (0..cov.len()).map(|i| cov.gain(i, sigma_m)).collect();
        GainSchedule::Tabulated {
            t: cov.t.clone(),
            k,
        }
    }

    /// Gain at sample `i` of a grid that matches the table.
    pub fn sample(&self, i: usize) -> Vector2<f64> {
        match self {
            GainSchedule::Constant(k) => *k,
            GainSchedule::Tabulated { k, .. } | GainSchedule::Piecewise { k, .. } => {
                k[i.min(k.len() - 1)]
            }
        }
    }

    /// Linearly interpolated gain; held constant past the last sample.
    pub fn at(&self, time: f64) -> Vector2<f64> {
        match self {
            GainSchedule::Constant(k) => *k,
            GainSchedule::Tabulated { t, k } => {
                let i = t.partition_point(|&s| s <= time);
                if i == 0 {
                    return k[0];
                }
                if i >= t.len() {
                    return k[t.len() - 1];
                }
                let w = (time - t[i - 1]) / (t[i] - t[i - 1]);
                k[i - 1] * (1.0 - w) + k[i] * w
            }
            GainSchedule::Piecewise { t, k } => {
                let i = t.partition_point(|&s| s <= time);
                k[i.saturating_sub(1).min(k.len() - 1)]
            }
        }
    }

    /// Check that a tabulated schedule covers `times` sample for sample.
    pub fn check_grid(&self, times: &[f64]) -> Result<()> {
        if let GainSchedule::Tabulated { t, .. } | GainSchedule::Piecewise { t, .. } = self {
            let ok = t.len() == times.len()
                && t.iter()
                    .zip(times)
                    .all(|(a, b)| (a - b).abs() <= 1e-9 * b.abs().max(1e-300));
            if !ok {
                return Err(Error::Config(format!(
                    "gain table has {} samples that do not match the {}-sample grid",
                    t.len(),
                    times.len()
                )));
            }
        }
        Ok(())
    }
}
