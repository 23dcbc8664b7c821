//! Parallel Monte Carlo trials with worker-count independent results.
//!
//! Trial `k` always draws from `RngStream::for_trial(seed, k)`. Per-time
//! sums are accumulated inside fixed blocks of consecutive trials and the
//! block sums are combined in block order, so the floating-point result does
//! not depend on how many threads run.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lqg_filter::RunResult;
use crate::numerics::RngStream;
use crate::output::write_columns;

const BLOCK: usize = 16;

/// Per-time mean and standard error of the squared estimation errors.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub t: Vec<f64>,
    pub sigma_be: Vec<f64>,
    pub sigma_be_se: Vec<f64>,
    pub sigma_ze: Vec<f64>,
    pub sigma_ze_se: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl EnsembleSummary {
    /// CSV with an optional reference column (e.g. the Riccati `sigma_bR`).
    pub fn write_csv<W: Write>(&self, out: W, reference: Option<(&str, &[f64])>) -> Result<()> {
        let mut headers = vec!["t", "sigma_bE", "sigma_bE_se", "sigma_zE", "sigma_zE_se"];
        let mut cols: Vec<&[f64]> = vec![
            &self.t,
            &self.sigma_be,
            &self.sigma_be_se,
            &self.sigma_ze,
            &self.sigma_ze_se,
        ];
        if let Some((name, col)) = reference {
            headers.push(name);
            cols.push(col);
        }
        write_columns(out, &headers, &cols)
    }
}

/// Running sums of several series over trials.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSums {
    pub count: usize,
    pub sum: Vec<Vec<f64>>,
    pub sum_sq: Vec<Vec<f64>>,
}

impl SeriesSums {
    pub fn new(series: usize, len: usize) -> Self {
        Self {
            count: 0,
            sum: vec![vec![0.0; len]; series],
            sum_sq: vec![vec![0.0; len]; series],
        }
    }

    pub fn add(&mut self, values: &[&[f64]]) {
        for (i, v) in values.iter().enumerate() {
            for (k, &x) in v.iter().enumerate() {
                self.sum[i][k] += x;
                self.sum_sq[i][k] += x * x;
            }
        }
        self.count += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        for i in 0..self.sum.len() {
            for k in 0..self.sum[i].len() {
                self.sum[i][k] += other.sum[i][k];
                self.sum_sq[i][k] += other.sum_sq[i][k];
            }
        }
        self.count += other.count;
    }

    pub fn mean(&self, i: usize) -> Vec<f64> {
        let n = self.count as f64;
        self.sum[i].iter().map(|s| s / n).collect()
    }

    /// Standard error of the mean.
    pub fn std_err(&self, i: usize) -> Vec<f64> {
        let n = self.count as f64;
        self.sum[i]
            .iter()
            .zip(&self.sum_sq[i])
            .map(|(s, q)| {
                let m = s / n;
                ((q / n - m * m).max(0.0) * n / (n - 1.0) / n).sqrt()
            })
            .collect()
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Run `trial(k, rng)` for every trial index and return the results in index order.
pub fn parallel_trials<T, F>(trials: usize, seed: u64, workers: usize, trial: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut RngStream) -> Result<T> + Sync,
{
    pool(workers)?.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|k| trial(k, &mut RngStream::for_trial(seed, k as u64)))
            .collect()
    })
}

/// Accumulate `series` per-time series over trials; `trial` returns them for
/// trial `k`, each of length `len`.
pub fn accumulate_trials<F>(
    trials: usize,
    seed: u64,
    workers: usize,
    series: usize,
    len: usize,
    trial: F,
) -> Result<SeriesSums>
where
    F: Fn(usize, &mut RngStream) -> Result<Vec<Vec<f64>>> + Sync,
{
    let blocks = trials.div_ceil(BLOCK);
    let partial: Vec<SeriesSums> = pool(workers)?.install(|| {
        (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut acc = SeriesSums::new(series, len);
                for k in b * BLOCK..((b + 1) * BLOCK).min(trials) {
                    let out = trial(k, &mut RngStream::for_trial(seed, k as u64))?;
                    let refs: Vec<&[f64]> = out.iter().map(Vec::as_slice).collect();
                    acc.add(&refs);
                }
                Ok(acc)
            })
            .collect::<Result<_>>()
    })?;
    let mut total = SeriesSums::new(series, len);
    for p in &partial {
        total.merge(p);
    }
    Ok(total)
}

/// Closed-loop ensemble summarized every `stride` samples.
pub fn run_ensemble<F>(
    trials: usize,
    seed: u64,
    workers: usize,
    stride: usize,
    run: F,
) -> Result<EnsembleSummary>
where
    F: Fn(&mut RngStream) -> Result<RunResult> + Sync,
{
    if trials < 2 {
        return Err(Error::Config(format!(
            "an ensemble needs at least 2 trials, got {trials}"
        )));
    }
    let stride = stride.max(1);
    let probe = run(&mut RngStream::for_trial(seed, 0))?;
    let t: Vec<f64> = probe.trajectory.t.iter().step_by(stride).copied().collect();
    let len = t.len();
    let sums = accumulate_trials(trials, seed, workers, 2, len, |_, rng| {
        let r = run(rng)?;
        Ok(vec![
            r.be_sq.iter().step_by(stride).copied().collect(),
            r.ze_sq.iter().step_by(stride).copied().collect(),
        ])
    })?;
    Ok(EnsembleSummary {
        t,
        sigma_be: sums.mean(0),
        sigma_be_se: sums.std_err(0),
        sigma_ze: sums.mean(1),
        sigma_ze_se: sums.std_err(1),
        trials,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worker_count_does_not_change_bits() {
        let f = |_: usize, rng: &mut RngStream| Ok(vec![(0..5).map(|_| rng.normal()).collect()]);
        let a = accumulate_trials(37, 9, 1, 1, 5, f).unwrap();
        let b = accumulate_trials(37, 9, 4, 1, 5, f).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.count, 37);
    }

    #[test]
    fn ordered_results() {
        let v = parallel_trials(10, 1, 3, |k, _| Ok(k)).unwrap();
        assert_eq!(v, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn mean_and_error() {
        let mut s = SeriesSums::new(1, 1);
        for x in [1.0, 2.0, 3.0, 4.0] {
            s.add(&[&[x]]);
        }
        assert_eq!(s.mean(0), vec![2.5]);
        let var = 5.0 / 3.0;
        assert!((s.std_err(0)[0] - (var / 4.0f64).sqrt()).abs() < 1e-15);
    }
}
