//! DIC and WAIC from draws of the Gaussian approximation at θ̂.
//!
//! Draw `s` uses its own random stream, so draws can be generated in any
//! order (or in parallel) and fed to [`IcAccumulator`] in index order with
//! identical results.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{InnerMode, Model};
use crate::likelihood::row_loglik;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformationCriteria {
    pub dic: f64,
    pub p_d: f64,
    pub waic: f64,
    pub p_waic: f64,
    pub lppd: f64,
    pub deviance_at_mode: f64,
    pub mean_deviance: f64,
    pub n_draws: usize,
    pub seed: u64,
}

/// Per-row log-likelihoods for posterior draw `draw`.
pub fn draw_row_loglik(model: &Model, mode: &InnerMode, seed: u64, draw: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw);
    let z: Vec<f64> = (0..mode.u.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let dev = mode.chol.sample_with(&z);
    let u: Vec<f64> = mode.u.iter().zip(&dev).map(|(a, b)| a + b).collect();
    let eta = model.linear_predictor(&u);
    let pd = model.pseudodata();
    (0..eta.len()).map(|r| row_loglik(pd.y[r], pd.e[r], eta[r])).collect()
}

/// Streaming accumulator of per-row log-mean-exp and variance.
#[derive(Debug, Clone)]
pub struct IcAccumulator {
    count: usize,
    lse_max: Vec<f64>,
    lse_sum: Vec<f64>,
    mean: Vec<f64>,
    m2: Vec<f64>,
    deviance_sum: f64,
}

impl IcAccumulator {
    pub fn new(n_rows: usize) -> Self {
        Self {
            count: 0,
            lse_max: vec![f64::NEG_INFINITY; n_rows],
            lse_sum: vec![0.0; n_rows],
            mean: vec![0.0; n_rows],
            m2: vec![0.0; n_rows],
            deviance_sum: 0.0,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn add(&mut self, row_ll: &[f64]) {
        assert_eq!(row_ll.len(), self.mean.len());
        self.count += 1;
        let k = self.count as f64;
        let mut total = 0.0;
        for (r, &l) in row_ll.iter().enumerate() {
            total += l;
            if l > self.lse_max[r] {
                self.lse_sum[r] = self.lse_sum[r] * (self.lse_max[r] - l).exp() + 1.0;
                self.lse_max[r] = l;
            } else {
                self.lse_sum[r] += (l - self.lse_max[r]).exp();
            }
            let d = l - self.mean[r];
            self.mean[r] += d / k;
            self.m2[r] += d * (l - self.mean[r]);
        }
        self.deviance_sum += -2.0 * total;
    }

    /// Criteria given the log-likelihood at the posterior mode.
    pub fn finish(&self, loglik_at_mode: f64, seed: u64) -> InformationCriteria {
        let s = self.count as f64;
        let mut lppd = 0.0;
        let mut p_waic = 0.0;
        for r in 0..self.mean.len() {
            if self.lse_max[r].is_finite() {
                lppd += self.lse_max[r] + (self.lse_sum[r] / s).ln();
            }
            if self.count > 1 {
                p_waic += self.m2[r] / (s - 1.0);
            }
        }
        let deviance_at_mode = -2.0 * loglik_at_mode;
        let mean_deviance = self.deviance_sum / s;
        let p_d = mean_deviance - deviance_at_mode;
        InformationCriteria {
            dic: deviance_at_mode + 2.0 * p_d,
            p_d,
            waic: -2.0 * (lppd - p_waic),
            p_waic,
            lppd,
            deviance_at_mode,
            mean_deviance,
            n_draws: self.count,
            seed,
        }
    }
}

/// Serial DIC/WAIC with `n_draws` draws.
pub fn information_criteria(model: &Model, mode: &InnerMode, n_draws: usize, seed: u64) -> InformationCriteria {
    let mut acc = IcAccumulator::new(model.pseudodata().n_rows());
    for s in 0..n_draws as u64 {
        acc.add(&draw_row_loglik(model, mode, seed, s));
    }
    acc.finish(mode.loglik, seed)
}
