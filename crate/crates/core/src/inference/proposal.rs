//! Adaptive Gaussian random-walk proposals.
//!
//! Each block keeps a log step size that is nudged towards the target
//! acceptance rate at the end of every adaptation window, and optionally a
//! proposal covariance learned from the block's own history during burn-in.
//! Nothing changes after burn-in.

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::rng::Rng;

#[derive(Debug, Clone)]
pub(crate) struct Proposal {
    dim: usize,
    log_scale: f64,
    /// Lower Cholesky factor of the shape matrix, row-major; `None` means
    /// identity.
    chol: Option<Vec<f64>>,
    learn_shape: bool,
    hist_n: f64,
    hist_mean: Vec<f64>,
    hist_cross: Vec<f64>,
    window_accepted: u32,
    window_proposed: u32,
    windows: u32,
    pub accepted: u64,
    pub proposed: u64,
}

impl Proposal {
    /// Isotropic proposal with initial step `scale`.
    pub fn isotropic(dim: usize, scale: f64) -> Self {
        Proposal {
            dim,
            log_scale: scale.ln(),
            chol: None,
            learn_shape: false,
            hist_n: 0.0,
            hist_mean: Vec::new(),
            hist_cross: Vec::new(),
            window_accepted: 0,
            window_proposed: 0,
            windows: 0,
            accepted: 0,
            proposed: 0,
        }
    }

    /// Proposal whose covariance is learned from the chain history.
    pub fn learning(dim: usize, initial_sd: f64) -> Self {
        let mut p = Proposal::isotropic(dim, initial_sd * 2.38 / (dim as f64).sqrt());
        p.learn_shape = true;
        p.hist_mean = vec![0.0; dim];
        p.hist_cross = vec![0.0; dim * dim];
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Fills `step` with a proposal increment.
    pub fn draw(&self, rng: &mut Rng, step: &mut [f64]) {
        let s = self.log_scale.exp();
        if self.dim <= 16 {
            let mut buf = [0.0f64; 16];
            let z = &mut buf[..self.dim];
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            self.apply(z, step, s);
        } else {
            let z: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
            self.apply(&z, step, s);
        }
    }

    fn apply(&self, z: &[f64], step: &mut [f64], s: f64) {
        match &self.chol {
            None => {
                for (o, v) in step.iter_mut().zip(z) {
                    *o = s * v;
                }
            }
            Some(l) => {
                for i in 0..self.dim {
                    let mut acc = 0.0;
                    for j in 0..=i {
                        acc += l[i * self.dim + j] * z[j];
                    }
                    step[i] = s * acc;
                }
            }
        }
    }

    pub fn record(&mut self, accepted: bool, adapting: bool) {
        if adapting {
            self.window_proposed += 1;
            self.window_accepted += u32::from(accepted);
        } else {
            self.proposed += 1;
            self.accepted += u64::from(accepted);
        }
    }

    /// Adds the current block value to the shape history.
    pub fn observe(&mut self, y: &[f64]) {
        if !self.learn_shape {
            return;
        }
        self.hist_n += 1.0;
        let n = self.hist_n;
        let d = self.dim;
        let delta: Vec<f64> = y.iter().zip(&self.hist_mean).map(|(v, m)| v - m).collect();
        for (m, dv) in self.hist_mean.iter_mut().zip(&delta) {
            *m += dv / n;
        }
        for i in 0..d {
            let after = y[i] - self.hist_mean[i];
            for j in 0..d {
                self.hist_cross[i * d + j] += delta[j] * after;
            }
        }
    }

    /// End of an adaptation window: move the step size towards `target` and
    /// refresh the learned shape.
    pub fn adapt(&mut self, target: f64) {
        if self.window_proposed > 0 {
            self.windows += 1;
            let rate = f64::from(self.window_accepted) / f64::from(self.window_proposed);
            let gain = 2.0 / f64::from(self.windows).sqrt();
            self.log_scale += gain * (rate - target);
            self.log_scale = self.log_scale.clamp(-12.0, 4.0);
        }
        self.window_accepted = 0;
        self.window_proposed = 0;
        if self.learn_shape && self.hist_n >= (10 * self.dim).max(40) as f64 {
            self.refresh_shape();
        }
    }

    fn refresh_shape(&mut self) {
        let d = self.dim;
        let n = self.hist_n;
        let cov = DMatrix::from_fn(d, d, |i, j| {
            self.hist_cross[i * d + j] / (n - 1.0) + if i == j { 1e-10 } else { 0.0 }
        });
        // Rescale so that the log step keeps its meaning: shape has unit
        // average variance, the step size carries the magnitude.
        let mean_var = (0..d).map(|i| cov[(i, i)]).sum::<f64>() / d as f64;
        if !(mean_var > 0.0 && mean_var.is_finite()) {
            return;
        }
        let Some(ch) = (cov / mean_var).cholesky() else {
            return;
        };
        let l = ch.l();
        let had_shape = self.chol.is_some();
        self.chol = Some((0..d * d).map(|k| l[(k / d, k % d)]).collect());
        if !had_shape {
            self.log_scale = (2.38 / (d as f64).sqrt() * mean_var.sqrt()).ln();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, Substream};

    #[test]
    fn step_size_responds_to_acceptance() {
        let mut p = Proposal::isotropic(2, 1.0);
        for _ in 0..50 {
            p.record(false, true);
        }
        p.adapt(0.35);
        assert!(p.log_scale < 0.0);
        let mut q = Proposal::isotropic(2, 1.0);
        for _ in 0..50 {
            q.record(true, true);
        }
        q.adapt(0.35);
        assert!(q.log_scale > 0.0);
    }

    #[test]
    fn learned_shape_follows_history() {
        let mut rng = Substream::new(3, Purpose::Chain).rng();
        let mut p = Proposal::learning(2, 0.1);
        for _ in 0..2000 {
            let z: f64 = rng.sample(StandardNormal);
            let w: f64 = rng.sample(StandardNormal);
            p.observe(&[3.0 * z, 3.0 * z + 0.1 * w]);
        }
        p.adapt(0.35);
        let l = p.chol.as_ref().unwrap();
        // strongly correlated shape: second row almost parallel to the first
        assert!(l[2] / l[0] > 0.95);
    }
}
