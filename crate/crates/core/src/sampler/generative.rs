//! Loss constructions for conditional VAE and GAN frameworks.

use serde::{Deserialize, Serialize};

use crate::error::{Result, UqError};
use crate::rng::{self, UqRng};

/// Diagonal Gaussian given by mean and variance per latent dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.len() != var.len() {
            return Err(UqError::shape("mean and variance lengths differ"));
        }
        if let Some(v) = var.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(UqError::invalid(format!("variance {v} must be positive")));
        }
        Ok(DiagGaussian { mean, var })
    }

    pub fn from_log_var(mean: Vec<f64>, log_var: &[f64]) -> Result<Self> {
        Self::new(mean, log_var.iter().map(|l| l.exp()).collect())
    }

    pub fn standard(dim: usize) -> Self {
        DiagGaussian {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Reparameterized draw `mean + sqrt(var) * xi`, `xi ~ N(0, I)`.
    pub fn reparameterize(&self, rng: &mut UqRng) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.var)
            .map(|(m, v)| m + v.sqrt() * rng::normal(rng))
            .collect()
    }
}

/// Per-dimension `KL(q || p)` for diagonal Gaussians.
pub fn kl_diag_gaussian(q: &DiagGaussian, p: &DiagGaussian) -> Result<Vec<f64>> {
    if q.dim() != p.dim() {
        return Err(UqError::shape(format!(
            "KL between {}-d and {}-d Gaussians",
            q.dim(),
            p.dim()
        )));
    }
    Ok(q.mean
        .iter()
        .zip(&q.var)
        .zip(p.mean.iter().zip(&p.var))
        .map(|((mq, vq), (mp, vp))| {
            0.5 * (vq / vp + (mp - mq) * (mp - mq) / vp - 1.0 + (vp / vq).ln())
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElboLoss {
    /// Negative ELBO, `recon + kl`.
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
    pub kl_per_dim: Vec<f64>,
    /// Gradient of `kl` w.r.t. the posterior mean.
    pub grad_posterior_mean: Vec<f64>,
    /// Gradient of `kl` w.r.t. the posterior log-variance.
    pub grad_posterior_log_var: Vec<f64>,
}

/// Negative ELBO of a conditional VAE: reconstruction error plus
/// `KL(q(z | x, y) || p(z | x))`.
pub fn cvae_losses(
    prior: &DiagGaussian,
    posterior: &DiagGaussian,
    recon_error: f64,
) -> Result<ElboLoss> {
    if !recon_error.is_finite() {
        return Err(UqError::invalid(format!("reconstruction error {recon_error}")));
    }
    let kl_per_dim = kl_diag_gaussian(posterior, prior)?;
    let kl: f64 = kl_per_dim.iter().sum();
    let grad_posterior_mean = posterior
        .mean
        .iter()
        .zip(prior.mean.iter().zip(&prior.var))
        .map(|(mq, (mp, vp))| (mq - mp) / vp)
        .collect();
    let grad_posterior_log_var = posterior
        .var
        .iter()
        .zip(&prior.var)
        .map(|(vq, vp)| 0.5 * (vq / vp - 1.0))
        .collect();
    Ok(ElboLoss {
        total: recon_error + kl,
        recon: recon_error,
        kl,
        kl_per_dim,
        grad_posterior_mean,
        grad_posterior_log_var,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GanLosses {
    /// `-mean[ln D(real) + ln(1 - D(fake))]`.
    pub discriminator: f64,
    /// Non-saturating `-mean ln D(fake)`.
    pub generator: f64,
    /// Minimax value `mean ln D(real) + mean ln(1 - D(fake))`, for diagnostics.
    pub minimax_value: f64,
}

fn check_open_unit(values: &[f64], what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(UqError::EmptyInput(format!("no {what} outputs")));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
        return Err(UqError::invalid(format!(
            "{what} output {v} is outside (0, 1)"
        )));
    }
    Ok(())
}

pub fn gan_losses(disc_real: &[f64], disc_fake: &[f64]) -> Result<GanLosses> {
    check_open_unit(disc_real, "discriminator real")?;
    check_open_unit(disc_fake, "discriminator fake")?;
    let mean = |v: &[f64], f: fn(f64) -> f64| v.iter().map(|&x| f(x)).sum::<f64>() / v.len() as f64;
    let log_real = mean(disc_real, f64::ln);
    let log_not_fake = mean(disc_fake, |d| (1.0 - d).ln());
    let log_fake = mean(disc_fake, f64::ln);
    Ok(GanLosses {
        discriminator: -(log_real + log_not_fake),
        generator: -log_fake,
        minimax_value: log_real + log_not_fake,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn g(m: f64, v: f64) -> DiagGaussian {
        DiagGaussian::new(vec![m], vec![v]).unwrap()
    }

    #[test]
    fn kl_examples() {
        let l = cvae_losses(&g(0.3, 2.0), &g(0.3, 2.0), 1.25).unwrap();
        assert_eq!(l.kl, 0.0);
        assert_eq!(l.total, 1.25);
        let l = cvae_losses(&g(0.0, 1.0), &g(1.0, 1.0), 0.0).unwrap();
        assert_abs_diff_eq!(l.kl, 0.5, epsilon = 1e-15);
        let l = cvae_losses(&g(0.0, 1.0), &g(0.0, 4.0), 0.0).unwrap();
        assert_abs_diff_eq!(l.kl, 0.806853, epsilon = 1e-6);
    }

    #[test]
    fn kl_gradients_match_finite_differences() {
        let prior = DiagGaussian::new(vec![0.2, -0.4], vec![1.5, 0.7]).unwrap();
        let mean = [0.9, 0.1];
        let log_var = [0.3f64, -0.5];
        let kl = |m: &[f64], lv: &[f64]| {
            let q = DiagGaussian::from_log_var(m.to_vec(), lv).unwrap();
            cvae_losses(&prior, &q, 0.0).unwrap().kl
        };
        let l = cvae_losses(&prior, &DiagGaussian::from_log_var(mean.to_vec(), &log_var).unwrap(), 0.0)
            .unwrap();
        for k in 0..2 {
            let (mut a, mut b) = (mean, mean);
            a[k] += 1e-6;
            b[k] -= 1e-6;
            let fd = (kl(&a, &log_var) - kl(&b, &log_var)) / 2e-6;
            assert_abs_diff_eq!(l.grad_posterior_mean[k], fd, epsilon = 1e-7);
            let (mut a, mut b) = (log_var, log_var);
            a[k] += 1e-6;
            b[k] -= 1e-6;
            let fd = (kl(&mean, &a) - kl(&mean, &b)) / 2e-6;
            assert_abs_diff_eq!(l.grad_posterior_log_var[k], fd, epsilon = 1e-7);
        }
    }

    #[test]
    fn invalid_variances() {
        assert!(DiagGaussian::new(vec![0.0], vec![0.0]).is_err());
        assert!(DiagGaussian::new(vec![0.0], vec![-1.0]).is_err());
    }

    #[test]
    fn reparameterized_moments() {
        let q = DiagGaussian::new(vec![2.0], vec![0.25]).unwrap();
        let mut r = rng::stream_rng(5, 0);
        let n = 20_000;
        let draws: Vec<f64> = (0..n).map(|_| q.reparameterize(&mut r)[0]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!((mean - 2.0).abs() < 3.0 * 0.5 / (n as f64).sqrt());
    }

    #[test]
    fn gan_examples() {
        let l = gan_losses(&[0.5, 0.5], &[0.5]).unwrap();
        assert_abs_diff_eq!(l.discriminator, 1.386294, epsilon = 1e-6);
        let eps = 1e-9;
        let l = gan_losses(&[1.0 - eps], &[eps]).unwrap();
        assert!(l.discriminator < 1e-8);
        let l = gan_losses(&[0.9], &[0.25]).unwrap();
        assert_abs_diff_eq!(l.generator, 4f64.ln(), epsilon = 1e-12);
        assert!(gan_losses(&[1.0], &[0.5]).is_err());
        assert!(gan_losses(&[0.5], &[0.0]).is_err());
    }
}
