//! Closed-form rates and bounds for the collapse dynamics, plus the Monte
//! Carlo estimate of the Wishart square-root scalar.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_sqrt, SymMatrix};
use crate::model::{ImageComponent, TextModel};
use crate::sampling::{sample_wishart, RngStream};

/// Lower envelope `(1 − 1/N)^t · H0` for the expected text diversity under a
/// frozen image model.
pub fn diversity_floor(h0: f64, n: usize, t: usize) -> f64 {
    h0 * (t as f64 * (-1.0 / n as f64).ln_1p()).exp()
}

/// Asymptotic per-step contraction of image diversity under a frozen text
/// model, `1 − (d+1) / (8(N+1)p)`, clamped to `[0, 1]`.
pub fn image_rate_approx(d: usize, n: usize, p: f64) -> f64 {
    if n < 10 * d {
        log::warn!("image_rate_approx: N = {n} is not large compared with d = {d}");
    }
    let rate = 1.0 - (d as f64 + 1.0) / (8.0 * (n as f64 + 1.0) * p);
    if !(0.0..=1.0).contains(&rate) {
        log::warn!("image_rate_approx: p = {p} is outside the asymptotic regime, clamping {rate}");
    }
    rate.clamp(0.0, 1.0)
}

/// Ratio bound between the slowest and fastest image-collapse rates when every
/// text probability is at least `eps`.
pub fn matthew_ratio_bound(d: usize, n: usize, k: usize, eps: f64) -> f64 {
    let pre = (d as f64 + 1.0) * (k as f64 - 1.0) / (8.0 * (n as f64 + 1.0));
    (pre / eps).max(1.0)
}

/// Bound on the expected mean drift under a frozen text model,
/// `√2·C / (√((N+1)p) · (1 − ρ))`.
pub fn frozen_text_fidelity_bound(c: f64, rho: f64, n: usize, p: f64) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::DegenerateRate { rho });
    }
    Ok(std::f64::consts::SQRT_2 * c / (((n as f64 + 1.0) * p).sqrt() * (1.0 - rho)))
}

/// Long-run floor on expected text diversity with corpus injection,
/// `2α(1−1/N)(ε−ε²) / (1 − (1−α)(1−1/N))`.
pub fn text_injection_floor(alpha: f64, eps: f64, n: usize) -> f64 {
    let keep = 1.0 - 1.0 / n as f64;
    2.0 * alpha * keep * (eps - eps * eps) / (1.0 - (1.0 - alpha) * keep)
}

/// Monte Carlo estimate of `α` with `E[W^{1/2}] = α·I` for `W ~ Wishart_d(I, dof)`.
///
/// Returns the mean of `tr(W^{1/2})/d` over `n_samples` draws and its standard error.
pub fn estimate_wishart_sqrt_alpha(d: usize, dof: usize, n_samples: usize, rng: &mut RngStream) -> Result<(f64, f64)> {
    if dof == 0 || n_samples < 2 || d == 0 {
        return Err(Error::InvalidConfig("need d ≥ 1, dof ≥ 1 and at least 2 samples".into()));
    }
    let scale = SymMatrix::identity(d);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_samples {
        let w = sample_wishart(&scale, dof, rng)?;
        let v = sym_sqrt(&w, 0.0)?.trace() / d as f64;
        sum += v;
        sum_sq += v * v;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok((mean, (var / n).sqrt()))
}

/// Floor on image diversity under user-content injection,
/// `α / √((N0−1)(N+N0−1)) · tr(Σ_user^{1/2})`.
pub fn image_injection_diversity_floor(alpha_wishart: f64, n: usize, n0: usize, tr_sqrt_user: f64) -> Result<f64> {
    if n0 < 2 {
        return Err(Error::TooFewInjected { n0 });
    }
    let denom = ((n0 as f64 - 1.0) * (n as f64 + n0 as f64 - 1.0)).sqrt();
    Ok(alpha_wishart * tr_sqrt_user / denom)
}

/// Outcome of the fidelity-limit calculation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum FidelityLimit {
    Bounded(f64),
    /// The mean/covariance recursion is not contractive for these inputs.
    Unbounded,
}

impl FidelityLimit {
    pub fn value(self) -> Option<f64> {
        match self {
            FidelityLimit::Bounded(v) => Some(v),
            FidelityLimit::Unbounded => None,
        }
    }
}

/// Long-run bound on expected fidelity with `N0` user images per step and
/// exactly `N·p` model images, with `λ = Np / (Np + N0)`:
/// `sqrt((1 − λ/(Np)) / (Np/λ − 1 − Np·λ) · tr Σ0)`.
pub fn image_injection_fidelity_limit(n: usize, p: f64, n0: usize, tr_sigma0: f64) -> Result<FidelityLimit> {
    if n0 == 0 {
        return Err(Error::TooFewInjected { n0 });
    }
    let np = n as f64 * p;
    let lambda = np / (np + n0 as f64);
    let denom = np / lambda - 1.0 - np * lambda;
    if !(denom > 0.0) {
        return Ok(FidelityLimit::Unbounded);
    }
    let num = 1.0 - lambda / np;
    Ok(FidelityLimit::Bounded((num / denom * tr_sigma0).sqrt()))
}

/// Smallest distance between means of texts with positive probability.
pub fn min_pairwise_mean_distance(text: &TextModel, images: &[ImageComponent]) -> Result<f64> {
    let live: Vec<&ImageComponent> = text
        .probs()
        .iter()
        .zip(images)
        .filter(|(p, _)| **p > 0.0)
        .map(|(_, c)| c)
        .collect();
    if live.len() < 2 {
        return Err(Error::TooFewComponents { found: live.len() });
    }
    let mut best = f64::INFINITY;
    for (i, a) in live.iter().enumerate() {
        for b in &live[i + 1..] {
            let dist = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            best = best.min(dist);
        }
    }
    Ok(best)
}

/// Named inputs for every calculator, with the default experiment values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub d: usize,
    pub n: usize,
    pub k: usize,
    pub p: f64,
    pub h0: f64,
    pub t: usize,
    pub c: f64,
    pub rho: f64,
    pub alpha_inj: f64,
    pub eps_inj: f64,
    pub n0: usize,
    pub tr_sigma0: f64,
    pub tr_sqrt_sigma_user: f64,
    pub alpha_wishart: f64,
}

impl Default for BoundInputs {
    fn default() -> Self {
        Self {
            d: 2,
            n: 1000,
            k: 5,
            p: 1.0,
            h0: 0.8,
            t: 0,
            c: 2.0,
            rho: image_rate_approx(2, 1000, 1.0),
            alpha_inj: 0.05,
            eps_inj: 0.1,
            n0: 100,
            tr_sigma0: 2.0,
            tr_sqrt_sigma_user: 2.0,
            alpha_wishart: 1.0,
        }
    }
}

impl BoundInputs {
    /// `λ = Np / (Np + N0)`.
    pub fn lambda(&self) -> f64 {
        let np = self.n as f64 * self.p;
        np / (np + self.n0 as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SystemState;
    use crate::sampling::derive_stream;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn diversity_floor_examples() {
        assert_eq!(diversity_floor(0.8, 1000, 0), 0.8);
        assert!(close(diversity_floor(0.8, 1000, 1000), 0.8 * 0.999f64.powi(1000), 1e-13));
        assert!(close(diversity_floor(0.8, 1000, 1000), 0.2942, 1e-4));
        assert!(close(diversity_floor(0.8, 1_000_000_000, 10), 0.8, 1e-7));
    }

    #[test]
    fn image_rate_examples() {
        assert!(close(image_rate_approx(2, 1000, 0.34), 1.0 - 3.0 / (8.0 * 1001.0 * 0.34), 1e-15));
        assert!(close(image_rate_approx(2, 1000, 0.34), 0.998898, 1e-6));
        assert!(close(image_rate_approx(2, 1000, 0.06), 0.993756, 1e-6));
        assert!(close(image_rate_approx(2, 1000, 1.0), 0.999625, 1e-6));
        assert_eq!(image_rate_approx(2, 1, 1e-6), 0.0);
    }

    #[test]
    fn matthew_examples() {
        assert_eq!(matthew_ratio_bound(2, 1000, 5, 0.1), 1.0);
        assert!(close(matthew_ratio_bound(2, 1000, 5, 1e-4), 12.0 / 8008.0 / 1e-4, 1e-9));
        assert!(close(matthew_ratio_bound(2, 1000, 5, 1e-4), 14.985, 1e-3));
        assert_eq!(matthew_ratio_bound(2, 1000, 5, f64::INFINITY), 1.0);
    }

    #[test]
    fn frozen_text_fidelity_examples() {
        let v = frozen_text_fidelity_bound(2.0, 0.998898, 1000, 0.34).unwrap();
        assert!(close(v, 2f64.sqrt() * 2.0 / (340.34f64.sqrt() * (1.0 - 0.998898)), 1e-9));
        assert!(close(v, 139.1, 0.2));
        assert_eq!(frozen_text_fidelity_bound(0.0, 0.9, 1000, 0.34).unwrap(), 0.0);
        assert!(close(frozen_text_fidelity_bound(1.0, 0.5, 3, 1.0).unwrap(), 2f64.sqrt(), 1e-15));
        assert!(matches!(frozen_text_fidelity_bound(1.0, 1.0, 3, 1.0), Err(Error::DegenerateRate { .. })));
    }

    #[test]
    fn text_injection_examples() {
        assert!(close(text_injection_floor(0.05, 0.1, 1000), 0.17647, 1e-5));
        assert_eq!(text_injection_floor(0.0, 0.1, 1000), 0.0);
        assert!(close(text_injection_floor(1.0, 0.5, 1000), 0.4995, 1e-12));
    }

    #[test]
    fn image_injection_floor_examples() {
        assert_eq!(image_injection_diversity_floor(1.3, 1000, 100, 0.0).unwrap(), 0.0);
        assert!(close(image_injection_diversity_floor(0.7, 0, 2, 2.0).unwrap(), 1.4, 1e-15));
        let v = image_injection_diversity_floor(1.0, 1000, 100, 2.0).unwrap();
        assert!(close(v, 2.0 / (99.0f64 * 1099.0).sqrt(), 1e-15));
        assert!(close(v / 2.0, 0.003032, 1e-6));
        assert!(matches!(image_injection_diversity_floor(1.0, 1000, 1, 2.0), Err(Error::TooFewInjected { n0: 1 })));
    }

    #[test]
    fn fidelity_limit_examples() {
        let v = image_injection_fidelity_limit(1000, 1.0, 100, 2.0).unwrap().value().unwrap();
        let lambda: f64 = 10.0 / 11.0;
        let oracle = ((1.0 - lambda / 1000.0) / (1000.0 / lambda - 1.0 - 1000.0 * lambda) * 2.0).sqrt();
        assert!(close(v, oracle, 1e-15));
        assert!(close(v, 0.10258, 1e-5));
        let far = image_injection_fidelity_limit(1000, 1.0, 1_000_000, 2.0).unwrap().value().unwrap();
        assert!(far < 0.002);
        assert_eq!(image_injection_fidelity_limit(1000, 1.0, 100, 0.0).unwrap().value(), Some(0.0));
        // no model images at all leaves λ undefined
        assert_eq!(image_injection_fidelity_limit(1000, 0.0, 10, 2.0).unwrap(), FidelityLimit::Unbounded);
    }

    #[test]
    fn wishart_alpha_chi_oracles() {
        // E[χ_3] = 2√2/√π and E[χ_1] = √(2/π)
        let chi3 = 2.0 * (2.0 / std::f64::consts::PI).sqrt();
        let chi1 = (2.0 / std::f64::consts::PI).sqrt();
        let mut rng = derive_stream(10, 0, 0);
        let (a, se) = estimate_wishart_sqrt_alpha(1, 3, 20_000, &mut rng).unwrap();
        assert!((a - chi3).abs() < 4.0 * se, "{a} ± {se} vs {chi3}");
        let (a, se) = estimate_wishart_sqrt_alpha(1, 1, 20_000, &mut rng).unwrap();
        assert!((a - chi1).abs() < 4.0 * se, "{a} ± {se} vs {chi1}");
        let (a, _) = estimate_wishart_sqrt_alpha(2, 10_000, 1000, &mut rng).unwrap();
        assert!((a / 100.0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn min_distance_examples() {
        let s = SystemState::circle(vec![0.2; 5], 2, 1.0).unwrap();
        let v = min_pairwise_mean_distance(&s.text, &s.images).unwrap();
        assert!(close(v, 2.0 * (std::f64::consts::PI / 5.0).sin(), 1e-12));
        assert!(close(v, 1.17557, 1e-5));
        let two = vec![
            ImageComponent::new(vec![0.0, 0.0], SymMatrix::identity(2)).unwrap(),
            ImageComponent::new(vec![3.0, 4.0], SymMatrix::identity(2)).unwrap(),
        ];
        assert_eq!(min_pairwise_mean_distance(&TextModel::uniform(2), &two).unwrap(), 5.0);
        let same = vec![two[0].clone(), two[0].clone()];
        assert_eq!(min_pairwise_mean_distance(&TextModel::uniform(2), &same).unwrap(), 0.0);
        let one = TextModel::new(vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            min_pairwise_mean_distance(&one, &two),
            Err(Error::TooFewComponents { found: 1 })
        ));
    }
}
