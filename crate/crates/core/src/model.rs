//! State of the co-evolving system and its diagnostics.
//!
//! The text model is a probability vector over a growable corpus; each text
//! owns a Gaussian image component. Diagnostics:
//!
//! * text diversity `H = 1 − Σ p_i²`
//! * image diversity `D = tr(Σ^{1/2})`
//! * image fidelity `F = ‖μ − μ_ref‖₂`

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, trace_sqrt, SymMatrix, ABS_EIG_FLOOR};

/// Stable identifier of a text in the corpus.
pub type TextId = u64;

#[derive(Clone, Debug, PartialEq)]
pub struct TextModel {
    probs: Vec<f64>,
    corpus_ids: Vec<TextId>,
}

impl TextModel {
    /// Texts get ids `0..probs.len()`.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        crate::sampling::check_distribution(&probs)?;
        let corpus_ids = (0..probs.len() as TextId).collect();
        Ok(Self { probs, corpus_ids })
    }

    pub fn uniform(k: usize) -> Self {
        Self {
            probs: vec![1.0 / k as f64; k],
            corpus_ids: (0..k as TextId).collect(),
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn corpus_ids(&self) -> &[TextId] {
        &self.corpus_ids
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn next_id(&self) -> TextId {
        self.corpus_ids.iter().max().map_or(0, |m| m + 1)
    }

    /// Replaces the probabilities, dividing by their exact sum.
    ///
    /// Returns the pre-normalization drift `|Σ p − 1|`.
    pub(crate) fn set_normalized(&mut self, mut probs: Vec<f64>) -> f64 {
        debug_assert_eq!(probs.len(), self.probs.len());
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        self.probs = probs;
        (total - 1.0).abs()
    }

    /// Scales existing mass by `1 − ε` and appends a new text holding `ε`.
    pub(crate) fn inject(&mut self, epsilon: f64) -> TextId {
        let id = self.next_id();
        for p in &mut self.probs {
            *p *= 1.0 - epsilon;
        }
        self.probs.push(epsilon);
        self.corpus_ids.push(id);
        id
    }
}

/// Gaussian image model `N(mean, cov)` for one text, plus its frozen reference mean.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageComponent {
    pub mean: Vec<f64>,
    pub cov: SymMatrix,
    ref_mean: Vec<f64>,
}

impl ImageComponent {
    /// The reference mean is the initial mean.
    pub fn new(mean: Vec<f64>, cov: SymMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimMismatch {
                expected: cov.dim(),
                found: mean.len(),
            });
        }
        Ok(Self {
            ref_mean: mean.clone(),
            mean,
            cov,
        })
    }

    pub fn with_reference(mean: Vec<f64>, cov: SymMatrix, ref_mean: Vec<f64>) -> Result<Self> {
        if ref_mean.len() != mean.len() {
            return Err(Error::DimMismatch {
                expected: mean.len(),
                found: ref_mean.len(),
            });
        }
        let mut c = Self::new(mean, cov)?;
        c.ref_mean = ref_mean;
        Ok(c)
    }

    pub fn ref_mean(&self) -> &[f64] {
        &self.ref_mean
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Point `i` of `k` evenly spaced on the unit circle, embedded in the first
/// two coordinates of `R^d`; the first point is `(1, 0, …)`.
pub fn circle_point(i: usize, k: usize, d: usize) -> Vec<f64> {
    circle_point_at_angle(2.0 * PI * i as f64 / k as f64, d)
}

pub fn circle_point_at_angle(angle: f64, d: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[0] = angle.cos();
    if d > 1 {
        v[1] = angle.sin();
    }
    v
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    pub text: TextModel,
    pub images: Vec<ImageComponent>,
    pub t: usize,
}

impl SystemState {
    pub fn new(text: TextModel, images: Vec<ImageComponent>) -> Result<Self> {
        if text.len() != images.len() {
            return Err(Error::DimMismatch {
                expected: text.len(),
                found: images.len(),
            });
        }
        if let Some(first) = images.first() {
            let d = first.dim();
            if let Some(bad) = images.iter().find(|c| c.dim() != d) {
                return Err(Error::DimMismatch {
                    expected: d,
                    found: bad.dim(),
                });
            }
        }
        Ok(Self { text, images, t: 0 })
    }

    /// Means evenly spaced on the unit circle, every covariance `cov_scale·I`.
    pub fn circle(probs: Vec<f64>, dim: usize, cov_scale: f64) -> Result<Self> {
        let k = probs.len();
        let text = TextModel::new(probs)?;
        let images = (0..k)
            .map(|i| ImageComponent::new(circle_point(i, k, dim), SymMatrix::scaled_identity(dim, cov_scale)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(text, images)
    }

    pub fn dim(&self) -> usize {
        self.images.first().map_or(0, |c| c.dim())
    }

    pub fn diagnostics(&self) -> Result<DiagnosticsRecord> {
        let per_text = self
            .text
            .corpus_ids()
            .iter()
            .zip(&self.images)
            .map(|(&text_id, c)| {
                Ok(TextDiagnostics {
                    text_id,
                    d: image_diversity(c)?,
                    f: image_fidelity(c),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DiagnosticsRecord {
            t: self.t,
            h: text_diversity(&self.text),
            per_text,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextDiagnostics {
    pub text_id: TextId,
    pub d: f64,
    pub f: f64,
}

/// Per-step diagnostics: text diversity and per-text image diversity/fidelity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: usize,
    pub h: f64,
    pub per_text: Vec<TextDiagnostics>,
}

pub fn text_diversity(text: &TextModel) -> f64 {
    1.0 - text.probs().iter().map(|p| p * p).sum::<f64>()
}

/// `tr(Σ^{1/2})` of the unfloored covariance.
pub fn image_diversity(c: &ImageComponent) -> Result<f64> {
    trace_sqrt(&c.cov)
}

pub fn image_fidelity(c: &ImageComponent) -> f64 {
    c.mean
        .iter()
        .zip(c.ref_mean())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Gaussian log-density with the covariance spectrum floored at
/// [`ABS_EIG_FLOOR`], prepared once and evaluated many times.
#[derive(Clone, Debug)]
pub struct LogDensity {
    mean: Vec<f64>,
    /// Eigenvectors, column-major.
    vectors: Vec<f64>,
    inv_values: Vec<f64>,
    log_norm: f64,
}

impl LogDensity {
    pub fn new(c: &ImageComponent) -> Result<Self> {
        let d = c.dim();
        let eig = sym_eigen(&c.cov)?;
        let floored: Vec<f64> = eig.values.iter().map(|&l| l.max(ABS_EIG_FLOOR)).collect();
        let log_det: f64 = floored.iter().map(|l| l.ln()).sum();
        Ok(Self {
            mean: c.mean.clone(),
            vectors: eig.vectors,
            inv_values: floored.iter().map(|l| 1.0 / l).collect(),
            log_norm: -0.5 * d as f64 * (2.0 * PI).ln() - 0.5 * log_det,
        })
    }

    #[inline]
    pub fn eval(&self, y: &[f64]) -> f64 {
        let d = self.mean.len();
        let mut quad = 0.0;
        for k in 0..d {
            let q = &self.vectors[k * d..(k + 1) * d];
            let proj: f64 = (0..d).map(|i| q[i] * (y[i] - self.mean[i])).sum();
            quad += proj * proj * self.inv_values[k];
        }
        self.log_norm - 0.5 * quad
    }
}

pub fn gaussian_log_density(c: &ImageComponent, y: &[f64]) -> Result<f64> {
    if y.len() != c.dim() {
        return Err(Error::DimMismatch {
            expected: c.dim(),
            found: y.len(),
        });
    }
    Ok(LogDensity::new(c)?.eval(y))
}

/// Posterior `p(x_i | y)` over the texts with positive prior, evaluated in
/// log space with a max shift.
#[derive(Clone, Debug)]
pub struct PosteriorEvaluator {
    k: usize,
    active: Vec<usize>,
    log_prior: Vec<f64>,
    densities: Vec<LogDensity>,
    scratch: Vec<f64>,
}

impl PosteriorEvaluator {
    pub fn new(text: &TextModel, images: &[ImageComponent]) -> Result<Self> {
        if text.len() != images.len() {
            return Err(Error::DimMismatch {
                expected: text.len(),
                found: images.len(),
            });
        }
        let active: Vec<usize> = (0..text.len()).filter(|&i| text.probs()[i] > 0.0).collect();
        if active.is_empty() {
            return Err(Error::BadDistribution("no text has positive probability".into()));
        }
        let log_prior = active.iter().map(|&i| text.probs()[i].ln()).collect();
        let densities = active
            .iter()
            .map(|&i| LogDensity::new(&images[i]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            k: text.len(),
            scratch: vec![0.0; active.len()],
            active,
            log_prior,
            densities,
        })
    }

    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    /// Adds the posterior vector at `y` into `acc` (length K).
    pub fn accumulate(&mut self, y: &[f64], acc: &mut [f64]) -> Result<()> {
        let mut max = f64::NEG_INFINITY;
        for (j, dens) in self.densities.iter().enumerate() {
            let lw = self.log_prior[j] + dens.eval(y);
            self.scratch[j] = lw;
            if lw > max {
                max = lw;
            }
        }
        if !max.is_finite() {
            return Err(Error::AllUnderflow);
        }
        let mut total = 0.0;
        for w in &mut self.scratch {
            *w = (*w - max).exp();
            total += *w;
        }
        for (j, &i) in self.active.iter().enumerate() {
            acc[i] += self.scratch[j] / total;
        }
        Ok(())
    }

    pub fn posterior(&mut self, y: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.k];
        self.accumulate(y, &mut out)?;
        Ok(out)
    }
}

/// Posterior `Z_i(y) = p_i q(y|x_i) / Σ_k p_k q(y|x_k)`; zero-prior texts get exactly 0.
pub fn posterior(text: &TextModel, images: &[ImageComponent], y: &[f64]) -> Result<Vec<f64>> {
    PosteriorEvaluator::new(text, images)?.posterior(y)
}
