//! Training procedures: co-evolving text/image updates, text injection and
//! user-content image injection.
//!
//! Every run owns one random stream per phase so that switching one feature
//! on never shifts the draws seen by another.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_sqrt, SymMatrix};
use crate::model::{
    circle_point_at_angle, DiagnosticsRecord, ImageComponent, PosteriorEvaluator, SystemState, TextModel,
};
use crate::sampling::{apportion_counts, derive_stream, sample_counts, RngStream};

/// Phase tags mixed into the per-run stream labels.
pub mod phase {
    pub const TEXT: u64 = 1;
    pub const IMAGE: u64 = 2;
    pub const INJECT: u64 = 3;
    pub const USER: u64 = 4;
    pub const SNAPSHOT: u64 = 5;
}

/// Largest tolerated drift of `Σ p` before renormalization without a warning.
pub const RENORM_DRIFT_TOL: f64 = 1e-9;

/// Initial state: means evenly spaced on the unit circle, covariances `cov_scale·I`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub probs: Vec<f64>,
    pub cov_scale: f64,
}

impl InitSpec {
    pub fn uniform(k: usize, cov_scale: f64) -> Self {
        Self {
            probs: vec![1.0 / k as f64; k],
            cov_scale,
        }
    }

    pub fn build(&self, dim: usize) -> Result<SystemState> {
        SystemState::circle(self.probs.clone(), dim, self.cov_scale)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Samples per update.
    pub n: usize,
    /// Number of macro steps.
    pub steps: usize,
    /// Text updates in each macro step.
    pub m_schedule: Vec<usize>,
    /// Image updates in each macro step.
    pub n_schedule: Vec<usize>,
    /// Use `N·p_i` image counts (largest remainder) instead of a multinomial
    /// draw in the image phase.
    pub deterministic_counts: bool,
    pub dim: usize,
    pub init: InitSpec,
}

impl TrainingConfig {
    /// Same `M_t = m` and `N_t = nt` at every step.
    pub fn constant(n: usize, steps: usize, m: usize, nt: usize, dim: usize, init: InitSpec) -> Self {
        Self {
            n,
            steps,
            m_schedule: vec![m; steps],
            n_schedule: vec![nt; steps],
            deterministic_counts: false,
            dim,
            init,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.m_schedule.len() != self.steps || self.n_schedule.len() != self.steps {
            return bad(format!(
                "schedules must have length {} (got {} and {})",
                self.steps,
                self.m_schedule.len(),
                self.n_schedule.len()
            ));
        }
        if self.n == 0 {
            return bad("samples per update must be positive".into());
        }
        if self.n < 2 && self.n_schedule.iter().any(|&v| v > 0) {
            return bad("image updates need at least 2 samples per update".into());
        }
        if self.dim == 0 {
            return bad("image dimension must be positive".into());
        }
        if !(self.init.cov_scale >= 0.0 && self.init.cov_scale.is_finite()) {
            return bad("initial covariance scale must be finite and nonnegative".into());
        }
        crate::sampling::check_distribution(&self.init.probs)
    }
}

/// Image model attached to an injected text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NewComponent {
    /// Mean at a uniformly random angle on the unit circle, covariance `cov_scale·I`.
    RandomCircle { cov_scale: f64 },
    Fixed { mean: Vec<f64>, cov: Vec<Vec<f64>> },
}

impl Default for NewComponent {
    fn default() -> Self {
        NewComponent::RandomCircle { cov_scale: 1.0 }
    }
}

impl NewComponent {
    fn draw(&self, dim: usize, rng: &mut RngStream) -> Result<ImageComponent> {
        match self {
            NewComponent::RandomCircle { cov_scale } => {
                let angle = 2.0 * PI * rng.next_f64();
                ImageComponent::new(circle_point_at_angle(angle, dim), SymMatrix::scaled_identity(dim, *cov_scale))
            }
            NewComponent::Fixed { mean, cov } => ImageComponent::new(mean.clone(), SymMatrix::from_rows(cov)?),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextInjectionConfig {
    pub alpha: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub new_component: NewComponent,
}

impl TextInjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!("alpha = {} must lie in [0, 1]", self.alpha)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidConfig(format!("epsilon = {} must lie in (0, 1)", self.epsilon)));
        }
        Ok(())
    }
}

/// User-content injection: `n0` draws per text from `N(user_means[i], user_covs[i])`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageInjectionConfig {
    pub n0: usize,
    pub user_means: Vec<Vec<f64>>,
    pub user_covs: Vec<SymMatrix>,
}

impl ImageInjectionConfig {
    /// User distribution equal to each text's initial image model.
    pub fn matching(state: &SystemState, n0: usize) -> Self {
        Self {
            n0,
            user_means: state.images.iter().map(|c| c.ref_mean().to_vec()).collect(),
            user_covs: state.images.iter().map(|c| c.cov.clone()).collect(),
        }
    }

    pub fn validate(&self, k: usize, dim: usize) -> Result<()> {
        if self.user_means.len() < k || self.user_covs.len() < k {
            return Err(Error::InvalidConfig(format!(
                "user distribution given for {} texts, corpus has {k}",
                self.user_means.len().min(self.user_covs.len())
            )));
        }
        for (m, c) in self.user_means.iter().zip(&self.user_covs) {
            if m.len() != dim || c.dim() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: if m.len() != dim { m.len() } else { c.dim() },
                });
            }
            crate::linalg::sym_eigen(c).and_then(|e| {
                let scale: f64 = e.values.iter().map(|v| v.abs()).sum();
                if e.values[0] < -1e-10 * scale {
                    Err(Error::NotPsd { min_eig: e.values[0] })
                } else {
                    Ok(())
                }
            })?;
        }
        Ok(())
    }
}

/// Per-run streams, one per phase; optional phases exist only when enabled.
#[derive(Clone, Debug)]
pub struct RunStreams {
    pub text: RngStream,
    pub image: RngStream,
    pub inject: Option<RngStream>,
    pub user: Option<RngStream>,
}

impl RunStreams {
    pub fn new(base_seed: u64, run_index: u64, text_injection: bool, image_injection: bool) -> Self {
        Self {
            text: derive_stream(base_seed, run_index, phase::TEXT),
            image: derive_stream(base_seed, run_index, phase::IMAGE),
            inject: text_injection.then(|| derive_stream(base_seed, run_index, phase::INJECT)),
            user: image_injection.then(|| derive_stream(base_seed, run_index, phase::USER)),
        }
    }
}

/// Bookkeeping surfaced in run metadata.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounters {
    /// Text updates whose probabilities drifted more than [`RENORM_DRIFT_TOL`]
    /// from 1 before renormalization.
    pub renorm_warnings: u64,
    pub injections: u64,
}

/// Symmetric square root as a dense row-major `d × d` array.
fn root_of(cov: &SymMatrix) -> Result<Vec<f64>> {
    Ok(sym_sqrt(cov, 0.0)?.as_slice().to_vec())
}

#[inline]
fn affine(mean: &[f64], root: &[f64], z: &[f64], out: &mut [f64]) {
    let d = mean.len();
    for i in 0..d {
        let row = &root[i * d..(i + 1) * d];
        out[i] = mean[i] + row.iter().zip(z).map(|(r, x)| r * x).sum::<f64>();
    }
}

fn text_update_counted(state: &SystemState, n: usize, rng: &mut RngStream, counters: &mut RunCounters) -> Result<TextModel> {
    if n == 0 {
        return Err(Error::InvalidConfig("text update needs at least one sample".into()));
    }
    let k = state.text.len();
    let d = state.dim();
    let counts = sample_counts(state.text.probs(), n, rng)?;
    let mut eval = PosteriorEvaluator::new(&state.text, &state.images)?;
    let mut acc = vec![0.0; k];
    let mut z = vec![0.0; d];
    let mut y = vec![0.0; d];
    for (c, comp) in counts.iter().zip(&state.images) {
        if *c == 0 {
            continue;
        }
        let root = root_of(&comp.cov)?;
        for _ in 0..*c {
            rng.fill_standard_normal(&mut z);
            affine(&comp.mean, &root, &z, &mut y);
            eval.accumulate(&y, &mut acc)?;
        }
    }
    for a in &mut acc {
        *a /= n as f64;
    }
    let mut text = state.text.clone();
    if text.set_normalized(acc) > RENORM_DRIFT_TOL {
        counters.renorm_warnings += 1;
    }
    Ok(text)
}

/// One text-model update: draw `n` texts, one image per drawn text from the
/// current image model, and average the resulting posteriors.
pub fn text_update_once(state: &SystemState, n: usize, rng: &mut RngStream) -> Result<TextModel> {
    text_update_counted(state, n, rng, &mut RunCounters::default())
}

fn phase_counts(text: &TextModel, n: usize, deterministic: bool, rng: &mut RngStream) -> Result<Vec<usize>> {
    if deterministic {
        apportion_counts(text.probs(), n)
    } else {
        sample_counts(text.probs(), n, rng)
    }
}

/// Sample mean and unbiased covariance of `count` fresh draws from `comp`.
///
/// Statistics are formed on the whitened draws and mapped back through the
/// square root, `μ' = μ + R·z̄` and `Σ' = R·S_z·R`, which keeps full relative
/// precision while the covariance shrinks by many orders of magnitude.
fn resample_component(comp: &ImageComponent, count: usize, rng: &mut RngStream) -> Result<ImageComponent> {
    let d = comp.dim();
    let root = root_of(&comp.cov)?;
    let mut zs = vec![0.0; count * d];
    rng.fill_standard_normal(&mut zs);
    let mut zbar = vec![0.0; d];
    for z in zs.chunks_exact(d) {
        for (m, v) in zbar.iter_mut().zip(z) {
            *m += v;
        }
    }
    for m in &mut zbar {
        *m /= count as f64;
    }
    let mut s = vec![0.0; d * d];
    for z in zs.chunks_exact(d) {
        for i in 0..d {
            let di = z[i] - zbar[i];
            for j in i..d {
                s[i * d + j] += di * (z[j] - zbar[j]);
            }
        }
    }
    let denom = (count - 1) as f64;
    for i in 0..d {
        for j in i..d {
            s[i * d + j] /= denom;
            s[j * d + i] = s[i * d + j];
        }
    }
    let mut mean = vec![0.0; d];
    affine(&comp.mean, &root, &zbar, &mut mean);
    // R·S·R with R symmetric; fill the upper triangle then mirror
    let mut rs = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            rs[i * d + j] = (0..d).map(|k| root[i * d + k] * s[k * d + j]).sum();
        }
    }
    let mut cov = vec![0.0; d * d];
    for i in 0..d {
        for j in i..d {
            let v: f64 = (0..d).map(|k| rs[i * d + k] * root[k * d + j]).sum();
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    ImageComponent::with_reference(mean, SymMatrix::new(d, cov)?, comp.ref_mean().to_vec())
}

fn image_update_counts(state: &SystemState, counts: &[usize], rng: &mut RngStream) -> Result<Vec<ImageComponent>> {
    state
        .images
        .iter()
        .zip(counts)
        .map(|(comp, &c)| {
            if c >= 2 {
                resample_component(comp, c, rng)
            } else {
                Ok(comp.clone())
            }
        })
        .collect()
}

/// One image-model update: draw `n` texts from the current text model and
/// refit each text's Gaussian to its own draws.
///
/// Texts drawn fewer than twice keep their component unchanged.
pub fn image_update_once(state: &SystemState, n: usize, rng: &mut RngStream) -> Result<Vec<ImageComponent>> {
    let counts = sample_counts(state.text.probs(), n, rng)?;
    image_update_counts(state, &counts, rng)
}

/// Pooled refit over `count` model draws and `n0` user draws.
fn pooled_component(
    comp: &ImageComponent,
    count: usize,
    user_mean: &[f64],
    user_cov: &SymMatrix,
    n0: usize,
    rng: &mut RngStream,
    user_rng: &mut RngStream,
) -> Result<ImageComponent> {
    let d = comp.dim();
    let total = count + n0;
    // offsets from the current mean, model draws first
    let mut pts = vec![0.0; total * d];
    let zero = vec![0.0; d];
    let mut z = vec![0.0; d];
    if count > 0 {
        let root = root_of(&comp.cov)?;
        for x in pts[..count * d].chunks_exact_mut(d) {
            rng.fill_standard_normal(&mut z);
            affine(&zero, &root, &z, x);
        }
    }
    let shift: Vec<f64> = user_mean.iter().zip(&comp.mean).map(|(u, m)| u - m).collect();
    let user_root = root_of(user_cov)?;
    for x in pts[count * d..].chunks_exact_mut(d) {
        user_rng.fill_standard_normal(&mut z);
        affine(&shift, &user_root, &z, x);
    }
    if total < 2 {
        return Ok(comp.clone());
    }
    let mut bar = vec![0.0; d];
    for x in pts.chunks_exact(d) {
        for (b, v) in bar.iter_mut().zip(x) {
            *b += v;
        }
    }
    for b in &mut bar {
        *b /= total as f64;
    }
    let mut cov = vec![0.0; d * d];
    for x in pts.chunks_exact(d) {
        for i in 0..d {
            let di = x[i] - bar[i];
            for j in i..d {
                cov[i * d + j] += di * (x[j] - bar[j]);
            }
        }
    }
    let denom = (total - 1) as f64;
    for i in 0..d {
        for j in i..d {
            cov[i * d + j] /= denom;
            cov[j * d + i] = cov[i * d + j];
        }
    }
    let mean = comp.mean.iter().zip(&bar).map(|(m, b)| m + b).collect();
    ImageComponent::with_reference(mean, SymMatrix::new(d, cov)?, comp.ref_mean().to_vec())
}

/// Image update with user-content injection.
///
/// Each text pools its model draws (multinomial, or `N·p_i` by largest
/// remainder when `deterministic` is set) with `n0` user draws, and refits
/// with divisor `N_i + N0 − 1`. Texts with fewer than two pooled points keep
/// their component. With `n0 = 0` this is exactly the plain image update.
pub fn image_update_with_injection(
    state: &SystemState,
    n: usize,
    deterministic: bool,
    inj: &ImageInjectionConfig,
    rng: &mut RngStream,
    user_rng: &mut RngStream,
) -> Result<Vec<ImageComponent>> {
    let counts = phase_counts(&state.text, n, deterministic, rng)?;
    if inj.n0 == 0 {
        return image_update_counts(state, &counts, rng);
    }
    inj.validate(state.text.len(), state.dim())?;
    state
        .images
        .iter()
        .zip(&counts)
        .enumerate()
        .map(|(i, (comp, &c))| pooled_component(comp, c, &inj.user_means[i], &inj.user_covs[i], inj.n0, rng, user_rng))
        .collect()
}

/// Injects a text with probability `alpha` using the injection stream.
///
/// Returns whether an injection happened.
pub fn maybe_inject_text(state: &mut SystemState, inj: &TextInjectionConfig, rng: &mut RngStream) -> Result<bool> {
    if !rng.bernoulli(inj.alpha) {
        return Ok(false);
    }
    force_inject_text(state, inj, rng)?;
    Ok(true)
}

/// Unconditionally scales existing mass by `1 − ε` and appends a new text holding `ε`.
pub fn force_inject_text(state: &mut SystemState, inj: &TextInjectionConfig, rng: &mut RngStream) -> Result<()> {
    let comp = inj.new_component.draw(state.dim(), rng)?;
    if comp.dim() != state.dim() {
        return Err(Error::DimMismatch {
            expected: state.dim(),
            found: comp.dim(),
        });
    }
    state.text.inject(inj.epsilon);
    state.images.push(comp);
    Ok(())
}

/// One macro step with any combination of the two injection features.
pub fn macro_step_full(
    state: &mut SystemState,
    cfg: &TrainingConfig,
    text_inj: Option<&TextInjectionConfig>,
    image_inj: Option<&ImageInjectionConfig>,
    streams: &mut RunStreams,
    counters: &mut RunCounters,
) -> Result<DiagnosticsRecord> {
    let t = state.t;
    if t >= cfg.steps {
        return Err(Error::InvalidConfig(format!("step {t} is past the horizon {}", cfg.steps)));
    }
    if let Some(inj) = text_inj {
        let rng = streams
            .inject
            .as_mut()
            .ok_or_else(|| Error::InvalidConfig("text injection stream not enabled".into()))?;
        if maybe_inject_text(state, inj, rng)? {
            counters.injections += 1;
        }
    }
    for _ in 0..cfg.m_schedule[t] {
        state.text = text_update_counted(state, cfg.n, &mut streams.text, counters)?;
    }
    for _ in 0..cfg.n_schedule[t] {
        state.images = match image_inj {
            Some(inj) => {
                let user = streams
                    .user
                    .as_mut()
                    .ok_or_else(|| Error::InvalidConfig("user-content stream not enabled".into()))?;
                image_update_with_injection(state, cfg.n, cfg.deterministic_counts, inj, &mut streams.image, user)?
            }
            None => {
                let counts = phase_counts(&state.text, cfg.n, cfg.deterministic_counts, &mut streams.image)?;
                image_update_counts(state, &counts, &mut streams.image)?
            }
        };
    }
    state.t += 1;
    state.diagnostics()
}

/// `M_t` text updates with the image model fixed, then `N_t` image updates
/// drawing texts from the freshly updated text model.
pub fn macro_step(
    state: &mut SystemState,
    cfg: &TrainingConfig,
    streams: &mut RunStreams,
    counters: &mut RunCounters,
) -> Result<DiagnosticsRecord> {
    macro_step_full(state, cfg, None, None, streams, counters)
}

pub fn macro_step_with_text_injection(
    state: &mut SystemState,
    cfg: &TrainingConfig,
    inj: &TextInjectionConfig,
    streams: &mut RunStreams,
    counters: &mut RunCounters,
) -> Result<DiagnosticsRecord> {
    macro_step_full(state, cfg, Some(inj), None, streams, counters)
}

/// How the user distribution for image injection is chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum UserSource {
    /// Each text's initial image model.
    Initial,
    Explicit(ImageInjectionConfig),
}

/// Everything needed to reproduce a single run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub training: TrainingConfig,
    pub text_injection: Option<TextInjectionConfig>,
    /// Injected count and user distribution.
    pub image_injection: Option<(usize, UserSource)>,
}

impl RunSpec {
    pub fn plain(training: TrainingConfig) -> Self {
        Self {
            training,
            text_injection: None,
            image_injection: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        if let Some(inj) = &self.text_injection {
            inj.validate()?;
        }
        Ok(())
    }
}

/// Result of driving one run to completion or abort.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    /// Set when the run stopped early; the message names the failure.
    pub aborted: Option<String>,
    pub counters: RunCounters,
}

/// Drives one run, handing every state (including `t = 0`) and its
/// diagnostics to `observe`.
pub fn run_with_observer(
    spec: &RunSpec,
    base_seed: u64,
    run_index: u64,
    mut observe: impl FnMut(&SystemState, &DiagnosticsRecord),
) -> Result<RunOutcome> {
    spec.validate()?;
    let cfg = &spec.training;
    let mut state = cfg.init.build(cfg.dim)?;
    let image_inj = spec.image_injection.as_ref().map(|(n0, src)| match src {
        UserSource::Initial => ImageInjectionConfig::matching(&state, *n0),
        UserSource::Explicit(c) => ImageInjectionConfig { n0: *n0, ..c.clone() },
    });
    let mut streams = RunStreams::new(base_seed, run_index, spec.text_injection.is_some(), image_inj.is_some());
    let mut outcome = RunOutcome::default();
    let first = state.diagnostics()?;
    observe(&state, &first);
    for _ in 0..cfg.steps {
        match macro_step_full(
            &mut state,
            cfg,
            spec.text_injection.as_ref(),
            image_inj.as_ref(),
            &mut streams,
            &mut outcome.counters,
        ) {
            Ok(rec) => observe(&state, &rec),
            Err(e) => {
                log::warn!("run {run_index} aborted at t = {}: {e}", state.t);
                outcome.aborted = Some(format!("t = {}: {e}", state.t));
                break;
            }
        }
    }
    Ok(outcome)
}

/// Full diagnostics trajectory; an aborted run keeps its prefix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<DiagnosticsRecord>,
    pub outcome: RunOutcome,
}

pub fn run_trajectory(spec: &RunSpec, base_seed: u64, run_index: u64) -> Result<Trajectory> {
    let mut records = Vec::with_capacity(spec.training.steps + 1);
    let outcome = run_with_observer(spec, base_seed, run_index, |_, r| records.push(r.clone()))?;
    Ok(Trajectory { records, outcome })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::text_diversity;

    fn cfg(k: usize, n: usize, steps: usize, m: usize, nt: usize, s: f64) -> TrainingConfig {
        TrainingConfig::constant(n, steps, m, nt, 2, InitSpec::uniform(k, s))
    }

    #[test]
    fn one_hot_is_absorbing() {
        let mut state = SystemState::circle(vec![0.0, 1.0, 0.0], 2, 1.0).unwrap();
        let mut rng = derive_stream(1, 0, phase::TEXT);
        for _ in 0..5 {
            state.text = text_update_once(&state, 100, &mut rng).unwrap();
        }
        assert_eq!(state.text.probs(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn zero_prior_texts_stay_zero() {
        let state = SystemState::circle(vec![0.5, 0.0, 0.5], 2, 1.0).unwrap();
        let mut rng = derive_stream(2, 0, phase::TEXT);
        let t = text_update_once(&state, 500, &mut rng).unwrap();
        assert_eq!(t.probs()[1], 0.0);
        assert!((t.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_single_component_is_fixed() {
        let state = SystemState::new(
            TextModel::uniform(1),
            vec![ImageComponent::new(vec![0.3, -0.2], SymMatrix::zeros(2)).unwrap()],
        )
        .unwrap();
        let mut rng = derive_stream(3, 0, phase::IMAGE);
        let out = image_update_once(&state, 50, &mut rng).unwrap();
        assert_eq!(out[0].mean, vec![0.3, -0.2]);
        assert_eq!(out[0].cov, SymMatrix::zeros(2));
    }

    #[test]
    fn sparse_texts_are_skipped() {
        // with p = (1 − 1e-300, 1e-300) the second text is never drawn
        let state = SystemState::circle(vec![1.0 - 1e-300, 1e-300], 2, 1.0).unwrap();
        let mut rng = derive_stream(4, 0, phase::IMAGE);
        let out = image_update_once(&state, 100, &mut rng).unwrap();
        assert_eq!(out[1], state.images[1]);
        assert_ne!(out[0], state.images[0]);
    }

    #[test]
    fn large_sample_covariance_is_unbiased() {
        let state = SystemState::circle(vec![1.0], 2, 1.0).unwrap();
        let mut rng = derive_stream(5, 0, phase::IMAGE);
        let out = image_update_once(&state, 1_000_000, &mut rng).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((out[0].cov.get(i, j) - want).abs() < 0.01);
            }
        }
    }

    #[test]
    fn macro_step_with_no_updates_only_advances_time() {
        let c = cfg(5, 100, 3, 0, 0, 1.0);
        let mut state = c.init.build(2).unwrap();
        let before = state.clone();
        let mut streams = RunStreams::new(9, 0, false, false);
        let rec = macro_step(&mut state, &c, &mut streams, &mut RunCounters::default()).unwrap();
        assert_eq!(rec.t, 1);
        assert_eq!(state.text, before.text);
        assert_eq!(state.images, before.images);
    }

    #[test]
    fn image_phase_uses_updated_text_model() {
        // replay one macro step by hand on the same streams
        let c = cfg(3, 200, 1, 1, 1, 0.5);
        let mut state = c.init.build(2).unwrap();
        let mut streams = RunStreams::new(11, 3, false, false);
        macro_step(&mut state, &c, &mut streams, &mut RunCounters::default()).unwrap();

        let mut manual = c.init.build(2).unwrap();
        let mut fresh = RunStreams::new(11, 3, false, false);
        manual.text = text_update_once(&manual, 200, &mut fresh.text).unwrap();
        manual.images = image_update_once(&manual, 200, &mut fresh.image).unwrap();
        assert_eq!(state.text, manual.text);
        assert_eq!(state.images, manual.images);
        assert_eq!(fresh.image.next_u64(), streams.image.next_u64());
    }

    #[test]
    fn forced_text_injection_arithmetic() {
        let mut state = SystemState::circle(vec![0.5, 0.5], 2, 1.0).unwrap();
        let inj = TextInjectionConfig {
            alpha: 1.0,
            epsilon: 0.1,
            new_component: NewComponent::default(),
        };
        let mut rng = derive_stream(1, 0, phase::INJECT);
        assert!((text_diversity(&state.text) - 0.5).abs() < 1e-15);
        force_inject_text(&mut state, &inj, &mut rng).unwrap();
        assert_eq!(state.text.probs(), &[0.45, 0.45, 0.1]);
        assert!((text_diversity(&state.text) - 0.585).abs() < 1e-15);
        assert_eq!(state.text.corpus_ids(), &[0, 1, 2]);
        let c = &state.images[2];
        assert_eq!(c.mean, c.ref_mean());
        assert!((c.mean.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);

        let mut one_hot = SystemState::circle(vec![1.0], 2, 1.0).unwrap();
        force_inject_text(&mut one_hot, &inj, &mut rng).unwrap();
        assert!((text_diversity(&one_hot.text) - 0.18).abs() < 1e-15);
    }

    #[test]
    fn zero_alpha_matches_plain_trajectory() {
        let training = cfg(5, 200, 20, 1, 1, 1.0);
        let plain = run_trajectory(&RunSpec::plain(training.clone()), 5, 2).unwrap();
        let with = RunSpec {
            training,
            text_injection: Some(TextInjectionConfig {
                alpha: 0.0,
                epsilon: 0.1,
                new_component: NewComponent::default(),
            }),
            image_injection: None,
        };
        assert_eq!(plain, run_trajectory(&with, 5, 2).unwrap());
    }

    #[test]
    fn corpus_grows_by_injection_count() {
        let spec = RunSpec {
            training: cfg(2, 100, 50, 1, 1, 1.0),
            text_injection: Some(TextInjectionConfig {
                alpha: 0.3,
                epsilon: 0.05,
                new_component: NewComponent::default(),
            }),
            image_injection: None,
        };
        let mut last_k = 0;
        let out = run_with_observer(&spec, 3, 0, |s, _| last_k = s.text.len()).unwrap();
        assert!(out.counters.injections > 0);
        assert_eq!(last_k as u64, 2 + out.counters.injections);
    }

    #[test]
    fn zero_injected_images_reduce_to_plain_update() {
        let state = SystemState::circle(vec![0.3, 0.7], 2, 1.0).unwrap();
        let inj = ImageInjectionConfig::matching(&state, 0);
        let mut a = derive_stream(8, 0, phase::IMAGE);
        let mut b = a.clone();
        let mut user = derive_stream(8, 0, phase::USER);
        let x = image_update_with_injection(&state, 300, false, &inj, &mut a, &mut user).unwrap();
        let y = image_update_once(&state, 300, &mut b).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn user_only_update_is_plain_sample_statistics() {
        let mu = vec![0.5, -0.5];
        let user_cov = SymMatrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let state = SystemState::new(
            TextModel::uniform(1),
            vec![ImageComponent::new(mu.clone(), SymMatrix::zeros(2)).unwrap()],
        )
        .unwrap();
        let inj = ImageInjectionConfig {
            n0: 7,
            user_means: vec![mu.clone()],
            user_covs: vec![user_cov.clone()],
        };
        // n = 0 model draws: deterministic apportionment of zero samples
        let mut rng = derive_stream(1, 0, phase::IMAGE);
        let mut user = derive_stream(1, 0, phase::USER);
        let got = image_update_with_injection(&state, 0, true, &inj, &mut rng, &mut user).unwrap();

        let mut user2 = derive_stream(1, 0, phase::USER);
        let root = sym_sqrt(&user_cov, 0.0).unwrap();
        let mut pts = Vec::new();
        for _ in 0..7 {
            let mut z = [0.0; 2];
            user2.fill_standard_normal(&mut z);
            pts.push([
                mu[0] + root.get(0, 0) * z[0] + root.get(0, 1) * z[1],
                mu[1] + root.get(1, 0) * z[0] + root.get(1, 1) * z[1],
            ]);
        }
        let m: Vec<f64> = (0..2).map(|i| pts.iter().map(|p| p[i]).sum::<f64>() / 7.0).collect();
        for i in 0..2 {
            assert!((got[0].mean[i] - m[i]).abs() < 1e-12);
            for j in 0..2 {
                let c = pts.iter().map(|p| (p[i] - m[i]) * (p[j] - m[j])).sum::<f64>() / 6.0;
                assert!((got[0].cov.get(i, j) - c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn trajectory_of_zero_steps_is_initial_record() {
        let t = run_trajectory(&RunSpec::plain(cfg(5, 10, 0, 1, 1, 1.0)), 1, 0).unwrap();
        assert_eq!(t.records.len(), 1);
        assert!((t.records[0].h - 0.8).abs() < 1e-15);
        assert!(t.outcome.aborted.is_none());
    }

    #[test]
    fn trajectories_are_reproducible() {
        let spec = RunSpec::plain(cfg(4, 100, 10, 1, 2, 0.5));
        assert_eq!(run_trajectory(&spec, 42, 7).unwrap(), run_trajectory(&spec, 42, 7).unwrap());
        assert_ne!(run_trajectory(&spec, 42, 7).unwrap(), run_trajectory(&spec, 42, 8).unwrap());
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut c = cfg(3, 1, 5, 1, 1, 1.0);
        assert!(c.validate().is_err());
        c.n = 10;
        c.m_schedule.pop();
        assert!(c.validate().is_err());
        let inj = TextInjectionConfig {
            alpha: 0.5,
            epsilon: 0.0,
            new_component: NewComponent::default(),
        };
        assert!(inj.validate().is_err());
    }
}
