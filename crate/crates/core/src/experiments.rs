//! Named experiment presets, the multi-run harness and aggregation.
//!
//! Every sweep value reuses the same run indices, so runs at different sweep
//! values share random streams (common random numbers). Runs execute on a
//! rayon pool; results are folded in run-index order, so aggregates are
//! bitwise independent of the worker count.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    phase, run_with_observer, InitSpec, NewComponent, RunCounters, RunSpec, TextInjectionConfig, TrainingConfig,
    UserSource,
};
use crate::error::{Error, Result};
use crate::linalg::trace_sqrt;
use crate::model::{SystemState, TextId};
use crate::sampling::{derive_stream, GaussianSampler};
use crate::theory;

/// Run-index label of the stream used for Monte Carlo overlay constants.
const OVERLAY_RUN: u64 = u64::MAX;
/// Draws used to estimate the Wishart scalar for the diversity-floor overlay.
const OVERLAY_WISHART_SAMPLES: usize = 20_000;
/// Image samples per text stored in each snapshot.
pub const SNAPSHOT_SAMPLES: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    H,
    D,
    F,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::H => "H",
            Metric::D => "D",
            Metric::F => "F",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The configuration knob a preset sweeps over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Initial covariance scale `σ²`.
    Sigma2,
    /// Image updates per macro step.
    NT,
    /// Text injection fraction; `0` disables injection.
    Epsilon,
    /// User images per text and step; `0` disables injection.
    N0,
    /// One configuration; each text's series is labelled by its initial probability.
    P,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Sigma2 => "sigma2",
            SweepParam::NT => "n_t",
            SweepParam::Epsilon => "epsilon",
            SweepParam::N0 => "n0",
            SweepParam::P => "p",
        }
    }

    /// Configuration for one sweep value.
    pub fn apply(self, base: &RunSpec, value: f64) -> Result<RunSpec> {
        let mut spec = base.clone();
        let count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 && v.is_finite() {
                Ok(v as usize)
            } else {
                Err(Error::Range {
                    key: self.as_str().into(),
                    message: format!("{v} is not a nonnegative integer"),
                })
            }
        };
        match self {
            SweepParam::Sigma2 => spec.training.init.cov_scale = value,
            SweepParam::NT => spec.training.n_schedule = vec![count(value)?; spec.training.steps],
            SweepParam::Epsilon => {
                if value == 0.0 {
                    spec.text_injection = None;
                } else {
                    let inj = spec.text_injection.get_or_insert_with(|| TextInjectionConfig {
                        alpha: 0.0,
                        epsilon: value,
                        new_component: NewComponent::default(),
                    });
                    inj.epsilon = value;
                }
            }
            SweepParam::N0 => {
                let n0 = count(value)?;
                spec.image_injection = match (n0, spec.image_injection.take()) {
                    (0, _) => None,
                    (_, Some((_, src))) => Some((n0, src)),
                    (_, None) => Some((n0, UserSource::Initial)),
                };
            }
            SweepParam::P => {}
        }
        Ok(spec)
    }
}

impl FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sigma2" => SweepParam::Sigma2,
            "n_t" => SweepParam::NT,
            "epsilon" => SweepParam::Epsilon,
            "n0" => SweepParam::N0,
            "p" => SweepParam::P,
            other => {
                return Err(Error::Range {
                    key: "sweep_param".into(),
                    message: format!("unknown sweep parameter `{other}`"),
                })
            }
        })
    }
}

/// Theory curves drawn next to the simulated series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlayKind {
    /// `(1 − 1/N)^t · H0`.
    DiversityFloor,
    /// `D0 · ρ(p_i)^t` per text.
    ImageRate,
    /// Text-injection floor per positive `ε`.
    TextInjectionFloor,
    /// Image diversity floor per `N0 ≥ 2`.
    ImageInjectionDiversityFloor,
    /// Fidelity limit per `N0 ≥ 1`.
    ImageInjectionFidelityLimit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppendixVariant {
    FrozenImage,
    FrozenText,
    Both,
    TextInj,
    ImageInj,
}

impl AppendixVariant {
    pub const ALL: [AppendixVariant; 5] = [
        AppendixVariant::FrozenImage,
        AppendixVariant::FrozenText,
        AppendixVariant::Both,
        AppendixVariant::TextInj,
        AppendixVariant::ImageInj,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AppendixVariant::FrozenImage => "frozen_image",
            AppendixVariant::FrozenText => "frozen_text",
            AppendixVariant::Both => "both",
            AppendixVariant::TextInj => "text_inj",
            AppendixVariant::ImageInj => "image_inj",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPreset {
    pub name: String,
    pub base: RunSpec,
    pub sweep_param: SweepParam,
    pub sweep_values: Vec<f64>,
    pub runs: usize,
    pub metrics: Vec<Metric>,
    pub overlays: Vec<OverlayKind>,
    pub snapshot_steps: Option<Vec<usize>>,
    /// Plot H and D on a log axis.
    pub log_y: bool,
}

/// Desk-scale defaults; [`ExperimentPreset::paper_scale`] restores the full setting.
pub const DESK_RUNS: usize = 20;
pub const PAPER_RUNS: usize = 100;

const N_SAMPLES: usize = 1000;
const K_TEXTS: usize = 5;
const DIM: usize = 2;

fn base_training(steps: usize, m: usize, nt: usize, init: InitSpec) -> TrainingConfig {
    TrainingConfig::constant(N_SAMPLES, steps, m, nt, DIM, init)
}

pub fn preset_fig3() -> ExperimentPreset {
    ExperimentPreset {
        name: "fig3".into(),
        base: RunSpec::plain(base_training(500, 1, 0, InitSpec::uniform(K_TEXTS, 1.0))),
        sweep_param: SweepParam::Sigma2,
        sweep_values: vec![0.01, 0.1, 0.5, 1.0, 10.0],
        runs: DESK_RUNS,
        metrics: vec![Metric::H],
        overlays: vec![OverlayKind::DiversityFloor],
        snapshot_steps: None,
        log_y: true,
    }
}

pub const FIG4_PROBS: [f64; 5] = [0.06, 0.13, 0.2, 0.27, 0.34];

pub fn preset_fig4() -> ExperimentPreset {
    let init = InitSpec {
        probs: FIG4_PROBS.to_vec(),
        cov_scale: 1.0,
    };
    ExperimentPreset {
        name: "fig4".into(),
        base: RunSpec::plain(base_training(1000, 0, 1, init)),
        sweep_param: SweepParam::P,
        sweep_values: FIG4_PROBS.to_vec(),
        runs: DESK_RUNS,
        metrics: vec![Metric::D, Metric::F],
        overlays: vec![OverlayKind::ImageRate],
        snapshot_steps: None,
        log_y: true,
    }
}

pub fn preset_fig5() -> ExperimentPreset {
    ExperimentPreset {
        name: "fig5".into(),
        base: RunSpec::plain(base_training(500, 1, 1, InitSpec::uniform(K_TEXTS, 1.0))),
        sweep_param: SweepParam::NT,
        sweep_values: vec![0.0, 1.0, 2.0, 5.0, 10.0],
        runs: DESK_RUNS,
        metrics: vec![Metric::H],
        overlays: vec![OverlayKind::DiversityFloor],
        snapshot_steps: None,
        log_y: true,
    }
}

pub const FIG6_ALPHA: f64 = 0.05;

pub fn preset_fig6() -> ExperimentPreset {
    let mut base = RunSpec::plain(base_training(2000, 1, 1, InitSpec::uniform(K_TEXTS, 1.0)));
    base.text_injection = Some(TextInjectionConfig {
        alpha: FIG6_ALPHA,
        epsilon: 0.1,
        new_component: NewComponent::default(),
    });
    ExperimentPreset {
        name: "fig6".into(),
        base,
        sweep_param: SweepParam::Epsilon,
        sweep_values: vec![0.0, 0.01, 0.02, 0.05, 0.1],
        runs: DESK_RUNS,
        metrics: vec![Metric::H],
        overlays: vec![OverlayKind::TextInjectionFloor],
        snapshot_steps: None,
        log_y: true,
    }
}

pub fn preset_fig7() -> ExperimentPreset {
    let mut base = RunSpec::plain(base_training(2000, 0, 1, InitSpec::uniform(1, 1.0)));
    base.image_injection = Some((1, UserSource::Initial));
    ExperimentPreset {
        name: "fig7".into(),
        base,
        sweep_param: SweepParam::N0,
        sweep_values: vec![0.0, 1.0, 10.0, 100.0, 1000.0],
        runs: DESK_RUNS,
        metrics: vec![Metric::D, Metric::F],
        overlays: vec![
            OverlayKind::ImageInjectionDiversityFloor,
            OverlayKind::ImageInjectionFidelityLimit,
        ],
        snapshot_steps: None,
        log_y: true,
    }
}

/// The N0 sweep with exactly `N·p_i` model images per step.
pub fn preset_fig7_deterministic() -> ExperimentPreset {
    let mut p = preset_fig7();
    p.name = "fig7-deterministic".into();
    p.base.training.deterministic_counts = true;
    p
}

pub fn preset_appendix_c(variant: AppendixVariant) -> ExperimentPreset {
    let (m, nt) = match variant {
        AppendixVariant::FrozenImage => (1, 0),
        AppendixVariant::FrozenText => (0, 1),
        _ => (1, 1),
    };
    let mut base = RunSpec::plain(base_training(1000, m, nt, InitSpec::uniform(K_TEXTS, 1.0)));
    match variant {
        AppendixVariant::TextInj => {
            base.text_injection = Some(TextInjectionConfig {
                alpha: 0.005,
                epsilon: 0.1,
                new_component: NewComponent::default(),
            })
        }
        AppendixVariant::ImageInj => base.image_injection = Some((100, UserSource::Initial)),
        _ => {}
    }
    ExperimentPreset {
        name: format!("appendixC-{}", variant.as_str()),
        base,
        sweep_param: SweepParam::P,
        sweep_values: vec![0.2],
        runs: 1,
        metrics: vec![Metric::H, Metric::D, Metric::F],
        overlays: vec![],
        snapshot_steps: Some(vec![0, 250, 500, 750, 1000]),
        log_y: true,
    }
}

/// Looks a preset up by its CLI name.
pub fn preset_by_name(name: &str) -> Result<ExperimentPreset> {
    match name {
        "fig3" => Ok(preset_fig3()),
        "fig4" => Ok(preset_fig4()),
        "fig5" => Ok(preset_fig5()),
        "fig6" => Ok(preset_fig6()),
        "fig7" => Ok(preset_fig7()),
        "fig7-deterministic" => Ok(preset_fig7_deterministic()),
        other => AppendixVariant::ALL
            .iter()
            .find(|v| other == format!("appendixC-{}", v.as_str()))
            .map(|v| preset_appendix_c(*v))
            .ok_or_else(|| Error::UnknownPreset(other.into())),
    }
}

impl ExperimentPreset {
    /// The full-size setting: 100 runs and the longer horizons.
    pub fn paper_scale(mut self) -> Self {
        let steps = match self.name.as_str() {
            "fig3" => 1000,
            "fig4" => 2000,
            "fig5" => 1000,
            "fig6" | "fig7" | "fig7-deterministic" => 10_000,
            _ => self.base.training.steps,
        };
        self.set_steps(steps);
        if self.snapshot_steps.is_none() {
            self.runs = PAPER_RUNS;
        }
        self
    }

    /// Changes the horizon, stretching constant schedules.
    pub fn set_steps(&mut self, steps: usize) {
        let t = &mut self.base.training;
        let m = t.m_schedule.first().copied().unwrap_or(0);
        let nt = t.n_schedule.first().copied().unwrap_or(0);
        t.steps = steps;
        t.m_schedule = vec![m; steps];
        t.n_schedule = vec![nt; steps];
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Range {
                key: "runs".into(),
                message: "must be at least 1".into(),
            });
        }
        if self.sweep_values.is_empty() {
            return Err(Error::Range {
                key: "sweep_values".into(),
                message: "must not be empty".into(),
            });
        }
        for &v in &self.sweep_values {
            self.sweep_param.apply(&self.base, v)?.validate()?;
        }
        Ok(())
    }

    fn specs(&self) -> Result<Vec<RunSpec>> {
        if self.sweep_param == SweepParam::P {
            return Ok(vec![self.base.clone()]);
        }
        self.sweep_values
            .iter()
            .map(|&v| self.sweep_param.apply(&self.base, v))
            .collect()
    }
}

/// Mean and standard error of one metric across runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateSeries {
    pub metric: Metric,
    pub text_id: Option<TextId>,
    pub sweep_param: SweepParam,
    pub sweep_value: f64,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Runs contributing at each step.
    pub runs: Vec<usize>,
    /// Average over the final tenth of the steps, with its standard error
    /// across runs.
    pub tail: TailSummary,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailSummary {
    pub from: usize,
    pub mean: f64,
    pub stderr: f64,
}

/// First step of the final tenth of a horizon of `steps`.
pub fn tail_start(steps: usize) -> usize {
    steps + 1 - (steps / 10).max(1)
}

impl AggregateSeries {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub kind: OverlayKind,
    pub sweep_value: Option<f64>,
    pub values: Vec<f64>,
}

impl Overlay {
    pub fn label(&self) -> &'static str {
        match self.kind {
            OverlayKind::DiversityFloor => "diversity_floor",
            OverlayKind::ImageRate => "image_rate",
            OverlayKind::TextInjectionFloor => "text_injection_floor",
            OverlayKind::ImageInjectionDiversityFloor => "image_injection_diversity_floor",
            OverlayKind::ImageInjectionFidelityLimit => "image_injection_fidelity_limit",
        }
    }

    /// Metric the overlay is drawn against.
    pub fn metric(&self) -> Metric {
        match self.kind {
            OverlayKind::DiversityFloor | OverlayKind::TextInjectionFloor => Metric::H,
            OverlayKind::ImageRate | OverlayKind::ImageInjectionDiversityFloor => Metric::D,
            OverlayKind::ImageInjectionFidelityLimit => Metric::F,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbortRecord {
    pub sweep_value: f64,
    pub run: u64,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub preset: String,
    pub seed: u64,
    pub runs: usize,
    pub steps: usize,
    pub aborts: Vec<AbortRecord>,
    pub renorm_warnings: u64,
    pub injections: u64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotText {
    pub text_id: TextId,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub samples: Vec<Vec<f64>>,
}

/// State dump for histogram and scatter plots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: usize,
    pub probs: Vec<f64>,
    pub texts: Vec<SnapshotText>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub series: Vec<AggregateSeries>,
    pub overlays: Vec<Overlay>,
    pub snapshots: Vec<Snapshot>,
    pub metadata: RunMetadata,
}

impl ExperimentResult {
    pub fn find(&self, metric: Metric, sweep_value: f64, text_id: Option<TextId>) -> Option<&AggregateSeries> {
        self.series
            .iter()
            .find(|s| s.metric == metric && s.sweep_value == sweep_value && s.text_id == text_id)
    }

    pub fn overlay(&self, kind: OverlayKind, sweep_value: Option<f64>) -> Option<&Overlay> {
        self.overlays
            .iter()
            .find(|o| o.kind == kind && o.sweep_value == sweep_value)
    }
}

/// Per-run values of the tracked metrics; NaN where a text does not exist yet.
struct RunSeries {
    h: Vec<f64>,
    d: BTreeMap<TextId, Vec<f64>>,
    f: BTreeMap<TextId, Vec<f64>>,
    snapshots: Vec<Snapshot>,
    counters: RunCounters,
    aborted: Option<String>,
}

fn snapshot_of(state: &SystemState, rng: &mut crate::sampling::RngStream) -> Result<Snapshot> {
    let texts = state
        .text
        .corpus_ids()
        .iter()
        .zip(&state.images)
        .map(|(&text_id, c)| {
            let sampler = GaussianSampler::new(&c.mean, &c.cov)?;
            let mut z = vec![0.0; c.dim()];
            let samples = (0..SNAPSHOT_SAMPLES)
                .map(|_| {
                    let mut y = vec![0.0; c.dim()];
                    sampler.sample_into(rng, &mut z, &mut y);
                    y
                })
                .collect();
            Ok(SnapshotText {
                text_id,
                mean: c.mean.clone(),
                cov: c.cov.rows(),
                samples,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Snapshot {
        t: state.t,
        probs: state.text.probs().to_vec(),
        texts,
    })
}

fn run_one(
    spec: &RunSpec,
    metrics: &[Metric],
    snapshot_steps: Option<&[usize]>,
    seed: u64,
    run: u64,
) -> Result<RunSeries> {
    let steps = spec.training.steps;
    let want_d = metrics.contains(&Metric::D);
    let want_f = metrics.contains(&Metric::F);
    let mut out = RunSeries {
        h: Vec::with_capacity(steps + 1),
        d: BTreeMap::new(),
        f: BTreeMap::new(),
        snapshots: Vec::new(),
        counters: RunCounters::default(),
        aborted: None,
    };
    let mut snap_rng = derive_stream(seed, run, phase::SNAPSHOT);
    let mut snap_err = None;
    let outcome = run_with_observer(spec, seed, run, |state, rec| {
        out.h.push(rec.h);
        for td in &rec.per_text {
            if want_d {
                let v = out.d.entry(td.text_id).or_insert_with(|| vec![f64::NAN; rec.t]);
                v.push(td.d);
            }
            if want_f {
                let v = out.f.entry(td.text_id).or_insert_with(|| vec![f64::NAN; rec.t]);
                v.push(td.f);
            }
        }
        if snapshot_steps.is_some_and(|s| s.contains(&rec.t)) && snap_err.is_none() {
            match snapshot_of(state, &mut snap_rng) {
                Ok(s) => out.snapshots.push(s),
                Err(e) => snap_err = Some(e),
            }
        }
    })?;
    if let Some(e) = snap_err {
        return Err(e);
    }
    out.counters = outcome.counters;
    out.aborted = outcome.aborted;
    Ok(out)
}

/// Mean and standard error per step over the runs where the value exists,
/// folded in run order.
fn aggregate<'a>(series: impl Iterator<Item = &'a [f64]> + Clone, len: usize) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let mut mean = vec![0.0; len];
    let mut count = vec![0usize; len];
    for s in series.clone() {
        for (t, &v) in s.iter().enumerate().take(len) {
            if !v.is_nan() {
                mean[t] += v;
                count[t] += 1;
            }
        }
    }
    for (m, &c) in mean.iter_mut().zip(&count) {
        *m = if c > 0 { *m / c as f64 } else { f64::NAN };
    }
    let mut ss = vec![0.0; len];
    for s in series {
        for (t, &v) in s.iter().enumerate().take(len) {
            if !v.is_nan() {
                ss[t] += (v - mean[t]) * (v - mean[t]);
            }
        }
    }
    let stderr = ss
        .iter()
        .zip(&count)
        .map(|(&s, &c)| if c > 1 { (s / (c - 1) as f64 / c as f64).sqrt() } else { 0.0 })
        .collect();
    (mean, stderr, count)
}

/// Per-run averages over `from..` folded into a mean and standard error.
fn tail_summary<'a>(series: impl Iterator<Item = &'a [f64]>, from: usize) -> TailSummary {
    let avgs: Vec<f64> = series
        .filter_map(|s| {
            let tail = s.get(from..).filter(|t| !t.is_empty() && t.iter().all(|v| !v.is_nan()))?;
            Some(tail.iter().sum::<f64>() / tail.len() as f64)
        })
        .collect();
    let n = avgs.len() as f64;
    let mean = avgs.iter().sum::<f64>() / n;
    let stderr = if avgs.len() > 1 {
        (avgs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    TailSummary { from, mean, stderr }
}

fn overlay_series(preset: &ExperimentPreset, seed: u64) -> Result<Vec<Overlay>> {
    let cfg = &preset.base.training;
    let steps = cfg.steps;
    let n = cfg.n;
    let init = cfg.init.build(cfg.dim)?;
    let h0 = crate::model::text_diversity(&init.text);
    let mut out = Vec::new();
    for &kind in &preset.overlays {
        match kind {
            OverlayKind::DiversityFloor => out.push(Overlay {
                kind,
                sweep_value: None,
                values: (0..=steps).map(|t| theory::diversity_floor(h0, n, t)).collect(),
            }),
            OverlayKind::ImageRate => {
                for (comp, &p) in init.images.iter().zip(init.text.probs()) {
                    let rho = theory::image_rate_approx(cfg.dim, n, p);
                    let d0 = trace_sqrt(&comp.cov)?;
                    out.push(Overlay {
                        kind,
                        sweep_value: Some(p),
                        values: (0..=steps).map(|t| d0 * rho.powi(t as i32)).collect(),
                    });
                }
            }
            OverlayKind::TextInjectionFloor => {
                let alpha = preset.base.text_injection.as_ref().map_or(0.0, |i| i.alpha);
                for &eps in preset.sweep_values.iter().filter(|&&e| e > 0.0) {
                    let v = theory::text_injection_floor(alpha, eps, n);
                    out.push(Overlay {
                        kind,
                        sweep_value: Some(eps),
                        values: vec![v; steps + 1],
                    });
                }
            }
            OverlayKind::ImageInjectionDiversityFloor => {
                let tr_sqrt_user = trace_sqrt(&init.images[0].cov)?;
                for &v in preset.sweep_values.iter().filter(|&&v| v >= 2.0) {
                    let n0 = v as usize;
                    let mut rng = derive_stream(seed, OVERLAY_RUN, n0 as u64);
                    let (alpha, _) =
                        theory::estimate_wishart_sqrt_alpha(cfg.dim, n0 - 1, OVERLAY_WISHART_SAMPLES, &mut rng)?;
                    let floor = theory::image_injection_diversity_floor(alpha, n, n0, tr_sqrt_user)?;
                    out.push(Overlay {
                        kind,
                        sweep_value: Some(v),
                        values: vec![floor; steps + 1],
                    });
                }
            }
            OverlayKind::ImageInjectionFidelityLimit => {
                let tr0 = init.images[0].cov.trace();
                let p = init.text.probs()[0];
                for &v in preset.sweep_values.iter().filter(|&&v| v >= 1.0) {
                    if let Some(lim) = theory::image_injection_fidelity_limit(n, p, v as usize, tr0)?.value() {
                        out.push(Overlay {
                            kind,
                            sweep_value: Some(v),
                            values: vec![lim; steps + 1],
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Runs `preset.runs` trajectories per sweep value on `workers` threads.
///
/// Aborted runs are excluded from the aggregates and listed in the metadata.
pub fn run_experiment(preset: &ExperimentPreset, base_seed: u64, workers: usize) -> Result<ExperimentResult> {
    preset.validate()?;
    if workers == 0 {
        return Err(Error::Range {
            key: "workers".into(),
            message: "must be at least 1".into(),
        });
    }
    let specs = preset.specs()?;
    let jobs: Vec<(usize, u64)> = (0..specs.len())
        .flat_map(|s| (0..preset.runs as u64).map(move |r| (s, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    let snapshot_steps = preset.snapshot_steps.as_deref();
    let results: Vec<Result<RunSeries>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(s, r)| run_one(&specs[s], &preset.metrics, snapshot_steps, base_seed, r))
            .collect()
    });

    let steps = preset.base.training.steps;
    let mut metadata = RunMetadata {
        preset: preset.name.clone(),
        seed: base_seed,
        runs: preset.runs,
        steps,
        ..Default::default()
    };
    let mut grouped: Vec<Vec<RunSeries>> = (0..specs.len()).map(|_| Vec::new()).collect();
    for (&(s, r), res) in jobs.iter().zip(results) {
        let run = res?;
        metadata.renorm_warnings += run.counters.renorm_warnings;
        metadata.injections += run.counters.injections;
        if let Some(message) = &run.aborted {
            metadata.aborts.push(AbortRecord {
                sweep_value: preset.sweep_values.get(s).copied().unwrap_or(f64::NAN),
                run: r,
                message: message.clone(),
            });
            continue;
        }
        grouped[s].push(run);
    }
    if metadata.renorm_warnings > 0 {
        metadata.warnings.push(format!(
            "{} text updates drifted from unit mass by more than 1e-9 before renormalization",
            metadata.renorm_warnings
        ));
    }

    let len = steps + 1;
    let tail_from = tail_start(steps);
    let mut series = Vec::new();
    let mut snapshots = Vec::new();
    for (s, runs) in grouped.iter().enumerate() {
        let per_text_label = |id: TextId| -> f64 {
            if preset.sweep_param == SweepParam::P {
                preset.base.training.init.probs.get(id as usize).copied().unwrap_or(f64::NAN)
            } else {
                preset.sweep_values[s]
            }
        };
        for &metric in &preset.metrics {
            match metric {
                Metric::H => {
                    let (mean, stderr, count) = aggregate(runs.iter().map(|r| r.h.as_slice()), len);
                    let tail = tail_summary(runs.iter().map(|r| r.h.as_slice()), tail_from);
                    let sweep_value = if preset.sweep_param == SweepParam::P {
                        f64::NAN
                    } else {
                        preset.sweep_values[s]
                    };
                    series.push(AggregateSeries {
                        metric,
                        text_id: None,
                        sweep_param: preset.sweep_param,
                        sweep_value,
                        mean,
                        stderr,
                        runs: count,
                        tail,
                    });
                }
                Metric::D | Metric::F => {
                    fn pick(r: &RunSeries, metric: Metric) -> &BTreeMap<TextId, Vec<f64>> {
                        if metric == Metric::D {
                            &r.d
                        } else {
                            &r.f
                        }
                    }
                    let mut ids: Vec<TextId> = runs.iter().flat_map(|r| pick(r, metric).keys().copied()).collect();
                    ids.sort_unstable();
                    ids.dedup();
                    for id in ids {
                        let per_run: Vec<Vec<f64>> = runs
                            .iter()
                            .map(|r| {
                                let mut v = pick(r, metric).get(&id).cloned().unwrap_or_default();
                                v.resize(len, f64::NAN);
                                v
                            })
                            .collect();
                        let (mean, stderr, count) = aggregate(per_run.iter().map(|v| v.as_slice()), len);
                        let tail = tail_summary(per_run.iter().map(|v| v.as_slice()), tail_from);
                        series.push(AggregateSeries {
                            metric,
                            text_id: Some(id),
                            sweep_param: preset.sweep_param,
                            sweep_value: per_text_label(id),
                            mean,
                            stderr,
                            runs: count,
                            tail,
                        });
                    }
                }
            }
        }
        if let Some(first) = runs.first() {
            snapshots.extend(first.snapshots.iter().cloned());
        }
    }
    let overlays = overlay_series(preset, base_seed)?;
    Ok(ExperimentResult {
        series,
        overlays,
        snapshots,
        metadata,
    })
}

/// Ordinary least squares slope of `ln y` against `t` over `t ∈ [from, to]`.
pub fn fit_log_slope(values: &[f64], from: usize, to: usize) -> f64 {
    let pts: Vec<(f64, f64)> = (from..=to.min(values.len() - 1))
        .filter(|&t| values[t] > 0.0)
        .map(|t| (t as f64, values[t].ln()))
        .collect();
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm) * (p.0 - tm)).sum();
    sxy / sxx
}

/// Fitted per-step decay rate `exp(slope)` over `t ∈ [from, to]`.
pub fn fit_decay_rate(values: &[f64], from: usize, to: usize) -> f64 {
    fit_log_slope(values, from, to).exp()
}
