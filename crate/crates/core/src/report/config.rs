//! Run configuration files.
//!
//! A configuration is a flat TOML table. Every key is optional except that a
//! file must name a preset with `experiment` or describe a sweep directly.
//!
//! | key | meaning |
//! |---|---|
//! | `experiment` | preset name (`fig3` … `fig7`, `fig7-deterministic`, `appendixC-<variant>`, `custom`) |
//! | `seed`, `runs`, `workers`, `out`, `paper_scale` | harness settings |
//! | `steps`, `n`, `dim`, `m_t`, `n_t` | horizon, samples per update, image dimension, updates per step |
//! | `k`, `probs`, `cov_scale` | initial corpus size, probabilities and covariance scale |
//! | `deterministic_counts` | `N·p_i` image counts instead of multinomial draws |
//! | `alpha`, `epsilon` | text injection probability and fraction (`epsilon = 0` disables) |
//! | `n0` | user images per text and step (`0` disables) |
//! | `sweep_param`, `sweep_values` | swept knob (`sigma2`, `n_t`, `epsilon`, `n0`, `p`) and its values |

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{InitSpec, NewComponent, RunSpec, TextInjectionConfig, TrainingConfig, UserSource};
use crate::error::{Error, Result};
use crate::experiments::{preset_by_name, ExperimentPreset, Metric, SweepParam};

pub const KEYS: &[&str] = &[
    "experiment",
    "seed",
    "runs",
    "workers",
    "out",
    "paper_scale",
    "steps",
    "n",
    "dim",
    "m_t",
    "n_t",
    "k",
    "probs",
    "cov_scale",
    "deterministic_counts",
    "alpha",
    "epsilon",
    "n0",
    "sweep_param",
    "sweep_values",
];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub paper_scale: Option<bool>,
    pub steps: Option<usize>,
    pub n: Option<usize>,
    pub dim: Option<usize>,
    pub m_t: Option<usize>,
    pub n_t: Option<usize>,
    pub k: Option<usize>,
    pub probs: Option<Vec<f64>>,
    pub cov_scale: Option<f64>,
    pub deterministic_counts: Option<bool>,
    pub alpha: Option<f64>,
    pub epsilon: Option<f64>,
    pub n0: Option<usize>,
    pub sweep_param: Option<String>,
    pub sweep_values: Option<Vec<f64>>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses configuration text; `path` is only used in error messages.
pub fn parse_config(text: &str, path: &Path) -> Result<RunConfigFile> {
    let table: toml::Table = toml::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    if let Some(key) = table.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(Error::UnknownKey { key: key.clone() });
    }
    let cfg: RunConfigFile = table.try_into().map_err(|e: toml::de::Error| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.message().to_string(),
    })?;
    cfg.check_ranges()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfigFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

fn range(key: &str, message: impl Into<String>) -> Error {
    Error::Range {
        key: key.into(),
        message: message.into(),
    }
}

impl RunConfigFile {
    fn check_ranges(&self) -> Result<()> {
        let positive = [
            ("runs", self.runs),
            ("workers", self.workers),
            ("n", self.n),
            ("dim", self.dim),
            ("k", self.k),
        ];
        for (key, v) in positive {
            if v == Some(0) {
                return Err(range(key, "must be at least 1"));
            }
        }
        if let Some(s) = self.cov_scale {
            if !(s.is_finite() && s >= 0.0) {
                return Err(range("cov_scale", format!("{s} must be finite and nonnegative")));
            }
        }
        if let Some(a) = self.alpha {
            if !(0.0..=1.0).contains(&a) {
                return Err(range("alpha", format!("{a} must lie in [0, 1]")));
            }
        }
        if let Some(e) = self.epsilon {
            if !(0.0..1.0).contains(&e) {
                return Err(range("epsilon", format!("{e} must lie in [0, 1)")));
            }
        }
        if let Some(p) = &self.probs {
            crate::sampling::check_distribution(p).map_err(|e| range("probs", e.to_string()))?;
        }
        if let Some(v) = &self.sweep_values {
            if v.is_empty() {
                return Err(range("sweep_values", "must not be empty"));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(range("sweep_values", "values must be finite"));
            }
        }
        if let Some(p) = &self.sweep_param {
            p.parse::<SweepParam>()?;
        }
        Ok(())
    }

    /// Resolves the preset named by the file (or a custom one) and applies
    /// every override in the file.
    pub fn resolve(&self) -> Result<ExperimentPreset> {
        let name = self.experiment.as_deref().unwrap_or("custom");
        let mut preset = if name == "custom" { custom_preset() } else { preset_by_name(name)? };
        if self.paper_scale.unwrap_or(false) {
            preset = preset.paper_scale();
        }
        if let Some(steps) = self.steps {
            preset.set_steps(steps);
        }
        if let Some(r) = self.runs {
            preset.runs = r;
        }
        let t = &mut preset.base.training;
        if let Some(n) = self.n {
            t.n = n;
        }
        if let Some(d) = self.dim {
            t.dim = d;
        }
        if let Some(m) = self.m_t {
            t.m_schedule = vec![m; t.steps];
        }
        if let Some(nt) = self.n_t {
            t.n_schedule = vec![nt; t.steps];
        }
        if let Some(k) = self.k {
            t.init.probs = vec![1.0 / k as f64; k];
        }
        if let Some(p) = &self.probs {
            t.init.probs = p.clone();
        }
        if let Some(s) = self.cov_scale {
            t.init.cov_scale = s;
        }
        if let Some(det) = self.deterministic_counts {
            t.deterministic_counts = det;
        }
        if self.alpha.is_some() || self.epsilon.is_some() {
            let mut inj = preset.base.text_injection.clone().unwrap_or(TextInjectionConfig {
                alpha: 0.0,
                epsilon: 0.0,
                new_component: NewComponent::default(),
            });
            if let Some(a) = self.alpha {
                inj.alpha = a;
            }
            if let Some(e) = self.epsilon {
                inj.epsilon = e;
            }
            preset.base.text_injection = (inj.epsilon > 0.0).then_some(inj);
        }
        if let Some(n0) = self.n0 {
            preset.base.image_injection = (n0 > 0).then_some((n0, UserSource::Initial));
        }
        if let Some(p) = &self.sweep_param {
            preset.sweep_param = p.parse()?;
            if self.sweep_values.is_none() {
                return Err(range("sweep_values", "required when sweep_param is given"));
            }
        }
        if let Some(v) = &self.sweep_values {
            preset.sweep_values = v.clone();
        }
        if preset.sweep_param == SweepParam::P && self.probs.is_some() && self.sweep_values.is_none() {
            preset.sweep_values = preset.base.training.init.probs.clone();
        }
        preset.validate()?;
        Ok(preset)
    }
}

/// Co-evolving baseline used when a file names no preset.
pub fn custom_preset() -> ExperimentPreset {
    ExperimentPreset {
        name: "custom".into(),
        base: RunSpec::plain(TrainingConfig::constant(1000, 500, 1, 1, 2, InitSpec::uniform(5, 1.0))),
        sweep_param: SweepParam::Sigma2,
        sweep_values: vec![1.0],
        runs: crate::experiments::DESK_RUNS,
        metrics: vec![Metric::H, Metric::D, Metric::F],
        overlays: vec![],
        snapshot_steps: None,
        log_y: true,
    }
}

/// Fully resolved settings, echoed next to every output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub experiment: String,
    pub seed: u64,
    pub runs: usize,
    pub workers: usize,
    pub paper_scale: bool,
    pub steps: usize,
    pub n: usize,
    pub dim: usize,
    pub m_t: usize,
    pub n_t: usize,
    pub probs: Vec<f64>,
    pub cov_scale: f64,
    pub deterministic_counts: bool,
    pub alpha: f64,
    pub epsilon: f64,
    pub n0: usize,
    pub sweep_param: String,
    pub sweep_values: Vec<f64>,
}

impl ResolvedConfig {
    pub fn new(preset: &ExperimentPreset, seed: u64, workers: usize, paper_scale: bool) -> Self {
        let t = &preset.base.training;
        let inj = preset.base.text_injection.as_ref();
        Self {
            experiment: preset.name.clone(),
            seed,
            runs: preset.runs,
            workers,
            paper_scale,
            steps: t.steps,
            n: t.n,
            dim: t.dim,
            m_t: t.m_schedule.first().copied().unwrap_or(0),
            n_t: t.n_schedule.first().copied().unwrap_or(0),
            probs: t.init.probs.clone(),
            cov_scale: t.init.cov_scale,
            deterministic_counts: t.deterministic_counts,
            alpha: inj.map_or(0.0, |i| i.alpha),
            epsilon: inj.map_or(0.0, |i| i.epsilon),
            n0: preset.base.image_injection.as_ref().map_or(0, |i| i.0),
            sweep_param: preset.sweep_param.as_str().into(),
            sweep_values: preset.sweep_values.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("resolved configuration always serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<RunConfigFile> {
        parse_config(s, Path::new("test.toml"))
    }

    #[test]
    fn minimal_file_resolves_preset() {
        let p = parse("experiment = \"fig3\"\n").unwrap().resolve().unwrap();
        assert_eq!(p, crate::experiments::preset_fig3());
    }

    #[test]
    fn unknown_key_is_named() {
        match parse("experiment = \"fig6\"\nalpha_injct = 0.1\n") {
            Err(Error::UnknownKey { key }) => assert_eq!(key, "alpha_injct"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_runs_is_range_error() {
        assert!(matches!(parse("runs = 0"), Err(Error::Range { ref key, .. }) if key == "runs"));
    }

    #[test]
    fn parse_error_reports_line() {
        match parse("experiment = \"fig3\"\nruns = = 3\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn overrides_apply() {
        let p = parse("experiment = \"fig6\"\nsteps = 30\nalpha = 0.2\nsweep_values = [0.0, 0.3]\n")
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(p.base.training.steps, 30);
        assert_eq!(p.base.training.m_schedule.len(), 30);
        assert_eq!(p.base.text_injection.unwrap().alpha, 0.2);
        assert_eq!(p.sweep_values, vec![0.0, 0.3]);
    }

    #[test]
    fn resolved_config_reproduces_preset() {
        let mut p = crate::experiments::preset_fig7_deterministic();
        p.set_steps(40);
        p.runs = 3;
        let text = ResolvedConfig::new(&p, 9, 2, false).to_toml();
        let again = parse(&text).unwrap().resolve().unwrap();
        assert_eq!(again, p);
    }
}
