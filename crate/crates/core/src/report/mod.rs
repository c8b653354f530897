//! Output artifacts: configuration echo, CSV tables, SVG plots, snapshot and
//! metadata JSON.

pub mod config;
pub mod csv;
pub mod svg;

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiments::{ExperimentPreset, ExperimentResult, Metric, Snapshot};

pub use config::{load_config, parse_config, ResolvedConfig, RunConfigFile};
pub use csv::{write_overlays_csv, write_series_csv};
pub use svg::{write_svg_plot, AxesSpec};

/// Pretty JSON array with a trailing newline.
pub fn snapshot_json(snapshots: &[Snapshot]) -> Result<String> {
    let mut s = serde_json::to_string_pretty(snapshots)?;
    s.push('\n');
    Ok(s)
}

pub fn write_snapshot_json(snapshots: &[Snapshot], path: &Path) -> Result<()> {
    csv::write_text(path, &snapshot_json(snapshots)?)
}

fn axes_for(preset: &ExperimentPreset, metric: Metric) -> AxesSpec {
    let (y_label, what) = match metric {
        Metric::H => ("text diversity H", "Text diversity"),
        Metric::D => ("image diversity D", "Image diversity"),
        Metric::F => ("image fidelity F", "Image fidelity"),
    };
    AxesSpec {
        title: format!("{what} ({})", preset.name),
        x_label: "macro time step t".into(),
        y_label: y_label.into(),
        log_y: preset.log_y && metric != Metric::F,
    }
}

/// Writes every artifact of an experiment into `dir` and returns the paths.
pub fn write_outputs(
    dir: &Path,
    preset: &ExperimentPreset,
    resolved: &ResolvedConfig,
    result: &ExperimentResult,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut emit = |name: &str, text: String| -> Result<()> {
        let path = dir.join(name);
        csv::write_text(&path, &text)?;
        written.push(path);
        Ok(())
    };
    emit("resolved-config.toml", resolved.to_toml())?;
    let mut meta = serde_json::to_string_pretty(&result.metadata)?;
    meta.push('\n');
    emit("metadata.json", meta)?;
    emit("series.csv", csv::series_csv(&result.series))?;
    emit("overlays.csv", csv::overlays_csv(&result.overlays))?;
    for &metric in &preset.metrics {
        let series: Vec<_> = result.series.iter().filter(|s| s.metric == metric).cloned().collect();
        if series.is_empty() {
            continue;
        }
        let overlays: Vec<_> = result.overlays.iter().filter(|o| o.metric() == metric).cloned().collect();
        emit(
            &format!("{}-{}.svg", preset.name, metric),
            svg::svg_plot(&series, &overlays, &axes_for(preset, metric))?,
        )?;
    }
    if preset.snapshot_steps.is_some() {
        emit("snapshots.json", snapshot_json(&result.snapshots)?)?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_snapshot_list() {
        assert_eq!(snapshot_json(&[]).unwrap(), "[]\n");
    }

    #[test]
    fn snapshot_round_trip_is_byte_identical() {
        let mut p = crate::experiments::preset_appendix_c(crate::experiments::AppendixVariant::FrozenText);
        p.set_steps(3);
        p.snapshot_steps = Some(vec![0, 3]);
        let r = crate::experiments::run_experiment(&p, 4, 1).unwrap();
        let text = snapshot_json(&r.snapshots).unwrap();
        let parsed: Vec<Snapshot> = serde_json::from_str(&text).unwrap();
        assert_eq!(snapshot_json(&parsed).unwrap(), text);
        assert_eq!(parsed[0].texts[0].mean, vec![1.0, 0.0]);
    }
}
