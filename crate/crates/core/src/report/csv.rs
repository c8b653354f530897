//! CSV emission for aggregate series and overlays.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiments::{AggregateSeries, Overlay};

pub const SERIES_HEADER: &str = "t,metric,text_id,sweep_param,sweep_value,mean,stderr,runs";
pub const OVERLAY_HEADER: &str = "t,overlay,sweep_value,value";

/// 17 significant digits in scientific notation; NaN renders as an empty field.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.16e}")
    }
}

/// Rows sorted by `(metric, sweep_value, text_id, t)`; steps with no
/// contributing run are omitted.
pub fn series_csv(series: &[AggregateSeries]) -> String {
    let mut order: Vec<&AggregateSeries> = series.iter().collect();
    order.sort_by(|a, b| {
        a.metric
            .as_str()
            .cmp(b.metric.as_str())
            .then(a.sweep_value.total_cmp(&b.sweep_value))
            .then(a.text_id.cmp(&b.text_id))
    });
    let mut out = String::new();
    out.push_str(SERIES_HEADER);
    out.push('\n');
    for s in order {
        let text_id = s.text_id.map(|i| i.to_string()).unwrap_or_default();
        for t in 0..s.mean.len() {
            if s.runs[t] == 0 {
                continue;
            }
            let _ = writeln!(
                out,
                "{t},{},{text_id},{},{},{},{},{}",
                s.metric,
                s.sweep_param.as_str(),
                fmt_float(s.sweep_value),
                fmt_float(s.mean[t]),
                fmt_float(s.stderr[t]),
                s.runs[t]
            );
        }
    }
    out
}

pub fn overlays_csv(overlays: &[Overlay]) -> String {
    let mut out = String::new();
    out.push_str(OVERLAY_HEADER);
    out.push('\n');
    for o in overlays {
        let sv = o.sweep_value.map(fmt_float).unwrap_or_default();
        for (t, v) in o.values.iter().enumerate() {
            let _ = writeln!(out, "{t},{},{sv},{}", o.label(), fmt_float(*v));
        }
    }
    out
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_series_csv(series: &[AggregateSeries], path: &Path) -> Result<()> {
    write_text(path, &series_csv(series))
}

pub fn write_overlays_csv(overlays: &[Overlay], path: &Path) -> Result<()> {
    write_text(path, &overlays_csv(overlays))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{Metric, SweepParam, TailSummary};

    fn one(metric: Metric, text_id: Option<u64>, sweep_value: f64, mean: Vec<f64>) -> AggregateSeries {
        let n = mean.len();
        AggregateSeries {
            metric,
            text_id,
            sweep_param: SweepParam::Sigma2,
            sweep_value,
            mean,
            stderr: vec![0.0; n],
            runs: vec![1; n],
            tail: TailSummary {
                from: 0,
                mean: 0.0,
                stderr: 0.0,
            },
        }
    }

    #[test]
    fn empty_is_header_only() {
        assert_eq!(series_csv(&[]), format!("{SERIES_HEADER}\n"));
    }

    #[test]
    fn golden_single_record() {
        let s = one(Metric::H, None, 0.1, vec![0.8]);
        assert_eq!(
            series_csv(&[s]),
            "t,metric,text_id,sweep_param,sweep_value,mean,stderr,runs\n\
             0,H,,sigma2,1.0000000000000001e-1,8.0000000000000004e-1,0.0000000000000000e0,1\n"
        );
    }

    #[test]
    fn rows_are_sorted() {
        let a = one(Metric::D, Some(1), 1.0, vec![1.0, 2.0]);
        let b = one(Metric::D, Some(0), 1.0, vec![3.0]);
        let c = one(Metric::H, None, 0.5, vec![4.0]);
        let text = series_csv(&[c, a, b]);
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().nth(1).unwrap().starts_with("0,D,0,"));
        assert!(text.lines().nth(2).unwrap().starts_with("0,D,1,"));
        assert!(text.lines().nth(3).unwrap().starts_with("1,D,1,"));
        assert!(text.lines().nth(4).unwrap().starts_with("0,H,,"));
        assert!(!text.contains('\r'));
    }
}
