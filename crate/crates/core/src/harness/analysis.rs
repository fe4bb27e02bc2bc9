use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, NormalizationSpec};
use crate::error::{Error, Result};
use crate::metrics::{default_threshold_grid, y_discrim, ScoredPredictions};
use crate::Corrector;

/// Means of one feature for the privileged group, the rest, and their
/// difference (privileged minus unprivileged).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub privileged: f64,
    pub unprivileged: f64,
    pub difference: f64,
}

/// Relative change from original to corrected in percent; `None` where the
/// original value is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeChange {
    pub privileged: Option<f64>,
    pub unprivileged: Option<f64>,
    pub difference: Option<f64>,
}

/// Per-group averages of one feature before and after correction, in raw
/// units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionReport {
    pub feature: String,
    pub privileged_group: String,
    pub unprivileged_group: String,
    pub original: GroupStats,
    pub corrected: GroupStats,
    pub mean_correction: GroupStats,
    pub relative_pct: RelativeChange,
}

fn pct(original: f64, corrected: f64) -> Option<f64> {
    (original != 0.0).then(|| (corrected - original) / original * 100.0)
}

fn stats(values: &[f64], s: &[usize], privileged: usize) -> Result<GroupStats> {
    let (mut ps, mut pn, mut us, mut un) = (0.0, 0usize, 0.0, 0usize);
    for (v, &g) in values.iter().zip(s) {
        if g == privileged {
            ps += v;
            pn += 1;
        } else {
            us += v;
            un += 1;
        }
    }
    if pn == 0 || un == 0 {
        return Err(Error::Undefined("both privileged and unprivileged rows are needed".into()));
    }
    let (p, u) = (ps / pn as f64, us / un as f64);
    Ok(GroupStats {
        privileged: p,
        unprivileged: u,
        difference: p - u,
    })
}

/// Group averages of `feature` in raw units before and after `model`'s
/// correction. `ds` must be normalized the way the model expects; rows
/// with `s != privileged` form the unprivileged side.
pub fn analyze_corrections(
    model: &dyn Corrector,
    ds: &Dataset,
    feature: &str,
    privileged: usize,
) -> Result<CorrectionReport> {
    if !model.is_trained() {
        return Err(Error::Contract("cannot analyze an untrained model".into()));
    }
    let col = ds
        .feature_index(feature)
        .ok_or_else(|| Error::Config(format!("unknown feature {feature:?}")))?;
    let spec = ds
        .normalization
        .clone()
        .unwrap_or_else(|| NormalizationSpec::identity(ds.n_features()));
    let (w, z) = model.correct(&ds.x)?;
    let x_raw = spec.invert(&ds.x)?;
    let z_raw = spec.invert(&z)?;
    let w_raw = spec.invert_correction(&w)?;
    let column = |t: &crate::Tensor| -> Vec<f64> { t.iter_rows().map(|r| r[col]).collect() };

    let original = stats(&column(&x_raw), &ds.s, privileged)?;
    let corrected = stats(&column(&z_raw), &ds.s, privileged)?;
    let mean_correction = stats(&column(&w_raw), &ds.s, privileged)?;
    let name = |g: usize| ds.group_names.get(g).cloned().unwrap_or_else(|| g.to_string());
    let unprivileged_group = if ds.n_groups() == 2 {
        name(1 - privileged.min(1))
    } else {
        format!("not {}", name(privileged))
    };
    Ok(CorrectionReport {
        feature: feature.to_string(),
        privileged_group: name(privileged),
        unprivileged_group,
        relative_pct: RelativeChange {
            privileged: pct(original.privileged, corrected.privileged),
            unprivileged: pct(original.unprivileged, corrected.unprivileged),
            difference: pct(original.difference, corrected.difference),
        },
        original,
        corrected,
        mean_correction,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Table layout: one original row, one corrected row, one row of relative
/// changes.
pub fn write_correction_csv<W: Write>(reports: &[CorrectionReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["feature", "row", "privileged", "unprivileged", "avg_difference"])?;
    for r in reports {
        for (label, s) in [("original", r.original), ("corrected", r.corrected)] {
            w.write_record([
                r.feature.clone(),
                label.to_string(),
                s.privileged.to_string(),
                s.unprivileged.to_string(),
                s.difference.to_string(),
            ])?;
        }
        w.write_record([
            r.feature.clone(),
            "relative_pct".to_string(),
            opt(r.relative_pct.privileged),
            opt(r.relative_pct.unprivileged),
            opt(r.relative_pct.difference),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub accuracy: f64,
    pub discrimination: f64,
}

/// Accuracy and yDiscrim at each of the 20 default thresholds.
pub fn audc_threshold_sweep(pred: &ScoredPredictions) -> Result<Vec<SweepRow>> {
    default_threshold_grid()
        .into_iter()
        .map(|t| {
            Ok(SweepRow {
                threshold: t,
                accuracy: pred.accuracy(t),
                discrimination: y_discrim(pred, t)?,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["threshold", "accuracy", "discrimination"])?;
    for r in rows {
        w.write_record([r.threshold.to_string(), r.accuracy.to_string(), r.discrimination.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
