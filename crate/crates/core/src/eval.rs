//! Metrics: per-field MSE, the resolution-shift ratio and variant reports.
//!
//! Evaluation runs in two stages. [`predict_cases`] runs the models and
//! stores normalized predictions and targets in a [`PredictionSet`];
//! [`report_from_predictions`] turns a set into an [`EvalReport`]. The
//! prediction set can be saved, so a report can be regenerated without the
//! models.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::features::{FeatureVariant, FieldNormalizer};
use crate::net::checkpoint::Checkpoint;
use crate::pipeline::{predict, predict_timed, prepare_all, PreparedCase};
use crate::{Error, FieldId, MeshCase, Result};

/// Mean of squared differences.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Shape("mse of an empty set".into()));
    }
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64)
}

/// `(ε_full − ε_sub) / ε_sub`, or `None` when `ε_sub = 0`.
pub fn relative_difference(full: f64, sub: f64) -> Option<f64> {
    (sub != 0.0).then(|| (full - sub) / sub)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftResult {
    pub mse_full: f64,
    pub mse_sub: f64,
    pub reldiff: Option<f64>,
}

/// Normalized predictions of one model on one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CasePredictions {
    pub case_id: String,
    pub full_pred: Vec<f64>,
    pub full_target: Vec<f64>,
    /// Predictions made on the subsampled mesh, at its drawn points only.
    pub sub_pred: Vec<f64>,
    pub sub_target: Vec<f64>,
    /// Full-mesh forward time, graph construction excluded.
    pub time_ms: f64,
    /// Full-mesh input and graph construction time.
    #[serde(default)]
    pub build_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPredictions {
    pub variant: FeatureVariant,
    pub field: FieldId,
    pub normalizer: FieldNormalizer,
    pub cases: Vec<CasePredictions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub subsample_n: usize,
    pub seed: u64,
    pub models: Vec<ModelPredictions>,
}

impl PredictionSet {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalOptions {
    pub subsample_n: usize,
    pub seed: u64,
    /// Record wall-clock forward time; off keeps reports reproducible.
    pub timing: bool,
}

fn shift_on(
    ck: &Checkpoint,
    prepared: &PreparedCase,
    n_sub: usize,
    seed: u64,
    timing: bool,
) -> Result<CasePredictions> {
    let raw = prepared.field_values(ck.field)?;
    let target: Vec<f64> = raw.iter().map(|&v| ck.normalizer.normalize(v)).collect();
    let all: Vec<usize> = (0..prepared.len()).collect();
    let full = predict_timed(&ck.model, prepared, &all, seed)?;
    let sub = prepared.case.subsample(n_sub, seed);
    let sub_pred_all = predict(&ck.model, prepared, &sub.index_map, seed)?;
    let drawn = sub.drawn_original();
    Ok(CasePredictions {
        case_id: prepared.case.case_id.clone(),
        full_pred: full.values,
        sub_pred: sub.drawn.iter().map(|&j| sub_pred_all[j]).collect(),
        sub_target: drawn.iter().map(|&i| target[i]).collect(),
        full_target: target,
        time_ms: if timing {
            full.forward.as_secs_f64() * 1e3
        } else {
            0.0
        },
        build_ms: if timing {
            full.build.as_secs_f64() * 1e3
        } else {
            0.0
        },
    })
}

/// MSE on the full mesh and on an `n_sub`-point subsample of it, with the
/// model run separately on each.
pub fn resolution_shift(
    ck: &Checkpoint,
    prepared: &PreparedCase,
    n_sub: usize,
    seed: u64,
) -> Result<ShiftResult> {
    let p = shift_on(ck, prepared, n_sub, seed, false)?;
    let mse_full = mse(&p.full_pred, &p.full_target)?;
    let mse_sub = mse(&p.sub_pred, &p.sub_target)?;
    Ok(ShiftResult {
        mse_full,
        mse_sub,
        reldiff: relative_difference(mse_full, mse_sub),
    })
}

fn check_compatible(checkpoints: &[Checkpoint]) -> Result<()> {
    let mut seen: BTreeMap<(FeatureVariant, FieldId), usize> = BTreeMap::new();
    let mut normalizers: BTreeMap<FieldId, FieldNormalizer> = BTreeMap::new();
    for (i, ck) in checkpoints.iter().enumerate() {
        if ck.normalizer.field != ck.field {
            return Err(Error::Config(format!(
                "checkpoint {i}: normalizer is for another field"
            )));
        }
        if let Some(j) = seen.insert((ck.variant, ck.field), i) {
            return Err(Error::Config(format!(
                "checkpoints {j} and {i} are both {} {}",
                ck.variant, ck.field
            )));
        }
        if let Some(prev) = normalizers.insert(ck.field, ck.normalizer) {
            if prev != ck.normalizer {
                return Err(Error::Config(format!(
                    "{}: checkpoints use different normalizers",
                    ck.field
                )));
            }
        }
    }
    Ok(())
}

/// Runs every checkpoint on every case.
pub fn predict_cases(
    checkpoints: &[Checkpoint],
    cases: &[MeshCase],
    opts: &EvalOptions,
) -> Result<PredictionSet> {
    check_compatible(checkpoints)?;
    let mut order: Vec<&Checkpoint> = checkpoints.iter().collect();
    order.sort_by_key(|c| (c.variant, c.field));
    let mut models = Vec::with_capacity(order.len());
    for ck in order {
        let prepared = prepare_all(
            cases,
            ck.variant,
            &ck.basis,
            &ck.model.config,
            Some(&ck.scaler),
        )?;
        let run = |p: &PreparedCase| shift_on(ck, p, opts.subsample_n, opts.seed, opts.timing);
        #[cfg(feature = "parallel")]
        let per_case: Vec<CasePredictions> = {
            use rayon::prelude::*;
            prepared.par_iter().map(run).collect::<Result<_>>()?
        };
        #[cfg(not(feature = "parallel"))]
        let per_case: Vec<CasePredictions> = prepared.iter().map(run).collect::<Result<_>>()?;
        models.push(ModelPredictions {
            variant: ck.variant,
            field: ck.field,
            normalizer: ck.normalizer,
            cases: per_case,
        });
    }
    Ok(PredictionSet {
        subsample_n: opts.subsample_n,
        seed: opts.seed,
        models,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseRow {
    pub case_id: String,
    pub mse_full: f64,
    pub mse_sub: f64,
    pub reldiff: Option<f64>,
    /// MSE of denormalized values; for log-pressure models this is raw
    /// pressure, for the others it is the field in physical units.
    pub mse_raw: f64,
    pub time_ms: f64,
    pub build_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub variant: FeatureVariant,
    pub field: FieldId,
    /// Means over cases.
    pub mse_full: f64,
    pub mse_sub: f64,
    pub reldiff: Option<f64>,
    pub mse_raw: f64,
    /// Totals over cases.
    pub time_ms: f64,
    pub build_ms: f64,
    pub cases: Vec<CaseRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

pub fn report_from_predictions(set: &PredictionSet) -> Result<EvalReport> {
    let mut rows = Vec::with_capacity(set.models.len());
    for m in &set.models {
        if m.cases.is_empty() {
            return Err(Error::Config("no cases to report".into()));
        }
        let mut cases = Vec::with_capacity(m.cases.len());
        for c in &m.cases {
            let mse_full = mse(&c.full_pred, &c.full_target)?;
            let mse_sub = mse(&c.sub_pred, &c.sub_target)?;
            let denorm = |v: &[f64]| {
                v.iter()
                    .map(|&z| m.normalizer.denormalize(z))
                    .collect::<Vec<_>>()
            };
            let mse_raw = mse(&denorm(&c.full_pred), &denorm(&c.full_target))?;
            cases.push(CaseRow {
                case_id: c.case_id.clone(),
                mse_full,
                mse_sub,
                reldiff: relative_difference(mse_full, mse_sub),
                mse_raw,
                time_ms: c.time_ms,
                build_ms: c.build_ms,
            });
        }
        let n = cases.len() as f64;
        let mean = |f: fn(&CaseRow) -> f64| cases.iter().map(f).sum::<f64>() / n;
        let mse_full = mean(|c| c.mse_full);
        let mse_sub = mean(|c| c.mse_sub);
        rows.push(ReportRow {
            variant: m.variant,
            field: m.field,
            mse_full,
            mse_sub,
            reldiff: relative_difference(mse_full, mse_sub),
            mse_raw: mean(|c| c.mse_raw),
            time_ms: cases.iter().map(|c| c.time_ms).sum(),
            build_ms: cases.iter().map(|c| c.build_ms).sum(),
            cases,
        });
    }
    rows.sort_by_key(|r| (r.variant, r.field));
    Ok(EvalReport { rows })
}

/// Predicts and reports in one go.
pub fn compare_variants(
    checkpoints: &[Checkpoint],
    cases: &[MeshCase],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    report_from_predictions(&predict_cases(checkpoints, cases, opts)?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| x.to_string())
}

/// One parsed line of the machine-readable report.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryLine {
    pub variant: FeatureVariant,
    pub field: FieldId,
    pub mse_full: f64,
    pub mse_sub: f64,
    pub reldiff: Option<f64>,
    pub time_ms: f64,
}

impl EvalReport {
    pub fn summary(&self) -> Vec<SummaryLine> {
        self.rows
            .iter()
            .map(|r| SummaryLine {
                variant: r.variant,
                field: r.field,
                mse_full: r.mse_full,
                mse_sub: r.mse_sub,
                reldiff: r.reldiff,
                time_ms: r.time_ms,
            })
            .collect()
    }

    /// `variant field mse_full mse_sub reldiff time_ms`, one line per row.
    pub fn to_lines(&self) -> String {
        let mut out = String::from("# variant field mse_full mse_sub reldiff time_ms\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{} {} {} {} {} {}",
                r.variant,
                r.field,
                r.mse_full,
                r.mse_sub,
                fmt_opt(r.reldiff),
                r.time_ms
            );
        }
        out
    }

    /// Human-readable table including per-case rows.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:<5} {:>12} {:>12} {:>10} {:>12} {:>9} {:>9}",
            "variant", "field", "mse_full", "mse_sub", "reldiff", "mse_raw", "time_ms", "build_ms"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<8} {:<5} {:>12.5e} {:>12.5e} {:>10} {:>12.5e} {:>9.1} {:>9.1}",
                r.variant.to_string(),
                r.field.to_string(),
                r.mse_full,
                r.mse_sub,
                r.reldiff.map_or("undefined".into(), |x| format!("{x:+.4}")),
                r.mse_raw,
                r.time_ms,
                r.build_ms
            );
            for c in &r.cases {
                let _ = writeln!(
                    out,
                    "  {:<12} {:>12.5e} {:>12.5e} {:>10} {:>12.5e}",
                    c.case_id,
                    c.mse_full,
                    c.mse_sub,
                    c.reldiff.map_or("undefined".into(), |x| format!("{x:+.4}")),
                    c.mse_raw
                );
            }
        }
        out
    }
}

pub fn parse_summary(text: &str, origin: &Path) -> Result<Vec<SummaryLine>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line: n + 1,
            msg,
        };
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(err(format!("expected 6 columns, found {}", cols.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| err(format!("bad number '{s}'")))
        };
        let reldiff = num(cols[4])?;
        out.push(SummaryLine {
            variant: cols[0].parse().map_err(|e: Error| err(e.to_string()))?,
            field: cols[1].parse().map_err(|e: Error| err(e.to_string()))?,
            mse_full: num(cols[2])?,
            mse_sub: num(cols[3])?,
            reldiff: (!reldiff.is_nan()).then_some(reldiff),
            time_ms: num(cols[5])?,
        });
    }
    Ok(out)
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_table())
    }
}
