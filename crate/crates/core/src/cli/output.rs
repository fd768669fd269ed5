//! Report files: structured JSON, flat CSV, SVG plots and the run log.

use std::collections::HashSet;
use std::ffi::OsString;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use super::CliError;
use crate::engine::{BaselineReport, CrossReport, ImportanceReport, MetricDelta};
use crate::metrics::MetricTriple;
use crate::numfmt::fmt_f64;
use crate::render::{boxes_for_context, file_stem, render_context_svg};

pub(super) fn write(path: impl AsRef<Path>, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    let path = path.as_ref();
    std::fs::write(path, contents).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// The only place a wall-clock time is recorded.
pub(super) fn write_run_log(dir: &Path, argv: &[OsString]) -> std::io::Result<()> {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let args: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    std::fs::write(
        dir.join("run.log"),
        format!("started_unix={secs}\nversion={}\nargs={}\n", crate::TOOLKIT_VERSION, args.join(" ")),
    )
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>, CliError> {
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

fn triple(t: &MetricTriple) -> [String; 3] {
    [fmt_f64(t.acc), opt(t.auc), fmt_f64(t.f1)]
}

fn delta(d: &MetricDelta) -> [String; 3] {
    [opt(d.acc), opt(d.auc), opt(d.f1)]
}

pub(super) fn baseline_csv(r: &BaselineReport) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "context", "n", "positives", "negatives", "acc", "auc", "f1", "note"])
        .map_err(csv_err)?;
    for row in &r.rows {
        let [acc, auc, f1] = triple(&row.metrics);
        w.write_record([
            row.model.clone(),
            row.context.clone(),
            row.n.to_string(),
            row.positives.to_string(),
            row.negatives.to_string(),
            acc,
            auc,
            f1,
            row.note.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

pub(super) fn importance_csv(r: &ImportanceReport) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "model", "context", "feature", "metric", "cardinality", "repetitions", "absent", "baseline", "pi",
        "score_median", "score_q1", "score_q3", "score_iqr", "score_sigma", "shuffle_digest",
    ])
    .map_err(csv_err)?;
    for rec in &r.records {
        let s = &rec.score_stats;
        w.write_record([
            rec.model.clone(),
            rec.context.clone(),
            rec.feature.as_str().to_string(),
            rec.metric.as_str().to_string(),
            rec.cardinality.to_string(),
            rec.repetitions.to_string(),
            rec.absent.to_string(),
            fmt_f64(rec.baseline),
            fmt_f64(rec.pi),
            fmt_f64(s.median),
            fmt_f64(s.q1),
            fmt_f64(s.q3),
            fmt_f64(s.iqr),
            fmt_f64(s.sigma),
            rec.shuffle_digest.clone(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

pub(super) fn cross_csv(r: &CrossReport) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "model", "feature", "source", "donor", "repetitions", "baseline_acc", "baseline_auc", "baseline_f1",
        "permuted_acc", "permuted_auc", "permuted_f1", "delta_acc", "delta_auc", "delta_f1",
    ])
    .map_err(csv_err)?;
    for row in &r.rows {
        let [ba, bu, bf] = triple(&row.baseline);
        let [pa, pu, pf] = delta(&row.mean_permuted);
        let [da, du, df] = delta(&row.delta);
        w.write_record([
            row.model.clone(),
            r.feature.as_str().to_string(),
            r.source.notation.clone(),
            r.donor.notation.clone(),
            r.repetitions.to_string(),
            ba,
            bu,
            bf,
            pa,
            pu,
            pf,
            da,
            du,
            df,
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// One SVG per requested context. Stems that collide after sanitizing get
/// a numeric suffix.
pub(super) fn write_plots(dir: &Path, r: &ImportanceReport) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let mut used = HashSet::new();
    for ctx in &r.contexts {
        let base = match file_stem(&ctx.notation) {
            s if s.is_empty() => "context".to_string(),
            s => s,
        };
        let mut stem = base.clone();
        let mut k = 2;
        while !used.insert(stem.clone()) {
            stem = format!("{base}_{k}");
            k += 1;
        }
        let boxes = boxes_for_context(&r.records, &ctx.notation);
        let svg = render_context_svg(&ctx.notation, &r.metrics, &r.features, &boxes);
        write(dir.join(format!("{stem}.svg")), svg)?;
    }
    Ok(())
}
