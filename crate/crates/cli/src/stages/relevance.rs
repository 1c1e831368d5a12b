use std::collections::BTreeMap;
use std::fmt::Write as _;

use floodmap_core::gbdt::{holdout_split, train, Dataset, TreeEnsemble};
use floodmap_core::interchange::labels::parse_relevance_labels;
use floodmap_core::relevance::{
    avg_precision_at_cutoffs, bin_counts, classify as score_bundles, roc_auc, training_set, BIN_LABELS,
};
use serde::Serialize;

use super::{csv_bytes, json_bytes, load_bundles, RELEVANCE_CSV, RELEVANCE_MODEL};
use crate::error::{StageError, StageResult};
use crate::manifest::StageRun;

pub const CLASS_NAMES: [&str; 2] = ["not_relevant", "relevant"];

#[derive(Debug, Serialize)]
struct TrainReport {
    labelled: usize,
    positives: usize,
    train_rows: usize,
    val_rows: usize,
    labels_without_bundle: Vec<String>,
    best_round: usize,
    trees: usize,
    val_auc: Option<f64>,
    /// Mean precision over the cutoffs, each clipped to the validation size.
    val_avg_precision: Option<f64>,
    cutoffs: Vec<usize>,
    clipped_cutoffs: Vec<(usize, usize)>,
}

pub fn train_relevance(run: &mut StageRun) -> StageResult<()> {
    let cfg = run.config();
    let bundles = load_bundles(run)?;
    let bytes = run.read_input("relevance_labels", &cfg.paths.relevance_labels)?;
    let labels = parse_relevance_labels(bytes.as_slice()).map_err(|e| StageError::input(format!("relevance labels: {e}")))?;
    let labels: BTreeMap<String, bool> = labels.into_iter().map(|l| (l.image_ref, l.label == 1)).collect();
    let (x, y, missing) = training_set(&bundles, &labels).map_err(StageError::validation)?;
    if !missing.is_empty() {
        run.warn(format!("{} labelled images have no bundle", missing.len()));
    }
    if x.n_rows() < 2 {
        return Err(StageError::validation(format!("need at least 2 labelled bundles, found {}", x.n_rows())));
    }

    let (tr, va) = holdout_split(x.n_rows(), cfg.relevance.val_fraction, cfg.seed);
    let pick = |idx: &[usize]| -> Vec<usize> { idx.iter().map(|&i| y[i]).collect() };
    let (xt, yt) = (x.select_rows(&tr), pick(&tr));
    let (xv, yv) = (x.select_rows(&va), pick(&va));
    let val = (!va.is_empty()).then(|| Dataset::new(&xv, &yv));
    let tc = cfg.relevance.gbdt.train_config(2, cfg.seed);
    let model = train(&Dataset::new(&xt, &yt), val.as_ref(), &tc)
        .and_then(|m| m.with_class_names(&CLASS_NAMES))
        .map_err(StageError::validation)?;

    let mut report = TrainReport {
        labelled: y.len(),
        positives: y.iter().filter(|&&l| l == 1).count(),
        train_rows: tr.len(),
        val_rows: va.len(),
        labels_without_bundle: missing,
        best_round: model.best_round,
        trees: model.tree_count(),
        val_auc: None,
        val_avg_precision: None,
        cutoffs: cfg.relevance.cutoffs.clone(),
        clipped_cutoffs: Vec::new(),
    };
    if !va.is_empty() {
        let scores: Vec<f64> = model.predict_proba_rows(&xv).map_err(StageError::internal)?.iter().map(|p| p[1]).collect();
        let truth: Vec<bool> = yv.iter().map(|&l| l == 1).collect();
        report.val_auc = roc_auc(&scores, &truth).ok();
        if let Ok(ap) = avg_precision_at_cutoffs(&scores, &truth, &cfg.relevance.cutoffs) {
            report.val_avg_precision = Some(ap.value);
            report.clipped_cutoffs = ap.clipped;
        }
    }
    if !report.clipped_cutoffs.is_empty() {
        run.warn(format!("{} cutoffs clipped to the validation size {}", report.clipped_cutoffs.len(), va.len()));
    }

    run.write(RELEVANCE_MODEL, model.to_json().as_bytes())?;
    run.write("train-relevance/report.json", &json_bytes(&report))?;
    run.write("train-relevance/report.txt", text_report(&report).as_bytes())?;
    run.count("labelled", report.labelled);
    run.count("best_round", report.best_round);
    Ok(())
}

fn text_report(r: &TrainReport) -> String {
    let mut s = String::new();
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{:.4}", v));
    let _ = writeln!(s, "relevance classifier");
    let _ = writeln!(s, "labelled images   {} ({} relevant)", r.labelled, r.positives);
    let _ = writeln!(s, "train / val rows  {} / {}", r.train_rows, r.val_rows);
    let _ = writeln!(s, "best round        {}", r.best_round);
    let _ = writeln!(s, "val ROC AUC       {}", opt(r.val_auc));
    let _ = writeln!(s, "val mean P@k      {} over {:?}", opt(r.val_avg_precision), r.cutoffs);
    s
}

#[derive(Debug, Serialize)]
struct BinRow {
    bin: &'static str,
    count: usize,
}

pub fn classify(run: &mut StageRun) -> StageResult<()> {
    let cfg = run.config();
    let model_bytes = run.read_artifact(RELEVANCE_MODEL)?;
    let model = std::str::from_utf8(&model_bytes)
        .map_err(StageError::validation)
        .and_then(|s| TreeEnsemble::from_json(s).map_err(StageError::validation))?;
    let bundles = load_bundles(run)?;
    let out = score_bundles(&model, &bundles);
    let counts = bin_counts(&out.results);
    let bins: Vec<BinRow> = BIN_LABELS.iter().zip(counts).map(|(&bin, count)| BinRow { bin, count }).collect();
    run.write(RELEVANCE_CSV, &csv_bytes(&out.results)?)?;
    run.write("classify/bins.csv", &csv_bytes(&bins)?)?;
    run.count("scored", out.results.len());
    run.count("bins", bins.iter().map(|b| (b.bin, b.count)).collect::<BTreeMap<_, _>>());
    run.count("above_relevance_dedup", out.results.iter().filter(|r| r.score >= cfg.thresholds.relevance_dedup).count());
    run.count("above_relevance_severity", out.results.iter().filter(|r| r.score >= cfg.thresholds.relevance_severity).count());
    if !out.errors.is_empty() {
        let (first, e) = &out.errors[0];
        run.fail_after_writing(StageError::validation(format!("{} bundles could not be scored, first {first}: {e}", out.errors.len())));
    }
    Ok(())
}
