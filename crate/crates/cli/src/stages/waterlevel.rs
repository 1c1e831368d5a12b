use std::collections::{BTreeMap, BTreeSet};

use floodmap_core::gbdt::TreeEnsemble;
use floodmap_core::interchange::labels::parse_bag_labels;
use floodmap_core::interchange::{PerceptionBundle, WaterLevelClass};
use floodmap_core::waterlevel::{image_persons, predict_image, train_pseudo_label, Bag, LabelOrigin, PseudoLabelConfig};
use serde::Serialize;

use super::{csv_bytes, json_bytes, load_bundles, load_posts, PredictionRow, KEPT_POSTS, PREDICTIONS_CSV, WATERLEVEL_MODEL};
use crate::error::{StageError, StageResult};
use crate::manifest::StageRun;

#[derive(Debug, Serialize)]
struct History<'a> {
    config: &'a PseudoLabelConfig,
    bags: usize,
    instances: usize,
    empty_bags: usize,
    labels_without_bundle: Vec<String>,
    converged: bool,
    iterations: &'a [floodmap_core::waterlevel::IterationRecord],
}

#[derive(Debug, Serialize)]
struct InstanceRow<'a> {
    image_ref: &'a str,
    person: usize,
    bag_label: WaterLevelClass,
    label: WaterLevelClass,
    origin: &'static str,
    confidence: f64,
}

fn features(b: &PerceptionBundle) -> StageResult<(Vec<usize>, Vec<Vec<f64>>)> {
    let p = image_persons(b).map_err(StageError::validation)?;
    Ok((p.persons.iter().map(|(i, _)| *i).collect(), p.rows()))
}

pub fn train_waterlevel(run: &mut StageRun) -> StageResult<()> {
    let cfg = run.config();
    let bundles = load_bundles(run)?;
    let bytes = run.read_input("bag_labels", &cfg.paths.bag_labels)?;
    let labels = parse_bag_labels(bytes.as_slice()).map_err(|e| StageError::input(format!("bag labels: {e}")))?;
    let by_ref: BTreeMap<&str, &PerceptionBundle> = bundles.iter().map(|b| (b.image_ref.as_str(), b)).collect();

    let mut bags = Vec::new();
    let mut persons = Vec::new();
    let mut missing = Vec::new();
    for l in &labels {
        let Some(b) = by_ref.get(l.image_ref.as_str()) else {
            missing.push(l.image_ref.clone());
            continue;
        };
        let (idx, rows) = features(b)?;
        persons.push(idx);
        bags.push(Bag {
            image_ref: l.image_ref.clone(),
            label: l.bag_label,
            instances: rows,
        });
    }
    if !missing.is_empty() {
        run.warn(format!("{} labelled images have no bundle", missing.len()));
    }
    let pl = cfg.pseudo_label();
    let outcome = train_pseudo_label(&bags, &pl).map_err(StageError::validation)?;
    if !outcome.converged {
        run.warn(format!("pseudo-labelling stopped at the {}-iteration cap without converging", pl.max_iters));
    }
    let model = outcome.model.with_class_names(&WaterLevelClass::names()).map_err(StageError::internal)?;

    let mut rows = Vec::new();
    for ((bag, idx), states) in bags.iter().zip(&persons).zip(&outcome.states) {
        for (&person, s) in idx.iter().zip(states) {
            rows.push(InstanceRow {
                image_ref: &bag.image_ref,
                person,
                bag_label: bag.label,
                label: s.class,
                origin: match s.origin {
                    LabelOrigin::BagAssigned => "bag",
                    LabelOrigin::ModelUpdated => "model",
                },
                confidence: s.confidence,
            });
        }
    }
    let history = History {
        config: &pl,
        bags: bags.len(),
        instances: rows.len(),
        empty_bags: bags.iter().filter(|b| b.instances.is_empty()).count(),
        labels_without_bundle: missing,
        converged: outcome.converged,
        iterations: &outcome.history,
    };
    run.write(WATERLEVEL_MODEL, model.to_json().as_bytes())?;
    run.write("train-waterlevel/history.json", &json_bytes(&history))?;
    run.write("train-waterlevel/instance_labels.csv", &csv_bytes(&rows)?)?;
    run.count("bags", history.bags);
    run.count("instances", history.instances);
    run.count("iterations", outcome.history.len());
    run.count("converged", outcome.converged);
    run.count("replacements", outcome.history.iter().map(|h| h.replacements).sum::<usize>());
    Ok(())
}

#[derive(Debug, Serialize)]
struct PersonRow<'a> {
    image_ref: &'a str,
    person: usize,
    class: WaterLevelClass,
    confidence: f64,
}

/// Water level of every image behind a kept (relevant, de-duplicated) post.
pub fn predict_waterlevel(run: &mut StageRun) -> StageResult<()> {
    let model_bytes = run.read_artifact(WATERLEVEL_MODEL)?;
    let model = std::str::from_utf8(&model_bytes)
        .map_err(StageError::validation)
        .and_then(|s| TreeEnsemble::from_json(s).map_err(StageError::validation))?;
    let bundles = load_bundles(run)?;
    let kept = load_posts(run, KEPT_POSTS)?;
    let wanted: BTreeSet<&str> = kept.iter().map(|p| p.image_ref()).collect();

    let mut preds = Vec::new();
    let mut persons = Vec::new();
    for b in bundles.iter().filter(|b| wanted.contains(b.image_ref.as_str())) {
        let (idx, rows) = features(b)?;
        let p = predict_image(&model, &rows).map_err(StageError::validation)?;
        for (&person, pp) in idx.iter().zip(&p.persons) {
            persons.push(PersonRow {
                image_ref: &b.image_ref,
                person,
                class: pp.class,
                confidence: pp.confidence,
            });
        }
        preds.push(PredictionRow {
            image_ref: b.image_ref.clone(),
            class: p.class,
            confidence: p.confidence,
            n_persons_used: rows.len(),
            voters: p.voters,
            no_persons: p.no_persons,
        });
    }
    let mut by_class = BTreeMap::new();
    for p in &preds {
        *by_class.entry(p.class.as_str()).or_insert(0usize) += 1;
    }
    run.write(PREDICTIONS_CSV, &csv_bytes(&preds)?)?;
    run.write("predict-waterlevel/persons.csv", &csv_bytes(&persons)?)?;
    run.count("images", preds.len());
    run.count("no_persons", preds.iter().filter(|p| p.no_persons).count());
    run.count("by_class", by_class);
    Ok(())
}
