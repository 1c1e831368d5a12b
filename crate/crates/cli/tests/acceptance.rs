//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use chrono::NaiveDate;
use floodmap_core::dedup::{dbscan, k_distance_curve, NOISE};
use floodmap_core::gbdt::{holdout_split, log_loss, softmax_grad_hess, train, Dataset, TrainConfig, TreeEnsemble};
use floodmap_core::geomap::{
    aggregate_depth, aggregate_severity, claims_reference, compare_extent, mark_extent, spearman, GridMapping, LocalPlane, Placement,
    TractLayer,
};
use floodmap_core::interchange::{AsciiGrid, ClaimPoint, GeoBox, GeoPoint, Keypoint, PixelBox, Polygon, TractGeometry, WaterLevelClass};
use floodmap_core::synthetic::{gaussian_blobs, nearest_center, mil_bags, SceneConfig, SceneGenerator};
use floodmap_core::waterlevel::{
    extract_features, feature_group_ablation, split_bags, train_on_bag_labels, train_pseudo_label, Bag, PseudoLabelConfig,
    SelectedKeypoints, Surface,
};
use floodmap_cli::Stage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- metrics

fn table_metrics() -> Check {
    let start = Instant::now();
    let cases = [
        ("VGI", (39u64, 21u64, 320u64, 586u64), [96.54, 64.68, 77.46, 64.70]),
        ("RS", (46, 14, 437, 469), [97.10, 51.77, 67.53, 53.31]),
        ("VGI+RS", (32, 28, 166, 740), [96.35, 81.68, 88.41, 79.92]),
    ];
    let mut worst: f64 = 0.0;
    for (name, (tn, fp, fn_, tp), want) in cases {
        // tract flags realising the matrix
        let mut pred = BTreeMap::new();
        let mut truth = BTreeMap::new();
        let mut i = 0;
        for (n, p, t) in [(tn, false, false), (fp, true, false), (fn_, false, true), (tp, true, true)] {
            for _ in 0..n {
                pred.insert(format!("t{i:05}"), p);
                truth.insert(format!("t{i:05}"), t);
                i += 1;
            }
        }
        let c = compare_extent(&pred, &truth, None).map_err(|e| e.to_string())?;
        let m = &c.metrics;
        ensure((c.matrix.tn, c.matrix.fp, c.matrix.fn_, c.matrix.tp) == (tn, fp, fn_, tp), || format!("{name}: matrix changed"))?;
        let (tpf, fpf, fnf, tnf) = (tp as f64, fp as f64, fn_ as f64, tn as f64);
        let p = tpf / (tpf + fpf);
        let r = tpf / (tpf + fnf);
        let oracle = [p, r, 2.0 * p * r / (p + r), (tpf + tnf) / (tpf + tnf + fpf + fnf)];
        for ((got, o), w) in [m.precision, m.recall, m.f1, m.accuracy].into_iter().zip(oracle).zip(want) {
            ensure((got - o).abs() < 1e-12, || format!("{name}: {got} vs oracle {o}"))?;
            worst = worst.max((100.0 * got - w).abs());
            ensure((100.0 * got - w).abs() <= 0.02, || format!("{name}: {:.4}% vs table {w}%", 100.0 * got))?;
        }
    }
    let t = start.elapsed().as_secs_f64();
    ensure(t < 1.0, || format!("took {t:.3} s"))?;
    Ok(format!("3 matrices, max deviation {worst:.4} pp, {:.1} ms", 1000.0 * t))
}

// ---------------------------------------------------------------- heights

fn lattice(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo..hi) * 64.0).round() / 64.0
}

fn height_invariance() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut compared = 0;
    for _ in 0..1000 {
        let (x0, y0) = (lattice(&mut rng, 0.0, 1500.0), lattice(&mut rng, 0.0, 1000.0));
        let (w, h) = (lattice(&mut rng, 8.0, 300.0), lattice(&mut rng, 8.0, 600.0));
        let b = PixelBox::new(x0, y0, x0 + w, y0 + h);
        let kps: SelectedKeypoints = std::array::from_fn(|_| {
            (rng.random::<f64>() < 0.8)
                .then(|| Keypoint::new(lattice(&mut rng, x0, x0 + w), lattice(&mut rng, y0, y0 + h), rng.random_range(0.05..1.0)))
        });
        // positive power-of-two scale and integer offset keep every
        // coordinate exactly representable
        let s = 2f64.powi(rng.random_range(-3..5));
        let off = f64::from(rng.random_range(-3000..3000));
        let tb = PixelBox::new(b.x_min, s * b.y_min + off, b.x_max, s * b.y_max + off);
        let tk = kps.map(|k| k.map(|k| Keypoint::new(k.x, s * k.y + off, k.score)));
        let f = extract_features(&b, &kps, Surface::Water).map_err(|e| e.to_string())?;
        let g = extract_features(&tb, &tk, Surface::Water).map_err(|e| e.to_string())?;
        for (a, c) in f.heights.iter().zip(&g.heights) {
            ensure(a.to_bits() == c.to_bits(), || format!("{a} vs {c} under s={s} b={off}"))?;
            compared += usize::from(!a.is_nan());
        }
    }
    let b = PixelBox::new(10.0, 100.0, 50.0, 300.0);
    let mut kps: SelectedKeypoints = [None; 8];
    kps[0] = Some(Keypoint::new(20.0, 300.0, 0.9));
    kps[1] = Some(Keypoint::new(20.0, 100.0, 0.9));
    let f = extract_features(&b, &kps, Surface::Ground).map_err(|e| e.to_string())?;
    ensure(f.heights[0] == 0.0 && f.heights[1] == 1.0, || format!("boundary heights {:?}", &f.heights[..2]))?;
    Ok(format!("1000 persons, {compared} heights bit-identical; bottom 0, top 1"))
}

// ---------------------------------------------------------------- gbdt

const BLOB_SEED: u64 = 42;

fn gbdt_numerics() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-8);
    for _ in 0..20 {
        let k = rng.random_range(2..6);
        let z: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y = rng.random_range(0..k);
        let (g, hess) = softmax_grad_hess(&z, y);
        for c in 0..k {
            let step = 1e-5;
            let mut up = z.clone();
            let mut dn = z.clone();
            up[c] += step;
            dn[c] -= step;
            let ng = (log_loss(&up, y) - log_loss(&dn, y)) / (2.0 * step);
            let nh = (softmax_grad_hess(&up, y).0[c] - softmax_grad_hess(&dn, y).0[c]) / (2.0 * step);
            worst = worst.max(rel(g[c], ng)).max(rel(hess[c], nh));
        }
    }
    ensure(worst < 1e-5, || format!("finite-difference relative error {worst:e}"))?;

    let blobs = gaussian_blobs(500, 5, 4, 4.0, 1.0, BLOB_SEED);
    let (tr, va) = holdout_split(500, 0.2, BLOB_SEED);
    let yt: Vec<usize> = tr.iter().map(|&i| blobs.y[i]).collect();
    let yv: Vec<usize> = va.iter().map(|&i| blobs.y[i]).collect();
    let (xt, xv) = (blobs.x.select_rows(&tr), blobs.x.select_rows(&va));
    let cfg = TrainConfig::with_classes(5);
    let model = train(&Dataset::new(&xt, &yt), Some(&Dataset::new(&xv, &yv)), &cfg).map_err(|e| e.to_string())?;
    let hits = (0..xv.n_rows()).filter(|&i| model.predict_class(xv.row(i)).map(|p| p.0) == Ok(yv[i])).count();
    let acc = hits as f64 / yv.len() as f64;
    let reference = (0..xv.n_rows()).filter(|&i| nearest_center(&blobs.centers, xv.row(i)) == yv[i]).count() as f64 / yv.len() as f64;
    ensure(acc >= 0.95, || format!("blob validation accuracy {acc:.3} (nearest-centre rule {reference:.3})"))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("m.json");
    model.save(&path).map_err(|e| e.to_string())?;
    let back = TreeEnsemble::load(&path).map_err(|e| e.to_string())?;
    for r in blobs.x.rows() {
        let (a, b) = (model.predict_proba(r).map_err(|e| e.to_string())?, back.predict_proba(r).map_err(|e| e.to_string())?);
        ensure(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()), || "reloaded model predicts differently".into())?;
    }
    Ok(format!("fd rel err {worst:.1e}; blob val acc {acc:.3} (nearest-centre rule {reference:.3}); reload bit-identical on 500 rows"))
}

// ---------------------------------------------------------------- dbscan

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Clusters of density-connected points. With a minimum of two points every
/// point with a neighbour is core, so clusters are the connected components
/// of the eps-graph and isolated points are noise.
fn oracle_partition(pts: &[Vec<f64>], eps: f64) -> (BTreeSet<BTreeSet<usize>>, BTreeSet<usize>) {
    let n = pts.len();
    let adj: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| j != i && dist(&pts[i], &pts[j]) <= eps).collect()).collect();
    let mut seen = vec![false; n];
    let mut clusters = BTreeSet::new();
    let mut noise = BTreeSet::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        if adj[s].is_empty() {
            noise.insert(s);
            continue;
        }
        let mut comp = BTreeSet::from([s]);
        let mut stack = vec![s];
        while let Some(p) = stack.pop() {
            for &q in &adj[p] {
                if !seen[q] {
                    seen[q] = true;
                    comp.insert(q);
                    stack.push(q);
                }
            }
        }
        clusters.insert(comp);
    }
    (clusters, noise)
}

fn dbscan_oracle() -> Check {
    let mut total_clusters = 0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers: Vec<Vec<f64>> = (0..20).map(|_| (0..512).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let pts: Vec<Vec<f64>> = (0..200)
            .map(|i| {
                if i % 2 == 0 {
                    (0..512).map(|_| rng.random_range(-1.0..1.0)).collect()
                } else {
                    let c = &centers[rng.random_range(0..centers.len())];
                    c.iter().map(|v| v + rng.random_range(-0.02..0.02)).collect()
                }
            })
            .collect();
        let eps = 0.35;
        let c = dbscan(&pts, eps, 2).map_err(|e| e.to_string())?;
        let mut got: BTreeMap<i64, BTreeSet<usize>> = BTreeMap::new();
        let mut noise = BTreeSet::new();
        for (i, &l) in c.labels.iter().enumerate() {
            if l == NOISE {
                noise.insert(i);
            } else {
                got.entry(l).or_default().insert(i);
            }
        }
        let got: BTreeSet<BTreeSet<usize>> = got.into_values().collect();
        let (want, want_noise) = oracle_partition(&pts, eps);
        ensure(got == want && noise == want_noise, || format!("set {seed}: partition differs from the oracle"))?;
        total_clusters += want.len();

        let mut curve: Vec<f64> = (0..pts.len())
            .map(|i| {
                let mut d: Vec<f64> = (0..pts.len()).filter(|&j| j != i).map(|j| dist(&pts[i], &pts[j])).collect();
                d.sort_by(f64::total_cmp);
                d[0]
            })
            .collect();
        curve.sort_by(|a, b| b.total_cmp(a));
        ensure(k_distance_curve(&pts, 1).map_err(|e| e.to_string())? == curve, || format!("set {seed}: k-distance curve differs"))?;
    }
    Ok(format!("50 sets of 200 x 512-d, {total_clusters} clusters, partitions and k-distance curves exact"))
}

// ---------------------------------------------------------------- pseudo-labelling

fn pseudo_label_recovery() -> Check {
    let corpus = SceneGenerator::new(SceneConfig::default()).corpus();
    let (bags, truth) = mil_bags(&corpus);
    let cfg = PseudoLabelConfig::default();
    let out = train_pseudo_label(&bags, &cfg).map_err(|e| e.to_string())?;
    let (mut planted, mut recovered) = (0, 0);
    for (states, idx) in out.states.iter().zip(&truth) {
        for (s, &t) in states.iter().zip(idx) {
            if corpus.instances[t].distractor {
                planted += 1;
                recovered += usize::from(s.class == WaterLevelClass::N);
            }
        }
    }
    let share = recovered as f64 / planted.max(1) as f64;
    ensure(planted > 0, || "no distractors survived filtering".into())?;
    ensure(share >= 0.9, || format!("{recovered}/{planted} distractors relabelled N ({share:.3})"))?;
    ensure(out.history.len() <= 20, || format!("{} iterations", out.history.len()))?;

    let off = PseudoLabelConfig { conf_threshold: 1.5, ..cfg.clone() };
    let gated = train_pseudo_label(&bags, &off).map_err(|e| e.to_string())?.model;
    let plain = train_on_bag_labels(&bags, &off).map_err(|e| e.to_string())?;
    for b in &bags {
        for r in &b.instances {
            let (x, y) = (gated.predict_proba(r).map_err(|e| e.to_string())?, plain.predict_proba(r).map_err(|e| e.to_string())?);
            ensure(x.iter().zip(&y).all(|(a, c)| a.to_bits() == c.to_bits()), || "threshold > 1 differs from bag-label training".into())?;
        }
    }
    Ok(format!(
        "{recovered}/{planted} distractors end N ({:.1}%), {} iterations (converged {}); threshold 1.5 equals bag-label training",
        100.0 * share,
        out.history.len(),
        out.converged
    ))
}

fn ablation_ordering() -> Check {
    let corpus = SceneGenerator::new(SceneConfig::default()).corpus();
    let (bags, _) = mil_bags(&corpus);
    let cfg = PseudoLabelConfig::default();
    let (train_idx, test_idx) = split_bags(&bags, &PseudoLabelConfig { val_fraction: 0.2, ..cfg.clone() });
    let pick = |idx: &[usize]| -> Vec<Bag> { idx.iter().map(|&i| bags[i].clone()).collect() };
    let rows = feature_group_ablation(&pick(&train_idx), &pick(&test_idx), &cfg).map_err(|e| e.to_string())?;
    let with: Vec<f64> = rows.iter().filter(|r| r.groups.heights).map(|r| r.accuracy).collect();
    let without: Vec<f64> = rows.iter().filter(|r| !r.groups.heights).map(|r| r.accuracy).collect();
    let lo = with.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = without.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let table: Vec<String> = rows.iter().map(|r| format!("{} {:.3}", r.name, r.accuracy)).collect();
    ensure(with.len() == 4 && without.len() == 3 && lo > hi, || table.join(", "))?;
    Ok(format!("worst with heights {lo:.3} > best without {hi:.3} ({})", table.join(", ")))
}

// ---------------------------------------------------------------- spearman

fn oracle_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let less = v.iter().filter(|&&y| y < x).count() as f64;
            let eq = v.iter().filter(|&&y| y == x).count() as f64;
            less + (eq + 1.0) / 2.0
        })
        .collect()
}

fn oracle_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va * vb).sqrt()
}

fn spearman_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut sets = 0;
    for n in (10..=100).step_by(5) {
        for tied in [false, true] {
            let draw = |rng: &mut ChaCha8Rng| if tied { f64::from(rng.random_range(0..6)) } else { rng.random::<f64>() };
            let x: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
            let y: Vec<f64> = x.iter().map(|v| v + draw(&mut rng)).collect();
            let s = spearman(&x, &y).map_err(|e| e.to_string())?;
            let want = oracle_pearson(&oracle_ranks(&x), &oracle_ranks(&y));
            worst = worst.max((s.r - want).abs());
            sets += 1;
        }
    }
    ensure(worst < 1e-12, || format!("max |dr| {worst:e}"))?;
    let x: Vec<f64> = (0..30).map(|i| f64::from(i) * 0.7 - 3.0).collect();
    let up: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    let down: Vec<f64> = x.iter().map(|v| -v * v * v).collect();
    let (a, b) = (spearman(&x, &up).map_err(|e| e.to_string())?.r, spearman(&x, &down).map_err(|e| e.to_string())?.r);
    ensure(a == 1.0 && b == -1.0, || format!("monotone data gave {a}, {b}"))?;
    Ok(format!("{sets} sets, max |dr| {worst:.1e}; monotone data gives +1 and -1 exactly"))
}

// ---------------------------------------------------------------- geometry

const LON0: f64 = -95.45;
const LAT0: f64 = 29.70;
const STEP: f64 = 0.01;
const BUFFER: f64 = 200.0;

fn haversine(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * 6_371_008.8 * h.sqrt().asin()
}

type Rect = (f64, f64, f64, f64);

fn inside(r: Rect, p: GeoPoint) -> bool {
    p.lon >= r.0 && p.lon <= r.2 && p.lat >= r.1 && p.lat <= r.3
}

/// Great-circle distance to a rectangle by dense edge sampling.
fn distance_to(r: Rect, p: GeoPoint) -> f64 {
    if inside(r, p) {
        return 0.0;
    }
    let n = 2000;
    (0..=n)
        .flat_map(|i| {
            let f = f64::from(i) / f64::from(n);
            let (lon, lat) = (r.0 + f * (r.2 - r.0), r.1 + f * (r.3 - r.1));
            [GeoPoint::new(lon, r.1), GeoPoint::new(lon, r.3), GeoPoint::new(r.0, lat), GeoPoint::new(r.2, lat)]
        })
        .map(|q| haversine(p, q))
        .fold(f64::INFINITY, f64::min)
}

fn geometry_oracle() -> Check {
    let mut tracts = Vec::new();
    let mut rects = BTreeMap::new();
    for row in 0..10 {
        for col in 0..10 {
            let r = (LON0 + f64::from(col) * STEP, LAT0 + f64::from(row) * STEP, LON0 + f64::from(col + 1) * STEP, LAT0 + f64::from(row + 1) * STEP);
            let id = format!("T{row}{col}");
            rects.insert(id.clone(), r);
            tracts.push(TractGeometry { tract_id: id, polygons: vec![Polygon::rectangle(r.0, r.1, r.2, r.3)] });
        }
    }
    let layer = TractLayer::new(tracts).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(600);
    let random_point = |rng: &mut ChaCha8Rng| GeoPoint::new(rng.random_range(LON0 - 0.004..LON0 + 0.104), rng.random_range(LAT0 - 0.004..LAT0 + 0.104));

    // planted points whose verdict does not sit within a metre of the buffer
    let mut points = Vec::new();
    while points.len() < 80 {
        let p = random_point(&mut rng);
        let d: BTreeMap<&String, f64> = rects.iter().map(|(id, &r)| (id, distance_to(r, p))).collect();
        if d.values().all(|&d| (d - BUFFER).abs() > 1.0) {
            points.push((p, d));
        }
    }
    let placements: Vec<Placement> = points.iter().map(|(p, _)| Placement::Point { point: *p }).collect();
    let marked = mark_extent(&layer, &placements, BUFFER);
    for t in marked.tracts() {
        let want = points.iter().any(|(_, d)| d[&t.geometry.tract_id] <= BUFFER);
        ensure(t.attrs.flood_relevant == want, || format!("extent of {}", t.geometry.tract_id))?;
    }
    let n_marked = marked.tracts().iter().filter(|t| t.attrs.flood_relevant).count();

    // severity: mode over point estimates in reach, ties to the higher class
    let estimates: Vec<(Placement, WaterLevelClass)> =
        points.iter().map(|(p, _)| (Placement::Point { point: *p }, WaterLevelClass::ALL[rng.random_range(0..5)])).collect();
    let (sev, _) = aggregate_severity(&layer, &estimates, BUFFER);
    for t in sev.tracts() {
        let mut votes = [0usize; 5];
        for ((_, d), (_, c)) in points.iter().zip(&estimates) {
            if *c != WaterLevelClass::N && d[&t.geometry.tract_id] <= BUFFER {
                votes[c.index()] += 1;
            }
        }
        let top = votes.iter().copied().max().unwrap_or(0);
        let want = (top > 0).then(|| WaterLevelClass::ALL[(0..5).rev().find(|&k| votes[k] == top).unwrap()]);
        ensure(t.attrs.severity == want, || format!("severity of {}", t.geometry.tract_id))?;
    }

    // claims: point in polygon, shared borders to the lowest tract id
    let date = NaiveDate::from_ymd_opt(2017, 8, 29).unwrap();
    let claims: Vec<ClaimPoint> = (0..500)
        .map(|i| ClaimPoint { id: format!("c{i}"), location: random_point(&mut rng), date, loss_type: "flood".into() })
        .collect();
    let (cl, _) = claims_reference(&layer, &claims, &BTreeSet::new(), 3);
    for t in cl.tracts() {
        let want = claims
            .iter()
            .filter(|c| rects.iter().find(|(_, &r)| inside(r, c.location)).map(|(id, _)| id) == Some(&t.geometry.tract_id))
            .count() as u64;
        ensure(t.attrs.claim_count == want && t.attrs.reference_flooded == (want >= 3), || format!("claims of {}", t.geometry.tract_id))?;
    }

    // depth: maximum over cells whose centre falls in the tract
    let (nc, nr, cell) = (60usize, 60usize, 0.002);
    let (xll, yll) = (LON0 - 0.01, LAT0 - 0.01);
    let values: Vec<f64> = (0..nc * nr).map(|_| if rng.random::<f64>() < 0.15 { -9999.0 } else { rng.random_range(0.0..4.0) }).collect();
    let grid = AsciiGrid::new(nc, nr, xll, yll, cell, -9999.0, values.clone()).map_err(|e| e.to_string())?;
    let (dp, _) = aggregate_depth(&layer, &grid, &GridMapping::IDENTITY);
    for t in dp.tracts() {
        let r = rects[&t.geometry.tract_id];
        let mut want: Option<f64> = None;
        for row in 0..nr {
            for col in 0..nc {
                let v = values[row * nc + col];
                let c = GeoPoint::new(xll + (col as f64 + 0.5) * cell, yll + ((nr - row) as f64 - 0.5) * cell);
                if v != -9999.0 && inside(r, c) {
                    want = Some(want.map_or(v, |m: f64| m.max(v)));
                }
            }
        }
        ensure(t.attrs.max_depth == want, || format!("depth of {}", t.geometry.tract_id))?;
    }

    // buffer fixture: a point 150 m from tract A and 500 m from tract B
    let plane = LocalPlane::new(GeoPoint::new(-95.39, 29.705));
    let p = plane.unproject(plane.project(GeoPoint::new(-95.39, 29.705)).0 + 150.0, 0.0);
    let bx = plane.unproject(plane.project(p).0 + 500.0, 0.0).lon;
    let (ra, rb) = ((-95.40, 29.70, -95.39, 29.71), (bx, 29.70, bx + 0.01, 29.71));
    let (da, db) = (distance_to(ra, p), distance_to(rb, p));
    ensure((da - 150.0).abs() < 1.0 && (db - 500.0).abs() < 1.0, || format!("fixture distances {da:.2} / {db:.2} m"))?;
    let pair = TractLayer::new(vec![
        TractGeometry { tract_id: "A".into(), polygons: vec![Polygon::rectangle(ra.0, ra.1, ra.2, ra.3)] },
        TractGeometry { tract_id: "B".into(), polygons: vec![Polygon::rectangle(rb.0, rb.1, rb.2, rb.3)] },
    ])
    .map_err(|e| e.to_string())?;
    let m = mark_extent(&pair, &[Placement::Point { point: p }], BUFFER);
    let flag = |id: &str| m.tracts().iter().any(|t| t.geometry.tract_id == id && t.attrs.flood_relevant);
    ensure(flag("A") && !flag("B"), || "buffer fixture".into())?;
    let bbox = GeoBox::new(LON0 + 0.015, LAT0 + 0.015, LON0 + 0.025, LAT0 + 0.025);
    let boxed = mark_extent(&layer, &[Placement::Box { bbox }], BUFFER);
    ensure(boxed.tracts().iter().filter(|t| t.attrs.flood_relevant).count() == 4, || "box over four tracts".into())?;
    Ok(format!(
        "10x10 grid: extent ({n_marked} marked), severity, 500 claims, 3600-cell depth scan agree; 150 m in ({da:.1}), 500 m out ({db:.1})"
    ))
}

// ---------------------------------------------------------------- end to end

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != "timings.json") {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap_or_default());
            }
        }
    }
    out
}

fn run_pipeline(dir: &Path, threads: &str) -> Result<(), String> {
    std::fs::write(dir.join("run.toml"), include_str!("../../../configs/synthetic.toml")).map_err(|e| e.to_string())?;
    for s in Stage::PIPELINE {
        let out = Command::new(env!("CARGO_BIN_EXE_floodmap"))
            .current_dir(dir)
            .args([s.name(), "--config", "run.toml", "--seed", "2017"])
            .env("RAYON_NUM_THREADS", threads)
            .env_remove("FLOODMAP_ROOT")
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || format!("{} failed: {}", s.name(), String::from_utf8_lossy(&out.stderr)))?;
    }
    Ok(())
}

fn determinism(keep: &mut Option<tempfile::TempDir>) -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_pipeline(a.path(), "1")?;
    run_pipeline(b.path(), "4")?;
    let (fa, fb) = (files(a.path()), files(b.path()));
    ensure(fa.keys().eq(fb.keys()), || "runs wrote different file sets".into())?;
    let differing: Vec<String> = fa.iter().filter(|(k, v)| fb[*k] != **v).map(|(k, _)| k.display().to_string()).collect();
    ensure(differing.is_empty(), || format!("differing artifacts: {}", differing.join(", ")))?;
    ensure(fa.contains_key(Path::new("out/render-map/map.html")), || "no HTML map".into())?;
    let bytes: usize = fa.values().map(Vec::len).sum();
    *keep = Some(a);
    Ok(format!("{} files ({bytes} bytes) byte-identical across runs with 1 and 4 worker threads", fa.len()))
}

/// Real-data figures cannot be recomputed here; this checks that the
/// reports a real run would fill have the table layouts to slot them into.
fn not_reproducible(run: Option<&Path>) -> Check {
    let dir = run.ok_or("no pipeline run to inspect")?;
    let read = |p: &str| std::fs::read_to_string(dir.join(p)).map_err(|e| format!("{p}: {e}"));
    let metrics = read("out/evaluate/extent_metrics.csv")?;
    ensure(metrics.starts_with("layer,tn,fp,fn,tp,precision,recall,f1,accuracy"), || "extent metrics layout".into())?;
    let bins = read("out/classify/bins.csv")?;
    ensure(floodmap_core::relevance::BIN_LABELS.iter().all(|b| bins.contains(b)), || "relevance bins layout".into())?;
    let report = read("out/evaluate/report.json")?;
    ensure(report.contains("\"tracts_with_severity\"") && report.contains("\"strength\""), || "correlation report layout".into())?;
    let dedup = read("out/dedup/report.json")?;
    ensure(dedup.contains("\"clusters\"") && dedup.contains("\"removed\""), || "dedup report layout".into())?;
    Ok("retrieval scores on the external image benchmark, the 90% water-level accuracy on the private test set, \
        the hurricane post/cluster counts and the r = 0.1836 tract correlation need unavailable data and are not \
        reproduced; the oracle suites above stand in, and the report layouts for those figures are present"
        .into())
}

fn main() -> ExitCode {
    let mut run_dir = None;
    let mut results: Vec<(&str, Check)> = Vec::new();
    let mut record = |name, f: &mut dyn FnMut() -> Check| {
        let start = Instant::now();
        let r = f();
        let secs = start.elapsed().as_secs_f64();
        match &r {
            Ok(d) => println!("PASS {name}: {d} [{secs:.1} s]"),
            Err(d) => println!("FAIL {name}: {d} [{secs:.1} s]"),
        }
        results.push((name, r));
    };
    record("metric-golden-numbers", &mut table_metrics);
    record("height-affine-invariance", &mut height_invariance);
    record("gbdt-numerics", &mut gbdt_numerics);
    record("dbscan-oracle", &mut dbscan_oracle);
    record("pseudo-label-recovery", &mut pseudo_label_recovery);
    record("feature-group-ablation", &mut ablation_ordering);
    record("spearman-oracle", &mut spearman_oracle);
    record("geometry-oracle", &mut geometry_oracle);
    record("end-to-end-determinism", &mut || determinism(&mut run_dir));
    let dir = run_dir.as_ref().map(|d| d.path().to_path_buf());
    record("not-reproducible-at-desk-scale", &mut || not_reproducible(dir.as_deref()));
    let failed = results.iter().filter(|(_, r)| r.is_err()).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
