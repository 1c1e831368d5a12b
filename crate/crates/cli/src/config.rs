//! Pipeline configuration: one versioned TOML document.
//!
//! ```toml
//! version = 1
//! seed = 2017
//!
//! [paths]
//! posts = "input/posts.jsonl"
//! output = "out"
//!
//! [thresholds]
//! relevance_severity = 0.99
//!
//! [dedup]
//! eps = 10.0
//! ```
//!
//! Relative paths resolve against `paths.root`, which defaults to the
//! directory holding the config file. Paths, and only paths, can be
//! overridden from the environment (`FLOODMAP_POSTS`, `FLOODMAP_OUTPUT`, ...).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use floodmap_core::gbdt::TrainConfig;
use floodmap_core::geomap::{GridMapping, DEFAULT_BUFFER_M, DEFAULT_KDE_RADIUS_M, DEFAULT_MIN_CLAIMS};
use floodmap_core::relevance::{DEFAULT_CUTOFFS, POSITIVE_THRESHOLD};
use floodmap_core::synthetic::WorldConfig;
use floodmap_core::waterlevel::{PseudoLabelConfig, DEFAULT_CONF_THRESHOLD, DEFAULT_MAX_ITERS, DEFAULT_RELABEL_FOLDS};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{StageError, StageResult};

pub const CONFIG_VERSION: u32 = 1;
pub const ENV_PREFIX: &str = "FLOODMAP_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    pub seed: u64,
    pub paths: Paths,
    pub thresholds: Thresholds,
    pub relevance: RelevanceSettings,
    pub dedup: DedupSettings,
    pub waterlevel: WaterLevelSettings,
    pub evaluate: EvaluateSettings,
    pub synthetic: WorldConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 2017,
            paths: Paths::default(),
            thresholds: Thresholds::default(),
            relevance: RelevanceSettings::default(),
            dedup: DedupSettings::default(),
            waterlevel: WaterLevelSettings::default(),
            evaluate: EvaluateSettings::default(),
            synthetic: WorldConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Base for relative paths. Not recorded in manifests so runs stay
    /// relocatable.
    #[serde(skip_serializing)]
    pub root: Option<PathBuf>,
    pub posts: PathBuf,
    pub bundles: PathBuf,
    pub tracts: PathBuf,
    pub claims: PathBuf,
    pub depth: PathBuf,
    pub relevance_labels: PathBuf,
    pub bag_labels: PathBuf,
    /// CSV `lon,lat` of city centroids whose geotags are city-level.
    pub city_centroids: Option<PathBuf>,
    pub models: PathBuf,
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            root: None,
            posts: "input/posts.jsonl".into(),
            bundles: "input/bundles".into(),
            tracts: "input/tracts.geojson".into(),
            claims: "input/claims.csv".into(),
            depth: "input/depth.asc".into(),
            relevance_labels: "input/relevance_labels.csv".into(),
            bag_labels: "input/bag_labels.csv".into(),
            city_centroids: Some("input/city_centroids.csv".into()),
            models: "models".into(),
            output: "out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Relevance score a post needs to enter duplicate removal and mapping.
    pub relevance_dedup: f64,
    /// Relevance score a post needs to feed the severity layer.
    pub relevance_severity: f64,
    pub pseudo_conf: f64,
    pub buffer_m: f64,
    pub kde_radius_m: f64,
    pub kde_cell_m: f64,
    pub claims_min: u64,
    /// A tract is flooded by the depth raster when its maximum depth exceeds this.
    pub depth_min_m: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            relevance_dedup: POSITIVE_THRESHOLD,
            relevance_severity: 0.99,
            pseudo_conf: DEFAULT_CONF_THRESHOLD,
            buffer_m: DEFAULT_BUFFER_M,
            kde_radius_m: DEFAULT_KDE_RADIUS_M,
            kde_cell_m: 100.0,
            claims_min: DEFAULT_MIN_CLAIMS,
            depth_min_m: 0.0,
        }
    }
}

/// Boosting parameters shared by both models; class count and seed come from
/// the stage and the pipeline seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtSettings {
    pub max_depth: usize,
    pub learning_rate: f64,
    pub num_rounds: usize,
    pub early_stopping_rounds: usize,
    pub min_split_gain: f64,
    pub lambda_l2: f64,
    pub min_child_weight: f64,
}

impl Default for GbdtSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            max_depth: t.max_depth,
            learning_rate: t.learning_rate,
            num_rounds: t.num_rounds,
            early_stopping_rounds: t.early_stopping_rounds,
            min_split_gain: t.min_split_gain,
            lambda_l2: t.lambda_l2,
            min_child_weight: t.min_child_weight,
        }
    }
}

impl GbdtSettings {
    pub fn train_config(&self, num_classes: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            max_depth: self.max_depth,
            learning_rate: self.learning_rate,
            num_rounds: self.num_rounds,
            early_stopping_rounds: self.early_stopping_rounds,
            num_classes,
            min_split_gain: self.min_split_gain,
            lambda_l2: self.lambda_l2,
            min_child_weight: self.min_child_weight,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelevanceSettings {
    pub gbdt: GbdtSettings,
    pub val_fraction: f64,
    pub cutoffs: Vec<usize>,
}

impl Default for RelevanceSettings {
    fn default() -> Self {
        Self {
            gbdt: GbdtSettings::default(),
            val_fraction: 0.2,
            cutoffs: DEFAULT_CUTOFFS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DedupSettings {
    /// Neighbourhood radius. Must be chosen from the k-distance curve.
    pub eps: Option<f64>,
    pub min_pts: usize,
    /// Neighbour rank of the k-distance curve.
    pub k: usize,
}

impl Default for DedupSettings {
    fn default() -> Self {
        Self {
            eps: None,
            min_pts: 2,
            k: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaterLevelSettings {
    pub gbdt: GbdtSettings,
    pub max_iters: usize,
    pub val_fraction: f64,
    pub relabel_folds: usize,
}

impl Default for WaterLevelSettings {
    fn default() -> Self {
        Self {
            gbdt: GbdtSettings::default(),
            max_iters: DEFAULT_MAX_ITERS,
            val_fraction: 0.2,
            relabel_folds: DEFAULT_RELABEL_FOLDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSettings {
    /// Claim loss types counted by the reference layer; empty accepts all.
    pub loss_types: Vec<String>,
    /// Maps depth-grid coordinates to lon/lat.
    pub grid_mapping: GridMapping,
}

impl Default for EvaluateSettings {
    fn default() -> Self {
        Self {
            loss_types: vec!["flood".into()],
            grid_mapping: GridMapping::IDENTITY,
        }
    }
}

impl PipelineConfig {
    pub fn pseudo_label(&self) -> PseudoLabelConfig {
        PseudoLabelConfig {
            train: self.waterlevel.gbdt.train_config(5, self.seed),
            conf_threshold: self.thresholds.pseudo_conf,
            max_iters: self.waterlevel.max_iters,
            val_fraction: self.waterlevel.val_fraction,
            relabel_folds: self.waterlevel.relabel_folds,
        }
    }

    pub fn world(&self) -> WorldConfig {
        WorldConfig {
            seed: self.seed,
            ..self.synthetic.clone()
        }
    }

    fn check(&self) -> StageResult<()> {
        let t = &self.thresholds;
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(StageError::input(format!("thresholds.{name} must be in [0, 1], got {v}")))
            }
        };
        unit("relevance_dedup", t.relevance_dedup)?;
        unit("relevance_severity", t.relevance_severity)?;
        for (name, v) in [("buffer_m", t.buffer_m), ("kde_radius_m", t.kde_radius_m), ("kde_cell_m", t.kde_cell_m)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(StageError::input(format!("thresholds.{name} must be positive, got {v}")));
            }
        }
        if t.pseudo_conf.is_nan() {
            return Err(StageError::input("thresholds.pseudo_conf is NaN"));
        }
        if let Some(eps) = self.dedup.eps {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(StageError::input(format!("dedup.eps must be positive, got {eps}")));
            }
        }
        if self.dedup.min_pts == 0 || self.dedup.k == 0 {
            return Err(StageError::input("dedup.min_pts and dedup.k must be at least 1"));
        }
        for (name, g) in [("relevance", &self.relevance.gbdt), ("waterlevel", &self.waterlevel.gbdt)] {
            g.train_config(2, 0).validate().map_err(|e| StageError::input(format!("{name}.gbdt: {e}")))?;
        }
        if !(0.0..1.0).contains(&self.relevance.val_fraction) {
            return Err(StageError::input("relevance.val_fraction must be in [0, 1)"));
        }
        Ok(())
    }
}

/// A parsed configuration with its base directory and audit data.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub root: PathBuf,
    /// SHA-256 of the canonical JSON form of `config`.
    pub hash: String,
    /// Every setting that differs from the defaults, by dotted path.
    pub overrides: BTreeMap<String, Value>,
}

impl LoadedConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.paths.output)
    }

    pub fn models_dir(&self) -> PathBuf {
        self.resolve(&self.config.paths.models)
    }
}

pub fn parse_config(src: &str) -> StageResult<PipelineConfig> {
    let table: toml::Table = toml::from_str(src).map_err(|e| StageError::input(format!("config: {e}")))?;
    match table.get("version").and_then(toml::Value::as_integer) {
        Some(v) if v == i64::from(CONFIG_VERSION) => {}
        Some(v) => return Err(StageError::input(format!("config version {v} is not supported (expected {CONFIG_VERSION})"))),
        None => return Err(StageError::input("config must declare `version = 1`")),
    }
    toml::from_str(src).map_err(|e| StageError::input(format!("config: {e}")))
}

/// Applies `FLOODMAP_<FIELD>` path overrides from `env`.
pub fn apply_env(paths: &mut Paths, env: impl Fn(&str) -> Option<String>) {
    let var = |name: &str| env(&format!("{ENV_PREFIX}{name}")).filter(|v| !v.is_empty()).map(PathBuf::from);
    if let Some(v) = var("ROOT") {
        paths.root = Some(v);
    }
    let fields: [(&str, &mut PathBuf); 9] = [
        ("POSTS", &mut paths.posts),
        ("BUNDLES", &mut paths.bundles),
        ("TRACTS", &mut paths.tracts),
        ("CLAIMS", &mut paths.claims),
        ("DEPTH", &mut paths.depth),
        ("RELEVANCE_LABELS", &mut paths.relevance_labels),
        ("BAG_LABELS", &mut paths.bag_labels),
        ("MODELS", &mut paths.models),
        ("OUTPUT", &mut paths.output),
    ];
    for (name, slot) in fields {
        if let Some(v) = var(name) {
            *slot = v;
        }
    }
    if let Some(v) = var("CITY_CENTROIDS") {
        paths.city_centroids = Some(v);
    }
}

pub fn load_config(path: &Path, seed: Option<u64>) -> StageResult<LoadedConfig> {
    let src = std::fs::read_to_string(path).map_err(|e| StageError::input(format!("reading config {}: {e}", path.display())))?;
    let mut config = parse_config(&src)?;
    apply_env(&mut config.paths, |k| std::env::var(k).ok());
    if let Some(s) = seed {
        config.seed = s;
    }
    config.synthetic.seed = config.seed;
    config.check()?;
    let root = match &config.paths.root {
        Some(r) if r.is_absolute() => r.clone(),
        Some(r) => path.parent().unwrap_or(Path::new(".")).join(r),
        None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let root = if root.as_os_str().is_empty() { PathBuf::from(".") } else { root };
    Ok(finish(config, root))
}

pub fn finish(config: PipelineConfig, root: PathBuf) -> LoadedConfig {
    let value = serde_json::to_value(&config).expect("config serializes");
    let hash = crate::manifest::sha256_hex(value.to_string().as_bytes());
    let mut defaults = PipelineConfig::default();
    defaults.synthetic.seed = defaults.seed;
    let base = serde_json::to_value(&defaults).expect("config serializes");
    let mut overrides = BTreeMap::new();
    diff_values("", &base, &value, &mut overrides);
    LoadedConfig {
        config,
        root,
        hash,
        overrides,
    }
}

fn diff_values(prefix: &str, base: &Value, value: &Value, out: &mut BTreeMap<String, Value>) {
    match (base, value) {
        (Value::Object(b), Value::Object(v)) => {
            for (k, vv) in v {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                match b.get(k) {
                    Some(bv) => diff_values(&path, bv, vv, out),
                    None => {
                        out.insert(path, vv.clone());
                    }
                }
            }
        }
        (b, v) if b != v => {
            out.insert(prefix.to_string(), v.clone());
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_constants() {
        let c = parse_config("version = 1").unwrap();
        assert_eq!(c, PipelineConfig::default());
        let t = &c.thresholds;
        assert_eq!(
            (t.relevance_dedup, t.relevance_severity, t.pseudo_conf, t.buffer_m, t.kde_radius_m, t.claims_min),
            (0.5, 0.99, 0.85, 200.0, 2000.0, 3)
        );
        assert_eq!(c.dedup.min_pts, 2);
        assert_eq!(c.relevance.gbdt.max_depth, 2);
        assert_eq!(c.relevance.gbdt.learning_rate, 0.3);
        assert_eq!(c.relevance.gbdt.num_rounds, 300);
        assert_eq!(c.relevance.gbdt.early_stopping_rounds, 20);
    }

    #[test]
    fn version_and_unknown_keys_are_checked() {
        assert!(parse_config("seed = 1").is_err());
        assert!(parse_config("version = 2").is_err());
        assert!(parse_config("version = 1\n[thresholds]\nbufer_m = 3\n").is_err());
    }

    #[test]
    fn overrides_are_listed() {
        let mut c = parse_config("version = 1\n[thresholds]\nbuffer_m = 150.0\n[dedup]\neps = 12.5\n").unwrap();
        c.synthetic.seed = c.seed;
        let l = finish(c, PathBuf::from("."));
        assert_eq!(l.overrides.len(), 2);
        assert_eq!(l.overrides["thresholds.buffer_m"], serde_json::json!(150.0));
        assert_eq!(l.overrides["dedup.eps"], serde_json::json!(12.5));
    }

    #[test]
    fn env_overrides_touch_paths_only() {
        let mut p = Paths::default();
        apply_env(&mut p, |k| match k {
            "FLOODMAP_POSTS" => Some("/data/p.jsonl".into()),
            "FLOODMAP_CITY_CENTROIDS" => Some("c.csv".into()),
            _ => None,
        });
        assert_eq!(p.posts, PathBuf::from("/data/p.jsonl"));
        assert_eq!(p.city_centroids, Some(PathBuf::from("c.csv")));
        assert_eq!(p.tracts, Paths::default().tracts);
    }

    proptest::proptest! {
        #[test]
        fn every_changed_threshold_is_echoed(
            dedup in 0.0f64..=1.0,
            severity in 0.0f64..=1.0,
            buffer in 1.0f64..1000.0,
            radius in 10.0f64..5000.0,
            claims_min in 1u64..20,
            eps in proptest::option::of(0.1f64..50.0),
        ) {
            let mut src = format!(
                "version = 1\n[thresholds]\nrelevance_dedup = {dedup:?}\nrelevance_severity = {severity:?}\n\
                 buffer_m = {buffer:?}\nkde_radius_m = {radius:?}\nclaims_min = {claims_min}\n"
            );
            if let Some(e) = eps {
                src.push_str(&format!("[dedup]\neps = {e:?}\n"));
            }
            let mut c = parse_config(&src).unwrap();
            c.synthetic.seed = c.seed;
            let l = finish(c, PathBuf::from("."));
            let d = Thresholds::default();
            let json = serde_json::to_value(&l.config).unwrap();
            for (key, v, default) in [
                ("relevance_dedup", dedup, d.relevance_dedup),
                ("relevance_severity", severity, d.relevance_severity),
                ("buffer_m", buffer, d.buffer_m),
                ("kde_radius_m", radius, d.kde_radius_m),
                ("claims_min", claims_min as f64, d.claims_min as f64),
            ] {
                proptest::prop_assert_eq!(json["thresholds"][key].as_f64(), Some(v));
                let path = format!("thresholds.{key}");
                proptest::prop_assert_eq!(l.overrides.contains_key(&path), v != default);
            }
            proptest::prop_assert_eq!(l.overrides.get("dedup.eps").and_then(|v| v.as_f64()), eps);
        }
    }
}
