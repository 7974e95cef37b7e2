//! Tree classifiers over feature rows: a single CART tree, a bagged random
//! forest, and histogram gradient boosting.

mod experiments;
mod gbdt;
mod metrics;
mod tree;

use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use experiments::{
    compare_models, cross_bin_experiment, default_subsets, feature_subset_experiment, summarize, train_sizes,
    CrossBinConfig, CrossBinReport, CrossBinRow, FeatureSubset, ReportRow, SubsetSummary, TestSet,
    REPORT_CSV_HEADER,
};
pub use metrics::{evaluate, Metrics};
pub use tree::{argmax, Node, Tree};

use crate::dataset::{Dataset, FeatureRow, FEATURE_NAMES, N_FEATURES};
use crate::exec;
use tree::{build_cart, FeatureDraw};

pub const MODEL_FORMAT: &str = "latentid-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("need at least two classes, got {0}")]
    TooFewClasses(usize),
    #[error("bad params: {0}")]
    Params(String),
    #[error("row has {0} features, expected {N_FEATURES}")]
    Shape(usize),
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("label {0} is not one of the model's classes")]
    UnknownClass(String),
    #[error("bad feature subset: {0}")]
    BadSubset(String),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Dt,
    Rf,
    Gbdt,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Dt, ModelKind::Rf, ModelKind::Gbdt];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dt" => Some(ModelKind::Dt),
            "rf" => Some(ModelKind::Rf),
            "gbdt" => Some(ModelKind::Gbdt),
            _ => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Dt => "dt",
            ModelKind::Rf => "rf",
            ModelKind::Gbdt => "gbdt",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 8,
            min_samples_leaf: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per split; `None` means ⌊√d⌋ of the allowed columns.
    pub feature_subsample: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            feature_subsample: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub tree: TreeParams,
    pub n_trees: usize,
    pub learning_rate: f64,
    pub histogram_bins: usize,
    pub lambda_l2: f64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            tree: TreeParams::default(),
            n_trees: 200,
            learning_rate: 0.1,
            histogram_bins: 255,
            lambda_l2: 1.0,
        }
    }
}

/// Everything `train` needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub tree: TreeParams,
    pub forest: ForestParams,
    pub gbdt: GbdtParams,
    /// Columns the model may split on.
    pub features: Vec<usize>,
    pub seed: u64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            tree: TreeParams::default(),
            forest: ForestParams::default(),
            gbdt: GbdtParams::default(),
            features: (0..N_FEATURES).collect(),
            seed: 42,
        }
    }
}

impl ModelParams {
    pub fn with_features(mut self, features: &[usize]) -> Self {
        self.features = features.to_vec();
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self, kind: ModelKind) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Params(m.to_string()));
        let tree = if kind == ModelKind::Gbdt { self.gbdt.tree } else { self.tree };
        if tree.max_depth == 0 || tree.min_samples_leaf == 0 {
            return bad("max_depth and min_samples_leaf must be positive");
        }
        if self.features.is_empty() || self.features.iter().any(|&f| f >= N_FEATURES) {
            return bad("feature list must be non-empty with indices < 8");
        }
        match kind {
            ModelKind::Rf if self.forest.n_trees == 0 || self.forest.feature_subsample == Some(0) => {
                bad("forest needs n_trees > 0 and feature_subsample > 0")
            }
            ModelKind::Gbdt
                if self.gbdt.n_trees == 0
                    || !(self.gbdt.learning_rate > 0.0 && self.gbdt.learning_rate <= 1.0)
                    || self.gbdt.histogram_bins < 2
                    || !(self.gbdt.lambda_l2 >= 0.0) =>
            {
                bad("gbdt needs n_trees > 0, learning_rate in (0,1], >= 2 bins, lambda >= 0")
            }
            _ => Ok(()),
        }
    }
}

/// Dense training view: rows, label indices into the class list.
#[derive(Debug, Clone)]
pub(crate) struct TrainData {
    pub x: Vec<[f64; N_FEATURES]>,
    pub y: Vec<usize>,
    pub n_classes: usize,
}

impl TrainData {
    fn from_dataset(ds: &Dataset, classes: &[String]) -> Result<Self, ModelError> {
        let y = ds
            .rows
            .iter()
            .map(|r| class_index(classes, &r.label))
            .collect::<Result<_, _>>()?;
        Ok(TrainData {
            x: ds.rows.iter().map(|r| r.features).collect(),
            y,
            n_classes: classes.len(),
        })
    }
}

fn class_index(classes: &[String], label: &str) -> Result<usize, ModelError> {
    classes
        .binary_search_by(|c| c.as_str().cmp(label))
        .map_err(|_| ModelError::UnknownClass(label.to_string()))
}

/// A trained classifier. Serializes to a versioned JSON tree dump; the
/// training duration is kept in memory only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub format: String,
    pub version: u32,
    pub kind: ModelKind,
    pub classes: Vec<String>,
    pub feature_names: Vec<String>,
    pub features: Vec<usize>,
    pub trees: Vec<Tree>,
    /// Boosting only: class each tree contributes to.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tree_class: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub init_scores: Vec<f64>,
    /// Set when no split could separate the classes and the model fell back
    /// to a single leaf.
    pub degenerate: bool,
    #[serde(skip)]
    pub train_duration_s: f64,
}

fn tree_seed(seed: u64, tree: usize) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ (tree as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn train(kind: ModelKind, train_set: &Dataset, params: &ModelParams) -> Result<Model, ModelError> {
    params.validate(kind)?;
    let classes = train_set.classes();
    if classes.len() < 2 {
        return Err(ModelError::TooFewClasses(classes.len()));
    }
    let started = Instant::now();
    let data = TrainData::from_dataset(train_set, &classes)?;
    let mut features = params.features.clone();
    features.sort_unstable();
    features.dedup();
    let all_rows: Vec<usize> = (0..data.x.len()).collect();

    let (trees, tree_class, init_scores) = match kind {
        ModelKind::Dt => {
            let t = build_cart(&data, all_rows, &params.tree, FeatureDraw::<ChaCha8Rng>::All(&features));
            (vec![t], vec![], vec![])
        }
        ModelKind::Rf => {
            let k = params
                .forest
                .feature_subsample
                .unwrap_or_else(|| ((features.len() as f64).sqrt().floor() as usize).max(1));
            let n = data.x.len();
            let trees = exec::map_range(params.forest.n_trees, |t| {
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(params.seed, t));
                let boot: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let draw = FeatureDraw::Subsample {
                    allowed: &features,
                    k,
                    rng,
                };
                build_cart(&data, boot, &params.tree, draw)
            });
            (trees, vec![], vec![])
        }
        ModelKind::Gbdt => {
            let b = gbdt::fit(&data, &params.gbdt, &features);
            (b.trees, b.tree_class, b.init_scores)
        }
    };
    let degenerate = kind != ModelKind::Gbdt && trees.iter().all(Tree::is_stump_leaf);
    Ok(Model {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        kind,
        classes,
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        features,
        trees,
        tree_class,
        init_scores,
        degenerate,
        train_duration_s: started.elapsed().as_secs_f64(),
    })
}

impl Model {
    /// Class index for an 8-feature row.
    pub fn predict_index(&self, x: &[f64; N_FEATURES]) -> usize {
        match self.kind {
            ModelKind::Dt => argmax(self.trees[0].leaf_value(x)),
            ModelKind::Rf => {
                let mut votes = vec![0.0; self.classes.len()];
                for t in &self.trees {
                    votes[argmax(t.leaf_value(x))] += 1.0;
                }
                argmax(&votes)
            }
            ModelKind::Gbdt => argmax(&self.raw_scores(x)),
        }
    }

    fn raw_scores(&self, x: &[f64; N_FEATURES]) -> Vec<f64> {
        let mut raw = self.init_scores.clone();
        for (t, &c) in self.trees.iter().zip(&self.tree_class) {
            raw[c] += t.leaf_value(x)[0];
        }
        raw
    }

    /// Class probabilities: leaf distribution (tree), vote share (forest),
    /// softmax of summed scores (boosting).
    pub fn predict_proba(&self, x: &[f64; N_FEATURES]) -> Vec<f64> {
        match self.kind {
            ModelKind::Dt => self.trees[0].leaf_value(x).to_vec(),
            ModelKind::Rf => {
                let mut votes = vec![0.0; self.classes.len()];
                for t in &self.trees {
                    votes[argmax(t.leaf_value(x))] += 1.0;
                }
                votes.iter().map(|v| v / self.trees.len() as f64).collect()
            }
            ModelKind::Gbdt => gbdt::softmax(&self.raw_scores(x)),
        }
    }

    pub fn predict_row(&self, row: &FeatureRow) -> &str {
        &self.classes[self.predict_index(&row.features)]
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_json()?).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Model, ModelError> {
        let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let m: Model = serde_json::from_str(&text)?;
        if m.format != MODEL_FORMAT || m.version != MODEL_VERSION {
            return Err(ModelError::Params(format!(
                "unsupported model format {}/{}",
                m.format, m.version
            )));
        }
        Ok(m)
    }
}

/// Label for a raw feature slice; the slice must hold exactly eight values.
pub fn predict(model: &Model, row: &[f64]) -> Result<String, ModelError> {
    let x: &[f64; N_FEATURES] = row.try_into().map_err(|_| ModelError::Shape(row.len()))?;
    Ok(model.classes[model.predict_index(x)].clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy(n_per_class: usize) -> Dataset {
        let mut rows = Vec::new();
        for i in 0..n_per_class {
            let jitter = i as f64 / n_per_class as f64;
            let mut a = [0.5; N_FEATURES];
            a[0] = jitter * 0.9;
            a[3] = 5.0 - jitter;
            rows.push(FeatureRow {
                label: "A".into(),
                features: a,
            });
            let mut b = [0.5; N_FEATURES];
            b[0] = 2.1 + jitter;
            b[3] = 5.0 - jitter;
            rows.push(FeatureRow {
                label: "B".into(),
                features: b,
            });
        }
        Dataset::new(rows)
    }

    #[test]
    fn separable_toy_gives_depth_one_tree() {
        let ds = toy(20);
        let m = train(ModelKind::Dt, &ds, &ModelParams::default()).unwrap();
        assert_eq!(m.trees[0].depth(), 1);
        match &m.trees[0].nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert!(*threshold > 0.9 && *threshold < 2.1);
            }
            n => panic!("expected split, got {n:?}"),
        }
        for r in &ds.rows {
            assert_eq!(m.predict_row(r), r.label);
        }
    }

    #[test]
    fn below_threshold_goes_left() {
        let m = train(ModelKind::Dt, &toy(20), &ModelParams::default()).unwrap();
        let mut x = [0.5; N_FEATURES];
        x[0] = -100.0;
        assert_eq!(predict(&m, &x).unwrap(), "A");
        assert!(matches!(predict(&m, &x[..7]), Err(ModelError::Shape(7))));
    }

    #[test]
    fn training_is_deterministic() {
        let ds = toy(30);
        for kind in ModelKind::ALL {
            let p = ModelParams {
                forest: ForestParams {
                    n_trees: 10,
                    ..Default::default()
                },
                gbdt: GbdtParams {
                    n_trees: 10,
                    ..Default::default()
                },
                ..Default::default()
            };
            let a = train(kind, &ds, &p).unwrap().to_json().unwrap();
            let b = train(kind, &ds, &p).unwrap().to_json().unwrap();
            let c = exec::sequential(|| train(kind, &ds, &p).unwrap().to_json().unwrap());
            assert_eq!(a, b, "{kind}");
            assert_eq!(a, c, "{kind} parallel vs sequential");
        }
    }

    #[test]
    fn one_class_is_rejected() {
        let ds = Dataset::new(toy(5).rows.into_iter().filter(|r| r.label == "A").collect());
        assert!(matches!(
            train(ModelKind::Dt, &ds, &ModelParams::default()),
            Err(ModelError::TooFewClasses(1))
        ));
    }

    #[test]
    fn identical_rows_fall_back_to_flagged_stump() {
        let rows = (0..10)
            .map(|i| FeatureRow {
                label: if i % 2 == 0 { "A" } else { "B" }.into(),
                features: [1.0; N_FEATURES],
            })
            .collect();
        let m = train(ModelKind::Dt, &Dataset::new(rows), &ModelParams::default()).unwrap();
        assert!(m.degenerate);
        assert_eq!(m.trees[0].nodes.len(), 1);
    }

    #[test]
    fn duplicating_data_keeps_tree() {
        let ds = toy(25);
        let mut doubled = ds.clone();
        doubled.extend(ds.clone());
        let p = ModelParams {
            tree: TreeParams {
                max_depth: 6,
                min_samples_leaf: 1,
            },
            ..Default::default()
        };
        let a = train(ModelKind::Dt, &ds, &p).unwrap();
        let b = train(ModelKind::Dt, &doubled, &p).unwrap();
        assert_eq!(a.trees, b.trees);
    }

    #[test]
    fn single_boosting_round_matches_tree_on_separable_data() {
        let ds = toy(20);
        let p = ModelParams {
            gbdt: GbdtParams {
                n_trees: 1,
                learning_rate: 1.0,
                tree: TreeParams {
                    max_depth: 1,
                    min_samples_leaf: 5,
                },
                ..Default::default()
            },
            tree: TreeParams {
                max_depth: 1,
                min_samples_leaf: 5,
            },
            ..Default::default()
        };
        let dt = train(ModelKind::Dt, &ds, &p).unwrap();
        let gb = train(ModelKind::Gbdt, &ds, &p).unwrap();
        for r in &ds.rows {
            assert_eq!(dt.predict_row(r), gb.predict_row(r));
        }
        let mut probe = [0.5; N_FEATURES];
        for v in [-1.0, 0.5, 1.5, 2.5, 9.0] {
            probe[0] = v;
            assert_eq!(predict(&dt, &probe).unwrap(), predict(&gb, &probe).unwrap());
        }
    }

    #[test]
    fn feature_mask_is_respected() {
        let p = ModelParams::default().with_features(&[3]);
        let m = train(ModelKind::Dt, &toy(20), &p).unwrap();
        for n in &m.trees[0].nodes {
            if let Node::Split { feature, .. } = n {
                assert_eq!(*feature, 3);
            }
        }
    }

    #[test]
    fn model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = train(ModelKind::Gbdt, &toy(10), &ModelParams {
            gbdt: GbdtParams { n_trees: 3, ..Default::default() },
            ..Default::default()
        })
        .unwrap();
        m.save(&path).unwrap();
        let back = Model::load(&path).unwrap();
        assert_eq!(back.trees, m.trees);
        assert_eq!(back.classes, m.classes);
    }
}
