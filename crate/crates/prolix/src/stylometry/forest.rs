//! A small random-forest classifier over the six stylometric features.
//!
//! Self-contained on purpose: binary labels, six fixed features, Gini
//! splits, bootstrap resampling, and ⌈√6⌉ = 3 candidate features per
//! split. Training is deterministic for a given seed — each tree derives
//! its own RNG stream, so per-tree parallelism could never change the
//! model. Models persist as versioned JSON and reload bit-exactly.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::StyloFeatureVector;

pub const MODEL_VERSION: u32 = 1;
pub const N_FEATURES: usize = 6;
pub const FEATURES_PER_SPLIT: usize = 3;
pub const MIN_TRAIN_SAMPLES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        /// Training samples per class that reached this leaf.
        counts: [usize; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: TreeNode,
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64; N_FEATURES]) -> u8 {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { counts } => {
                    return if counts[1] > counts[0] { 1 } else { 0 };
                }
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub version: u32,
    pub n_trees: usize,
    pub max_depth: usize,
    pub seed: u64,
    pub trees: Vec<DecisionTree>,
}

impl ForestModel {
    /// Majority vote across trees; exact ties go to the benign class.
    pub fn predict(&self, x: &[f64; N_FEATURES]) -> u8 {
        let attacked_votes = self.trees.iter().filter(|t| t.predict(x) == 1).count();
        if attacked_votes * 2 > self.trees.len() {
            1
        } else {
            0
        }
    }
}

#[derive(Debug)]
pub enum ForestError {
    BadParams {
        detail: String,
    },
    TooFewSamples {
        have: usize,
        need: usize,
    },
    SingleClass,
    InvalidLabel {
        label: u8,
    },
    /// Identical feature vectors carry both labels; no classifier over
    /// these features can satisfy the data.
    ContradictoryLabels {
        vectors: usize,
    },
    Io {
        path: PathBuf,
        source: io::Error,
    },
    Parse {
        detail: String,
    },
    Version {
        found: u32,
    },
    InvalidModel {
        detail: String,
    },
}

impl fmt::Display for ForestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForestError::BadParams { detail } => write!(f, "bad forest parameters: {detail}"),
            ForestError::TooFewSamples { have, need } => {
                write!(f, "training needs at least {need} samples, got {have}")
            }
            ForestError::SingleClass => {
                write!(f, "training data contains only one class")
            }
            ForestError::InvalidLabel { label } => {
                write!(f, "labels must be 0 or 1, got {label}")
            }
            ForestError::ContradictoryLabels { vectors } => write!(
                f,
                "{vectors} identical feature vector(s) appear with both labels; \
                 the classes are indistinguishable under these features"
            ),
            ForestError::Io { path, source } => write!(f, "{}: {}", path.display(), source),
            ForestError::Parse { detail } => write!(f, "malformed model document: {detail}"),
            ForestError::Version { found } => write!(
                f,
                "unsupported model version {found} (this build reads version {MODEL_VERSION})"
            ),
            ForestError::InvalidModel { detail } => write!(f, "invalid model: {detail}"),
        }
    }
}

impl std::error::Error for ForestError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            ForestError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p0 = counts[0] as f64 / n;
    let p1 = counts[1] as f64 / n;
    1.0 - p0 * p0 - p1 * p1
}

fn class_counts(labels: &[u8], indices: &[usize]) -> [usize; 2] {
    let mut counts = [0usize; 2];
    for &i in indices {
        counts[labels[i] as usize] += 1;
    }
    counts
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    weighted_impurity: f64,
}

fn find_best_split(
    points: &[[f64; N_FEATURES]],
    labels: &[u8],
    indices: &[usize],
    features: &[usize],
) -> Option<BestSplit> {
    let n = indices.len() as f64;
    let total = class_counts(labels, indices);
    let mut best: Option<BestSplit> = None;
    for &feature in features {
        let mut column: Vec<(f64, u8)> = indices
            .iter()
            .map(|&i| (points[i][feature], labels[i]))
            .collect();
        column.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = [0usize; 2];
        for window in 0..column.len() - 1 {
            let (value, label) = column[window];
            left[label as usize] += 1;
            let next_value = column[window + 1].0;
            if value == next_value {
                continue;
            }
            let threshold = (value + next_value) / 2.0;
            if !(threshold > value && threshold < next_value) {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let n_left = (left[0] + left[1]) as f64;
            let n_right = n - n_left;
            let weighted = (n_left * gini(left) + n_right * gini(right)) / n;
            let better = match &best {
                None => true,
                Some(b) => weighted < b.weighted_impurity,
            };
            if better {
                best = Some(BestSplit {
                    feature,
                    threshold,
                    weighted_impurity: weighted,
                });
            }
        }
    }
    best
}

fn build_node(
    points: &[[f64; N_FEATURES]],
    labels: &[u8],
    indices: &[usize],
    depth: usize,
    max_depth: usize,
    rng: &mut ChaCha8Rng,
) -> TreeNode {
    let counts = class_counts(labels, indices);
    if counts[0] == 0 || counts[1] == 0 || depth >= max_depth || indices.len() < 2 {
        return TreeNode::Leaf { counts };
    }
    let mut features = rand::seq::index::sample(rng, N_FEATURES, FEATURES_PER_SPLIT).into_vec();
    features.sort_unstable();
    let split = match find_best_split(points, labels, indices, &features) {
        Some(split) if split.weighted_impurity < gini(counts) - 1e-12 => split,
        _ => return TreeNode::Leaf { counts },
    };
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
        .iter()
        .partition(|&&i| points[i][split.feature] <= split.threshold);
    TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(build_node(points, labels, &left_idx, depth + 1, max_depth, rng)),
        right: Box::new(build_node(points, labels, &right_idx, depth + 1, max_depth, rng)),
    }
}

fn tree_seed(seed: u64, tree_index: usize) -> u64 {
    seed.wrapping_add((tree_index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Trains a forest on labeled feature vectors. Deterministic given the
/// seed; rejects degenerate inputs rather than fitting nonsense.
pub fn train_forest(
    data: &[(StyloFeatureVector, u8)],
    n_trees: usize,
    max_depth: usize,
    seed: u64,
) -> Result<ForestModel, ForestError> {
    if n_trees == 0 {
        return Err(ForestError::BadParams {
            detail: "n_trees must be at least 1".to_string(),
        });
    }
    if max_depth == 0 {
        return Err(ForestError::BadParams {
            detail: "max_depth must be at least 1".to_string(),
        });
    }
    if data.len() < MIN_TRAIN_SAMPLES {
        return Err(ForestError::TooFewSamples {
            have: data.len(),
            need: MIN_TRAIN_SAMPLES,
        });
    }
    for (_, label) in data {
        if *label > 1 {
            return Err(ForestError::InvalidLabel { label: *label });
        }
    }
    if data.iter().all(|(_, l)| *l == 0) || data.iter().all(|(_, l)| *l == 1) {
        return Err(ForestError::SingleClass);
    }

    let points: Vec<[f64; N_FEATURES]> = data.iter().map(|(f, _)| f.as_array()).collect();
    let labels: Vec<u8> = data.iter().map(|(_, l)| *l).collect();

    let mut by_bits: HashMap<[u64; N_FEATURES], u8> = HashMap::new();
    let mut contradictions = 0usize;
    for (point, &label) in points.iter().zip(&labels) {
        let bits = point.map(f64::to_bits);
        match by_bits.insert(bits, label) {
            Some(previous) if previous != label => contradictions += 1,
            _ => {}
        }
    }
    if contradictions > 0 {
        return Err(ForestError::ContradictoryLabels {
            vectors: contradictions,
        });
    }

    let n = points.len();
    let trees = (0..n_trees)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(seed, i));
            let bootstrap: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            DecisionTree {
                root: build_node(&points, &labels, &bootstrap, 0, max_depth, &mut rng),
            }
        })
        .collect();

    Ok(ForestModel {
        version: MODEL_VERSION,
        n_trees,
        max_depth,
        seed,
        trees,
    })
}

fn validate_node(node: &TreeNode) -> Result<(), ForestError> {
    match node {
        TreeNode::Leaf { counts } => {
            if counts[0] + counts[1] == 0 {
                return Err(ForestError::InvalidModel {
                    detail: "leaf with zero counts".to_string(),
                });
            }
            Ok(())
        }
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            if *feature >= N_FEATURES {
                return Err(ForestError::InvalidModel {
                    detail: format!("split feature index {feature} out of range 0..{N_FEATURES}"),
                });
            }
            if !threshold.is_finite() {
                return Err(ForestError::InvalidModel {
                    detail: format!("non-finite split threshold {threshold}"),
                });
            }
            validate_node(left)?;
            validate_node(right)
        }
    }
}

fn validate_model(model: &ForestModel) -> Result<(), ForestError> {
    if model.version != MODEL_VERSION {
        return Err(ForestError::Version {
            found: model.version,
        });
    }
    if model.n_trees == 0 || model.trees.is_empty() {
        return Err(ForestError::InvalidModel {
            detail: "model holds no trees".to_string(),
        });
    }
    if model.trees.len() != model.n_trees {
        return Err(ForestError::InvalidModel {
            detail: format!(
                "n_trees says {} but {} trees are present",
                model.n_trees,
                model.trees.len()
            ),
        });
    }
    for tree in &model.trees {
        validate_node(&tree.root)?;
    }
    Ok(())
}

/// Serializes a model as pretty JSON, newline-terminated.
pub fn render_model(model: &ForestModel) -> String {
    let mut out = serde_json::to_string_pretty(model).expect("model serialization cannot fail");
    out.push('\n');
    out
}

pub fn parse_model(text: &str) -> Result<ForestModel, ForestError> {
    let model: ForestModel = serde_json::from_str(text).map_err(|e| ForestError::Parse {
        detail: e.to_string(),
    })?;
    validate_model(&model)?;
    Ok(model)
}

pub fn save_model(path: &Path, model: &ForestModel) -> Result<(), ForestError> {
    fs::write(path, render_model(model)).map_err(|e| ForestError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn load_model(path: &Path) -> Result<ForestModel, ForestError> {
    let text = fs::read_to_string(path).map_err(|e| ForestError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_model(&text)
}
