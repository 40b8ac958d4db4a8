//! Versioned JSON model format.
//!
//! ```text
//! {"format":"gvcod-gbdt","version":1,"n_features":D,"depth":d,"base_score":b,
//!  "trees":[{"nodes":[{"f":i,"t":x,"l":j,"r":k} | {"v":x}, ...]}, ...]}
//! ```
//!
//! Node 0 is the root. Thresholds are widened to f64 on write so the f32
//! value survives the text round trip exactly.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{GbdtModel, TreeNode};
use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "gvcod-gbdt";
pub const FORMAT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NodeDoc {
    Split {
        f: usize,
        t: f64,
        l: usize,
        r: usize,
    },
    Leaf {
        v: f64,
    },
}

#[derive(Serialize, Deserialize)]
struct TreeDoc {
    nodes: Vec<NodeDoc>,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format: String,
    version: u64,
    n_features: usize,
    depth: usize,
    base_score: f64,
    #[serde(default = "default_learning_rate")]
    learning_rate: f64,
    trees: Vec<TreeDoc>,
}

fn default_learning_rate() -> f64 {
    1.0
}

pub fn save(model: &GbdtModel) -> Vec<u8> {
    let trees = (0..model.n_trees())
        .map(|t| TreeDoc {
            nodes: model
                .tree_nodes(t)
                .into_iter()
                .map(|n| match n {
                    TreeNode::Internal {
                        feature_index,
                        threshold,
                        left,
                        right,
                    } => NodeDoc::Split {
                        f: feature_index,
                        t: threshold as f64,
                        l: left,
                        r: right,
                    },
                    TreeNode::Leaf { value } => NodeDoc::Leaf { v: value },
                })
                .collect(),
        })
        .collect();
    let doc = ModelDoc {
        format: FORMAT_TAG.to_string(),
        version: FORMAT_VERSION,
        n_features: model.n_features(),
        depth: model.depth(),
        base_score: model.base_score(),
        learning_rate: model.learning_rate(),
        trees,
    };
    serde_json::to_vec(&doc).expect("model document serializes")
}

pub fn load(bytes: &[u8]) -> Result<GbdtModel> {
    let value: Value = serde_json::from_slice(bytes)
        .map_err(|e| Error::MalformedModel(format!("invalid JSON: {e}")))?;
    match value.get("format").and_then(Value::as_str) {
        Some(FORMAT_TAG) => {}
        other => {
            return Err(Error::MalformedModel(format!(
                "expected format {FORMAT_TAG:?}, found {other:?}"
            )))
        }
    }
    match value.get("version").and_then(Value::as_u64) {
        Some(FORMAT_VERSION) => {}
        Some(v) => return Err(Error::UnsupportedVersion(v)),
        None => return Err(Error::MalformedModel("missing version".into())),
    }
    let doc: ModelDoc =
        serde_json::from_value(value).map_err(|e| Error::MalformedModel(e.to_string()))?;
    if doc.depth > 16 {
        return Err(Error::MalformedModel(format!(
            "depth {} too large",
            doc.depth
        )));
    }

    let internal = (1usize << doc.depth) - 1;
    let n_leaves = 1usize << doc.depth;
    let mut features = Vec::with_capacity(doc.trees.len() * internal);
    let mut thresholds = Vec::with_capacity(doc.trees.len() * internal);
    let mut leaves = Vec::with_capacity(doc.trees.len() * n_leaves);
    for (t, tree) in doc.trees.iter().enumerate() {
        let mut split = vec![(0u32, 0f32); internal];
        let mut vals = vec![0f64; n_leaves];
        let mut seen = vec![false; tree.nodes.len()];
        // (document index, heap index, depth)
        let mut stack = vec![(0usize, 0usize, 0usize)];
        while let Some((idx, heap, d)) = stack.pop() {
            let node = tree
                .nodes
                .get(idx)
                .ok_or_else(|| Error::MalformedModel(format!("tree {t}: node {idx} missing")))?;
            if std::mem::replace(&mut seen[idx], true) {
                return Err(Error::MalformedModel(format!(
                    "tree {t}: node {idx} reused"
                )));
            }
            match *node {
                NodeDoc::Split { f, t: thr, l, r } if d < doc.depth => {
                    split[heap] = (f as u32, thr as f32);
                    stack.push((l, 2 * heap + 1, d + 1));
                    stack.push((r, 2 * heap + 2, d + 1));
                }
                NodeDoc::Leaf { v } if d == doc.depth => vals[heap - internal] = v,
                _ => {
                    return Err(Error::MalformedModel(format!(
                        "tree {t} is not complete at depth {}",
                        doc.depth
                    )))
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::MalformedModel(format!(
                "tree {t}: unreachable nodes"
            )));
        }
        for (f, thr) in split {
            features.push(f);
            thresholds.push(thr);
        }
        leaves.extend(vals);
    }
    GbdtModel::from_parts(
        doc.n_features,
        doc.depth,
        doc.base_score,
        doc.learning_rate,
        features,
        thresholds,
        leaves,
    )
}
