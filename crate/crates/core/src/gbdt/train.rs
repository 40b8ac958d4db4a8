//! Second-order boosting with histogram split search and depth-wise growth.

use rayon::prelude::*;

use super::{
    sigmoid, DenseMatrix, GbdtModel, RowSource, TrainConfig, MAX_BASE_SCORE, PASS_THROUGH_THRESHOLD,
};
use crate::error::{Error, Result};

/// Hessian floor so saturated samples still carry weight.
const MIN_HESSIAN: f64 = 1e-16;

/// Per-bin `[sum g, sum h, count]`.
type Hist = Vec<[f64; 3]>;

/// Quantized training matrix, stored column-major.
struct Binned {
    n_rows: usize,
    /// Split thresholds per feature: bin `b` holds values in `[edges[b-1], edges[b])`.
    edges: Vec<Vec<f32>>,
    /// Start of each feature's bins inside a histogram; one extra trailing entry.
    offsets: Vec<usize>,
    bins: Vec<u8>,
}

fn quantile_edges(sorted: &[f32], n_bins: usize) -> Vec<f32> {
    let mut distinct: Vec<f32> = Vec::new();
    for &v in sorted {
        if distinct.last() != Some(&v) {
            distinct.push(v);
        }
    }
    if distinct.len() <= n_bins {
        return distinct.split_off(1.min(distinct.len()));
    }
    let n = sorted.len();
    let mut edges: Vec<f32> = Vec::with_capacity(n_bins - 1);
    for b in 1..n_bins {
        let q = sorted[b * n / n_bins];
        if q > sorted[0] && edges.last().is_none_or(|&e| q > e) {
            edges.push(q);
        }
    }
    edges
}

impl Binned {
    fn build(x: &DenseMatrix, n_bins: usize) -> Self {
        let n = x.n_rows();
        let d = x.n_features();
        let mut bins = vec![0u8; n * d];
        let edges: Vec<Vec<f32>> = bins
            .par_chunks_mut(n.max(1))
            .enumerate()
            .map(|(f, col)| {
                let mut values: Vec<f32> = (0..n).map(|r| x.value(r, f)).collect();
                let raw = values.clone();
                values.sort_by(f32::total_cmp);
                let edges = quantile_edges(&values, n_bins);
                for (slot, v) in col.iter_mut().zip(raw) {
                    *slot = edges.partition_point(|&e| e <= v) as u8;
                }
                edges
            })
            .collect();
        let mut offsets = Vec::with_capacity(d + 1);
        let mut acc = 0;
        for e in &edges {
            offsets.push(acc);
            acc += e.len() + 1;
        }
        offsets.push(acc);
        Self {
            n_rows: n,
            edges,
            offsets,
            bins,
        }
    }

    fn n_features(&self) -> usize {
        self.edges.len()
    }

    fn column(&self, f: usize) -> &[u8] {
        &self.bins[f * self.n_rows..(f + 1) * self.n_rows]
    }

    fn histogram(&self, rows: &[u32], grad: &[f64], hess: &[f64]) -> Hist {
        let gh: Vec<(u32, f64, f64)> = rows
            .iter()
            .map(|&r| (r, grad[r as usize], hess[r as usize]))
            .collect();
        let total = *self.offsets.last().unwrap();
        let mut hist = vec![[0.0; 3]; total];
        let mut slices: Vec<(usize, &mut [[f64; 3]])> = Vec::with_capacity(self.n_features());
        let mut rest: &mut [[f64; 3]] = &mut hist;
        for f in 0..self.n_features() {
            let len = self.offsets[f + 1] - self.offsets[f];
            let (head, tail) = rest.split_at_mut(len);
            slices.push((f, head));
            rest = tail;
        }
        slices.into_par_iter().for_each(|(f, h)| {
            let col = self.column(f);
            for &(r, g, hs) in &gh {
                let cell = &mut h[col[r as usize] as usize];
                cell[0] += g;
                cell[1] += hs;
                cell[2] += 1.0;
            }
        });
        hist
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Split {
    feature: usize,
    /// Rows with bin `<= bin` go left.
    bin: usize,
    gain: f64,
}

/// A split proposal: rows with `x[feature] < threshold` go left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f32,
    pub gain: f64,
}

fn split_gain(gl: f64, hl: f64, g: f64, h: f64, lambda: f64) -> f64 {
    let (gr, hr) = (g - gl, h - hl);
    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda))
}

fn best_split(
    binned: &Binned,
    hist: &Hist,
    g: f64,
    h: f64,
    n: usize,
    cfg: &TrainConfig,
) -> Option<Split> {
    let per_feature: Vec<Option<Split>> = (0..binned.n_features())
        .into_par_iter()
        .map(|f| {
            let cells = &hist[binned.offsets[f]..binned.offsets[f + 1]];
            let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0usize);
            let mut best: Option<Split> = None;
            for (b, cell) in cells.iter().enumerate().take(cells.len().saturating_sub(1)) {
                gl += cell[0];
                hl += cell[1];
                nl += cell[2] as usize;
                if nl == 0 {
                    continue;
                }
                if nl >= n {
                    break;
                }
                if hl < cfg.min_child_weight || h - hl < cfg.min_child_weight {
                    continue;
                }
                let gain = split_gain(gl, hl, g, h, cfg.l2_lambda);
                if gain > 0.0 && best.is_none_or(|s| gain > s.gain) {
                    best = Some(Split {
                        feature: f,
                        bin: b,
                        gain,
                    });
                }
            }
            best
        })
        .collect();
    per_feature
        .into_iter()
        .flatten()
        .fold(None, |acc: Option<Split>, s| match acc {
            Some(a) if a.gain >= s.gain => Some(a),
            _ => Some(s),
        })
}

fn sums(rows: &[u32], grad: &[f64], hess: &[f64]) -> (f64, f64) {
    rows.iter().fold((0.0, 0.0), |(g, h), &r| {
        (g + grad[r as usize], h + hess[r as usize])
    })
}

fn leaf_weight(g: f64, h: f64, cfg: &TrainConfig) -> f64 {
    -cfg.learning_rate * g / (h + cfg.l2_lambda)
}

struct Work {
    rows: Vec<u32>,
    hist: Option<Hist>,
    active: bool,
}

impl Work {
    fn padding() -> Self {
        Work {
            rows: Vec::new(),
            hist: None,
            active: false,
        }
    }
}

struct GrownTree {
    features: Vec<u32>,
    thresholds: Vec<f32>,
    leaves: Vec<f64>,
    /// Training rows reaching each leaf.
    leaf_rows: Vec<Vec<u32>>,
}

fn grow_tree(binned: &Binned, grad: &[f64], hess: &[f64], cfg: &TrainConfig) -> GrownTree {
    let depth = cfg.depth;
    let internal = (1usize << depth) - 1;
    let mut features = vec![0u32; internal];
    let mut thresholds = vec![PASS_THROUGH_THRESHOLD; internal];
    let mut level = vec![Work {
        rows: (0..binned.n_rows as u32).collect(),
        hist: None,
        active: true,
    }];

    for l in 0..depth {
        let need_child_hist = l + 1 < depth;
        let mut next = Vec::with_capacity(level.len() * 2);
        for (j, mut node) in level.into_iter().enumerate() {
            let heap = (1 << l) - 1 + j;
            if !node.active {
                next.push(Work::padding());
                next.push(Work::padding());
                continue;
            }
            let (g, h) = sums(&node.rows, grad, hess);
            let hist = node
                .hist
                .take()
                .unwrap_or_else(|| binned.histogram(&node.rows, grad, hess));
            match best_split(binned, &hist, g, h, node.rows.len(), cfg) {
                Some(split) => {
                    let col = binned.column(split.feature);
                    let (left, right): (Vec<u32>, Vec<u32>) = node
                        .rows
                        .iter()
                        .partition(|&&r| col[r as usize] as usize <= split.bin);
                    features[heap] = split.feature as u32;
                    thresholds[heap] = binned.edges[split.feature][split.bin];
                    let (lh, rh) = if need_child_hist {
                        let mut parent = hist;
                        let small_is_left = left.len() <= right.len();
                        let small = binned.histogram(
                            if small_is_left { &left } else { &right },
                            grad,
                            hess,
                        );
                        for (p, s) in parent.iter_mut().zip(&small) {
                            p[0] -= s[0];
                            p[1] -= s[1];
                            p[2] -= s[2];
                        }
                        if small_is_left {
                            (Some(small), Some(parent))
                        } else {
                            (Some(parent), Some(small))
                        }
                    } else {
                        (None, None)
                    };
                    next.push(Work {
                        rows: left,
                        hist: lh,
                        active: true,
                    });
                    next.push(Work {
                        rows: right,
                        hist: rh,
                        active: true,
                    });
                }
                None => {
                    // unsplittable: route everything left, pad the right side
                    next.push(Work {
                        rows: node.rows,
                        hist: need_child_hist.then_some(hist),
                        active: true,
                    });
                    next.push(Work::padding());
                }
            }
        }
        level = next;
    }

    let mut leaves = Vec::with_capacity(level.len());
    let mut leaf_rows = Vec::with_capacity(level.len());
    for node in level {
        let value = if node.active && !node.rows.is_empty() {
            let (g, h) = sums(&node.rows, grad, hess);
            leaf_weight(g, h, cfg)
        } else {
            0.0
        };
        leaves.push(value);
        leaf_rows.push(node.rows);
    }
    GrownTree {
        features,
        thresholds,
        leaves,
        leaf_rows,
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean logistic loss of margins against binary labels.
pub(crate) fn log_loss(margins: &[f64], labels: &[u8]) -> f64 {
    margins
        .iter()
        .zip(labels)
        .map(|(&m, &y)| if y == 1 { softplus(-m) } else { softplus(m) })
        .sum::<f64>()
        / margins.len() as f64
}

fn check_inputs(x: &DenseMatrix, labels: &[u8], cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    if x.n_rows() == 0 {
        return Err(Error::NoSamples);
    }
    if labels.len() != x.n_rows() {
        return Err(Error::InvalidTrainingData(format!(
            "{} labels for {} rows",
            labels.len(),
            x.n_rows()
        )));
    }
    if let Some(i) = labels.iter().position(|&y| y > 1) {
        return Err(Error::InvalidTrainingData(format!(
            "label {} at row {i} is not 0 or 1",
            labels[i]
        )));
    }
    Ok(())
}

pub fn train(x: &DenseMatrix, labels: &[u8], cfg: &TrainConfig) -> Result<GbdtModel> {
    Ok(train_with_history(x, labels, cfg)?.0)
}

/// Trains a model and returns the mean training log-loss before the first
/// round followed by the loss after each round.
pub fn train_with_history(
    x: &DenseMatrix,
    labels: &[u8],
    cfg: &TrainConfig,
) -> Result<(GbdtModel, Vec<f64>)> {
    check_inputs(x, labels, cfg)?;
    let n = x.n_rows();
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == n {
        let base = if positives == 0 {
            -MAX_BASE_SCORE
        } else {
            MAX_BASE_SCORE
        };
        let model = GbdtModel::constant(x.n_features(), cfg.depth, base);
        let margins = vec![base; n];
        return Ok((model, vec![log_loss(&margins, labels)]));
    }
    let prior = positives as f64 / n as f64;
    let base = (prior / (1.0 - prior))
        .ln()
        .clamp(-MAX_BASE_SCORE, MAX_BASE_SCORE);

    let binned = Binned::build(x, cfg.n_bins);
    let mut margins = vec![base; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut history = Vec::with_capacity(cfg.n_trees + 1);
    history.push(log_loss(&margins, labels));

    let mut features = Vec::new();
    let mut thresholds = Vec::new();
    let mut leaves = Vec::new();
    for _ in 0..cfg.n_trees {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            grad[i] = p - labels[i] as f64;
            hess[i] = (p * (1.0 - p)).max(MIN_HESSIAN);
        }
        let tree = grow_tree(&binned, &grad, &hess, cfg);
        for (rows, &v) in tree.leaf_rows.iter().zip(&tree.leaves) {
            for &r in rows {
                margins[r as usize] += v;
            }
        }
        history.push(log_loss(&margins, labels));
        features.extend(tree.features);
        thresholds.extend(tree.thresholds);
        leaves.extend(tree.leaves);
    }
    let model = GbdtModel::from_parts(
        x.n_features(),
        cfg.depth,
        base,
        cfg.learning_rate,
        features,
        thresholds,
        leaves,
    )?;
    Ok((model, history))
}

/// Best root split for the given gradients and hessians, using the same
/// binning and histogram search as training.
pub fn root_split(
    x: &DenseMatrix,
    grad: &[f64],
    hess: &[f64],
    cfg: &TrainConfig,
) -> Result<Option<SplitCandidate>> {
    cfg.validate()?;
    if x.n_rows() == 0 {
        return Err(Error::NoSamples);
    }
    if grad.len() != x.n_rows() || hess.len() != x.n_rows() {
        return Err(Error::InvalidTrainingData(
            "gradient length mismatch".into(),
        ));
    }
    let binned = Binned::build(x, cfg.n_bins);
    let rows: Vec<u32> = (0..x.n_rows() as u32).collect();
    let hist = binned.histogram(&rows, grad, hess);
    let (g, h) = sums(&rows, grad, hess);
    Ok(
        best_split(&binned, &hist, g, h, rows.len(), cfg).map(|s| SplitCandidate {
            feature: s.feature,
            threshold: binned.edges[s.feature][s.bin],
            gain: s.gain,
        }),
    )
}
