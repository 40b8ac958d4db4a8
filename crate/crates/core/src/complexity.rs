//! Parameter and multiply-accumulate accounting for the full pipeline.
//!
//! A complete tree of depth `d` stores `2^d - 1` splits (feature id and
//! threshold) and `2^d` leaf values. Inference costs one MAC per comparison on
//! the root-to-leaf path plus one for the leaf accumulation, per tree and
//! pixel. Backbone figures are supplied by the caller.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Parameters of `n_trees` complete trees of depth `depth`.
pub fn tree_params(n_trees: u64, depth: u32) -> u64 {
    n_trees * (3 * (1u64 << depth) - 2)
}

/// MACs to run `n_trees` trees of depth `depth` on every pixel of a map.
pub fn stage_macs(map_h: u64, map_w: u64, n_trees: u64, depth: u32) -> u64 {
    map_h * map_w * n_trees * (depth as u64 + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneProfile {
    pub params: u64,
    pub macs: u64,
}

/// Published EfficientNet-B4 figures for a 672 x 672 input.
pub const EFFICIENTNET_B4: BackboneProfile = BackboneProfile {
    params: 16_742_216,
    macs: 13_503_446_880,
};

/// One tree ensemble evaluated densely over a square map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleShape {
    pub n_trees: u64,
    pub depth: u32,
    pub map_side: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineShape {
    pub backbone: BackboneProfile,
    pub cascade: Vec<EnsembleShape>,
    pub long_term: EnsembleShape,
    pub short_term: EnsembleShape,
}

impl PipelineShape {
    /// Tree counts, depths and map sizes of the full-size published model.
    pub fn paper_scale() -> Self {
        let stage = |side| EnsembleShape {
            n_trees: 10_000,
            depth: 3,
            map_side: side,
        };
        let refiner = EnsembleShape {
            n_trees: 6000,
            depth: 6,
            map_side: 168,
        };
        Self {
            backbone: EFFICIENTNET_B4,
            cascade: vec![stage(42), stage(42), stage(84), stage(168)],
            long_term: refiner,
            short_term: refiner,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub module: String,
    pub sub_module: String,
    pub n_trees: Option<u64>,
    pub depth: Option<u32>,
    pub map_side: Option<u64>,
    pub params: u64,
    pub macs: u64,
    pub params_pct: f64,
    pub macs_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub rows: Vec<ComplexityRow>,
    pub total_params: u64,
    pub total_macs: u64,
}

fn pct(part: u64, total: u64) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * part as f64 / total as f64
    }
}

pub fn report(shape: &PipelineShape) -> ComplexityReport {
    let mut rows = vec![ComplexityRow {
        module: "Stage-1".into(),
        sub_module: "EfficientNetB4".into(),
        n_trees: None,
        depth: None,
        map_side: None,
        params: shape.backbone.params,
        macs: shape.backbone.macs,
        params_pct: 0.0,
        macs_pct: 0.0,
    }];
    let tree_row = |module: &str, sub: String, e: &EnsembleShape| ComplexityRow {
        module: module.into(),
        sub_module: sub,
        n_trees: Some(e.n_trees),
        depth: Some(e.depth),
        map_side: Some(e.map_side),
        params: tree_params(e.n_trees, e.depth),
        macs: stage_macs(e.map_side, e.map_side, e.n_trees, e.depth),
        params_pct: 0.0,
        macs_pct: 0.0,
    };
    for (i, e) in shape.cascade.iter().enumerate() {
        rows.push(tree_row("Stage-1", format!("XGBoost{}", i + 1), e));
    }
    rows.push(tree_row(
        "Stage-2",
        "XGBoost(long-term)".into(),
        &shape.long_term,
    ));
    rows.push(tree_row(
        "Stage-2",
        "XGBoost(short-term)".into(),
        &shape.short_term,
    ));

    let total_params = rows.iter().map(|r| r.params).sum();
    let total_macs = rows.iter().map(|r| r.macs).sum();
    for r in &mut rows {
        r.params_pct = pct(r.params, total_params);
        r.macs_pct = pct(r.macs, total_macs);
    }
    ComplexityReport {
        rows,
        total_params,
        total_macs,
    }
}

/// `1234567` -> `"1,234,567"`.
pub fn group_thousands(v: u64) -> String {
    let digits = v.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "_".to_string(), |x| x.to_string())
}

impl ComplexityReport {
    pub fn params_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:<20} {:>8} {:>6} {:>24}",
            "Module", "Sub-Module", "# Trees", "Depth", "Parameters (%)"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<8} {:<20} {:>8} {:>6} {:>24}",
                r.module,
                r.sub_module,
                opt(r.n_trees),
                opt(r.depth),
                format!("{} ({:.1}%)", group_thousands(r.params), r.params_pct)
            );
        }
        let _ = writeln!(
            out,
            "{:<8} {:<20} {:>8} {:>6} {:>24}",
            "Total",
            "_",
            "_",
            "_",
            group_thousands(self.total_params)
        );
        out
    }

    pub fn macs_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:<20} {:>10} {:>28}",
            "Module", "Sub-Module", "Map size", "MACs (%)"
        );
        for r in &self.rows {
            let map = r
                .map_side
                .map_or_else(|| "_".to_string(), |s| format!("{s}x{s}"));
            let _ = writeln!(
                out,
                "{:<8} {:<20} {:>10} {:>28}",
                r.module,
                r.sub_module,
                map,
                format!("{} ({:.1}%)", group_thousands(r.macs), r.macs_pct)
            );
        }
        let _ = writeln!(
            out,
            "{:<8} {:<20} {:>10} {:>28}",
            "Total",
            "_",
            "_",
            group_thousands(self.total_macs)
        );
        out
    }
}
