//! Acceptance suite. Prints one PASS / FAIL line per criterion and exits
//! nonzero if any criterion fails. Numeric arguments select criteria, e.g.
//! `cargo test --test acceptance -- 3 4`.

mod oracles;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gvcod_core::cascade::{train_cascade, CascadeConfig};
use gvcod_core::dataset::{synth_dataset, SynthDatasetConfig};
use gvcod_core::ensemble::EnsembleConfig;
use gvcod_core::features::FeatureProviderConfig;
use gvcod_core::gbdt::{self, root_split, train_with_history, DenseMatrix, GbdtModel, TrainConfig};
use gvcod_core::metrics::{self, evaluate_sequences, MetricsSummary};
use gvcod_core::pipeline::{
    cascade_training_frames, refine_and_fuse, run_cascade, salt_noise, scored_pairs,
    sequence_features, RefineConfig,
};
use gvcod_core::refine::{refine_sequence, train_refiner, RefinerModel, RefinerVideo, Term};
use gvcod_core::temporal::{reflect_index, sample_indices, PredictionVolume, TnCubeSpec};
use gvcod_core::tensor::{BinaryMask, PredictionMap, Tensor3};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Collects failed checks without stopping at the first one.
#[derive(Default)]
struct Checks(Vec<String>);

impl Checks {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.0.push(what());
        }
    }

    fn finish(self, elapsed: Duration, limit: Duration, summary: String) -> Outcome {
        let mut failures = self.0;
        if elapsed > limit {
            failures.push(format!("took {elapsed:.2?}, limit {limit:?}"));
        }
        if failures.is_empty() {
            outcome(true, format!("{summary} ({elapsed:.2?})"))
        } else {
            let shown: Vec<&str> = failures.iter().take(5).map(String::as_str).collect();
            outcome(
                false,
                format!(
                    "{} failure(s): {} ({elapsed:.2?})",
                    failures.len(),
                    shown.join("; ")
                ),
            )
        }
    }
}

fn gvcod(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_gvcod"))
        .args(args)
        .output()
        .expect("launch gvcod")
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let out = gvcod(&["account", "--paper-scale", "--json"]);
    let elapsed = start.elapsed();
    let mut c = Checks::default();
    c.check(out.status.success(), || {
        format!(
            "exit {:?}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr)
        )
    });
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap_or_default();
    let col = |key: &str| -> Vec<u64> {
        doc["rows"]
            .as_array()
            .map(|rows| rows.iter().map(|r| r[key].as_u64().unwrap_or(0)).collect())
            .unwrap_or_default()
    };
    let params = col("params");
    let macs = col("macs");
    let want_params = [
        16_742_216, 220_000, 220_000, 220_000, 220_000, 1_140_000, 1_140_000,
    ];
    let want_macs = [
        13_503_446_880,
        70_560_000,
        70_560_000,
        282_240_000,
        1_128_960_000,
        1_185_408_000,
        1_185_408_000,
    ];
    c.check(params == want_params, || format!("parameters {params:?}"));
    c.check(macs == want_macs, || format!("MACs {macs:?}"));
    let tp = doc["total_params"].as_u64();
    let tm = doc["total_macs"].as_u64();
    c.check(tp == Some(19_902_216), || {
        format!("total parameters {tp:?}")
    });
    c.check(tm == Some(17_426_582_880), || format!("total MACs {tm:?}"));
    let table = gvcod(&["account", "--paper-scale"]);
    let text = String::from_utf8_lossy(&table.stdout);
    c.check(
        text.contains("19,902,216") && text.contains("17,426,582,880"),
        || "table totals missing".into(),
    );
    c.finish(
        elapsed,
        Duration::from_secs(1),
        "7 rows and totals 19,902,216 params / 17,426,582,880 MACs match exactly".into(),
    )
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<f32>, Vec<bool>) {
    let density = [0.0, 0.05, 0.2, 0.4, 0.7, 1.0][rng.random_range(0..6)];
    let gt: Vec<bool> = (0..64).map(|_| rng.random::<f64>() < density).collect();
    let style = rng.random_range(0..3);
    let pred = (0..64)
        .map(|i| match style {
            0 => rng.random::<f32>(),
            1 => {
                if rng.random::<f64>() < 0.8 {
                    gt[i] as u8 as f32
                } else {
                    rng.random::<f32>()
                }
            }
            _ => (rng.random_range(0..5) as f32) / 4.0,
        })
        .collect();
    (pred, gt)
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut c = Checks::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let tol = 1e-9;
    let close = |a: f64, b: f64| (a - b).abs() <= tol;
    for case in 0..200 {
        let (pred, gt) = random_instance(&mut rng);
        let map = PredictionMap::new(8, 8, pred.clone()).unwrap();
        let mask = BinaryMask::new(8, 8, gt.clone()).unwrap();
        let p64: Vec<f64> = pred.iter().map(|&v| v as f64).collect();
        let bin = oracles::adaptive_binarize(&p64);
        let bin_mask = BinaryMask::new(8, 8, bin.clone()).unwrap();

        let m = metrics::mae(&map, &mask).unwrap();
        let o = oracles::mae(&p64, &gt);
        c.check(close(m, o), || format!("case {case}: MAE {m} vs {o}"));
        let (d, i) = metrics::dice_iou(&bin_mask, &mask).unwrap();
        let (od, oi) = oracles::dice_iou(&bin, &gt);
        c.check(close(d, od) && close(i, oi), || {
            format!("case {case}: dice/IoU ({d}, {i}) vs ({od}, {oi})")
        });
        c.check(d >= i, || format!("case {case}: dice {d} < IoU {i}"));
        let e = metrics::emeasure(&bin_mask, &mask).unwrap();
        let oe = oracles::emeasure(&bin, &gt);
        c.check(close(e, oe), || format!("case {case}: E {e} vs {oe}"));
        let w = metrics::wfm(&map, &mask).unwrap();
        let ow = oracles::wfm(&p64, &gt, 8, 8);
        let same = match (w, ow) {
            (Some(a), Some(b)) => close(a, b),
            (None, None) => true,
            _ => false,
        };
        c.check(same, || format!("case {case}: Fw {w:?} vs {ow:?}"));
        // the frame-level entry point agrees with the individual metrics
        let fm = metrics::evaluate_frame(&map, &mask).unwrap();
        if mask.count() > 0 {
            c.check(fm.dice == Some(d) && fm.emeasure == Some(e), || {
                format!("case {case}: evaluate_frame disagrees")
            });
        }
    }
    // identities
    let gt = BinaryMask::new(8, 8, (0..64).map(|i| i % 8 < 3 && i / 8 < 5).collect()).unwrap();
    let f = metrics::evaluate_frame(&gt.to_map(), &gt).unwrap();
    // the alignment epsilon keeps a perfect E-measure a few 1e-8 below one
    let e_one = f.emeasure.is_some_and(|e| (1.0 - e).abs() < 1e-6);
    c.check(
        f.wfm == Some(1.0) && e_one && f.mae == 0.0 && f.dice == Some(1.0) && f.iou == Some(1.0),
        || format!("perfect prediction gave {f:?}"),
    );
    let disjoint = BinaryMask::new(8, 8, gt.data().iter().map(|&b| !b).collect()).unwrap();
    let (d, i) = metrics::dice_iou(&disjoint, &gt).unwrap();
    c.check(d == 0.0 && i == 0.0, || {
        format!("disjoint masks gave ({d}, {i})")
    });
    let zero = PredictionMap::filled(8, 8, 0.0).unwrap();
    let w = metrics::wfm(&zero, &gt).unwrap();
    c.check(w == Some(0.0), || format!("all-zero prediction Fw {w:?}"));
    c.finish(
        start.elapsed(),
        Duration::from_secs(10),
        "200 random 8x8 instances match the scalar oracles to 1e-9; identities hold".into(),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut c = Checks::default();
    let spec = TnCubeSpec::new(1, 5, 2).unwrap();
    let got = sample_indices(10, &spec, 20).unwrap();
    c.check(got == [6, 8, 10, 12, 14], || {
        format!("GAP=2 example gave {got:?}")
    });
    for f in [3usize, 5, 9, 40] {
        let spec = TnCubeSpec::new(1, 5, 1).unwrap();
        let got = sample_indices(f - 1, &spec, f).unwrap();
        c.check(got == [f - 3, f - 2, f - 1, f - 2, f - 3], || {
            format!("final-frame mirror F={f} gave {got:?}")
        });
    }
    let raw: Vec<usize> = (2..=6).map(|i| reflect_index(i, 5)).collect();
    c.check(raw == [2, 3, 4, 3, 2], || {
        format!("reflect_index gave {raw:?}")
    });

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..2000 {
        let n = rng.random_range(1..=30usize);
        let k = 2 * rng.random_range(0..=4usize) + 1;
        let gap = rng.random_range(1..=4usize);
        let i = rng.random_range(0..n);
        let spec = TnCubeSpec::new(3, k, gap).unwrap();
        let idx = sample_indices(i, &spec, n).unwrap();
        let half = (k - 1) / 2;
        c.check(
            idx.len() == k && idx[half] == i && idx.iter().all(|&j| j < n),
            || format!("F={n} K={k} GAP={gap} i={i}: {idx:?}"),
        );
        for (slot, &j) in idx.iter().enumerate() {
            let raw = i as i64 + (slot as i64 - half as i64) * gap as i64;
            c.check(j == reflect_index(raw, n), || {
                format!("slot {slot} of {idx:?}")
            });
        }
        if gap == 1 && i >= half && i + half < n {
            c.check(idx.iter().copied().eq(i - half..=i + half), || {
                format!("interior {idx:?}")
            });
        }
        for edge in [0, n - 1] {
            let spec1 = TnCubeSpec::new(3, k, 1).unwrap();
            let e = sample_indices(edge, &spec1, n).unwrap();
            c.check(e.iter().eq(e.iter().rev()), || {
                format!("edge {edge} of F={n}: {e:?} not a palindrome")
            });
        }
    }
    c.check(
        sample_indices(
            0,
            &TnCubeSpec {
                side: 3,
                depth: 4,
                gap: 1,
            },
            5,
        )
        .is_err(),
        || "even K accepted".into(),
    );

    // locality: frames beyond GAP * (K - 1) / 2 never influence frame i
    let side = 6;
    for trial in 0..20 {
        let n = rng.random_range(8..=16usize);
        let k = [1usize, 3, 5][trial % 3];
        let gap = rng.random_range(1..=3usize);
        let spec = TnCubeSpec::new(3, k, gap).unwrap();
        let width = 1 + spec.cube_len();
        let trees: Vec<(Vec<(usize, f32)>, Vec<f64>)> = (0..10)
            .map(|_| {
                let splits = (0..3)
                    .map(|_| (rng.random_range(0..width), rng.random::<f32>()))
                    .collect();
                let leaves = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                (splits, leaves)
            })
            .collect();
        let refiner = RefinerModel {
            term: Term::Long,
            spec,
            channels: 1,
            model: GbdtModel::from_trees(width, 2, 0.0, &trees).unwrap(),
        };
        let frames: Vec<PredictionMap> = (0..n)
            .map(|_| {
                PredictionMap::new(side, side, (0..side * side).map(|_| rng.random()).collect())
                    .unwrap()
            })
            .collect();
        let feats = vec![Tensor3::filled(side, side, 1, 0.5).unwrap(); n];
        let base = refine_sequence(
            &refiner,
            &PredictionVolume::new(frames.clone()).unwrap(),
            &feats,
        )
        .unwrap();
        let i = rng.random_range(0..n);
        let radius = gap * (k - 1) / 2;
        let far: Vec<usize> = (0..n).filter(|&j| j.abs_diff(i) > radius).collect();
        let sampled = sample_indices(i, &spec, n).unwrap();
        for &j in far.iter().filter(|j| !sampled.contains(j)) {
            let mut changed = frames.clone();
            changed[j] = PredictionMap::filled(side, side, 0.9).unwrap();
            let out = refine_sequence(&refiner, &PredictionVolume::new(changed).unwrap(), &feats)
                .unwrap();
            c.check(out.frame(i) == base.frame(i), || {
                format!("F={n} K={k} GAP={gap}: frame {i} changed when frame {j} was perturbed")
            });
        }
    }
    c.finish(
        start.elapsed(),
        Duration::from_secs(5),
        "worked examples exact; 2000 random (F,K,GAP,i) cases and locality hold".into(),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut c = Checks::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    // monotone training loss
    let n = 400;
    let xs: Vec<f32> = (0..n * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ys: Vec<u8> = (0..n)
        .map(|r| {
            let s = xs[r * 4] + 0.5 * xs[r * 4 + 1] * xs[r * 4 + 2];
            (s + rng.random_range(-0.3..0.3) > 0.0) as u8
        })
        .collect();
    let x = DenseMatrix::new(n, 4, xs).unwrap();
    let cfg = TrainConfig {
        n_trees: 60,
        depth: 3,
        ..TrainConfig::default()
    };
    let (model, history) = train_with_history(&x, &ys, &cfg).unwrap();
    let rises = history.windows(2).filter(|w| w[1] > w[0] + 1e-12).count();
    c.check(rises == 0, || {
        format!("training loss rose in {rises} rounds")
    });

    // hand-computed leaves on 8 samples
    let x8 = DenseMatrix::new(8, 1, (0..8).map(|v| v as f32).collect()).unwrap();
    let y8 = [0u8, 0, 0, 1, 1, 1, 0, 1];
    let stump = gbdt::train(
        &x8,
        &y8,
        &TrainConfig {
            n_trees: 1,
            depth: 1,
            learning_rate: 1.0,
            l2_lambda: 1.0,
            min_child_weight: 0.0,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    // base 0, so g = 0.5 - y and h = 0.25; best split x < 3:
    // left G = 1.5, H = 0.75; right G = 2.5 - 4 = -1.5, H = 1.25
    let nodes = stump.tree_nodes(0);
    let want_left = -1.5 / (0.75 + 1.0);
    let want_right = 1.5 / (1.25 + 1.0);
    let ok = match nodes.as_slice() {
        [gbdt::TreeNode::Internal {
            feature_index: 0,
            threshold,
            ..
        }, gbdt::TreeNode::Leaf { value: l }, gbdt::TreeNode::Leaf { value: r }] => {
            *threshold == 3.0 && (l - want_left).abs() < 1e-6 && (r - want_right).abs() < 1e-6
        }
        _ => false,
    };
    c.check(ok && stump.base_score() == 0.0, || {
        format!("8-sample stump {nodes:?}")
    });

    // histogram split search vs exhaustive enumeration
    for case in 0..300 {
        let n = rng.random_range(2..=64usize);
        let d = rng.random_range(1..=4usize);
        let levels = rng.random_range(2..=12u32);
        let rows: Vec<Vec<f32>> = (0..n)
            .map(|_| {
                (0..d)
                    .map(|_| rng.random_range(0..levels) as f32 * 0.25)
                    .collect()
            })
            .collect();
        let grad: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hess: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.25)).collect();
        let lambda = [0.0, 1.0, 3.0][case % 3];
        let mcw = [0.0, 0.1, 0.5][case % 3];
        let cfg = TrainConfig {
            l2_lambda: lambda,
            min_child_weight: mcw,
            ..TrainConfig::default()
        };
        let flat: Vec<f32> = rows.iter().flatten().copied().collect();
        let x = DenseMatrix::new(n, d, flat).unwrap();
        let hist = root_split(&x, &grad, &hess, &cfg).unwrap();
        let exact = oracles::exhaustive_split(&rows, &grad, &hess, lambda, mcw);
        let ok = match (&hist, exact) {
            (None, None) => true,
            (Some(h), Some((_, _, best))) => {
                let own = oracles::split_gain(&rows, &grad, &hess, lambda, h.feature, h.threshold);
                (h.gain - best).abs() <= 1e-9 * best.abs().max(1.0)
                    && (own - best).abs() <= 1e-9 * best.abs().max(1.0)
            }
            _ => false,
        };
        c.check(ok, || {
            format!("case {case}: histogram {hist:?} vs exhaustive {exact:?}")
        });
    }

    // save / load round trip
    let bytes = gbdt::save(&model);
    let back = gbdt::load(&bytes).unwrap();
    let probe = DenseMatrix::new(
        500,
        4,
        (0..2000).map(|_| rng.random_range(-2.0..2.0)).collect(),
    )
    .unwrap();
    let same = model.predict_batch(&probe).unwrap() == back.predict_batch(&probe).unwrap()
        && model.predict_batch(&x).unwrap() == back.predict_batch(&x).unwrap();
    c.check(same && back == model, || {
        "reloaded model predicts differently".into()
    });
    c.finish(
        start.elapsed(),
        Duration::from_secs(30),
        "loss monotone over 60 rounds; stump leaves exact; 300 split searches match; round trip identical".into(),
    )
}

fn fmt_summary(s: &MetricsSummary) -> String {
    format!("mDice {:.4}", s.mdice)
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut c = Checks::default();
    let dir = tempfile::tempdir().unwrap();
    let synth = SynthDatasetConfig {
        sequences: 8,
        ..SynthDatasetConfig::default()
    };
    let seqs = synth_dataset(&synth, dir.path()).unwrap();
    let (cascade_train, refiner_train, test) = (&seqs[0..3], &seqs[3..5], &seqs[5..8]);
    let features = FeatureProviderConfig::default();

    let frames = cascade_training_frames(&features, cascade_train).unwrap();
    let cascade = train_cascade(
        &frames,
        &CascadeConfig::uniform(TrainConfig {
            n_trees: 200,
            depth: 3,
            ..TrainConfig::default()
        }),
    )
    .unwrap();
    drop(frames);

    struct Video {
        name: String,
        features: Vec<Tensor3>,
        stage1: PredictionVolume,
        stage4: PredictionVolume,
        noisy: PredictionVolume,
        masks: Vec<BinaryMask>,
    }
    let videos: Vec<Video> = seqs[3..]
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let feats = sequence_features(&features, s).unwrap();
            let outs = run_cascade(&cascade, &feats).unwrap();
            let stage1 =
                PredictionVolume::new(outs.iter().map(|o| o.stages[0].clone()).collect()).unwrap();
            let stage4 =
                PredictionVolume::new(outs.into_iter().map(|o| o.into_final()).collect()).unwrap();
            let noisy = salt_noise(&stage4, 0.1, 600 + i as u64).unwrap();
            Video {
                name: s.name.clone(),
                features: feats,
                stage1,
                stage4,
                noisy,
                masks: s.load_masks().unwrap(),
            }
        })
        .collect();
    let (train_videos, test_videos) = videos.split_at(refiner_train.len());
    assert_eq!(test_videos.len(), test.len());

    let refine = RefineConfig::default();
    let fit = |noisy: bool, term: Term| {
        let inputs: Vec<RefinerVideo> = train_videos
            .iter()
            .map(|v| RefinerVideo {
                volume: if noisy { &v.noisy } else { &v.stage4 },
                features: &v.features,
                masks: &v.masks,
            })
            .collect();
        train_refiner(&inputs, term, &refine.spec(term).unwrap(), &refine.train).unwrap()
    };
    let score = |pick: &dyn Fn(usize) -> PredictionVolume| {
        let pairs: Vec<_> = test_videos
            .iter()
            .enumerate()
            .map(|(i, v)| scored_pairs(&v.name, &pick(i), &v.masks).unwrap())
            .collect();
        evaluate_sequences(&pairs).unwrap().overall
    };
    let ensemble = EnsembleConfig::default();

    let stage1 = score(&|i| test_videos[i].stage1.clone());
    let stage4 = score(&|i| test_videos[i].stage4.clone());
    c.check(stage4.mdice > stage1.mdice, || {
        format!(
            "(a) stage-4 {} vs stage-1 {}",
            fmt_summary(&stage4),
            fmt_summary(&stage1)
        )
    });

    let (short, long) = (fit(false, Term::Short), fit(false, Term::Long));
    let clean: Vec<_> = test_videos
        .iter()
        .map(|v| refine_and_fuse(&short, &long, &v.stage4, &v.features, &ensemble).unwrap())
        .collect();
    let s = score(&|i| clean[i].short.clone());
    let l = score(&|i| clean[i].long.clone());
    let f = score(&|i| clean[i].fused.clone());
    c.check(f.mdice >= s.mdice.max(l.mdice) - 0.01, || {
        format!(
            "(b) fused {} vs short {} / long {}",
            f.mdice, s.mdice, l.mdice
        )
    });

    let (short_n, long_n) = (fit(true, Term::Short), fit(true, Term::Long));
    let noisy_in = score(&|i| test_videos[i].noisy.clone());
    let noisy: Vec<_> = test_videos
        .iter()
        .map(|v| refine_and_fuse(&short_n, &long_n, &v.noisy, &v.features, &ensemble).unwrap())
        .collect();
    let sn = score(&|i| noisy[i].short.clone());
    let ln = score(&|i| noisy[i].long.clone());
    c.check(
        sn.mdice > noisy_in.mdice && ln.mdice > noisy_in.mdice,
        || {
            format!(
                "(c) refined short {} / long {} vs corrupted input {}",
                sn.mdice, ln.mdice, noisy_in.mdice
            )
        },
    );
    let summary = format!(
        "(a) stage-1 {:.4} -> stage-4 {:.4}; (b) short {:.4}, long {:.4}, fused {:.4}; (c) corrupted {:.4} -> short {:.4}, long {:.4}",
        stage1.mdice, stage4.mdice, s.mdice, l.mdice, f.mdice, noisy_in.mdice, sn.mdice, ln.mdice
    );
    c.finish(start.elapsed(), Duration::from_secs(15 * 60), summary)
}

const PIPELINE_CONFIG: &str = r#"
data = "data"
models = "models"
out = "out"
seed = 11

[synth]
sequences = 2
speed = 2.0

[synth.video]
frames = 6
height = 64
width = 64
axes = [10.0, 7.0]

[cascade_train]
n_trees = 12
depth = 3

[refine]
side = 9
depth = 3
gap_short = 1
gap_long = 2

[refine.train]
n_trees = 12
depth = 4
"#;

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn run_pipeline(root: &Path, workers: &str) -> Result<(), String> {
    let config = root.join("run.toml");
    fs::write(&config, PIPELINE_CONFIG).unwrap();
    let cfg = config.to_str().unwrap();
    for cmd in [
        "synth",
        "train-cascade",
        "predict",
        "train-refiners",
        "refine",
    ] {
        let out = gvcod(&[cmd, "--config", cfg, "--workers", workers]);
        if !out.status.success() {
            return Err(format!(
                "{cmd}: {}",
                String::from_utf8_lossy(&out.stderr).trim()
            ));
        }
    }
    let report = root.join("out").join("metrics.json");
    let out = gvcod(&[
        "evaluate",
        "--config",
        cfg,
        "--workers",
        workers,
        "--report",
        report.to_str().unwrap(),
    ]);
    if !out.status.success() {
        return Err(format!(
            "evaluate: {}",
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(())
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut c = Checks::default();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_pipeline(a.path(), "1");
    let rb = run_pipeline(b.path(), "8");
    c.check(ra.is_ok(), || format!("workers 1: {ra:?}"));
    c.check(rb.is_ok(), || format!("workers 8: {rb:?}"));
    let mut n_files = 0;
    for sub in ["data", "models", "out"] {
        let fa = files_under(&a.path().join(sub));
        let fb = files_under(&b.path().join(sub));
        n_files += fa.len();
        c.check(fa.keys().eq(fb.keys()), || {
            format!("{sub}: different file sets")
        });
        for (p, bytes) in &fa {
            c.check(fb.get(p) == Some(bytes), || {
                format!("{sub}/{} differs", p.display())
            });
        }
    }
    let models = files_under(&a.path().join("models"));
    c.check(models.len() == 9, || {
        format!("expected 9 model files, found {}", models.len())
    });
    c.finish(
        start.elapsed(),
        Duration::from_secs(15 * 60),
        format!("{n_files} files byte-identical between --workers 1 and --workers 8"),
    )
}

fn main() {
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let wanted = |n: u32| selected.is_empty() || selected.contains(&n);
    let criteria: [(u32, &str, fn() -> Outcome); 6] = [
        (1, "complexity table reproduction", criterion_1),
        (3, "metric oracle equivalence", criterion_3),
        (4, "TN indexing", criterion_4),
        (5, "GBDT correctness", criterion_5),
        (6, "end-to-end synthetic ablation", criterion_6),
        (7, "determinism across worker counts", criterion_7),
    ];
    let mut failed = 0;
    for (n, name, run) in criteria {
        if n == 3 && wanted(2) {
            println!(
                "criterion 2 [published results]: NOT REPRODUCIBLE: published benchmark scores need MoCA-Mask, backbone features and full-scale training; out of desk-scale scope"
            );
        }
        if !wanted(n) {
            continue;
        }
        let o = run();
        println!(
            "criterion {n} [{name}]: {}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += (!o.pass) as u32;
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
