mod config;
mod outputs;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gvcod_core::cascade::{train_cascade, CascadeModel};
use gvcod_core::complexity::{self, BackboneProfile, EnsembleShape, PipelineShape};
use gvcod_core::dataset::{load_dataset, synth_dataset, VideoSequence};
use gvcod_core::metrics::{evaluate_dataset, MetricsReport};
use gvcod_core::pipeline::{
    cascade_training_frames, final_volume, read_volume_gvf, refine_and_fuse, run_cascade,
    sequence_features, write_masks_png, write_volume_gvf, write_volume_png, FUSED_BINARY_DIR,
    FUSED_DIR, STAGE1_DIR, STAGE1_PNG_DIR,
};
use gvcod_core::refine::{refine_sequence, train_refiner, RefinerModel, RefinerVideo, Term};

use crate::config::RunConfig;
use crate::outputs::Outputs;

#[derive(Debug)]
enum CliError {
    Core(gvcod_core::Error),
    Usage(String),
    Config(String),
}

impl CliError {
    fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
        }
    }

    fn detail(&self) -> String {
        let s = match self {
            CliError::Core(e) => e.to_string(),
            CliError::Usage(s) | CliError::Config(s) => s.clone(),
        };
        s.replace('\n', " ")
    }
}

impl From<gvcod_core::Error> for CliError {
    fn from(e: gvcod_core::Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TermArg {
    Short,
    Long,
    Both,
}

impl TermArg {
    fn terms(self) -> Vec<Term> {
        match self {
            TermArg::Short => vec![Term::Short],
            TermArg::Long => vec![Term::Long],
            TermArg::Both => vec![Term::Short, Term::Long],
        }
    }
}

#[derive(Debug, Args, Default)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[arg(long, global = true)]
    models: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this value.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    gap_short: Option<usize>,
    #[arg(long, global = true)]
    gap_long: Option<usize>,
    #[arg(long, global = true)]
    cube_k: Option<usize>,
    #[arg(long, global = true)]
    cube_s: Option<usize>,
}

#[derive(Debug, Parser)]
#[command(
    name = "gvcod",
    version,
    about = "Video camouflaged object detection with boosted trees"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset under --data.
    Synth,
    /// Train the four-stage cascade on every sequence under --data.
    TrainCascade,
    /// Run the cascade; write stage-1 maps under --out.
    Predict,
    /// Train refiners from the stage-1 maps under --out.
    TrainRefiners {
        #[arg(long, value_enum, default_value = "both")]
        term: TermArg,
    },
    /// Write refined, fused and binarized maps under --out.
    Refine {
        #[arg(long, value_enum, default_value = "both")]
        term: TermArg,
    },
    /// Score prediction PNGs against the ground truth under --data.
    Evaluate {
        /// Root holding `<sequence>/<pred-subdir>/*.png`; defaults to --out.
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long, default_value = FUSED_DIR)]
        pred_subdir: String,
        /// Also write the full report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Parameter and MAC accounting.
    Account {
        /// Use the full-size published configuration.
        #[arg(long)]
        paper_scale: bool,
        #[arg(long)]
        json: bool,
    },
    /// Compare short-term, long-term and fused outputs under --out.
    Ablate {
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let first = e
                .to_string()
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ")
                .to_string();
            eprintln!("error: usage: {first}");
            return ExitCode::from(2);
        }
    };
    let mut outputs = Outputs::default();
    match run(cli, &mut outputs) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            outputs.remove_all();
            eprintln!("error: {}: {}", e.code(), e.detail());
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli, outputs: &mut Outputs) -> CliResult<()> {
    let cfg = RunConfig::resolve(&cli.common)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if cfg.workers > 0 {
        pool = pool.num_threads(cfg.workers);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| dispatch(&cli.command, &cfg, outputs))
}

fn dispatch(command: &Command, cfg: &RunConfig, outputs: &mut Outputs) -> CliResult<()> {
    match command {
        Command::Synth => cmd_synth(cfg, outputs),
        Command::TrainCascade => cmd_train_cascade(cfg, outputs),
        Command::Predict => cmd_predict(cfg, outputs),
        Command::TrainRefiners { term } => cmd_train_refiners(cfg, *term, outputs),
        Command::Refine { term } => cmd_refine(cfg, *term, outputs),
        Command::Evaluate {
            pred,
            pred_subdir,
            report,
        } => cmd_evaluate(
            cfg,
            pred.as_deref(),
            pred_subdir,
            report.as_deref(),
            outputs,
        ),
        Command::Account { paper_scale, json } => cmd_account(cfg, *paper_scale, *json),
        Command::Ablate { report } => cmd_ablate(cfg, report.as_deref(), outputs),
    }
}

fn need<'a>(p: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    p.as_deref()
        .ok_or_else(|| CliError::Usage(format!("--{flag} is required (flag or config file)")))
}

fn dataset(cfg: &RunConfig) -> CliResult<Vec<VideoSequence>> {
    Ok(load_dataset(need(&cfg.data, "data")?)?)
}

fn cmd_synth(cfg: &RunConfig, outputs: &mut Outputs) -> CliResult<()> {
    let root = need(&cfg.data, "data")?;
    outputs.track_dir(root.to_path_buf());
    for i in 0..cfg.synth.sequences {
        outputs.track_dir(root.join(format!("seq_{i:03}")));
    }
    let seqs = synth_dataset(&cfg.synth, root)?;
    let frames: usize = seqs.iter().map(VideoSequence::len).sum();
    println!(
        "wrote {} sequences, {frames} frames to {}",
        seqs.len(),
        root.display()
    );
    Ok(())
}

fn cmd_train_cascade(cfg: &RunConfig, outputs: &mut Outputs) -> CliResult<()> {
    let models = need(&cfg.models, "models")?;
    let seqs = dataset(cfg)?;
    outputs.track_dir(models.to_path_buf());
    outputs.track_dir(models.join(gvcod_core::cascade::CASCADE_DIR));
    let frames = cascade_training_frames(&cfg.features, &seqs)?;
    let model = train_cascade(&frames, &cfg.cascade)?;
    outputs.track_files(model.save(models)?);
    let trees: Vec<usize> = model.stages.iter().map(|m| m.n_trees()).collect();
    println!(
        "trained cascade on {} frames (C = {}), trees per stage {trees:?}",
        frames.len(),
        model.channels
    );
    Ok(())
}

fn cmd_predict(cfg: &RunConfig, outputs: &mut Outputs) -> CliResult<()> {
    let models = need(&cfg.models, "models")?;
    let out = need(&cfg.out, "out")?;
    let model = CascadeModel::load(models)?;
    let seqs = dataset(cfg)?;
    outputs.track_dir(out.to_path_buf());
    let mut n = 0;
    for seq in &seqs {
        let feats = sequence_features(&cfg.features, seq)?;
        let vol = final_volume(run_cascade(&model, &feats)?)?;
        let dir = out.join(&seq.name);
        outputs.track_dir(dir.clone());
        outputs.track_files(write_volume_gvf(&vol, seq, &dir.join(STAGE1_DIR))?);
        outputs.track_files(write_volume_png(
            &vol,
            seq,
            &dir.join(STAGE1_PNG_DIR),
            None,
        )?);
        n += vol.len();
    }
    println!("wrote {n} stage-1 maps to {}", out.display());
    Ok(())
}

fn cmd_train_refiners(cfg: &RunConfig, term: TermArg, outputs: &mut Outputs) -> CliResult<()> {
    let models = need(&cfg.models, "models")?;
    let out = need(&cfg.out, "out")?;
    let seqs = dataset(cfg)?;
    let mut vols = Vec::with_capacity(seqs.len());
    let mut feats = Vec::with_capacity(seqs.len());
    let mut masks = Vec::with_capacity(seqs.len());
    for seq in &seqs {
        vols.push(read_volume_gvf(seq, &out.join(&seq.name).join(STAGE1_DIR))?);
        feats.push(sequence_features(&cfg.features, seq)?);
        masks.push(seq.load_masks()?);
    }
    let videos: Vec<RefinerVideo> = (0..seqs.len())
        .map(|i| RefinerVideo {
            volume: &vols[i],
            features: &feats[i],
            masks: &masks[i],
        })
        .collect();
    outputs.track_dir(models.to_path_buf());
    for t in term.terms() {
        let spec = cfg.refine.spec(t)?;
        let model = train_refiner(&videos, t, &spec, &cfg.refine.train)?;
        outputs.track_files(model.save(models)?);
        println!(
            "trained {t}-term refiner: S = {}, K = {}, GAP = {}, {} trees",
            spec.side,
            spec.depth,
            spec.gap,
            model.model.n_trees()
        );
    }
    Ok(())
}

fn cmd_refine(cfg: &RunConfig, term: TermArg, outputs: &mut Outputs) -> CliResult<()> {
    let models = need(&cfg.models, "models")?;
    let out = need(&cfg.out, "out")?;
    let refiners: Vec<RefinerModel> = term
        .terms()
        .into_iter()
        .map(|t| RefinerModel::load(models, t))
        .collect::<Result<_, _>>()?;
    let seqs = dataset(cfg)?;
    for seq in &seqs {
        let dir = out.join(&seq.name);
        for t in ["short", "long", FUSED_DIR, FUSED_BINARY_DIR] {
            outputs.track_dir(dir.join(t));
        }
        let vol = read_volume_gvf(seq, &dir.join(STAGE1_DIR))?;
        let feats = sequence_features(&cfg.features, seq)?;
        let size = Some(seq.frame_size);
        if let [short, long] = refiners.as_slice() {
            let r = refine_and_fuse(short, long, &vol, &feats, &cfg.ensemble)?;
            outputs.track_files(write_volume_png(
                &r.short,
                seq,
                &dir.join(Term::Short.as_str()),
                size,
            )?);
            outputs.track_files(write_volume_png(
                &r.long,
                seq,
                &dir.join(Term::Long.as_str()),
                size,
            )?);
            outputs.track_files(write_volume_png(&r.fused, seq, &dir.join(FUSED_DIR), size)?);
            outputs.track_files(write_masks_png(
                &r.decisions,
                seq,
                &dir.join(FUSED_BINARY_DIR),
                size,
            )?);
        } else {
            for r in &refiners {
                let refined = refine_sequence(r, &vol, &feats)?;
                outputs.track_files(write_volume_png(
                    &refined,
                    seq,
                    &dir.join(r.term.as_str()),
                    size,
                )?);
            }
        }
    }
    println!("refined {} sequences into {}", seqs.len(), out.display());
    Ok(())
}

fn write_report(report: &MetricsReport, path: &Path, outputs: &mut Outputs) -> CliResult<()> {
    let bytes = serde_json::to_vec_pretty(report).map_err(gvcod_core::Error::from)?;
    outputs.track_file(path.to_path_buf());
    std::fs::write(path, bytes).map_err(|e| gvcod_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn cmd_evaluate(
    cfg: &RunConfig,
    pred: Option<&Path>,
    subdir: &str,
    report_path: Option<&Path>,
    outputs: &mut Outputs,
) -> CliResult<()> {
    let data = need(&cfg.data, "data")?;
    let pred = match pred {
        Some(p) => p,
        None => need(&cfg.out, "pred")?,
    };
    let report = evaluate_dataset(pred, subdir, data)?;
    print!("{}", report.to_table());
    if let Some(p) = report_path {
        write_report(&report, p, outputs)?;
    }
    Ok(())
}

fn cmd_ablate(cfg: &RunConfig, report_path: Option<&Path>, outputs: &mut Outputs) -> CliResult<()> {
    let data = need(&cfg.data, "data")?;
    let out = need(&cfg.out, "out")?;
    let rows = [
        ("short-term", Term::Short.as_str()),
        ("long-term", Term::Long.as_str()),
        ("ensemble", FUSED_DIR),
    ];
    let mut reports = std::collections::BTreeMap::new();
    println!(
        "{:<12}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}",
        "variant", "Fw", "Ephi", "MAE", "mDice", "mIoU"
    );
    for (label, subdir) in rows {
        let r = evaluate_dataset(out, subdir, data)?;
        let s = &r.overall;
        println!(
            "{label:<12}  {:>8.4}  {:>8.4}  {:>8.5}  {:>8.4}  {:>8.4}",
            s.wfm, s.emeasure, s.mae, s.mdice, s.miou
        );
        reports.insert(label, r);
    }
    if let Some(p) = report_path {
        let bytes = serde_json::to_vec_pretty(&reports).map_err(gvcod_core::Error::from)?;
        outputs.track_file(p.to_path_buf());
        std::fs::write(p, bytes).map_err(|e| gvcod_core::Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?;
    }
    Ok(())
}

fn current_shape(cfg: &RunConfig) -> PipelineShape {
    let refiner = EnsembleShape {
        n_trees: cfg.refine.train.n_trees as u64,
        depth: cfg.refine.train.depth as u32,
        map_side: gvcod_core::features::STANDARD_SIZE as u64,
    };
    PipelineShape {
        // the built-in extractor has no learned parameters
        backbone: BackboneProfile { params: 0, macs: 0 },
        cascade: cfg
            .cascade
            .resolutions
            .iter()
            .zip(&cfg.cascade.stages)
            .map(|(&res, t)| EnsembleShape {
                n_trees: t.n_trees as u64,
                depth: t.depth as u32,
                map_side: res as u64,
            })
            .collect(),
        long_term: refiner,
        short_term: refiner,
    }
}

fn cmd_account(cfg: &RunConfig, paper_scale: bool, json: bool) -> CliResult<()> {
    let shape = if paper_scale {
        PipelineShape::paper_scale()
    } else {
        current_shape(cfg)
    };
    let report = complexity::report(&shape);
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).map_err(gvcod_core::Error::from)?
        );
    } else {
        print!("{}\n{}", report.params_table(), report.macs_table());
    }
    Ok(())
}
