//! Subcommand implementations. Each writes its files first and returns the
//! text destined for stdout.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::time::Instant;

use afe_core::encoder::SampleInput;
use afe_core::model::{ModelConfig, ModelParams};
use afe_core::recognizer::count_flops;
use afe_core::skeleton::{
    parse_jsonl, parse_ntu, preprocess, split_dataset, synth_generate, write_jsonl, DatasetSplit, Joint, Protocol,
    SkeletonSequence, Topology,
};
use afe_core::{
    ablate, encode_values, evaluate, load_checkpoint, predict, save_checkpoint, standard_variants, train_with, Dataset,
};
use serde::Serialize;

use crate::args::{AblateArgs, BenchArgs, EncodeArgs, EvalArgs, IngestArgs, ModelSource, SynthArgs, TrainArgs};
use crate::error::{CliError, CliResult};
use crate::ppm::{confusion_heatmap, heatmap, rgb_from_channels};

fn topology_for(seqs: &[SkeletonSequence]) -> CliResult<Topology> {
    let first = seqs.first().ok_or_else(|| CliError::data("the dataset is empty"))?;
    let j = first.joint_count();
    Topology::for_joint_count(j).ok_or_else(|| CliError::config(format!("no built-in skeleton topology has {j} joints")))
}

fn load_dataset(path: &Path, frames: usize) -> CliResult<(Vec<SkeletonSequence>, Dataset)> {
    let seqs = parse_jsonl(path)?;
    let topo = topology_for(&seqs)?;
    let ds = Dataset::prepare(&seqs, &topo, frames)?;
    Ok((seqs, ds))
}

fn summary(seqs: &[SkeletonSequence]) -> String {
    let classes: BTreeSet<usize> = seqs.iter().map(|s| s.action_label).collect();
    let subjects: BTreeSet<u32> = seqs.iter().map(|s| s.subject_id).collect();
    let cameras: BTreeSet<u32> = seqs.iter().map(|s| s.camera_id).collect();
    format!(
        "{} sequences, {} classes, {} subjects, {} cameras",
        seqs.len(),
        classes.len(),
        subjects.len(),
        cameras.len()
    )
}

pub fn ingest(args: &IngestArgs) -> CliResult<String> {
    let seqs = match (&args.ntu_dir, &args.jsonl) {
        (Some(dir), _) => {
            let entries = std::fs::read_dir(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
            let mut files: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "skeleton"))
                .collect();
            files.sort();
            let mut seqs = Vec::new();
            for f in &files {
                match parse_ntu(f) {
                    Ok(s) => seqs.push(s),
                    Err(e) => eprintln!("skipping {}: {e}", f.display()),
                }
            }
            seqs
        }
        (None, Some(path)) => parse_jsonl(path)?,
        (None, None) => return Err(CliError::usage("one of --ntu-dir or --jsonl is required")),
    };
    if seqs.is_empty() {
        return Err(CliError::data("no sequences ingested"));
    }
    write_jsonl(&seqs, &args.out)?;
    Ok(summary(&seqs))
}

pub fn synth(args: &SynthArgs) -> CliResult<String> {
    let seqs = synth_generate(&args.to_config())?;
    write_jsonl(&seqs, &args.out)?;
    Ok(summary(&seqs))
}

fn split_for(seqs: &[SkeletonSequence], protocol: &Protocol) -> DatasetSplit {
    split_dataset(seqs, protocol)
}

pub fn train(args: &TrainArgs) -> CliResult<String> {
    let cfg = args.model.to_config()?;
    let (seqs, ds) = load_dataset(&args.data, cfg.frames)?;
    let split = split_for(&seqs, &args.split.protocol()?);
    eprintln!(
        "training on {} sequences, testing on {} ({})",
        split.train.len(),
        split.test.len(),
        split.protocol
    );
    let (params, log) = train_with(&ds, &split, &cfg, |e| {
        eprintln!(
            "epoch {:>3}  loss {:.4}  test_acc {:.4}  lr {}",
            e.epoch, e.loss, e.test_acc, e.lr
        );
        ControlFlow::Continue(())
    })?;
    save_checkpoint(&params, &args.out_checkpoint)?;
    let log_path = args
        .log
        .clone()
        .unwrap_or_else(|| args.out_checkpoint.with_extension("csv"));
    std::fs::write(&log_path, log.to_csv()).map_err(|e| CliError::write(&log_path, e))?;
    let last = log.epochs.last().expect("at least one epoch");
    Ok(format!(
        "final loss {:.4}, test accuracy {}\ncheckpoint {}\nlog {}",
        last.loss,
        last.test_acc,
        args.out_checkpoint.display(),
        log_path.display()
    ))
}

/// Builds samples for `params`, reporting shape or label mismatches as
/// configuration errors.
fn samples_for(params: &ModelParams<f32>, seqs: &[&SkeletonSequence]) -> CliResult<Vec<SampleInput<f32>>> {
    let cfg = &params.config;
    let topo = &cfg.topology;
    seqs.iter()
        .map(|s| {
            if s.joint_count() != topo.joint_count() {
                return Err(CliError::config(format!(
                    "checkpoint expects {} joints, data has {}",
                    topo.joint_count(),
                    s.joint_count()
                )));
            }
            if s.action_label >= cfg.classes {
                return Err(CliError::config(format!(
                    "label {} is outside the checkpoint's {} classes",
                    s.action_label, cfg.classes
                )));
            }
            let p = preprocess(s, topo.root(), cfg.frames)?;
            Ok(SampleInput::from_sequence(&p, topo)?)
        })
        .collect()
}

pub fn eval(args: &EvalArgs) -> CliResult<String> {
    let params = load_checkpoint(&args.checkpoint)?;
    let seqs = parse_jsonl(&args.data)?;
    let split = split_for(&seqs, &args.split.protocol()?);
    let indices: Vec<usize> = match args.subset.as_str() {
        "test" => split.test.clone(),
        "train" => split.train.clone(),
        "all" => (0..seqs.len()).collect(),
        other => return Err(CliError::usage(format!("unknown subset {other:?}; use test, train or all"))),
    };
    let chosen: Vec<&SkeletonSequence> = indices.iter().map(|&i| &seqs[i]).collect();
    let samples = samples_for(&params, &chosen)?;
    let refs: Vec<&SampleInput<f32>> = samples.iter().collect();
    let report = evaluate(&params, &refs)?;

    std::fs::create_dir_all(&args.out_dir).map_err(|e| CliError::write(&args.out_dir, e))?;
    let csv_path = args.out_dir.join("confusion.csv");
    std::fs::write(&csv_path, report.confusion.to_csv()).map_err(|e| CliError::write(&csv_path, e))?;
    let classes = report.confusion.classes();
    let counts: Vec<u64> = (0..classes).flat_map(|r| report.confusion.row(r).to_vec()).collect();
    let ppm_path = args.out_dir.join("confusion.ppm");
    confusion_heatmap(&counts, classes)
        .save(&ppm_path)
        .map_err(|e| CliError::write(&ppm_path, e))?;

    let mut out = String::new();
    writeln!(out, "accuracy {}", report.accuracy).unwrap();
    writeln!(out, "mean class accuracy {}", report.mean_class_accuracy()).unwrap();
    writeln!(out, "{:>6} {:>7} {:>9}", "class", "count", "accuracy").unwrap();
    for (c, acc) in report.per_class.iter().enumerate() {
        let n = report.confusion.row_sum(c);
        match acc {
            Some(a) => writeln!(out, "{c:>6} {n:>7} {a:>9.4}").unwrap(),
            None => writeln!(out, "{c:>6} {n:>7} {:>9}", "-").unwrap(),
        }
    }
    write!(out, "confusion {} {}", csv_path.display(), ppm_path.display()).unwrap();
    Ok(out)
}

fn model_from_source(src: &ModelSource, topology: Topology) -> CliResult<ModelParams<f32>> {
    if let Some(path) = &src.checkpoint {
        return Ok(load_checkpoint(path)?);
    }
    let mut cfg = ModelConfig::new(topology, src.classes.unwrap_or(60));
    if let Some(f) = src.frames {
        cfg.frames = f;
    }
    Ok(ModelParams::init(&cfg, src.seed.unwrap_or(0))?)
}

/// Image files written by `encode`, in order.
pub const ENCODE_FILES: [&str; 5] = ["tf_kjei.ppm", "tf_bvei.ppm", "t_kjvi.ppm", "t_bvvi.ppm", "mfam.ppm"];

pub fn encode(args: &EncodeArgs) -> CliResult<String> {
    let seqs = parse_jsonl(&args.sequence)?;
    let seq = match (&args.id, args.index) {
        (Some(id), _) => seqs
            .iter()
            .find(|s| &s.source == id)
            .ok_or_else(|| CliError::usage(format!("no sequence with id {id:?}")))?,
        (None, i) => {
            let i = i.unwrap_or(0);
            seqs.get(i)
                .ok_or_else(|| CliError::usage(format!("index {i} out of range for {} sequences", seqs.len())))?
        }
    };
    let params = model_from_source(&args.model, topology_for(std::slice::from_ref(seq))?)?;
    let sample = samples_for(&params, &[seq])?.remove(0);
    let bundle = encode_values(&params, &sample)?;

    std::fs::create_dir_all(&args.out_dir).map_err(|e| CliError::write(&args.out_dir, e))?;
    let images = [
        Some(rgb_from_channels(&bundle.tf_kjei)),
        Some(rgb_from_channels(&bundle.tf_bvei)),
        bundle.t_kjvi.as_ref().map(rgb_from_channels),
        bundle.t_bvvi.as_ref().map(rgb_from_channels),
        bundle.attention.as_ref().map(heatmap),
    ];
    let mut written = Vec::new();
    for (name, img) in ENCODE_FILES.iter().zip(images) {
        let Some(img) = img else { continue };
        let path = args.out_dir.join(name);
        img.save(&path).map_err(|e| CliError::write(&path, e))?;
        written.push(path.display().to_string());
    }
    Ok(written.join("\n"))
}

/// Latency and cost summary of `bench`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub gflops: f64,
    pub params: u64,
}

/// Nearest-rank percentile of sorted samples.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

pub fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn hardware_line() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "# hardware: {cpu}, {threads} logical cpus, {} {}, single thread, batch 1",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

/// Deterministic walking-noise sequence used as benchmark input.
fn bench_sequence(joints: usize, frames: usize) -> CliResult<SkeletonSequence> {
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f32 / (1u64 << 53) as f32 - 0.5
    };
    let base: Vec<Joint> = (0..joints).map(|_| [next(), next(), next()]).collect();
    let seq = (0..frames)
        .map(|t| {
            base.iter()
                .map(|p| [p[0] + 0.01 * t as f32 * next(), p[1], p[2] + 0.01 * next()])
                .collect()
        })
        .collect();
    Ok(SkeletonSequence::new(seq, 0)?)
}

pub fn bench(args: &BenchArgs) -> CliResult<(String, BenchReport)> {
    if args.iters == 0 {
        return Err(CliError::usage("--iters must be at least 1"));
    }
    let topo = Topology::for_joint_count(args.joints)
        .ok_or_else(|| CliError::usage(format!("no built-in topology has {} joints", args.joints)))?;
    let params = model_from_source(&args.model, topo)?;
    let cfg = &params.config;
    let seq = bench_sequence(cfg.joints(), cfg.frames)?;
    let sample = SampleInput::from_sequence(&preprocess(&seq, cfg.topology.root(), cfg.frames)?, &cfg.topology)?;
    for _ in 0..args.warmup {
        predict(&params, &sample)?;
    }
    let mut times = Vec::with_capacity(args.iters);
    for _ in 0..args.iters {
        let t0 = Instant::now();
        std::hint::black_box(predict(&params, std::hint::black_box(&sample))?);
        times.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    times.sort_by(f64::total_cmp);
    let cost = count_flops(cfg)?;
    let report = BenchReport {
        mean_ms: mean,
        median_ms: median(&times),
        p95_ms: percentile(&times, 0.95),
        gflops: cost.gflops(),
        params: cost.params,
    };
    let json = serde_json::to_string(&report).expect("report serializes");
    Ok((format!("{}\n{json}", hardware_line()), report))
}

pub fn ablate_cmd(args: &AblateArgs) -> CliResult<String> {
    let base = args.model.to_config()?;
    let (seqs, ds) = load_dataset(&args.data, base.frames)?;
    let xsub = match &args.train_subjects {
        Some(ids) => Protocol::CrossSubject(ids.iter().copied().collect()),
        None => Protocol::cross_subject_default(),
    };
    let (xs, xv) = (split_for(&seqs, &xsub), split_for(&seqs, &Protocol::CrossView));
    let variants = standard_variants();
    let mut csv = String::from("variant,seed,cross_subject,cross_view\n");
    let mut sums = vec![0.0; variants.len()];
    for &seed in &args.seeds {
        let cfg = afe_core::TrainConfig { seed, ..base.clone() };
        for (i, r) in ablate(&ds, &xs, &xv, &cfg, &variants)?.iter().enumerate() {
            eprintln!("seed {seed} {:<16} {:.4} {:.4}", r.variant, r.cross_subject, r.cross_view);
            writeln!(csv, "{},{seed},{},{}", r.variant, r.cross_subject, r.cross_view).unwrap();
            sums[i] += r.mean();
        }
    }
    if let Some(out) = &args.out {
        std::fs::write(out, &csv).map_err(|e| CliError::write(out, e))?;
    }
    let mut table = format!("{:<16} {:>8}\n", "variant", "mean");
    for (v, s) in variants.iter().zip(&sums) {
        writeln!(table, "{:<16} {:>8.4}", v.name, s / args.seeds.len() as f64).unwrap();
    }
    Ok(table.trim_end().to_string())
}
