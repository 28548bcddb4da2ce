//! The five subcommands. Every run is deterministic given its config and
//! seeds; the only non-reproducible output is the timing file `bench` writes
//! next to its (byte-stable) score tables.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;

use geocomm::exec;
use geocomm::geodesic::FitReport;
use geocomm::graph::{PartitionSequence, SnapshotSequence};
use geocomm::mcm::build_mcm_sequence;
use geocomm::metrics::{self, Membership, ScoreTrace};
use geocomm::pipeline::{
    self, detect_fixed_k, detect_static, detect_variable_k, geodesic_structure_check,
    BenefitTable, PipelineConfig,
};
use geocomm::sbm::{self, MergeConfig, SbmConfig};
use geocomm::{Error, Result};

use crate::config::{BenchEntry, DetectMode, ExperimentConfig, MetricKind, TruthSide};

/// Draws the configured benchmark once and writes the sequence plus ground
/// truth (and the receiving-side truth when the model has one).
pub fn generate(config: &ExperimentConfig, out: &Path, seed: Option<u64>) -> Result<()> {
    let (sequence, truth, truth_receive) =
        build_data(config.sbm.as_ref(), config.merge.as_ref(), seed)?;
    let seq_path = out.join(format!("{}_sequence.json", config.name));
    sequence.save(&seq_path)?;
    println!("wrote {}", seq_path.display());
    let truth_path = out.join(format!("{}_truth.json", config.name));
    truth.save(&truth_path)?;
    println!("wrote {}", truth_path.display());
    if let Some(receive) = truth_receive {
        let path = out.join(format!("{}_truth_receive.json", config.name));
        receive.save(&path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Runs detection in the configured mode and writes the partition file, the
/// fit report (geodesic modes) and the benefit table (variable mode).
pub fn detect(config: &ExperimentConfig, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut pipeline = config.pipeline()?.clone();
    if let Some(s) = seed {
        pipeline.seed = s;
    }
    let sequence = input_sequence(config, seed)?;
    let outcome = run_detection(&sequence, &pipeline, config.mode)?;

    let partition_path = out.join(format!("{}_partition.json", config.name));
    outcome.partition.save(&partition_path)?;
    println!("wrote {}", partition_path.display());
    if let Some(report) = &outcome.report {
        let path = out.join(format!("{}_fit.json", config.name));
        std::fs::write(&path, serde_json::to_string_pretty(report)?)?;
        println!("wrote {}", path.display());
    }
    if let Some(table) = &outcome.benefit {
        let path = out.join(format!("{}_benefit.json", config.name));
        table.save(&path)?;
        println!("wrote {}", path.display());
    }
    println!(
        "communities per snapshot: {:?}",
        outcome.partition.k_per_step()
    );
    Ok(())
}

/// Scores a predicted partition file against a ground-truth file and prints
/// the per-snapshot trace as CSV (also written into the output directory).
/// A truth mask excludes its nodes snapshot by snapshot.
pub fn score(config: &ExperimentConfig, out: &Path, _seed: Option<u64>) -> Result<()> {
    let truth_path = config
        .truth
        .as_ref()
        .ok_or_else(|| Error::Config("score needs a truth file path".into()))?;
    let pred_path = config
        .pred
        .as_ref()
        .ok_or_else(|| Error::Config("score needs a pred file path".into()))?;
    let truth = load_partition(truth_path)?;
    let pred = load_partition(pred_path)?;
    let values = score_pair(&truth, &pred, config.metric)?;
    let trace = ScoreTrace::new(config.metric.name(), values)?;
    let csv = metrics::scores_to_csv(std::slice::from_ref(&trace));
    print!("{csv}");
    let path = out.join(format!("{}_scores.csv", config.name));
    std::fs::write(&path, csv)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Emits the trajectory diagnostic (singular spectrum of the stacked leading
/// eigenvectors, and their planar projections) for the configured data and
/// method, once per bench entry when a bench section is present.
pub fn geocheck(config: &ExperimentConfig, out: &Path, seed: Option<u64>) -> Result<()> {
    struct Run<'a> {
        stem: String,
        sbm: Option<&'a SbmConfig>,
        merge: Option<&'a MergeConfig>,
        pipeline: &'a PipelineConfig,
    }
    let runs: Vec<Run> = if config.bench.is_empty() {
        vec![Run {
            stem: config.name.clone(),
            sbm: config.sbm.as_ref(),
            merge: config.merge.as_ref(),
            pipeline: config.pipeline()?,
        }]
    } else {
        config
            .bench
            .iter()
            .map(|entry| Run {
                stem: format!("{}_{}", config.name, entry.label),
                sbm: entry.sbm.as_ref().or(config.sbm.as_ref()),
                merge: entry.merge.as_ref().or(config.merge.as_ref()),
                pipeline: &entry.pipeline,
            })
            .collect()
    };

    for run in runs {
        let sequence = match &config.input {
            Some(path) => load_sequence(path)?,
            None => build_data(run.sbm, run.merge, seed)?.0,
        };
        let mcms = build_mcm_sequence(&sequence, &run.pipeline.method)?;
        let (sigma, proj) = geodesic_structure_check(&mcms)?;

        let mut sigma_csv = String::from("index,sigma\n");
        for (i, value) in sigma.iter().enumerate() {
            sigma_csv.push_str(&format!("{i},{value}\n"));
        }
        let sigma_path = out.join(format!("{}_sigma.csv", run.stem));
        std::fs::write(&sigma_path, sigma_csv)?;
        println!("wrote {}", sigma_path.display());

        let mut proj_csv = String::from("x,y\n");
        for (x, y) in &proj {
            proj_csv.push_str(&format!("{x},{y}\n"));
        }
        let proj_path = out.join(format!("{}_proj.csv", run.stem));
        std::fs::write(&proj_path, proj_csv)?;
        println!("wrote {}", proj_path.display());

        if sigma.len() >= 3 && sigma[0] > 0.0 {
            println!("{}: sigma3/sigma1 = {:.3e}", run.stem, sigma[2] / sigma[0]);
        }
    }
    Ok(())
}

/// Runs every bench entry across the seed list (repetitions in parallel),
/// writes per-snapshot score quantiles and a summary table, and reports
/// wall-clock detection time separately so the score files stay byte-stable.
pub fn bench(config: &ExperimentConfig, out: &Path, seed: Option<u64>) -> Result<()> {
    if config.bench.is_empty() {
        return Err(Error::Config(
            "bench needs a bench section with at least one entry".into(),
        ));
    }
    let seeds = config.run_seeds(seed);
    let units: Vec<(usize, u64)> = (0..config.bench.len())
        .flat_map(|e| seeds.iter().map(move |&s| (e, s)))
        .collect();
    let reps = exec::par_map(&units, |&(e, s)| run_rep(config, &config.bench[e], s))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut trace_csv = String::from("label,t_index,mean,median,q25,q75\n");
    let mut bench_csv = String::from("label,reps,snapshots,mean,std,median,q25,q75\n");
    let mut timing_csv = String::from("label,runtime_s_mean\n");
    println!("label,reps,mean,std,median,q25,q75,runtime_s");
    for (e, entry) in config.bench.iter().enumerate() {
        let rows: Vec<&RepResult> = reps.iter().filter(|r| r.entry == e).collect();
        let snapshots = rows.first().map_or(0, |r| r.scores.len());
        for t in 0..snapshots {
            let mut column: Vec<f64> = rows.iter().map(|r| r.scores[t]).collect();
            column.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
            trace_csv.push_str(&format!(
                "{},{t},{},{},{},{}\n",
                entry.label,
                mean(&column),
                quantile(&column, 0.5),
                quantile(&column, 0.25),
                quantile(&column, 0.75),
            ));
        }
        let mut all: Vec<f64> = rows.iter().flat_map(|r| r.scores.iter().copied()).collect();
        all.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
        let runtime = rows.iter().map(|r| r.runtime_s).sum::<f64>() / rows.len().max(1) as f64;
        bench_csv.push_str(&format!(
            "{},{},{snapshots},{},{},{},{},{}\n",
            entry.label,
            rows.len(),
            mean(&all),
            std_dev(&all),
            quantile(&all, 0.5),
            quantile(&all, 0.25),
            quantile(&all, 0.75),
        ));
        timing_csv.push_str(&format!("{},{runtime}\n", entry.label));
        println!(
            "{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.2}",
            entry.label,
            rows.len(),
            mean(&all),
            std_dev(&all),
            quantile(&all, 0.5),
            quantile(&all, 0.25),
            quantile(&all, 0.75),
            runtime,
        );
    }

    for (suffix, body) in [
        ("trace", trace_csv),
        ("bench", bench_csv),
        ("timing", timing_csv),
    ] {
        let path = out.join(format!("{}_{suffix}.csv", config.name));
        std::fs::write(&path, body)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

struct RepResult {
    entry: usize,
    scores: Vec<f64>,
    runtime_s: f64,
}

fn run_rep(config: &ExperimentConfig, entry: &BenchEntry, seed: u64) -> Result<RepResult> {
    let sbm = entry.sbm.as_ref().or(config.sbm.as_ref());
    let merge = entry.merge.as_ref().or(config.merge.as_ref());
    let (sequence, truth_send, truth_receive) = match &config.input {
        Some(path) => {
            let truth_path = config
                .truth
                .as_ref()
                .ok_or_else(|| Error::Config("bench on an input file needs a truth path".into()))?;
            (load_sequence(path)?, load_partition(truth_path)?, None)
        }
        None => build_data(sbm, merge, Some(seed))?,
    };
    let truth = match entry.truth_side {
        TruthSide::Send => truth_send,
        TruthSide::Receive => truth_receive.ok_or_else(|| {
            Error::Config(format!(
                "entry {:?} scores the receiving side but the generator has none",
                entry.label
            ))
        })?,
    };
    let mut pipeline = entry.pipeline.clone();
    pipeline.seed = seed;
    let start = Instant::now();
    let outcome = run_detection(&sequence, &pipeline, entry.mode)?;
    let runtime_s = start.elapsed().as_secs_f64();
    let scores = score_pair(&truth, &outcome.partition, entry.metric.unwrap_or(config.metric))?;
    let entry_index = config
        .bench
        .iter()
        .position(|e| std::ptr::eq(e, entry))
        .expect("entry from this config");
    Ok(RepResult {
        entry: entry_index,
        scores,
        runtime_s,
    })
}

pub struct DetectionOutput {
    pub partition: PartitionSequence,
    pub report: Option<FitReport>,
    pub benefit: Option<BenefitTable>,
}

pub fn run_detection(
    sequence: &SnapshotSequence,
    pipeline: &PipelineConfig,
    mode: DetectMode,
) -> Result<DetectionOutput> {
    match mode {
        DetectMode::Fixed => {
            let (partition, report) = detect_fixed_k(sequence, pipeline)?;
            Ok(DetectionOutput {
                partition,
                report: Some(report),
                benefit: None,
            })
        }
        DetectMode::Static => Ok(DetectionOutput {
            partition: detect_static(sequence, pipeline)?,
            report: None,
            benefit: None,
        }),
        DetectMode::Variable => {
            let (partition, table) = detect_variable_k(sequence, pipeline)?;
            Ok(DetectionOutput {
                partition,
                report: None,
                benefit: Some(table),
            })
        }
    }
}

/// Per-snapshot scores of `pred` against `truth`. A mask on a hard truth
/// drops the masked-out nodes from both sides before scoring.
pub fn score_pair(
    truth: &PartitionSequence,
    pred: &PartitionSequence,
    metric: MetricKind,
) -> Result<Vec<f64>> {
    if truth.len() != pred.len() {
        return Err(Error::Dimension(format!(
            "truth has {} snapshots, prediction has {}",
            truth.len(),
            pred.len()
        )));
    }
    let mask = match truth {
        PartitionSequence::Hard {
            mask: Some(mask), ..
        } => Some(mask),
        _ => None,
    };
    let truth_hard = pipeline::hard_labels(truth);
    let pred_hard = pipeline::hard_labels(pred);
    (0..truth.len())
        .map(|t| {
            if truth_hard[t].len() != pred_hard[t].len() {
                return Err(Error::Dimension(format!(
                    "snapshot {t}: truth has {} nodes, prediction has {}",
                    truth_hard[t].len(),
                    pred_hard[t].len()
                )));
            }
            let keep: Option<Vec<usize>> = mask.map(|m| {
                m[t].iter()
                    .enumerate()
                    .filter_map(|(i, &ok)| ok.then_some(i))
                    .collect()
            });
            if keep.as_ref().is_some_and(Vec::is_empty) {
                return Err(Error::Dimension(format!(
                    "snapshot {t}: the truth mask excludes every node"
                )));
            }
            match metric {
                MetricKind::Ami => {
                    let a = select(&truth_hard[t], keep.as_deref());
                    let b = select(&pred_hard[t], keep.as_deref());
                    metrics::ami(&a, &b)
                }
                MetricKind::Ecs => {
                    let a = membership_at(truth, t, keep.as_deref());
                    let b = membership_at(pred, t, keep.as_deref());
                    metrics::ecs(&a.as_membership(), &b.as_membership(), metrics::ECS_ALPHA)
                }
            }
        })
        .collect()
}

enum OwnedMembership {
    Hard(Vec<usize>),
    Soft(DMatrix<f64>),
}

impl OwnedMembership {
    fn as_membership(&self) -> Membership<'_> {
        match self {
            OwnedMembership::Hard(labels) => Membership::Hard(labels),
            OwnedMembership::Soft(matrix) => Membership::Soft(matrix),
        }
    }
}

fn membership_at(partition: &PartitionSequence, t: usize, keep: Option<&[usize]>) -> OwnedMembership {
    match partition {
        PartitionSequence::Hard { labels, .. } => {
            OwnedMembership::Hard(select(&labels[t], keep))
        }
        PartitionSequence::Soft { memberships, .. } => {
            let rows = &memberships[t];
            let picked: Vec<&Vec<f64>> = match keep {
                Some(keep) => keep.iter().map(|&i| &rows[i]).collect(),
                None => rows.iter().collect(),
            };
            let width = picked.first().map_or(0, |r| r.len());
            OwnedMembership::Soft(DMatrix::from_fn(picked.len(), width, |i, j| picked[i][j]))
        }
    }
}

fn select<T: Copy>(values: &[T], keep: Option<&[usize]>) -> Vec<T> {
    match keep {
        Some(keep) => keep.iter().map(|&i| values[i]).collect(),
        None => values.to_vec(),
    }
}

/// The sequence a detection-style command operates on: an input file when
/// configured, otherwise a fresh draw from the generator section.
fn input_sequence(config: &ExperimentConfig, seed: Option<u64>) -> Result<SnapshotSequence> {
    match &config.input {
        Some(path) => load_sequence(path),
        None => Ok(build_data(config.sbm.as_ref(), config.merge.as_ref(), seed)?.0),
    }
}

fn build_data(
    sbm: Option<&SbmConfig>,
    merge: Option<&MergeConfig>,
    override_seed: Option<u64>,
) -> Result<(SnapshotSequence, PartitionSequence, Option<PartitionSequence>)> {
    match (sbm, merge) {
        (Some(_), Some(_)) => Err(Error::Config(
            "configure either sbm or merge, not both".into(),
        )),
        (Some(cfg), None) => {
            let mut cfg = cfg.clone();
            if let Some(seed) = override_seed {
                cfg.seed = seed;
            }
            let generated = sbm::generate(&cfg)?;
            Ok((generated.sequence, generated.truth, generated.truth_receive))
        }
        (None, Some(cfg)) => {
            let mut cfg = cfg.clone();
            if let Some(seed) = override_seed {
                cfg.seed = seed;
            }
            let (sequence, truth) = sbm::gen_merge_benchmark(&cfg)?;
            Ok((sequence, truth, None))
        }
        (None, None) => Err(Error::Config(
            "this command needs an sbm or merge section (or an input file)".into(),
        )),
    }
}

fn load_sequence(path: &Path) -> Result<SnapshotSequence> {
    with_path(SnapshotSequence::load(path), path)
}

fn load_partition(path: &Path) -> Result<PartitionSequence> {
    with_path(PartitionSequence::load(path), path)
}

fn with_path<T>(result: Result<T>, path: &Path) -> Result<T> {
    result.map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        other => other,
    })
}

/// Output directory: the `--out` flag, then the config, then `$GEOCOMM_OUT`,
/// then `./out`; created if missing.
pub fn resolve_out_dir(flag: Option<&Path>, config: &ExperimentConfig) -> Result<PathBuf> {
    let dir = flag
        .map(Path::to_path_buf)
        .or_else(|| config.out_dir.clone())
        .or_else(|| std::env::var_os("GEOCOMM_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Linear-interpolation quantile of an ascending slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}
