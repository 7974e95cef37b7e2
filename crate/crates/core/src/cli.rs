//! Command-line front end. Each subcommand is one pipeline stage reading and
//! writing files, so every intermediate can be inspected.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::accumulation::{
    bin_edges, bin_of, fit_exponential_cu, fit_linear_cu, fit_samples, fit_weight_params, score_pairs,
    write_scored_csv, ExpFit, LinearFit, ParamGrid, WeightFamily, WeightFit, WeightFunction, DEFAULT_CU_BREAKS,
};
use crate::dataset::{stratified_balance, Dataset, LATENCY_COLUMNS, N_FEATURES};
use crate::exec;
use crate::extractor::{pair_probes, read_pairs_csv, write_pairs_csv, DEFAULT_TIMEOUT_MS};
use crate::models::{
    compare_models, cross_bin_experiment, default_subsets, evaluate, feature_subset_experiment, summarize, train,
    CrossBinConfig, FeatureSubset, ForestParams, GbdtParams, Model, ModelKind, ModelParams, ReportRow, TreeParams,
};
use crate::pipeline::{
    dataset_from_scored, median, pair_samples, read_samples_csv, score_trace, write_samples_csv, PairSample,
    PipelineError,
};
use crate::simulator::{simulate, SimConfig};
use crate::trace::{read_trace, write_trace, ProbeKind, Trace};

#[derive(Debug, Parser)]
#[command(name = "latentid", version, about = "Device identification from probe-response latency")]
pub struct Cli {
    /// Seed for every randomized stage.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Multiplier on experiment sample sizes.
    #[arg(long, global = true, default_value_t = 1.0)]
    pub scale: f64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic trace and its ground truth.
    Simulate(SimulateArgs),
    /// Pair probes with responses and write device latencies.
    Extract(ExtractArgs),
    /// Accumulation score for each extracted pair.
    Score(ScoreArgs),
    /// Grid-search weight parameters maximizing latency/score correlation.
    FitWeights(FitWeightsArgs),
    /// Fit score against channel utilization and derive score bin edges.
    FitCu(FitCuArgs),
    /// Build the labelled feature table from one or more traces.
    BuildDataset(BuildDatasetArgs),
    /// Train a classifier.
    Train(TrainArgs),
    /// Evaluate a trained model, or compare model kinds on repeated splits.
    Evaluate(EvaluateArgs),
    /// Train on one score bin, test on the others.
    CrossBin(CrossBinArgs),
    /// Compare feature subsets over repeated seeded splits.
    FeatureStudy(FeatureStudyArgs),
    /// Turn experiment outputs into summary CSV files.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulator config (JSON). Without it: default devices under a CU
    /// staircase from --cu-from to --cu-to.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 90.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 0.1)]
    pub cu_from: f64,
    #[arg(long, default_value_t = 0.9)]
    pub cu_to: f64,
    #[arg(long, default_value_t = 9)]
    pub cu_steps: usize,
    /// Probe period in seconds (overrides the config).
    #[arg(long)]
    pub period: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TIMEOUT_MS)]
    pub timeout_ms: f64,
}

#[derive(Debug, Args)]
pub struct WeightArgs {
    /// Weight function JSON (as written by fit-weights); overrides the flags below.
    #[arg(long)]
    pub weight: Option<PathBuf>,
    #[arg(long, default_value = "bell")]
    pub family: String,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Pairs CSV from `extract`; paired afresh when omitted.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[command(flatten)]
    pub weight: WeightArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitWeightsArgs {
    #[arg(long, required = true)]
    pub trace: Vec<PathBuf>,
    #[arg(long, default_value = "bell")]
    pub family: String,
    /// Restrict fitting to one probe kind (tcp_lo, tcp_h, udp_lo, udp_h).
    #[arg(long)]
    pub probe_kind: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitCuArgs {
    #[arg(long, required = true)]
    pub trace: Vec<PathBuf>,
    #[command(flatten)]
    pub weight: WeightArgs,
    /// Bins file: fits and edges (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Per-pair score/CU samples for plotting.
    #[arg(long)]
    pub samples_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildDatasetArgs {
    #[arg(long, required = true)]
    pub trace: Vec<PathBuf>,
    #[command(flatten)]
    pub weight: WeightArgs,
    /// Probe period of the traces in seconds.
    #[arg(long, default_value_t = 1.0)]
    pub period: f64,
    /// Bins file from fit-cu; when given, cells are balanced per (device, bin).
    #[arg(long)]
    pub bins: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, default_value = "gbdt")]
    pub kind: String,
    /// Feature columns joined by `+` (default: all eight).
    #[arg(long)]
    pub features: Option<String>,
    #[arg(long, default_value_t = 8)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 5)]
    pub min_samples_leaf: usize,
    /// Trees (default: 100 for rf, 200 for gbdt).
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 255)]
    pub histogram_bins: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Model to score on --data; omit and pass --compare to run the comparison.
    #[arg(long, conflicts_with = "compare")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Model kinds (comma separated) to compare on repeated 80:20 splits.
    #[arg(long, required_unless_present = "model")]
    pub compare: Option<String>,
    #[arg(long, default_value_t = 30)]
    pub iterations: usize,
    /// Metrics JSON (single model) or report CSV (comparison).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CrossBinArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub bins: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Balance (device, bin) cells before running.
    #[arg(long)]
    pub balance: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeatureStudyArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Subsets separated by `;`, each a `+`-joined column list, or `latency`
    /// / `all`. Default: the built-in set.
    #[arg(long)]
    pub subsets: Option<String>,
    /// Sample sizes, comma separated (default 500..2500 step 500, scaled).
    #[arg(long)]
    pub sizes: Option<String>,
    #[arg(long, default_value_t = 30)]
    pub iterations: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Experiment report CSVs (cross-bin, feature-study, evaluate --compare).
    #[arg(long = "input")]
    pub inputs: Vec<PathBuf>,
    /// Samples CSV from fit-cu --samples-out.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Bins file, needed to bin the samples by score.
    #[arg(long)]
    pub bins: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Output of `fit-cu`: both regressions and the score bin edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinsFile {
    pub weight: WeightFunction,
    pub exponential: ExpFit,
    pub linear: LinearFit,
    pub cu_breaks: Vec<f64>,
    pub edges: Vec<f64>,
}

type Result<T> = std::result::Result<T, PipelineError>;

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::input(path, e.to_string()))
}

fn weight_from(args: &WeightArgs) -> Result<WeightFunction> {
    if let Some(p) = &args.weight {
        if let Ok(fit) = read_json::<WeightFit>(p) {
            return Ok(fit.weight);
        }
        let w: WeightFunction = read_json(p)?;
        w.validate()?;
        return Ok(w);
    }
    let family = parse_family(&args.family)?;
    Ok(match family {
        WeightFamily::Bell => WeightFunction::bell(args.sigma)?,
        WeightFamily::Gamma => WeightFunction::gamma(args.alpha, args.beta)?,
    })
}

fn usage(msg: String) -> PipelineError {
    PipelineError::Input {
        path: "arguments".into(),
        msg,
    }
}

fn parse_family(s: &str) -> Result<WeightFamily> {
    WeightFamily::parse(s).ok_or_else(|| usage(format!("--family must be bell or gamma, got {s:?}")))
}

fn parse_kind(s: &str) -> Result<ModelKind> {
    ModelKind::parse(s).ok_or_else(|| usage(format!("model kind must be dt, rf or gbdt, got {s:?}")))
}

fn parse_subset(s: &str) -> Result<FeatureSubset> {
    match s {
        "latency" => Ok(FeatureSubset::new("latency", &LATENCY_COLUMNS)),
        "all" => Ok(FeatureSubset::new("all", &(0..N_FEATURES).collect::<Vec<_>>())),
        _ => Ok(FeatureSubset::parse(s)?),
    }
}

fn model_params(args: &ModelArgs, seed: u64) -> Result<(ModelKind, ModelParams)> {
    let kind = parse_kind(&args.kind)?;
    let tree = TreeParams {
        max_depth: args.max_depth,
        min_samples_leaf: args.min_samples_leaf,
    };
    let features = match &args.features {
        Some(f) => parse_subset(f)?.columns,
        None => (0..N_FEATURES).collect(),
    };
    let params = ModelParams {
        tree,
        forest: ForestParams {
            n_trees: args.n_trees.unwrap_or(ForestParams::default().n_trees),
            feature_subsample: None,
        },
        gbdt: GbdtParams {
            tree,
            n_trees: args.n_trees.unwrap_or(GbdtParams::default().n_trees),
            learning_rate: args.learning_rate,
            histogram_bins: args.histogram_bins,
            ..GbdtParams::default()
        },
        features,
        seed,
    };
    Ok((kind, params))
}

fn load_traces(paths: &[PathBuf]) -> Result<Vec<Trace>> {
    paths.iter().map(|p| Ok(read_trace(p)?)).collect()
}

fn scaled(n: usize, scale: f64) -> usize {
    ((n as f64 * scale).round() as usize).max(1)
}

fn parse_sizes(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| usage(format!("bad size {x:?} in --sizes")))
        })
        .collect()
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(j) = cli.jobs {
        exec::set_jobs(j);
    }
    if !(cli.scale > 0.0 && cli.scale.is_finite()) {
        return Err(usage("--scale must be positive".into()));
    }
    let seed = cli.seed;
    match cli.command {
        Command::Simulate(a) => {
            let mut cfg = match &a.config {
                Some(p) => SimConfig::from_json_file(p)?,
                None => SimConfig::staircase(a.cu_from, a.cu_to, a.cu_steps, a.duration, seed),
            };
            if let Some(p) = a.period {
                cfg.probe_period_s = p;
            }
            let (trace, truth) = simulate(&cfg)?;
            write_trace(&trace, &a.out)?;
            if let Some(t) = &a.truth {
                truth.write_json(t)?;
            }
            println!(
                "simulate: {} records, {} true pairs, {} lost probes",
                trace.len(),
                truth.pairs.len(),
                truth.lost_probes.len()
            );
        }
        Command::Extract(a) => {
            let trace = read_trace(&a.trace)?;
            let pairing = pair_probes(&trace, a.timeout_ms);
            write_pairs_csv(&pairing.pairs, &a.out)?;
            println!("extract: {} pairs, {} unmatched probes", pairing.pairs.len(), pairing.unmatched.len());
        }
        Command::Score(a) => {
            let trace = read_trace(&a.trace)?;
            let w = weight_from(&a.weight)?;
            let pairs = match &a.pairs {
                Some(p) => read_pairs_csv(p, &trace)?,
                None => pair_probes(&trace, DEFAULT_TIMEOUT_MS).pairs,
            };
            let scored = score_pairs(&trace, &pairs, &w)?;
            write_scored_csv(&pairs, &scored, &a.out)?;
            println!("score: {} pairs scored with {w:?}", scored.len());
        }
        Command::FitWeights(a) => {
            let family = parse_family(&a.family)?;
            let kind = match &a.probe_kind {
                Some(k) => Some(ProbeKind::parse(k).ok_or_else(|| usage(format!("unknown probe kind {k:?}")))?),
                None => None,
            };
            let grid = ParamGrid::default_for(family);
            let mut samples = Vec::new();
            for trace in load_traces(&a.trace)? {
                let pairs: Vec<_> = pair_probes(&trace, DEFAULT_TIMEOUT_MS)
                    .pairs
                    .into_iter()
                    .filter(|p| kind.is_none_or(|k| p.probe_kind == k))
                    .collect();
                samples.extend(fit_samples(&trace, &pairs, &grid)?);
            }
            let fit = fit_weight_params(&samples, &grid)?;
            write_json(&fit, &a.out)?;
            println!("fit-weights: {:?} r={:.4} over {} pairs", fit.weight, fit.r, samples.len());
        }
        Command::FitCu(a) => {
            let w = weight_from(&a.weight)?;
            let mut samples: Vec<PairSample> = Vec::new();
            for (i, trace) in load_traces(&a.trace)?.iter().enumerate() {
                let st = score_trace(trace, &w, DEFAULT_TIMEOUT_MS)?;
                samples.extend(pair_samples(trace, &st, i)?);
            }
            let (scores, cus): (Vec<f64>, Vec<f64>) = samples.iter().map(|s| (s.score, s.cu)).unzip();
            let exponential = fit_exponential_cu(&scores, &cus)?;
            let linear = fit_linear_cu(&scores, &cus)?;
            let edges = bin_edges(&exponential, &DEFAULT_CU_BREAKS)?;
            let bins = BinsFile {
                weight: w,
                exponential,
                linear,
                cu_breaks: DEFAULT_CU_BREAKS.to_vec(),
                edges,
            };
            write_json(&bins, &a.out)?;
            if let Some(p) = &a.samples_out {
                write_samples_csv(&samples, p)?;
            }
            println!(
                "fit-cu: score = {:.4e}·exp({:.3}·cu), edges {:?}",
                exponential.a, exponential.b, bins.edges
            );
        }
        Command::BuildDataset(a) => {
            let w = weight_from(&a.weight)?;
            let mut ds = Dataset::default();
            for trace in load_traces(&a.trace)? {
                let st = score_trace(&trace, &w, DEFAULT_TIMEOUT_MS)?;
                ds.extend(dataset_from_scored(&st.pairing.pairs, &st.scored, a.period)?);
            }
            if let Some(b) = &a.bins {
                let bins: BinsFile = read_json(b)?;
                ds = stratified_balance(&ds, &bins.edges, seed)?;
            }
            ds.write_csv(&a.out)?;
            println!("build-dataset: {} rows, {} classes", ds.len(), ds.classes().len());
        }
        Command::Train(a) => {
            let ds = Dataset::read_csv(&a.data)?;
            let (kind, params) = model_params(&a.model, seed)?;
            let model = train(kind, &ds, &params)?;
            model.save(&a.out)?;
            println!(
                "train: {kind} on {} rows, {} trees, {:.3} s{}",
                ds.len(),
                model.trees.len(),
                model.train_duration_s,
                if model.degenerate { " (degenerate: no useful split)" } else { "" }
            );
        }
        Command::Evaluate(a) => {
            let ds = Dataset::read_csv(&a.data)?;
            if let Some(m) = &a.model {
                let model = Model::load(m)?;
                let metrics = evaluate(&model, &ds)?;
                write_json(&metrics, &a.out)?;
                println!("evaluate: macro-F1 {:.4} on {} rows", metrics.macro_f1, ds.len());
            } else {
                let kinds = a
                    .compare
                    .as_deref()
                    .unwrap_or("dt,rf,gbdt")
                    .split(',')
                    .map(|k| parse_kind(k.trim()))
                    .collect::<Result<Vec<_>>>()?;
                let rows = compare_models(&ds, &kinds, a.iterations, &ModelParams::default().with_seed(seed), seed)?;
                ReportRow::write_csv_file(&rows, &a.out)?;
                for k in kinds {
                    let f: Vec<f64> = rows.iter().filter(|r| r.kind == k).map(|r| r.f1).collect();
                    println!("evaluate: {k} mean macro-F1 {:.4}", f.iter().sum::<f64>() / f.len() as f64);
                }
            }
        }
        Command::CrossBin(a) => {
            let mut ds = Dataset::read_csv(&a.data)?;
            let bins: BinsFile = read_json(&a.bins)?;
            if a.balance {
                ds = stratified_balance(&ds, &bins.edges, seed)?;
            }
            let (kind, params) = model_params(&a.model, seed)?;
            let cfg = CrossBinConfig::scaled(cli.scale, kind, params);
            let report = cross_bin_experiment(&ds, &bins.edges, &cfg, seed)?;
            ReportRow::write_csv_file(&report.report_rows(kind), &a.out)?;
            println!("cross-bin: {} evaluations over {} bins", report.rows.len(), report.n_bins);
        }
        Command::FeatureStudy(a) => {
            let ds = Dataset::read_csv(&a.data)?;
            let subsets = match &a.subsets {
                Some(s) => s.split(';').map(|x| parse_subset(x.trim())).collect::<Result<Vec<_>>>()?,
                None => default_subsets(),
            };
            let sizes = match &a.sizes {
                Some(s) => parse_sizes(s)?,
                None => (1..=5).map(|k| scaled(500 * k, cli.scale)).collect(),
            };
            let (kind, params) = model_params(&a.model, seed)?;
            let (rows, summary) =
                feature_subset_experiment(&ds, &subsets, &sizes, a.iterations, kind, &params, seed)?;
            ReportRow::write_csv_file(&rows, &a.out)?;
            for s in summary {
                println!(
                    "feature-study: {:<20} size {:>6} F1 {:.4} ± {:.4}",
                    s.subset, s.size, s.mean_f1, s.std_f1
                );
            }
        }
        Command::Report(a) => {
            report(&a)?;
        }
    }
    Ok(())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

fn write_lines(path: &Path, header: &str, lines: &[String]) -> Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for l in lines {
        text.push_str(l);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

/// Writes the summary files whose inputs were supplied; returns their names.
fn report(a: &ReportArgs) -> Result<Vec<String>> {
    fs::create_dir_all(&a.out_dir).map_err(|e| PipelineError::io(&a.out_dir, e))?;
    let mut written = Vec::new();
    let mut emit = |name: &str, header: &str, lines: Vec<String>| -> Result<()> {
        if lines.is_empty() {
            return Ok(());
        }
        write_lines(&a.out_dir.join(name), header, &lines)?;
        println!("report: wrote {name}");
        written.push(name.to_string());
        Ok(())
    };

    if let Some(p) = &a.samples {
        let samples = read_samples_csv(p)?;
        // score vs CU per source level and probe kind
        let mut by_level: BTreeMap<(usize, usize), Vec<&PairSample>> = BTreeMap::new();
        for s in &samples {
            by_level.entry((s.level, s.kind.index())).or_default().push(s);
        }
        let lines = by_level
            .iter()
            .map(|((level, k), v)| {
                let cu: Vec<f64> = v.iter().map(|s| s.cu).collect();
                let sc: Vec<f64> = v.iter().map(|s| s.score).collect();
                format!("{level},{},{},{},{}", ProbeKind::ALL[*k], v.len(), mean(&cu), median(&sc))
            })
            .collect();
        emit("score_by_level.csv", "level,probe_kind,n,mean_cu,median_score", lines)?;
        // latency per device and score bin
        if let Some(b) = &a.bins {
            let bins: BinsFile = read_json(b)?;
            let mut cells: BTreeMap<(&str, usize, usize), Vec<f64>> = BTreeMap::new();
            for s in &samples {
                cells
                    .entry((s.device.as_str(), s.kind.index(), bin_of(s.score, &bins.edges)))
                    .or_default()
                    .push(s.latency_ms);
            }
            let lines = cells
                .iter()
                .map(|((d, k, bin), v)| format!("{d},{},{bin},{},{}", ProbeKind::ALL[*k], v.len(), median(v)))
                .collect();
            emit("latency_by_score_bin.csv", "device,probe_kind,bin,n,median_latency_ms", lines)?;
        }
    }

    let mut rows = Vec::new();
    for p in &a.inputs {
        rows.extend(ReportRow::read_csv_file(p)?);
    }
    let pick = |exp: &str| rows.iter().filter(|r| r.experiment == exp).cloned().collect::<Vec<_>>();

    let cross = pick("cross_bin");
    let lines = cross
        .iter()
        .map(|r| {
            let (train, test) = r.subset.split_once('>').unwrap_or((&r.subset, ""));
            format!("{},{train},{test},{},{}", r.kind, r.size, r.f1)
        })
        .collect();
    emit("cross_bin_f1.csv", "kind,train,test,size,f1", lines)?;

    let fs_rows = pick("feature_subset");
    let summary = summarize(&fs_rows);
    let kind_of = |subset: &str| fs_rows.iter().find(|r| r.subset == subset).map(|r| r.kind);
    let fmt = |s: &crate::models::SubsetSummary| {
        format!(
            "{},{},{},{},{},{}",
            kind_of(&s.subset).map_or(String::new(), |k| k.to_string()),
            s.subset,
            s.size,
            s.iterations,
            s.mean_f1,
            s.std_f1
        )
    };
    let header = "kind,subset,size,iterations,mean_f1,std_f1";
    emit("feature_subsets.csv", header, summary.iter().map(fmt).collect())?;
    emit(
        "latency_vs_all.csv",
        header,
        summary
            .iter()
            .filter(|s| s.subset == "latency" || s.subset == "all")
            .map(fmt)
            .collect(),
    )?;

    let cmp = pick("model_comparison");
    let mut lines = Vec::new();
    for k in ModelKind::ALL {
        let of: Vec<&ReportRow> = cmp.iter().filter(|r| r.kind == k).collect();
        if of.is_empty() {
            continue;
        }
        let f1: Vec<f64> = of.iter().map(|r| r.f1).collect();
        let s = summarize(&of.iter().map(|r| (*r).clone()).collect::<Vec<_>>());
        lines.push(format!(
            "{k},{},{},{},{},{}",
            f1.len(),
            mean(&f1),
            s.first().map_or(0.0, |x| x.std_f1),
            mean(&of.iter().map(|r| r.train_s).collect::<Vec<_>>()),
            mean(&of.iter().map(|r| r.infer_s).collect::<Vec<_>>()),
        ));
    }
    emit(
        "model_comparison.csv",
        "kind,iterations,mean_f1,std_f1,mean_train_s,mean_infer_s",
        lines,
    )?;
    if written.is_empty() {
        return Err(usage("report: no inputs given (use --input and/or --samples)".into()));
    }
    Ok(written)
}

/// Parses `args`, runs, and maps the outcome to an exit code: 0 on success,
/// 2 on usage errors, 1 on data errors.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
