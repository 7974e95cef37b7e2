//! The two evaluation protocols (cross-bin generalization and feature-subset
//! ablation) plus a plain model comparison, all emitting flat report rows.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::{evaluate, train, ModelError, ModelKind, ModelParams};
use crate::dataset::{balanced_sample, balanced_sample_indices, split, Dataset, DatasetError, DEFAULT_TEST_FRACTION, FEATURE_NAMES, LATENCY_COLUMNS, N_FEATURES};
use crate::exec;

pub const REPORT_CSV_HEADER: &str = "experiment,kind,subset,size,iteration,f1,train_s,infer_s";

/// One line of an experiment report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub experiment: String,
    pub kind: ModelKind,
    pub subset: String,
    pub size: usize,
    pub iteration: usize,
    pub f1: f64,
    pub train_s: f64,
    pub infer_s: f64,
}

impl ReportRow {
    pub fn write_csv<W: Write>(rows: &[ReportRow], out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(REPORT_CSV_HEADER.split(','))?;
        for r in rows {
            w.write_record([
                r.experiment.clone(),
                r.kind.to_string(),
                r.subset.clone(),
                r.size.to_string(),
                r.iteration.to_string(),
                r.f1.to_string(),
                r.train_s.to_string(),
                r.infer_s.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(rows: &[ReportRow], path: &Path) -> Result<(), ModelError> {
        let io = |source| ModelError::Io {
            path: path.display().to_string(),
            source,
        };
        let f = std::fs::File::create(path).map_err(io)?;
        ReportRow::write_csv(rows, std::io::BufWriter::new(f)).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => io(source),
            other => io(std::io::Error::other(format!("{other:?}"))),
        })
    }

    pub fn read_csv_file(path: &Path) -> Result<Vec<ReportRow>, ModelError> {
        let bad = |msg: String| ModelError::Params(format!("{}: {msg}", path.display()));
        let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
        let header: Vec<String> = r.headers().map_err(|e| bad(e.to_string()))?.iter().map(String::from).collect();
        if header.join(",") != REPORT_CSV_HEADER {
            return Err(bad(format!("expected header {REPORT_CSV_HEADER}")));
        }
        let mut rows = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let num = |i: usize| -> Result<f64, ModelError> {
                field(i).parse().map_err(|_| bad(format!("row {}: bad number {:?}", line + 2, field(i))))
            };
            let int = |i: usize| -> Result<usize, ModelError> {
                field(i).parse().map_err(|_| bad(format!("row {}: bad integer {:?}", line + 2, field(i))))
            };
            rows.push(ReportRow {
                experiment: field(0).to_string(),
                kind: ModelKind::parse(field(1)).ok_or_else(|| bad(format!("row {}: bad kind", line + 2)))?,
                subset: field(2).to_string(),
                size: int(3)?,
                iteration: int(4)?,
                f1: num(5)?,
                train_s: num(6)?,
                infer_s: num(7)?,
            });
        }
        Ok(rows)
    }
}

/// Training sizes `1000, 2000, …, 11000` scaled, never below 1.
pub fn train_sizes(scale: f64) -> Vec<usize> {
    (1..=11).map(|k| ((k as f64 * 1000.0 * scale).round() as usize).max(1)).collect()
}

#[derive(Debug, Clone)]
pub struct CrossBinConfig {
    pub sizes: Vec<usize>,
    /// Rows in each mixed test set (spread over the bins not trained on).
    pub test_size: usize,
    pub kind: ModelKind,
    pub params: ModelParams,
}

impl CrossBinConfig {
    pub fn scaled(scale: f64, kind: ModelKind, params: ModelParams) -> Self {
        CrossBinConfig {
            sizes: train_sizes(scale),
            test_size: ((1000.0 * scale).round() as usize).max(1),
            kind,
            params,
        }
    }
}

/// Which rows a cross-bin model was evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TestSet {
    /// The held-out rows of one bin.
    Bin(usize),
    /// The held-out rows of every bin except this one.
    OtherThan(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossBinRow {
    /// `None` for the full-range control.
    pub train_bin: Option<usize>,
    pub test: TestSet,
    pub size: usize,
    /// Rows the model actually trained on (capped by what the pool holds).
    pub n_train: usize,
    pub f1: f64,
    pub train_s: f64,
    pub infer_s: f64,
}

impl CrossBinRow {
    /// Compact label such as `b0>not_b0` or `all>b2`.
    pub fn subset(&self) -> String {
        let train = self.train_bin.map_or("all".to_string(), |b| format!("b{b}"));
        let test = match self.test {
            TestSet::Bin(b) => format!("b{b}"),
            TestSet::OtherThan(b) => format!("not_b{b}"),
        };
        format!("{train}>{test}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossBinReport {
    pub n_bins: usize,
    pub rows: Vec<CrossBinRow>,
}

impl CrossBinReport {
    pub fn f1(&self, train_bin: Option<usize>, test: TestSet, size: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.train_bin == train_bin && r.test == test && r.size == size)
            .map(|r| r.f1)
    }

    pub fn report_rows(&self, kind: ModelKind) -> Vec<ReportRow> {
        self.rows
            .iter()
            .map(|r| ReportRow {
                experiment: "cross_bin".into(),
                kind,
                subset: r.subset(),
                size: r.size,
                iteration: 0,
                f1: r.f1,
                train_s: r.train_s,
                infer_s: r.infer_s,
            })
            .collect()
    }
}

fn seed_for(seed: u64, a: u64, b: u64) -> u64 {
    seed ^ a.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Trains on one score bin at a time (and on all bins as a control) with
/// growing, nested, class-balanced training sets, and scores each model on
/// fixed held-out rows of every bin and of the bins it never saw.
pub fn cross_bin_experiment(
    ds: &Dataset,
    edges: &[f64],
    cfg: &CrossBinConfig,
    seed: u64,
) -> Result<CrossBinReport, ModelError> {
    let n_bins = edges.len() + 1;
    let cells = ds.cell_counts(edges);
    let empty: Vec<(String, usize)> = cells.into_iter().filter(|(_, n)| *n == 0).map(|(k, _)| k).collect();
    if !empty.is_empty() {
        return Err(DatasetError::EmptyCell(empty).into());
    }
    if n_bins < 2 || cfg.sizes.is_empty() || cfg.sizes.contains(&0) {
        return Err(ModelError::Params("cross-bin needs >= 2 bins and positive sizes".into()));
    }
    // each bin lends an equal share to every mixed test set it is part of
    let holdout_per_bin = cfg.test_size.div_ceil(n_bins - 1);
    let mut holdout = Vec::with_capacity(n_bins);
    let mut pools = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let rows = ds.in_bin(edges, b);
        let mut taken = vec![false; rows.len()];
        let h = balanced_sample_indices(&rows, holdout_per_bin, seed_for(seed, 1, b as u64));
        for &i in &h {
            taken[i] = true;
        }
        holdout.push(rows.select(&h));
        let rest: Vec<usize> = (0..rows.len()).filter(|&i| !taken[i]).collect();
        pools.push(rows.select(&rest));
    }
    let mixed: Vec<Dataset> = (0..n_bins)
        .map(|b| {
            let mut d = Dataset::default();
            for (t, h) in holdout.iter().enumerate() {
                if t != b {
                    d.extend(h.clone());
                }
            }
            d
        })
        .collect();

    let mut jobs: Vec<(Option<usize>, usize)> = Vec::new();
    for &size in &cfg.sizes {
        for b in 0..n_bins {
            jobs.push((Some(b), size));
        }
        jobs.push((None, size));
    }
    let results = exec::map(&jobs, |&(train_bin, size)| -> Result<Vec<CrossBinRow>, ModelError> {
        let train_set = match train_bin {
            // the same seed per bin makes the samples nested as size grows
            Some(b) => balanced_sample(&pools[b], size, seed_for(seed, 2, b as u64)),
            None => {
                let per_bin = size / n_bins;
                let mut d = Dataset::default();
                for (b, pool) in pools.iter().enumerate() {
                    d.extend(balanced_sample(pool, per_bin, seed_for(seed, 3, b as u64)));
                }
                d
            }
        };
        let model = train(cfg.kind, &train_set, &cfg.params)?;
        let mut tests: Vec<(TestSet, &Dataset)> = (0..n_bins).map(|t| (TestSet::Bin(t), &holdout[t])).collect();
        tests.extend((0..n_bins).map(|b| (TestSet::OtherThan(b), &mixed[b])));
        tests
            .into_iter()
            .map(|(test, data)| {
                let m = evaluate(&model, data)?;
                Ok(CrossBinRow {
                    train_bin,
                    test,
                    size,
                    n_train: train_set.len(),
                    f1: m.macro_f1,
                    train_s: m.train_duration_s,
                    infer_s: m.inference_duration_s,
                })
            })
            .collect()
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(CrossBinReport { n_bins, rows })
}

/// A named set of feature columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureSubset {
    pub name: String,
    pub columns: Vec<usize>,
}

impl FeatureSubset {
    pub fn new(name: &str, columns: &[usize]) -> Self {
        FeatureSubset {
            name: name.to_string(),
            columns: columns.to_vec(),
        }
    }

    /// Parses `l_udp_lo+a_udp_lo` style column lists.
    pub fn parse(spec: &str) -> Result<Self, ModelError> {
        let columns = spec
            .split('+')
            .map(|c| crate::dataset::column_index(c.trim()).map_err(|_| ModelError::BadSubset(spec.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FeatureSubset::new(spec, &columns))
    }

    fn check(&self) -> Result<(), ModelError> {
        if self.columns.is_empty() || self.columns.iter().any(|&c| c >= N_FEATURES) {
            return Err(ModelError::BadSubset(self.name.clone()));
        }
        Ok(())
    }
}

/// Latency-only, everything, and each probe kind's latency alone, score
/// alone, and both together.
pub fn default_subsets() -> Vec<FeatureSubset> {
    let mut v = vec![
        FeatureSubset::new("latency", &LATENCY_COLUMNS),
        FeatureSubset::new("all", &(0..N_FEATURES).collect::<Vec<_>>()),
    ];
    for &l in &LATENCY_COLUMNS {
        let a = l + 1;
        v.push(FeatureSubset::new(FEATURE_NAMES[l], &[l]));
        v.push(FeatureSubset::new(FEATURE_NAMES[a], &[a]));
        v.push(FeatureSubset::new(&format!("{}+{}", FEATURE_NAMES[l], FEATURE_NAMES[a]), &[l, a]));
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetSummary {
    pub subset: String,
    pub size: usize,
    pub iterations: usize,
    pub mean_f1: f64,
    /// Sample standard deviation; zero for a single iteration.
    pub std_f1: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summarize(rows: &[ReportRow]) -> Vec<SubsetSummary> {
    let mut keys: Vec<(String, usize)> = rows.iter().map(|r| (r.subset.clone(), r.size)).collect();
    keys.dedup();
    let mut seen = std::collections::HashSet::new();
    keys.retain(|k| seen.insert(k.clone()));
    keys.into_iter()
        .map(|(subset, size)| {
            let f1: Vec<f64> = rows
                .iter()
                .filter(|r| r.subset == subset && r.size == size)
                .map(|r| r.f1)
                .collect();
            let (mean_f1, std_f1) = mean_std(&f1);
            SubsetSummary {
                subset,
                size,
                iterations: f1.len(),
                mean_f1,
                std_f1,
            }
        })
        .collect()
}

/// Repeated seeded 80:20 evaluations of one model kind per feature subset
/// and sample size. Every subset sees the same samples and splits in a given
/// iteration, so differences come from the columns alone.
pub fn feature_subset_experiment(
    ds: &Dataset,
    subsets: &[FeatureSubset],
    sizes: &[usize],
    iterations: usize,
    kind: ModelKind,
    params: &ModelParams,
    seed: u64,
) -> Result<(Vec<ReportRow>, Vec<SubsetSummary>), ModelError> {
    if subsets.is_empty() {
        return Err(ModelError::BadSubset("no subsets given".into()));
    }
    for s in subsets {
        s.check()?;
    }
    if iterations == 0 || sizes.is_empty() || sizes.contains(&0) {
        return Err(ModelError::Params("need positive sizes and iterations".into()));
    }
    let mut jobs = Vec::new();
    for (si, _) in subsets.iter().enumerate() {
        for &size in sizes {
            for it in 0..iterations {
                jobs.push((si, size, it));
            }
        }
    }
    let rows = exec::map(&jobs, |&(si, size, it)| -> Result<ReportRow, ModelError> {
        let s = seed_for(seed, size as u64, it as u64);
        let sample = balanced_sample(ds, size, s);
        let (train_set, test_set) = split(&sample, DEFAULT_TEST_FRACTION, s)?;
        let p = params.clone().with_features(&subsets[si].columns).with_seed(s);
        let model = train(kind, &train_set, &p)?;
        let m = evaluate(&model, &test_set)?;
        Ok(ReportRow {
            experiment: "feature_subset".into(),
            kind,
            subset: subsets[si].name.clone(),
            size,
            iteration: it,
            f1: m.macro_f1,
            train_s: m.train_duration_s,
            infer_s: m.inference_duration_s,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let summary = summarize(&rows);
    Ok((rows, summary))
}

/// Every kind on the same seeded 80:20 splits of the full dataset.
pub fn compare_models(
    ds: &Dataset,
    kinds: &[ModelKind],
    iterations: usize,
    params: &ModelParams,
    seed: u64,
) -> Result<Vec<ReportRow>, ModelError> {
    let mut jobs = Vec::new();
    for &kind in kinds {
        for it in 0..iterations {
            jobs.push((kind, it));
        }
    }
    exec::map(&jobs, |&(kind, it)| -> Result<ReportRow, ModelError> {
        let s = seed_for(seed, 0, it as u64);
        let (train_set, test_set) = split(ds, DEFAULT_TEST_FRACTION, s)?;
        let model = train(kind, &train_set, &params.clone().with_seed(s))?;
        let m = evaluate(&model, &test_set)?;
        Ok(ReportRow {
            experiment: "model_comparison".into(),
            kind,
            subset: "all".into(),
            size: ds.len(),
            iteration: it,
            f1: m.macro_f1,
            train_s: m.train_duration_s,
            infer_s: m.inference_duration_s,
        })
    })
    .into_iter()
    .collect()
}
