//! Labelled feature rows: per probe kind, device latency followed by its
//! accumulation score.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::accumulation::bin_of;
use crate::extractor::ProbeRound;

pub const N_FEATURES: usize = 8;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "l_tcp_lo", "a_tcp_lo", "l_tcp_h", "a_tcp_h", "l_udp_lo", "a_udp_lo", "l_udp_h", "a_udp_h",
];

pub const DATASET_CSV_HEADER: &str = "device,l_tcp_lo,a_tcp_lo,l_tcp_h,a_tcp_h,l_udp_lo,a_udp_lo,l_udp_h,a_udp_h";

/// Column indices of the four latency features.
pub const LATENCY_COLUMNS: [usize; 4] = [0, 2, 4, 6];
/// Column indices of the four score features.
pub const SCORE_COLUMNS: [usize; 4] = [1, 3, 5, 7];
/// Column the score bin of a row is read from.
pub const BIN_COLUMN: usize = 1;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("round {round} of device {device} has no score for its {kind} pair")]
    MissingScore { device: String, round: u64, kind: String },
    #[error("empty (device, bin) cells: {0:?}")]
    EmptyCell(Vec<(String, usize)>),
    #[error("class {0} has fewer than two rows")]
    TooFewRows(String),
    #[error("bad row {row}: {msg}")]
    BadRow { row: usize, msg: String },
    #[error("unknown feature column {0}")]
    BadColumn(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub label: String,
    pub features: [f64; N_FEATURES],
}

impl FeatureRow {
    /// Score bin of the row, taken from its TCP-lo score.
    pub fn bin(&self, edges: &[f64]) -> usize {
        bin_of(self.features[BIN_COLUMN], edges)
    }

    fn check(&self) -> Result<(), String> {
        for &c in &LATENCY_COLUMNS {
            if !(self.features[c] > 0.0) {
                return Err(format!("{} must be positive", FEATURE_NAMES[c]));
            }
        }
        for &c in &SCORE_COLUMNS {
            if !(self.features[c] >= 0.0 && self.features[c].is_finite()) {
                return Err(format!("{} must be a finite non-negative score", FEATURE_NAMES[c]));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub rows: Vec<FeatureRow>,
}

impl Dataset {
    pub fn new(rows: Vec<FeatureRow>) -> Self {
        Dataset { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Sorted distinct labels.
    pub fn classes(&self) -> Vec<String> {
        let mut c: Vec<String> = self.rows.iter().map(|r| r.label.clone()).collect();
        c.sort();
        c.dedup();
        c
    }

    pub fn extend(&mut self, other: Dataset) {
        self.rows.extend(other.rows);
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset::new(idx.iter().map(|&i| self.rows[i].clone()).collect())
    }

    /// Row indices grouped by label, in row order.
    pub fn indices_by_class(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut m: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.rows.iter().enumerate() {
            m.entry(r.label.as_str()).or_default().push(i);
        }
        m
    }

    pub fn in_bin(&self, edges: &[f64], bin: usize) -> Dataset {
        Dataset::new(self.rows.iter().filter(|r| r.bin(edges) == bin).cloned().collect())
    }

    /// Row counts per (label, bin), including zero cells for every label.
    pub fn cell_counts(&self, edges: &[f64]) -> BTreeMap<(String, usize), usize> {
        let mut m = BTreeMap::new();
        for c in self.classes() {
            for b in 0..=edges.len() {
                m.insert((c.clone(), b), 0);
            }
        }
        for r in &self.rows {
            *m.get_mut(&(r.label.clone(), r.bin(edges))).expect("label registered") += 1;
        }
        m
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DatasetError> {
        let io_err = |source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
        writeln!(out, "{DATASET_CSV_HEADER}").map_err(io_err)?;
        for r in &self.rows {
            write!(out, "{}", r.label).map_err(io_err)?;
            for v in r.features {
                write!(out, ",{v}").map_err(io_err)?;
            }
            writeln!(out).map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }

    pub fn read_csv(path: &Path) -> Result<Dataset, DatasetError> {
        let mut reader = csv::Reader::from_path(path)?;
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header.join(",") != DATASET_CSV_HEADER {
            return Err(DatasetError::BadRow {
                row: 0,
                msg: format!("header must be `{DATASET_CSV_HEADER}`"),
            });
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let bad = |msg: String| DatasetError::BadRow { row: i + 1, msg };
            let mut features = [0.0; N_FEATURES];
            for (j, f) in features.iter_mut().enumerate() {
                *f = rec
                    .get(j + 1)
                    .ok_or_else(|| bad("missing column".into()))?
                    .parse()
                    .map_err(|e| bad(format!("{}: {e}", FEATURE_NAMES[j])))?;
            }
            let row = FeatureRow {
                label: rec[0].to_string(),
                features,
            };
            row.check().map_err(bad)?;
            rows.push(row);
        }
        Ok(Dataset::new(rows))
    }
}

/// Resolves a feature column by name.
pub fn column_index(name: &str) -> Result<usize, DatasetError> {
    FEATURE_NAMES
        .iter()
        .position(|n| *n == name)
        .ok_or_else(|| DatasetError::BadColumn(name.to_string()))
}

/// One row per round. `score_of` maps a pair's probe record index to its score.
pub fn build_feature_rows(rounds: &[ProbeRound], score_of: &HashMap<usize, f64>) -> Result<Dataset, DatasetError> {
    let mut rows = Vec::with_capacity(rounds.len());
    for round in rounds {
        let mut features = [0.0; N_FEATURES];
        for (k, pair) in round.pairs.iter().enumerate() {
            let score = score_of
                .get(&pair.probe_index)
                .copied()
                .ok_or_else(|| DatasetError::MissingScore {
                    device: round.device_id.clone(),
                    round: round.round_index,
                    kind: pair.probe_kind.to_string(),
                })?;
            features[2 * k] = pair.latency_ms();
            features[2 * k + 1] = score;
        }
        rows.push(FeatureRow {
            label: round.device_id.clone(),
            features,
        });
    }
    Ok(Dataset::new(rows))
}

/// Downsamples every (device, bin) cell, without replacement, to the size of
/// the smallest cell.
pub fn stratified_balance(ds: &Dataset, edges: &[f64], seed: u64) -> Result<Dataset, DatasetError> {
    let mut cells: BTreeMap<(String, usize), Vec<usize>> = ds
        .cell_counts(edges)
        .into_keys()
        .map(|k| (k, Vec::new()))
        .collect();
    for (i, r) in ds.rows.iter().enumerate() {
        cells
            .get_mut(&(r.label.clone(), r.bin(edges)))
            .expect("cell registered")
            .push(i);
    }
    let empty: Vec<(String, usize)> = cells
        .iter()
        .filter(|(_, v)| v.is_empty())
        .map(|(k, _)| k.clone())
        .collect();
    if !empty.is_empty() {
        return Err(DatasetError::EmptyCell(empty));
    }
    let target = cells.values().map(Vec::len).min().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::with_capacity(target * cells.len());
    for idx in cells.values_mut() {
        idx.shuffle(&mut rng);
        keep.extend_from_slice(&idx[..target]);
    }
    Ok(ds.select(&keep))
}

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

/// Class-stratified train/test partition.
pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, mut idx) in ds.indices_by_class() {
        if idx.len() < 2 {
            return Err(DatasetError::TooFewRows(label.to_string()));
        }
        idx.shuffle(&mut rng);
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    Ok((ds.select(&train), ds.select(&test)))
}

/// Seeded class-balanced sample of about `n` rows (n / classes per class, capped
/// by what each class has).
pub fn balanced_sample(ds: &Dataset, n: usize, seed: u64) -> Dataset {
    ds.select(&balanced_sample_indices(ds, n, seed))
}

/// Row indices behind [`balanced_sample`]. For a fixed seed, a smaller `n`
/// yields a per-class prefix of a larger one.
pub fn balanced_sample_indices(ds: &Dataset, n: usize, seed: u64) -> Vec<usize> {
    let by_class = ds.indices_by_class();
    let per_class = n / by_class.len().max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for mut idx in by_class.into_values() {
        idx.shuffle(&mut rng);
        keep.extend_from_slice(&idx[..per_class.min(idx.len())]);
    }
    keep
}
