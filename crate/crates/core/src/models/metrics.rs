//! Classification metrics and timing.

use std::time::Instant;

use serde::Serialize;

use super::{class_index, Model, ModelError};
use crate::dataset::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub classes: Vec<String>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub macro_f1: f64,
    pub train_duration_s: f64,
    /// Mean wall time per predicted row.
    pub inference_duration_s: f64,
}

impl Metrics {
    /// Derives per-class scores from a confusion matrix. Classes with no
    /// predictions get precision 0; classes with no rows get recall 0.
    pub fn from_confusion(classes: Vec<String>, confusion: Vec<Vec<usize>>) -> Metrics {
        let k = classes.len();
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let mut precision = Vec::with_capacity(k);
        let mut recall = Vec::with_capacity(k);
        let mut f1 = Vec::with_capacity(k);
        for c in 0..k {
            let tp = confusion[c][c];
            let predicted: usize = (0..k).map(|r| confusion[r][c]).sum();
            let actual: usize = confusion[c].iter().sum();
            let p = ratio(tp, predicted);
            let r = ratio(tp, actual);
            precision.push(p);
            recall.push(r);
            f1.push(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 });
        }
        let macro_f1 = if k == 0 { 0.0 } else { f1.iter().sum::<f64>() / k as f64 };
        Metrics {
            classes,
            confusion,
            precision,
            recall,
            f1,
            macro_f1,
            train_duration_s: 0.0,
            inference_duration_s: 0.0,
        }
    }
}

pub fn evaluate(model: &Model, test: &Dataset) -> Result<Metrics, ModelError> {
    if test.is_empty() {
        return Err(ModelError::EmptyTestSet);
    }
    let truth = test
        .rows
        .iter()
        .map(|r| class_index(&model.classes, &r.label))
        .collect::<Result<Vec<_>, _>>()?;
    let started = Instant::now();
    let predicted: Vec<usize> = test.rows.iter().map(|r| model.predict_index(&r.features)).collect();
    let infer = started.elapsed().as_secs_f64();
    let k = model.classes.len();
    let mut confusion = vec![vec![0; k]; k];
    for (t, p) in truth.into_iter().zip(predicted) {
        confusion[t][p] += 1;
    }
    let mut m = Metrics::from_confusion(model.classes.clone(), confusion);
    m.train_duration_s = model.train_duration_s;
    m.inference_duration_s = infer / test.len() as f64;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn perfect_predictions() {
        let m = Metrics::from_confusion(names(3), vec![vec![4, 0, 0], vec![0, 5, 0], vec![0, 0, 6]]);
        assert_eq!(m.macro_f1, 1.0);
        assert!(m.f1.iter().all(|&f| f == 1.0));
    }

    #[test]
    fn three_class_hand_computed() {
        // rows = truth, columns = prediction
        let m = Metrics::from_confusion(names(3), vec![vec![3, 1, 0], vec![1, 2, 1], vec![0, 0, 4]]);
        // class 0: p = 3/4, r = 3/4, f1 = 0.75
        // class 1: p = 2/3, r = 2/4, f1 = 2·(2/3·1/2)/(2/3+1/2) = 4/7
        // class 2: p = 4/5, r = 1, f1 = 8/9
        let expected = [0.75, 4.0 / 7.0, 8.0 / 9.0];
        for (got, want) in m.f1.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((m.macro_f1 - (0.75 + 4.0 / 7.0 + 8.0 / 9.0) / 3.0).abs() < 1e-12);
        assert_eq!(m.recall[1], 0.5);
    }

    #[test]
    fn always_same_class() {
        let n = 10;
        let confusion = (0..5)
            .map(|_| {
                let mut row = vec![0; 5];
                row[2] = n;
                row
            })
            .collect();
        let m = Metrics::from_confusion(names(5), confusion);
        assert_eq!(m.recall, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        // precision of class 2 is 10/50, so F1 = 2·0.2·1/1.2 = 1/3
        assert!((m.f1[2] - 1.0 / 3.0).abs() < 1e-12);
        assert!((m.macro_f1 - 1.0 / 15.0).abs() < 1e-12);
        for (c, row) in m.confusion.iter().enumerate() {
            assert_eq!(row.iter().sum::<usize>(), n, "class {c}");
        }
    }
}
