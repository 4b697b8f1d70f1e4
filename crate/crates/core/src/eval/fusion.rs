use std::path::Path;

use super::EvalError;
use crate::tensor::argmax;

const SUM_TOLERANCE: f64 = 1e-6;

/// One instance's class probabilities and predicted label.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub label: usize,
    pub probs: Vec<f64>,
}

/// Predictions of one model (or one fusion) over a list of instances.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSet {
    n_classes: usize,
    rows: Vec<Prediction>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FusionMode {
    /// Average probability vectors, relabel by argmax.
    Mean,
    /// Majority over predicted labels; probabilities are averaged.
    Vote,
}

impl FusionMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mean" => Some(FusionMode::Mean),
            "vote" => Some(FusionMode::Vote),
            _ => None,
        }
    }
}

impl PredictionSet {
    /// Labels every row by argmax (ties to the lowest index).
    pub fn from_probabilities(ids: Vec<String>, probs: Vec<Vec<f64>>) -> Result<Self, EvalError> {
        let rows = ids
            .into_iter()
            .zip(probs)
            .map(|(id, probs)| Prediction {
                label: argmax(&probs),
                id,
                probs,
            })
            .collect();
        Self::new(rows)
    }

    /// Validates class count consistency, label range and row sums.
    pub fn new(rows: Vec<Prediction>) -> Result<Self, EvalError> {
        let n_classes = rows
            .first()
            .map(|r| r.probs.len())
            .ok_or_else(|| EvalError::Invalid("no predictions".into()))?;
        if n_classes == 0 {
            return Err(EvalError::Invalid("zero classes".into()));
        }
        for r in &rows {
            if r.probs.len() != n_classes {
                return Err(EvalError::Invalid(format!(
                    "{}: {} probabilities, expected {n_classes}",
                    r.id,
                    r.probs.len()
                )));
            }
            if r.label >= n_classes {
                return Err(EvalError::LabelOutOfRange {
                    label: r.label,
                    n_classes,
                });
            }
            let sum: f64 = r.probs.iter().sum();
            if r.probs.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(EvalError::Invalid(format!("{}: probabilities sum to {sum}", r.id)));
            }
        }
        Ok(Self { n_classes, rows })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn rows(&self) -> &[Prediction] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.label).collect()
    }

    /// Writes `id,label,prob_0,…,prob_{C−1}`.
    pub fn write_csv(&self, path: &Path) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["id".to_string(), "label".to_string()];
        header.extend((0..self.n_classes).map(|c| format!("prob_{c}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.id.clone(), r.label.to_string()];
            rec.extend(r.probs.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, EvalError> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        let n_classes = header.len().saturating_sub(2);
        let expected: Vec<String> = ["id".to_string(), "label".to_string()]
            .into_iter()
            .chain((0..n_classes).map(|c| format!("prob_{c}")))
            .collect();
        if n_classes == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(EvalError::Invalid(format!(
                "{}: header must be id,label,prob_0,…",
                path.display()
            )));
        }
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| EvalError::Invalid(format!("{} row {}: bad {what}", path.display(), i + 2));
            let label = rec[1].trim().parse().map_err(|_| bad("label"))?;
            let probs = (2..rec.len())
                .map(|c| rec[c].trim().parse::<f64>().map_err(|_| bad("probability")))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(Prediction {
                id: rec[0].to_string(),
                label,
                probs,
            });
        }
        Self::new(rows)
    }
}

/// Late fusion of several models' predictions over the same instances.
pub fn fuse_predictions(sets: &[PredictionSet], mode: FusionMode) -> Result<PredictionSet, EvalError> {
    let first = sets
        .first()
        .ok_or_else(|| EvalError::Invalid("fusion needs at least one prediction set".into()))?;
    for (k, set) in sets.iter().enumerate().skip(1) {
        if set.n_classes != first.n_classes {
            return Err(EvalError::Mismatch(format!(
                "set {k}: {} classes vs {}",
                set.n_classes, first.n_classes
            )));
        }
        let n = first.len().max(set.len());
        for i in 0..n {
            match (first.rows.get(i), set.rows.get(i)) {
                (Some(a), Some(b)) if a.id == b.id => {}
                (Some(a), _) => return Err(EvalError::Mismatch(format!("id '{}' (set {k})", a.id))),
                (None, Some(b)) => return Err(EvalError::Mismatch(format!("id '{}' (set {k})", b.id))),
                (None, None) => unreachable!(),
            }
        }
    }
    let k = sets.len() as f64;
    let c = first.n_classes;
    let rows = (0..first.len())
        .map(|i| {
            let mut probs = vec![0.0; c];
            let mut votes = vec![0usize; c];
            for set in sets {
                let row = &set.rows[i];
                probs.iter_mut().zip(&row.probs).for_each(|(a, p)| *a += p);
                votes[row.label] += 1;
            }
            probs.iter_mut().for_each(|p| *p /= k);
            let label = match mode {
                FusionMode::Mean => argmax(&probs),
                FusionMode::Vote => argmax(&votes),
            };
            Prediction {
                id: first.rows[i].id.clone(),
                label,
                probs,
            }
        })
        .collect();
    PredictionSet::new(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[(&str, &[f64])]) -> PredictionSet {
        PredictionSet::from_probabilities(
            rows.iter().map(|r| r.0.to_string()).collect(),
            rows.iter().map(|r| r.1.to_vec()).collect(),
        )
        .unwrap()
    }

    fn close(a: &PredictionSet, b: &PredictionSet) -> bool {
        a.labels() == b.labels()
            && a.rows.iter().zip(&b.rows).all(|(x, y)| {
                x.id == y.id && x.probs.iter().zip(&y.probs).all(|(p, q)| (p - q).abs() < 1e-12)
            })
    }

    #[test]
    fn identical_sets_are_fixed_points() {
        let s = set(&[("a", &[0.1, 0.9]), ("b", &[0.7, 0.3]), ("c", &[0.5, 0.5])]);
        for mode in [FusionMode::Mean, FusionMode::Vote] {
            assert!(close(&fuse_predictions(std::slice::from_ref(&s), mode).unwrap(), &s));
            assert!(close(&fuse_predictions(&[s.clone(), s.clone(), s.clone()], mode).unwrap(), &s));
        }
    }

    #[test]
    fn mean_fusion_arithmetic() {
        let a = set(&[("x", &[0.8, 0.2])]);
        let b = set(&[("x", &[0.4, 0.6])]);
        let f = fuse_predictions(&[a, b], FusionMode::Mean).unwrap();
        assert!((f.rows[0].probs[0] - 0.6).abs() < 1e-12 && (f.rows[0].probs[1] - 0.4).abs() < 1e-12);
        assert_eq!(f.rows[0].label, 0);
    }

    #[test]
    fn split_vote_goes_to_lowest_class() {
        let a = set(&[("x", &[0.1, 0.9])]);
        let b = set(&[("x", &[0.9, 0.1])]);
        let f = fuse_predictions(&[a, b], FusionMode::Vote).unwrap();
        assert_eq!(f.rows[0].label, 0);
    }

    #[test]
    fn mismatched_ids_are_named() {
        let a = set(&[("x", &[0.5, 0.5]), ("y", &[0.5, 0.5])]);
        let b = set(&[("x", &[0.5, 0.5]), ("z", &[0.5, 0.5])]);
        let err = fuse_predictions(&[a, b], FusionMode::Mean).unwrap_err();
        assert!(err.to_string().contains("'y'"), "{err}");
    }

    #[test]
    fn rejects_unnormalised_rows() {
        assert!(PredictionSet::from_probabilities(vec!["a".into()], vec![vec![0.5, 0.6]]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let s = set(&[("a/b.wav", &[0.125, 0.875]), ("c", &[1.0 / 3.0, 2.0 / 3.0])]);
        s.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("id,label,prob_0,prob_1\n"));
        assert_eq!(PredictionSet::read_csv(&path).unwrap(), s);
    }
}
