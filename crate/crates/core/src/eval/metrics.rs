use super::EvalError;

/// `counts[true][pred]` over `n_classes`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n_classes + pred]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.n_classes..(truth + 1) * self.n_classes]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn record(&mut self, truth: usize, pred: usize) -> Result<(), EvalError> {
        for label in [truth, pred] {
            if label >= self.n_classes {
                return Err(EvalError::LabelOutOfRange {
                    label,
                    n_classes: self.n_classes,
                });
            }
        }
        self.counts[truth * self.n_classes + pred] += 1;
        Ok(())
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.n_classes).map(<[u64]>::to_vec).collect()
    }
}

impl std::fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "true\\pred")?;
        for p in 0..self.n_classes {
            write!(f, "\t{p}")?;
        }
        writeln!(f)?;
        for t in 0..self.n_classes {
            write!(f, "{t}")?;
            for c in self.row(t) {
                write!(f, "\t{c}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

pub fn confusion_matrix(truth: &[usize], pred: &[usize], n_classes: usize) -> Result<ConfusionMatrix, EvalError> {
    if truth.len() != pred.len() || truth.is_empty() {
        return Err(EvalError::LengthMismatch {
            truth: truth.len(),
            pred: pred.len(),
        });
    }
    let mut cm = ConfusionMatrix::new(n_classes);
    for (&t, &p) in truth.iter().zip(pred) {
        cm.record(t, p)?;
    }
    Ok(cm)
}

/// Unweighted average recall in percent. Classes with no true instances
/// are left out of the mean.
pub fn uar(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    let recalls: Vec<f64> = (0..cm.n_classes())
        .filter_map(|c| {
            let support: u64 = cm.row(c).iter().sum();
            (support > 0).then(|| cm.get(c, c) as f64 / support as f64)
        })
        .collect();
    if recalls.is_empty() {
        return Err(EvalError::Undefined);
    }
    Ok(100.0 * recalls.iter().sum::<f64>() / recalls.len() as f64)
}
