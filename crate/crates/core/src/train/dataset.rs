use super::TrainError;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Uniformly shaped samples with class labels, stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    sample_shape: Vec<usize>,
    sample_len: usize,
    data: Vec<T>,
    labels: Vec<usize>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(samples: &[Tensor<T>], labels: Vec<usize>) -> Result<Self, TrainError> {
        let first = samples.first().ok_or(TrainError::EmptyDataset("input"))?;
        if samples.len() != labels.len() {
            return Err(TrainError::Config(format!(
                "{} samples but {} labels",
                samples.len(),
                labels.len()
            )));
        }
        let mut data = Vec::with_capacity(first.len() * samples.len());
        for (i, s) in samples.iter().enumerate() {
            if s.shape() != first.shape() {
                return Err(TrainError::Config(format!(
                    "sample {i} has shape {:?}, expected {:?}",
                    s.shape(),
                    first.shape()
                )));
            }
            data.extend_from_slice(s.data());
        }
        Ok(Self {
            sample_shape: first.shape().to_vec(),
            sample_len: first.len(),
            data,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> Tensor<T> {
        Tensor::from_parts(
            self.sample_shape.clone(),
            self.data[i * self.sample_len..(i + 1) * self.sample_len].to_vec(),
        )
    }

    /// `[indices.len() × sample_shape]` batch.
    pub fn batch(&self, indices: &[usize]) -> Tensor<T> {
        let mut data = Vec::with_capacity(indices.len() * self.sample_len);
        for &i in indices {
            data.extend_from_slice(&self.data[i * self.sample_len..(i + 1) * self.sample_len]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(&self.sample_shape);
        Tensor::from_parts(shape, data)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            sample_shape: self.sample_shape.clone(),
            sample_len: self.sample_len,
            data: indices
                .iter()
                .flat_map(|&i| self.data[i * self.sample_len..(i + 1) * self.sample_len].iter().copied())
                .collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn check_labels(&self, n_classes: usize) -> Result<(), TrainError> {
        match self.labels.iter().find(|&&l| l >= n_classes) {
            Some(&label) => Err(TrainError::LabelOutOfRange { label, n_classes }),
            None => Ok(()),
        }
    }
}
