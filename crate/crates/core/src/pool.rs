//! Labeled/unlabeled sample pools with an access-counting label oracle.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::linalg::Matrix;
use crate::nn::one_hot;
use crate::{Error, Result};

/// Features with fully visible labels, used for held-out evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl LabeledSet {
    pub fn new(features: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} feature rows for {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(LabeledSet {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn targets(&self) -> Matrix {
        one_hot(&self.labels, self.num_classes).expect("labels validated")
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// A pool of samples whose labels are revealed only once acquired.
///
/// Reading the label of an index that is still unlabeled goes through
/// [`Pool::peek_hidden_label`], which increments a counter. Strategies that
/// must not see hidden labels can be audited by checking
/// [`Pool::hidden_label_reads`].
#[derive(Debug)]
pub struct Pool {
    features: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
    labeled: Vec<usize>,
    unlabeled: Vec<usize>,
    hidden_reads: AtomicUsize,
}

impl Clone for Pool {
    fn clone(&self) -> Self {
        Pool {
            features: self.features.clone(),
            labels: self.labels.clone(),
            num_classes: self.num_classes,
            labeled: self.labeled.clone(),
            unlabeled: self.unlabeled.clone(),
            hidden_reads: AtomicUsize::new(self.hidden_label_reads()),
        }
    }
}

impl PartialEq for Pool {
    fn eq(&self, other: &Self) -> bool {
        self.features == other.features
            && self.labels == other.labels
            && self.num_classes == other.num_classes
            && self.labeled == other.labeled
            && self.unlabeled == other.unlabeled
    }
}

impl Pool {
    /// A pool with every sample unlabeled.
    pub fn new(features: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let set = LabeledSet::new(features, labels, num_classes)?;
        let n = set.len();
        Ok(Pool {
            features: set.features,
            labels: set.labels,
            num_classes,
            labeled: Vec::new(),
            unlabeled: (0..n).collect(),
            hidden_reads: AtomicUsize::new(0),
        })
    }

    pub fn from_labeled_set(set: LabeledSet) -> Self {
        let n = set.len();
        Pool {
            features: set.features,
            labels: set.labels,
            num_classes: set.num_classes,
            labeled: Vec::new(),
            unlabeled: (0..n).collect(),
            hidden_reads: AtomicUsize::new(0),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn input_dim(&self) -> usize {
        self.features.cols()
    }

    /// Labeled indices in acquisition order.
    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    /// Unlabeled indices, ascending.
    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    pub fn is_labeled(&self, i: usize) -> bool {
        self.unlabeled.binary_search(&i).is_err() && i < self.len()
    }

    /// Label of an already-acquired index.
    pub fn label(&self, i: usize) -> Result<usize> {
        if !self.is_labeled(i) {
            return Err(Error::InvalidArgument(format!("index {i} is not labeled")));
        }
        Ok(self.labels[i])
    }

    /// Oracle access to any label; counted when the index is still unlabeled.
    pub fn peek_hidden_label(&self, i: usize) -> usize {
        if !self.is_labeled(i) {
            self.hidden_reads.fetch_add(1, Ordering::Relaxed);
        }
        self.labels[i]
    }

    pub fn hidden_label_reads(&self) -> usize {
        self.hidden_reads.load(Ordering::Relaxed)
    }

    /// Moves `indices` from the unlabeled to the labeled set.
    pub fn acquire(&mut self, indices: &[usize]) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for &i in indices {
            if !seen.insert(i) {
                return Err(Error::InvalidArgument(format!("index {i} acquired twice")));
            }
            if self.unlabeled.binary_search(&i).is_err() {
                return Err(Error::InvalidArgument(format!(
                    "index {i} is not in the unlabeled set"
                )));
            }
        }
        self.unlabeled.retain(|i| !seen.contains(i));
        self.labeled.extend_from_slice(indices);
        Ok(())
    }

    pub fn labeled_features(&self) -> Matrix {
        self.features.select_rows(&self.labeled)
    }

    pub fn labeled_labels(&self) -> Vec<usize> {
        self.labeled.iter().map(|&i| self.labels[i]).collect()
    }

    pub fn labeled_set(&self) -> LabeledSet {
        LabeledSet {
            features: self.labeled_features(),
            labels: self.labeled_labels(),
            num_classes: self.num_classes,
        }
    }

    pub fn labeled_class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &i in &self.labeled {
            counts[self.labels[i]] += 1;
        }
        counts
    }

    /// All labels, bypassing the oracle counter. For generators, exports and tests.
    pub fn all_labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}
