//! Datasets: IDX (MNIST) files, synthetic Double-MNIST, Gaussian blobs,
//! and epoch-wise mini-batching.

mod blobs;
mod double_mnist;
mod idx;

pub use blobs::synth_gaussian_blobs;
pub use double_mnist::{synth_double_mnist, PairLabelMap, CANVAS, MAX_OFFSET, PAIR_CLASSES};
pub use idx::{
    encode_idx_images, encode_idx_labels, load_mnist_idx, parse_idx_images, parse_idx_labels, write_mnist_idx,
    IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Labeled images `[count, channels, height, width]` with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub name: String,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>, num_classes: usize, name: impl Into<String>) -> Result<Self> {
        if images.ndim() != 4 {
            return Err(Error::Dimension(format!(
                "dataset images must be [count, c, h, w], got {:?}",
                images.shape()
            )));
        }
        if images.batch() != labels.len() {
            return Err(Error::Consistency(format!(
                "{} images but {} labels",
                images.batch(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Input(format!("label {bad} outside [0, {num_classes})")));
        }
        if images.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Input("image values must lie in [0, 1]".into()));
        }
        Ok(Self {
            images,
            labels,
            num_classes,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-sample shape `[c, h, w]`.
    pub fn sample_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    /// Images and labels at `indices`, in that order.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        (
            self.images.gather_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    /// The first `n` samples (all of them if `n >= len`).
    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        let (images, labels) = self.batch(&idx);
        Self {
            images,
            labels,
            num_classes: self.num_classes,
            name: self.name.clone(),
        }
    }
}

/// One epoch: a fresh uniform shuffle of `0..len`, cut into contiguous
/// batches of `batch_size`. The last batch may be shorter.
pub fn minibatches<R: Rng + ?Sized>(len: usize, batch_size: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Input("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Endless batch stream that reshuffles at every epoch boundary.
pub struct BatchStream {
    len: usize,
    batch_size: usize,
    pending: std::vec::IntoIter<Vec<usize>>,
    epoch: usize,
}

impl BatchStream {
    pub fn new(len: usize, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Input("batch size must be at least 1".into()));
        }
        if len == 0 {
            return Err(Error::Input("cannot batch an empty dataset".into()));
        }
        Ok(Self {
            len,
            batch_size,
            pending: Vec::new().into_iter(),
            epoch: 0,
        })
    }

    pub fn next_batch<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<usize> {
        loop {
            if let Some(b) = self.pending.next() {
                return b;
            }
            self.pending = minibatches(self.len, self.batch_size, rng)
                .expect("batch size validated at construction")
                .into_iter();
            self.epoch += 1;
        }
    }

    /// Epochs started so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.len.div_ceil(self.batch_size)
    }
}
