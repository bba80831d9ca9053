use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const SPREAD: f64 = 0.05;

/// Class `k` is centred at `0.5 + 0.05 * separation * (+/- e_{k/2})`, even
/// classes on the positive side, with isotropic noise of standard deviation
/// 0.05. Samples are stored as `[count, 1, 1, dim]`, clipped to `[0, 1]`,
/// and grouped by class.
pub fn synth_gaussian_blobs<R: Rng + ?Sized>(
    num_classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    rng: &mut R,
) -> Result<Dataset> {
    if num_classes < 2 || per_class == 0 || dim == 0 {
        return Err(Error::Input(format!(
            "need at least two classes, one sample per class and one dimension (got {num_classes}, {per_class}, {dim})"
        )));
    }
    if num_classes > 2 * dim {
        return Err(Error::Input(format!("{num_classes} classes need dimension at least {}", num_classes.div_ceil(2))));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::Input(format!("separation must be finite and non-negative, got {separation}")));
    }
    let noise = Normal::new(0.0, SPREAD).expect("positive spread");
    let count = num_classes * per_class;
    let mut data = Vec::with_capacity(count * dim);
    let mut labels = Vec::with_capacity(count);
    for k in 0..num_classes {
        let axis = k / 2;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        for _ in 0..per_class {
            for j in 0..dim {
                let centre = if j == axis { 0.5 + sign * SPREAD * separation } else { 0.5 };
                data.push((centre + noise.sample(rng)).clamp(0.0, 1.0));
            }
            labels.push(k);
        }
    }
    let images = Tensor::from_vec(&[count, 1, 1, dim], data)?;
    Dataset::new(images, labels, num_classes, "blobs")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn shape_range_and_determinism() {
        let a = synth_gaussian_blobs(4, 25, 3, 4.0, &mut stream(2, Stream::Synthesis)).unwrap();
        let b = synth_gaussian_blobs(4, 25, 3, 4.0, &mut stream(2, Stream::Synthesis)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.images.shape(), &[100, 1, 1, 3]);
        assert!(a.images.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a.labels.iter().filter(|&&l| l == 3).count(), 25);
    }

    #[test]
    fn rejects_bad_arguments() {
        let mut rng = stream(0, Stream::Synthesis);
        assert!(synth_gaussian_blobs(1, 5, 2, 1.0, &mut rng).is_err());
        assert!(synth_gaussian_blobs(5, 5, 2, 1.0, &mut rng).is_err());
        assert!(synth_gaussian_blobs(2, 5, 2, -1.0, &mut rng).is_err());
        assert!(synth_gaussian_blobs(2, 5, 2, f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn large_separation_splits_on_the_axis() {
        let ds = synth_gaussian_blobs(2, 200, 2, 10.0, &mut stream(5, Stream::Synthesis)).unwrap();
        for (row, &label) in ds.images.data().chunks(2).zip(&ds.labels) {
            assert_eq!(row[0] > 0.5, label == 0);
        }
    }
}
