use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CANVAS: usize = 64;
pub const MAX_OFFSET: usize = CANVAS - 28;
pub const PAIR_CLASSES: usize = 55;
const DIGIT: usize = 28;
/// Largest allowed overlap of the two digit bounding boxes, in pixels.
const MAX_OVERLAP: usize = DIGIT * DIGIT / 2;

/// Unordered digit pairs to class indices: `{a, a}` maps to `a`, distinct
/// pairs `a < b` follow in lexicographic order from 10.
#[derive(Clone, Copy, Debug, Default)]
pub struct PairLabelMap;

impl PairLabelMap {
    pub fn class_of(&self, a: usize, b: usize) -> Result<usize> {
        if a > 9 || b > 9 {
            return Err(Error::Input(format!("digits ({a}, {b}) outside 0..=9")));
        }
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if lo == hi {
            return Ok(lo);
        }
        // Pairs starting with digit j < lo contribute 9 - j entries each.
        let before: usize = (0..lo).map(|j| 9 - j).sum();
        Ok(10 + before + (hi - lo - 1))
    }

    pub fn pair_of(&self, class: usize) -> Result<(usize, usize)> {
        if class >= PAIR_CLASSES {
            return Err(Error::Input(format!("class {class} outside [0, {PAIR_CLASSES})")));
        }
        if class < 10 {
            return Ok((class, class));
        }
        let mut rest = class - 10;
        for lo in 0..9 {
            let span = 9 - lo;
            if rest < span {
                return Ok((lo, lo + 1 + rest));
            }
            rest -= span;
        }
        unreachable!("class index bounded above")
    }
}

fn overlap(a: (usize, usize), b: (usize, usize)) -> usize {
    let span = |p: usize, q: usize| DIGIT.saturating_sub(p.abs_diff(q));
    span(a.0, b.0) * span(a.1, b.1)
}

/// Composes `count` 64x64 images, each the pixelwise maximum of two random
/// source digits placed at uniform offsets in `[0, 36]^2` whose bounding
/// boxes overlap by at most half a digit.
pub fn synth_double_mnist<R: Rng + ?Sized>(source: &Dataset, count: usize, rng: &mut R) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::Input("count must be positive".into()));
    }
    if source.sample_shape() != [1, DIGIT, DIGIT] {
        return Err(Error::Dimension(format!(
            "double-MNIST needs 1x28x28 sources, got {:?}",
            source.sample_shape()
        )));
    }
    if source.is_empty() {
        return Err(Error::Input("source dataset is empty".into()));
    }
    let map = PairLabelMap;
    let area = CANVAS * CANVAS;
    let mut data = vec![0.0f64; count * area];
    let mut labels = Vec::with_capacity(count);
    let src = source.images.data();
    for canvas in data.chunks_exact_mut(area) {
        let first = rng.random_range(0..source.len());
        let second = rng.random_range(0..source.len());
        let pos_a = (rng.random_range(0..=MAX_OFFSET), rng.random_range(0..=MAX_OFFSET));
        let pos_b = loop {
            let p = (rng.random_range(0..=MAX_OFFSET), rng.random_range(0..=MAX_OFFSET));
            if overlap(pos_a, p) <= MAX_OVERLAP {
                break p;
            }
        };
        for (idx, (oy, ox)) in [(first, pos_a), (second, pos_b)] {
            let digit = &src[idx * DIGIT * DIGIT..(idx + 1) * DIGIT * DIGIT];
            for y in 0..DIGIT {
                for x in 0..DIGIT {
                    let cell = &mut canvas[(oy + y) * CANVAS + ox + x];
                    *cell = (*cell).max(digit[y * DIGIT + x]);
                }
            }
        }
        labels.push(map.class_of(source.labels[first], source.labels[second])?);
    }
    let images = Tensor::from_vec(&[count, 1, CANVAS, CANVAS], data)?;
    Dataset::new(images, labels, PAIR_CLASSES, format!("double-{}", source.name))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn fake_mnist(n: usize) -> Dataset {
        let data = (0..n * 784).map(|i| ((i * 37) % 256) as f64 / 255.0).collect();
        Dataset::new(
            Tensor::from_vec(&[n, 1, 28, 28], data).unwrap(),
            (0..n).map(|i| i % 10).collect(),
            10,
            "fake",
        )
        .unwrap()
    }

    #[test]
    fn pair_map_examples_and_bijection() {
        let map = PairLabelMap;
        assert_eq!(map.class_of(3, 3).unwrap(), 3);
        assert_eq!(map.class_of(0, 9).unwrap(), 18);
        assert_eq!(map.class_of(9, 0).unwrap(), 18);

        // Enumeration oracle: equal pairs first, then a < b lexicographically.
        let mut expected = Vec::new();
        for a in 0..10 {
            expected.push((a, a));
        }
        for a in 0..10 {
            for b in a + 1..10 {
                expected.push((a, b));
            }
        }
        assert_eq!(expected.len(), PAIR_CLASSES);
        for (class, &(a, b)) in expected.iter().enumerate() {
            assert_eq!(map.class_of(a, b).unwrap(), class);
            assert_eq!(map.pair_of(class).unwrap(), (a, b));
        }
        assert!(map.class_of(10, 1).is_err());
        assert!(map.pair_of(55).is_err());
    }

    #[test]
    fn composed_images_are_valid_and_reproducible() {
        let src = fake_mnist(20);
        let a = synth_double_mnist(&src, 8, &mut stream(1, Stream::Synthesis)).unwrap();
        let b = synth_double_mnist(&src, 8, &mut stream(1, Stream::Synthesis)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sample_shape(), &[1, 64, 64]);
        assert_eq!(a.num_classes, 55);
        assert!(a.images.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(synth_double_mnist(&src, 0, &mut stream(1, Stream::Synthesis)).is_err());
    }

    #[test]
    fn overlap_bound() {
        assert_eq!(overlap((0, 0), (0, 0)), 784);
        assert_eq!(overlap((0, 0), (14, 0)), 392);
        assert_eq!(overlap((0, 0), (28, 3)), 0);
    }
}
