use std::path::{Path, PathBuf};

use dropcurve_core::data::{load_mnist_idx, synth_double_mnist, synth_gaussian_blobs, Dataset};
use dropcurve_core::rng::{stream, Stream};

use crate::config::{DatasetKind, RunConfig};
use crate::error::{ExperimentError, Result};

/// Environment variable naming the directory with the MNIST IDX files.
pub const DATA_DIR_ENV: &str = "DROPCURVE_DATA_DIR";

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

// Synthetic sets do not depend on the run seed, so every seed and method
// sees the same data.
const TRAIN_SYNTH_SEED: u64 = 0;
const TEST_SYNTH_SEED: u64 = 1;

pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
}

/// First match of: `explicit`, `$DROPCURVE_DATA_DIR`, `./data/mnist`, and
/// the `data/mnist` directory shipped with this workspace.
pub fn resolve_data_dir(explicit: Option<&Path>) -> PathBuf {
    if let Some(dir) = explicit {
        return dir.to_path_buf();
    }
    if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
        return PathBuf::from(dir);
    }
    let local = PathBuf::from("data/mnist");
    if local.join(TRAIN_IMAGES).exists() {
        return local;
    }
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

pub fn load_mnist(dir: &Path) -> Result<Splits> {
    Ok(Splits {
        train: load_mnist_idx(dir.join(TRAIN_IMAGES), dir.join(TRAIN_LABELS))?,
        test: load_mnist_idx(dir.join(TEST_IMAGES), dir.join(TEST_LABELS))?,
    })
}

fn take(ds: Dataset, n: Option<usize>, what: &str) -> Result<Dataset> {
    match n {
        None => Ok(ds),
        Some(n) if n <= ds.len() => Ok(ds.head(n)),
        Some(n) => Err(ExperimentError::Config(format!(
            "{what} subset of {n} requested but only {} samples are available",
            ds.len()
        ))),
    }
}

/// Train and test sets for `cfg`, with subsets applied (first `n` samples).
pub fn load_splits(cfg: &RunConfig) -> Result<Splits> {
    let splits = match cfg.dataset {
        DatasetKind::Mnist => load_mnist(&resolve_data_dir(cfg.data_dir.as_deref()))?,
        DatasetKind::DoubleMnist => {
            let source = load_mnist(&resolve_data_dir(cfg.data_dir.as_deref()))?;
            Splits {
                train: synth_double_mnist(
                    &source.train,
                    cfg.double_mnist_train,
                    &mut stream(TRAIN_SYNTH_SEED, Stream::Synthesis),
                )?,
                test: synth_double_mnist(
                    &source.test,
                    cfg.double_mnist_test,
                    &mut stream(TEST_SYNTH_SEED, Stream::Synthesis),
                )?,
            }
        }
        DatasetKind::Blobs => {
            let b = &cfg.blobs;
            Splits {
                train: synth_gaussian_blobs(
                    b.classes,
                    b.per_class,
                    b.dim,
                    b.separation,
                    &mut stream(TRAIN_SYNTH_SEED, Stream::Synthesis),
                )?,
                test: synth_gaussian_blobs(
                    b.classes,
                    b.test_per_class,
                    b.dim,
                    b.separation,
                    &mut stream(TEST_SYNTH_SEED, Stream::Synthesis),
                )?,
            }
        }
    };
    Ok(Splits {
        train: take(splits.train, cfg.train_subset, "training")?,
        test: take(splits.test, cfg.test_subset, "test")?,
    })
}
