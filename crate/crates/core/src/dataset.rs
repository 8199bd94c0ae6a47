//! MNIST ingestion, per-digit pooling, digit-permutation class assignment,
//! and image sampling for object classes.
//!
//! Images are stored as raw bytes and normalized to [0, 1] on access. The
//! reinforcement-learning pool draws exactly 1,000 images per digit from the
//! train split; everything else is held out for the linear-probe test set.

use crate::env::ObjectClass;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const RL_IMAGES_PER_DIGIT: usize = 1000;
pub const PROBE_TEST_PER_DIGIT: usize = 4000;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: bad magic {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("{path}: truncated payload (expected {expected} bytes, found {found})")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{path}: unsupported image dimensions {rows}x{cols}")]
    BadDimensions { path: PathBuf, rows: u32, cols: u32 },
    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("digit {digit} has only {available} held-out images, {needed} needed")]
    InsufficientHeldOut {
        digit: u8,
        available: usize,
        needed: usize,
    },
    #[error("invalid permutation id {0}, expected 1..=4")]
    BadPermutation(usize),
}

/// Which MNIST file a pooled image came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

/// Compact reference to an image in a [`Dataset`]. The high bit selects the
/// split; the rest indexes into it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ImageId(pub u32);

const TEST_BIT: u32 = 1 << 31;

impl ImageId {
    pub fn new(split: Split, index: usize) -> ImageId {
        match split {
            Split::Train => ImageId(index as u32),
            Split::Test => ImageId(index as u32 | TEST_BIT),
        }
    }

    pub fn split(self) -> Split {
        if self.0 & TEST_BIT == 0 {
            Split::Train
        } else {
            Split::Test
        }
    }

    pub fn index(self) -> usize {
        (self.0 & !TEST_BIT) as usize
    }
}

/// One parsed IDX split: raw pixels plus labels.
#[derive(Debug)]
pub struct RawSplit {
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

impl RawSplit {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, index: usize) -> u8 {
        self.labels[index]
    }

    pub fn pixels(&self, index: usize) -> &[u8] {
        &self.pixels[index * IMAGE_PIXELS..(index + 1) * IMAGE_PIXELS]
    }
}

/// Full MNIST, both splits, immutable after load.
pub struct Dataset {
    train: RawSplit,
    test: RawSplit,
}

/// Paths to the four canonical IDX files.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MnistPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl MnistPaths {
    /// Standard file names under a data directory.
    pub fn in_dir(dir: &Path) -> MnistPaths {
        MnistPaths {
            train_images: dir.join("train-images-idx3-ubyte"),
            train_labels: dir.join("train-labels-idx1-ubyte"),
            test_images: dir.join("t10k-images-idx3-ubyte"),
            test_labels: dir.join("t10k-labels-idx1-ubyte"),
        }
    }

    pub fn all_exist(&self) -> bool {
        [
            &self.train_images,
            &self.train_labels,
            &self.test_images,
            &self.test_labels,
        ]
        .iter()
        .all(|p| p.exists())
    }
}

impl Dataset {
    pub fn load(paths: &MnistPaths) -> Result<Dataset, DatasetError> {
        let train = load_idx_pair(&paths.train_images, &paths.train_labels)?;
        let test = load_idx_pair(&paths.test_images, &paths.test_labels)?;
        Ok(Dataset { train, test })
    }

    pub fn split(&self, split: Split) -> &RawSplit {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    pub fn label(&self, id: ImageId) -> u8 {
        self.split(id.split()).label(id.index())
    }

    pub fn pixels(&self, id: ImageId) -> &[u8] {
        self.split(id.split()).pixels(id.index())
    }

    /// Normalized pixels, written into `out` (length [`IMAGE_PIXELS`]).
    pub fn pixels_f32(&self, id: ImageId, out: &mut [f32]) {
        for (o, &p) in out.iter_mut().zip(self.pixels(id)) {
            *o = p as f32 / 255.0;
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, DatasetError> {
    std::fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_u32_be(bytes: &[u8], offset: usize) -> u32 {
    u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ])
}

/// Parse a big-endian IDX image file (magic 0x00000803).
pub fn load_idx_images(path: &Path) -> Result<(Vec<u8>, usize), DatasetError> {
    let bytes = read_file(path)?;
    if bytes.len() < 16 {
        return Err(DatasetError::Truncated {
            path: path.to_path_buf(),
            expected: 16,
            found: bytes.len(),
        });
    }
    let magic = read_u32_be(&bytes, 0);
    if magic != IMAGES_MAGIC {
        return Err(DatasetError::BadMagic {
            path: path.to_path_buf(),
            found: magic,
            expected: IMAGES_MAGIC,
        });
    }
    let count = read_u32_be(&bytes, 4) as usize;
    let rows = read_u32_be(&bytes, 8);
    let cols = read_u32_be(&bytes, 12);
    if rows as usize != IMAGE_SIDE || cols as usize != IMAGE_SIDE {
        return Err(DatasetError::BadDimensions {
            path: path.to_path_buf(),
            rows,
            cols,
        });
    }
    let expected = 16 + count * IMAGE_PIXELS;
    if bytes.len() != expected {
        return Err(DatasetError::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    Ok((bytes[16..].to_vec(), count))
}

/// Parse a big-endian IDX label file (magic 0x00000801).
pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>, DatasetError> {
    let bytes = read_file(path)?;
    if bytes.len() < 8 {
        return Err(DatasetError::Truncated {
            path: path.to_path_buf(),
            expected: 8,
            found: bytes.len(),
        });
    }
    let magic = read_u32_be(&bytes, 0);
    if magic != LABELS_MAGIC {
        return Err(DatasetError::BadMagic {
            path: path.to_path_buf(),
            found: magic,
            expected: LABELS_MAGIC,
        });
    }
    let count = read_u32_be(&bytes, 4) as usize;
    let expected = 8 + count;
    if bytes.len() != expected {
        return Err(DatasetError::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(bytes[8..].to_vec())
}

fn load_idx_pair(images: &Path, labels: &Path) -> Result<RawSplit, DatasetError> {
    let (pixels, image_count) = load_idx_images(images)?;
    let labels = load_idx_labels(labels)?;
    if labels.len() != image_count {
        return Err(DatasetError::CountMismatch {
            images: image_count,
            labels: labels.len(),
        });
    }
    Ok(RawSplit { pixels, labels })
}

// ---------------------------------------------------------------------------
// Permutations
// ---------------------------------------------------------------------------

/// Digit pair assigned to each object class, indexed by `ObjectClass`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    pub id: u8,
    pub digits: [[u8; 2]; 4],
}

/// The four published digit assignments, ordered (none, predator, prey,
/// rotten food).
pub const PERMUTATIONS: [Permutation; 4] = [
    Permutation {
        id: 1,
        digits: [[0, 1], [6, 7], [2, 3], [4, 5]],
    },
    Permutation {
        id: 2,
        digits: [[7, 8], [5, 3], [6, 1], [9, 2]],
    },
    Permutation {
        id: 3,
        digits: [[2, 5], [6, 4], [9, 7], [8, 3]],
    },
    Permutation {
        id: 4,
        digits: [[0, 6], [8, 1], [3, 7], [2, 4]],
    },
];

impl Permutation {
    pub fn get(id: usize) -> Result<Permutation, DatasetError> {
        if (1..=4).contains(&id) {
            Ok(PERMUTATIONS[id - 1])
        } else {
            Err(DatasetError::BadPermutation(id))
        }
    }

    pub fn digits_for(&self, object: ObjectClass) -> [u8; 2] {
        self.digits[object.index()]
    }

    /// Object class for a digit, if the digit belongs to this permutation.
    pub fn class_of_digit(&self, digit: u8) -> Option<ObjectClass> {
        for object in ObjectClass::ALL {
            if self.digits[object.index()].contains(&digit) {
                return Some(object);
            }
        }
        None
    }

    /// All eight digits in class order.
    pub fn all_digits(&self) -> [u8; 8] {
        let mut out = [0u8; 8];
        for (i, pair) in self.digits.iter().enumerate() {
            out[i * 2] = pair[0];
            out[i * 2 + 1] = pair[1];
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Pools
// ---------------------------------------------------------------------------

/// The reinforcement-learning image pool: exactly 1,000 train-split images
/// per digit, drawn by seeded shuffle, plus the leftover train images kept
/// aside for the probe split.
pub struct ImagePool {
    rl: [Vec<ImageId>; 10],
    unused_train: [Vec<ImageId>; 10],
    seed: u64,
}

impl ImagePool {
    /// Deterministically select the RL pool from the train split.
    pub fn build(dataset: &Dataset, seed: u64) -> ImagePool {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0xDA7A);
        let mut by_digit: [Vec<ImageId>; 10] = Default::default();
        for i in 0..dataset.train.len() {
            let d = dataset.train.label(i) as usize;
            if d < 10 {
                by_digit[d].push(ImageId::new(Split::Train, i));
            }
        }
        let mut rl: [Vec<ImageId>; 10] = Default::default();
        let mut unused: [Vec<ImageId>; 10] = Default::default();
        for d in 0..10 {
            let mut ids = std::mem::take(&mut by_digit[d]);
            ids.shuffle(&mut rng);
            let keep = ids.len().min(RL_IMAGES_PER_DIGIT);
            unused[d] = ids.split_off(keep);
            rl[d] = ids;
        }
        ImagePool {
            rl,
            unused_train: unused,
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rl_images(&self, digit: u8) -> &[ImageId] {
        &self.rl[digit as usize]
    }

    pub fn unused_train_images(&self, digit: u8) -> &[ImageId] {
        &self.unused_train[digit as usize]
    }

    /// Sample an image for an object class: one of the class's two digits
    /// uniformly, then a uniform image from that digit's RL pool.
    pub fn sample_image<R: Rng>(
        &self,
        perm: &Permutation,
        object: ObjectClass,
        rng: &mut R,
    ) -> (ImageId, u8) {
        let pair = perm.digits_for(object);
        let digit = pair[rng.gen_range(0..2)];
        let pool = self.rl_images(digit);
        let id = pool[rng.gen_range(0..pool.len())];
        (id, digit)
    }
}

/// A labeled image reference for the probe pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeImage {
    pub id: ImageId,
    pub digit: u8,
    pub class: ObjectClass,
}

/// Train/test feature sources for the linear probe: 8,000 training images
/// (the RL pool for the permutation's eight digits) and 32,000 test images
/// (4,000 per digit, drawn from the test split first and then from train
/// images never used for reinforcement learning).
#[derive(Debug)]
pub struct ProbeSplit {
    pub train: Vec<ProbeImage>,
    pub test: Vec<ProbeImage>,
}

pub fn probe_split(
    dataset: &Dataset,
    pool: &ImagePool,
    perm: &Permutation,
) -> Result<ProbeSplit, DatasetError> {
    let mut test_by_digit: [Vec<ImageId>; 10] = Default::default();
    for i in 0..dataset.test.len() {
        let d = dataset.test.label(i) as usize;
        if d < 10 {
            test_by_digit[d].push(ImageId::new(Split::Test, i));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(pool.seed());
    rng.set_stream(0x9805);

    let mut train = Vec::with_capacity(8 * RL_IMAGES_PER_DIGIT);
    let mut test = Vec::with_capacity(8 * PROBE_TEST_PER_DIGIT);
    for object in ObjectClass::ALL {
        for digit in perm.digits_for(object) {
            for &id in pool.rl_images(digit) {
                train.push(ProbeImage {
                    id,
                    digit,
                    class: object,
                });
            }
            let mut held_out: Vec<ImageId> = test_by_digit[digit as usize].clone();
            held_out.extend_from_slice(pool.unused_train_images(digit));
            if held_out.len() < PROBE_TEST_PER_DIGIT {
                return Err(DatasetError::InsufficientHeldOut {
                    digit,
                    available: held_out.len(),
                    needed: PROBE_TEST_PER_DIGIT,
                });
            }
            held_out.shuffle(&mut rng);
            for &id in &held_out[..PROBE_TEST_PER_DIGIT] {
                test.push(ProbeImage {
                    id,
                    digit,
                    class: object,
                });
            }
        }
    }
    Ok(ProbeSplit { train, test })
}


#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_idx_images(path: &Path, images: &[[u8; IMAGE_PIXELS]]) {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&(images.len() as u32).to_be_bytes());
        bytes.extend_from_slice(&28u32.to_be_bytes());
        bytes.extend_from_slice(&28u32.to_be_bytes());
        for img in images {
            bytes.extend_from_slice(img);
        }
        std::fs::File::create(path)
            .unwrap()
            .write_all(&bytes)
            .unwrap();
    }

    fn write_idx_labels(path: &Path, labels: &[u8]) {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        bytes.extend_from_slice(labels);
        std::fs::File::create(path)
            .unwrap()
            .write_all(&bytes)
            .unwrap();
    }

    fn tiny_dataset(dir: &Path, per_digit_train: usize, per_digit_test: usize) -> MnistPaths {
        let mut train_images = Vec::new();
        let mut train_labels = Vec::new();
        for digit in 0..10u8 {
            for i in 0..per_digit_train {
                let mut img = [0u8; IMAGE_PIXELS];
                img[0] = digit * 10;
                img[1] = (i % 256) as u8;
                img[IMAGE_PIXELS - 1] = 255;
                train_images.push(img);
                train_labels.push(digit);
            }
        }
        let mut test_images = Vec::new();
        let mut test_labels = Vec::new();
        for digit in 0..10u8 {
            for i in 0..per_digit_test {
                let mut img = [0u8; IMAGE_PIXELS];
                img[2] = digit;
                img[3] = (i % 256) as u8;
                test_images.push(img);
                test_labels.push(digit);
            }
        }
        let paths = MnistPaths::in_dir(dir);
        write_idx_images(&paths.train_images, &train_images);
        write_idx_labels(&paths.train_labels, &train_labels);
        write_idx_images(&paths.test_images, &test_images);
        write_idx_labels(&paths.test_labels, &test_labels);
        paths
    }

    #[test]
    fn idx_round_trip_and_normalization() {
        let dir = tempfile::tempdir().unwrap();
        let paths = tiny_dataset(dir.path(), 3, 2);
        let dataset = Dataset::load(&paths).unwrap();
        assert_eq!(dataset.train.len(), 30);
        assert_eq!(dataset.test.len(), 20);
        let id = ImageId::new(Split::Train, 0);
        assert_eq!(dataset.label(id), 0);
        let mut buf = [0f32; IMAGE_PIXELS];
        dataset.pixels_f32(id, &mut buf);
        assert_eq!(buf[IMAGE_PIXELS - 1], 1.0); // byte 255 -> exactly 1.0
        assert_eq!(buf[5], 0.0);
    }

    #[test]
    fn labels_file_with_image_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let paths = tiny_dataset(dir.path(), 1, 1);
        // Pass the images file where labels are expected.
        let err = load_idx_labels(&paths.train_images).unwrap_err();
        match err {
            DatasetError::BadMagic { found, expected, .. } => {
                assert_eq!(found, IMAGES_MAGIC);
                assert_eq!(expected, LABELS_MAGIC);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let paths = tiny_dataset(dir.path(), 1, 1);
        let bytes = std::fs::read(&paths.train_images).unwrap();
        let cut = dir.path().join("cut");
        std::fs::write(&cut, &bytes[..bytes.len() - 7]).unwrap();
        assert!(matches!(
            load_idx_images(&cut).unwrap_err(),
            DatasetError::Truncated { .. }
        ));
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let paths = tiny_dataset(dir.path(), 2, 1);
        let short = dir.path().join("short-labels");
        write_idx_labels(&short, &[0u8; 19]);
        let err = load_idx_pair(&paths.train_images, &short).unwrap_err();
        assert!(matches!(err, DatasetError::CountMismatch { .. }));
    }

    #[test]
    fn permutations_match_published_table() {
        let p1 = Permutation::get(1).unwrap();
        assert_eq!(p1.digits_for(ObjectClass::Predator), [6, 7]);
        let p3 = Permutation::get(3).unwrap();
        assert_eq!(p3.digits_for(ObjectClass::RottenFood), [8, 3]);
        let p4 = Permutation::get(4).unwrap();
        assert_eq!(p4.digits_for(ObjectClass::None), [0, 6]);
        assert!(Permutation::get(0).is_err());
        assert!(Permutation::get(5).is_err());
    }

    #[test]
    fn permutations_use_eight_distinct_digits() {
        for perm in PERMUTATIONS {
            let mut digits = perm.all_digits().to_vec();
            digits.sort_unstable();
            digits.dedup();
            assert_eq!(digits.len(), 8, "permutation {}", perm.id);
        }
    }

    #[test]
    fn pool_selection_is_deterministic_and_sized() {
        let dir = tempfile::tempdir().unwrap();
        let paths = tiny_dataset(dir.path(), 1200, 10);
        let dataset = Dataset::load(&paths).unwrap();
        let a = ImagePool::build(&dataset, 17);
        let b = ImagePool::build(&dataset, 17);
        let c = ImagePool::build(&dataset, 18);
        for d in 0..10u8 {
            assert_eq!(a.rl_images(d).len(), RL_IMAGES_PER_DIGIT);
            assert_eq!(a.rl_images(d), b.rl_images(d));
            assert_eq!(a.unused_train_images(d).len(), 200);
        }
        assert!((0..10).any(|d| a.rl_images(d) != c.rl_images(d)));
    }

    #[test]
    fn sampled_images_match_class_digits() {
        let dir = tempfile::tempdir().unwrap();
        let paths = tiny_dataset(dir.path(), 1100, 10);
        let dataset = Dataset::load(&paths).unwrap();
        let pool = ImagePool::build(&dataset, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for perm in PERMUTATIONS {
            for object in ObjectClass::ALL {
                for _ in 0..50 {
                    let (id, digit) = pool.sample_image(&perm, object, &mut rng);
                    assert!(perm.digits_for(object).contains(&digit));
                    assert_eq!(dataset.label(id), digit);
                }
            }
        }
    }

    #[test]
    fn digit_choice_is_roughly_balanced() {
        let dir = tempfile::tempdir().unwrap();
        let paths = tiny_dataset(dir.path(), 1050, 10);
        let dataset = Dataset::load(&paths).unwrap();
        let pool = ImagePool::build(&dataset, 1);
        let perm = Permutation::get(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000;
        let mut zeros = 0usize;
        for _ in 0..n {
            let (_, digit) = pool.sample_image(&perm, ObjectClass::None, &mut rng);
            if digit == 0 {
                zeros += 1;
            }
        }
        let f = zeros as f64 / n as f64;
        assert!((0.45..=0.55).contains(&f), "digit-0 fraction {f}");
    }

    #[test]
    fn probe_split_sizes_and_disjointness() {
        let dir = tempfile::tempdir().unwrap();
        // 1,000 RL + enough held-out across train remainder and test split.
        let paths = tiny_dataset(dir.path(), 4500, 600);
        let dataset = Dataset::load(&paths).unwrap();
        let pool = ImagePool::build(&dataset, 5);
        let perm = Permutation::get(2).unwrap();
        let split = probe_split(&dataset, &pool, &perm).unwrap();
        assert_eq!(split.train.len(), 8_000);
        assert_eq!(split.test.len(), 32_000);
        let train_ids: std::collections::HashSet<u32> =
            split.train.iter().map(|p| p.id.0).collect();
        assert!(split.test.iter().all(|p| !train_ids.contains(&p.id.0)));
        for p in split.train.iter().chain(&split.test) {
            assert_eq!(dataset.label(p.id), p.digit);
            assert_eq!(perm.class_of_digit(p.digit), Some(p.class));
        }
    }

    #[test]
    fn probe_split_insufficient_held_out_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let paths = tiny_dataset(dir.path(), 1100, 100);
        let dataset = Dataset::load(&paths).unwrap();
        let pool = ImagePool::build(&dataset, 5);
        let perm = Permutation::get(1).unwrap();
        assert!(matches!(
            probe_split(&dataset, &pool, &perm).unwrap_err(),
            DatasetError::InsufficientHeldOut { .. }
        ));
    }
}
