//! FER2013 ingestion, class statistics and mini-batching.
//!
//! The CSV has the header `emotion,pixels,Usage`. Each row holds a label
//! `0..=6`, 2304 space-separated intensities `0..=255` (row-major, top-left
//! origin) and a usage tag. Pixels are scaled to `[0, 1]` by dividing by 255.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use crate::loss::ClassWeights;
use crate::rng::{streams, Rng};
use crate::tensor::Tensor;
use crate::{IMAGE_PIXELS, IMAGE_SIDE, NUM_CLASSES};

pub const CSV_HEADER: &str = "emotion,pixels,Usage";

/// Class names indexed by label.
pub const CLASS_NAMES: [&str; NUM_CLASSES] =
    ["angry", "disgust", "fear", "happy", "sad", "surprise", "neutral"];

/// Per-class image counts of the full dataset (all usages combined), by label.
pub const FER2013_CLASS_COUNTS: [usize; NUM_CLASSES] = [4953, 547, 5121, 8989, 6077, 4002, 6198];
pub const FER2013_TOTAL: usize = 35887;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line 1: expected header '{CSV_HEADER}', found '{0}'")]
    Header(String),
    #[error("line {line}: expected 3 columns, found {found}")]
    Columns { line: usize, found: usize },
    #[error("line {line}: emotion '{value}' is not a label in 0..=6")]
    Emotion { line: usize, value: String },
    #[error("line {line}: expected {IMAGE_PIXELS} pixels, found {count}")]
    PixelCount { line: usize, count: usize },
    #[error("line {line}: pixel '{value}' is not an integer in 0..=255")]
    PixelValue { line: usize, value: String },
    #[error("line {line}: unknown usage '{value}' (expected Training, PublicTest or PrivateTest)")]
    Usage { line: usize, value: String },
    #[error("the {0} split is empty")]
    EmptySplit(Usage),
    #[error("class {class} ({name}) has no samples", name = CLASS_NAMES[*class])]
    ZeroCount { class: usize },
    #[error("expected {NUM_CLASSES} class counts, got {0}")]
    CountLength(usize),
    #[error("subset fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("batch size must be at least 1")]
    InvalidBatchSize,
}

pub type Result<T> = std::result::Result<T, DataError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Usage {
    Training,
    PublicTest,
    PrivateTest,
}

impl Usage {
    pub fn token(self) -> &'static str {
        match self {
            Usage::Training => "Training",
            Usage::PublicTest => "PublicTest",
            Usage::PrivateTest => "PrivateTest",
        }
    }
}

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Usage {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "Training" => Ok(Usage::Training),
            "PublicTest" => Ok(Usage::PublicTest),
            "PrivateTest" => Ok(Usage::PrivateTest),
            _ => Err(()),
        }
    }
}

/// One 48×48 grayscale face with its label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `[1, 48, 48]`, values in `[0, 1]`.
    pub pixels: Tensor<f32>,
    pub label: usize,
}

impl Sample {
    pub fn from_bytes(bytes: &[u8], label: usize) -> Self {
        assert_eq!(bytes.len(), IMAGE_PIXELS);
        assert!(label < NUM_CLASSES);
        let data = bytes.iter().map(|&b| b as f32 / 255.0).collect();
        Self {
            pixels: Tensor::from_parts(vec![1, IMAGE_SIDE, IMAGE_SIDE], data),
            label,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .data()
            .iter()
            .map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }
}

/// Samples sharing one usage tag, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub usage: Usage,
    samples: Vec<Sample>,
}

impl DatasetSplit {
    pub fn new(usage: Usage, samples: Vec<Sample>) -> Self {
        Self { usage, samples }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fer2013 {
    pub training: DatasetSplit,
    pub public_test: DatasetSplit,
    pub private_test: DatasetSplit,
}

impl Fer2013 {
    pub fn split(&self, usage: Usage) -> &DatasetSplit {
        match usage {
            Usage::Training => &self.training,
            Usage::PublicTest => &self.public_test,
            Usage::PrivateTest => &self.private_test,
        }
    }

    pub fn total(&self) -> usize {
        self.training.len() + self.public_test.len() + self.private_test.len()
    }

    /// Per-class totals across all three splits.
    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for split in [&self.training, &self.public_test, &self.private_test] {
            for (c, n) in split.class_counts().iter().enumerate() {
                counts[c] += n;
            }
        }
        counts
    }

    /// Human-readable split and class totals.
    pub fn summary(&self) -> String {
        let mut out = format!(
            "{} images: Training {}, PublicTest {}, PrivateTest {}\n",
            self.total(),
            self.training.len(),
            self.public_test.len(),
            self.private_test.len()
        );
        for (name, n) in CLASS_NAMES.iter().zip(self.class_counts()) {
            out.push_str(&format!("  {name:<8} {n}\n"));
        }
        out
    }
}

pub fn load_fer2013(path: impl AsRef<Path>) -> Result<Fer2013> {
    let path = path.as_ref();
    let io_err = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    parse_fer2013(BufReader::new(file)).map_err(|e| match e {
        DataError::Io { source, .. } => io_err(source),
        other => other,
    })
}

pub fn parse_fer2013(reader: impl BufRead) -> Result<Fer2013> {
    let mut lines = reader.lines();
    let io_err = |source| DataError::Io {
        path: "<reader>".into(),
        source,
    };
    let header = lines.next().transpose().map_err(io_err)?.unwrap_or_default();
    if header.trim() != CSV_HEADER {
        return Err(DataError::Header(header.trim().to_string()));
    }
    let mut splits = [Vec::new(), Vec::new(), Vec::new()];
    for (i, line) in lines.enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let (usage, sample) = parse_row(&line, i + 2)?;
        splits[usage as usize].push(sample);
    }
    let [training, public_test, private_test] = splits;
    Ok(Fer2013 {
        training: DatasetSplit::new(Usage::Training, training),
        public_test: DatasetSplit::new(Usage::PublicTest, public_test),
        private_test: DatasetSplit::new(Usage::PrivateTest, private_test),
    })
}

/// Parses one data row; `line` is the 1-based line number used in errors.
pub fn parse_row(row: &str, line: usize) -> Result<(Usage, Sample)> {
    let fields: Vec<&str> = row.trim_end().split(',').collect();
    let [emotion, pixels, usage] = fields[..] else {
        return Err(DataError::Columns {
            line,
            found: fields.len(),
        });
    };
    let label = emotion
        .trim()
        .parse::<usize>()
        .ok()
        .filter(|&l| l < NUM_CLASSES)
        .ok_or_else(|| DataError::Emotion {
            line,
            value: emotion.to_string(),
        })?;
    let mut bytes = Vec::with_capacity(IMAGE_PIXELS);
    for token in pixels.split_ascii_whitespace() {
        let value = token.parse::<u8>().map_err(|_| DataError::PixelValue {
            line,
            value: token.to_string(),
        })?;
        bytes.push(value);
    }
    if bytes.len() != IMAGE_PIXELS {
        return Err(DataError::PixelCount {
            line,
            count: bytes.len(),
        });
    }
    let usage = usage.trim().parse::<Usage>().map_err(|_| DataError::Usage {
        line,
        value: usage.to_string(),
    })?;
    Ok((usage, Sample::from_bytes(&bytes, label)))
}

pub fn format_row(sample: &Sample, usage: Usage) -> String {
    let pixels: Vec<String> = sample.to_bytes().iter().map(u8::to_string).collect();
    format!("{},{},{}", sample.label, pixels.join(" "), usage.token())
}

/// `w_c = N / (K · n_c)`: inversely proportional to class frequency, scaled
/// so that the count-weighted mean weight is 1.
pub fn compute_class_weights(counts: &[usize]) -> Result<ClassWeights> {
    if counts.len() != NUM_CLASSES {
        return Err(DataError::CountLength(counts.len()));
    }
    if let Some(class) = counts.iter().position(|&n| n == 0) {
        return Err(DataError::ZeroCount { class });
    }
    let total: usize = counts.iter().sum();
    let k = counts.len() as f64;
    let weights = counts
        .iter()
        .map(|&n| total as f64 / (k * n as f64))
        .collect();
    Ok(ClassWeights::new(weights).expect("weights of positive counts are positive"))
}

/// Keeps `ceil(fraction · n_c)` samples of every class, chosen by a seeded
/// shuffle, and returns them in their original order.
pub fn stratified_subset(split: &DatasetSplit, fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(DataError::InvalidFraction(fraction));
    }
    if split.is_empty() {
        return Err(DataError::EmptySplit(split.usage));
    }
    let mut by_class: [Vec<usize>; NUM_CLASSES] = Default::default();
    for (i, s) in split.samples.iter().enumerate() {
        by_class[s.label].push(i);
    }
    let mut keep = Vec::new();
    for (class, members) in by_class.iter_mut().enumerate() {
        // The epsilon absorbs products such as 0.1 · 30 = 3.0000000000000004.
        let quota = ((fraction * members.len() as f64) - 1e-9).ceil().max(0.0) as usize;
        let quota = quota.min(members.len());
        Rng::stream(seed, &[streams::SUBSET, class as u64]).shuffle(members);
        keep.extend_from_slice(&members[..quota]);
    }
    keep.sort_unstable();
    Ok(DatasetSplit::new(
        split.usage,
        keep.into_iter().map(|i| split.samples[i].clone()).collect(),
    ))
}

/// A stacked mini-batch.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `[b, 1, 48, 48]`
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
    /// Positions of the samples within their split.
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn gather(split: &DatasetSplit, indices: &[usize]) -> Self {
        Self::gather_with(split, indices, |_, s| Ok::<_, std::convert::Infallible>(s.pixels.clone()))
            .unwrap_or_else(|never| match never {})
    }

    /// Stacks `transform(index, sample)` for every requested index.
    pub fn gather_with<E>(
        split: &DatasetSplit,
        indices: &[usize],
        mut transform: impl FnMut(usize, &Sample) -> std::result::Result<Tensor<f32>, E>,
    ) -> std::result::Result<Self, E> {
        let mut data = Vec::with_capacity(indices.len() * IMAGE_PIXELS);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            let sample = &split.samples[i];
            let image = transform(i, sample)?;
            debug_assert_eq!(image.len(), IMAGE_PIXELS);
            data.extend_from_slice(image.data());
            labels.push(sample.label);
        }
        Ok(Self {
            images: Tensor::from_parts(vec![indices.len(), 1, IMAGE_SIDE, IMAGE_SIDE], data),
            labels,
            indices: indices.to_vec(),
        })
    }
}

/// Sample order for one pass: a seeded permutation, or file order.
pub fn epoch_order(len: usize, seed: u64, shuffle: bool) -> Vec<usize> {
    if shuffle {
        Rng::stream(seed, &[streams::SHUFFLE]).permutation(len)
    } else {
        (0..len).collect()
    }
}

pub struct Batches<'a> {
    split: &'a DatasetSplit,
    order: Vec<usize>,
    batch_size: usize,
    position: usize,
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.position >= self.order.len() {
            return None;
        }
        let end = (self.position + self.batch_size).min(self.order.len());
        let batch = Batch::gather(self.split, &self.order[self.position..end]);
        self.position = end;
        Some(batch)
    }
}

/// Every sample exactly once, in batches of `batch_size` (the last may be short).
pub fn batch_iter(split: &DatasetSplit, batch_size: usize, seed: u64, shuffle: bool) -> Result<Batches<'_>> {
    if batch_size == 0 {
        return Err(DataError::InvalidBatchSize);
    }
    if split.is_empty() {
        return Err(DataError::EmptySplit(split.usage));
    }
    Ok(Batches {
        split,
        order: epoch_order(split.len(), seed, shuffle),
        batch_size,
        position: 0,
    })
}

/// Deterministic stand-in data: each class is a fixed smooth template (a few
/// Gaussian blobs, so it survives small warps) plus per-sample pixel noise.
/// Useful wherever the real dataset is unavailable.
pub fn synthetic_split(usage: Usage, per_class: usize, noise: f64, seed: u64) -> DatasetSplit {
    let templates: Vec<Vec<f64>> = (0..NUM_CLASSES)
        .map(|c| {
            let mut rng = Rng::stream(seed, &[0x7e3a, c as u64]);
            let blobs: Vec<[f64; 4]> = (0..4)
                .map(|_| {
                    let x = rng.uniform_range(10.0, 38.0);
                    let y = rng.uniform_range(10.0, 38.0);
                    let sigma = rng.uniform_range(4.0, 9.0);
                    let amp = rng.uniform_range(-0.4, 0.4);
                    [x, y, sigma, amp]
                })
                .collect();
            (0..IMAGE_PIXELS)
                .map(|i| {
                    let (r, col) = ((i / IMAGE_SIDE) as f64, (i % IMAGE_SIDE) as f64);
                    let bump: f64 = blobs
                        .iter()
                        .map(|&[x, y, s, a]| a * (-((col - x).powi(2) + (r - y).powi(2)) / (2.0 * s * s)).exp())
                        .sum();
                    (0.5 + bump).clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect();
    let mut rng = Rng::stream(seed, &[0x7e3b, usage as u64]);
    let mut samples = Vec::with_capacity(per_class * NUM_CLASSES);
    for i in 0..per_class * NUM_CLASSES {
        let label = i % NUM_CLASSES;
        let bytes: Vec<u8> = templates[label]
            .iter()
            .map(|&t| ((t + rng.normal(0.0, noise)).clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        samples.push(Sample::from_bytes(&bytes, label));
    }
    DatasetSplit::new(usage, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn row(label: usize, pixel: u8, count: usize, usage: &str) -> String {
        let pixels = vec![pixel.to_string(); count].join(" ");
        format!("{label},{pixels},{usage}")
    }

    fn csv(rows: &[String]) -> String {
        format!("{CSV_HEADER}\n{}\n", rows.join("\n"))
    }

    #[test]
    fn minimal_file() {
        let data = parse_fer2013(Cursor::new(csv(&[row(3, 0, 2304, "Training")]))).unwrap();
        assert_eq!(data.training.len(), 1);
        assert!(data.public_test.is_empty() && data.private_test.is_empty());
        let s = &data.training.samples()[0];
        assert_eq!(s.label, 3);
        assert_eq!(s.pixels.shape(), &[1, 48, 48]);
        assert!(s.pixels.data().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn rows_route_by_usage_and_normalize() {
        let text = csv(&[
            row(0, 255, 2304, "PublicTest"),
            row(6, 51, 2304, "PrivateTest"),
            row(1, 0, 2304, "Training"),
        ]);
        let data = parse_fer2013(Cursor::new(text)).unwrap();
        assert_eq!(data.total(), 3);
        assert!(data.public_test.samples()[0].pixels.data().iter().all(|&p| p == 1.0));
        assert!(data.private_test.samples()[0].pixels.data().iter().all(|&p| p == 0.2));
        assert_eq!(data.class_counts(), [1, 1, 0, 0, 0, 0, 1]);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = parse_fer2013(Cursor::new(csv(&[
            row(3, 0, 2304, "Training"),
            row(3, 0, 2303, "Training"),
        ])))
        .unwrap_err();
        assert!(matches!(err, DataError::PixelCount { line: 3, count: 2303 }), "{err}");
        assert!(err.to_string().contains("line 3"));

        let cases = [
            (row(7, 0, 2304, "Training"), "Emotion"),
            (row(1, 0, 2304, "Validation"), "Usage"),
            ("1,2,3,4".to_string(), "Columns"),
            (row(1, 0, 2304, "Training").replacen(" 0", " 256", 1), "PixelValue"),
            (row(1, 0, 2304, "Training").replacen(" 0", " -1", 1), "PixelValue"),
        ];
        for (r, kind) in cases {
            let err = parse_fer2013(Cursor::new(csv(&[r]))).unwrap_err();
            assert!(format!("{err:?}").starts_with(kind), "{kind}: {err:?}");
        }
        assert!(matches!(
            parse_fer2013(Cursor::new("label,pixels,usage\n")),
            Err(DataError::Header(_))
        ));
    }

    #[test]
    fn crlf_and_blank_lines_are_tolerated() {
        let text = format!("{CSV_HEADER}\r\n{}\r\n\r\n", row(2, 9, 2304, "Training"));
        assert_eq!(parse_fer2013(Cursor::new(text)).unwrap().training.len(), 1);
    }

    #[test]
    fn class_weight_examples() {
        assert_eq!(compute_class_weights(&[5; 7]).unwrap().as_slice(), &[1.0; 7]);
        let w = compute_class_weights(&FER2013_CLASS_COUNTS).unwrap();
        assert!((w.get(1) - 35887.0 / (7.0 * 547.0)).abs() < 1e-12);
        assert!((w.get(1) - 9.3724).abs() < 1e-4);
        assert!((w.get(3) - 0.5703).abs() < 1e-4);
        assert!(matches!(
            compute_class_weights(&[1, 2, 0, 4, 5, 6, 7]),
            Err(DataError::ZeroCount { class: 2 })
        ));
    }

    #[test]
    fn subset_identity_and_determinism() {
        let split = synthetic_split(Usage::Training, 9, 0.1, 1);
        assert_eq!(stratified_subset(&split, 1.0, 3).unwrap(), split);
        let a = stratified_subset(&split, 0.3, 3).unwrap();
        let b = stratified_subset(&split, 0.3, 3).unwrap();
        assert_eq!(a, b);
        // ceil(0.3 · 9) = 3 per class
        assert_eq!(a.class_counts(), [3; 7]);
        assert!(stratified_subset(&split, 0.0, 3).is_err());
        assert!(stratified_subset(&DatasetSplit::new(Usage::Training, vec![]), 0.5, 3).is_err());
    }

    #[test]
    fn batching() {
        let split = synthetic_split(Usage::Training, 2, 0.1, 1);
        let split = DatasetSplit::new(Usage::Training, split.samples()[..10].to_vec());
        let sizes: Vec<usize> = batch_iter(&split, 3, 0, true).unwrap().map(|b| b.labels.len()).collect();
        assert_eq!(sizes, vec![3, 3, 3, 1]);

        let ordered: Vec<usize> = batch_iter(&split, 4, 0, false)
            .unwrap()
            .flat_map(|b| b.indices)
            .collect();
        assert_eq!(ordered, (0..10).collect::<Vec<_>>());

        let a: Vec<usize> = batch_iter(&split, 4, 9, true).unwrap().flat_map(|b| b.indices).collect();
        let b: Vec<usize> = batch_iter(&split, 4, 9, true).unwrap().flat_map(|b| b.indices).collect();
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());

        assert!(batch_iter(&split, 0, 0, true).is_err());
    }

    #[test]
    fn batch_stacks_images_in_order() {
        let split = synthetic_split(Usage::Training, 1, 0.1, 4);
        let batch = Batch::gather(&split, &[2, 0]);
        assert_eq!(batch.images.shape(), &[2, 1, 48, 48]);
        assert_eq!(batch.labels, vec![2, 0]);
        assert_eq!(&batch.images.data()[..IMAGE_PIXELS], split.samples()[2].pixels.data());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn row_round_trip(label in 0usize..7, pixels in proptest::collection::vec(any::<u8>(), IMAGE_PIXELS), usage in 0usize..3) {
                let usage = [Usage::Training, Usage::PublicTest, Usage::PrivateTest][usage];
                let text = format!(
                    "{label},{},{}",
                    pixels.iter().map(u8::to_string).collect::<Vec<_>>().join(" "),
                    usage.token()
                );
                let (parsed_usage, sample) = parse_row(&text, 2).unwrap();
                prop_assert_eq!(parsed_usage, usage);
                prop_assert_eq!(format_row(&sample, usage), text);
            }

            #[test]
            fn weighted_counts_sum_to_total(counts in proptest::collection::vec(1usize..10_000, 7)) {
                let w = compute_class_weights(&counts).unwrap();
                let total: usize = counts.iter().sum();
                let weighted: f64 = counts.iter().zip(w.as_slice()).map(|(&n, &w)| n as f64 * w).sum();
                prop_assert!((weighted - total as f64).abs() <= 1e-6 * total as f64);
            }
        }
    }
}
