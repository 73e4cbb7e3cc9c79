#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fer_core::data::{format_row, synthetic_split, Sample, Usage, CSV_HEADER};
use fer_core::nn::{Dense, Layer, Model};
use fer_core::{Tensor, IMAGE_PIXELS, NUM_CLASSES};

pub fn fer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fer"))
        .args(args)
        .env_remove("FER_DATA_DIR")
        .output()
        .expect("fer binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_csv(path: &Path, splits: &[(Usage, Vec<Sample>)]) {
    let mut text = format!("{CSV_HEADER}\n");
    for (usage, samples) in splits {
        for s in samples {
            text.push_str(&format_row(s, *usage));
            text.push('\n');
        }
    }
    fs::write(path, text).unwrap();
}

/// A small dataset file in fer2013 format: 20/4/4 samples per class.
pub fn synthetic_csv(dir: &Path) -> PathBuf {
    let path = dir.join("fer2013.csv");
    let splits: Vec<(Usage, Vec<Sample>)> = [(Usage::Training, 20), (Usage::PublicTest, 4), (Usage::PrivateTest, 4)]
        .into_iter()
        .map(|(usage, n)| (usage, synthetic_split(usage, n, 0.1, 1).samples().to_vec()))
        .collect();
    write_csv(&path, &splits);
    path
}

/// Constant gray level for class `c`.
fn level(c: usize) -> f32 {
    c as f32 / (NUM_CLASSES - 1) as f32
}

/// Every split holds flat images whose gray level encodes the class.
pub fn flat_csv(dir: &Path) -> PathBuf {
    let path = dir.join("flat.csv");
    let samples: Vec<Sample> = (0..NUM_CLASSES * 3)
        .map(|i| {
            let c = i % NUM_CLASSES;
            Sample::from_bytes(&vec![(level(c) * 255.0).round() as u8; IMAGE_PIXELS], c)
        })
        .collect();
    write_csv(
        &path,
        &[
            (Usage::Training, samples.clone()),
            (Usage::PublicTest, samples.clone()),
            (Usage::PrivateTest, samples),
        ],
    );
    path
}

/// Classifies flat images perfectly: logit_c = 2·v_c·mean(x) − v_c², which
/// is maximal for the level v_c nearest the image's mean.
pub fn flat_classifier() -> Model {
    let mut weights = Vec::with_capacity(IMAGE_PIXELS * NUM_CLASSES);
    for _ in 0..IMAGE_PIXELS {
        weights.extend((0..NUM_CLASSES).map(|c| 2.0 * level(c) / IMAGE_PIXELS as f32));
    }
    let bias = (0..NUM_CLASSES).map(|c| -level(c) * level(c)).collect();
    let dense = Dense::from_parts(
        Tensor::new(&[IMAGE_PIXELS, NUM_CLASSES], weights).unwrap(),
        Tensor::new(&[NUM_CLASSES], bias).unwrap(),
    )
    .unwrap();
    Model::new(&[1, 48, 48], vec![Layer::Flatten, Layer::Dense(dense), Layer::Softmax]).unwrap()
}
