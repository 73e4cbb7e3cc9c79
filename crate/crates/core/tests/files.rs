use std::fs;
use std::io::Write;

use fer_core::data::{format_row, load_fer2013, synthetic_split, DataError, Usage, CSV_HEADER};
use fer_core::nn::{Mode, Model, Preset};
use fer_core::store::{load_model, save_model, StoreError};
use fer_core::{Rng, Tensor};

#[test]
fn csv_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fer2013.csv");
    let training = synthetic_split(Usage::Training, 3, 0.1, 1);
    let private = synthetic_split(Usage::PrivateTest, 1, 0.1, 1);
    let mut file = fs::File::create(&path).unwrap();
    writeln!(file, "{CSV_HEADER}").unwrap();
    for s in training.samples() {
        writeln!(file, "{}", format_row(s, Usage::Training)).unwrap();
    }
    for s in private.samples() {
        writeln!(file, "{}", format_row(s, Usage::PrivateTest)).unwrap();
    }
    drop(file);

    let data = load_fer2013(&path).unwrap();
    assert_eq!(data.total(), 28);
    assert_eq!(data.training.samples(), training.samples());
    assert_eq!(data.private_test.samples(), private.samples());
    assert!(data.public_test.is_empty());
    assert_eq!(data.class_counts(), [4; 7]);
}

#[test]
fn missing_csv_names_the_path() {
    let err = load_fer2013("/nonexistent/fer2013.csv").unwrap_err();
    assert!(matches!(err, DataError::Io { .. }));
    assert!(err.to_string().contains("/nonexistent/fer2013.csv"));
}

#[test]
fn model_file_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ferm");
    let mut model = Model::preset(Preset::FerTiny, &mut Rng::new(3)).unwrap();
    let x = Tensor::sample_normal(&mut Rng::new(4), &[6, 1, 48, 48], 0.5, 0.2).unwrap();
    model.forward(&x, Mode::Train, &mut Rng::new(5)).unwrap();
    save_model(&model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded.predict(&x).unwrap(), model.predict(&x).unwrap());

    let again = dir.path().join("again.ferm");
    save_model(&loaded, &again).unwrap();
    assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
    // Only the two model files remain: no stray temporaries.
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 2);
}

#[test]
fn corrupted_files_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ferm");
    let model = Model::preset(Preset::FerTiny, &mut Rng::new(3)).unwrap();
    save_model(&model, &path).unwrap();
    let bytes = fs::read(&path).unwrap();

    let mut bad = bytes.clone();
    bad[0] ^= 0xff;
    fs::write(&path, &bad).unwrap();
    assert!(matches!(load_model(&path), Err(StoreError::BadMagic(_))));

    fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
    let err = load_model(&path).unwrap_err();
    assert!(matches!(err, StoreError::TruncatedBody { .. }), "{err}");
}

#[test]
fn unwritable_path_is_an_error() {
    let model = Model::preset(Preset::FerTiny, &mut Rng::new(3)).unwrap();
    let err = save_model(&model, "/nonexistent/dir/m.ferm").unwrap_err();
    assert!(matches!(err, StoreError::Io { .. }));
}
