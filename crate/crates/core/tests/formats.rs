use proptest::prelude::*;
use rand::{Rng, RngCore};
use selftrain::classifier::{load_checkpoint, predict_class, save_checkpoint, train, ModelSpec, TrainConfig};
use selftrain::data::{Dataset, Example};
use selftrain::ingest::{
    augment, encode_stl10_images, encode_stl10_labels, gen_synthetic, load_csv, load_stl10, parse_stl10, read_csv,
    write_csv, AugmentSpec, SyntheticSpec, STL10_RECORD_BYTES,
};
use selftrain::seed;

#[test]
fn stl10_bytes_round_trip_exactly() {
    let mut rng = seed::rng(42);
    let n = 4;
    let mut images = vec![0u8; n * STL10_RECORD_BYTES];
    rng.fill_bytes(&mut images);
    let labels: Vec<u8> = (0..n).map(|_| rng.random_range(1..=10)).collect();
    let data = parse_stl10(&images, Some(&labels), 1000).unwrap();
    assert_eq!(data.len(), n);
    assert_eq!(data.ids().collect::<Vec<_>>(), vec![1000, 1001, 1002, 1003]);
    assert_eq!(encode_stl10_images(&data).unwrap(), images);
    assert_eq!(encode_stl10_labels(&data).unwrap(), labels);
}

#[test]
fn stl10_files_load_like_buffers() {
    let dir = tempfile::tempdir().unwrap();
    let images: Vec<u8> = (0..2 * STL10_RECORD_BYTES).map(|i| (i % 251) as u8).collect();
    std::fs::write(dir.path().join("x.bin"), &images).unwrap();
    std::fs::write(dir.path().join("y.bin"), [3u8, 10]).unwrap();
    let from_file = load_stl10(&dir.path().join("x.bin"), Some(&dir.path().join("y.bin")), 0).unwrap();
    assert_eq!(from_file, parse_stl10(&images, Some(&[3, 10]), 0).unwrap());
    assert_eq!(from_file.labels().unwrap(), vec![2, 9]);
    let unlabeled = load_stl10(&dir.path().join("x.bin"), None, 0).unwrap();
    assert!(unlabeled.iter().all(|e| e.label().is_none()));
}

#[test]
fn csv_round_trip_preserves_values() {
    let spec = SyntheticSpec {
        num_classes: 3,
        feature_dim: 5,
        n_labeled: 30,
        n_unlabeled: 20,
        n_test: 0,
        class_separation: 2.0,
        ood_fraction: 0.0,
        seed: 3,
    };
    let data = gen_synthetic(&spec).unwrap();
    let mut buf = Vec::new();
    write_csv(&data.labeled, &mut buf, true).unwrap();
    let back = read_csv(&buf[..], true, 0).unwrap();
    assert_eq!(back, data.labeled);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.csv");
    let mut file = std::fs::File::create(&path).unwrap();
    write_csv(&data.unlabeled, &mut file, false).unwrap();
    drop(file);
    let first = data.unlabeled.ids().next().unwrap();
    let back = load_csv(&path, false, first).unwrap().with_num_classes(3).unwrap();
    assert_eq!(back, data.unlabeled);
}

#[test]
fn csv_reports_ragged_rows() {
    let text = "1.0,2.0,0\n3.0,1\n";
    let err = read_csv(text.as_bytes(), true, 0).unwrap_err();
    assert!(err.to_string().contains("row 2"), "{err}");
}

#[test]
fn well_separated_synthetic_is_learnable() {
    let spec = SyntheticSpec {
        num_classes: 2,
        feature_dim: 2,
        n_labeled: 200,
        n_unlabeled: 0,
        n_test: 1000,
        class_separation: 10.0,
        ood_fraction: 0.0,
        seed: 11,
    };
    let data = gen_synthetic(&spec).unwrap();
    let model = train(
        &ModelSpec::softmax_linear(2, 2).with_seed(1),
        &data.labeled,
        &TrainConfig { epochs: 30, learning_rate: 1e-2, ..TrainConfig::default() },
        None,
    )
    .unwrap();
    let correct = data.test.iter().filter(|e| predict_class(&model, e.features()).unwrap() == e.class().unwrap()).count();
    assert!(correct as f64 / 1000.0 >= 0.99, "accuracy {}", correct as f64 / 1000.0);
}

#[test]
fn checkpoint_file_round_trip() {
    let data = Dataset::new(vec![Example::labeled(0, vec![0.1, 0.2], 1), Example::labeled(1, vec![-0.3, 0.9], 0)], 2, 2).unwrap();
    let model = train(&ModelSpec::softmax_linear(2, 2).with_seed(8), &data, &TrainConfig { epochs: 3, ..TrainConfig::default() }, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    save_checkpoint(&model, &path).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap(), model);
}

proptest! {
    #[test]
    fn augmentation_preserves_label_and_mass_bounds(seed_value in any::<u64>(), h in 1usize..6, w in 1usize..6, ch in 1usize..3) {
        let n = h * w * ch;
        let pixels: Vec<f64> = (0..n).map(|i| i as f64 + 1.0).collect();
        let ex = Example::labeled(5, pixels.clone(), 2);
        let spec = AugmentSpec { p_hflip: 0.5, p_vflip: 0.5, max_shift_frac: 0.3, image_shape: (h, w, ch) };
        let out = augment(&ex, &spec, &mut seed::rng(seed_value)).unwrap();
        prop_assert_eq!(out.label(), ex.label());
        prop_assert_eq!(out.origin_id(), 5);
        // flips permute, shifts only drop pixels to zero padding
        let total: f64 = pixels.iter().sum();
        prop_assert!(out.features().iter().sum::<f64>() <= total);
        prop_assert!(out.features().iter().all(|v| *v == 0.0 || pixels.contains(v)));
        let again = augment(&ex, &spec, &mut seed::rng(seed_value)).unwrap();
        prop_assert_eq!(out, again);
    }
}
