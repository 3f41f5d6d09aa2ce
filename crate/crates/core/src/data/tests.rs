use std::path::Path;

use super::*;

fn toy(labels: Vec<i32>, d: usize) -> Dataset {
    let n = labels.len();
    let data = (0..n * d).map(|i| (i % 17) as f64).collect();
    Dataset::new(Tensor::from_vec([n, 1, 1, d], data).unwrap(), labels, Provenance::Raw).unwrap()
}

fn write_idx(dir: &Path, n: usize, h: usize, w: usize, corrupt: bool) {
    let mut img = Vec::new();
    img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    for v in [n, h, w] {
        img.extend_from_slice(&(v as u32).to_be_bytes());
    }
    img.extend((0..n * h * w).map(|i| (i % 256) as u8));
    if corrupt {
        img.pop();
    }
    std::fs::write(dir.join("images-idx3-ubyte"), img).unwrap();
    let mut lab = Vec::new();
    lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(n as u32).to_be_bytes());
    lab.extend((0..n).map(|i| (i % 10) as u8));
    std::fs::write(dir.join("labels-idx1-ubyte"), lab).unwrap();
}

#[test]
fn idx_reader() {
    let dir = tempfile::tempdir().unwrap();
    write_idx(dir.path(), 12, 3, 2, false);
    let d = load_dataset(dir.path(), DataFormat::Idx).unwrap();
    assert_eq!(d.samples.shape(), [12, 1, 3, 2]);
    assert_eq!(d.labels[11], 1);
    assert_eq!(d.samples.data()[7], 7.0 / 255.0);
    let again = load_dataset(&dir.path().join("images-idx3-ubyte"), DataFormat::Idx).unwrap();
    assert_eq!(again, d);

    write_idx(dir.path(), 12, 3, 2, true);
    assert!(matches!(
        load_dataset(dir.path(), DataFormat::Idx),
        Err(Error::Format { .. })
    ));
}

#[test]
fn idx_bad_magic_reports_offset_zero() {
    let dir = tempfile::tempdir().unwrap();
    write_idx(dir.path(), 2, 2, 2, false);
    let p = dir.path().join("images-idx3-ubyte");
    let mut b = std::fs::read(&p).unwrap();
    b[3] = 0x01;
    std::fs::write(&p, b).unwrap();
    match load_dataset(dir.path(), DataFormat::Idx) {
        Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
        other => panic!("{other:?}"),
    }
}

#[test]
fn cifar_reader() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for r in 0..3u8 {
        bytes.push(r);
        bytes.extend(std::iter::repeat_n(r * 10, 3072));
    }
    std::fs::write(dir.path().join("data_batch_1.bin"), &bytes).unwrap();
    std::fs::write(dir.path().join("data_batch_2.bin"), &bytes[..CIFAR_RECORD]).unwrap();
    std::fs::write(dir.path().join("test_batch.bin"), &bytes).unwrap();
    let d = load_dataset(dir.path(), DataFormat::CifarBinary).unwrap();
    assert_eq!(d.samples.shape(), [4, 3, 32, 32]);
    assert_eq!(d.labels, vec![0, 1, 2, 0]);
    assert_eq!(d.samples.sample(2)[3071], 20.0 / 255.0);

    std::fs::write(dir.path().join("bad.bin"), &bytes[..100]).unwrap();
    assert!(load_dataset(&dir.path().join("bad.bin"), DataFormat::CifarBinary).is_err());
}

#[test]
fn csv_reader_with_and_without_header() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("h.csv");
    std::fs::write(&p, "a,b,class\n1.5,2,0\n3,4,1\n").unwrap();
    let d = load_csv(&p).unwrap();
    assert_eq!(d.samples.shape(), [2, 1, 1, 2]);
    assert_eq!(d.labels, vec![0, 1]);
    assert!(d.is_tabular());
    std::fs::write(&p, "1.5,2,0\n3,4,1\n").unwrap();
    assert_eq!(load_csv(&p).unwrap().samples, d.samples);
    std::fs::write(&p, "1,2,0\n3,x,1\n").unwrap();
    assert!(matches!(load_csv(&p), Err(Error::Format { .. })));
    std::fs::write(&p, "1,2,0\n3,1\n").unwrap();
    assert!(load_csv(&p).is_err());
}

#[test]
fn qkds_round_trip_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let d = Dataset::new(
        Tensor::from_vec([2, 3, 2, 2], (0..24).map(|i| f64::from(i as f32 * 0.1f32)).collect()).unwrap(),
        vec![1, -1],
        Provenance::Raw,
    )
    .unwrap();
    let p = dir.path().join("x.qkds");
    write_qkds(&d, &p).unwrap();
    let back = read_qkds(&p).unwrap();
    assert_eq!(back, d);

    let (scaled, _) = preprocess(
        &back,
        &PreprocessOptions {
            minmax: true,
            binary_classes: None,
        },
    )
    .unwrap();
    write_qkds(&scaled, &p).unwrap();
    let again = read_qkds(&p).unwrap();
    assert_eq!(again.labels, scaled.labels);
    for (a, b) in again.samples.data().iter().zip(scaled.samples.data()) {
        assert_eq!(*a, f64::from(*b as f32));
    }

    let bytes = std::fs::read(&p).unwrap();
    assert!(decode_qkds(&bytes[..bytes.len() - 1], &p).is_err());
    assert!(decode_qkds(b"QKDS2", &p).is_err());
}

#[test]
fn converter_reads_dumps() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.bin"), [0u8, 255, 51, 102]).unwrap();
    std::fs::write(dir.path().join("b.bin"), [255u8, 0, 0, 0]).unwrap();
    std::fs::write(dir.path().join("labels.csv"), "file,label\na.bin,1\nb.bin,-1\n").unwrap();
    let d = convert_dumps(dir.path(), [1, 2, 2], DumpType::U8).unwrap();
    assert_eq!(d.labels, vec![1, -1]);
    assert_eq!(d.samples.sample(0), &[0.0, 1.0, 0.2, 0.4]);
    assert!(convert_dumps(dir.path(), [1, 3, 2], DumpType::U8).is_err());

    let f: Vec<u8> = [0.5f32, -1.0].iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(dir.path().join("a.bin"), &f).unwrap();
    std::fs::write(dir.path().join("b.bin"), &f).unwrap();
    let d = convert_dumps(dir.path(), [2, 1, 1], DumpType::F32).unwrap();
    assert_eq!(d.samples.sample(1), &[0.5, -1.0]);
}

#[test]
fn minmax_rules() {
    let d = Dataset::new(
        Tensor::from_vec([3, 1, 1, 2], vec![2.0, 5.0, 4.0, 5.0, 6.0, 5.0]).unwrap(),
        vec![1, 1, -1],
        Provenance::Htru2,
    )
    .unwrap();
    let (s, scaler) = preprocess(
        &d,
        &PreprocessOptions {
            minmax: true,
            binary_classes: None,
        },
    )
    .unwrap();
    let col0: Vec<f64> = (0..3).map(|i| s.samples.sample(i)[0]).collect();
    let col1: Vec<f64> = (0..3).map(|i| s.samples.sample(i)[1]).collect();
    assert_eq!(col0, vec![0.0, 0.5, 1.0]);
    assert_eq!(col1, vec![0.0, 0.0, 0.0]);

    // test values outside the training range are not clipped
    let test = Dataset::new(
        Tensor::from_vec([1, 1, 1, 2], vec![8.0, 5.0]).unwrap(),
        vec![1],
        Provenance::Htru2,
    )
    .unwrap();
    assert_eq!(scaler.unwrap().transform(&test).unwrap().samples.data()[0], 1.5);
}

#[test]
fn images_scale_per_channel() {
    let mut data = vec![0.0; 2 * 2 * 4];
    data[0] = 0.2;
    data[3] = 0.6; // channel 0 of sample 0
    data[4] = 0.5;
    let d = Dataset::new(
        Tensor::from_vec([2, 2, 2, 2], data).unwrap(),
        vec![1, -1],
        Provenance::Htru1,
    )
    .unwrap();
    let s = MinMaxScaler::fit(&d).unwrap();
    assert!(s.per_channel);
    assert_eq!(s.max, vec![0.6, 0.5]);
    let t = s.transform(&d).unwrap();
    assert_eq!(t.samples.sample(0)[3], 1.0);
    assert_eq!(t.samples.sample(0)[4], 1.0);
}

#[test]
fn binary_selection() {
    let d = toy(vec![0, 1, 2, 1, 0, 7], 2);
    let b = select_binary(&d, (0, 1)).unwrap();
    assert_eq!(b.labels, vec![1, -1, -1, 1]);
    assert_eq!(b.source_indices, vec![0, 1, 3, 4]);
    assert!(select_binary(&d, (0, 5)).is_err());
    assert!(d.binary_labels().is_err());
    assert_eq!(b.binary_labels().unwrap(), vec![1, -1, -1, 1]);
}

#[test]
fn largest_remainder_quotas() {
    let counts = BTreeMap::from([(-1, 1196), (1, 58_804)]);
    let q = stratified_counts(&counts, 500);
    assert_eq!(q[&-1], 10);
    assert_eq!(q[&1], 490);
    let q = stratified_counts(&BTreeMap::from([(-1, 30), (1, 30)]), 500);
    assert_eq!((q[&-1], q[&1]), (250, 250));
    let q = stratified_counts(&BTreeMap::from([(-1, 1), (1, 1)]), 3);
    assert_eq!(q.values().sum::<usize>(), 3);
}

#[test]
fn subsample_is_stratified_disjoint_and_seeded() {
    let mut labels = vec![1; 980];
    labels.extend(vec![-1; 20]);
    let d = toy(labels, 3);
    let plan = SamplingPlan {
        seed: 5,
        ..Default::default()
    };
    let (train, test) = stratified_subsample(&d, None, &plan).unwrap();
    assert_eq!(train.len(), 500);
    assert_eq!(train.class_counts()[&-1], 10);
    assert_eq!(test.class_counts()[&-1], 10);
    assert!((train.anomaly_ratio() - d.anomaly_ratio()).abs() < 1.0 / 500.0);
    let mut all: Vec<usize> = train
        .source_indices
        .iter()
        .chain(&test.source_indices)
        .copied()
        .collect();
    all.sort_unstable();
    all.dedup();
    assert_eq!(all.len(), 1000);

    let (again, _) = stratified_subsample(&d, None, &plan).unwrap();
    assert_eq!(again.source_indices, train.source_indices);
    let (other, _) = stratified_subsample(&d, None, &SamplingPlan { seed: 6, ..plan }).unwrap();
    assert_ne!(other.source_indices, train.source_indices);

    let big = SamplingPlan {
        train_size: 900,
        test_size: 200,
        ..plan
    };
    let err = stratified_subsample(&d, None, &big).unwrap_err().to_string();
    assert!(err.contains("needs"), "{err}");
}

#[test]
fn subsample_from_separate_test_partition() {
    let train_src = toy(vec![1, -1, 1, -1, 1, -1, 1, -1], 2);
    let test_src = toy(vec![-1, 1, 1, -1], 2);
    let plan = SamplingPlan {
        train_size: 4,
        test_size: 4,
        stratified: true,
        seed: 1,
    };
    let (train, test) = stratified_subsample(&train_src, Some(&test_src), &plan).unwrap();
    assert_eq!(train.len(), 4);
    let mut idx = test.source_indices.clone();
    idx.sort_unstable();
    assert_eq!(idx, vec![0, 1, 2, 3]);

    let uniform = SamplingPlan {
        stratified: false,
        ..plan
    };
    let (t, _) = stratified_subsample(&train_src, Some(&test_src), &uniform).unwrap();
    assert_eq!(t.len(), 4);
}

#[test]
fn normal_only_filter() {
    let mut labels = vec![1; 490];
    labels.extend(vec![-1; 10]);
    let (f, removed) = anomaly_train_filter(&toy(labels, 2)).unwrap();
    assert_eq!((f.len(), removed), (490, 10));
    assert!(f.labels.iter().all(|&l| l == 1));
    let all_normal = toy(vec![1, 1, 1], 2);
    assert_eq!(anomaly_train_filter(&all_normal).unwrap().0, all_normal);
    assert!(anomaly_train_filter(&toy(vec![-1, -1], 2)).is_err());
}

#[test]
fn bundled_mnist_loads() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist");
    if !dir.is_dir() {
        return;
    }
    let d = load_dataset(&dir, DataFormat::Idx).unwrap();
    assert_eq!(d.samples.sample_shape(), [1, 28, 28]);
    let b = select_binary(&d, (0, 1)).unwrap();
    assert!(b.len() > 1000);
}
