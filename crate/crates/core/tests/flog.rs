use gradnorm_ood::data::{read_flog, write_flog, FeatureLogitDataset};
use gradnorm_ood::rng::Rng;
use gradnorm_ood::Error;

fn f32_values(rng: &mut Rng, len: usize) -> Vec<f64> {
    (0..len)
        .map(|_| (rng.normal() * 10.0) as f32 as f64)
        .collect()
}

fn random_dataset(rng: &mut Rng) -> FeatureLogitDataset {
    let n = rng.below(30);
    let mut form = rng.below(3);
    if n == 0 {
        form = 0;
    }
    let m = 1 + rng.below(12);
    let c = 2 + rng.below(7);
    let features = (form != 2).then(|| (m, f32_values(rng, n * m)));
    let logits = (form != 1).then(|| (c, f32_values(rng, n * c)));
    let labels = (rng.below(2) == 0).then(|| (0..n).map(|_| rng.below(c) as u32).collect());
    FeatureLogitDataset::new(n, features, logits, labels).unwrap()
}

#[test]
fn random_datasets_round_trip() {
    let mut rng = Rng::new(31);
    for _ in 0..1000 {
        let ds = random_dataset(&mut rng);
        let bytes = ds.to_bytes().unwrap();
        let back = FeatureLogitDataset::from_bytes(&bytes).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }
}

#[test]
fn file_round_trip() {
    let mut rng = Rng::new(32);
    let ds = random_dataset(&mut rng);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.flog");
    write_flog(&path, &ds).unwrap();
    assert_eq!(read_flog(&path).unwrap(), ds);
}

#[test]
fn every_truncation_is_rejected() {
    let mut rng = Rng::new(33);
    let ds = loop {
        let d = random_dataset(&mut rng);
        if d.len() > 2 {
            break d;
        }
    };
    let bytes = ds.to_bytes().unwrap();
    for cut in 0..bytes.len() {
        let err = FeatureLogitDataset::from_bytes(&bytes[..cut]).unwrap_err();
        assert!(!err.is_config(), "cut {cut}: {err}");
    }
}

#[test]
fn bad_magic_is_named() {
    let mut rng = Rng::new(34);
    let mut bytes = random_dataset(&mut rng).to_bytes().unwrap();
    bytes[0] = b'X';
    assert!(matches!(
        FeatureLogitDataset::from_bytes(&bytes),
        Err(Error::BadMagic { .. })
    ));
}

#[test]
fn missing_file_is_io_error() {
    let err = read_flog("/nonexistent/dir/none.flog").unwrap_err();
    assert!(matches!(err, Error::Io(_)));
    assert!(!err.is_config());
}
