mod common;

use common::gauss_jordan_inverse;
use gradnorm_ood::linalg::Matrix;
use gradnorm_ood::mahalanobis::{spd_inverse, MahalanobisEstimator};
use gradnorm_ood::rng::Rng;
use gradnorm_ood::Error;

fn random_labelled(rng: &mut Rng, n: usize, m: usize, classes: usize) -> (Vec<f64>, Vec<u32>) {
    let offsets: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..m).map(|_| 3.0 * rng.normal()).collect())
        .collect();
    let mut features = Vec::with_capacity(n * m);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % classes;
        labels.push(y as u32);
        for off in &offsets[y] {
            features.push(off + rng.normal());
        }
    }
    (features, labels)
}

fn naive_covariance(features: &[f64], m: usize, labels: &[u32], classes: usize) -> Matrix {
    let n = labels.len();
    let mut means = vec![vec![0.0; m]; classes];
    let mut counts = vec![0.0; classes];
    for (row, &y) in features.chunks(m).zip(labels) {
        counts[y as usize] += 1.0;
        for k in 0..m {
            means[y as usize][k] += row[k];
        }
    }
    for (mu, c) in means.iter_mut().zip(&counts) {
        for v in mu.iter_mut() {
            *v /= c;
        }
    }
    let mut cov = Matrix::zeros(m, m);
    for (row, &y) in features.chunks(m).zip(labels) {
        for i in 0..m {
            for j in 0..m {
                let d = (row[i] - means[y as usize][i]) * (row[j] - means[y as usize][j]);
                cov.set(i, j, cov.get(i, j) + d / n as f64);
            }
        }
    }
    cov
}

fn random_orthogonal(rng: &mut Rng, m: usize) -> Matrix {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < m {
        let mut v: Vec<f64> = (0..m).map(|_| rng.normal()).collect();
        for c in &cols {
            let d: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            for (vi, ci) in v.iter_mut().zip(c) {
                *vi -= d * ci;
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            cols.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|i| cols.iter().map(|c| c[i]).collect())
        .collect();
    Matrix::from_rows(&rows).unwrap()
}

#[test]
fn precision_matches_gauss_jordan() {
    let mut rng = Rng::new(21);
    for trial in 0..200 {
        let m = 1 + rng.below(6);
        let classes = 2 + rng.below(3);
        let n = classes + m + 2 + rng.below(40);
        let (features, labels) = random_labelled(&mut rng, n, m, classes);
        let lambda = [0.0, 1e-3, 0.1][trial % 3];
        let est = MahalanobisEstimator::fit(&features, m, &labels, classes, lambda).unwrap();
        let mut cov = naive_covariance(&features, m, &labels, classes);
        let trace: f64 = (0..m).map(|i| cov.get(i, i)).sum();
        let ridge = lambda * trace / m as f64;
        assert!((est.ridge() - ridge).abs() <= 1e-12 * ridge.max(1.0));
        for i in 0..m {
            cov.set(i, i, cov.get(i, i) + ridge);
        }
        let brute = gauss_jordan_inverse(&cov);
        let p = est.precision();
        for i in 0..m {
            for j in 0..m {
                let (a, b) = (p.get(i, j), brute.get(i, j));
                assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }
}

#[test]
fn spd_inverse_times_matrix_is_identity() {
    let mut rng = Rng::new(22);
    for _ in 0..100 {
        let m = 1 + rng.below(8);
        let b = Matrix::new(m, m, (0..m * m).map(|_| rng.normal()).collect()).unwrap();
        let mut a = b.transpose().matmul(&b).unwrap();
        for i in 0..m {
            a.set(i, i, a.get(i, i) + 0.5);
        }
        let prod = a.matmul(&spd_inverse(&a).unwrap()).unwrap();
        for i in 0..m {
            for j in 0..m {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((prod.get(i, j) - e).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn score_is_zero_at_class_means() {
    let mut rng = Rng::new(23);
    let (features, labels) = random_labelled(&mut rng, 60, 4, 3);
    let est = MahalanobisEstimator::fit(&features, 4, &labels, 3, 1e-3).unwrap();
    for mu in est.class_means() {
        assert_eq!(est.score(mu).unwrap(), 0.0);
    }
}

#[test]
fn invariant_under_rotation() {
    let mut rng = Rng::new(24);
    for _ in 0..20 {
        let m = 2 + rng.below(5);
        let (features, labels) = random_labelled(&mut rng, 50, m, 3);
        let q = random_orthogonal(&mut rng, m);
        let rotated: Vec<f64> = features
            .chunks(m)
            .flat_map(|row| q.mul_vec(row).unwrap().into_inner())
            .collect();
        let a = MahalanobisEstimator::fit(&features, m, &labels, 3, 1e-3).unwrap();
        let b = MahalanobisEstimator::fit(&rotated, m, &labels, 3, 1e-3).unwrap();
        for _ in 0..10 {
            let x: Vec<f64> = (0..m).map(|_| 3.0 * rng.normal()).collect();
            let sa = a.score(&x).unwrap();
            let sb = b.score(&q.mul_vec(&x).unwrap()).unwrap();
            assert!((sa - sb).abs() <= 1e-8 * sa.abs().max(1.0), "{sa} vs {sb}");
        }
    }
}

#[test]
fn distance_grows_along_a_ray() {
    let mut rng = Rng::new(25);
    let (features, labels) = random_labelled(&mut rng, 80, 5, 4);
    let est = MahalanobisEstimator::fit(&features, 5, &labels, 4, 1e-3).unwrap();
    for k in 0..4 {
        let dir: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
        let mut prev = -1.0;
        for step in 0..20 {
            let x: Vec<f64> = est.class_means()[k]
                .iter()
                .zip(&dir)
                .map(|(mu, d)| mu + 0.25 * step as f64 * d)
                .collect();
            let d = est.distances(&x).unwrap()[k];
            assert!(d > prev);
            prev = d;
        }
    }
}

#[test]
fn rejects_bad_inputs() {
    let f = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
    assert!(matches!(
        MahalanobisEstimator::fit(&f, 2, &[0, 0, 0], 2, 1e-3),
        Err(Error::MissingClasses(ref c)) if c == &[1]
    ));
    assert!(MahalanobisEstimator::fit(&f, 2, &[0, 1], 2, 1e-3).is_err());
    assert!(MahalanobisEstimator::fit(&f, 2, &[0, 1, 1], 2, -1.0)
        .unwrap_err()
        .is_config());
}

#[test]
fn estimator_file_round_trip() {
    let mut rng = Rng::new(26);
    let (features, labels) = random_labelled(&mut rng, 40, 3, 2);
    let est = MahalanobisEstimator::fit(&features, 3, &labels, 2, 1e-3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.maha");
    est.save(&path).unwrap();
    assert_eq!(MahalanobisEstimator::load(&path).unwrap(), est);
}
