//! Class-conditional Gaussians with a shared covariance, fitted on
//! penultimate features. The OOD score is the negated distance to the
//! closest class mean under the regularized precision matrix.

use std::path::Path;

use crate::binio::{self, Reader};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

const MAHA_MAGIC: &[u8; 4] = b"MAHA";

pub const DEFAULT_LAMBDA: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct MahalanobisEstimator {
    class_means: Vec<Vector>,
    precision: Matrix,
    /// Ridge actually added to the covariance diagonal: `lambda · trace(Σ) / m`.
    ridge: f64,
}

/// Lower-triangular Cholesky factor of a symmetric matrix.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::shape(format!(
            "cholesky of non-square {}x{}",
            n,
            a.cols()
        )));
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if d.is_nan() || d <= 0.0 || d.is_infinite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let djj = d.sqrt();
        l.set(j, j, djj);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / djj);
        }
    }
    Ok(l)
}

/// Inverse of a symmetric positive-definite matrix through its Cholesky
/// factor, symmetrized on output.
pub fn spd_inverse(a: &Matrix) -> Result<Matrix> {
    let l = cholesky(a)?;
    let n = a.rows();
    let mut inv = Matrix::zeros(n, n);
    let mut y = vec![0.0; n];
    for col in 0..n {
        // L y = e_col
        for i in 0..n {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for k in 0..i {
                s -= l.get(i, k) * y[k];
            }
            y[i] = s / l.get(i, i);
        }
        // Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l.get(k, i) * inv.get(k, col);
            }
            inv.set(i, col, s / l.get(i, i));
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (inv.get(i, j) + inv.get(j, i));
            inv.set(i, j, v);
            inv.set(j, i, v);
        }
    }
    Ok(inv)
}

impl MahalanobisEstimator {
    /// Fits class means and the shared covariance
    /// `Σ = (1/N) Σ_i (x_i − μ_{y_i})(x_i − μ_{y_i})ᵀ`, then inverts
    /// `Σ + λ' I` with `λ' = lambda · trace(Σ) / m`.
    ///
    /// `features` is row-major `N × m`.
    pub fn fit(
        features: &[f64],
        m: usize,
        labels: &[u32],
        classes: usize,
        lambda: f64,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::shape("feature dimension must be positive"));
        }
        if !features.len().is_multiple_of(m) || features.len() / m != labels.len() {
            return Err(Error::shape(format!(
                "{} feature values with m = {m} for {} labels",
                features.len(),
                labels.len()
            )));
        }
        if classes < 2 {
            return Err(Error::TooFewClasses(classes));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::config(
                "lambda",
                format!("must be >= 0, got {lambda}"),
            ));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let n = labels.len();
        if n < classes + 1 {
            return Err(Error::config(
                "features",
                format!(
                    "need at least {} samples for {classes} classes, got {n}",
                    classes + 1
                ),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
            return Err(Error::LabelOutOfRange {
                label: bad as usize,
                classes,
            });
        }

        let mut sums = vec![vec![0.0; m]; classes];
        let mut counts = vec![0usize; classes];
        for (row, &y) in features.chunks_exact(m).zip(labels) {
            counts[y as usize] += 1;
            for (s, v) in sums[y as usize].iter_mut().zip(row) {
                *s += v;
            }
        }
        let missing: Vec<usize> = (0..classes).filter(|&c| counts[c] == 0).collect();
        if !missing.is_empty() {
            return Err(Error::MissingClasses(missing));
        }
        let means: Vec<Vector> = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &k)| s.into_iter().map(|v| v / k as f64).collect())
            .collect();

        let mut cov = Matrix::zeros(m, m);
        let mut centred = vec![0.0; m];
        for (row, &y) in features.chunks_exact(m).zip(labels) {
            for ((c, v), mu) in centred.iter_mut().zip(row).zip(means[y as usize].iter()) {
                *c = v - mu;
            }
            for i in 0..m {
                for j in i..m {
                    let v = cov.get(i, j) + centred[i] * centred[j];
                    cov.set(i, j, v);
                }
            }
        }
        let trace: f64 = (0..m).map(|i| cov.get(i, i)).sum::<f64>() / n as f64;
        let ridge = lambda * trace / m as f64;
        for i in 0..m {
            for j in i..m {
                let v = cov.get(i, j) / n as f64 + if i == j { ridge } else { 0.0 };
                cov.set(i, j, v);
                cov.set(j, i, v);
            }
        }
        let precision = spd_inverse(&cov)?;
        Ok(MahalanobisEstimator {
            class_means: means,
            precision,
            ridge,
        })
    }

    pub fn class_means(&self) -> &[Vector] {
        &self.class_means
    }

    pub fn precision(&self) -> &Matrix {
        &self.precision
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn num_classes(&self) -> usize {
        self.class_means.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.precision.rows()
    }

    /// `(x − μ_c)ᵀ P (x − μ_c)` for every class.
    pub fn distances(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = self.feature_dim();
        if x.len() != m {
            return Err(Error::shape(format!(
                "estimator expects {m} features, got {}",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let mut d = vec![0.0; m];
        Ok(self
            .class_means
            .iter()
            .map(|mu| {
                for ((di, xi), mi) in d.iter_mut().zip(x).zip(mu.iter()) {
                    *di = xi - mi;
                }
                let pd = self.precision.mul_vec(&d).expect("square precision");
                // PD precision: clamp rounding noise below zero.
                d.iter()
                    .zip(pd.iter())
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    .max(0.0)
            })
            .collect())
    }

    /// `−min_c (x − μ_c)ᵀ P (x − μ_c)`; at most 0, higher is more ID.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        let d = self.distances(x)?;
        Ok(-d.into_iter().fold(f64::INFINITY, f64::min))
    }

    /// `MAHA` encoding: magic, u32 C, u32 m, f64 ridge, means (C·m f64),
    /// precision (m·m f64, row-major). Little-endian.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let (c, m) = (self.num_classes(), self.feature_dim());
        let mut out = Vec::with_capacity(20 + 8 * (c * m + m * m));
        out.extend_from_slice(MAHA_MAGIC);
        binio::put_u32(&mut out, binio::dim_u32(c, "C")?);
        binio::put_u32(&mut out, binio::dim_u32(m, "m")?);
        binio::put_f64s(&mut out, &[self.ridge]);
        for mu in &self.class_means {
            binio::put_f64s(&mut out, mu);
        }
        binio::put_f64s(&mut out, self.precision.as_slice());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "MAHA");
        r.magic(MAHA_MAGIC)?;
        let c = r.u32()? as usize;
        let m = r.u32()? as usize;
        let ridge = r.f64()?;
        let cm = c
            .checked_mul(m)
            .ok_or_else(|| Error::DimOverflow(format!("MAHA: C = {c}, m = {m}")))?;
        let mm = m
            .checked_mul(m)
            .ok_or_else(|| Error::DimOverflow(format!("MAHA: m = {m}")))?;
        let means = r.f64s(cm)?;
        let precision = Matrix::new(m, m, r.f64s(mm)?)?;
        r.finish()?;
        if c < 2 || m == 0 {
            return Err(Error::Malformed(format!("MAHA: C = {c}, m = {m}")));
        }
        Ok(MahalanobisEstimator {
            class_means: means.chunks_exact(m).map(Vector::from).collect(),
            precision,
            ridge,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        binio::write_atomic(path.as_ref(), &self.to_bytes()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        MahalanobisEstimator::from_bytes(&std::fs::read(path)?)
    }
}
