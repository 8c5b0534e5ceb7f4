//! Dense vectors, row-major matrices and the Lp family used to aggregate
//! gradient vectors.

use std::fmt;
use std::ops::{Deref, DerefMut};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense vector of `f64`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(data: Vec<f64>) -> Self {
        Vector(data)
    }

    pub fn zeros(len: usize) -> Self {
        Vector(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn scaled(&self, factor: f64) -> Vector {
        Vector(self.0.iter().map(|v| v * factor).collect())
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Self {
        Vector(data)
    }
}

impl From<&[f64]> for Vector {
    fn from(data: &[f64]) -> Self {
        Vector(data.to_vec())
    }
}

impl<const N: usize> From<[f64; N]> for Vector {
    fn from(data: [f64; N]) -> Self {
        Vector(data.to_vec())
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl FromIterator<f64> for Vector {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        Vector(iter.into_iter().collect())
    }
}

/// A dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        let expected = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::shape(format!("matrix {rows}x{cols} overflows usize")))?;
        if data.len() != expected {
            return Err(Error::shape(format!(
                "matrix {rows}x{cols} needs {expected} entries, got {}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from nested rows. All rows must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::shape(format!(
                "row {bad} has {} entries, expected {cols}",
                rows[bad].len()
            )));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Standard product `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    /// `self * x` for a vector of length `cols`.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vector> {
        if x.len() != self.cols {
            return Err(Error::shape(format!(
                "matrix {}x{} times vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Computes `Wᵀ x` where `W` is `m × C` and `x` has length `m`.
///
/// This is the orientation of a linear layer that stores its weight as
/// `in_dim × out_dim`: `result[c] = Σ_i W[i, c] · x[i]`.
pub fn matvec(w: &Matrix, x: &[f64]) -> Result<Vector> {
    if w.rows != x.len() {
        return Err(Error::shape(format!(
            "Wᵀx with W of shape {}x{} and x of length {}",
            w.rows,
            w.cols,
            x.len()
        )));
    }
    let mut out = vec![0.0; w.cols];
    for (i, &xi) in x.iter().enumerate() {
        for (o, wv) in out.iter_mut().zip(w.row(i)) {
            *o += wv * xi;
        }
    }
    Ok(Vector(out))
}

/// Order `p` of an Lp norm. Fractional `0 < p < 1` is allowed; the result is
/// then not a true norm (no triangle inequality) but is computed by the same
/// formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormOrder {
    Finite(f64),
    Infinity,
}

impl NormOrder {
    pub const L1: NormOrder = NormOrder::Finite(1.0);
    pub const L2: NormOrder = NormOrder::Finite(2.0);

    pub fn finite(p: f64) -> Result<Self> {
        let order = NormOrder::Finite(p);
        order.validate()?;
        Ok(order)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NormOrder::Finite(p) if !(p.is_finite() && p > 0.0) => {
                Err(Error::InvalidNormOrder(format!("p = {p}")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_l1(&self) -> bool {
        matches!(self, NormOrder::Finite(p) if *p == 1.0)
    }
}

impl Default for NormOrder {
    fn default() -> Self {
        NormOrder::L1
    }
}

impl fmt::Display for NormOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormOrder::Finite(p) => write!(f, "{p}"),
            NormOrder::Infinity => f.write_str("inf"),
        }
    }
}

impl FromStr for NormOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if matches!(t.to_ascii_lowercase().as_str(), "inf" | "infinity" | "max") {
            return Ok(NormOrder::Infinity);
        }
        let p: f64 = t
            .parse()
            .map_err(|_| Error::InvalidNormOrder(format!("cannot parse {s:?}")))?;
        if p.is_infinite() && p > 0.0 {
            return Ok(NormOrder::Infinity);
        }
        NormOrder::finite(p)
    }
}

/// `(Σ |v_i|^p)^{1/p}` for finite `p`, `max |v_i|` for infinity.
///
/// Entries are rescaled by the largest magnitude before exponentiation so that
/// large `p` does not overflow. Zero entries contribute `0^p = 0` for every `p`.
pub fn lp_norm(v: &[f64], order: NormOrder) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::EmptyVector);
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    order.validate()?;

    let max = v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    let p = match order {
        NormOrder::Infinity => return Ok(max),
        NormOrder::Finite(p) => p,
    };
    if max == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(v.iter().map(|x| x.abs()).sum());
    }
    if p == 2.0 {
        let s: f64 = v.iter().map(|x| (x / max) * (x / max)).sum();
        return Ok(max * s.sqrt());
    }
    let s: f64 = v
        .iter()
        .map(|x| {
            let a = x.abs() / max;
            if a == 0.0 {
                0.0
            } else {
                (p * a.ln()).exp()
            }
        })
        .sum();
    Ok(max * s.powf(1.0 / p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lp_norm_examples() {
        assert_eq!(lp_norm(&[0.0, 0.0, 0.0], NormOrder::L1).unwrap(), 0.0);
        assert!((lp_norm(&[3.0, -4.0], NormOrder::L2).unwrap() - 5.0).abs() < 1e-15);
        assert_eq!(
            lp_norm(&[1.0, -2.0, 3.0], NormOrder::Infinity).unwrap(),
            3.0
        );
        assert_eq!(lp_norm(&[1.0, -2.0, 3.0], NormOrder::L1).unwrap(), 6.0);
    }

    #[test]
    fn lp_norm_errors() {
        assert!(matches!(
            lp_norm(&[], NormOrder::L1),
            Err(Error::EmptyVector)
        ));
        assert!(matches!(
            lp_norm(&[1.0, f64::NAN], NormOrder::L1),
            Err(Error::NonFinite)
        ));
        assert!(matches!(
            lp_norm(&[1.0], NormOrder::Finite(0.0)),
            Err(Error::InvalidNormOrder(_))
        ));
        assert!(matches!(
            lp_norm(&[1.0], NormOrder::Finite(-1.0)),
            Err(Error::InvalidNormOrder(_))
        ));
        assert_eq!(Error::EmptyVector.to_string(), "empty vector");
        assert_eq!(Error::NonFinite.to_string(), "non-finite input");
        assert!(Error::InvalidNormOrder("x".into())
            .to_string()
            .starts_with("invalid norm order"));
    }

    #[test]
    fn zero_vector_every_order() {
        for order in [
            NormOrder::Finite(0.3),
            NormOrder::Finite(0.5),
            NormOrder::L1,
            NormOrder::Finite(6.0),
            NormOrder::Infinity,
        ] {
            assert_eq!(lp_norm(&[0.0; 4], order).unwrap(), 0.0);
        }
    }

    #[test]
    fn parse_norm_orders() {
        assert_eq!("inf".parse::<NormOrder>().unwrap(), NormOrder::Infinity);
        assert_eq!("0.3".parse::<NormOrder>().unwrap(), NormOrder::Finite(0.3));
        assert_eq!("1".parse::<NormOrder>().unwrap(), NormOrder::L1);
        assert!("0".parse::<NormOrder>().is_err());
        assert!("abc".parse::<NormOrder>().is_err());
    }

    #[test]
    fn matvec_examples() {
        let id = Matrix::identity(2);
        assert_eq!(matvec(&id, &[3.0, 7.0]).unwrap().as_slice(), &[3.0, 7.0]);

        let w = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(
            matvec(&w, &[1.0, 2.0, 3.0]).unwrap().as_slice(),
            &[4.0, 5.0]
        );

        let s = Matrix::new(1, 1, vec![2.0]).unwrap();
        assert_eq!(matvec(&s, &[5.0]).unwrap().as_slice(), &[10.0]);
    }

    #[test]
    fn matvec_shape_error_names_both_shapes() {
        let w = Matrix::zeros(3, 2);
        let err = matvec(&w, &[1.0, 2.0]).unwrap_err().to_string();
        assert!(err.contains("3x2") && err.contains("length 2"), "{err}");
    }

    #[test]
    fn matrix_rejects_bad_length() {
        assert!(Matrix::new(2, 3, vec![0.0; 5]).is_err());
    }

    fn finite_vec() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0..100.0f64, 1..20)
    }

    fn any_order() -> impl Strategy<Value = NormOrder> {
        prop_oneof![
            (0.1..8.0f64).prop_map(NormOrder::Finite),
            Just(NormOrder::Infinity),
        ]
    }

    proptest! {
        #[test]
        fn monotone_in_p(v in finite_vec(), p in 1.0..6.0f64, dq in 0.01..4.0f64) {
            let q = p + dq;
            let a = lp_norm(&v, NormOrder::Finite(p)).unwrap();
            let b = lp_norm(&v, NormOrder::Finite(q)).unwrap();
            let inf = lp_norm(&v, NormOrder::Infinity).unwrap();
            prop_assert!(a >= b * (1.0 - 1e-12));
            prop_assert!(b >= inf * (1.0 - 1e-12));
        }

        #[test]
        fn single_nonzero_entry(len in 1usize..10, pos in 0usize..10, a in -50.0..50.0f64, order in any_order()) {
            let mut v = vec![0.0; len];
            v[pos % len] = a;
            let n = lp_norm(&v, order).unwrap();
            prop_assert!((n - a.abs()).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn absolute_homogeneity(v in finite_vec(), c in -10.0..10.0f64, order in any_order()) {
            let base = lp_norm(&v, order).unwrap();
            let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
            let n = lp_norm(&scaled, order).unwrap();
            prop_assert!((n - c.abs() * base).abs() <= 1e-10 * (c.abs() * base).max(1e-300));
        }

        #[test]
        fn permutation_invariant(v in finite_vec(), order in any_order(), seed in any::<u64>()) {
            let mut w = v.clone();
            // deterministic shuffle from the seed
            let mut s = seed;
            for i in (1..w.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (s >> 33) as usize % (i + 1);
                w.swap(i, j);
            }
            let a = lp_norm(&v, order).unwrap();
            let b = lp_norm(&w, order).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }

        #[test]
        fn zero_iff_all_zero(v in finite_vec(), order in any_order()) {
            let n = lp_norm(&v, order).unwrap();
            prop_assert!(n >= 0.0);
            prop_assert_eq!(n == 0.0, v.iter().all(|x| *x == 0.0));
        }
    }
}
