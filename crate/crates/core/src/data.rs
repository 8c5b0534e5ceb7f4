//! Synthetic ID/OOD generation and the `FLOG` feature/logit interchange file.
//!
//! `FLOG` layout, little-endian:
//!
//! | bytes        | field                                         |
//! |--------------|-----------------------------------------------|
//! | 4            | magic `FLOG`                                  |
//! | u32          | version (= 1)                                 |
//! | u32          | flags: bit0 features, bit1 logits, bit2 labels|
//! | u32 ×3       | n, m, c                                       |
//! | f32 × n·m    | features, row-major (if bit0)                 |
//! | f32 × n·c    | logits, row-major (if bit1)                   |
//! | u32 × n      | labels (if bit2)                              |
//!
//! Values are held as `f64` in memory and rounded to `f32` on write.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::binio::{self, Reader};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::rng::Rng;

const FLOG_MAGIC: &[u8; 4] = b"FLOG";
const FLOG_VERSION: u32 = 1;
const FLAG_FEATURES: u32 = 1;
const FLAG_LOGITS: u32 = 1 << 1;
const FLAG_LABELS: u32 = 1 << 2;

/// `n` samples of features and/or logits with optional labels.
///
/// Raw model inputs are stored as "features" (`m` = input width), which is
/// how generated datasets travel between commands.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureLogitDataset {
    n: usize,
    m: usize,
    c: usize,
    features: Option<Vec<f64>>,
    logits: Option<Vec<f64>>,
    labels: Option<Vec<u32>>,
}

impl FeatureLogitDataset {
    /// Builds a dataset from flat row-major buffers. `m` (`c`) must be 0 when
    /// features (logits) are absent. Labels are checked against `c` only when
    /// logits are present.
    pub fn new(
        n: usize,
        features: Option<(usize, Vec<f64>)>,
        logits: Option<(usize, Vec<f64>)>,
        labels: Option<Vec<u32>>,
    ) -> Result<Self> {
        if features.is_none() && logits.is_none() && n > 0 {
            return Err(Error::config("dataset", "needs features or logits"));
        }
        let check = |name: &str, width: usize, buf: &Vec<f64>| -> Result<()> {
            if width == 0 {
                return Err(Error::shape(format!("{name} width must be positive")));
            }
            if n.checked_mul(width) != Some(buf.len()) {
                return Err(Error::shape(format!(
                    "{name}: {n} rows of width {width} need {} values, got {}",
                    n.saturating_mul(width),
                    buf.len()
                )));
            }
            Ok(())
        };
        let (m, features) = match features {
            Some((m, f)) => {
                check("features", m, &f)?;
                (m, Some(f))
            }
            None => (0, None),
        };
        let (c, logits) = match logits {
            Some((c, l)) => {
                check("logits", c, &l)?;
                (c, Some(l))
            }
            None => (0, None),
        };
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::shape(format!(
                    "{} labels for {n} samples",
                    labels.len()
                )));
            }
            if c > 0 {
                if let Some(&bad) = labels.iter().find(|&&l| l as usize >= c) {
                    return Err(Error::LabelOutOfRange {
                        label: bad as usize,
                        classes: c,
                    });
                }
            }
        }
        Ok(FeatureLogitDataset {
            n,
            m,
            c,
            features,
            logits,
            labels,
        })
    }

    /// Raw inputs (stored as features) with labels.
    pub fn from_inputs(rows: &[Vector], labels: Option<Vec<u32>>) -> Result<Self> {
        let m = rows.first().map_or(0, |r| r.len());
        if let Some(bad) = rows.iter().position(|r| r.len() != m) {
            return Err(Error::shape(format!(
                "row {bad} has length {}, expected {m}",
                rows[bad].len()
            )));
        }
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        if rows.is_empty() {
            return FeatureLogitDataset::new(0, None, None, labels);
        }
        FeatureLogitDataset::new(rows.len(), Some((m, flat)), None, labels)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.m
    }

    pub fn num_classes(&self) -> usize {
        self.c
    }

    pub fn has_features(&self) -> bool {
        self.features.is_some()
    }

    pub fn has_logits(&self) -> bool {
        self.logits.is_some()
    }

    pub fn features(&self) -> Option<&[f64]> {
        self.features.as_deref()
    }

    pub fn logits(&self) -> Option<&[f64]> {
        self.logits.as_deref()
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn feature_row(&self, i: usize) -> Option<&[f64]> {
        self.features
            .as_ref()
            .map(|f| &f[i * self.m..(i + 1) * self.m])
    }

    pub fn logit_row(&self, i: usize) -> Option<&[f64]> {
        self.logits
            .as_ref()
            .map(|l| &l[i * self.c..(i + 1) * self.c])
    }

    pub fn label(&self, i: usize) -> Option<usize> {
        self.labels.as_ref().map(|l| l[i] as usize)
    }

    /// Rows reordered (or subset) by `indices`.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n) {
            return Err(Error::shape(format!(
                "row {bad} out of range for {} samples",
                self.n
            )));
        }
        let gather = |buf: &Vec<f64>, w: usize| -> Vec<f64> {
            indices
                .iter()
                .flat_map(|&i| buf[i * w..(i + 1) * w].iter().copied())
                .collect()
        };
        Ok(FeatureLogitDataset {
            n: indices.len(),
            m: self.m,
            c: self.c,
            features: self.features.as_ref().map(|f| gather(f, self.m)),
            logits: self.logits.as_ref().map(|l| gather(l, self.c)),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut flags = 0;
        if self.features.is_some() {
            flags |= FLAG_FEATURES;
        }
        if self.logits.is_some() {
            flags |= FLAG_LOGITS;
        }
        if self.labels.is_some() {
            flags |= FLAG_LABELS;
        }
        let payload = self.n * (self.m + self.c + usize::from(self.labels.is_some())) * 4;
        let mut out = Vec::with_capacity(24 + payload);
        out.extend_from_slice(FLOG_MAGIC);
        binio::put_u32(&mut out, FLOG_VERSION);
        binio::put_u32(&mut out, flags);
        binio::put_u32(&mut out, binio::dim_u32(self.n, "n")?);
        binio::put_u32(&mut out, binio::dim_u32(self.m, "m")?);
        binio::put_u32(&mut out, binio::dim_u32(self.c, "c")?);
        for buf in [&self.features, &self.logits].into_iter().flatten() {
            for v in buf {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        if let Some(labels) = &self.labels {
            for l in labels {
                binio::put_u32(&mut out, *l);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "FLOG");
        r.magic(FLOG_MAGIC)?;
        let version = r.u32()?;
        if version != FLOG_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let flags = r.u32()?;
        if flags & !(FLAG_FEATURES | FLAG_LOGITS | FLAG_LABELS) != 0 {
            return Err(Error::Malformed(format!(
                "FLOG: unknown flag bits {flags:#x}"
            )));
        }
        let n = r.u32()? as usize;
        let m = r.u32()? as usize;
        let c = r.u32()? as usize;
        let has_f = flags & FLAG_FEATURES != 0;
        let has_l = flags & FLAG_LOGITS != 0;
        let has_y = flags & FLAG_LABELS != 0;
        if has_f != (m > 0) || has_l != (c > 0) {
            return Err(Error::Malformed(format!(
                "FLOG: flags {flags:#x} disagree with m = {m}, c = {c}"
            )));
        }
        // Guard against headers claiming more data than the file holds before
        // allocating anything.
        let per_row = (m as u64 + c as u64 + u64::from(has_y)) * 4;
        let needed = (n as u64)
            .checked_mul(per_row)
            .ok_or_else(|| Error::DimOverflow(format!("FLOG: n = {n}, m = {m}, c = {c}")))?;
        if needed > usize::MAX as u64 || n.checked_mul(m.max(c)).is_none() {
            return Err(Error::DimOverflow(format!(
                "FLOG: n = {n}, m = {m}, c = {c}"
            )));
        }
        if needed > r.remaining() as u64 {
            return Err(Error::Truncated(format!(
                "FLOG: header promises {needed} payload bytes, {} present",
                r.remaining()
            )));
        }
        let features = if has_f {
            Some((m, r.f32s(n * m)?))
        } else {
            None
        };
        let logits = if has_l {
            Some((c, r.f32s(n * c)?))
        } else {
            None
        };
        let labels = if has_y { Some(r.u32s(n)?) } else { None };
        r.finish()?;
        FeatureLogitDataset::new(n, features, logits, labels)
            .map_err(|e| Error::Malformed(format!("FLOG: {e}")))
    }
}

pub fn write_flog(path: impl AsRef<Path>, ds: &FeatureLogitDataset) -> Result<()> {
    binio::write_atomic(path.as_ref(), &ds.to_bytes()?)
}

pub fn read_flog(path: impl AsRef<Path>) -> Result<FeatureLogitDataset> {
    FeatureLogitDataset::from_bytes(&std::fs::read(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OodKind {
    /// Points on a sphere of radius `ood_shift · class_center_scale`.
    Ring,
    /// Uniform in a cube of half-width `ood_shift · class_center_scale`.
    UniformBox,
}

impl FromStr for OodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring" => Ok(OodKind::Ring),
            "uniform-box" | "box" => Ok(OodKind::UniformBox),
            _ => Err(Error::config(
                "ood-kind",
                format!("expected ring|uniform-box, got {s:?}"),
            )),
        }
    }
}

/// Gaussian-blob ID data plus one OOD family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub ood_kind: OodKind,
    pub dim: usize,
    pub classes: usize,
    pub samples_per_class: usize,
    pub class_center_scale: f64,
    pub noise_sigma: f64,
    pub ood_shift: f64,
    /// OOD sample count; 0 means "same as the ID test split".
    pub ood_samples: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            ood_kind: OodKind::Ring,
            dim: 8,
            classes: 4,
            samples_per_class: 500,
            class_center_scale: 4.0,
            noise_sigma: 0.5,
            ood_shift: 3.0,
            ood_samples: 0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::config(
                "dim",
                format!("must be >= 2, got {}", self.dim),
            ));
        }
        if self.classes < 2 {
            return Err(Error::config(
                "classes",
                format!("must be >= 2, got {}", self.classes),
            ));
        }
        if self.samples_per_class == 0 {
            return Err(Error::config("samples_per_class", "must be positive"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma > 0.0) {
            return Err(Error::config(
                "noise_sigma",
                format!("must be > 0, got {}", self.noise_sigma),
            ));
        }
        if !(self.class_center_scale.is_finite() && self.class_center_scale > 0.0) {
            return Err(Error::config(
                "class_center_scale",
                format!("must be > 0, got {}", self.class_center_scale),
            ));
        }
        if !(self.ood_shift.is_finite() && self.ood_shift >= 0.0) {
            return Err(Error::config(
                "ood_shift",
                format!("must be >= 0, got {}", self.ood_shift),
            ));
        }
        Ok(())
    }
}

/// Output of [`generate`]: raw inputs stored as features, all labelled.
/// OOD labels are all 0 (placeholders; OOD has no ID class).
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSplit {
    pub centers: Vec<Vector>,
    pub id_train: FeatureLogitDataset,
    pub id_test: FeatureLogitDataset,
    pub ood_test: FeatureLogitDataset,
}

/// Draws class centers uniformly on the sphere of radius `class_center_scale`,
/// then `samples_per_class` points per class as `center + σ·N(0, I)`.
/// Samples are interleaved by class (sample `i` belongs to class
/// `i mod classes`) and every 5th sample (`i mod 5 == 4`) goes to the test
/// split. OOD points are drawn after all ID points from the same stream.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticSplit> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let centers: Vec<Vector> = (0..spec.classes)
        .map(|_| {
            rng.unit_vector(spec.dim)
                .into_iter()
                .map(|v| v * spec.class_center_scale)
                .collect()
        })
        .collect();

    let total = spec.classes * spec.samples_per_class;
    let (mut train, mut train_y) = (Vec::new(), Vec::new());
    let (mut test, mut test_y) = (Vec::new(), Vec::new());
    for i in 0..total {
        let class = i % spec.classes;
        let point: Vector = centers[class]
            .iter()
            .map(|c| c + spec.noise_sigma * rng.normal())
            .collect();
        if i % 5 == 4 {
            test.push(point);
            test_y.push(class as u32);
        } else {
            train.push(point);
            train_y.push(class as u32);
        }
    }

    let ood_n = if spec.ood_samples == 0 {
        test.len()
    } else {
        spec.ood_samples
    };
    let extent = spec.ood_shift * spec.class_center_scale;
    let ood: Vec<Vector> = (0..ood_n)
        .map(|_| match spec.ood_kind {
            OodKind::Ring => rng
                .unit_vector(spec.dim)
                .into_iter()
                .map(|v| v * extent)
                .collect(),
            OodKind::UniformBox => (0..spec.dim)
                .map(|_| rng.uniform(-extent, extent))
                .collect(),
        })
        .collect();

    Ok(SyntheticSplit {
        centers,
        id_train: FeatureLogitDataset::from_inputs(&train, Some(train_y))?,
        id_test: FeatureLogitDataset::from_inputs(&test, Some(test_y))?,
        ood_test: FeatureLogitDataset::from_inputs(&ood, Some(vec![0; ood_n]))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            dim: 3,
            classes: 3,
            samples_per_class: 20,
            seed: 5,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&small_spec()).unwrap();
        let b = generate(&small_spec()).unwrap();
        assert_eq!(a, b);
        let c = generate(&SyntheticSpec {
            seed: 6,
            ..small_spec()
        })
        .unwrap();
        assert_ne!(a.id_train, c.id_train);
    }

    #[test]
    fn split_and_label_balance() {
        let s = generate(&small_spec()).unwrap();
        assert_eq!(s.id_train.len() + s.id_test.len(), 60);
        assert_eq!(s.id_test.len(), 12);
        assert_eq!(s.ood_test.len(), 12);
        let mut counts = [0; 3];
        for ds in [&s.id_train, &s.id_test] {
            for &l in ds.labels().unwrap() {
                counts[l as usize] += 1;
            }
        }
        assert_eq!(counts, [20, 20, 20]);
    }

    #[test]
    fn degenerate_noise_hugs_centers() {
        let spec = SyntheticSpec {
            noise_sigma: 1e-9,
            ..small_spec()
        };
        let s = generate(&spec).unwrap();
        for ds in [&s.id_train, &s.id_test] {
            for i in 0..ds.len() {
                let c = &s.centers[ds.label(i).unwrap()];
                let d: f64 = ds
                    .feature_row(i)
                    .unwrap()
                    .iter()
                    .zip(c.iter())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(d < 1e-6, "{d}");
            }
        }
        for c in &s.centers {
            let r = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((r - spec.class_center_scale).abs() < 1e-12);
        }
    }

    #[test]
    fn ood_geometry() {
        let ring = generate(&small_spec()).unwrap();
        for i in 0..ring.ood_test.len() {
            let r = ring
                .ood_test
                .feature_row(i)
                .unwrap()
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            assert!((r - 12.0).abs() < 1e-9);
        }
        let spec = SyntheticSpec {
            ood_kind: OodKind::UniformBox,
            ood_samples: 50,
            ..small_spec()
        };
        let b = generate(&spec).unwrap();
        assert_eq!(b.ood_test.len(), 50);
        assert!(b
            .ood_test
            .features()
            .unwrap()
            .iter()
            .all(|v| v.abs() <= 12.0));
    }

    #[test]
    fn invalid_specs() {
        for (spec, field) in [
            (
                SyntheticSpec {
                    classes: 1,
                    ..small_spec()
                },
                "classes",
            ),
            (
                SyntheticSpec {
                    dim: 1,
                    ..small_spec()
                },
                "dim",
            ),
            (
                SyntheticSpec {
                    noise_sigma: 0.0,
                    ..small_spec()
                },
                "noise_sigma",
            ),
        ] {
            let err = generate(&spec).unwrap_err();
            assert!(err.to_string().contains(field), "{err}");
        }
    }

    #[test]
    fn flog_roundtrip_and_errors() {
        let ds = FeatureLogitDataset::new(
            2,
            Some((3, vec![1.0, 2.0, 3.0, -0.5, 0.25, 8.0])),
            Some((2, vec![0.5, -1.0, 2.0, 4.0])),
            Some(vec![1, 0]),
        )
        .unwrap();
        let bytes = ds.to_bytes().unwrap();
        assert_eq!(bytes.len(), 24 + 2 * (3 + 2 + 1) * 4);
        assert_eq!(FeatureLogitDataset::from_bytes(&bytes).unwrap(), ds);

        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"GOLF");
        let err = FeatureLogitDataset::from_bytes(&bad).unwrap_err();
        assert!(matches!(err, Error::BadMagic { .. }));
        assert!(err.to_string().starts_with("bad magic"));

        assert!(matches!(
            FeatureLogitDataset::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated(_))
        ));

        let mut huge = bytes[..24].to_vec();
        huge[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[16..20].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(
            FeatureLogitDataset::from_bytes(&huge),
            Err(Error::DimOverflow(_) | Error::Truncated(_))
        ));
    }

    #[test]
    fn empty_dataset_file() {
        let ds = FeatureLogitDataset::new(0, None, None, None).unwrap();
        let back = FeatureLogitDataset::from_bytes(&ds.to_bytes().unwrap()).unwrap();
        assert!(back.is_empty());
        assert_eq!(back, ds);
    }

    #[test]
    fn label_range_checked_against_logits() {
        assert!(matches!(
            FeatureLogitDataset::new(1, None, Some((2, vec![0.0, 1.0])), Some(vec![2])),
            Err(Error::LabelOutOfRange { .. })
        ));
    }
}
