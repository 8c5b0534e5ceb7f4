#![allow(dead_code, clippy::needless_range_loop)]

use gradnorm_ood::linalg::{Matrix, Vector};
use gradnorm_ood::losses::{self, Temperature};
use gradnorm_ood::nn::{LinearLayer, MlpModel};
use gradnorm_ood::rng::Rng;

pub const TEMPERATURES: [f64; 3] = [0.5, 1.0, 4.0];

/// Random MLP with `1..=max_hidden` hidden layers, widths and input dim in
/// `1..=max_dim`, and `2..=max_classes` outputs. Weights and biases are
/// standard normal scaled by `1/sqrt(fan_in)`.
pub fn random_model(
    rng: &mut Rng,
    max_dim: usize,
    max_hidden: usize,
    max_classes: usize,
) -> MlpModel {
    let hidden = rng.below(max_hidden + 1);
    let mut dims = vec![1 + rng.below(max_dim)];
    for _ in 0..hidden {
        dims.push(1 + rng.below(max_dim));
    }
    dims.push(2 + rng.below(max_classes - 1));
    let layers = dims
        .windows(2)
        .map(|w| {
            let scale = 1.0 / (w[0] as f64).sqrt();
            let weight: Vec<f64> = (0..w[0] * w[1]).map(|_| rng.normal() * scale).collect();
            let bias: Vec<f64> = (0..w[1]).map(|_| 0.5 * rng.normal()).collect();
            LinearLayer::new(Matrix::new(w[0], w[1], weight).unwrap(), Vector::from(bias)).unwrap()
        })
        .collect();
    MlpModel::new(layers).unwrap()
}

pub fn random_input(rng: &mut Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| 2.0 * rng.normal()).collect()
}

/// Smallest absolute hidden pre-activation; `inf` for a model with no hidden layer.
pub fn kink_margin(model: &MlpModel, x: &[f64]) -> f64 {
    let (_, trace) = model.forward(x).unwrap();
    let pre = trace.pre_activations();
    pre[..pre.len() - 1]
        .iter()
        .flat_map(|z| z.iter().copied())
        .fold(f64::INFINITY, |m, z| m.min(z.abs()))
}

/// Draws an input at least `margin` away from every ReLU kink.
pub fn input_off_kinks(rng: &mut Rng, model: &MlpModel, margin: f64) -> Vec<f64> {
    loop {
        let x = random_input(rng, model.input_dim());
        if kink_margin(model, &x) > margin {
            return x;
        }
    }
}

pub fn kl_loss(model: &MlpModel, x: &[f64], t: Temperature) -> f64 {
    losses::kl_to_uniform(&model.logits(x).unwrap(), t).unwrap()
}

pub fn ce_loss(model: &MlpModel, x: &[f64], label: usize, t: Temperature) -> f64 {
    losses::cross_entropy(&model.logits(x).unwrap(), label, t).unwrap()
}

/// Central differences of `loss` with respect to every parameter, in
/// layer-major order (weights row-major, then bias), followed by the input.
pub fn numeric_gradient<F>(model: &MlpModel, x: &[f64], h: f64, loss: F) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(&MlpModel, &[f64]) -> f64,
{
    let mut params = Vec::new();
    let mut probe = model.clone();
    for l in 0..model.layers().len() {
        let nw = model.layers()[l].weight().as_slice().len();
        for i in 0..nw {
            let orig = probe.layers()[l].weight().as_slice()[i];
            probe.layers_mut()[l].weight_mut().as_mut_slice()[i] = orig + h;
            let up = loss(&probe, x);
            probe.layers_mut()[l].weight_mut().as_mut_slice()[i] = orig - h;
            let down = loss(&probe, x);
            probe.layers_mut()[l].weight_mut().as_mut_slice()[i] = orig;
            params.push((up - down) / (2.0 * h));
        }
        let nb = model.layers()[l].bias().len();
        for i in 0..nb {
            let orig = probe.layers()[l].bias()[i];
            probe.layers_mut()[l].bias_mut()[i] = orig + h;
            let up = loss(&probe, x);
            probe.layers_mut()[l].bias_mut()[i] = orig - h;
            let down = loss(&probe, x);
            probe.layers_mut()[l].bias_mut()[i] = orig;
            params.push((up - down) / (2.0 * h));
        }
    }
    let mut xp = x.to_vec();
    let mut input = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + h;
        let up = loss(model, &xp);
        xp[i] = orig - h;
        let down = loss(model, &xp);
        xp[i] = orig;
        input.push((up - down) / (2.0 * h));
    }
    (params, input)
}

/// Gradient-check tolerances: an entry passes when its relative error is
/// below `FD_REL_TOL` or its absolute error is below `FD_ABS_TOL`.
pub const FD_REL_TOL: f64 = 1e-4;
pub const FD_ABS_TOL: f64 = 1e-8;

/// Running summary of an analytic vs central-difference comparison.
#[derive(Debug, Default, Clone, Copy)]
pub struct FdTally {
    pub compared: usize,
    pub failures: usize,
    /// Worst relative error over entries of magnitude at least 1e-4.
    pub worst_rel: f64,
    pub worst_abs: f64,
}

impl FdTally {
    pub fn add(&mut self, analytic: f64, numeric: f64) {
        let abs = (analytic - numeric).abs();
        let rel = rel_err(analytic, numeric, f64::MIN_POSITIVE);
        self.compared += 1;
        self.worst_abs = self.worst_abs.max(abs);
        if analytic.abs().max(numeric.abs()) >= 1e-4 {
            self.worst_rel = self.worst_rel.max(rel);
        }
        if abs >= FD_ABS_TOL && rel >= FD_REL_TOL {
            self.failures += 1;
        }
    }
}

/// Relative error with a floor on the denominator so exact zeros compare
/// by absolute error.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// AUROC as the fraction of (ID, OOD) pairs ordered correctly, ties counting half.
pub fn brute_auroc(id: &[f64], ood: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &a in id {
        for &b in ood {
            acc += if a > b {
                1.0
            } else if a == b {
                0.5
            } else {
                0.0
            };
        }
    }
    acc / (id.len() * ood.len()) as f64
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn gauss_jordan_inverse(a: &Matrix) -> Matrix {
    let n = a.rows();
    let mut aug = vec![vec![0.0; 2 * n]; n];
    for (i, row) in aug.iter_mut().enumerate() {
        row[..n].copy_from_slice(a.row(i));
        row[n + i] = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs()))
            .unwrap();
        aug.swap(col, pivot);
        let p = aug[col][col];
        for v in aug[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = aug[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        aug[r][c] -= f * aug[col][c];
                    }
                }
            }
        }
    }
    let data = aug
        .iter()
        .flat_map(|row| row[n..].iter().copied())
        .collect();
    Matrix::new(n, n, data).unwrap()
}
