//! FPR at 95% TPR, AUROC and score summaries. Scores follow the
//! "higher = more in-distribution" convention; ID is the positive class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraction of ID samples that must score at or above the threshold.
pub const TPR_TARGET: f64 = 0.95;

/// Below this many ID scores the 5th percentile is too coarse to trust.
pub const MIN_RELIABLE_ID: usize = 20;

fn check_scores(name: &str, scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::config(name, "score set is empty"));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

fn sorted(scores: &[f64]) -> Vec<f64> {
    let mut v = scores.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FprAtTpr {
    pub fpr: f64,
    /// Threshold; a sample with score `>= gamma` is declared ID.
    pub gamma: f64,
}

/// `γ` is the ascending-sorted ID score at index `floor(0.05 · N_id)`, so at
/// least 95% of ID scores are `>= γ`. Returns the fraction of OOD scores
/// `>= γ`.
pub fn fpr_at_95_tpr(id_scores: &[f64], ood_scores: &[f64]) -> Result<FprAtTpr> {
    check_scores("id_scores", id_scores)?;
    check_scores("ood_scores", ood_scores)?;
    let id = sorted(id_scores);
    let idx = ((1.0 - TPR_TARGET) * id.len() as f64).floor() as usize;
    let gamma = id[idx.min(id.len() - 1)];
    let false_pos = ood_scores.iter().filter(|&&o| o >= gamma).count();
    Ok(FprAtTpr {
        fpr: false_pos as f64 / ood_scores.len() as f64,
        gamma,
    })
}

/// Area under the ROC curve via the Mann-Whitney rank sum with mid-ranks for
/// ties. Equal to the pairwise definition with 0.5 credit per tied pair.
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check_scores("id_scores", id_scores)?;
    check_scores("ood_scores", ood_scores)?;
    let mut all: Vec<(f64, bool)> = id_scores
        .iter()
        .map(|&s| (s, true))
        .chain(ood_scores.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Twice the rank sum keeps mid-ranks integral.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share the mid-rank (i + j + 2) / 2.
        let twice_mid = (i + j + 2) as u128;
        let id_in_group = all[i..=j].iter().filter(|e| e.1).count() as u128;
        twice_rank_sum += twice_mid * id_in_group;
        i = j + 1;
    }
    let n_id = id_scores.len() as u128;
    let n_ood = ood_scores.len() as u128;
    // U = R − n_id(n_id+1)/2, doubled.
    let twice_u = twice_rank_sum - n_id * (n_id + 1);
    Ok(twice_u as f64 / (2 * n_id * n_ood) as f64)
}

/// Bin counts over `[lo, hi]`: bins are left-closed/right-open except the
/// last, which is closed. Values outside the range land in the end bins.
pub fn histogram(scores: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Vec<usize>> {
    if bins == 0 {
        return Err(Error::config("bins", "must be >= 1"));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::config(
            "range",
            format!("need finite lo < hi, got ({lo}, {hi})"),
        ));
    }
    if scores.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite);
    }
    let mut counts = vec![0usize; bins];
    let width = (hi - lo) / bins as f64;
    for &s in scores {
        let idx = if s <= lo {
            0
        } else if s >= hi {
            bins - 1
        } else {
            (((s - lo) / width).floor() as usize).min(bins - 1)
        };
        counts[idx] += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub stddev: f64,
}

impl ScoreStats {
    pub fn of(scores: &[f64]) -> Result<Self> {
        check_scores("scores", scores)?;
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        Ok(ScoreStats {
            min: scores.iter().copied().fold(f64::INFINITY, f64::min),
            max: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean,
            stddev: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub fpr95: f64,
    pub auroc: f64,
    pub gamma: f64,
    pub id_count: usize,
    pub ood_count: usize,
    pub id_stats: ScoreStats,
    pub ood_stats: ScoreStats,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn evaluate(method: &str, id_scores: &[f64], ood_scores: &[f64]) -> Result<Self> {
        let fpr = fpr_at_95_tpr(id_scores, ood_scores)?;
        let mut warnings = Vec::new();
        if id_scores.len() < MIN_RELIABLE_ID {
            warnings.push(format!(
                "only {} ID scores; the 5th-percentile threshold is degenerate below {MIN_RELIABLE_ID}",
                id_scores.len()
            ));
        }
        Ok(EvalReport {
            method: method.to_string(),
            fpr95: fpr.fpr,
            auroc: auroc(id_scores, ood_scores)?,
            gamma: fpr.gamma,
            id_count: id_scores.len(),
            ood_count: ood_scores.len(),
            id_stats: ScoreStats::of(id_scores)?,
            ood_stats: ScoreStats::of(ood_scores)?,
            warnings,
        })
    }

    /// One `key=value` record per line. Floats use the shortest
    /// round-tripping representation, identical to the JSON output.
    pub fn to_text(&self) -> String {
        let stats = |s: &ScoreStats| {
            format!(
                "min={} max={} mean={} stddev={}",
                s.min, s.max, s.mean, s.stddev
            )
        };
        let mut out = format!(
            "method={} fpr95={} auroc={} gamma={} id_count={} ood_count={}\n",
            self.method, self.fpr95, self.auroc, self.gamma, self.id_count, self.ood_count
        );
        out.push_str(&format!("id_stats {}\n", stats(&self.id_stats)));
        out.push_str(&format!("ood_stats {}\n", stats(&self.ood_stats)));
        for w in &self.warnings {
            out.push_str(&format!("warning {w}\n"));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Malformed(format!("eval report JSON: {e}")))
    }
}
