use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::Serialize;

use crate::decorrelation::{FeatureBatch, WeightVector};
use crate::error::{invalid, Result, SgfdError};
use crate::rng::Rng;
use crate::Scalar;

pub const CORRELATION_FORMAT_VERSION: u32 = 1;

const VARIANCE_FLOOR: f64 = 1e-12;

fn undefined(msg: &str) -> SgfdError {
    SgfdError::UndefinedCorrelation(msg.into())
}

fn clamp_unit<T: Scalar>(r: T) -> T {
    r.max(-T::one()).min(T::one())
}

/// Sample Pearson correlation, clamped to `[-1, 1]`.
///
/// A constant column against a varying one gives 0; two constant columns are undefined.
pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    let n = x.len();
    if y.len() != n {
        return invalid("pearson needs equal-length inputs");
    }
    if n < 2 {
        return invalid("pearson needs at least two samples");
    }
    let nt = T::of(n as f64);
    let mx = x.iter().copied().sum::<T>() / nt;
    let my = y.iter().copied().sum::<T>() / nt;
    let mut sxy = T::zero();
    let mut sxx = T::zero();
    let mut syy = T::zero();
    for k in 0..n {
        let (dx, dy) = (x[k] - mx, y[k] - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == T::zero() && syy == T::zero() {
        return Err(undefined("both columns are constant"));
    }
    if sxx == T::zero() || syy == T::zero() {
        return Ok(T::zero());
    }
    Ok(clamp_unit(sxy / (sxx.sqrt() * syy.sqrt())))
}

/// Pearson correlation of the weighted central moments (weights normalized by their sum).
pub fn weighted_pearson<T: Scalar>(x: &[T], y: &[T], w: &WeightVector<T>) -> Result<T> {
    let n = x.len();
    let w = w.as_slice();
    if y.len() != n || w.len() != n {
        return invalid("weighted pearson needs equal-length inputs and weights");
    }
    if n < 2 {
        return invalid("weighted pearson needs at least two samples");
    }
    let total: T = w.iter().copied().sum();
    let mut mx = T::zero();
    let mut my = T::zero();
    for k in 0..n {
        mx += w[k] * x[k];
        my += w[k] * y[k];
    }
    mx /= total;
    my /= total;
    let mut sxy = T::zero();
    let mut sxx = T::zero();
    let mut syy = T::zero();
    for k in 0..n {
        let (dx, dy) = (x[k] - mx, y[k] - my);
        sxy += w[k] * dx * dy;
        sxx += w[k] * dx * dx;
        syy += w[k] * dy * dy;
    }
    let (vx, vy) = (sxx / total, syy / total);
    let floor = T::of(VARIANCE_FLOOR);
    if vx < floor || vy < floor {
        return Err(undefined("weighted variance below 1e-12"));
    }
    Ok(clamp_unit(sxy / (sxx.sqrt() * syy.sqrt())))
}

/// Pairwise correlations among all features of a batch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub matrix: Vec<Vec<f64>>,
    /// Entries whose correlation is undefined; they hold 0 in `matrix`.
    pub undefined: Vec<Vec<bool>>,
    pub weighted: bool,
    pub changed_feature_index: Option<usize>,
    /// Mean `|rho|` between the changed feature and every other feature.
    pub summary: Option<f64>,
}

impl CorrelationReport {
    pub fn d(&self) -> usize {
        self.matrix.len()
    }

    fn from_pairs<F>(d: usize, weighted: bool, changed: Option<usize>, mut corr: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> Result<f64>,
    {
        if changed.is_some_and(|c| c >= d) {
            return invalid("changed feature index out of range");
        }
        let mut matrix = vec![vec![0.0; d]; d];
        let mut flags = vec![vec![false; d]; d];
        for i in 0..d {
            for j in i..d {
                let value = match corr(i, j) {
                    Ok(v) => Some(v),
                    Err(SgfdError::UndefinedCorrelation(_)) => None,
                    Err(e) => return Err(e),
                };
                let (v, flag) = match value {
                    Some(_) if i == j => (1.0, false),
                    Some(v) => (v, false),
                    None => (0.0, true),
                };
                matrix[i][j] = v;
                matrix[j][i] = v;
                flags[i][j] = flag;
                flags[j][i] = flag;
            }
        }
        let summary = changed.filter(|_| d > 1).map(|c| {
            let others: Vec<f64> = (0..d)
                .filter(|&j| j != c)
                .map(|j| matrix[c][j].abs())
                .collect();
            others.iter().sum::<f64>() / others.len() as f64
        });
        Ok(CorrelationReport {
            matrix,
            undefined: flags,
            weighted,
            changed_feature_index: changed,
            summary,
        })
    }

    /// `d x d` grid with a header row, a trailing `undefined` column listing the
    /// undefined entries of each row, and a leading format-version comment line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.d();
        writeln!(out, "# format_version={CORRELATION_FORMAT_VERSION}")?;
        let mut header: Vec<String> = vec!["feature".into()];
        header.extend((0..d).map(|j| format!("z{j}")));
        header.push("undefined".into());
        writeln!(out, "{}", header.join(","))?;
        for i in 0..d {
            let mut fields = vec![format!("z{i}")];
            fields.extend(self.matrix[i].iter().map(|v| format!("{v}")));
            let flagged: Vec<String> = (0..d)
                .filter(|&j| self.undefined[i][j])
                .map(|j| format!("z{j}"))
                .collect();
            fields.push(flagged.join(";"));
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let undefined = self.undefined.iter().flatten().filter(|&&f| f).count();
        serde_json::json!({
            "format_version": CORRELATION_FORMAT_VERSION,
            "d": self.d(),
            "weighted": self.weighted,
            "changed_feature_index": self.changed_feature_index,
            "mean_abs_changed_correlation": self.summary,
            "undefined_entries": undefined,
        })
    }
}

/// Pairwise (weighted) Pearson over the columns of `batch`.
pub fn correlation_matrix<T: Scalar>(
    batch: &FeatureBatch<T>,
    weights: Option<&WeightVector<T>>,
    changed: Option<usize>,
) -> Result<CorrelationReport> {
    if batch.n() < 2 {
        return invalid("correlation matrix needs at least two samples");
    }
    if weights.is_some_and(|w| w.len() != batch.n()) {
        return invalid("one weight per sample is required");
    }
    let columns: Vec<Vec<T>> = (0..batch.d()).map(|j| batch.column(j)).collect();
    CorrelationReport::from_pairs(batch.d(), weights.is_some(), changed, |i, j| {
        let r = match weights {
            Some(w) => weighted_pearson(&columns[i], &columns[j], w)?,
            None => pearson(&columns[i], &columns[j])?,
        };
        Ok(r.as_f64())
    })
}

/// Unweighted correlations of `draws` rows resampled with probability proportional to `w`.
pub fn resampled_correlation_matrix<T: Scalar>(
    batch: &FeatureBatch<T>,
    weights: &WeightVector<T>,
    changed: Option<usize>,
    draws: usize,
    rng: &mut Rng,
) -> Result<CorrelationReport> {
    if weights.len() != batch.n() {
        return invalid("one weight per sample is required");
    }
    let probs: Vec<f64> = weights.as_slice().iter().map(|w| w.as_f64()).collect();
    let dist = WeightedIndex::new(&probs).map_err(|e| SgfdError::InvalidArgument(e.to_string()))?;
    let rows: Vec<usize> = (0..draws).map(|_| dist.sample(rng)).collect();
    let mut report = correlation_matrix(&batch.select_rows(&rows), None, changed)?;
    report.weighted = true;
    Ok(report)
}
