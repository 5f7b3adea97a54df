//! Small statistical helpers shared by the checks and tests.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub fn mean_vector(rows: &[Vec<f64>]) -> Vec<f64> {
    let m = rows.first().map_or(0, Vec::len);
    let n = rows.len() as f64;
    (0..m).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect()
}

/// Unbiased sample covariance (denominator `n - 1`).
pub fn covariance(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let m = rows.first().map_or(0, Vec::len);
    let mean = mean_vector(rows);
    let denom = (rows.len() as f64 - 1.0).max(1.0);
    DMatrix::from_fn(m, m, |j, k| {
        rows.iter().map(|r| (r[j] - mean[j]) * (r[k] - mean[k])).sum::<f64>() / denom
    })
}

/// Upper-tail probability of a chi-square statistic.
pub fn chi_square_sf(stat: f64, df: f64) -> f64 {
    if df <= 0.0 {
        return if stat > 0.0 { 0.0 } else { 1.0 };
    }
    let dist = ChiSquared::new(df).expect("positive degrees of freedom");
    (1.0 - dist.cdf(stat)).clamp(0.0, 1.0)
}

/// Two-sided normal p-value of a z score.
pub fn normal_two_sided(z: f64) -> f64 {
    let n = Normal::standard();
    (2.0 * (1.0 - n.cdf(z.abs()))).clamp(0.0, 1.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Pearson goodness of fit of `observed` counts against `probs`.
///
/// Cells with zero expected mass are dropped; an observation in such a cell
/// gives p = 0.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<ChiSquareResult> {
    if observed.len() != probs.len() {
        return Err(Error::Dimension("observed and expected cells differ in length".into()));
    }
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return Err(Error::InsufficientData("no observations".into()));
    }
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (o, p) in observed.iter().zip(probs) {
        if *p <= 0.0 {
            if *o > 0 {
                return Ok(ChiSquareResult { statistic: f64::INFINITY, df: 0, p_value: 0.0 });
            }
            continue;
        }
        let e = n as f64 * p;
        stat += (*o as f64 - e).powi(2) / e;
        cells += 1;
    }
    let df = cells.saturating_sub(1);
    Ok(ChiSquareResult { statistic: stat, df, p_value: chi_square_sf(stat, df as f64) })
}

/// Total-variation distance `½ Σ |p_i − q_i|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Empirical pmf of nonnegative integer values on bins `0..=max_bin` plus one
/// overflow bin.
pub fn binned_pmf(values: impl IntoIterator<Item = u64>, max_bin: usize) -> Vec<f64> {
    let mut counts = vec![0u64; max_bin + 2];
    let mut n = 0u64;
    for v in values {
        let b = (v as usize).min(max_bin + 1);
        counts[b] += 1;
        n += 1;
    }
    counts.iter().map(|c| *c as f64 / n.max(1) as f64).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct MardiaResult {
    pub skewness: f64,
    pub skewness_statistic: f64,
    pub skewness_df: f64,
    pub skewness_p: f64,
    pub kurtosis: f64,
    pub kurtosis_z: f64,
    pub kurtosis_p: f64,
}

impl MardiaResult {
    /// Smaller of the two p-values.
    pub fn p_value(&self) -> f64 {
        self.skewness_p.min(self.kurtosis_p)
    }
}

/// Mardia's multivariate skewness and kurtosis tests.
pub fn mardia(rows: &[Vec<f64>]) -> Result<MardiaResult> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n <= m + 1 || m == 0 {
        return Err(Error::InsufficientData(format!("{n} observations for a {m}-dimensional test")));
    }
    let mean = DVector::from_vec(mean_vector(rows));
    let centred: Vec<DVector<f64>> = rows
        .iter()
        .map(|r| DVector::from_column_slice(r) - &mean)
        .collect();
    // maximum-likelihood covariance, as in Mardia's definition
    let mut s = DMatrix::zeros(m, m);
    for c in &centred {
        s += c * c.transpose();
    }
    s /= n as f64;
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| Error::InsufficientData("singular sample covariance".into()))?;
    let projected: Vec<DVector<f64>> = centred.iter().map(|c| &s_inv * c).collect();
    let mut b1 = 0.0;
    for a in &centred {
        for pb in &projected {
            b1 += a.dot(pb).powi(3);
        }
    }
    b1 /= (n * n) as f64;
    let b2 = centred
        .iter()
        .zip(&projected)
        .map(|(c, p)| c.dot(p).powi(2))
        .sum::<f64>()
        / n as f64;
    let mf = m as f64;
    let nf = n as f64;
    let skew_stat = nf * b1 / 6.0;
    let skew_df = mf * (mf + 1.0) * (mf + 2.0) / 6.0;
    let kurt_z = (b2 - mf * (mf + 2.0)) / (8.0 * mf * (mf + 2.0) / nf).sqrt();
    Ok(MardiaResult {
        skewness: b1,
        skewness_statistic: skew_stat,
        skewness_df: skew_df,
        skewness_p: chi_square_sf(skew_stat, skew_df),
        kurtosis: b2,
        kurtosis_z: kurt_z,
        kurtosis_p: normal_two_sided(kurt_z),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn gof_exact_counts() {
        let r = chi_square_gof(&[25, 25, 50], &[0.25, 0.25, 0.5]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.df, 2);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gof_impossible_cell() {
        let r = chi_square_gof(&[1, 5], &[0.0, 1.0]).unwrap();
        assert_eq!(r.p_value, 0.0);
    }

    #[test]
    fn chi_square_tail_reference() {
        // P(chi2_1 > 3.841459) = 0.05
        assert!((chi_square_sf(3.841_458_820_694_124, 1.0) - 0.05).abs() < 1e-9);
    }

    #[test]
    fn tv_and_pmf() {
        let p = binned_pmf([0, 0, 1, 7], 2);
        assert_eq!(p, vec![0.5, 0.25, 0.0, 0.25]);
        assert!((total_variation(&p, &[0.25, 0.25, 0.25, 0.25]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn mardia_accepts_gaussian_rejects_skewed() {
        let mut rng = crate::SimRng::seed_from_u64(5);
        let gauss: Vec<Vec<f64>> = (0..2000)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                vec![a, 0.5 * a + b]
            })
            .collect();
        assert!(mardia(&gauss).unwrap().p_value() > 0.001);
        let skewed: Vec<Vec<f64>> = gauss.iter().map(|r| vec![r[0].exp(), r[1]]).collect();
        assert!(mardia(&skewed).unwrap().p_value() < 1e-6);
    }

    #[test]
    fn covariance_of_line() {
        let rows = vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![2.0, 4.0]];
        let c = covariance(&rows);
        assert!((c[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((c[(0, 1)] - 2.0).abs() < 1e-15);
        assert!((c[(1, 1)] - 4.0).abs() < 1e-15);
    }
}
