//! Goodness-of-fit checks for sampler output.

use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::arith::GaussianParams;
use crate::precise;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("histogram is empty")]
    EmptyHistogram,
    #[error("fewer than two bins left after merging")]
    InsufficientBins,
    #[error("sample {value} outside [-{max_value}, {max_value}]")]
    OutOfRange { value: i64, max_value: u64 },
    #[error("histogram and target supports differ")]
    SupportMismatch,
    #[error("line {line}: bad sample `{text}`")]
    Parse { line: usize, text: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Counts per value in `[-max_value, max_value]`, indexed by `value + max_value`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmpiricalHistogram {
    pub max_value: u64,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl EmpiricalHistogram {
    pub fn new(max_value: u64) -> Self {
        EmpiricalHistogram {
            max_value,
            counts: vec![0; 2 * max_value as usize + 1],
            total: 0,
        }
    }

    pub fn from_samples(samples: &[i64], max_value: u64) -> Result<Self, StatsError> {
        let mut h = Self::new(max_value);
        for &v in samples {
            h.add(v)?;
        }
        Ok(h)
    }

    pub fn add(&mut self, value: i64) -> Result<(), StatsError> {
        if value.unsigned_abs() > self.max_value {
            return Err(StatsError::OutOfRange {
                value,
                max_value: self.max_value,
            });
        }
        self.counts[(value + self.max_value as i64) as usize] += 1;
        self.total += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &EmpiricalHistogram) -> Result<(), StatsError> {
        if other.max_value != self.max_value {
            return Err(StatsError::SupportMismatch);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        Ok(())
    }

    pub fn count(&self, value: i64) -> u64 {
        self.counts[(value + self.max_value as i64) as usize]
    }
}

/// Two-sided discrete Gaussian on `[-max_value, max_value]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDistribution {
    pub sigma: f64,
    pub max_value: u64,
    /// `floor(p(v) * 2^127)`, indexed by `v + max_value`.
    pub fixed: Vec<u128>,
    pub probs: Vec<f64>,
}

impl TargetDistribution {
    pub const FRAC_BITS: u32 = 127;

    pub fn new(gauss: &GaussianParams) -> Self {
        let sigma = precise::from_decimal_f64(gauss.sigma);
        let mv = gauss.max_value as i64;
        let rho: Vec<precise::Float> = (0..=mv).map(|x| precise::gaussian_rho(x, &sigma)).collect();
        let two = precise::from_int(2);
        let mut total = rho[0].clone();
        for r in &rho[1..] {
            total += &two * r;
        }
        let one_sided: Vec<precise::Float> = rho.iter().map(|r| r / &total).collect();
        let mut fixed = Vec::with_capacity(2 * mv as usize + 1);
        let mut probs = Vec::with_capacity(2 * mv as usize + 1);
        for v in -mv..=mv {
            let p = &one_sided[v.unsigned_abs() as usize];
            fixed.push(precise::floor_scaled(p, Self::FRAC_BITS));
            probs.push(precise::to_f64(p));
        }
        TargetDistribution {
            sigma: gauss.sigma,
            max_value: gauss.max_value,
            fixed,
            probs,
        }
    }

    pub fn prob(&self, value: i64) -> f64 {
        self.probs[(value + self.max_value as i64) as usize]
    }

    /// `1 - sum p` in units of `2^-127`.
    pub fn deficit_fixed(&self) -> u128 {
        let sum: u128 = self.fixed.iter().sum();
        (1u128 << Self::FRAC_BITS) - sum
    }

    /// Standard deviation of the truncated distribution.
    pub fn std(&self) -> f64 {
        let mv = self.max_value as i64;
        (-mv..=mv)
            .map(|v| (v * v) as f64 * self.prob(v))
            .sum::<f64>()
            .sqrt()
    }
}

fn check_support(h: &EmpiricalHistogram, t: &TargetDistribution) -> Result<(), StatsError> {
    if h.max_value != t.max_value {
        return Err(StatsError::SupportMismatch);
    }
    if h.total == 0 {
        return Err(StatsError::EmptyHistogram);
    }
    Ok(())
}

pub fn tv_distance(h: &EmpiricalHistogram, t: &TargetDistribution) -> Result<f64, StatsError> {
    check_support(h, t)?;
    let n = h.total as f64;
    Ok(0.5
        * h.counts
            .iter()
            .zip(&t.probs)
            .map(|(&c, &p)| (c as f64 / n - p).abs())
            .sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub stat: f64,
    pub dof: u64,
    pub p: f64,
}

/// Pearson test after merging bins, left to right, until each expects at least `min_expected`.
pub fn chi_square(h: &EmpiricalHistogram, t: &TargetDistribution, min_expected: f64) -> Result<ChiSquare, StatsError> {
    check_support(h, t)?;
    let n = h.total as f64;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for (&c, &p) in h.counts.iter().zip(&t.probs) {
        obs += c as f64;
        exp += p * n;
        if exp >= min_expected {
            bins.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if let Some(last) = bins.last_mut() {
        last.0 += obs;
        last.1 += exp;
    }
    if bins.len() < 2 {
        return Err(StatsError::InsufficientBins);
    }
    let stat: f64 = bins.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    let dof = bins.len() as u64 - 1;
    let p = ChiSquared::new(dof as f64).expect("positive dof").sf(stat);
    Ok(ChiSquare { stat, dof, p })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
    pub target_std: f64,
    /// Mean against 0, in standard errors.
    pub z_mean: f64,
    /// Sample std against the target std, in standard errors of a Gaussian std estimate.
    pub z_std: f64,
}

pub fn moment_check(h: &EmpiricalHistogram, t: &TargetDistribution) -> Result<Moments, StatsError> {
    check_support(h, t)?;
    let n = h.total as f64;
    let mv = h.max_value as i64;
    let mut sum = 0i128;
    let mut sum_sq = 0i128;
    for v in -mv..=mv {
        let c = h.count(v) as i128;
        sum += c * v as i128;
        sum_sq += c * (v * v) as i128;
    }
    let mean = sum as f64 / n;
    let var = sum_sq as f64 / n - mean * mean;
    let std = var.max(0.0).sqrt();
    let target_std = t.std();
    Ok(Moments {
        mean,
        std,
        target_std,
        z_mean: mean / (target_std / n.sqrt()),
        z_std: (std - target_std) / (target_std / (2.0 * n).sqrt()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub tv: f64,
    pub chi2: ChiSquare,
    pub mean: f64,
    pub std: f64,
}

pub const DEFAULT_MIN_EXPECTED: f64 = 5.0;

pub fn validate(h: &EmpiricalHistogram, t: &TargetDistribution) -> Result<StatsReport, StatsError> {
    let m = moment_check(h, t)?;
    Ok(StatsReport {
        tv: tv_distance(h, t)?,
        chi2: chi_square(h, t, DEFAULT_MIN_EXPECTED)?,
        mean: m.mean,
        std: m.std,
    })
}

/// One integer per line.
pub fn read_samples(path: &Path) -> Result<Vec<i64>, StatsError> {
    let text = std::fs::read_to_string(path)?;
    parse_samples(&text)
}

pub fn parse_samples(text: &str) -> Result<Vec<i64>, StatsError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().map_err(|_| StatsError::Parse {
                line: i + 1,
                text: l.to_string(),
            })
        })
        .collect()
}

pub fn format_samples(samples: &[i64]) -> String {
    let mut out = String::with_capacity(samples.len() * 4);
    for v in samples {
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp_target() -> TargetDistribution {
        TargetDistribution::new(&GaussianParams::with_sigma(3.33).unwrap())
    }

    fn proportional(t: &TargetDistribution, total: f64) -> EmpiricalHistogram {
        let mut h = EmpiricalHistogram::new(t.max_value);
        for (c, &p) in h.counts.iter_mut().zip(&t.probs) {
            *c = (p * total).round() as u64;
        }
        h.total = h.counts.iter().sum();
        h
    }

    #[test]
    fn target_sums_to_one() {
        let t = lp_target();
        assert_eq!(t.fixed.len(), 59);
        assert!(t.deficit_fixed() < 1u128 << 27, "deficit {}", t.deficit_fixed());
        let s: f64 = t.probs.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tv_extremes() {
        let g = GaussianParams::new(0.2, 5.0, 64).unwrap();
        assert_eq!(g.max_value, 1);
        let mut t = TargetDistribution::new(&g);
        t.probs = vec![0.5, 0.0, 0.5];
        let h = EmpiricalHistogram::from_samples(&[1, 1, 1], 1).unwrap();
        assert!((tv_distance(&h, &t).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(
            tv_distance(&EmpiricalHistogram::new(1), &t),
            Err(StatsError::EmptyHistogram)
        ));
    }

    #[test]
    fn proportional_histogram_is_perfect() {
        let mut t = lp_target();
        let h = proportional(&t, 1e9);
        t.probs = h.counts.iter().map(|&c| c as f64 / h.total as f64).collect();
        assert!(tv_distance(&h, &t).unwrap() < 1e-15);
        let chi = chi_square(&h, &t, 5.0).unwrap();
        assert!(chi.stat < 1e-12, "{chi:?}");
        assert!(chi.p > 0.999);
    }

    #[test]
    fn symmetric_mean_is_zero() {
        let h = EmpiricalHistogram::from_samples(&[-3, -1, 0, 1, 3, 2, -2], 29).unwrap();
        let m = moment_check(&h, &lp_target()).unwrap();
        assert_eq!(m.mean, 0.0);
    }

    #[test]
    fn insufficient_bins() {
        let t = lp_target();
        let h = EmpiricalHistogram::from_samples(&[0, 1], 29).unwrap();
        assert!(matches!(chi_square(&h, &t, 5.0), Err(StatsError::InsufficientBins)));
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(EmpiricalHistogram::from_samples(&[30], 29).is_err());
    }

    #[test]
    fn samples_text_round_trip() {
        let s = vec![0, -5, 29, -29, 3];
        assert_eq!(parse_samples(&format_samples(&s)).unwrap(), s);
        assert!(parse_samples("1\nx\n").is_err());
    }

    #[test]
    fn report_json_schema() {
        let t = lp_target();
        let h = proportional(&t, 1e6);
        let r = validate(&h, &t).unwrap();
        let v: serde_json::Value = serde_json::to_value(r).unwrap();
        for key in ["tv", "mean", "std"] {
            assert!(v[key].is_f64());
        }
        assert!(v["chi2"]["stat"].is_f64());
        assert!(v["chi2"]["dof"].is_u64());
        assert!(v["chi2"]["p"].is_f64());
    }
}
