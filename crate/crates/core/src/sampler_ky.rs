//! Knuth-Yao discrete Gaussian sampler.
//!
//! The probability matrix holds the one-sided probabilities `p_0 = rho(0)/S`
//! and `p_i = 2 rho(i)/S` (`i >= 1`), truncated to `lambda` bits, where
//! `rho(i) = exp(-i^2 / 2 sigma^2)` and `S` normalises the two-sided mass. A
//! random walk over the implicit discrete distribution generating tree picks a
//! row; a final bit supplies the sign.
//!
//! The walk keeps the signed distance `d`. Each column applies
//! `d <- 2d + (1 - r) - hd[col]`; a negative `d` means the walk landed on a
//! terminal in this column, found by scanning rows and adding their bits
//! until `d` reaches zero. Walks that run off the last column, or whose `d`
//! exceeds `hd_sum`, restart with fresh bits.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::arith::{ceil_log2, GaussianParams};
use crate::datapath::DatapathError;
use crate::precise;
use crate::rng::BitSource;

pub const MAX_RESTARTS: u32 = 10_000;
const MAGIC: &[u8; 4] = b"KYPM";

#[derive(Debug, Error)]
pub enum KyError {
    #[error("sampler restarted {0} times without producing a sample")]
    SamplerStuck(u32),
    #[error("walk state d = {d} left [{lo}, {hi}]")]
    WalkBound { d: i64, lo: i64, hi: i64 },
    #[error("unterminated mass {mass:e} after {max_depth} bits")]
    DepthOverflow { mass: f64, max_depth: u32 },
    #[error("malformed probability matrix: {0}")]
    Malformed(String),
    #[error(transparent)]
    Datapath(#[from] DatapathError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    /// Present when built from parameters, absent when loaded from a file.
    pub gauss: Option<GaussianParams>,
    pub lambda: u32,
    /// `rows[i]` is the `lambda`-bit truncation of `p_i`; column 0 is its most significant bit.
    pub rows: Vec<u128>,
    pub hd: Vec<u32>,
    pub hd_sum: u64,
    pub d_width: u32,
    col_sets: Vec<Vec<u64>>,
}

impl ProbabilityMatrix {
    pub fn from_rows(rows: Vec<u128>, lambda: u32) -> Result<Self, KyError> {
        if !(1..=128).contains(&lambda) {
            return Err(KyError::Malformed(format!("lambda = {lambda}")));
        }
        if rows.is_empty() {
            return Err(KyError::Malformed("no rows".into()));
        }
        if lambda < 128 && rows.iter().any(|&r| r >> lambda != 0) {
            return Err(KyError::Malformed("row wider than lambda bits".into()));
        }
        let over = rows
            .iter()
            .try_fold(0u128, |acc, &r| acc.checked_add(r))
            .is_none_or(|total| lambda < 128 && total > 1u128 << lambda);
        if over {
            return Err(KyError::Malformed("probabilities sum past 1".into()));
        }
        let words = rows.len().div_ceil(64);
        let mut col_sets = vec![vec![0u64; words]; lambda as usize];
        let mut hd = vec![0u32; lambda as usize];
        for (i, &r) in rows.iter().enumerate() {
            for col in 0..lambda {
                if (r >> (lambda - 1 - col)) & 1 == 1 {
                    col_sets[col as usize][i / 64] |= 1 << (i % 64);
                    hd[col as usize] += 1;
                }
            }
        }
        let hd_sum: u64 = hd.iter().map(|&h| h as u64).sum();
        if hd_sum == 0 {
            return Err(KyError::Malformed("all-zero matrix".into()));
        }
        Ok(ProbabilityMatrix {
            gauss: None,
            lambda,
            rows,
            hd,
            hd_sum,
            d_width: ceil_log2(hd_sum) + 1,
            col_sets,
        })
    }

    /// Rows given as bit strings such as `"1010"`, each `lambda` characters.
    pub fn from_bit_strings(rows: &[&str]) -> Result<Self, KyError> {
        let lambda = rows.first().map_or(0, |r| r.len()) as u32;
        let mut parsed = Vec::with_capacity(rows.len());
        for r in rows {
            if r.len() as u32 != lambda {
                return Err(KyError::Malformed("ragged rows".into()));
            }
            let v = u128::from_str_radix(r, 2)
                .map_err(|_| KyError::Malformed(format!("bad row `{r}`")))?;
            parsed.push(v);
        }
        Self::from_rows(parsed, lambda)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn max_value(&self) -> u64 {
        self.rows.len() as u64 - 1
    }

    #[inline]
    pub fn bit(&self, row: usize, col: u32) -> u8 {
        ((self.rows[row] >> (self.lambda - 1 - col)) & 1) as u8
    }

    /// Rows whose probability truncated to zero.
    pub fn underflow_rows(&self) -> Vec<usize> {
        (0..self.rows.len()).filter(|&i| self.rows[i] == 0).collect()
    }

    /// `1 - sum p_i` in units of `2^-lambda`.
    pub fn deficit_raw(&self) -> u128 {
        let total: u128 = self.rows.iter().sum();
        let one = if self.lambda == 128 { u128::MAX } else { 1u128 << self.lambda };
        one.saturating_sub(total)
    }

    /// Row of the `k`-th set bit (1-based) in column `col`.
    fn select(&self, col: u32, mut k: u32) -> Option<usize> {
        for (w, &word) in self.col_sets[col as usize].iter().enumerate() {
            let c = word.count_ones();
            if k <= c {
                let mut word = word;
                for _ in 1..k {
                    word &= word - 1;
                }
                return Some(w * 64 + word.trailing_zeros() as usize);
            }
            k -= c;
        }
        None
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let row_bytes = self.lambda.div_ceil(8) as usize;
        let pad = row_bytes as u32 * 8 - self.lambda;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.rows.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.lambda.to_le_bytes());
        for &r in &self.rows {
            let packed = r << pad;
            out.extend_from_slice(&packed.to_be_bytes()[16 - row_bytes..]);
        }
        for &h in &self.hd {
            out.extend_from_slice(&h.to_le_bytes());
        }
        out.extend_from_slice(&self.hd_sum.to_le_bytes());
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, KyError> {
        let bad = |m: &str| KyError::Malformed(m.to_string());
        if data.len() < 12 || &data[..4] != MAGIC {
            return Err(bad("missing KYPM header"));
        }
        let n = u32::from_le_bytes(data[4..8].try_into().unwrap()) as usize;
        let lambda = u32::from_le_bytes(data[8..12].try_into().unwrap());
        if !(1..=128).contains(&lambda) {
            return Err(bad("lambda out of range"));
        }
        let row_bytes = lambda.div_ceil(8) as usize;
        let pad = row_bytes as u32 * 8 - lambda;
        let expected = 12 + n * row_bytes + 4 * lambda as usize + 8;
        if data.len() != expected {
            return Err(KyError::Malformed(format!(
                "expected {expected} bytes, found {}",
                data.len()
            )));
        }
        let mut rows = Vec::with_capacity(n);
        let mut pos = 12;
        for _ in 0..n {
            let mut buf = [0u8; 16];
            buf[16 - row_bytes..].copy_from_slice(&data[pos..pos + row_bytes]);
            let packed = u128::from_be_bytes(buf);
            if pad > 0 && packed & ((1u128 << pad) - 1) != 0 {
                return Err(bad("nonzero padding bits"));
            }
            rows.push(packed >> pad);
            pos += row_bytes;
        }
        let pm = Self::from_rows(rows, lambda)?;
        for col in 0..lambda as usize {
            let h = u32::from_le_bytes(data[pos..pos + 4].try_into().unwrap());
            if h != pm.hd[col] {
                return Err(KyError::Malformed(format!("hd[{col}] does not match the rows")));
            }
            pos += 4;
        }
        let hd_sum = u64::from_le_bytes(data[pos..pos + 8].try_into().unwrap());
        if hd_sum != pm.hd_sum {
            return Err(bad("hd_sum does not match the rows"));
        }
        Ok(pm)
    }

    pub fn save(&self, path: &Path) -> Result<(), KyError> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, KyError> {
        let mut data = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut data)?;
        Self::from_bytes(&data)
    }
}

/// One-sided probabilities `floor(p_i * 2^lambda)` for `i in [0, max_value]`.
pub fn one_sided_probabilities(gauss: &GaussianParams) -> Vec<u128> {
    let sigma = precise::from_decimal_f64(gauss.sigma);
    let rho: Vec<precise::Float> = (0..=gauss.max_value as i64)
        .map(|i| precise::gaussian_rho(i, &sigma))
        .collect();
    let two = precise::from_int(2);
    let mut total = rho[0].clone();
    for r in &rho[1..] {
        total += &two * r;
    }
    let cap = if gauss.lambda == 128 {
        u128::MAX
    } else {
        (1u128 << gauss.lambda) - 1
    };
    rho.iter()
        .enumerate()
        .map(|(i, r)| {
            let p = if i == 0 { r.clone() } else { &two * r } / &total;
            precise::floor_scaled(&p, gauss.lambda).min(cap)
        })
        .collect()
}

pub fn build_probability_matrix(gauss: &GaussianParams) -> Result<ProbabilityMatrix, KyError> {
    let mut pm = ProbabilityMatrix::from_rows(one_sided_probabilities(gauss), gauss.lambda)?;
    pm.gauss = Some(*gauss);
    Ok(pm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KySample {
    pub value: i64,
    pub bits_used: u64,
    /// Column updates executed, across restarts.
    pub steps: u64,
    pub restarts: u32,
}

/// Arithmetic backend for the walk's `d` register.
pub trait KyArith {
    /// `2d + carry_in - hd` on a `width`-bit two's-complement register.
    fn column_update(&mut self, d: i64, carry_in: u8, hd: u32, width: u32) -> Result<i64, KyError>;
    /// `d + bit` during the row scan.
    fn scan_add(&mut self, d: i64, bit: u8, width: u32) -> Result<i64, KyError>;
    /// Whether the row scan issues one add per row. When false the terminal
    /// row is located directly from the column bitsets with the same result.
    fn per_row_scan(&self) -> bool {
        true
    }
}

/// Plain integer arithmetic.
#[derive(Debug, Default, Clone, Copy)]
pub struct NativeKy;

impl KyArith for NativeKy {
    #[inline]
    fn column_update(&mut self, d: i64, carry_in: u8, hd: u32, _width: u32) -> Result<i64, KyError> {
        Ok(2 * d + carry_in as i64 - hd as i64)
    }
    #[inline]
    fn scan_add(&mut self, d: i64, bit: u8, _width: u32) -> Result<i64, KyError> {
        Ok(d + bit as i64)
    }
    fn per_row_scan(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KyOptions {
    /// Restart as soon as `d > hd_sum`.
    pub early_stop: bool,
}

impl Default for KyOptions {
    fn default() -> Self {
        KyOptions { early_stop: true }
    }
}

pub fn ky_sample(pm: &ProbabilityMatrix, src: &mut BitSource) -> Result<KySample, KyError> {
    ky_sample_with(pm, src, &mut NativeKy, KyOptions::default())
}

pub fn ky_sample_with(
    pm: &ProbabilityMatrix,
    src: &mut BitSource,
    arith: &mut impl KyArith,
    opts: KyOptions,
) -> Result<KySample, KyError> {
    let start_bits = src.bits_consumed();
    let n = pm.n_rows() as i64;
    let hd_sum = pm.hd_sum as i64;
    let width = pm.d_width;
    let mut steps = 0u64;
    for restarts in 0..MAX_RESTARTS {
        let mut d: i64 = 0;
        let mut col = 0u32;
        while col < pm.lambda {
            let r = src.next_bit();
            d = arith.column_update(d, 1 - r, pm.hd[col as usize], width)?;
            steps += 1;
            if d < -n {
                return Err(KyError::WalkBound {
                    d,
                    lo: -n,
                    hi: hd_sum,
                });
            }
            if d < 0 {
                let row = if arith.per_row_scan() {
                    let mut found = None;
                    for row in 0..pm.n_rows() {
                        d = arith.scan_add(d, pm.bit(row, col), width)?;
                        if d == 0 {
                            found = Some(row);
                            break;
                        }
                    }
                    found
                } else {
                    pm.select(col, (-d) as u32)
                };
                let Some(row) = row else {
                    return Err(KyError::Malformed(format!("column {col} scan ran out of rows")));
                };
                let sign = src.next_bit();
                let value = if sign == 1 { -(row as i64) } else { row as i64 };
                return Ok(KySample {
                    value,
                    bits_used: src.bits_consumed() - start_bits,
                    steps,
                    restarts,
                });
            }
            if d > hd_sum {
                if !opts.early_stop {
                    // 2d + c - hd > d from here on, so the walk cannot end; read out the columns.
                    for _ in col + 1..pm.lambda {
                        src.next_bit();
                        steps += 1;
                    }
                }
                break;
            }
            col += 1;
        }
    }
    Err(KyError::SamplerStuck(MAX_RESTARTS))
}

pub fn ky_sample_many(
    pm: &ProbabilityMatrix,
    src: &mut BitSource,
    count: usize,
) -> Result<Vec<i64>, KyError> {
    (0..count).map(|_| ky_sample(pm, src).map(|s| s.value)).collect()
}

/// Unterminated mass [`ky_sample_exhaustive_check`] tolerates after `max_depth` bits.
pub const EXHAUSTIVE_TOLERANCE: f64 = 1.0 / (1u64 << 40) as f64;

/// Exact output distribution of the walk, indexed by `value + max_value`.
///
/// Enumerates every bit string of length up to `max_depth`, aggregating
/// strings that reach the same walk state. Restarts are followed. Returns the
/// terminated mass normalised by its total; fails when more than
/// [`EXHAUSTIVE_TOLERANCE`] of the mass is still walking at `max_depth`.
pub fn ky_sample_exhaustive_check(pm: &ProbabilityMatrix, max_depth: u32) -> Result<Vec<f64>, KyError> {
    let n = pm.n_rows();
    let lambda = pm.lambda as usize;
    let mut out = vec![0.0f64; 2 * n - 1];
    // mass[col][d] for walks about to read column col with register d (d >= 0).
    let width = pm.hd_sum as usize + 2;
    let mut mass = vec![vec![0.0f64; width]; lambda];
    mass[0][0] = 1.0;
    let mut pending = 1.0;
    for _ in 0..max_depth {
        if pending < f64::EPSILON * EXHAUSTIVE_TOLERANCE {
            break;
        }
        let mut next = vec![vec![0.0f64; width]; lambda];
        for col in 0..lambda {
            for d in 0..width {
                let w = mass[col][d];
                if w == 0.0 {
                    continue;
                }
                let half = w / 2.0;
                for r in 0..2i64 {
                    let nd = 2 * d as i64 + (1 - r) - pm.hd[col] as i64;
                    if nd < 0 {
                        // Terminal: scan rows, then one sign bit.
                        let mut acc = nd;
                        let mut hit = None;
                        for row in 0..n {
                            acc += pm.bit(row, col as u32) as i64;
                            if acc == 0 {
                                hit = Some(row);
                                break;
                            }
                        }
                        let row = hit.ok_or_else(|| KyError::Malformed("scan ran out of rows".into()))?;
                        out[n - 1 + row] += half / 2.0;
                        out[n - 1 - row] += half / 2.0;
                    } else if nd as usize >= width - 1 || col + 1 == lambda {
                        next[0][0] += half;
                    } else {
                        next[col + 1][nd as usize] += half;
                    }
                }
            }
        }
        mass = next;
        pending = mass.iter().flatten().sum();
    }
    if pending > EXHAUSTIVE_TOLERANCE {
        return Err(KyError::DepthOverflow {
            mass: pending,
            max_depth,
        });
    }
    let total: f64 = out.iter().sum();
    Ok(out.into_iter().map(|m| m / total).collect())
}
