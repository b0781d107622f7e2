//! Discrete Ziggurat sampler.
//!
//! The one-sided density `rho(x) = exp(-x^2 / 2 sigma^2)` on `[0, max_value]`
//! is covered by `m` horizontal rectangles of equal area. Rectangle `i` spans
//! `x in [0, x_floor[i]]` and heights `[y_bar[i], y_bar[i-1])`. All heights are
//! raw integers scaled by `2^lambda`; `y_bar[0]` may exceed `2^lambda` because
//! the top rectangle overshoots the peak.
//!
//! A draw picks a rectangle, a sign, a bit `b`, a column `x` and a height
//! `y'`. Columns left of `x_floor[i-1]` lie wholly under the curve and are
//! accepted at once. Other points are tested against the chord through the
//! rectangle corners (a cheap bound on the curve) and, when that is
//! inconclusive, against the precomputed curve value `px[x]`. Every decision
//! equals the plain test "the point lies under the curve".
//!
//! Deviations from the textbook pseudo-code, needed for a correct output
//! distribution:
//! - the two comparisons in each shortcut branch are OR-ed;
//! - `x = 0` with `b = 1` is rejected, which halves zero's double weight;
//! - the top rectangle tests `x = 0, b = 0` against the curve, because it
//!   extends above the peak;
//! - in the convex region the chord is raised by a per-rectangle margin so it
//!   bounds the curve from above despite flooring of the corners.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arith::GaussianParams;
use crate::datapath::DatapathError;
use crate::precise::{self, Float};
use crate::rng::BitSource;

pub const DEFAULT_M: usize = 64;
pub const MAX_REJECTIONS: u64 = 1_000_000;
const BISECTION_STEPS: usize = 200;

#[derive(Debug, Error)]
pub enum ZigError {
    #[error("rectangle partition failed: {0}")]
    PartitionFailure(String),
    #[error("{0} consecutive rejections")]
    SamplerStuck(u64),
    #[error("rectangle {i} / column {x} out of range")]
    IndexOutOfRange { i: usize, x: u64 },
    #[error("invalid Ziggurat table: {0}")]
    InvalidTable(String),
    #[error(transparent)]
    Datapath(#[from] DatapathError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Position of a rectangle relative to `sigma`, the inflection point of `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SigmaClass {
    /// `x_floor[i] + 1 <= sigma`: the curve is concave over the rectangle.
    Concave = 0,
    /// `sigma <= x_floor[i-1]`: the curve is convex over the rectangle.
    Convex = 1,
    /// The rectangle straddles `sigma`.
    Straddle = 2,
}

impl SigmaClass {
    pub fn classify(x_prev: u64, x_cur: u64, sigma: f64) -> Self {
        if (x_cur + 1) as f64 <= sigma {
            SigmaClass::Concave
        } else if sigma <= x_prev as f64 {
            SigmaClass::Convex
        } else {
            SigmaClass::Straddle
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(SigmaClass::Concave),
            1 => Some(SigmaClass::Convex),
            2 => Some(SigmaClass::Straddle),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZigguratTable {
    pub gauss: GaussianParams,
    pub m: usize,
    pub lambda: u32,
    pub x_floor: Vec<u64>,
    /// `floor(y_i * 2^lambda)`, strictly decreasing.
    pub y_bar: Vec<u128>,
    /// Slope of rectangle `i` at index `i - 1`, scaled by `2^lambda` and
    /// truncated toward zero; `None` where `x_floor[i-1] == x_floor[i]`.
    pub slope_k: Vec<Option<i128>>,
    pub sigma_class: Vec<SigmaClass>,
    /// `floor(rho(x) * 2^lambda)`; `px[0]` is stored as `2^lambda - 1`.
    pub px: Vec<u128>,
    lift: Vec<u128>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZigSample {
    pub value: i64,
    pub attempts: u64,
    pub bits_used: u64,
}

/// Arithmetic backend for the decision and sLine operations.
pub trait ZigArith {
    /// `a - b` for the rectangle height and curve offset subtractions.
    fn sub(&mut self, a: u128, b: u128) -> Result<u128, ZigError>;
    /// `y' * (y_bar[i-1] - y_bar[i])`, both operands below `2^64`.
    fn ybar_mul(&mut self, y: u64, height: u64) -> Result<u128, ZigError>;
    /// `|k| * (x_floor[i] - x)`, the sLine product.
    fn line_mul(&mut self, k: u64, dx: u64) -> Result<u128, ZigError>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct NativeZig;

impl ZigArith for NativeZig {
    #[inline]
    fn sub(&mut self, a: u128, b: u128) -> Result<u128, ZigError> {
        Ok(a - b)
    }
    #[inline]
    fn ybar_mul(&mut self, y: u64, height: u64) -> Result<u128, ZigError> {
        Ok(y as u128 * height as u128)
    }
    #[inline]
    fn line_mul(&mut self, k: u64, dx: u64) -> Result<u128, ZigError> {
        Ok(k as u128 * dx as u128)
    }
}

/// `floor(rho(x) * 2^lambda)` for `x in [0, max_value]`, with `x = 0` stored as `2^lambda - 1`.
pub fn precompute_px_table(gauss: &GaussianParams) -> Vec<u128> {
    let sigma = precise::from_decimal_f64(gauss.sigma);
    let mut px: Vec<u128> = (0..=gauss.max_value as i64)
        .map(|x| precise::floor_scaled(&precise::gaussian_rho(x, &sigma), gauss.lambda))
        .collect();
    px[0] = (1u128 << gauss.lambda) - 1;
    px
}

struct Partition {
    x: Vec<Float>,
    y: Vec<Float>,
}

/// Walk down from the tail with common area `area`; `None` once a height reaches the peak early.
fn partition(area: &Float, m: usize, max_value: u64, sigma: &Float) -> Option<Partition> {
    let one = precise::from_int(1);
    let minus_two = precise::from_int(-2);
    let mut x = vec![precise::from_int(0); m + 1];
    let mut y = vec![precise::from_int(0); m + 1];
    x[m] = precise::from_int(max_value as i128);
    y[m] = precise::gaussian_rho(max_value as i64, sigma);
    for i in (1..=m).rev() {
        let width = precise::from_int(x[i].floor().to_int().value().try_into().ok()?) + &one;
        y[i - 1] = &y[i] + area / &width;
        if i > 1 {
            if y[i - 1] >= one {
                return None;
            }
            x[i - 1] = sigma * precise::sqrt(&(&minus_two * precise::ln(&y[i - 1])));
        }
    }
    Some(Partition { x, y })
}

pub fn build_ziggurat_table(gauss: &GaussianParams, m: usize) -> Result<ZigguratTable, ZigError> {
    if m < 2 {
        return Err(ZigError::PartitionFailure(format!("m = {m} must be at least 2")));
    }
    if gauss.lambda > 64 {
        return Err(ZigError::PartitionFailure(format!(
            "lambda = {} exceeds the 64-bit sampler registers",
            gauss.lambda
        )));
    }
    let sigma = precise::from_decimal_f64(gauss.sigma);
    let one = precise::from_int(1);
    let mut lo = precise::from_int(0);
    let mut hi = precise::from_int(gauss.max_value as i128 + 2);
    for _ in 0..BISECTION_STEPS {
        let mid = (&lo + &hi) / precise::from_int(2);
        match partition(&mid, m, gauss.max_value, &sigma) {
            Some(p) if p.y[0] < one => lo = mid,
            _ => hi = mid,
        }
    }
    let part = partition(&hi, m, gauss.max_value, &sigma).ok_or_else(|| {
        ZigError::PartitionFailure(format!(
            "no common area reaches the peak (sigma = {}, m = {m})",
            gauss.sigma
        ))
    })?;
    if part.y[0] < one {
        return Err(ZigError::PartitionFailure("bisection did not converge".into()));
    }
    let x_floor: Vec<u64> = part
        .x
        .iter()
        .map(|x| precise::floor_u128(x) as u64)
        .collect();
    let y_bar: Vec<u128> = part
        .y
        .iter()
        .map(|y| precise::floor_scaled(y, gauss.lambda))
        .collect();
    ZigguratTable::assemble(*gauss, x_floor, y_bar, precompute_px_table(gauss))
        .map_err(|e| match e {
            ZigError::InvalidTable(msg) => ZigError::PartitionFailure(msg),
            other => other,
        })
}

impl ZigguratTable {
    /// Derive slopes, classes and margins from corners and curve values, validating as it goes.
    pub fn assemble(
        gauss: GaussianParams,
        x_floor: Vec<u64>,
        y_bar: Vec<u128>,
        px: Vec<u128>,
    ) -> Result<Self, ZigError> {
        let bad = |msg: String| Err(ZigError::InvalidTable(msg));
        let lambda = gauss.lambda;
        if !(8..=64).contains(&lambda) {
            return bad(format!("lambda = {lambda} outside [8, 64]"));
        }
        let m = x_floor.len().saturating_sub(1);
        if m < 2 || y_bar.len() != m + 1 {
            return bad("need m >= 2 and m + 1 corners".into());
        }
        if x_floor[0] != 0 || x_floor[m] != gauss.max_value {
            return bad("x_floor must run from 0 to max_value".into());
        }
        if x_floor.windows(2).any(|w| w[0] > w[1]) {
            return bad("x_floor must be non-decreasing".into());
        }
        if y_bar.windows(2).any(|w| w[0] <= w[1]) {
            return bad("y_bar must be strictly decreasing".into());
        }
        let one = 1u128 << lambda;
        if y_bar[1] >= one {
            return bad("y_bar[1] must lie below the peak".into());
        }
        if (1..=m).any(|i| y_bar[i - 1] - y_bar[i] >= one) {
            return bad("rectangle taller than 2^lambda".into());
        }
        if px.len() as u64 != gauss.max_value + 1 || px[0] != one - 1 {
            return bad("px must hold max_value + 1 entries with px[0] = 2^lambda - 1".into());
        }
        if px.windows(2).any(|w| w[0] <= w[1] && w[0] != 0) {
            return bad("px must be decreasing".into());
        }
        let mut slope_k = Vec::with_capacity(m);
        let mut sigma_class = Vec::with_capacity(m);
        let mut lift = Vec::with_capacity(m);
        for i in 1..=m {
            let (xa, xb) = (x_floor[i - 1], x_floor[i]);
            let y_hat_prev = if i == 1 { one } else { y_bar[i - 1] };
            if xa == xb {
                slope_k.push(None);
                lift.push(0);
            } else {
                let dx = (xb - xa) as i128;
                // Integer division truncates toward zero.
                slope_k.push(Some((y_bar[i] as i128 - y_hat_prev as i128) / dx));
                let over_a = px[xa as usize].saturating_sub(y_bar[i - 1]);
                let over_b = px[xb as usize].saturating_sub(y_bar[i]);
                lift.push(over_a.max(over_b) + dx as u128 + 2);
            }
            sigma_class.push(SigmaClass::classify(xa, xb, gauss.sigma));
        }
        let mut gauss = gauss;
        gauss.max_value = x_floor[m];
        Ok(ZigguratTable {
            gauss,
            m,
            lambda,
            x_floor,
            y_bar,
            slope_k,
            sigma_class,
            px,
            lift,
        })
    }

    /// sLine for rectangle `i` at column `x`, scaled by `2^lambda`; `None` is the `-1` flag.
    pub fn s_line(&self, i: usize, x: u64) -> Result<Option<i128>, ZigError> {
        self.s_line_with(i, x, &mut NativeZig)
    }

    pub fn s_line_with(&self, i: usize, x: u64, arith: &mut impl ZigArith) -> Result<Option<i128>, ZigError> {
        if i == 0 || i > self.m || x > self.x_floor[i] {
            return Err(ZigError::IndexOutOfRange { i, x });
        }
        let Some(k) = self.slope_k[i - 1] else {
            return Ok(None);
        };
        // k <= 0 and x <= x_floor[i], so k * (x - x_floor[i]) = |k| * (x_floor[i] - x).
        let prod = arith.line_mul(k.unsigned_abs() as u64, self.x_floor[i] - x)?;
        Ok(Some(prod as i128))
    }

    /// Curve value used by the comparisons; the peak is exactly `2^lambda`.
    fn curve(&self, x: u64) -> u128 {
        if x == 0 {
            1u128 << self.lambda
        } else {
            self.px[x as usize]
        }
    }

    /// Accept/reject decision for one draw.
    pub fn decide(&self, i: usize, x: u64, b: u8, y: u64, arith: &mut impl ZigArith) -> Result<bool, ZigError> {
        if i == 0 || i > self.m || x > self.x_floor[i] {
            return Err(ZigError::IndexOutOfRange { i, x });
        }
        if 0 < x && x <= self.x_floor[i - 1] {
            return Ok(true);
        }
        if x == 0 {
            if b == 1 {
                return Ok(false);
            }
            if i > 1 {
                return Ok(true);
            }
        }
        let lambda = self.lambda;
        let height = arith.sub(self.y_bar[i - 1], self.y_bar[i])?;
        let ybar = arith.ybar_mul(y, height as u64)?;
        // ybar <= T * 2^lambda  <=>  ceil(ybar / 2^lambda) <= T, and so on.
        let ybar_ceil = (ybar >> lambda) + u128::from(ybar & ((1u128 << lambda) - 1) != 0);
        let ybar_floor = ybar >> lambda;
        let curve = self.curve(x);
        let under_curve = curve >= self.y_bar[i] && ybar_ceil <= arith.sub(curve, self.y_bar[i])?;
        if x == 0 {
            return Ok(under_curve);
        }
        let accept = match self.sigma_class[i - 1] {
            SigmaClass::Concave => match self.s_line_with(i, x, arith)? {
                Some(ys) => ybar_ceil <= ys as u128 || under_curve,
                None => under_curve,
            },
            SigmaClass::Convex => match self.s_line_with(i, x, arith)? {
                Some(ys) => {
                    let above_line = ybar_floor >= ys as u128 + self.lift[i - 1];
                    !(above_line || !under_curve)
                }
                None => under_curve,
            },
            SigmaClass::Straddle => under_curve,
        };
        Ok(accept)
    }

    pub fn to_json(&self) -> ZigTableJson {
        ZigTableJson {
            m: self.m,
            lambda: self.lambda,
            sigma: self.gauss.sigma,
            x_floor: self.x_floor.clone(),
            y_bar_raw: self.y_bar.clone(),
            slope_k_raw: self.slope_k.iter().map(|k| k.unwrap_or(-1)).collect(),
            sigma_class: self.sigma_class.iter().map(|&c| c as u8).collect(),
            px_raw: self.px.clone(),
        }
    }

    pub fn from_json(j: &ZigTableJson) -> Result<Self, ZigError> {
        if j.x_floor.len() != j.m + 1 {
            return Err(ZigError::InvalidTable("x_floor length must be m + 1".into()));
        }
        let max_value = *j.x_floor.last().unwrap();
        let gauss = GaussianParams {
            max_value,
            ..GaussianParams::new(j.sigma, crate::arith::DEFAULT_TAIL_FACTOR, j.lambda)
                .map_err(|e| ZigError::InvalidTable(e.to_string()))?
        };
        let table = Self::assemble(gauss, j.x_floor.clone(), j.y_bar_raw.clone(), j.px_raw.clone())?;
        if j.slope_k_raw.len() != table.m || j.sigma_class.len() != table.m {
            return Err(ZigError::InvalidTable("slope_k_raw and sigma_class need m entries".into()));
        }
        for (idx, (&stored, derived)) in j.slope_k_raw.iter().zip(&table.slope_k).enumerate() {
            if stored != derived.unwrap_or(-1) {
                return Err(ZigError::InvalidTable(format!("slope_k_raw[{idx}] does not match the corners")));
            }
        }
        for (idx, (&stored, &derived)) in j.sigma_class.iter().zip(&table.sigma_class).enumerate() {
            if SigmaClass::from_code(stored) != Some(derived) {
                return Err(ZigError::InvalidTable(format!("sigma_class[{idx}] does not match sigma")));
            }
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<(), ZigError> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_json())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ZigError> {
        let j: ZigTableJson = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_json(&j)
    }

    pub fn max_value(&self) -> u64 {
        self.gauss.max_value
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZigTableJson {
    pub m: usize,
    pub lambda: u32,
    pub sigma: f64,
    pub x_floor: Vec<u64>,
    pub y_bar_raw: Vec<u128>,
    pub slope_k_raw: Vec<i128>,
    pub sigma_class: Vec<u8>,
    pub px_raw: Vec<u128>,
}

pub fn zig_sample(table: &ZigguratTable, src: &mut BitSource) -> Result<ZigSample, ZigError> {
    zig_sample_with(table, src, &mut NativeZig)
}

pub fn zig_sample_with(
    table: &ZigguratTable,
    src: &mut BitSource,
    arith: &mut impl ZigArith,
) -> Result<ZigSample, ZigError> {
    let start = src.bits_consumed();
    for attempt in 1..=MAX_REJECTIONS {
        let i = src.uniform_below(table.m as u64 - 1) as usize + 1;
        let s = src.next_bit();
        let b = src.next_bit();
        let x = src.uniform_below(table.x_floor[i]);
        let y = src.next_bits(table.lambda) as u64;
        if table.decide(i, x, b, y, arith)? {
            let value = if s == 1 { -(x as i64) } else { x as i64 };
            return Ok(ZigSample {
                value,
                attempts: attempt,
                bits_used: src.bits_consumed() - start,
            });
        }
    }
    Err(ZigError::SamplerStuck(MAX_REJECTIONS))
}

pub fn zig_sample_many(table: &ZigguratTable, src: &mut BitSource, count: usize) -> Result<Vec<i64>, ZigError> {
    (0..count).map(|_| zig_sample(table, src).map(|s| s.value)).collect()
}
