//! Modular arithmetic over `Z_q` and the parameter-set catalog.
//!
//! Residues are `u64` values kept in canonical form `[0, q)`. Products are
//! formed in `u128` and reduced with a Barrett reducer whose shift is
//! `2 * ceil(log2 q) + 1`, which bounds the quotient estimate error by two.
//!
//! A [`RingParams`] also carries the modulus used by the number-theoretic
//! transform. When `q` is an NTT-friendly prime (`q ≡ 1 mod 2n`) that modulus
//! is `q` itself. Otherwise (the LP set, `q = 4093`, has no 512-th root of
//! unity) the transform runs over the smallest prime `p ≡ 1 mod 2n` large
//! enough to hold every coefficient of the exact integer negacyclic product,
//! and results are mapped back to `Z_q` after a centered lift.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("unknown parameter set `{0}` (expected LP, BLISS, or a JSON descriptor path)")]
    UnknownParameterSet(String),
    #[error("psi = {psi} is not a primitive {order}-th root of unity mod {modulus}")]
    InvalidRoot { psi: u64, order: u64, modulus: u64 },
    #[error("invalid ring parameters: {0}")]
    InvalidRing(String),
    #[error("invalid Gaussian parameters: {0}")]
    InvalidGaussian(String),
    #[error("failed to read parameter descriptor: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed parameter descriptor: {0}")]
    Json(#[from] serde_json::Error),
}

/// `ceil(log2 x)` for `x >= 1`.
pub fn ceil_log2(x: u64) -> u32 {
    assert!(x >= 1);
    64 - (x - 1).leading_zeros()
}

/// Barrett reducer for a fixed modulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Barrett {
    pub modulus: u64,
    /// Shift amount, `2 * ceil(log2 q) + 1`.
    pub k: u32,
    /// `floor(2^k / q)`.
    pub mu: u128,
}

impl Barrett {
    pub fn new(modulus: u64) -> Self {
        assert!(modulus >= 2, "modulus must be at least 2");
        let k = 2 * ceil_log2(modulus) + 1;
        assert!(k <= 127, "modulus too wide for a u128 Barrett reducer");
        Barrett {
            modulus,
            k,
            mu: (1u128 << k) / modulus as u128,
        }
    }

    /// `x mod q` for `x < q^2`.
    #[inline]
    pub fn reduce(&self, x: u128) -> u64 {
        let q = self.modulus as u128;
        debug_assert!(x < q * q, "Barrett input out of range");
        // x < 2^(2*ceil(log2 q)) and mu < 2^(ceil(log2 q)+2): the product fits.
        let est = (x * self.mu) >> self.k;
        let mut t = x - est * q;
        if t >= q {
            t -= q;
        }
        if t >= q {
            t -= q;
        }
        debug_assert!(t < q);
        t as u64
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce(a as u128 * b as u128)
    }

    pub fn pow(&self, base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.modulus;
        let mut b = base % self.modulus;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, b);
            }
            b = self.mul(b, b);
            exp >>= 1;
        }
        acc
    }

    /// Inverse by Fermat; the modulus must be prime.
    pub fn inv(&self, a: u64) -> u64 {
        self.pow(a, self.modulus - 2)
    }
}

#[inline]
pub fn mod_add(a: u64, b: u64, q: u64) -> u64 {
    debug_assert!(a < q && b < q);
    let s = a + b;
    if s >= q {
        s - q
    } else {
        s
    }
}

#[inline]
pub fn mod_sub(a: u64, b: u64, q: u64) -> u64 {
    debug_assert!(a < q && b < q);
    if a >= b {
        a - b
    } else {
        a + q - b
    }
}

/// `x mod q` for `0 <= x < q^2` using the ring's Barrett constants.
#[inline]
pub fn barrett_reduce(x: u128, params: &RingParams) -> u64 {
    params.barrett.reduce(x)
}

#[inline]
pub fn mod_mul(a: u64, b: u64, params: &RingParams) -> u64 {
    params.barrett.mul(a, b)
}

fn mul_mod_u64(a: u64, b: u64, m: u64) -> u64 {
    (a as u128 * b as u128 % m as u128) as u64
}

fn pow_mod_u64(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod_u64(acc, b, m);
        }
        b = mul_mod_u64(b, b, m);
        e >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in BASES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for a in BASES {
        let mut x = pow_mod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest primitive `2n`-th root of unity modulo the prime `p`.
///
/// All primitive `2n`-th roots are the odd powers of any one of them, so the
/// minimum is found by enumerating those `n` candidates.
fn smallest_primitive_root_2n(p: u64, n: u64) -> Option<u64> {
    let two_n = 2 * n;
    if !(p - 1).is_multiple_of(two_n) {
        return None;
    }
    let red = Barrett::new(p);
    let cofactor = (p - 1) / two_n;
    let mut seed_root = None;
    for c in 2..p {
        let z = red.pow(c, cofactor);
        if red.pow(z, n) == p - 1 {
            seed_root = Some(z);
            break;
        }
    }
    let z = seed_root?;
    let z2 = red.mul(z, z);
    let mut cur = z;
    let mut best = z;
    for _ in 1..n {
        cur = red.mul(cur, z2);
        best = best.min(cur);
    }
    Some(best)
}

/// Ring `R_q = Z_q[x] / (x^n + 1)` together with its transform constants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingParams {
    pub n: usize,
    pub q: u64,
    /// Barrett reducer for `q`; `barrett.k` and `barrett.mu` are the ring's Barrett constants.
    pub barrett: Barrett,
    /// Modulus the NTT runs over: `q` when `q ≡ 1 mod 2n`, otherwise an auxiliary prime.
    pub ntt_modulus: u64,
    /// Primitive `2n`-th root of unity mod `ntt_modulus`.
    pub psi: u64,
    /// `psi^2 mod ntt_modulus`, a primitive `n`-th root of unity.
    pub omega: u64,
    pub ntt_barrett: Barrett,
}

impl RingParams {
    pub fn new(n: usize, q: u64) -> Result<Self, ParamError> {
        if n < 4 || !n.is_power_of_two() {
            return Err(ParamError::InvalidRing(format!(
                "n = {n} must be a power of two >= 4"
            )));
        }
        if !is_prime(q) {
            return Err(ParamError::InvalidRing(format!("q = {q} is not prime")));
        }
        if q >= 1 << 31 {
            return Err(ParamError::InvalidRing(format!("q = {q} exceeds 31 bits")));
        }
        let ntt_modulus = if (q - 1).is_multiple_of(2 * n as u64) {
            q
        } else {
            Self::auxiliary_modulus(n, q)
        };
        let psi = smallest_primitive_root_2n(ntt_modulus, n as u64).ok_or(
            ParamError::InvalidRoot {
                psi: 0,
                order: 2 * n as u64,
                modulus: ntt_modulus,
            },
        )?;
        let ntt_barrett = Barrett::new(ntt_modulus);
        let params = RingParams {
            n,
            q,
            barrett: Barrett::new(q),
            ntt_modulus,
            psi,
            omega: ntt_barrett.mul(psi, psi),
            ntt_barrett,
        };
        params.verify_roots()?;
        Ok(params)
    }

    /// Smallest prime `p ≡ 1 (mod 2n)` with `p > 2 n (q-1)^2`, so that a centered
    /// lift recovers every coefficient of an exact negacyclic product.
    fn auxiliary_modulus(n: usize, q: u64) -> u64 {
        let two_n = 2 * n as u64;
        let bound = 2 * n as u64 * (q - 1) * (q - 1);
        let mut p = (bound / two_n + 1) * two_n + 1;
        while !is_prime(p) {
            p += two_n;
        }
        p
    }

    pub fn verify_roots(&self) -> Result<(), ParamError> {
        let red = &self.ntt_barrett;
        let p = self.ntt_modulus;
        let n = self.n as u64;
        let ok = red.pow(self.psi, n) == p - 1
            && red.pow(self.psi, 2 * n) == 1
            && self.omega == red.mul(self.psi, self.psi);
        if ok {
            Ok(())
        } else {
            Err(ParamError::InvalidRoot {
                psi: self.psi,
                order: 2 * n,
                modulus: p,
            })
        }
    }

    /// Whether the transform runs directly over `q`.
    pub fn ntt_native(&self) -> bool {
        self.ntt_modulus == self.q
    }

    /// Operand width of a butterfly unit built for `q`.
    pub fn unit_width(&self) -> u32 {
        ceil_log2(self.q)
    }
}

pub const DEFAULT_TAIL_FACTOR: f64 = 9.0;
pub const DEFAULT_LAMBDA: u32 = 64;

/// Discrete Gaussian shape: `sigma`, tail cut, and probability precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub sigma: f64,
    pub tail_factor: f64,
    /// Bits of precision for stored probabilities.
    pub lambda: u32,
    /// `floor(tail_factor * sigma)`.
    pub max_value: u64,
}

impl GaussianParams {
    pub fn new(sigma: f64, tail_factor: f64, lambda: u32) -> Result<Self, ParamError> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(ParamError::InvalidGaussian(format!("sigma = {sigma}")));
        }
        if !(tail_factor.is_finite() && tail_factor > 0.0) {
            return Err(ParamError::InvalidGaussian(format!(
                "tail_factor = {tail_factor}"
            )));
        }
        if !(8..=128).contains(&lambda) {
            return Err(ParamError::InvalidGaussian(format!(
                "lambda = {lambda} outside [8, 128]"
            )));
        }
        Ok(GaussianParams {
            sigma,
            tail_factor,
            lambda,
            max_value: (tail_factor * sigma).floor() as u64,
        })
    }

    pub fn with_sigma(sigma: f64) -> Result<Self, ParamError> {
        Self::new(sigma, DEFAULT_TAIL_FACTOR, DEFAULT_LAMBDA)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    pub name: String,
    pub ring: RingParams,
    pub gauss: GaussianParams,
}

/// JSON parameter descriptor. Transform constants are always derived.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParameterDescriptor {
    pub name: String,
    pub n: usize,
    pub q: u64,
    pub sigma: f64,
    pub tail_factor: u32,
    pub lambda: u32,
}

impl ParameterDescriptor {
    pub fn build(&self) -> Result<ParameterSet, ParamError> {
        Ok(ParameterSet {
            name: self.name.clone(),
            ring: RingParams::new(self.n, self.q)?,
            gauss: GaussianParams::new(self.sigma, self.tail_factor as f64, self.lambda)?,
        })
    }
}

/// Catalog entries: `(name, n, q, sigma)`.
pub const CATALOG: [(&str, usize, u64, f64); 2] = [("LP", 256, 4093, 3.33), ("BLISS", 512, 12289, 215.73)];

/// Resolve a catalog name (`LP`, `BLISS`) or a path to a JSON descriptor.
pub fn load_parameter_set(name: &str) -> Result<ParameterSet, ParamError> {
    if let Some(&(id, n, q, sigma)) = CATALOG.iter().find(|entry| entry.0 == name) {
        return ParameterDescriptor {
            name: id.to_string(),
            n,
            q,
            sigma,
            tail_factor: DEFAULT_TAIL_FACTOR as u32,
            lambda: DEFAULT_LAMBDA,
        }
        .build();
    }
    let path = Path::new(name);
    if path.extension().is_some_and(|ext| ext == "json") && path.exists() {
        let text = std::fs::read_to_string(path)?;
        let desc: ParameterDescriptor = serde_json::from_str(&text)?;
        return desc.build();
    }
    Err(ParamError::UnknownParameterSet(name.to_string()))
}
