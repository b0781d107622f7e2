//! Negacyclic number-theoretic transform over `Z_q[x] / (x^n + 1)`.
//!
//! The forward transform pre-scales by powers of `psi` and runs an in-place
//! Cooley-Tukey decimation-in-time network (natural order in, bit-reversed
//! order out). The inverse runs a Gentleman-Sande decimation-in-frequency
//! network on bit-reversed input, multiplies by `n^{-1}` and post-scales by
//! `psi^{-i}`. Stage `s` of either network is one logical butterfly unit.
//!
//! Arithmetic is over [`RingParams::ntt_modulus`]. For rings whose `q` lacks
//! a `2n`-th root of unity the product is computed exactly over the integers
//! through that larger prime and reduced mod `q` afterwards.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::arith::{mod_add, mod_sub, Barrett, RingParams};

#[derive(Debug, Error)]
pub enum NttError {
    #[error("polynomial length {got} does not match ring dimension {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("polynomial modulus {got} does not match ring modulus {expected}")]
    ModulusMismatch { expected: u64, got: u64 },
    #[error("coefficient {value} at index {index} is not reduced mod {q}")]
    Unreduced { index: usize, value: u64, q: u64 },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polynomial {
    pub q: u64,
    pub coeffs: Vec<u64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<u64>, q: u64) -> Result<Self, NttError> {
        if let Some((index, &value)) = coeffs.iter().enumerate().find(|(_, &c)| c >= q) {
            return Err(NttError::Unreduced { index, value, q });
        }
        Ok(Polynomial { q, coeffs })
    }

    pub fn zero(n: usize, q: u64) -> Self {
        Polynomial {
            q,
            coeffs: vec![0; n],
        }
    }

    /// Reduce signed coefficients into `[0, q)`.
    pub fn from_signed(values: &[i64], q: u64) -> Self {
        let coeffs = values
            .iter()
            .map(|&v| v.rem_euclid(q as i64) as u64)
            .collect();
        Polynomial { q, coeffs }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Coefficients lifted into `(-q/2, q/2]`.
    pub fn centered(&self) -> Vec<i64> {
        let q = self.q as i64;
        self.coeffs
            .iter()
            .map(|&c| {
                let c = c as i64;
                if c > q / 2 {
                    c - q
                } else {
                    c
                }
            })
            .collect()
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.q, other.q);
        assert_eq!(self.len(), other.len());
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| mod_add(a, b, self.q))
            .collect();
        Polynomial { q: self.q, coeffs }
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.q, other.q);
        assert_eq!(self.len(), other.len());
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| mod_sub(a, b, self.q))
            .collect();
        Polynomial { q: self.q, coeffs }
    }

    /// Text form: a `n=<n> q=<q>` header, then one coefficient per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("n={} q={}\n", self.len(), self.q);
        for c in &self.coeffs {
            writeln!(out, "{c}").unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, NttError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines.next().ok_or(NttError::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let mut n = None;
        let mut q = None;
        for field in header.split_whitespace() {
            let parsed = field.split_once('=').and_then(|(k, v)| Some((k, v.parse::<u64>().ok()?)));
            match parsed {
                Some(("n", v)) => n = Some(v as usize),
                Some(("q", v)) => q = Some(v),
                _ => {
                    return Err(NttError::Parse {
                        line: hline,
                        msg: format!("bad header field `{field}`"),
                    })
                }
            }
        }
        let (n, q) = match (n, q) {
            (Some(n), Some(q)) => (n, q),
            _ => {
                return Err(NttError::Parse {
                    line: hline,
                    msg: "header must be `n=<n> q=<q>`".into(),
                })
            }
        };
        let mut coeffs = Vec::with_capacity(n);
        for (line, l) in lines {
            let v: u64 = l.parse().map_err(|_| NttError::Parse {
                line,
                msg: format!("bad coefficient `{l}`"),
            })?;
            coeffs.push(v);
        }
        if coeffs.len() != n {
            return Err(NttError::LengthMismatch {
                expected: n,
                got: coeffs.len(),
            });
        }
        Polynomial::new(coeffs, q)
    }

    pub fn read(path: &Path) -> Result<Self, NttError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), NttError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Hooks fired as the transform schedules work, used to account micro-ops.
pub trait NttObserver {
    /// One butterfly with inputs `u`, `v` and twiddle `w` on the unit serving `stage`.
    fn butterfly(&mut self, _stage: usize, _u: u64, _v: u64, _w: u64) {}
    /// One scalar multiply on a pre-NTT multiplier (psi scaling, pointwise products, `n^{-1}`).
    fn scalar_mul(&mut self, _a: u64, _b: u64) {}
}

pub struct NoObserver;

impl NttObserver for NoObserver {}

#[inline]
pub fn butterfly(u: u64, v: u64, w: u64, red: &Barrett) -> (u64, u64) {
    let t = red.mul(w, v);
    (mod_add(u, t, red.modulus), mod_sub(u, t, red.modulus))
}

#[inline]
fn gs_butterfly(u: u64, v: u64, w: u64, red: &Barrett) -> (u64, u64) {
    let p = red.modulus;
    (mod_add(u, v, p), red.mul(mod_sub(u, v, p), w))
}

fn bit_reverse(x: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - bits)
    }
}

#[derive(Debug, Clone)]
pub struct NttPlan {
    pub n: usize,
    pub q: u64,
    /// Transform modulus.
    pub p: u64,
    pub stages: u32,
    /// `twiddles[m + i] = omega^(brv_{log2 m}(i) * n / (2m))` for `m = 1, 2, .., n/2`; index 0 unused.
    pub twiddles: Vec<u64>,
    pub inv_twiddles: Vec<u64>,
    pub psi_powers: Vec<u64>,
    pub inv_psi_powers: Vec<u64>,
    pub n_inv: u64,
    red: Barrett,
}

impl NttPlan {
    pub fn new(ring: &RingParams) -> Self {
        let n = ring.n;
        let red = ring.ntt_barrett;
        let omega_inv = red.inv(ring.omega);
        let psi_inv = red.inv(ring.psi);
        let mut twiddles = vec![0; n];
        let mut inv_twiddles = vec![0; n];
        let mut m = 1;
        while m < n {
            let bits = m.trailing_zeros();
            for i in 0..m {
                let e = (bit_reverse(i, bits) * n / (2 * m)) as u64;
                twiddles[m + i] = red.pow(ring.omega, e);
                inv_twiddles[m + i] = red.pow(omega_inv, e);
            }
            m *= 2;
        }
        let mut psi_powers = Vec::with_capacity(n);
        let mut inv_psi_powers = Vec::with_capacity(n);
        let (mut a, mut b) = (1, 1);
        for _ in 0..n {
            psi_powers.push(a);
            inv_psi_powers.push(b);
            a = red.mul(a, ring.psi);
            b = red.mul(b, psi_inv);
        }
        NttPlan {
            n,
            q: ring.q,
            p: ring.ntt_modulus,
            stages: n.trailing_zeros(),
            twiddles,
            inv_twiddles,
            psi_powers,
            inv_psi_powers,
            n_inv: red.inv(n as u64),
            red,
        }
    }

    pub fn reducer(&self) -> &Barrett {
        &self.red
    }

    /// In-place forward transform of residues mod `p`; output is bit-reversed.
    pub fn forward(&self, a: &mut [u64], obs: &mut impl NttObserver) {
        assert_eq!(a.len(), self.n);
        for (x, &s) in a.iter_mut().zip(&self.psi_powers) {
            obs.scalar_mul(*x, s);
            *x = self.red.mul(*x, s);
        }
        let mut m = 1;
        let mut stage = 0;
        while m < self.n {
            let t = self.n / (2 * m);
            for i in 0..m {
                let w = self.twiddles[m + i];
                let start = 2 * i * t;
                for j in start..start + t {
                    obs.butterfly(stage, a[j], a[j + t], w);
                    let (u, v) = butterfly(a[j], a[j + t], w, &self.red);
                    a[j] = u;
                    a[j + t] = v;
                }
            }
            m *= 2;
            stage += 1;
        }
    }

    /// In-place inverse of [`forward`](Self::forward).
    pub fn inverse(&self, a: &mut [u64], obs: &mut impl NttObserver) {
        assert_eq!(a.len(), self.n);
        let mut m = self.n / 2;
        let mut stage = self.stages as usize;
        while m >= 1 {
            stage -= 1;
            let t = self.n / (2 * m);
            for i in 0..m {
                let w = self.inv_twiddles[m + i];
                let start = 2 * i * t;
                for j in start..start + t {
                    obs.butterfly(stage, a[j], a[j + t], w);
                    let (u, v) = gs_butterfly(a[j], a[j + t], w, &self.red);
                    a[j] = u;
                    a[j + t] = v;
                }
            }
            m /= 2;
        }
        for (x, &s) in a.iter_mut().zip(&self.inv_psi_powers) {
            obs.scalar_mul(*x, self.n_inv);
            let scaled = self.red.mul(*x, self.n_inv);
            obs.scalar_mul(scaled, s);
            *x = self.red.mul(scaled, s);
        }
    }

    fn check(&self, a: &Polynomial) -> Result<(), NttError> {
        if a.len() != self.n {
            return Err(NttError::LengthMismatch {
                expected: self.n,
                got: a.len(),
            });
        }
        if a.q != self.q {
            return Err(NttError::ModulusMismatch {
                expected: self.q,
                got: a.q,
            });
        }
        Ok(())
    }

    pub fn poly_mul(&self, a: &Polynomial, b: &Polynomial) -> Result<Polynomial, NttError> {
        self.poly_mul_observed(a, b, &mut NoObserver)
    }

    pub fn poly_mul_observed(
        &self,
        a: &Polynomial,
        b: &Polynomial,
        obs: &mut impl NttObserver,
    ) -> Result<Polynomial, NttError> {
        self.check(a)?;
        self.check(b)?;
        let mut fa = a.coeffs.clone();
        let mut fb = b.coeffs.clone();
        self.forward(&mut fa, obs);
        self.forward(&mut fb, obs);
        for (x, &y) in fa.iter_mut().zip(&fb) {
            obs.scalar_mul(*x, y);
            *x = self.red.mul(*x, y);
        }
        self.inverse(&mut fa, obs);
        if self.p != self.q {
            // Centered lift recovers the exact integer coefficient.
            let half = self.p / 2;
            let q = self.q as i128;
            for x in fa.iter_mut() {
                let v = if *x > half {
                    *x as i128 - self.p as i128
                } else {
                    *x as i128
                };
                *x = v.rem_euclid(q) as u64;
            }
        }
        Ok(Polynomial {
            q: self.q,
            coeffs: fa,
        })
    }
}

/// Quadratic negacyclic product, the reference for [`NttPlan::poly_mul`].
pub fn schoolbook_negacyclic(a: &Polynomial, b: &Polynomial) -> Polynomial {
    assert_eq!(a.q, b.q);
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let q = a.q as i128;
    let mut acc = vec![0i128; n];
    for (i, &x) in a.coeffs.iter().enumerate() {
        for (j, &y) in b.coeffs.iter().enumerate() {
            let prod = x as i128 * y as i128;
            if i + j < n {
                acc[i + j] += prod;
            } else {
                acc[i + j - n] -= prod;
            }
        }
    }
    Polynomial {
        q: a.q,
        coeffs: acc.into_iter().map(|v| v.rem_euclid(q) as u64).collect(),
    }
}
