//! Ring-LWE samples and LPR-style public-key encryption.
//!
//! Secrets and errors are drawn coefficient-wise from the Gaussian sampler;
//! products go through the NTT multiplier. The scheme only exists to push
//! sampler output through the polynomial pipeline end to end.

use thiserror::Error;

use crate::arith::ParameterSet;
use crate::datapath::{RunError, SamplerTables};
use crate::ntt::{NttError, NttPlan, Polynomial};
use crate::rng::BitSource;
use crate::sampler_ky::{self, KyError};
use crate::sampler_zig::{self, ZigError};

#[derive(Debug, Error)]
pub enum RlweError {
    #[error(transparent)]
    Ntt(#[from] NttError),
    #[error(transparent)]
    Ky(#[from] KyError),
    #[error(transparent)]
    Zig(#[from] ZigError),
    #[error(transparent)]
    Tables(#[from] RunError),
    #[error("message coefficient {value} at index {index} is not a bit")]
    NotBinary { index: usize, value: u64 },
    #[error("message has {got} coefficients, ring dimension is {expected}")]
    MessageLength { expected: usize, got: usize },
}

/// Test hooks that replace sampled polynomials with zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Hooks {
    pub zero_secret: bool,
    pub zero_error: bool,
}

impl Hooks {
    pub const NONE: Hooks = Hooks {
        zero_secret: false,
        zero_error: false,
    };
    pub const ZERO_NOISE: Hooks = Hooks {
        zero_secret: true,
        zero_error: true,
    };
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RlweSamplePair {
    pub a: Polynomial,
    pub b: Polynomial,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub public: RlweSamplePair,
    pub secret: Polynomial,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    pub c1: Polynomial,
    pub c2: Polynomial,
}

/// Parameters, transform plan and sampler tables for one ring.
pub struct Rlwe {
    pub params: ParameterSet,
    pub plan: NttPlan,
    pub tables: SamplerTables,
}

impl Rlwe {
    pub fn new(params: ParameterSet, tables: SamplerTables) -> Self {
        let plan = NttPlan::new(&params.ring);
        Rlwe { params, plan, tables }
    }

    fn n(&self) -> usize {
        self.params.ring.n
    }

    fn q(&self) -> u64 {
        self.params.ring.q
    }

    pub fn uniform_poly(&self, src: &mut BitSource) -> Polynomial {
        let q = self.q();
        let coeffs = (0..self.n()).map(|_| src.uniform_below(q - 1)).collect();
        Polynomial { q, coeffs }
    }

    pub fn gaussian_values(&self, src: &mut BitSource) -> Result<Vec<i64>, RlweError> {
        let n = self.n();
        Ok(match &self.tables {
            SamplerTables::Ky(pm) => sampler_ky::ky_sample_many(pm, src, n)?,
            SamplerTables::Zig(t) => sampler_zig::zig_sample_many(t, src, n)?,
        })
    }

    pub fn gaussian_poly(&self, src: &mut BitSource, zero: bool) -> Result<Polynomial, RlweError> {
        if zero {
            return Ok(Polynomial::zero(self.n(), self.q()));
        }
        Ok(Polynomial::from_signed(&self.gaussian_values(src)?, self.q()))
    }

    /// `(a, b = a s + e)` together with the `s` and `e` used.
    pub fn make_rlwe_sample(
        &self,
        src: &mut BitSource,
        hooks: Hooks,
    ) -> Result<(RlweSamplePair, Polynomial, Polynomial), RlweError> {
        let a = self.uniform_poly(src);
        let s = self.gaussian_poly(src, hooks.zero_secret)?;
        let e = self.gaussian_poly(src, hooks.zero_error)?;
        let b = self.plan.poly_mul(&a, &s)?.add(&e);
        Ok((RlweSamplePair { a, b }, s, e))
    }

    pub fn keygen(&self, src: &mut BitSource, hooks: Hooks) -> Result<KeyPair, RlweError> {
        let (public, secret, _) = self.make_rlwe_sample(src, hooks)?;
        Ok(KeyPair { public, secret })
    }

    /// `c1 = a u + e1`, `c2 = b u + e2 + floor(q/2) m`.
    pub fn encrypt(
        &self,
        pk: &RlweSamplePair,
        message: &Polynomial,
        src: &mut BitSource,
        hooks: Hooks,
    ) -> Result<Ciphertext, RlweError> {
        if message.len() != self.n() {
            return Err(RlweError::MessageLength {
                expected: self.n(),
                got: message.len(),
            });
        }
        if let Some((index, &value)) = message.coeffs.iter().enumerate().find(|(_, &c)| c > 1) {
            return Err(RlweError::NotBinary { index, value });
        }
        let q = self.q();
        let u = self.gaussian_poly(src, hooks.zero_secret)?;
        let e1 = self.gaussian_poly(src, hooks.zero_error)?;
        let e2 = self.gaussian_poly(src, hooks.zero_error)?;
        let encoded = Polynomial {
            q,
            coeffs: message.coeffs.iter().map(|&m| m * (q / 2)).collect(),
        };
        let c1 = self.plan.poly_mul(&pk.a, &u)?.add(&e1);
        let c2 = self.plan.poly_mul(&pk.b, &u)?.add(&e2).add(&encoded);
        Ok(Ciphertext { c1, c2 })
    }

    /// Bit `i` is 1 when coefficient `i` of `c2 - s c1` is nearer `q/2` than 0.
    pub fn decrypt(&self, secret: &Polynomial, ct: &Ciphertext) -> Result<Polynomial, RlweError> {
        let noisy = ct.c2.sub(&self.plan.poly_mul(secret, &ct.c1)?);
        let q = self.q();
        let coeffs = noisy
            .coeffs
            .iter()
            .map(|&v| u64::from(4 * v > q && 4 * v < 3 * q))
            .collect();
        Ok(Polynomial { q, coeffs })
    }

    pub fn random_message(&self, src: &mut BitSource) -> Polynomial {
        Polynomial {
            q: self.q(),
            coeffs: (0..self.n()).map(|_| src.next_bit() as u64).collect(),
        }
    }
}
