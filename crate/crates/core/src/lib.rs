//! Discrete Gaussian sampling for ring-LWE that shares its arithmetic with
//! an NTT polynomial multiplier.
//!
//! Two samplers are provided, Knuth-Yao ([`sampler_ky`]) and the discrete
//! Ziggurat ([`sampler_zig`]). Both can run on native integer arithmetic or on
//! the emulated reconfigurable datapath ([`datapath`]), which borrows the
//! butterfly units of the NTT while the transform is idle.

pub mod arith;
pub mod precise;
pub mod rng;
pub mod ntt;
pub mod sampler_ky;
pub mod sampler_zig;
pub mod datapath;
pub mod rlwe;
pub mod stats;
pub mod cli;
