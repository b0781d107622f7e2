//! Seeded pseudo-random bit stream.
//!
//! The stream is the ChaCha20 keystream under the key `seed.to_le_bytes() || 0^24`
//! and a zero nonce. Keystream bytes are grouped into little-endian 64-bit
//! words and each word is consumed most-significant bit first. A seed fully
//! determines every bit, so samplers driven by the same seed consume
//! identical streams.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone)]
pub struct BitSource {
    seed: u64,
    rng: ChaCha20Rng,
    word: u64,
    avail: u32,
    bits_consumed: u64,
}

impl BitSource {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        BitSource {
            seed,
            rng: ChaCha20Rng::from_seed(key),
            word: 0,
            avail: 0,
            bits_consumed: 0,
        }
    }

    /// Stream for `seed` positioned `offset` bits in.
    pub fn at_offset(seed: u64, offset: u64) -> Self {
        let mut src = Self::new(seed);
        let words = offset / 64;
        // Each ChaCha block is 16 32-bit words; the word position counts those.
        src.rng.set_word_pos(words as u128 * 2);
        src.bits_consumed = words * 64;
        src.skip((offset % 64) as u32);
        src
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bits_consumed(&self) -> u64 {
        self.bits_consumed
    }

    fn skip(&mut self, k: u32) {
        for _ in 0..k {
            self.next_bit();
        }
    }

    #[inline]
    pub fn next_bit(&mut self) -> u8 {
        if self.avail == 0 {
            self.word = self.rng.next_u64();
            self.avail = 64;
        }
        let bit = (self.word >> 63) as u8;
        self.word <<= 1;
        self.avail -= 1;
        self.bits_consumed += 1;
        bit
    }

    /// `k <= 128` bits, the first drawn bit most significant.
    pub fn next_bits(&mut self, k: u32) -> u128 {
        assert!(k <= 128, "at most 128 bits per draw");
        let mut out: u128 = 0;
        let mut need = k;
        while need > 0 {
            if self.avail == 0 {
                self.word = self.rng.next_u64();
                self.avail = 64;
            }
            let take = need.min(self.avail);
            let chunk = if take == 64 {
                self.word
            } else {
                self.word >> (64 - take)
            };
            out = if take == 128 { 0 } else { out << take } | chunk as u128;
            self.word = if take == 64 { 0 } else { self.word << take };
            self.avail -= take;
            need -= take;
            self.bits_consumed += take as u64;
        }
        out
    }

    /// Uniform integer in `[0, bound]` by rejection on `ceil(log2(bound + 1))`-bit draws.
    pub fn uniform_below(&mut self, bound: u64) -> u64 {
        if bound == 0 {
            return 0;
        }
        let bits = 64 - bound.leading_zeros();
        loop {
            let v = self.next_bits(bits) as u64;
            if v <= bound {
                return v;
            }
        }
    }
}
