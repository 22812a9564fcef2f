//! Counter-based random stream used wherever a mask must be reproducible
//! from `(seed, index)` alone.
//!
//! The generator is SplitMix64 evaluated in counter mode: draw `i` of stream
//! `seed` is `mix(seed + (i + 1) * 0x9E37_79B9_7F4A_7C15)`, where `mix` is the
//! SplitMix64 finalizer (Steele, Lea & Flood 2014). Uniform reals take the top
//! 53 bits, so every draw lies in `[0, 1)`. This definition is part of the
//! file-format contract for mask records and must not change.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Raw 64-bit draw at `index` of the stream named by `seed`.
#[inline]
pub fn draw_u64(seed: u64, index: u64) -> u64 {
    mix(seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Uniform draw in `[0, 1)` at `index` of the stream named by `seed`.
#[inline]
pub fn draw_unit(seed: u64, index: u64) -> f64 {
    (draw_u64(seed, index) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Sequential view over a counter stream.
#[derive(Debug, Clone)]
pub struct CounterStream {
    seed: u64,
    next: u64,
}

impl CounterStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, next: 0 }
    }

    pub fn position(&self) -> u64 {
        self.next
    }

    pub fn unit(&mut self) -> f64 {
        let v = draw_unit(self.seed, self.next);
        self.next += 1;
        v
    }

    /// Bernoulli trial with success probability `p`. `p == 0` never succeeds
    /// and `p == 1` always does.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.unit() < p
    }
}
