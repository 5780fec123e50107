//! Portable counter-based random number generator.
//!
//! All stochastic components of the pipeline draw from `SplitMix64`, a
//! 64-bit counter generator with fixed, documented constants
//! (Steele, Lea & Flood 2014). The generator state is a single `u64`
//! advanced by the golden-gamma increment; each output is the finalizer
//! applied to the state. Uniform doubles take the top 53 bits, normals use
//! the cosine branch of Box–Muller, and gammas use Marsaglia–Tsang. Given
//! the same seed, every platform (and any reimplementation that follows
//! these constants) reproduces the identical stream.

/// Golden-gamma increment: floor(2^64 / phi), forced odd.
pub const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX_1: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX_2: u64 = 0x94D0_49BB_1331_11EB;

/// SplitMix64 finalizer; also used standalone to scramble seed material.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(MIX_1);
    z = (z ^ (z >> 27)).wrapping_mul(MIX_2);
    z ^ (z >> 31)
}

/// Derive an independent stream seed from a base seed and an index.
///
/// Used for per-trial and per-chain seeding: `base ^ mix64(index + 1)`
/// keeps streams distinct even for small consecutive indices.
#[inline]
pub fn derive_seed(base: u64, index: u64) -> u64 {
    base ^ mix64(index.wrapping_add(1))
}

/// Counter-based 64-bit generator with SplitMix64 constants.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix64(self.state)
    }

    /// Uniform in [0, 1) with 53-bit resolution.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in (0, 1]; safe as a logarithm argument.
    #[inline]
    pub fn next_f64_open(&mut self) -> f64 {
        1.0 - self.next_f64()
    }

    /// Uniform integer in [0, n).
    pub fn next_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Multiply-shift; bias is < 2^-53 for any n this library uses.
        (self.next_f64() * n as f64) as usize % n
    }

    /// Standard normal via the cosine branch of Box–Muller.
    ///
    /// Consumes exactly two uniforms per call and keeps no cached state,
    /// which keeps the stream layout reproducible across languages.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.next_f64_open();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Laplace(0, scale) by inverse CDF.
    pub fn next_laplace(&mut self, scale: f64) -> f64 {
        debug_assert!(scale >= 0.0);
        let u = self.next_f64() - 0.5;
        let t = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE);
        -scale * u.signum() * t.ln()
    }

    /// Exponential with the given rate (mean 1/rate).
    pub fn next_exponential(&mut self, rate: f64) -> f64 {
        debug_assert!(rate > 0.0);
        -self.next_f64_open().ln() / rate
    }

    /// Gamma(shape, 1) via Marsaglia–Tsang, with the standard boost for
    /// shape < 1.
    pub fn next_gamma(&mut self, shape: f64) -> f64 {
        debug_assert!(shape > 0.0);
        if shape < 1.0 {
            let boost = self.next_f64_open().powf(1.0 / shape);
            return boost * self.next_gamma(shape + 1.0);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.next_normal();
            let v = (1.0 + c * x).powi(3);
            if v <= 0.0 {
                continue;
            }
            let u = self.next_f64_open();
            if u < 1.0 - 0.0331 * x.powi(4) {
                return d * v;
            }
            if u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
                return d * v;
            }
        }
    }

    /// Beta(a, b) from two gammas.
    pub fn next_beta(&mut self, a: f64, b: f64) -> f64 {
        let x = self.next_gamma(a);
        let y = self.next_gamma(b);
        x / (x + y)
    }
}
