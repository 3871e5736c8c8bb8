use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};

/// Seeded generator: ChaCha8 (counter-based, platform independent) with a
/// Box–Muller normal transform.
///
/// Uniforms take the top 53 bits of one 64-bit output and are shifted by half
/// an ulp so they lie strictly inside `(0, 1)`. Each Box–Muller step consumes
/// two uniforms and yields two normals; the second is cached for the next call.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 32-bit words consumed from the ChaCha stream.
    pub fn position(&self) -> u128 {
        self.inner.get_word_pos()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in the open interval `(0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        ((self.next_u64() >> 11) as f64 + 0.5) * SCALE
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard_normal()
    }

    /// `n` draws from `N(mean, sd²)`.
    pub fn draw_normal(&mut self, mean: f64, sd: f64, n: usize) -> Vec<f64> {
        debug_assert!(sd >= 0.0);
        (0..n).map(|_| self.normal(mean, sd)).collect()
    }
}
