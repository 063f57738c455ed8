//! Fixture random stream.
//!
//! The generator is ChaCha8 as implemented by `rand_chacha` 0.9, seeded with
//! `SeedableRng::seed_from_u64`. Every variate below is a fixed function of
//! the raw `next_u64` stream so fixtures are portable test vectors:
//!
//! * uniform `[0, 1)`: `(next_u64 >> 11) * 2^-53`
//! * standard normal: Box-Muller, cosine branch only,
//!   `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`, two uniforms per variate
//! * Student-t with `df` degrees of freedom: `z0 / sqrt((z1² + … + z_df²) / df)`,
//!   `df + 1` normals per variate

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ALGORITHM: &str = "chacha8 (rand_chacha 0.9, seed_from_u64)";
pub const GAUSSIAN_TRANSFORM: &str = "box-muller cosine branch, 53-bit uniforms";

pub struct FixtureRng(ChaCha8Rng);

impl FixtureRng {
    pub fn new(seed: u64) -> Self {
        FixtureRng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn student_t(&mut self, df: u32) -> f64 {
        let z = self.normal();
        let chi2: f64 = (0..df).map(|_| self.normal().powi(2)).sum();
        z / (chi2 / df as f64).sqrt()
    }
}
