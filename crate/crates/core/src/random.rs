//! Variate generation on top of the seeded ChaCha20 stream.

use rand::Rng;
use rand_chacha::ChaCha20Rng;

/// Standard normal draws by the Box–Muller transform.
pub(crate) struct Normals {
    spare: Option<f64>,
}

impl Normals {
    pub(crate) fn new() -> Self {
        Self { spare: None }
    }

    pub(crate) fn next(&mut self, rng: &mut ChaCha20Rng) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = open_unit(rng);
        let u2: f64 = rng.random();
        let r = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare = Some(r * angle.sin());
        r * angle.cos()
    }
}

/// Uniform on `(0, 1]`.
pub(crate) fn open_unit(rng: &mut ChaCha20Rng) -> f64 {
    1.0 - rng.random::<f64>()
}

pub(crate) fn exponential(rng: &mut ChaCha20Rng, rate: f64) -> f64 {
    -open_unit(rng).ln() / rate
}
