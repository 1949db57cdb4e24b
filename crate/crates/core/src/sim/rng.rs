//! Reproducible per-run random streams.
//!
//! A root seed keys a ChaCha8 generator; the (run index, role) pair selects
//! one of its 2⁶⁴ independent streams. Streams never overlap, and a run's
//! draws do not depend on how many other runs exist or where they execute.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamRole {
    ProcessNoise = 0,
    MeasurementNoise = 1,
    Filter = 2,
}

pub fn stream(seed: u64, run_index: usize, role: StreamRole) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((run_index as u64) << 8) | role as u64);
    rng
}
