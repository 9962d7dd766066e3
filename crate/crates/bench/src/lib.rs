//! Benchmark fixtures shared by the criterion targets.

use cwp_core::ModelParams;

/// High-temperature point with a unique minimizer at the uniform vector.
pub fn high_temperature(n: usize) -> ModelParams {
    ModelParams::new(3, 2.0, 0.0, n).expect("valid parameters")
}

pub const UNIFORM3: [f64; 3] = [1.0 / 3.0; 3];
