//! Fixtures for the criterion benchmarks.

use r4_core::sim::{generate_instance, Model, SimConfig};
use r4_core::RegressionData;

/// A replication of the small synthetic model with the given contamination.
pub fn model_one(outlier_fraction: f64, seed: u64) -> RegressionData {
    let mut cfg = SimConfig::new(Model::I);
    cfg.outlier_fraction = outlier_fraction;
    cfg.seed = seed;
    generate_instance(&cfg, 0).expect("valid configuration").data
}

/// A replication of the high-dimensional low-rank-design model.
pub fn model_three(outlier_fraction: f64, seed: u64) -> RegressionData {
    let mut cfg = SimConfig::new(Model::III);
    cfg.outlier_fraction = outlier_fraction;
    cfg.seed = seed;
    generate_instance(&cfg, 0).expect("valid configuration").data
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_expected_shapes() {
        let d = model_one(0.05, 0);
        assert_eq!((d.n(), d.p(), d.m()), (100, 12, 8));
        let d = model_three(0.1, 0);
        assert_eq!((d.n(), d.p(), d.m()), (100, 500, 50));
    }
}
