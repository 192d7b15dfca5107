//! Fixtures shared by the criterion benches in `benches/`.

use gibbs_core::instances::logconcave_poly_instance;
use gibbs_core::GibbsInstance;

/// Counts `(1, 2, 1)` on `{0, 1, 2}` over `[0, 1]`.
pub fn small_instance() -> GibbsInstance {
    GibbsInstance::new(vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 1.0], 0.0, 1.0).expect("valid instance")
}

/// Log-concave polynomial instance on `0..=2m` with log partition ratio `q`.
pub fn poly_instance(m: usize, q: f64) -> GibbsInstance {
    logconcave_poly_instance(m, q).expect("valid instance")
}
