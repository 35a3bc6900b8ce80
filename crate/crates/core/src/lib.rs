//! Geometry and analysis of Willmore-type surfaces in curved ambient spaces.
//!
//! The crate models closed genus-zero surfaces as spherical-harmonic graphs
//! over the round sphere, immersed in a Riemannian ambient ball given in
//! normal coordinates. On top of that sit the curvature functionals (Willmore
//! energy, tracefree second fundamental form energy, ambient curvature
//! coupling), their first variations, an area-constrained minimizer, and
//! resolution/radius sweep experiments for the small-sphere asymptotics.

pub mod ambient;
pub mod error;
pub mod experiments;
pub mod functionals;
pub mod optimize;
pub mod sph;
pub mod surface;
pub mod verify;

pub use ambient::{CurvatureBundle, MetricData, MetricKind, MetricModel};
pub use error::{Error, Result};
pub use experiments::{ConvergenceTable, SlopeFit, SweepMode, SweepSpec};
pub use functionals::{FunctionalReport, VariationField, Variations};
pub use optimize::{OptimizeOptions, SolveResult};
pub use sph::SphGrid;
pub use surface::{SphereParam, SurfaceGeometry};

/// Compensated (Kahan-Babuska-Neumaier) summation; the integrals here add
/// tens of thousands of similar-magnitude node contributions and plain
/// summation costs two to three digits at the tightest tolerances.
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::kahan_sum;

    #[test]
    fn kahan_sum_recovers_cancelling_series() {
        // 1 + 1e-16 * 10000 - 1 summed naively loses the small parts entirely.
        let mut vals = vec![1.0];
        vals.extend(std::iter::repeat(1e-16).take(10_000));
        vals.push(-1.0);
        let naive: f64 = vals.iter().sum();
        let s = kahan_sum(vals);
        assert_eq!(naive, 0.0);
        assert!((s - 1e-12).abs() < 1e-23, "got {s:e}");
    }

    #[test]
    fn kahan_sum_matches_exact_integers() {
        let s = kahan_sum((0..1000).map(|i| i as f64));
        assert_eq!(s, 499_500.0);
    }
}
