//! Identity suites: exact statements the discretization must reproduce to
//! quadrature precision on randomized surfaces.
//!
//! Each suite checks one structural identity rather than an asymptotic
//! claim, so the tolerances are tight and independent of radius ladders:
//!
//! * splitting: W = 8 pi (1 - genus) + U + V, the Gauss equation traced
//!   against Gauss-Bonnet;
//! * Gauss: the pointwise trace 2 K = Scal - 2 Ric(nu,nu) + H^2 - |A|^2
//!   relating intrinsic and ambient curvature at every node;
//! * divergence: the closed-surface divergence theorem
//!   int div_Sigma X dmu = int H g(X, nu) dmu for ambient fields X;
//! * variation: analytic first variations of area, W, U, and V against
//!   central finite differences of the functionals along normal motions.
//!
//! The finite-difference harness re-encodes the perturbed embedding
//! F + eps f nu in a higher band before evaluating: the product of a
//! band-limited f with the normal is not band-limited, and evaluating the
//! displaced surface in the original band would fold that content back
//! into visible modes and contaminate the difference quotient.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ambient::MetricModel;
use crate::error::Result;
use crate::functionals::{self, VariationField, Variations};
use crate::sph::{coeff_index, n_coeffs};
use crate::surface::{SphereParam, SurfaceGeometry};

/// Splitting residual bound, relative to 1 + W.
pub const SPLITTING_TOL: f64 = 1e-6;
/// Nodewise Gauss-equation residual bound, times the curvature scale r^-2.
pub const GAUSS_TOL: f64 = 1e-6;
/// Divergence-theorem residual bound, relative to the integrand mass.
pub const DIVERGENCE_TOL: f64 = 1e-8;
/// Relative mismatch allowed between analytic and finite-difference
/// first variations.
pub const VARIATION_TOL: f64 = 1e-4;

/// One identity evaluated on one surface (or one surface/field pair).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<CheckOutcome>,
    pub passed: bool,
}

impl SuiteReport {
    fn assemble(suite: &str, checks: Vec<CheckOutcome>) -> Self {
        let passed = checks.iter().all(|c| c.pass);
        SuiteReport { suite: suite.into(), checks, passed }
    }
}

fn check(name: String, value: f64, bound: f64) -> CheckOutcome {
    CheckOutcome { name, value, bound, pass: value.is_finite() && value <= bound }
}

/// Size and seeding of the randomized test set.
#[derive(Debug, Clone)]
pub struct VerifyConfig {
    /// Randomized surfaces per identity suite.
    pub surfaces: usize,
    /// (surface, field) pairs in the variation suite.
    pub pairs: usize,
    pub seed: u64,
    /// Base sphere radius; keep below half the model chart radius.
    pub radius: f64,
    /// Relative size of the band-limited shape perturbation.
    pub amplitude: f64,
    pub l_max: usize,
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            surfaces: 10,
            pairs: 20,
            seed: 7,
            radius: 0.3,
            amplitude: 0.03,
            l_max: 4,
            n_theta: 32,
            n_phi: 64,
        }
    }
}

/// Runs all four suites with the same configuration.
pub fn run_all(model: &MetricModel, cfg: &VerifyConfig) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        splitting_suite(model, cfg)?,
        gauss_suite(model, cfg)?,
        divergence_suite(model, cfg)?,
        variation_suite(model, cfg)?,
    ])
}

/// W - 8 pi (1 - genus) - U - V on randomized perturbed spheres.
pub fn splitting_suite(model: &MetricModel, cfg: &VerifyConfig) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut checks = Vec::with_capacity(cfg.surfaces);
    for i in 0..cfg.surfaces {
        let geom = perturbed_sphere(&mut rng, cfg)?.geometry(model)?;
        let rep = functionals::evaluate(&geom, model)?;
        checks.push(check(
            format!("surface{i:02}"),
            rep.splitting_residual.abs(),
            SPLITTING_TOL * (1.0 + rep.w.abs()),
        ));
    }
    Ok(SuiteReport::assemble("splitting", checks))
}

/// Max nodewise residual of 2 K = Scal - 2 Ric(nu,nu) + H^2 - |A|^2.
pub fn gauss_suite(model: &MetricModel, cfg: &VerifyConfig) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut checks = Vec::with_capacity(cfg.surfaces);
    for i in 0..cfg.surfaces {
        let geom = perturbed_sphere(&mut rng, cfg)?.geometry(model)?;
        let mut worst = 0.0f64;
        for n in 0..geom.n_nodes() {
            let rhs = geom.scal_amb[n] - 2.0 * geom.ric_nn[n] + geom.h[n] * geom.h[n]
                - geom.a_norm2[n];
            worst = worst.max((geom.scal_intrinsic[n] - rhs).abs());
        }
        let r2 = geom.area / (4.0 * std::f64::consts::PI);
        checks.push(check(format!("surface{i:02}"), worst, GAUSS_TOL / r2));
    }
    Ok(SuiteReport::assemble("gauss", checks))
}

/// int div_Sigma X dmu against int H g(X, nu) dmu for the position field
/// and for a random constant field.
pub fn divergence_suite(model: &MetricModel, cfg: &VerifyConfig) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut checks = Vec::with_capacity(2 * cfg.surfaces);
    for i in 0..cfg.surfaces {
        let geom = perturbed_sphere(&mut rng, cfg)?.geometry(model)?;
        let b: Vector3<f64> =
            Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                .normalize();
        let (value, scale) = divergence_residual(&geom, model, DivField::Position)?;
        checks.push(check(format!("surface{i:02}.position"), value, DIVERGENCE_TOL * scale));
        let (value, scale) = divergence_residual(&geom, model, DivField::Constant(b))?;
        checks.push(check(format!("surface{i:02}.constant"), value, DIVERGENCE_TOL * scale));
    }
    Ok(SuiteReport::assemble("divergence", checks))
}

/// Analytic dArea, dW, dU, dV against central finite differences along
/// random normal velocity fields on random surfaces.
pub fn variation_suite(model: &MetricModel, cfg: &VerifyConfig) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut checks = Vec::with_capacity(4 * cfg.pairs);
    for i in 0..cfg.pairs {
        let param = perturbed_sphere(&mut rng, cfg)?;
        let l_f = 3usize;
        let mut f_coeffs = vec![0.0; n_coeffs(l_f)];
        for c in f_coeffs.iter_mut() {
            *c = rng.gen_range(-1.0..1.0);
        }
        let (an, fd) = variation_pair(model, &param, &f_coeffs, l_f)?;
        let total: f64 = fd.iter().map(|v| v.abs()).sum();
        let rel = |a: f64, f: f64| (a - f).abs() / f.abs().max(0.01 * total).max(1e-12);
        checks.push(check(format!("pair{i:02}.darea"), rel(an.darea, fd[0]), VARIATION_TOL));
        checks.push(check(format!("pair{i:02}.dw"), rel(an.dw, fd[1]), VARIATION_TOL));
        checks.push(check(format!("pair{i:02}.du"), rel(an.du, fd[2]), VARIATION_TOL));
        checks.push(check(format!("pair{i:02}.dv"), rel(an.dv, fd[3]), VARIATION_TOL));
    }
    Ok(SuiteReport::assemble("variation", checks))
}

// ---------------------------------------------------------------------------
// Harness internals
// ---------------------------------------------------------------------------

/// Random center, random band-limited bump on degrees 2..=l_max, scaled so
/// the surface stays an embedded near-sphere with positive mean curvature.
fn perturbed_sphere(rng: &mut ChaCha8Rng, cfg: &VerifyConfig) -> Result<SphereParam> {
    let r = cfg.radius;
    let center = Vector3::new(
        rng.gen_range(-0.05..0.05) * r,
        rng.gen_range(-0.05..0.05) * r,
        rng.gen_range(-0.05..0.05) * r,
    );
    let mut p = SphereParam::round_sphere(center, r, cfg.l_max, cfg.n_theta, cfg.n_phi)?;
    for l in 2..=cfg.l_max {
        for m in -(l as i64)..=(l as i64) {
            for coeffs in &mut p.coeffs {
                coeffs[coeff_index(l, m)] += cfg.amplitude * r * rng.gen_range(-1.0..1.0)
                    / l as f64;
            }
        }
    }
    Ok(p)
}

enum DivField {
    Position,
    Constant(Vector3<f64>),
}

fn divergence_residual(
    geom: &SurfaceGeometry,
    model: &MetricModel,
    field: DivField,
) -> Result<(f64, f64)> {
    let nn = geom.n_nodes();
    let mut lhs = vec![0.0; nn];
    let mut rhs = vec![0.0; nn];
    for n in 0..nn {
        let data = model.metric_at(&geom.pos[n])?;
        let gamma = MetricModel::christoffels(&data);
        let (x, dx): (Vector3<f64>, [Vector3<f64>; 2]) = match field {
            DivField::Position => (geom.pos[n], [geom.f_t[n], geom.f_p[n]]),
            DivField::Constant(b) => (b, [Vector3::zeros(), Vector3::zeros()]),
        };
        let tangents = [geom.f_t[n], geom.f_p[n]];
        let mut cov = [Vector3::zeros(), Vector3::zeros()];
        for a in 0..2 {
            let mut v = dx[a];
            for c in 0..3 {
                let mut acc = 0.0;
                for j in 0..3 {
                    for k in 0..3 {
                        acc += gamma[c][j][k] * tangents[a][j] * x[k];
                    }
                }
                v[c] += acc;
            }
            cov[a] = v;
        }
        let pair = |u: &Vector3<f64>, w: &Vector3<f64>| (data.g * u).dot(w);
        let gi = geom.gamma_inv[n];
        lhs[n] = gi[0] * pair(&cov[0], &tangents[0])
            + gi[1] * (pair(&cov[0], &tangents[1]) + pair(&cov[1], &tangents[0]))
            + gi[2] * pair(&cov[1], &tangents[1]);
        rhs[n] = geom.h[n] * x.dot(&geom.g_nu[n]);
    }
    let residual = (geom.integrate(&lhs) - geom.integrate(&rhs)).abs();
    let mass: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a.abs() + b.abs()).collect();
    Ok((residual, geom.integrate(&mass).max(1e-30)))
}

/// Zero-pads a parameterization into a larger band on a finer grid.
fn padded(base: &SphereParam, l_big: usize, n_theta: usize, n_phi: usize) -> SphereParam {
    let n = n_coeffs(l_big);
    let mut coeffs = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for c in 0..3 {
        coeffs[c][..base.coeffs[c].len()].copy_from_slice(&base.coeffs[c]);
    }
    SphereParam { l_max: l_big, n_theta, n_phi, coeffs }
}

/// Central finite differences of (area, W, U, V) along f nu, with the
/// displaced embeddings re-encoded at band l_max + l_f + 10.
fn variation_pair(
    model: &MetricModel,
    base: &SphereParam,
    f_coeffs: &[f64],
    l_f: usize,
) -> Result<(Variations, [f64; 4])> {
    let l_big = base.l_max + l_f + 10;
    let n_theta = 2 * l_big + 8;
    let n_phi = 2 * n_theta;
    let pad = padded(base, l_big, n_theta, n_phi);
    let geom = pad.geometry(model)?;
    let f_nodes = geom.grid.synth(f_coeffs, l_f, 0, 0);
    let an = functionals::first_variations(
        &geom,
        &VariationField { values: f_nodes.clone(), b: None },
    )?;
    let r = (geom.area / (4.0 * std::f64::consts::PI)).sqrt();
    let eps = 1e-5 * r;
    let mut sides = [[0.0; 4]; 2];
    for (side, sign) in [1.0f64, -1.0].into_iter().enumerate() {
        let mut coeffs = [vec![], vec![], vec![]];
        for c in 0..3 {
            let shifted: Vec<f64> = (0..geom.n_nodes())
                .map(|n| geom.pos[n][c] + sign * eps * f_nodes[n] * geom.nu[n][c])
                .collect();
            coeffs[c] = geom.grid.analyze(&shifted, l_big);
        }
        let moved = SphereParam { l_max: l_big, n_theta, n_phi, coeffs };
        let g = moved.geometry(model)?;
        let h2: Vec<f64> = g.h.iter().map(|h| h * h).collect();
        let enn2: Vec<f64> = g.einstein_nn.iter().map(|e| 2.0 * e).collect();
        sides[side] = [
            g.area,
            0.5 * g.integrate(&h2),
            g.integrate(&g.atf_norm2),
            g.integrate(&enn2),
        ];
    }
    let mut fd = [0.0; 4];
    for i in 0..4 {
        fd[i] = (sides[0][i] - sides[1][i]) / (2.0 * eps);
    }
    Ok((an, fd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;

    fn small_cfg() -> VerifyConfig {
        VerifyConfig { surfaces: 3, pairs: 4, ..VerifyConfig::default() }
    }

    fn print_suites(reports: &[SuiteReport]) {
        for rep in reports {
            println!("suite {:<11} passed={}", rep.suite, rep.passed);
            for c in &rep.checks {
                println!("  {:<22} value={:>12.4e} bound={:>12.4e} {}", c.name, c.value, c.bound,
                    if c.pass { "ok" } else { "FAIL" });
            }
        }
    }

    #[test]
    fn flat_suites_pass() {
        let model = MetricModel::flat(1.0).unwrap();
        let reports = run_all(&model, &small_cfg()).unwrap();
        print_suites(&reports);
        assert!(reports.iter().all(|r| r.passed));
        assert_eq!(reports.len(), 4);
    }

    #[test]
    fn space_form_suites_pass() {
        let model = MetricModel::space_form(1.0, 1.0).unwrap();
        let reports = run_all(&model, &small_cfg()).unwrap();
        print_suites(&reports);
        for rep in &reports {
            assert!(rep.passed, "suite {} failed", rep.suite);
        }
    }

    #[test]
    fn quadratic_curvature_suites_pass() {
        let ric0 = Matrix3::from_diagonal(&Vector3::new(1.0, 0.5, 0.25));
        let model =
            MetricModel::quadratic_curvature(ric0, Vector3::new(0.3, -0.2, 0.1), 1.0).unwrap();
        let reports = run_all(&model, &small_cfg()).unwrap();
        print_suites(&reports);
        for rep in &reports {
            assert!(rep.passed, "suite {} failed", rep.suite);
        }
    }

    #[test]
    fn suites_are_deterministic() {
        let model = MetricModel::space_form(0.5, 1.0).unwrap();
        let cfg = VerifyConfig { surfaces: 2, pairs: 2, ..VerifyConfig::default() };
        let a = run_all(&model, &cfg).unwrap();
        let b = run_all(&model, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
