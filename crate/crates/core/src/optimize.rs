//! Area-constrained minimization of the Willmore energy over
//! spherical-harmonic coefficients.
//!
//! The constrained problem "minimize W subject to area = a" is solved by an
//! augmented Lagrangian: inner rounds minimize
//! Phi = W + lhat (area - a) + (mu/2)(area - a)^2 over the coefficient
//! vector with a limited-memory quasi-Newton method, outer rounds update the
//! multiplier estimate lhat (or raise mu when the constraint stalls). The
//! shape gradient is assembled from the first-variation densities paired
//! with the normal component of each basis perturbation; tangential motion
//! carries no first-order change of any functional, and search directions
//! are projected onto pure normal motion so the parameterization cannot
//! slide along the surface during descent.
//!
//! At a constrained critical point the surface satisfies
//! Delta H + H|Atf|^2 + H Ric(nu,nu) + lambda H = 0 with lambda = -lhat;
//! the reported multiplier is always re-extracted from the final surface by
//! least squares so it does not inherit augmented-Lagrangian bias.

use std::collections::VecDeque;

use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ambient::MetricModel;
use crate::error::{Error, Result};
use crate::functionals;
use crate::sph::{coeff_index, n_coeffs};
use crate::surface::{SphereParam, SurfaceGeometry};

/// Knobs for [`solve`]. `Default` gives the settings used throughout the
/// experiments; only `area_target` has no sensible default and must be set.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct OptimizeOptions {
    /// Prescribed area of the constrained problem.
    pub area_target: f64,
    /// Augmented-Lagrangian rounds.
    pub max_outer: usize,
    /// Descent steps per round.
    pub max_inner: usize,
    /// Bound on the scaled criticality residual
    /// ||Delta H + H|Atf|^2 + H Ric(nu,nu) + lambda H||_{L2(dmu)} area^{3/2}.
    pub el_tol: f64,
    /// Relative area tolerance |area - a| <= area_tol * a.
    pub area_tol: f64,
    /// Initial penalty weight mu.
    pub penalty0: f64,
    /// Step scale for gradient-direction moves (multiplied by r^3 where
    /// r = sqrt(a / 4 pi), matching the r^-3 growth of the gradient).
    pub step0: f64,
    /// Pin the degree-zero (translation) coefficients to their initial
    /// values.
    pub freeze_center: bool,
    /// Seed for the finite-difference gradient audit probe.
    pub seed: u64,
    /// Run the finite-difference gradient audit before descending.
    pub verify_gradient: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            area_target: 4.0 * std::f64::consts::PI * 0.01,
            max_outer: 40,
            max_inner: 400,
            el_tol: 1e-6,
            area_tol: 1e-8,
            penalty0: 1.0,
            step0: 1.0,
            freeze_center: false,
            seed: 7,
            verify_gradient: true,
        }
    }
}

impl OptimizeOptions {
    pub fn validate(&self, model: &MetricModel) -> Result<()> {
        for (name, v) in [
            ("area_target", self.area_target),
            ("el_tol", self.el_tol),
            ("area_tol", self.area_tol),
            ("penalty0", self.penalty0),
            ("step0", self.step0),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Validation(format!(
                    "optimizer option {name} must be positive and finite, got {v}"
                )));
            }
        }
        let r = (self.area_target / (4.0 * std::f64::consts::PI)).sqrt();
        if r >= 0.5 * model.rho {
            return Err(Error::Validation(format!(
                "area_target implies radius {r:.4} but the metric chart only \
                 supports radii below {:.4}",
                0.5 * model.rho
            )));
        }
        Ok(())
    }

    /// Nominal radius sqrt(a / 4 pi) of the constrained problem.
    pub fn radius_scale(&self) -> f64 {
        (self.area_target / (4.0 * std::f64::consts::PI)).sqrt()
    }
}

/// One accepted descent step. `lambda_estimate` is the least-squares
/// multiplier of the current surface, not the augmented-Lagrangian state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub iter: usize,
    pub w: f64,
    pub area: f64,
    pub el_residual: f64,
    pub lambda_estimate: f64,
}

/// Output of [`solve`].
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub surface: SphereParam,
    /// Least-squares multiplier of the final surface.
    pub lambda: f64,
    pub report: functionals::FunctionalReport,
    pub converged: bool,
    pub history: Vec<HistoryRow>,
}

/// Both multiplier estimators evaluated on one surface.
#[derive(Debug, Clone, Copy)]
pub struct MultiplierEstimate {
    /// Least-squares value (defined even far from criticality).
    pub lambda: f64,
    /// L2(dmu) criticality residual at that value.
    pub residual: f64,
    /// Integrated-identity value; agrees with `lambda` on critical surfaces.
    pub lambda_identity: f64,
}

/// Extracts the area-constraint multiplier from a surface with H > 0.
pub fn extract_multiplier(geom: &SurfaceGeometry) -> Result<MultiplierEstimate> {
    if geom.min_h <= 0.0 {
        return Err(Error::Hypothesis(format!(
            "multiplier extraction requires H > 0 everywhere, min H = {:.6e}",
            geom.min_h
        )));
    }
    let el = functionals::el_density(geom);
    let lambda = functionals::lambda_lsq(geom);
    let residual = geom
        .integrate(
            &el.iter()
                .zip(&geom.h)
                .map(|(e, h)| (e + lambda * h) * (e + lambda * h))
                .collect::<Vec<_>>(),
        )
        .max(0.0)
        .sqrt();

    let log_h: Vec<f64> = geom.h.iter().map(|h| h.ln()).collect();
    let glh = geom.integrate(&geom.grad_norm2(&log_h)?);
    let u = geom.integrate(&geom.atf_norm2);
    let ric = geom.integrate(&geom.ric_nn);
    let lambda_identity = -(glh + u + ric) / geom.area;

    Ok(MultiplierEstimate { lambda, residual, lambda_identity })
}

/// Default starting guess: the centered coordinate sphere whose Euclidean
/// area matches the target.
pub fn default_init(
    opts: &OptimizeOptions,
    l_max: usize,
    n_theta: usize,
    n_phi: usize,
) -> Result<SphereParam> {
    SphereParam::round_sphere(Vector3::zeros(), opts.radius_scale(), l_max, n_theta, n_phi)
}

struct State {
    param: SphereParam,
    geom: SurfaceGeometry,
    w: f64,
}

impl State {
    fn eval(model: &MetricModel, param: SphereParam) -> Result<State> {
        let geom = param.geometry(model)?;
        let w = 0.5 * geom.integrate(&geom.h.iter().map(|h| h * h).collect::<Vec<_>>());
        Ok(State { param, geom, w })
    }

    fn phi(&self, lhat: f64, mu: f64, a: f64) -> f64 {
        let d = self.geom.area - a;
        self.w + lhat * d + 0.5 * mu * d * d
    }

    /// Scaled norm of the criticality density -G_W + m H at effective
    /// multiplier m (the inner objective's shape derivative).
    fn criticality(&self, m: f64) -> f64 {
        let el = functionals::el_density(&self.geom);
        let sq: Vec<f64> = el
            .iter()
            .zip(&self.geom.h)
            .map(|(e, h)| {
                let r = -e + m * h;
                r * r
            })
            .collect();
        self.geom.integrate(&sq).max(0.0).sqrt() * self.geom.area.powf(1.5)
    }

    fn history_row(&self, iter: usize) -> HistoryRow {
        let el = functionals::el_density(&self.geom);
        let lam = functionals::lambda_lsq(&self.geom);
        let res = self
            .geom
            .integrate(
                &el.iter()
                    .zip(&self.geom.h)
                    .map(|(e, h)| (e + lam * h) * (e + lam * h))
                    .collect::<Vec<_>>(),
            )
            .max(0.0)
            .sqrt();
        HistoryRow { iter, w: self.w, area: self.geom.area, el_residual: res, lambda_estimate: lam }
    }
}

/// Gradient of the augmented Lagrangian with respect to the coefficient
/// vector.
///
/// The derivative of any of the functionals under a basis perturbation
/// delta F = Y_j e_k is its first-variation density integrated against the
/// normal speed g(e_k, nu) Y_j; collecting the densities per coordinate and
/// analyzing them spectrally yields all coefficient derivatives at once.
/// Tangential motion contributes nothing, so no tangential terms appear.
fn gradient(st: &State, m_eff: f64, freeze_center: bool) -> DVector<f64> {
    let geom = &st.geom;
    let grid = &geom.grid;
    let nc = n_coeffs(st.param.l_max);
    let nn = geom.n_nodes();
    let el = functionals::el_density(geom);
    let mut g = DVector::zeros(3 * nc);
    for k in 0..3 {
        let density: Vec<f64> = (0..nn)
            .map(|n| {
                let i = n / grid.n_phi;
                (-el[n] + m_eff * geom.h[n]) * geom.g_nu[n][k] * geom.sqrt_det[n]
                    / grid.sin_theta[i]
            })
            .collect();
        let coeffs = grid.analyze(&density, st.param.l_max);
        for (j, c) in coeffs.iter().enumerate() {
            g[k * nc + j] = *c;
        }
    }

    if freeze_center {
        for k in 0..3 {
            g[k * nc + coeff_index(0, 0)] = 0.0;
        }
    }
    g
}

/// Projects a coefficient direction onto pure normal motion of the current
/// surface: delta F maps to g(delta F, nu) nu, re-encoded at the parameter
/// band. Tangential components reparameterize the surface without moving
/// it, so every functional is exactly flat along them; left free they
/// accumulate during descent, and the band truncation of the slid
/// parameterization shows up as normal ripples that inflate the criticality
/// residual long after W, area and the multiplier have converged.
fn project_normal_motion(
    geom: &SurfaceGeometry,
    l_max: usize,
    d: &DVector<f64>,
) -> DVector<f64> {
    let grid = &geom.grid;
    let nc = n_coeffs(l_max);
    let nn = geom.n_nodes();
    let mut delta = vec![Vector3::zeros(); nn];
    for k in 0..3 {
        let coeffs: Vec<f64> = (0..nc).map(|j| d[k * nc + j]).collect();
        let vals = grid.synth(&coeffs, l_max, 0, 0);
        for (dv, v) in delta.iter_mut().zip(vals) {
            dv[k] = v;
        }
    }
    let mut out = DVector::zeros(3 * nc);
    for k in 0..3 {
        let comp: Vec<f64> = (0..nn)
            .map(|n| delta[n].dot(&geom.g_nu[n]) * geom.nu[n][k])
            .collect();
        // The product f nu is not band-limited; analyze at the full table
        // band so nothing folds onto the low modes, then truncate to the
        // parameter band.
        let c = grid.analyze(&comp, grid.l_tab);
        for j in 0..nc {
            out[k * nc + j] = c[j];
        }
    }
    out
}

fn flatten(param: &SphereParam) -> DVector<f64> {
    let nc = n_coeffs(param.l_max);
    let mut x = DVector::zeros(3 * nc);
    for k in 0..3 {
        for j in 0..nc {
            x[k * nc + j] = param.coeffs[k][j];
        }
    }
    x
}

fn write_coeffs(param: &mut SphereParam, x: &DVector<f64>) {
    let nc = n_coeffs(param.l_max);
    for k in 0..3 {
        for j in 0..nc {
            param.coeffs[k][j] = x[k * nc + j];
        }
    }
}

struct Lbfgs {
    mem: VecDeque<(DVector<f64>, DVector<f64>, f64)>,
    cap: usize,
}

impl Lbfgs {
    fn new(cap: usize) -> Self {
        Lbfgs { mem: VecDeque::new(), cap }
    }

    fn clear(&mut self) {
        self.mem.clear();
    }

    fn is_empty(&self) -> bool {
        self.mem.is_empty()
    }

    fn push(&mut self, s: DVector<f64>, y: DVector<f64>) {
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if self.mem.len() == self.cap {
                self.mem.pop_front();
            }
            self.mem.push_back((s, y, 1.0 / sy));
        }
    }

    /// Two-loop recursion for -H g.
    fn direction(&self, g: &DVector<f64>) -> DVector<f64> {
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(self.mem.len());
        for (s, y, rho) in self.mem.iter().rev() {
            let a = rho * s.dot(&q);
            q.axpy(-a, y, 1.0);
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.mem.back() {
            q *= s.dot(y) / y.dot(y);
        }
        for ((s, y, rho), a) in self.mem.iter().zip(alphas.iter().rev()) {
            let b = rho * y.dot(&q);
            q.axpy(a - b, s, 1.0);
        }
        -q
    }
}

/// Directional finite-difference audit of the shape gradient.
///
/// Evaluates the augmented Lagrangian at `x +- h v` with v the normalized
/// analytic gradient at a slightly randomized copy of `init`, and returns
/// the relative disagreement of the central difference with the analytic
/// directional derivative. [`solve`] runs this before descending and aborts
/// when the disagreement exceeds 1e-4; that gate catches sign or pairing
/// mistakes in any of the variation densities.
pub fn check_gradient(
    model: &MetricModel,
    init: &SphereParam,
    opts: &OptimizeOptions,
) -> Result<f64> {
    let a = opts.area_target;
    let r = opts.radius_scale();
    // The audit exists to catch sign and pairing mistakes, which are O(1);
    // run it on a quadrature grid generous enough that aliasing of field
    // products sits far below the 1e-4 gate, and keep the probe perturbation
    // at low degree so the integrands stay narrow-band.
    let mut probe_param = init.clone();
    probe_param.n_theta = init.n_theta.max(3 * init.l_max + 4);
    probe_param.n_phi = init.n_phi.max(6 * init.l_max + 8);
    let nc = n_coeffs(init.l_max);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = flatten(&probe_param);
    for k in 0..3 {
        for l in 0..=init.l_max.min(2) {
            for m in -(l as i64)..=(l as i64) {
                x[k * nc + coeff_index(l, m)] += 1e-3 * r * (rng.gen::<f64>() - 0.5);
            }
        }
    }
    let mut param = probe_param;
    write_coeffs(&mut param, &x);
    let st = State::eval(model, param.clone())?;
    let mu = opts.penalty0 * 8.0 * std::f64::consts::PI / (a * a);
    let m_eff = mu * (st.geom.area - a);
    let g = gradient(&st, m_eff, opts.freeze_center);
    let gn = g.norm();
    if gn == 0.0 {
        return Err(Error::GradientCheck { rel_err: f64::INFINITY, limit: 1e-4 });
    }
    let v = &g / gn;
    let h = 1e-5 * r;
    let mut probe = |t: f64| -> Result<f64> {
        let xt = &x + &v * t;
        write_coeffs(&mut param, &xt);
        Ok(State::eval(model, param.clone())?.phi(0.0, mu, a))
    };
    let fd = (probe(h)? - probe(-h)?) / (2.0 * h);
    let rel_err = (fd - gn).abs() / gn.abs().max(1e-12);
    if rel_err > 1e-4 {
        return Err(Error::GradientCheck { rel_err, limit: 1e-4 });
    }
    Ok(rel_err)
}

/// Minimizes W subject to area = `opts.area_target`, starting from `init`.
///
/// Descent is monotone in the augmented Lagrangian across accepted steps
/// (backtracking line search with an Armijo test). Convergence requires all
/// three of: scaled criticality residual at or below `el_tol`, relative area
/// error at or below `area_tol`, and H > 0 everywhere. Encountering H <= 0
/// at an accepted iterate aborts with a hypothesis violation; the run is
/// otherwise deterministic in (model, init, options).
pub fn solve(
    model: &MetricModel,
    init: &SphereParam,
    opts: &OptimizeOptions,
) -> Result<SolveResult> {
    opts.validate(model)?;
    init.validate()?;
    let a = opts.area_target;
    let r = opts.radius_scale();

    let mut param = init.clone();
    let mut x = flatten(&param);
    let mut st = State::eval(model, param.clone())?;
    if st.geom.min_h <= 0.0 {
        return Err(Error::Hypothesis(format!(
            "initial surface violates H > 0 (min H = {:.6e})",
            st.geom.min_h
        )));
    }
    let ratio = st.geom.area / a;
    if !(0.25 / 1.000001..=4.000001).contains(&ratio) {
        return Err(Error::Validation(format!(
            "initial area is {ratio:.3} times the target; must be within a factor of 4"
        )));
    }
    if opts.verify_gradient {
        check_gradient(model, init, opts)?;
    }

    let l_max = param.l_max;
    // Penalty weight in natural units: a relative area violation epsilon
    // costs about penalty0 * 4 pi epsilon^2 of energy, so the first
    // subproblem's minimum sits within O(|lambda| a^2 / penalty0) of the
    // constraint instead of an area-doubling excursion away. The multiplier
    // starts from the initial surface's least-squares estimate for the same
    // reason: big detours through shape space leave truncation-level ripples
    // behind that the flat directions of W never iron out.
    let mu_scale = 8.0 * std::f64::consts::PI / (a * a);
    let mut lhat = -functionals::lambda_lsq(&st.geom);
    let mut mu = opts.penalty0 * mu_scale;
    let mut history = Vec::new();
    let mut it = 0usize;
    history.push(st.history_row(it));
    let mut prev_delta = f64::INFINITY;
    let mut converged = false;

    'outer: for _ in 0..opts.max_outer {
        let mut mem = Lbfgs::new(8);
        let mut g = gradient(&st, lhat + mu * (st.geom.area - a), opts.freeze_center);
        let mut t_grad = opts.step0 * r.powi(3);
        // The assembled gradient agrees with the quadrature objective only
        // down to the aliasing floor of the grid; once line-search progress
        // sinks to rounding level the subproblem is as solved as this
        // resolution allows.
        let mut stalled = 0usize;
        for _ in 0..opts.max_inner {
            let m_eff = lhat + mu * (st.geom.area - a);
            if st.criticality(m_eff) <= 0.3 * opts.el_tol {
                break;
            }
            let mask_center = |d: &mut DVector<f64>| {
                if opts.freeze_center {
                    for k in 0..3 {
                        d[k * n_coeffs(l_max) + coeff_index(0, 0)] = 0.0;
                    }
                }
            };
            let from_memory = !mem.is_empty();
            let raw = if from_memory { mem.direction(&g) } else { -g.clone() };
            let mut d = project_normal_motion(&st.geom, l_max, &raw);
            mask_center(&mut d);
            let mut slope = g.dot(&d);
            let mut t = if from_memory { 1.0 } else { t_grad };
            if slope >= 0.0 && from_memory {
                mem.clear();
                d = project_normal_motion(&st.geom, l_max, &(-g.clone()));
                mask_center(&mut d);
                slope = g.dot(&d);
                t = t_grad;
            }
            if slope >= 0.0 {
                break;
            }
            let phi0 = st.phi(lhat, mu, a);
            let mut accepted = None;
            for _ in 0..60 {
                let xc = &x + &d * t;
                write_coeffs(&mut param, &xc);
                match State::eval(model, param.clone()) {
                    Ok(c) => {
                        let phic = c.phi(lhat, mu, a);
                        if phic.is_finite() && phic <= phi0 + 1e-4 * t * slope {
                            accepted = Some((xc, c, t));
                            break;
                        }
                        t *= 0.5;
                    }
                    Err(Error::Immersion(_)) | Err(Error::Domain(_)) => t *= 0.5,
                    Err(e) => return Err(e),
                }
            }
            let Some((xn, stn, ta)) = accepted else {
                if mem.is_empty() {
                    break; // stalled at line-search resolution
                }
                mem.clear();
                continue;
            };
            if stn.geom.min_h <= 0.0 {
                return Err(Error::Hypothesis(format!(
                    "descent produced a surface with H <= 0 (min H = {:.6e})",
                    stn.geom.min_h
                )));
            }
            let gn = gradient(&stn, lhat + mu * (stn.geom.area - a), opts.freeze_center);
            let drop = phi0 - stn.phi(lhat, mu, a);
            mem.push(&xn - &x, &gn - &g);
            x = xn;
            st = stn;
            g = gn;
            t_grad = 2.0 * ta;
            it += 1;
            history.push(st.history_row(it));
            if drop <= 1e-15 * phi0.abs().max(1.0) {
                stalled += 1;
                if stalled >= 3 {
                    break;
                }
            } else {
                stalled = 0;
            }
        }

        let delta = st.geom.area - a;
        let row = history.last().expect("history is never empty");
        let el_scaled = row.el_residual * st.geom.area.powf(1.5);
        if delta.abs() <= opts.area_tol * a && el_scaled <= opts.el_tol && st.geom.min_h > 0.0 {
            converged = true;
            break 'outer;
        }
        if delta.abs() <= 0.25 * prev_delta {
            lhat += mu * delta;
        } else if mu < 1e12 * mu_scale {
            mu *= 10.0;
        }
        prev_delta = delta.abs();
    }

    write_coeffs(&mut param, &x);
    let geom = param.geometry(model)?;
    let report = functionals::evaluate(&geom, model)?;
    let lambda = report.lambda_lsq;
    Ok(SolveResult { surface: param, lambda, report, converged, history })
}
