//! Immersed genus-zero surfaces and their extrinsic/intrinsic geometry.
//!
//! A surface is a triple of real spherical-harmonic expansions, one per
//! ambient coordinate, evaluated on a Gauss-Legendre x uniform grid. All
//! angular derivatives are spectral: the immersion derivatives come from
//! analytic derivative synthesis, phi-only derivatives of node data from
//! exact trigonometric interpolation of each latitude row. Nothing is ever
//! finite-differenced on the sphere, which is what keeps the pole rows
//! honest and the integrated identities (Gauss equation, divergence theorem)
//! good to ~1e-10 at moderate resolution.
//!
//! Conventions, fixed once and used everywhere: nu is the outward g-unit
//! normal; the second fundamental form is A_ab = -g(d2F_ab + Gamma(F)(F_a, F_b), nu),
//! so round spheres have H = gamma^{ab} A_ab = +2/r > 0 and outward motion
//! increases area.

use std::sync::Arc;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use crate::ambient::MetricModel;
use crate::error::{Error, Result};
use crate::kahan_sum;
use crate::sph::{self, SphGrid};

/// A surface given by spherical-harmonic coefficients of the three ambient
/// coordinate functions, plus the evaluation grid resolution.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SphereParam {
    pub l_max: usize,
    pub n_theta: usize,
    pub n_phi: usize,
    /// Coefficients per ambient coordinate, length (l_max + 1)^2 each,
    /// indexed by [`sph::coeff_index`].
    pub coeffs: [Vec<f64>; 3],
}

impl SphereParam {
    /// Round sphere of Euclidean radius `r` about `center`, encoded exactly
    /// in degrees zero and one.
    pub fn round_sphere(
        center: Vector3<f64>,
        r: f64,
        l_max: usize,
        n_theta: usize,
        n_phi: usize,
    ) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::Validation(format!("sphere radius must be positive, got {r}")));
        }
        let n = sph::n_coeffs(l_max);
        let mut coeffs = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let y00 = 1.0 / (4.0 * std::f64::consts::PI).sqrt();
        let deg1 = (4.0 * std::f64::consts::PI / 3.0).sqrt();
        for c in 0..3 {
            coeffs[c][sph::coeff_index(0, 0)] = center[c] / y00;
        }
        // x ~ Y_{1,1}, y ~ Y_{1,-1}, z ~ Y_{1,0} with the same scale.
        coeffs[0][sph::coeff_index(1, 1)] = r * deg1;
        coeffs[1][sph::coeff_index(1, -1)] = r * deg1;
        coeffs[2][sph::coeff_index(1, 0)] = r * deg1;
        let param = SphereParam { l_max, n_theta, n_phi, coeffs };
        param.validate()?;
        Ok(param)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l_max < 1 {
            return Err(Error::Validation("band limit l_max must be at least 1".into()));
        }
        let n = sph::n_coeffs(self.l_max);
        for (c, v) in self.coeffs.iter().enumerate() {
            if v.len() != n {
                return Err(Error::Validation(format!(
                    "coordinate {c} has {} coefficients, expected {n}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("coefficients of coordinate {c}")));
            }
        }
        let need = 2 * self.l_max + 2;
        if self.n_theta < need || self.n_phi < need {
            return Err(Error::Validation(format!(
                "grid {}x{} too coarse for l_max = {} (need at least {need} in each direction)",
                self.n_theta, self.n_phi, self.l_max
            )));
        }
        Ok(())
    }

    /// Table band limit the grid can carry; strictly larger than `l_max`,
    /// which gives products like sin(theta) dF/dtheta exact headroom.
    pub fn l_tab(&self) -> usize {
        (self.n_theta - 1).min((self.n_phi - 1) / 2)
    }

    pub fn grid(&self) -> Arc<SphGrid> {
        SphGrid::shared(self.l_tab(), self.n_theta, self.n_phi)
    }

    /// Immersion point at arbitrary angles (poles included).
    pub fn evaluate_at(&self, theta: f64, phi: f64) -> Vector3<f64> {
        Vector3::new(
            sph::eval_at(&self.coeffs[0], self.l_max, theta, phi),
            sph::eval_at(&self.coeffs[1], self.l_max, theta, phi),
            sph::eval_at(&self.coeffs[2], self.l_max, theta, phi),
        )
    }

    /// Same surface on a grid refined by an integer factor (used to estimate
    /// quadrature floors by resolution doubling).
    pub fn refined(&self, factor: usize) -> Self {
        SphereParam {
            l_max: self.l_max,
            n_theta: self.n_theta * factor,
            n_phi: self.n_phi * factor,
            coeffs: self.coeffs.clone(),
        }
    }

    /// Full geometric state on the grid, in the given ambient metric.
    pub fn geometry(&self, model: &MetricModel) -> Result<SurfaceGeometry> {
        self.validate()?;
        let grid = self.grid();
        let nn = grid.n_nodes();

        // Derivative tables of the immersion: value, d/dt, d/dp, and the
        // second and mixed-third combinations the curvature formulas need.
        let combos: [(usize, usize); 8] =
            [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (2, 1), (1, 2)];
        let mut tables: Vec<Vec<Vector3<f64>>> = Vec::with_capacity(combos.len());
        for &(dt, dp) in &combos {
            let x = grid.synth(&self.coeffs[0], self.l_max, dt, dp);
            let y = grid.synth(&self.coeffs[1], self.l_max, dt, dp);
            let z = grid.synth(&self.coeffs[2], self.l_max, dt, dp);
            tables.push((0..nn).map(|n| Vector3::new(x[n], y[n], z[n])).collect());
        }
        let [f00, f10, f01, f20, f11, f02, f21, f12] =
            <[Vec<Vector3<f64>>; 8]>::try_from(tables).expect("eight tables");

        struct NodeOut {
            nu: Vector3<f64>,
            g_nu: Vector3<f64>,
            gamma: [f64; 3],
            gamma_inv: [f64; 3],
            dgamma: [[f64; 3]; 2],
            sgam: [f64; 6],
            sqrt_det: f64,
            sqrt_det_e: f64,
            a2: [f64; 3],
            h: f64,
            a_norm2: f64,
            atf_norm2: f64,
            h_e: f64,
            atf_e_norm2: f64,
            ric: Matrix3<f64>,
            einstein: Matrix3<f64>,
            ric_nn: f64,
            einstein_nn: f64,
            scal_amb: f64,
            omega: [f64; 2],
            scal_intrinsic: f64,
        }

        let rho = model.rho;
        let nodes: Vec<NodeOut> = (0..nn)
            .into_par_iter()
            .map(|n| -> Result<NodeOut> {
                let p = f00[n];
                if !p.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFinite(format!("immersion at node {n}")));
                }
                if p.norm() >= rho {
                    return Err(Error::Domain(format!(
                        "surface exits the model ball: |F| = {:.6} >= rho = {rho}",
                        p.norm()
                    )));
                }
                let (data, ric, scal_amb, einstein) = model.ricci_at_raw(&p);
                let gamma_amb = MetricModel::christoffels(&data);
                let (ft, fp) = (f10[n], f01[n]);

                let ip = |u: &Vector3<f64>, v: &Vector3<f64>| (data.g * v).dot(u);
                let e = ip(&ft, &ft);
                let fm = ip(&ft, &fp);
                let gg = ip(&fp, &fp);
                let det = e * gg - fm * fm;
                if !(det > 0.0) {
                    return Err(Error::Immersion(format!(
                        "degenerate induced metric at node {n}: det = {det:.3e}"
                    )));
                }
                let cross = ft.cross(&fp);
                let det_e = ft.norm_squared() * fp.norm_squared() - ft.dot(&fp).powi(2);

                // Outward g-unit normal: strip tangential g-components off the
                // Euclidean cross product, then normalize in g.
                let m2 = Matrix2::new(e, fm, fm, gg);
                let rhs = Vector2::new(ip(&cross, &ft), ip(&cross, &fp));
                let ab = m2.lu().solve(&rhs).ok_or_else(|| {
                    Error::Immersion(format!("tangent system singular at node {n}"))
                })?;
                let mut nu = cross - ab[0] * ft - ab[1] * fp;
                let nn2 = ip(&nu, &nu);
                if !(nn2 > 0.0) {
                    return Err(Error::Immersion(format!("normal degenerates at node {n}")));
                }
                nu /= nn2.sqrt();
                if nu.dot(&cross) < 0.0 {
                    nu = -nu;
                }
                let g_nu = data.g * nu;

                // Second fundamental form A_ab = -g(F_ab + Gamma(F_a, F_b), nu).
                let chris = |u: &Vector3<f64>, v: &Vector3<f64>| {
                    let mut out = Vector3::zeros();
                    for c in 0..3 {
                        let mut s = 0.0;
                        for i in 0..3 {
                            for j in 0..3 {
                                s += gamma_amb[c][i][j] * u[i] * v[j];
                            }
                        }
                        out[c] = s;
                    }
                    out
                };
                let att = -ip(&(f20[n] + chris(&ft, &ft)), &nu);
                let atp = -ip(&(f11[n] + chris(&ft, &fp)), &nu);
                let app = -ip(&(f02[n] + chris(&fp, &fp)), &nu);

                let gi = [gg / det, -fm / det, e / det]; // inverse [tt, tp, pp]
                let h = gi[0] * att + 2.0 * gi[1] * atp + gi[2] * app;
                // |A|^2 = gamma^{ac} gamma^{bd} A_ab A_cd.
                let raise = |s: &[f64; 3]| -> [f64; 3] {
                    // mixed components A^a_b = gamma^{ac} A_cb
                    [
                        gi[0] * s[0] + gi[1] * s[1],
                        gi[0] * s[1] + gi[1] * s[2],
                        // second row
                        gi[1] * s[0] + gi[2] * s[1],
                    ]
                };
                let _ = raise;
                let a_mixed = [
                    [gi[0] * att + gi[1] * atp, gi[0] * atp + gi[1] * app],
                    [gi[1] * att + gi[2] * atp, gi[1] * atp + gi[2] * app],
                ];
                let a_norm2 = a_mixed[0][0] * a_mixed[0][0]
                    + a_mixed[0][1] * a_mixed[1][0]
                    + a_mixed[1][0] * a_mixed[0][1]
                    + a_mixed[1][1] * a_mixed[1][1];
                let atf_norm2 = a_norm2 - 0.5 * h * h;

                // Euclidean companions (the round-sphere proxy diagnostics
                // compare against the flat-metric curvature of the same map).
                let (h_e, atf_e_norm2) = {
                    let nu_e = cross / cross.norm();
                    let ett = ft.dot(&ft);
                    let etp = ft.dot(&fp);
                    let epp = fp.dot(&fp);
                    let aett = -f20[n].dot(&nu_e);
                    let aetp = -f11[n].dot(&nu_e);
                    let aepp = -f02[n].dot(&nu_e);
                    let gie = [epp / det_e, -etp / det_e, ett / det_e];
                    let he = gie[0] * aett + 2.0 * gie[1] * aetp + gie[2] * aepp;
                    let am = [
                        [gie[0] * aett + gie[1] * aetp, gie[0] * aetp + gie[1] * aepp],
                        [gie[1] * aett + gie[2] * aetp, gie[1] * aetp + gie[2] * aepp],
                    ];
                    let n2 = am[0][0] * am[0][0]
                        + 2.0 * am[0][1] * am[1][0]
                        + am[1][1] * am[1][1];
                    (he, n2 - 0.5 * he * he)
                };

                // Ambient curvature contractions.
                let ric_nn = (ric * nu).dot(&nu);
                let einstein_nn = (einstein * nu).dot(&nu);
                let omega = [(ric * ft).dot(&nu), (ric * fp).dot(&nu)];

                // First and second derivatives of the induced metric, all
                // analytic; these feed the Brioschi curvature and the
                // intrinsic Christoffel symbols.
                let dgc = |v: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>| {
                    let mut s = 0.0;
                    for k in 0..3 {
                        for i in 0..3 {
                            for j in 0..3 {
                                s += data.dg[k][i][j] * v[k] * a[i] * b[j];
                            }
                        }
                    }
                    s
                };
                let d2gc = |u: &Vector3<f64>,
                            v: &Vector3<f64>,
                            a: &Vector3<f64>,
                            b: &Vector3<f64>| {
                    let mut s = 0.0;
                    for k in 0..3 {
                        for l in 0..3 {
                            for i in 0..3 {
                                for j in 0..3 {
                                    s += data.d2g[k][l][i][j] * u[k] * v[l] * a[i] * b[j];
                                }
                            }
                        }
                    }
                    s
                };
                let (ftt, ftp, fpp, fttp, ftpp) = (f20[n], f11[n], f02[n], f21[n], f12[n]);
                let e_t = dgc(&ft, &ft, &ft) + 2.0 * ip(&ftt, &ft);
                let e_p = dgc(&fp, &ft, &ft) + 2.0 * ip(&ftp, &ft);
                let f_t = dgc(&ft, &ft, &fp) + ip(&ftt, &fp) + ip(&ft, &ftp);
                let f_p = dgc(&fp, &ft, &fp) + ip(&ftp, &fp) + ip(&ft, &fpp);
                let g_t = dgc(&ft, &fp, &fp) + 2.0 * ip(&ftp, &fp);
                let g_p = dgc(&fp, &fp, &fp) + 2.0 * ip(&fpp, &fp);

                let e_pp = d2gc(&fp, &fp, &ft, &ft)
                    + dgc(&fpp, &ft, &ft)
                    + 4.0 * dgc(&fp, &ftp, &ft)
                    + 2.0 * ip(&ftpp, &ft)
                    + 2.0 * ip(&ftp, &ftp);
                let f_tp = d2gc(&fp, &ft, &ft, &fp)
                    + dgc(&ftp, &ft, &fp)
                    + dgc(&ft, &ftp, &fp)
                    + dgc(&ft, &ft, &fpp)
                    + dgc(&fp, &ftt, &fp)
                    + ip(&fttp, &fp)
                    + ip(&ftt, &fpp)
                    + dgc(&fp, &ft, &ftp)
                    + ip(&ftp, &ftp)
                    + ip(&ft, &ftpp);
                let g_tt = d2gc(&ft, &ft, &fp, &fp)
                    + dgc(&ftt, &fp, &fp)
                    + 4.0 * dgc(&ft, &ftp, &fp)
                    + 2.0 * ip(&fttp, &fp)
                    + 2.0 * ip(&ftp, &ftp);

                // Brioschi formula for the Gauss curvature.
                let m1 = Matrix3::new(
                    -0.5 * e_pp + f_tp - 0.5 * g_tt,
                    0.5 * e_t,
                    f_t - 0.5 * e_p,
                    f_p - 0.5 * g_t,
                    e,
                    fm,
                    0.5 * g_p,
                    fm,
                    gg,
                );
                let m2b = Matrix3::new(
                    0.0,
                    0.5 * e_p,
                    0.5 * g_t,
                    0.5 * e_p,
                    e,
                    fm,
                    0.5 * g_t,
                    fm,
                    gg,
                );
                let kappa = (m1.determinant() - m2b.determinant()) / (det * det);
                let scal_intrinsic = 2.0 * kappa;

                // Intrinsic Christoffels from the analytic metric derivatives.
                let dgam = [[e_t, f_t, g_t], [e_p, f_p, g_p]];
                let lower = |a: usize, b: usize, d: usize| -> f64 {
                    // (1/2)(d_a gamma_bd + d_b gamma_ad - d_d gamma_ab)
                    let comp = |p: usize, q: usize| p + q; // index into [E,F,G]
                    0.5 * (dgam[a][comp(b, d)] + dgam[b][comp(a, d)] - dgam[d][comp(a, b)])
                };
                let mut sgam = [0.0; 6];
                // order: [t_tt, t_tp, t_pp, p_tt, p_tp, p_pp]
                let gi2 = [[gi[0], gi[1]], [gi[1], gi[2]]];
                let mut idx = 0;
                for c in 0..2 {
                    for (a, b) in [(0, 0), (0, 1), (1, 1)] {
                        sgam[idx] = gi2[c][0] * lower(a, b, 0) + gi2[c][1] * lower(a, b, 1);
                        idx += 1;
                    }
                }

                Ok(NodeOut {
                    nu,
                    g_nu,
                    gamma: [e, fm, gg],
                    gamma_inv: gi,
                    dgamma: dgam,
                    sgam,
                    sqrt_det: det.sqrt(),
                    sqrt_det_e: det_e.max(0.0).sqrt(),
                    a2: [att, atp, app],
                    h,
                    a_norm2,
                    atf_norm2,
                    h_e,
                    atf_e_norm2,
                    ric,
                    einstein,
                    ric_nn,
                    einstein_nn,
                    scal_amb,
                    omega,
                    scal_intrinsic,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let mut geom = SurfaceGeometry {
            grid: grid.clone(),
            l_max: self.l_max,
            pos: f00,
            f_t: f10,
            f_p: f01,
            nu: nodes.iter().map(|o| o.nu).collect(),
            g_nu: nodes.iter().map(|o| o.g_nu).collect(),
            gamma: nodes.iter().map(|o| o.gamma).collect(),
            gamma_inv: nodes.iter().map(|o| o.gamma_inv).collect(),
            dgamma: nodes.iter().map(|o| o.dgamma).collect(),
            sgam: nodes.iter().map(|o| o.sgam).collect(),
            sqrt_det: nodes.iter().map(|o| o.sqrt_det).collect(),
            sqrt_det_e: nodes.iter().map(|o| o.sqrt_det_e).collect(),
            a2: nodes.iter().map(|o| o.a2).collect(),
            h: nodes.iter().map(|o| o.h).collect(),
            a_norm2: nodes.iter().map(|o| o.a_norm2).collect(),
            atf_norm2: nodes.iter().map(|o| o.atf_norm2).collect(),
            h_e: nodes.iter().map(|o| o.h_e).collect(),
            atf_e_norm2: nodes.iter().map(|o| o.atf_e_norm2).collect(),
            ric: nodes.iter().map(|o| o.ric).collect(),
            einstein: nodes.iter().map(|o| o.einstein).collect(),
            ric_nn: nodes.iter().map(|o| o.ric_nn).collect(),
            einstein_nn: nodes.iter().map(|o| o.einstein_nn).collect(),
            scal_amb: nodes.iter().map(|o| o.scal_amb).collect(),
            omega: nodes.iter().map(|o| o.omega).collect(),
            scal_intrinsic: nodes.iter().map(|o| o.scal_intrinsic).collect(),
            lap_h: Vec::new(),
            area: 0.0,
            area_euclid: 0.0,
            min_h: 0.0,
            max_h: 0.0,
        };
        geom.area = geom.integrate_ones();
        geom.area_euclid = kahan_sum(
            (0..nn).map(|n| geom.sqrt_det_e[n] * geom.dtheta_dphi_weight(n)),
        );
        geom.min_h = geom.h.iter().cloned().fold(f64::INFINITY, f64::min);
        geom.max_h = geom.h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        geom.lap_h = geom.laplace_beltrami(&geom.h)?;
        Ok(geom)
    }
}

/// Dense per-node geometric state of an immersed surface.
///
/// Index convention throughout: 2-tensors are packed `[tt, tp, pp]`, the
/// intrinsic Christoffels `[t_tt, t_tp, t_pp, p_tt, p_tp, p_pp]`.
pub struct SurfaceGeometry {
    pub grid: Arc<SphGrid>,
    pub l_max: usize,
    pub pos: Vec<Vector3<f64>>,
    pub f_t: Vec<Vector3<f64>>,
    pub f_p: Vec<Vector3<f64>>,
    /// Outward g-unit normal.
    pub nu: Vec<Vector3<f64>>,
    /// Covector g nu, so that g(b, nu) = b . g_nu for ambient vectors b.
    pub g_nu: Vec<Vector3<f64>>,
    pub gamma: Vec<[f64; 3]>,
    pub gamma_inv: Vec<[f64; 3]>,
    pub dgamma: Vec<[[f64; 3]; 2]>,
    pub sgam: Vec<[f64; 6]>,
    pub sqrt_det: Vec<f64>,
    pub sqrt_det_e: Vec<f64>,
    /// Second fundamental form (downstairs components).
    pub a2: Vec<[f64; 3]>,
    /// Mean curvature H = gamma^{ab} A_ab.
    pub h: Vec<f64>,
    pub a_norm2: Vec<f64>,
    /// |A - (H/2) gamma|^2, the tracefree part.
    pub atf_norm2: Vec<f64>,
    /// Mean curvature of the same map measured in the Euclidean metric.
    pub h_e: Vec<f64>,
    /// Euclidean tracefree second-fundamental-form norm squared.
    pub atf_e_norm2: Vec<f64>,
    pub ric: Vec<Matrix3<f64>>,
    pub einstein: Vec<Matrix3<f64>>,
    pub ric_nn: Vec<f64>,
    pub einstein_nn: Vec<f64>,
    pub scal_amb: Vec<f64>,
    /// omega_a = Ric(nu, F_a), the normal-tangent Ricci one-form.
    pub omega: Vec<[f64; 2]>,
    /// Intrinsic scalar curvature 2K by the Brioschi formula.
    pub scal_intrinsic: Vec<f64>,
    pub lap_h: Vec<f64>,
    pub area: f64,
    pub area_euclid: f64,
    pub min_h: f64,
    pub max_h: f64,
}

/// Node values and first/second angular derivatives of a scalar field,
/// obtained by spectral analysis at the table band limit.
pub struct FieldJet {
    pub v: Vec<f64>,
    pub t: Vec<f64>,
    pub p: Vec<f64>,
    pub tt: Vec<f64>,
    pub tp: Vec<f64>,
    pub pp: Vec<f64>,
}

impl SurfaceGeometry {
    pub fn n_nodes(&self) -> usize {
        self.grid.n_nodes()
    }

    fn check_field(&self, field: &[f64]) -> Result<()> {
        if field.len() != self.n_nodes() {
            return Err(Error::GridMismatch {
                expected: (self.grid.n_theta, self.grid.n_phi),
                got: (field.len() / self.grid.n_phi.max(1), self.grid.n_phi),
            });
        }
        Ok(())
    }

    /// Quadrature weight for d(theta) d(phi) integration at node n. The
    /// Gauss-Legendre weights integrate against dx = sin(theta) d(theta), so
    /// the sine is divided back out; integrands like sqrt(det gamma) carry
    /// their own sine-type vanishing at the poles.
    pub fn dtheta_dphi_weight(&self, n: usize) -> f64 {
        let i = n / self.grid.n_phi;
        self.grid.w_theta[i] / self.grid.sin_theta[i] * self.grid.w_phi
    }

    /// Integral of a node field against the induced area measure.
    pub fn integrate(&self, field: &[f64]) -> f64 {
        kahan_sum(
            field
                .iter()
                .enumerate()
                .map(|(n, f)| f * self.sqrt_det[n] * self.dtheta_dphi_weight(n)),
        )
    }

    fn integrate_ones(&self) -> f64 {
        kahan_sum(
            (0..self.n_nodes()).map(|n| self.sqrt_det[n] * self.dtheta_dphi_weight(n)),
        )
    }

    /// Integral of a node field against the Euclidean area measure.
    pub fn integrate_euclid(&self, field: &[f64]) -> f64 {
        kahan_sum(
            field
                .iter()
                .enumerate()
                .map(|(n, f)| f * self.sqrt_det_e[n] * self.dtheta_dphi_weight(n)),
        )
    }

    /// Spectral jet of a node field (analysis at the table band limit, then
    /// derivative synthesis; phi-derivatives of the raw data use row DFTs).
    pub fn field_jet(&self, field: &[f64]) -> Result<FieldJet> {
        self.check_field(field)?;
        let l = self.grid.l_tab;
        let c = self.grid.analyze(field, l);
        Ok(FieldJet {
            v: field.to_vec(),
            t: self.grid.synth(&c, l, 1, 0),
            p: self.grid.phi_derivative(field),
            tt: self.grid.synth(&c, l, 2, 0),
            tp: self.grid.synth(&c, l, 1, 1),
            pp: self.grid.synth(&c, l, 0, 2),
        })
    }

    /// Laplace-Beltrami operator in divergence form,
    /// (1/sqrt det) d_a (sqrt det gamma^{ab} d_b u). The theta-flux is
    /// analyzed and differentiated spectrally; it vanishes like sin(theta) at
    /// the poles so its spherical-harmonic expansion is well behaved. The
    /// phi-flux is differentiated row-by-row and never meets the poles.
    pub fn laplace_beltrami(&self, field: &[f64]) -> Result<Vec<f64>> {
        self.check_field(field)?;
        let l = self.grid.l_tab;
        let c = self.grid.analyze(field, l);
        let u_t = self.grid.synth(&c, l, 1, 0);
        let u_p = self.grid.phi_derivative(field);
        let nn = self.n_nodes();
        let mut flux_t = vec![0.0; nn];
        let mut flux_p = vec![0.0; nn];
        for n in 0..nn {
            let gi = self.gamma_inv[n];
            let sd = self.sqrt_det[n];
            flux_t[n] = sd * (gi[0] * u_t[n] + gi[1] * u_p[n]);
            flux_p[n] = sd * (gi[1] * u_t[n] + gi[2] * u_p[n]);
        }
        let cf = self.grid.analyze(&flux_t, l);
        let dflux_t = self.grid.synth(&cf, l, 1, 0);
        let dflux_p = self.grid.phi_derivative(&flux_p);
        Ok((0..nn)
            .map(|n| (dflux_t[n] + dflux_p[n]) / self.sqrt_det[n])
            .collect())
    }

    /// Intrinsic (surface) gradient squared of a field,
    /// gamma^{ab} u_a u_b per node.
    pub fn grad_norm2(&self, field: &[f64]) -> Result<Vec<f64>> {
        self.check_field(field)?;
        let l = self.grid.l_tab;
        let c = self.grid.analyze(field, l);
        let u_t = self.grid.synth(&c, l, 1, 0);
        let u_p = self.grid.phi_derivative(field);
        Ok((0..self.n_nodes())
            .map(|n| {
                let gi = self.gamma_inv[n];
                gi[0] * u_t[n] * u_t[n] + 2.0 * gi[1] * u_t[n] * u_p[n] + gi[2] * u_p[n] * u_p[n]
            })
            .collect())
    }

    /// Integrated tangential divergence identity: for any ambient vector
    /// field X with Jacobian J, int (div_S X - H g(X, nu)) dmu = 0 on a
    /// closed surface. Returns the defect (should be quadrature-exact zero).
    pub fn divergence_defect(
        &self,
        x_field: impl Fn(&Vector3<f64>) -> (Vector3<f64>, Matrix3<f64>),
        model: &MetricModel,
    ) -> Result<f64> {
        let nn = self.n_nodes();
        let mut integrand = vec![0.0; nn];
        for n in 0..nn {
            let p = self.pos[n];
            let (xv, jac) = x_field(&p);
            let data = model.metric_at(&p)?;
            let gamma_amb = MetricModel::christoffels(&data);
            let ip = |u: &Vector3<f64>, v: &Vector3<f64>| (data.g * v).dot(u);
            // Ambient covariant derivative of X along the tangent vectors.
            let cov = |dir: &Vector3<f64>| -> Vector3<f64> {
                let mut out = jac * dir;
                for c in 0..3 {
                    let mut s = 0.0;
                    for i in 0..3 {
                        for j in 0..3 {
                            s += gamma_amb[c][i][j] * dir[i] * xv[j];
                        }
                    }
                    out[c] += s;
                }
                out
            };
            let dt = cov(&self.f_t[n]);
            let dp = cov(&self.f_p[n]);
            let gi = self.gamma_inv[n];
            let div = gi[0] * ip(&dt, &self.f_t[n])
                + gi[1] * (ip(&dt, &self.f_p[n]) + ip(&dp, &self.f_t[n]))
                + gi[2] * ip(&dp, &self.f_p[n]);
            integrand[n] = (div - self.h[n] * xv.dot(&self.g_nu[n]))
                * self.sqrt_det[n]
                * self.dtheta_dphi_weight(n);
        }
        Ok(kahan_sum(integrand))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sph::{coeff_index, n_coeffs};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const PI: f64 = std::f64::consts::PI;

    /// Round sphere plus a seeded band-limited radial-ish perturbation of
    /// all three coordinates, relative size `delta`.
    pub(crate) fn perturbed_sphere(
        r: f64,
        delta: f64,
        l_pert: usize,
        l_max: usize,
        n_theta: usize,
        n_phi: usize,
        seed: u64,
    ) -> SphereParam {
        let mut p = SphereParam::round_sphere(Vector3::zeros(), r, l_max, n_theta, n_phi)
            .expect("base sphere");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for c in 0..3 {
            for l in 2..=l_pert {
                for m in -(l as i64)..=(l as i64) {
                    p.coeffs[c][coeff_index(l, m)] += delta * r * (rng.gen::<f64>() - 0.5);
                }
            }
        }
        p
    }

    #[test]
    fn round_sphere_flat_geometry_is_exact() {
        for &r in &[1.0, 0.37] {
            let p = SphereParam::round_sphere(Vector3::zeros(), r, 4, 12, 12).unwrap();
            let model = MetricModel::flat(10.0).unwrap();
            let g = p.geometry(&model).unwrap();
            for n in 0..g.n_nodes() {
                assert_abs_diff_eq!(g.h[n], 2.0 / r, epsilon = 1e-10 / r);
                assert_abs_diff_eq!(g.atf_norm2[n], 0.0, epsilon = 1e-10);
                // nu is the radial direction.
                let expect = g.pos[n] / g.pos[n].norm();
                assert!((g.nu[n] - expect).norm() < 1e-10);
                assert_abs_diff_eq!(g.scal_intrinsic[n], 2.0 / (r * r), epsilon = 1e-8 / (r * r));
                assert_abs_diff_eq!(g.lap_h[n], 0.0, epsilon = 1e-9);
            }
            assert_abs_diff_eq!(g.area, 4.0 * PI * r * r, epsilon = 1e-10 * r * r);
            assert_abs_diff_eq!(g.area_euclid, g.area, epsilon = 1e-12 * r * r);
            assert!(g.min_h > 0.0);
        }
    }

    #[test]
    fn off_center_sphere_geometry() {
        let c = Vector3::new(0.3, -0.2, 0.5);
        let p = SphereParam::round_sphere(c, 0.5, 6, 14, 14).unwrap();
        let model = MetricModel::flat(10.0).unwrap();
        let g = p.geometry(&model).unwrap();
        for n in 0..g.n_nodes() {
            assert_abs_diff_eq!(g.h[n], 4.0, epsilon = 1e-9);
            let expect = (g.pos[n] - c) / (g.pos[n] - c).norm();
            assert!((g.nu[n] - expect).norm() < 1e-9);
        }
        assert_abs_diff_eq!(g.area, PI, epsilon = 1e-10);
    }

    #[test]
    fn laplacian_eigenvalues_on_round_spheres() {
        // Delta Y_lm = -l(l+1)/r^2 Y_lm on a flat round sphere of radius r.
        let r = 2.0;
        let l_max = 8;
        let p = SphereParam::round_sphere(Vector3::zeros(), r, l_max, 20, 20).unwrap();
        let model = MetricModel::flat(50.0).unwrap();
        let g = p.geometry(&model).unwrap();
        for (l, m) in [(1usize, 0i64), (2, 1), (3, -2), (4, 4), (4, 0)] {
            let mut c = vec![0.0; n_coeffs(l_max)];
            c[coeff_index(l, m)] = 1.0;
            let u = g.grid.synth(&c, l_max, 0, 0);
            let lap = g.laplace_beltrami(&u).unwrap();
            let ev = -(l as f64) * (l as f64 + 1.0) / (r * r);
            let umax = u.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            for n in 0..g.n_nodes() {
                assert!(
                    (lap[n] - ev * u[n]).abs() <= 1e-8 * umax / (r * r),
                    "eigenvalue defect {:e} at l={l} m={m}",
                    (lap[n] - ev * u[n]).abs()
                );
            }
        }
        // Restriction of the ambient z-coordinate is a degree-1 harmonic:
        // Delta (F.z) = -(2/r^2) F.z.
        let z: Vec<f64> = g.pos.iter().map(|p| p[2]).collect();
        let lap = g.laplace_beltrami(&z).unwrap();
        for n in 0..g.n_nodes() {
            assert!(
                (lap[n] + 2.0 / (r * r) * z[n]).abs() <= 1e-8 * r / (r * r),
                "coordinate eigenvalue defect {:e}",
                (lap[n] + 2.0 / (r * r) * z[n]).abs()
            );
        }
    }

    #[test]
    fn geodesic_spheres_in_space_forms() {
        // Centered coordinate spheres are geodesic spheres; H = 2 sqrt(k)
        // cot(sqrt(k) r) and area = 4 pi sn_k(r)^2.
        for &k in &[0.5f64, -0.5] {
            let model = MetricModel::space_form(k, 2.0).unwrap();
            let r = 0.4;
            let p = SphereParam::round_sphere(Vector3::zeros(), r, 6, 16, 16).unwrap();
            let g = p.geometry(&model).unwrap();
            let sn = crate::ambient::sn_k(k, r);
            let cs = crate::ambient::cs_k(k, r);
            let h_expect = 2.0 * cs / sn;
            for n in 0..g.n_nodes() {
                assert_abs_diff_eq!(g.h[n], h_expect, epsilon = 1e-8);
                // Geodesic spheres in space forms are umbilic.
                assert_abs_diff_eq!(g.atf_norm2[n], 0.0, epsilon = 1e-10);
                // Intrinsic curvature of the induced round metric: 1/sn^2.
                assert_abs_diff_eq!(
                    g.scal_intrinsic[n],
                    2.0 / (sn * sn),
                    epsilon = 1e-7
                );
            }
            assert_abs_diff_eq!(g.area, 4.0 * PI * sn * sn, epsilon = 1e-8);
        }
    }

    #[test]
    fn gauss_equation_pointwise_on_perturbed_surface() {
        // 2K = Scal - 2 Ric(nu,nu) + H^2/2 - |Atf|^2, nodewise; exercises the
        // second fundamental form, the ambient curvature and the Brioschi
        // curvature against each other.
        let model = MetricModel::space_form(0.5, 2.0).unwrap();
        let p = perturbed_sphere(0.4, 0.03, 4, 8, 20, 20, 11);
        let g = p.geometry(&model).unwrap();
        for n in 0..g.n_nodes() {
            let rhs = g.scal_amb[n] - 2.0 * g.ric_nn[n] + 0.5 * g.h[n] * g.h[n]
                - g.atf_norm2[n];
            let scale = 1.0 + g.scal_intrinsic[n].abs();
            assert!(
                (g.scal_intrinsic[n] - rhs).abs() <= 1e-6 * scale,
                "Gauss defect {:.3e} at node {n}",
                (g.scal_intrinsic[n] - rhs).abs()
            );
        }
    }

    #[test]
    fn gauss_bonnet_on_perturbed_surfaces() {
        // int K dmu = 4 pi for genus zero, any metric.
        let model = MetricModel::quadratic_curvature(
            Matrix3::new(1.0, 0.2, 0.0, 0.2, 2.0, -0.1, 0.0, -0.1, 0.5),
            Vector3::new(0.4, -0.2, 0.8),
            2.0,
        )
        .unwrap();
        for seed in 0..3 {
            let p = perturbed_sphere(0.35, 0.04, 4, 8, 32, 32, seed);
            let g = p.geometry(&model).unwrap();
            let k: Vec<f64> = g.scal_intrinsic.iter().map(|s| 0.5 * s).collect();
            let total = g.integrate(&k);
            assert_abs_diff_eq!(total, 4.0 * PI, epsilon = 1e-7);
        }
    }

    #[test]
    fn normal_is_g_orthonormal_and_tracefree_part_is_tracefree() {
        let model = MetricModel::quadratic_curvature(
            Matrix3::new(2.0, 0.1, 0.0, 0.1, 1.5, 0.2, 0.0, 0.2, 1.0),
            Vector3::new(0.5, 0.0, -0.3),
            2.0,
        )
        .unwrap();
        let p = perturbed_sphere(0.3, 0.05, 3, 6, 16, 16, 5);
        let g = p.geometry(&model).unwrap();
        for n in 0..g.n_nodes() {
            // g(nu, nu) = 1 and g(nu, F_a) = 0 via the stored covector.
            assert_abs_diff_eq!(g.nu[n].dot(&g.g_nu[n]), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(g.f_t[n].dot(&g.g_nu[n]), 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(g.f_p[n].dot(&g.g_nu[n]), 0.0, epsilon = 1e-10);
            // trace of Atf = gamma^{ab} (A_ab - H/2 gamma_ab) = 0.
            let gi = g.gamma_inv[n];
            let a = g.a2[n];
            let tr = gi[0] * a[0] + 2.0 * gi[1] * a[1] + gi[2] * a[2] - g.h[n];
            assert_abs_diff_eq!(tr, 0.0, epsilon = 1e-10 * (1.0 + g.h[n].abs()));
            // |Atf|^2 >= 0 with exact arithmetic; allow tiny negative noise.
            assert!(g.atf_norm2[n] >= -1e-12);
        }
    }

    #[test]
    fn divergence_identity_is_quadrature_exact() {
        let flat = MetricModel::flat(10.0).unwrap();
        let sf = MetricModel::space_form(0.8, 2.0).unwrap();
        let position = |p: &Vector3<f64>| (*p, Matrix3::identity());
        let constant = |_: &Vector3<f64>| (Vector3::new(0.3, -1.0, 0.7), Matrix3::zeros());
        for (model, rr) in [(&flat, 0.9), (&sf, 0.35)] {
            let p = perturbed_sphere(rr, 0.04, 4, 8, 32, 32, 3);
            let g = p.geometry(model).unwrap();
            let sup_x = g.pos.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
            for (x, sup) in [
                (&position as &dyn Fn(&Vector3<f64>) -> (Vector3<f64>, Matrix3<f64>), sup_x),
                (&constant, 1.3),
            ] {
                let defect = g.divergence_defect(x, model).unwrap();
                let scale = g.area * sup / rr;
                assert!(
                    defect.abs() <= 1e-8 * scale,
                    "divergence defect {defect:.3e} vs scale {scale:.3e}"
                );
            }
        }
    }

    #[test]
    fn geometry_agrees_under_resolution_doubling() {
        let model = MetricModel::space_form(0.5, 2.0).unwrap();
        let p = perturbed_sphere(0.4, 0.04, 4, 8, 32, 32, 7);
        let g1 = p.geometry(&model).unwrap();
        let g2 = p.refined(2).geometry(&model).unwrap();
        assert!((g1.area - g2.area).abs() <= 1e-8 * g1.area);
        assert!((g1.area_euclid - g2.area_euclid).abs() <= 1e-8 * g1.area_euclid);
        let w1 = g1.integrate(&g1.h.iter().map(|h| 0.5 * h * h).collect::<Vec<_>>());
        let w2 = g2.integrate(&g2.h.iter().map(|h| 0.5 * h * h).collect::<Vec<_>>());
        assert!((w1 - w2).abs() <= 1e-8 * w1.abs());
    }

    #[test]
    fn evaluate_at_handles_poles() {
        let p = SphereParam::round_sphere(Vector3::new(0.1, 0.0, 0.0), 0.5, 4, 12, 12).unwrap();
        let north = p.evaluate_at(0.0, 0.0);
        let south = p.evaluate_at(PI, 1.3);
        assert!((north - Vector3::new(0.1, 0.0, 0.5)).norm() < 1e-13);
        assert!((south - Vector3::new(0.1, 0.0, -0.5)).norm() < 1e-13);
    }

    #[test]
    fn validation_and_immersion_errors() {
        // Too-coarse grid.
        let p = SphereParam {
            l_max: 4,
            n_theta: 6,
            n_phi: 12,
            coeffs: [vec![0.0; 25], vec![0.0; 25], vec![0.0; 25]],
        };
        assert!(matches!(p.validate().unwrap_err(), Error::Validation(_)));
        // Wrong coefficient count.
        let p = SphereParam {
            l_max: 4,
            n_theta: 12,
            n_phi: 12,
            coeffs: [vec![0.0; 24], vec![0.0; 25], vec![0.0; 25]],
        };
        assert!(matches!(p.validate().unwrap_err(), Error::Validation(_)));
        // Degenerate immersion (all coefficients zero).
        let p = SphereParam {
            l_max: 4,
            n_theta: 12,
            n_phi: 12,
            coeffs: [vec![0.0; 25], vec![0.0; 25], vec![0.0; 25]],
        };
        let model = MetricModel::flat(1.0).unwrap();
        assert!(matches!(p.geometry(&model).err().unwrap(), Error::Immersion(_)));
        // Surface exits the model ball.
        let p = SphereParam::round_sphere(Vector3::zeros(), 0.8, 4, 12, 12).unwrap();
        let model = MetricModel::space_form(1.0, 0.5).unwrap();
        assert!(matches!(p.geometry(&model).err().unwrap(), Error::Domain(_)));
    }

    #[test]
    fn space_form_sphere_properties_across_parameters() {
        // Property-style sweep: closed-form H and area for geodesic spheres
        // over a range of curvatures and radii.
        for &k in &[1.0, 0.3, 0.0, -0.4, -1.0] {
            for &r in &[0.1, 0.25, 0.4] {
                let model = MetricModel::space_form(k, 2.0).unwrap();
                let p = SphereParam::round_sphere(Vector3::zeros(), r, 4, 12, 12).unwrap();
                let g = p.geometry(&model).unwrap();
                let sn = crate::ambient::sn_k(k, r);
                let cs = crate::ambient::cs_k(k, r);
                assert_abs_diff_eq!(g.area, 4.0 * PI * sn * sn, epsilon = 1e-8);
                assert_abs_diff_eq!(g.min_h, 2.0 * cs / sn, epsilon = 1e-8);
                assert_abs_diff_eq!(g.max_h, 2.0 * cs / sn, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn field_jet_matches_synthesized_derivatives() {
        let p = SphereParam::round_sphere(Vector3::zeros(), 1.0, 6, 16, 16).unwrap();
        let model = MetricModel::flat(10.0).unwrap();
        let g = p.geometry(&model).unwrap();
        let l = 3usize;
        let mut c = vec![0.0; n_coeffs(6)];
        c[coeff_index(l, 2)] = 0.7;
        c[coeff_index(2, -1)] = -0.4;
        let u = g.grid.synth(&c, 6, 0, 0);
        let jet = g.field_jet(&u).unwrap();
        let expect_t = g.grid.synth(&c, 6, 1, 0);
        let expect_p = g.grid.synth(&c, 6, 0, 1);
        let expect_pp = g.grid.synth(&c, 6, 0, 2);
        for n in 0..g.n_nodes() {
            assert_abs_diff_eq!(jet.t[n], expect_t[n], epsilon = 1e-10);
            assert_abs_diff_eq!(jet.p[n], expect_p[n], epsilon = 1e-10);
            assert_abs_diff_eq!(jet.pp[n], expect_pp[n], epsilon = 1e-9);
        }
    }
}
