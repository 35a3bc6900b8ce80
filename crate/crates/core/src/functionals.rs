//! Curvature energies, multiplier estimators, and first variations.
//!
//! The central quantities: the Willmore energy W = (1/2) int H^2 dmu, the
//! tracefree energy U = int |Atf|^2 dmu, the ambient coupling
//! V = 2 int G(nu,nu) dmu with G the Einstein tensor, and the splitting
//! residual W - 8 pi - U - V, which vanishes identically on genus-zero
//! surfaces by the Gauss equation plus Gauss-Bonnet and is therefore a pure
//! discretization diagnostic.
//!
//! Two estimators of the area-constraint Lagrange multiplier are provided:
//! a least-squares projection of the Euler-Lagrange operator onto H, and the
//! integrated identity
//! lambda = -(1/|S|) int (|grad log H|^2 + |Atf|^2 + Ric(nu,nu)) dmu,
//! which divides by H and is only reported when H > 0 everywhere.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::ambient::MetricModel;
use crate::error::{Error, Result};
use crate::kahan_sum;
use crate::sph;
use crate::surface::SurfaceGeometry;

/// Scalar functionals and diagnostics of one surface in one ambient metric.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionalReport {
    /// Willmore energy (1/2) int H^2 dmu.
    pub w: f64,
    /// Tracefree second-fundamental-form energy int |Atf|^2 dmu.
    pub u: f64,
    /// Ambient coupling 2 int G(nu,nu) dmu.
    pub v: f64,
    pub area: f64,
    /// Genus; zero by representation.
    pub genus: u32,
    /// W - 8 pi (1 - genus) - U - V; pure discretization residual.
    pub splitting_residual: f64,
    /// Multiplier from the integrated identity; absent when min H <= 0.
    pub lambda_id: Option<f64>,
    /// Multiplier from least-squares projection onto H.
    pub lambda_lsq: f64,
    /// L2(dmu) norm of Delta H + H|Atf|^2 + H Ric(nu,nu) + lambda_lsq H.
    pub el_residual: f64,
    /// Hawking mass sqrt(area) (16 pi - 2W) / (16 pi)^{3/2}.
    pub hawking: f64,
    /// Enclosed volume in the ambient metric.
    pub vol: f64,
    /// Enclosed volume in the Euclidean reference metric.
    pub vol_euclid: f64,
    /// Euclidean area radius sqrt(area_E / 4 pi).
    pub re: f64,
    /// Euclidean center of gravity.
    pub ae: [f64; 3],
    /// ||H_E - 2/RE||_{L2(dmu_E)}.
    pub roundness_h: f64,
    /// ||Atf_E||_{L2(dmu_E)}.
    pub roundness_atf: f64,
    /// (1/area) int Ric(nu,nu) dmu.
    pub ricci_avg: f64,
    /// int |grad log H|^2 dmu; absent when min H <= 0.
    pub grad_log_h_sq: Option<f64>,
    pub min_h: f64,
}

/// A normal variation speed sampled on the geometry's grid.
#[derive(Debug, Clone)]
pub struct VariationField {
    pub values: Vec<f64>,
    /// Set when the field was generated as H^{-1} g(b, nu).
    pub b: Option<Vector3<f64>>,
}

/// First variations of the four basic functionals under a normal speed f.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variations {
    pub dw: f64,
    pub du: f64,
    pub dv: f64,
    pub darea: f64,
}

/// Inner product of symmetric 2-tensors, gamma^{ac} gamma^{bd} S_cd T_ab,
/// with packed components [tt, tp, pp] and inverse metric gi.
fn inner2(gi: &[f64; 3], s: &[f64; 3], t: &[f64; 3]) -> f64 {
    let s_tt = gi[0] * gi[0] * s[0] + 2.0 * gi[0] * gi[1] * s[1] + gi[1] * gi[1] * s[2];
    let s_tp = gi[0] * gi[1] * s[0] + (gi[0] * gi[2] + gi[1] * gi[1]) * s[1] + gi[1] * gi[2] * s[2];
    let s_pp = gi[1] * gi[1] * s[0] + 2.0 * gi[1] * gi[2] * s[1] + gi[2] * gi[2] * s[2];
    s_tt * t[0] + 2.0 * s_tp * t[1] + s_pp * t[2]
}

/// Euler-Lagrange density without the multiplier term,
/// Delta H + H |Atf|^2 + H Ric(nu, nu), per node.
pub fn el_density(geom: &SurfaceGeometry) -> Vec<f64> {
    (0..geom.n_nodes())
        .map(|n| geom.lap_h[n] + geom.h[n] * (geom.atf_norm2[n] + geom.ric_nn[n]))
        .collect()
}

/// Least-squares multiplier: the value making the Euler-Lagrange operator
/// L2(dmu)-orthogonal to H.
pub fn lambda_lsq(geom: &SurfaceGeometry) -> f64 {
    let el = el_density(geom);
    let num = geom.integrate(&el.iter().zip(&geom.h).map(|(e, h)| e * h).collect::<Vec<_>>());
    let den = geom.integrate(&geom.h.iter().map(|h| h * h).collect::<Vec<_>>());
    -num / den
}

/// Full functional evaluation.
pub fn evaluate(geom: &SurfaceGeometry, model: &MetricModel) -> Result<FunctionalReport> {
    let w = 0.5 * geom.integrate(&geom.h.iter().map(|h| h * h).collect::<Vec<_>>());
    let u = geom.integrate(&geom.atf_norm2);
    let v = 2.0 * geom.integrate(&geom.einstein_nn);
    let area = geom.area;
    let genus = 0u32;
    let splitting_residual = w - 8.0 * std::f64::consts::PI * (1.0 - genus as f64) - u - v;

    let el = el_density(geom);
    let lam = {
        let num =
            geom.integrate(&el.iter().zip(&geom.h).map(|(e, h)| e * h).collect::<Vec<_>>());
        let den = geom.integrate(&geom.h.iter().map(|h| h * h).collect::<Vec<_>>());
        -num / den
    };
    let el_res = geom
        .integrate(
            &el.iter()
                .zip(&geom.h)
                .map(|(e, h)| (e + lam * h) * (e + lam * h))
                .collect::<Vec<_>>(),
        )
        .max(0.0)
        .sqrt();

    let ric_int = geom.integrate(&geom.ric_nn);
    let (lambda_id, grad_log_h_sq) = if geom.min_h > 0.0 {
        let log_h: Vec<f64> = geom.h.iter().map(|h| h.ln()).collect();
        let gn2 = geom.grad_norm2(&log_h)?;
        let glh = geom.integrate(&gn2);
        (Some(-(glh + u + ric_int) / area), Some(glh))
    } else {
        (None, None)
    };

    let sixteen_pi = 16.0 * std::f64::consts::PI;
    let hawking = area.sqrt() / sixteen_pi.powf(1.5) * (sixteen_pi - 2.0 * w);

    let (vol_euclid, vol) = enclosed_volume(geom, model)?;
    let fit = sphere_fit(geom);

    Ok(FunctionalReport {
        w,
        u,
        v,
        area,
        genus,
        splitting_residual,
        lambda_id,
        lambda_lsq: lam,
        el_residual: el_res,
        hawking,
        vol,
        vol_euclid,
        re: fit.re,
        ae: [fit.ae[0], fit.ae[1], fit.ae[2]],
        roundness_h: fit.roundness_h,
        roundness_atf: fit.roundness_atf,
        ricci_avg: ric_int / area,
        grad_log_h_sq,
        min_h: geom.min_h,
    })
}

/// Euclidean-sphere proxy: area radius, center of gravity, and the two
/// roundness norms of the comparison inequality.
pub struct SphereFit {
    pub re: f64,
    pub ae: Vector3<f64>,
    pub roundness_h: f64,
    pub roundness_atf: f64,
}

pub fn sphere_fit(geom: &SurfaceGeometry) -> SphereFit {
    let area_e = geom.area_euclid;
    let re = (area_e / (4.0 * std::f64::consts::PI)).sqrt();
    let mut ae = Vector3::zeros();
    for c in 0..3 {
        let coord: Vec<f64> = geom.pos.iter().map(|p| p[c]).collect();
        ae[c] = geom.integrate_euclid(&coord) / area_e;
    }
    let dev: Vec<f64> = geom.h_e.iter().map(|h| (h - 2.0 / re) * (h - 2.0 / re)).collect();
    let roundness_h = geom.integrate_euclid(&dev).max(0.0).sqrt();
    let roundness_atf = geom.integrate_euclid(&geom.atf_e_norm2).max(0.0).sqrt();
    SphereFit { re, ae, roundness_h, roundness_atf }
}

/// Enclosed volume (Euclidean and ambient). The Euclidean part is the exact
/// divergence-theorem cone formula about the Euclidean center of gravity;
/// the ambient part corrects by int_Omega (sqrt det g - 1) dV_E along radial
/// rays with a fixed 16-point Gauss-Legendre rule per node. Assumes the
/// surface is embedded and star-shaped about its center of gravity.
pub fn enclosed_volume(geom: &SurfaceGeometry, model: &MetricModel) -> Result<(f64, f64)> {
    let fit = sphere_fit(geom);
    let ae = fit.ae;
    let nn = geom.n_nodes();
    let mut cone = vec![0.0; nn];
    let mut corr = vec![0.0; nn];
    let (tq, tw) = sph::gauss_legendre(16);
    for n in 0..nn {
        let d = geom.pos[n] - ae;
        let cross = geom.f_t[n].cross(&geom.f_p[n]);
        let flux = d.dot(&cross) * geom.dtheta_dphi_weight(n);
        cone[n] = flux / 3.0;
        let mut ray = 0.0;
        for (x, w) in tq.iter().zip(&tw) {
            let t = 0.5 * (x + 1.0);
            let p = ae + t * d;
            let g = model.metric_at(&p)?.g;
            let dets = g.determinant().max(0.0).sqrt();
            ray += 0.5 * w * (dets - 1.0) * t * t;
        }
        corr[n] = flux * ray;
    }
    let vol_e = kahan_sum(cone.iter().copied());
    let vol = vol_e + kahan_sum(corr.iter().copied());
    Ok((vol_e, vol))
}

/// The normal speed f = H^{-1} g(b, nu) generated by a constant vector b.
pub fn variation_field_from_b(geom: &SurfaceGeometry, b: Vector3<f64>) -> Result<VariationField> {
    if geom.min_h <= 0.0 {
        return Err(Error::Hypothesis(format!(
            "variation field H^-1 g(b,nu) requires H > 0, but min H = {:.6}",
            geom.min_h
        )));
    }
    let values = (0..geom.n_nodes())
        .map(|n| b.dot(&geom.g_nu[n]) / geom.h[n])
        .collect();
    Ok(VariationField { values, b: Some(b) })
}

/// First variations of W, U, V and area under the normal speed f.
///
/// dArea = int H f dmu,
/// dW = -int (Delta H + H|Atf|^2 + H Ric(nu,nu)) f dmu,
/// dU = -int (2 <Atf, Hess f> + 2 f <Atf, Ric_tang> + f H |Atf|^2) dmu,
/// dV = int (-f H G(nu,nu) - (1/2) f H Scal + 2 f <Atf, G_tang> - 2 omega(grad f)) dmu,
/// with omega_a = Ric(nu, F_a). Signs are fixed by the convention that
/// outward motion of a Euclidean sphere increases area (H > 0), under which
/// dW = lambda dArea at an area-constrained critical point.
pub fn first_variations(
    geom: &SurfaceGeometry,
    f: &VariationField,
) -> Result<Variations> {
    let nn = geom.n_nodes();
    if f.values.len() != nn {
        return Err(Error::GridMismatch {
            expected: (geom.grid.n_theta, geom.grid.n_phi),
            got: (f.values.len() / geom.grid.n_phi.max(1), geom.grid.n_phi),
        });
    }
    let jet = geom.field_jet(&f.values)?;
    let el = el_density(geom);

    let mut dw_d = vec![0.0; nn];
    let mut du_d = vec![0.0; nn];
    let mut dv_d = vec![0.0; nn];
    let mut da_d = vec![0.0; nn];
    for n in 0..nn {
        let fv = f.values[n];
        let gi = geom.gamma_inv[n];
        let gam = geom.gamma[n];
        let h = geom.h[n];
        da_d[n] = h * fv;
        dw_d[n] = -el[n] * fv;

        // Tracefree second fundamental form.
        let atf = [
            geom.a2[n][0] - 0.5 * h * gam[0],
            geom.a2[n][1] - 0.5 * h * gam[1],
            geom.a2[n][2] - 0.5 * h * gam[2],
        ];
        // Intrinsic Hessian of f.
        let sg = geom.sgam[n];
        let hess = [
            jet.tt[n] - sg[0] * jet.t[n] - sg[3] * jet.p[n],
            jet.tp[n] - sg[1] * jet.t[n] - sg[4] * jet.p[n],
            jet.pp[n] - sg[2] * jet.t[n] - sg[5] * jet.p[n],
        ];
        // Tangential projections of ambient curvature.
        let (ft, fp) = (geom.f_t[n], geom.f_p[n]);
        let ric_t = [
            (geom.ric[n] * ft).dot(&ft),
            (geom.ric[n] * fp).dot(&ft),
            (geom.ric[n] * fp).dot(&fp),
        ];
        let ein_t = [
            (geom.einstein[n] * ft).dot(&ft),
            (geom.einstein[n] * fp).dot(&ft),
            (geom.einstein[n] * fp).dot(&fp),
        ];
        du_d[n] = -(2.0 * inner2(&gi, &atf, &hess)
            + 2.0 * fv * inner2(&gi, &atf, &ric_t)
            + fv * h * geom.atf_norm2[n]);

        let om = geom.omega[n];
        let omega_grad_f = gi[0] * om[0] * jet.t[n]
            + gi[1] * (om[0] * jet.p[n] + om[1] * jet.t[n])
            + gi[2] * om[1] * jet.p[n];
        dv_d[n] = -fv * h * geom.einstein_nn[n] - 0.5 * fv * h * geom.scal_amb[n]
            + 2.0 * fv * inner2(&gi, &atf, &ein_t)
            - 2.0 * omega_grad_f;
    }
    Ok(Variations {
        dw: geom.integrate(&dw_d),
        du: geom.integrate(&du_d),
        dv: geom.integrate(&dv_d),
        darea: geom.integrate(&da_d),
    })
}

/// Mean normal Ricci curvature (1/area) int Ric(nu, nu) dmu.
pub fn ricci_average(geom: &SurfaceGeometry) -> f64 {
    geom.integrate(&geom.ric_nn) / geom.area
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::{cs_k, sn_k};
    use crate::sph::coeff_index;
    use crate::surface::SphereParam;
    use approx::assert_abs_diff_eq;
    use nalgebra::Matrix3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const PI: f64 = std::f64::consts::PI;

    fn perturbed(r: f64, delta: f64, l_max: usize, n: usize, seed: u64) -> SphereParam {
        let mut p = SphereParam::round_sphere(Vector3::zeros(), r, l_max, n, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for c in 0..3 {
            for l in 2..=4usize {
                for m in -(l as i64)..=(l as i64) {
                    p.coeffs[c][coeff_index(l, m)] += delta * r * (rng.gen::<f64>() - 0.5);
                }
            }
        }
        p
    }

    #[test]
    fn flat_round_sphere_baseline() {
        let model = MetricModel::flat(10.0).unwrap();
        let p = SphereParam::round_sphere(Vector3::zeros(), 0.1, 8, 24, 48).unwrap();
        let g = p.geometry(&model).unwrap();
        let rep = evaluate(&g, &model).unwrap();
        assert_abs_diff_eq!(rep.w, 8.0 * PI, epsilon = 1e-9);
        assert!(rep.u.abs() <= 1e-10);
        assert_eq!(rep.v, 0.0);
        assert!(rep.hawking.abs() <= 1e-10);
        assert!(rep.lambda_lsq.abs() <= 1e-8);
        assert!(rep.splitting_residual.abs() <= 1e-10);
        assert_abs_diff_eq!(rep.re, 0.1, epsilon = 1e-10);
        assert!(Vector3::from(rep.ae).norm() <= 1e-10);
        // roundness_atf is a square root of a cancellation-limited integral
        // (|A_E|^2 minus H_E^2/2, both about 2/r^2), so its floor is
        // sqrt(area * H^2 * eps_mach) ~ 1e-7, not machine epsilon.
        assert!(rep.roundness_h <= 1e-9, "roundness_h = {:e}", rep.roundness_h);
        assert!(rep.roundness_atf <= 1e-7, "roundness_atf = {:e}", rep.roundness_atf);
        assert_eq!(rep.ricci_avg, 0.0);
        let lid = rep.lambda_id.expect("H > 0 on a round sphere");
        assert!(lid.abs() <= 1e-9);
        assert!(rep.el_residual <= 1e-8);
    }

    #[test]
    fn space_form_coupling_is_exact_on_geodesic_spheres() {
        // G(nu,nu) = Ric(nu,nu) - Scal/2 = 2k - 3k = -k pointwise, so
        // V / area = -2k with no discretization error at all.
        let k = 0.5;
        let model = MetricModel::space_form(k, 1.0).unwrap();
        let p = SphereParam::round_sphere(Vector3::zeros(), 0.1, 6, 16, 16).unwrap();
        let g = p.geometry(&model).unwrap();
        let rep = evaluate(&g, &model).unwrap();
        assert_abs_diff_eq!(rep.v / rep.area, -2.0 * k, epsilon = 1e-10);
        assert_abs_diff_eq!(rep.ricci_avg, 2.0 * k, epsilon = 1e-10);
        // Closed-form Willmore energy of a geodesic sphere: 8 pi cs^2.
        let cs = cs_k(k, 0.1);
        assert_abs_diff_eq!(rep.w, 8.0 * PI * cs * cs, epsilon = 1e-8);
    }

    #[test]
    fn splitting_identity_on_perturbed_spheres() {
        let model = MetricModel::space_form(1.0, 2.0).unwrap();
        for seed in 0..10 {
            let p = perturbed(0.3, 0.03, 8, 32, seed);
            let g = p.geometry(&model).unwrap();
            let rep = evaluate(&g, &model).unwrap();
            assert!(
                rep.splitting_residual.abs() <= 1e-6 * (1.0 + rep.w),
                "seed {seed}: splitting residual {:.3e}",
                rep.splitting_residual
            );
        }
    }

    #[test]
    fn enclosed_volume_flat_shapes() {
        let model = MetricModel::flat(10.0).unwrap();
        let p = SphereParam::round_sphere(Vector3::zeros(), 0.1, 6, 16, 16).unwrap();
        let g = p.geometry(&model).unwrap();
        let (ve, v) = enclosed_volume(&g, &model).unwrap();
        let expect = 4.0 / 3.0 * PI * 0.001;
        assert_abs_diff_eq!(ve, expect, epsilon = 1e-9);
        assert_abs_diff_eq!(v, expect, epsilon = 1e-9);

        // Ellipsoid with semiaxes (0.1, 0.1, 0.05): exact degree-1 surface.
        let mut p = SphereParam::round_sphere(Vector3::zeros(), 0.1, 6, 16, 16).unwrap();
        let deg1 = (4.0 * PI / 3.0).sqrt();
        p.coeffs[2][coeff_index(1, 0)] = 0.05 * deg1;
        let g = p.geometry(&model).unwrap();
        let (ve, _) = enclosed_volume(&g, &model).unwrap();
        assert_abs_diff_eq!(ve, 4.0 / 3.0 * PI * 0.1 * 0.1 * 0.05, epsilon = 1e-8);
    }

    #[test]
    fn enclosed_volume_matches_space_form_ball() {
        // Closed form: vol = 4 pi (r - sn cs) / (2k).
        let k = 1.0;
        let model = MetricModel::space_form(k, 1.0).unwrap();
        let r = 0.1;
        let p = SphereParam::round_sphere(Vector3::zeros(), r, 6, 16, 16).unwrap();
        let g = p.geometry(&model).unwrap();
        let (_, vol) = enclosed_volume(&g, &model).unwrap();
        let expect = 4.0 * PI * (r - sn_k(k, r) * cs_k(k, r)) / (2.0 * k);
        assert!((vol - expect).abs() <= 1e-10, "vol = {vol}, expect {expect}");
        // Deficit against the round-sphere proxy is O(r^2 area^{3/2}).
        let rep = evaluate(&g, &model).unwrap();
        let proxy = rep.area.powf(1.5) / (6.0 * PI.sqrt());
        let c = (vol - proxy).abs() / (r * r * rep.area.powf(1.5));
        assert!(c < 10.0, "measured C = {c}");
    }

    #[test]
    fn sphere_fit_translation_and_self_oracle() {
        let model = MetricModel::flat(10.0).unwrap();
        // Ellipsoid (0.1, 0.1, 0.09).
        let mut p = SphereParam::round_sphere(Vector3::zeros(), 0.1, 8, 20, 20).unwrap();
        let deg1 = (4.0 * PI / 3.0).sqrt();
        p.coeffs[2][coeff_index(1, 0)] = 0.09 * deg1;
        let g = p.geometry(&model).unwrap();
        let fit = sphere_fit(&g);
        let ratio = fit.roundness_h / fit.roundness_atf;
        assert!(ratio.is_finite() && ratio > 0.0);
        // Self-oracle: the same quantities at 4x resolution.
        let g4 = p.refined(4).geometry(&model).unwrap();
        let fit4 = sphere_fit(&g4);
        assert!((fit.re - fit4.re).abs() <= 1e-4 * fit4.re);
        assert!((fit.roundness_h - fit4.roundness_h).abs() <= 1e-4 * fit4.roundness_h);
        assert!((fit.roundness_atf - fit4.roundness_atf).abs() <= 1e-4 * fit4.roundness_atf);

        // Translation moves the center of gravity by exactly the shift.
        let t = Vector3::new(0.02, -0.01, 0.03);
        let mut q = p.clone();
        let y00 = 1.0 / (4.0 * PI).sqrt();
        for c in 0..3 {
            q.coeffs[c][coeff_index(0, 0)] += t[c] / y00;
        }
        let gq = q.geometry(&model).unwrap();
        let fitq = sphere_fit(&gq);
        assert!((fitq.ae - fit.ae - t).norm() <= 1e-12);
    }

    #[test]
    fn variation_field_extrema() {
        // Flat: f = (r/2) (nu . b); extrema +- r/2.
        let model = MetricModel::flat(10.0).unwrap();
        let r = 0.3;
        let p = SphereParam::round_sphere(Vector3::zeros(), r, 6, 25, 26).unwrap();
        let g = p.geometry(&model).unwrap();
        let f = variation_field_from_b(&g, Vector3::new(0.0, 0.0, 1.0)).unwrap();
        for n in 0..g.n_nodes() {
            let expect = 0.5 * r * g.nu[n][2];
            assert_abs_diff_eq!(f.values[n], expect, epsilon = 1e-11);
        }
        // Space form k=1, r=0.2, b = e1: max f = tan(0.2)/2 at the node
        // where nu is the x-direction (odd n_theta puts a node on the
        // equator, phi = 0 is always a node).
        let model = MetricModel::space_form(1.0, 1.0).unwrap();
        let p = SphereParam::round_sphere(Vector3::zeros(), 0.2, 6, 25, 26).unwrap();
        let g = p.geometry(&model).unwrap();
        let f = variation_field_from_b(&g, Vector3::new(1.0, 0.0, 0.0)).unwrap();
        let fmax = f.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_abs_diff_eq!(fmax, (0.2f64).tan() / 2.0, epsilon = 1e-9);
        // Nodewise consistency f H = g(b, nu).
        for n in 0..g.n_nodes() {
            let lhs = f.values[n] * g.h[n];
            let rhs = Vector3::new(1.0, 0.0, 0.0).dot(&g.g_nu[n]);
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
        }
    }

    #[test]
    fn hypothesis_error_when_h_changes_sign() {
        // A strongly pinched surface has H <= 0 somewhere.
        let model = MetricModel::flat(10.0).unwrap();
        let mut p = SphereParam::round_sphere(Vector3::zeros(), 0.3, 8, 20, 20).unwrap();
        p.coeffs[2][coeff_index(2, 0)] = 0.45;
        let g = p.geometry(&model).unwrap();
        assert!(g.min_h <= 0.0, "intended pinched surface, min H = {}", g.min_h);
        let err = variation_field_from_b(&g, Vector3::new(0.0, 0.0, 1.0)).err().unwrap();
        assert!(matches!(err, Error::Hypothesis(_)));
        let rep = evaluate(&g, &model).unwrap();
        assert!(rep.lambda_id.is_none());
        assert!(rep.grad_log_h_sq.is_none());
    }

    #[test]
    fn first_variations_on_round_sphere() {
        let model = MetricModel::flat(10.0).unwrap();
        let r = 0.25;
        let p = SphereParam::round_sphere(Vector3::zeros(), r, 6, 16, 16).unwrap();
        let g = p.geometry(&model).unwrap();
        let ones = VariationField { values: vec![1.0; g.n_nodes()], b: None };
        let var = first_variations(&g, &ones).unwrap();
        assert_abs_diff_eq!(var.darea, 8.0 * PI * r, epsilon = 1e-8);
        assert!(var.dw.abs() <= 1e-9, "flat spheres are critical: dW = {:e}", var.dw);
        assert!(var.du.abs() <= 1e-9);
        assert_eq!(var.dv, 0.0);
    }

    #[test]
    fn hawking_mass_sign_follows_energy_excess() {
        let model = MetricModel::flat(10.0).unwrap();
        let p = perturbed(0.3, 0.05, 8, 24, 2);
        let g = p.geometry(&model).unwrap();
        let rep = evaluate(&g, &model).unwrap();
        assert!(rep.w > 8.0 * PI, "perturbed spheres have excess energy");
        assert!(rep.hawking < 0.0);
    }

    #[test]
    fn flat_energies_are_translation_invariant() {
        let model = MetricModel::flat(10.0).unwrap();
        let p = perturbed(0.25, 0.05, 8, 24, 4);
        let g = p.geometry(&model).unwrap();
        let rep = evaluate(&g, &model).unwrap();
        let mut q = p.clone();
        let y00 = 1.0 / (4.0 * PI).sqrt();
        let t = Vector3::new(0.4, -0.3, 0.2);
        for c in 0..3 {
            q.coeffs[c][coeff_index(0, 0)] += t[c] / y00;
        }
        let gq = q.geometry(&model).unwrap();
        let repq = evaluate(&gq, &model).unwrap();
        assert_abs_diff_eq!(rep.w, repq.w, epsilon = 1e-10 * rep.w);
        assert_abs_diff_eq!(rep.u, repq.u, epsilon = 1e-10 * (1.0 + rep.u));
        assert_abs_diff_eq!(rep.area, repq.area, epsilon = 1e-10 * rep.area);
    }

    #[test]
    fn normal_average_identity_on_round_spheres() {
        // (1/area) int M(nu,nu) dmu = tr(M)/3 for any fixed symmetric M:
        // the quadrature integrates the degree-2 integrand exactly.
        let model = MetricModel::flat(10.0).unwrap();
        let p = SphereParam::round_sphere(Vector3::zeros(), 0.2, 4, 12, 12).unwrap();
        let g = p.geometry(&model).unwrap();
        let m = Matrix3::new(2.0, 0.4, -0.1, 0.4, -1.0, 0.3, -0.1, 0.3, 0.5);
        let field: Vec<f64> = g.nu.iter().map(|nu| (m * nu).dot(nu)).collect();
        let avg = g.integrate(&field) / g.area;
        assert_abs_diff_eq!(avg, m.trace() / 3.0, epsilon = 1e-10);
    }

    #[test]
    fn report_serializes_to_structured_text() {
        let model = MetricModel::space_form(0.5, 1.0).unwrap();
        let p = SphereParam::round_sphere(Vector3::zeros(), 0.1, 4, 12, 12).unwrap();
        let g = p.geometry(&model).unwrap();
        let rep = evaluate(&g, &model).unwrap();
        let text = toml::to_string_pretty(&rep).unwrap();
        let back: FunctionalReport = toml::from_str(&text).unwrap();
        assert_eq!(rep.w, back.w);
        assert_eq!(rep.lambda_lsq, back.lambda_lsq);
        assert_eq!(rep.lambda_id, back.lambda_id);
    }
}
