//! Ambient 3-manifold metrics in geodesic normal coordinates on a ball B_rho.
//!
//! Three closed-form families are provided:
//! * `Flat`: the Euclidean metric.
//! * `SpaceForm { k }`: the constant-curvature metric written radially,
//!   g = A(|x|^2) I + B(|x|^2) x x^T with A(q) = sn_k(s)^2 / s^2, s = |x|.
//!   A and B are evaluated by a series in k q that is uniform in the sign of
//!   k and exact at the origin, so no special-casing of k = 0 is needed.
//! * `QuadraticCurvature`: the normal-coordinate jet
//!   g_ij = d_ij - R_iajb x_a x_b / 3 - (grad_m R_iajb) x_a x_b x_m / 6,
//!   where the curvature tensor at the origin is reconstructed from a
//!   prescribed Ricci tensor (dimension three determines Riemann from Ricci)
//!   and its first derivative from a prescribed scalar-curvature gradient via
//!   the contracted Bianchi identity.
//!
//! All metric derivatives are analytic; curvature comes from Christoffel
//! symbols and their analytic derivatives. Only the scalar-curvature gradient
//! uses central finite differences.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};

/// First derivatives of the metric, dg\[k\]\[i\]\[j\] = d_k g_ij.
pub type Dg = [[[f64; 3]; 3]; 3];
/// Second derivatives, d2g\[k\]\[l\]\[i\]\[j\] = d_k d_l g_ij.
pub type D2g = [[[[f64; 3]; 3]; 3]; 3];
/// Christoffel symbols, gamma\[c\]\[i\]\[j\] = Gamma^c_ij.
pub type Christoffels = [[[f64; 3]; 3]; 3];

type Riem = [[[[f64; 3]; 3]; 3]; 3];
type DRiem = [[[[[f64; 3]; 3]; 3]; 3]; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Flat,
    SpaceForm,
    QuadraticCurvature,
}

/// An ambient metric model on the coordinate ball B_rho.
#[derive(Clone, Debug)]
pub struct MetricModel {
    pub kind: MetricKind,
    /// Sectional curvature (SpaceForm only).
    pub k: f64,
    /// Prescribed Ricci tensor at the origin (QuadraticCurvature only).
    pub ric0: Matrix3<f64>,
    /// Prescribed gradient of scalar curvature at the origin.
    pub scal_grad0: Vector3<f64>,
    /// Radius of the coordinate ball the model is valid on.
    pub rho: f64,
    /// Measured flatness constant: the largest over a fixed sample of
    /// B_{rho/2} of |h|/|x|^2 + |dh|/|x| + |d2h|, h = g - I.
    pub h0: f64,
    riem: Box<Riem>,
    driem: Box<DRiem>,
}

/// Pointwise metric data with analytic derivatives.
#[derive(Clone, Debug)]
pub struct MetricData {
    pub g: Matrix3<f64>,
    pub g_inv: Matrix3<f64>,
    pub dg: Dg,
    pub d2g: D2g,
}

/// Pointwise curvature data.
#[derive(Clone)]
pub struct CurvatureBundle {
    pub point: Vector3<f64>,
    pub g: Matrix3<f64>,
    pub g_inv: Matrix3<f64>,
    pub dg: Dg,
    pub d2g: D2g,
    pub gamma: Christoffels,
    pub ric: Matrix3<f64>,
    pub scal: f64,
    pub einstein: Matrix3<f64>,
    /// Gradient of scalar curvature, index raised with g^{-1}.
    pub grad_scal: Vector3<f64>,
}

const DELTA: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Series coefficients of A(q) = sn_k(s)^2/s^2 (q = s^2) and B = (1 - A)/q,
/// with first and second q-derivatives. Converges for all k q of interest.
fn space_form_profile(k: f64, q: f64) -> (f64, f64, f64, f64, f64, f64) {
    let (mut a, mut a1, mut a2) = (0.0, 0.0, 0.0);
    let (mut b, mut b1, mut b2) = (0.0, 0.0, 0.0);
    // c_n = t_n k^{n-1}, t_1 = 1, t_{n+1}/t_n = -4 / ((2n+1)(2n+2)).
    let mut c = 1.0;
    for n in 1..=40usize {
        let nf = n as f64;
        let qp = |p: i32| if p < 0 { 0.0 } else { q.powi(p) };
        a += c * qp(n as i32 - 1);
        a1 += c * (nf - 1.0) * qp(n as i32 - 2);
        a2 += c * (nf - 1.0) * (nf - 2.0) * qp(n as i32 - 3);
        if n >= 2 {
            b -= c * qp(n as i32 - 2);
            b1 -= c * (nf - 2.0) * qp(n as i32 - 3);
            b2 -= c * (nf - 2.0) * (nf - 3.0) * qp(n as i32 - 4);
        }
        let next = c * (-4.0 * k) / ((2.0 * nf + 1.0) * (2.0 * nf + 2.0));
        if next.abs() * (1.0 + q.powi(n as i32)) < 1e-22 * (1.0 + a.abs()) {
            break;
        }
        c = next;
    }
    (a, a1, a2, b, b1, b2)
}

/// Riemann tensor (grouping R\[i\]\[a\]\[j\]\[b\], antisymmetric in (i,a) and
/// (j,b), Ric_ab = sum_i R\[i\]\[a\]\[i\]\[b\]) from a Ricci tensor at the
/// origin, valid in dimension three.
fn riemann_from_ricci(r: &Matrix3<f64>, scal: f64) -> Riem {
    let mut out = [[[[0.0; 3]; 3]; 3]; 3];
    for i in 0..3 {
        for a in 0..3 {
            for j in 0..3 {
                for b in 0..3 {
                    out[i][a][j][b] = DELTA[i][j] * r[(a, b)] + DELTA[a][b] * r[(i, j)]
                        - DELTA[i][b] * r[(a, j)]
                        - DELTA[a][j] * r[(i, b)]
                        - 0.5 * scal * (DELTA[i][j] * DELTA[a][b] - DELTA[i][b] * DELTA[a][j]);
                }
            }
        }
    }
    out
}

impl MetricModel {
    pub fn flat(rho: f64) -> Result<Self> {
        Self::build(MetricKind::Flat, 0.0, Matrix3::zeros(), Vector3::zeros(), rho)
    }

    pub fn space_form(k: f64, rho: f64) -> Result<Self> {
        Self::build(MetricKind::SpaceForm, k, Matrix3::zeros(), Vector3::zeros(), rho)
    }

    pub fn quadratic_curvature(
        ric0: Matrix3<f64>,
        scal_grad0: Vector3<f64>,
        rho: f64,
    ) -> Result<Self> {
        let asym = (ric0 - ric0.transpose()).abs().max();
        if asym > 1e-12 * (1.0 + ric0.abs().max()) {
            return Err(Error::Validation(format!(
                "ric0 must be symmetric (antisymmetric part {asym:.3e})"
            )));
        }
        Self::build(MetricKind::QuadraticCurvature, 0.0, ric0, scal_grad0, rho)
    }

    fn build(
        kind: MetricKind,
        k: f64,
        ric0: Matrix3<f64>,
        scal_grad0: Vector3<f64>,
        rho: f64,
    ) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::Validation(format!("rho must be positive, got {rho}")));
        }
        let mut riem = Box::new([[[[0.0; 3]; 3]; 3]; 3]);
        let mut driem = Box::new([[[[[0.0; 3]; 3]; 3]; 3]; 3]);
        if kind == MetricKind::QuadraticCurvature {
            let scal0 = ric0.trace();
            *riem = riemann_from_ricci(&ric0, scal0);
            // grad_m Ric_ij = alpha s_m d_ij + beta (s_i d_jm + s_j d_im),
            // with (alpha, beta) fixed by the trace (3a + 2b = 1) and the
            // contracted Bianchi identity (a + 4b = 1/2).
            let mat = Matrix2::new(3.0, 2.0, 1.0, 4.0);
            let ab = mat
                .lu()
                .solve(&Vector2::new(1.0, 0.5))
                .ok_or_else(|| Error::NonFinite("Bianchi coefficient solve".into()))?;
            let (alpha, beta) = (ab[0], ab[1]);
            let s = scal_grad0;
            let mut dric = [[[0.0; 3]; 3]; 3]; // [m][i][j]
            for m in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        dric[m][i][j] = alpha * s[m] * DELTA[i][j]
                            + beta * (s[i] * DELTA[j][m] + s[j] * DELTA[i][m]);
                    }
                }
            }
            for m in 0..3 {
                for i in 0..3 {
                    for a in 0..3 {
                        for j in 0..3 {
                            for b in 0..3 {
                                driem[m][i][a][j][b] = DELTA[i][j] * dric[m][a][b]
                                    + DELTA[a][b] * dric[m][i][j]
                                    - DELTA[i][b] * dric[m][a][j]
                                    - DELTA[a][j] * dric[m][i][b]
                                    - 0.5
                                        * s[m]
                                        * (DELTA[i][j] * DELTA[a][b]
                                            - DELTA[i][b] * DELTA[a][j]);
                            }
                        }
                    }
                }
            }
        }
        let mut model = MetricModel {
            kind,
            k,
            ric0,
            scal_grad0,
            rho,
            h0: 0.0,
            riem,
            driem,
        };
        model.h0 = model.measure_h0();
        Ok(model)
    }

    /// Scalar curvature at the origin, known in closed form per model.
    pub fn scal0(&self) -> f64 {
        match self.kind {
            MetricKind::Flat => 0.0,
            MetricKind::SpaceForm => 6.0 * self.k,
            MetricKind::QuadraticCurvature => self.ric0.trace(),
        }
    }

    /// Prescribed gradient of scalar curvature at the origin.
    pub fn scal_grad0(&self) -> Vector3<f64> {
        match self.kind {
            MetricKind::QuadraticCurvature => self.scal_grad0,
            _ => Vector3::zeros(),
        }
    }

    fn check_domain(&self, x: &Vector3<f64>) -> Result<()> {
        let r = x.norm();
        if !r.is_finite() {
            return Err(Error::NonFinite("metric evaluation point".into()));
        }
        if r >= self.rho {
            return Err(Error::Domain(format!(
                "point at |x| = {r:.6} outside the model ball B_rho (rho = {})",
                self.rho
            )));
        }
        Ok(())
    }

    /// Metric, inverse, and first two derivative tensors at a point of B_rho.
    pub fn metric_at(&self, x: &Vector3<f64>) -> Result<MetricData> {
        self.check_domain(x)?;
        Ok(self.metric_raw(x))
    }

    /// Unchecked analytic evaluation (the formulas are entire in x).
    pub(crate) fn metric_raw(&self, x: &Vector3<f64>) -> MetricData {
        match self.kind {
            MetricKind::Flat => MetricData {
                g: Matrix3::identity(),
                g_inv: Matrix3::identity(),
                dg: [[[0.0; 3]; 3]; 3],
                d2g: [[[[0.0; 3]; 3]; 3]; 3],
            },
            MetricKind::SpaceForm => {
                let q = x.norm_squared();
                let (a, a1, a2, b, b1, b2) = space_form_profile(self.k, q);
                let mut g = Matrix3::zeros();
                let mut dg = [[[0.0; 3]; 3]; 3];
                let mut d2g = [[[[0.0; 3]; 3]; 3]; 3];
                // Upper triangles mirrored below so symmetry is exact.
                for i in 0..3 {
                    for j in i..3 {
                        let v = a * DELTA[i][j] + b * x[i] * x[j];
                        g[(i, j)] = v;
                        g[(j, i)] = v;
                    }
                }
                for k in 0..3 {
                    for i in 0..3 {
                        for j in i..3 {
                            let v = 2.0 * a1 * x[k] * DELTA[i][j]
                                + 2.0 * b1 * x[k] * x[i] * x[j]
                                + b * (DELTA[i][k] * x[j] + DELTA[j][k] * x[i]);
                            dg[k][i][j] = v;
                            dg[k][j][i] = v;
                        }
                    }
                }
                for k in 0..3 {
                    for l in k..3 {
                        for i in 0..3 {
                            for j in i..3 {
                                let v = 4.0 * a2 * x[l] * x[k] * DELTA[i][j]
                                    + 2.0 * a1 * DELTA[k][l] * DELTA[i][j]
                                    + 4.0 * b2 * x[l] * x[k] * x[i] * x[j]
                                    + 2.0 * b1
                                        * (DELTA[k][l] * x[i] * x[j]
                                            + x[k] * DELTA[i][l] * x[j]
                                            + x[k] * x[i] * DELTA[j][l]
                                            + x[l] * DELTA[i][k] * x[j]
                                            + x[l] * x[i] * DELTA[j][k])
                                    + b * (DELTA[i][k] * DELTA[j][l]
                                        + DELTA[j][k] * DELTA[i][l]);
                                d2g[k][l][i][j] = v;
                                d2g[k][l][j][i] = v;
                                d2g[l][k][i][j] = v;
                                d2g[l][k][j][i] = v;
                            }
                        }
                    }
                }
                let g_inv = g.try_inverse().expect("space form metric is invertible on B_rho");
                MetricData { g, g_inv, dg, d2g }
            }
            MetricKind::QuadraticCurvature => {
                let r = &*self.riem;
                let s = &*self.driem;
                let mut g = Matrix3::identity();
                let mut dg = [[[0.0; 3]; 3]; 3];
                let mut d2g = [[[[0.0; 3]; 3]; 3]; 3];
                // Upper triangles only, mirrored below: symmetry of the
                // output must be exact, not roundoff-level.
                for i in 0..3 {
                    for j in i..3 {
                        let mut quad = 0.0;
                        let mut cub = 0.0;
                        for a in 0..3 {
                            for b in 0..3 {
                                quad += r[i][a][j][b] * x[a] * x[b];
                                for m in 0..3 {
                                    cub += s[m][i][a][j][b] * x[a] * x[b] * x[m];
                                }
                            }
                        }
                        let v = if i == j { 1.0 } else { 0.0 } - (quad / 3.0 + cub / 6.0);
                        g[(i, j)] = v;
                        g[(j, i)] = v;
                    }
                }
                for k in 0..3 {
                    for i in 0..3 {
                        for j in i..3 {
                            let mut quad = 0.0;
                            for a in 0..3 {
                                quad += (r[i][k][j][a] + r[i][a][j][k]) * x[a];
                            }
                            let mut cub = 0.0;
                            for a in 0..3 {
                                for b in 0..3 {
                                    cub += s[k][i][a][j][b] * x[a] * x[b]
                                        + s[a][i][k][j][b] * x[a] * x[b]
                                        + s[a][i][b][j][k] * x[a] * x[b];
                                }
                            }
                            let v = -quad / 3.0 - cub / 6.0;
                            dg[k][i][j] = v;
                            dg[k][j][i] = v;
                        }
                    }
                }
                for k in 0..3 {
                    for l in k..3 {
                        for i in 0..3 {
                            for j in i..3 {
                                let quad = r[i][k][j][l] + r[i][l][j][k];
                                let mut cub = 0.0;
                                for a in 0..3 {
                                    cub += s[k][i][l][j][a] * x[a]
                                        + s[k][i][a][j][l] * x[a]
                                        + s[l][i][k][j][a] * x[a]
                                        + s[a][i][k][j][l] * x[a]
                                        + s[l][i][a][j][k] * x[a]
                                        + s[a][i][l][j][k] * x[a];
                                }
                                let v = -quad / 3.0 - cub / 6.0;
                                d2g[k][l][i][j] = v;
                                d2g[k][l][j][i] = v;
                                d2g[l][k][i][j] = v;
                                d2g[l][k][j][i] = v;
                            }
                        }
                    }
                }
                let g_inv = g
                    .try_inverse()
                    .expect("quadratic-curvature metric is invertible on B_rho");
                MetricData { g, g_inv, dg, d2g }
            }
        }
    }

    /// Christoffel symbols from pointwise metric data.
    pub fn christoffels(data: &MetricData) -> Christoffels {
        let mut gamma = [[[0.0; 3]; 3]; 3];
        for c in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    let mut v = 0.0;
                    for d in 0..3 {
                        v += data.g_inv[(c, d)]
                            * (data.dg[i][j][d] + data.dg[j][i][d] - data.dg[d][i][j]);
                    }
                    gamma[c][i][j] = 0.5 * v;
                }
            }
        }
        gamma
    }

    /// Ricci, scalar and Einstein curvature from metric data (no FD anywhere).
    fn curvature_core(&self, data: &MetricData) -> (Christoffels, Matrix3<f64>, f64, Matrix3<f64>) {
        let gamma = Self::christoffels(data);
        // d gamma^c_ij / d x_k, using d g^{-1} = -g^{-1} (d g) g^{-1}.
        let mut dginv = [[[0.0; 3]; 3]; 3];
        for k in 0..3 {
            let mut dgk = Matrix3::zeros();
            for i in 0..3 {
                for j in 0..3 {
                    dgk[(i, j)] = data.dg[k][i][j];
                }
            }
            let m = -data.g_inv * dgk * data.g_inv;
            for i in 0..3 {
                for j in 0..3 {
                    dginv[k][i][j] = m[(i, j)];
                }
            }
        }
        let mut dgamma = [[[[0.0; 3]; 3]; 3]; 3]; // [k][c][i][j]
        for k in 0..3 {
            for c in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        let mut v = 0.0;
                        for d in 0..3 {
                            v += dginv[k][c][d]
                                * (data.dg[i][j][d] + data.dg[j][i][d] - data.dg[d][i][j])
                                + data.g_inv[(c, d)]
                                    * (data.d2g[k][i][j][d] + data.d2g[k][j][i][d]
                                        - data.d2g[k][d][i][j]);
                        }
                        dgamma[k][c][i][j] = 0.5 * v;
                    }
                }
            }
        }
        // Ric_sn = R^m_{s m n} = d_m G^m_{ns} - d_n G^m_{ms} + G^m_{me} G^e_{ns} - G^m_{ne} G^e_{ms}.
        let mut ric = Matrix3::zeros();
        for s in 0..3 {
            for n in 0..3 {
                let mut v = 0.0;
                for m in 0..3 {
                    v += dgamma[m][m][n][s] - dgamma[n][m][m][s];
                    for e in 0..3 {
                        v += gamma[m][m][e] * gamma[e][n][s] - gamma[m][n][e] * gamma[e][m][s];
                    }
                }
                ric[(s, n)] = v;
            }
        }
        // Symmetrize away roundoff.
        ric = 0.5 * (ric + ric.transpose());
        let scal = (data.g_inv * ric).trace();
        let einstein = ric - 0.5 * scal * data.g;
        (gamma, ric, scal, einstein)
    }

    fn scal_raw(&self, x: &Vector3<f64>) -> f64 {
        let data = self.metric_raw(x);
        self.curvature_core(&data).2
    }

    /// Full curvature bundle at a point of B_rho. The scalar-curvature
    /// gradient uses central differences with step 1e-5 rho.
    pub fn curvature_at(&self, x: &Vector3<f64>) -> Result<CurvatureBundle> {
        self.check_domain(x)?;
        let data = self.metric_raw(x);
        let (gamma, ric, scal, einstein) = self.curvature_core(&data);
        let h = 1e-5 * self.rho;
        let mut dscal = Vector3::zeros();
        for i in 0..3 {
            let mut xp = *x;
            let mut xm = *x;
            xp[i] += h;
            xm[i] -= h;
            dscal[i] = (self.scal_raw(&xp) - self.scal_raw(&xm)) / (2.0 * h);
        }
        let grad_scal = data.g_inv * dscal;
        Ok(CurvatureBundle {
            point: *x,
            g: data.g,
            g_inv: data.g_inv,
            dg: data.dg,
            d2g: data.d2g,
            gamma,
            ric,
            scal,
            einstein,
            grad_scal,
        })
    }

    /// Ricci data without the FD scalar gradient; used in per-node loops.
    pub(crate) fn ricci_at_raw(&self, x: &Vector3<f64>) -> (MetricData, Matrix3<f64>, f64, Matrix3<f64>) {
        let data = self.metric_raw(x);
        let (_, ric, scal, einstein) = self.curvature_core(&data);
        (data, ric, scal, einstein)
    }

    /// Covariant divergence of the Einstein tensor, (div G)_j; should vanish
    /// by the contracted Bianchi identity and is used as a consistency
    /// diagnostic. Partial derivatives of G use central differences.
    pub fn einstein_divergence(&self, x: &Vector3<f64>) -> Result<Vector3<f64>> {
        self.check_domain(x)?;
        let data = self.metric_raw(x);
        let (gamma, _, _, einstein) = self.curvature_core(&data);
        let h = 1e-4 * self.rho;
        let mut de = [Matrix3::<f64>::zeros(); 3];
        for k in 0..3 {
            let mut xp = *x;
            let mut xm = *x;
            xp[k] += h;
            xm[k] -= h;
            let ep = {
                let d = self.metric_raw(&xp);
                self.curvature_core(&d).3
            };
            let em = {
                let d = self.metric_raw(&xm);
                self.curvature_core(&d).3
            };
            de[k] = (ep - em) / (2.0 * h);
        }
        let mut div = Vector3::zeros();
        for j in 0..3 {
            let mut v = 0.0;
            for i in 0..3 {
                for k in 0..3 {
                    let mut cov = de[k][(i, j)];
                    for l in 0..3 {
                        cov -= gamma[l][k][i] * einstein[(l, j)]
                            + gamma[l][k][j] * einstein[(i, l)];
                    }
                    v += data.g_inv[(i, k)] * cov;
                }
            }
            div[j] = v;
        }
        Ok(div)
    }

    /// Largest flatness quotient |h|/|x|^2 + |dh|/|x| + |d2h| over a fixed
    /// lattice sample of B_{rho/2}, h = g - I.
    fn measure_h0(&self) -> f64 {
        let n = 10;
        let mut worst: f64 = 0.0;
        for ix in 0..n {
            for iy in 0..n {
                for iz in 0..n {
                    let c = |i: usize| (2.0 * (i as f64 + 0.5) / n as f64 - 1.0) * self.rho / 2.0;
                    let x = Vector3::new(c(ix), c(iy), c(iz));
                    let r = x.norm();
                    if r < self.rho / 20.0 || r > self.rho / 2.0 {
                        continue;
                    }
                    let data = self.metric_raw(&x);
                    let h = (data.g - Matrix3::identity()).abs().max();
                    let mut dh: f64 = 0.0;
                    let mut d2h: f64 = 0.0;
                    for k in 0..3 {
                        for i in 0..3 {
                            for j in 0..3 {
                                dh = dh.max(data.dg[k][i][j].abs());
                                for l in 0..3 {
                                    d2h = d2h.max(data.d2g[k][l][i][j].abs());
                                }
                            }
                        }
                    }
                    worst = worst.max(h / (r * r) + dh / r + d2h);
                }
            }
        }
        worst
    }
}

/// sn_k(s): sin(sqrt(k) s)/sqrt(k) for k > 0, s for k = 0, sinh for k < 0.
pub fn sn_k(k: f64, s: f64) -> f64 {
    if k > 0.0 {
        let rk = k.sqrt();
        (rk * s).sin() / rk
    } else if k < 0.0 {
        let rk = (-k).sqrt();
        (rk * s).sinh() / rk
    } else {
        s
    }
}

/// d/ds sn_k(s): cos / cosh companion.
pub fn cs_k(k: f64, s: f64) -> f64 {
    if k > 0.0 {
        (k.sqrt() * s).cos()
    } else if k < 0.0 {
        ((-k).sqrt() * s).cosh()
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sample_points(rho: f64) -> Vec<Vector3<f64>> {
        vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(0.2 * rho, 0.0, 0.0),
            Vector3::new(0.1 * rho, -0.15 * rho, 0.05 * rho),
            Vector3::new(-0.3 * rho, 0.2 * rho, 0.25 * rho),
            Vector3::new(0.05 * rho, 0.4 * rho, -0.3 * rho),
        ]
    }

    #[test]
    fn flat_metric_is_identity_with_zero_curvature() {
        let m = MetricModel::flat(1.0).unwrap();
        let b = m.curvature_at(&Vector3::new(0.3, -0.2, 0.1)).unwrap();
        assert_abs_diff_eq!((b.g - Matrix3::identity()).abs().max(), 0.0, epsilon = 0.0);
        assert_abs_diff_eq!(b.ric.abs().max(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.scal, 0.0, epsilon = 1e-15);
        assert_eq!(m.h0, 0.0);
    }

    #[test]
    fn space_form_matches_closed_form_profile() {
        // Tangential eigenvalue sn^2(s)/s^2, radial eigenvalue 1.
        for &k in &[1.0, 0.5, -0.7, 0.0] {
            let m = MetricModel::space_form(k, 1.0).unwrap();
            let x = Vector3::new(0.2, 0.0, 0.0);
            let g = m.metric_at(&x).unwrap().g;
            let sn = sn_k(k, 0.2);
            let tang = sn * sn / 0.04;
            assert_abs_diff_eq!(g[(0, 0)], 1.0, epsilon = 1e-13);
            assert_abs_diff_eq!(g[(1, 1)], tang, epsilon = 1e-13);
            assert_abs_diff_eq!(g[(2, 2)], tang, epsilon = 1e-13);
            assert_abs_diff_eq!(g[(0, 1)].abs(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn space_form_k1_tangential_components() {
        let m = MetricModel::space_form(1.0, 0.5).unwrap();
        let g = m.metric_at(&Vector3::new(0.2, 0.0, 0.0)).unwrap().g;
        let expect = (0.2f64).sin().powi(2) / 0.04;
        assert_abs_diff_eq!(g[(1, 1)], expect, epsilon = 1e-12);
        assert_abs_diff_eq!(g[(2, 2)], expect, epsilon = 1e-12);
        assert_abs_diff_eq!(g[(0, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn metric_derivatives_match_finite_differences() {
        let models = [
            MetricModel::space_form(0.8, 1.0).unwrap(),
            MetricModel::quadratic_curvature(
                Matrix3::new(1.0, 0.2, 0.0, 0.2, 2.0, -0.1, 0.0, -0.1, 3.0),
                Vector3::new(0.7, -0.3, 0.4),
                1.0,
            )
            .unwrap(),
        ];
        let h = 1e-6;
        for m in &models {
            for x in sample_points(0.8) {
                let d = m.metric_raw(&x);
                for k in 0..3 {
                    let mut xp = x;
                    let mut xm = x;
                    xp[k] += h;
                    xm[k] -= h;
                    let gp = m.metric_raw(&xp).g;
                    let gm = m.metric_raw(&xm).g;
                    for i in 0..3 {
                        for j in 0..3 {
                            let fd = (gp[(i, j)] - gm[(i, j)]) / (2.0 * h);
                            assert_abs_diff_eq!(d.dg[k][i][j], fd, epsilon = 5e-9);
                        }
                    }
                    let dp = m.metric_raw(&xp);
                    let dm = m.metric_raw(&xm);
                    for l in 0..3 {
                        for i in 0..3 {
                            for j in 0..3 {
                                let fd = (dp.dg[l][i][j] - dm.dg[l][i][j]) / (2.0 * h);
                                assert_abs_diff_eq!(d.d2g[k][l][i][j], fd, epsilon = 5e-8);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn radial_gauge_holds_for_normal_coordinate_models() {
        let models = [
            MetricModel::space_form(1.3, 1.0).unwrap(),
            MetricModel::space_form(-0.9, 1.0).unwrap(),
            MetricModel::quadratic_curvature(
                Matrix3::new(2.0, 0.3, -0.2, 0.3, 1.0, 0.1, -0.2, 0.1, 0.5),
                Vector3::new(1.0, 2.0, -0.5),
                1.0,
            )
            .unwrap(),
        ];
        for m in &models {
            for x in sample_points(0.9) {
                let g = m.metric_raw(&x).g;
                let gx = g * x;
                assert!((gx - x).norm() <= 1e-12 * (1.0 + x.norm()), "radial gauge violated");
            }
        }
    }

    #[test]
    fn symmetry_of_metric_and_derivatives() {
        let m = MetricModel::quadratic_curvature(
            Matrix3::new(1.0, 0.5, 0.2, 0.5, -1.0, 0.0, 0.2, 0.0, 2.0),
            Vector3::new(0.3, 0.1, -0.2),
            1.0,
        )
        .unwrap();
        for x in sample_points(0.9) {
            let d = m.metric_raw(&x);
            assert!((d.g - d.g.transpose()).abs().max() == 0.0);
            for k in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        assert_eq!(d.dg[k][i][j], d.dg[k][j][i]);
                        for l in 0..3 {
                            assert_eq!(d.d2g[k][l][i][j], d.d2g[l][k][j][i]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn space_form_curvature_is_constant() {
        // Ric = 2k g, Scal = 6k everywhere in the ball.
        let k = 0.5;
        let m = MetricModel::space_form(k, 0.5).unwrap();
        let b = m.curvature_at(&Vector3::new(0.05, 0.02, 0.0)).unwrap();
        assert_abs_diff_eq!(b.scal, 3.0, epsilon = 1e-6);
        assert!((b.ric - 2.0 * k * b.g).abs().max() < 1e-6, "Ric != 2k g");
        // Einstein tensor of a space form: G = -k g.
        assert!((b.einstein + k * b.g).abs().max() < 1e-6);
        assert!(b.grad_scal.norm() < 1e-6);
    }

    #[test]
    fn quadratic_model_reproduces_prescribed_curvature_at_origin() {
        let ric0 = Matrix3::new(1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 3.0);
        let s0 = Vector3::new(0.7, 0.0, 0.0);
        let m = MetricModel::quadratic_curvature(ric0, s0, 0.5).unwrap();
        let b = m.curvature_at(&Vector3::zeros()).unwrap();
        assert!((b.ric - ric0).abs().max() < 1e-8, "Ric(0) mismatch: {:?}", b.ric);
        // Scal(0) is the trace of the prescribed Ricci tensor.
        assert_abs_diff_eq!(b.scal, 6.0, epsilon = 1e-8);
        assert!((b.grad_scal - s0).norm() < 1e-4, "grad Scal(0) = {:?}", b.grad_scal);
    }

    #[test]
    fn quadratic_model_with_generic_data() {
        let ric0 = Matrix3::new(1.0, 0.3, -0.1, 0.3, -0.5, 0.2, -0.1, 0.2, 0.8);
        let s0 = Vector3::new(-0.4, 1.1, 0.6);
        let m = MetricModel::quadratic_curvature(ric0, s0, 0.5).unwrap();
        let b = m.curvature_at(&Vector3::zeros()).unwrap();
        assert!((b.ric - ric0).abs().max() < 1e-8);
        assert!((b.grad_scal - s0).norm() < 1e-4);
    }

    #[test]
    fn scalar_curvature_is_trace_of_ricci() {
        let m = MetricModel::space_form(-0.6, 1.0).unwrap();
        for x in sample_points(0.9) {
            let b = m.curvature_at(&x).unwrap();
            let tr = (b.g_inv * b.ric).trace();
            assert!((b.scal - tr).abs() <= 1e-10 * (1.0 + tr.abs()));
        }
    }

    #[test]
    fn einstein_tensor_is_divergence_free() {
        let models = [
            MetricModel::space_form(1.0, 0.5).unwrap(),
            MetricModel::quadratic_curvature(
                Matrix3::new(1.0, 0.2, 0.0, 0.2, 0.5, -0.3, 0.0, -0.3, 1.5),
                Vector3::new(0.5, -0.2, 0.1),
                0.5,
            )
            .unwrap(),
        ];
        for m in &models {
            for x in sample_points(0.4) {
                if x.norm() < 1e-12 {
                    continue;
                }
                let div = m.einstein_divergence(&x).unwrap();
                let ric = m.curvature_at(&x).unwrap().ric;
                let bound = 1e-4 * (1.0 + ric.abs().max() / m.rho);
                assert!(
                    div.norm() <= bound,
                    "div G = {:.3e} exceeds {bound:.3e} at {x:?}",
                    div.norm()
                );
            }
        }
    }

    #[test]
    fn h0_is_finite_and_scales_with_curvature() {
        let weak = MetricModel::space_form(0.1, 1.0).unwrap();
        let strong = MetricModel::space_form(1.0, 1.0).unwrap();
        assert!(weak.h0.is_finite() && weak.h0 > 0.0);
        assert!(strong.h0 > weak.h0);
    }

    #[test]
    fn domain_and_validation_errors() {
        let m = MetricModel::space_form(1.0, 0.5).unwrap();
        let err = m.metric_at(&Vector3::new(0.6, 0.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
        let bad = MetricModel::quadratic_curvature(
            Matrix3::new(1.0, 0.5, 0.0, -0.5, 1.0, 0.0, 0.0, 0.0, 1.0),
            Vector3::zeros(),
            1.0,
        );
        assert!(matches!(bad.unwrap_err(), Error::Validation(_)));
    }

    #[test]
    fn sn_cs_relations() {
        for &k in &[2.0, 0.5, 0.0, -0.5, -2.0] {
            for &s in &[0.0, 0.1, 0.4, 1.0] {
                let h = 1e-6;
                let fd = (sn_k(k, s + h) - sn_k(k, s - h)) / (2.0 * h);
                assert_abs_diff_eq!(fd, cs_k(k, s), epsilon = 1e-9);
                // cs^2 + k sn^2 = 1.
                let one = cs_k(k, s).powi(2) + k * sn_k(k, s).powi(2);
                assert_abs_diff_eq!(one, 1.0, epsilon = 1e-12);
            }
        }
    }
}
