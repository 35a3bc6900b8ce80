//! Real orthonormal spherical harmonics on a Gauss-Legendre x uniform-phi grid.
//!
//! Basis convention: fully normalized real harmonics,
//!   Y_{l,0}  = Q_{l0}(cos t),
//!   Y_{l,m}  = sqrt(2) Q_{lm}(cos t) cos(m p)   for m > 0,
//!   Y_{l,-m} = sqrt(2) Q_{lm}(cos t) sin(m p)   for m > 0,
//! where Q_{lm} are the orthonormalized associated Legendre functions without
//! the Condon-Shortley phase, so that integral of Y^2 over the unit sphere is
//! one and Y_{1,1} ~ x, Y_{1,-1} ~ y, Y_{1,0} ~ z. Coefficients of a field are
//! stored in (l, m) lexicographic order: index = l^2 + (m + l).
//!
//! The quadrature is Gauss-Legendre in cos(theta) (n_theta nodes, poles never
//! sampled) times the trapezoid rule in phi (n_phi uniform nodes), which
//! integrates products of harmonics exactly within the supported band.
//! Theta-derivative tables up to second order come from the stable normalized
//! recurrences plus the associated Legendre ODE.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

/// Number of coefficients of a degree-`l_max` expansion.
pub fn n_coeffs(l_max: usize) -> usize {
    (l_max + 1) * (l_max + 1)
}

/// Flat index of (l, m), m in [-l, l].
pub fn coeff_index(l: usize, m: i64) -> usize {
    debug_assert!(m.unsigned_abs() as usize <= l);
    l * l + (m + l as i64) as usize
}

fn tri(l: usize) -> usize {
    l * (l + 1) / 2
}

/// Gauss-Legendre nodes (ascending) and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-style initial guess for the i-th root from the top.
        let mut xi = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence up to degree n at xi.
            let (mut p0, mut p1) = (1.0, xi);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * xi * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { xi } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            pp = n as f64 * (xi * p - pm1) / (xi * xi - 1.0);
            let dx = p / pp;
            xi -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        x[n - 1 - i] = xi;
        x[i] = -xi;
        let wi = 2.0 / ((1.0 - xi * xi) * pp * pp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
        // Weight at x = 0 recomputed directly for symmetry.
        let (mut p0, mut p1) = (1.0, 0.0);
        for k in 2..=n {
            let kf = k as f64;
            let p2 = (-(kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        let pp = n as f64 * (0.0 * p1 - p0) / (0.0 - 1.0);
        w[n / 2] = 2.0 / (pp * pp);
    }
    (x, w)
}

/// Orthonormalized associated Legendre values Q_{lm}(x) for 0 <= m <= l <= l_max,
/// packed as row\[tri(l) + m\]. `s` must equal sqrt(1 - x^2).
pub fn legendre_row(l_max: usize, x: f64, s: f64) -> Vec<f64> {
    let mut q = vec![0.0; tri(l_max + 1)];
    q[0] = 0.5 / PI.sqrt(); // Q_00 = 1/sqrt(4 pi)
    for m in 1..=l_max {
        let f = ((2 * m + 1) as f64 / (2 * m) as f64).sqrt();
        q[tri(m) + m] = f * s * q[tri(m - 1) + m - 1];
    }
    for m in 0..l_max {
        q[tri(m + 1) + m] = (2.0 * m as f64 + 3.0).sqrt() * x * q[tri(m) + m];
    }
    for m in 0..=l_max {
        for l in (m + 2)..=l_max {
            let lf = l as f64;
            let mf = m as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0))
                .sqrt();
            q[tri(l) + m] = a * (x * q[tri(l - 1) + m] - b * q[tri(l - 2) + m]);
        }
    }
    q
}

/// Precomputed grid: nodes, weights, Legendre tables (values and first two
/// theta-derivatives) up to `l_tab`, and phi trig tables.
pub struct SphGrid {
    pub l_tab: usize,
    pub n_theta: usize,
    pub n_phi: usize,
    pub cos_theta: Vec<f64>,
    pub sin_theta: Vec<f64>,
    pub theta: Vec<f64>,
    pub w_theta: Vec<f64>,
    pub w_phi: f64,
    pub phi: Vec<f64>,
    /// Q_{lm}(cos theta_i), layout [i][tri(l)+m].
    q: Vec<Vec<f64>>,
    /// d/dtheta Q_{lm}.
    dq: Vec<Vec<f64>>,
    /// d^2/dtheta^2 Q_{lm}.
    d2q: Vec<Vec<f64>>,
    /// cos(m phi_j), sin(m phi_j), layout [m][j].
    cosm: Vec<Vec<f64>>,
    sinm: Vec<Vec<f64>>,
}

impl SphGrid {
    pub fn new(l_tab: usize, n_theta: usize, n_phi: usize) -> Self {
        assert!(n_theta >= l_tab + 1, "theta grid cannot hold degree {l_tab}");
        assert!(n_phi >= 2 * l_tab + 1 || n_phi >= 2, "phi grid too small");
        let (x, w_theta) = gauss_legendre(n_theta);
        let mut q = Vec::with_capacity(n_theta);
        let mut dq = Vec::with_capacity(n_theta);
        let mut d2q = Vec::with_capacity(n_theta);
        let mut sin_theta = Vec::with_capacity(n_theta);
        let mut theta = Vec::with_capacity(n_theta);
        // Ascending x = descending theta; keep ascending theta instead.
        let cos_theta: Vec<f64> = x.iter().rev().copied().collect();
        let w_theta: Vec<f64> = w_theta.iter().rev().copied().collect();
        for &xi in &cos_theta {
            let s = (1.0 - xi * xi).max(0.0).sqrt();
            sin_theta.push(s);
            theta.push(xi.acos());
            let qi = legendre_row(l_tab, xi, s);
            let mut dqi = vec![0.0; qi.len()];
            let mut d2qi = vec![0.0; qi.len()];
            let cot = xi / s;
            for l in 0..=l_tab {
                for m in 0..=l {
                    let lf = l as f64;
                    let mf = m as f64;
                    let idx = tri(l) + m;
                    let e = if l == 0 || m == l {
                        0.0
                    } else {
                        ((2.0 * lf + 1.0) * (lf * lf - mf * mf) / (2.0 * lf - 1.0)).sqrt()
                    };
                    let below = if l > 0 && m <= l - 1 { qi[tri(l - 1) + m] } else { 0.0 };
                    dqi[idx] = (lf * xi * qi[idx] - e * below) / s;
                    let c = lf * (lf + 1.0) - mf * mf / (s * s);
                    d2qi[idx] = -cot * dqi[idx] - c * qi[idx];
                }
            }
            q.push(qi);
            dq.push(dqi);
            d2q.push(d2qi);
        }
        let w_phi = 2.0 * PI / n_phi as f64;
        let phi: Vec<f64> = (0..n_phi).map(|j| w_phi * j as f64).collect();
        // Trig tables cover both the synthesis range (m <= l_tab) and the
        // full set of phi modes representable on the grid, which row-wise
        // DFT differentiation uses.
        let m_trig = l_tab.max((n_phi.saturating_sub(1)) / 2);
        let mut cosm = Vec::with_capacity(m_trig + 1);
        let mut sinm = Vec::with_capacity(m_trig + 1);
        for m in 0..=m_trig {
            cosm.push(phi.iter().map(|p| (m as f64 * p).cos()).collect());
            sinm.push(phi.iter().map(|p| (m as f64 * p).sin()).collect());
        }
        SphGrid {
            l_tab,
            n_theta,
            n_phi,
            cos_theta,
            sin_theta,
            theta,
            w_theta,
            w_phi,
            phi,
            q,
            dq,
            d2q,
            cosm,
            sinm,
        }
    }

    /// Shared grid instance; grids are immutable and reused heavily.
    pub fn shared(l_tab: usize, n_theta: usize, n_phi: usize) -> Arc<SphGrid> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize, usize), Arc<SphGrid>>>> =
            OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().unwrap();
        map.entry((l_tab, n_theta, n_phi))
            .or_insert_with(|| Arc::new(SphGrid::new(l_tab, n_theta, n_phi)))
            .clone()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        i * self.n_phi + j
    }

    /// Solid-angle quadrature weight of node (i, j) on the unit sphere
    /// (the sin(theta) Jacobian is inside the Gauss-Legendre weight).
    pub fn w_solid(&self, i: usize) -> f64 {
        self.w_theta[i] * self.w_phi
    }

    fn theta_table(&self, d_theta: usize) -> &[Vec<f64>] {
        match d_theta {
            0 => &self.q,
            1 => &self.dq,
            2 => &self.d2q,
            _ => panic!("theta derivative order {d_theta} not tabulated"),
        }
    }

    /// Inverse transform: evaluate the expansion (or a parameter derivative of
    /// it) on all grid nodes. `d_theta <= 2`, `d_phi <= 2`.
    pub fn synth(&self, coeffs: &[f64], l_max: usize, d_theta: usize, d_phi: usize) -> Vec<f64> {
        assert!(l_max <= self.l_tab);
        assert_eq!(coeffs.len(), n_coeffs(l_max));
        let table = self.theta_table(d_theta);
        let nm = l_max + 1;
        // Stage 1: contract over l for every (theta node, |m|, branch).
        let mut ac = vec![0.0; self.n_theta * nm];
        let mut as_ = vec![0.0; self.n_theta * nm];
        for i in 0..self.n_theta {
            let row = &table[i];
            for m in 0..=l_max {
                let (mut sc, mut ss) = (0.0, 0.0);
                for l in m.max(0)..=l_max {
                    let t = row[tri(l) + m];
                    sc += coeffs[coeff_index(l, m as i64)] * t;
                    if m > 0 {
                        ss += coeffs[coeff_index(l, -(m as i64))] * t;
                    }
                }
                ac[i * nm + m] = sc;
                as_[i * nm + m] = ss;
            }
        }
        // Stage 2: phi synthesis with the requested phi-derivative.
        let sqrt2 = std::f64::consts::SQRT_2;
        let mut out = vec![0.0; self.n_nodes()];
        for i in 0..self.n_theta {
            for j in 0..self.n_phi {
                let mut v = 0.0;
                for m in 0..=l_max {
                    let (c, s) = (self.cosm[m][j], self.sinm[m][j]);
                    let mf = m as f64;
                    // Branch basis: cos-branch sqrt(2) cos(m p), sin-branch sqrt(2) sin(m p).
                    let (bc, bs) = match d_phi {
                        0 => (c, s),
                        1 => (-mf * s, mf * c),
                        2 => (-mf * mf * c, -mf * mf * s),
                        _ => panic!("phi derivative order {d_phi} not supported"),
                    };
                    if m == 0 {
                        v += ac[i * nm] * if d_phi == 0 { 1.0 } else { 0.0 };
                    } else {
                        v += sqrt2 * (ac[i * nm + m] * bc + as_[i * nm + m] * bs);
                    }
                }
                out[self.node(i, j)] = v;
            }
        }
        out
    }

    /// Forward transform: project node data onto the orthonormal basis up to
    /// degree `l_max` using the grid quadrature.
    pub fn analyze(&self, field: &[f64], l_max: usize) -> Vec<f64> {
        assert!(l_max <= self.l_tab);
        assert_eq!(field.len(), self.n_nodes());
        let nm = l_max + 1;
        let sqrt2 = std::f64::consts::SQRT_2;
        // Stage 1: phi projections per theta row.
        let mut gc = vec![0.0; self.n_theta * nm];
        let mut gs = vec![0.0; self.n_theta * nm];
        for i in 0..self.n_theta {
            for m in 0..=l_max {
                let (mut sc, mut ss) = (0.0, 0.0);
                for j in 0..self.n_phi {
                    let f = field[self.node(i, j)];
                    sc += f * self.cosm[m][j];
                    ss += f * self.sinm[m][j];
                }
                let norm = if m == 0 { 1.0 } else { sqrt2 };
                gc[i * nm + m] = sc * self.w_phi * norm;
                gs[i * nm + m] = ss * self.w_phi * norm;
            }
        }
        // Stage 2: Legendre projections.
        let mut coeffs = vec![0.0; n_coeffs(l_max)];
        for l in 0..=l_max {
            for m in 0..=l {
                let (mut sc, mut ss) = (0.0, 0.0);
                for i in 0..self.n_theta {
                    let t = self.q[i][tri(l) + m] * self.w_theta[i];
                    sc += t * gc[i * nm + m];
                    ss += t * gs[i * nm + m];
                }
                coeffs[coeff_index(l, m as i64)] = sc;
                if m > 0 {
                    coeffs[coeff_index(l, -(m as i64))] = ss;
                }
            }
        }
        coeffs
    }

    /// Phi-derivative of node data by exact trigonometric (DFT) differentiation
    /// of each theta row. Exact for fields with phi modes below n_phi / 2; no
    /// Legendre analysis involved, so it is pole-safe for fields like
    /// (d field / d phi) / sin(theta).
    pub fn phi_derivative(&self, field: &[f64]) -> Vec<f64> {
        assert_eq!(field.len(), self.n_nodes());
        let m_max = (self.n_phi - 1) / 2;
        let mut out = vec![0.0; field.len()];
        let scale = 2.0 / self.n_phi as f64;
        for i in 0..self.n_theta {
            for m in 1..=m_max {
                // Row Fourier coefficients of cos(m p) and sin(m p).
                let (mut am, mut bm) = (0.0, 0.0);
                for j in 0..self.n_phi {
                    let f = field[self.node(i, j)];
                    am += f * self.cosm[m][j];
                    bm += f * self.sinm[m][j];
                }
                am *= scale;
                bm *= scale;
                let mf = m as f64;
                for j in 0..self.n_phi {
                    out[self.node(i, j)] +=
                        mf * (bm * self.cosm[m][j] - am * self.sinm[m][j]);
                }
            }
            // Nyquist mode (even n_phi) differentiates to a pure sine sampled
            // at its zeros; it contributes nothing on the grid.
        }
        out
    }
}

/// Evaluate an expansion at an arbitrary point (theta in [0, pi], any phi).
/// Derivatives are not offered here; at the poles only values make sense.
pub fn eval_at(coeffs: &[f64], l_max: usize, theta: f64, phi: f64) -> f64 {
    assert_eq!(coeffs.len(), n_coeffs(l_max));
    let x = theta.cos();
    let s = theta.sin().abs();
    let row = legendre_row(l_max, x, s);
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut v = 0.0;
    for l in 0..=l_max {
        for m in 0..=l {
            let t = row[tri(l) + m];
            if m == 0 {
                v += coeffs[coeff_index(l, 0)] * t;
            } else {
                let mp = m as f64 * phi;
                v += sqrt2 * t * (coeffs[coeff_index(l, m as i64)] * mp.cos()
                    + coeffs[coeff_index(l, -(m as i64))] * mp.sin());
            }
        }
    }
    v
}
