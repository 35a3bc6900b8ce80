//! Output artifacts. Everything written here is deterministic: floats use
//! the shortest representation that round-trips, comment headers carry the
//! configuration hash instead of timestamps, and column orders are fixed,
//! so a rerun of the same configuration is byte-for-byte identical.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use willmore_core::error::{Error, Result};
use willmore_core::experiments::{ConvergenceTable, GradientTable, HawkingTable, SlopeFit};
use willmore_core::optimize::HistoryRow;
use willmore_core::sph;
use willmore_core::verify::SuiteReport;
use willmore_core::{FunctionalReport, SphereParam, SurfaceGeometry};

/// Provenance lines placed at the top of every CSV file as `#` comments.
pub struct CsvMeta<'a> {
    pub config_hash: &'a str,
    /// Human-readable notes, one comment line each (command, overrides).
    pub notes: &'a [String],
}

fn header(meta: &CsvMeta) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# wlab {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "# config sha256 {}", meta.config_hash);
    for note in meta.notes {
        let _ = writeln!(s, "# {note}");
    }
    s
}

/// Shortest round-trip formatting; non-finite values spelled out so the
/// schema never emits an empty numeric cell by accident.
fn fmt(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::Validation(format!("output dir {}: {e}", dir.display())))?;
    }
    std::fs::write(path, text)
        .map_err(|e| Error::Validation(format!("write {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Surfaces and reports
// ---------------------------------------------------------------------------

pub fn read_surface(path: &Path) -> Result<SphereParam> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("surface file {}: {e}", path.display())))?;
    let param: SphereParam = toml::from_str(&text)
        .map_err(|e| Error::Parse(format!("surface file {}: {e}", path.display())))?;
    param.validate()?;
    Ok(param)
}

pub fn write_surface(path: &Path, param: &SphereParam) -> Result<()> {
    let text = toml::to_string(param)
        .map_err(|e| Error::Parse(format!("serialize surface: {e}")))?;
    write_text(path, &text)
}

pub fn write_report(path: &Path, rep: &FunctionalReport) -> Result<()> {
    let text =
        toml::to_string(rep).map_err(|e| Error::Parse(format!("serialize report: {e}")))?;
    write_text(path, &text)
}

/// Key-value rendering of a report for stdout, in a fixed order.
pub fn report_text(rep: &FunctionalReport) -> String {
    let mut s = String::new();
    let kv = [
        ("w", rep.w),
        ("u", rep.u),
        ("v", rep.v),
        ("area", rep.area),
        ("splitting_residual", rep.splitting_residual),
        ("lambda_lsq", rep.lambda_lsq),
        ("el_residual", rep.el_residual),
        ("hawking", rep.hawking),
        ("vol", rep.vol),
        ("vol_euclid", rep.vol_euclid),
        ("re", rep.re),
        ("roundness_h", rep.roundness_h),
        ("roundness_atf", rep.roundness_atf),
        ("ricci_avg", rep.ricci_avg),
        ("min_h", rep.min_h),
    ];
    let _ = writeln!(s, "genus = {}", rep.genus);
    for (k, v) in kv {
        let _ = writeln!(s, "{k} = {}", fmt(v));
    }
    let _ = writeln!(s, "lambda_id = {}", fmt_opt(rep.lambda_id));
    let _ = writeln!(s, "grad_log_h_sq = {}", fmt_opt(rep.grad_log_h_sq));
    let _ = writeln!(s, "ae = [{}, {}, {}]", fmt(rep.ae[0]), fmt(rep.ae[1]), fmt(rep.ae[2]));
    s
}

/// Single-row CSV rendering of a report.
pub fn report_csv(rep: &FunctionalReport) -> String {
    let mut s = String::from(
        "w,u,v,area,genus,splitting_residual,lambda_id,lambda_lsq,el_residual,hawking,vol,vol_euclid,re,ae_x,ae_y,ae_z,roundness_h,roundness_atf,ricci_avg,grad_log_h_sq,min_h\n",
    );
    let _ = writeln!(
        s,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        fmt(rep.w),
        fmt(rep.u),
        fmt(rep.v),
        fmt(rep.area),
        rep.genus,
        fmt(rep.splitting_residual),
        fmt_opt(rep.lambda_id),
        fmt(rep.lambda_lsq),
        fmt(rep.el_residual),
        fmt(rep.hawking),
        fmt(rep.vol),
        fmt(rep.vol_euclid),
        fmt(rep.re),
        fmt(rep.ae[0]),
        fmt(rep.ae[1]),
        fmt(rep.ae[2]),
        fmt(rep.roundness_h),
        fmt(rep.roundness_atf),
        fmt(rep.ricci_avg),
        fmt_opt(rep.grad_log_h_sq),
        fmt(rep.min_h)
    );
    s
}

// ---------------------------------------------------------------------------
// CSV tables
// ---------------------------------------------------------------------------

pub fn write_history_csv(path: &Path, rows: &[HistoryRow], meta: &CsvMeta) -> Result<()> {
    let mut s = header(meta);
    s.push_str("iter,w,area,el_residual,lambda_estimate\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.iter,
            fmt(r.w),
            fmt(r.area),
            fmt(r.el_residual),
            fmt(r.lambda_estimate)
        );
    }
    write_text(path, &s)
}

pub fn write_sweep_csv(path: &Path, table: &ConvergenceTable, meta: &CsvMeta) -> Result<()> {
    let mut s = header(meta);
    s.push_str(
        "r,area,w,u,v,lambda,hawking,vol,min_h,eps_implied,converged,d_w,d_lambda,d_ric,d_vol,floor_w,floor_lambda,floor_ric,floor_vol\n",
    );
    for row in &table.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt(row.r),
            fmt(row.area),
            fmt(row.w),
            fmt(row.u),
            fmt(row.v),
            fmt(row.lambda),
            fmt(row.hawking),
            fmt(row.vol),
            fmt(row.min_h),
            fmt(row.eps_implied),
            row.converged,
            fmt(row.d_w),
            fmt(row.d_lambda),
            fmt(row.d_ric),
            fmt(row.d_vol),
            fmt(row.floor_w),
            fmt(row.floor_lambda),
            fmt(row.floor_ric),
            fmt(row.floor_vol)
        );
    }
    write_text(path, &s)
}

pub fn write_gradient_csv(path: &Path, table: &GradientTable, meta: &CsvMeta) -> Result<()> {
    let mut s = header(meta);
    s.push_str(
        "r,area,vol,dv,leading,err,ratio,bound_const,err_refined,ratio_refined,bound_const_refined\n",
    );
    for row in &table.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            fmt(row.r),
            fmt(row.area),
            fmt(row.vol),
            fmt(row.dv),
            fmt(row.leading),
            fmt(row.err),
            fmt_opt(row.ratio),
            fmt(row.bound_const),
            fmt(row.err_refined),
            fmt_opt(row.ratio_refined),
            fmt(row.bound_const_refined)
        );
    }
    write_text(path, &s)
}

pub fn write_hawking_csv(path: &Path, table: &HawkingTable, meta: &CsvMeta) -> Result<()> {
    let mut s = header(meta);
    s.push_str("r,area,m_h,vol,ratio,deficit,floor\n");
    for row in &table.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            fmt(row.r),
            fmt(row.area),
            fmt(row.m_h),
            fmt(row.vol),
            fmt(row.ratio),
            fmt(row.deficit),
            fmt(row.floor)
        );
    }
    write_text(path, &s)
}

// ---------------------------------------------------------------------------
// Slope summaries
// ---------------------------------------------------------------------------

/// One fitted order compared against its expected floor, TOML-friendly.
#[derive(Debug, Serialize)]
pub struct OrderCheck {
    pub name: String,
    pub expected: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope_refined: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rms_residual: Option<f64>,
    pub n_used: usize,
    pub n_floor_dropped: usize,
    pub superconvergent: bool,
    pub floor_limited: bool,
    pub met: bool,
}

impl OrderCheck {
    pub fn from_fit(fit: &SlopeFit, expected: f64) -> Self {
        OrderCheck {
            name: fit.name.clone(),
            expected,
            slope: fit.slope,
            slope_refined: fit.slope_refined,
            rms_residual: fit.rms_residual,
            n_used: fit.n_used,
            n_floor_dropped: fit.n_floor_dropped,
            superconvergent: fit.superconvergent,
            floor_limited: fit.floor_limited,
            met: fit.meets_order(expected),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SweepSummary {
    pub scal0: f64,
    pub rows: usize,
    pub converged_rows: usize,
    pub all_met: bool,
    pub orders: Vec<OrderCheck>,
}

/// Expected orders for the four sweep deficit columns.
pub const SWEEP_EXPECTED: [(&str, f64); 4] =
    [("d_w", 3.0), ("d_lambda", 1.0), ("d_ric", 1.0), ("d_vol_rel", 2.0)];

pub fn sweep_summary(table: &ConvergenceTable) -> SweepSummary {
    let orders: Vec<OrderCheck> = SWEEP_EXPECTED
        .iter()
        .filter_map(|(name, want)| table.slope(name).map(|fit| OrderCheck::from_fit(fit, *want)))
        .collect();
    SweepSummary {
        scal0: table.scal0,
        rows: table.rows.len(),
        converged_rows: table.rows.iter().filter(|r| r.converged).count(),
        all_met: orders.iter().all(|o| o.met),
        orders,
    }
}

#[derive(Debug, Serialize)]
pub struct GradientSummary {
    pub b: [f64; 3],
    pub s: [f64; 3],
    pub rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio_order: Option<OrderCheck>,
}

pub fn gradient_summary(table: &GradientTable) -> GradientSummary {
    GradientSummary {
        b: table.b,
        s: table.s,
        rows: table.rows.len(),
        ratio_order: table.ratio_order.as_ref().map(|fit| OrderCheck::from_fit(fit, 0.8)),
    }
}

#[derive(Debug, Serialize)]
pub struct HawkingSummary {
    pub target: f64,
    pub rows: usize,
    pub order: OrderCheck,
}

pub fn hawking_summary(table: &HawkingTable) -> HawkingSummary {
    HawkingSummary {
        target: table.target,
        rows: table.rows.len(),
        order: OrderCheck::from_fit(&table.order, 1.0),
    }
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text =
        toml::to_string(value).map_err(|e| Error::Parse(format!("serialize summary: {e}")))?;
    write_text(path, &text)
}

/// Plain-text rendering of the identity suites for stdout.
pub fn suites_text(reports: &[SuiteReport]) -> String {
    let mut s = String::new();
    for rep in reports {
        let _ = writeln!(
            s,
            "suite {:<11} {} ({} checks)",
            rep.suite,
            if rep.passed { "pass" } else { "FAIL" },
            rep.checks.len()
        );
        for c in &rep.checks {
            let _ = writeln!(
                s,
                "  {:<24} value {:>12.5e}  bound {:>12.5e}  {}",
                c.name,
                c.value,
                c.bound,
                if c.pass { "pass" } else { "FAIL" }
            );
        }
    }
    s
}

// ---------------------------------------------------------------------------
// Mesh export
// ---------------------------------------------------------------------------

/// Wavefront OBJ export of the evaluation grid, with the two poles (which
/// the Gauss-Legendre grid never samples) added by direct evaluation so the
/// mesh is watertight.
pub fn export_obj(path: &Path, geom: &SurfaceGeometry, param: &SphereParam) -> Result<()> {
    let nt = geom.grid.n_theta;
    let np = geom.grid.n_phi;
    let mut s = String::new();
    let pole = |theta: f64| -> [f64; 3] {
        let mut p = [0.0; 3];
        for c in 0..3 {
            p[c] = sph::eval_at(&param.coeffs[c], param.l_max, theta, 0.0);
        }
        p
    };
    let north = pole(0.0);
    let south = pole(std::f64::consts::PI);
    let _ = writeln!(s, "v {} {} {}", fmt(north[0]), fmt(north[1]), fmt(north[2]));
    for n in 0..geom.n_nodes() {
        let p = geom.pos[n];
        let _ = writeln!(s, "v {} {} {}", fmt(p[0]), fmt(p[1]), fmt(p[2]));
    }
    let _ = writeln!(s, "v {} {} {}", fmt(south[0]), fmt(south[1]), fmt(south[2]));
    // 1-based indices: north pole 1, node(i, j) at 2 + i*np + j, south last.
    let node = |i: usize, j: usize| 2 + i * np + (j % np);
    let south_idx = 2 + nt * np;
    for j in 0..np {
        let _ = writeln!(s, "f 1 {} {}", node(0, j + 1), node(0, j));
    }
    for i in 0..nt - 1 {
        for j in 0..np {
            let _ = writeln!(
                s,
                "f {} {} {} {}",
                node(i, j),
                node(i, j + 1),
                node(i + 1, j + 1),
                node(i + 1, j)
            );
        }
    }
    for j in 0..np {
        let _ = writeln!(s, "f {} {} {}", south_idx, node(nt - 1, j), node(nt - 1, j + 1));
    }
    write_text(path, &s)
}
