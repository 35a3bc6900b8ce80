//! wlab: evaluate, minimize, sweep, and verify Willmore-type surfaces in
//! curved background metrics, driven by TOML run configurations.
//!
//! Exit codes: 0 on success, 2 for configuration and validation problems,
//! 3 for numerical failures (non-convergence, loss of H > 0, identity
//! suite failures). All file output is deterministic; rerunning a command
//! with the same configuration reproduces every artifact byte for byte.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;

use willmore_core::error::Error;
use willmore_core::{experiments, functionals, optimize, verify};

mod config;
mod files;

use config::{Loaded, OutputFormat};
use files::CsvMeta;

#[derive(Parser)]
#[command(
    name = "wlab",
    version,
    about = "Willmore-type surfaces in curved background metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print geometric diagnostics of the configured surface
    Geom(CommonArgs),
    /// Evaluate the full functional report on the configured surface
    Energy(CommonArgs),
    /// Minimize bending energy at fixed area; writes surface, report, history
    Minimize(CommonArgs),
    /// Radius-ladder convergence sweep; writes CSV table and slope summary
    Sweep(CommonArgs),
    /// Curvature-gradient obstruction experiment
    Gradient(CommonArgs),
    /// Hawking-mass ratio experiment
    Hawking(CommonArgs),
    /// Run the identity suites (splitting, gauss, divergence, variation)
    Verify(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// Override the inline surface radius
    #[arg(long)]
    radius: Option<f64>,
    /// Override the band limit (inline surface, or ladder for experiments)
    #[arg(long = "band-limit")]
    band_limit: Option<usize>,
    /// Override the optimizer area target
    #[arg(long)]
    area: Option<f64>,
    /// Override the output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a Wavefront OBJ mesh of the surface
    #[arg(long)]
    export_mesh: bool,
    /// Size of the worker thread pool (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("wlab: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Validation(_)
        | Error::Domain(_)
        | Error::Parse(_)
        | Error::Io(_)
        | Error::GridMismatch { .. } => 2,
        Error::Immersion(_)
        | Error::Hypothesis(_)
        | Error::GradientCheck { .. }
        | Error::NonFinite(_) => 3,
    }
}

fn dispatch(cli: &Cli) -> Result<ExitCode, Error> {
    let (name, args) = match &cli.command {
        Cmd::Geom(a) => ("geom", a),
        Cmd::Energy(a) => ("energy", a),
        Cmd::Minimize(a) => ("minimize", a),
        Cmd::Sweep(a) => ("sweep", a),
        Cmd::Gradient(a) => ("gradient", a),
        Cmd::Hawking(a) => ("hawking", a),
        Cmd::Verify(a) => ("verify", a),
    };
    if let Some(t) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Validation(format!("--threads: {e}")))?;
    }
    let loaded = config::load(&args.config)?;
    match name {
        "geom" => cmd_geom(args, &loaded),
        "energy" => cmd_energy(args, &loaded),
        "minimize" => cmd_minimize(args, &loaded),
        "sweep" => cmd_sweep(args, &loaded),
        "gradient" => cmd_gradient(args, &loaded),
        "hawking" => cmd_hawking(args, &loaded),
        _ => cmd_verify(args, &loaded),
    }
}

fn out_dir(args: &CommonArgs, loaded: &Loaded) -> PathBuf {
    args.out.clone().unwrap_or_else(|| loaded.cfg.output.dir.clone())
}

/// Comment lines for CSV headers: the command and any active overrides.
/// No timestamps anywhere, reruns must be byte-identical.
fn notes(name: &str, args: &CommonArgs) -> Vec<String> {
    let mut n = vec![format!("command {name}")];
    if let Some(r) = args.radius {
        n.push(format!("override radius {r}"));
    }
    if let Some(l) = args.band_limit {
        n.push(format!("override band-limit {l}"));
    }
    if let Some(a) = args.area {
        n.push(format!("override area {a}"));
    }
    n
}

fn cmd_geom(args: &CommonArgs, loaded: &Loaded) -> Result<ExitCode, Error> {
    let cfg = &loaded.cfg;
    let model = cfg.metric.build()?;
    let param = cfg.surface.build(&loaded.base_dir, args.radius, args.band_limit)?;
    let geom = param.geometry(&model)?;
    let fit = functionals::sphere_fit(&geom);
    println!("band_limit = {}", param.l_max);
    println!("grid = {}x{}", param.n_theta, param.n_phi);
    println!("area = {}", geom.area);
    println!("area_euclid = {}", geom.area_euclid);
    println!("min_h = {}", geom.min_h);
    println!("max_h = {}", geom.max_h);
    println!("re = {}", fit.re);
    println!("ae = [{}, {}, {}]", fit.ae[0], fit.ae[1], fit.ae[2]);
    println!("roundness_h = {}", fit.roundness_h);
    println!("roundness_atf = {}", fit.roundness_atf);
    if args.export_mesh {
        files::export_obj(&out_dir(args, loaded).join("surface.obj"), &geom, &param)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_energy(args: &CommonArgs, loaded: &Loaded) -> Result<ExitCode, Error> {
    let cfg = &loaded.cfg;
    let model = cfg.metric.build()?;
    let param = cfg.surface.build(&loaded.base_dir, args.radius, args.band_limit)?;
    let geom = param.geometry(&model)?;
    let rep = functionals::evaluate(&geom, &model)?;
    match cfg.output.format {
        OutputFormat::StructuredText => print!("{}", files::report_text(&rep)),
        OutputFormat::Csv => print!("{}", files::report_csv(&rep)),
    }
    if args.export_mesh {
        files::export_obj(&out_dir(args, loaded).join("surface.obj"), &geom, &param)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_minimize(args: &CommonArgs, loaded: &Loaded) -> Result<ExitCode, Error> {
    let cfg = &loaded.cfg;
    let model = cfg.metric.build()?;
    let init = cfg.surface.build(&loaded.base_dir, args.radius, args.band_limit)?;
    let mut opts = cfg.optimizer.clone();
    if let Some(a) = args.area {
        opts.area_target = a;
    }
    let sol = optimize::solve(&model, &init, &opts)?;
    let dir = out_dir(args, loaded);
    let meta = CsvMeta { config_hash: &loaded.hash, notes: &notes("minimize", args) };
    files::write_surface(&dir.join("surface.toml"), &sol.surface)?;
    files::write_report(&dir.join("report.toml"), &sol.report)?;
    files::write_history_csv(&dir.join("history.csv"), &sol.history, &meta)?;
    if args.export_mesh {
        let geom = sol.surface.geometry(&model)?;
        files::export_obj(&dir.join("surface.obj"), &geom, &sol.surface)?;
    }
    println!("converged = {}", sol.converged);
    println!("iterations = {}", sol.history.len().saturating_sub(1));
    println!("w = {}", sol.report.w);
    println!("area = {}", sol.report.area);
    println!("lambda = {}", sol.lambda);
    println!("el_residual = {}", sol.report.el_residual);
    println!("min_h = {}", sol.report.min_h);
    if sol.converged {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("wlab: minimize did not converge within the configured budget");
        Ok(ExitCode::from(3))
    }
}

fn cmd_sweep(args: &CommonArgs, loaded: &Loaded) -> Result<ExitCode, Error> {
    let cfg = &loaded.cfg;
    let model = cfg.metric.build()?;
    let spec = cfg.sweep.to_spec(model, cfg.optimizer.clone(), args.band_limit);
    let table = experiments::sweep(&spec)?;
    let dir = out_dir(args, loaded);
    let meta_notes = notes("sweep", args);
    let meta = CsvMeta { config_hash: &loaded.hash, notes: &meta_notes };
    files::write_sweep_csv(&dir.join("sweep.csv"), &table, &meta)?;
    let summary = files::sweep_summary(&table);
    files::write_toml(&dir.join("sweep_summary.toml"), &summary)?;
    for check in &summary.orders {
        println!(
            "{}: slope {} (expected >= {}) {}",
            check.name,
            check
                .slope
                .map(|s| format!("{s:.3}"))
                .unwrap_or_else(|| "below floor".into()),
            check.expected,
            if check.met { "pass" } else { "FAIL" }
        );
    }
    if table.rows.iter().all(|r| r.converged) {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("wlab: sweep finished with failed rungs (see sweep.csv markers)");
        Ok(ExitCode::from(3))
    }
}

fn cmd_gradient(args: &CommonArgs, loaded: &Loaded) -> Result<ExitCode, Error> {
    let cfg = &loaded.cfg;
    let model = cfg.metric.build()?;
    let radii = cfg.gradient.radii.clone().unwrap_or_else(|| cfg.sweep.radii.clone());
    let b = cfg.gradient.b.map(Vector3::from);
    let table = experiments::gradient_experiment(
        &model,
        &radii,
        b,
        args.band_limit.unwrap_or(cfg.sweep.band_limit),
        cfg.sweep.n_theta,
        cfg.sweep.n_phi,
    )?;
    let dir = out_dir(args, loaded);
    let meta_notes = notes("gradient", args);
    let meta = CsvMeta { config_hash: &loaded.hash, notes: &meta_notes };
    files::write_gradient_csv(&dir.join("gradient.csv"), &table, &meta)?;
    files::write_toml(&dir.join("gradient_summary.toml"), &files::gradient_summary(&table))?;
    for row in &table.rows {
        println!(
            "r = {}  err = {}  ratio = {}",
            row.r,
            row.err,
            row.ratio.map(|v| v.to_string()).unwrap_or_else(|| "n/a".into())
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_hawking(args: &CommonArgs, loaded: &Loaded) -> Result<ExitCode, Error> {
    let cfg = &loaded.cfg;
    let model = cfg.metric.build()?;
    let table = experiments::hawking_experiment(
        &model,
        &cfg.sweep.radii,
        args.band_limit.unwrap_or(cfg.sweep.band_limit),
        cfg.sweep.n_theta,
        cfg.sweep.n_phi,
    )?;
    let dir = out_dir(args, loaded);
    let meta_notes = notes("hawking", args);
    let meta = CsvMeta { config_hash: &loaded.hash, notes: &meta_notes };
    files::write_hawking_csv(&dir.join("hawking.csv"), &table, &meta)?;
    files::write_toml(&dir.join("hawking_summary.toml"), &files::hawking_summary(&table))?;
    println!("target = {}", table.target);
    for row in &table.rows {
        println!("r = {}  ratio = {}  deficit = {}", row.r, row.ratio, row.deficit);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(_args: &CommonArgs, loaded: &Loaded) -> Result<ExitCode, Error> {
    let cfg = &loaded.cfg;
    let model = cfg.metric.build()?;
    let reports = verify::run_all(&model, &cfg.verify.build())?;
    print!("{}", files::suites_text(&reports));
    if reports.iter().all(|r| r.passed) {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("wlab: identity suite failure");
        Ok(ExitCode::from(3))
    }
}
