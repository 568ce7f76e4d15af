//! Command line laboratory: build constructions, evaluate energies, run
//! sweeps, fit scaling laws, check hulls and rigidity.
//!
//! Exit codes: 0 success, 2 validation problems, 3 failed checks.

mod parse;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use microlam_core::constructions::{
    build_t3_laminate, build_two_well_branching, simple_laminate, BranchingParams,
    BranchingVariant, T3Params,
};
use microlam_core::energy::{
    elastic_energy_pair, elastic_energy_relaxed, surface_energy, EnergyReport,
};
use microlam_core::geometry::RegionComplex;
use microlam_core::grid::{load_field, save_field, FieldData, Grid, PhaseField, TensorField};
use microlam_core::hulls::{exact_rigidity_search, SEARCH_BUDGET};
use microlam_core::operator::{Operator, RANK_TOL};
use microlam_core::scaling::{
    cone_truncation_profile, fit_scaling, lower_bound_certificate, rigidity_estimate_check,
    run_sweep, Calibration, FitModel, SweepConfig,
};
use microlam_core::wells::{hull_decompose, t3_hull_contains, WellSet};

use parse::num;

#[derive(Parser)]
#[command(name = "microlam", version, about = "microstructure laminate laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a construction and export its fields.
    #[command(subcommand)]
    Build(BuildCmd),
    /// Evaluate energies of a field file.
    #[command(subcommand)]
    Energy(EnergyCmd),
    /// Operator-level queries: wave cones, ranks, divergence rewriting.
    #[command(subcommand)]
    Ops(OpsCmd),
    /// Relaxed-hull queries for the three-state system.
    #[command(subcommand)]
    Hull(HullCmd),
    /// Exact rigidity search on tiny periodic grids.
    #[command(subcommand)]
    Rigidity(RigidityCmd),
    /// Run an energy sweep from a JSON config.
    Sweep(SweepArgs),
    /// Fit a scaling model to sweep output.
    Fit(FitArgs),
    /// Frequency-space diagnostics with calibrated constants.
    #[command(subcommand)]
    Diagnose(DiagnoseCmd),
}

#[derive(Subcommand)]
enum BuildCmd {
    /// Two-state branching construction.
    Branching(BranchingArgs),
    /// Iterated three-state laminate.
    T3(T3Args),
    /// Simple two-state laminate.
    Laminate(LaminateArgs),
}

#[derive(Args)]
struct BranchingArgs {
    /// Cells across the coarsest layer.
    #[arg(long = "N")]
    n: usize,
    #[arg(long, default_value = "0.3")]
    theta: f64,
    #[arg(long, default_value = "0.5", value_parser = parse::scalar)]
    lambda: f64,
    #[arg(long, default_value = "3")]
    dim: usize,
    #[arg(long, value_parser = parse::scalar)]
    eps: f64,
    /// First state (defaults to the compatible reference pair).
    #[arg(long, value_parser = parse::matrix)]
    a: Option<DMatrix<f64>>,
    #[arg(long, value_parser = parse::matrix)]
    b: Option<DMatrix<f64>>,
    /// `two-face` or `all-faces`.
    #[arg(long, default_value = "two-face")]
    variant: String,
    /// Rasterization cells per axis.
    #[arg(long, default_value = "64")]
    grid: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also dump the exact region complex.
    #[arg(long)]
    emit_regions: Option<PathBuf>,
}

#[derive(Args)]
struct T3Args {
    /// Number of lamination stages.
    #[arg(long = "m")]
    stages: usize,
    /// Target pitch ratio (rounded to the admissible lattice), or an
    /// explicit comma list of pitches.
    #[arg(long = "r")]
    ratio: String,
    /// Exterior datum.
    #[arg(long = "F", value_parser = parse::matrix, default_value = "S3")]
    datum: DMatrix<f64>,
    #[arg(long, value_parser = parse::scalar)]
    eps: f64,
    #[arg(long, default_value = "48")]
    grid: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    emit_regions: Option<PathBuf>,
}

#[derive(Args)]
struct LaminateArgs {
    #[arg(long, value_parser = parse::matrix)]
    a: DMatrix<f64>,
    #[arg(long, value_parser = parse::matrix)]
    b: DMatrix<f64>,
    /// Interface normal.
    #[arg(long)]
    xi: String,
    #[arg(long, value_parser = parse::scalar, default_value = "0.5")]
    fraction: f64,
    #[arg(long, default_value = "4")]
    periods: usize,
    #[arg(long, default_value = "3")]
    dim: usize,
    #[arg(long, default_value = "32")]
    grid: usize,
    #[arg(long, value_parser = parse::scalar, default_value = "0")]
    eps: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    emit_regions: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EnergyCmd {
    /// Print the energy table of a field file.
    Eval(EnergyEvalArgs),
}

#[derive(Args)]
struct EnergyEvalArgs {
    field: PathBuf,
    #[arg(long, default_value = "div")]
    op: String,
    #[arg(long, value_parser = parse::scalar, default_value = "0")]
    eps: f64,
    /// Exterior datum override (defaults to the sidecar's datum).
    #[arg(long = "F", value_parser = parse::matrix)]
    datum: Option<DMatrix<f64>>,
}

#[derive(Subcommand)]
enum OpsCmd {
    /// Wave-cone membership of a state.
    WaveCone(WaveConeArgs),
    /// Constant-rank verification over the sphere.
    Rank(RankArgs),
    /// Divergence rewriting of a first-order operator.
    Omega(OmegaArgs),
}

#[derive(Args)]
struct WaveConeArgs {
    #[arg(long, default_value = "div")]
    op: String,
    #[arg(long, value_parser = parse::matrix)]
    mu: DMatrix<f64>,
    #[arg(long, value_parser = parse::scalar, default_value = "1e-8")]
    tol: f64,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long, default_value = "div")]
    op: String,
    #[arg(long, default_value = "500")]
    samples: usize,
}

#[derive(Args)]
struct OmegaArgs {
    #[arg(long, default_value = "div")]
    op: String,
}

#[derive(Subcommand)]
enum HullCmd {
    /// Membership in the relaxed hull.
    Check(HullArgs),
    /// Decomposition into leg points.
    Decompose(HullArgs),
}

#[derive(Args)]
struct HullArgs {
    #[arg(long = "F", value_parser = parse::matrix)]
    datum: DMatrix<f64>,
}

#[derive(Subcommand)]
enum RigidityCmd {
    /// Enumerate admissible exact fields on a tiny periodic grid.
    Search(RigiditySearchArgs),
}

#[derive(Args)]
struct RigiditySearchArgs {
    #[arg(long, default_value = "2")]
    grid: usize,
    /// `t3` or `pair` (the compatible reference pair).
    #[arg(long, default_value = "t3")]
    wells: String,
    #[arg(long, default_value_t = SEARCH_BUDGET)]
    budget: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// `algebraic` or `stretched`.
    #[arg(long)]
    model: String,
    csv: PathBuf,
}

#[derive(Subcommand)]
enum DiagnoseCmd {
    /// Cone-truncation profile of an iterated-laminate field.
    Cones(DiagnoseArgs),
    /// Certified lower bound for the compatible pair.
    Lowerbound(DiagnoseArgs),
    /// Rigidity estimate for the three-state system.
    RigidityEstimate(DiagnoseArgs),
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long, value_parser = parse::scalar, default_value = "1e-3")]
    eps: f64,
    #[arg(long, default_value = "48")]
    grid: usize,
    #[arg(long, value_parser = parse::scalar, default_value = "0.25")]
    nu: f64,
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("MICROLAM_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Build(cmd) => build(cmd),
        Command::Energy(EnergyCmd::Eval(args)) => energy_eval(args),
        Command::Ops(cmd) => ops(cmd),
        Command::Hull(cmd) => hull(cmd),
        Command::Rigidity(RigidityCmd::Search(args)) => rigidity_search(args),
        Command::Sweep(args) => sweep(args),
        Command::Fit(args) => fit(args),
        Command::Diagnose(cmd) => diagnose(cmd),
    }
}

// --- manifest ---------------------------------------------------------------

fn write_manifest(
    out: &Path,
    command: &str,
    params: serde_json::Value,
    calibration: Option<&Calibration>,
    outputs: &[&Path],
) -> Result<()> {
    let manifest = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "params": params,
        "calibration": calibration,
        "outputs": outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    let path = manifest_path(out);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut os = out.as_os_str().to_os_string();
    os.push(".manifest.json");
    os.into()
}

fn u_field_path(out: &Path) -> PathBuf {
    let mut os = out.as_os_str().to_os_string();
    os.push(".u");
    os.into()
}

// --- build ------------------------------------------------------------------

fn emit_regions_json(rc: &RegionComplex, path: &Path) -> Result<()> {
    let regions: Vec<_> = rc
        .regions
        .iter()
        .zip(&rc.volumes)
        .map(|(r, vol)| {
            serde_json::json!({
                "chi": r.chi,
                "volume": vol,
                "constant": r.value.is_constant(),
                "value_at_origin": matrix_rows(&r.value.base),
                "halfspaces": r.halfspaces.iter().map(|h| {
                    serde_json::json!({"normal": h.normal.as_slice(), "offset": h.offset})
                }).collect::<Vec<_>>(),
            })
        })
        .collect();
    let interfaces: Vec<_> = rc
        .interfaces
        .iter()
        .map(|f| {
            serde_json::json!({
                "minus": f.minus,
                "plus": f.plus,
                "normal": f.normal.as_slice(),
                "area": f.area,
                "chi_jump": f.chi_jump,
            })
        })
        .collect();
    let doc = serde_json::json!({
        "dim": rc.dim,
        "regions": regions,
        "interfaces": interfaces,
    });
    std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Rasterizes, saves both fields, prints the energy table, writes a manifest.
fn export_build(
    rc: &RegionComplex,
    datum: &DMatrix<f64>,
    eps: f64,
    grid_cells: usize,
    out: &Path,
    command: &str,
    params: serde_json::Value,
    emit_regions: Option<&Path>,
) -> Result<ExitCode> {
    let op = Operator::divergence(rc.wells.rows(), rc.wells.cols());
    let report = rc.interface_check(&op).map_err(|e| anyhow!("{e}"))?;
    let grid = Grid::new(rc.dim, grid_cells.max(4) & !1).map_err(|e| anyhow!("{e}"))?;
    let (chi, tensor) = rc.rasterize(grid).map_err(|e| anyhow!("{e}"))?;
    save_field(out, &FieldData::Phase(chi.clone())).map_err(|e| anyhow!("{e}"))?;
    let u_path = u_field_path(out);
    save_field(&u_path, &FieldData::Tensor(tensor.clone())).map_err(|e| anyhow!("{e}"))?;
    if let Some(p) = emit_regions {
        emit_regions_json(rc, p)?;
    }

    let table = energy_table(&tensor, &chi, datum, &op, eps)?;
    println!("exact_elastic {}", num(rc.elastic_energy()));
    println!("exact_surface {}", num(rc.surface_energy()));
    println!(
        "jump_check {} max_residual {}",
        if report.pass() { "pass" } else { "FAIL" },
        num(report.max_residual)
    );
    print_energy_table(&table);
    write_manifest(out, command, params, None, &[out, &u_path])?;
    Ok(if report.pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}

fn energy_table(
    tensor: &TensorField,
    chi: &PhaseField,
    datum: &DMatrix<f64>,
    op: &Operator,
    eps: f64,
) -> Result<EnergyReport> {
    let pair = elastic_energy_pair(tensor, chi).map_err(|e| anyhow!("{e}"))?;
    let relaxed = elastic_energy_relaxed(chi, datum, op, false)
        .map_err(|e| anyhow!("{e}"))?
        .total;
    let surf = surface_energy(chi);
    Ok(EnergyReport {
        eps,
        e_el_pair: pair,
        e_el_relaxed: relaxed,
        e_surf: surf,
        e_total: pair + eps * surf,
    })
}

fn print_energy_table(r: &EnergyReport) {
    println!("eps E_el_pair E_el_relaxed E_surf E_total");
    println!(
        "{} {} {} {} {}",
        num(r.eps),
        num(r.e_el_pair),
        num(r.e_el_relaxed),
        num(r.e_surf),
        num(r.e_total)
    );
}

fn build(cmd: BuildCmd) -> Result<ExitCode> {
    match cmd {
        BuildCmd::Branching(args) => {
            let wells = WellSet::t3();
            let a = args.a.unwrap_or_else(|| wells.well(0));
            let b = args.b.unwrap_or_else(|| wells.s(0));
            let variant = match args.variant.as_str() {
                "two-face" => BranchingVariant::TwoFace,
                "all-faces" => BranchingVariant::AllFaces,
                other => bail!("unknown variant '{other}'"),
            };
            let params = BranchingParams {
                n: args.n,
                theta: args.theta,
                lambda: args.lambda,
                dim: args.dim,
                a: a.clone(),
                b: b.clone(),
            };
            let build = build_two_well_branching(&params, args.eps, variant)
                .map_err(|e| anyhow!("{e}"))?;
            let datum = &a * args.lambda + &b * (1.0 - args.lambda);
            println!("layers {}", build.layers);
            println!("bound_shape {}", num(build.bound_shape));
            export_build(
                &build.complex,
                &datum,
                args.eps,
                args.grid,
                &args.out,
                "build branching",
                serde_json::json!({
                    "N": args.n, "theta": args.theta, "lambda": args.lambda,
                    "dim": args.dim, "eps": args.eps, "variant": args.variant,
                    "grid": args.grid,
                }),
                args.emit_regions.as_deref(),
            )
        }
        BuildCmd::T3(args) => {
            let scales: Vec<f64> = if args.ratio.contains(',') {
                args.ratio
                    .split(',')
                    .map(parse::scalar)
                    .collect::<Result<_>>()?
            } else {
                let ratio = parse::scalar(&args.ratio)?;
                microlam_core::constructions::admissible_scales(ratio, args.stages)
                    .map_err(|e| anyhow!("{e}"))?
            };
            let build = build_t3_laminate(&args.datum, &T3Params { scales: scales.clone() }, true)
                .map_err(|e| anyhow!("{e}"))?;
            let rc = build.complex.as_ref().expect("materialized build");
            println!(
                "scales {}",
                scales.iter().map(|s| num(*s)).collect::<Vec<_>>().join(",")
            );
            println!("ledger_elastic_shape {}", num(build.ledger.elastic_shape));
            println!("ledger_surface_shape {}", num(build.ledger.surface_shape));
            export_build(
                rc,
                &args.datum,
                args.eps,
                args.grid,
                &args.out,
                "build t3",
                serde_json::json!({
                    "m": args.stages, "scales": scales, "eps": args.eps,
                    "grid": args.grid,
                }),
                args.emit_regions.as_deref(),
            )
        }
        BuildCmd::Laminate(args) => {
            let op = Operator::divergence(args.a.nrows(), args.a.ncols());
            let xi = parse::vector(&args.xi, args.dim)?;
            let rc = simple_laminate(&op, &args.a, &args.b, &xi, args.fraction, args.periods)
                .map_err(|e| anyhow!("{e}"))?;
            let datum = &args.a * args.fraction + &args.b * (1.0 - args.fraction);
            export_build(
                &rc,
                &datum,
                args.eps,
                args.grid,
                &args.out,
                "build laminate",
                serde_json::json!({
                    "fraction": args.fraction, "periods": args.periods,
                    "dim": args.dim, "grid": args.grid,
                }),
                args.emit_regions.as_deref(),
            )
        }
    }
}

// --- energy eval --------------------------------------------------------------

fn energy_eval(args: EnergyEvalArgs) -> Result<ExitCode> {
    let field = load_field(&args.field).map_err(|e| anyhow!("{e}"))?;
    let chi = match field {
        FieldData::Phase(p) => p,
        FieldData::Tensor(_) => bail!("energy eval expects a phase field (with wells sidecar)"),
    };
    let datum = match args.datum {
        Some(f) => f,
        None => chi
            .wells
            .boundary_matrix()
            .ok_or_else(|| anyhow!("no exterior datum in sidecar; pass --F"))?,
    };
    let op = if args.op == "div" {
        Operator::divergence(chi.wells.rows(), chi.wells.cols())
    } else {
        Operator::by_name(&args.op).map_err(|e| anyhow!("{e}"))?
    };
    // Pair energy against the stored deformation, when present.
    let u_path = u_field_path(&args.field);
    let tensor = if u_path.exists() {
        match load_field(&u_path).map_err(|e| anyhow!("{e}"))? {
            FieldData::Tensor(t) => Some(t),
            _ => None,
        }
    } else {
        None
    };
    let tensor = tensor.unwrap_or_else(|| chi.as_tensor());
    let table = energy_table(&tensor, &chi, &datum, &op, args.eps)?;
    print_energy_table(&table);
    Ok(ExitCode::SUCCESS)
}

// --- ops ------------------------------------------------------------------------

fn ops(cmd: OpsCmd) -> Result<ExitCode> {
    match cmd {
        OpsCmd::WaveCone(args) => {
            let op = Operator::by_name(&args.op).map_err(|e| anyhow!("{e}"))?;
            let mu = microlam_core::la::flatten(&args.mu);
            let cert = op
                .wave_cone_contains(&mu, args.tol)
                .map_err(|e| anyhow!("{e}"))?;
            println!("member {}", cert.member);
            println!("residual {}", num(cert.residual));
            if let Some(dir) = &cert.direction {
                let comps: Vec<String> = dir.iter().map(|v| num(*v)).collect();
                println!("direction {}", comps.join(","));
            }
            Ok(ExitCode::SUCCESS)
        }
        OpsCmd::Rank(args) => {
            let op = Operator::by_name(&args.op).map_err(|e| anyhow!("{e}"))?;
            let check = op
                .constant_rank(args.samples, RANK_TOL)
                .map_err(|e| anyhow!("{e}"))?;
            println!(
                "constant_rank {} min {} max {}",
                check.constant, check.min_rank, check.max_rank
            );
            Ok(if check.constant {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            })
        }
        OpsCmd::Omega(args) => {
            let op = Operator::by_name(&args.op).map_err(|e| anyhow!("{e}"))?;
            let red = op.omega_reduction().map_err(|e| anyhow!("{e}"))?;
            println!("probe_residual {}", num(red.probe_residual));
            println!("kernel_dim {}", red.kernel().len());
            for k in red.kernel() {
                let comps: Vec<String> = k.iter().map(|v| num(*v)).collect();
                println!("kernel {}", comps.join(","));
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

// --- hull -------------------------------------------------------------------------

fn hull(cmd: HullCmd) -> Result<ExitCode> {
    match cmd {
        HullCmd::Check(args) => match t3_hull_contains(&args.datum) {
            Some(witness) => {
                println!("inside true");
                println!("witness {witness:?}");
                Ok(ExitCode::SUCCESS)
            }
            None => {
                println!("inside false");
                Ok(ExitCode::from(3))
            }
        },
        HullCmd::Decompose(args) => match hull_decompose(&args.datum) {
            Ok(dec) => {
                println!("decomposition {dec:?}");
                let back = microlam_core::wells::recompose(&dec);
                println!("recompose_error {}", num((back - &args.datum).norm()));
                Ok(ExitCode::SUCCESS)
            }
            Err(e) => {
                eprintln!("error: {e}");
                Ok(ExitCode::from(2))
            }
        },
    }
}

// --- rigidity ------------------------------------------------------------------------

fn rigidity_search(args: RigiditySearchArgs) -> Result<ExitCode> {
    let wells = match args.wells.as_str() {
        "t3" => WellSet::t3(),
        "pair" => {
            let t3 = WellSet::t3();
            WellSet::pair(t3.well(0), t3.s(0), 0.5)
        }
        other => bail!("unknown well set '{other}' (use t3 or pair)"),
    };
    let grid = Grid::new(3, args.grid).map_err(|e| anyhow!("{e}"))?;
    let op = Operator::divergence(wells.rows(), wells.cols());
    let fields =
        exact_rigidity_search(&grid, &wells, &op, args.budget).map_err(|e| anyhow!("{e}"))?;
    println!("admissible_fields {}", fields.len());
    let constants = fields
        .iter()
        .filter(|f| f.iter().all(|l| *l == f[0]))
        .count();
    println!("constant_fields {constants}");
    Ok(ExitCode::SUCCESS)
}

// --- sweep / fit ------------------------------------------------------------------------

fn sweep(args: SweepArgs) -> Result<ExitCode> {
    let cfg: SweepConfig = serde_json::from_str(
        &std::fs::read_to_string(&args.config)
            .with_context(|| format!("reading {}", args.config.display()))?,
    )?;
    let cal = Calibration::reference().map_err(|e| anyhow!("calibration: {e}"))?;
    let rows = run_sweep(&cfg, &cal).map_err(|e| anyhow!("{e}"))?;
    let mut csv = String::from("eps,params,E_el_pair,E_el_relaxed,E_surf,E_total,checks\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            num(r.eps),
            r.params,
            num(r.e_el_pair),
            num(r.e_el_relaxed),
            num(r.e_surf),
            num(r.e_total),
            r.checks
        ));
    }
    let mut file = std::fs::File::create(&args.out)?;
    file.write_all(csv.as_bytes())?;
    write_manifest(
        &args.out,
        "sweep",
        serde_json::to_value(&cfg)?,
        Some(&cal),
        &[&args.out],
    )?;
    let ok = rows.iter().all(|r| !r.checks.contains("FAIL") && !r.checks.contains("row-failed"));
    println!("rows {}", rows.len());
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(3) })
}

fn fit(args: FitArgs) -> Result<ExitCode> {
    let model = match args.model.as_str() {
        "algebraic" => FitModel::Algebraic,
        "stretched" => FitModel::Stretched,
        other => bail!("unknown model '{other}'"),
    };
    let text = std::fs::read_to_string(&args.csv)
        .with_context(|| format!("reading {}", args.csv.display()))?;
    let mut pts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 6 {
            bail!("line {} has too few columns", i + 1);
        }
        let eps: f64 = cols[0].parse().context("bad eps column")?;
        let total: f64 = cols[5].parse().context("bad E_total column")?;
        pts.push((eps, total));
    }
    let fit = fit_scaling(&pts, model).map_err(|e| anyhow!("{e}"))?;
    println!("model {:?}", fit.model);
    println!("amplitude {}", num(fit.amplitude));
    println!("rate {}", num(fit.rate));
    println!("r_squared {}", num(fit.r_squared));
    Ok(ExitCode::SUCCESS)
}

// --- diagnostics ------------------------------------------------------------------------

fn diagnose(cmd: DiagnoseCmd) -> Result<ExitCode> {
    let cal = Calibration::reference().map_err(|e| anyhow!("calibration: {e}"))?;
    match cmd {
        DiagnoseCmd::Lowerbound(args) => {
            let wells = WellSet::t3();
            let n = args.eps.powf(-1.0 / 3.0).round().max(2.0) as usize;
            let params = BranchingParams {
                n,
                theta: 0.3,
                lambda: 0.5,
                dim: 3,
                a: wells.well(0),
                b: wells.s(0),
            };
            let build = build_two_well_branching(&params, args.eps, BranchingVariant::TwoFace)
                .map_err(|e| anyhow!("{e}"))?;
            let grid = Grid::new(3, args.grid.max(4) & !1).map_err(|e| anyhow!("{e}"))?;
            let (chi, _) = build.complex.rasterize(grid).map_err(|e| anyhow!("{e}"))?;
            let datum = chi.wells.boundary_matrix().expect("pair datum");
            let op = Operator::divergence(3, 3);
            let report = lower_bound_certificate(&chi, &datum, &op, args.eps, &cal)
                .map_err(|e| anyhow!("{e}"))?;
            println!("certified {}", num(report.certified));
            println!("measured {}", num(report.measured));
            println!("imbalance {}", num(report.imbalance));
            println!("degenerate {}", report.degenerate);
            println!("pass {}", report.pass);
            Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::from(3) })
        }
        DiagnoseCmd::RigidityEstimate(args) => {
            let wells = WellSet::t3();
            let scales =
                microlam_core::constructions::admissible_scales(0.2, 2).map_err(|e| anyhow!("{e}"))?;
            let build = build_t3_laminate(&wells.s(2), &T3Params { scales }, true)
                .map_err(|e| anyhow!("{e}"))?;
            let rc = build.complex.as_ref().expect("materialized");
            let grid = Grid::new(3, args.grid.max(4) & !1).map_err(|e| anyhow!("{e}"))?;
            let (chi, _) = rc.rasterize(grid).map_err(|e| anyhow!("{e}"))?;
            let c_nu = cal.rigidity_c.expect("calibrated");
            let check = rigidity_estimate_check(&chi, &wells.s(2), args.eps, c_nu, args.nu)
                .map_err(|e| anyhow!("{e}"))?;
            println!("lhs {}", num(check.lhs));
            println!("rhs {}", num(check.rhs));
            println!("required_rate {}", num(check.required_rate));
            println!("recorded_rate {}", num(c_nu));
            println!("pass {}", check.pass);
            Ok(if check.pass { ExitCode::SUCCESS } else { ExitCode::from(3) })
        }
        DiagnoseCmd::Cones(args) => {
            let wells = WellSet::t3();
            let scales =
                microlam_core::constructions::admissible_scales(0.2, 2).map_err(|e| anyhow!("{e}"))?;
            let build = build_t3_laminate(&wells.s(2), &T3Params { scales }, true)
                .map_err(|e| anyhow!("{e}"))?;
            let rc = build.complex.as_ref().expect("materialized");
            let grid = Grid::new(3, args.grid.max(4) & !1).map_err(|e| anyhow!("{e}"))?;
            let (chi, _) = rc.rasterize(grid).map_err(|e| anyhow!("{e}"))?;
            let rows = cone_truncation_profile(&chi, &wells.s(2), args.eps, args.nu, &cal, 8)
                .map_err(|e| anyhow!("{e}"))?;
            println!("step radius error_sharp error_smooth envelope");
            for r in &rows {
                println!(
                    "{} {} {} {} {}",
                    r.step,
                    num(r.radius),
                    num(r.error_sharp),
                    num(r.error_smooth),
                    num(r.envelope)
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
