//! `racloraks`: simulate, reconstruct, evaluate and inspect dual-polarity
//! EPI datasets.
//!
//! Exit status: 0 success, 2 usage or invalid parameters, 3 I/O or file
//! format problems, 4 numerical failure.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rac_loraks::container::{
    grid_file_name, load_dataset, read_grid, save_dataset, write_grid, GridRecord, Role,
};
use rac_loraks::metrics::{esp, nrmse, ssos, DEFAULT_ESP_BINS};
use rac_loraks::sim::{build_dataset, Corruption, PhantomSpec, Scenario, ScenarioSpec, Target};
use rac_loraks::solver::{self, AcsSpectra, Init, ReconConfig, ReconResult};
use rac_loraks::subspace::RankPlan;
use rac_loraks::{Dataset, Error, KSpaceGrid, PartialFourier, Polarity};

use manifest::Manifest;

#[derive(Debug, Parser)]
#[command(
    name = "racloraks",
    version,
    about = "RAC-LORAKS EPI ghost correction toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory (gold, EPI and ACS grids).
    Simulate(SimulateArgs),
    /// Reconstruct the EPI grids of a dataset directory.
    Recon(ReconArgs),
    /// Compare a reconstruction against the gold grids of a dataset.
    Eval(EvalArgs),
    /// Singular value curves of the ACS liftings with rank suggestions.
    Svplot(SvplotArgs),
    /// Re-run the command recorded in a manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, clap::Args)]
struct SimulateArgs {
    #[arg(long, default_value = "matched")]
    scenario: String,
    /// Parallel imaging acceleration factor.
    #[arg(long = "R", default_value_t = 2)]
    accel: usize,
    /// Partial Fourier fraction: 1, 7/8, 6/8 or 5/8.
    #[arg(long, default_value = "1")]
    pf: String,
    /// Polarity offset of the interleave.
    #[arg(long, default_value_t = 0)]
    offset: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 32)]
    ny: usize,
    #[arg(long, default_value_t = 32)]
    nx: usize,
    #[arg(long, default_value_t = 8)]
    nch: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    RacLoraks,
    AcLoraks,
    ZeroFill,
}

impl Method {
    fn as_str(self) -> &'static str {
        match self {
            Method::RacLoraks => "rac-loraks",
            Method::AcLoraks => "ac-loraks",
            Method::ZeroFill => "zero-fill",
        }
    }
}

#[derive(Debug, clap::Args)]
struct ReconArgs {
    /// Dataset directory written by `simulate`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::RacLoraks)]
    method: Method,
    #[arg(long, default_value_t = solver::DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = solver::DEFAULT_ETA)]
    eta: f64,
    /// S-side rank r; suggested from the ACS curve when omitted.
    #[arg(long)]
    rank_s: Option<usize>,
    /// C-side nullspace dimension p; suggested from the ACS curve when omitted.
    #[arg(long)]
    nullspace_p: Option<usize>,
    #[arg(long, default_value_t = solver::DEFAULT_RADIUS)]
    radius: usize,
    #[arg(long, default_value_t = solver::DEFAULT_MAX_OUTER)]
    max_outer: usize,
    #[arg(long, default_value_t = solver::DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = solver::DEFAULT_CG_MAX)]
    cg_max: usize,
    #[arg(long, default_value_t = solver::DEFAULT_CG_TOL)]
    cg_tol: f64,
    /// Treat unmeasured ACS samples as unknowns.
    #[arg(long)]
    optimize_acs: bool,
}

#[derive(Debug, clap::Args)]
struct EvalArgs {
    /// Dataset directory holding the gold grids.
    #[arg(long)]
    data: PathBuf,
    /// Directory holding `<prefix>_pos.kspc` and `<prefix>_neg.kspc`.
    #[arg(long)]
    recon: PathBuf,
    #[arg(long, default_value = "recon")]
    prefix: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ESP_BINS)]
    bins: usize,
}

#[derive(Debug, clap::Args)]
struct SvplotArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = solver::DEFAULT_RADIUS)]
    radius: usize,
}

#[derive(Debug, clap::Args)]
struct RerunArgs {
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Io(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Io(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Shape(_) | Error::Parameter(_) => Failure::Usage(msg),
            Error::Parse { .. }
            | Error::TruncatedPayload { .. }
            | Error::Version { .. }
            | Error::Io { .. } => Failure::Io(msg),
            Error::Divergence { .. }
            | Error::InnerSolver { .. }
            | Error::UndefinedMetric(_)
            | Error::Decomposition(_) => Failure::Numerical(msg),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("i/o error on {}: {e}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn make_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let start = Instant::now();
    match run(cli.command, &argv) {
        Ok(()) => {
            eprintln!("done in {:.3} s", start.elapsed().as_secs_f64());
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(command: Command, argv: &[String]) -> Outcome {
    match command {
        Command::Simulate(a) => simulate(&a, argv),
        Command::Recon(a) => recon(&a, argv),
        Command::Eval(a) => eval(&a, argv),
        Command::Svplot(a) => svplot(&a, argv),
        Command::Rerun(a) => rerun(&a),
    }
}

fn rerun(args: &RerunArgs) -> Outcome {
    let text = fs::read_to_string(&args.manifest).map_err(|e| io_err(&args.manifest, e))?;
    let m = Manifest::parse(&text)
        .filter(|m| m.get("command").is_some())
        .ok_or_else(|| Failure::Io(format!("{} is not a manifest", args.manifest.display())))?;
    let argv = m.args();
    let cli =
        Cli::try_parse_from(std::iter::once("racloraks".to_string()).chain(argv.iter().cloned()))
            .map_err(|e| Failure::Usage(format!("recorded arguments do not parse: {e}")))?;
    if matches!(cli.command, Command::Rerun(_)) {
        return Err(Failure::Usage(
            "a manifest cannot record another rerun".into(),
        ));
    }
    run(cli.command, &argv)
}

fn corruption_fields(m: &mut Manifest, spec: &ScenarioSpec) {
    let c = &spec.corruption;
    let kind = match c.kind {
        Corruption::None => "none",
        Corruption::Hyperintensity { .. } => "hyperintensity",
        Corruption::InvertedContrast { .. } => "inverted_contrast",
        Corruption::ShotGhost { .. } => "shot_ghost",
    };
    m.push("kind", kind);
    let target = match c.target {
        Target::Epi => "epi",
        Target::Acs => "acs",
    };
    m.push(
        "where",
        if c.kind == Corruption::None {
            "none"
        } else {
            target
        },
    );
    match c.kind {
        Corruption::None => {}
        Corruption::Hyperintensity {
            center,
            width,
            amplitude,
        } => {
            m.push("blob_center_y", num(center.0));
            m.push("blob_center_x", num(center.1));
            m.push("blob_width", num(width));
            m.push("blob_amplitude", num(amplitude));
        }
        Corruption::InvertedContrast { reference_max } => {
            m.push(
                "reference_max",
                reference_max.map_or("auto".to_string(), num),
            );
        }
        Corruption::ShotGhost { ghost_phase } => m.push("ghost_phase", num(ghost_phase)),
    }
}

fn simulate(a: &SimulateArgs, argv: &[String]) -> Outcome {
    let scenario = Scenario::parse(&a.scenario)?;
    let phantom = PhantomSpec::new(a.ny, a.nx, a.nch, a.seed);
    phantom.validate()?;
    let mut spec = ScenarioSpec::new(scenario, phantom, a.accel);
    spec.pf = PartialFourier::parse(&a.pf)?;
    spec.offset = a.offset;
    let dataset = build_dataset(&spec)?;
    make_dir(&a.out)?;
    save_dataset(&a.out, &dataset)?;

    let phantom = &spec.phantom;
    let mut m = Manifest::new("simulate", argv);
    m.push("scenario", scenario);
    corruption_fields(&mut m, &spec);
    m.push("seed", phantom.seed);
    m.push("ny", phantom.ny);
    m.push("nx", phantom.nx);
    m.push("nch", phantom.n_ch);
    m.push("support_fraction", num(phantom.support_fraction));
    m.push("phase_poly_degree", phantom.phase_poly_degree);
    m.push(
        "coil_model",
        format!("{:?}", phantom.coil_model).to_lowercase(),
    );
    let pol = &spec.polarity;
    m.push("polarity_phi0", num(pol.phi0));
    m.push("polarity_g_y", num(pol.g[0]));
    m.push("polarity_g_x", num(pol.g[1]));
    m.push("polarity_nonlinear_amp", num(pol.nonlinear_amp));
    m.push("polarity_scale", num(pol.scale));
    m.push("R", spec.accel);
    m.push("pf", format!("{}/{}", spec.pf.num(), spec.pf.den()));
    m.push("offset", spec.offset);
    m.push(
        "single_channel",
        spec.combine
            .as_ref()
            .map_or("no".to_string(), |w| format!("{} weights", w.len())),
    );
    m.push("out", a.out.display());
    for role in [Role::Gold, Role::Epi, Role::Acs] {
        for pol in [Polarity::Positive, Polarity::Negative] {
            m.push("file", grid_file_name(role, pol));
        }
    }
    m.write(&a.out).map_err(|e| io_err(&a.out, e))?;
    Ok(())
}

/// Explicit ranks where given, the ACS suggestion for the rest.
fn resolve_ranks(
    a: &ReconArgs,
    dataset: &Dataset,
) -> std::result::Result<(RankPlan, &'static str), Failure> {
    match (a.rank_s, a.nullspace_p) {
        (Some(rank_s), Some(nullspace_p)) => Ok((
            RankPlan {
                rank_s,
                nullspace_p,
            },
            "given",
        )),
        (r, p) => {
            let plan = AcsSpectra::of(dataset, a.radius)?.plan()?;
            let source = if r.is_none() && p.is_none() {
                "suggested"
            } else {
                "mixed"
            };
            Ok((
                RankPlan {
                    rank_s: r.unwrap_or(plan.rank_s),
                    nullspace_p: p.unwrap_or(plan.nullspace_p),
                },
                source,
            ))
        }
    }
}

fn write_result_grid(
    dir: &Path,
    name: &str,
    grid: &KSpaceGrid,
    pattern: &rac_loraks::SamplingPattern,
    role: Role,
) -> Outcome {
    let record = GridRecord {
        role,
        grid: grid.clone(),
        pattern: pattern.clone(),
    };
    write_grid(dir.join(name), &record)?;
    Ok(())
}

fn recon(a: &ReconArgs, argv: &[String]) -> Outcome {
    let dataset = load_dataset(&a.data)?;
    let (ranks, rank_source) = resolve_ranks(a, &dataset)?;
    let config = ReconConfig {
        lambda: a.lambda,
        eta: a.eta,
        ranks,
        radius: a.radius,
        max_outer: a.max_outer,
        tol: a.tol,
        cg_max: a.cg_max,
        cg_tol: a.cg_tol,
        optimize_acs: a.optimize_acs,
    };
    config.validate()?;
    let result: ReconResult = match a.method {
        Method::RacLoraks => solver::rac_loraks(&dataset, &config, &Init::ZeroFill)?,
        Method::AcLoraks => solver::ac_loraks(&dataset, &config, &Init::ZeroFill)?,
        Method::ZeroFill => solver::zero_fill(&dataset, &config)?,
    };

    make_dir(&a.out)?;
    let pos = result.pos.clone().with_polarity(Polarity::Positive);
    let neg = result.neg.clone().with_polarity(Polarity::Negative);
    write_result_grid(&a.out, "recon_pos.kspc", &pos, &dataset.pattern, Role::Epi)?;
    write_result_grid(&a.out, "recon_neg.kspc", &neg, &dataset.pattern, Role::Epi)?;
    if let Some((ap, an)) = &result.acs {
        let ap = ap.clone().with_polarity(Polarity::Positive);
        let an = an.clone().with_polarity(Polarity::Negative);
        write_result_grid(
            &a.out,
            "recon_acs_pos.kspc",
            &ap,
            &dataset.acs_pattern,
            Role::Acs,
        )?;
        write_result_grid(
            &a.out,
            "recon_acs_neg.kspc",
            &an,
            &dataset.acs_pattern,
            Role::Acs,
        )?;
    }
    let mut csv = String::from("iteration,objective\n");
    for (i, v) in result.objective_trace.iter().enumerate() {
        csv.push_str(&format!("{i},{}\n", num(*v)));
    }
    write_text(&a.out.join("objective_trace.csv"), &csv)?;

    let mut m = Manifest::new("recon", argv);
    m.push("method", a.method.as_str());
    m.push("data", a.data.display());
    m.push("out", a.out.display());
    m.push("rank_source", rank_source);
    for (k, v) in config.echo() {
        m.push(k, v);
    }
    m.push("init", "zero-fill");
    m.push("iterations", result.iterations);
    m.push("converged", result.converged);
    if let Some(last) = result.objective_trace.last() {
        m.push("final_objective", num(*last));
    }
    m.write(&a.out).map_err(|e| io_err(&a.out, e))?;
    Ok(())
}

fn eval(a: &EvalArgs, argv: &[String]) -> Outcome {
    let dataset = load_dataset(&a.data)?;
    let (gp, gn) = dataset
        .gold
        .as_ref()
        .ok_or_else(|| Failure::Io(format!("{} holds no gold grids", a.data.display())))?;
    let read = |pol: Polarity| -> std::result::Result<KSpaceGrid, Failure> {
        Ok(read_grid(a.recon.join(format!("{}_{}.kspc", a.prefix, pol.as_str())))?.grid)
    };
    let (ep, en) = (read(Polarity::Positive)?, read(Polarity::Negative)?);
    let value = nrmse(&ep, &en, gp, gn)?;
    let curve = esp(&ep, &en, gp, gn, a.bins)?;
    let image = ssos(&[&ep, &en])?;

    make_dir(&a.out)?;
    write_text(&a.out.join("nrmse.txt"), &format!("{}\n", num(value)))?;
    write_text(&a.out.join("esp.csv"), &curve.to_csv())?;
    let pgm = a.out.join("ssos.pgm");
    fs::write(&pgm, image.to_pgm()).map_err(|e| io_err(&pgm, e))?;

    let mut m = Manifest::new("eval", argv);
    m.push("data", a.data.display());
    m.push("recon", a.recon.display());
    m.push("prefix", &a.prefix);
    m.push("out", a.out.display());
    m.push("bins", a.bins);
    m.push("nrmse", num(value));
    m.write(&a.out).map_err(|e| io_err(&a.out, e))?;
    Ok(())
}

fn svplot(a: &SvplotArgs, argv: &[String]) -> Outcome {
    let dataset = load_dataset(&a.data)?;
    let spectra = AcsSpectra::of(&dataset, a.radius)?;
    let (p, r) = spectra.suggest()?;
    let rows = spectra.c.len().max(spectra.s.len());
    let mut csv = String::from("index,c,s\n");
    let cell = |v: Option<&f64>| v.map_or(String::new(), |v| num(*v));
    for i in 0..rows {
        csv.push_str(&format!(
            "{i},{},{}\n",
            cell(spectra.c.get(i)),
            cell(spectra.s.get(i))
        ));
    }
    make_dir(&a.out)?;
    write_text(&a.out.join("singular_values.csv"), &csv)?;
    let suggestion = format!(
        "nullspace_p: {}\nc_rank: {}\nc_low_confidence: {}\nrank_s: {}\ns_low_confidence: {}\n",
        p.value, p.rank, p.low_confidence, r.value, r.low_confidence
    );
    write_text(&a.out.join("suggestion.txt"), &suggestion)?;

    let mut m = Manifest::new("svplot", argv);
    m.push("data", a.data.display());
    m.push("out", a.out.display());
    m.push("radius", a.radius);
    m.push("nullspace_p", p.value);
    m.push("rank_s", r.value);
    m.write(&a.out).map_err(|e| io_err(&a.out, e))?;
    Ok(())
}
