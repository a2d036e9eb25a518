//! `kicktop` command line. Every invocation is first turned into a
//! [`RunManifest`], which is validated, executed and written next to the
//! outputs so the run can be repeated with `kicktop run manifest.json`.

use std::env;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand as ClapSubcommand};
use rayon::prelude::*;
use serde_json::json;

use crate::csv::fmt_f;
use crate::error::Error;
use crate::floquet::{diagonalize_floquet, propagate_with, FloquetOperator, Observers};
use crate::landscape::{compute_landscape_resumable, extract_features, FeatureOptions, GridSpec};
use crate::manifest::{load_manifest, Range, RunManifest, StateChoice, Subcommand};
use crate::meanfield::{find_fixed_points, phase_portrait, seed_grid};
use crate::params::SystemParams;
use crate::spin::{coherent_state, husimi, SpinOperators, StateVector};
use crate::tunneling::{
    detect_crossings, identify_doublet, island_states, reconstruct_islands, sweep_over_c, sweep_over_n,
    transfer_period, CrossingEvent, CrossingOptions, EventKind, IslandStates, SweepCurve, Validity,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

/// Environment variable consulted for the worker count when none is given.
pub const WORKERS_ENV: &str = "KICKTOP_WORKERS";

const PORTRAIT_KICKS: usize = 300;
const PORTRAIT_SEEDS: (usize, usize) = (8, 16);
const PROPAGATE_KICKS: usize = 2000;
const HUSIMI_GRID: (usize, usize) = (61, 121);
const LANDSCAPE_RESOLUTION: usize = 160;

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl Failure {
    fn exit_code(&self) -> i32 {
        match self {
            Failure::Core(Error::InvalidParameter { .. } | Error::NoIslands(_) | Error::Degenerate(_)) => {
                EXIT_INVALID
            }
            _ => EXIT_NUMERICAL,
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> Failure + '_ {
    move |source| Failure::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "kicktop",
    version,
    about = "Kicked two-mode Bose-Hubbard dynamics and tunneling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Particle number N
    #[arg(long)]
    n: Option<usize>,
    /// Kick strength in units of 1/(N+1)
    #[arg(long, allow_negative_numbers = true)]
    c_scaled: Option<f64>,
    /// Raw kick strength c, instead of --c-scaled
    #[arg(long, allow_negative_numbers = true, conflicts_with = "c_scaled")]
    c_raw: Option<f64>,
    /// Tunneling coupling
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    v: f64,
    /// Kick period
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    tau: f64,
    /// Well asymmetry
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    epsilon: f64,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads [default: $KICKTOP_WORKERS, else all cores]
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct StateArgs {
    /// minus, plus, psi-minus, psi-plus, north, coherent or floquet
    #[arg(long, value_parser = parse_state)]
    state: Option<StateChoice>,
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    phi: Option<f64>,
    /// Floquet state index (with --state floquet)
    #[arg(long)]
    index: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct CRange {
    #[arg(long, allow_negative_numbers = true)]
    c_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    c_max: Option<f64>,
    /// Number of nodes [default: spacing 0.005]
    #[arg(long)]
    c_steps: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct VRange {
    #[arg(long, allow_negative_numbers = true)]
    v_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    v_max: Option<f64>,
    #[arg(long)]
    v_steps: Option<usize>,
}

#[derive(ClapSubcommand, Debug)]
enum Command {
    /// Mean-field stroboscopic orbits and period-one fixed points
    Portrait {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kicks: Option<usize>,
        /// Seed as THETA:PHI; repeatable
        #[arg(long = "seed", value_parser = parse_seed, allow_negative_numbers = true)]
        seeds: Vec<(f64, f64)>,
        /// Seed grid as NTHETAxNPHI
        #[arg(long, value_parser = parse_grid)]
        seed_grid: Option<(usize, usize)>,
    },
    /// Floquet quasi-energies with parities
    Spectrum {
        #[command(flatten)]
        common: Common,
    },
    /// Stroboscopic time series of <L>/l and island populations
    Propagate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        state: StateArgs,
        #[arg(long)]
        kicks: Option<usize>,
    },
    /// Husimi distribution of a state, optionally after some kicks
    Husimi {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        state: StateArgs,
        #[arg(long)]
        kicks: Option<usize>,
        /// Grid as NTHETAxNPHI
        #[arg(long, value_parser = parse_grid)]
        grid: Option<(usize, usize)>,
    },
    /// Tunneling doublet and period at one parameter point
    Tunneling {
        #[command(flatten)]
        common: Common,
        /// Also measure the transfer period by propagating up to this many kicks
        #[arg(long)]
        kicks: Option<usize>,
    },
    /// Tunneling period against particle number at fixed c_scaled
    SweepN {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_min: Option<usize>,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        n_steps: Option<usize>,
    },
    /// Tunneling period against c_scaled at fixed N, with crossing events
    SweepC {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        range: CRange,
    },
    /// All quasi-energy levels against c_scaled, with crossing events
    Crossings {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        range: CRange,
    },
    /// log10 T over the (c_scaled, v) plane, with ridge and valley features
    Landscape {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        c: CRange,
        #[command(flatten)]
        v: VRange,
        /// Feature threshold in decades
        #[arg(long)]
        threshold: Option<f64>,
        /// Resume file, updated row by row
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Execute a run manifest
    Run {
        manifest: PathBuf,
        /// Overrides the manifest's output directory
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn parse_state(s: &str) -> std::result::Result<StateChoice, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("unknown state `{s}`"))
}

fn parse_seed(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected THETA:PHI")?;
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    Ok((num(a)?, num(b)?))
}

fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once('x').ok_or("expected AxB")?;
    let num = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("`{x}`: {e}"));
    Ok((num(a)?, num(b)?))
}

fn range_of(
    field: &'static str,
    min: Option<f64>,
    max: Option<f64>,
    steps: Option<usize>,
) -> Outcome<Option<Range>> {
    match (min, max) {
        (Some(min), Some(max)) => Ok(Some(Range { min, max, steps })),
        (None, None) if steps.is_none() => Ok(None),
        _ => Err(Error::InvalidParameter {
            field,
            reason: "give both the min and the max".into(),
        }
        .into()),
    }
}

fn base(sub: Subcommand, c: &Common) -> RunManifest {
    let mut m = RunManifest::new(sub);
    m.n = c.n;
    m.c_scaled = c.c_scaled;
    m.c_raw = c.c_raw;
    m.v = c.v;
    m.tau = c.tau;
    m.epsilon = c.epsilon;
    m.output_dir = c.out.clone();
    m.workers = c.workers;
    m
}

fn with_state(mut m: RunManifest, s: &StateArgs) -> RunManifest {
    m.state = s.state.unwrap_or_default();
    m.theta = s.theta;
    m.phi = s.phi;
    m.index = s.index;
    m
}

fn manifest_from(command: Command) -> Outcome<RunManifest> {
    use Subcommand as S;
    let m = match command {
        Command::Portrait {
            common,
            kicks,
            seeds,
            seed_grid,
        } => {
            let mut m = base(S::Portrait, &common);
            m.kicks = kicks;
            m.seeds = (!seeds.is_empty()).then_some(seeds);
            m.seed_grid = seed_grid;
            m
        }
        Command::Spectrum { common } => base(S::Spectrum, &common),
        Command::Propagate { common, state, kicks } => {
            let mut m = with_state(base(S::Propagate, &common), &state);
            m.kicks = kicks;
            m
        }
        Command::Husimi {
            common,
            state,
            kicks,
            grid,
        } => {
            let mut m = with_state(base(S::Husimi, &common), &state);
            m.kicks = kicks;
            m.husimi_grid = grid;
            m
        }
        Command::Tunneling { common, kicks } => {
            let mut m = base(S::Tunneling, &common);
            m.kicks = kicks;
            m
        }
        Command::SweepN {
            common,
            n_min,
            n_max,
            n_steps,
        } => {
            let mut m = base(S::SweepN, &common);
            m.n_range = range_of(
                "n_range",
                n_min.map(|x| x as f64),
                n_max.map(|x| x as f64),
                n_steps,
            )?;
            m
        }
        Command::SweepC { common, range } => {
            let mut m = base(S::SweepC, &common);
            m.c_range = range_of("c_range", range.c_min, range.c_max, range.c_steps)?;
            m
        }
        Command::Crossings { common, range } => {
            let mut m = base(S::Crossings, &common);
            m.c_range = range_of("c_range", range.c_min, range.c_max, range.c_steps)?;
            m
        }
        Command::Landscape {
            common,
            c,
            v,
            threshold,
            checkpoint,
        } => {
            let mut m = base(S::Landscape, &common);
            let window = GridSpec::default_window(LANDSCAPE_RESOLUTION);
            m.c_range = Some(
                range_of("c_range", c.c_min, c.c_max, c.c_steps)?.unwrap_or(Range {
                    min: window.c_scaled.min,
                    max: window.c_scaled.max,
                    steps: c.c_steps,
                }),
            );
            m.v_range = Some(
                range_of("v_range", v.v_min, v.v_max, v.v_steps)?.unwrap_or(Range {
                    min: window.v.min,
                    max: window.v.max,
                    steps: v.v_steps,
                }),
            );
            if let Some(t) = threshold {
                m.feature_threshold = t;
            }
            m.checkpoint = checkpoint;
            m
        }
        Command::Run {
            manifest,
            out,
            workers,
        } => {
            let mut m = load_manifest(&manifest)?;
            if let Some(out) = out {
                m.output_dir = out;
            }
            if workers.is_some() {
                m.workers = workers;
            }
            m
        }
    };
    Ok(m)
}

/// Makes every default explicit, so the written manifest pins the run down.
fn resolve(m: &mut RunManifest) {
    use Subcommand as S;
    match m.subcommand {
        S::Portrait => {
            m.kicks.get_or_insert(PORTRAIT_KICKS);
            if m.seeds.is_none() {
                m.seed_grid.get_or_insert(PORTRAIT_SEEDS);
            }
        }
        S::Propagate => {
            m.kicks.get_or_insert(PROPAGATE_KICKS);
        }
        S::Husimi => {
            m.kicks.get_or_insert(0);
            m.husimi_grid.get_or_insert(HUSIMI_GRID);
        }
        S::Landscape => {
            for r in [&mut m.c_range, &mut m.v_range].into_iter().flatten() {
                r.steps.get_or_insert(LANDSCAPE_RESOLUTION);
            }
        }
        _ => {}
    }
}

fn worker_count(m: &RunManifest) -> Outcome<Option<usize>> {
    if m.workers.is_some() {
        return Ok(m.workers);
    }
    match env::var(WORKERS_ENV) {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(k) if k >= 1 => Ok(Some(k)),
            _ => Err(Error::InvalidParameter {
                field: "workers",
                reason: format!("{WORKERS_ENV}=`{s}` is not a positive integer"),
            }
            .into()),
        },
        Err(_) => Ok(None),
    }
}

/// Parses `argv` (program name first), runs the analysis and returns the
/// process exit code: 0 on success, 1 for invalid input, 2 for numerical failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INVALID,
            };
        }
    };
    match manifest_from(cli.command).and_then(run_manifest) {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Validates and executes a manifest; returns the one-line summary.
fn run_manifest(mut m: RunManifest) -> Outcome<String> {
    resolve(&mut m);
    m.validate()?;
    let workers = worker_count(&m)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    fs::create_dir_all(&m.output_dir).map_err(io_at(&m.output_dir))?;
    let summary = pool.install(|| execute(&m))?;
    write_text(&m.output_dir.join("manifest.json"), &(m.to_json() + "\n"))?;
    Ok(summary)
}

fn execute(m: &RunManifest) -> Outcome<String> {
    use Subcommand as S;
    log::info!("{} -> {}", m.subcommand, m.output_dir.display());
    match m.subcommand {
        S::Portrait => portrait(m),
        S::Spectrum => spectrum(m),
        S::Propagate => propagate(m),
        S::Husimi => husimi_plot(m),
        S::Tunneling => tunneling(m),
        S::SweepN => sweep_n(m),
        S::SweepC => sweep_c(m),
        S::Crossings => crossings(m),
        S::Landscape => landscape(m),
    }
}

fn create(path: &Path) -> Outcome<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(io_at(path))?))
}

fn write_text(path: &Path, text: &str) -> Outcome<()> {
    fs::write(path, text).map_err(io_at(path))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Outcome<()> {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes");
    write_text(path, &(text + "\n"))
}

fn write_rows(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Outcome<()> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(io_at(path))
}

fn describe(p: &SystemParams) -> String {
    format!("N={} c_scaled={} v={} tau={}", p.n, p.c_scaled(), p.v, p.tau)
}

fn portrait(m: &RunManifest) -> Outcome<String> {
    let p = m.params()?;
    let kicks = m.kicks.unwrap_or(PORTRAIT_KICKS);
    let seeds = match &m.seeds {
        Some(s) => s.clone(),
        None => {
            let (a, b) = m.seed_grid.unwrap_or(PORTRAIT_SEEDS);
            seed_grid(a, b)
        }
    };
    let points = phase_portrait(&p, &seeds, kicks)?;
    let radius = p.s();
    let drift = points
        .iter()
        .map(|q| (q.s.norm() - radius).abs() / radius)
        .fold(0.0, f64::max);
    let path = m.output_dir.join("portrait.csv");
    write_rows(&path, |w| {
        writeln!(w, "seed_id,kick_index,theta,phi,sx,sy,sz")?;
        for q in &points {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                q.seed_id,
                q.kick,
                fmt_f(q.theta),
                fmt_f(q.phi),
                fmt_f(q.s.sx),
                fmt_f(q.s.sy),
                fmt_f(q.s.sz)
            )?;
        }
        Ok(())
    })?;
    let report = find_fixed_points(&p);
    let stable = report.points.iter().filter(|f| f.stable).count();
    write_json(
        &m.output_dir.join("fixed_points.json"),
        &json!({
            "points": report.points,
            "unconverged_starts": report.unconverged_starts,
        }),
    )?;
    Ok(format!(
        "portrait: {} seeds={} kicks={kicks} points={} max_norm_drift={drift:.1e} fixed_points={} stable={stable}",
        describe(&p),
        seeds.len(),
        points.len(),
        report.points.len()
    ))
}

fn spectrum(m: &RunManifest) -> Outcome<String> {
    let p = m.params()?;
    let ops = SpinOperators::new(p.n)?;
    let decomp = diagonalize_floquet(&FloquetOperator::new(&p, &ops)?, &ops)?;
    write_rows(&m.output_dir.join("spectrum.csv"), |w| {
        writeln!(w, "kappa_index,quasienergy,parity")?;
        for (k, (e, par)) in decomp.quasienergies.iter().zip(&decomp.parities).enumerate() {
            writeln!(w, "{k},{},{par}", fmt_f(*e))?;
        }
        Ok(())
    })?;
    Ok(format!("spectrum: {} levels={}", describe(&p), decomp.len()))
}

/// Initial state and, when the islands exist, the island pair for the observers.
fn initial_state(
    m: &RunManifest,
    p: &SystemParams,
    ops: &SpinOperators,
) -> Outcome<(StateVector, Option<IslandStates>)> {
    let islands = match island_states(p) {
        Ok(i) => Some(i),
        Err(Error::NoIslands(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let need_islands = || {
        islands.as_ref().ok_or_else(|| {
            Error::NoIslands(format!(
                "state `{}` needs the island pair, absent at {}",
                serde_json::to_value(m.state)
                    .expect("unit variant")
                    .as_str()
                    .unwrap_or("?"),
                describe(p)
            ))
        })
    };
    let state = match m.state {
        StateChoice::Minus => need_islands()?.minus.clone(),
        StateChoice::Plus => need_islands()?.plus.clone(),
        StateChoice::PsiMinus | StateChoice::PsiPlus => {
            let minus = &need_islands()?.minus;
            let decomp = diagonalize_floquet(&FloquetOperator::new(p, ops)?, ops)?;
            let doublet = identify_doublet(&decomp, minus)?;
            let (psi_plus, psi_minus) = reconstruct_islands(&decomp, &doublet, minus);
            if m.state == StateChoice::PsiPlus {
                psi_plus
            } else {
                psi_minus
            }
        }
        StateChoice::North => StateVector::fock(p.n, p.n)?,
        StateChoice::Coherent => coherent_state(p.n, m.theta.expect("validated"), m.phi.expect("validated"))?,
        StateChoice::Floquet => {
            let decomp = diagonalize_floquet(&FloquetOperator::new(p, ops)?, ops)?;
            decomp.states[m.index.expect("validated")].clone()
        }
    };
    Ok((state, islands))
}

fn propagate(m: &RunManifest) -> Outcome<String> {
    let p = m.params()?;
    let ops = SpinOperators::new(p.n)?;
    let (state, islands) = initial_state(m, &p, &ops)?;
    let fop = FloquetOperator::new(&p, &ops)?;
    let observers = Observers {
        islands: islands.map(|i| (i.plus, i.minus)),
    };
    let kicks = m.kicks.unwrap_or(PROPAGATE_KICKS);
    let path = m.output_dir.join("timeseries.csv");
    let mut w = create(&path)?;
    let mut failed = None;
    let mut max_norm_dev: f64 = 0.0;
    let write = |w: &mut BufWriter<File>, s: &crate::floquet::TimeSample| {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            s.kick,
            fmt_f(s.l[0]),
            fmt_f(s.l[1]),
            fmt_f(s.l[2]),
            fmt_f(s.p_plus),
            fmt_f(s.p_minus),
            fmt_f(s.p_orth),
            fmt_f(s.norm)
        )
    };
    writeln!(w, "kick,Lx,Ly,Lz,p_plus,p_minus,p_orth,norm").map_err(io_at(&path))?;
    propagate_with(&state, &fop, &ops, kicks, &observers, |s| {
        max_norm_dev = max_norm_dev.max((s.norm - 1.0).abs());
        match write(&mut w, s) {
            Ok(()) => true,
            Err(e) => {
                failed = Some(e);
                false
            }
        }
    })?;
    if let Some(e) = failed {
        return Err(io_at(&path)(e));
    }
    w.flush().map_err(io_at(&path))?;
    Ok(format!(
        "propagate: {} kicks={kicks} max_norm_deviation={max_norm_dev:.1e}",
        describe(&p)
    ))
}

fn husimi_plot(m: &RunManifest) -> Outcome<String> {
    let p = m.params()?;
    let ops = SpinOperators::new(p.n)?;
    let (state, _) = initial_state(m, &p, &ops)?;
    let kicks = m.kicks.unwrap_or(0);
    let state = if kicks > 0 {
        let fop = FloquetOperator::new(&p, &ops)?;
        propagate_with(&state, &fop, &ops, kicks, &Observers::default(), |_| true)?
    } else {
        state
    };
    let (nt, np) = m.husimi_grid.unwrap_or(HUSIMI_GRID);
    let grid = husimi(&state, nt, np)?;
    write_rows(&m.output_dir.join("husimi.csv"), |w| {
        writeln!(w, "theta,phi,q")?;
        for (i, th) in grid.thetas.iter().enumerate() {
            for (j, ph) in grid.phis.iter().enumerate() {
                writeln!(w, "{},{},{}", fmt_f(*th), fmt_f(*ph), fmt_f(grid.values[i][j]))?;
            }
        }
        Ok(())
    })?;
    let (th, ph) = grid.argmax();
    Ok(format!(
        "husimi: {} kicks={kicks} grid={nt}x{np} peak=(theta {th:.4}, phi {ph:.4}) normalization={:.6}",
        describe(&p),
        grid.normalization(p.n)
    ))
}

fn tunneling(m: &RunManifest) -> Outcome<String> {
    let p = m.params()?;
    let ops = SpinOperators::new(p.n)?;
    let islands = island_states(&p)?;
    let fop = FloquetOperator::new(&p, &ops)?;
    let decomp = diagonalize_floquet(&fop, &ops)?;
    let r = identify_doublet(&decomp, &islands.minus)?;
    let propagation = m
        .kicks
        .map(|k| transfer_period(&fop, &ops, &islands, k))
        .transpose()?;
    let validity = if r.two_state_valid {
        Validity::Valid
    } else {
        Validity::Gap
    };
    write_json(
        &m.output_dir.join("tunneling.json"),
        &json!({
            "params": p,
            "c_scaled": p.c_scaled(),
            "validity": validity,
            "islands": { "north": islands.north, "south": islands.south },
            "result": r,
            "propagation": propagation,
        }),
    )?;
    let mut line = format!(
        "tunneling: {} delta_eps={:.6e} T_tunnel={:.1} overlap_sum={:.4} {}",
        describe(&p),
        r.delta_eps,
        r.t_tunnel,
        r.overlap_sum(),
        validity.as_str()
    );
    if let Some(period) = propagation.and_then(|x| x.period()) {
        line += &format!(" transfer_period={period}");
    }
    Ok(line)
}

fn event_list(events: &[CrossingEvent]) -> String {
    if events.is_empty() {
        return "none".into();
    }
    events
        .iter()
        .map(|e| match e.kind {
            EventKind::Cdt => format!("CDT@{:.6}", e.param),
            EventKind::Cat => format!("CAT@{:.4}({:.2} dec)", e.param, e.depth),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn sweep_outputs(
    m: &RunManifest,
    curve: &SweepCurve,
    csv_name: &str,
) -> Outcome<(Vec<CrossingEvent>, String)> {
    write_rows(&m.output_dir.join(csv_name), |w| curve.write_csv(w))?;
    let events = detect_crossings(curve, &CrossingOptions::default())?;
    write_json(&m.output_dir.join("events.json"), &events)?;
    let count = |v: Validity| curve.points.iter().filter(|q| q.analysis.validity == v).count();
    let stats = format!(
        "points={} valid={} gap={} no_island={} events: {}",
        curve.points.len(),
        count(Validity::Valid),
        count(Validity::Gap),
        count(Validity::NoIsland),
        event_list(&events)
    );
    Ok((events, stats))
}

fn sweep_n(m: &RunManifest) -> Outcome<String> {
    let ns = m.n_values()?;
    let template = m.template(ns[0])?;
    let cs = m.c_scaled.expect("validated");
    let curve = sweep_over_n(cs, &ns, &template)?;
    let (_, stats) = sweep_outputs(m, &curve, "sweep_n.csv")?;
    Ok(format!(
        "sweep-n: c_scaled={cs} v={} tau={} N={}..{} {stats}",
        m.v,
        m.tau,
        ns[0],
        ns[ns.len() - 1]
    ))
}

fn c_curve(m: &RunManifest) -> Outcome<(SweepCurve, Vec<f64>)> {
    let n = m.n.expect("validated");
    let cs = m.c_values()?;
    let curve = sweep_over_c(n, &cs, &m.template(n)?)?;
    Ok((curve, cs))
}

fn sweep_c(m: &RunManifest) -> Outcome<String> {
    let (curve, cs) = c_curve(m)?;
    let (_, stats) = sweep_outputs(m, &curve, "sweep_c.csv")?;
    Ok(format!(
        "sweep-c: N={} v={} tau={} c_scaled={}..{} {stats}",
        curve.template.n,
        m.v,
        m.tau,
        cs[0],
        cs[cs.len() - 1]
    ))
}

fn crossings(m: &RunManifest) -> Outcome<String> {
    let (curve, cs) = c_curve(m)?;
    let ops = SpinOperators::new(curve.template.n)?;
    let spectra = cs
        .par_iter()
        .map(|&x| {
            let p = curve.template.at_c_scaled(x);
            diagonalize_floquet(&FloquetOperator::new(&p, &ops)?, &ops)
        })
        .collect::<crate::Result<Vec<_>>>()?;
    write_rows(&m.output_dir.join("levels.csv"), |w| {
        writeln!(w, "c_scaled,kappa_index,quasienergy,parity")?;
        for (x, d) in cs.iter().zip(&spectra) {
            for (k, (e, par)) in d.quasienergies.iter().zip(&d.parities).enumerate() {
                writeln!(w, "{},{k},{},{par}", fmt_f(*x), fmt_f(*e))?;
            }
        }
        Ok(())
    })?;
    let events = detect_crossings(&curve, &CrossingOptions::default())?;
    write_json(&m.output_dir.join("events.json"), &events)?;
    Ok(format!(
        "crossings: N={} v={} c_scaled={}..{} points={} events: {}",
        curve.template.n,
        m.v,
        cs[0],
        cs[cs.len() - 1],
        cs.len(),
        event_list(&events)
    ))
}

fn landscape(m: &RunManifest) -> Outcome<String> {
    let n = m.n.expect("validated");
    let spec = m.grid()?;
    let grid = compute_landscape_resumable(n, &spec, &m.template(n)?, m.checkpoint.as_deref())?;
    let dir = &m.output_dir;
    write_rows(&dir.join("landscape.csv"), |w| grid.write_csv(w))?;
    write_json(&dir.join("landscape.json"), &grid.to_json())?;
    write_text(&dir.join("landscape.svg"), &grid.to_svg())?;
    let features = extract_features(
        &grid,
        &FeatureOptions {
            threshold: m.feature_threshold,
            ..FeatureOptions::default()
        },
    );
    write_json(&dir.join("features.json"), &features)?;
    let count = |v: Validity| grid.cells.iter().filter(|c| c.validity == v).count();
    Ok(format!(
        "landscape: N={n} tau={} grid={}x{} valid={} gap={} no_island={} ridges={} valleys={} avoided_pairs={}",
        m.tau,
        grid.width(),
        grid.height(),
        count(Validity::Valid),
        count(Validity::Gap),
        count(Validity::NoIsland),
        features.ridges.len(),
        features.valleys.len(),
        features.avoided_pairs.len()
    ))
}
