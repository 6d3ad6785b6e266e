//! `redrec` — verification, simulation, and reconstruction runs for
//! Hamiltonian systems whose momentum map closes under the Poisson bracket.
//!
//! ```text
//! redrec verify        --system elliptic --k 0.5
//! redrec simulate      --system elliptic --k 0.5 --state=-1,0,0,1 --out traj.csv
//! redrec reconstruct   --system elliptic --k 0.5 --mode line --report metrics.json
//! redrec elliptic-table --k 0.5 --t1 10 --samples 1001
//! ```
//!
//! * `verify` runs the exact checks (group structure, momentum bracket
//!   table, closure of `{j_a, h}` in the generators, invariant descent,
//!   split commutation, isotropy kernel) and emits a JSON report; exit 0
//!   iff every check passes.
//! * `simulate` integrates the flow and emits CSV with header
//!   `t,x,y,px,py,h,j1,j2,j3,sigma` truncated to the columns the system
//!   actually defines (its own coordinate names; `h` only when symplectic;
//!   one `j` per momentum component; `sigma` only when a commuting split is
//!   designated). Values carry 17 significant digits, lines end in LF. If
//!   the integrator stops early the partial CSV ends with a
//!   `# status: blow-up` (or `step-limit`) footer and the exit code is 3.
//! * `reconstruct` rebuilds the trajectory from the reduced flow — `line`
//!   (moving-line frame), `second` (lift plus group ODE), or `split`
//!   (commuting composition) — writes the rebuilt CSV to `--out`, and
//!   reports per-coordinate errors against direct integration as JSON;
//!   exit 0 iff every error stays below `--tol`.
//! * `elliptic-table` tabulates `t,sn,cn,dn` for a modulus `k ∈ [0, 1)`.
//!
//! Exit codes: 0 success, 1 verification or tolerance failure, 2 usage
//! error, 3 numerical failure — nothing else. Identical inputs produce
//! byte-identical output files.
//!
//! `--config file.json` supplies defaults under the same names as the flags
//! (kebab-case keys); explicit flags win. `--sweep k=0.1:0.9:0.1` fans the
//! run out over a modulus grid in parallel; per-run files get a `_k<value>`
//! suffix and the process exits with the worst run's code.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use redrec_core::elliptic::{ellipj, EllipticModulus};
use redrec_core::{
    integrate_ode, moving_line_lift, moving_line_reconstruction, poisson_bracket,
    second_reconstruction, split_flow_trajectory, split_hamiltonians, verify_closure,
    verify_invariant_descent, CompiledPoly, Error, GroupKind, IntegratorConfig, Poly, SampleGrid,
    SecondReconstructionOptions, SystemSpec, Termination, Trajectory,
};

/// Sample count for the invariant-descent check and pass threshold on its
/// relative deviation.
const DESCENT_SAMPLES: usize = 100;
const DESCENT_SEED: u64 = 17;
const DESCENT_TOL: f64 = 1e-9;
/// Pass threshold for the isotropy-kernel annihilation residual.
const ISOTROPY_TOL: f64 = 1e-8;
/// Fixed-step count for `--method rk4-fixed`: step = span / this.
const RK4_STEPS: f64 = 1.0e5;

// ---------------------------------------------------------------------------
// Argument surface
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "redrec",
    version,
    about = "Reduce, verify, and reconstruct systems whose momentum map closes under the bracket"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the exact verification suite and emit a JSON report.
    Verify(RunFlags),
    /// Integrate the flow and emit the trajectory as CSV.
    Simulate(RunFlags),
    /// Rebuild a trajectory from the reduced flow and report the error.
    Reconstruct(RunFlags),
    /// Tabulate the Jacobi elliptic functions sn, cn, dn.
    EllipticTable(RunFlags),
}

/// Every command reads the same flag set and uses the fields it needs, so a
/// single `--config` schema serves all four.
#[derive(Args, Clone, Debug, Default)]
struct RunFlags {
    /// Builtin system: elliptic, free-particle, linear-gravity, halfplane-demo.
    #[arg(long)]
    system: Option<String>,

    /// Elliptic modulus; required by `--system elliptic` and `elliptic-table`.
    #[arg(long, allow_negative_numbers = true)]
    k: Option<f64>,

    /// Initial state, comma-separated coordinates (e.g. `-1,0,0,1`).
    #[arg(long, allow_hyphen_values = true, value_name = "x,y,px,py")]
    state: Option<String>,

    /// Start time [default: 0].
    #[arg(long, allow_negative_numbers = true)]
    t0: Option<f64>,

    /// End time [default: 10].
    #[arg(long, allow_negative_numbers = true)]
    t1: Option<f64>,

    /// Number of output samples, endpoints included [default: 1001].
    #[arg(long)]
    samples: Option<usize>,

    /// Integrator [default: dp45-adaptive].
    #[arg(long, value_enum)]
    method: Option<MethodArg>,

    /// Absolute tolerance of the adaptive integrator [default: 1e-10].
    #[arg(long)]
    abs_tol: Option<f64>,

    /// Relative tolerance of the adaptive integrator [default: 1e-10].
    #[arg(long)]
    rel_tol: Option<f64>,

    /// Acceptance threshold on the reconstruction error [default: 1e-5].
    #[arg(long)]
    tol: Option<f64>,

    /// Reconstruction mode [default: line].
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,

    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,

    /// Degree cap when rewriting brackets in the generators [default: 4].
    #[arg(long)]
    max_degree: Option<u32>,

    /// Fan out over a modulus grid, `k=start:end:step`; output files get a
    /// `_k<value>` suffix and the exit code is the worst run's.
    #[arg(long)]
    sweep: Option<String>,

    /// Test hook: displace the lift off the momentum level set by this much
    /// before the second reconstruction.
    #[arg(long, allow_negative_numbers = true)]
    perturb_lift: Option<f64>,

    /// JSON file of defaults, same keys as the flags; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum MethodArg {
    Dp45Adaptive,
    Rk4Fixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum ModeArg {
    Line,
    Second,
    Split,
}

impl ModeArg {
    fn label(self) -> &'static str {
        match self {
            ModeArg::Line => "line",
            ModeArg::Second => "second",
            ModeArg::Split => "split",
        }
    }
}

/// `--config` schema: one optional JSON key per flag, kebab-case, unknown
/// keys rejected. `state` may be the flag's comma string or a number array.
#[derive(Deserialize, Default)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct FileConfig {
    system: Option<String>,
    k: Option<f64>,
    state: Option<StateField>,
    t0: Option<f64>,
    t1: Option<f64>,
    samples: Option<usize>,
    method: Option<MethodArg>,
    abs_tol: Option<f64>,
    rel_tol: Option<f64>,
    tol: Option<f64>,
    mode: Option<ModeArg>,
    out: Option<PathBuf>,
    report: Option<PathBuf>,
    max_degree: Option<u32>,
    sweep: Option<String>,
    perturb_lift: Option<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum StateField {
    Text(String),
    Values(Vec<f64>),
}

/// Flags merged with the config file and filled with defaults.
#[derive(Clone, Debug)]
struct Run {
    system: Option<String>,
    k: Option<f64>,
    state: Option<Vec<f64>>,
    t0: f64,
    t1: f64,
    samples: usize,
    method: MethodArg,
    abs_tol: f64,
    rel_tol: f64,
    tol: f64,
    mode: ModeArg,
    out: Option<PathBuf>,
    report: Option<PathBuf>,
    max_degree: u32,
    perturb_lift: f64,
}

/// Modulus grid of a sweep: each value with its filename label.
type SweepGrid = Vec<(f64, String)>;

fn resolve(flags: &RunFlags) -> Result<(Run, Option<SweepGrid>), Failure> {
    let file: FileConfig = match &flags.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Io(p.clone(), e))?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::Usage(format!("config {}: {e}", p.display())))?
        }
        None => FileConfig::default(),
    };
    let state = match (&flags.state, file.state) {
        (Some(s), _) => Some(parse_state(s)?),
        (None, Some(StateField::Text(s))) => Some(parse_state(&s)?),
        (None, Some(StateField::Values(v))) => Some(v),
        (None, None) => None,
    };
    let sweep = match flags.sweep.clone().or(file.sweep) {
        Some(s) => Some(parse_sweep(&s)?),
        None => None,
    };
    let run = Run {
        system: flags.system.clone().or(file.system),
        k: flags.k.or(file.k),
        state,
        t0: flags.t0.or(file.t0).unwrap_or(0.0),
        t1: flags.t1.or(file.t1).unwrap_or(10.0),
        samples: flags.samples.or(file.samples).unwrap_or(1001),
        method: flags.method.or(file.method).unwrap_or(MethodArg::Dp45Adaptive),
        abs_tol: flags.abs_tol.or(file.abs_tol).unwrap_or(1e-10),
        rel_tol: flags.rel_tol.or(file.rel_tol).unwrap_or(1e-10),
        tol: flags.tol.or(file.tol).unwrap_or(1e-5),
        mode: flags.mode.or(file.mode).unwrap_or(ModeArg::Line),
        out: flags.out.clone().or(file.out),
        report: flags.report.clone().or(file.report),
        max_degree: flags.max_degree.or(file.max_degree).unwrap_or(4),
        perturb_lift: flags.perturb_lift.or(file.perturb_lift).unwrap_or(0.0),
    };
    Ok((run, sweep))
}

fn parse_state(text: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|part| {
            let part = part.trim();
            part.parse::<f64>()
                .map_err(|_| Failure::Usage(format!("bad coordinate `{part}` in --state")))
        })
        .collect()
}

/// `k=start:end:step` → the grid start, start+step, …, ≤ end. Labels are
/// rounded to the decimal precision of the inputs so `k=0.1:0.9:0.1` yields
/// suffixes `0.1 … 0.9` rather than accumulated binary noise.
fn parse_sweep(text: &str) -> Result<SweepGrid, Failure> {
    let usage = || Failure::Usage(format!("bad --sweep `{text}`; expected k=start:end:step"));
    let rest = text.strip_prefix("k=").ok_or_else(usage)?;
    let parts: Vec<&str> = rest.split(':').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(usage());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.parse::<f64>().map_err(|_| usage()))
        .collect::<Result<_, _>>()?;
    let (start, end, step) = (nums[0], nums[1], nums[2]);
    let grid_ok =
        start.is_finite() && end.is_finite() && step.is_finite() && step > 0.0 && end >= start;
    if !grid_ok {
        return Err(usage());
    }
    let decimals = parts
        .iter()
        .map(|p| p.rsplit_once('.').map_or(0, |(_, frac)| frac.len()))
        .max()
        .unwrap_or(0)
        .min(12);
    let scale = 10f64.powi(decimals as i32);
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    if count > 10_000 {
        return Err(Failure::Usage(format!("sweep would launch {count} runs")));
    }
    let mut values = Vec::with_capacity(count);
    for i in 0..count {
        let v = ((start + step * i as f64) * scale).round() / scale;
        values.push((v, format!("{v:.decimals$}")));
    }
    Ok(values)
}

/// `traj.csv` + label `0.3` → `traj_k0.3.csv`.
fn suffixed(path: &Path, label: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_k{label}.{ext}"),
        None => format!("{stem}_k{label}"),
    };
    path.with_file_name(name)
}

// ---------------------------------------------------------------------------
// Failure → exit code
// ---------------------------------------------------------------------------

enum Failure {
    Core(Error),
    Usage(String),
    Io(PathBuf, std::io::Error),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Core(e) => exit_code_for(e),
            Failure::Usage(_) | Failure::Io(..) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Usage(m) => write!(f, "{m}"),
            Failure::Io(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

/// 2 for anything the caller got wrong, 1 for checks the math failed,
/// 3 for numerical breakdown.
fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::DimensionMismatch(_)
        | Error::Parse { .. }
        | Error::NegativeExponent { .. }
        | Error::UnknownSymbol { .. }
        | Error::BadDivisor { .. }
        | Error::ParameterOutOfRange { .. }
        | Error::UnknownSystem(_)
        | Error::NonSymplectic(_)
        | Error::Unsupported(_)
        | Error::InvalidConfig(_) => 2,
        Error::ClosureFailed { .. }
        | Error::NotReducible { .. }
        | Error::NonInvariant
        | Error::InconsistentLift { .. }
        | Error::NonCommutingSplit => 1,
        Error::DegenerateMomentum | Error::NonFinite(_) => 3,
    }
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
enum CommandKind {
    Verify,
    Simulate,
    Reconstruct,
    EllipticTable,
}

struct CmdOutput {
    code: i32,
    stdout: String,
}

fn main() {
    let cli = Cli::parse();
    let (kind, flags) = match &cli.command {
        Command::Verify(f) => (CommandKind::Verify, f),
        Command::Simulate(f) => (CommandKind::Simulate, f),
        Command::Reconstruct(f) => (CommandKind::Reconstruct, f),
        Command::EllipticTable(f) => (CommandKind::EllipticTable, f),
    };
    std::process::exit(run_all(kind, flags));
}

fn run_all(kind: CommandKind, flags: &RunFlags) -> i32 {
    let (run, sweep) = match resolve(flags) {
        Ok(r) => r,
        Err(f) => {
            eprintln!("error: {f}");
            return f.code();
        }
    };
    let Some(values) = sweep else {
        return finish(execute(kind, &run), None);
    };
    let results: Vec<(String, Result<CmdOutput, Failure>)> = thread::scope(|s| {
        let handles: Vec<_> = values
            .into_iter()
            .map(|(kv, label)| {
                let mut r = run.clone();
                r.k = Some(kv);
                r.out = r.out.map(|p| suffixed(&p, &label));
                r.report = r.report.map(|p| suffixed(&p, &label));
                s.spawn(move || (label, execute(kind, &r)))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    let mut worst = 0;
    for (label, res) in results {
        worst = worst.max(finish(res, Some(&label)));
    }
    worst
}

fn finish(res: Result<CmdOutput, Failure>, label: Option<&str>) -> i32 {
    match res {
        Ok(o) => {
            print!("{}", o.stdout);
            o.code
        }
        Err(f) => {
            match label {
                Some(l) => eprintln!("error [k={l}]: {f}"),
                None => eprintln!("error: {f}"),
            }
            f.code()
        }
    }
}

fn execute(kind: CommandKind, run: &Run) -> Result<CmdOutput, Failure> {
    match kind {
        CommandKind::Verify => cmd_verify(run),
        CommandKind::Simulate => cmd_simulate(run),
        CommandKind::Reconstruct => cmd_reconstruct(run),
        CommandKind::EllipticTable => cmd_elliptic_table(run),
    }
}

// ---------------------------------------------------------------------------
// Shared pieces
// ---------------------------------------------------------------------------

fn spec_for(run: &Run) -> Result<SystemSpec, Failure> {
    let name = run
        .system
        .as_deref()
        .ok_or_else(|| Failure::Usage("--system is required".into()))?;
    Ok(SystemSpec::builtin(name, run.k)?)
}

fn initial_state(run: &Run, spec: &SystemSpec) -> Result<Vec<f64>, Failure> {
    let state = match &run.state {
        Some(s) => s.clone(),
        None => default_state(spec.name()),
    };
    if state.len() != spec.phase_dim() {
        return Err(Failure::Usage(format!(
            "--state has {} coordinates, `{}` needs {} ({})",
            state.len(),
            spec.name(),
            spec.phase_dim(),
            spec.coordinate_names().join(",")
        )));
    }
    if state.iter().any(|v| !v.is_finite()) {
        return Err(Failure::Usage("--state coordinates must be finite".into()));
    }
    Ok(state)
}

fn default_state(name: &str) -> Vec<f64> {
    match name {
        "elliptic" => vec![-1.0, 0.0, 0.0, 1.0],
        "free-particle" => vec![0.0, 0.0, 1.0, 0.0],
        "linear-gravity" | "halfplane-demo" => vec![0.0, 1.0],
        _ => Vec::new(),
    }
}

fn require_span(run: &Run) -> Result<(f64, f64), Failure> {
    let ok = run.t0.is_finite() && run.t1.is_finite() && run.t1 > run.t0;
    if !ok {
        return Err(Failure::Usage(format!(
            "t1 must exceed t0 (got t0 = {}, t1 = {})",
            run.t0, run.t1
        )));
    }
    Ok((run.t0, run.t1))
}

fn integrator_config(run: &Run) -> IntegratorConfig {
    match run.method {
        MethodArg::Dp45Adaptive => IntegratorConfig::dp45(run.abs_tol, run.rel_tol),
        MethodArg::Rk4Fixed => IntegratorConfig::rk4((run.t1 - run.t0).abs() / RK4_STEPS),
    }
}

/// 17 significant digits — enough to round-trip any f64.
fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write to the file when a path is given (stdout gets nothing), otherwise
/// hand the text back for stdout.
fn emit(text: String, path: Option<&Path>) -> Result<String, Failure> {
    match path {
        Some(p) => {
            fs::write(p, text.as_bytes()).map_err(|e| Failure::Io(p.to_path_buf(), e))?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

/// CSV of a trajectory: `t`, the system's coordinates, then the observables
/// the system defines — `h`, `j1..jn`, `sigma` (the split generator).
fn trajectory_csv(spec: &SystemSpec, traj: &Trajectory) -> Result<String, Failure> {
    let mut header: Vec<String> = vec!["t".into()];
    header.extend(spec.coordinate_names().iter().cloned());
    let mut obs: Vec<CompiledPoly> = Vec::new();
    if spec.is_hamiltonian() {
        header.push("h".into());
        obs.push(spec.hamiltonian()?.compile());
    }
    for (i, j) in spec.momentum().iter().enumerate() {
        header.push(format!("j{}", i + 1));
        obs.push(j.compile());
    }
    if let Some(sg) = spec.split_generator() {
        header.push("sigma".into());
        obs.push(sg.compile());
    }
    let mut out = String::with_capacity((traj.len() + 1) * header.len() * 26);
    out.push_str(&header.join(","));
    out.push('\n');
    for (t, z) in traj.times.iter().zip(&traj.states) {
        out.push_str(&fmt17(*t));
        for v in z {
            out.push(',');
            out.push_str(&fmt17(*v));
        }
        for o in &obs {
            out.push(',');
            out.push_str(&fmt17(o.eval(z)));
        }
        out.push('\n');
    }
    if traj.status != Termination::Completed {
        out.push_str(&format!("# status: {}\n", traj.status.label()));
    }
    Ok(out)
}

fn max_abs_errors(a: &Trajectory, b: &Trajectory) -> Vec<f64> {
    let n = a.len().min(b.len());
    let mut out = vec![0.0f64; a.dim()];
    for i in 0..n {
        for (c, m) in out.iter_mut().enumerate() {
            *m = m.max((a.states[i][c] - b.states[i][c]).abs());
        }
    }
    out
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CheckEntry {
    name: String,
    status: &'static str,
    detail: String,
}

#[derive(Serialize)]
struct VerifyReport {
    system: String,
    k: Option<f64>,
    max_degree: u32,
    status: &'static str,
    checks: Vec<CheckEntry>,
}

fn pass(name: impl Into<String>, detail: String) -> CheckEntry {
    CheckEntry {
        name: name.into(),
        status: "pass",
        detail,
    }
}

fn fail(name: impl Into<String>, detail: String) -> CheckEntry {
    CheckEntry {
        name: name.into(),
        status: "fail",
        detail,
    }
}

fn skipped(name: impl Into<String>, detail: String) -> CheckEntry {
    CheckEntry {
        name: name.into(),
        status: "skipped",
        detail,
    }
}

fn cmd_verify(run: &Run) -> Result<CmdOutput, Failure> {
    let spec = spec_for(run)?;
    spec.hamiltonian()?; // non-symplectic systems are a usage error here
    let mut checks = Vec::new();

    checks.push(match spec.group().validate() {
        Ok(()) => pass(
            "group-structure",
            format!(
                "`{}`: antisymmetry and the Jacobi identity hold exactly",
                spec.group().name
            ),
        ),
        Err(e) => fail("group-structure", e.to_string()),
    });

    let jj = spec.momentum();
    if !jj.is_empty() {
        let mut bad = Vec::new();
        for a in 0..jj.len() {
            for b in 0..jj.len() {
                let lhs = poisson_bracket(&jj[a], &jj[b])?;
                let mut rhs = Poly::zero(spec.phase_dim());
                for (c, jc) in jj.iter().enumerate() {
                    let coeff = -spec.group().structure_constant(a, b, c).clone();
                    rhs = rhs.checked_add(&jc.scale(&coeff))?;
                }
                if lhs != rhs {
                    bad.push(format!("{{j{},j{}}}", a + 1, b + 1));
                }
            }
        }
        checks.push(if bad.is_empty() {
            pass(
                "momentum-brackets",
                format!(
                    "{{j_a,j_b}} = -c_ab^c j_c holds exactly for all {} pairs",
                    jj.len() * jj.len()
                ),
            )
        } else {
            fail(
                "momentum-brackets",
                format!("mismatched pairs: {}", bad.join(", ")),
            )
        });
    }

    let closure = verify_closure(&spec, run.max_degree)?;
    let gen_names: Vec<String> = (1..=closure.entries.len()).map(|i| format!("J{i}")).collect();
    let gen_refs: Vec<&str> = gen_names.iter().map(String::as_str).collect();
    for e in &closure.entries {
        let name = format!("closure[j{}]", e.index + 1);
        checks.push(match &e.expression {
            Some(p) => pass(
                name,
                format!("{{j{},h}} = {}", e.index + 1, p.to_string_with(&gen_refs)),
            ),
            None => fail(
                name,
                format!(
                    "{{j{},h}} does not factor through the generators at degree {}",
                    e.index + 1,
                    closure.max_degree
                ),
            ),
        });
    }

    let coord_names: Vec<&str> = spec.coordinate_names().iter().map(String::as_str).collect();
    for (i, f) in spec.invariant_generators().iter().enumerate() {
        let name = format!("invariant-descent[{i}]");
        match verify_invariant_descent(&spec, f, DESCENT_SAMPLES, DESCENT_SEED, run.max_degree) {
            Ok(rep) => {
                let detail = format!(
                    "X_h·({}) deviates by at most {:e} across {} group-translated samples",
                    f.to_string_with(&coord_names),
                    rep.max_rel_error,
                    rep.samples
                );
                checks.push(if rep.max_rel_error <= DESCENT_TOL {
                    pass(name, detail)
                } else {
                    fail(name, detail)
                });
            }
            Err(Error::NonInvariant) => checks.push(fail(
                name,
                format!(
                    "{} is not expressible in the invariant generators",
                    f.to_string_with(&coord_names)
                ),
            )),
            Err(e) => return Err(e.into()),
        }
    }

    checks.push(match split_hamiltonians(&spec) {
        Ok(_) => pass(
            "split-commutation",
            "{sigma/2, h - sigma/2} = 0 exactly".into(),
        ),
        Err(Error::Unsupported(_)) => {
            skipped("split-commutation", "no designated split generator".into())
        }
        Err(Error::NonCommutingSplit) => fail(
            "split-commutation",
            "designated split does not commute with the remainder".into(),
        ),
        Err(e) => return Err(e.into()),
    });

    if matches!(spec.group().kind, GroupKind::Se2) {
        let state = initial_state(run, &spec)?;
        let mu = spec.momentum_map(&state)?;
        let basis = spec.group().isotropy_subalgebra(&mu, 1e-8)?;
        // The coadjoint pairing matrix at μ is recoverable from the momentum
        // brackets evaluated at any state with j(state) = μ.
        let m = jj.len();
        let mut pairing = vec![vec![0.0f64; m]; m];
        for a in 0..m {
            for b in 0..m {
                pairing[a][b] = poisson_bracket(&jj[a], &jj[b])?.compile().eval(&state);
            }
        }
        let mut worst = 0.0f64;
        for xi in &basis {
            for row in &pairing {
                let r: f64 = row.iter().zip(xi).map(|(p, x)| p * x).sum();
                worst = worst.max(r.abs());
            }
        }
        let mu_text = mu.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ");
        let detail = format!(
            "kernel dimension {} at mu = ({mu_text}); max annihilation residual {worst:e}",
            basis.len()
        );
        checks.push(if worst <= ISOTROPY_TOL {
            pass("isotropy-kernel", detail)
        } else {
            fail("isotropy-kernel", detail)
        });
    }

    let failed = checks.iter().any(|c| c.status == "fail");
    let report = VerifyReport {
        system: spec.name().to_string(),
        k: run.k,
        max_degree: run.max_degree,
        status: if failed { "fail" } else { "pass" },
        checks,
    };
    let json = serde_json::to_string(&report).expect("report serializes") + "\n";
    let stdout = emit(json, run.report.as_deref())?;
    Ok(CmdOutput {
        code: if failed { 1 } else { 0 },
        stdout,
    })
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn cmd_simulate(run: &Run) -> Result<CmdOutput, Failure> {
    let spec = spec_for(run)?;
    let state = initial_state(run, &spec)?;
    let span = require_span(run)?;
    let field = spec.vector_field()?;
    let cfg = integrator_config(run);
    let traj = integrate_ode(
        field.as_ode_field(),
        &state,
        span,
        &cfg,
        &SampleGrid::Count(run.samples),
    )?;
    let csv = trajectory_csv(&spec, &traj)?;
    let stdout = emit(csv, run.out.as_deref())?;
    Ok(CmdOutput {
        code: if traj.status == Termination::Completed { 0 } else { 3 },
        stdout,
    })
}

// ---------------------------------------------------------------------------
// reconstruct
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct Metrics {
    system: String,
    mode: &'static str,
    max_error: Vec<f64>,
    s_dot_mean: Option<f64>,
    s_dot_stddev: Option<f64>,
}

/// Test hook: push every lift sample off its line by `eps` in the position
/// direction normal to it. This breaks `j(b(t)) = μ(t)` in the third
/// component by `eps·√σ`, which the lift-consistency check must catch.
fn perturb_lift_states(lift: &mut Trajectory, eps: f64) {
    for z in &mut lift.states {
        let (px, py) = (z[2], z[3]);
        let norm = (px * px + py * py).sqrt();
        if norm == 0.0 {
            continue;
        }
        z[0] -= eps * py / norm;
        z[1] += eps * px / norm;
    }
}

fn cmd_reconstruct(run: &Run) -> Result<CmdOutput, Failure> {
    let spec = spec_for(run)?;
    let state = initial_state(run, &spec)?;
    let span = require_span(run)?;
    let cfg = integrator_config(run);
    let grid = SampleGrid::Count(run.samples);

    let (traj, max_error, s_dot) = match run.mode {
        ModeArg::Line => {
            let r =
                moving_line_reconstruction(&spec, &state, span, &cfg, &grid, run.max_degree)?;
            (r.reconstructed, r.max_error, r.s_dot)
        }
        ModeArg::Second => {
            let mut lift = moving_line_lift(&spec, &state, span, &cfg, &grid, run.max_degree)?;
            if run.perturb_lift != 0.0 {
                perturb_lift_states(&mut lift, run.perturb_lift);
            }
            let opts = SecondReconstructionOptions {
                max_degree: run.max_degree,
                ..Default::default()
            };
            let r = second_reconstruction(&spec, &lift, &cfg, &opts)?;
            (r.reconstructed, r.max_error, None)
        }
        ModeArg::Split => {
            split_hamiltonians(&spec)?;
            let traj = split_flow_trajectory(&spec, &state, span, &cfg, &grid)?;
            let field = spec.vector_field()?;
            let reference = integrate_ode(field.as_ode_field(), &state, span, &cfg, &grid)?;
            let max_error = max_abs_errors(&traj, &reference);
            (traj, max_error, None)
        }
    };

    if traj.status != Termination::Completed {
        return Err(Error::NonFinite(format!(
            "reconstruction stopped early at t = {}: {}",
            traj.t_end,
            traj.status.label()
        ))
        .into());
    }

    let metrics = Metrics {
        system: spec.name().to_string(),
        mode: run.mode.label(),
        max_error: max_error.clone(),
        s_dot_mean: s_dot.map(|s| s.mean),
        s_dot_stddev: s_dot.map(|s| s.stddev),
    };
    if let Some(p) = &run.out {
        let csv = trajectory_csv(&spec, &traj)?;
        fs::write(p, csv.as_bytes()).map_err(|e| Failure::Io(p.clone(), e))?;
    }
    let json = serde_json::to_string(&metrics).expect("metrics serialize") + "\n";
    let stdout = emit(json, run.report.as_deref())?;

    let code = if max_error.iter().any(|e| !e.is_finite()) {
        3
    } else if max_error.iter().all(|e| *e < run.tol) {
        0
    } else {
        1
    };
    Ok(CmdOutput { code, stdout })
}

// ---------------------------------------------------------------------------
// elliptic-table
// ---------------------------------------------------------------------------

fn cmd_elliptic_table(run: &Run) -> Result<CmdOutput, Failure> {
    let k = run
        .k
        .ok_or_else(|| Failure::Usage("--k is required for elliptic-table".into()))?;
    let modulus = EllipticModulus::new(k)?;
    let span = require_span(run)?;
    let times = SampleGrid::Count(run.samples).materialize(span.0, span.1)?;
    let mut out = String::with_capacity((times.len() + 1) * 4 * 26);
    out.push_str("t,sn,cn,dn\n");
    for t in times {
        let (sn, cn, dn) = ellipj(t, modulus);
        out.push_str(&fmt17(t));
        for v in [sn, cn, dn] {
            out.push(',');
            out.push_str(&fmt17(v));
        }
        out.push('\n');
    }
    let stdout = emit(out, run.out.as_deref())?;
    Ok(CmdOutput { code: 0, stdout })
}
