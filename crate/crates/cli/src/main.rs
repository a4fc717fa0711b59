use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use machmin::adversary::{gen_deadline_ordered_family, gen_llf_lower_bound, gen_random, play_eight_sevenths, Profile};
use machmin::engine::{Edf, EdfNonpreemptive, Llf, OnlinePolicy};
use machmin::format::{parse_instance, serialize_instance};
use machmin::harness::{
    bench, reference_optimum, report_constants, run_policy, to_csv, to_jsonl, verify, Campaign, Claim, HarnessError,
    PolicyKind, PolicySpec,
};
use machmin::logn::{transform, LaxityTransformSpec, TransformKind};
use machmin::optimum::{optimum_nonpreemptive_exact, optimum_preemptive, strong_density_exact, OracleError};
use machmin::{Instance, Rational};

const OK: u8 = 0;
const MISS: u8 = 1;
const USAGE: u8 = 2;
const ORACLE_CAP: u8 = 3;

#[derive(Parser)]
#[command(name = "machmin", version, about = "Machine minimization for deadline scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance.
    Gen(GenArgs),
    /// Simulate a policy and print its trace.
    Run(RunArgs),
    /// Print an exact optimum.
    Opt(OptArgs),
    /// Check a trace against an instance.
    Verify(VerifyArgs),
    /// Run a benchmark campaign.
    Bench(BenchArgs),
    /// Play the adaptive equal-length game against a budgeted policy.
    Adversary(AdversaryArgs),
    /// Apply a laxity transform.
    Transform(TransformArgs),
}

#[derive(Copy, Clone, ValueEnum)]
enum Family {
    LlfLb,
    Dord,
    Random,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    family: Family,
    /// Comma-separated key=value pairs, e.g. `m=2,c=2,k=3` or `profile=general,n=10,horizon=20`.
    #[arg(long, default_value = "")]
    params: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    policy: String,
    /// Machine budget for edf, llf and edf-np.
    #[arg(long)]
    machines: Option<usize>,
    /// Optimum handed to semi-online policies; computed when absent.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    alpha: Option<Rational>,
    /// Use the online variant of a semi-online composite.
    #[arg(long)]
    online: bool,
    instance: PathBuf,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct OptMode {
    #[arg(long)]
    preemptive: bool,
    #[arg(long)]
    nonpreemptive: bool,
    #[arg(long)]
    strong_density: bool,
}

#[derive(Args)]
struct OptArgs {
    #[command(flatten)]
    mode: OptMode,
    instance: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    instance: PathBuf,
    trace: PathBuf,
    #[arg(long, conflicts_with = "nonpreemptive")]
    preemptive: bool,
    #[arg(long)]
    nonpreemptive: bool,
}

#[derive(Copy, Clone, ValueEnum)]
enum OutputFormat {
    Csv,
    Jsonl,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON campaign file; overrides the individual flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "general")]
    profile: String,
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    horizon: i64,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated policy specs, e.g. `edf@3m,llf`.
    #[arg(long, default_value = "edf")]
    policies: String,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
    /// Add a wall-time column (output is then no longer byte-stable).
    #[arg(long)]
    timing: bool,
    /// Print the log-n constant report to stderr.
    #[arg(long)]
    constants: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct AdversaryArgs {
    /// edf, llf or edf-np.
    #[arg(long)]
    policy: String,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    c: Rational,
    /// Write the final instance here.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum Kind {
    Beta,
    Left,
    Right,
    Lshort,
    Rshort,
    Residue,
}

#[derive(Args)]
struct TransformArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long)]
    param: Rational,
    instance: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Failure {
        Failure {
            code: USAGE,
            message: message.into(),
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Failure {
        let code = if e.is_oracle_cap() { ORACLE_CAP } else { USAGE };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Failure {
        let code = if matches!(e, OracleError::CapExceeded { .. }) { ORACLE_CAP } else { USAGE };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage_err<E: std::fmt::Display>(e: E) -> Failure {
    Failure::usage(e.to_string())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> Result<Instance, Failure> {
    parse_instance(&read(path)?).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn emit(text: &str, output: Option<&Path>) -> Result<(), Failure> {
    match output {
        Some(p) => fs::write(p, text).map_err(|e| Failure::usage(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_params(raw: &str) -> Result<Vec<(String, String)>, Failure> {
    raw.split(',')
        .filter(|s| !s.is_empty())
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Failure::usage(format!("expected key=value, got {kv:?}")))
        })
        .collect()
}

fn param<T: std::str::FromStr>(params: &[(String, String)], key: &str, default: Option<T>) -> Result<T, Failure> {
    match params.iter().find(|(k, _)| k == key) {
        Some((_, v)) => v.parse().map_err(|_| Failure::usage(format!("bad value for {key}: {v:?}"))),
        None => default.ok_or_else(|| Failure::usage(format!("missing parameter {key}"))),
    }
}

fn profile(label: &str) -> Result<Profile, Failure> {
    Profile::parse(label).ok_or_else(|| Failure::usage(format!("unknown profile {label:?}")))
}

fn gen(args: GenArgs) -> Result<u8, Failure> {
    let params = parse_params(&args.params)?;
    let instance = match args.family {
        Family::LlfLb => {
            let lb = gen_llf_lower_bound(
                param(&params, "m", Some(2))?,
                param(&params, "c", Some(2))?,
                param(&params, "k", Some(1))?,
            )
            .map_err(usage_err)?;
            eprintln!("x0={} llf_machines={}", lb.x0, lb.llf_machines);
            lb.instance
        }
        Family::Dord => {
            let family = gen_deadline_ordered_family(param(&params, "m", Some(2))?, param(&params, "n", None)?)
                .map_err(usage_err)?;
            let k: usize = param(&params, "k", Some(1))?;
            if k == 0 || k > family.instances.len() {
                return Err(Failure::usage(format!("k must lie in 1..={}", family.instances.len())));
            }
            eprintln!("scale={} optimum={}", family.scale, family.optimum[k - 1]);
            family.instances[k - 1].clone()
        }
        Family::Random => {
            let g = gen_random(
                profile(&param::<String>(&params, "profile", Some("general".into()))?)?,
                param(&params, "n", Some(10))?,
                param(&params, "horizon", Some(20))?,
                args.seed,
            )
            .map_err(usage_err)?;
            eprintln!("profile={} optimum={}", g.profile.label(), g.optimum);
            g.instance
        }
    };
    emit(&serialize_instance(&instance), args.output.as_deref())?;
    Ok(OK)
}

fn run(args: RunArgs) -> Result<u8, Failure> {
    let instance = load(&args.instance)?;
    let mut spec: PolicySpec = args.policy.parse()?;
    if args.online {
        spec.kind = spec
            .kind
            .online()
            .ok_or_else(|| Failure::usage(format!("{} has no online variant", spec.kind.name())))?;
    }
    spec.alpha = args.alpha;
    let m = if spec.kind.has_budget() {
        args.machines
            .or(args.m)
            .ok_or_else(|| Failure::usage("--machines is required for this policy"))?
    } else {
        match args.m {
            Some(m) => m,
            None => reference_optimum(spec.kind, &instance)?,
        }
    };
    let out = run_policy(&spec, &instance, m)?;
    print!("{}", machmin::format::serialize_trace(&out.run.trace()));
    eprintln!("policy={} {}", out.run.policy, out.run.params);
    if out.scale != 1 {
        eprintln!("times scaled by {}", out.scale);
    }
    eprintln!("machines_used={}", out.run.machines_used);
    if let Some(c) = out.constant {
        eprintln!("constant={c}");
    }
    match out.run.first_miss() {
        Some(miss) => {
            eprintln!("first_miss=job {} at {}", miss.job, miss.time);
            Ok(MISS)
        }
        None => {
            eprintln!("first_miss=none");
            Ok(OK)
        }
    }
}

fn opt(args: OptArgs) -> Result<u8, Failure> {
    let instance = load(&args.instance)?;
    if args.mode.preemptive {
        println!("{}", optimum_preemptive(&instance));
    } else if args.mode.nonpreemptive {
        println!("{}", optimum_nonpreemptive_exact(&instance)?);
    } else {
        println!("{}", strong_density_exact(&instance)?.value);
    }
    Ok(OK)
}

fn verify_cmd(args: VerifyArgs) -> Result<u8, Failure> {
    let claim = match (args.preemptive, args.nonpreemptive) {
        (true, _) => Some(Claim::Preemptive),
        (_, true) => Some(Claim::Nonpreemptive),
        _ => None,
    };
    let report = match verify(&read(&args.instance)?, &read(&args.trace)?, claim) {
        Ok(r) => r,
        Err(HarnessError::FormatMismatch { expected, found }) => {
            eprintln!("trace is {found} but {expected} was claimed");
            return Ok(MISS);
        }
        Err(e) => return Err(e.into()),
    };
    print!("{report}");
    Ok(if report.feasible { OK } else { MISS })
}

fn bench_cmd(args: BenchArgs) -> Result<u8, Failure> {
    let campaign = match &args.config {
        Some(path) => serde_json::from_str::<Campaign>(&read(path)?).map_err(usage_err)?,
        None => Campaign {
            profile: profile(&args.profile)?,
            n: args.n,
            horizon: args.horizon,
            count: args.count,
            seed: args.seed,
            policies: args.policies.split(',').map(str::to_string).collect(),
            timing: args.timing,
        },
    };
    let rows = bench(&campaign)?;
    let text = match args.format {
        OutputFormat::Csv => to_csv(&rows),
        OutputFormat::Jsonl => to_jsonl(&rows),
    };
    emit(&text, args.output.as_deref())?;
    if args.constants {
        eprintln!("{}", report_constants(&rows));
    }
    Ok(OK)
}

fn adversary(args: AdversaryArgs) -> Result<u8, Failure> {
    let kind = args.policy.parse::<PolicySpec>()?.kind;
    let make = move |b: usize| -> Box<dyn OnlinePolicy> {
        match kind {
            PolicyKind::Llf => Box::new(Llf::new(b)),
            PolicyKind::EdfNp => Box::new(EdfNonpreemptive::new(b)),
            _ => Box::new(Edf::new(b)),
        }
    };
    if !kind.has_budget() {
        return Err(Failure::usage("the game needs edf, llf or edf-np"));
    }
    let outcome = play_eight_sevenths(make, args.m, args.c).map_err(usage_err)?;
    println!("budget={} phases={} limit={}", outcome.budget, outcome.phases.len(), outcome.phase_limit());
    for p in &outcome.phases {
        let after = p.residue_after.map_or("-".to_string(), |a| a.to_string());
        println!(
            "phase t={} residue={} due_soon={} residue_after={} trap={}",
            p.t, p.residue_before, p.due_soon, after, p.trap_released
        );
    }
    println!("growth_bound={} observed={}", outcome.growth_bound(), outcome.growth_observed());
    println!("certified={}", outcome.certified);
    if let Some(path) = &args.output {
        emit(&serialize_instance(&outcome.instance), Some(path))?;
    }
    match outcome.forced_miss {
        Some(m) => {
            println!("forced_miss=job {} at {}", m.job, m.time);
            Ok(MISS)
        }
        None => {
            println!("forced_miss=none");
            Ok(OK)
        }
    }
}

fn transform_cmd(args: TransformArgs) -> Result<u8, Failure> {
    let instance = load(&args.instance)?;
    let kind = match args.kind {
        Kind::Beta => TransformKind::ScaleLaxity,
        Kind::Left => TransformKind::LeftPart,
        Kind::Right => TransformKind::RightPart,
        Kind::Lshort => TransformKind::LeftShortened,
        Kind::Rshort => TransformKind::RightShortened,
        Kind::Residue => TransformKind::Residue,
    };
    let out = transform(&instance, &LaxityTransformSpec { kind, param: args.param }).map_err(usage_err)?;
    if out.scale != 1 {
        eprintln!("times scaled by {}", out.scale);
    }
    for id in &out.dropped {
        eprintln!("dropped job {id}");
    }
    print!("{}", serialize_instance(&out.instance));
    Ok(OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Run(a) => run(a),
        Command::Opt(a) => opt(a),
        Command::Verify(a) => verify_cmd(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Adversary(a) => adversary(a),
        Command::Transform(a) => transform_cmd(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
