use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use bell_lab_core::audit::{
    check_anticorrelation, check_bell_locality, check_signal_locality, detect_equal_axes,
    AxisPair, LocalityVerdict, SignalVerdict,
};
use bell_lab_core::bell::{
    bell1964, chsh, local_polytope_membership, BellTestOptions, BellTestResult, ChshSettings,
    CorrelatorEntry,
};
use bell_lab_core::document::{read_theory, theory_to_json};
use bell_lab_core::instructions::{classify_states, derive_instruction_sets, Derivation};
use bell_lab_core::model::{behavior, TheoryModel};
use bell_lab_core::montecarlo::{observables, run_experiment, summarize, write_csv, SettingPolicy};
use bell_lab_core::report::{
    self, digest_hex, pipeline_for_model, report_to_json, report_to_text, PipelineOptions,
    SimulationOptions,
};
use bell_lab_core::singlet::{make_quantum_theory, planar_settings, SingletSpec};
use bell_lab_core::{Error, DEFAULT_TOL};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

/// Exit status for a negative verdict.
const EXIT_NEGATIVE: u8 = 1;
/// Exit status for unreadable or malformed input.
const EXIT_INPUT: u8 = 2;

#[derive(Parser)]
#[command(name = "bell-lab", version, about = "Audit hidden-variable theories of the EPRB experiment")]
struct Cli {
    /// Tolerance for decimal models; exact models are checked exactly.
    #[arg(long, global = true, default_value_t = DEFAULT_TOL)]
    tol: f64,

    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    /// Seed for simulations.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct AxesArg {
    /// Equal-axis pairs `alice=bob`, comma separated. Detected from the
    /// direction vectors when omitted.
    #[arg(long)]
    axes: Option<String>,
}

impl AxesArg {
    fn resolve(&self, model: &TheoryModel) -> Vec<AxisPair> {
        match &self.axes {
            Some(text) => AxisPair::parse_list(text),
            None => detect_equal_axes(&model.scenario),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a theory document against the model invariants.
    Validate { spec: PathBuf },
    /// Bell Locality audit of every kernel cell.
    CheckLocality { spec: PathBuf },
    /// Signal Locality of the observable behaviour.
    CheckSignal { spec: PathBuf },
    /// Perfect anti-correlation on equal axes for every hidden state.
    CheckAnticorrelation {
        spec: PathBuf,
        #[command(flatten)]
        axes: AxesArg,
    },
    /// Recover deterministic instruction sets on the equal axes.
    DeriveInstructions {
        spec: PathBuf,
        #[command(flatten)]
        axes: AxesArg,
    },
    /// Correlators, CHSH, the three-axis inequality and polytope membership.
    /// Runs every applicable test when none is selected.
    BellTest {
        spec: PathBuf,
        /// CHSH settings `a,a':b,b'`.
        #[arg(long)]
        chsh: Option<String>,
        /// Three equal-axis pairs `a=a,b=b,c=c`.
        #[arg(long)]
        bell1964: Option<String>,
        #[arg(long)]
        membership: bool,
    },
    /// Monte Carlo runs of the EPRB experiment.
    Simulate {
        spec: PathBuf,
        #[arg(long)]
        trials: u64,
        /// `uniform` or `sequence:<file>` with `alice,bob` lines.
        #[arg(long, default_value = "uniform")]
        policy: String,
        /// Write the trial records as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include the hidden state in the CSV.
        #[arg(long)]
        reveal_lambda: bool,
        /// CHSH settings for the estimate; the declared order for 2x2.
        #[arg(long)]
        chsh: Option<String>,
    },
    /// Full pipeline: validation, audits, derivation, Bell tests and an
    /// optional simulation.
    Report {
        spec: PathBuf,
        #[command(flatten)]
        axes: AxesArg,
        #[arg(long)]
        chsh: Option<String>,
        #[arg(long)]
        bell1964: Option<String>,
        /// Skip the local-polytope membership test.
        #[arg(long)]
        no_membership: bool,
        /// Add a simulation with this many trials.
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long, default_value = "uniform")]
        policy: String,
    },
    /// Emit the theory document of the quantum singlet for planar angles.
    Singlet {
        /// Alice's settings, `id=degrees,...`.
        #[arg(long)]
        alice: String,
        /// Bob's settings, `id=degrees,...`.
        #[arg(long)]
        bob: String,
    },
}

/// An error that maps to exit status 2.
struct InputError(anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for InputError {
    fn from(e: E) -> Self {
        InputError(e.into())
    }
}

type Outcome = Result<u8, InputError>;

fn load(path: &Path) -> anyhow::Result<(TheoryModel, Vec<u8>)> {
    read_theory(path).with_context(|| format!("reading {}", path.display()))
}

/// Loads a model and rejects it with the violation list when invalid.
fn load_valid(path: &Path, tol: f64) -> anyhow::Result<TheoryModel> {
    let (model, _) = load(path)?;
    let report = model.validate(tol);
    if !report.is_valid() {
        bail!(Error::InvalidModel(report));
    }
    Ok(model)
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn parse_policy(text: &str) -> anyhow::Result<SettingPolicy> {
    if text == "uniform" {
        return Ok(SettingPolicy::Uniform);
    }
    let Some(path) = text.strip_prefix("sequence:") else {
        bail!("unknown policy `{text}`; expected `uniform` or `sequence:<file>`");
    };
    let file = File::open(path).with_context(|| format!("opening {path}"))?;
    Ok(SettingPolicy::read_sequence(BufReader::new(file))?)
}

fn parse_triple(text: &str) -> anyhow::Result<[AxisPair; 3]> {
    let list = AxisPair::parse_list(text);
    let n = list.len();
    list.try_into()
        .map_err(|_| anyhow::anyhow!("--bell1964 needs three axis pairs, got {n}"))
}

fn default_chsh(model: &TheoryModel) -> Option<ChshSettings> {
    let s = &model.scenario;
    (s.alice.len() == 2 && s.bob.len() == 2)
        .then(|| ChshSettings::new(&s.alice[0].id, &s.alice[1].id, &s.bob[0].id, &s.bob[1].id))
}

fn validate(cli: &Cli, spec: &Path) -> Outcome {
    let (model, _) = load(spec)?;
    let report = model.validate(cli.tol);
    match cli.format {
        Format::Json => print_json(&json!({
            "model": model.name,
            "valid": report.is_valid(),
            "violations": report.violations,
        })),
        Format::Text => {
            let mut out = String::new();
            report::render_validation(&mut out, &report);
            print!("{out}");
        }
    }
    Ok(if report.is_valid() { 0 } else { EXIT_NEGATIVE })
}

fn check_locality(cli: &Cli, spec: &Path) -> Outcome {
    let model = load_valid(spec, cli.tol)?;
    let r = check_bell_locality(&model, cli.tol)?;
    match cli.format {
        Format::Json => print_json(&r),
        Format::Text => {
            let mut out = String::new();
            report::render_locality(&mut out, &r);
            print!("{out}");
        }
    }
    Ok(if r.verdict == LocalityVerdict::BellLocal { 0 } else { EXIT_NEGATIVE })
}

fn check_signal(cli: &Cli, spec: &Path) -> Outcome {
    let model = load_valid(spec, cli.tol)?;
    let r = check_signal_locality(&model, cli.tol)?;
    match cli.format {
        Format::Json => print_json(&r),
        Format::Text => {
            let mut out = String::new();
            report::render_signal(&mut out, &r);
            for d in r.deltas.iter().filter(|d| !d.delta.is_zero_tol(cli.tol)) {
                out.push_str(&format!(
                    "  {} {} outcome {}: far {} vs {} differ by {}\n",
                    d.side, d.own_setting, d.outcome, d.far_settings.0, d.far_settings.1, d.delta
                ));
            }
            print!("{out}");
        }
    }
    Ok(if r.verdict == SignalVerdict::SignalLocal { 0 } else { EXIT_NEGATIVE })
}

fn check_anticorr(cli: &Cli, spec: &Path, axes: &AxesArg) -> Outcome {
    let model = load_valid(spec, cli.tol)?;
    let axes = axes.resolve(&model);
    if axes.is_empty() {
        return Err(anyhow::anyhow!("no equal-axis pairs given with --axes or detected from directions").into());
    }
    let r = check_anticorrelation(&model, &axes, cli.tol)?;
    match cli.format {
        Format::Json => print_json(&r),
        Format::Text => {
            let mut out = String::new();
            report::render_anticorrelation(&mut out, &r);
            print!("{out}");
        }
    }
    Ok(if r.holds { 0 } else { EXIT_NEGATIVE })
}

fn derive(cli: &Cli, spec: &Path, axes: &AxesArg) -> Outcome {
    let model = load_valid(spec, cli.tol)?;
    let axes = axes.resolve(&model);
    if axes.is_empty() {
        return Err(anyhow::anyhow!("no equal-axis pairs given with --axes or detected from directions").into());
    }
    let d = derive_instruction_sets(&model, &axes, cli.tol)?;
    let partition = match &d {
        Derivation::Instructions(instr) => Some(classify_states(instr, &axes)?),
        Derivation::Failure(_) => None,
    };
    match cli.format {
        Format::Json => print_json(&json!({ "derivation": d, "partition": partition })),
        Format::Text => {
            let mut out = String::new();
            report::render_derivation(&mut out, &d);
            if let Some(p) = &partition {
                report::render_partition(&mut out, p);
            }
            print!("{out}");
        }
    }
    Ok(if d.instructions().is_some() { 0 } else { EXIT_NEGATIVE })
}

fn bell_test(
    cli: &Cli,
    spec: &Path,
    chsh_arg: Option<&str>,
    bell1964_arg: Option<&str>,
    membership: bool,
) -> Outcome {
    let model = load_valid(spec, cli.tol)?;
    let beh = behavior(&model, cli.tol)?;
    let run_all = chsh_arg.is_none() && bell1964_arg.is_none() && !membership;
    let mut options = BellTestOptions {
        chsh: chsh_arg.map(ChshSettings::parse).transpose()?,
        bell1964: bell1964_arg.map(parse_triple).transpose()?,
        membership,
    };
    if run_all {
        options.chsh = default_chsh(&model);
        options.bell1964 = detect_equal_axes(&model.scenario).try_into().ok();
        options.membership = true;
    }
    let correlators = beh
        .cells
        .iter()
        .map(|c| CorrelatorEntry {
            alice: c.alice.clone(),
            bob: c.bob.clone(),
            value: c.p.correlator(),
        })
        .collect();
    // when running everything, tests whose preconditions fail are omitted
    let result = BellTestResult {
        correlators,
        chsh: match &options.chsh {
            Some(s) => Some(chsh(&beh, s, cli.tol)?),
            None => None,
        },
        bell1964: match &options.bell1964 {
            Some(t) if run_all => bell1964(&beh, t, cli.tol).ok(),
            Some(t) => Some(bell1964(&beh, t, cli.tol)?),
            None => None,
        },
        membership: if !options.membership {
            None
        } else if run_all {
            local_polytope_membership(&beh, &model.scenario, cli.tol).ok()
        } else {
            Some(local_polytope_membership(&beh, &model.scenario, cli.tol)?)
        },
    };
    match cli.format {
        Format::Json => print_json(&result),
        Format::Text => {
            let mut out = String::new();
            report::render_correlators(&mut out, &result.correlators);
            if let Some(c) = &result.chsh {
                report::render_chsh(&mut out, c);
            }
            if let Some(b) = &result.bell1964 {
                report::render_bell1964(&mut out, b);
            }
            if let Some(m) = &result.membership {
                report::render_membership(&mut out, m);
            }
            print!("{out}");
        }
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    cli: &Cli,
    spec: &Path,
    trials: u64,
    policy: &str,
    out_path: Option<&Path>,
    reveal_lambda: bool,
    chsh_arg: Option<&str>,
) -> Outcome {
    let model = load_valid(spec, cli.tol)?;
    let policy = parse_policy(policy)?;
    let settings = match chsh_arg {
        Some(text) => Some(ChshSettings::parse(text)?),
        None => default_chsh(&model),
    };
    let records = run_experiment(&model, trials, cli.seed, &policy, cli.tol)?;
    let mut stats = summarize(&observables(&records), &model.scenario, settings.as_ref())?;
    stats.seed = Some(cli.seed);
    if let Some(path) = out_path {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        write_csv(&records, reveal_lambda, &mut w)?;
        w.flush()?;
    }
    match cli.format {
        Format::Json => print_json(&stats),
        Format::Text => {
            let mut out = String::new();
            report::render_stats(&mut out, &stats);
            print!("{out}");
        }
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn run_report(
    cli: &Cli,
    spec: &Path,
    axes: &AxesArg,
    chsh_arg: Option<&str>,
    bell1964_arg: Option<&str>,
    no_membership: bool,
    trials: Option<u64>,
    policy: &str,
) -> Outcome {
    let (model, bytes) = load(spec)?;
    let options = PipelineOptions {
        tol: cli.tol,
        axes: axes.axes.as_deref().map(AxisPair::parse_list),
        chsh: chsh_arg.map(ChshSettings::parse).transpose()?,
        bell1964: bell1964_arg.map(parse_triple).transpose()?,
        membership: !no_membership,
        simulation: match trials {
            Some(trials) => Some(SimulationOptions {
                trials,
                seed: cli.seed,
                policy: parse_policy(policy)?,
            }),
            None => None,
        },
    };
    let r = pipeline_for_model(&model, &digest_hex(&bytes), &options);
    match cli.format {
        Format::Json => print!("{}", report_to_json(&r)),
        Format::Text => print!("{}", report_to_text(&r)),
    }
    // an invalid model is an input error; the report still lists why
    Ok(if r.validation.is_valid() { 0 } else { EXIT_INPUT })
}

fn singlet(alice: &str, bob: &str) -> Outcome {
    let spec = SingletSpec {
        alice: planar_settings(alice)?,
        bob: planar_settings(bob)?,
    };
    let model = make_quantum_theory(&spec)?;
    print!("{}", theory_to_json(&model));
    Ok(0)
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var("BELL_LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .with_context(|| format!("BELL_LAB_THREADS must be a count, got `{value}`"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    configure_threads()?;
    match &cli.command {
        Command::Validate { spec } => validate(cli, spec),
        Command::CheckLocality { spec } => check_locality(cli, spec),
        Command::CheckSignal { spec } => check_signal(cli, spec),
        Command::CheckAnticorrelation { spec, axes } => check_anticorr(cli, spec, axes),
        Command::DeriveInstructions { spec, axes } => derive(cli, spec, axes),
        Command::BellTest {
            spec,
            chsh,
            bell1964,
            membership,
        } => bell_test(cli, spec, chsh.as_deref(), bell1964.as_deref(), *membership),
        Command::Simulate {
            spec,
            trials,
            policy,
            out,
            reveal_lambda,
            chsh,
        } => simulate(cli, spec, *trials, policy, out.as_deref(), *reveal_lambda, chsh.as_deref()),
        Command::Report {
            spec,
            axes,
            chsh,
            bell1964,
            no_membership,
            trials,
            policy,
        } => run_report(
            cli,
            spec,
            axes,
            chsh.as_deref(),
            bell1964.as_deref(),
            *no_membership,
            *trials,
            policy,
        ),
        Command::Singlet { alice, bob } => singlet(alice, bob),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(InputError(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
