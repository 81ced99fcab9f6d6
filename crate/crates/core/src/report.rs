//! The end-to-end pipeline: validate, audit, derive, test and optionally
//! simulate one theory document, collected into a [`RunReport`].

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audit::{
    check_anticorrelation, check_bell_locality, detect_equal_axes, signal_report,
    AntiCorrelationReport, AxisPair, LocalityReport, SignalReport,
};
use crate::bell::{
    bell1964, chsh, local_polytope_membership, Bell1964Result, ChshResult, ChshSettings,
    CorrelatorEntry, MembershipCertificate,
};
use crate::document::read_theory;
use crate::error::{Error, Result};
use crate::instructions::{classify_states, derive_instruction_sets, ClassPartition, Derivation};
use crate::model::{behavior, TheoryModel, ValidationReport};
use crate::montecarlo::{observables, run_experiment, summarize, ExperimentStats, SettingPolicy};

pub const TOOL_NAME: &str = "bell-lab";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A report section that either ran or was skipped for a stated reason.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Section<T> {
    Done { result: T },
    Skipped { reason: String },
}

impl<T> Section<T> {
    pub fn done(&self) -> Option<&T> {
        match self {
            Section::Done { result } => Some(result),
            Section::Skipped { .. } => None,
        }
    }

    fn skipped(reason: impl Into<String>) -> Self {
        Section::Skipped {
            reason: reason.into(),
        }
    }

    fn from_result(r: Result<T>) -> Self {
        match r {
            Ok(result) => Section::Done { result },
            Err(e) => Section::skipped(e.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationOptions {
    pub trials: u64,
    pub seed: u64,
    pub policy: SettingPolicy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOptions {
    pub tol: f64,
    /// Equal-axis pairs; detected from directions when absent.
    pub axes: Option<Vec<AxisPair>>,
    /// CHSH settings; the declared order is used for 2×2 scenarios when
    /// absent.
    pub chsh: Option<ChshSettings>,
    /// Three-axis test; the detected axes are used when exactly three exist.
    pub bell1964: Option<[AxisPair; 3]>,
    pub membership: bool,
    pub simulation: Option<SimulationOptions>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            tol: crate::prob::DEFAULT_TOL,
            axes: None,
            chsh: None,
            bell1964: None,
            membership: true,
            simulation: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub tool_version: String,
    /// SHA-256 of the input bytes, lowercase hex.
    pub input_digest: String,
    pub model: String,
    pub tolerance: f64,
    pub validation: ValidationReport,
    pub locality: Section<LocalityReport>,
    pub signal: Section<SignalReport>,
    pub anticorrelation: Section<AntiCorrelationReport>,
    pub derivation: Section<Derivation>,
    pub partition: Section<ClassPartition>,
    pub correlators: Section<Vec<CorrelatorEntry>>,
    pub chsh: Section<ChshResult>,
    pub bell1964: Section<Bell1964Result>,
    pub membership: Section<MembershipCertificate>,
    pub simulation: Section<ExperimentStats>,
}

pub fn digest_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads and parses the document at `path`, then runs the pipeline. Only
/// input errors (unreadable file, parse or schema errors) are returned as
/// `Err`; everything else ends up in the report.
pub fn run_pipeline(path: impl AsRef<Path>, options: &PipelineOptions) -> Result<RunReport> {
    let (model, bytes) = read_theory(path)?;
    Ok(pipeline_for_model(&model, &digest_hex(&bytes), options))
}

pub fn pipeline_for_model(model: &TheoryModel, input_digest: &str, options: &PipelineOptions) -> RunReport {
    let tol = options.tol;
    let validation = model.validate(tol);
    let mut report = RunReport {
        tool: TOOL_NAME.into(),
        tool_version: TOOL_VERSION.into(),
        input_digest: input_digest.into(),
        model: model.name.clone(),
        tolerance: tol,
        validation,
        locality: Section::skipped("model is invalid"),
        signal: Section::skipped("model is invalid"),
        anticorrelation: Section::skipped("model is invalid"),
        derivation: Section::skipped("model is invalid"),
        partition: Section::skipped("model is invalid"),
        correlators: Section::skipped("model is invalid"),
        chsh: Section::skipped("model is invalid"),
        bell1964: Section::skipped("model is invalid"),
        membership: Section::skipped("model is invalid"),
        simulation: Section::skipped("model is invalid"),
    };
    if !report.validation.is_valid() {
        return report;
    }

    let beh = behavior(model, tol).expect("validated");
    let scenario = &model.scenario;
    report.locality = Section::from_result(check_bell_locality(model, tol));
    report.signal = Section::from_result(signal_report(&beh, scenario, tol));

    let axes = options.axes.clone().unwrap_or_else(|| detect_equal_axes(scenario));
    if axes.is_empty() {
        let reason = "no equal-axis pairs declared or detected";
        report.anticorrelation = Section::skipped(reason);
        report.derivation = Section::skipped(reason);
        report.partition = Section::skipped(reason);
    } else {
        report.anticorrelation = Section::from_result(check_anticorrelation(model, &axes, tol));
        report.derivation = Section::from_result(derive_instruction_sets(model, &axes, tol));
        report.partition = match report.derivation.done() {
            Some(Derivation::Instructions(instr)) => {
                Section::from_result(classify_states(instr, &axes))
            }
            Some(Derivation::Failure(_)) => Section::skipped("no instruction sets exist"),
            None => Section::skipped("derivation did not run"),
        };
    }

    report.correlators = Section::Done {
        result: beh
            .cells
            .iter()
            .map(|c| CorrelatorEntry {
                alice: c.alice.clone(),
                bob: c.bob.clone(),
                value: c.p.correlator(),
            })
            .collect(),
    };

    let chsh_settings = options.chsh.clone().or_else(|| {
        (scenario.alice.len() == 2 && scenario.bob.len() == 2).then(|| {
            ChshSettings::new(
                &scenario.alice[0].id,
                &scenario.alice[1].id,
                &scenario.bob[0].id,
                &scenario.bob[1].id,
            )
        })
    });
    report.chsh = match chsh_settings {
        Some(s) => Section::from_result(chsh(&beh, &s, tol)),
        None => Section::skipped("no CHSH settings given and the scenario is not 2x2"),
    };

    let triple = options
        .bell1964
        .clone()
        .or_else(|| <[AxisPair; 3]>::try_from(axes.clone()).ok());
    report.bell1964 = match triple {
        Some(t) => Section::from_result(bell1964(&beh, &t, tol)),
        None => Section::skipped("needs exactly three equal-axis pairs"),
    };

    report.membership = if options.membership {
        Section::from_result(local_polytope_membership(&beh, scenario, tol))
    } else {
        Section::skipped("not requested")
    };

    report.simulation = match &options.simulation {
        Some(sim) => Section::from_result(simulate(model, sim, report.chsh.done().map(|c| &c.settings), tol)),
        None => Section::skipped("not requested"),
    };
    report
}

fn simulate(
    model: &TheoryModel,
    sim: &SimulationOptions,
    chsh: Option<&ChshSettings>,
    tol: f64,
) -> Result<ExperimentStats> {
    let records = run_experiment(model, sim.trials, sim.seed, &sim.policy, tol)?;
    let mut stats = summarize(&observables(&records), &model.scenario, chsh)?;
    stats.seed = Some(sim.seed);
    Ok(stats)
}

/// Pretty JSON with a trailing newline. Parsing the output with
/// [`report_from_json`] and rendering again gives the same bytes.
pub fn report_to_json(report: &RunReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn report_from_json(text: &str) -> Result<RunReport> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

// ---------------------------------------------------------------------------
// Text rendering. Everything is listed in scenario declaration order.

pub fn render_validation(out: &mut String, v: &ValidationReport) {
    if v.is_valid() {
        let _ = writeln!(out, "validation: valid");
    } else {
        let _ = writeln!(out, "validation: {} violation(s)", v.violations.len());
        for x in &v.violations {
            let _ = writeln!(out, "  {x}");
        }
    }
}

pub fn render_locality(out: &mut String, r: &LocalityReport) {
    let _ = writeln!(out, "bell locality: {}", r.verdict);
    let _ = writeln!(out, "  worst residual: {}", r.worst_residual);
    let _ = writeln!(out, "  residual metric: {}", r.residual_metric);
    let _ = writeln!(out, "  conditional-form failures: {}", r.conditional_form_failures);
    for v in &r.violations {
        let _ = writeln!(
            out,
            "  state {} cell {}|{} A={} B={}: P(A,B)={} vs P(A)P(B)={} (residual {})",
            v.state, v.alice, v.bob, v.a, v.b, v.lhs, v.rhs, v.residual
        );
    }
}

pub fn render_signal(out: &mut String, r: &SignalReport) {
    let _ = writeln!(out, "signal locality: {}", r.verdict);
    let _ = writeln!(out, "  max delta: {}", r.max_delta);
}

pub fn render_anticorrelation(out: &mut String, r: &AntiCorrelationReport) {
    let _ = writeln!(
        out,
        "anti-correlation: {}",
        if r.holds { "holds" } else { "fails" }
    );
    for axis in &r.axes {
        let _ = writeln!(
            out,
            "  axis {}: {}",
            axis.axis,
            if axis.holds { "ok" } else { "fails" }
        );
        for s in axis.offending() {
            let _ = writeln!(out, "    state {}: p(+,+)={} p(-,-)={}", s.state, s.pp, s.mm);
        }
    }
}

pub fn render_derivation(out: &mut String, d: &Derivation) {
    match d {
        Derivation::Instructions(set) => {
            let _ = writeln!(out, "instruction sets: derived for {} state(s)", set.states.len());
            for s in &set.states {
                let fmt = |v: &[(String, crate::instructions::Response)]| {
                    v.iter()
                        .map(|(id, r)| match r {
                            crate::instructions::Response::Determined(o) => format!("{id}{}", o.symbol()),
                            crate::instructions::Response::Unconstrained(p) => format!("{id}~{p}"),
                        })
                        .collect::<Vec<_>>()
                        .join(" ")
                };
                let _ = writeln!(
                    out,
                    "  state {} (weight {}): A[{}] B[{}]",
                    s.state,
                    s.weight,
                    fmt(&s.alice),
                    fmt(&s.bob)
                );
            }
        }
        Derivation::Failure(f) => {
            let _ = writeln!(out, "instruction sets: none");
            let _ = writeln!(out, "  {f}");
        }
    }
}

pub fn render_partition(out: &mut String, p: &ClassPartition) {
    let _ = writeln!(
        out,
        "pattern classes: {} of {} nonempty",
        p.nonempty().count(),
        p.classes.len()
    );
    for c in &p.classes {
        let _ = writeln!(
            out,
            "  {} weight {}{}",
            c.label(),
            c.weight,
            if c.members.is_empty() {
                String::new()
            } else {
                format!(" [{}]", c.members.join(", "))
            }
        );
    }
}

pub fn render_correlators(out: &mut String, entries: &[CorrelatorEntry]) {
    let _ = writeln!(out, "correlators:");
    for e in entries {
        let _ = writeln!(out, "  E({}, {}) = {}", e.alice, e.bob, e.value);
    }
}

pub fn render_chsh(out: &mut String, c: &ChshResult) {
    let _ = writeln!(out, "chsh: S = {} (local bound {}){}", c.value, c.local_bound,
        if c.violated { ", violated" } else { "" });
    let _ = writeln!(out, "  convention: {}", c.convention);
    let _ = writeln!(
        out,
        "  settings: a={} a'={} b={} b'={}",
        c.settings.a, c.settings.a2, c.settings.b, c.settings.b2
    );
}

pub fn render_bell1964(out: &mut String, r: &Bell1964Result) {
    let _ = writeln!(
        out,
        "bell 1964: |E(a,b) - E(a,c)| = {} vs 1 + E(b,c) = {}{}",
        r.lhs,
        r.rhs,
        if r.violated { ", violated" } else { ", satisfied" }
    );
    let _ = writeln!(
        out,
        "  axes: {}, {}, {}",
        r.axes[0], r.axes[1], r.axes[2]
    );
}

pub fn render_membership(out: &mut String, m: &MembershipCertificate) {
    let _ = writeln!(out, "local polytope: {m}");
    match m {
        MembershipCertificate::Inside { weights, .. } => {
            for w in weights {
                let _ = writeln!(out, "  {} {}", w.weight, w.strategy.label());
            }
        }
        MembershipCertificate::Outside { separator, .. } => {
            for t in &separator.terms {
                let _ = writeln!(
                    out,
                    "  {} * P({}{}|{},{})",
                    t.coefficient,
                    t.a.symbol(),
                    t.b.symbol(),
                    t.alice,
                    t.bob
                );
            }
        }
    }
}

pub fn render_stats(out: &mut String, s: &ExperimentStats) {
    let _ = write!(out, "simulation: {} trials", s.trials);
    if let Some(seed) = s.seed {
        let _ = write!(out, ", seed {seed}");
    }
    let _ = writeln!(out);
    for p in &s.pairs {
        let _ = writeln!(
            out,
            "  {}|{}: n={} counts(++,+-,-+,--)={:?} E={:.6} +/- {:.6}",
            p.alice, p.bob, p.total, p.counts, p.correlator, p.correlator_se
        );
    }
    for (a, b) in &s.absent {
        let _ = writeln!(out, "  {a}|{b}: absent");
    }
    if let Some(c) = &s.chsh {
        let _ = writeln!(out, "  chsh estimate: {:.6} +/- {:.6}", c.value, c.se);
    }
    for d in &s.no_signaling {
        let _ = writeln!(
            out,
            "  no-signaling {} {} far {} vs {}: {:.6} +/- {:.6}",
            d.side, d.own_setting, d.far_settings.0, d.far_settings.1, d.delta, d.se
        );
    }
}

fn section<T>(out: &mut String, title: &str, s: &Section<T>, render: impl FnOnce(&mut String, &T)) {
    match s {
        Section::Done { result } => render(out, result),
        Section::Skipped { reason } => {
            let _ = writeln!(out, "{title}: skipped ({reason})");
        }
    }
}

pub fn report_to_text(r: &RunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", r.tool, r.tool_version);
    let _ = writeln!(out, "model: {}", r.model);
    let _ = writeln!(out, "input sha256: {}", r.input_digest);
    let _ = writeln!(out, "tolerance: {}", r.tolerance);
    render_validation(&mut out, &r.validation);
    section(&mut out, "bell locality", &r.locality, render_locality);
    section(&mut out, "signal locality", &r.signal, render_signal);
    section(&mut out, "anti-correlation", &r.anticorrelation, render_anticorrelation);
    section(&mut out, "instruction sets", &r.derivation, render_derivation);
    section(&mut out, "pattern classes", &r.partition, render_partition);
    section(&mut out, "correlators", &r.correlators, |o, c| render_correlators(o, c));
    section(&mut out, "chsh", &r.chsh, render_chsh);
    section(&mut out, "bell 1964", &r.bell1964, render_bell1964);
    section(&mut out, "local polytope", &r.membership, render_membership);
    section(&mut out, "simulation", &r.simulation, render_stats);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::{LocalityVerdict, SignalVerdict};
    use crate::model::Setting;
    use crate::singlet::{make_quantum_theory, SingletSpec};

    fn singlet() -> TheoryModel {
        make_quantum_theory(&SingletSpec {
            alice: vec![Setting::planar("a1", 0.0), Setting::planar("a2", 90.0)],
            bob: vec![
                Setting::planar("b1", 45.0),
                Setting::planar("b2", 135.0),
            ],
        })
        .unwrap()
    }

    #[test]
    fn singlet_pipeline() {
        let r = pipeline_for_model(&singlet(), &digest_hex(b"x"), &PipelineOptions::default());
        assert!(r.validation.is_valid());
        assert_eq!(r.locality.done().unwrap().verdict, LocalityVerdict::NotBellLocal);
        assert_eq!(r.signal.done().unwrap().verdict, SignalVerdict::SignalLocal);
        // no shared axes in the CHSH configuration
        assert!(r.anticorrelation.done().is_none());
        let c = r.chsh.done().unwrap();
        assert!(c.violated);
        assert!(!r.membership.done().unwrap().is_inside());
        assert!(r.simulation.done().is_none());
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let opts = PipelineOptions {
            simulation: Some(SimulationOptions {
                trials: 1000,
                seed: 5,
                policy: SettingPolicy::Uniform,
            }),
            ..PipelineOptions::default()
        };
        let r = pipeline_for_model(&singlet(), &digest_hex(b"x"), &opts);
        let json = report_to_json(&r);
        let back = report_from_json(&json).unwrap();
        assert_eq!(report_to_json(&back), json);
        assert_eq!(back, r);
        assert!(report_to_text(&r).contains("chsh: S = "));
    }

    #[test]
    fn digest_is_stable() {
        assert_eq!(digest_hex(b"abc"), digest_hex(b"abc"));
        assert_eq!(
            digest_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
