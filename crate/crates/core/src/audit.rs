//! Bell Locality, Signal Locality and perfect anti-correlation audits.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{
    behavior_unchecked, conditional_in_cell, BehaviorTable, JointDist, Outcome, Scenario, Side,
    TheoryModel,
};
use crate::prob::Prob;

/// Vectors closer than this (componentwise) are treated as the same axis.
pub const EQUAL_AXIS_TOL: f64 = 1e-12;

pub const RESIDUAL_METRIC: &str =
    "max |P(A,B|a,b,λ) - P(A|a,λ)·P(B|b,λ)| over all cells (tool-defined score)";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LocalityVerdict {
    BellLocal,
    NotBellLocal,
}

impl fmt::Display for LocalityVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LocalityVerdict::BellLocal => "Bell Local",
            LocalityVerdict::NotBellLocal => "not Bell Local",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalityViolation {
    pub state: String,
    pub alice: String,
    pub bob: String,
    #[serde(rename = "A")]
    pub a: Outcome,
    #[serde(rename = "B")]
    pub b: Outcome,
    /// `P(A, B | a, b, λ)`.
    pub lhs: Prob,
    /// `P(A | a, λ) · P(B | b, λ)`.
    pub rhs: Prob,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalityReport {
    pub verdict: LocalityVerdict,
    pub worst_residual: f64,
    pub violations: Vec<LocalityViolation>,
    /// Cells where `P(A | a, b, B, λ) ≠ P(A | a, λ)` (or the Bob analogue)
    /// with a conditioning event of nonzero probability.
    pub conditional_form_failures: usize,
    pub residual_metric: String,
}

/// Single-side marginals `P(outcome = + | setting, λ)` read against a fixed
/// far setting (the first one declared).
fn reference_marginals(model: &TheoryModel, state: &str, side: Side) -> Vec<Prob> {
    let far = &model.scenario.settings(side.other())[0].id;
    model
        .scenario
        .settings(side)
        .iter()
        .map(|s| {
            let cell = match side {
                Side::Alice => model.cell(state, &s.id, far),
                Side::Bob => model.cell(state, far, &s.id),
            };
            cell.expect("validated model has every cell")
                .marginal(side, Outcome::Plus)
        })
        .collect()
}

fn side_prob(plus: &Prob, outcome: Outcome) -> Prob {
    match outcome {
        Outcome::Plus => plus.clone(),
        Outcome::Minus => &Prob::one() - plus,
    }
}

fn audit_state(model: &TheoryModel, state: &str, tol: f64) -> (Vec<LocalityViolation>, usize) {
    let ma = reference_marginals(model, state, Side::Alice);
    let mb = reference_marginals(model, state, Side::Bob);
    let mut violations = Vec::new();
    let mut conditional_failures = 0;
    for (ia, a) in model.scenario.alice.iter().enumerate() {
        for (ib, b) in model.scenario.bob.iter().enumerate() {
            let cell = model
                .cell(state, &a.id, &b.id)
                .expect("validated model has every cell");
            for (oa, ob, lhs) in cell.entries() {
                let pa = side_prob(&ma[ia], oa);
                let pb = side_prob(&mb[ib], ob);
                let rhs = &pa * &pb;
                if !lhs.approx_eq(&rhs, tol) {
                    violations.push(LocalityViolation {
                        state: state.to_string(),
                        alice: a.id.clone(),
                        bob: b.id.clone(),
                        a: oa,
                        b: ob,
                        residual: lhs.abs_diff(&rhs).to_f64(),
                        lhs: lhs.clone(),
                        rhs,
                    });
                }
                // P(A | a, b, B, λ) = P(A | a, λ) and P(B | a, b, A, λ) = P(B | b, λ)
                if conditional_breaks(cell, Side::Alice, oa, ob, &pa, tol) {
                    conditional_failures += 1;
                }
                if conditional_breaks(cell, Side::Bob, ob, oa, &pb, tol) {
                    conditional_failures += 1;
                }
            }
        }
    }
    (violations, conditional_failures)
}

fn conditional_breaks(
    cell: &JointDist,
    side: Side,
    own: Outcome,
    far: Outcome,
    unconditioned: &Prob,
    tol: f64,
) -> bool {
    match conditional_in_cell(cell, side, own, Some(far), tol) {
        Some(p) => !p.approx_eq(unconditioned, tol),
        None => false,
    }
}

/// Tests `P(A, B | a, b, λ) = P(A | a, λ) P(B | b, λ)` for every state,
/// setting pair and outcome pair, with the single-side marginals required to
/// be independent of the far setting.
pub fn check_bell_locality(model: &TheoryModel, tol: f64) -> Result<LocalityReport> {
    model.ensure_valid(tol)?;
    let per_state: Vec<_> = model
        .ensemble
        .entries
        .par_iter()
        .map(|e| audit_state(model, &e.id, tol))
        .collect();
    let mut violations = Vec::new();
    let mut conditional_form_failures = 0;
    for (v, c) in per_state {
        violations.extend(v);
        conditional_form_failures += c;
    }
    let worst_residual = violations
        .iter()
        .map(|v| v.residual)
        .fold(0.0, f64::max);
    Ok(LocalityReport {
        verdict: if violations.is_empty() {
            LocalityVerdict::BellLocal
        } else {
            LocalityVerdict::NotBellLocal
        },
        worst_residual,
        violations,
        conditional_form_failures,
        residual_metric: RESIDUAL_METRIC.to_string(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignalVerdict {
    SignalLocal,
    Signalling,
}

impl fmt::Display for SignalVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignalVerdict::SignalLocal => "Signal Local",
            SignalVerdict::Signalling => "signalling",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalDelta {
    pub side: Side,
    pub outcome: Outcome,
    pub own_setting: String,
    pub far_settings: (String, String),
    pub delta: Prob,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalReport {
    pub verdict: SignalVerdict,
    pub max_delta: f64,
    pub deltas: Vec<SignalDelta>,
}

/// Signal Locality of an observable behaviour table.
pub fn signal_report(behavior: &BehaviorTable, scenario: &Scenario, tol: f64) -> Result<SignalReport> {
    let mut deltas = Vec::new();
    for side in [Side::Alice, Side::Bob] {
        let far = scenario.settings(side.other());
        for own in scenario.settings(side) {
            let cell = |f: &str| match side {
                Side::Alice => behavior.require(&own.id, f),
                Side::Bob => behavior.require(f, &own.id),
            };
            for outcome in Outcome::BOTH {
                for (i, f1) in far.iter().enumerate() {
                    for f2 in &far[i + 1..] {
                        let m1 = cell(&f1.id)?.marginal(side, outcome);
                        let m2 = cell(&f2.id)?.marginal(side, outcome);
                        deltas.push(SignalDelta {
                            side,
                            outcome,
                            own_setting: own.id.clone(),
                            far_settings: (f1.id.clone(), f2.id.clone()),
                            delta: m1.abs_diff(&m2),
                        });
                    }
                }
            }
        }
    }
    let local = deltas.iter().all(|d| d.delta.is_zero_tol(tol));
    Ok(SignalReport {
        verdict: if local {
            SignalVerdict::SignalLocal
        } else {
            SignalVerdict::Signalling
        },
        max_delta: deltas.iter().map(|d| d.delta.to_f64()).fold(0.0, f64::max),
        deltas,
    })
}

/// `P(B | a, b) = P(B | a', b)` and the Alice analogue, on the marginalised
/// behaviour.
pub fn check_signal_locality(model: &TheoryModel, tol: f64) -> Result<SignalReport> {
    model.ensure_valid(tol)?;
    signal_report(&behavior_unchecked(model), &model.scenario, tol)
}

/// An Alice setting and a Bob setting that denote the same physical axis.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AxisPair {
    pub alice: String,
    pub bob: String,
}

impl AxisPair {
    pub fn new(alice: impl Into<String>, bob: impl Into<String>) -> Self {
        AxisPair {
            alice: alice.into(),
            bob: bob.into(),
        }
    }

    /// Parses `"a1=b1,a2=b2"`. A bare id stands for the same id on both sides.
    pub fn parse_list(text: &str) -> Vec<AxisPair> {
        text.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| match t.split_once('=') {
                Some((a, b)) => AxisPair::new(a.trim(), b.trim()),
                None => AxisPair::new(t, t),
            })
            .collect()
    }
}

impl fmt::Display for AxisPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.alice, self.bob)
    }
}

/// Pairs of settings whose direction vectors coincide within
/// [`EQUAL_AXIS_TOL`], in scenario order.
pub fn detect_equal_axes(scenario: &Scenario) -> Vec<AxisPair> {
    let mut out = Vec::new();
    for a in &scenario.alice {
        let Some(da) = &a.direction else { continue };
        for b in &scenario.bob {
            let Some(db) = &b.direction else { continue };
            if da.iter().zip(db).all(|(x, y)| (x - y).abs() <= EQUAL_AXIS_TOL) {
                out.push(AxisPair::new(&a.id, &b.id));
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateAxisCheck {
    pub state: String,
    pub holds: bool,
    /// `p(+,+)` at the identified axis.
    pub pp: Prob,
    /// `p(-,-)` at the identified axis.
    pub mm: Prob,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisCheck {
    pub axis: AxisPair,
    pub holds: bool,
    pub states: Vec<StateAxisCheck>,
}

impl AxisCheck {
    pub fn offending(&self) -> impl Iterator<Item = &StateAxisCheck> {
        self.states.iter().filter(|s| !s.holds)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AntiCorrelationReport {
    pub holds: bool,
    pub axes: Vec<AxisCheck>,
}

/// Perfect anti-correlation on each declared axis: `p(+,+) = p(-,-) = 0`
/// for every hidden state.
pub fn check_anticorrelation(
    model: &TheoryModel,
    axes: &[AxisPair],
    tol: f64,
) -> Result<AntiCorrelationReport> {
    model.ensure_valid(tol)?;
    for axis in axes {
        model.scenario.index_of(Side::Alice, &axis.alice)?;
        model.scenario.index_of(Side::Bob, &axis.bob)?;
    }
    let zero = Prob::zero();
    let checks: Vec<AxisCheck> = axes
        .iter()
        .map(|axis| {
            let states: Vec<StateAxisCheck> = model
                .ensemble
                .entries
                .iter()
                .map(|e| {
                    let cell = model
                        .cell(&e.id, &axis.alice, &axis.bob)
                        .expect("validated model has every cell");
                    StateAxisCheck {
                        state: e.id.clone(),
                        holds: cell.pp.le_tol(&zero, tol) && cell.mm.le_tol(&zero, tol),
                        pp: cell.pp.clone(),
                        mm: cell.mm.clone(),
                    }
                })
                .collect();
            AxisCheck {
                axis: axis.clone(),
                holds: states.iter().all(|s| s.holds),
                states,
            }
        })
        .collect();
    Ok(AntiCorrelationReport {
        holds: checks.iter().all(|c| c.holds),
        axes: checks,
    })
}
