//! Deterministic instruction sets forced by Bell Locality together with
//! perfect anti-correlation.
//!
//! For each hidden state and each declared axis, a Bell Local theory that
//! never yields equal outcomes on that axis must give
//! `P(A=+1 | n, λ) P(B=+1 | n, λ) = 0` and `P(A=-1 | n, λ) P(B=-1 | n, λ) = 0`.
//! With two-valued outcomes this leaves only `A = +1, B = -1` or
//! `A = -1, B = +1` with certainty, so the state carries the outcomes for
//! that axis in advance. [`derive_instruction_sets`] reads those values off
//! a model, or reports the first state and axis where no such value exists.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audit::AxisPair;
use crate::error::{Error, Result};
use crate::model::{
    HiddenState, HiddenStateEnsemble, JointDist, Outcome, Scenario, Side, TheoryModel,
};
use crate::prob::Prob;

/// Hard cap on the number of axes for [`classify_states`] (2^n classes).
pub const MAX_CLASSIFY_AXES: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    Determined(Outcome),
    /// Off-axis setting whose outcome is not fixed by the state; carries
    /// `P(+1)` read against the first far setting.
    Unconstrained(Prob),
}

impl Response {
    pub fn outcome(&self) -> Option<Outcome> {
        match self {
            Response::Determined(o) => Some(*o),
            Response::Unconstrained(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateInstructions {
    pub state: String,
    pub weight: Prob,
    /// One entry per Alice setting, scenario order.
    pub alice: Vec<(String, Response)>,
    /// One entry per Bob setting, scenario order.
    pub bob: Vec<(String, Response)>,
}

impl StateInstructions {
    pub fn response(&self, side: Side, setting: &str) -> Option<&Response> {
        let list = match side {
            Side::Alice => &self.alice,
            Side::Bob => &self.bob,
        };
        list.iter().find(|(id, _)| id == setting).map(|(_, r)| r)
    }

    pub fn outcome(&self, side: Side, setting: &str) -> Option<Outcome> {
        self.response(side, setting).and_then(Response::outcome)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstructionSet {
    pub axes: Vec<AxisPair>,
    pub states: Vec<StateInstructions>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailureReason {
    /// The marginal lies strictly between 0 and 1.
    NotDeterministic,
    /// The marginal changes with the far setting.
    FarSettingDependence { far_setting: String, value: Prob },
    /// Both outcomes are determined but equal.
    NotAntiCorrelated,
}

/// The first state and axis where no instruction set exists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivationFailure {
    pub state: String,
    pub axis: AxisPair,
    pub side: Side,
    /// `P(+1 | n, λ)` on `side`.
    pub marginal: Prob,
    pub reason: FailureReason,
}

impl fmt::Display for DerivationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "state `{}`, axis {}: P({}=+1) = {}",
            self.state,
            self.axis,
            if self.side == Side::Alice { "A" } else { "B" },
            self.marginal
        )?;
        match &self.reason {
            FailureReason::NotDeterministic => write!(f, " is neither 0 nor 1")?,
            FailureReason::FarSettingDependence { far_setting, value } => {
                write!(f, " but {value} with far setting `{far_setting}`")?
            }
            FailureReason::NotAntiCorrelated => write!(f, " on both sides")?,
        }
        write!(
            f,
            "; the theory cannot be both Bell Local and perfectly anti-correlated \
             without deterministic hidden variables"
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Derivation {
    Instructions(InstructionSet),
    Failure(DerivationFailure),
}

impl Derivation {
    pub fn instructions(&self) -> Option<&InstructionSet> {
        match self {
            Derivation::Instructions(i) => Some(i),
            Derivation::Failure(_) => None,
        }
    }

    pub fn failure(&self) -> Option<&DerivationFailure> {
        match self {
            Derivation::Instructions(_) => None,
            Derivation::Failure(f) => Some(f),
        }
    }
}

fn cell<'m>(model: &'m TheoryModel, state: &str, side: Side, own: &str, far: &str) -> &'m JointDist {
    let c = match side {
        Side::Alice => model.cell(state, own, far),
        Side::Bob => model.cell(state, far, own),
    };
    c.expect("validated model has every cell")
}

/// `P(+1 | own, λ)` if it is the same for every far setting, otherwise the
/// first far setting where it differs and the value there.
fn far_independent_marginal(
    model: &TheoryModel,
    state: &str,
    side: Side,
    own: &str,
    tol: f64,
) -> std::result::Result<Prob, (Prob, String, Prob)> {
    let far = model.scenario.settings(side.other());
    let first = cell(model, state, side, own, &far[0].id).marginal(side, Outcome::Plus);
    for f in &far[1..] {
        let m = cell(model, state, side, own, &f.id).marginal(side, Outcome::Plus);
        if !m.approx_eq(&first, tol) {
            return Err((first, f.id.clone(), m));
        }
    }
    Ok(first)
}

fn as_outcome(p_plus: &Prob, tol: f64) -> Option<Outcome> {
    if p_plus.is_one_tol(tol) {
        Some(Outcome::Plus)
    } else if p_plus.is_zero_tol(tol) {
        Some(Outcome::Minus)
    } else {
        None
    }
}

fn derive_state(
    model: &TheoryModel,
    entry: &HiddenState,
    axes: &[AxisPair],
    tol: f64,
) -> std::result::Result<StateInstructions, DerivationFailure> {
    let state = entry.id.as_str();
    let mut forced: Vec<(Side, &str, Outcome)> = Vec::new();

    for axis in axes {
        let mut outcomes = [Outcome::Plus; 2];
        for (slot, (side, own)) in [(Side::Alice, &axis.alice), (Side::Bob, &axis.bob)]
            .into_iter()
            .enumerate()
        {
            let fail = |marginal, reason| DerivationFailure {
                state: state.to_string(),
                axis: axis.clone(),
                side,
                marginal,
                reason,
            };
            let p = far_independent_marginal(model, state, side, own, tol).map_err(
                |(first, far_setting, value)| {
                    fail(first, FailureReason::FarSettingDependence { far_setting, value })
                },
            )?;
            outcomes[slot] = match as_outcome(&p, tol) {
                Some(o) => o,
                None => return Err(fail(p, FailureReason::NotDeterministic)),
            };
        }
        let [a, b] = outcomes;
        if b != a.flip() {
            let p = if a == Outcome::Plus { Prob::one() } else { Prob::zero() };
            return Err(DerivationFailure {
                state: state.to_string(),
                axis: axis.clone(),
                side: Side::Alice,
                marginal: p,
                reason: FailureReason::NotAntiCorrelated,
            });
        }
        forced.push((Side::Alice, &axis.alice, a));
        forced.push((Side::Bob, &axis.bob, b));
    }

    let responses = |side: Side| -> Vec<(String, Response)> {
        model
            .scenario
            .settings(side)
            .iter()
            .map(|s| {
                let forced_here = forced
                    .iter()
                    .find(|(fs, id, _)| *fs == side && *id == s.id)
                    .map(|(_, _, o)| *o);
                let r = match forced_here {
                    Some(o) => Response::Determined(o),
                    None => match far_independent_marginal(model, state, side, &s.id, tol) {
                        Ok(p) => match as_outcome(&p, tol) {
                            Some(o) => Response::Determined(o),
                            None => Response::Unconstrained(p),
                        },
                        Err((first, _, _)) => Response::Unconstrained(first),
                    },
                };
                (s.id.clone(), r)
            })
            .collect()
    };

    Ok(StateInstructions {
        state: state.to_string(),
        weight: entry.weight.clone(),
        alice: responses(Side::Alice),
        bob: responses(Side::Bob),
    })
}

/// Reads the deterministic outcome maps forced on each declared axis, or
/// returns the first `(state, axis)` that blocks them.
pub fn derive_instruction_sets(
    model: &TheoryModel,
    axes: &[AxisPair],
    tol: f64,
) -> Result<Derivation> {
    model.ensure_valid(tol)?;
    for axis in axes {
        model.scenario.index_of(Side::Alice, &axis.alice)?;
        model.scenario.index_of(Side::Bob, &axis.bob)?;
    }
    let per_state: Vec<_> = model
        .ensemble
        .entries
        .par_iter()
        .map(|e| derive_state(model, e, axes, tol))
        .collect();
    let mut states = Vec::with_capacity(per_state.len());
    for r in per_state {
        match r {
            Ok(s) => states.push(s),
            Err(f) => return Ok(Derivation::Failure(f)),
        }
    }
    Ok(Derivation::Instructions(InstructionSet {
        axes: axes.to_vec(),
        states,
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternClass {
    /// Alice's outcome on each axis.
    pub alice: Vec<Outcome>,
    /// Bob's outcome on each axis, the negation of Alice's.
    pub bob: Vec<Outcome>,
    pub members: Vec<String>,
    pub weight: Prob,
    pub nonempty: bool,
}

impl PatternClass {
    pub fn label(&self) -> String {
        let s = |v: &[Outcome]| v.iter().map(|o| o.symbol().to_string()).collect::<Vec<_>>().join(",");
        format!("A=({}) B=({})", s(&self.alice), s(&self.bob))
    }
}

/// All `2^n` sign patterns over the axes, `+` before `-`, each with its
/// member states and total weight (zero for empty classes).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassPartition {
    pub axes: Vec<AxisPair>,
    pub classes: Vec<PatternClass>,
}

impl ClassPartition {
    pub fn nonempty(&self) -> impl Iterator<Item = &PatternClass> {
        self.classes.iter().filter(|c| c.nonempty)
    }

    pub fn total_weight(&self) -> Prob {
        Prob::sum(self.classes.iter().map(|c| &c.weight))
    }
}

fn pattern_index(pattern: &[Outcome]) -> usize {
    pattern
        .iter()
        .fold(0, |acc, o| (acc << 1) | usize::from(*o == Outcome::Minus))
}

pub fn classify_states(instr: &InstructionSet, axes: &[AxisPair]) -> Result<ClassPartition> {
    if axes.len() > MAX_CLASSIFY_AXES {
        return Err(Error::ScenarioShape(format!(
            "{} axes exceed the classification limit of {MAX_CLASSIFY_AXES}",
            axes.len()
        )));
    }
    let n = axes.len();
    let mut classes: Vec<PatternClass> = (0..1usize << n)
        .map(|idx| {
            let alice: Vec<Outcome> = (0..n)
                .map(|k| {
                    if idx >> (n - 1 - k) & 1 == 0 {
                        Outcome::Plus
                    } else {
                        Outcome::Minus
                    }
                })
                .collect();
            PatternClass {
                bob: alice.iter().map(|o| o.flip()).collect(),
                alice,
                members: Vec::new(),
                weight: Prob::zero(),
                nonempty: false,
            }
        })
        .collect();

    for s in &instr.states {
        let mut pattern = Vec::with_capacity(n);
        for axis in axes {
            let missing = |side: Side, setting: &str| Error::IncompleteInstructions {
                state: s.state.clone(),
                side,
                setting: setting.to_string(),
            };
            let a = s
                .outcome(Side::Alice, &axis.alice)
                .ok_or_else(|| missing(Side::Alice, &axis.alice))?;
            let b = s
                .outcome(Side::Bob, &axis.bob)
                .ok_or_else(|| missing(Side::Bob, &axis.bob))?;
            if b != a.flip() {
                return Err(Error::InconsistentInstructions {
                    state: s.state.clone(),
                    axis: axis.to_string(),
                });
            }
            pattern.push(a);
        }
        let class = &mut classes[pattern_index(&pattern)];
        class.members.push(s.state.clone());
        class.weight = &class.weight + &s.weight;
        class.nonempty = true;
    }
    Ok(ClassPartition {
        axes: axes.to_vec(),
        classes,
    })
}

/// The deterministic theory whose state `λ` answers every setting with the
/// instruction values.
pub fn realize_model(instr: &InstructionSet, scenario: &Scenario) -> Result<TheoryModel> {
    for s in &instr.states {
        for side in [Side::Alice, Side::Bob] {
            for setting in scenario.settings(side) {
                if s.outcome(side, &setting.id).is_none() {
                    return Err(Error::IncompleteInstructions {
                        state: s.state.clone(),
                        side,
                        setting: setting.id.clone(),
                    });
                }
            }
        }
    }
    let ensemble = HiddenStateEnsemble::new(
        instr
            .states
            .iter()
            .map(|s| HiddenState {
                id: s.state.clone(),
                weight: s.weight.clone(),
            })
            .collect(),
    );
    Ok(TheoryModel::from_fn(
        "realized instruction sets",
        scenario.clone(),
        ensemble,
        |state, a, b| {
            let s = instr
                .states
                .iter()
                .find(|s| s.state == state)
                .expect("state comes from the instruction set");
            JointDist::deterministic(
                s.outcome(Side::Alice, &a.id).expect("checked above"),
                s.outcome(Side::Bob, &b.id).expect("checked above"),
            )
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::{check_anticorrelation, check_bell_locality, LocalityVerdict};
    use crate::model::Setting;
    use crate::prob::DEFAULT_TOL;
    use crate::singlet::{make_quantum_theory, SingletSpec};

    fn two_state() -> TheoryModel {
        let scenario = Scenario::labelled(&["n1", "n2"], &["n1", "n2"]);
        let ensemble = HiddenStateEnsemble::new(vec![
            HiddenState {
                id: "l1".into(),
                weight: Prob::ratio(1, 2),
            },
            HiddenState {
                id: "l2".into(),
                weight: Prob::ratio(1, 2),
            },
        ]);
        TheoryModel::from_fn("two", scenario, ensemble, |s, _, _| {
            if s == "l1" {
                JointDist::deterministic(Outcome::Plus, Outcome::Minus)
            } else {
                JointDist::deterministic(Outcome::Minus, Outcome::Plus)
            }
        })
    }

    #[test]
    fn singlet_blocks_derivation() {
        let m = make_quantum_theory(&SingletSpec {
            alice: vec![Setting::planar("n", 30.0)],
            bob: vec![Setting::planar("n", 30.0)],
        })
        .unwrap();
        let d = derive_instruction_sets(&m, &[AxisPair::new("n", "n")], DEFAULT_TOL).unwrap();
        let f = d.failure().expect("singlet cannot carry instructions");
        assert_eq!(f.state, "psi");
        assert_eq!(f.axis, AxisPair::new("n", "n"));
        assert_eq!(f.reason, FailureReason::NotDeterministic);
        assert!((f.marginal.to_f64() - 0.5).abs() < 1e-12);
        assert!(f.to_string().contains("neither 0 nor 1"));
    }

    #[test]
    fn two_state_round_trip() {
        let m = two_state();
        let axes = [AxisPair::new("n1", "n1")];
        let instr = derive_instruction_sets(&m, &axes, DEFAULT_TOL)
            .unwrap()
            .instructions()
            .cloned()
            .unwrap();
        assert_eq!(instr.states[0].outcome(Side::Alice, "n1"), Some(Outcome::Plus));
        assert_eq!(instr.states[0].outcome(Side::Bob, "n1"), Some(Outcome::Minus));
        let realized = realize_model(&instr, &m.scenario).unwrap();
        assert_eq!(realized.kernel, m.kernel);
        assert_eq!(realized.ensemble, m.ensemble);

        let part = classify_states(&instr, &axes).unwrap();
        assert_eq!(part.classes.len(), 2);
        assert_eq!(part.classes[0].members, vec!["l1"]);
        assert_eq!(part.classes[0].weight, Prob::ratio(1, 2));
        assert_eq!(part.classes[1].weight, Prob::ratio(1, 2));
    }

    #[test]
    fn single_pattern_state() {
        let scenario = Scenario::labelled(&["n1", "n2", "n3"], &["n1", "n2", "n3"]);
        let m = TheoryModel::from_fn(
            "one",
            scenario,
            HiddenStateEnsemble::single("l"),
            |_, _, _| JointDist::deterministic(Outcome::Plus, Outcome::Minus),
        );
        let axes = AxisPair::parse_list("n1,n2,n3");
        let d = derive_instruction_sets(&m, &axes, DEFAULT_TOL).unwrap();
        let part = classify_states(d.instructions().unwrap(), &axes).unwrap();
        assert_eq!(part.classes.len(), 8);
        let nonempty: Vec<_> = part.nonempty().collect();
        assert_eq!(nonempty.len(), 1);
        assert_eq!(nonempty[0].alice, vec![Outcome::Plus; 3]);
        assert_eq!(nonempty[0].weight, Prob::one());
    }

    #[test]
    fn same_outcomes_fail_anticorrelation() {
        let m = TheoryModel::from_fn(
            "same",
            Scenario::labelled(&["n"], &["n"]),
            HiddenStateEnsemble::single("l"),
            |_, _, _| JointDist::deterministic(Outcome::Plus, Outcome::Plus),
        );
        let d = derive_instruction_sets(&m, &[AxisPair::new("n", "n")], DEFAULT_TOL).unwrap();
        assert_eq!(d.failure().unwrap().reason, FailureReason::NotAntiCorrelated);
        assert!(!check_anticorrelation(&m, &[AxisPair::new("n", "n")], DEFAULT_TOL)
            .unwrap()
            .holds);
    }

    #[test]
    fn far_dependence_is_reported() {
        // Alice's outcome on n copies Bob's setting.
        let m = TheoryModel::from_fn(
            "dep",
            Scenario::labelled(&["n"], &["n", "m"]),
            HiddenStateEnsemble::single("l"),
            |_, _, b| {
                if b.id == "n" {
                    JointDist::deterministic(Outcome::Plus, Outcome::Minus)
                } else {
                    JointDist::deterministic(Outcome::Minus, Outcome::Minus)
                }
            },
        );
        let d = derive_instruction_sets(&m, &[AxisPair::new("n", "n")], DEFAULT_TOL).unwrap();
        let f = d.failure().unwrap();
        assert!(matches!(
            &f.reason,
            FailureReason::FarSettingDependence { far_setting, .. } if far_setting == "m"
        ));
        assert_eq!(
            check_bell_locality(&m, DEFAULT_TOL).unwrap().verdict,
            LocalityVerdict::NotBellLocal
        );
    }

    #[test]
    fn off_axis_settings_may_stay_stochastic() {
        let h = Prob::ratio(1, 2);
        let m = TheoryModel::from_fn(
            "partial",
            Scenario::labelled(&["n", "x"], &["n"]),
            HiddenStateEnsemble::single("l"),
            |_, a, _| {
                if a.id == "n" {
                    JointDist::deterministic(Outcome::Minus, Outcome::Plus)
                } else {
                    JointDist::product(&h, &Prob::one())
                }
            },
        );
        let d = derive_instruction_sets(&m, &[AxisPair::new("n", "n")], DEFAULT_TOL).unwrap();
        let instr = d.instructions().unwrap();
        assert_eq!(
            instr.states[0].response(Side::Alice, "x"),
            Some(&Response::Unconstrained(Prob::ratio(1, 2)))
        );
        assert!(matches!(
            realize_model(instr, &m.scenario),
            Err(Error::IncompleteInstructions { setting, .. }) if setting == "x"
        ));
    }

    #[test]
    fn classify_requires_axis_coverage() {
        let instr = derive_instruction_sets(&two_state(), &[], DEFAULT_TOL)
            .unwrap()
            .instructions()
            .cloned()
            .unwrap();
        // n2 is determined in two_state, but a made-up axis is not covered
        assert!(matches!(
            classify_states(&instr, &[AxisPair::new("n9", "n9")]),
            Err(Error::IncompleteInstructions { .. })
        ));
    }

    #[test]
    fn unknown_axis_is_an_error() {
        assert!(matches!(
            derive_instruction_sets(&two_state(), &[AxisPair::new("q", "n1")], DEFAULT_TOL),
            Err(Error::UnknownSetting { side: Side::Alice, .. })
        ));
    }
}
