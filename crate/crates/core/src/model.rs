//! Scenarios, hidden-state ensembles, response kernels and the behaviour
//! tables obtained by marginalising a theory over its hidden states.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::Prob;

/// Allowed deviation of a setting direction's norm from 1.
pub const UNIT_NORM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Alice,
    Bob,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Alice => Side::Bob,
            Side::Bob => Side::Alice,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Alice => "alice",
            Side::Bob => "bob",
        })
    }
}

/// A measurement outcome, `+1` or `-1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Outcome {
    pub const BOTH: [Outcome; 2] = [Outcome::Plus, Outcome::Minus];

    pub fn value(self) -> i32 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }

    pub fn flip(self) -> Outcome {
        match self {
            Outcome::Plus => Outcome::Minus,
            Outcome::Minus => Outcome::Plus,
        }
    }

    pub fn from_sign(sign: i32) -> Outcome {
        if sign >= 0 {
            Outcome::Plus
        } else {
            Outcome::Minus
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Outcome::Plus => '+',
            Outcome::Minus => '-',
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Plus => "+1",
            Outcome::Minus => "-1",
        })
    }
}

/// Joint distribution over `(A, B)` for one setting pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointDist {
    #[serde(rename = "++")]
    pub pp: Prob,
    #[serde(rename = "+-")]
    pub pm: Prob,
    #[serde(rename = "-+")]
    pub mp: Prob,
    #[serde(rename = "--")]
    pub mm: Prob,
}

impl JointDist {
    pub fn new(pp: Prob, pm: Prob, mp: Prob, mm: Prob) -> Self {
        JointDist { pp, pm, mp, mm }
    }

    pub fn zero() -> Self {
        JointDist::new(Prob::zero(), Prob::zero(), Prob::zero(), Prob::zero())
    }

    pub fn uniform() -> Self {
        let q = Prob::ratio(1, 4);
        JointDist::new(q.clone(), q.clone(), q.clone(), q)
    }

    /// Point mass on `(a, b)`.
    pub fn deterministic(a: Outcome, b: Outcome) -> Self {
        let mut d = JointDist::zero();
        *d.get_mut(a, b) = Prob::one();
        d
    }

    /// Independent outcomes with `P(A=+1) = alice_plus` and `P(B=+1) = bob_plus`.
    pub fn product(alice_plus: &Prob, bob_plus: &Prob) -> Self {
        let am = &Prob::one() - alice_plus;
        let bm = &Prob::one() - bob_plus;
        JointDist::new(
            alice_plus * bob_plus,
            alice_plus * &bm,
            &am * bob_plus,
            &am * &bm,
        )
    }

    pub fn get(&self, a: Outcome, b: Outcome) -> &Prob {
        match (a, b) {
            (Outcome::Plus, Outcome::Plus) => &self.pp,
            (Outcome::Plus, Outcome::Minus) => &self.pm,
            (Outcome::Minus, Outcome::Plus) => &self.mp,
            (Outcome::Minus, Outcome::Minus) => &self.mm,
        }
    }

    pub fn get_mut(&mut self, a: Outcome, b: Outcome) -> &mut Prob {
        match (a, b) {
            (Outcome::Plus, Outcome::Plus) => &mut self.pp,
            (Outcome::Plus, Outcome::Minus) => &mut self.pm,
            (Outcome::Minus, Outcome::Plus) => &mut self.mp,
            (Outcome::Minus, Outcome::Minus) => &mut self.mm,
        }
    }

    /// The four entries in `++, +-, -+, --` order.
    pub fn entries(&self) -> [(Outcome, Outcome, &Prob); 4] {
        use Outcome::*;
        [
            (Plus, Plus, &self.pp),
            (Plus, Minus, &self.pm),
            (Minus, Plus, &self.mp),
            (Minus, Minus, &self.mm),
        ]
    }

    /// Single-side marginal `P(side = outcome)`.
    pub fn marginal(&self, side: Side, outcome: Outcome) -> Prob {
        match side {
            Side::Alice => self.get(outcome, Outcome::Plus) + self.get(outcome, Outcome::Minus),
            Side::Bob => self.get(Outcome::Plus, outcome) + self.get(Outcome::Minus, outcome),
        }
    }

    pub fn total(&self) -> Prob {
        Prob::sum([&self.pp, &self.pm, &self.mp, &self.mm])
    }

    /// `E = p(++) + p(--) - p(+-) - p(-+)`.
    pub fn correlator(&self) -> Prob {
        &(&self.pp + &self.mm) - &(&self.pm + &self.mp)
    }

    pub fn scaled(&self, w: &Prob) -> Self {
        self.map(|p| p * w)
    }

    pub fn plus(&self, other: &JointDist) -> Self {
        JointDist::new(
            &self.pp + &other.pp,
            &self.pm + &other.pm,
            &self.mp + &other.mp,
            &self.mm + &other.mm,
        )
    }

    /// Swap the roles of Alice and Bob.
    pub fn transposed(&self) -> Self {
        JointDist::new(
            self.pp.clone(),
            self.mp.clone(),
            self.pm.clone(),
            self.mm.clone(),
        )
    }

    pub fn map(&self, mut f: impl FnMut(&Prob) -> Prob) -> Self {
        JointDist::new(f(&self.pp), f(&self.pm), f(&self.mp), f(&self.mm))
    }

    pub fn is_exact(&self) -> bool {
        self.entries().iter().all(|(_, _, p)| p.is_exact())
    }

    pub fn approx_eq(&self, other: &JointDist, tol: f64) -> bool {
        self.entries()
            .iter()
            .zip(other.entries().iter())
            .all(|((_, _, a), (_, _, b))| a.approx_eq(b, tol))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<[f64; 3]>,
}

impl Setting {
    pub fn labelled(id: impl Into<String>) -> Self {
        Setting {
            id: id.into(),
            direction: None,
        }
    }

    pub fn with_direction(id: impl Into<String>, direction: [f64; 3]) -> Self {
        Setting {
            id: id.into(),
            direction: Some(direction),
        }
    }

    /// Unit vector in the x–z plane at `degrees` from the z axis.
    pub fn planar(id: impl Into<String>, degrees: f64) -> Self {
        let t = degrees.to_radians();
        Setting::with_direction(id, [t.sin(), 0.0, t.cos()])
    }
}

pub fn norm(v: &[f64; 3]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub alice: Vec<Setting>,
    pub bob: Vec<Setting>,
}

impl Scenario {
    pub fn new(alice: Vec<Setting>, bob: Vec<Setting>) -> Self {
        Scenario { alice, bob }
    }

    /// Both sides labelled with the same ids and no directions.
    pub fn labelled(alice: &[&str], bob: &[&str]) -> Self {
        Scenario {
            alice: alice.iter().map(|s| Setting::labelled(*s)).collect(),
            bob: bob.iter().map(|s| Setting::labelled(*s)).collect(),
        }
    }

    pub fn settings(&self, side: Side) -> &[Setting] {
        match side {
            Side::Alice => &self.alice,
            Side::Bob => &self.bob,
        }
    }

    pub fn ids(&self, side: Side) -> impl Iterator<Item = &str> {
        self.settings(side).iter().map(|s| s.id.as_str())
    }

    pub fn index_of(&self, side: Side, id: &str) -> Result<usize> {
        self.settings(side)
            .iter()
            .position(|s| s.id == id)
            .ok_or_else(|| Error::UnknownSetting {
                side,
                id: id.to_string(),
            })
    }

    pub fn setting(&self, side: Side, id: &str) -> Result<&Setting> {
        let i = self.index_of(side, id)?;
        Ok(&self.settings(side)[i])
    }

    pub fn transposed(&self) -> Scenario {
        Scenario {
            alice: self.bob.clone(),
            bob: self.alice.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiddenState {
    pub id: String,
    pub weight: Prob,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiddenStateEnsemble {
    pub entries: Vec<HiddenState>,
}

impl HiddenStateEnsemble {
    pub fn new(entries: Vec<HiddenState>) -> Self {
        HiddenStateEnsemble { entries }
    }

    pub fn single(id: impl Into<String>) -> Self {
        HiddenStateEnsemble {
            entries: vec![HiddenState {
                id: id.into(),
                weight: Prob::one(),
            }],
        }
    }

    pub fn weight(&self, id: &str) -> Option<&Prob> {
        self.entries.iter().find(|e| e.id == id).map(|e| &e.weight)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }
}

/// `(state, alice setting, bob setting)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub state: String,
    pub alice: String,
    pub bob: String,
}

impl CellKey {
    pub fn new(state: &str, alice: &str, bob: &str) -> Self {
        CellKey {
            state: state.to_string(),
            alice: alice.to_string(),
            bob: bob.to_string(),
        }
    }
}

/// `P(A, B | a, b, λ)` for every cell.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResponseKernel {
    cells: BTreeMap<CellKey, JointDist>,
}

impl ResponseKernel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, state: &str, alice: &str, bob: &str, dist: JointDist) {
        self.cells.insert(CellKey::new(state, alice, bob), dist);
    }

    pub fn get(&self, state: &str, alice: &str, bob: &str) -> Option<&JointDist> {
        // BTreeMap needs an owned key for lookup
        self.cells.get(&CellKey::new(state, alice, bob))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CellKey, &JointDist)> {
        self.cells.iter()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

impl FromIterator<(CellKey, JointDist)> for ResponseKernel {
    fn from_iter<T: IntoIterator<Item = (CellKey, JointDist)>>(iter: T) -> Self {
        ResponseKernel {
            cells: iter.into_iter().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TheoryModel {
    pub name: String,
    pub scenario: Scenario,
    pub ensemble: HiddenStateEnsemble,
    pub kernel: ResponseKernel,
}

impl TheoryModel {
    /// Builds a model by evaluating `cell` on every `(state, a, b)` triple.
    pub fn from_fn(
        name: impl Into<String>,
        scenario: Scenario,
        ensemble: HiddenStateEnsemble,
        mut cell: impl FnMut(&str, &Setting, &Setting) -> JointDist,
    ) -> Self {
        let mut kernel = ResponseKernel::new();
        for state in &ensemble.entries {
            for a in &scenario.alice {
                for b in &scenario.bob {
                    kernel.insert(&state.id, &a.id, &b.id, cell(&state.id, a, b));
                }
            }
        }
        TheoryModel {
            name: name.into(),
            scenario,
            ensemble,
            kernel,
        }
    }

    pub fn cell(&self, state: &str, alice: &str, bob: &str) -> Option<&JointDist> {
        self.kernel.get(state, alice, bob)
    }

    /// Cell lookup that names the missing id.
    pub fn require_cell(&self, state: &str, alice: &str, bob: &str) -> Result<&JointDist> {
        if self.ensemble.weight(state).is_none() {
            return Err(Error::UnknownState(state.to_string()));
        }
        self.scenario.index_of(Side::Alice, alice)?;
        self.scenario.index_of(Side::Bob, bob)?;
        self.cell(state, alice, bob)
            .ok_or_else(|| Error::UnknownState(state.to_string()))
    }

    /// True when every weight and kernel entry is an exact rational.
    pub fn is_exact(&self) -> bool {
        self.ensemble.entries.iter().all(|e| e.weight.is_exact())
            && self.kernel.iter().all(|(_, d)| d.is_exact())
    }

    pub fn validate(&self, tol: f64) -> ValidationReport {
        validate_theory(self, tol)
    }

    pub fn ensure_valid(&self, tol: f64) -> Result<()> {
        let report = validate_theory(self, tol);
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidModel(report))
        }
    }

    /// The same theory with Alice and Bob exchanged.
    pub fn transposed(&self) -> TheoryModel {
        TheoryModel {
            name: self.name.clone(),
            scenario: self.scenario.transposed(),
            ensemble: self.ensemble.clone(),
            kernel: self
                .kernel
                .iter()
                .map(|(k, d)| (CellKey::new(&k.state, &k.bob, &k.alice), d.transposed()))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorCell {
    pub alice: String,
    pub bob: String,
    pub p: JointDist,
}

/// Operational predictions `P(A, B | a, b)`, one cell per setting pair in
/// scenario order (Alice-major).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorTable {
    pub cells: Vec<BehaviorCell>,
}

impl BehaviorTable {
    pub fn from_fn(
        scenario: &Scenario,
        mut cell: impl FnMut(&Setting, &Setting) -> JointDist,
    ) -> Self {
        let mut cells = Vec::with_capacity(scenario.alice.len() * scenario.bob.len());
        for a in &scenario.alice {
            for b in &scenario.bob {
                cells.push(BehaviorCell {
                    alice: a.id.clone(),
                    bob: b.id.clone(),
                    p: cell(a, b),
                });
            }
        }
        BehaviorTable { cells }
    }

    pub fn get(&self, alice: &str, bob: &str) -> Option<&JointDist> {
        self.cells
            .iter()
            .find(|c| c.alice == alice && c.bob == bob)
            .map(|c| &c.p)
    }

    pub fn require(&self, alice: &str, bob: &str) -> Result<&JointDist> {
        if !self.cells.iter().any(|c| c.alice == alice) {
            return Err(Error::UnknownSetting {
                side: Side::Alice,
                id: alice.to_string(),
            });
        }
        self.get(alice, bob).ok_or_else(|| Error::UnknownSetting {
            side: Side::Bob,
            id: bob.to_string(),
        })
    }

    pub fn is_exact(&self) -> bool {
        self.cells.iter().all(|c| c.p.is_exact())
    }

    /// Convex combination `w * self + (1 - w) * other`; both tables must
    /// share the same layout.
    pub fn mix(&self, other: &BehaviorTable, w: &Prob) -> BehaviorTable {
        let v = &Prob::one() - w;
        BehaviorTable {
            cells: self
                .cells
                .iter()
                .zip(&other.cells)
                .map(|(x, y)| BehaviorCell {
                    alice: x.alice.clone(),
                    bob: x.bob.clone(),
                    p: x.p.scaled(w).plus(&y.p.scaled(&v)),
                })
                .collect(),
        }
    }

    pub fn approx_eq(&self, other: &BehaviorTable, tol: f64) -> bool {
        self.cells.len() == other.cells.len()
            && self.cells.iter().zip(&other.cells).all(|(x, y)| {
                x.alice == y.alice && x.bob == y.bob && x.p.approx_eq(&y.p, tol)
            })
    }
}

// ---------------------------------------------------------------------------
// Validation

/// Where a violation was found.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "in", rename_all = "snake_case")]
pub enum Location {
    Scenario {
        side: Side,
        setting: Option<String>,
    },
    Ensemble {
        state: Option<String>,
    },
    Cell {
        state: String,
        alice: String,
        bob: String,
        field: Option<String>,
    },
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Scenario { side, setting } => match setting {
                Some(s) => write!(f, "scenario.{side}[{s}]"),
                None => write!(f, "scenario.{side}"),
            },
            Location::Ensemble { state } => match state {
                Some(s) => write!(f, "ensemble[{s}]"),
                None => write!(f, "ensemble"),
            },
            Location::Cell {
                state,
                alice,
                bob,
                field,
            } => {
                write!(f, "kernel[{state}][{alice}|{bob}]")?;
                if let Some(field) = field {
                    write!(f, "[{field}]")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    NoSettings,
    DuplicateSetting,
    NonUnitDirection { norm: f64 },
    EmptyEnsemble,
    DuplicateState,
    WeightNonpositive { weight: Prob },
    WeightsNotNormalized { sum: Prob },
    MissingCell,
    UnexpectedCell,
    NonFinite,
    OutOfRange { value: Prob },
    CellNotNormalized { sum: Prob },
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationKind::NoSettings => write!(f, "side has no settings"),
            ViolationKind::DuplicateSetting => write!(f, "duplicate setting id"),
            ViolationKind::NonUnitDirection { norm } => {
                write!(f, "direction not unit length (norm {norm})")
            }
            ViolationKind::EmptyEnsemble => write!(f, "ensemble is empty"),
            ViolationKind::DuplicateState => write!(f, "duplicate state id"),
            ViolationKind::WeightNonpositive { weight } => {
                write!(f, "weight nonpositive ({weight})")
            }
            ViolationKind::WeightsNotNormalized { sum } => {
                write!(f, "weights sum to {sum}, expected 1")
            }
            ViolationKind::MissingCell => write!(f, "missing kernel cell"),
            ViolationKind::UnexpectedCell => {
                write!(f, "kernel cell references an unknown state or setting")
            }
            ViolationKind::NonFinite => write!(f, "probability is not finite"),
            ViolationKind::OutOfRange { value } => {
                write!(f, "probability {value} outside [0, 1]")
            }
            ViolationKind::CellNotNormalized { sum } => {
                write!(f, "cell sums to {sum}, expected 1")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub location: Location,
    #[serde(flatten)]
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.kind)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return writeln!(f, "valid");
        }
        for v in &self.violations {
            writeln!(f, "  {v}")?;
        }
        Ok(())
    }
}

/// Collects every invariant violation of `model`. An empty report means the
/// model is valid.
pub fn validate_theory(model: &TheoryModel, tol: f64) -> ValidationReport {
    let mut out = Vec::new();
    let mut push = |location, kind| out.push(Violation { location, kind });

    for side in [Side::Alice, Side::Bob] {
        let settings = model.scenario.settings(side);
        if settings.is_empty() {
            push(
                Location::Scenario {
                    side,
                    setting: None,
                },
                ViolationKind::NoSettings,
            );
        }
        let mut seen = HashSet::new();
        for s in settings {
            let location = || Location::Scenario {
                side,
                setting: Some(s.id.clone()),
            };
            if !seen.insert(s.id.as_str()) {
                push(location(), ViolationKind::DuplicateSetting);
            }
            if let Some(v) = &s.direction {
                let n = norm(v);
                if !((n - 1.0).abs() <= UNIT_NORM_TOL) {
                    push(location(), ViolationKind::NonUnitDirection { norm: n });
                }
            }
        }
    }

    let entries = &model.ensemble.entries;
    if entries.is_empty() {
        push(Location::Ensemble { state: None }, ViolationKind::EmptyEnsemble);
    }
    let mut seen = HashSet::new();
    for e in entries {
        let location = || Location::Ensemble {
            state: Some(e.id.clone()),
        };
        if !seen.insert(e.id.as_str()) {
            push(location(), ViolationKind::DuplicateState);
        }
        if !e.weight.is_finite() {
            push(location(), ViolationKind::NonFinite);
        } else if !e.weight.is_positive() {
            push(
                location(),
                ViolationKind::WeightNonpositive {
                    weight: e.weight.clone(),
                },
            );
        }
    }
    if !entries.is_empty() {
        let sum = Prob::sum(entries.iter().map(|e| &e.weight));
        if !sum.is_one_tol(tol) {
            push(
                Location::Ensemble { state: None },
                ViolationKind::WeightsNotNormalized { sum },
            );
        }
    }

    let states: HashSet<&str> = model.ensemble.ids().collect();
    let alice: HashSet<&str> = model.scenario.ids(Side::Alice).collect();
    let bob: HashSet<&str> = model.scenario.ids(Side::Bob).collect();

    for (key, dist) in model.kernel.iter() {
        let cell_location = |field: Option<&str>| Location::Cell {
            state: key.state.clone(),
            alice: key.alice.clone(),
            bob: key.bob.clone(),
            field: field.map(str::to_string),
        };
        if !states.contains(key.state.as_str())
            || !alice.contains(key.alice.as_str())
            || !bob.contains(key.bob.as_str())
        {
            push(cell_location(None), ViolationKind::UnexpectedCell);
            continue;
        }
        let mut entries_ok = true;
        for (a, b, p) in dist.entries() {
            let field = format!("{}{}", a.symbol(), b.symbol());
            if !p.is_finite() {
                push(cell_location(Some(&field)), ViolationKind::NonFinite);
                entries_ok = false;
            } else if !(Prob::zero().le_tol(p, tol) && p.le_tol(&Prob::one(), tol)) {
                push(
                    cell_location(Some(&field)),
                    ViolationKind::OutOfRange { value: p.clone() },
                );
            }
        }
        if entries_ok {
            let sum = dist.total();
            if !sum.is_one_tol(tol) {
                push(cell_location(None), ViolationKind::CellNotNormalized { sum });
            }
        }
    }

    // Walk the declared domain in scenario order so that missing cells are
    // reported deterministically.
    let mut seen_state = HashSet::new();
    for e in entries {
        if !seen_state.insert(e.id.as_str()) {
            continue;
        }
        for a in &model.scenario.alice {
            for b in &model.scenario.bob {
                if model.cell(&e.id, &a.id, &b.id).is_none() {
                    push(
                        Location::Cell {
                            state: e.id.clone(),
                            alice: a.id.clone(),
                            bob: b.id.clone(),
                            field: None,
                        },
                        ViolationKind::MissingCell,
                    );
                }
            }
        }
    }

    ValidationReport { violations: out }
}

/// `P(A, B | a, b) = Σ_λ P(A, B | a, b, λ) P(λ)`.
pub fn behavior(model: &TheoryModel, tol: f64) -> Result<BehaviorTable> {
    model.ensure_valid(tol)?;
    Ok(behavior_unchecked(model))
}

/// Marginalisation without validation. Panics on a missing cell.
pub(crate) fn behavior_unchecked(model: &TheoryModel) -> BehaviorTable {
    BehaviorTable::from_fn(&model.scenario, |a, b| {
        model
            .ensemble
            .entries
            .iter()
            .fold(JointDist::zero(), |acc, e| {
                let cell = model
                    .cell(&e.id, &a.id, &b.id)
                    .expect("validated model has every cell");
                acc.plus(&cell.scaled(&e.weight))
            })
    })
}

/// Arguments of [`conditional_marginal`].
#[derive(Clone, Copy, Debug)]
pub struct MarginalQuery<'a> {
    pub side: Side,
    pub outcome: Outcome,
    pub own_setting: &'a str,
    pub far_setting: &'a str,
    /// Conditioning on the far outcome, if any.
    pub far_outcome: Option<Outcome>,
    pub state: &'a str,
}

/// `P(A | a, b, B, λ)` (or `P(A | a, b, λ)` without a far outcome) and the
/// Bob analogues, read from the kernel cell.
///
/// Returns `Ok(None)` when the conditioning event has probability zero.
pub fn conditional_marginal(
    model: &TheoryModel,
    q: &MarginalQuery<'_>,
    tol: f64,
) -> Result<Option<Prob>> {
    let (alice, bob) = match q.side {
        Side::Alice => (q.own_setting, q.far_setting),
        Side::Bob => (q.far_setting, q.own_setting),
    };
    let cell = model.require_cell(q.state, alice, bob)?;
    Ok(conditional_in_cell(cell, q.side, q.outcome, q.far_outcome, tol))
}

pub(crate) fn conditional_in_cell(
    cell: &JointDist,
    side: Side,
    outcome: Outcome,
    far_outcome: Option<Outcome>,
    tol: f64,
) -> Option<Prob> {
    match far_outcome {
        None => Some(cell.marginal(side, outcome)),
        Some(far) => {
            let joint = match side {
                Side::Alice => cell.get(outcome, far),
                Side::Bob => cell.get(far, outcome),
            };
            let den = cell.marginal(side.other(), far);
            joint.checked_div(&den, tol)
        }
    }
}
