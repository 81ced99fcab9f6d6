//! Correlators, CHSH and three-axis Bell tests, the local CHSH bound by
//! enumeration, and local-polytope membership with certificates.
//!
//! CHSH convention: `S = E(a,b') - E(a,b) - E(a',b) - E(a',b')`, which is
//! `+2√2` for the singlet at `a = 0°, a' = 90°, b = 45°, b' = 135°`.

use std::fmt;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::audit::AxisPair;
use crate::error::{Error, Result};
use crate::lp::{Field, Tableau};
use crate::model::{BehaviorTable, JointDist, Outcome, Scenario, Side};
use crate::prob::Prob;

pub const CHSH_CONVENTION: &str = "S = E(a,b') - E(a,b) - E(a',b) - E(a',b')";

/// Largest number of settings per side accepted by
/// [`local_polytope_membership`].
pub const MAX_SETTINGS_PER_SIDE: usize = 4;

/// `E(a, b) = Σ A·B·P(A, B | a, b)`.
pub fn correlator(behavior: &BehaviorTable, alice: &str, bob: &str) -> Result<Prob> {
    Ok(behavior.require(alice, bob)?.correlator())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChshSettings {
    pub a: String,
    pub a2: String,
    pub b: String,
    pub b2: String,
}

impl ChshSettings {
    pub fn new(a: &str, a2: &str, b: &str, b2: &str) -> Self {
        ChshSettings {
            a: a.into(),
            a2: a2.into(),
            b: b.into(),
            b2: b2.into(),
        }
    }

    /// Parses `"a1,a2:b1,b2"`.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::ScenarioShape(format!("expected `a,a':b,b'`, got `{text}`"));
        let (left, right) = text.split_once(':').ok_or_else(bad)?;
        let (a, a2) = left.split_once(',').ok_or_else(bad)?;
        let (b, b2) = right.split_once(',').ok_or_else(bad)?;
        let parts = [a, a2, b, b2].map(str::trim);
        if parts.iter().any(|p| p.is_empty() || p.contains(',')) {
            return Err(bad());
        }
        Ok(ChshSettings::new(parts[0], parts[1], parts[2], parts[3]))
    }

    /// The four setting pairs in the order `(a,b), (a,b'), (a',b), (a',b')`.
    pub fn pairs(&self) -> [(&str, &str); 4] {
        [
            (&self.a, &self.b),
            (&self.a, &self.b2),
            (&self.a2, &self.b),
            (&self.a2, &self.b2),
        ]
    }

    /// Sign of each term, in [`ChshSettings::pairs`] order.
    pub const SIGNS: [i32; 4] = [-1, 1, -1, -1];
}

fn chsh_combination(e: &[Prob; 4]) -> Prob {
    ChshSettings::SIGNS
        .iter()
        .zip(e)
        .fold(Prob::zero(), |acc, (s, x)| {
            if *s > 0 {
                &acc + x
            } else {
                &acc - x
            }
        })
}

/// An assignment of an outcome to every setting on each side.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterministicStrategy {
    pub alice: Vec<(String, Outcome)>,
    pub bob: Vec<(String, Outcome)>,
}

impl DeterministicStrategy {
    pub fn outcome(&self, side: Side, setting: &str) -> Option<Outcome> {
        let list = match side {
            Side::Alice => &self.alice,
            Side::Bob => &self.bob,
        };
        list.iter().find(|(id, _)| id == setting).map(|(_, o)| *o)
    }

    /// All `2^(n_a + n_b)` strategies. Alice's assignments vary slowest;
    /// within a side the first setting is the most significant bit and `+`
    /// precedes `-`.
    pub fn enumerate(scenario: &Scenario) -> Vec<DeterministicStrategy> {
        let side_maps = |ids: Vec<&str>| -> Vec<Vec<(String, Outcome)>> {
            let n = ids.len();
            (0..1usize << n)
                .map(|bits| {
                    ids.iter()
                        .enumerate()
                        .map(|(k, id)| {
                            let o = if bits >> (n - 1 - k) & 1 == 0 {
                                Outcome::Plus
                            } else {
                                Outcome::Minus
                            };
                            (id.to_string(), o)
                        })
                        .collect()
                })
                .collect()
        };
        let alice = side_maps(scenario.ids(Side::Alice).collect());
        let bob = side_maps(scenario.ids(Side::Bob).collect());
        let mut out = Vec::with_capacity(alice.len() * bob.len());
        for a in &alice {
            for b in &bob {
                out.push(DeterministicStrategy {
                    alice: a.clone(),
                    bob: b.clone(),
                });
            }
        }
        out
    }

    /// The exact 0/1 behaviour this strategy produces.
    pub fn behavior(&self, scenario: &Scenario) -> BehaviorTable {
        BehaviorTable::from_fn(scenario, |a, b| {
            JointDist::deterministic(
                self.outcome(Side::Alice, &a.id).expect("strategy covers scenario"),
                self.outcome(Side::Bob, &b.id).expect("strategy covers scenario"),
            )
        })
    }

    pub fn label(&self) -> String {
        let side = |v: &[(String, Outcome)]| {
            v.iter()
                .map(|(id, o)| format!("{id}{}", o.symbol()))
                .collect::<Vec<_>>()
                .join(" ")
        };
        format!("[{} | {}]", side(&self.alice), side(&self.bob))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalChshBound {
    pub value: i64,
    pub strategies_checked: usize,
    pub argmax: Vec<DeterministicStrategy>,
}

fn strategy_chsh(s: &DeterministicStrategy, settings: &ChshSettings) -> i64 {
    settings
        .pairs()
        .iter()
        .zip(ChshSettings::SIGNS)
        .map(|((a, b), sign)| {
            let x = s.outcome(Side::Alice, a).expect("strategy covers setting").value();
            let y = s.outcome(Side::Bob, b).expect("strategy covers setting").value();
            i64::from(sign * x * y)
        })
        .sum()
}

fn chsh_bound_for(settings: &ChshSettings) -> LocalChshBound {
    let scenario = Scenario::labelled(&[&settings.a, &settings.a2], &[&settings.b, &settings.b2]);
    let strategies = DeterministicStrategy::enumerate(&scenario);
    let scored: Vec<(i64, DeterministicStrategy)> = strategies
        .into_iter()
        .map(|s| (strategy_chsh(&s, settings).abs(), s))
        .collect();
    let value = scored.iter().map(|(v, _)| *v).max().unwrap_or(0);
    LocalChshBound {
        value,
        strategies_checked: scored.len(),
        argmax: scored
            .into_iter()
            .filter(|(v, _)| *v == value)
            .map(|(_, s)| s)
            .collect(),
    }
}

/// Maximum of `|S|` over all 16 deterministic strategies of a 2×2 scenario.
pub fn max_local_chsh(scenario: &Scenario) -> Result<LocalChshBound> {
    if scenario.alice.len() != 2 || scenario.bob.len() != 2 {
        return Err(Error::ScenarioShape(format!(
            "CHSH needs exactly 2 settings per side, got {}x{}",
            scenario.alice.len(),
            scenario.bob.len()
        )));
    }
    let settings = ChshSettings::new(
        &scenario.alice[0].id,
        &scenario.alice[1].id,
        &scenario.bob[0].id,
        &scenario.bob[1].id,
    );
    Ok(chsh_bound_for(&settings))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshResult {
    pub settings: ChshSettings,
    pub convention: String,
    /// `E(a,b), E(a,b'), E(a',b), E(a',b')`.
    pub correlators: [Prob; 4],
    pub value: Prob,
    pub local_bound: i64,
    pub violated: bool,
}

pub fn chsh(behavior: &BehaviorTable, settings: &ChshSettings, tol: f64) -> Result<ChshResult> {
    let mut e = Vec::with_capacity(4);
    for (a, b) in settings.pairs() {
        e.push(correlator(behavior, a, b)?);
    }
    let correlators: [Prob; 4] = e.try_into().expect("four pairs");
    let value = chsh_combination(&correlators);
    let local_bound = chsh_bound_for(settings).value;
    let violated = !value.abs().le_tol(&Prob::from(local_bound), tol);
    Ok(ChshResult {
        settings: settings.clone(),
        convention: CHSH_CONVENTION.to_string(),
        correlators,
        value,
        local_bound,
        violated,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bell1964Result {
    pub axes: [AxisPair; 3],
    pub e_ab: Prob,
    pub e_ac: Prob,
    pub e_bc: Prob,
    /// `|E(a,b) - E(a,c)|`.
    pub lhs: Prob,
    /// `1 + E(b,c)`.
    pub rhs: Prob,
    pub violated: bool,
}

/// `|E(a,b) - E(a,c)| <= 1 + E(b,c)`, where `E(x,y)` pairs Alice's setting
/// for axis `x` with Bob's setting for axis `y`. Requires `E(n,n) = -1` on
/// each of the three axes.
pub fn bell1964(behavior: &BehaviorTable, axes: &[AxisPair; 3], tol: f64) -> Result<Bell1964Result> {
    let minus_one = Prob::from(-1);
    for axis in axes {
        let e = correlator(behavior, &axis.alice, &axis.bob)?;
        if !e.approx_eq(&minus_one, tol) {
            return Err(Error::AntiCorrelationRequired {
                alice: axis.alice.clone(),
                bob: axis.bob.clone(),
                correlator: e.to_f64(),
            });
        }
    }
    let [a, b, c] = axes;
    let e_ab = correlator(behavior, &a.alice, &b.bob)?;
    let e_ac = correlator(behavior, &a.alice, &c.bob)?;
    let e_bc = correlator(behavior, &b.alice, &c.bob)?;
    let lhs = e_ab.abs_diff(&e_ac);
    let rhs = &Prob::one() + &e_bc;
    let violated = !lhs.le_tol(&rhs, tol);
    Ok(Bell1964Result {
        axes: axes.clone(),
        e_ab,
        e_ac,
        e_bc,
        lhs,
        rhs,
        violated,
    })
}

// ---------------------------------------------------------------------------
// Local polytope membership

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalTerm {
    pub alice: String,
    pub bob: String,
    #[serde(rename = "A")]
    pub a: Outcome,
    #[serde(rename = "B")]
    pub b: Outcome,
    pub coefficient: Prob,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeparatorKind {
    /// One of the eight sign variants of CHSH.
    Chsh { expression: String },
    /// Read off the dual of the feasibility problem.
    Dual,
    /// A single-side marginal that moves with the far setting; zero on
    /// every local behaviour.
    NoSignalling { expression: String },
    /// The outcome probabilities of one setting pair do not sum to 1.
    Normalization { expression: String },
}

/// A linear functional `f(p) = Σ c · P(A,B|a,b)` whose maximum over the
/// local polytope is `local_bound` and whose value on the tested behaviour
/// is `value > local_bound`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Separator {
    pub kind: SeparatorKind,
    pub terms: Vec<FunctionalTerm>,
    pub local_bound: Prob,
    pub value: Prob,
}

impl Separator {
    pub fn evaluate(&self, behavior: &BehaviorTable) -> Result<Prob> {
        let mut acc = Prob::zero();
        for t in &self.terms {
            let p = behavior.require(&t.alice, &t.bob)?.get(t.a, t.b);
            acc = &acc + &(&t.coefficient * p);
        }
        Ok(acc)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedStrategy {
    pub strategy: DeterministicStrategy,
    pub weight: Prob,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum MembershipCertificate {
    Inside {
        weights: Vec<WeightedStrategy>,
        /// Largest absolute difference between the mixture and the input.
        residual: f64,
    },
    Outside {
        separator: Separator,
        /// Phase-one objective of the feasibility problem, or the margin of
        /// a marginal separator.
        lp_residual: f64,
    },
}

impl MembershipCertificate {
    pub fn is_inside(&self) -> bool {
        matches!(self, MembershipCertificate::Inside { .. })
    }
}

impl fmt::Display for MembershipCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MembershipCertificate::Inside { weights, residual } => write!(
                f,
                "inside the local polytope ({} strategies, residual {residual})",
                weights.len()
            ),
            MembershipCertificate::Outside { separator, .. } => {
                let what = match &separator.kind {
                    SeparatorKind::Chsh { expression }
                    | SeparatorKind::NoSignalling { expression }
                    | SeparatorKind::Normalization { expression } => expression.clone(),
                    SeparatorKind::Dual => "dual infeasibility functional".into(),
                };
                write!(
                    f,
                    "outside the local polytope: {what} = {} > local bound {}",
                    separator.value, separator.local_bound
                )
            }
        }
    }
}

/// Cell layout shared by the LP rows and the separator terms.
fn cell_index(scenario: &Scenario) -> Vec<(String, String, Outcome, Outcome)> {
    let mut out = Vec::new();
    for a in &scenario.alice {
        for b in &scenario.bob {
            for oa in Outcome::BOTH {
                for ob in Outcome::BOTH {
                    out.push((a.id.clone(), b.id.clone(), oa, ob));
                }
            }
        }
    }
    out
}

trait FromProb: Field {
    fn from_prob(p: &Prob) -> Self;
    fn into_prob(self) -> Prob;
}

impl FromProb for BigRational {
    fn from_prob(p: &Prob) -> Self {
        p.as_rational().cloned().expect("exact path only sees exact values")
    }
    fn into_prob(self) -> Prob {
        Prob::Exact(self)
    }
}

impl FromProb for f64 {
    fn from_prob(p: &Prob) -> Self {
        p.to_f64()
    }
    fn into_prob(self) -> Prob {
        Prob::Approx(self)
    }
}

struct LpOutcome<F> {
    residual: F,
    weights: Vec<F>,
    /// Dual prices on the coordinate rows (the separating functional).
    duals: Vec<F>,
    /// Dual price on the normalization row.
    dual0: F,
}

/// Phase-one problem `min Σ r` over `Σ_v w_v c(v) + r = c(p)`, `Σ w + r₀ = 1`
/// with one artificial `r` per row. `vertex_coords[v][k]` is coordinate `k`
/// of vertex `v`.
fn solve_membership<F: FromProb>(targets: &[Prob], vertex_coords: &[&Vec<i64>]) -> LpOutcome<F> {
    let m = targets.len();
    let nv = vertex_coords.len();
    let ncols = nv + m + 1;
    let int = |x: i64| -> F {
        match x {
            0 => F::zero(),
            1 => F::one(),
            -1 => -F::one(),
            _ => F::from_prob(&Prob::from(x)),
        }
    };
    let mut rows = Vec::with_capacity(m + 1);
    let mut rhs = Vec::with_capacity(m + 1);
    let mut flipped = vec![false; m];
    for k in 0..m {
        let p = F::from_prob(&targets[k]);
        let flip = p.is_negative();
        flipped[k] = flip;
        let sign = |x: F| if flip { -x } else { x };
        let mut row: Vec<F> = vertex_coords.iter().map(|v| sign(int(v[k]))).collect();
        row.resize(ncols, F::zero());
        row[nv + k] = F::one();
        rows.push(row);
        rhs.push(sign(p));
    }
    let mut norm_row = vec![F::one(); nv];
    norm_row.resize(ncols, F::zero());
    norm_row[nv + m] = F::one();
    rows.push(norm_row);
    rhs.push(F::one());

    let mut cost = vec![F::zero(); nv];
    cost.resize(ncols, F::one());
    let basis = (nv..ncols).collect();
    let sol = Tableau::new(rows, rhs, cost, basis).solve();

    // the reduced cost of artificial k is 1 - y_k
    let duals = (0..m)
        .map(|k| {
            let y = F::one() - sol.reduced[nv + k].clone();
            if flipped[k] {
                -y
            } else {
                y
            }
        })
        .collect();
    LpOutcome {
        residual: sol.objective,
        weights: sol.x[..nv].to_vec(),
        duals,
        dual0: F::one() - sol.reduced[nv + m].clone(),
    }
}

/// Columns added per round of [`solve_membership_exact`].
const PRICING_BATCH: usize = 8;

/// Exact solve by column generation: start from the support of the float
/// optimum, solve the restricted problem in rationals and add every
/// strategy whose exact reduced cost is negative until none is left.
fn solve_membership_exact(targets: &[Prob], vertex_coords: &[Vec<i64>]) -> LpOutcome<BigRational> {
    let all: Vec<&Vec<i64>> = vertex_coords.iter().collect();
    let float = solve_membership::<f64>(targets, &all);
    let mut active: Vec<usize> = (0..all.len()).filter(|&v| float.weights[v] > 0.0).collect();
    loop {
        let cols: Vec<&Vec<i64>> = active.iter().map(|&v| all[v]).collect();
        let out = solve_membership::<BigRational>(targets, &cols);
        let score = |v: &Vec<i64>| -> BigRational {
            v.iter()
                .zip(&out.duals)
                .filter(|(c, _)| **c != 0)
                .fold(out.dual0.clone(), |acc, (c, y)| acc + y * BigRational::from_integer((*c).into()))
        };
        // a zero residual is optimal whatever the duals say
        let mut entering: Vec<(BigRational, usize)> = if Field::is_zero(&out.residual) {
            Vec::new()
        } else {
            (0..all.len())
                .filter(|v| active.binary_search(v).is_err())
                .map(|v| (score(all[v]), v))
                .filter(|(sc, _)| Field::is_positive(sc))
                .collect()
        };
        if entering.is_empty() {
            let mut weights = vec![<BigRational as Field>::zero(); all.len()];
            for (&v, w) in active.iter().zip(out.weights) {
                weights[v] = w;
            }
            return LpOutcome { weights, ..out };
        }
        entering.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)));
        let entering = entering.into_iter().take(PRICING_BATCH).map(|(_, v)| v);
        active.extend(entering);
        active.sort_unstable();
    }
}

fn functional_value(coefs: &[Prob], point: &[Prob]) -> Prob {
    coefs
        .iter()
        .zip(point)
        .fold(Prob::zero(), |acc, (c, p)| &acc + &(c * p))
}

fn vertex_max(coefs: &[Prob], vertices: &[Vec<bool>]) -> Prob {
    vertices
        .iter()
        .map(|v| {
            coefs
                .iter()
                .zip(v)
                .filter(|(_, on)| **on)
                .fold(Prob::zero(), |acc, (c, _)| &acc + c)
        })
        .reduce(Prob::max)
        .unwrap_or_else(Prob::zero)
}

/// Position of `P(oa, ob | a_ia, b_ib)` in [`cell_index`] order.
fn cell_pos(nb: usize, ia: usize, ib: usize, oa: Outcome, ob: Outcome) -> usize {
    let o = |x: Outcome| usize::from(x == Outcome::Minus);
    ((ia * nb + ib) * 2 + o(oa)) * 2 + o(ob)
}

/// Coordinates that determine a normalized no-signalling behaviour:
/// `P(A=+|a)`, `P(B=+|b)` and `P(+,+|a,b)`, each as a sum of cells.
fn coordinates(na: usize, nb: usize) -> Vec<Vec<usize>> {
    use Outcome::{Minus, Plus};
    let mut out = Vec::with_capacity(na + nb + na * nb);
    for ia in 0..na {
        out.push(vec![cell_pos(nb, ia, 0, Plus, Plus), cell_pos(nb, ia, 0, Plus, Minus)]);
    }
    for ib in 0..nb {
        out.push(vec![cell_pos(nb, 0, ib, Plus, Plus), cell_pos(nb, 0, ib, Minus, Plus)]);
    }
    for ia in 0..na {
        for ib in 0..nb {
            out.push(vec![cell_pos(nb, ia, ib, Plus, Plus)]);
        }
    }
    out
}

/// A functional that vanishes (or is constant) on every local behaviour but
/// not on `targets`: a pair that does not sum to 1, or a marginal that moves
/// with the far setting.
fn marginal_separator(
    scenario: &Scenario,
    targets: &[Prob],
    tol: f64,
) -> Option<(SeparatorKind, Vec<Prob>, Prob)> {
    use Outcome::Plus;
    let (na, nb) = (scenario.alice.len(), scenario.bob.len());
    let ncells = targets.len();
    let oriented = |mut coefs: Vec<Prob>, mut bound: Prob| {
        let value = functional_value(&coefs, targets);
        if value.cmp_value(&bound) == std::cmp::Ordering::Less {
            coefs = coefs.into_iter().map(|c| -c).collect();
            bound = -bound;
        }
        (coefs, bound)
    };
    for ia in 0..na {
        for ib in 0..nb {
            let mut coefs = vec![Prob::zero(); ncells];
            for oa in Outcome::BOTH {
                for ob in Outcome::BOTH {
                    coefs[cell_pos(nb, ia, ib, oa, ob)] = Prob::one();
                }
            }
            if !functional_value(&coefs, targets).approx_eq(&Prob::one(), tol) {
                let (coefs, bound) = oriented(coefs, Prob::one());
                let expression = format!(
                    "sum of P(A,B|{},{})",
                    scenario.alice[ia].id, scenario.bob[ib].id
                );
                return Some((SeparatorKind::Normalization { expression }, coefs, bound));
            }
        }
    }
    for side in [Side::Alice, Side::Bob] {
        let (own_n, far_n) = match side {
            Side::Alice => (na, nb),
            Side::Bob => (nb, na),
        };
        for own in 0..own_n {
            for far in 1..far_n {
                let mut coefs = vec![Prob::zero(); ncells];
                for (f, sign) in [(0, 1), (far, -1)] {
                    for o in Outcome::BOTH {
                        let pos = match side {
                            Side::Alice => cell_pos(nb, own, f, Plus, o),
                            Side::Bob => cell_pos(nb, f, own, o, Plus),
                        };
                        coefs[pos] = Prob::from(sign);
                    }
                }
                if !functional_value(&coefs, targets).is_zero_tol(tol) {
                    let (coefs, bound) = oriented(coefs, Prob::zero());
                    let (own_id, f0, f1) = match side {
                        Side::Alice => (&scenario.alice[own].id, &scenario.bob[0].id, &scenario.bob[far].id),
                        Side::Bob => (&scenario.bob[own].id, &scenario.alice[0].id, &scenario.alice[far].id),
                    };
                    let x = if side == Side::Alice { "A" } else { "B" };
                    let expression = format!("P({x}=+|{own_id},{f0}) - P({x}=+|{own_id},{f1})");
                    return Some((SeparatorKind::NoSignalling { expression }, coefs, bound));
                }
            }
        }
    }
    None
}

fn chsh_variants(
    scenario: &Scenario,
    cells: &[(String, String, Outcome, Outcome)],
) -> Vec<(String, Vec<Prob>)> {
    let (a, a2) = (&scenario.alice[0].id, &scenario.alice[1].id);
    let (b, b2) = (&scenario.bob[0].id, &scenario.bob[1].id);
    let pairs = [(a, b), (a, b2), (a2, b), (a2, b2)];
    let mut out = Vec::with_capacity(8);
    for overall in [1i32, -1] {
        for minus_at in 0..4 {
            let signs: Vec<i32> = (0..4)
                .map(|k| overall * if k == minus_at { -1 } else { 1 })
                .collect();
            let expression = pairs
                .iter()
                .zip(&signs)
                .enumerate()
                .map(|(k, ((x, y), s))| {
                    let op = match (k, *s > 0) {
                        (0, true) => "",
                        (0, false) => "-",
                        (_, true) => " + ",
                        (_, false) => " - ",
                    };
                    format!("{op}E({x},{y})")
                })
                .collect::<String>();
            let coefs = cells
                .iter()
                .map(|(x, y, oa, ob)| {
                    let k = pairs.iter().position(|(px, py)| *px == x && *py == y);
                    match k {
                        Some(k) => Prob::from(i64::from(signs[k] * oa.value() * ob.value())),
                        None => Prob::zero(),
                    }
                })
                .collect();
            out.push((expression, coefs));
        }
    }
    out
}

/// Decides whether `behavior` is a convex mixture of deterministic-strategy
/// behaviours, returning the mixture or a separating functional.
///
/// Exact behaviours are decided in rational arithmetic; decimal ones with
/// `tol` on the phase-one residual.
pub fn local_polytope_membership(
    behavior: &BehaviorTable,
    scenario: &Scenario,
    tol: f64,
) -> Result<MembershipCertificate> {
    let (na, nb) = (scenario.alice.len(), scenario.bob.len());
    if na > MAX_SETTINGS_PER_SIDE || nb > MAX_SETTINGS_PER_SIDE {
        return Err(Error::EnumerationLimit { alice: na, bob: nb });
    }
    if na == 0 || nb == 0 {
        return Err(Error::ScenarioShape("scenario has an empty side".into()));
    }
    let cells = cell_index(scenario);
    let mut targets = Vec::with_capacity(cells.len());
    for (a, b, oa, ob) in &cells {
        targets.push(behavior.require(a, b)?.get(*oa, *ob).clone());
    }
    let strategies = DeterministicStrategy::enumerate(scenario);
    let vertices: Vec<Vec<bool>> = strategies
        .iter()
        .map(|s| {
            cells
                .iter()
                .map(|(a, b, oa, ob)| {
                    s.outcome(Side::Alice, a) == Some(*oa) && s.outcome(Side::Bob, b) == Some(*ob)
                })
                .collect()
        })
        .collect();
    let term_list = |coefs: &[Prob]| -> Vec<FunctionalTerm> {
        cells
            .iter()
            .zip(coefs)
            .filter(|(_, c)| !c.is_zero_tol(0.0))
            .map(|((a, b, oa, ob), c)| FunctionalTerm {
                alice: a.clone(),
                bob: b.clone(),
                a: *oa,
                b: *ob,
                coefficient: c.clone(),
            })
            .collect()
    };

    if let Some((kind, coefs, bound)) = marginal_separator(scenario, &targets, tol) {
        let value = functional_value(&coefs, &targets);
        return Ok(MembershipCertificate::Outside {
            lp_residual: (&value - &bound).to_f64(),
            separator: Separator {
                kind,
                terms: term_list(&coefs),
                local_bound: bound,
                value,
            },
        });
    }

    let coords = coordinates(na, nb);
    let coord_targets: Vec<Prob> = coords
        .iter()
        .map(|c| Prob::sum(c.iter().map(|&i| &targets[i])))
        .collect();
    let vertex_coords: Vec<Vec<i64>> = vertices
        .iter()
        .map(|v| coords.iter().map(|c| c.iter().filter(|&&i| v[i]).count() as i64).collect())
        .collect();

    let exact = targets.iter().all(Prob::is_exact);
    let (residual, weights, duals) = if exact {
        let out = solve_membership_exact(&coord_targets, &vertex_coords);
        (
            out.residual.clone().into_prob(),
            out.weights.into_iter().map(FromProb::into_prob).collect::<Vec<_>>(),
            out.duals.into_iter().map(FromProb::into_prob).collect::<Vec<_>>(),
        )
    } else {
        let all: Vec<&Vec<i64>> = vertex_coords.iter().collect();
        let out = solve_membership::<f64>(&coord_targets, &all);
        (
            Prob::Approx(out.residual),
            out.weights
                .into_iter()
                .map(|w| Prob::Approx(w.max(0.0)))
                .collect(),
            out.duals.into_iter().map(Prob::Approx).collect(),
        )
    };

    if residual.is_zero_tol(tol) {
        let weights: Vec<WeightedStrategy> = strategies
            .into_iter()
            .zip(weights)
            .filter(|(_, w)| w.is_positive())
            .map(|(strategy, weight)| WeightedStrategy { strategy, weight })
            .collect();
        let mixture = mixture_behavior(&weights, scenario);
        let worst = mixture
            .cells
            .iter()
            .flat_map(|c| {
                let target = behavior.get(&c.alice, &c.bob).expect("checked above");
                c.p.entries()
                    .into_iter()
                    .map(|(x, y, p)| p.abs_diff(target.get(x, y)).to_f64())
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max);
        return Ok(MembershipCertificate::Inside {
            weights,
            residual: worst,
        });
    }

    let lp_residual = residual.to_f64();
    if na == 2 && nb == 2 {
        let best = chsh_variants(scenario, &cells)
            .into_iter()
            .map(|(expr, coefs)| {
                let value = functional_value(&coefs, &targets);
                let bound = vertex_max(&coefs, &vertices);
                (expr, coefs, value, bound)
            })
            .filter(|(_, _, value, bound)| !value.le_tol(bound, tol))
            .max_by(|x, y| (&x.2 - &x.3).cmp_value(&(&y.2 - &y.3)));
        if let Some((expression, coefs, value, bound)) = best {
            return Ok(MembershipCertificate::Outside {
                separator: Separator {
                    kind: SeparatorKind::Chsh { expression },
                    terms: term_list(&coefs),
                    local_bound: bound,
                    value,
                },
                lp_residual,
            });
        }
    }

    // dual prices on the coordinates, spread back over the cells
    let mut cell_coefs = vec![Prob::zero(); cells.len()];
    for (c, y) in coords.iter().zip(&duals) {
        for &i in c {
            cell_coefs[i] = &cell_coefs[i] + y;
        }
    }
    let value = functional_value(&cell_coefs, &targets);
    let bound = vertex_max(&cell_coefs, &vertices);
    Ok(MembershipCertificate::Outside {
        separator: Separator {
            kind: SeparatorKind::Dual,
            terms: term_list(&cell_coefs),
            local_bound: bound,
            value,
        },
        lp_residual,
    })
}

pub fn mixture_behavior(weights: &[WeightedStrategy], scenario: &Scenario) -> BehaviorTable {
    BehaviorTable::from_fn(scenario, |a, b| {
        weights.iter().fold(JointDist::zero(), |acc, w| {
            let d = JointDist::deterministic(
                w.strategy.outcome(Side::Alice, &a.id).expect("covers"),
                w.strategy.outcome(Side::Bob, &b.id).expect("covers"),
            );
            acc.plus(&d.scaled(&w.weight))
        })
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorEntry {
    pub alice: String,
    pub bob: String,
    pub value: Prob,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BellTestOptions {
    pub chsh: Option<ChshSettings>,
    pub bell1964: Option<[AxisPair; 3]>,
    pub membership: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellTestResult {
    pub correlators: Vec<CorrelatorEntry>,
    pub chsh: Option<ChshResult>,
    pub bell1964: Option<Bell1964Result>,
    pub membership: Option<MembershipCertificate>,
}

pub fn bell_test(
    behavior: &BehaviorTable,
    scenario: &Scenario,
    options: &BellTestOptions,
    tol: f64,
) -> Result<BellTestResult> {
    let correlators = behavior
        .cells
        .iter()
        .map(|c| CorrelatorEntry {
            alice: c.alice.clone(),
            bob: c.bob.clone(),
            value: c.p.correlator(),
        })
        .collect();
    Ok(BellTestResult {
        correlators,
        chsh: options
            .chsh
            .as_ref()
            .map(|s| chsh(behavior, s, tol))
            .transpose()?,
        bell1964: options
            .bell1964
            .as_ref()
            .map(|axes| bell1964(behavior, axes, tol))
            .transpose()?,
        membership: if options.membership {
            Some(local_polytope_membership(behavior, scenario, tol)?)
        } else {
            None
        },
    })
}

impl ChshResult {
    pub fn value_f64(&self) -> f64 {
        self.value.to_f64()
    }
}

/// `2√2` rounded to f64; the quantum maximum of CHSH.
pub fn tsirelson_bound() -> f64 {
    2.0 * std::f64::consts::SQRT_2
}
