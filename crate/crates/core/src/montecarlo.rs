//! Repeated EPRB runs under a theory model.
//!
//! Each trial draws, in order, the hidden state, the two settings (unless a
//! fixed sequence supplies them) and the outcome pair. Trial `i` uses its own
//! ChaCha8 stream `(seed, stream = i)`, so the record stream is identical
//! however the trials are scheduled across threads.

use std::io::{self, BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bell::{ChshSettings, CHSH_CONVENTION};
use crate::error::{Error, Result};
use crate::model::{Outcome, Scenario, Side, TheoryModel};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SettingPolicy {
    /// Independent uniform choice on each side.
    Uniform,
    /// Trial `i` uses pair `i mod len`.
    Sequence(Vec<(String, String)>),
}

impl SettingPolicy {
    /// Reads `alice,bob` lines. Blank lines and `#` comments are skipped, as
    /// is an optional `a,b` header.
    pub fn read_sequence(reader: impl BufRead) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (n == 0 && line == "a,b") {
                continue;
            }
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| Error::Sequence(format!("line {}: expected `a,b`", n + 1)))?;
            pairs.push((a.trim().to_string(), b.trim().to_string()));
        }
        if pairs.is_empty() {
            return Err(Error::Sequence("no setting pairs".into()));
        }
        Ok(SettingPolicy::Sequence(pairs))
    }
}

/// One simulated run. `state` is the hidden state and is not part of the
/// observable record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub state: String,
    pub alice: String,
    pub bob: String,
    #[serde(rename = "A")]
    pub a: Outcome,
    #[serde(rename = "B")]
    pub b: Outcome,
}

/// What the experimenters see: settings and outcomes only.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub trial: u64,
    pub alice: String,
    pub bob: String,
    #[serde(rename = "A")]
    pub a: Outcome,
    #[serde(rename = "B")]
    pub b: Outcome,
}

impl TrialRecord {
    pub fn observable(&self) -> Observation {
        Observation {
            trial: self.trial,
            alice: self.alice.clone(),
            bob: self.bob.clone(),
            a: self.a,
            b: self.b,
        }
    }
}

pub fn observables(records: &[TrialRecord]) -> Vec<Observation> {
    records.iter().map(TrialRecord::observable).collect()
}

pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Index of the entry hit by `u` in `[0, 1)`; entries with zero weight are
/// never returned.
fn pick(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

const OUTCOME_PAIRS: [(Outcome, Outcome); 4] = [
    (Outcome::Plus, Outcome::Plus),
    (Outcome::Plus, Outcome::Minus),
    (Outcome::Minus, Outcome::Plus),
    (Outcome::Minus, Outcome::Minus),
];

pub fn run_experiment(
    model: &TheoryModel,
    trials: u64,
    seed: u64,
    policy: &SettingPolicy,
    tol: f64,
) -> Result<Vec<TrialRecord>> {
    model.ensure_valid(tol)?;
    if trials == 0 {
        return Err(Error::EmptyInput("trials must be at least 1"));
    }
    let scenario = &model.scenario;
    let (na, nb) = (scenario.alice.len(), scenario.bob.len());
    let sequence: Vec<(usize, usize)> = match policy {
        SettingPolicy::Uniform => Vec::new(),
        SettingPolicy::Sequence(pairs) => pairs
            .iter()
            .map(|(a, b)| Ok((scenario.index_of(Side::Alice, a)?, scenario.index_of(Side::Bob, b)?)))
            .collect::<Result<_>>()?,
    };

    let weights: Vec<f64> = model.ensemble.entries.iter().map(|e| e.weight.to_f64()).collect();
    // cells[state][a][b] = [p++, p+-, p-+, p--]
    let cells: Vec<Vec<[f64; 4]>> = model
        .ensemble
        .entries
        .iter()
        .map(|e| {
            let mut v = Vec::with_capacity(na * nb);
            for a in &scenario.alice {
                for b in &scenario.bob {
                    let d = model.cell(&e.id, &a.id, &b.id).expect("validated");
                    v.push([d.pp.to_f64(), d.pm.to_f64(), d.mp.to_f64(), d.mm.to_f64()]);
                }
            }
            v
        })
        .collect();

    let records = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial);
            let s = pick(&weights, rng.random::<f64>());
            let (ia, ib) = if sequence.is_empty() {
                (rng.random_range(0..na), rng.random_range(0..nb))
            } else {
                sequence[(trial % sequence.len() as u64) as usize]
            };
            let k = pick(&cells[s][ia * nb + ib], rng.random::<f64>());
            let (a, b) = OUTCOME_PAIRS[k];
            TrialRecord {
                trial,
                state: model.ensemble.entries[s].id.clone(),
                alice: scenario.alice[ia].id.clone(),
                bob: scenario.bob[ib].id.clone(),
                a,
                b,
            }
        })
        .collect();
    Ok(records)
}

/// Writes `trial,a,b,A,B` rows (plus a trailing `lambda` column when
/// `reveal_lambda` is set).
pub fn write_csv(records: &[TrialRecord], reveal_lambda: bool, mut out: impl Write) -> io::Result<()> {
    if reveal_lambda {
        writeln!(out, "trial,a,b,A,B,lambda")?;
    } else {
        writeln!(out, "trial,a,b,A,B")?;
    }
    for r in records {
        write!(out, "{},{},{},{},{}", r.trial, r.alice, r.bob, r.a.value(), r.b.value())?;
        if reveal_lambda {
            write!(out, ",{}", r.state)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Statistics

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub alice: String,
    pub bob: String,
    /// Counts of `++, +-, -+, --`.
    pub counts: [u64; 4],
    pub total: u64,
    pub frequencies: [f64; 4],
    pub correlator: f64,
    pub correlator_se: f64,
}

impl PairStats {
    /// Binomial standard error of the frequency at `index`.
    pub fn frequency_se(&self, index: usize) -> f64 {
        let p = self.frequencies[index];
        (p * (1.0 - p) / self.total as f64).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshEstimate {
    pub settings: ChshSettings,
    pub convention: String,
    pub value: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoSignalingDelta {
    pub side: Side,
    pub own_setting: String,
    pub far_settings: (String, String),
    /// Difference of the estimated `P(+1 | own, far)` between the two far
    /// settings.
    pub delta: f64,
    /// Normal-approximation standard error of `delta`.
    pub se: f64,
}

impl NoSignalingDelta {
    /// `|delta| <= k·se`; with zero standard error the delta must vanish.
    pub fn within(&self, k: f64) -> bool {
        self.delta.abs() <= k * self.se
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentStats {
    pub trials: u64,
    pub seed: Option<u64>,
    /// Observed setting pairs in scenario order.
    pub pairs: Vec<PairStats>,
    /// Setting pairs with no trials.
    pub absent: Vec<(String, String)>,
    pub chsh: Option<ChshEstimate>,
    pub no_signaling: Vec<NoSignalingDelta>,
}

impl ExperimentStats {
    pub fn pair(&self, alice: &str, bob: &str) -> Option<&PairStats> {
        self.pairs.iter().find(|p| p.alice == alice && p.bob == bob)
    }
}

fn outcome_index(a: Outcome, b: Outcome) -> usize {
    OUTCOME_PAIRS
        .iter()
        .position(|&p| p == (a, b))
        .expect("all pairs listed")
}

/// Frequency estimates from observable records only.
pub fn summarize(
    observations: &[Observation],
    scenario: &Scenario,
    chsh: Option<&ChshSettings>,
) -> Result<ExperimentStats> {
    if observations.is_empty() {
        return Err(Error::EmptyInput("no trial records to summarize"));
    }
    let nb = scenario.bob.len();
    let mut counts = vec![[0u64; 4]; scenario.alice.len() * nb];
    for o in observations {
        let ia = scenario.index_of(Side::Alice, &o.alice)?;
        let ib = scenario.index_of(Side::Bob, &o.bob)?;
        counts[ia * nb + ib][outcome_index(o.a, o.b)] += 1;
    }

    let mut pairs = Vec::new();
    let mut absent = Vec::new();
    for (ia, a) in scenario.alice.iter().enumerate() {
        for (ib, b) in scenario.bob.iter().enumerate() {
            let c = counts[ia * nb + ib];
            let total: u64 = c.iter().sum();
            if total == 0 {
                absent.push((a.id.clone(), b.id.clone()));
                continue;
            }
            let n = total as f64;
            let frequencies = c.map(|k| k as f64 / n);
            let correlator = frequencies[0] + frequencies[3] - frequencies[1] - frequencies[2];
            // A·B is ±1, so its variance is 1 - E²
            let correlator_se = ((1.0 - correlator * correlator).max(0.0) / n).sqrt();
            pairs.push(PairStats {
                alice: a.id.clone(),
                bob: b.id.clone(),
                counts: c,
                total,
                frequencies,
                correlator,
                correlator_se,
            });
        }
    }

    let find = |a: &str, b: &str| pairs.iter().find(|p| p.alice == a && p.bob == b);

    let chsh = match chsh {
        Some(settings) => {
            let mut value = 0.0;
            let mut var = 0.0;
            let mut complete = true;
            for ((a, b), sign) in settings.pairs().iter().zip(ChshSettings::SIGNS) {
                match find(a, b) {
                    Some(p) => {
                        value += f64::from(sign) * p.correlator;
                        var += p.correlator_se * p.correlator_se;
                    }
                    None => complete = false,
                }
            }
            complete.then(|| ChshEstimate {
                settings: settings.clone(),
                convention: CHSH_CONVENTION.to_string(),
                value,
                se: var.sqrt(),
            })
        }
        None => None,
    };

    let mut no_signaling = Vec::new();
    for side in [Side::Alice, Side::Bob] {
        let far = scenario.settings(side.other());
        for own in scenario.settings(side) {
            // (P(+1 | own, far), n) per observed far setting
            let marginal = |f: &str| -> Option<(f64, f64)> {
                let p = match side {
                    Side::Alice => find(&own.id, f),
                    Side::Bob => find(f, &own.id),
                }?;
                let plus = match side {
                    Side::Alice => p.counts[0] + p.counts[1],
                    Side::Bob => p.counts[0] + p.counts[2],
                };
                Some((plus as f64 / p.total as f64, p.total as f64))
            };
            for (i, f1) in far.iter().enumerate() {
                for f2 in &far[i + 1..] {
                    let (Some((p1, n1)), Some((p2, n2))) = (marginal(&f1.id), marginal(&f2.id))
                    else {
                        continue;
                    };
                    no_signaling.push(NoSignalingDelta {
                        side,
                        own_setting: own.id.clone(),
                        far_settings: (f1.id.clone(), f2.id.clone()),
                        delta: p1 - p2,
                        se: (p1 * (1.0 - p1) / n1 + p2 * (1.0 - p2) / n2).sqrt(),
                    });
                }
            }
        }
    }

    Ok(ExperimentStats {
        trials: observations.len() as u64,
        seed: None,
        pairs,
        absent,
        chsh,
        no_signaling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{HiddenState, HiddenStateEnsemble, JointDist, Setting};
    use crate::prob::{Prob, DEFAULT_TOL};
    use crate::singlet::{make_quantum_theory, SingletSpec};

    fn deterministic_model() -> TheoryModel {
        TheoryModel::from_fn(
            "det",
            Scenario::labelled(&["a1", "a2"], &["b1", "b2"]),
            HiddenStateEnsemble::single("l"),
            |_, a, b| {
                let oa = if a.id == "a1" { Outcome::Plus } else { Outcome::Minus };
                let ob = if b.id == "b1" { Outcome::Minus } else { Outcome::Plus };
                JointDist::deterministic(oa, ob)
            },
        )
    }

    #[test]
    fn deterministic_outcomes_follow_instructions() {
        let m = deterministic_model();
        let recs = run_experiment(&m, 500, 7, &SettingPolicy::Uniform, DEFAULT_TOL).unwrap();
        for r in &recs {
            assert_eq!(r.a, if r.alice == "a1" { Outcome::Plus } else { Outcome::Minus });
            assert_eq!(r.b, if r.bob == "b1" { Outcome::Minus } else { Outcome::Plus });
        }
        let stats = summarize(&observables(&recs), &m.scenario, None).unwrap();
        for p in &stats.pairs {
            assert_eq!(p.correlator.abs(), 1.0);
            assert_eq!(p.correlator_se, 0.0);
        }
        assert!(stats.no_signaling.iter().all(|d| d.delta == 0.0 && d.within(4.0)));
    }

    #[test]
    fn reproducible_streams() {
        let m = deterministic_model();
        let a = run_experiment(&m, 200, 42, &SettingPolicy::Uniform, DEFAULT_TOL).unwrap();
        let b = run_experiment(&m, 200, 42, &SettingPolicy::Uniform, DEFAULT_TOL).unwrap();
        let c = run_experiment(&m, 200, 43, &SettingPolicy::Uniform, DEFAULT_TOL).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        // a prefix of a longer run is the shorter run
        let d = run_experiment(&m, 300, 42, &SettingPolicy::Uniform, DEFAULT_TOL).unwrap();
        assert_eq!(&d[..200], &a[..]);
    }

    #[test]
    fn singlet_equal_axes_never_agree() {
        let m = make_quantum_theory(&SingletSpec {
            alice: vec![Setting::planar("n", 17.0), Setting::planar("m", 80.0)],
            bob: vec![Setting::planar("n", 17.0), Setting::planar("m", 80.0)],
        })
        .unwrap();
        let policy = SettingPolicy::Sequence(vec![("n".into(), "n".into()), ("m".into(), "m".into())]);
        let recs = run_experiment(&m, 20_000, 3, &policy, DEFAULT_TOL).unwrap();
        assert!(recs.iter().all(|r| r.a != r.b));
    }

    #[test]
    fn only_observed_pairs_are_reported() {
        let m = deterministic_model();
        let policy = SettingPolicy::Sequence(vec![("a1".into(), "b2".into())]);
        let recs = run_experiment(&m, 10, 1, &policy, DEFAULT_TOL).unwrap();
        let stats = summarize(
            &observables(&recs),
            &m.scenario,
            Some(&ChshSettings::new("a1", "a2", "b1", "b2")),
        )
        .unwrap();
        assert_eq!(stats.pairs.len(), 1);
        assert_eq!(stats.pairs[0].total, 10);
        assert_eq!(stats.absent.len(), 3);
        assert!(stats.chsh.is_none());
        assert!(stats.no_signaling.is_empty());
    }

    #[test]
    fn errors() {
        let m = deterministic_model();
        assert!(matches!(
            run_experiment(&m, 0, 1, &SettingPolicy::Uniform, DEFAULT_TOL),
            Err(Error::EmptyInput(_))
        ));
        let bad = SettingPolicy::Sequence(vec![("zz".into(), "b1".into())]);
        assert!(run_experiment(&m, 1, 1, &bad, DEFAULT_TOL).is_err());
        assert!(summarize(&[], &m.scenario, None).is_err());
    }

    #[test]
    fn state_sampling_follows_weights() {
        let m = TheoryModel::from_fn(
            "w",
            Scenario::labelled(&["a"], &["b"]),
            HiddenStateEnsemble::new(vec![
                HiddenState {
                    id: "x".into(),
                    weight: Prob::ratio(1, 4),
                },
                HiddenState {
                    id: "y".into(),
                    weight: Prob::ratio(3, 4),
                },
            ]),
            |s, _, _| {
                if s == "x" {
                    JointDist::deterministic(Outcome::Plus, Outcome::Plus)
                } else {
                    JointDist::deterministic(Outcome::Minus, Outcome::Minus)
                }
            },
        );
        let recs = run_experiment(&m, 40_000, 9, &SettingPolicy::Uniform, DEFAULT_TOL).unwrap();
        let x = recs.iter().filter(|r| r.state == "x").count() as f64 / 40_000.0;
        // 4 standard errors of a binomial(0.25) at n = 40000
        assert!((x - 0.25).abs() < 4.0 * (0.25f64 * 0.75 / 40_000.0).sqrt());
        assert!(recs.iter().all(|r| (r.state == "x") == (r.a == Outcome::Plus)));
    }

    #[test]
    fn csv_export() {
        let m = deterministic_model();
        let recs = run_experiment(&m, 2, 5, &SettingPolicy::Uniform, DEFAULT_TOL).unwrap();
        let mut buf = Vec::new();
        write_csv(&recs, false, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("trial,a,b,A,B"));
        assert!(!text.contains(",l\n"));
        let mut buf = Vec::new();
        write_csv(&recs, true, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("trial,a,b,A,B,lambda\n"));
        assert!(text.lines().nth(1).unwrap().ends_with(",l"));
    }

    #[test]
    fn sequence_file_parsing() {
        let text = "a,b\n# comment\na1,b1\n\n a2 , b2\n";
        let p = SettingPolicy::read_sequence(text.as_bytes()).unwrap();
        assert_eq!(
            p,
            SettingPolicy::Sequence(vec![
                ("a1".into(), "b1".into()),
                ("a2".into(), "b2".into())
            ])
        );
        assert!(SettingPolicy::read_sequence("a1 b1\n".as_bytes()).is_err());
        assert!(SettingPolicy::read_sequence("".as_bytes()).is_err());
    }
}
