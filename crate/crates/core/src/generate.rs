//! Model builders: random theories for property checks and the standard
//! fixtures (singlet at CHSH angles, the eight-pattern instruction model).

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;

use crate::audit::AxisPair;
use crate::error::Result;
use crate::model::{HiddenState, HiddenStateEnsemble, JointDist, Outcome, Scenario, Setting, TheoryModel};
use crate::prob::Prob;
use crate::singlet::{make_quantum_theory, SingletSpec};

/// How the kernel of a random model is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    /// Arbitrary normalized cells; usually neither local nor signal-free.
    General,
    /// `P(A,B|a,b,λ) = P(A|a,λ) P(B|b,λ)`.
    Product,
    /// Product kernels with 0/1 marginals.
    Deterministic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RandomModelConfig {
    pub alice_settings: usize,
    pub bob_settings: usize,
    pub states: usize,
    pub kind: KernelKind,
    /// Exact rationals when set, otherwise decimals.
    pub exact: bool,
}

fn q(n: i64, d: i64) -> Prob {
    Prob::Exact(BigRational::new(BigInt::from(n), BigInt::from(d)))
}

/// `k` random positive weights with small denominators, summing to 1.
fn random_weights<R: Rng + ?Sized>(rng: &mut R, k: usize, exact: bool) -> Vec<Prob> {
    let raw: Vec<i64> = (0..k).map(|_| rng.random_range(1..=12)).collect();
    let total: i64 = raw.iter().sum();
    raw.into_iter()
        .map(|w| {
            if exact {
                q(w, total)
            } else {
                Prob::Approx(w as f64 / total as f64)
            }
        })
        .collect()
}

fn degrade(p: Prob, exact: bool) -> Prob {
    if exact {
        p
    } else {
        Prob::Approx(p.to_f64())
    }
}

pub fn random_model<R: Rng + ?Sized>(rng: &mut R, cfg: &RandomModelConfig) -> TheoryModel {
    let alice: Vec<String> = (0..cfg.alice_settings).map(|i| format!("a{}", i + 1)).collect();
    let bob: Vec<String> = (0..cfg.bob_settings).map(|i| format!("b{}", i + 1)).collect();
    let scenario = Scenario::new(
        alice.iter().map(Setting::labelled).collect(),
        bob.iter().map(Setting::labelled).collect(),
    );
    let weights = random_weights(rng, cfg.states, cfg.exact);
    let ensemble = HiddenStateEnsemble::new(
        weights
            .into_iter()
            .enumerate()
            .map(|(i, weight)| HiddenState {
                id: format!("l{}", i + 1),
                weight,
            })
            .collect(),
    );

    // per-state single-side marginals for product kernels, in quarters
    let marginal = |rng: &mut R| -> Prob {
        match cfg.kind {
            KernelKind::Deterministic => q(rng.random_range(0..=1), 1),
            _ => q(rng.random_range(0..=4), 4),
        }
    };
    let mut product: Vec<(Vec<Prob>, Vec<Prob>)> = Vec::new();
    for _ in 0..cfg.states {
        let pa = (0..cfg.alice_settings).map(|_| marginal(rng)).collect();
        let pb = (0..cfg.bob_settings).map(|_| marginal(rng)).collect();
        product.push((pa, pb));
    }
    let mut general: Vec<JointDist> = Vec::new();
    if cfg.kind == KernelKind::General {
        for _ in 0..cfg.states * cfg.alice_settings * cfg.bob_settings {
            let raw: [i64; 4] = [(); 4].map(|_| rng.random_range(0..=6));
            let raw = if raw.iter().all(|&x| x == 0) { [1, 0, 0, 0] } else { raw };
            let t: i64 = raw.iter().sum();
            general.push(JointDist::new(q(raw[0], t), q(raw[1], t), q(raw[2], t), q(raw[3], t)));
        }
    }

    let state_index = |id: &str| id[1..].parse::<usize>().expect("generated id") - 1;
    let (na, nb) = (cfg.alice_settings, cfg.bob_settings);
    let exact = cfg.exact;
    TheoryModel::from_fn("random", scenario, ensemble, |state, a, b| {
        let s = state_index(state);
        let ia = alice.iter().position(|x| *x == a.id).expect("declared");
        let ib = bob.iter().position(|x| *x == b.id).expect("declared");
        let d = match cfg.kind {
            KernelKind::General => general[(s * na + ia) * nb + ib].clone(),
            _ => JointDist::product(&product[s].0[ia], &product[s].1[ib]),
        };
        d.map(|p| degrade(p.clone(), exact))
    })
}

/// Axis directions in the x–z plane at `180°·i/n`, with identical setting
/// ids on both sides.
pub fn planar_axes(n: usize) -> Vec<Setting> {
    (0..n)
        .map(|i| Setting::planar(format!("n{}", i + 1), 180.0 * i as f64 / n as f64))
        .collect()
}

pub fn axis_pairs(settings: &[Setting]) -> Vec<AxisPair> {
    settings.iter().map(|s| AxisPair::new(&s.id, &s.id)).collect()
}

/// A deterministic theory over `patterns`: state `i` gives Alice `patterns[i]`
/// on the axes and Bob the opposite, with the given weights.
pub fn anticorrelated_strategies(
    name: &str,
    axes: Vec<Setting>,
    patterns: &[Vec<Outcome>],
    weights: Vec<Prob>,
) -> TheoryModel {
    let ids: Vec<String> = axes.iter().map(|s| s.id.clone()).collect();
    let scenario = Scenario::new(axes.clone(), axes);
    let label = |p: &[Outcome]| p.iter().map(|o| o.symbol()).collect::<String>();
    let states: Vec<String> = patterns.iter().map(|p| format!("l{}", label(p))).collect();
    let ensemble = HiddenStateEnsemble::new(
        states
            .iter()
            .zip(weights)
            .map(|(id, weight)| HiddenState {
                id: id.clone(),
                weight,
            })
            .collect(),
    );
    TheoryModel::from_fn(name, scenario, ensemble, |state, a, b| {
        let s = states.iter().position(|x| x == state).expect("declared");
        let ia = ids.iter().position(|x| *x == a.id).expect("declared");
        let ib = ids.iter().position(|x| *x == b.id).expect("declared");
        JointDist::deterministic(patterns[s][ia], patterns[s][ib].flip())
    })
}

/// A random mixture of distinct anti-correlated deterministic strategies over
/// `axes` axes with exact weights.
pub fn random_anticorrelated_mixture<R: Rng + ?Sized>(rng: &mut R, axes: usize) -> TheoryModel {
    let total = 1usize << axes;
    let k = rng.random_range(1..=total.min(8));
    let mut codes: Vec<usize> = (0..total).collect();
    // partial Fisher–Yates for k distinct patterns
    for i in 0..k {
        let j = rng.random_range(i..total);
        codes.swap(i, j);
    }
    let mut chosen: Vec<usize> = codes[..k].to_vec();
    chosen.sort_unstable();
    let patterns: Vec<Vec<Outcome>> = chosen
        .iter()
        .map(|c| {
            (0..axes)
                .map(|bit| {
                    if c >> (axes - 1 - bit) & 1 == 0 {
                        Outcome::Plus
                    } else {
                        Outcome::Minus
                    }
                })
                .collect()
        })
        .collect();
    let weights = random_weights(rng, k, true);
    anticorrelated_strategies("random anti-correlated mixture", planar_axes(axes), &patterns, weights)
}

/// Eight states, one per sign pattern over three axes, each of weight 1/8.
pub fn eight_pattern_model() -> TheoryModel {
    let patterns: Vec<Vec<Outcome>> = (0..8usize)
        .map(|c| {
            (0..3)
                .map(|bit| {
                    if c >> (2 - bit) & 1 == 0 {
                        Outcome::Plus
                    } else {
                        Outcome::Minus
                    }
                })
                .collect()
        })
        .collect();
    anticorrelated_strategies("eight-pattern instruction sets", planar_axes(3), &patterns, vec![q(1, 8); 8])
}

/// Singlet with `a = 0°, a' = 90°` and `b = 45°, b' = 135°`.
pub fn singlet_chsh_model() -> Result<TheoryModel> {
    make_quantum_theory(&SingletSpec {
        alice: vec![Setting::planar("a1", 0.0), Setting::planar("a2", 90.0)],
        bob: vec![Setting::planar("b1", 45.0), Setting::planar("b2", 135.0)],
    })
}

/// Singlet with the three axes `0°, 60°, 120°` shared by both sides.
pub fn singlet_three_axis_model() -> Result<TheoryModel> {
    let axes = vec![
        Setting::planar("n1", 0.0),
        Setting::planar("n2", 60.0),
        Setting::planar("n3", 120.0),
    ];
    make_quantum_theory(&SingletSpec {
        alice: axes.clone(),
        bob: axes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::detect_equal_axes;
    use crate::prob::DEFAULT_TOL;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_models_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in [KernelKind::General, KernelKind::Product, KernelKind::Deterministic] {
            for exact in [true, false] {
                let cfg = RandomModelConfig {
                    alice_settings: 2,
                    bob_settings: 3,
                    states: 3,
                    kind,
                    exact,
                };
                let m = random_model(&mut rng, &cfg);
                assert!(m.validate(DEFAULT_TOL).is_valid(), "{kind:?}");
                assert_eq!(m.is_exact(), exact);
            }
        }
    }

    #[test]
    fn eight_pattern_shape() {
        let m = eight_pattern_model();
        assert!(m.validate(0.0).is_valid());
        assert!(m.is_exact());
        assert_eq!(m.ensemble.entries.len(), 8);
        assert_eq!(detect_equal_axes(&m.scenario).len(), 3);
    }

    #[test]
    fn mixtures_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let m = random_anticorrelated_mixture(&mut rng, 3);
            assert!(m.validate(0.0).is_valid());
        }
    }
}
