//! The orthodox quantum description of a spin singlet: one hidden state,
//! `ψ`, whose kernel is the singlet prediction for spin measurements along
//! the chosen directions.
//!
//! The closed form `P(A, B | a, b) = (1 - A B cos θ) / 4` is used here; it is
//! checked against an explicit projector computation on the 4-dimensional
//! two-spin space in the integration tests.

use crate::error::{Error, Result};
use crate::model::{
    norm, HiddenStateEnsemble, JointDist, Outcome, Scenario, Setting, TheoryModel, UNIT_NORM_TOL,
};
use crate::prob::Prob;

pub const SINGLET_STATE_ID: &str = "psi";

/// Settings for a singlet model; every setting needs a direction.
#[derive(Clone, Debug, PartialEq)]
pub struct SingletSpec {
    pub alice: Vec<Setting>,
    pub bob: Vec<Setting>,
}

fn unit(label: &str, v: &[f64; 3]) -> Result<f64> {
    let n = norm(v);
    if (n - 1.0).abs() <= UNIT_NORM_TOL {
        Ok(n)
    } else {
        Err(Error::NonUnitVector {
            label: label.to_string(),
            norm: n,
        })
    }
}

/// Singlet probability of outcomes `(alice, bob)` for spin measurements along
/// unit vectors `a` and `b`.
pub fn singlet_joint_prob(a: &[f64; 3], b: &[f64; 3], alice: Outcome, bob: Outcome) -> Result<f64> {
    let na = unit("a", a)?;
    let nb = unit("b", b)?;
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let mut cos = (dot / (na * nb)).clamp(-1.0, 1.0);
    // parallel or antiparallel up to rounding: keep the forbidden cells at 0
    if 1.0 - cos.abs() <= 4.0 * f64::EPSILON {
        cos = cos.signum();
    }
    let sign = f64::from(alice.value() * bob.value());
    Ok((1.0 - sign * cos) / 4.0)
}

fn direction(s: &Setting) -> Result<&[f64; 3]> {
    s.direction
        .as_ref()
        .ok_or_else(|| Error::MissingDirection { id: s.id.clone() })
}

pub fn singlet_cell(a: &Setting, b: &Setting) -> Result<JointDist> {
    let (da, db) = (direction(a)?, direction(b)?);
    unit(&a.id, da)?;
    unit(&b.id, db)?;
    let p = |x, y| singlet_joint_prob(da, db, x, y).map(Prob::Approx);
    use Outcome::*;
    Ok(JointDist::new(
        p(Plus, Plus)?,
        p(Plus, Minus)?,
        p(Minus, Plus)?,
        p(Minus, Minus)?,
    ))
}

/// Builds the one-state theory `{ψ: 1}` with singlet cells for every pair.
pub fn make_quantum_theory(spec: &SingletSpec) -> Result<TheoryModel> {
    let scenario = Scenario::new(spec.alice.clone(), spec.bob.clone());
    let ensemble = HiddenStateEnsemble::single(SINGLET_STATE_ID);
    let mut first_err = None;
    let model = TheoryModel::from_fn("quantum singlet", scenario, ensemble, |_, a, b| {
        singlet_cell(a, b).unwrap_or_else(|e| {
            first_err.get_or_insert(e);
            JointDist::zero()
        })
    });
    match first_err {
        Some(e) => Err(e),
        None => Ok(model),
    }
}

/// Parses `"a1=0,a2=90"` into settings in the x–z plane, angles in degrees.
pub fn planar_settings(text: &str) -> Result<Vec<Setting>> {
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|tok| {
            let (id, deg) = tok.split_once('=').ok_or_else(|| {
                Error::ScenarioShape(format!("expected id=degrees, got `{tok}`"))
            })?;
            let deg: f64 = deg
                .trim()
                .parse()
                .map_err(|_| Error::ScenarioShape(format!("bad angle in `{tok}`")))?;
            Ok(Setting::planar(id.trim(), deg))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{behavior, Outcome::*};
    use crate::prob::DEFAULT_TOL;

    const Z: [f64; 3] = [0.0, 0.0, 1.0];
    const X: [f64; 3] = [1.0, 0.0, 0.0];

    #[test]
    fn equal_axes_are_anticorrelated() {
        assert_eq!(singlet_joint_prob(&Z, &Z, Plus, Plus).unwrap(), 0.0);
        assert_eq!(singlet_joint_prob(&Z, &Z, Minus, Minus).unwrap(), 0.0);
        assert_eq!(singlet_joint_prob(&Z, &Z, Plus, Minus).unwrap(), 0.5);
    }

    #[test]
    fn orthogonal_axes_are_uniform() {
        for a in [Plus, Minus] {
            for b in [Plus, Minus] {
                assert!((singlet_joint_prob(&Z, &X, a, b).unwrap() - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rejects_non_unit() {
        assert!(matches!(
            singlet_joint_prob(&[0.0, 0.0, 2.0], &Z, Plus, Plus),
            Err(Error::NonUnitVector { .. })
        ));
    }

    #[test]
    fn model_behavior_gives_minus_cos() {
        let spec = SingletSpec {
            alice: planar_settings("a1=0,a2=90").unwrap(),
            bob: planar_settings("b1=45,b2=135").unwrap(),
        };
        let m = make_quantum_theory(&spec).unwrap();
        assert!(m.validate(DEFAULT_TOL).is_valid());
        let beh = behavior(&m, DEFAULT_TOL).unwrap();
        for (a, da) in [("a1", 0.0f64), ("a2", 90.0)] {
            for (b, db) in [("b1", 45.0f64), ("b2", 135.0)] {
                let e = beh.get(a, b).unwrap().correlator().to_f64();
                assert!((e + (db - da).to_radians().cos()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn missing_direction_is_an_error() {
        let spec = SingletSpec {
            alice: vec![Setting::labelled("a")],
            bob: planar_settings("b=0").unwrap(),
        };
        assert!(matches!(
            make_quantum_theory(&spec),
            Err(Error::MissingDirection { id }) if id == "a"
        ));
    }

    #[test]
    fn planar_parsing() {
        let s = planar_settings("x=90, y = 0").unwrap();
        assert_eq!(s[0].id, "x");
        let d = s[0].direction.unwrap();
        assert!((d[0] - 1.0).abs() < 1e-15 && d[2].abs() < 1e-15);
        assert!(planar_settings("x90").is_err());
        assert!(planar_settings("x=ninety").is_err());
    }
}
