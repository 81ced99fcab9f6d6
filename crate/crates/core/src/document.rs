//! The JSON theory document shared by every subcommand.
//!
//! ```json
//! { "name": "...",
//!   "scenario": { "alice_settings": [{"id": "a1", "vector": [0, 0, 1]}],
//!                 "bob_settings":   [{"id": "b1"}] },
//!   "ensemble": [{"id": "l1", "weight": "1/2"}, ...],
//!   "kernel": { "l1": { "a1|b1": {"++": 0, "+-": 1, "-+": 0, "--": 0} } } }
//! ```
//!
//! Probabilities are JSON numbers or `"p/q"` strings. Integers and rational
//! strings are read as exact values, numbers with a fraction or exponent
//! as decimals. Unknown keys and duplicate keys are rejected.

use std::fmt;
use std::marker::PhantomData;
use std::path::Path;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::error::Category;

use crate::error::{Error, Result};
use crate::model::{
    HiddenState, HiddenStateEnsemble, JointDist, ResponseKernel, Scenario, Setting, TheoryModel,
};
use crate::prob::Prob;

/// A JSON object kept in document order, rejecting duplicate keys.
#[derive(Clone, Debug, PartialEq)]
struct OrderedMap<V>(Vec<(String, V)>);

impl<V: Serialize> Serialize for OrderedMap<V> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de, V: Deserialize<'de>> Deserialize<'de> for OrderedMap<V> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct MapVisitor<V>(PhantomData<V>);

        impl<'de, V: Deserialize<'de>> Visitor<'de> for MapVisitor<V> {
            type Value = OrderedMap<V>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object")
            }

            fn visit_map<A: MapAccess<'de>>(
                self,
                mut access: A,
            ) -> std::result::Result<Self::Value, A::Error> {
                let mut out: Vec<(String, V)> = Vec::new();
                while let Some(key) = access.next_key::<String>()? {
                    if out.iter().any(|(k, _)| *k == key) {
                        return Err(de::Error::custom(format!("duplicate key `{key}`")));
                    }
                    let value = access.next_value()?;
                    out.push((key, value));
                }
                Ok(OrderedMap(out))
            }
        }

        deserializer.deserialize_map(MapVisitor(PhantomData))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SettingDoc {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vector: Option<[f64; 3]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    alice_settings: Vec<SettingDoc>,
    bob_settings: Vec<SettingDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryDoc {
    id: String,
    weight: Prob,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TheoryDoc {
    name: String,
    scenario: ScenarioDoc,
    ensemble: Vec<EntryDoc>,
    kernel: OrderedMap<OrderedMap<JointDist>>,
}

fn classify(err: serde_path_to_error::Error<serde_json::Error>) -> Error {
    let path = err.path().to_string();
    let inner = err.into_inner();
    match inner.classify() {
        Category::Syntax | Category::Eof | Category::Io => Error::Parse {
            line: inner.line(),
            column: inner.column(),
            message: strip_position(&inner.to_string()),
        },
        Category::Data => Error::Schema {
            path,
            message: strip_position(&inner.to_string()),
        },
    }
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

/// Parses a theory document. Semantic checks (normalisation, coverage) are
/// left to [`crate::model::validate_theory`].
pub fn parse_theory(text: &str) -> Result<TheoryModel> {
    let mut de = serde_json::Deserializer::from_str(text);
    let doc: TheoryDoc = serde_path_to_error::deserialize(&mut de).map_err(classify)?;
    de.end().map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: strip_position(&e.to_string()),
    })?;

    let settings = |v: Vec<SettingDoc>| -> Vec<Setting> {
        v.into_iter()
            .map(|s| Setting {
                id: s.id,
                direction: s.vector,
            })
            .collect()
    };
    let scenario = Scenario::new(
        settings(doc.scenario.alice_settings),
        settings(doc.scenario.bob_settings),
    );
    let ensemble = HiddenStateEnsemble::new(
        doc.ensemble
            .into_iter()
            .map(|e| HiddenState {
                id: e.id,
                weight: e.weight,
            })
            .collect(),
    );
    let mut kernel = ResponseKernel::new();
    for (state, cells) in doc.kernel.0 {
        for (key, dist) in cells.0 {
            let (a, b) = match key.split_once('|') {
                Some((a, b)) if !a.is_empty() && !b.is_empty() && !b.contains('|') => (a, b),
                _ => {
                    return Err(Error::Schema {
                        path: format!("kernel.{state}.{key}"),
                        message: "cell key must have the form \"<alice_id>|<bob_id>\"".into(),
                    })
                }
            };
            kernel.insert(&state, a, b, dist);
        }
    }
    Ok(TheoryModel {
        name: doc.name,
        scenario,
        ensemble,
        kernel,
    })
}

pub fn read_theory(path: impl AsRef<Path>) -> Result<(TheoryModel, Vec<u8>)> {
    let bytes = std::fs::read(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Parse {
        line: 0,
        column: 0,
        message: format!("input is not UTF-8: {e}"),
    })?;
    let model = parse_theory(text)?;
    Ok((model, bytes))
}

/// Renders a model as a theory document. States and cells are written in
/// ensemble and scenario order; cells absent from the kernel are skipped.
pub fn theory_to_json(model: &TheoryModel) -> String {
    let settings = |v: &[Setting]| -> Vec<SettingDoc> {
        v.iter()
            .map(|s| SettingDoc {
                id: s.id.clone(),
                vector: s.direction,
            })
            .collect()
    };
    let kernel = model
        .ensemble
        .entries
        .iter()
        .map(|e| {
            let mut cells = Vec::new();
            for a in &model.scenario.alice {
                for b in &model.scenario.bob {
                    if let Some(d) = model.cell(&e.id, &a.id, &b.id) {
                        cells.push((format!("{}|{}", a.id, b.id), d.clone()));
                    }
                }
            }
            (e.id.clone(), OrderedMap(cells))
        })
        .collect();
    let doc = TheoryDoc {
        name: model.name.clone(),
        scenario: ScenarioDoc {
            alice_settings: settings(&model.scenario.alice),
            bob_settings: settings(&model.scenario.bob),
        },
        ensemble: model
            .ensemble
            .entries
            .iter()
            .map(|e| EntryDoc {
                id: e.id.clone(),
                weight: e.weight.clone(),
            })
            .collect(),
        kernel: OrderedMap(kernel),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("theory document serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Outcome;

    const TWO_STATE: &str = r#"{
  "name": "two-state",
  "scenario": {
    "alice_settings": [{"id": "a1", "vector": [0, 0, 1]}],
    "bob_settings": [{"id": "b1"}]
  },
  "ensemble": [{"id": "l1", "weight": "1/2"}, {"id": "l2", "weight": 0.5}],
  "kernel": {
    "l1": {"a1|b1": {"++": 0, "+-": 1, "-+": 0, "--": 0}},
    "l2": {"a1|b1": {"++": 0, "+-": 0, "-+": "1/1", "--": 0.0}}
  }
}"#;

    #[test]
    fn parses_mixed_probabilities() {
        let m = parse_theory(TWO_STATE).unwrap();
        assert_eq!(m.name, "two-state");
        assert_eq!(m.scenario.alice[0].direction, Some([0.0, 0.0, 1.0]));
        assert_eq!(m.scenario.bob[0].direction, None);
        assert_eq!(m.ensemble.entries[0].weight, Prob::ratio(1, 2));
        assert_eq!(m.ensemble.entries[1].weight, Prob::Approx(0.5));
        assert_eq!(
            m.cell("l1", "a1", "b1").unwrap(),
            &JointDist::deterministic(Outcome::Plus, Outcome::Minus)
        );
        assert_eq!(m.cell("l2", "a1", "b1").unwrap().mm, Prob::Approx(0.0));
        assert!(!m.is_exact());
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_theory("{\n  \"name\": \"x\",\n  oops\n}").unwrap_err();
        match err {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected_with_path() {
        let text = TWO_STATE.replace("\"bob_settings\"", "\"extra\": 1, \"bob_settings\"");
        match parse_theory(&text).unwrap_err() {
            Error::Schema { path, message } => {
                assert_eq!(path, "scenario.extra");
                assert!(message.contains("unknown field"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = TWO_STATE.replace("\"--\": 0}}", "\"--\": 0, \"+0\": 0}}");
        assert!(matches!(parse_theory(&text), Err(Error::Schema { .. })));
    }

    #[test]
    fn bad_rational_is_schema_error() {
        let text = TWO_STATE.replace("\"1/2\"", "\"1/0\"");
        match parse_theory(&text).unwrap_err() {
            Error::Schema { path, .. } => assert_eq!(path, "ensemble[0].weight"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_cell_key() {
        let text = TWO_STATE.replace("\"a1|b1\": {\"++\": 0, \"+-\": 1", "\"a1b1\": {\"++\": 0, \"+-\": 1");
        match parse_theory(&text).unwrap_err() {
            Error::Schema { path, .. } => assert_eq!(path, "kernel.l1.a1b1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_state_keys_rejected() {
        let text = TWO_STATE.replace("\"l2\": {", "\"l1\": {");
        assert!(matches!(parse_theory(&text), Err(Error::Schema { .. })));
    }

    #[test]
    fn render_then_parse_is_identity() {
        let m = parse_theory(TWO_STATE).unwrap();
        let again = parse_theory(&theory_to_json(&m)).unwrap();
        assert_eq!(again, m);
    }
}
