//! The game file format: a JSON document with named states and actions,
//! a payoff tensor, and per-cell transition maps keyed by state label.
//! Unknown keys are rejected; probabilities may be numbers or decimal
//! strings. Emission always writes numbers, which round-trip bit-exactly.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use stogame::{Game64, GameError, StochasticGame};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GameFileError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("validation failure: {0}")]
    Validation(String),
}

/// A probability written either as a JSON number or a decimal string.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Probability {
    Number(f64),
    Text(String),
}

impl Probability {
    fn to_f64(&self) -> Result<f64, GameFileError> {
        match self {
            Probability::Number(x) => Ok(*x),
            Probability::Text(s) => s.trim().parse().map_err(|_| {
                GameFileError::Schema(format!("'{s}' is not a decimal probability"))
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameFile {
    pub name: String,
    pub states: Vec<String>,
    pub actions1: Vec<Vec<String>>,
    pub actions2: Vec<Vec<String>>,
    /// `payoff[state][i][j]`, stage payoff to player 1.
    pub payoff: Vec<Vec<Vec<f64>>>,
    /// `transition[state][i][j]` maps successor state labels to
    /// probabilities; omitted labels mean probability zero.
    pub transition: Vec<Vec<Vec<BTreeMap<String, Probability>>>>,
}

/// Parses a document into a validated game.
pub fn parse_game(document: &str) -> Result<Game64, GameFileError> {
    let file: GameFile = serde_json::from_str(document).map_err(|e| {
        if e.classify() == serde_json::error::Category::Syntax
            || e.classify() == serde_json::error::Category::Eof
        {
            GameFileError::Syntax(e.to_string())
        } else {
            GameFileError::Schema(e.to_string())
        }
    })?;
    build_game(&file)
}

fn build_game(file: &GameFile) -> Result<Game64, GameFileError> {
    let n = file.states.len();
    let index_of = |label: &str| file.states.iter().position(|s| s == label);
    if file.transition.len() != n {
        return Err(GameFileError::Schema(format!(
            "transition has {} states, document declares {n}",
            file.transition.len()
        )));
    }
    let mut transition = Vec::with_capacity(n);
    for (k, per_state) in file.transition.iter().enumerate() {
        let mut per_i = Vec::with_capacity(per_state.len());
        for (i, per_action) in per_state.iter().enumerate() {
            let mut per_j = Vec::with_capacity(per_action.len());
            for (j, cell) in per_action.iter().enumerate() {
                let mut row = vec![0.0f64; n];
                for (label, p) in cell {
                    let dest = index_of(label).ok_or_else(|| {
                        GameFileError::Schema(format!(
                            "transition[{k}][{i}][{j}]: unknown state label '{label}'"
                        ))
                    })?;
                    row[dest] = p.to_f64()?;
                }
                per_j.push(row);
            }
            per_i.push(per_j);
        }
        transition.push(per_i);
    }
    StochasticGame::new(
        file.states.clone(),
        file.actions1.clone(),
        file.actions2.clone(),
        file.payoff.clone(),
        transition,
    )
    .map_err(|e| match e {
        GameError::Invalid(violations) => GameFileError::Validation(
            violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; "),
        ),
        other => GameFileError::Validation(other.to_string()),
    })
}

/// Emits a game as a pretty-printed document.
pub fn emit_game(game: &Game64, name: &str) -> String {
    let n = game.num_states();
    let file = GameFile {
        name: name.to_string(),
        states: game.state_labels().to_vec(),
        actions1: (0..n).map(|k| game.action1_labels(k).to_vec()).collect(),
        actions2: (0..n).map(|k| game.action2_labels(k).to_vec()).collect(),
        payoff: (0..n)
            .map(|k| {
                (0..game.actions1_len(k))
                    .map(|i| {
                        (0..game.actions2_len(k))
                            .map(|j| game.payoff(k, i, j))
                            .collect()
                    })
                    .collect()
            })
            .collect(),
        transition: (0..n)
            .map(|k| {
                (0..game.actions1_len(k))
                    .map(|i| {
                        (0..game.actions2_len(k))
                            .map(|j| {
                                game.transition_row(k, i, j)
                                    .iter()
                                    .enumerate()
                                    .filter(|(_, p)| **p != 0.0)
                                    .map(|(dest, p)| {
                                        (
                                            game.state_label(dest).to_string(),
                                            Probability::Number(*p),
                                        )
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("game serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;
    use stogame::game::builtins;

    #[test]
    fn round_trip_preserves_builtins_exactly() {
        for name in ["example1", "example2", "bigmatch", "pathology(6)"] {
            let game: Game64 = stogame::builtin_game(name).unwrap();
            let doc = emit_game(&game, name);
            let back = parse_game(&doc).unwrap();
            assert_eq!(game, back, "{name}");
        }
    }

    #[test]
    fn bad_row_sum_is_a_validation_failure_naming_the_row() {
        let mut doc = emit_game(&builtins::big_match(), "bm");
        doc = doc.replace("\"1*\": 1.0", "\"1*\": 0.8");
        match parse_game(&doc) {
            Err(GameFileError::Validation(msg)) => {
                assert!(msg.contains("transition[0][0][0]"), "{msg}");
            }
            other => panic!("expected validation failure, got {other:?}"),
        }
    }

    #[test]
    fn missing_field_is_a_schema_violation() {
        let doc = r#"{"name":"x","states":["a"],"actions1":[["u"]],"actions2":[["v"]],"payoff":[[[0.0]]]}"#;
        assert!(matches!(parse_game(doc), Err(GameFileError::Schema(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut doc = emit_game(&builtins::example1(), "e1");
        doc = doc.replacen('{', "{\"extra\": 1,", 1);
        assert!(matches!(parse_game(&doc), Err(GameFileError::Schema(_))));
    }

    #[test]
    fn broken_json_is_a_syntax_error() {
        assert!(matches!(
            parse_game("{\"name\": "),
            Err(GameFileError::Syntax(_))
        ));
    }

    #[test]
    fn unknown_state_label_is_a_schema_violation() {
        let mut doc = emit_game(&builtins::big_match(), "bm");
        doc = doc.replace("\"0*\": 1.0", "\"nowhere\": 1.0");
        match parse_game(&doc) {
            Err(GameFileError::Schema(msg)) => assert!(msg.contains("nowhere")),
            other => panic!("expected schema violation, got {other:?}"),
        }
    }

    /// Random game with exactly representable (dyadic) payoffs and
    /// exactly stochastic transition rows, the class the bit-exact
    /// round-trip contract covers.
    fn random_dyadic_game(seed: u64, states: usize, a1: usize, a2: usize) -> Game64 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let labels = |prefix: &str, n: usize| -> Vec<String> {
            (0..n).map(|i| format!("{prefix}{i}")).collect()
        };
        let payoff = (0..states)
            .map(|_| {
                (0..a1)
                    .map(|_| {
                        (0..a2)
                            .map(|_| rng.gen_range(-1024i32..=1024) as f64 / 1024.0)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let transition = (0..states)
            .map(|_| {
                (0..a1)
                    .map(|_| {
                        (0..a2)
                            .map(|_| {
                                // Integer mass split over destinations.
                                let mut units = vec![0u32; states];
                                for _ in 0..256 {
                                    units[rng.gen_range(0..states)] += 1;
                                }
                                units.iter().map(|u| *u as f64 / 256.0).collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        StochasticGame::new(
            labels("s", states),
            (0..states).map(|_| labels("a", a1)).collect(),
            (0..states).map(|_| labels("b", a2)).collect(),
            payoff,
            transition,
        )
        .unwrap()
    }

    proptest::proptest! {
        #[test]
        fn exactly_representable_games_round_trip(seed in 0u64..500, states in 1usize..5, a1 in 1usize..4, a2 in 1usize..4) {
            let game = random_dyadic_game(seed, states, a1, a2);
            let back = parse_game(&emit_game(&game, "random")).unwrap();
            proptest::prop_assert_eq!(game, back);
        }
    }

    #[test]
    fn string_probabilities_are_accepted() {
        let doc = r#"{
            "name": "tiny",
            "states": ["s"],
            "actions1": [["a"]],
            "actions2": [["b"]],
            "payoff": [[[1.5]]],
            "transition": [[[{"s": "1.0"}]]]
        }"#;
        let game = parse_game(doc).unwrap();
        assert_eq!(game.payoff(0, 0, 0), 1.5);
        assert!(game.is_absorbing(0));
    }
}
