//! Domain types for finite zero-sum stochastic games: the game container,
//! mixed actions and strategies, validation diagnostics, and the bundled
//! example games every solver is exercised on.

use crate::num::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// One real value per state.
pub type ValueVector<T> = Vec<T>;

/// Tolerance on transition-row sums: rows are renormalized when the sum
/// deviates by less than this, rejected otherwise.
pub const STOCHASTIC_TOL: f64 = 1e-9;
/// Tolerance for flagging a state absorbing.
pub const ABSORBING_TOL: f64 = 1e-12;
/// Tolerance on mixed-action normalization.
pub const MIXED_ACTION_TOL: f64 = 1e-12;

/// A probability vector over an action list.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedAction<T> {
    weights: Vec<T>,
}

impl<T: Scalar> MixedAction<T> {
    pub fn new(weights: Vec<T>) -> Result<Self, GameError> {
        if weights.is_empty() {
            return Err(GameError::BadMixedAction("empty weight vector".into()));
        }
        let mut sum = T::zero();
        for (i, w) in weights.iter().enumerate() {
            if !w.is_finite_s() || *w < T::zero() {
                return Err(GameError::BadMixedAction(format!(
                    "weight {i} is negative or not finite"
                )));
            }
            sum = sum + w.clone();
        }
        if (sum - T::one()).abs() > T::of(MIXED_ACTION_TOL) {
            return Err(GameError::BadMixedAction(
                "weights do not sum to 1".into(),
            ));
        }
        Ok(Self { weights })
    }

    /// Point mass on action `at` among `n` actions.
    pub fn dirac(n: usize, at: usize) -> Self {
        assert!(at < n, "dirac index out of range");
        let mut weights = vec![T::zero(); n];
        weights[at] = T::one();
        Self { weights }
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0);
        let w = T::one() / T::of_usize(n);
        Self {
            weights: vec![w; n],
        }
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Samples an action index. Deterministic given the rng state.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u = T::of(rng.gen::<f64>());
        let mut acc = T::zero();
        for (i, w) in self.weights.iter().enumerate() {
            acc = acc + w.clone();
            if u < acc {
                return i;
            }
        }
        self.weights.len() - 1
    }
}

/// Per-state mixed action, independent of the stage number.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryStrategy<T> {
    pub actions: Vec<MixedAction<T>>,
}

impl<T: Scalar> StationaryStrategy<T> {
    pub fn new(actions: Vec<MixedAction<T>>) -> Self {
        Self { actions }
    }

    pub fn action(&self, state: usize) -> &MixedAction<T> {
        &self.actions[state]
    }

    /// Checks shape against a game, for the given player (1 or 2).
    pub fn matches_game(&self, game: &StochasticGame<T>, player: u8) -> bool {
        self.actions.len() == game.num_states()
            && self.actions.iter().enumerate().all(|(k, a)| {
                a.len()
                    == if player == 1 {
                        game.actions1_len(k)
                    } else {
                        game.actions2_len(k)
                    }
            })
    }
}

/// Per-stage, per-state mixed action for a fixed horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovStrategy<T> {
    pub stages: Vec<StationaryStrategy<T>>,
}

impl<T> MarkovStrategy<T> {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn stage(&self, t: usize) -> &StationaryStrategy<T> {
        &self.stages[t]
    }
}

/// A validation diagnostic naming the offending indices.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("no states")]
    NoStates,
    #[error("duplicate state label '{label}'")]
    DuplicateStateLabel { label: String },
    #[error("state {state}: empty action set for player {player}")]
    EmptyActionSet { state: usize, player: u8 },
    #[error("payoff tensor has wrong shape at state {state}")]
    PayoffShape { state: usize },
    #[error("transition tensor has wrong shape at state {state}, actions ({i},{j})")]
    TransitionShape { state: usize, i: usize, j: usize },
    #[error("payoff[{state}][{i}][{j}] is not finite")]
    NonFinitePayoff { state: usize, i: usize, j: usize },
    #[error("transition[{state}][{i}][{j}][{dest}] is negative or not finite")]
    BadProbability {
        state: usize,
        i: usize,
        j: usize,
        dest: usize,
    },
    #[error("transition[{state}][{i}][{j}] row sums to {sum} (must be within {STOCHASTIC_TOL:e} of 1)")]
    RowSumOff {
        state: usize,
        i: usize,
        j: usize,
        sum: String,
    },
}

#[derive(Debug, Error)]
pub enum GameError {
    #[error("invalid game: {}", summarize(.0))]
    Invalid(Vec<Violation>),
    #[error("unknown builtin game '{0}'")]
    UnknownBuiltin(String),
    #[error("invalid mixed action: {0}")]
    BadMixedAction(String),
}

fn summarize(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// A finite zero-sum stochastic game. Payoffs are stage payoffs to player 1;
/// `transition[k][i][j]` is a probability vector over states. Immutable
/// after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticGame<T> {
    states: Vec<String>,
    actions1: Vec<Vec<String>>,
    actions2: Vec<Vec<String>>,
    payoff: Vec<Vec<Vec<T>>>,
    transition: Vec<Vec<Vec<Vec<T>>>>,
    absorbing: Vec<bool>,
}

impl<T: Scalar> StochasticGame<T> {
    /// Validating constructor. Transition rows within tolerance of
    /// stochastic are renormalized exactly; anything worse is rejected.
    pub fn new(
        states: Vec<String>,
        actions1: Vec<Vec<String>>,
        actions2: Vec<Vec<String>>,
        payoff: Vec<Vec<Vec<T>>>,
        transition: Vec<Vec<Vec<Vec<T>>>>,
    ) -> Result<Self, GameError> {
        let mut game = Self::new_unchecked(states, actions1, actions2, payoff, transition);
        let violations = game.validate();
        if !violations.is_empty() {
            return Err(GameError::Invalid(violations));
        }
        game.renormalize();
        game.absorbing = game.detect_absorbing();
        Ok(game)
    }

    /// Builds without validation, for diagnostics and file parsing.
    pub fn new_unchecked(
        states: Vec<String>,
        actions1: Vec<Vec<String>>,
        actions2: Vec<Vec<String>>,
        payoff: Vec<Vec<Vec<T>>>,
        transition: Vec<Vec<Vec<Vec<T>>>>,
    ) -> Self {
        let mut game = Self {
            states,
            actions1,
            actions2,
            payoff,
            transition,
            absorbing: Vec::new(),
        };
        game.absorbing = game.detect_absorbing();
        game
    }

    /// Returns every invariant violation; empty iff the game is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.states.len();
        if n == 0 {
            out.push(Violation::NoStates);
            return out;
        }
        for (k, label) in self.states.iter().enumerate() {
            if self.states[..k].iter().any(|l| l == label) {
                out.push(Violation::DuplicateStateLabel {
                    label: label.clone(),
                });
            }
        }
        if self.actions1.len() != n || self.actions2.len() != n {
            out.push(Violation::PayoffShape { state: n });
            return out;
        }
        for k in 0..n {
            if self.actions1[k].is_empty() {
                out.push(Violation::EmptyActionSet { state: k, player: 1 });
            }
            if self.actions2[k].is_empty() {
                out.push(Violation::EmptyActionSet { state: k, player: 2 });
            }
        }
        if self.payoff.len() != n || self.transition.len() != n {
            out.push(Violation::PayoffShape { state: n });
            return out;
        }
        for k in 0..n {
            let (m1, m2) = (self.actions1[k].len(), self.actions2[k].len());
            if self.payoff[k].len() != m1 || self.payoff[k].iter().any(|row| row.len() != m2) {
                out.push(Violation::PayoffShape { state: k });
                continue;
            }
            if self.transition[k].len() != m1 {
                out.push(Violation::TransitionShape { state: k, i: 0, j: 0 });
                continue;
            }
            for i in 0..m1 {
                for j in 0..m2 {
                    if !self.payoff[k][i][j].is_finite_s() {
                        out.push(Violation::NonFinitePayoff { state: k, i, j });
                    }
                    if self.transition[k][i].len() != m2 || self.transition[k][i][j].len() != n {
                        out.push(Violation::TransitionShape { state: k, i, j });
                        continue;
                    }
                    let row = &self.transition[k][i][j];
                    let mut sum = T::zero();
                    let mut row_ok = true;
                    for (dest, p) in row.iter().enumerate() {
                        if !p.is_finite_s() || *p < T::zero() {
                            out.push(Violation::BadProbability { state: k, i, j, dest });
                            row_ok = false;
                        }
                        sum = sum + p.clone();
                    }
                    if row_ok && (sum.clone() - T::one()).abs() >= T::of(STOCHASTIC_TOL) {
                        out.push(Violation::RowSumOff {
                            state: k,
                            i,
                            j,
                            sum: format!("{sum:?}"),
                        });
                    }
                }
            }
        }
        out
    }

    fn renormalize(&mut self) {
        for state in &mut self.transition {
            for per_i in state {
                for row in per_i {
                    let mut sum = T::zero();
                    for p in row.iter() {
                        sum = sum + p.clone();
                    }
                    if sum != T::one() {
                        for p in row.iter_mut() {
                            *p = p.clone() / sum.clone();
                        }
                    }
                }
            }
        }
    }

    fn detect_absorbing(&self) -> Vec<bool> {
        let tol = T::of(ABSORBING_TOL);
        (0..self.states.len())
            .map(|k| {
                self.transition.get(k).is_some_and(|per_i| {
                    !per_i.is_empty()
                        && per_i.iter().all(|per_j| {
                            !per_j.is_empty()
                                && per_j.iter().all(|row| {
                                    row.get(k).is_some_and(|p| {
                                        (p.clone() - T::one()).abs() <= tol
                                    })
                                })
                        })
                })
            })
            .collect()
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_label(&self, k: usize) -> &str {
        &self.states[k]
    }

    pub fn state_labels(&self) -> &[String] {
        &self.states
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }

    pub fn action1_labels(&self, k: usize) -> &[String] {
        &self.actions1[k]
    }

    pub fn action2_labels(&self, k: usize) -> &[String] {
        &self.actions2[k]
    }

    pub fn actions1_len(&self, k: usize) -> usize {
        self.actions1[k].len()
    }

    pub fn actions2_len(&self, k: usize) -> usize {
        self.actions2[k].len()
    }

    pub fn payoff(&self, k: usize, i: usize, j: usize) -> T {
        self.payoff[k][i][j].clone()
    }

    pub fn payoff_matrix(&self, k: usize) -> &Vec<Vec<T>> {
        &self.payoff[k]
    }

    pub fn transition_row(&self, k: usize, i: usize, j: usize) -> &[T] {
        &self.transition[k][i][j]
    }

    pub fn is_absorbing(&self, k: usize) -> bool {
        self.absorbing[k]
    }

    pub fn absorbing_flags(&self) -> &[bool] {
        &self.absorbing
    }

    /// (min, max) over the whole payoff tensor.
    pub fn payoff_bounds(&self) -> (T, T) {
        let mut lo: Option<T> = None;
        let mut hi: Option<T> = None;
        for per_k in &self.payoff {
            for row in per_k {
                for g in row {
                    lo = Some(match lo {
                        Some(l) => l.min_s(g.clone()),
                        None => g.clone(),
                    });
                    hi = Some(match hi {
                        Some(h) => h.max_s(g.clone()),
                        None => g.clone(),
                    });
                }
            }
        }
        (lo.expect("empty payoff tensor"), hi.expect("empty payoff tensor"))
    }
}

fn dirac_row<T: Scalar>(n: usize, at: usize) -> Vec<T> {
    let mut row = vec![T::zero(); n];
    row[at] = T::one();
    row
}

/// The bundled example games.
pub mod builtins {
    use super::*;

    /// The 2x2 absorbing game with entries (0, 1*, 1*, 0*). State order:
    /// non-absorbing, 1*, 0*.
    pub fn example1<T: Scalar>() -> StochasticGame<T> {
        let z = T::zero;
        let o = T::one;
        StochasticGame::new(
            vec!["k".into(), "1*".into(), "0*".into()],
            vec![vec!["T".into(), "B".into()], vec!["·".into()], vec!["·".into()]],
            vec![vec!["L".into(), "R".into()], vec!["·".into()], vec!["·".into()]],
            vec![
                vec![vec![z(), o()], vec![o(), z()]],
                vec![vec![o()]],
                vec![vec![z()]],
            ],
            vec![
                vec![
                    vec![dirac_row(3, 0), dirac_row(3, 1)],
                    vec![dirac_row(3, 1), dirac_row(3, 2)],
                ],
                vec![vec![dirac_row(3, 1)]],
                vec![vec![dirac_row(3, 2)]],
            ],
        )
        .expect("example1 builder must be valid")
    }

    /// The Big Match: matrix (1*, 0*; 0, 1). State order: non-absorbing,
    /// 1*, 0*.
    pub fn big_match<T: Scalar>() -> StochasticGame<T> {
        let z = T::zero;
        let o = T::one;
        StochasticGame::new(
            vec!["k".into(), "1*".into(), "0*".into()],
            vec![vec!["T".into(), "B".into()], vec!["·".into()], vec!["·".into()]],
            vec![vec!["L".into(), "R".into()], vec!["·".into()], vec!["·".into()]],
            vec![
                vec![vec![o(), z()], vec![z(), o()]],
                vec![vec![o()]],
                vec![vec![z()]],
            ],
            vec![
                vec![
                    vec![dirac_row(3, 1), dirac_row(3, 2)],
                    vec![dirac_row(3, 0), dirac_row(3, 0)],
                ],
                vec![vec![dirac_row(3, 1)]],
                vec![vec![dirac_row(3, 2)]],
            ],
        )
        .expect("big match builder must be valid")
    }

    /// The 5-state one-player graph with 0/1 state rewards. Rewards are
    /// action-independent: 1 on k1, k2, k3 and 0 on k4 (absorbing) and k5.
    /// The cycle k1 <-> k5 pays 1, 0, 1, 0, ... from k1.
    pub fn example2<T: Scalar>() -> StochasticGame<T> {
        let rewards = [1.0, 1.0, 1.0, 0.0, 0.0];
        let dests: [Vec<usize>; 5] = [
            vec![1, 4], // k1 -> k2 | k5
            vec![2],    // k2 -> k3
            vec![3],    // k3 -> k4
            vec![3],    // k4 absorbing
            vec![0, 2], // k5 -> k1 | k3
        ];
        let labels = ["k1", "k2", "k3", "k4", "k5"];
        let states: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        let actions1: Vec<Vec<String>> = dests
            .iter()
            .map(|d| d.iter().map(|&t| format!("to_{}", labels[t])).collect())
            .collect();
        let actions2: Vec<Vec<String>> = (0..5).map(|_| vec!["·".to_string()]).collect();
        let payoff: Vec<Vec<Vec<T>>> = (0..5)
            .map(|k| {
                dests[k]
                    .iter()
                    .map(|_| vec![T::of(rewards[k])])
                    .collect()
            })
            .collect();
        let transition: Vec<Vec<Vec<Vec<T>>>> = (0..5)
            .map(|k| {
                dests[k]
                    .iter()
                    .map(|&t| vec![dirac_row(5, t)])
                    .collect()
            })
            .collect();
        StochasticGame::new(states, actions1, actions2, payoff, transition)
            .expect("example2 builder must be valid")
    }

    /// Number of player-2 grid intervals in the bundled compact-action game.
    pub const PATHOLOGY_GRID_STEPS: usize = 32;

    /// The 4-state compact-action game of the oscillating-value family,
    /// with player 1's action set truncated to {2^-2n : 1 <= n <= n_max}
    /// and player 2's interval [0, 1/2] discretized to a uniform grid.
    /// State order: k0, k1, 0*, 1*.
    pub fn pathology<T: Scalar>(n_max: usize) -> StochasticGame<T> {
        assert!(n_max >= 1, "pathology needs at least one player-1 action");
        let quarter = T::of(0.25);
        let mut alphas = Vec::with_capacity(n_max);
        let mut a = quarter.clone();
        for _ in 0..n_max {
            alphas.push(a.clone());
            a = a * quarter.clone();
        }
        let betas: Vec<T> = (0..=PATHOLOGY_GRID_STEPS)
            .map(|j| T::of_usize(j) / T::of_usize(2 * PATHOLOGY_GRID_STEPS))
            .collect();

        let states = vec!["k0".to_string(), "k1".to_string(), "0*".to_string(), "1*".to_string()];
        let actions1 = vec![
            (1..=n_max).map(|n| format!("2^-{}", 2 * n)).collect(),
            vec!["·".to_string()],
            vec!["·".to_string()],
            vec!["·".to_string()],
        ];
        let actions2 = vec![
            vec!["·".to_string()],
            (0..=PATHOLOGY_GRID_STEPS)
                .map(|j| format!("{j}/{}", 2 * PATHOLOGY_GRID_STEPS))
                .collect(),
            vec!["·".to_string()],
            vec!["·".to_string()],
        ];
        let payoff: Vec<Vec<Vec<T>>> = vec![
            alphas.iter().map(|_| vec![T::zero()]).collect(),
            vec![betas.iter().map(|_| T::one()).collect()],
            vec![vec![T::zero()]],
            vec![vec![T::one()]],
        ];
        // From k0 with alpha: k1 w.p. alpha, 0* w.p. alpha^2, stay otherwise.
        // From k1 with beta: k0 w.p. beta, 1* w.p. beta^2, stay otherwise.
        let transition: Vec<Vec<Vec<Vec<T>>>> = vec![
            alphas
                .iter()
                .map(|al| {
                    let a2 = al.clone() * al.clone();
                    vec![vec![
                        T::one() - al.clone() - a2.clone(),
                        al.clone(),
                        a2,
                        T::zero(),
                    ]]
                })
                .collect(),
            vec![betas
                .iter()
                .map(|be| {
                    let b2 = be.clone() * be.clone();
                    vec![
                        be.clone(),
                        T::one() - be.clone() - b2.clone(),
                        T::zero(),
                        b2,
                    ]
                })
                .collect()],
            vec![vec![dirac_row(4, 2)]],
            vec![vec![dirac_row(4, 3)]],
        ];
        StochasticGame::new(states, actions1, actions2, payoff, transition)
            .expect("pathology builder must be valid")
    }
}

/// Looks up a bundled game by name: `example1`, `example2`, `bigmatch`,
/// or `pathology(N)`.
pub fn builtin_game<T: Scalar>(name: &str) -> Result<StochasticGame<T>, GameError> {
    match name {
        "example1" => Ok(builtins::example1()),
        "example2" => Ok(builtins::example2()),
        "bigmatch" => Ok(builtins::big_match()),
        _ => {
            if let Some(args) = name
                .strip_prefix("pathology(")
                .and_then(|rest| rest.strip_suffix(')'))
            {
                let n_max: usize = args
                    .trim()
                    .parse()
                    .map_err(|_| GameError::UnknownBuiltin(name.to_string()))?;
                Ok(builtins::pathology(n_max))
            } else if name == "pathology" {
                Ok(builtins::pathology(12))
            } else {
                Err(GameError::UnknownBuiltin(name.to_string()))
            }
        }
    }
}

/// The same game from player 2's point of view: action roles swapped,
/// payoffs negated. Values of the swapped game are the negated values of
/// the original.
pub fn swap_players<T: Scalar>(game: &StochasticGame<T>) -> StochasticGame<T> {
    let n = game.num_states();
    let states = game.state_labels().to_vec();
    let actions1 = (0..n).map(|k| game.action2_labels(k).to_vec()).collect();
    let actions2 = (0..n).map(|k| game.action1_labels(k).to_vec()).collect();
    let payoff = (0..n)
        .map(|k| {
            (0..game.actions2_len(k))
                .map(|j| {
                    (0..game.actions1_len(k))
                        .map(|i| -game.payoff(k, i, j))
                        .collect()
                })
                .collect()
        })
        .collect();
    let transition = (0..n)
        .map(|k| {
            (0..game.actions2_len(k))
                .map(|j| {
                    (0..game.actions1_len(k))
                        .map(|i| game.transition_row(k, i, j).to_vec())
                        .collect()
                })
                .collect()
        })
        .collect();
    StochasticGame::new(states, actions1, actions2, payoff, transition)
        .expect("swapping players preserves validity")
}

/// A seeded random game: payoffs uniform in [-1, 1], transition rows
/// normalized positive uniforms. Deterministic given the seed.
pub fn random_game<T: Scalar>(
    num_states: usize,
    n_actions1: usize,
    n_actions2: usize,
    seed: u64,
) -> StochasticGame<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = (0..num_states).map(|k| format!("s{k}")).collect();
    let actions1 = (0..num_states)
        .map(|_| (0..n_actions1).map(|i| format!("a{i}")).collect())
        .collect();
    let actions2 = (0..num_states)
        .map(|_| (0..n_actions2).map(|j| format!("b{j}")).collect())
        .collect();
    let payoff = (0..num_states)
        .map(|_| {
            (0..n_actions1)
                .map(|_| {
                    (0..n_actions2)
                        .map(|_| T::of(rng.gen_range(-1.0..1.0)))
                        .collect()
                })
                .collect()
        })
        .collect();
    let transition = (0..num_states)
        .map(|_| {
            (0..n_actions1)
                .map(|_| {
                    (0..n_actions2)
                        .map(|_| {
                            let raw: Vec<f64> =
                                (0..num_states).map(|_| rng.gen_range(0.01..1.0)).collect();
                            let sum: f64 = raw.iter().sum();
                            raw.into_iter().map(|p| T::of(p / sum)).collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    StochasticGame::new(states, actions1, actions2, payoff, transition)
        .expect("random game must be valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use proptest::prelude::*;

    #[test]
    fn builtin_games_validate_clean() {
        for name in ["example1", "example2", "bigmatch", "pathology(4)", "pathology"] {
            let game: StochasticGame<f64> = builtin_game(name).unwrap();
            assert!(game.validate().is_empty(), "{name} should be valid");
        }
        assert!(builtin_game::<f64>("nosuch").is_err());
    }

    #[test]
    fn absorbing_detection_matches_starred_states() {
        let e1: StochasticGame<f64> = builtins::example1();
        assert_eq!(e1.absorbing_flags(), &[false, true, true]);
        let bm: StochasticGame<f64> = builtins::big_match();
        assert_eq!(bm.absorbing_flags(), &[false, true, true]);
        let e2: StochasticGame<f64> = builtins::example2();
        assert_eq!(e2.absorbing_flags(), &[false, false, false, true, false]);
        let pa: StochasticGame<f64> = builtins::pathology(4);
        assert_eq!(pa.absorbing_flags(), &[false, false, true, true]);
    }

    #[test]
    fn big_match_shape() {
        let bm: StochasticGame<f64> = builtins::big_match();
        assert_eq!(bm.num_states(), 3);
        assert_eq!(bm.absorbing_flags().iter().filter(|a| !**a).count(), 1);
        let (lo, hi) = bm.payoff_bounds();
        assert_eq!((lo, hi), (0.0, 1.0));
    }

    #[test]
    fn pathology_action_set_is_truncated_quarter_powers() {
        let pa: StochasticGame<f64> = builtins::pathology(4);
        let expected = [0.25, 0.0625, 1.0 / 64.0, 1.0 / 256.0];
        for (i, alpha) in expected.iter().enumerate() {
            let row = pa.transition_row(0, i, 0);
            assert_eq!(row[1], *alpha, "alpha");
            assert_eq!(row[2], alpha * alpha, "alpha^2");
            assert_eq!(row[0], 1.0 - alpha - alpha * alpha);
        }
    }

    #[test]
    fn bad_row_sum_is_reported_with_indices() {
        let mut bad: StochasticGame<f64> = builtins::big_match();
        // Break one row so it sums to 0.9.
        bad.transition[0][1][0] = vec![0.9, 0.0, 0.0];
        let violations = bad.validate();
        assert_eq!(violations.len(), 1);
        match &violations[0] {
            Violation::RowSumOff { state, i, j, .. } => {
                assert_eq!((*state, *i, *j), (0, 1, 0));
            }
            other => panic!("unexpected violation {other:?}"),
        }
    }

    #[test]
    fn empty_action_set_is_reported() {
        let game: StochasticGame<f64> = StochasticGame::new_unchecked(
            vec!["a".into()],
            vec![vec![]],
            vec![vec!["x".into()]],
            vec![vec![]],
            vec![vec![]],
        );
        let violations = game.validate();
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::EmptyActionSet { state: 0, player: 1 })));
    }

    #[test]
    fn near_stochastic_rows_are_renormalized() {
        let eps = 1e-10;
        let game: StochasticGame<f64> = StochasticGame::new(
            vec!["a".into(), "b".into()],
            vec![vec!["x".into()]; 2],
            vec![vec!["y".into()]; 2],
            vec![vec![vec![1.0]], vec![vec![0.0]]],
            vec![
                vec![vec![vec![0.5 + eps, 0.5]]],
                vec![vec![vec![0.0, 1.0]]],
            ],
        )
        .unwrap();
        let row = game.transition_row(0, 0, 0);
        assert!((row[0] + row[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn far_from_stochastic_rows_are_rejected() {
        let result: Result<StochasticGame<f64>, _> = StochasticGame::new(
            vec!["a".into()],
            vec![vec!["x".into()]],
            vec![vec!["y".into()]],
            vec![vec![vec![1.0]]],
            vec![vec![vec![vec![0.8]]]],
        );
        assert!(matches!(result, Err(GameError::Invalid(_))));
    }

    #[test]
    fn rational_builders_are_exact() {
        let e1: StochasticGame<BigRational> = builtins::example1();
        assert!(e1.validate().is_empty());
        assert_eq!(e1.absorbing_flags(), &[false, true, true]);
        let pa: StochasticGame<BigRational> = builtins::pathology(3);
        assert_eq!(
            pa.transition_row(0, 2, 0)[1],
            BigRational::new(1.into(), 64.into())
        );
    }

    #[test]
    fn random_games_are_valid() {
        for seed in 0..5 {
            let g: StochasticGame<f64> = random_game(4, 2, 2, seed);
            assert!(g.validate().is_empty());
            assert_eq!(g.num_states(), 4);
        }
        // Seeded determinism.
        let a: StochasticGame<f64> = random_game(3, 2, 2, 7);
        let b: StochasticGame<f64> = random_game(3, 2, 2, 7);
        assert_eq!(a, b);
    }

    #[test]
    fn mixed_action_sampling_follows_weights() {
        let act = MixedAction::<f64>::new(vec![0.25, 0.75]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 20_000;
        let ones = (0..n).filter(|_| act.sample(&mut rng) == 1).count();
        let freq = ones as f64 / n as f64;
        assert!((freq - 0.75).abs() < 0.02, "freq {freq}");
    }

    proptest! {
        #[test]
        fn normalized_weights_build_mixed_actions(raw in prop::collection::vec(0.01f64..1.0, 1..6)) {
            let sum: f64 = raw.iter().sum();
            let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
            let act = MixedAction::new(weights).unwrap();
            prop_assert_eq!(act.len(), raw.len());
        }

        #[test]
        fn negative_weights_are_rejected(w in -1.0f64..-0.01) {
            prop_assert!(MixedAction::new(vec![1.0 - w, w]).is_err());
        }
    }
}
