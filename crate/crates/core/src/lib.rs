//! Solvers for finite zero-sum stochastic games.
//!
//! Two players jointly control a Markov state and receive opposite stage
//! payoffs. This crate provides the standard constructive toolkit around
//! that model: exact matrix-game values, the one-shot operator with
//! n-stage and discounted fixed points, one-player (MDP) specializations
//! with Blackwell-optimal policy search, the Big Match counter strategy
//! with exact worst-case verification, a patience-tuning strategy engine
//! that is epsilon-optimal uniformly in the horizon, and the 4-state
//! compact-action family whose discounted values oscillate.
//!
//! The numeric core is generic over the scalar type: `f64`/`f32` for the
//! iterative solvers, exact rationals for linear policy evaluation and
//! backward induction. Concrete `f64` aliases are re-exported here.

pub mod bigmatch;
pub mod game;
pub mod linalg;
pub mod matgame;
pub mod mdp;
pub mod mertens_neyman;
pub mod num;
pub mod pathology;
pub mod play;
pub mod shapley;

pub use game::{builtin_game, random_game, swap_players, GameError, StochasticGame, Violation};
pub use num::{Real, Scalar};

/// `f64` game, the default for all solvers.
pub type Game64 = game::StochasticGame<f64>;
/// `f32` game.
pub type Game32 = game::StochasticGame<f32>;
/// Exact-rational game, for linear policy evaluation and exact DPs.
pub type GameRational = game::StochasticGame<num_rational::BigRational>;

/// `f64` value vector.
pub type ValueVector64 = game::ValueVector<f64>;
/// `f64` mixed action.
pub type MixedAction64 = game::MixedAction<f64>;
/// `f64` matrix game.
pub type MatrixGame64 = matgame::MatrixGame<f64>;
