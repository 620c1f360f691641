//! The counter strategy for the Big Match, exact worst-case verification
//! of its average-payoff guarantee, and seeded Monte Carlo play.
//!
//! The strategy with patience parameter `M` plays the risky top row with
//! probability `1/(m + M + 1)^2`, where `m` counts the opponent's
//! right-minus-left choices so far. Against it, worst cases are attained
//! by pure opponent sequences that ignore history, so exact minima are
//! dynamic programs over (remaining stages, counter).

use crate::game::{builtins, MixedAction, StochasticGame};
use crate::num::Scalar;
use crate::play::{self, derive_seed, PlayRecord, Strategy};
use rayon::prelude::*;
use thiserror::Error;

/// Action indices in the bundled Big Match game.
pub const TOP: usize = 0;
pub const BOTTOM: usize = 1;
pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// State indices in the bundled Big Match game.
pub const ALIVE: usize = 0;
pub const WIN: usize = 1;
pub const LOSE: usize = 2;

#[derive(Debug, Error)]
pub enum BigMatchError {
    #[error("counter m={m} is unreachable below -M={big_m}")]
    UnreachableCounter { m: i64, big_m: u32 },
    #[error("horizon {t} exceeds the exact-DP cap {max}")]
    HorizonTooLarge { t: usize, max: usize },
    #[error("invalid opponent: {0}")]
    BadOpponent(String),
    #[error(transparent)]
    Play(#[from] play::PlayError),
}

/// Exact-DP horizon cap (the table is O(T^2)).
pub const MAX_DP_HORIZON: usize = 2000;

/// Probability of playing the risky top row at counter `m` with patience
/// `M`: `1/(m + M + 1)^2`. The counter never falls below `-M` (the
/// strategy plays top surely there and the play absorbs).
pub fn sigma_m_prob<T: Scalar>(m: i64, big_m: u32) -> Result<T, BigMatchError> {
    if m < -(big_m as i64) {
        return Err(BigMatchError::UnreachableCounter { m, big_m });
    }
    let base = m + big_m as i64 + 1;
    let denom = T::of_usize((base * base) as usize);
    Ok(T::one() / denom)
}

/// Live play state of the counter strategy: stage, counter, and the
/// absorbing payoff once the play has left the non-absorbing state.
#[derive(Debug, Clone, PartialEq)]
pub struct BigMatchState {
    pub t: usize,
    pub m: i64,
    pub absorbed: Option<f64>,
}

/// The counter strategy as a stage-driven player for the bundled game.
pub struct SigmaM {
    pub big_m: u32,
    pub state: BigMatchState,
}

impl SigmaM {
    pub fn new(big_m: u32) -> Self {
        Self {
            big_m,
            state: BigMatchState {
                t: 1,
                m: 0,
                absorbed: None,
            },
        }
    }
}

impl<T: Scalar> Strategy<T> for SigmaM {
    fn mixed_action(&mut self, _stage: usize, state: usize) -> Result<MixedAction<T>, String> {
        if state != ALIVE {
            return Ok(MixedAction::dirac(1, 0));
        }
        let p: T = sigma_m_prob(self.state.m, self.big_m).map_err(|e| e.to_string())?;
        MixedAction::new(vec![p.clone(), T::one() - p]).map_err(|e| e.to_string())
    }

    fn observe(
        &mut self,
        _stage: usize,
        state: usize,
        action1: usize,
        action2: usize,
        _payoff: &T,
        next_state: usize,
    ) {
        self.state.t += 1;
        if state == ALIVE {
            if action2 == RIGHT {
                self.state.m += 1;
            } else {
                self.state.m -= 1;
            }
            if action1 == TOP && next_state != ALIVE {
                self.state.absorbed = Some(if next_state == WIN { 1.0 } else { 0.0 });
            }
        }
    }
}

/// Exact worst case of the T-stage average payoff over all opponent
/// behaviors, the closed-form bound `M/(2(M+1)) - M/(2T)`, and one
/// minimizing pure opponent sequence (ties toward left).
#[derive(Debug, Clone)]
pub struct WorstCase {
    pub worst_average: f64,
    pub bound: f64,
    pub witness: Vec<usize>,
}

/// DP over (remaining stages, counter) of the minimal expected payoff
/// SUM against the counter strategy. Entry `[r][m + M]` is the worst
/// expected remaining sum with `r` stages left at counter `m`.
fn worst_sum_table(big_m: u32, horizon: usize) -> Vec<Vec<f64>> {
    let mm = big_m as i64;
    let width = (horizon as i64 + mm + 2) as usize;
    let mut table = vec![vec![0.0f64; width]; horizon + 1];
    for r in 1..=horizon {
        for m in -mm..=(horizon as i64) {
            let p = 1.0 / (((m + mm + 1) * (m + mm + 1)) as f64);
            // Left: absorb at payoff-1 state (p) or stay with payoff 0.
            let stay_l = if m - 1 >= -mm {
                table[r - 1][(m - 1 + mm) as usize]
            } else {
                0.0 // unreachable: p = 1 when m = -M
            };
            let left = p * r as f64 + (1.0 - p) * stay_l;
            // Right: absorb at payoff-0 state (p) or stay with payoff 1.
            let right = (1.0 - p) * (1.0 + table[r - 1][(m + 1 + mm) as usize]);
            table[r][(m + mm) as usize] = left.min(right);
        }
    }
    table
}

/// Exact minimum over all opponent behaviors of the expected T-stage
/// average payoff against the counter strategy, with Eq.-style bound and
/// a minimizing sequence. Restriction to pure history-independent
/// opponents is without loss here: conditional on the play being alive,
/// the strategy's state (t, m) is a function of the opponent's own past
/// choices.
pub fn worst_case_average(big_m: u32, horizon: usize) -> Result<WorstCase, BigMatchError> {
    if horizon == 0 || horizon > MAX_DP_HORIZON {
        return Err(BigMatchError::HorizonTooLarge {
            t: horizon,
            max: MAX_DP_HORIZON,
        });
    }
    let table = worst_sum_table(big_m, horizon);
    let mm = big_m as i64;
    let worst_average = table[horizon][mm as usize] / horizon as f64;
    let m_f = big_m as f64;
    let bound = m_f / (2.0 * (m_f + 1.0)) - m_f / (2.0 * horizon as f64);

    // Greedy backtrace along the alive path, ties toward left.
    let mut witness = Vec::with_capacity(horizon);
    let mut m = 0i64;
    for r in (1..=horizon).rev() {
        let p = 1.0 / (((m + mm + 1) * (m + mm + 1)) as f64);
        let stay_l = if m - 1 >= -mm {
            table[r - 1][(m - 1 + mm) as usize]
        } else {
            0.0
        };
        let left = p * r as f64 + (1.0 - p) * stay_l;
        let right = (1.0 - p) * (1.0 + table[r - 1][(m + 1 + mm) as usize]);
        if left <= right {
            witness.push(LEFT);
            m -= 1;
        } else {
            witness.push(RIGHT);
            m += 1;
        }
    }
    Ok(WorstCase {
        worst_average,
        bound,
        witness,
    })
}

/// Expected T-stage average payoff of the counter strategy against one
/// fixed opponent sequence, by exact forward accounting over the alive
/// path (absorption contributions summed in closed form).
pub fn eval_sequence(big_m: u32, horizon: usize, sequence: &[usize]) -> Result<f64, BigMatchError> {
    if sequence.len() < horizon {
        return Err(BigMatchError::BadOpponent(format!(
            "sequence of length {} shorter than horizon {horizon}",
            sequence.len()
        )));
    }
    let mm = big_m as i64;
    let mut alive = 1.0f64;
    let mut m = 0i64;
    let mut total = 0.0f64;
    for (t, &j) in sequence.iter().enumerate().take(horizon) {
        let p = 1.0 / (((m + mm + 1) * (m + mm + 1)) as f64);
        let remaining = (horizon - t) as f64;
        if j == LEFT {
            total += alive * p * remaining;
            m -= 1;
        } else {
            total += alive * (1.0 - p);
            m += 1;
        }
        alive *= 1.0 - p;
        if m < -mm {
            // Only reachable with probability zero.
            m = -mm;
        }
    }
    Ok(total / horizon as f64)
}

/// Worst expected fictitious payoff `E(X_t)` over opponent sequences for
/// every horizon `1..=t_max`: the fictitious payoff is 1/2 while alive,
/// 1 after left-absorption, 0 after right-absorption.
pub fn fictitious_worst_table(big_m: u32, t_max: usize) -> Vec<f64> {
    let mm = big_m as i64;
    let width = (t_max as i64 + mm + 2) as usize;
    let mut prev = vec![0.5f64; width];
    let mut out = Vec::with_capacity(t_max);
    for _r in 1..=t_max {
        let mut next = vec![0.5f64; width];
        for m in -mm..=(t_max as i64) {
            let p = 1.0 / (((m + mm + 1) * (m + mm + 1)) as f64);
            let stay_l = if m - 1 >= -mm {
                prev[(m - 1 + mm) as usize]
            } else {
                0.0
            };
            let left = p + (1.0 - p) * stay_l;
            let right = (1.0 - p) * prev[(m + 1 + mm) as usize];
            next[(m + mm) as usize] = left.min(right);
        }
        out.push(next[mm as usize]);
        prev = next;
    }
    out
}

/// Worst expected fictitious payoff at a single horizon.
pub fn fictitious_worst(big_m: u32, t: usize) -> f64 {
    assert!(t >= 1);
    *fictitious_worst_table(big_m, t).last().unwrap()
}

/// Opponent behaviors for Monte Carlo play.
pub enum Opponent {
    /// A fixed pure sequence (must cover the horizon).
    Sequence(Vec<usize>),
    /// Plays left with the given probability, independently each stage.
    Stationary(f64),
    /// Left-probability as a function of (stage, counter m).
    Rule(Box<dyn Fn(usize, i64) -> f64 + Send + Sync>),
}

struct OpponentPlayer<'a> {
    spec: &'a Opponent,
    m: i64,
}

impl<T: Scalar> Strategy<T> for OpponentPlayer<'_> {
    fn mixed_action(&mut self, stage: usize, state: usize) -> Result<MixedAction<T>, String> {
        if state != ALIVE {
            return Ok(MixedAction::dirac(1, 0));
        }
        let p_left = match self.spec {
            Opponent::Sequence(seq) => {
                let j = *seq
                    .get(stage - 1)
                    .ok_or_else(|| "sequence exhausted before horizon".to_string())?;
                if j == LEFT {
                    1.0
                } else {
                    0.0
                }
            }
            Opponent::Stationary(p) => *p,
            Opponent::Rule(f) => f(stage, self.m),
        };
        if !(0.0..=1.0).contains(&p_left) {
            return Err(format!("left probability {p_left} outside [0, 1]"));
        }
        MixedAction::new(vec![T::of(p_left), T::of(1.0 - p_left)]).map_err(|e| e.to_string())
    }

    fn observe(
        &mut self,
        _stage: usize,
        state: usize,
        _action1: usize,
        action2: usize,
        _payoff: &T,
        _next: usize,
    ) {
        if state == ALIVE {
            if action2 == RIGHT {
                self.m += 1;
            } else {
                self.m -= 1;
            }
        }
    }
}

/// Monte Carlo estimate of the average payoff of the counter strategy
/// against an opponent.
#[derive(Debug)]
pub struct SimulationResult {
    pub mean: f64,
    pub std_error: f64,
    /// Record of the first repetition.
    pub sample: PlayRecord<f64>,
}

/// Runs `reps` independent plays of the counter strategy against the
/// opponent; repetitions run in parallel on derived seeds and aggregate
/// by index, so the result is deterministic given the seed.
pub fn simulate(
    big_m: u32,
    horizon: usize,
    opponent: &Opponent,
    seed: u64,
    reps: usize,
) -> Result<SimulationResult, BigMatchError> {
    if reps == 0 {
        return Err(BigMatchError::BadOpponent("reps must be positive".into()));
    }
    if let Opponent::Sequence(seq) = opponent {
        if seq.len() < horizon {
            return Err(BigMatchError::BadOpponent(
                "sequence shorter than horizon".into(),
            ));
        }
    }
    if let Opponent::Stationary(p) = opponent {
        if !(0.0..=1.0).contains(p) {
            return Err(BigMatchError::BadOpponent(format!(
                "stationary probability {p} outside [0, 1]"
            )));
        }
    }
    let game: StochasticGame<f64> = builtins::big_match();
    let records: Vec<PlayRecord<f64>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut p1 = SigmaM::new(big_m);
            let mut p2 = OpponentPlayer { spec: opponent, m: 0 };
            play::simulate(
                &game,
                &mut p1,
                &mut p2,
                ALIVE,
                horizon,
                derive_seed(seed, rep as u64),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;

    let averages: Vec<f64> = records.iter().map(|r| r.average_payoff()).collect();
    let mean = averages.iter().sum::<f64>() / reps as f64;
    let std_error = if reps > 1 {
        let var = averages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>()
            / (reps as f64 - 1.0);
        (var / reps as f64).sqrt()
    } else {
        0.0
    };
    let sample = records.into_iter().next().expect("reps >= 1");
    Ok(SimulationResult {
        mean,
        std_error,
        sample,
    })
}
