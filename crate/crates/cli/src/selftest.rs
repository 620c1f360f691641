//! The acceptance battery: every release-gating check, runnable both
//! from the `selftest` subcommand and from the integration test suite.
//! Each criterion reports pass/fail with a one-line detail.

use rayon::prelude::*;
use std::time::Instant;
use stogame::bigmatch;
use stogame::game::{builtins, random_game, MixedAction, StationaryStrategy};
use stogame::mdp::{self, Evaluation, MDProblem, PurePolicy};
use stogame::mertens_neyman::{self as mn, MnSession};
use stogame::num::sup_dist;
use stogame::pathology::{self, SweepKind};
use stogame::play::StationaryPlayer;
use stogame::shapley;
use stogame::Game64;

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "{} criterion {:>2} ({:>6.1}s): {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.seconds,
            self.name,
            self.detail
        )
    }
}

struct Check {
    passed: bool,
    detail: String,
}

impl Check {
    fn pass(detail: impl Into<String>) -> Self {
        Self {
            passed: true,
            detail: detail.into(),
        }
    }

    fn fail(detail: impl Into<String>) -> Self {
        Self {
            passed: false,
            detail: detail.into(),
        }
    }
}

fn catch(f: impl FnOnce() -> Check + std::panic::UnwindSafe) -> Check {
    match std::panic::catch_unwind(f) {
        Ok(check) => check,
        Err(_) => Check::fail("panicked"),
    }
}

/// Runs the full battery in order, invoking `progress` after each
/// criterion.
pub fn run_all(mut progress: impl FnMut(&CriterionResult)) -> Vec<CriterionResult> {
    let criteria: Vec<(&'static str, fn() -> Check)> = vec![
        ("example1 discounted closed form", c1_example1_discounted),
        ("example1 n-stage recursion", c2_example1_recursion),
        ("big match values are 1/2", c3_big_match_values),
        ("example2 policy evaluation and search", c4_example2_mdp),
        ("big match guarantee sweep", c5_big_match_guarantee),
        ("big match brute-force equivalence", c6_brute_force),
        ("horizon-robust strategy submartingale", c7_submartingale),
        ("horizon-robust strategy guarantee", c8_mn_guarantee),
        ("compact-action oscillation", c9_pathology),
        ("n-stage/discounted common limit", c10_common_limit),
        ("leading-exponent fits", c11_puiseux),
        ("property suites", c12_properties),
    ];
    let mut results = Vec::with_capacity(criteria.len());
    for (id, (name, f)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let check = catch(f);
        let result = CriterionResult {
            id: id + 1,
            name,
            passed: check.passed,
            detail: check.detail,
            seconds: start.elapsed().as_secs_f64(),
        };
        progress(&result);
        results.push(result);
    }
    results
}

fn c1_example1_discounted() -> Check {
    let e1: Game64 = builtins::example1();
    let mut worst: f64 = 0.0;
    for lambda in [0.5, 0.25, 0.1, 0.01] {
        let sol = match shapley::discounted_value(&e1, lambda, 1e-10) {
            Ok(s) => s,
            Err(e) => return Check::fail(e.to_string()),
        };
        let expect = 1.0 / (1.0 + lambda.sqrt());
        worst = worst.max((sol.value[0] - expect).abs());
    }
    if worst <= 1e-8 {
        Check::pass(format!("max |v - 1/(1+sqrt)| = {worst:.2e} <= 1e-8"))
    } else {
        Check::fail(format!("max deviation {worst:.2e} > 1e-8"))
    }
}

fn c2_example1_recursion() -> Check {
    let e1: Game64 = builtins::example1();
    let sol = match shapley::n_stage_values(&e1, 100) {
        Ok(s) => s,
        Err(e) => return Check::fail(e.to_string()),
    };
    if (sol.values[1][0] - 0.5).abs() > 1e-12 {
        return Check::fail(format!("v_1 = {} is not 1/2", sol.values[1][0]));
    }
    let mut v = 0.5f64;
    let mut worst: f64 = 0.0;
    for n in 1..100usize {
        let n_f = n as f64;
        v = 1.0 / (2.0 - (n_f / (n_f + 1.0)) * v);
        worst = worst.max((sol.values[n + 1][0] - v).abs());
    }
    if worst <= 1e-12 {
        Check::pass(format!("recursion deviation {worst:.2e} <= 1e-12 up to n=100"))
    } else {
        Check::fail(format!("recursion deviation {worst:.2e} > 1e-12"))
    }
}

fn c3_big_match_values() -> Check {
    let bm: Game64 = builtins::big_match();
    let mut worst: f64 = 0.0;
    for n in [1usize, 10, 100] {
        match shapley::n_stage_values(&bm, n) {
            Ok(s) => worst = worst.max((s.final_values()[0] - 0.5).abs()),
            Err(e) => return Check::fail(e.to_string()),
        }
    }
    for lambda in [0.5, 0.01] {
        match shapley::discounted_value(&bm, lambda, 1e-10) {
            Ok(s) => worst = worst.max((s.value[0] - 0.5).abs()),
            Err(e) => return Check::fail(e.to_string()),
        }
    }
    if worst <= 1e-8 {
        Check::pass(format!("max |v - 1/2| = {worst:.2e} <= 1e-8"))
    } else {
        Check::fail(format!("max |v - 1/2| = {worst:.2e} > 1e-8"))
    }
}

fn c4_example2_mdp() -> Check {
    let mdp = match MDProblem::from_game(builtins::example2::<f64>()) {
        Ok(m) => m,
        Err(e) => return Check::fail(e.to_string()),
    };
    let alternating = PurePolicy {
        choices: vec![1, 0, 0, 0, 0],
    };
    let mut worst_eval: f64 = 0.0;
    for lambda in [0.5, 0.25, 0.1, 0.01] {
        match mdp::evaluate_policy(&mdp, &alternating, lambda) {
            Ok(v) => worst_eval = worst_eval.max((v[0] - 1.0 / (2.0 - lambda)).abs()),
            Err(e) => return Check::fail(e.to_string()),
        }
    }
    if worst_eval > 1e-10 {
        return Check::fail(format!("policy value off by {worst_eval:.2e} > 1e-10"));
    }
    let stages = match shapley::n_stage_values(mdp.game(), 63) {
        Ok(s) => s,
        Err(e) => return Check::fail(e.to_string()),
    };
    let mut worst_stage: f64 = 0.0;
    for m in 0..=30usize {
        let n = 2 * m + 3;
        let lhs = n as f64 * stages.values[n][0];
        worst_stage = worst_stage.max((lhs - (m as f64 + 3.0)).abs());
    }
    if worst_stage > 1e-9 {
        return Check::fail(format!("(2n+3) v identity off by {worst_stage:.2e}"));
    }
    let grid: Vec<f64> = (1..=10).map(|k| 0.5f64.powi(k)).collect();
    match mdp::blackwell_policy(&mdp, &grid) {
        Ok(res) => {
            if res.policy != alternating {
                return Check::fail(format!("wrong policy {:?}", res.policy.choices));
            }
            if res.lambda0_estimate < 0.0625 {
                return Check::fail(format!(
                    "lambda0 estimate {} < 2^-4",
                    res.lambda0_estimate
                ));
            }
            Check::pass(format!(
                "eval {worst_eval:.1e}, stages {worst_stage:.1e}, lambda0 {}",
                res.lambda0_estimate
            ))
        }
        Err(e) => Check::fail(e.to_string()),
    }
}

fn c5_big_match_guarantee() -> Check {
    // Exhaustive Eq-style bound, M <= 20, T <= 200.
    let violations: usize = (0..=20u32)
        .into_par_iter()
        .map(|big_m| {
            let mut bad = 0;
            for horizon in 1..=200usize {
                let wc = bigmatch::worst_case_average(big_m, horizon).unwrap();
                if wc.worst_average < wc.bound - 1e-10 {
                    bad += 1;
                }
            }
            bad
        })
        .sum();
    if violations > 0 {
        return Check::fail(format!("{violations} bound violations in the 4200-case sweep"));
    }
    // Fictitious payoff floor, M <= 30, t <= 300.
    let fict_bad: usize = (0..=30u32)
        .into_par_iter()
        .map(|big_m| {
            let floor = big_m as f64 / (2.0 * (big_m as f64 + 1.0));
            bigmatch::fictitious_worst_table(big_m, 300)
                .into_iter()
                .filter(|v| *v < floor - 1e-10)
                .count()
        })
        .sum();
    if fict_bad > 0 {
        return Check::fail(format!("{fict_bad} fictitious floor violations"));
    }
    Check::pass("4200 average-payoff cases and 9300 fictitious cases hold")
}

fn c6_brute_force() -> Check {
    let mut worst: f64 = 0.0;
    for big_m in [0u32, 1, 2, 5, 10] {
        for horizon in 1..=12usize {
            let wc = bigmatch::worst_case_average(big_m, horizon).unwrap();
            let mut brute = f64::INFINITY;
            for mask in 0..(1u64 << horizon) {
                let seq: Vec<usize> = (0..horizon)
                    .map(|t| {
                        if mask & (1 << t) != 0 {
                            bigmatch::RIGHT
                        } else {
                            bigmatch::LEFT
                        }
                    })
                    .collect();
                brute = brute.min(bigmatch::eval_sequence(big_m, horizon, &seq).unwrap());
            }
            worst = worst.max((wc.worst_average - brute).abs());
        }
    }
    if worst <= 1e-12 {
        Check::pass(format!("DP vs enumeration deviation {worst:.2e} <= 1e-12"))
    } else {
        Check::fail(format!("DP vs enumeration deviation {worst:.2e}"))
    }
}

fn mn_session_for_big_match(eps: f64) -> Result<MnSession<f64>, mn::MnError> {
    MnSession::new(
        &builtins::big_match::<f64>(),
        eps,
        &mn::default_calibration_grid(),
    )
}

fn big_match_opponent(kind: usize) -> StationaryPlayer<f64> {
    let bm: Game64 = builtins::big_match();
    let action = |k: usize| match kind {
        0 => MixedAction::uniform(bm.actions2_len(k)),
        1 => MixedAction::dirac(bm.actions2_len(k), 0),
        _ => MixedAction::dirac(bm.actions2_len(k), bm.actions2_len(k) - 1),
    };
    StationaryPlayer {
        strategy: StationaryStrategy::new((0..bm.num_states()).map(action).collect()),
    }
}

fn c7_submartingale() -> Check {
    let eps = 0.05;
    let session = match mn_session_for_big_match(eps) {
        Ok(s) => s,
        Err(e) => return Check::fail(e.to_string()),
    };
    let horizon = 10_000;
    let outcomes: Vec<Result<(usize, usize), String>> = (0..20u64)
        .into_par_iter()
        .map(|rep| {
            let mut opponent = big_match_opponent((rep % 3) as usize);
            let record = session
                .simulate(&mut opponent, 0, horizon, 500 + rep)
                .map_err(|e| e.to_string())?;
            let report = session
                .check_submartingale(&record, 1e-7)
                .map_err(|e| e.to_string())?;
            Ok((report.violations(), report.rows.len()))
        })
        .collect();
    let mut violations = 0;
    let mut stages = 0;
    for outcome in outcomes {
        match outcome {
            Ok((v, s)) => {
                violations += v;
                stages += s;
            }
            Err(e) => return Check::fail(e),
        }
    }
    if violations == 0 {
        Check::pass(format!(
            "0 violations across {stages} checked stages (20 plays, 3 opponents)"
        ))
    } else {
        Check::fail(format!("{violations} violations across {stages} stages"))
    }
}

fn c8_mn_guarantee() -> Check {
    let eps = 0.05;
    let session = match mn_session_for_big_match(eps) {
        Ok(s) => s,
        Err(e) => return Check::fail(e.to_string()),
    };
    let horizon = 100_000;
    let reps = 100u64;
    let averages: Vec<Result<f64, String>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut opponent = big_match_opponent(0);
            session
                .simulate(&mut opponent, 0, horizon, 9_000 + rep)
                .map(|r| r.average_payoff())
                .map_err(|e| e.to_string())
        })
        .collect();
    let mut values = Vec::with_capacity(averages.len());
    for a in averages {
        match a {
            Ok(v) => values.push(v),
            Err(e) => return Check::fail(e),
        }
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (values.len() as f64 - 1.0);
    let se = (var / values.len() as f64).sqrt();
    let threshold = 0.5 - 8.0 * eps - 4.0 * se;
    if mean >= threshold {
        Check::pass(format!(
            "mean {mean:.4} >= 1/2 - 8 eps - 4 SE = {threshold:.4} (SE {se:.1e})"
        ))
    } else {
        Check::fail(format!("mean {mean:.4} < {threshold:.4}"))
    }
}

fn c9_pathology() -> Check {
    let tol = 1e-9;
    let n_max = 18;
    let even = match pathology::sequence_sweep(SweepKind::Even, 3, 8, n_max, tol) {
        Ok(r) => r,
        Err(e) => return Check::fail(e.to_string()),
    };
    let odd = match pathology::sequence_sweep(SweepKind::Odd, 3, 8, n_max, tol) {
        Ok(r) => r,
        Err(e) => return Check::fail(e.to_string()),
    };
    let mut last_delta = f64::INFINITY;
    for row in &even {
        let delta = (row.y - 0.5).abs().max((row.x - 0.5).abs());
        if delta >= 0.06 || delta > last_delta + 1e-12 {
            return Check::fail(format!("even n={} delta {delta:.4}", row.n));
        }
        last_delta = delta;
    }
    for row in &odd {
        if row.n >= 6 && row.y > 4.0 / 9.0 + 0.02 {
            return Check::fail(format!("odd n={} y={}", row.n, row.y));
        }
    }
    let gap = even.last().unwrap().y - odd.last().unwrap().y;
    if gap < 0.04 {
        return Check::fail(format!("even/odd gap {gap:.4} < 0.04"));
    }
    // Balance identity residual at every interior solution.
    let mut worst: f64 = 0.0;
    for row in even.iter().chain(&odd) {
        let sol = pathology::solve_lambda(row.lambda, n_max, tol).unwrap();
        if !sol.beta_interior {
            return Check::fail(format!("clipped minimizer at n={}", row.n));
        }
        let report = pathology::verify_relations(&sol);
        worst = worst.max(report.balance_residual);
    }
    if worst > 1e-8 {
        return Check::fail(format!("balance residual {worst:.2e} > 1e-8"));
    }
    Check::pass(format!(
        "even delta {:.4} shrinking, odd tail {:.4} <= 4/9+0.02, gap {gap:.4}, residual {worst:.1e}",
        last_delta,
        odd.last().unwrap().y
    ))
}

fn c10_common_limit() -> Check {
    let mut games: Vec<(String, Game64)> = vec![("example1".into(), builtins::example1())];
    for seed in 0..20u64 {
        games.push((format!("random#{seed}"), random_game(4, 2, 2, seed)));
    }
    let outcomes: Vec<Result<(String, f64), String>> = games
        .into_par_iter()
        .map(|(name, game)| {
            let v_n = shapley::n_stage_values(&game, 10_000).map_err(|e| e.to_string())?;
            let v_l =
                shapley::discounted_value(&game, 1e-4, 1e-6).map_err(|e| e.to_string())?;
            Ok((name, sup_dist(v_n.final_values(), &v_l.value)))
        })
        .collect();
    let mut worst = (String::new(), 0.0f64);
    for outcome in outcomes {
        match outcome {
            Ok((name, d)) => {
                if d > worst.1 {
                    worst = (name, d);
                }
            }
            Err(e) => return Check::fail(e),
        }
    }
    if worst.1 <= 2e-2 {
        Check::pass(format!(
            "max ||v_n - v_lambda|| = {:.2e} ({}) <= 2e-2",
            worst.1, worst.0
        ))
    } else {
        Check::fail(format!("{} deviates by {:.2e}", worst.0, worst.1))
    }
}

fn c11_puiseux() -> Check {
    let e1: Game64 = builtins::example1();
    let grid: Vec<f64> = (0..8).map(|k| 1e-3 * 0.5f64.powi(k)).collect();
    let fit = match shapley::fit_puiseux(&e1, 0, &grid) {
        Ok(f) => f,
        Err(e) => return Check::fail(e.to_string()),
    };
    let Some(corr1) = fit.correction else {
        return Check::fail("no correction term on the absorbing example");
    };
    if (corr1.exponent - 0.5).abs() > 0.02 {
        return Check::fail(format!("exponent {} not 0.5 +- 0.02", corr1.exponent));
    }
    let e2: Game64 = builtins::example2();
    let grid: Vec<f64> = (0..8).map(|k| 0.05 * 0.5f64.powi(k)).collect();
    let fit = match shapley::fit_puiseux(&e2, 0, &grid) {
        Ok(f) => f,
        Err(e) => return Check::fail(e.to_string()),
    };
    let Some(corr2) = fit.correction else {
        return Check::fail("no correction term on the one-player example");
    };
    if (corr2.exponent - 1.0).abs() > 0.05 {
        return Check::fail(format!("exponent {} not 1.0 +- 0.05", corr2.exponent));
    }
    Check::pass(format!(
        "exponents {:.3} (target 0.5) and {:.3} (target 1.0)",
        corr1.exponent, corr2.exponent
    ))
}

fn c12_properties() -> Check {
    use stogame::matgame::{self, MatrixGame};
    // Matrix-game duality and equivariance on 500 random matrices.
    let tol = 1e-10;
    for seed in 0..500u64 {
        let m = 1 + (seed as usize % 6);
        let n = 1 + ((seed as usize / 6) % 6);
        let g = random_game::<f64>(1, m, n, 30_000 + seed);
        let game = MatrixGame::new(g.payoff_matrix(0).clone()).unwrap();
        let sol = match matgame::solve(&game, tol) {
            Ok(s) => s,
            Err(e) => return Check::fail(format!("seed {seed}: {e}")),
        };
        let dual = MatrixGame::new(
            (0..game.cols())
                .map(|j| (0..game.rows()).map(|i| -game.entry(i, j)).collect())
                .collect(),
        )
        .unwrap();
        let dual_sol = matgame::solve(&dual, tol).unwrap();
        if (sol.value + dual_sol.value).abs() > 2.0 * tol {
            return Check::fail(format!("duality gap at seed {seed}"));
        }
        let (guarantee, _) = matgame::best_response_value(&game, &sol.row_strategy).unwrap();
        if guarantee < sol.value - tol {
            return Check::fail(format!("guarantee broken at seed {seed}"));
        }
        if seed % 10 == 0 {
            let scaled = MatrixGame::new(
                game.entries()
                    .iter()
                    .map(|r| r.iter().map(|e| 2.0 * e + 0.5).collect())
                    .collect(),
            )
            .unwrap();
            let ssol = matgame::solve(&scaled, tol).unwrap();
            if (ssol.value - (2.0 * sol.value + 0.5)).abs() > 1e-8 {
                return Check::fail(format!("scale equivariance broken at seed {seed}"));
            }
        }
    }
    // Operator non-expansiveness on 500 random pairs.
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
    for trial in 0..500 {
        let game = random_game::<f64>(3, 2, 2, 40_000 + (trial % 50) as u64);
        let v: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pv = shapley::apply_operator(&game, &v).unwrap();
        let pw = shapley::apply_operator(&game, &w).unwrap();
        if sup_dist(&pv, &pw) > sup_dist(&v, &w) + 1e-9 {
            return Check::fail(format!("expansion at trial {trial}"));
        }
    }
    // Total-variation identities, exactly.
    for n in 1..=200usize {
        let tv = Evaluation::<f64>::uniform(n).total_variation();
        if (tv - 1.0 / n as f64).abs() > 1e-15 {
            return Check::fail(format!("uniform TV at n={n}"));
        }
    }
    for lambda in [0.9, 0.5, 0.1, 0.01, 1e-4] {
        if Evaluation::geometric(lambda).unwrap().total_variation() != lambda {
            return Check::fail(format!("geometric TV at {lambda}"));
        }
    }
    if Evaluation::<f64>::dirac(1).total_variation() != 1.0 {
        return Check::fail("dirac TV");
    }
    Check::pass("500 matrix games, 500 operator pairs, evaluation identities")
}
