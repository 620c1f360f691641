use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use stogame::game::StationaryStrategy;
use stogame::mdp::MDProblem;
use stogame::mertens_neyman::{self as mn, MnSession};
use stogame::pathology::{self, SweepKind};
use stogame::play::StationaryPlayer;
use stogame::{bigmatch, shapley, Game64, MixedAction64};
use stogame_cli::gamefile::{parse_game, GameFileError};
use stogame_cli::lambdas::parse_lambdas;
use stogame_cli::table::{render, write_csv};
use stogame_cli::selftest;

#[derive(Parser)]
#[command(
    name = "stogame",
    version,
    about = "Solvers for finite zero-sum stochastic games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Discounted or n-stage values (and strategies) of a game file.
    Value(ValueArgs),
    /// Discounted values across a list of discounts, with CSV output.
    Sweep(SweepArgs),
    /// Evidence for the common limit of v_n and v_lambda.
    Limit(LimitArgs),
    /// Leading fractional-exponent fit of v_lambda near zero.
    Puiseux(PuiseuxArgs),
    /// Enumerative search for a policy optimal at all small discounts.
    MdpBlackwell(BlackwellArgs),
    /// Exact worst case of the Big Match counter strategy.
    Bigmatch(BigmatchArgs),
    /// Play the horizon-robust strategy and report its average payoff.
    Mn(MnArgs),
    /// Sweep the oscillating compact-action family.
    Pathology(PathologyArgs),
    /// Run the full acceptance battery.
    Selftest,
}

#[derive(Args)]
struct ValueArgs {
    #[arg(long)]
    game: PathBuf,
    #[arg(long, conflicts_with = "horizon")]
    discount: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    game: PathBuf,
    /// geometric:start,ratio,count or comma-separated discounts.
    #[arg(long)]
    lambdas: String,
    #[arg(long)]
    csv: PathBuf,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Args)]
struct LimitArgs {
    #[arg(long)]
    game: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    n_big: usize,
    #[arg(long, default_value_t = 1e-4)]
    lambda_small: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Args)]
struct PuiseuxArgs {
    #[arg(long)]
    game: PathBuf,
    /// State label or index.
    #[arg(long)]
    state: String,
    /// Discount grid; defaults to geometric:1e-3,0.5,8.
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Args)]
struct BlackwellArgs {
    #[arg(long)]
    game: PathBuf,
    /// Grid is 2^-1 .. 2^-k.
    #[arg(long, default_value_t = 10)]
    grid_k: u32,
}

#[derive(Args)]
struct BigmatchArgs {
    #[arg(long = "M")]
    m: u32,
    #[arg(long = "T")]
    t: usize,
    /// Monte Carlo repetitions against the witness sequence.
    #[arg(long)]
    simulate: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct MnArgs {
    #[arg(long)]
    game: PathBuf,
    #[arg(long)]
    eps: f64,
    #[arg(long = "T")]
    t: usize,
    /// uniform | action:IDX | discounted:LAMBDA
    #[arg(long, default_value = "uniform")]
    opponent: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Initial state label or index; defaults to the first state.
    #[arg(long)]
    state: Option<String>,
    /// Run the per-stage submartingale verification on the record.
    #[arg(long, default_value_t = false)]
    check: bool,
}

#[derive(Args)]
struct PathologyArgs {
    #[arg(long)]
    sequence: String,
    #[arg(long)]
    n_from: usize,
    #[arg(long)]
    n_to: usize,
    #[arg(long, default_value_t = 18)]
    n_max: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long)]
    csv: Option<PathBuf>,
}

/// Exit-code classes: 1 for input/validation problems, 2 for solver
/// failures.
enum AppError {
    Validation(String),
    Solver(String),
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            AppError::Validation(_) => 1,
            AppError::Solver(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Validation(m) | AppError::Solver(m) => m,
        }
    }
}

impl From<GameFileError> for AppError {
    fn from(e: GameFileError) -> Self {
        AppError::Validation(e.to_string())
    }
}

impl From<shapley::SolveError> for AppError {
    fn from(e: shapley::SolveError) -> Self {
        match e {
            shapley::SolveError::BadArgument(m) => AppError::Validation(m),
            other => AppError::Solver(other.to_string()),
        }
    }
}

impl From<stogame::mdp::MdpError> for AppError {
    fn from(e: stogame::mdp::MdpError) -> Self {
        use stogame::mdp::MdpError::*;
        match e {
            NotOnePlayer { .. } | BadArgument(_) | BadPolicy { .. } | BadEvaluation(_) => {
                AppError::Validation(e.to_string())
            }
            _ => AppError::Solver(e.to_string()),
        }
    }
}

impl From<mn::MnError> for AppError {
    fn from(e: mn::MnError) -> Self {
        match e {
            mn::MnError::BadArgument(m) => AppError::Validation(m),
            other => AppError::Solver(other.to_string()),
        }
    }
}

impl From<pathology::PathologyError> for AppError {
    fn from(e: pathology::PathologyError) -> Self {
        use pathology::PathologyError::*;
        match e {
            OutOfRegime { .. } | BadArgument(_) => AppError::Validation(e.to_string()),
            other => AppError::Solver(other.to_string()),
        }
    }
}

impl From<bigmatch::BigMatchError> for AppError {
    fn from(e: bigmatch::BigMatchError) -> Self {
        use bigmatch::BigMatchError::*;
        match e {
            HorizonTooLarge { .. } | BadOpponent(_) | UnreachableCounter { .. } => {
                AppError::Validation(e.to_string())
            }
            Play(p) => AppError::Solver(p.to_string()),
        }
    }
}

fn read_game(path: &Path) -> Result<Game64, AppError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::Validation(format!("cannot read {}: {e}", path.display())))?;
    Ok(parse_game(&text)?)
}

fn state_index(game: &Game64, spec: &str) -> Result<usize, AppError> {
    if let Some(k) = game.state_index(spec) {
        return Ok(k);
    }
    spec.parse::<usize>()
        .ok()
        .filter(|k| *k < game.num_states())
        .ok_or_else(|| AppError::Validation(format!("no state '{spec}'")))
}

fn mixed_to_string(m: &MixedAction64) -> String {
    m.weights()
        .iter()
        .map(|w| format!("{w:.6}"))
        .collect::<Vec<_>>()
        .join("/")
}

fn cmd_value(args: &ValueArgs) -> Result<(), AppError> {
    let game = read_game(&args.game)?;
    match (args.discount, args.horizon) {
        (Some(lambda), None) => {
            let sol = shapley::discounted_value(&game, lambda, args.tol)?;
            println!(
                "discounted values (lambda = {lambda}, residual {:.3e}, {} iterations)",
                sol.residual, sol.iterations
            );
            let rows: Vec<Vec<String>> = (0..game.num_states())
                .map(|k| {
                    vec![
                        game.state_label(k).to_string(),
                        format!("{:.15}", sol.value[k]),
                        mixed_to_string(sol.x.action(k)),
                        mixed_to_string(sol.y.action(k)),
                    ]
                })
                .collect();
            print!(
                "{}",
                render(
                    &["state".into(), "value".into(), "x".into(), "y".into()],
                    &rows
                )
            );
        }
        (None, Some(n)) => {
            let sol = shapley::n_stage_values(&game, n)?;
            println!("{n}-stage values");
            let rows: Vec<Vec<String>> = (0..game.num_states())
                .map(|k| {
                    vec![
                        game.state_label(k).to_string(),
                        format!("{:.15}", sol.final_values()[k]),
                    ]
                })
                .collect();
            print!("{}", render(&["state".into(), "value".into()], &rows));
        }
        _ => {
            return Err(AppError::Validation(
                "exactly one of --discount or --horizon is required".into(),
            ))
        }
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), AppError> {
    let game = read_game(&args.game)?;
    let lambdas = parse_lambdas(&args.lambdas)
        .map_err(|e| AppError::Validation(e.to_string()))?;
    let table = shapley::lambda_sweep(&game, &lambdas, args.tol)?;
    let mut header = vec!["lambda".to_string()];
    header.extend(
        game.state_labels()
            .iter()
            .map(|s| format!("v_{s}")),
    );
    let text_rows: Vec<Vec<String>> = table
        .iter()
        .map(|(l, v)| {
            let mut row = vec![format!("{l:.6e}")];
            row.extend(v.iter().map(|x| format!("{x:.12}")));
            row
        })
        .collect();
    print!("{}", render(&header, &text_rows));
    let csv_rows: Vec<Vec<f64>> = table
        .iter()
        .map(|(l, v)| {
            let mut row = vec![*l];
            row.extend_from_slice(v);
            row
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    write_csv(&args.csv, &header_refs, &csv_rows)
        .map_err(|e| AppError::Validation(format!("cannot write CSV: {e}")))?;
    println!("wrote {}", args.csv.display());
    Ok(())
}

fn cmd_limit(args: &LimitArgs) -> Result<(), AppError> {
    let game = read_game(&args.game)?;
    let est = shapley::estimate_limit(&game, args.n_big, args.lambda_small, args.tol)?;
    println!(
        "limit evidence (n = {}, lambda = {}): discrepancy {:.6e}",
        args.n_big, args.lambda_small, est.discrepancy
    );
    let rows: Vec<Vec<String>> = (0..game.num_states())
        .map(|k| {
            vec![
                game.state_label(k).to_string(),
                format!("{:.12}", est.estimate[k]),
            ]
        })
        .collect();
    print!("{}", render(&["state".into(), "limit".into()], &rows));
    Ok(())
}

fn cmd_puiseux(args: &PuiseuxArgs) -> Result<(), AppError> {
    let game = read_game(&args.game)?;
    let state = state_index(&game, &args.state)?;
    let grid = match &args.grid {
        Some(spec) => parse_lambdas(spec).map_err(|e| AppError::Validation(e.to_string()))?,
        None => (0..8).map(|k| 1e-3 * 0.5f64.powi(k)).collect(),
    };
    let fit = shapley::fit_puiseux(&game, state, &grid)?;
    println!("state {}: limit {:.12}", game.state_label(state), fit.limit);
    match fit.correction {
        Some(corr) => println!(
            "leading correction: {:.6} * lambda^{:.4}",
            corr.coefficient, corr.exponent
        ),
        None => println!("no correction term (values constant on the grid)"),
    }
    Ok(())
}

fn cmd_blackwell(args: &BlackwellArgs) -> Result<(), AppError> {
    let game = read_game(&args.game)?;
    let mdp = MDProblem::from_game(game)?;
    let grid: Vec<f64> = (1..=args.grid_k).map(|k| 0.5f64.powi(k as i32)).collect();
    let res = stogame::mdp::blackwell_policy(&mdp, &grid)?;
    println!(
        "policy optimal at every grid discount <= {}",
        res.lambda0_estimate
    );
    let rows: Vec<Vec<String>> = (0..mdp.num_states())
        .map(|k| {
            vec![
                mdp.game().state_label(k).to_string(),
                mdp.game().action1_labels(k)[res.policy.choices[k]].clone(),
            ]
        })
        .collect();
    print!("{}", render(&["state".into(), "action".into()], &rows));
    println!("certificate:");
    let cert_rows: Vec<Vec<String>> = res
        .certificate
        .iter()
        .map(|row| {
            vec![
                format!("{:.6e}", row.lambda),
                format!("{:?}", row.winner.choices),
                row.values
                    .iter()
                    .map(|v| format!("{v:.9}"))
                    .collect::<Vec<_>>()
                    .join(" "),
            ]
        })
        .collect();
    print!(
        "{}",
        render(
            &["lambda".into(), "winner".into(), "values".into()],
            &cert_rows
        )
    );
    Ok(())
}

fn cmd_bigmatch(args: &BigmatchArgs) -> Result<(), AppError> {
    let wc = bigmatch::worst_case_average(args.m, args.t)?;
    println!(
        "worst-case average over all opponents: {:.12}",
        wc.worst_average
    );
    println!(
        "closed-form floor M/(2(M+1)) - M/(2T):  {:.12}",
        wc.bound
    );
    let shown: String = wc
        .witness
        .iter()
        .take(60)
        .map(|&j| if j == bigmatch::LEFT { 'L' } else { 'R' })
        .collect();
    println!(
        "witness sequence: {shown}{}",
        if wc.witness.len() > 60 { "…" } else { "" }
    );
    if let Some(reps) = args.simulate {
        let res = bigmatch::simulate(
            args.m,
            args.t,
            &bigmatch::Opponent::Sequence(wc.witness.clone()),
            args.seed,
            reps,
        )?;
        println!(
            "simulation vs witness: mean {:.6} (SE {:.2e}, {reps} plays, seed {})",
            res.mean, res.std_error, args.seed
        );
    }
    Ok(())
}

fn mn_opponent(
    game: &Game64,
    spec: &str,
) -> Result<StationaryPlayer<f64>, AppError> {
    let strategy = if spec == "uniform" {
        StationaryStrategy::new(
            (0..game.num_states())
                .map(|k| MixedAction64::uniform(game.actions2_len(k)))
                .collect(),
        )
    } else if let Some(idx) = spec.strip_prefix("action:") {
        let idx: usize = idx
            .parse()
            .map_err(|_| AppError::Validation(format!("bad opponent '{spec}'")))?;
        StationaryStrategy::new(
            (0..game.num_states())
                .map(|k| {
                    let n = game.actions2_len(k);
                    MixedAction64::dirac(n, idx.min(n - 1))
                })
                .collect(),
        )
    } else if let Some(l) = spec.strip_prefix("discounted:") {
        let lambda: f64 = l
            .parse()
            .map_err(|_| AppError::Validation(format!("bad opponent '{spec}'")))?;
        shapley::discounted_value(game, lambda, 1e-9)?.y
    } else {
        return Err(AppError::Validation(format!(
            "unknown opponent '{spec}' (use uniform | action:IDX | discounted:LAMBDA)"
        )));
    };
    Ok(StationaryPlayer { strategy })
}

fn cmd_mn(args: &MnArgs) -> Result<(), AppError> {
    let game = read_game(&args.game)?;
    let initial = match &args.state {
        Some(s) => state_index(&game, s)?,
        None => 0,
    };
    if !(args.eps > 0.0 && args.eps < 1.0) {
        return Err(AppError::Validation("eps must lie in (0, 1)".into()));
    }
    let session = MnSession::new(&game, args.eps, &mn::default_calibration_grid())?;
    let cfg = session.config();
    println!(
        "calibration: C = {:.3e}, M = {}, lambda0 = {:.3e}, lambda1 = {:.3e}, d1 = {:.6}",
        cfg.c, cfg.m_order, cfg.lambda0, cfg.lambda1, cfg.d1
    );
    let mut opponent = mn_opponent(&game, &args.opponent)?;
    let record = session.simulate(&mut opponent, initial, args.t, args.seed)?;
    let avg = record.average_payoff();
    let floor = session.guarantee_floor(initial, args.t)?;
    let internals = record.internals.as_ref().expect("records carry internals");
    let floor_hits = internals
        .iter()
        .filter(|i| i.lambda >= cfg.lambda1 * (1.0 - 1e-9))
        .count();
    println!(
        "average payoff over {} stages: {:.6} (floor at this horizon: {:.6})",
        args.t, avg, floor.floor_original
    );
    println!(
        "patient bound {:.6} applies beyond {:.3e} stages",
        cfg.unrescale(floor.anchor_value - 8.0 * cfg.eps),
        floor.t_threshold
    );
    println!(
        "final discount {:.3e}, budget {:.3}, floor hits {floor_hits}",
        internals.last().expect("nonempty").lambda,
        internals.last().expect("nonempty").d
    );
    if args.check {
        let report = session.check_submartingale(&record, 1e-6)?;
        println!(
            "submartingale verification: {} violations across {} stages",
            report.violations(),
            report.rows.len()
        );
    }
    Ok(())
}

fn cmd_pathology(args: &PathologyArgs) -> Result<(), AppError> {
    let kind = match args.sequence.as_str() {
        "even" => SweepKind::Even,
        "odd" => SweepKind::Odd,
        other => {
            return Err(AppError::Validation(format!(
                "sequence must be even or odd, not '{other}'"
            )))
        }
    };
    let rows = pathology::sequence_sweep(kind, args.n_from, args.n_to, args.n_max, args.tol)?;
    let header = ["n", "lambda", "x", "y", "alpha", "beta"];
    let text_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                format!("{:.6e}", r.lambda),
                format!("{:.12}", r.x),
                format!("{:.12}", r.y),
                format!("{:.6e}", r.alpha),
                format!("{:.6e}", r.beta),
            ]
        })
        .collect();
    let header_strings: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    print!("{}", render(&header_strings, &text_rows));
    if let Some(csv) = &args.csv {
        let csv_rows: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| vec![r.n as f64, r.lambda, r.x, r.y, r.alpha, r.beta])
            .collect();
        write_csv(csv, &header, &csv_rows)
            .map_err(|e| AppError::Validation(format!("cannot write CSV: {e}")))?;
        println!("wrote {}", csv.display());
    }
    Ok(())
}

fn cmd_selftest() -> Result<(), AppError> {
    let results = selftest::run_all(|r| println!("{}", r.line()));
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed == 0 {
        println!("all {} criteria passed", results.len());
        Ok(())
    } else {
        Err(AppError::Solver(format!("{failed} criteria failed")))
    }
}

fn run(cli: &Cli) -> Result<(), AppError> {
    match &cli.command {
        Command::Value(args) => cmd_value(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Limit(args) => cmd_limit(args),
        Command::Puiseux(args) => cmd_puiseux(args),
        Command::MdpBlackwell(args) => cmd_blackwell(args),
        Command::Bigmatch(args) => cmd_bigmatch(args),
        Command::Mn(args) => cmd_mn(args),
        Command::Pathology(args) => cmd_pathology(args),
        Command::Selftest => cmd_selftest(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
