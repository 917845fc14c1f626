use clap::Subcommand;
use dualitylab::dual::{is_arbitrage_free, martingale_polytope};
use dualitylab::harness::{
    conjugacy_check, conjugate_pair_at_x, conjugate_pair_at_y, dual_superrep_price, example_portfolio_study, log_grid,
    optimality_relations_check, paired_solutions, superreplication_price, value_convergence_study, ConjugacyReport,
    ConvergenceReport, ExampleReport, PairGap, RelationsReport, ValueCurves,
};
use dualitylab::io::{GeneratorDocument, MarketDocument};
use dualitylab::market::validate_clock;
use dualitylab::primal::{admissibility_check, AdmissibilityReport};
use dualitylab::{
    solve_dual, solve_primal, ExampleMarketSpec, Limits, MarketModel64, SolverOptions64, UtilityField64,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{num, Outputs, Series};

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Check the tree, prices and clock of a model.
    Validate,
    /// Optimal consumption and holdings at initial wealth x.
    SolvePrimal,
    /// Optimal martingale density at y.
    SolveDual,
    /// Conjugacy of the value functions and the optimality relations.
    DualityReport,
    /// Superreplication prices from both linear programs.
    Superrep,
    /// Value functions as the number of tradable assets grows.
    Converge,
    /// Optimal holdings in the independent-binomial market.
    Example,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Validate => "validate",
            Self::SolvePrimal => "solve-primal",
            Self::SolveDual => "solve-dual",
            Self::DualityReport => "duality-report",
            Self::Superrep => "superrep",
            Self::Converge => "converge",
            Self::Example => "example",
        }
    }
}

/// What a command found: whether its checks passed and a short summary for
/// the terminal.
pub struct Outcome {
    pub passed: bool,
    pub lines: Vec<String>,
}

pub fn run(command: Command, cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut out = Outputs::new(&cfg.out, command.name())?;
    let mut outcome = match command {
        Command::Validate => validate(cfg, &mut out),
        Command::SolvePrimal => primal(cfg, &mut out),
        Command::SolveDual => dual(cfg, &mut out),
        Command::DualityReport => duality(cfg, &mut out),
        Command::Superrep => superrep(cfg, &mut out),
        Command::Converge => converge(cfg, &mut out),
        Command::Example => example(cfg, &mut out),
    }?;
    outcome.lines.extend(out.written().iter().map(|p| format!("wrote {}", p.display())));
    Ok(outcome)
}

fn model(cfg: &RunConfig) -> Result<MarketModel64, CliError> {
    let doc = cfg.model.as_ref().ok_or_else(|| CliError::Config("this command needs --model".into()))?;
    Ok(doc.build(&Limits::from_env())?)
}

fn field(cfg: &RunConfig, default: UtilityField64) -> Result<UtilityField64, CliError> {
    match &cfg.utility {
        Some(doc) => Ok(doc.build()?),
        None => Ok(default),
    }
}

fn opts(cfg: &RunConfig) -> SolverOptions64 {
    SolverOptions64::with_tol(cfg.tol)
}

#[derive(Serialize)]
struct ValidateSummary {
    nodes: usize,
    leaves: usize,
    horizon: usize,
    assets: usize,
    n_active: usize,
    leaf_probability_sum: f64,
    expected_clock: f64,
    clock: dualitylab::market::ClockReport,
    arbitrage_free: bool,
}

fn validate(cfg: &RunConfig, out: &mut Outputs) -> Result<Outcome, CliError> {
    let m = model(cfg)?;
    let tr = m.tree();
    let kappa = m.clock().cumulative(tr);
    let summary = ValidateSummary {
        nodes: tr.len(),
        leaves: tr.leaves().len(),
        horizon: tr.horizon(),
        assets: m.n_assets(),
        n_active: m.n_active(),
        leaf_probability_sum: tr.leaves().iter().map(|&l| tr.prob(l)).sum(),
        expected_clock: m.expected_clock(),
        clock: validate_clock(m.clock(), tr),
        arbitrage_free: is_arbitrage_free(&m),
    };
    out.json(&summary)?;
    out.csv(
        &["id", "t", "parent", "prob", "uncond_prob", "dk", "kappa"],
        (0..tr.len()).map(|k| {
            vec![
                k.to_string(),
                tr.time(k).to_string(),
                tr.parent(k).map_or(String::new(), |p| p.to_string()),
                num(tr.transition_prob(k)),
                num(tr.prob(k)),
                num(m.clock().increment(k)),
                num(kappa[k]),
            ]
        }),
    )?;
    out.plot(&[Series::new("kappa_T by leaf", tr.leaves().iter().map(|&l| (l as f64, kappa[l])).collect())])?;
    Ok(Outcome {
        passed: summary.arbitrage_free,
        lines: vec![
            format!("{} nodes, {} leaves, horizon {}, {} assets", summary.nodes, summary.leaves, summary.horizon, summary.assets),
            format!("clock ok, max kappa_T = {}", summary.clock.max_total),
            format!("arbitrage free: {}", summary.arbitrage_free),
        ],
    })
}

#[derive(Serialize)]
struct PrimalSummary {
    x: f64,
    value: f64,
    kkt_residual: f64,
    iterations: usize,
    root_holdings: Vec<f64>,
    root_bond: f64,
    admissibility: AdmissibilityReport,
}

fn primal(cfg: &RunConfig, out: &mut Outputs) -> Result<Outcome, CliError> {
    let m = model(cfg)?;
    let f = field(cfg, UtilityField64::log())?;
    let x = cfg.x.unwrap_or(1.0);
    let sol = solve_primal(&m, &f, x, &opts(cfg))?;
    let adm = admissibility_check(&m, &sol.holdings, &sol.consumption, x)?;
    let tr = m.tree();
    let n = m.n_active();
    let summary = PrimalSummary {
        x,
        value: sol.value,
        kkt_residual: sol.kkt_residual,
        iterations: sol.iterations,
        root_holdings: sol.holdings[0].clone(),
        root_bond: sol.bond_holding(&m, 0),
        admissibility: adm,
    };
    out.json(&summary)?;
    let mut header = vec!["node".to_string(), "t".into(), "prob".into(), "dk".into(), "consumption".into(), "wealth".into(), "bond".into()];
    header.extend((1..=n).map(|i| format!("h{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv(
        &header,
        (0..tr.len()).map(|k| {
            let leaf = tr.is_leaf(k);
            let mut row = vec![
                k.to_string(),
                tr.time(k).to_string(),
                num(tr.prob(k)),
                num(m.clock().increment(k)),
                num(sol.consumption[k]),
                num(sol.wealth[k]),
                if leaf { String::new() } else { num(sol.bond_holding(&m, k)) },
            ];
            row.extend((0..n).map(|i| if leaf { String::new() } else { num(sol.holdings[k][i]) }));
            row
        }),
    )?;
    let nodes = m.consumption_nodes();
    out.plot(&[
        Series::new("consumption by node", nodes.iter().map(|&k| (k as f64, sol.consumption[k])).collect()),
        Series::new("wealth by node", (0..tr.len()).map(|k| (k as f64, sol.wealth[k])).collect()),
    ])?;
    Ok(Outcome {
        passed: summary.admissibility.passed,
        lines: vec![
            format!("u({x}) = {}", sol.value),
            format!("root holdings {:?}, bond {}", summary.root_holdings, summary.root_bond),
            format!("admissible: {}", summary.admissibility.passed),
        ],
    })
}

#[derive(Serialize)]
struct DualSummary {
    y: f64,
    value: f64,
    slope: f64,
    kkt_residual: f64,
    iterations: usize,
    attained_on_boundary: bool,
    martingale_residual: f64,
    tol: f64,
}

fn dual(cfg: &RunConfig, out: &mut Outputs) -> Result<Outcome, CliError> {
    let m = model(cfg)?;
    let f = field(cfg, UtilityField64::log())?;
    let y = cfg.y.unwrap_or(1.0);
    let sol = solve_dual(&m, &f, y, &opts(cfg))?;
    let tr = m.tree();
    let tol = cfg.check_tol.unwrap_or(1e-9);
    let summary = DualSummary {
        y,
        value: sol.value,
        slope: sol.slope(&m, &f),
        kkt_residual: sol.kkt_residual,
        iterations: sol.iterations,
        attained_on_boundary: sol.attained_on_boundary,
        martingale_residual: martingale_polytope(&m).residual(&sol.z),
        tol,
    };
    out.json(&summary)?;
    out.csv(
        &["node", "t", "prob", "z", "yz", "consumption"],
        (0..tr.len()).map(|k| {
            let yz = y * sol.z[k];
            let c = if m.clock().increment(k) > 0.0 { f.inverse_marginal(k, yz).map_or(String::new(), num) } else { String::new() };
            vec![k.to_string(), tr.time(k).to_string(), num(tr.prob(k)), num(sol.z[k]), num(yz), c]
        }),
    )?;
    out.plot(&[Series::new("density by node", (0..tr.len()).map(|k| (k as f64, sol.z[k])).collect())])?;
    Ok(Outcome {
        passed: summary.martingale_residual <= tol,
        lines: vec![
            format!("v({y}) = {}", sol.value),
            format!("v'({y}) = {}", summary.slope),
            format!("martingale residual {:e}", summary.martingale_residual),
        ],
    })
}

#[derive(Serialize)]
struct DualitySummary {
    tol: f64,
    pair_at_x: PairGap,
    pair_at_y: PairGap,
    /// Largest `|v(y) + x y - u(x)|` over both conjugate pairs.
    worst_pair_gap: f64,
    relations: RelationsReport,
    grid: ConjugacyReport,
    passed: bool,
}

fn grids(cfg: &RunConfig) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let grid = log_grid(cfg.grid.0, cfg.grid.1, cfg.grid.2)?;
    Ok((cfg.x.map_or_else(|| grid.clone(), |x| vec![x]), cfg.y.map_or(grid, |y| vec![y])))
}

fn curve_rows(c: &ValueCurves<f64>) -> impl Iterator<Item = Vec<String>> + '_ {
    c.long_rows().into_iter().map(|(n, g, kind, v)| vec![n.to_string(), num(g), kind.to_string(), num(v)])
}

fn curve_series(c: &ValueCurves<f64>) -> Vec<Series> {
    let mut s = Vec::new();
    for (l, &n) in c.levels.iter().enumerate() {
        s.push(Series::new(format!("u n={n}"), c.x_grid.iter().copied().zip(c.u[l].iter().copied()).collect()));
        s.push(Series::new(format!("v n={n}"), c.y_grid.iter().copied().zip(c.v[l].iter().copied()).collect()));
    }
    s
}

const CURVE_HEADER: [&str; 4] = ["n", "x_or_y", "kind", "value"];

fn duality(cfg: &RunConfig, out: &mut Outputs) -> Result<Outcome, CliError> {
    let m = model(cfg)?;
    let f = field(cfg, UtilityField64::log())?;
    let o = opts(cfg);
    let tol = cfg.check_tol.unwrap_or(1e-6);
    let x = cfg.x.unwrap_or(1.0);
    let y = cfg.y.unwrap_or(1.0);
    let pair_at_x = conjugate_pair_at_x(&m, &f, x, &o)?;
    let pair_at_y = conjugate_pair_at_y(&m, &f, y, &o)?;
    let (p, d) = paired_solutions(&m, &f, x, &o)?;
    let relations = optimality_relations_check(&m, &f, &p, &d, tol);
    let grid = log_grid(cfg.grid.0, cfg.grid.1, cfg.grid.2)?;
    let curves = ValueCurves::sample(&m, &f, &grid, &grid, &[m.n_active()], &o)?;
    let conj = conjugacy_check(&curves, 0, tol);
    let worst_pair_gap = pair_at_x.gap.abs().max(pair_at_y.gap.abs());
    let passed = worst_pair_gap <= tol && relations.passed() && conj.passed;
    let summary = DualitySummary { tol, pair_at_x, pair_at_y, worst_pair_gap, relations, grid: conj, passed };
    out.json(&summary)?;
    out.csv(&CURVE_HEADER, curve_rows(&curves))?;
    out.plot(&curve_series(&curves))?;
    Ok(Outcome {
        passed,
        lines: vec![
            format!("worst conjugacy gap {:e} (tol {tol:e})", summary.worst_pair_gap),
            format!(
                "marginal relation {:e}, budget identity {:e}",
                summary.relations.marginal_rel, summary.relations.budget_rel
            ),
            format!("grid conjugacy excess {:e}, {} unresolved", summary.grid.worst_excess, summary.grid.unresolved),
        ],
    })
}

#[derive(Serialize)]
struct ClaimPrice {
    claim: usize,
    primal_price: f64,
    dual_price: f64,
    gap: f64,
    min_wealth: f64,
}

#[derive(Serialize)]
struct SuperrepSummary {
    tol: f64,
    claims: Vec<ClaimPrice>,
    worst_gap: f64,
    passed: bool,
}

fn superrep(cfg: &RunConfig, out: &mut Outputs) -> Result<Outcome, CliError> {
    let m = model(cfg)?;
    let tol = cfg.check_tol.unwrap_or(1e-8);
    let claims = cfg.claims.clone().unwrap_or_else(|| vec![vec![1.0; m.tree().len()]]);
    let mut rows = Vec::new();
    for (i, c) in claims.iter().enumerate() {
        let p = superreplication_price(&m, c)?;
        let d = dual_superrep_price(&m, c)?;
        rows.push(ClaimPrice {
            claim: i,
            primal_price: p.price,
            dual_price: d.value,
            gap: (p.price - d.value).abs(),
            min_wealth: p.wealth.iter().copied().fold(f64::INFINITY, f64::min),
        });
    }
    let worst_gap = rows.iter().map(|r| r.gap).fold(0.0, f64::max);
    let summary = SuperrepSummary { tol, worst_gap, passed: worst_gap <= tol, claims: rows };
    out.json(&summary)?;
    out.csv(
        &["claim", "primal_price", "dual_price", "gap"],
        summary.claims.iter().map(|r| vec![r.claim.to_string(), num(r.primal_price), num(r.dual_price), num(r.gap)]),
    )?;
    out.plot(&[
        Series::new("superreplication price", summary.claims.iter().map(|r| (r.claim as f64, r.primal_price)).collect()),
        Series::new("dual price", summary.claims.iter().map(|r| (r.claim as f64, r.dual_price)).collect()),
    ])?;
    let mut lines: Vec<String> =
        summary.claims.iter().map(|r| format!("claim {}: {} vs {}", r.claim, r.primal_price, r.dual_price)).collect();
    lines.push(format!("worst gap {:e} (tol {tol:e})", worst_gap));
    Ok(Outcome { passed: summary.passed, lines })
}

fn converge(cfg: &RunConfig, out: &mut Outputs) -> Result<Outcome, CliError> {
    let m = model(cfg)?;
    let f = field(cfg, UtilityField64::log())?;
    let total = m.n_assets();
    let n_max = cfg.n_max.unwrap_or(total);
    let n_min = cfg.n_min.unwrap_or(total.min(1));
    if n_min > n_max || n_max > total {
        return Err(CliError::Config(format!("need n-min <= n-max <= {total}, got {n_min}..{n_max}")));
    }
    let levels: Vec<usize> = (n_min..=n_max).collect();
    let (xs, ys) = grids(cfg)?;
    let tol = cfg.check_tol.unwrap_or(1e-3);
    let study = value_convergence_study(&m, &f, &xs, &ys, &levels, &opts(cfg), tol)?;
    let rep: &ConvergenceReport = &study.report;
    out.json(rep)?;
    out.csv(&CURVE_HEADER, curve_rows(&study.curves))?;
    out.plot(&curve_series(&study.curves))?;
    let worst = rep.sandwich.iter().filter(|s| !s.unresolved).map(|s| s.gap).fold(f64::NEG_INFINITY, f64::max);
    Ok(Outcome {
        passed: rep.passed(),
        lines: vec![
            format!("levels {n_min}..={n_max}: monotone {}", rep.monotone),
            format!("last u tail {:e}", rep.u_tails.last().copied().unwrap_or(0.0)),
            format!("sandwich gap {worst:e} (tol {tol:e}): {}", rep.sandwich_ok),
        ],
    })
}

fn example(cfg: &RunConfig, out: &mut Outputs) -> Result<Outcome, CliError> {
    let (n_max, start, step) = cfg.example;
    let spec: ExampleMarketSpec<f64> = match &cfg.model {
        Some(MarketDocument::Generated(g @ GeneratorDocument::Example { .. })) => {
            g.example_spec()?.expect("example generator")
        }
        Some(_) => return Err(CliError::Config("example needs an example generator model or none".into())),
        None => ExampleMarketSpec::arithmetic(n_max, start, step)?,
    };
    let f = field(cfg, UtilityField64::bounded(0.5, 1.1).expect("valid parameters"))?;
    let sizes: Vec<usize> = (1..=spec.len()).collect();
    let rep: ExampleReport = example_portfolio_study(&spec, &f, &sizes, &opts(cfg), &Limits::from_env())?;
    out.json(&rep)?;
    out.csv(
        &["N", "i", "holding", "bound", "value"],
        rep.long_rows().into_iter().map(|(n, i, h, b, v)| vec![n.to_string(), i.to_string(), num(h), num(b), num(v)]),
    )?;
    let mut series: Vec<Series> = (1..=spec.len())
        .map(|i| Series::new(format!("h_{i} by N"), rep.trend(i).into_iter().map(|(n, h)| (n as f64, h)).collect()))
        .collect();
    series.push(Series::new("u(1) by N", rep.rows.iter().map(|r| (r.n as f64, r.value)).collect()));
    out.plot(&series)?;
    let flag = |b: bool| if b { "ok" } else { "FAILED" };
    Ok(Outcome {
        passed: rep.passed(),
        lines: vec![
            format!("ordering {}, bounds {}, signs {}", flag(rep.chain_ok), flag(rep.bounds_ok), flag(rep.nonnegative_ok)),
            format!("decay {}, margin {}, converged {}", flag(rep.decay_ok), flag(rep.margin_ok), flag(rep.converged_ok)),
            format!("negative bond position at N = {:?}", rep.negative_bond),
        ],
    })
}
