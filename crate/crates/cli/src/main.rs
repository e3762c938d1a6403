//! `mdplab`: command-line surface over the core library. Models, policies
//! and measures travel as JSON; every command prints a JSON report (compact
//! by default, `--pretty` for humans) with numbers rounded to 12
//! significant digits.
//!
//! Exit codes: 0 success, 1 I/O or parse error, 2 precondition failure,
//! 3 solver non-convergence.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use mdplab_core::confusing::{self, BuildOutcome};
use mdplab_core::divergence::PairMeasure;
use mdplab_core::error::Error;
use mdplab_core::hardness::{self, ConfusingDecision, KnapsackInstance, RegretDecision, WidgetVariant};
use mdplab_core::lowerbound::{self, LbClass, LbOptions, PolicySet};
use mdplab_core::mdp::{self, DetPolicy, Mdp, Policy, SolveMethod};
use mdplab_core::simulator::{self, Agent};
use mdplab_core::structure;
use mdplab_core::tol;

#[derive(Parser)]
#[command(name = "mdplab", version, about = "Average-reward MDP solvers and regret lower bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveMethodArg {
    Enumerate,
    PolicyIteration,
}

#[derive(Clone, Copy, ValueEnum)]
enum LbMethodArg {
    General,
    Bandit,
    Recurrent,
    Switching,
    NoNavigation,
}

#[derive(Clone, Copy, ValueEnum)]
enum LbClassArg {
    FixedKernel,
    Constructive,
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckArg {
    Quasiflow,
    Pseudoregret,
    Navigation,
    Loglik,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    ConfusingModel,
    Regret,
}

#[derive(Args)]
struct OutputArgs {
    /// Pretty-print the JSON report.
    #[arg(long)]
    pretty: bool,
    /// Write the report to a file (atomically) instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a model: optimal gain, bias, Bellman gaps, classification.
    Solve {
        model: PathBuf,
        #[arg(long, value_enum, default_value = "enumerate")]
        method: SolveMethodArg,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Regret lower bound.
    Lb {
        model: PathBuf,
        #[arg(long, value_enum)]
        method: LbMethodArg,
        #[arg(long, value_enum, default_value = "fixed-kernel")]
        class: LbClassArg,
        /// Restrict policy constraints: "all" or "neighborhood:<k>".
        #[arg(long, default_value = "all")]
        policies: String,
        /// Also write the optimal exploration measure to this path.
        #[arg(long)]
        emit_mu: Option<PathBuf>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Build a confusing certificate for a policy.
    Confuse {
        model: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        /// Pair weights for the argmin ordering (JSON map action -> weight).
        #[arg(long)]
        kappa: Option<PathBuf>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Contract the model by its optimal pairs.
    Contract {
        model: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Build a knapsack widget family and decide the embedded instance.
    Knapsack {
        #[arg(long, value_delimiter = ',')]
        values: Vec<u64>,
        #[arg(long, value_delimiter = ',')]
        weights: Vec<u64>,
        #[arg(short = 'W', long)]
        capacity: u64,
        #[arg(short = 'V', long)]
        threshold: u64,
        #[arg(long, value_enum, default_value = "confusing-model")]
        variant: VariantArg,
        /// Write the reference model and every subset model to a directory.
        #[arg(long)]
        emit_family: Option<PathBuf>,
        /// Emit a compact descriptor (reference model + per-item changes).
        #[arg(long)]
        emit_descriptor: bool,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Simulate trajectories and run the empirical identity checks.
    Simulate {
        model: PathBuf,
        /// "policy:<file>", "uniform" or "forced:<c>".
        #[arg(long)]
        agent: String,
        #[arg(short = 'T', long, default_value_t = 1000)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Initial state (defaults to the first).
        #[arg(long)]
        s0: Option<String>,
        #[arg(long, value_enum)]
        check: Option<CheckArg>,
        /// Alternative model for the log-likelihood check.
        #[arg(long)]
        alt: Option<PathBuf>,
        /// Number of seeds for Monte-Carlo checks.
        #[arg(long, default_value_t = 200)]
        seeds: usize,
        /// Horizons for the navigation check.
        #[arg(long, value_delimiter = ',', default_values_t = vec![100usize, 1000, 10000])]
        grid: Vec<usize>,
        /// Exploration measure for the forced-explore agent (JSON map).
        #[arg(long)]
        mu: Option<PathBuf>,
        #[command(flatten)]
        out: OutputArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        let code = match &e {
            Error::Model(_) => 1,
            Error::NotConverged(_) | Error::Lp(_) => 3,
            _ => 2,
        };
        fail(code, e.to_string())
    }
}

// ---------------------------------------------------------------------------
// Helpers

fn read_to_string(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| fail(1, format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<Mdp, Failure> {
    let text = read_to_string(path)?;
    let model = Mdp::from_json(&text)?;
    let report = mdp::validate(&model);
    if !report.is_valid() {
        let details: Vec<String> = report.issues.iter().map(|i| i.message.clone()).collect();
        return Err(fail(2, format!("model validation failed: {}", details.join("; "))));
    }
    Ok(model)
}

fn load_policy(path: &Path, model: &Mdp) -> Result<Policy, Failure> {
    let text = read_to_string(path)?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| fail(1, format!("{}: {e}", path.display())))?;
    let obj = value
        .as_object()
        .ok_or_else(|| fail(1, "policy file must be a JSON object keyed by state"))?;
    let mut rows = Vec::with_capacity(model.num_states());
    for s in 0..model.num_states() {
        let name = model.state_name(s);
        let entry = obj
            .get(name)
            .ok_or_else(|| fail(2, format!("policy missing state {name:?}")))?;
        let mut row = vec![0.0; model.action_count(s)];
        match entry {
            Value::String(action) => {
                let local = model
                    .pairs_at(s)
                    .find(|&x| model.action_name(x) == action)
                    .map(|x| model.pair_action_local(x))
                    .ok_or_else(|| fail(2, format!("action {action:?} not available at {name:?}")))?;
                row[local] = 1.0;
            }
            Value::Object(weights) => {
                for (action, w) in weights {
                    let local = model
                        .pairs_at(s)
                        .find(|&x| model.action_name(x) == action)
                        .map(|x| model.pair_action_local(x))
                        .ok_or_else(|| {
                            fail(2, format!("action {action:?} not available at {name:?}"))
                        })?;
                    row[local] = w
                        .as_f64()
                        .ok_or_else(|| fail(1, "policy weights must be numbers"))?;
                }
            }
            _ => return Err(fail(1, "policy entries must be an action name or a weight map")),
        }
        rows.push(row);
    }
    Policy::new(rows, model).map_err(Failure::from)
}

fn load_measure(path: &Path, model: &Mdp) -> Result<PairMeasure, Failure> {
    let text = read_to_string(path)?;
    let map: BTreeMap<String, Value> =
        serde_json::from_str(&text).map_err(|e| fail(1, format!("{}: {e}", path.display())))?;
    let mut mu = PairMeasure::zeros(model.num_pairs());
    for (action, v) in map {
        let x = model
            .pair_by_action(&action)
            .ok_or_else(|| fail(2, format!("unknown action {action:?} in measure")))?;
        let value = match &v {
            Value::String(s) if s == "inf" => f64::INFINITY,
            other => other
                .as_f64()
                .ok_or_else(|| fail(1, "measure entries must be numbers or \"inf\""))?,
        };
        if value < 0.0 {
            return Err(fail(2, format!("negative measure entry at {action:?}")));
        }
        mu.set(x, value);
    }
    Ok(mu)
}

/// Round to 12 significant digits for stable reports.
fn sig12(x: f64) -> Value {
    if !x.is_finite() {
        return Value::String(if x > 0.0 { "inf".into() } else { "-inf".into() });
    }
    if x == 0.0 {
        return json!(0.0);
    }
    let magnitude = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(11 - magnitude);
    json!((x * scale).round() / scale)
}

fn measure_json(model: &Mdp, mu: &PairMeasure) -> Value {
    let mut map = Map::new();
    for x in 0..model.num_pairs() {
        map.insert(model.action_name(x).to_string(), sig12(mu.get(x)));
    }
    Value::Object(map)
}

fn emit(out: &OutputArgs, report: &Value) -> Result<(), Failure> {
    let text = if out.pretty {
        serde_json::to_string_pretty(report).expect("report serializes")
    } else {
        serde_json::to_string(report).expect("report serializes")
    };
    match &out.output {
        None => {
            println!("{text}");
            Ok(())
        }
        Some(path) => write_atomic(path, &text),
    }
}

fn write_atomic(path: &Path, text: &str) -> Result<(), Failure> {
    let tmp = path.with_extension("tmp");
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.write_all(b"\n")?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| fail(1, format!("{}: {e}", path.display())))
}

fn env_tolerance() -> Option<f64> {
    std::env::var("MDPLAB_TOL").ok().and_then(|s| s.parse::<f64>().ok()).filter(|&t| t >= 0.0)
}

fn lb_options(policies: &str) -> Result<LbOptions, Failure> {
    let policy_set = if policies == "all" {
        PolicySet::AllSuboptimal
    } else if let Some(k) = policies.strip_prefix("neighborhood:") {
        let k: usize =
            k.parse().map_err(|_| fail(1, "expected --policies neighborhood:<k>"))?;
        PolicySet::Neighborhood(k)
    } else {
        return Err(fail(1, "expected --policies all or neighborhood:<k>"));
    };
    let mut options = LbOptions { policy_set, ..LbOptions::default() };
    if let Some(t) = env_tolerance() {
        options.convergence_gap = t;
    }
    Ok(options)
}

fn solve_auto(model: &Mdp) -> Result<mdp::OptimalSolution, Failure> {
    let method = if mdp::det_policy_count(model) <= tol::ENUM_GUARD as u128 {
        SolveMethod::Enumerate
    } else {
        SolveMethod::PolicyIteration
    };
    mdp::solve_optimal(model, method).map_err(Failure::from)
}

// ---------------------------------------------------------------------------
// Commands

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Solve { model, method, out } => cmd_solve(&model, method, &out),
        Command::Lb { model, method, class, policies, emit_mu, out } => {
            cmd_lb(&model, method, class, &policies, emit_mu.as_deref(), &out)
        }
        Command::Confuse { model, policy, kappa, out } => {
            cmd_confuse(&model, &policy, kappa.as_deref(), &out)
        }
        Command::Contract { model, out } => cmd_contract(&model, &out),
        Command::Knapsack {
            values,
            weights,
            capacity,
            threshold,
            variant,
            emit_family,
            emit_descriptor,
            out,
        } => cmd_knapsack(
            values,
            weights,
            capacity,
            threshold,
            variant,
            emit_family.as_deref(),
            emit_descriptor,
            &out,
        ),
        Command::Simulate {
            model,
            agent,
            horizon,
            seed,
            s0,
            check,
            alt,
            seeds,
            grid,
            mu,
            out,
        } => cmd_simulate(
            &model,
            &agent,
            horizon,
            seed,
            s0.as_deref(),
            check,
            alt.as_deref(),
            seeds,
            &grid,
            mu.as_deref(),
            &out,
        ),
    }
}

fn cmd_solve(path: &Path, method: SolveMethodArg, out: &OutputArgs) -> Result<(), Failure> {
    let model = load_model(path)?;
    let method = match method {
        SolveMethodArg::Enumerate => SolveMethod::Enumerate,
        SolveMethodArg::PolicyIteration => SolveMethod::PolicyIteration,
    };
    let diameter = mdp::diameter(&model)?;
    let opt = mdp::solve_optimal(&model, method)?;
    let mut bias = Map::new();
    for s in 0..model.num_states() {
        bias.insert(model.state_name(s).to_string(), sig12(opt.bias[s]));
    }
    let mut gaps = Map::new();
    for x in 0..model.num_pairs() {
        gaps.insert(model.action_name(x).to_string(), sig12(opt.gaps[x]));
    }
    let names = |pairs: Vec<usize>| -> Vec<String> {
        pairs.into_iter().map(|x| model.action_name(x).to_string()).collect()
    };
    let report = json!({
        "gain": sig12(opt.gain),
        "bias": bias,
        "gaps": gaps,
        "span_bias": sig12(opt.span_bias),
        "diameter": sig12(diameter),
        "classification": {
            "optimal": names(opt.optimal_pair_list()),
            "weakly_optimal_only": names(opt.weak_only_pairs()),
            "suboptimal": names(opt.suboptimal_pairs()),
        },
    });
    emit(out, &report)
}

fn cmd_lb(
    path: &Path,
    method: LbMethodArg,
    class: LbClassArg,
    policies: &str,
    emit_mu: Option<&Path>,
    out: &OutputArgs,
) -> Result<(), Failure> {
    let model = load_model(path)?;
    let options = lb_options(policies)?;
    let report = match method {
        LbMethodArg::General => {
            let class = match class {
                LbClassArg::FixedKernel => LbClass::FixedKernelRewards,
                LbClassArg::Constructive => LbClass::Constructive,
            };
            lowerbound::lower_bound_general_with(&model, class, options)?
        }
        LbMethodArg::Bandit => lowerbound::bandit_closed_form(&model)?,
        LbMethodArg::Recurrent => lowerbound::recurrent_closed_form(&model)?,
        LbMethodArg::Switching => lowerbound::switching_bandit_bound(&model)?,
        LbMethodArg::NoNavigation => lowerbound::no_navigation_bound_with(&model, options)?,
    };
    if !report.converged {
        return Err(fail(
            3,
            format!("cutting-plane loop not converged after {} rounds", report.rounds),
        ));
    }
    if let Some(mu_path) = emit_mu {
        let text = serde_json::to_string_pretty(&measure_json(&model, &report.mu))
            .expect("measure serializes");
        write_atomic(mu_path, &text)?;
    }
    let actives: Vec<Value> = report
        .active_policies
        .iter()
        .map(|a| {
            json!({
                "policy": a.policy,
                "modified": a
                    .modified
                    .iter()
                    .map(|(p, kl)| json!({"pair": p, "kl": sig12(*kl)}))
                    .collect::<Vec<_>>(),
                "slack": sig12(a.slack),
            })
        })
        .collect();
    let value = json!({
        "value": sig12(report.value),
        "mu": measure_json(&model, &report.mu),
        "method": report.method,
        "active_policies": actives,
        "converged": report.converged,
        "rounds": report.rounds,
        "restricted": report.restricted,
    });
    emit(out, &value)
}

fn det_policy_from(policy: &Policy, model: &Mdp) -> Result<DetPolicy, Failure> {
    let mut choice = Vec::with_capacity(model.num_states());
    for s in 0..model.num_states() {
        let row = policy.row(s);
        let deterministic = row.iter().filter(|&&p| p > 0.0).count() == 1;
        if !deterministic {
            return Err(fail(2, "confuse requires a deterministic policy"));
        }
        choice.push(row.iter().position(|&p| p > 0.0).unwrap());
    }
    Ok(DetPolicy::new(choice))
}

fn cmd_confuse(
    model_path: &Path,
    policy_path: &Path,
    kappa_path: Option<&Path>,
    out: &OutputArgs,
) -> Result<(), Failure> {
    let model = load_model(model_path)?;
    let policy = load_policy(policy_path, &model)?;
    let det = det_policy_from(&policy, &model)?;
    let kappa = match kappa_path {
        Some(p) => load_measure(p, &model)?,
        None => PairMeasure::from_values(vec![1.0; model.num_pairs()])?,
    };
    let outcome = confusing::build_confusing(&model, &det, &kappa)?;
    let report = match outcome {
        BuildOutcome::ActuallyOptimal => json!({"outcome": "actually-optimal"}),
        BuildOutcome::UnconfusinglySuboptimal => json!({"outcome": "unconfusingly-suboptimal"}),
        BuildOutcome::Certificate(cert) => {
            let mods: Vec<Value> = cert
                .modified_pairs
                .iter()
                .zip(&cert.kl_costs)
                .map(|(&x, &kl)| {
                    let mut row = Map::new();
                    for (s, &p) in cert.modified.kernel_row(x).iter().enumerate() {
                        if p != 0.0 {
                            row.insert(cert.modified.state_name(s).to_string(), sig12(p));
                        }
                    }
                    json!({
                        "pair": model.action_name(x),
                        "kernel": row,
                        "reward": serde_json::to_value(cert.modified.reward(x)).unwrap(),
                        "kl": sig12(kl),
                    })
                })
                .collect();
            json!({
                "outcome": "certificate",
                "policy": cert.policy.describe(&model),
                "modified_pairs": mods,
                "gain_achieved": sig12(cert.gain_achieved),
                "gain_target": sig12(cert.gain_target),
                "info_upper_bound_at_kappa": sig12(cert.info_upper_bound(&kappa)),
                "used_fallback": cert.used_fallback,
            })
        }
    };
    emit(out, &report)
}

fn cmd_contract(path: &Path, out: &OutputArgs) -> Result<(), Failure> {
    let model = load_model(path)?;
    let opt = solve_auto(&model)?;
    let contracted = structure::contract(&model, &opt.optimal_pair_list())?;
    let mut state_map = Map::new();
    for s in 0..model.num_states() {
        state_map.insert(
            model.state_name(s).to_string(),
            Value::String(contracted.minor.state_name(contracted.state_map[s]).to_string()),
        );
    }
    let report = json!({
        "minor": serde_json::to_value(contracted.minor.to_wire()).unwrap(),
        "state_map": state_map,
        "contracted_pairs": contracted
            .contracted_pairs
            .iter()
            .map(|&x| model.action_name(x).to_string())
            .collect::<Vec<_>>(),
    });
    emit(out, &report)
}

#[allow(clippy::too_many_arguments)]
fn cmd_knapsack(
    values: Vec<u64>,
    weights: Vec<u64>,
    capacity: u64,
    threshold: u64,
    variant: VariantArg,
    emit_family: Option<&Path>,
    emit_descriptor: bool,
    out: &OutputArgs,
) -> Result<(), Failure> {
    let kp = KnapsackInstance::new(values, weights, capacity, threshold)?;
    let variant = match variant {
        VariantArg::ConfusingModel => WidgetVariant::ConfusingModel,
        VariantArg::Regret => WidgetVariant::Regret,
    };
    let family = hardness::build_widget_family(kp.clone(), variant)?;
    let oracle = hardness::kp_oracle(&kp)?;

    if let Some(dir) = emit_family {
        if family.n > 10 {
            return Err(fail(2, "family emission limited to n <= 10 (2^n files)"));
        }
        std::fs::create_dir_all(dir).map_err(|e| fail(1, format!("{}: {e}", dir.display())))?;
        for mask in 0u32..(1 << family.n) {
            let subset: Vec<usize> =
                (1..=family.n).filter(|&k| mask & (1 << (k - 1)) != 0).collect();
            let m = family.model(&subset)?;
            let name = if subset.is_empty() {
                "M_empty.json".to_string()
            } else {
                format!(
                    "M_{}.json",
                    subset.iter().map(|k| k.to_string()).collect::<Vec<_>>().join("-")
                )
            };
            write_atomic(&dir.join(name), &m.to_json(true))?;
        }
    }

    let decision = match variant {
        WidgetVariant::ConfusingModel => {
            match hardness::decide_confusing_model(&family, family.alpha, family.beta)? {
                ConfusingDecision::Yes { witness } => json!({"answer": "yes", "witness": witness}),
                ConfusingDecision::No => json!({"answer": "no"}),
            }
        }
        WidgetVariant::Regret => match hardness::decide_regret(&family, family.rho)? {
            RegretDecision::Yes { mu } => {
                json!({"answer": "yes", "witness_mu": measure_json(&family.reference, &mu)})
            }
            RegretDecision::No { violating } => {
                json!({"answer": "no", "violating_subset": violating})
            }
        },
    };

    let mut report = json!({
        "variant": match variant {
            WidgetVariant::ConfusingModel => "confusing-model",
            WidgetVariant::Regret => "regret",
        },
        "n": family.n,
        "constants": {
            "eps": sig12(family.eps),
            "delta": sig12(family.delta),
            "sigma_sq": sig12(family.sigma_sq),
            "theta": family.theta.map(sig12).unwrap_or(Value::Null),
            "alpha": sig12(family.alpha),
            "beta": sig12(family.beta),
            "rho": sig12(family.rho),
        },
        "decision": decision,
        "kp_oracle": oracle.map(|s| json!(s)).unwrap_or(Value::Null),
    });
    if emit_descriptor {
        let mut items = Vec::new();
        for k in 1..=family.n {
            let selected = family.model(&[k])?;
            let x = selected.pair_by_action(&format!("choose-{k}-go")).unwrap();
            let mut row = Map::new();
            for (s, &p) in selected.kernel_row(x).iter().enumerate() {
                if p != 0.0 {
                    row.insert(selected.state_name(s).to_string(), sig12(p));
                }
            }
            items.push(json!({
                "item": k,
                "pair": format!("choose-{k}-go"),
                "kernel": row,
                "reward": serde_json::to_value(selected.reward(x)).unwrap(),
            }));
        }
        report["descriptor"] = json!({
            "reference": serde_json::to_value(family.reference.to_wire()).unwrap(),
            "modifications": items,
        });
    }
    emit(out, &report)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    model_path: &Path,
    agent_spec: &str,
    horizon: usize,
    seed: u64,
    s0: Option<&str>,
    check: Option<CheckArg>,
    alt: Option<&Path>,
    seeds: usize,
    grid: &[usize],
    mu_path: Option<&Path>,
    out: &OutputArgs,
) -> Result<(), Failure> {
    let model = load_model(model_path)?;
    let s0 = match s0 {
        None => 0,
        Some(name) => model
            .state_index(name)
            .ok_or_else(|| fail(2, format!("unknown initial state {name:?}")))?,
    };

    // The forced-explore agent borrows its measure; keep owners alive here.
    let mut policy_storage: Option<Policy> = None;
    let mut mu_storage: Option<PairMeasure> = None;
    if let Some(rest) = agent_spec.strip_prefix("policy:") {
        policy_storage = Some(load_policy(Path::new(rest), &model)?);
    } else if let Some(rest) = agent_spec.strip_prefix("forced:") {
        let _c: f64 = rest.parse().map_err(|_| fail(1, "expected --agent forced:<c>"))?;
        mu_storage = Some(match mu_path {
            Some(p) => load_measure(p, &model)?,
            None => lowerbound::lower_bound_general(&model, LbClass::FixedKernelRewards)?.mu,
        });
    } else if agent_spec != "uniform" {
        return Err(fail(1, "expected --agent policy:<file>, uniform or forced:<c>"));
    }
    let agent = if let Some(policy) = &policy_storage {
        Agent::Policy(policy)
    } else if let Some(mu) = &mu_storage {
        let c: f64 = agent_spec.strip_prefix("forced:").unwrap().parse().unwrap();
        Agent::ForcedExplore { mu, c }
    } else {
        Agent::UniformRandom
    };

    let seed_list: Vec<u64> = (0..seeds as u64).map(|i| seed.wrapping_add(i)).collect();
    let report = match check {
        None => {
            let traj = simulator::simulate(&model, &agent, s0, horizon, seed)?;
            let lines: Vec<String> = traj
                .steps
                .iter()
                .enumerate()
                .map(|(t, step)| {
                    serde_json::to_string(&json!({
                        "t": t + 1,
                        "s": model.state_name(step.state),
                        "a": model.action_name(step.pair),
                        "r": step.reward,
                        "s_next": model.state_name(step.next_state),
                    }))
                    .expect("step serializes")
                })
                .collect();
            let text = lines.join("\n");
            return match &out.output {
                None => {
                    println!("{text}");
                    Ok(())
                }
                Some(path) => write_atomic(path, &text),
            };
        }
        Some(CheckArg::Quasiflow) => {
            let opt = solve_auto(&model)?;
            let closed = opt.optimal_pair_list();
            let traj = simulator::simulate(&model, &agent, s0, horizon, seed)?;
            let max = simulator::quasi_flow_max_residual(&traj, &model, &closed)?;
            let finals = simulator::quasi_flow_residuals(&traj, &model, &closed, horizon)?;
            json!({
                "check": "quasiflow",
                "closed_set": closed
                    .iter()
                    .map(|&x| model.action_name(x).to_string())
                    .collect::<Vec<_>>(),
                "max_residual": max,
                "final_residuals": finals,
                "pass": max == 0,
            })
        }
        Some(CheckArg::Pseudoregret) => {
            let Some(policy) = &policy_storage else {
                return Err(fail(2, "pseudoregret check requires --agent policy:<file>"));
            };
            let r = simulator::pseudo_regret_check(&model, policy, s0, horizon, &seed_list)?;
            json!({
                "check": "pseudoregret",
                "regret_mean": sig12(r.regret_mean),
                "gap_sum_mean": sig12(r.gap_sum_mean),
                "diff": sig12(r.diff),
                "standard_error": sig12(r.standard_error),
                "span_bias": sig12(r.span_bias),
                "bound": sig12(r.bound),
                "pass": r.pass,
            })
        }
        Some(CheckArg::Navigation) => {
            let points = simulator::navigation_distance(&model, &agent, s0, grid, &seed_list)?;
            json!({
                "check": "navigation",
                "points": points
                    .iter()
                    .map(|p| json!({
                        "horizon": p.horizon,
                        "distance": p.distance.map(sig12).unwrap_or(Value::Null),
                    }))
                    .collect::<Vec<_>>(),
            })
        }
        Some(CheckArg::Loglik) => {
            let Some(alt_path) = alt else {
                return Err(fail(2, "loglik check requires --alt <model.json>"));
            };
            let alt_model = load_model(alt_path)?;
            let Some(policy) = &policy_storage else {
                return Err(fail(2, "loglik check requires --agent policy:<file>"));
            };
            let r = simulator::log_likelihood_check(
                &model, &alt_model, policy, s0, horizon, &seed_list,
            )?;
            json!({
                "check": "loglik",
                "mean_ratio": sig12(r.mean_ratio),
                "mean_visit_kl": sig12(r.mean_visit_kl),
                "diff": sig12(r.diff),
                "standard_error": sig12(r.standard_error),
                "pass": r.pass,
            })
        }
    };
    emit(out, &report)
}
