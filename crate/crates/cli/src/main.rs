//! `nmk`: analysis, estimation, protocol simulation and invariant fuzzing
//! for tripartite quantum states. Reports go to stdout as JSON, a short
//! summary to stderr.
//!
//! Exit codes: 0 success, 1 invariant violation, 2 input error, 3 budget.

mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use nmk_core::csquashed::{self, EsqcConfig, Lemma5Config};
use nmk_core::entropy::{EntropyReport, Partition};
use nmk_core::fuzz::{self, FuzzConfig, Suite};
use nmk_core::markov::{self, MarkovComponents, DEFAULT_MARKOV_TOL};
use nmk_core::nmf::{self, EstimateConfig};
use nmk_core::scenario::{self, Scenario, Step};
use nmk_core::zoo::{self, ZooItem};
use nmk_core::{io, DensityState, Error, Party, Register, RegisterLayout};

use report::{status, to_value, Clock, RunReport, Table};

#[derive(Parser)]
#[command(name = "nmk", version, about = "Non-Markovianity measures for tripartite quantum states")]
struct Cli {
    /// Master seed; drawn at random and printed when absent.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Also write a plot-ready CSV table here.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Entropies, CQMI and the Markov verdict of a state.
    Analyze {
        /// State file or `zoo:name?param=value`.
        state: String,
        /// Alice's registers (default: by party).
        #[arg(long, value_delimiter = ',')]
        a: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        b: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        e: Vec<String>,
        /// CQMI threshold of the Markov verdict.
        #[arg(long, default_value_t = DEFAULT_MARKOV_TOL)]
        tol: f64,
    },
    /// Bracket the non-Markovianity of formation.
    Nmf {
        state: String,
        /// Number of flag values (default: rank).
        #[arg(long)]
        k: Option<usize>,
        /// Extension sizes `a,b,e`; repeat for a schedule.
        #[arg(long, value_parser = parse_triple)]
        ext: Vec<[usize; 3]>,
        #[arg(long, default_value_t = 16)]
        restarts: usize,
        #[arg(long, default_value_t = 400)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Upper-bound the c-squashed entanglement of a bipartite state.
    Esqc {
        state: String,
        #[arg(long)]
        k: Option<usize>,
        /// Sizes of the traced register, e.g. `1,2`.
        #[arg(long = "e", value_delimiter = ',')]
        e: Vec<usize>,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 400)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        /// Also compare with the extension-squashed bound.
        #[arg(long)]
        lemma5: bool,
    },
    /// Assemble a Markov chain from components (JSON file or zoo ref).
    MarkovBuild {
        components: String,
        /// Write the state file here.
        #[arg(long)]
        write_state: Option<PathBuf>,
        /// Write the script that builds the chain from `zoo:dummy`.
        #[arg(long)]
        emit_script: Option<PathBuf>,
    },
    /// Run a step script (JSON file or `zoo:sII_E_script?class=...`).
    Script {
        script: String,
        /// Initial state; optional for zoo scripts.
        state: Option<String>,
    },
    /// Randomized invariant suites.
    Fuzz {
        /// ssa, lemma1, p_suite or markov_closure.
        suite: Suite,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Counterexamples are written here when found.
        #[arg(long, default_value = "nmk-counterexamples")]
        cex_dir: PathBuf,
    },
    /// The state catalog.
    Zoo {
        #[command(subcommand)]
        action: ZooCmd,
    },
}

#[derive(Subcommand)]
enum ZooCmd {
    /// Print the manifest.
    List,
    /// Print the state a reference resolves to.
    Show { reference: String },
}

fn parse_triple(s: &str) -> Result<[usize; 3], String> {
    let v: Vec<usize> = s.split(',').map(|x| x.trim().parse().map_err(|_| format!("`{x}` is not a size"))).collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| "expected three sizes a,b,e".to_string())
}

enum Failure {
    Violation,
    Input(String),
    Budget(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::BudgetExceeded { .. } => Failure::Budget(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Input(format!("csv: {e}"))
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(format!("io: {e}"))
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("nmk: --jobs: {e}");
            return ExitCode::from(2);
        }
    }
    let seed = cli.seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("nmk: no --seed given, using --seed {s}");
        s
    });
    let command: Vec<String> = std::env::args().skip(1).collect();
    let ctx = Ctx { seed, command, csv: cli.csv.clone(), clock: Clock::start() };
    match run(&ctx, cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violation) => ExitCode::from(1),
        Err(Failure::Input(m)) => {
            eprintln!("nmk: error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Budget(m)) => {
            eprintln!("nmk: budget: {m} (raise NMK_DIM_BUDGET to allow larger spaces)");
            ExitCode::from(3)
        }
    }
}

struct Ctx {
    seed: u64,
    command: Vec<String>,
    csv: Option<PathBuf>,
    clock: Clock,
}

impl Ctx {
    fn emit(&self, mut config: Value, status: Option<&'static str>, results: Value, counterexamples: Vec<Value>, table: Table) -> Outcome {
        if let (Some(_), Some(c)) = (status, config.as_object_mut()) {
            c.insert("certified_gap".into(), json!(report::CERTIFIED_GAP));
        }
        let r = RunReport {
            command: self.command.clone(),
            seed: self.seed,
            config,
            status,
            results,
            counterexamples,
            timings: self.clock.timings(),
        };
        println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"));
        if let Some(p) = &self.csv {
            table.write(p)?;
        }
        Ok(())
    }
}

/// A resolved input: the state and, for Markov inputs, its components.
struct Input {
    state: DensityState,
    components: Option<MarkovComponents>,
}

fn zoo_item(r: &str, seed: u64) -> Result<ZooItem, Error> {
    let (name, mut params) = zoo::parse_ref(r)?;
    let seed = match params.remove("seed") {
        Some(v) => v.parse().map_err(|_| Error::BadParams(format!("seed `{v}` is not an integer")))?,
        None => seed,
    };
    zoo::zoo(&name, &params, Some(seed))
}

fn load(r: &str, seed: u64) -> Result<Input, Error> {
    if r.starts_with("zoo:") {
        let item = zoo_item(r, seed)?;
        let components = match &item {
            ZooItem::Markov { components } => Some(components.clone()),
            _ => None,
        };
        return Ok(Input { state: item.state()?, components });
    }
    let text = std::fs::read_to_string(r)?;
    match io::parse_state(&text) {
        Ok(state) => Ok(Input { state, components: None }),
        Err(state_err) => match serde_json::from_str::<MarkovComponents>(&text) {
            Ok(c) => {
                let c = MarkovComponents::new(c.entries)?;
                Ok(Input { state: markov::build_markov(&c)?, components: Some(c) })
            }
            Err(_) => Err(state_err),
        },
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.12}")
}

fn run(ctx: &Ctx, cmd: Cmd) -> Outcome {
    match cmd {
        Cmd::Analyze { state, a, b, e, tol } => analyze(ctx, &state, a, b, e, tol),
        Cmd::Nmf { state, k, ext, restarts, max_iters, tol } => {
            let mut cfg = EstimateConfig { k, restarts, max_iters, tol, seed: ctx.seed, ..EstimateConfig::default() };
            if !ext.is_empty() {
                cfg.ext_schedule = ext;
            }
            run_nmf(ctx, &state, cfg)
        }
        Cmd::Esqc { state, k, e, restarts, max_iters, tol, lemma5 } => {
            let mut cfg = EsqcConfig { k, restarts, max_iters, tol, seed: ctx.seed, ..EsqcConfig::default() };
            if !e.is_empty() {
                cfg.e_schedule = e;
            }
            run_esqc(ctx, &state, cfg, lemma5)
        }
        Cmd::MarkovBuild { components, write_state, emit_script } => markov_build(ctx, &components, write_state, emit_script),
        Cmd::Script { script, state } => run_script(ctx, &script, state.as_deref()),
        Cmd::Fuzz { suite, trials, cex_dir } => run_fuzz(ctx, suite, trials, &cex_dir),
        Cmd::Zoo { action } => match action {
            ZooCmd::List => {
                let mut t = Table::new(&["name", "kind", "m_i"]);
                for e in zoo::manifest() {
                    t.push(vec![e.name.clone(), format!("{:?}", e.kind).to_lowercase(), e.m_i.to_string()]);
                }
                eprintln!("{} catalog entries", zoo::manifest().len());
                ctx.emit(Value::Null, None, to_value(&zoo::manifest()), vec![], t)
            }
            ZooCmd::Show { reference } => {
                let item = zoo_item(&reference, ctx.seed)?;
                let s = item.state()?;
                eprintln!("{reference}: registers {:?}", s.layout().labels());
                ctx.emit(Value::Null, None, json!({ "item": to_value(&item), "state": to_value(&s) }), vec![], Table::new(&[]))
            }
        },
    }
}

fn analyze(ctx: &Ctx, r: &str, a: Vec<String>, b: Vec<String>, e: Vec<String>, tol: f64) -> Outcome {
    let input = load(r, ctx.seed)?;
    let s = &input.state;
    let p = if a.is_empty() && b.is_empty() && e.is_empty() { Partition::from_parties(s.layout()) } else { Partition::new(&a, &b, &e)? };
    let entropies = EntropyReport::compute(s, &p)?;
    let score = markov::markov_score(s, &p, tol)?;
    let verdict = if score.verdict { "markov" } else { "non-markov" };
    eprintln!("M_I = {:.9} bits, CQMI = {:.9} bits, verdict {verdict}", entropies.m_i, entropies.i_a_b_given_e);
    let mut t = Table::new(&["quantity", "bits"]);
    for (name, v) in [
        ("S(A)", entropies.s_a),
        ("S(B)", entropies.s_b),
        ("S(E)", entropies.s_e),
        ("S(ABE)", entropies.s_abe),
        ("I(A:B)", entropies.i_a_b),
        ("I(A:B|E)", entropies.i_a_b_given_e),
        ("M_I", entropies.m_i),
    ] {
        t.push(vec![name.into(), fmt(v)]);
    }
    ctx.emit(
        json!({ "tol": tol, "partition": to_value(&p) }),
        None,
        json!({ "entropy": to_value(&entropies), "markov": to_value(&score), "verdict": verdict }),
        vec![],
        t,
    )
}

fn run_nmf(ctx: &Ctx, r: &str, mut cfg: EstimateConfig) -> Outcome {
    let input = load(r, ctx.seed)?;
    let mut notes = vec!["M_F^inf and M_C are regularized quantities; only the single-copy M_F is bracketed".to_string()];
    if let Some(c) = &input.components {
        cfg.seeds.push(nmf::markov_witness(c)?);
        notes.push("seeded with the witness built from the Markov components".into());
    }
    let est = nmf::estimate(&input.state, &cfg)?;
    let st = status(est.gap);
    eprintln!("M_F in [{:.9}, {:.9}] bits, gap {:.3e}: {st}", est.lower_bits, est.upper_bits, est.gap);
    if est.budget_exhausted {
        eprintln!("warning: extensions {:?} skipped by the dimension budget", est.skipped);
    }
    let mut t = Table::new(&["restart_id", "kind", "a", "b", "e", "k", "objective", "iterations"]);
    for e in &est.trace {
        t.push(vec![
            e.restart_id.to_string(),
            e.kind.clone(),
            e.ext.a.to_string(),
            e.ext.b.to_string(),
            e.ext.e.to_string(),
            e.ext.k.to_string(),
            fmt(e.objective),
            e.iterations.to_string(),
        ]);
    }
    let mut results = to_value(&est);
    results["notes"] = to_value(&notes);
    ctx.emit(to_value(&cfg), Some(st), results, vec![], t)?;
    if est.budget_exhausted {
        // the report is still printed; the exit code says it is best-so-far
        return Err(Failure::Budget(format!("extensions {:?} exceed the dimension budget", est.skipped)));
    }
    Ok(())
}

fn run_esqc(ctx: &Ctx, r: &str, cfg: EsqcConfig, lemma5: bool) -> Outcome {
    let omega = load(r, ctx.seed)?.state;
    // pure states have a single decomposition, so the bound is exact
    let exact = if omega.rank() == 1 {
        let (a, b) = (omega.layout().labels_of(Party::Alice), omega.layout().labels_of(Party::Bob));
        Some(0.5 * nmk_core::entropy::mutual_information(&omega, &a, &b)?)
    } else {
        None
    };
    let (results, est, config) = if lemma5 {
        let l5 = csquashed::lemma5_check(&omega, &Lemma5Config { esqc: cfg.clone(), ..Lemma5Config::default() })?;
        eprintln!("E_sq,c <= {:.9}, M_sq <= {:.9}, gap {:.3e}", l5.esqc_ub, l5.msq_ub, l5.gap);
        let est = l5.esqc.clone();
        (to_value(&l5), est, json!({ "esqc": to_value(&cfg), "nmf": to_value(&Lemma5Config::default().nmf) }))
    } else {
        let est = csquashed::estimate_esqc(&omega, &cfg)?;
        eprintln!("E_sq,c <= {:.9} bits", est.upper_bits);
        (to_value(&est), est, to_value(&cfg))
    };
    let lower = exact.unwrap_or(0.0);
    let st = status(est.upper_bits - lower);
    eprintln!("bracket [{lower:.9}, {:.9}]: {st}", est.upper_bits);
    let mut results = results;
    results["lower_bits"] = json!(lower);
    let mut t = Table::new(&["restart_id", "kind", "e", "k", "objective", "iterations"]);
    for e in &est.trace {
        t.push(vec![e.restart_id.to_string(), e.kind.clone(), e.e.to_string(), e.k.to_string(), fmt(e.objective), e.iterations.to_string()]);
    }
    ctx.emit(config, Some(st), results, vec![], t)
}

fn dummy_layout() -> RegisterLayout {
    RegisterLayout::new(vec![Register::new("A", 1, Party::Alice), Register::new("B", 1, Party::Bob), Register::new("E", 1, Party::Eve)])
        .expect("distinct labels")
}

fn markov_build(ctx: &Ctx, r: &str, write_state: Option<PathBuf>, emit_script: Option<PathBuf>) -> Outcome {
    let input = load(r, ctx.seed)?;
    let c = input.components.ok_or_else(|| Failure::Input(format!("`{r}` does not describe Markov components")))?;
    let s = &input.state;
    let score = markov::markov_score(s, &Partition::from_parties(s.layout()), DEFAULT_MARKOV_TOL)?;
    eprintln!("built {:?}, CQMI = {:.3e} bits", s.layout().labels(), score.cqmi_bits);
    if let Some(p) = write_state {
        std::fs::write(p, io::state_to_json(s))?;
    }
    if let Some(p) = emit_script {
        let steps = scenario::prop1_script(&c, &dummy_layout())?;
        std::fs::write(p, serde_json::to_string_pretty(&steps).expect("steps serialize"))?;
    }
    let mut t = Table::new(&["cqmi_bits", "recovery_fidelity"]);
    t.push(vec![fmt(score.cqmi_bits), fmt(score.recovery_fidelity)]);
    ctx.emit(
        Value::Null,
        None,
        json!({ "dims": to_value(&c.dims()?), "state": to_value(s), "score": to_value(&score) }),
        vec![],
        t,
    )
}

fn run_script(ctx: &Ctx, script: &str, state: Option<&str>) -> Outcome {
    let (steps, initial): (Vec<Step>, Option<DensityState>) = if script.starts_with("zoo:") {
        match zoo_item(script, ctx.seed)? {
            ZooItem::Scenario { initial, steps } => (steps, Some(initial)),
            _ => return Err(Failure::Input(format!("`{script}` is not a script"))),
        }
    } else {
        (scenario::parse_script(&std::fs::read_to_string(script)?)?, None)
    };
    let initial = match (state, initial) {
        (Some(r), _) => load(r, ctx.seed)?.state,
        (None, Some(s)) => s,
        (None, None) => return Err(Failure::Input("a script file needs an initial state".into())),
    };
    let run = scenario::run_script(&Scenario::new(initial), &steps)?;
    let out = &run.scenario.state;
    let score = markov::markov_score(out, &Partition::from_parties(out.layout()), DEFAULT_MARKOV_TOL)?;
    let l = run.scenario.ledger;
    eprintln!(
        "{:?}: M_I {:.9} -> {:.9}, Qc = {} bits, C_down = {} bits, output {}",
        run.class,
        run.m_i_before,
        run.m_i_after,
        l.qc_bits,
        l.cdown_bits,
        if score.verdict { "markov" } else { "non-markov" }
    );
    let mut t = Table::new(&["step", "kind", "m_i_after", "qc_bits", "cdown_bits"]);
    for (i, s) in run.steps.iter().enumerate() {
        t.push(vec![i.to_string(), s.kind.clone(), fmt(s.m_i_after), fmt(s.ledger.qc_bits), fmt(s.ledger.cdown_bits)]);
    }
    ctx.emit(
        Value::Null,
        None,
        json!({
            "class": to_value(&run.class),
            "ledger": to_value(&l),
            "m_i_before": run.m_i_before,
            "m_i_after": run.m_i_after,
            "markov": to_value(&score),
            "steps": to_value(&run.steps),
            "state": to_value(out),
        }),
        vec![],
        t,
    )
}

fn run_fuzz(ctx: &Ctx, suite: Suite, trials: usize, cex_dir: &Path) -> Outcome {
    let cfg = FuzzConfig { trials, seed: ctx.seed, ..FuzzConfig::default() };
    let rep = fuzz::run_suite(suite, &cfg)?;
    eprintln!("{suite}: {} passed, {} failed", rep.passed, rep.failed);
    let mut files = Vec::new();
    if !rep.counterexamples.is_empty() {
        std::fs::create_dir_all(cex_dir)?;
        for (i, c) in rep.counterexamples.iter().enumerate() {
            let p = cex_dir.join(format!("{suite}-{}-{i}.json", ctx.seed));
            std::fs::write(&p, serde_json::to_string_pretty(c).expect("counterexample serializes"))?;
            eprintln!("counterexample written to {}", p.display());
            files.push(p.display().to_string());
        }
    }
    let mut t = Table::new(&["check", "passed", "failed"]);
    for c in &rep.checks {
        t.push(vec![c.check.clone(), c.passed.to_string(), c.failed.to_string()]);
    }
    let cex = rep.counterexamples.iter().map(to_value).collect();
    let mut results = to_value(&rep);
    if let Some(obj) = results.as_object_mut() {
        obj.remove("counterexamples");
        obj.insert("counterexample_files".into(), to_value(&files));
    }
    ctx.emit(to_value(&cfg), None, results, cex, t)?;
    if rep.ok() {
        Ok(())
    } else {
        Err(Failure::Violation)
    }
}
