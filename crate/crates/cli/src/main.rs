//! Command-line front end. Exit codes: 0 on success, 1 on negative
//! verification outcomes (threshold no/unknown, invalid certificate,
//! invalid chain file), 2 on usage errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};
use serde_json::json;

use privdist_core::fixpoint::{
    delta_bound, delta_bound_for_epsilon, exact_value, threshold, Budget, Certificate,
    CertificateFailure, DeltaReport, ThresholdResult,
};
use privdist_core::kantorovich::KantorovichMode;
use privdist_core::lmc::{trace_string, HorizonOptions, LmcError, StateId};
use privdist_core::modelgen::{generate_dining, generate_random, DiningConfig, RandomConfig};
use privdist_core::smt::{export_lfp_formula, export_threshold_formula};
use privdist_core::tv::{tv_lower_bound_for_pair, Direction};
use privdist_core::{Alpha, Lmc, Rational};

const EXPLOSION_LIMIT_VAR: &str = "PRIVDIST_EXPLOSION_LIMIT";

/// Certified privacy analysis of labelled Markov chains.
#[derive(Parser)]
#[command(name = "privdist", version)]
struct Cli {
    /// Emit machine-readable JSON instead of the human summary.
    #[arg(long, global = true)]
    json: bool,

    /// Cap the worker thread count. Results are identical for any value.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a chain file and report its invariants.
    Validate {
        file: PathBuf,
        /// Dump the chain in Graphviz DOT format instead of the report.
        #[arg(long)]
        dot: bool,
    },

    /// Print the bisimilarity partition of a chain.
    Bisim { file: PathBuf },

    /// Resolve the distance of one state pair at a fixed skew.
    Distance {
        file: PathBuf,
        /// Skew factor, a rational at least 1.
        #[arg(long, value_name = "RAT")]
        alpha: Rational,
        /// State pair as NAME,NAME.
        #[arg(long, value_name = "S,S'")]
        pair: String,
        #[arg(long, value_enum, default_value_t = ModeArg::Primal)]
        mode: ModeArg,
        #[arg(long, value_name = "N")]
        max_iters: Option<usize>,
        #[arg(long, value_name = "RAT")]
        stop_gap: Option<Rational>,
        /// Write the upper-bound certificate to this file.
        #[arg(long, value_name = "FILE")]
        cert_out: Option<PathBuf>,
    },

    /// Decide whether the distance of a pair is at most a threshold.
    Threshold {
        file: PathBuf,
        /// Skew factor, a rational at least 1.
        #[arg(long, value_name = "RAT")]
        alpha: Rational,
        /// State pair as NAME,NAME.
        #[arg(long, value_name = "S,S'")]
        pair: String,
        /// Threshold in [0, 1].
        #[arg(long, value_name = "RAT")]
        theta: Rational,
        #[arg(long, value_enum, default_value_t = ModeArg::Primal)]
        mode: ModeArg,
        #[arg(long, value_name = "N")]
        max_iters: Option<usize>,
        #[arg(long, value_name = "RAT")]
        stop_gap: Option<Rational>,
        /// Write the certificate or refutation evidence to this file.
        #[arg(long, value_name = "FILE")]
        evidence_out: Option<PathBuf>,
    },

    /// Re-check a distance certificate against a chain.
    Certify {
        file: PathBuf,
        /// Certificate file to verify.
        #[arg(long, value_name = "FILE")]
        cert: PathBuf,
    },

    /// Certified per-pair delta bounds at a fixed skew or epsilon.
    #[command(group(ArgGroup::new("skew").required(true).args(["alpha", "epsilon"])))]
    DeltaBound {
        file: PathBuf,
        /// Skew factor, a rational at least 1.
        #[arg(long, value_name = "RAT")]
        alpha: Option<Rational>,
        /// Privacy parameter; the skew becomes a rational lower bound on
        /// exp(epsilon).
        #[arg(long, value_name = "RAT")]
        epsilon: Option<Rational>,
        /// Pairs as NAME,NAME joined by semicolons.
        #[arg(long, value_name = "LIST")]
        pairs: String,
        #[arg(long, value_enum, default_value_t = ModeArg::Primal)]
        mode: ModeArg,
        #[arg(long, value_name = "N")]
        max_iters: Option<usize>,
        #[arg(long, value_name = "RAT")]
        stop_gap: Option<Rational>,
        /// Write the upper-bound certificate to this file.
        #[arg(long, value_name = "FILE")]
        cert_out: Option<PathBuf>,
    },

    /// Finite-horizon lower bound on the skewed total variation of a pair.
    TvLower {
        file: PathBuf,
        /// Skew factor, a rational at least 1.
        #[arg(long, value_name = "RAT")]
        alpha: Rational,
        /// State pair as NAME,NAME.
        #[arg(long, value_name = "S,S'")]
        pair: String,
        /// Trace length of the expansion.
        #[arg(long, value_name = "H")]
        horizon: usize,
        /// List the traces of the maximizing event.
        #[arg(long)]
        show_event: bool,
    },

    /// Generate a chain and print it to stdout.
    #[command(subcommand)]
    Gen(GenCommand),

    /// Print an SMT-LIB script characterizing distances of a chain.
    #[command(group(ArgGroup::new("formula").required(true).args(["lfp", "threshold"])))]
    ExportSmt {
        file: PathBuf,
        /// Skew factor, a rational at least 1.
        #[arg(long, value_name = "RAT")]
        alpha: Rational,
        /// Script whose unique model is the full distance matrix.
        #[arg(long)]
        lfp: bool,
        /// Satisfiability query for one pair, as NAME,NAME,THETA.
        #[arg(long, value_name = "S,S',THETA")]
        threshold: Option<String>,
    },
}

#[derive(Subcommand)]
enum GenCommand {
    /// Dining-cryptographers chain covering both payer scenarios.
    Dc {
        /// Number of participants, at least 2.
        #[arg(long, value_name = "N")]
        n: usize,
        /// Coin bias, strictly between 0 and 1.
        #[arg(long, value_name = "RAT")]
        p: Rational,
        /// Write the chain to FILE instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Seeded random chain.
    Random {
        #[arg(long, value_name = "N")]
        states: usize,
        /// Alphabet size.
        #[arg(long, value_name = "K")]
        alphabet: usize,
        /// Fraction of states reachable per row, in (0, 1].
        #[arg(long, value_name = "RAT")]
        density: Rational,
        #[arg(long, value_name = "X")]
        seed: u64,
        /// Write the chain to FILE instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Primal,
    Dual,
}

impl From<ModeArg> for KantorovichMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Primal => KantorovichMode::Primal,
            ModeArg::Dual => KantorovichMode::Dual,
        }
    }
}

struct UsageError(String);

impl<S: Into<String>> From<S> for UsageError {
    fn from(s: S) -> Self {
        UsageError(s.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(UsageError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode, UsageError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err("--threads must be at least 1".into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| format!("cannot configure {n} threads: {e}"))?;
    }
    let json = cli.json;
    match &cli.command {
        Command::Validate { file, dot } => cmd_validate(file, *dot, json),
        Command::Bisim { file } => cmd_bisim(file, json),
        Command::Distance {
            file,
            alpha,
            pair,
            mode,
            max_iters,
            stop_gap,
            cert_out,
        } => cmd_distance(
            file,
            alpha,
            pair,
            (*mode).into(),
            budget(*max_iters, stop_gap.as_ref())?,
            cert_out.as_deref(),
            json,
        ),
        Command::Threshold {
            file,
            alpha,
            pair,
            theta,
            mode,
            max_iters,
            stop_gap,
            evidence_out,
        } => cmd_threshold(
            file,
            alpha,
            pair,
            theta,
            (*mode).into(),
            budget(*max_iters, stop_gap.as_ref())?,
            evidence_out.as_deref(),
            json,
        ),
        Command::Certify { file, cert } => cmd_certify(file, cert, json),
        Command::DeltaBound {
            file,
            alpha,
            epsilon,
            pairs,
            mode,
            max_iters,
            stop_gap,
            cert_out,
        } => cmd_delta_bound(
            file,
            alpha.as_ref(),
            epsilon.as_ref(),
            pairs,
            (*mode).into(),
            budget(*max_iters, stop_gap.as_ref())?,
            cert_out.as_deref(),
            json,
        ),
        Command::TvLower {
            file,
            alpha,
            pair,
            horizon,
            show_event,
        } => cmd_tv_lower(file, alpha, pair, *horizon, *show_event, json),
        Command::Gen(gen) => cmd_gen(gen, json),
        Command::ExportSmt {
            file,
            alpha,
            lfp,
            threshold,
        } => cmd_export_smt(file, alpha, *lfp, threshold.as_deref(), json),
    }
}

// ---------------------------------------------------------------------------
// Subcommands

fn cmd_validate(file: &Path, dot: bool, json: bool) -> Result<ExitCode, UsageError> {
    let text = read_file(file)?;
    match parse_chain(&text) {
        Ok(chain) => {
            let transitions: usize = (0..chain.num_states()).map(|s| chain.row(s).len()).sum();
            if json {
                let mut v = json!({
                    "valid": true,
                    "states": chain.num_states(),
                    "alphabet": chain.alphabet(),
                    "transitions": transitions,
                });
                if dot {
                    v["dot"] = json!(chain.to_dot());
                }
                emit(&v);
            } else if dot {
                print!("{}", chain.to_dot());
            } else {
                println!(
                    "ok: {} states, {} labels, {} transitions",
                    chain.num_states(),
                    chain.alphabet().len(),
                    transitions
                );
                println!("alphabet: {}", chain.alphabet().join(" "));
                println!("all rows sum to 1");
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            if json {
                emit(&json!({ "valid": false, "error": e.to_string() }));
            } else {
                println!("invalid: {e}");
            }
            Ok(ExitCode::from(1))
        }
    }
}

fn cmd_bisim(file: &Path, json: bool) -> Result<ExitCode, UsageError> {
    let chain = load_chain(file)?;
    let partition = chain.bisimilarity_partition();
    // Lexicographic state names inside each block, blocks by first member.
    let mut blocks: Vec<Vec<&str>> = partition
        .blocks()
        .iter()
        .map(|b| {
            let mut names: Vec<&str> = b.iter().map(|&s| chain.state_name(s)).collect();
            names.sort_unstable();
            names
        })
        .collect();
    blocks.sort();
    if json {
        emit(&json!({ "count": blocks.len(), "blocks": blocks }));
    } else {
        println!("{} blocks", blocks.len());
        for (i, b) in blocks.iter().enumerate() {
            println!("block {i}: {}", b.join(" "));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_distance(
    file: &Path,
    alpha: &Rational,
    pair: &str,
    mode: KantorovichMode,
    budget: Budget,
    cert_out: Option<&Path>,
    json: bool,
) -> Result<ExitCode, UsageError> {
    let chain = load_chain(file)?;
    let alpha = parse_alpha(alpha)?;
    let (s, t) = parse_pair(&chain, pair)?;
    let outcome = exact_value(&alpha, &chain, s, t, &budget, mode);
    if let Some(path) = cert_out {
        write_file(path, &outcome.certificate().to_text(&chain))?;
    }
    let bounds = outcome.bounds();
    let lower = bounds.lower.get(s, t);
    let upper = bounds.upper.get(s, t);
    if json {
        let mut v = json!({
            "alpha": alpha.value().to_string(),
            "pair": [chain.state_name(s), chain.state_name(t)],
            "status": if outcome.value().is_some() { "exact" } else { "bounds" },
            "lower": lower.to_string(),
            "upper": upper.to_string(),
            "iterations": bounds.iterations,
        });
        if let Some(value) = outcome.value() {
            v["value"] = json!(value.to_string());
        }
        emit(&v);
    } else {
        match outcome.value() {
            Some(value) => println!("bd = {value} (exact)"),
            None => println!(
                "bd in [{lower}, {upper}] (after {} iterations)",
                bounds.iterations
            ),
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_threshold(
    file: &Path,
    alpha: &Rational,
    pair: &str,
    theta: &Rational,
    mode: KantorovichMode,
    budget: Budget,
    evidence_out: Option<&Path>,
    json: bool,
) -> Result<ExitCode, UsageError> {
    let chain = load_chain(file)?;
    let alpha = parse_alpha(alpha)?;
    let (s, t) = parse_pair(&chain, pair)?;
    if theta.is_negative() || *theta > Rational::one() {
        return Err(format!("--theta must lie in [0, 1], got {theta}").into());
    }
    let result = threshold(&alpha, &chain, s, t, theta, &budget, mode);
    let (sn, tn) = (chain.state_name(s), chain.state_name(t));
    if let Some(path) = evidence_out {
        let text = match &result {
            ThresholdResult::Yes { certificate } => certificate.to_text(&chain),
            ThresholdResult::No { iteration, value } => format!(
                "refutation\npair {sn} {tn}\niteration {iteration}\nlower {value}\ntheta {theta}\n"
            ),
            ThresholdResult::Unknown { bounds } => format!(
                "inconclusive\npair {sn} {tn}\nlower {}\nupper {}\ntheta {theta}\n",
                bounds.lower.get(s, t),
                bounds.upper.get(s, t)
            ),
        };
        write_file(path, &text)?;
    }
    if json {
        let mut v = json!({
            "alpha": alpha.value().to_string(),
            "pair": [sn, tn],
            "theta": theta.to_string(),
            "answer": result.answer(),
        });
        match &result {
            ThresholdResult::Yes { certificate } => {
                v["certified_value"] = json!(certificate.d.get(s, t).to_string());
            }
            ThresholdResult::No { iteration, value } => {
                v["iteration"] = json!(iteration);
                v["refuting_value"] = json!(value.to_string());
            }
            ThresholdResult::Unknown { bounds } => {
                v["lower"] = json!(bounds.lower.get(s, t).to_string());
                v["upper"] = json!(bounds.upper.get(s, t).to_string());
                v["iterations"] = json!(bounds.iterations);
            }
        }
        emit(&v);
    } else {
        match &result {
            ThresholdResult::Yes { certificate } => println!(
                "yes: certificate puts d({sn}, {tn}) at {} <= {theta}",
                certificate.d.get(s, t)
            ),
            ThresholdResult::No { iteration, value } => {
                println!("no: iterate {iteration} already reaches {value} > {theta}")
            }
            ThresholdResult::Unknown { bounds } => println!(
                "unknown: enclosure [{}, {}] straddles {theta} after {} iterations",
                bounds.lower.get(s, t),
                bounds.upper.get(s, t),
                bounds.iterations
            ),
        }
    }
    Ok(match result {
        ThresholdResult::Yes { .. } => ExitCode::SUCCESS,
        _ => ExitCode::from(1),
    })
}

fn cmd_certify(file: &Path, cert: &Path, json: bool) -> Result<ExitCode, UsageError> {
    let chain = load_chain(file)?;
    let text = read_file(cert)?;
    let parsed = match Certificate::parse(&text, &chain) {
        Ok(c) => c,
        Err(e) => {
            if json {
                emit(&json!({ "valid": false, "error": e.to_string() }));
            } else {
                println!("invalid: {e}");
            }
            return Ok(ExitCode::from(1));
        }
    };
    let report = privdist_core::fixpoint::check_certificate_detailed(
        &parsed.alpha,
        &chain,
        parsed.d.clone(),
    )
    .expect("parse fixed the dimension");
    if report.failures.is_empty() {
        if json {
            emit(&json!({
                "valid": true,
                "alpha": parsed.alpha.value().to_string(),
                "states": chain.num_states(),
            }));
        } else {
            println!(
                "certificate valid: alpha = {}, {} states",
                parsed.alpha.value(),
                chain.num_states()
            );
        }
        Ok(ExitCode::SUCCESS)
    } else {
        let failures: Vec<String> = report
            .failures
            .iter()
            .map(|f| describe_failure(&chain, f))
            .collect();
        if json {
            emit(&json!({ "valid": false, "failures": failures }));
        } else {
            println!("certificate invalid:");
            for f in &failures {
                println!("  {f}");
            }
        }
        Ok(ExitCode::from(1))
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_delta_bound(
    file: &Path,
    alpha: Option<&Rational>,
    epsilon: Option<&Rational>,
    pairs: &str,
    mode: KantorovichMode,
    budget: Budget,
    cert_out: Option<&Path>,
    json: bool,
) -> Result<ExitCode, UsageError> {
    let chain = load_chain(file)?;
    let pair_ids = parse_pairs(&chain, pairs)?;
    let report = match (alpha, epsilon) {
        (Some(a), None) => {
            let alpha = parse_alpha(a)?;
            delta_bound(&alpha, &chain, &pair_ids, &budget, mode)
        }
        (None, Some(e)) => {
            if e.is_negative() {
                return Err(format!("--epsilon must be nonnegative, got {e}").into());
            }
            delta_bound_for_epsilon(&chain, e, &pair_ids, None, &budget, mode)
        }
        _ => unreachable!("clap enforces exactly one of --alpha/--epsilon"),
    };
    if let Some(path) = cert_out {
        write_file(path, &report.certificate.to_text(&chain))?;
    }
    let rows = sorted_rows(&chain, &report);
    if json {
        let pairs_json: Vec<_> = rows
            .iter()
            .map(|(a, b, delta, exact)| {
                json!({ "pair": [a, b], "delta": delta.to_string(), "exact": exact })
            })
            .collect();
        let mut v = json!({
            "alpha": report.alpha.value().to_string(),
            "pairs": pairs_json,
            "max_delta": report.max_delta.to_string(),
            "iterations": report.bounds.iterations,
        });
        if let Some(e) = epsilon {
            v["epsilon"] = json!(e.to_string());
        }
        emit(&v);
    } else {
        if let Some(e) = epsilon {
            println!(
                "alpha = {} (rational lower bound on exp({e}))",
                report.alpha.value()
            );
        }
        if rows.len() > 1 {
            for (a, b, delta, exact) in &rows {
                let marker = if *exact { " [exact]" } else { "" };
                println!("delta({a}, {b}) \u{2264} {delta} ({}){marker}", dec(delta));
            }
        }
        println!(
            "delta \u{2264} {} ({})",
            report.max_delta,
            dec(&report.max_delta)
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_tv_lower(
    file: &Path,
    alpha: &Rational,
    pair: &str,
    horizon: usize,
    show_event: bool,
    json: bool,
) -> Result<ExitCode, UsageError> {
    let chain = load_chain(file)?;
    let alpha = parse_alpha(alpha)?;
    let (s, t) = parse_pair(&chain, pair)?;
    let opts = horizon_options()?;
    let bound = tv_lower_bound_for_pair(&alpha, &chain, s, t, horizon, &opts).map_err(
        |e| match e {
            LmcError::ExplosionLimit { entries, limit } => format!(
                "horizon expansion needs {entries} traces, over the limit {limit}; \
                 raise {EXPLOSION_LIMIT_VAR} to allow it"
            ),
            other => other.to_string(),
        },
    )?;
    let direction = match bound.direction {
        Direction::FirstOverSecond => "first-over-second",
        Direction::SecondOverFirst => "second-over-first",
    };
    if json {
        let mut v = json!({
            "alpha": alpha.value().to_string(),
            "pair": [chain.state_name(s), chain.state_name(t)],
            "horizon": bound.horizon,
            "value": bound.value.to_string(),
            "direction": direction,
            "event_size": bound.event.len(),
        });
        if show_event {
            let traces: Vec<Vec<&str>> = bound
                .event
                .iter()
                .map(|tr| tr.iter().map(|&l| chain.label_name(l)).collect())
                .collect();
            v["event"] = json!(traces);
        }
        emit(&v);
    } else {
        println!(
            "tv lower bound = {} ({}) at horizon {}",
            bound.value,
            dec(&bound.value),
            bound.horizon
        );
        println!("direction: {direction}");
        println!("event size: {} traces", bound.event.len());
        if show_event {
            for tr in &bound.event {
                println!("  {}", trace_string(&chain, tr));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen(gen: &GenCommand, json: bool) -> Result<ExitCode, UsageError> {
    let (document, out) = match gen {
        GenCommand::Dc { n, p, out } => {
            let dc = generate_dining(&DiningConfig {
                participants: *n,
                coin_bias: p.clone(),
            })
            .map_err(|e| e.to_string())?;
            let starts: Vec<&str> = dc
                .starts
                .iter()
                .map(|&s| dc.lmc.state_name(s))
                .collect();
            let document = if json {
                // The JSON form is itself a loadable chain file.
                format!("{}\n", dc.lmc.to_json())
            } else {
                format!(
                    "# dining cryptographers: n={n} p={p}, start states {}\n{}",
                    starts.join(" "),
                    dc.lmc.to_text()
                )
            };
            (document, out)
        }
        GenCommand::Random {
            states,
            alphabet,
            density,
            seed,
            out,
        } => {
            let chain = generate_random(&RandomConfig {
                states: *states,
                alphabet_size: *alphabet,
                density: density.clone(),
                seed: *seed,
            })
            .map_err(|e| e.to_string())?;
            let document = if json {
                format!("{}\n", chain.to_json())
            } else {
                format!(
                    "# random chain: states={states} alphabet={alphabet} seed={seed}\n{}",
                    chain.to_text()
                )
            };
            (document, out)
        }
    };
    match out {
        Some(path) => write_file(path, &document)?,
        None => print!("{document}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_export_smt(
    file: &Path,
    alpha: &Rational,
    lfp: bool,
    threshold: Option<&str>,
    json: bool,
) -> Result<ExitCode, UsageError> {
    let chain = load_chain(file)?;
    let alpha = parse_alpha(alpha)?;
    let script = if lfp {
        export_lfp_formula(&alpha, &chain)
    } else {
        let triple = threshold.expect("clap enforces one of --lfp/--threshold");
        let parts: Vec<&str> = triple.split(',').collect();
        if parts.len() != 3 {
            return Err(format!("--threshold must be NAME,NAME,THETA, got {triple:?}").into());
        }
        let s = state(&chain, parts[0])?;
        let t = state(&chain, parts[1])?;
        let theta: Rational = parts[2]
            .trim()
            .parse()
            .map_err(|e| format!("bad threshold value {:?}: {e}", parts[2]))?;
        if theta.is_negative() || theta > Rational::one() {
            return Err(format!("threshold must lie in [0, 1], got {theta}").into());
        }
        export_threshold_formula(&alpha, &chain, s, t, &theta)
    };
    if json {
        emit(&json!({ "script": script }));
    } else {
        print!("{script}");
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// Helpers

fn emit(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("JSON value"));
}

fn dec(r: &Rational) -> String {
    format!("{}", r.to_f64())
}

fn read_file(path: &Path) -> Result<String, UsageError> {
    fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()).into())
}

fn write_file(path: &Path, text: &str) -> Result<(), UsageError> {
    fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()).into())
}

/// Chain files are JSON when they open with a brace, text otherwise.
fn parse_chain(text: &str) -> Result<Lmc, LmcError> {
    if text.trim_start().starts_with('{') {
        Lmc::parse_json(text)
    } else {
        Lmc::parse(text)
    }
}

fn load_chain(path: &Path) -> Result<Lmc, UsageError> {
    let text = read_file(path)?;
    parse_chain(&text).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn parse_alpha(r: &Rational) -> Result<Alpha, UsageError> {
    Alpha::new(r.clone()).map_err(|e| format!("--alpha must be at least 1, got {}", e.0).into())
}

fn state(chain: &Lmc, name: &str) -> Result<StateId, UsageError> {
    let name = name.trim();
    chain
        .state_index(name)
        .ok_or_else(|| format!("unknown state {name:?}").into())
}

fn parse_pair(chain: &Lmc, raw: &str) -> Result<(StateId, StateId), UsageError> {
    let parts: Vec<&str> = raw.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("pair must be NAME,NAME, got {raw:?}").into());
    }
    Ok((state(chain, parts[0])?, state(chain, parts[1])?))
}

fn parse_pairs(chain: &Lmc, raw: &str) -> Result<Vec<(StateId, StateId)>, UsageError> {
    let pairs: Vec<(StateId, StateId)> = raw
        .split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| parse_pair(chain, p))
        .collect::<Result<_, _>>()?;
    if pairs.is_empty() {
        return Err("--pairs needs at least one NAME,NAME entry".into());
    }
    Ok(pairs)
}

fn budget(max_iters: Option<usize>, stop_gap: Option<&Rational>) -> Result<Budget, UsageError> {
    let mut b = Budget::default();
    if let Some(m) = max_iters {
        b.max_iters = m;
    }
    if let Some(g) = stop_gap {
        if g.is_negative() {
            return Err(format!("--stop-gap must be nonnegative, got {g}").into());
        }
        b.stop_gap = g.clone();
    }
    Ok(b)
}

fn horizon_options() -> Result<HorizonOptions, UsageError> {
    let mut opts = HorizonOptions {
        strict: true,
        ..HorizonOptions::default()
    };
    if let Ok(raw) = std::env::var(EXPLOSION_LIMIT_VAR) {
        opts.explosion_limit = raw
            .parse()
            .map_err(|_| format!("{EXPLOSION_LIMIT_VAR} must be a positive integer, got {raw:?}"))?;
    }
    Ok(opts)
}

/// Per-pair rows sorted by state names; the pair keeps its given orientation.
fn sorted_rows<'a>(
    chain: &'a Lmc,
    report: &'a DeltaReport,
) -> Vec<(&'a str, &'a str, &'a Rational, bool)> {
    let mut rows: Vec<_> = report
        .pairs
        .iter()
        .map(|p| {
            (
                chain.state_name(p.pair.0),
                chain.state_name(p.pair.1),
                &p.delta,
                p.exact,
            )
        })
        .collect();
    rows.sort_by_key(|&(a, b, _, _)| (a, b));
    rows
}

fn describe_failure(chain: &Lmc, f: &CertificateFailure) -> String {
    let name = |s: StateId| chain.state_name(s);
    match f {
        CertificateFailure::Asymmetric { i, j } => format!(
            "entries ({}, {}) and ({}, {}) differ",
            name(*i),
            name(*j),
            name(*j),
            name(*i)
        ),
        CertificateFailure::OutOfRange { i, j, value } => format!(
            "entry ({}, {}) = {value} lies outside [0, 1]",
            name(*i),
            name(*j)
        ),
        CertificateFailure::MismatchEntry { i, j, value } => format!(
            "labels differ at ({}, {}) but the entry is {value}, not 1",
            name(*i),
            name(*j)
        ),
        CertificateFailure::NotPreFixed {
            i,
            j,
            entry,
            operator_value,
        } => format!(
            "operator reaches {operator_value} at ({}, {}), above the entry {entry}",
            name(*i),
            name(*j)
        ),
    }
}
