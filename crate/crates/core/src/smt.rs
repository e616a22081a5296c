//! SMT-LIB exports of the two logical characterizations of the distance:
//! the quantified least-pre-fixed-point description and the purely
//! existential threshold encoding, plus validation of solver models.
//!
//! Returned models are never trusted: the distance assignment is extracted
//! and re-verified by the certificate checker.

use crate::fixpoint::{check_certificate, Certificate, CertificateError};
use crate::kantorovich::{Alpha, DistanceMatrix};
use crate::lmc::{Lmc, StateId};
use crate::rational::Rational;
use thiserror::Error;

fn rat_lit(r: &Rational) -> String {
    let body = r.abs().to_string();
    let core = match body.split_once('/') {
        Some((n, d)) => format!("(/ {n} {d})"),
        None => body,
    };
    if r.is_negative() {
        format!("(- {core})")
    } else {
        core
    }
}

fn andn(items: &[String]) -> String {
    match items.len() {
        0 => "true".to_string(),
        1 => items[0].clone(),
        _ => format!("(and {})", items.join(" ")),
    }
}

fn addn(items: &[String]) -> String {
    match items.len() {
        0 => "0".to_string(),
        1 => items[0].clone(),
        _ => format!("(+ {})", items.join(" ")),
    }
}

/// Expected value of the potential under the row of `s`, as a term.
fn row_sum(chain: &Lmc, s: StateId) -> String {
    let terms: Vec<String> = chain
        .row(s)
        .iter()
        .map(|(t, p)| format!("(* {} f_{t})", rat_lit(p)))
        .collect();
    addn(&terms)
}

/// The pre-fixed-point body shared by both universal blocks: mismatching
/// pairs sit at 1, and every potential respecting the slope bounds keeps
/// each same-label pair's skewed gap below its entry. `d_of` names the
/// matrix variables so the same text serves `d` and the compared copy.
fn universal_phi(chain: &Lmc, alpha: &Alpha, d_of: &dyn Fn(usize, usize) -> String) -> String {
    let n = chain.num_states();
    let a = rat_lit(alpha.value());
    let mut range = Vec::new();
    for i in 0..n {
        range.push(format!("(<= 0 f_{i})"));
        range.push(format!("(<= f_{i} 1)"));
    }
    let mut slope = Vec::new();
    for i in 0..n {
        for j in 0..n {
            slope.push(format!("(<= (- f_{i} (* {a} f_{j})) {})", d_of(i, j)));
            if i != j {
                slope.push(format!("(<= (- f_{j} (* {a} f_{i})) {})", d_of(i, j)));
            }
        }
    }
    let mut clauses = Vec::new();
    let mut gaps = Vec::new();
    for s in 0..n {
        for sp in 0..n {
            if chain.label_of(s) != chain.label_of(sp) {
                clauses.push(format!("(= {} 1)", d_of(s, sp)));
            } else {
                let ms = row_sum(chain, s);
                let msp = row_sum(chain, sp);
                gaps.push(format!("(<= (- {ms} (* {a} {msp})) {})", d_of(s, sp)));
                if s != sp {
                    gaps.push(format!("(<= (- {msp} (* {a} {ms})) {})", d_of(s, sp)));
                }
            }
        }
    }
    clauses.push(format!("(=> {} {})", andn(&slope), andn(&gaps)));
    let fvars: Vec<String> = (0..n).map(|i| format!("(f_{i} Real)")).collect();
    format!(
        "(forall ({}) (=> {} {}))",
        fvars.join(" "),
        andn(&range),
        andn(&clauses)
    )
}

/// Quantified script describing the distance matrix outright: a matrix in
/// the unit box that every admissible potential respects, minimal among
/// all such matrices. Satisfiable by construction; the model value of
/// `d_i_j` is the distance of the pair.
pub fn export_lfp_formula(alpha: &Alpha, chain: &Lmc) -> String {
    let n = chain.num_states();
    let mut out = String::new();
    out.push_str("; least distance matrix: unique model of the assertions below\n");
    out.push_str("(set-logic LRA)\n");
    for i in 0..n {
        for j in 0..n {
            out.push_str(&format!("(declare-const d_{i}_{j} Real)\n"));
        }
    }
    let mut drange = Vec::new();
    let mut d2range = Vec::new();
    let mut leq = Vec::new();
    let mut d2vars = Vec::new();
    for i in 0..n {
        for j in 0..n {
            drange.push(format!("(<= 0 d_{i}_{j})"));
            drange.push(format!("(<= d_{i}_{j} 1)"));
            d2range.push(format!("(<= 0 d2_{i}_{j})"));
            d2range.push(format!("(<= d2_{i}_{j} 1)"));
            leq.push(format!("(<= d_{i}_{j} d2_{i}_{j})"));
            d2vars.push(format!("(d2_{i}_{j} Real)"));
        }
    }
    out.push_str(&format!("(assert {})\n", andn(&drange)));
    out.push_str(&format!(
        "(assert {})\n",
        universal_phi(chain, alpha, &|i, j| format!("d_{i}_{j}"))
    ));
    let mut ante = d2range;
    ante.push(universal_phi(chain, alpha, &|i, j| format!("d2_{i}_{j}")));
    out.push_str(&format!(
        "(assert (forall ({}) (=> {} {})))\n",
        d2vars.join(" "),
        andn(&ante),
        andn(&leq)
    ));
    out.push_str("(check-sat)\n(get-model)\n");
    out
}

/// One existential coupling block bounding the cost of carrying the row of
/// `from` onto the row of `to` by the variable `x`.
fn coupling_block(chain: &Lmc, alpha: &Alpha, k: usize, x: &str, from: StateId, to: StateId) -> String {
    let n = chain.num_states();
    let a = rat_lit(alpha.value());
    let mu = chain.dense_row(from);
    let nu = chain.dense_row(to);
    let mut parts = Vec::new();
    let mut cost = Vec::new();
    for i in 0..n {
        for j in 0..n {
            cost.push(format!("(* om_{k}_{i}_{j} d_{i}_{j})"));
        }
    }
    for i in 0..n {
        cost.push(format!("et_{k}_{i}"));
    }
    parts.push(format!("(<= {} {})", addn(&cost), x));
    for i in 0..n {
        for j in 0..n {
            parts.push(format!("(<= 0 om_{k}_{i}_{j})"));
            parts.push(format!("(<= om_{k}_{i}_{j} 1)"));
        }
    }
    for i in 0..n {
        for v in ["ga", "ta", "et"] {
            parts.push(format!("(<= 0 {v}_{k}_{i})"));
            parts.push(format!("(<= {v}_{k}_{i} 1)"));
        }
    }
    for i in 0..n {
        let mut supply: Vec<String> = (0..n).map(|j| format!("om_{k}_{i}_{j}")).collect();
        supply.push(format!("(- ga_{k}_{i})"));
        supply.push(format!("ta_{k}_{i}"));
        supply.push(format!("et_{k}_{i}"));
        parts.push(format!("(= {} {})", addn(&supply), rat_lit(&mu[i])));
    }
    for j in 0..n {
        let mut receive: Vec<String> = (0..n).map(|i| format!("om_{k}_{i}_{j}")).collect();
        receive.push(format!("(/ (- ta_{k}_{j} ga_{k}_{j}) {a})"));
        parts.push(format!("(<= {} {})", addn(&receive), rat_lit(&nu[j])));
    }
    andn(&parts)
}

/// Purely existential script, satisfiable exactly when the distance of the
/// pair is at most `theta`. Mismatching pairs are fixed at 1; every other
/// ordered pair gets coupling blocks with fresh variables witnessing that
/// the operator stays below the matrix. The cost terms multiply coupling
/// variables with matrix variables, so the script is nonlinear.
pub fn export_threshold_formula(
    alpha: &Alpha,
    chain: &Lmc,
    s: StateId,
    s_prime: StateId,
    theta: &Rational,
) -> String {
    let n = chain.num_states();
    assert!(s < n && s_prime < n, "state index out of range");
    assert!(
        !theta.is_negative() && *theta <= Rational::one(),
        "threshold must lie in [0, 1]"
    );
    let mut asserts = Vec::new();
    let mut blocks = Vec::new();
    for q in 0..n {
        for qp in 0..n {
            if chain.label_of(q) != chain.label_of(qp) {
                asserts.push(format!("(assert (= d_{q}_{qp} 1))"));
                continue;
            }
            let x = format!("d_{q}_{qp}");
            let k = blocks.len();
            blocks.push(coupling_block(chain, alpha, k, &x, q, qp));
            if q != qp {
                let k = blocks.len();
                blocks.push(coupling_block(chain, alpha, k, &x, qp, q));
            }
        }
    }
    let mut out = String::new();
    out.push_str("; satisfiable iff the queried pair is within the threshold\n");
    out.push_str("(set-logic QF_NRA)\n");
    let mut drange = Vec::new();
    for i in 0..n {
        for j in 0..n {
            out.push_str(&format!("(declare-const d_{i}_{j} Real)\n"));
            drange.push(format!("(<= 0 d_{i}_{j})"));
            drange.push(format!("(<= d_{i}_{j} 1)"));
        }
    }
    for k in 0..blocks.len() {
        for i in 0..n {
            for j in 0..n {
                out.push_str(&format!("(declare-const om_{k}_{i}_{j} Real)\n"));
            }
        }
        for i in 0..n {
            for v in ["ga", "ta", "et"] {
                out.push_str(&format!("(declare-const {v}_{k}_{i} Real)\n"));
            }
        }
    }
    out.push_str(&format!("(assert {})\n", andn(&drange)));
    for a in asserts {
        out.push_str(&a);
        out.push('\n');
    }
    for b in blocks {
        out.push_str(&format!("(assert {b})\n"));
    }
    out.push_str(&format!(
        "(assert (<= d_{s}_{s_prime} {}))\n",
        rat_lit(theta)
    ));
    out.push_str("(check-sat)\n(get-model)\n");
    out
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model text is not well formed: {msg}")]
    Syntax { msg: String },
    #[error("model does not assign: {}", names.join(", "))]
    MissingVariables { names: Vec<String> },
    #[error("value of {name} is not a rational constant: {text}")]
    NonRational { name: String, text: String },
    #[error("variable {name} indexes outside the chain")]
    IndexOutOfRange { name: String },
    #[error(transparent)]
    Certificate(#[from] CertificateError),
}

/// Extracts the `d_i_j` assignment from solver model output and runs it
/// through the certificate checker, so solver answers are never taken on
/// faith. Accepts `(model (define-fun ...))` output, bare `define-fun`
/// forms, or plain `name value` lines. The full matrix must be assigned.
pub fn validate_model(
    chain: &Lmc,
    alpha: &Alpha,
    model: &str,
) -> Result<Certificate, ModelError> {
    let n = chain.num_states();
    let forms = sexpr::parse_all(model).map_err(|msg| ModelError::Syntax { msg })?;
    let mut assignments: Vec<(String, Option<Rational>)> = Vec::new();
    collect_defines(&forms, &mut assignments);
    if assignments.is_empty() {
        assignments = line_assignments(model);
    }
    let mut values: Vec<Option<Rational>> = vec![None; n * n];
    for (name, value) in assignments {
        let Some((i, j)) = matrix_slot(&name) else {
            continue;
        };
        if i >= n || j >= n {
            return Err(ModelError::IndexOutOfRange { name });
        }
        match value {
            Some(v) => values[i * n + j] = Some(v),
            None => {
                return Err(ModelError::NonRational {
                    name,
                    text: "non-constant body".into(),
                })
            }
        }
    }
    let mut missing = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if values[i * n + j].is_none() {
                missing.push(format!("d_{i}_{j}"));
            }
        }
    }
    if !missing.is_empty() {
        return Err(ModelError::MissingVariables { names: missing });
    }
    let mut d = DistanceMatrix::zero(n);
    for i in 0..n {
        for j in 0..n {
            d.set(i, j, values[i * n + j].take().unwrap());
        }
    }
    Ok(check_certificate(alpha, chain, d)?)
}

/// `d_<i>_<j>` with numeric indices; anything else is ignored.
fn matrix_slot(name: &str) -> Option<(usize, usize)> {
    let mut parts = name.split('_');
    if parts.next()? != "d" {
        return None;
    }
    let i = parts.next()?.parse().ok()?;
    let j = parts.next()?.parse().ok()?;
    if parts.next().is_some() {
        return None;
    }
    Some((i, j))
}

fn collect_defines(forms: &[sexpr::Sexpr], out: &mut Vec<(String, Option<Rational>)>) {
    use sexpr::Sexpr;
    for form in forms {
        let Sexpr::List(items) = form else { continue };
        match items.first() {
            Some(Sexpr::Atom(head)) if head == "model" => {
                collect_defines(&items[1..], out);
            }
            Some(Sexpr::Atom(head)) if head == "define-fun" => {
                let (Some(Sexpr::Atom(name)), Some(Sexpr::List(args)), Some(body)) =
                    (items.get(1), items.get(2), items.last())
                else {
                    continue;
                };
                if !args.is_empty() || items.len() < 5 {
                    continue;
                }
                out.push((name.clone(), sexpr::eval_constant(body)));
            }
            _ => {}
        }
    }
}

/// Fallback for hand-written assignments: one `name value` or
/// `name = value` pair per line.
fn line_assignments(text: &str) -> Vec<(String, Option<Rational>)> {
    let mut out = Vec::new();
    for raw in text.lines() {
        let stripped = raw.split(';').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        let mut tokens = stripped.split_whitespace().filter(|t| *t != "=");
        let (Some(name), Some(value), None) = (tokens.next(), tokens.next(), tokens.next())
        else {
            continue;
        };
        out.push((name.to_string(), value.parse().ok()));
    }
    out
}

mod sexpr {
    use crate::rational::Rational;

    #[derive(Debug, Clone, PartialEq, Eq)]
    pub enum Sexpr {
        Atom(String),
        List(Vec<Sexpr>),
    }

    /// Parses a whole document of s-expressions; `;` comments run to the
    /// end of the line.
    pub fn parse_all(text: &str) -> Result<Vec<Sexpr>, String> {
        let mut stack: Vec<Vec<Sexpr>> = vec![Vec::new()];
        let mut atom = String::new();
        let mut comment = false;
        for (pos, c) in text.char_indices() {
            if comment {
                if c == '\n' {
                    comment = false;
                }
                continue;
            }
            match c {
                ';' => {
                    flush(&mut atom, &mut stack);
                    comment = true;
                }
                '(' => {
                    flush(&mut atom, &mut stack);
                    stack.push(Vec::new());
                }
                ')' => {
                    flush(&mut atom, &mut stack);
                    let done = stack.pop().unwrap();
                    match stack.last_mut() {
                        Some(parent) => parent.push(Sexpr::List(done)),
                        None => return Err(format!("unmatched ')' at byte {pos}")),
                    }
                }
                c if c.is_whitespace() => flush(&mut atom, &mut stack),
                c => atom.push(c),
            }
        }
        flush(&mut atom, &mut stack);
        if stack.len() != 1 {
            return Err("unclosed '('".to_string());
        }
        Ok(stack.pop().unwrap())
    }

    fn flush(atom: &mut String, stack: &mut [Vec<Sexpr>]) {
        if !atom.is_empty() {
            stack
                .last_mut()
                .unwrap()
                .push(Sexpr::Atom(std::mem::take(atom)));
        }
    }

    /// Evaluates constant arithmetic: literals and `+ - * /` applications.
    pub fn eval_constant(e: &Sexpr) -> Option<Rational> {
        match e {
            Sexpr::Atom(a) => a.parse().ok(),
            Sexpr::List(items) => {
                let Some(Sexpr::Atom(op)) = items.first() else {
                    return None;
                };
                let args: Option<Vec<Rational>> =
                    items[1..].iter().map(eval_constant).collect();
                let args = args?;
                match (op.as_str(), args.len()) {
                    ("-", 1) => Some(-&args[0]),
                    ("-", 2) => Some(&args[0] - &args[1]),
                    ("+", _) if !args.is_empty() => Some(args.iter().sum()),
                    ("*", _) if !args.is_empty() => {
                        let mut acc = Rational::one();
                        for a in &args {
                            acc = &acc * a;
                        }
                        Some(acc)
                    }
                    ("/", 2) => args[0].checked_div(&args[1]).ok(),
                    _ => None,
                }
            }
        }
    }
}
