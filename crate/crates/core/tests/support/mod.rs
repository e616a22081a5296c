//! Fixtures and independent oracles for the end-to-end suite: brute-force
//! enumeration for the transport LPs and trace events, a standalone
//! S-expression grammar checker, and deterministic chain corpora.

use std::collections::BTreeSet;

use privdist_core::kantorovich::{Alpha, DistanceMatrix};
use privdist_core::lmc::{HorizonDistribution, LabelId};
use privdist_core::modelgen::{generate_random, RandomConfig};
use privdist_core::{Lmc, Rational};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Two label-a states with swapped branch weights into two absorbing states.
pub const SWAP_PAIR: &str = "\
lmc v1
alphabet a b c
state s0 a
state s1 a
state s2 b
state s3 c
trans s0 s2 2/5
trans s0 s3 3/5
trans s1 s2 3/5
trans s1 s3 2/5
trans s2 s2 1
trans s3 s3 1
";

pub fn swap_pair() -> Lmc {
    Lmc::parse(SWAP_PAIR).unwrap()
}

/// Two transient states with different self-loop weights feeding one
/// absorbing state; its distance resolves via rounding, not convergence.
pub const RECOVERY: &str = "\
lmc v1
alphabet a b
state s0 a
state s1 a
state s2 b
trans s0 s0 1/2
trans s0 s2 1/2
trans s1 s1 1/4
trans s1 s2 3/4
trans s2 s2 1
";

pub fn recovery_chain() -> Lmc {
    Lmc::parse(RECOVERY).unwrap()
}

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

pub fn alpha(n: i64, d: i64) -> Alpha {
    Alpha::new(rat(n, d)).unwrap()
}

/// Seeded chains with 3 to 6 states; fixed for reproducible counts.
pub fn small_corpus() -> Vec<Lmc> {
    let configs: &[(usize, usize, (i64, i64), u64)] = &[
        (3, 1, (1, 1), 11),
        (3, 2, (1, 2), 12),
        (4, 2, (1, 2), 13),
        (4, 2, (3, 4), 14),
        (5, 2, (1, 2), 15),
        (5, 3, (2, 5), 16),
        (6, 2, (1, 3), 17),
        (6, 3, (1, 2), 18),
    ];
    configs
        .iter()
        .map(|&(states, alphabet_size, (dn, dd), seed)| {
            generate_random(&RandomConfig {
                states,
                alphabet_size,
                density: rat(dn, dd),
                seed,
            })
            .unwrap()
        })
        .collect()
}

/// Chains with at most 3 states, small enough for vertex enumeration.
pub fn tiny_corpus() -> Vec<Lmc> {
    let configs: &[(usize, usize, (i64, i64), u64)] = &[
        (2, 1, (1, 1), 21),
        (2, 2, (1, 1), 22),
        (3, 1, (2, 3), 23),
        (3, 1, (1, 1), 24),
        (3, 2, (2, 3), 25),
        (3, 2, (1, 1), 26),
    ];
    configs
        .iter()
        .map(|&(states, alphabet_size, (dn, dd), seed)| {
            generate_random(&RandomConfig {
                states,
                alphabet_size,
                density: rat(dn, dd),
                seed,
            })
            .unwrap()
        })
        .collect()
}

/// Random chain extended with an exact copy of its first state, so the
/// original and the copy are bisimilar by construction.
pub fn chain_with_clone(seed: u64) -> (Lmc, usize, usize) {
    let base = generate_random(&RandomConfig {
        states: 4,
        alphabet_size: 2,
        density: rat(1, 2),
        seed,
    })
    .unwrap();
    let mut text = base.to_text();
    let label = base.label_name(base.label_of(0)).to_string();
    text.push_str(&format!("state twin {label}\n"));
    for (t, p) in base.row(0) {
        text.push_str(&format!("trans twin {} {}\n", base.state_name(*t), p));
    }
    let chain = Lmc::parse(&text).unwrap();
    let a = chain.state_index(base.state_name(0)).unwrap();
    let b = chain.state_index("twin").unwrap();
    (chain, a, b)
}

/// Symmetric matrix with zero diagonal and eighth-step entries in [0, 1].
pub fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> DistanceMatrix {
    let mut d = DistanceMatrix::zero(n);
    for i in 0..n {
        for j in (i + 1)..n {
            d.set_sym(i, j, rat(rng.gen_range(0..=8), 8));
        }
    }
    d
}

// ---------------------------------------------------------------------------
// Brute-force transport value by vertex enumeration

fn solve_square(mut m: Vec<Vec<Rational>>, mut b: Vec<Rational>) -> Option<Vec<Rational>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, pivot);
        b.swap(col, pivot);
        let inv = m[col][col].recip().unwrap();
        for r in 0..n {
            if r == col || m[r][col].is_zero() {
                continue;
            }
            let factor = &m[r][col] * &inv;
            for c in col..n {
                let delta = &factor * &m[col][c];
                m[r][c] = &m[r][c] - &delta;
            }
            let delta = &factor * &b[col];
            b[r] = &b[r] - &delta;
        }
    }
    Some(
        (0..n)
            .map(|i| &b[i] * &m[i][i].recip().unwrap())
            .collect(),
    )
}

fn combinations(total: usize, pick: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    fn extend(start: usize, total: usize, pick: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == pick {
            out.push(current.clone());
            return;
        }
        for i in start..total {
            current.push(i);
            extend(i + 1, total, pick, current, out);
            current.pop();
        }
    }
    extend(0, total, pick, &mut current, &mut out);
    out
}

/// Transport value by enumerating the vertices of the potential polytope.
/// Every vertex is the solution of some n active constraints; the maximum
/// over feasible vertices and both weighting orientations equals the LP
/// optimum because the polytope is bounded and nonempty.
pub fn vertex_value(
    alpha: &Alpha,
    d: &DistanceMatrix,
    mu: &[Rational],
    nu: &[Rational],
) -> Rational {
    let n = mu.len();
    let zero = Rational::zero();
    let one = Rational::one();
    let minus_one = Rational::from_int(-1);
    let mut rows: Vec<(Vec<Rational>, Rational)> = Vec::new();
    for i in 0..n {
        let mut up = vec![zero.clone(); n];
        up[i] = one.clone();
        rows.push((up, one.clone()));
        let mut down = vec![zero.clone(); n];
        down[i] = minus_one.clone();
        rows.push((down, zero.clone()));
    }
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut a = vec![zero.clone(); n];
            a[i] = one.clone();
            a[j] = &zero - alpha.value();
            rows.push((a, d.get(i, j).clone()));
        }
    }
    let feasible = |f: &[Rational]| {
        rows.iter().all(|(a, c)| {
            let lhs: Rational = a.iter().zip(f).map(|(x, y)| x * y).sum();
            lhs <= *c
        })
    };
    let score = |f: &[Rational], x: &[Rational], y: &[Rational]| -> Rational {
        f.iter()
            .zip(x.iter().zip(y))
            .map(|(fi, (xi, yi))| fi * &(xi - &(alpha.value() * yi)))
            .sum()
    };
    // The origin is always feasible and scores zero in both orientations.
    let mut best = zero.clone();
    for combo in combinations(rows.len(), n) {
        let m: Vec<Vec<Rational>> = combo.iter().map(|&r| rows[r].0.clone()).collect();
        let b: Vec<Rational> = combo.iter().map(|&r| rows[r].1.clone()).collect();
        let Some(f) = solve_square(m, b) else { continue };
        if !feasible(&f) {
            continue;
        }
        for (x, y) in [(mu, nu), (nu, mu)] {
            let v = score(&f, x, y);
            if v > best {
                best = v;
            }
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Brute-force trace-event optimum by subset enumeration

/// Maximum skewed mass gap over all subsets of the union support. Only
/// usable for supports of at most 12 traces.
pub fn subset_tv(
    alpha: &Alpha,
    p: &HorizonDistribution,
    q: &HorizonDistribution,
) -> Rational {
    let keys: Vec<&Vec<LabelId>> = p
        .mass
        .keys()
        .chain(q.mass.keys())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    assert!(keys.len() <= 12, "support too large for subset search");
    let zero = Rational::zero();
    let mut best = zero.clone();
    for mask in 0u32..(1u32 << keys.len()) {
        let mut pe = zero.clone();
        let mut qe = zero.clone();
        for (bit, key) in keys.iter().enumerate() {
            if mask & (1 << bit) == 0 {
                continue;
            }
            if let Some(v) = p.mass.get(*key) {
                pe = &pe + v;
            }
            if let Some(v) = q.mass.get(*key) {
                qe = &qe + v;
            }
        }
        let forward = &pe - &(alpha.value() * &qe);
        if forward > best {
            best = forward;
        }
        let backward = &qe - &(alpha.value() * &pe);
        if backward > best {
            best = backward;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Standalone SMT-LIB surface grammar

enum Form {
    Atom(String),
    List(Vec<Form>),
}

fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c == ';' {
            for d in chars.by_ref() {
                if d == '\n' {
                    break;
                }
            }
        } else if c == '(' || c == ')' {
            tokens.push(c.to_string());
        } else if c.is_whitespace() {
        } else {
            let mut atom = String::new();
            atom.push(c);
            while let Some(&d) = chars.peek() {
                if d == '(' || d == ')' || d == ';' || d.is_whitespace() {
                    break;
                }
                atom.push(d);
                chars.next();
            }
            tokens.push(atom);
        }
    }
    tokens
}

fn parse_one(tokens: &[String], pos: &mut usize) -> Result<Form, String> {
    match tokens.get(*pos) {
        None => Err("unexpected end of input".into()),
        Some(t) if t == "(" => {
            *pos += 1;
            let mut items = Vec::new();
            loop {
                match tokens.get(*pos) {
                    None => return Err("unbalanced parenthesis".into()),
                    Some(t) if t == ")" => {
                        *pos += 1;
                        return Ok(Form::List(items));
                    }
                    _ => items.push(parse_one(tokens, pos)?),
                }
            }
        }
        Some(t) if t == ")" => Err("unmatched closing parenthesis".into()),
        Some(t) => {
            *pos += 1;
            Ok(Form::Atom(t.clone()))
        }
    }
}

/// Checks that a script is a nonempty sequence of well-parenthesized
/// commands, each a list headed by a known command symbol, and returns the
/// command heads in order. Written against the surface grammar only; shares
/// nothing with the exporter.
pub fn check_smtlib_grammar(text: &str) -> Result<Vec<String>, String> {
    const COMMANDS: &[&str] = &[
        "set-logic",
        "set-info",
        "set-option",
        "declare-const",
        "declare-fun",
        "define-fun",
        "assert",
        "check-sat",
        "get-model",
        "get-value",
        "exit",
    ];
    let tokens = tokenize(text);
    let mut forms = Vec::new();
    let mut pos = 0;
    while pos < tokens.len() {
        forms.push(parse_one(&tokens, &mut pos)?);
    }
    if forms.is_empty() {
        return Err("empty script".into());
    }
    let mut heads = Vec::new();
    for form in &forms {
        let Form::List(items) = form else {
            return Err("top-level form must be a list".into());
        };
        let Some(Form::Atom(head)) = items.first() else {
            return Err("command head must be a symbol".into());
        };
        if !COMMANDS.contains(&head.as_str()) {
            return Err(format!("unknown command {head}"));
        }
        heads.push(head.clone());
    }
    Ok(heads)
}
