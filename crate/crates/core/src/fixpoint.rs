//! Least fixed point of the distance operator and the queries built on it:
//! certified exact values, threshold decisions, and per-pair leakage bounds.
//!
//! The lower side of every answer is an iterate of the operator starting
//! from zero. The upper side is a [`Certificate`], a matrix the operator
//! maps below itself. Certificates are verified with coupling witnesses
//! whose feasibility and objective are re-checked arithmetically, so a
//! passing check does not rest on solver optimality.

use crate::kantorovich::{dual_branch, kantorovich, Alpha, DistanceMatrix, KantorovichMode};
use crate::lmc::{Lmc, Partition, StateId};
use crate::rational::{
    best_rational_in_interval, exp_lower_bound, taylor_lower_bound_exp, Rational,
};
use rayon::prelude::*;
use thiserror::Error;

/// Resource limits for the iteration loops.
#[derive(Debug, Clone)]
pub struct Budget {
    pub max_iters: usize,
    /// Iteration stops once successive iterates differ by at most this.
    pub stop_gap: Rational,
    /// Width of the first rounding window; halves per level, floored at
    /// `stop_gap`.
    pub initial_slack: Rational,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_iters: 10_000,
            stop_gap: Rational::pow2(-64),
            initial_slack: Rational::pow2(-10),
        }
    }
}

/// Change recorded after one operator application.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IterateSummary {
    pub iteration: usize,
    pub max_change: Rational,
}

#[derive(Debug, Clone)]
pub struct KleeneResult {
    pub iterates: Vec<IterateSummary>,
    /// Last iterate; a pointwise lower bound on the distance.
    pub lower: DistanceMatrix,
    /// True when the last application reproduced its input exactly, making
    /// `lower` the least fixed point itself.
    pub converged: bool,
}

/// Iterates the distance operator from the all-zero matrix, recording the
/// largest entry change per application. Stops on exact convergence, on a
/// change at most `stop_gap`, or after `max_iters` applications.
pub fn kleene_iterate(
    alpha: &Alpha,
    chain: &Lmc,
    max_iters: usize,
    stop_gap: &Rational,
    mode: KantorovichMode,
) -> KleeneResult {
    let partition = chain.bisimilarity_partition();
    let mut lower = DistanceMatrix::zero(chain.num_states());
    let mut iterates = Vec::new();
    let mut converged = false;
    for iteration in 1..=max_iters {
        let next = step_pinned(alpha, chain, &lower, mode, &partition);
        let max_change = next.max_diff(&lower);
        lower = next;
        iterates.push(IterateSummary {
            iteration,
            max_change: max_change.clone(),
        });
        if max_change.is_zero() {
            converged = true;
            break;
        }
        if max_change <= *stop_gap {
            break;
        }
    }
    KleeneResult {
        iterates,
        lower,
        converged,
    }
}

/// One operator application. Pairs inside one bisimilarity block sit at
/// zero in every iterate, so their solves are skipped; the result equals
/// the unpinned step.
fn step_pinned(
    alpha: &Alpha,
    chain: &Lmc,
    d: &DistanceMatrix,
    mode: KantorovichMode,
    partition: &Partition,
) -> DistanceMatrix {
    let n = chain.num_states();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let computed: Vec<((usize, usize), Rational)> = pairs
        .into_par_iter()
        .map(|(i, j)| {
            let v = if chain.label_of(i) != chain.label_of(j) {
                Rational::one()
            } else if partition.same_block(i, j) {
                Rational::zero()
            } else {
                kantorovich(alpha, &chain.dense_row(i), &chain.dense_row(j), d, mode)
            };
            ((i, j), v)
        })
        .collect();
    let mut next = DistanceMatrix::zero(n);
    for ((i, j), v) in computed {
        next.set_sym(i, j, v);
    }
    next
}

/// Upper-bound artifact: a matrix the distance operator maps below itself,
/// entrywise, at the stored skew. `checked` is set only by verification,
/// never by parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub alpha: Alpha,
    pub d: DistanceMatrix,
    pub checked: bool,
}

impl Certificate {
    /// Renders the chain-format header, the skew factor, and one line per
    /// unordered state pair, diagonal included.
    pub fn to_text(&self, chain: &Lmc) -> String {
        let n = self.d.dim();
        assert_eq!(n, chain.num_states());
        let mut out = String::from("lmc v1\n");
        out.push_str(&format!("alpha {}\n", self.alpha.value()));
        for i in 0..n {
            for j in i..n {
                out.push_str(&format!(
                    "d {} {} {}\n",
                    chain.state_name(i),
                    chain.state_name(j),
                    self.d.get(i, j)
                ));
            }
        }
        out
    }

    /// Reads the format written by [`Certificate::to_text`]. Requires every
    /// unordered pair exactly once and one `alpha` line; `#` starts a
    /// comment. The result is unverified.
    pub fn parse(text: &str, chain: &Lmc) -> Result<Certificate, CertificateError> {
        let n = chain.num_states();
        let syntax = |line: usize, msg: &str| CertificateError::Syntax {
            line,
            msg: msg.to_string(),
        };
        let mut header_seen = false;
        let mut alpha: Option<Alpha> = None;
        let mut entries: Vec<Option<Rational>> = vec![None; n * n];
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = raw.split('#').next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }
            if !header_seen {
                if stripped != "lmc v1" {
                    return Err(syntax(line, "expected header \"lmc v1\""));
                }
                header_seen = true;
                continue;
            }
            let mut tokens = stripped.split_whitespace();
            match tokens.next() {
                Some("alpha") => {
                    let value = tokens.next().ok_or_else(|| syntax(line, "alpha needs a value"))?;
                    if tokens.next().is_some() {
                        return Err(syntax(line, "trailing tokens after alpha"));
                    }
                    if alpha.is_some() {
                        return Err(syntax(line, "alpha given twice"));
                    }
                    let r: Rational = value
                        .parse()
                        .map_err(|_| syntax(line, "alpha is not a rational"))?;
                    alpha = Some(Alpha::new(r).map_err(|e| CertificateError::BadAlpha(e.0))?);
                }
                Some("d") => {
                    let (a, b, value) = match (tokens.next(), tokens.next(), tokens.next()) {
                        (Some(a), Some(b), Some(v)) => (a, b, v),
                        _ => return Err(syntax(line, "expected: d <state> <state> <rational>")),
                    };
                    if tokens.next().is_some() {
                        return Err(syntax(line, "trailing tokens after distance"));
                    }
                    let i = chain
                        .state_index(a)
                        .ok_or_else(|| CertificateError::UnknownState {
                            line,
                            name: a.to_string(),
                        })?;
                    let j = chain
                        .state_index(b)
                        .ok_or_else(|| CertificateError::UnknownState {
                            line,
                            name: b.to_string(),
                        })?;
                    let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
                    if entries[lo * n + hi].is_some() {
                        return Err(CertificateError::DuplicateEntry {
                            line,
                            a: chain.state_name(lo).to_string(),
                            b: chain.state_name(hi).to_string(),
                        });
                    }
                    let r: Rational = value
                        .parse()
                        .map_err(|_| syntax(line, "distance is not a rational"))?;
                    entries[lo * n + hi] = Some(r);
                }
                Some(other) => {
                    return Err(syntax(line, &format!("unknown directive {other:?}")));
                }
                None => unreachable!("stripped line is nonempty"),
            }
        }
        if !header_seen {
            return Err(syntax(1, "missing header \"lmc v1\""));
        }
        let alpha = alpha.ok_or(CertificateError::MissingAlpha)?;
        let mut d = DistanceMatrix::zero(n);
        for i in 0..n {
            for j in i..n {
                let v = entries[i * n + j]
                    .take()
                    .ok_or_else(|| CertificateError::MissingEntry {
                        a: chain.state_name(i).to_string(),
                        b: chain.state_name(j).to_string(),
                    })?;
                d.set(i, j, v.clone());
                d.set(j, i, v);
            }
        }
        Ok(Certificate {
            alpha,
            d,
            checked: false,
        })
    }
}

#[derive(Debug, Error)]
pub enum CertificateError {
    #[error("matrix is {got}x{got} but the chain has {expected} states")]
    Dimension { expected: usize, got: usize },
    #[error("certificate line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("certificate line {line}: unknown state {name:?}")]
    UnknownState { line: usize, name: String },
    #[error("certificate line {line}: pair {a:?} {b:?} given twice")]
    DuplicateEntry { line: usize, a: String, b: String },
    #[error("no distance given for pair {a:?} {b:?}")]
    MissingEntry { a: String, b: String },
    #[error("certificate has no alpha line")]
    MissingAlpha,
    #[error("skew factor must be at least 1, got {0}")]
    BadAlpha(Rational),
}

/// One reason a matrix fails verification. Indices refer to chain states.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CertificateFailure {
    #[error("entries ({i}, {j}) and ({j}, {i}) differ")]
    Asymmetric { i: StateId, j: StateId },
    #[error("entry ({i}, {j}) = {value} lies outside [0, 1]")]
    OutOfRange {
        i: StateId,
        j: StateId,
        value: Rational,
    },
    #[error("labels differ at ({i}, {j}) but the entry is {value}, not 1")]
    MismatchEntry {
        i: StateId,
        j: StateId,
        value: Rational,
    },
    #[error("operator reaches {operator_value} at ({i}, {j}), above the entry {entry}")]
    NotPreFixed {
        i: StateId,
        j: StateId,
        entry: Rational,
        operator_value: Rational,
    },
}

#[derive(Debug, Clone)]
pub struct CertificateReport {
    pub certificate: Certificate,
    pub failures: Vec<CertificateFailure>,
}

/// Verifies that the operator maps `d` below itself and that mismatching
/// labels sit at exactly 1. Structural problems short-circuit; otherwise
/// every same-label pair is certified in both orientations by a coupling
/// witness whose feasibility and cost are re-validated here.
pub fn check_certificate_detailed(
    alpha: &Alpha,
    chain: &Lmc,
    d: DistanceMatrix,
) -> Result<CertificateReport, CertificateError> {
    let n = chain.num_states();
    if d.dim() != n {
        return Err(CertificateError::Dimension {
            expected: n,
            got: d.dim(),
        });
    }
    let one = Rational::one();
    let mut failures = Vec::new();
    for i in 0..n {
        for j in i..n {
            let v = d.get(i, j);
            if i < j && v != d.get(j, i) {
                failures.push(CertificateFailure::Asymmetric { i, j });
            }
            if v.is_negative() || *v > one {
                failures.push(CertificateFailure::OutOfRange {
                    i,
                    j,
                    value: v.clone(),
                });
            }
            if i < j && chain.label_of(i) != chain.label_of(j) && *v != one {
                failures.push(CertificateFailure::MismatchEntry {
                    i,
                    j,
                    value: v.clone(),
                });
            }
        }
    }
    if !failures.is_empty() {
        return Ok(CertificateReport {
            certificate: Certificate {
                alpha: alpha.clone(),
                d,
                checked: false,
            },
            failures,
        });
    }
    // The diagonal needs no solve: a state against itself has operator
    // value 0, below any in-range entry.
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .filter(|&(i, j)| chain.label_of(i) == chain.label_of(j))
        .collect();
    let failures: Vec<CertificateFailure> = pairs
        .into_par_iter()
        .flat_map_iter(|(i, j)| {
            let entry = d.get(i, j).clone();
            let mu = chain.dense_row(i);
            let nu = chain.dense_row(j);
            let mut out = Vec::new();
            for (a, b) in [(&mu, &nu), (&nu, &mu)] {
                if let Some(operator_value) = orientation_exceeds(alpha, a, b, &d, &entry) {
                    out.push(CertificateFailure::NotPreFixed {
                        i,
                        j,
                        entry: entry.clone(),
                        operator_value,
                    });
                }
            }
            out
        })
        .collect();
    let checked = failures.is_empty();
    Ok(CertificateReport {
        certificate: Certificate {
            alpha: alpha.clone(),
            d,
            checked,
        },
        failures,
    })
}

/// See [`check_certificate_detailed`]; discards the failure list.
pub fn check_certificate(
    alpha: &Alpha,
    chain: &Lmc,
    d: DistanceMatrix,
) -> Result<Certificate, CertificateError> {
    check_certificate_detailed(alpha, chain, d).map(|r| r.certificate)
}

/// Upper-bounds the operator value of one orientation and compares it with
/// `entry`. Closed-form feasible couplings are tried before the LP: any
/// coupling costs at most 1, identical rows admit the identity coupling,
/// and the product coupling is cheap whenever `d` vanishes on the joint
/// support. Returns the violating bound if none stays within `entry`.
fn orientation_exceeds(
    alpha: &Alpha,
    mu: &[Rational],
    nu: &[Rational],
    d: &DistanceMatrix,
    entry: &Rational,
) -> Option<Rational> {
    let one = Rational::one();
    if *entry >= one {
        return None;
    }
    let n = mu.len();
    if mu == nu {
        let cost: Rational = (0..n).map(|i| &mu[i] * d.get(i, i)).sum();
        if cost <= *entry {
            return None;
        }
    }
    let mut product_cost = Rational::zero();
    for (i, mi) in mu.iter().enumerate() {
        if mi.is_zero() {
            continue;
        }
        for (j, nj) in nu.iter().enumerate() {
            if nj.is_zero() {
                continue;
            }
            product_cost = &product_cost + &(&(mi * nj) * d.get(i, j));
        }
    }
    if product_cost <= *entry {
        return None;
    }
    let (value, witness) = dual_branch(alpha, mu, nu, d);
    assert!(
        witness.check_feasible(alpha, mu, nu),
        "solver returned an infeasible coupling witness"
    );
    assert_eq!(
        witness.objective(d),
        value,
        "witness cost drifted from the solved objective"
    );
    if value <= *entry {
        None
    } else {
        Some(value)
    }
}

/// Two-sided enclosure of the distance matrix: `lower` is an iterate,
/// `upper` the matrix of a checked certificate, so the distance lies
/// between them pointwise.
#[derive(Debug, Clone)]
pub struct Bounds {
    pub lower: DistanceMatrix,
    pub upper: DistanceMatrix,
    /// Operator applications spent producing `lower`.
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub enum ExactOutcome {
    /// The enclosure collapsed at the queried pair.
    Exact {
        value: Rational,
        bounds: Bounds,
        certificate: Certificate,
    },
    /// Honest enclosure; the queried entry is not pinned down exactly.
    BoundsOnly {
        bounds: Bounds,
        certificate: Certificate,
    },
}

impl ExactOutcome {
    pub fn bounds(&self) -> &Bounds {
        match self {
            ExactOutcome::Exact { bounds, .. } => bounds,
            ExactOutcome::BoundsOnly { bounds, .. } => bounds,
        }
    }

    pub fn certificate(&self) -> &Certificate {
        match self {
            ExactOutcome::Exact { certificate, .. } => certificate,
            ExactOutcome::BoundsOnly { certificate, .. } => certificate,
        }
    }

    pub fn value(&self) -> Option<&Rational> {
        match self {
            ExactOutcome::Exact { value, .. } => Some(value),
            ExactOutcome::BoundsOnly { .. } => None,
        }
    }
}

struct Resolution {
    bounds: Bounds,
    certificate: Certificate,
    /// Slot `i * n + j` is true when the entry is known to equal the
    /// distance.
    exact: Vec<bool>,
}

/// Shared engine behind [`exact_value`] and [`delta_bound`]. Iterates the
/// operator; once the step change fits under the current slack, guesses the
/// limit by rounding every entry to the simplest rational within the slack.
/// A guess repeated at two consecutive slack levels is submitted for
/// certification; success collapses the enclosure. Exhaustion falls back to
/// the best certifiable upper matrix, at worst all ones off the diagonal.
fn resolve(alpha: &Alpha, chain: &Lmc, budget: &Budget, mode: KantorovichMode) -> Resolution {
    let n = chain.num_states();
    let partition = chain.bisimilarity_partition();
    let half = Rational::new(1, 2);
    let mut lower = DistanceMatrix::zero(n);
    let mut iterations = 0;
    let mut slack = if budget.initial_slack < budget.stop_gap {
        budget.stop_gap.clone()
    } else {
        budget.initial_slack.clone()
    };
    let mut prev_candidate: Option<DistanceMatrix> = None;
    let mut failed_candidate: Option<DistanceMatrix> = None;
    for iteration in 1..=budget.max_iters {
        let next = step_pinned(alpha, chain, &lower, mode, &partition);
        let gap = next.max_diff(&lower);
        lower = next;
        iterations = iteration;
        if gap.is_zero() {
            // The iterate reproduced itself: it is the least fixed point
            // and certifies its own upper bound.
            let certificate =
                check_certificate(alpha, chain, lower.clone()).expect("dimensions match");
            if certificate.checked {
                return Resolution {
                    bounds: Bounds {
                        lower: lower.clone(),
                        upper: lower,
                        iterations,
                    },
                    certificate,
                    exact: vec![true; n * n],
                };
            }
            break;
        }
        if gap <= slack {
            let candidate = round_iterate(&lower, &slack);
            if prev_candidate.as_ref() == Some(&candidate)
                && failed_candidate.as_ref() != Some(&candidate)
            {
                let certificate =
                    check_certificate(alpha, chain, candidate.clone()).expect("dimensions match");
                if certificate.checked {
                    return Resolution {
                        bounds: Bounds {
                            lower,
                            upper: candidate,
                            iterations,
                        },
                        certificate,
                        exact: vec![true; n * n],
                    };
                }
                failed_candidate = Some(candidate.clone());
            }
            prev_candidate = Some(candidate);
            if slack > budget.stop_gap {
                slack = &slack * &half;
                if slack < budget.stop_gap {
                    slack = budget.stop_gap.clone();
                }
            } else if gap <= budget.stop_gap {
                break;
            }
        }
    }
    let mut certified: Option<Certificate> = None;
    if let Some(c) = prev_candidate {
        if failed_candidate.as_ref() != Some(&c) {
            let cert = check_certificate(alpha, chain, c).expect("dimensions match");
            if cert.checked {
                certified = Some(cert);
            }
        }
    }
    let certificate = match certified {
        Some(c) => c,
        None => {
            let ones = DistanceMatrix::from_fn(n, |_, _| Rational::one());
            let cert = check_certificate(alpha, chain, ones).expect("dimensions match");
            debug_assert!(cert.checked, "all-ones matrix always verifies");
            cert
        }
    };
    let upper = certificate.d.clone();
    let mut exact = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            // A collapsed enclosure entry is exact even without stability.
            exact[i * n + j] = lower.get(i, j) == upper.get(i, j);
        }
    }
    Resolution {
        bounds: Bounds {
            lower,
            upper,
            iterations,
        },
        certificate,
        exact,
    }
}

/// Simplest rational within `slack` above each entry, capped at 1. The
/// diagonal stays at zero.
fn round_iterate(lower: &DistanceMatrix, slack: &Rational) -> DistanceMatrix {
    let one = Rational::one();
    DistanceMatrix::from_fn(lower.dim(), |i, j| {
        let lo = lower.get(i, j);
        let mut hi = lo + slack;
        if hi > one {
            hi = one.clone();
        }
        best_rational_in_interval(lo, &hi)
    })
}

/// Resolves one pair of states to a certified value where possible,
/// otherwise to an honest enclosure. Never claims an exact value that is
/// not backed by a checked certificate.
pub fn exact_value(
    alpha: &Alpha,
    chain: &Lmc,
    s: StateId,
    s_prime: StateId,
    budget: &Budget,
    mode: KantorovichMode,
) -> ExactOutcome {
    let n = chain.num_states();
    assert!(s < n && s_prime < n, "state index out of range");
    let r = resolve(alpha, chain, budget, mode);
    if r.exact[s * n + s_prime] {
        ExactOutcome::Exact {
            value: r.bounds.upper.get(s, s_prime).clone(),
            bounds: r.bounds,
            certificate: r.certificate,
        }
    } else {
        ExactOutcome::BoundsOnly {
            bounds: r.bounds,
            certificate: r.certificate,
        }
    }
}

#[derive(Debug, Clone)]
pub enum ThresholdResult {
    /// A checked certificate puts the pair at or below the threshold.
    Yes { certificate: Certificate },
    /// A lower iterate already exceeds the threshold.
    No { iteration: usize, value: Rational },
    /// Budget ran out with the enclosure straddling the threshold.
    Unknown { bounds: Bounds },
}

impl ThresholdResult {
    pub fn answer(&self) -> &'static str {
        match self {
            ThresholdResult::Yes { .. } => "yes",
            ThresholdResult::No { .. } => "no",
            ThresholdResult::Unknown { .. } => "unknown",
        }
    }
}

/// Decides whether the distance of a pair is at most `theta`. Yes answers
/// carry a checked certificate, no answers the first refuting iterate;
/// unknown is returned only when the budget runs out with the enclosure
/// straddling the threshold.
pub fn threshold(
    alpha: &Alpha,
    chain: &Lmc,
    s: StateId,
    s_prime: StateId,
    theta: &Rational,
    budget: &Budget,
    mode: KantorovichMode,
) -> ThresholdResult {
    let n = chain.num_states();
    assert!(s < n && s_prime < n, "state index out of range");
    assert!(
        !theta.is_negative() && *theta <= Rational::one(),
        "threshold must lie in [0, 1]"
    );
    // Queries the trivial bound already answers skip the iteration.
    let ones = DistanceMatrix::from_fn(n, |_, _| Rational::one());
    if ones.get(s, s_prime) <= theta {
        let certificate = check_certificate(alpha, chain, ones).expect("dimensions match");
        if certificate.checked {
            return ThresholdResult::Yes { certificate };
        }
    }
    let partition = chain.bisimilarity_partition();
    let half = Rational::new(1, 2);
    let mut lower = DistanceMatrix::zero(n);
    let mut iterations = 0;
    let mut slack = if budget.initial_slack < budget.stop_gap {
        budget.stop_gap.clone()
    } else {
        budget.initial_slack.clone()
    };
    let mut failed_candidate: Option<DistanceMatrix> = None;
    let mut passed_candidate: Option<DistanceMatrix> = None;
    let mut best_upper: Option<Certificate> = None;
    for iteration in 1..=budget.max_iters {
        let next = step_pinned(alpha, chain, &lower, mode, &partition);
        let gap = next.max_diff(&lower);
        lower = next;
        iterations = iteration;
        if lower.get(s, s_prime) > theta {
            return ThresholdResult::No {
                iteration,
                value: lower.get(s, s_prime).clone(),
            };
        }
        if gap.is_zero() {
            let certificate =
                check_certificate(alpha, chain, lower.clone()).expect("dimensions match");
            if certificate.checked {
                // The fixed point itself survived the refutation test above.
                return ThresholdResult::Yes { certificate };
            }
            break;
        }
        if gap <= slack {
            // Unlike exact resolution, any checked certificate within the
            // threshold settles the query, so candidates are submitted
            // without waiting for stability.
            let candidate = round_iterate(&lower, &slack);
            let known = failed_candidate.as_ref() == Some(&candidate)
                || passed_candidate.as_ref() == Some(&candidate);
            if !known {
                let certificate =
                    check_certificate(alpha, chain, candidate.clone()).expect("dimensions match");
                if certificate.checked {
                    if certificate.d.get(s, s_prime) <= theta {
                        return ThresholdResult::Yes { certificate };
                    }
                    passed_candidate = Some(candidate.clone());
                    best_upper = Some(certificate);
                } else {
                    failed_candidate = Some(candidate.clone());
                }
            }
            if slack > budget.stop_gap {
                slack = &slack * &half;
                if slack < budget.stop_gap {
                    slack = budget.stop_gap.clone();
                }
            } else if gap <= budget.stop_gap {
                break;
            }
        }
    }
    let upper = match best_upper {
        Some(c) => c.d,
        None => DistanceMatrix::from_fn(n, |_, _| Rational::one()),
    };
    ThresholdResult::Unknown {
        bounds: Bounds {
            lower,
            upper,
            iterations,
        },
    }
}

/// Certified leakage bound for one pair of start states.
#[derive(Debug, Clone)]
pub struct PairDelta {
    pub pair: (StateId, StateId),
    pub delta: Rational,
    /// True when the bound is known to equal the distance.
    pub exact: bool,
}

#[derive(Debug, Clone)]
pub struct DeltaReport {
    pub alpha: Alpha,
    pub pairs: Vec<PairDelta>,
    pub max_delta: Rational,
    pub certificate: Certificate,
    pub bounds: Bounds,
}

/// Certified per-pair upper bounds on the distance at a fixed skew, plus
/// their maximum.
pub fn delta_bound(
    alpha: &Alpha,
    chain: &Lmc,
    pairs: &[(StateId, StateId)],
    budget: &Budget,
    mode: KantorovichMode,
) -> DeltaReport {
    let n = chain.num_states();
    assert!(!pairs.is_empty(), "at least one pair is required");
    for &(a, b) in pairs {
        assert!(a < n && b < n, "state index out of range");
    }
    let r = resolve(alpha, chain, budget, mode);
    let per: Vec<PairDelta> = pairs
        .iter()
        .map(|&(a, b)| PairDelta {
            pair: (a, b),
            delta: r.bounds.upper.get(a, b).clone(),
            exact: r.exact[a * n + b],
        })
        .collect();
    let max_delta = per.iter().map(|p| p.delta.clone()).max().unwrap();
    DeltaReport {
        alpha: alpha.clone(),
        pairs: per,
        max_delta,
        certificate: r.certificate,
        bounds: r.bounds,
    }
}

/// Like [`delta_bound`], with the skew taken as a rational lower bound on
/// exp(epsilon): `terms` picks a truncated series, `None` a series cut off
/// below a fixed tolerance. Shrinking the skew only loosens the bound, so
/// the result stays a sound bound for the requested epsilon.
pub fn delta_bound_for_epsilon(
    chain: &Lmc,
    epsilon: &Rational,
    pairs: &[(StateId, StateId)],
    terms: Option<u32>,
    budget: &Budget,
    mode: KantorovichMode,
) -> DeltaReport {
    assert!(!epsilon.is_negative(), "epsilon must be nonnegative");
    let approx = match terms {
        Some(t) => taylor_lower_bound_exp(epsilon, t),
        None => exp_lower_bound(epsilon),
    };
    let alpha = Alpha::new(approx).expect("series lower bound is at least one");
    delta_bound(&alpha, chain, pairs, budget, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kantorovich::kantorovich_step;
    use crate::modelgen::{generate_dining, DiningConfig};

    const SWAP_PAIR: &str = "\
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

    const RECOVERY: &str = "\
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

    fn rat(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    fn alpha(n: i64, d: i64) -> Alpha {
        Alpha::new(rat(n, d)).unwrap()
    }

    fn swap_pair() -> Lmc {
        Lmc::parse(SWAP_PAIR).unwrap()
    }

    fn recovery() -> Lmc {
        Lmc::parse(RECOVERY).unwrap()
    }

    fn dining(p_num: i64) -> Lmc {
        generate_dining(&DiningConfig {
            participants: 2,
            coin_bias: rat(p_num, 100),
        })
        .unwrap()
        .lmc
    }

    #[test]
    fn kleene_trajectories_on_the_four_state_chain() {
        let m = swap_pair();
        let skewed = kleene_iterate(
            &alpha(3, 2),
            &m,
            100,
            &Rational::pow2(-64),
            KantorovichMode::Primal,
        );
        assert!(skewed.converged);
        assert_eq!(skewed.iterates.len(), 2);
        assert_eq!(skewed.iterates[0].max_change, rat(1, 1));
        assert!(skewed.iterates[1].max_change.is_zero());
        assert!(skewed.lower.get(0, 1).is_zero());
        assert_eq!(*skewed.lower.get(0, 2), rat(1, 1));
        assert_eq!(*skewed.lower.get(2, 3), rat(1, 1));

        let plain = kleene_iterate(
            &Alpha::one(),
            &m,
            100,
            &Rational::pow2(-64),
            KantorovichMode::Primal,
        );
        assert!(plain.converged);
        assert_eq!(plain.iterates.len(), 3);
        assert_eq!(*plain.lower.get(0, 1), rat(1, 5));
    }

    #[test]
    fn kleene_stops_at_the_gap() {
        let m = recovery();
        let r = kleene_iterate(
            &Alpha::one(),
            &m,
            100,
            &rat(1, 100),
            KantorovichMode::Primal,
        );
        assert!(!r.converged);
        assert_eq!(r.iterates.len(), 5);
        assert_eq!(*r.lower.get(0, 1), rat(85, 256));
        assert_eq!(r.iterates[4].max_change, rat(1, 256));
    }

    #[test]
    fn pinning_matches_the_plain_step() {
        let m = dining(50);
        let two = kleene_iterate(
            &alpha(3, 2),
            &m,
            2,
            &Rational::zero(),
            KantorovichMode::Primal,
        );
        let mut plain = DistanceMatrix::zero(m.num_states());
        plain = kantorovich_step(&alpha(3, 2), &m, &plain, KantorovichMode::Primal);
        plain = kantorovich_step(&alpha(3, 2), &m, &plain, KantorovichMode::Primal);
        assert_eq!(two.lower, plain);
    }

    #[test]
    fn exact_values_on_the_four_state_chain() {
        let m = swap_pair();
        let r = exact_value(&alpha(3, 2), &m, 0, 1, &Budget::default(), KantorovichMode::Primal);
        match &r {
            ExactOutcome::Exact {
                value,
                bounds,
                certificate,
            } => {
                assert!(value.is_zero());
                assert!(certificate.checked);
                assert_eq!(bounds.lower, bounds.upper);
                assert_eq!(bounds.iterations, 2);
            }
            other => panic!("expected exact zero, got {other:?}"),
        }

        let plain = exact_value(&Alpha::one(), &m, 0, 1, &Budget::default(), KantorovichMode::Primal);
        assert_eq!(plain.value(), Some(&rat(1, 5)));

        let mismatch = exact_value(&alpha(3, 2), &m, 0, 2, &Budget::default(), KantorovichMode::Primal);
        assert_eq!(mismatch.value(), Some(&rat(1, 1)));

        let diagonal = exact_value(&alpha(3, 2), &m, 2, 2, &Budget::default(), KantorovichMode::Primal);
        assert_eq!(diagonal.value(), Some(&Rational::zero()));
    }

    #[test]
    fn rounding_recovers_the_geometric_limit() {
        let m = recovery();
        for a in [Alpha::one(), alpha(2, 1)] {
            let r = exact_value(&a, &m, 0, 1, &Budget::default(), KantorovichMode::Primal);
            match &r {
                ExactOutcome::Exact {
                    value,
                    bounds,
                    certificate,
                } => {
                    assert_eq!(*value, rat(1, 3));
                    assert!(certificate.checked);
                    assert_eq!(*certificate.d.get(0, 1), rat(1, 3));
                    // The iterates approach 1/3 strictly from below.
                    assert!(*bounds.lower.get(0, 1) < rat(1, 3));
                    assert_eq!(bounds.iterations, 7);
                }
                other => panic!("expected exact 1/3, got {other:?}"),
            }
        }
    }

    #[test]
    fn skewed_leak_of_the_biased_protocol() {
        let m = dining(49);
        let s0 = m.state_index("start0").unwrap();
        let s1 = m.state_index("start1").unwrap();
        let r = exact_value(
            &alpha(10002, 10000),
            &m,
            s0,
            s1,
            &Budget::default(),
            KantorovichMode::Primal,
        );
        match &r {
            ExactOutcome::Exact {
                value,
                bounds,
                certificate,
            } => {
                assert_eq!(*value, rat(1, 2500));
                assert!(certificate.checked);
                assert_eq!(bounds.iterations, 3);
            }
            other => panic!("expected exact 1/2500, got {other:?}"),
        }
    }

    #[test]
    fn fair_protocol_start_states_stay_at_zero() {
        let m = dining(50);
        let s0 = m.state_index("start0").unwrap();
        let s1 = m.state_index("start1").unwrap();
        for a in [Alpha::one(), alpha(3, 2)] {
            let r = exact_value(&a, &m, s0, s1, &Budget::default(), KantorovichMode::Primal);
            assert_eq!(r.value(), Some(&Rational::zero()));
        }
    }

    #[test]
    fn certificate_text_round_trips() {
        let m = swap_pair();
        let r = exact_value(&Alpha::one(), &m, 0, 1, &Budget::default(), KantorovichMode::Primal);
        let cert = r.certificate();
        let text = cert.to_text(&m);
        let parsed = Certificate::parse(&text, &m).unwrap();
        assert!(!parsed.checked);
        assert_eq!(parsed.alpha, cert.alpha);
        assert_eq!(parsed.d, cert.d);
        let rechecked = check_certificate(&parsed.alpha, &m, parsed.d).unwrap();
        assert!(rechecked.checked);
    }

    #[test]
    fn certificate_parse_rejects_malformed_input() {
        let m = swap_pair();
        let good = exact_value(&Alpha::one(), &m, 0, 1, &Budget::default(), KantorovichMode::Primal)
            .certificate()
            .to_text(&m);

        let headerless = good.replace("lmc v1\n", "");
        assert!(matches!(
            Certificate::parse(&headerless, &m),
            Err(CertificateError::Syntax { .. })
        ));

        let unknown = good.replace("d s0 s1", "d s0 zz");
        assert!(matches!(
            Certificate::parse(&unknown, &m),
            Err(CertificateError::UnknownState { .. })
        ));

        let duplicated = format!("{good}d s1 s0 1/5\n");
        assert!(matches!(
            Certificate::parse(&duplicated, &m),
            Err(CertificateError::DuplicateEntry { .. })
        ));

        let missing: String = good
            .lines()
            .filter(|l| !l.starts_with("d s0 s3"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(matches!(
            Certificate::parse(&missing, &m),
            Err(CertificateError::MissingEntry { .. })
        ));

        let no_alpha: String = good
            .lines()
            .filter(|l| !l.starts_with("alpha"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(matches!(
            Certificate::parse(&no_alpha, &m),
            Err(CertificateError::MissingAlpha)
        ));

        let small_alpha = good.replace("alpha 1", "alpha 1/2");
        assert!(matches!(
            Certificate::parse(&small_alpha, &m),
            Err(CertificateError::BadAlpha(_))
        ));
    }

    #[test]
    fn lowering_any_positive_entry_breaks_certification() {
        let m = swap_pair();
        let a = Alpha::one();
        let r = exact_value(&a, &m, 0, 1, &Budget::default(), KantorovichMode::Primal);
        let fixed = r.certificate().d.clone();
        let n = fixed.dim();
        let mut tampered_pairs = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                if fixed.get(i, j).is_zero() {
                    continue;
                }
                let mut worse = fixed.clone();
                worse.set_sym(i, j, fixed.get(i, j) * &rat(9, 10));
                let report = check_certificate_detailed(&a, &m, worse).unwrap();
                assert!(!report.certificate.checked, "lowered ({i}, {j}) still passed");
                assert!(!report.failures.is_empty());
                tampered_pairs += 1;
            }
        }
        assert_eq!(tampered_pairs, 6);

        let ones = DistanceMatrix::from_fn(n, |_, _| Rational::one());
        assert!(check_certificate(&a, &m, ones).unwrap().checked);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let m = swap_pair();
        let wrong = DistanceMatrix::zero(3);
        assert!(matches!(
            check_certificate(&Alpha::one(), &m, wrong),
            Err(CertificateError::Dimension {
                expected: 4,
                got: 3
            })
        ));
    }

    #[test]
    fn threshold_on_the_biased_protocol() {
        let m = dining(49);
        let a = alpha(10002, 10000);
        let s0 = m.state_index("start0").unwrap();
        let s1 = m.state_index("start1").unwrap();
        let budget = Budget::default();

        match threshold(&a, &m, s0, s1, &rat(1, 2500), &budget, KantorovichMode::Primal) {
            ThresholdResult::Yes { certificate } => {
                assert!(certificate.checked);
                assert!(certificate.d.get(s0, s1) <= &rat(1, 2500));
            }
            other => panic!("expected yes, got {other:?}"),
        }

        match threshold(&a, &m, s0, s1, &rat(3, 10000), &budget, KantorovichMode::Primal) {
            ThresholdResult::No { iteration, value } => {
                assert_eq!(iteration, 2);
                assert_eq!(value, rat(1, 2500));
            }
            other => panic!("expected no, got {other:?}"),
        }

        match threshold(&a, &m, s0, s1, &Rational::one(), &budget, KantorovichMode::Primal) {
            ThresholdResult::Yes { certificate } => assert!(certificate.checked),
            other => panic!("expected yes, got {other:?}"),
        }
    }

    #[test]
    fn threshold_zero_on_a_zero_distance_pair() {
        let m = swap_pair();
        match threshold(
            &alpha(3, 2),
            &m,
            0,
            1,
            &Rational::zero(),
            &Budget::default(),
            KantorovichMode::Primal,
        ) {
            ThresholdResult::Yes { certificate } => {
                assert!(certificate.d.get(0, 1).is_zero());
            }
            other => panic!("expected yes, got {other:?}"),
        }
    }

    #[test]
    fn starved_budget_reports_unknown() {
        let m = recovery();
        let budget = Budget {
            max_iters: 3,
            ..Budget::default()
        };
        match threshold(
            &Alpha::one(),
            &m,
            0,
            1,
            &rat(1, 3),
            &budget,
            KantorovichMode::Primal,
        ) {
            ThresholdResult::Unknown { bounds } => {
                assert!(bounds.lower.get(0, 1) <= &rat(1, 3));
                assert!(bounds.upper.get(0, 1) > &rat(1, 3));
                assert_eq!(bounds.iterations, 3);
            }
            other => panic!("expected unknown, got {other:?}"),
        }
    }

    #[test]
    fn leakage_bounds_for_reported_scenarios() {
        let m = dining(49);
        let s0 = m.state_index("start0").unwrap();
        let s1 = m.state_index("start1").unwrap();
        let report = delta_bound(
            &alpha(10002, 10000),
            &m,
            &[(s0, s1)],
            &Budget::default(),
            KantorovichMode::Primal,
        );
        assert_eq!(report.max_delta, rat(1, 2500));
        assert_eq!(report.pairs.len(), 1);
        assert!(report.pairs[0].exact);
        assert!(report.certificate.checked);

        let plain = delta_bound_for_epsilon(
            &swap_pair(),
            &Rational::zero(),
            &[(0, 1)],
            None,
            &Budget::default(),
            KantorovichMode::Primal,
        );
        assert!(plain.alpha.is_one());
        assert_eq!(plain.max_delta, rat(1, 5));
        assert!(plain.pairs[0].exact);
    }

    #[test]
    fn epsilon_skew_comes_from_the_series_bound() {
        let eps = rat(1, 10);
        let report = delta_bound_for_epsilon(
            &swap_pair(),
            &eps,
            &[(0, 1)],
            Some(4),
            &Budget::default(),
            KantorovichMode::Primal,
        );
        assert_eq!(*report.alpha.value(), taylor_lower_bound_exp(&eps, 4));
        assert!(*report.alpha.value() >= Rational::one());
        assert!(report.max_delta <= rat(1, 5));
    }
}
