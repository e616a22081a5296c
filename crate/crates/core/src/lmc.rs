//! Labelled Markov chains: parsing, validation, finite-horizon trace
//! distributions, and probabilistic bisimulation.
//!
//! A chain is a finite state set, a label per state drawn from a declared
//! alphabet, and an exactly row-stochastic transition function. States and
//! labels are referred to by dense indices internally; the declaration order
//! in the input fixes the indices.

use crate::rational::Rational;
use serde::{Deserialize, Serialize};
use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use thiserror::Error;

pub type StateId = usize;
pub type LabelId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LmcError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown state {name:?}")]
    UnknownState { line: usize, name: String },
    #[error("line {line}: unknown label {name:?}")]
    UnknownLabel { line: usize, name: String },
    #[error("line {line}: duplicate state {name:?}")]
    DuplicateState { line: usize, name: String },
    #[error("line {line}: duplicate alphabet symbol {name:?}")]
    DuplicateSymbol { line: usize, name: String },
    #[error("line {line}: duplicate transition {from:?} -> {to:?}")]
    DuplicateTransition { line: usize, from: String, to: String },
    #[error("state {state:?}: outgoing probabilities sum to {sum}, expected 1")]
    NotStochastic { state: String, sum: Rational },
    #[error("transition {from:?} -> {to:?} has probability {prob} outside [0, 1]")]
    ProbabilityRange { from: String, to: String, prob: Rational },
    #[error("chain has no states")]
    Empty,
    #[error("alphabet is empty")]
    EmptyAlphabet,
    #[error("state name {name:?} contains a reserved character")]
    BadName { name: String },
    #[error("horizon distribution grew to {entries} traces, over the limit of {limit}")]
    ExplosionLimit { entries: usize, limit: usize },
    #[error("invalid JSON: {0}")]
    Json(String),
}

#[derive(Debug, Clone)]
struct StateInfo {
    name: String,
    label: LabelId,
}

/// Finite labelled Markov chain with exact rational transition probabilities.
#[derive(Debug, Clone)]
pub struct Lmc {
    alphabet: Vec<String>,
    states: Vec<StateInfo>,
    // Sparse rows sorted by target index; omitted entries are zero.
    rows: Vec<Vec<(StateId, Rational)>>,
    name_index: HashMap<String, StateId>,
}

impl Lmc {
    /// Builds and validates a chain from explicit parts. Transition lists may
    /// be in any order and omit zero entries; each row must sum to exactly 1.
    pub fn new(
        alphabet: Vec<String>,
        states: Vec<(String, String)>,
        transitions: Vec<(String, String, Rational)>,
    ) -> Result<Self, LmcError> {
        let mut text = String::from("lmc v1\n");
        text.push_str("alphabet");
        for a in &alphabet {
            text.push(' ');
            text.push_str(a);
        }
        text.push('\n');
        for (name, label) in &states {
            let _ = writeln!(text, "state {} {}", name, label);
        }
        for (from, to, prob) in &transitions {
            let _ = writeln!(text, "trans {} {} {}", from, to, prob);
        }
        Self::parse(&text)
    }

    /// Parses the line-oriented text format:
    ///
    /// ```text
    /// lmc v1
    /// alphabet a b c
    /// state s0 a
    /// trans s0 s2 2/5
    /// ```
    ///
    /// `#` starts a comment, blank lines are ignored, declaration order fixes
    /// state and label indices.
    pub fn parse(text: &str) -> Result<Self, LmcError> {
        let mut alphabet: Vec<String> = Vec::new();
        let mut symbol_index: HashMap<String, LabelId> = HashMap::new();
        let mut states: Vec<StateInfo> = Vec::new();
        let mut name_index: HashMap<String, StateId> = HashMap::new();
        let mut rows: Vec<Vec<(StateId, Rational)>> = Vec::new();
        let mut seen_version = false;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let mut tokens = content.split_whitespace();
            let Some(head) = tokens.next() else { continue };
            if !seen_version {
                if head == "lmc" && tokens.next() == Some("v1") && tokens.next().is_none() {
                    seen_version = true;
                    continue;
                }
                return Err(LmcError::Syntax {
                    line,
                    msg: "expected header \"lmc v1\"".into(),
                });
            }
            match head {
                "alphabet" => {
                    for sym in tokens {
                        if symbol_index.contains_key(sym) {
                            return Err(LmcError::DuplicateSymbol {
                                line,
                                name: sym.into(),
                            });
                        }
                        symbol_index.insert(sym.to_string(), alphabet.len());
                        alphabet.push(sym.to_string());
                    }
                }
                "state" => {
                    let (Some(name), Some(label), None) =
                        (tokens.next(), tokens.next(), tokens.next())
                    else {
                        return Err(LmcError::Syntax {
                            line,
                            msg: "expected \"state NAME LABEL\"".into(),
                        });
                    };
                    check_name(name)?;
                    let Some(&label_id) = symbol_index.get(label) else {
                        return Err(LmcError::UnknownLabel {
                            line,
                            name: label.into(),
                        });
                    };
                    if name_index.contains_key(name) {
                        return Err(LmcError::DuplicateState {
                            line,
                            name: name.into(),
                        });
                    }
                    name_index.insert(name.to_string(), states.len());
                    states.push(StateInfo {
                        name: name.to_string(),
                        label: label_id,
                    });
                    rows.push(Vec::new());
                }
                "trans" => {
                    let (Some(from), Some(to), Some(prob), None) =
                        (tokens.next(), tokens.next(), tokens.next(), tokens.next())
                    else {
                        return Err(LmcError::Syntax {
                            line,
                            msg: "expected \"trans FROM TO PROB\"".into(),
                        });
                    };
                    let Some(&from_id) = name_index.get(from) else {
                        return Err(LmcError::UnknownState {
                            line,
                            name: from.into(),
                        });
                    };
                    let Some(&to_id) = name_index.get(to) else {
                        return Err(LmcError::UnknownState {
                            line,
                            name: to.into(),
                        });
                    };
                    let prob: Rational = prob.parse().map_err(|e| LmcError::Syntax {
                        line,
                        msg: format!("bad probability: {}", e),
                    })?;
                    if rows[from_id].iter().any(|(t, _)| *t == to_id) {
                        return Err(LmcError::DuplicateTransition {
                            line,
                            from: from.into(),
                            to: to.into(),
                        });
                    }
                    rows[from_id].push((to_id, prob));
                }
                other => {
                    return Err(LmcError::Syntax {
                        line,
                        msg: format!("unknown directive {:?}", other),
                    });
                }
            }
        }
        if !seen_version {
            return Err(LmcError::Syntax {
                line: 1,
                msg: "expected header \"lmc v1\"".into(),
            });
        }

        let mut chain = Lmc {
            alphabet,
            states,
            rows,
            name_index,
        };
        chain.validate()?;
        for row in &mut chain.rows {
            row.sort_by_key(|(t, _)| *t);
        }
        Ok(chain)
    }

    /// Parses the JSON mirror of the text schema.
    pub fn parse_json(text: &str) -> Result<Self, LmcError> {
        let raw: LmcJson =
            serde_json::from_str(text).map_err(|e| LmcError::Json(e.to_string()))?;
        if raw.version != 1 {
            return Err(LmcError::Json(format!(
                "unsupported version {}",
                raw.version
            )));
        }
        let states = raw
            .states
            .into_iter()
            .map(|s| (s.name, s.label))
            .collect::<Vec<_>>();
        let mut transitions = Vec::new();
        for t in raw.transitions {
            let prob: Rational = t
                .prob
                .parse()
                .map_err(|e| LmcError::Json(format!("bad probability {:?}: {}", t.prob, e)))?;
            transitions.push((t.from, t.to, prob));
        }
        Self::new(raw.alphabet, states, transitions)
    }

    fn validate(&self) -> Result<(), LmcError> {
        if self.states.is_empty() {
            return Err(LmcError::Empty);
        }
        if self.alphabet.is_empty() {
            return Err(LmcError::EmptyAlphabet);
        }
        let one = Rational::one();
        for (s, row) in self.rows.iter().enumerate() {
            let mut sum = Rational::zero();
            for (t, p) in row {
                if p.is_negative() || *p > one {
                    return Err(LmcError::ProbabilityRange {
                        from: self.states[s].name.clone(),
                        to: self.states[*t].name.clone(),
                        prob: p.clone(),
                    });
                }
                sum += p;
            }
            if sum != one {
                return Err(LmcError::NotStochastic {
                    state: self.states[s].name.clone(),
                    sum,
                });
            }
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn state_name(&self, s: StateId) -> &str {
        &self.states[s].name
    }

    pub fn state_index(&self, name: &str) -> Option<StateId> {
        self.name_index.get(name).copied()
    }

    pub fn label_of(&self, s: StateId) -> LabelId {
        self.states[s].label
    }

    pub fn label_name(&self, l: LabelId) -> &str {
        &self.alphabet[l]
    }

    /// Sparse outgoing row of `s`, sorted by target index.
    pub fn row(&self, s: StateId) -> &[(StateId, Rational)] {
        &self.rows[s]
    }

    /// Dense copy of the outgoing row of `s`.
    pub fn dense_row(&self, s: StateId) -> Vec<Rational> {
        let mut out = vec![Rational::zero(); self.num_states()];
        for (t, p) in &self.rows[s] {
            out[*t] = p.clone();
        }
        out
    }

    /// Canonical text form, parseable by [`Lmc::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::from("lmc v1\n");
        out.push_str("alphabet");
        for a in &self.alphabet {
            out.push(' ');
            out.push_str(a);
        }
        out.push('\n');
        for st in &self.states {
            let _ = writeln!(out, "state {} {}", st.name, self.alphabet[st.label]);
        }
        for (s, row) in self.rows.iter().enumerate() {
            for (t, p) in row {
                let _ = writeln!(out, "trans {} {} {}", self.states[s].name, self.states[*t].name, p);
            }
        }
        out
    }

    /// JSON mirror of [`Lmc::to_text`].
    pub fn to_json(&self) -> String {
        let raw = LmcJson {
            version: 1,
            alphabet: self.alphabet.clone(),
            states: self
                .states
                .iter()
                .map(|s| StateJson {
                    name: s.name.clone(),
                    label: self.alphabet[s.label].clone(),
                })
                .collect(),
            transitions: self
                .rows
                .iter()
                .enumerate()
                .flat_map(|(s, row)| {
                    row.iter().map(move |(t, p)| TransJson {
                        from: self.states[s].name.clone(),
                        to: self.states[*t].name.clone(),
                        prob: p.to_string(),
                    })
                })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("serializable")
    }

    /// Graphviz rendering of the chain.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph lmc {\n");
        for (s, st) in self.states.iter().enumerate() {
            let _ = writeln!(
                out,
                "  n{} [label=\"{}\\n{}\"];",
                s, st.name, self.alphabet[st.label]
            );
        }
        for (s, row) in self.rows.iter().enumerate() {
            for (t, p) in row {
                let _ = writeln!(out, "  n{} -> n{} [label=\"{}\"];", s, t, p);
            }
        }
        out.push_str("}\n");
        out
    }

    /// Distribution over label strings of length `horizon` emitted from
    /// `start`. Horizon 0 yields the empty trace with mass 1; horizon 1 the
    /// label of `start`.
    pub fn horizon_distribution(
        &self,
        start: StateId,
        horizon: usize,
        opts: &HorizonOptions,
    ) -> Result<HorizonDistribution, LmcError> {
        assert!(start < self.num_states(), "state out of range");
        let mut dist = HorizonDistribution {
            horizon,
            mass: BTreeMap::new(),
            over_limit: false,
        };
        if horizon == 0 {
            dist.mass.insert(Vec::new(), Rational::one());
            return Ok(dist);
        }
        // Forward pass grouping mass by emitted trace prefix.
        let mut frontier: BTreeMap<Vec<LabelId>, BTreeMap<StateId, Rational>> = BTreeMap::new();
        frontier
            .entry(vec![self.label_of(start)])
            .or_default()
            .insert(start, Rational::one());
        for _ in 1..horizon {
            let mut next: BTreeMap<Vec<LabelId>, BTreeMap<StateId, Rational>> = BTreeMap::new();
            for (prefix, by_state) in frontier {
                for (s, mass) in by_state {
                    for (t, p) in &self.rows[s] {
                        if p.is_zero() {
                            continue;
                        }
                        let mut trace = prefix.clone();
                        trace.push(self.label_of(*t));
                        let slot = next.entry(trace).or_default();
                        match slot.entry(*t) {
                            Entry::Occupied(mut e) => *e.get_mut() += &(&mass * p),
                            Entry::Vacant(e) => {
                                e.insert(&mass * p);
                            }
                        }
                    }
                }
            }
            frontier = next;
            if frontier.len() > opts.explosion_limit {
                if opts.strict {
                    return Err(LmcError::ExplosionLimit {
                        entries: frontier.len(),
                        limit: opts.explosion_limit,
                    });
                }
                dist.over_limit = true;
            }
        }
        for (trace, by_state) in frontier {
            let total: Rational = by_state.values().sum();
            if !total.is_zero() {
                dist.mass.insert(trace, total);
            }
        }
        Ok(dist)
    }

    /// Coarsest probabilistic bisimulation: iteratively splits label classes
    /// by transition mass into current blocks until stable.
    pub fn bisimilarity_partition(&self) -> Partition {
        let n = self.num_states();
        let mut block_of: Vec<usize> = (0..n).map(|s| self.label_of(s)).collect();
        normalize_blocks(&mut block_of);
        loop {
            // Signature: own block plus exact mass sent into every block.
            let mut groups: BTreeMap<(usize, Vec<(usize, Rational)>), Vec<StateId>> =
                BTreeMap::new();
            for s in 0..n {
                let mut mass: BTreeMap<usize, Rational> = BTreeMap::new();
                for (t, p) in &self.rows[s] {
                    if !p.is_zero() {
                        *mass.entry(block_of[*t]).or_insert_with(Rational::zero) += p;
                    }
                }
                let sig = (block_of[s], mass.into_iter().collect::<Vec<_>>());
                groups.entry(sig).or_default().push(s);
            }
            if groups.len() == block_of.iter().max().map_or(0, |m| m + 1) {
                break;
            }
            let mut next = vec![0usize; n];
            for (id, (_, members)) in groups.into_iter().enumerate() {
                for s in members {
                    next[s] = id;
                }
            }
            block_of = next;
            normalize_blocks(&mut block_of);
        }
        Partition::from_block_of(block_of)
    }
}

fn check_name(name: &str) -> Result<(), LmcError> {
    // Commas are reserved for pair syntax on the command line.
    if name.contains(',') || name.contains('#') {
        return Err(LmcError::BadName { name: name.into() });
    }
    Ok(())
}

// Renumber blocks by first occurrence so ids are canonical.
fn normalize_blocks(block_of: &mut [usize]) {
    let mut remap: HashMap<usize, usize> = HashMap::new();
    for b in block_of.iter_mut() {
        let next_id = remap.len();
        *b = *remap.entry(*b).or_insert(next_id);
    }
}

/// Controls for the finite-horizon expansion.
#[derive(Debug, Clone)]
pub struct HorizonOptions {
    /// Cap on the number of distinct traces carried by the expansion.
    pub explosion_limit: usize,
    /// When true, exceeding the limit is an error; otherwise the expansion
    /// continues and the result is flagged.
    pub strict: bool,
}

impl Default for HorizonOptions {
    fn default() -> Self {
        HorizonOptions {
            explosion_limit: 1_000_000,
            strict: false,
        }
    }
}

/// Exact distribution over label strings of a fixed length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HorizonDistribution {
    pub horizon: usize,
    pub mass: BTreeMap<Vec<LabelId>, Rational>,
    /// Set when the expansion exceeded the explosion limit in non-strict mode.
    pub over_limit: bool,
}

impl HorizonDistribution {
    pub fn total_mass(&self) -> Rational {
        self.mass.values().sum()
    }

    pub fn support_len(&self) -> usize {
        self.mass.len()
    }
}

/// Renders a trace as space-separated label names.
pub fn trace_string(chain: &Lmc, trace: &[LabelId]) -> String {
    if trace.is_empty() {
        return "(empty)".into();
    }
    trace
        .iter()
        .map(|l| chain.label_name(*l))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Partition of the state set with canonical block ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    block_of: Vec<usize>,
    blocks: Vec<Vec<StateId>>,
}

impl Partition {
    fn from_block_of(block_of: Vec<usize>) -> Self {
        let num_blocks = block_of.iter().max().map_or(0, |m| m + 1);
        let mut blocks = vec![Vec::new(); num_blocks];
        for (s, b) in block_of.iter().enumerate() {
            blocks[*b].push(s);
        }
        Partition { block_of, blocks }
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_of(&self, s: StateId) -> usize {
        self.block_of[s]
    }

    pub fn same_block(&self, a: StateId, b: StateId) -> bool {
        self.block_of[a] == self.block_of[b]
    }

    /// Blocks in canonical order; members sorted by state index.
    pub fn blocks(&self) -> &[Vec<StateId>] {
        &self.blocks
    }
}

#[derive(Serialize, Deserialize)]
struct LmcJson {
    version: u32,
    alphabet: Vec<String>,
    states: Vec<StateJson>,
    transitions: Vec<TransJson>,
}

#[derive(Serialize, Deserialize)]
struct StateJson {
    name: String,
    label: String,
}

#[derive(Serialize, Deserialize)]
struct TransJson {
    from: String,
    to: String,
    prob: String,
}
