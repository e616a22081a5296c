//! Exact simplex over rationals.
//!
//! Dense tableau, two phases, Bland's rule, bounded variables handled
//! natively (nonbasic variables may sit at either bound and flip without a
//! basis change). All pivoting is exact; no tolerances anywhere.

use crate::rational::Rational;
use std::collections::BTreeMap;

/// `maximize c.x  s.t.  rows, bounds` with per-variable bounds
/// `lower <= x_j <= upper` (upper `None` means unbounded above).
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub num_vars: usize,
    /// Sparse objective, missing entries are zero.
    pub objective: Vec<(usize, Rational)>,
    pub rows: Vec<Row>,
    pub bounds: Vec<(Rational, Option<Rational>)>,
}

#[derive(Debug, Clone)]
pub struct Row {
    /// Sparse coefficients, missing entries are zero.
    pub coeffs: Vec<(usize, Rational)>,
    pub relation: Relation,
    pub rhs: Rational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LpOutcome {
    Optimal {
        value: Rational,
        solution: Vec<Rational>,
    },
    Infeasible,
    Unbounded,
}

impl LinearProgram {
    /// All variables in `[0, 1]`.
    pub fn unit_box(num_vars: usize) -> Self {
        LinearProgram {
            num_vars,
            objective: Vec::new(),
            rows: Vec::new(),
            bounds: vec![(Rational::zero(), Some(Rational::one())); num_vars],
        }
    }

    /// All variables in `[0, +inf)`.
    pub fn nonnegative(num_vars: usize) -> Self {
        LinearProgram {
            num_vars,
            objective: Vec::new(),
            rows: Vec::new(),
            bounds: vec![(Rational::zero(), None); num_vars],
        }
    }

    pub fn le(&mut self, coeffs: Vec<(usize, Rational)>, rhs: Rational) {
        self.rows.push(Row {
            coeffs,
            relation: Relation::Le,
            rhs,
        });
    }

    pub fn eq(&mut self, coeffs: Vec<(usize, Rational)>, rhs: Rational) {
        self.rows.push(Row {
            coeffs,
            relation: Relation::Eq,
            rhs,
        });
    }

    pub fn solve(&self) -> LpOutcome {
        Simplex::new(self).run()
    }

    /// Reference path used to cross-check the native bound handling: every
    /// finite upper bound becomes an explicit `x_j <= u` row and the box
    /// keeps only the lower bounds.
    pub fn solve_with_bound_rows(&self) -> LpOutcome {
        let mut lp = LinearProgram {
            num_vars: self.num_vars,
            objective: self.objective.clone(),
            rows: self.rows.clone(),
            bounds: self
                .bounds
                .iter()
                .map(|(l, _)| (l.clone(), None))
                .collect(),
        };
        for (j, (_, upper)) in self.bounds.iter().enumerate() {
            if let Some(u) = upper {
                lp.le(vec![(j, Rational::one())], u.clone());
            }
        }
        lp.solve()
    }

    /// Exact feasibility check of a candidate point, for tests.
    pub fn check_solution(&self, x: &[Rational]) -> bool {
        if x.len() != self.num_vars {
            return false;
        }
        for (j, (lower, upper)) in self.bounds.iter().enumerate() {
            if x[j] < *lower {
                return false;
            }
            if let Some(u) = upper {
                if x[j] > *u {
                    return false;
                }
            }
        }
        for row in &self.rows {
            let lhs: Rational = row.coeffs.iter().map(|(j, c)| c * &x[*j]).sum();
            let ok = match row.relation {
                Relation::Le => lhs <= row.rhs,
                Relation::Eq => lhs == row.rhs,
            };
            if !ok {
                return false;
            }
        }
        true
    }

    pub fn objective_value(&self, x: &[Rational]) -> Rational {
        self.objective.iter().map(|(j, c)| c * &x[*j]).sum()
    }
}

// Where a nonbasic variable currently sits.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum AtBound {
    Lower,
    Upper,
}

/// Tableau over shifted variables `y_j = x_j - lower_j`, so every structural
/// variable ranges over `[0, width_j]` with `width_j` possibly infinite.
/// Slacks are added for Le rows, artificials for Eq rows and rows whose
/// shifted rhs is negative.
///
/// Invariants between pivots:
///   a == B^-1 A for the current basis, every column;
///   b[i] == current value of the basic variable of row i, consistent with
///   each nonbasic variable sitting at the bound recorded in nonbasic_at.
struct Simplex {
    num_structural: usize,
    num_slack: usize,
    num_artificial: usize,
    a: Vec<Vec<Rational>>,
    b: Vec<Rational>,
    // Column range widths, None for unbounded.
    width: Vec<Option<Rational>>,
    objective: Vec<Rational>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    nonbasic_at: Vec<AtBound>,
    lower_shift: Vec<Rational>,
    infeasible_box: bool,
}

enum PivotEnd {
    Optimal,
    Unbounded,
}

enum RatioOutcome {
    Unbounded,
    BoundFlip(Rational),
    Pivot {
        row: usize,
        delta: Rational,
        leaving_to: AtBound,
    },
}

impl Simplex {
    fn new(lp: &LinearProgram) -> Self {
        let n = lp.num_vars;
        let m = lp.rows.len();
        let mut infeasible_box = false;

        let mut width: Vec<Option<Rational>> = Vec::with_capacity(n);
        let mut lower_shift = Vec::with_capacity(n);
        for (lower, upper) in &lp.bounds {
            match upper {
                Some(u) => {
                    if u < lower {
                        infeasible_box = true;
                    }
                    width.push(Some(u - lower));
                }
                None => width.push(None),
            }
            lower_shift.push(lower.clone());
        }

        // Fold the fixed lower-bound contribution of every variable into rhs.
        let mut rhs: Vec<Rational> = Vec::with_capacity(m);
        for row in &lp.rows {
            let shift: Rational = row
                .coeffs
                .iter()
                .map(|(j, c)| c * &lower_shift[*j])
                .sum();
            rhs.push(&row.rhs - &shift);
        }

        let num_slack = lp
            .rows
            .iter()
            .filter(|r| r.relation == Relation::Le)
            .count();
        let mut needs_artificial = vec![false; m];
        for (i, row) in lp.rows.iter().enumerate() {
            needs_artificial[i] = row.relation == Relation::Eq || rhs[i].is_negative();
        }
        let num_artificial = needs_artificial.iter().filter(|&&x| x).count();
        let total = n + num_slack + num_artificial;

        let mut a = vec![vec![Rational::zero(); total]; m];
        let mut b = vec![Rational::zero(); m];
        let mut width_full = width;
        width_full.extend(std::iter::repeat_n(None, num_slack + num_artificial));
        let mut basis = Vec::with_capacity(m);

        let mut slack_col = n;
        let mut art_col = n + num_slack;
        for (i, row) in lp.rows.iter().enumerate() {
            let flip = rhs[i].is_negative();
            for (j, c) in &row.coeffs {
                let v = if flip { -c } else { c.clone() };
                a[i][*j] += &v;
            }
            b[i] = if flip { -&rhs[i] } else { rhs[i].clone() };
            if row.relation == Relation::Le {
                a[i][slack_col] = if flip {
                    -Rational::one()
                } else {
                    Rational::one()
                };
                if !needs_artificial[i] {
                    basis.push(slack_col);
                }
                slack_col += 1;
            }
            if needs_artificial[i] {
                a[i][art_col] = Rational::one();
                basis.push(art_col);
                art_col += 1;
            }
        }

        let mut objective = vec![Rational::zero(); total];
        for (j, c) in &lp.objective {
            objective[*j] += c;
        }

        let mut in_basis = vec![false; total];
        for col in &basis {
            in_basis[*col] = true;
        }

        Simplex {
            num_structural: n,
            num_slack,
            num_artificial,
            a,
            b,
            width: width_full,
            objective,
            basis,
            in_basis,
            nonbasic_at: vec![AtBound::Lower; total],
            lower_shift,
            infeasible_box,
        }
    }

    fn total_cols(&self) -> usize {
        self.num_structural + self.num_slack + self.num_artificial
    }

    fn art_start(&self) -> usize {
        self.num_structural + self.num_slack
    }

    fn run(mut self) -> LpOutcome {
        if self.infeasible_box {
            return LpOutcome::Infeasible;
        }
        if self.num_artificial > 0 {
            // Phase 1: maximize the negated artificial sum.
            let mut phase1 = vec![Rational::zero(); self.total_cols()];
            for c in phase1.iter_mut().skip(self.art_start()) {
                *c = -Rational::one();
            }
            match self.optimize(&phase1, false) {
                PivotEnd::Optimal => {}
                PivotEnd::Unbounded => unreachable!("phase 1 objective is bounded"),
            }
            let residue: Rational = self
                .basis
                .iter()
                .enumerate()
                .filter(|(_, col)| **col >= self.art_start())
                .map(|(i, _)| self.b[i].clone())
                .sum();
            if !residue.is_zero() {
                return LpOutcome::Infeasible;
            }
            self.expel_artificials();
        }
        let objective = self.objective.clone();
        match self.optimize(&objective, true) {
            PivotEnd::Optimal => {
                let y = self.extract_solution();
                let solution: Vec<Rational> = y
                    .iter()
                    .zip(&self.lower_shift)
                    .map(|(y, l)| y + l)
                    .collect();
                let value = objective
                    .iter()
                    .take(self.num_structural)
                    .zip(&solution)
                    .map(|(c, x)| c * x)
                    .sum();
                LpOutcome::Optimal { value, solution }
            }
            PivotEnd::Unbounded => LpOutcome::Unbounded,
        }
    }

    // Degenerate pivots that remove artificials left basic at value zero
    // after phase 1, so later pivots cannot revive them. Rows whose
    // remaining columns are all zero are inert and may keep their artificial.
    fn expel_artificials(&mut self) {
        for row in 0..self.a.len() {
            if self.basis[row] < self.art_start() {
                continue;
            }
            debug_assert!(self.b[row].is_zero());
            let entering = (0..self.art_start())
                .find(|&j| !self.in_basis[j] && !self.a[row][j].is_zero());
            if let Some(entering) = entering {
                self.pivot(entering, row, &Rational::zero(), AtBound::Lower);
            }
        }
    }

    // Shifted values of the structural variables.
    fn extract_solution(&self) -> Vec<Rational> {
        let mut y = vec![Rational::zero(); self.num_structural];
        for (j, val) in y.iter_mut().enumerate() {
            if !self.in_basis[j] && self.nonbasic_at[j] == AtBound::Upper {
                *val = self.width[j]
                    .clone()
                    .expect("only bounded columns rest at an upper bound");
            }
        }
        for (i, col) in self.basis.iter().enumerate() {
            if *col < self.num_structural {
                y[*col] = self.b[i].clone();
            }
        }
        y
    }

    /// Bland anti-cycling: entering column is the lowest-index candidate with
    /// favorable reduced cost, leaving row breaks ratio ties by basis column
    /// index.
    fn optimize(&mut self, objective: &[Rational], exclude_artificials: bool) -> PivotEnd {
        loop {
            let reduced = self.reduced_costs(objective);
            let mut entering = None;
            for (j, r) in reduced.iter().enumerate() {
                if self.in_basis[j] {
                    continue;
                }
                if exclude_artificials && j >= self.art_start() {
                    continue;
                }
                // Zero-width columns are fixed; moving them achieves nothing.
                if self.width[j].as_ref().is_some_and(|w| w.is_zero()) {
                    continue;
                }
                let favorable = match self.nonbasic_at[j] {
                    AtBound::Lower => r.is_positive(),
                    AtBound::Upper => r.is_negative(),
                };
                if favorable {
                    entering = Some(j);
                    break;
                }
            }
            let Some(entering) = entering else {
                return PivotEnd::Optimal;
            };
            match self.ratio_test(entering) {
                RatioOutcome::Unbounded => return PivotEnd::Unbounded,
                RatioOutcome::BoundFlip(delta) => self.apply_flip(entering, &delta),
                RatioOutcome::Pivot {
                    row,
                    delta,
                    leaving_to,
                } => self.pivot(entering, row, &delta, leaving_to),
            }
        }
    }

    fn reduced_costs(&self, objective: &[Rational]) -> Vec<Rational> {
        // c_j - c_B . B^-1 A_j, read off the current tableau.
        let total = self.total_cols();
        let mut reduced = objective.to_vec();
        for (i, col) in self.basis.iter().enumerate() {
            let cb = &objective[*col];
            if cb.is_zero() {
                continue;
            }
            for (j, r) in reduced.iter_mut().enumerate().take(total) {
                if !self.a[i][j].is_zero() {
                    *r -= &(cb * &self.a[i][j]);
                }
            }
        }
        reduced
    }

    /// How far the entering variable can move along its favorable direction
    /// before some basic variable hits a bound, or it reaches its own
    /// opposite bound.
    fn ratio_test(&self, entering: usize) -> RatioOutcome {
        let rising = self.nonbasic_at[entering] == AtBound::Lower;
        let mut best: Option<(Rational, usize, AtBound)> = None;

        for i in 0..self.a.len() {
            let coeff = &self.a[i][entering];
            if coeff.is_zero() {
                continue;
            }
            // The basic value of row i moves by -coeff*delta when rising and
            // +coeff*delta when falling.
            let moves_down = if rising {
                coeff.is_positive()
            } else {
                coeff.is_negative()
            };
            let limit = if moves_down {
                Some((
                    self.b[i]
                        .checked_div(&coeff.abs())
                        .expect("nonzero coefficient"),
                    AtBound::Lower,
                ))
            } else {
                self.width[self.basis[i]].as_ref().map(|w| {
                    (
                        (w - &self.b[i])
                            .checked_div(&coeff.abs())
                            .expect("nonzero coefficient"),
                        AtBound::Upper,
                    )
                })
            };
            if let Some((limit, to)) = limit {
                let better = match &best {
                    None => true,
                    Some((cur, row, _)) => {
                        limit < *cur || (limit == *cur && self.basis[i] < self.basis[*row])
                    }
                };
                if better {
                    best = Some((limit, i, to));
                }
            }
        }

        let own_width = self.width[entering].clone();
        match (best, own_width) {
            (None, None) => RatioOutcome::Unbounded,
            (None, Some(w)) => RatioOutcome::BoundFlip(w),
            (Some((limit, _, _)), Some(w)) if w < limit => RatioOutcome::BoundFlip(w),
            (Some((limit, row, to)), _) => RatioOutcome::Pivot {
                row,
                delta: limit,
                leaving_to: to,
            },
        }
    }

    // Apply the entering variable's movement by delta to all basic values.
    fn apply_movement(&mut self, entering: usize, delta: &Rational, rising: bool) {
        if delta.is_zero() {
            return;
        }
        for i in 0..self.a.len() {
            let coeff = self.a[i][entering].clone();
            if coeff.is_zero() {
                continue;
            }
            let change = &coeff * delta;
            if rising {
                self.b[i] -= &change;
            } else {
                self.b[i] += &change;
            }
        }
    }

    // Move entering across its whole range without a basis change.
    fn apply_flip(&mut self, entering: usize, delta: &Rational) {
        let rising = self.nonbasic_at[entering] == AtBound::Lower;
        self.apply_movement(entering, delta, rising);
        self.nonbasic_at[entering] = if rising {
            AtBound::Upper
        } else {
            AtBound::Lower
        };
    }

    fn pivot(&mut self, entering: usize, row: usize, delta: &Rational, leaving_to: AtBound) {
        let rising = self.nonbasic_at[entering] == AtBound::Lower;
        let leaving = self.basis[row];

        self.apply_movement(entering, delta, rising);
        // The entering variable's new value, measured from its lower bound.
        self.b[row] = if rising {
            delta.clone()
        } else {
            self.width[entering]
                .clone()
                .expect("a variable can only fall from a finite upper bound")
                - delta
        };

        // Re-reduce so column `entering` becomes the unit vector of `row`.
        let inv = self.a[row][entering]
            .clone()
            .recip()
            .expect("pivot coefficient is nonzero");
        let prow: Vec<Rational> = self.a[row]
            .iter()
            .map(|v| if v.is_zero() { v.clone() } else { v * &inv })
            .collect();
        for i in 0..self.a.len() {
            if i == row {
                continue;
            }
            let factor = self.a[i][entering].clone();
            if factor.is_zero() {
                continue;
            }
            for (j, pv) in prow.iter().enumerate() {
                if !pv.is_zero() {
                    self.a[i][j] -= &(pv * &factor);
                }
            }
            self.a[i][entering] = Rational::zero();
        }
        self.a[row] = prow;

        self.basis[row] = entering;
        self.in_basis[entering] = true;
        self.in_basis[leaving] = false;
        self.nonbasic_at[leaving] = leaving_to;
    }
}

/// Integer-coefficient sparse row helper for tests and callers.
pub fn sparse(coeffs: &[(usize, i64)]) -> Vec<(usize, Rational)> {
    coeffs
        .iter()
        .map(|(j, c)| (*j, Rational::from(*c)))
        .collect()
}

/// Groups duplicate column indices by summation, dropping zeros.
pub fn combine_terms(terms: Vec<(usize, Rational)>) -> Vec<(usize, Rational)> {
    let mut acc: BTreeMap<usize, Rational> = BTreeMap::new();
    for (j, c) in terms {
        *acc.entry(j).or_insert_with(Rational::zero) += &c;
    }
    acc.into_iter().filter(|(_, c)| !c.is_zero()).collect()
}
