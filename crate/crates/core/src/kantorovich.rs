//! Skewed Kantorovich distances between distributions over states.
//!
//! For a skew factor alpha >= 1 the ground distance between probabilities is
//! max(x - alpha*y, y - alpha*x, 0). Lifting a state distance matrix through
//! the corresponding transport problem gives one step of the distance
//! operator on labelled Markov chains: label mismatch forces 1, otherwise the
//! lifted value of the two outgoing distributions.
//!
//! Both sides of the transport LP are implemented: the potential form over
//! one variable per state, and the coupling form whose feasible points
//! certify upper bounds by weak duality.

use crate::lmc::Lmc;
use crate::lp::{combine_terms, LinearProgram, LpOutcome};
use crate::rational::Rational;
use rayon::prelude::*;
use thiserror::Error;

/// Skew factor, at least 1. Larger values discount one-sided differences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alpha(Rational);

#[derive(Debug, Error, PartialEq, Eq)]
#[error("skew factor must be at least 1, got {0}")]
pub struct InvalidAlpha(pub Rational);

impl Alpha {
    pub fn new(value: Rational) -> Result<Self, InvalidAlpha> {
        if value < Rational::one() {
            return Err(InvalidAlpha(value));
        }
        Ok(Alpha(value))
    }

    pub fn one() -> Self {
        Alpha(Rational::one())
    }

    pub fn value(&self) -> &Rational {
        &self.0
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }
}

impl std::fmt::Display for Alpha {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// max(x - alpha*y, y - alpha*x, 0). At alpha = 1 this is |x - y|.
pub fn skewed_distance(alpha: &Alpha, x: &Rational, y: &Rational) -> Rational {
    let a = x - &(alpha.value() * y);
    let b = y - &(alpha.value() * x);
    let m = if a >= b { a } else { b };
    if m.is_negative() {
        Rational::zero()
    } else {
        m
    }
}

/// Symmetric matrix of pairwise state distances, entries in [0, 1]. The
/// constructors produce a zero diagonal; parsed certificates may not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<Rational>,
}

impl DistanceMatrix {
    pub fn zero(n: usize) -> Self {
        DistanceMatrix {
            n,
            entries: vec![Rational::zero(); n * n],
        }
    }

    /// Builds from upper-triangle values; `f` is called once per i < j.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Rational) -> Self {
        let mut m = DistanceMatrix::zero(n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = f(i, j);
                m.set_sym(i, j, v);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &Rational {
        &self.entries[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Rational) {
        self.entries[i * self.n + j] = v;
    }

    pub fn set_sym(&mut self, i: usize, j: usize, v: Rational) {
        self.entries[i * self.n + j] = v.clone();
        self.entries[j * self.n + i] = v;
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Rational::is_zero)
    }

    pub fn pointwise_le(&self, other: &DistanceMatrix) -> bool {
        assert_eq!(self.n, other.n);
        self.entries
            .iter()
            .zip(&other.entries)
            .all(|(a, b)| a <= b)
    }

    /// Largest absolute entrywise difference.
    pub fn max_diff(&self, other: &DistanceMatrix) -> Rational {
        assert_eq!(self.n, other.n);
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .max()
            .unwrap_or_else(Rational::zero)
    }

    pub fn max_entry(&self) -> Rational {
        self.entries
            .iter()
            .max()
            .cloned()
            .unwrap_or_else(Rational::zero)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KantorovichMode {
    /// Potential-side LP, one variable per state.
    Primal,
    /// Coupling-side LP; its solutions witness upper bounds.
    Dual,
}

/// One orientation of the potential LP:
/// max sum_i f_i (mu_i - alpha nu_i) over f in [0,1]^n with
/// f_i - alpha f_j <= d_ij for every ordered pair.
///
/// Pairs with d_ij >= 1 are dropped: f_i - alpha f_j <= f_i <= 1 <= d_ij
/// already. The diagonal is dropped likewise since (1 - alpha) f_i <= 0.
/// Returns the optimum and a maximizing potential.
pub fn primal_branch(
    alpha: &Alpha,
    mu: &[Rational],
    nu: &[Rational],
    d: &DistanceMatrix,
) -> (Rational, Vec<Rational>) {
    let n = mu.len();
    assert_eq!(nu.len(), n);
    assert_eq!(d.dim(), n);
    let one = Rational::one();
    let mut lp = LinearProgram::unit_box(n);
    lp.objective = (0..n)
        .map(|i| (i, &mu[i] - &(alpha.value() * &nu[i])))
        .filter(|(_, c)| !c.is_zero())
        .collect();
    for i in 0..n {
        for j in 0..n {
            if i == j || *d.get(i, j) >= one {
                continue;
            }
            lp.le(
                combine_terms(vec![(i, Rational::one()), (j, -alpha.value())]),
                d.get(i, j).clone(),
            );
        }
    }
    match lp.solve() {
        LpOutcome::Optimal { value, solution } => (value, solution),
        other => unreachable!("potential LP is feasible and bounded: {:?}", other),
    }
}

/// Feasible point of the coupling LP. By weak duality its objective bounds
/// the matching potential optimum from above, so a stored witness can be
/// re-verified without solving anything.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DualWitness {
    /// Row-major n x n transport plan.
    pub coupling: Vec<Rational>,
    /// Mass moved into the skew slack on the supply side.
    pub grow: Vec<Rational>,
    /// Mass drawn from the skew slack on the receiving side.
    pub shrink: Vec<Rational>,
    /// Supply discarded at unit cost.
    pub supply_drop: Vec<Rational>,
}

impl DualWitness {
    pub fn dim(&self) -> usize {
        self.grow.len()
    }

    pub fn objective(&self, d: &DistanceMatrix) -> Rational {
        let n = self.dim();
        let mut total = Rational::zero();
        for i in 0..n {
            for j in 0..n {
                let w = &self.coupling[i * n + j];
                if !w.is_zero() {
                    total += &(w * d.get(i, j));
                }
            }
        }
        for e in &self.supply_drop {
            total += e;
        }
        total
    }

    /// Exact feasibility for supplies `mu` and receivers `nu`:
    /// all variables in [0,1],
    /// for each i:  sum_j w_ij + grow_i - shrink_i + drop_i == mu_i,
    /// for each j:  sum_i w_ij + (grow_j - shrink_j)/alpha <= nu_j.
    pub fn check_feasible(&self, alpha: &Alpha, mu: &[Rational], nu: &[Rational]) -> bool {
        let n = self.dim();
        if mu.len() != n
            || nu.len() != n
            || self.coupling.len() != n * n
            || self.shrink.len() != n
            || self.supply_drop.len() != n
        {
            return false;
        }
        let one = Rational::one();
        let in_box = |v: &Rational| !v.is_negative() && *v <= one;
        if !self.coupling.iter().all(in_box)
            || !self.grow.iter().all(in_box)
            || !self.shrink.iter().all(in_box)
            || !self.supply_drop.iter().all(in_box)
        {
            return false;
        }
        for i in 0..n {
            let row_sum: Rational = self.coupling[i * n..(i + 1) * n].iter().sum();
            let lhs = row_sum + &self.grow[i] - &self.shrink[i] + &self.supply_drop[i];
            if lhs != mu[i] {
                return false;
            }
        }
        for j in 0..n {
            let col_sum: Rational = (0..n).map(|i| &self.coupling[i * n + j]).sum();
            let skew = (&self.grow[j] - &self.shrink[j])
                .checked_div(alpha.value())
                .expect("alpha is nonzero");
            if col_sum + &skew > nu[j] {
                return false;
            }
        }
        true
    }
}

/// One orientation of the coupling LP: minimize
/// sum_ij w_ij d_ij + sum_i drop_i over the feasible set of
/// [`DualWitness::check_feasible`]. Returns the minimum and its witness.
pub fn dual_branch(
    alpha: &Alpha,
    mu: &[Rational],
    nu: &[Rational],
    d: &DistanceMatrix,
) -> (Rational, DualWitness) {
    let n = mu.len();
    assert_eq!(nu.len(), n);
    assert_eq!(d.dim(), n);
    // Independent product coupling settles the all-zero matrix immediately.
    if d.is_zero() {
        let mut coupling = vec![Rational::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                coupling[i * n + j] = &mu[i] * &nu[j];
            }
        }
        let witness = DualWitness {
            coupling,
            grow: vec![Rational::zero(); n],
            shrink: vec![Rational::zero(); n],
            supply_drop: vec![Rational::zero(); n],
        };
        debug_assert!(witness.check_feasible(alpha, mu, nu));
        return (Rational::zero(), witness);
    }

    // Columns: w (n*n), grow (n), shrink (n), drop (n).
    let w0 = 0;
    let g0 = n * n;
    let s0 = g0 + n;
    let e0 = s0 + n;
    let total = e0 + n;
    let mut lp = LinearProgram::unit_box(total);
    lp.objective = {
        let mut obj = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let c = d.get(i, j);
                if !c.is_zero() {
                    obj.push((w0 + i * n + j, -c));
                }
            }
        }
        for i in 0..n {
            obj.push((e0 + i, -Rational::one()));
        }
        obj
    };
    let inv_alpha = alpha
        .value()
        .recip()
        .expect("alpha is nonzero");
    for i in 0..n {
        let mut coeffs = vec![
            (g0 + i, Rational::one()),
            (s0 + i, -Rational::one()),
            (e0 + i, Rational::one()),
        ];
        for j in 0..n {
            coeffs.push((w0 + i * n + j, Rational::one()));
        }
        lp.eq(combine_terms(coeffs), mu[i].clone());
    }
    for j in 0..n {
        let mut coeffs = vec![(g0 + j, inv_alpha.clone()), (s0 + j, -&inv_alpha)];
        for i in 0..n {
            coeffs.push((w0 + i * n + j, Rational::one()));
        }
        lp.le(combine_terms(coeffs), nu[j].clone());
    }
    match lp.solve() {
        LpOutcome::Optimal { value, solution } => {
            let witness = DualWitness {
                coupling: solution[w0..g0].to_vec(),
                grow: solution[g0..s0].to_vec(),
                shrink: solution[s0..e0].to_vec(),
                supply_drop: solution[e0..total].to_vec(),
            };
            debug_assert!(witness.check_feasible(alpha, mu, nu));
            (-value, witness)
        }
        other => unreachable!("coupling LP is feasible and bounded: {:?}", other),
    }
}

/// Potential optimum over both orientations, together with a maximizing
/// potential for the better side.
pub fn kantorovich_primal(
    alpha: &Alpha,
    d: &DistanceMatrix,
    mu: &[Rational],
    nu: &[Rational],
) -> (Rational, Vec<Rational>) {
    let (a, fa) = primal_branch(alpha, mu, nu, d);
    let (b, fb) = primal_branch(alpha, nu, mu, d);
    if a >= b {
        (a, fa)
    } else {
        (b, fb)
    }
}

/// Coupling optimum over both orientations. Both witnesses are returned,
/// in argument order, so each one-sided bound can be re-verified.
pub fn kantorovich_dual(
    alpha: &Alpha,
    d: &DistanceMatrix,
    mu: &[Rational],
    nu: &[Rational],
) -> (Rational, (DualWitness, DualWitness)) {
    let (a, wa) = dual_branch(alpha, mu, nu, d);
    let (b, wb) = dual_branch(alpha, nu, mu, d);
    let value = if a >= b { a } else { b };
    (value, (wa, wb))
}

/// Lifted distance between two distributions: the larger of the two
/// orientations. Zero without solving when the matrix is all zero or the
/// distributions coincide.
pub fn kantorovich(
    alpha: &Alpha,
    mu: &[Rational],
    nu: &[Rational],
    d: &DistanceMatrix,
    mode: KantorovichMode,
) -> Rational {
    if mu == nu || d.is_zero() {
        return Rational::zero();
    }
    let (a, b) = match mode {
        KantorovichMode::Primal => (
            primal_branch(alpha, mu, nu, d).0,
            primal_branch(alpha, nu, mu, d).0,
        ),
        KantorovichMode::Dual => (
            dual_branch(alpha, mu, nu, d).0,
            dual_branch(alpha, nu, mu, d).0,
        ),
    };
    if a >= b {
        a
    } else {
        b
    }
}

/// One application of the distance operator: 1 on label mismatch, lifted
/// distance of the outgoing rows otherwise. Pairs are independent, so they
/// are evaluated in parallel; the result does not depend on thread count.
pub fn kantorovich_step(
    alpha: &Alpha,
    chain: &Lmc,
    d: &DistanceMatrix,
    mode: KantorovichMode,
) -> DistanceMatrix {
    let n = chain.num_states();
    assert_eq!(d.dim(), n);
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let computed: Vec<((usize, usize), Rational)> = pairs
        .into_par_iter()
        .map(|(i, j)| {
            let v = if chain.label_of(i) != chain.label_of(j) {
                Rational::one()
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

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    fn alpha(n: i64, d: i64) -> Alpha {
        Alpha::new(rat(n, d)).unwrap()
    }

    #[test]
    fn skew_factor_below_one_is_rejected() {
        assert!(Alpha::new(rat(99, 100)).is_err());
        assert!(Alpha::new(Rational::one()).is_ok());
        assert!(Alpha::new(rat(3, 2)).is_ok());
    }

    #[test]
    fn skewed_distance_known_values() {
        let two = alpha(2, 1);
        assert_eq!(
            skewed_distance(&two, &Rational::from(9), &Rational::from(3)),
            Rational::from(3)
        );
        assert_eq!(
            skewed_distance(&two, &Rational::from(9), &Rational::from(6)),
            Rational::zero()
        );
        assert_eq!(
            skewed_distance(&two, &Rational::from(6), &Rational::from(3)),
            Rational::zero()
        );
    }

    #[test]
    fn skewed_distance_at_one_is_absolute_difference() {
        let one = Alpha::one();
        assert_eq!(
            skewed_distance(&one, &rat(1, 3), &rat(1, 2)),
            rat(1, 6)
        );
        assert_eq!(
            skewed_distance(&one, &rat(1, 2), &rat(1, 3)),
            rat(1, 6)
        );
    }

    #[test]
    fn skewed_distance_is_antitone_in_the_skew() {
        let x = rat(3, 4);
        let y = rat(1, 4);
        let mut last = skewed_distance(&Alpha::one(), &x, &y);
        for (n, d) in [(5, 4), (3, 2), (2, 1), (3, 1)] {
            let cur = skewed_distance(&alpha(n, d), &x, &y);
            assert!(cur <= last);
            last = cur;
        }
    }

    fn discrete(n: usize) -> DistanceMatrix {
        DistanceMatrix::from_fn(n, |_, _| Rational::one())
    }

    #[test]
    fn point_masses_under_discrete_distance() {
        let mu = vec![Rational::one(), Rational::zero()];
        let nu = vec![Rational::zero(), Rational::one()];
        let d = discrete(2);
        for mode in [KantorovichMode::Primal, KantorovichMode::Dual] {
            assert_eq!(
                kantorovich(&Alpha::one(), &mu, &nu, &d, mode),
                Rational::one()
            );
        }
    }

    #[test]
    fn transport_discount_scales_with_ground_distance() {
        // Moving 1/4 of mass across distance 1/2 costs 1/8.
        let mu = vec![rat(1, 2), rat(1, 2)];
        let nu = vec![rat(1, 4), rat(3, 4)];
        let mut d = DistanceMatrix::zero(2);
        d.set_sym(0, 1, rat(1, 2));
        for mode in [KantorovichMode::Primal, KantorovichMode::Dual] {
            assert_eq!(kantorovich(&Alpha::one(), &mu, &nu, &d, mode), rat(1, 8));
        }
    }

    #[test]
    fn identical_distributions_are_at_distance_zero() {
        let mu = vec![rat(2, 5), rat(3, 5), Rational::zero()];
        let d = discrete(3);
        for mode in [KantorovichMode::Primal, KantorovichMode::Dual] {
            assert_eq!(
                kantorovich(&alpha(3, 2), &mu, &mu.clone(), &d, mode),
                Rational::zero()
            );
        }
        // Also without the equality shortcut: the raw branches are zero.
        assert_eq!(primal_branch(&alpha(3, 2), &mu, &mu, &d).0, Rational::zero());
    }

    #[test]
    fn zero_matrix_gives_zero_distance() {
        let mu = vec![Rational::one(), Rational::zero()];
        let nu = vec![Rational::zero(), Rational::one()];
        let d = DistanceMatrix::zero(2);
        assert_eq!(primal_branch(&alpha(2, 1), &mu, &nu, &d).0, Rational::zero());
        let (v, w) = dual_branch(&alpha(2, 1), &mu, &nu, &d);
        assert_eq!(v, Rational::zero());
        assert!(w.check_feasible(&alpha(2, 1), &mu, &nu));
    }

    #[test]
    fn zero_groups_spread_recovers_plain_difference() {
        // Two blocks at distance 0 internally, 1 across. Supplies live on
        // states 0 and 1, receivers on states 2 and 3, paired by block.
        // Potentials may spread by a factor alpha inside a zero block, so
        // the per-block difference is recovered undiscounted for every skew.
        let mut d = DistanceMatrix::from_fn(4, |_, _| Rational::one());
        d.set_sym(0, 2, Rational::zero());
        d.set_sym(1, 3, Rational::zero());
        let p = rat(49, 100);
        let mu = vec![p.clone(), Rational::one() - &p, Rational::zero(), Rational::zero()];
        let q = rat(51, 100);
        let nu = vec![Rational::zero(), Rational::zero(), q.clone(), Rational::one() - &q];
        for a in [Alpha::one(), alpha(3, 2), alpha(2, 1)] {
            for mode in [KantorovichMode::Primal, KantorovichMode::Dual] {
                assert_eq!(kantorovich(&a, &mu, &nu, &d, mode), rat(2, 100), "{}", a);
            }
        }
    }

    #[test]
    fn both_sides_agree_on_a_grid() {
        let d = {
            let mut d = DistanceMatrix::zero(3);
            d.set_sym(0, 1, rat(1, 2));
            d.set_sym(0, 2, rat(1, 3));
            d.set_sym(1, 2, Rational::one());
            d
        };
        let dists = [
            vec![rat(1, 2), rat(1, 4), rat(1, 4)],
            vec![rat(1, 3), rat(1, 3), rat(1, 3)],
            vec![Rational::one(), Rational::zero(), Rational::zero()],
            vec![Rational::zero(), rat(2, 5), rat(3, 5)],
        ];
        for a in [Alpha::one(), alpha(11, 10), alpha(2, 1)] {
            for mu in &dists {
                for nu in &dists {
                    let p = kantorovich(&a, mu, nu, &d, KantorovichMode::Primal);
                    let q = kantorovich(&a, mu, nu, &d, KantorovichMode::Dual);
                    assert_eq!(p, q, "alpha={}", a);
                    assert!(!p.is_negative());
                    assert!(p <= Rational::one());
                }
            }
        }
    }

    #[test]
    fn dual_witness_bounds_are_sound() {
        let mut d = DistanceMatrix::zero(2);
        d.set_sym(0, 1, rat(1, 2));
        let mu = vec![rat(1, 2), rat(1, 2)];
        let nu = vec![rat(1, 4), rat(3, 4)];
        let a = alpha(5, 4);
        let (value, witness) = dual_branch(&a, &mu, &nu, &d);
        assert!(witness.check_feasible(&a, &mu, &nu));
        assert_eq!(witness.objective(&d), value);
        // Tampering breaks feasibility.
        let mut bad = witness.clone();
        bad.coupling[0] = &bad.coupling[0] + &rat(1, 7);
        assert!(!bad.check_feasible(&a, &mu, &nu));
    }

    #[test]
    fn lifted_distance_is_monotone_in_the_matrix() {
        let lo = {
            let mut d = DistanceMatrix::zero(2);
            d.set_sym(0, 1, rat(1, 4));
            d
        };
        let hi = discrete(2);
        assert!(lo.pointwise_le(&hi));
        let mu = vec![rat(2, 3), rat(1, 3)];
        let nu = vec![rat(1, 3), rat(2, 3)];
        for a in [Alpha::one(), alpha(3, 2)] {
            let vlo = kantorovich(&a, &mu, &nu, &lo, KantorovichMode::Primal);
            let vhi = kantorovich(&a, &mu, &nu, &hi, KantorovichMode::Primal);
            assert!(vlo <= vhi);
        }
    }

    #[test]
    fn step_fills_mismatches_and_respects_rows() {
        let chain = Lmc::parse(
            "lmc v1\nalphabet a b c\nstate s0 a\nstate s1 a\nstate s2 b\nstate s3 c\n\
             trans s0 s2 2/5\ntrans s0 s3 3/5\ntrans s1 s2 3/5\ntrans s1 s3 2/5\n\
             trans s2 s2 1\ntrans s3 s3 1\n",
        )
        .unwrap();
        let d0 = DistanceMatrix::zero(4);
        let step1 = kantorovich_step(&Alpha::one(), &chain, &d0, KantorovichMode::Primal);
        // First application from zero marks exactly the label mismatches.
        for i in 0..4 {
            for j in 0..4 {
                let expect = if chain.label_of(i) != chain.label_of(j) {
                    Rational::one()
                } else {
                    Rational::zero()
                };
                assert_eq!(step1.get(i, j), &expect);
            }
        }
        let step2 = kantorovich_step(&Alpha::one(), &chain, &step1, KantorovichMode::Primal);
        // Distance between the two a-states is the mass they route apart.
        assert_eq!(step2.get(0, 1), &rat(1, 5));
        assert!(step1.pointwise_le(&step2));
        let dual = kantorovich_step(&Alpha::one(), &chain, &step1, KantorovichMode::Dual);
        assert_eq!(step2, dual);
    }

    #[test]
    fn matrix_helpers_behave() {
        let mut m = DistanceMatrix::zero(3);
        m.set_sym(0, 2, rat(1, 2));
        assert_eq!(m.get(2, 0), &rat(1, 2));
        assert_eq!(m.max_entry(), rat(1, 2));
        assert!(!m.is_zero());
        let z = DistanceMatrix::zero(3);
        assert!(z.is_zero());
        assert!(z.pointwise_le(&m));
        assert_eq!(m.max_diff(&z), rat(1, 2));
        let f = DistanceMatrix::from_fn(3, |i, j| rat((i + j) as i64, 10));
        assert_eq!(f.get(1, 2), &rat(3, 10));
        assert_eq!(f.get(2, 1), &rat(3, 10));
        assert!(f.get(1, 1).is_zero());
    }

    #[test]
    fn orientation_wrappers_return_usable_witnesses() {
        let a = alpha(3, 2);
        let mu = vec![rat(1, 2), rat(0, 1), rat(1, 2)];
        let nu = vec![rat(0, 1), rat(1, 4), rat(3, 4)];
        let mut d = DistanceMatrix::zero(3);
        d.set_sym(0, 1, rat(1, 4));
        d.set_sym(0, 2, rat(1, 1));
        d.set_sym(1, 2, rat(1, 1));

        let (pv, f) = kantorovich_primal(&a, &d, &mu, &nu);
        assert_eq!(pv, kantorovich(&a, &mu, &nu, &d, KantorovichMode::Primal));
        // The returned potential attains the optimum on its winning side.
        let side = |x: &[Rational], y: &[Rational]| -> Rational {
            (0..3)
                .map(|i| &f[i] * &(&x[i] - &(a.value() * &y[i])))
                .sum()
        };
        let attained = side(&mu, &nu).max(side(&nu, &mu));
        assert_eq!(attained, pv);

        let (dv, (wa, wb)) = kantorovich_dual(&a, &d, &mu, &nu);
        assert_eq!(dv, pv);
        assert!(wa.check_feasible(&a, &mu, &nu));
        assert!(wb.check_feasible(&a, &nu, &mu));
        assert_eq!(wa.objective(&d).max(wb.objective(&d)), dv);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        // Random three-state instances; both program families must agree
        // exactly and stay inside the unit interval.
        #[test]
        fn primal_and_dual_agree_on_random_instances(
            mw in proptest::array::uniform3(0u32..5),
            nw in proptest::array::uniform3(0u32..5),
            dw in proptest::array::uniform3(0i64..=4),
            ai in 0usize..3,
        ) {
            proptest::prop_assume!(mw.iter().sum::<u32>() > 0);
            proptest::prop_assume!(nw.iter().sum::<u32>() > 0);
            let norm = |w: [u32; 3]| -> Vec<Rational> {
                let total = rat(w.iter().sum::<u32>() as i64, 1);
                w.iter()
                    .map(|x| rat(*x as i64, 1).checked_div(&total).unwrap())
                    .collect()
            };
            let mu = norm(mw);
            let nu = norm(nw);
            let d = {
                let vals = [rat(dw[0], 4), rat(dw[1], 4), rat(dw[2], 4)];
                let mut m = DistanceMatrix::zero(3);
                m.set_sym(0, 1, vals[0].clone());
                m.set_sym(0, 2, vals[1].clone());
                m.set_sym(1, 2, vals[2].clone());
                m
            };
            let a = [alpha(1, 1), alpha(3, 2), alpha(2, 1)][ai].clone();
            let p = kantorovich(&a, &mu, &nu, &d, KantorovichMode::Primal);
            let q = kantorovich(&a, &mu, &nu, &d, KantorovichMode::Dual);
            proptest::prop_assert_eq!(&p, &q);
            proptest::prop_assert!(!p.is_negative() && p <= Rational::one());
        }
    }
}
