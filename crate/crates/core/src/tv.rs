//! Skewed total variation between finite-horizon trace distributions.
//!
//! For alpha = e^epsilon, a pair of start states satisfies
//! (epsilon, delta)-indistinguishability iff the skewed total variation of
//! their trace measures is at most delta. Restricting to traces of one fixed
//! length yields a certified lower bound on that quantity, together with the
//! event achieving it.

use crate::kantorovich::Alpha;
use crate::lmc::{HorizonDistribution, HorizonOptions, LabelId, Lmc, LmcError, StateId};
use crate::rational::Rational;
use std::collections::BTreeSet;

/// Which direction of the comparison attains the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// P(E) - alpha Q(E) where P is the first distribution.
    FirstOverSecond,
    /// Q(E) - alpha P(E).
    SecondOverFirst,
}

/// Lower bound on the skewed total variation at one horizon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TvLowerBound {
    pub value: Rational,
    pub horizon: usize,
    pub direction: Direction,
    /// The maximizing event: every trace whose mass difference favors the
    /// winning direction strictly.
    pub event: Vec<Vec<LabelId>>,
}

/// Maximizes P(E) - alpha Q(E) and Q(E) - alpha P(E) over trace sets E of
/// the shared horizon and returns the better direction (ties favor the
/// first). The optimum includes exactly the traces with a strictly positive
/// margin, so both sweeps need one pass over the union support.
pub fn tv_lower_bound(
    alpha: &Alpha,
    first: &HorizonDistribution,
    second: &HorizonDistribution,
) -> TvLowerBound {
    assert_eq!(
        first.horizon, second.horizon,
        "distributions must share a horizon"
    );
    let zero = Rational::zero();
    let support: BTreeSet<&Vec<LabelId>> =
        first.mass.keys().chain(second.mass.keys()).collect();

    let mut forward = Rational::zero();
    let mut forward_event: Vec<Vec<LabelId>> = Vec::new();
    let mut backward = Rational::zero();
    let mut backward_event: Vec<Vec<LabelId>> = Vec::new();
    for trace in support {
        let p = first.mass.get(trace).unwrap_or(&zero);
        let q = second.mass.get(trace).unwrap_or(&zero);
        let fwd = p - &(alpha.value() * q);
        if fwd.is_positive() {
            forward += &fwd;
            forward_event.push(trace.clone());
        }
        let bwd = q - &(alpha.value() * p);
        if bwd.is_positive() {
            backward += &bwd;
            backward_event.push(trace.clone());
        }
    }

    if forward >= backward {
        TvLowerBound {
            value: forward,
            horizon: first.horizon,
            direction: Direction::FirstOverSecond,
            event: forward_event,
        }
    } else {
        TvLowerBound {
            value: backward,
            horizon: first.horizon,
            direction: Direction::SecondOverFirst,
            event: backward_event,
        }
    }
}

/// Same bound computed directly from a pair of start states.
pub fn tv_lower_bound_for_pair(
    alpha: &Alpha,
    chain: &Lmc,
    s: StateId,
    s_prime: StateId,
    horizon: usize,
    opts: &HorizonOptions,
) -> Result<TvLowerBound, LmcError> {
    let first = chain.horizon_distribution(s, horizon, opts)?;
    let second = chain.horizon_distribution(s_prime, horizon, opts)?;
    Ok(tv_lower_bound(alpha, &first, &second))
}

/// Total mass a distribution assigns to an explicit trace set.
pub fn event_mass(dist: &HorizonDistribution, event: &[Vec<LabelId>]) -> Rational {
    event
        .iter()
        .filter_map(|t| dist.mass.get(t))
        .sum()
}
