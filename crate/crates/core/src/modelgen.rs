//! Built-in model families.
//!
//! The dining construction produces one chain containing both adjacent
//! scenarios of the protocol: n participants around a table, each sharing a
//! coin with their neighbour, each announcing the xor of their two adjacent
//! coins, flipped once more by the participant who paid. The two start
//! states differ only in who paid (participant 0 or 1); with a fair coin the
//! announcements reveal nothing and the start states are bisimilar, with a
//! biased coin they leak.
//!
//! Observation protocol: the start state emits `init`, then announcements
//! are emitted in participant order as `agree`/`disagree` labels, then the
//! chain parks on `done`.

use crate::lmc::{Lmc, StateId};
use crate::rational::Rational;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelGenError {
    #[error("need at least 2 participants, got {0}")]
    TooFewParticipants(usize),
    #[error("coin bias must lie strictly between 0 and 1, got {0}")]
    BadBias(Rational),
    #[error("need at least 1 state, got {0}")]
    NoStates(usize),
    #[error("need at least 1 label, got {0}")]
    NoLabels(usize),
    #[error("density must lie in (0, 1], got {0}")]
    BadDensity(Rational),
}

fn iproduct2() -> impl Iterator<Item = (u8, u8)> {
    (0..2u8).flat_map(|v| (0..2u8).map(move |w| (v, w)))
}

#[derive(Debug, Clone)]
pub struct DiningConfig {
    pub participants: usize,
    /// Probability that a coin shows 1.
    pub coin_bias: Rational,
}

#[derive(Debug, Clone)]
pub struct DiningChain {
    pub lmc: Lmc,
    /// Start states of the two scenarios: participant 0 paid, participant 1
    /// paid.
    pub starts: [StateId; 2],
}

/// Expands both payer scenarios into one chain.
///
/// Coins resolve lazily: the first transition fixes the wrap-around coin
/// (shared by participants n-1 and 0) together with coin 0, every further
/// announcement flips one more coin, and the final announcement reuses the
/// remembered wrap-around coin. A state `p{k}_a{pos}_{v}{w}_{tag}` is
/// scenario k about to make announcement `pos`, where `v` is the most
/// recently flipped coin, `w` the wrap-around coin and `tag` the announced
/// bit (`ag` for 1).
pub fn generate_dining(config: &DiningConfig) -> Result<DiningChain, ModelGenError> {
    let n = config.participants;
    if n < 2 {
        return Err(ModelGenError::TooFewParticipants(n));
    }
    let p = &config.coin_bias;
    if !p.is_positive() || *p >= Rational::one() {
        return Err(ModelGenError::BadBias(p.clone()));
    }
    let coin = |v: u8| {
        if v == 1 {
            p.clone()
        } else {
            Rational::one() - p
        }
    };

    let alphabet = vec![
        "init".to_string(),
        "agree".to_string(),
        "disagree".to_string(),
        "done".to_string(),
    ];
    let mut states: Vec<(String, String)> = vec![
        ("start0".into(), "init".into()),
        ("start1".into(), "init".into()),
    ];
    let mut transitions: Vec<(String, String, Rational)> = Vec::new();

    let pay = |scenario: usize, pos: usize| u8::from(scenario == pos);
    let tag = |bit: u8| if bit == 1 { "ag" } else { "dis" };
    let label = |bit: u8| if bit == 1 { "agree" } else { "disagree" };
    let name = |scenario: usize, pos: usize, v: u8, w: u8, bit: u8| {
        format!("p{}_a{}_{}{}_{}", scenario, pos, v, w, tag(bit))
    };

    for scenario in 0..2 {
        // Layers of (last flipped coin v, wrap-around coin w, announced
        // bit). The first and last layers determine the bit from the coins;
        // in between the bit also depends on the previous flip, so both bit
        // variants exist per coin pair.
        let mut layers: Vec<Vec<(u8, u8, u8)>> = Vec::with_capacity(n);
        layers.push(
            iproduct2()
                .map(|(v, w)| (v, w, v ^ w ^ pay(scenario, 0)))
                .collect(),
        );
        for _ in 1..n - 1 {
            layers.push(
                iproduct2()
                    .flat_map(|(v, w)| [(v, w, 0), (v, w, 1)])
                    .collect(),
            );
        }
        layers.push(
            iproduct2()
                .map(|(v, w)| (v, w, v ^ w ^ pay(scenario, n - 1)))
                .collect(),
        );

        for (pos, layer) in layers.iter().enumerate() {
            for &(v, w, bit) in layer {
                states.push((name(scenario, pos, v, w, bit), label(bit).into()));
            }
        }
        for &(v, w, bit) in &layers[0] {
            transitions.push((
                format!("start{}", scenario),
                name(scenario, 0, v, w, bit),
                coin(v) * coin(w),
            ));
        }
        // Middle step: flip coin `pos`, announce it against the previous one.
        for pos in 1..n - 1 {
            for &(prev_v, w, prev_bit) in &layers[pos - 1] {
                for v in 0..2u8 {
                    let bit = v ^ prev_v ^ pay(scenario, pos);
                    transitions.push((
                        name(scenario, pos - 1, prev_v, w, prev_bit),
                        name(scenario, pos, v, w, bit),
                        coin(v),
                    ));
                }
            }
        }
        // Final step: announce the remembered wrap-around coin, no new flip.
        for &(v, w, prev_bit) in &layers[n - 2] {
            let bit = w ^ v ^ pay(scenario, n - 1);
            transitions.push((
                name(scenario, n - 2, v, w, prev_bit),
                name(scenario, n - 1, v, w, bit),
                Rational::one(),
            ));
        }
        for &(v, w, bit) in &layers[n - 1] {
            transitions.push((name(scenario, n - 1, v, w, bit), "done".into(), Rational::one()));
        }
    }
    states.push(("done".into(), "done".into()));
    transitions.push(("done".into(), "done".into(), Rational::one()));

    let lmc = Lmc::new(alphabet, states, transitions).expect("construction is valid");
    let starts = [
        lmc.state_index("start0").unwrap(),
        lmc.state_index("start1").unwrap(),
    ];
    Ok(DiningChain { lmc, starts })
}

#[derive(Debug, Clone)]
pub struct RandomConfig {
    pub states: usize,
    pub alphabet_size: usize,
    /// Fraction of states reachable in one step from each state, in (0, 1].
    pub density: Rational,
    pub seed: u64,
}

/// Seeded random chain: labels drawn uniformly, each row supported on
/// ceil(density * states) distinct targets with small integer weights
/// normalized to 1. The same seed always yields the same chain.
pub fn generate_random(config: &RandomConfig) -> Result<Lmc, ModelGenError> {
    let n = config.states;
    if n == 0 {
        return Err(ModelGenError::NoStates(n));
    }
    if config.alphabet_size == 0 {
        return Err(ModelGenError::NoLabels(config.alphabet_size));
    }
    if !config.density.is_positive() || config.density > Rational::one() {
        return Err(ModelGenError::BadDensity(config.density.clone()));
    }
    let out_degree: usize = {
        let k = (&config.density * &Rational::from(n as i64))
            .ceil_int()
            .to_string()
            .parse()
            .expect("ceil of density*states fits usize");
        1usize.max(k)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let alphabet: Vec<String> = (0..config.alphabet_size).map(|l| format!("l{}", l)).collect();
    let states: Vec<(String, String)> = (0..n)
        .map(|s| {
            let l = rng.gen_range(0..config.alphabet_size);
            (format!("s{}", s), alphabet[l].clone())
        })
        .collect();

    let mut transitions = Vec::new();
    let mut all_targets: Vec<usize> = (0..n).collect();
    for s in 0..n {
        all_targets.shuffle(&mut rng);
        let mut targets: Vec<usize> = all_targets[..out_degree].to_vec();
        targets.sort_unstable();
        let weights: Vec<i64> = (0..out_degree).map(|_| rng.gen_range(1..=9)).collect();
        let total: i64 = weights.iter().sum();
        for (t, w) in targets.iter().zip(&weights) {
            transitions.push((
                format!("s{}", s),
                format!("s{}", t),
                Rational::new(*w, total),
            ));
        }
    }
    Ok(Lmc::new(alphabet, states, transitions).expect("construction is valid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmc::HorizonOptions;

    fn rat(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    fn dining(n: usize, bias_num: i64, bias_den: i64) -> DiningChain {
        generate_dining(&DiningConfig {
            participants: n,
            coin_bias: rat(bias_num, bias_den),
        })
        .unwrap()
    }

    #[test]
    fn two_participant_chain_has_expected_shape() {
        let dc = dining(2, 49, 100);
        assert_eq!(dc.lmc.num_states(), 19);
        assert_eq!(dc.lmc.alphabet(), &["init", "agree", "disagree", "done"]);
        assert_eq!(dc.lmc.state_name(dc.starts[0]), "start0");
        assert_eq!(dc.lmc.state_name(dc.starts[1]), "start1");
    }

    #[test]
    fn rejects_bad_configurations() {
        assert!(matches!(
            generate_dining(&DiningConfig {
                participants: 1,
                coin_bias: rat(1, 2)
            }),
            Err(ModelGenError::TooFewParticipants(1))
        ));
        assert!(matches!(
            generate_dining(&DiningConfig {
                participants: 2,
                coin_bias: Rational::one()
            }),
            Err(ModelGenError::BadBias(_))
        ));
        assert!(matches!(
            generate_dining(&DiningConfig {
                participants: 2,
                coin_bias: Rational::zero()
            }),
            Err(ModelGenError::BadBias(_))
        ));
    }

    #[test]
    fn biased_coin_shifts_the_first_announcement() {
        let dc = dining(2, 49, 100);
        let opts = HorizonOptions::default();
        let h2 = dc
            .lmc
            .horizon_distribution(dc.starts[0], 2, &opts)
            .unwrap();
        // agree iff the two coins match: p^2 + (1-p)^2.
        let init = 0;
        let agree = 1;
        let disagree = 2;
        assert_eq!(h2.mass[&vec![init, agree]], rat(5002, 10000));
        assert_eq!(h2.mass[&vec![init, disagree]], rat(4998, 10000));
        // The other payer flips the first announcement.
        let h2b = dc
            .lmc
            .horizon_distribution(dc.starts[1], 2, &opts)
            .unwrap();
        assert_eq!(h2b.mass[&vec![init, agree]], rat(4998, 10000));
    }

    #[test]
    fn second_announcement_negates_the_first() {
        let dc = dining(2, 49, 100);
        let opts = HorizonOptions::default();
        let h3 = dc
            .lmc
            .horizon_distribution(dc.starts[0], 3, &opts)
            .unwrap();
        let (init, agree, disagree) = (0, 1, 2);
        assert_eq!(h3.mass.len(), 2);
        assert_eq!(h3.mass[&vec![init, agree, disagree]], rat(5002, 10000));
        assert_eq!(h3.mass[&vec![init, disagree, agree]], rat(4998, 10000));
    }

    #[test]
    fn fair_coin_makes_the_scenarios_bisimilar() {
        let dc = dining(2, 1, 2);
        let p = dc.lmc.bisimilarity_partition();
        assert!(p.same_block(dc.starts[0], dc.starts[1]));
    }

    #[test]
    fn biased_coin_separates_the_scenarios() {
        let dc = dining(2, 49, 100);
        let p = dc.lmc.bisimilarity_partition();
        assert!(!p.same_block(dc.starts[0], dc.starts[1]));
        // Announcement states with equal tags stay bisimilar across
        // scenarios; the leak is purely in the announcement probabilities.
        let a = dc.lmc.state_index("p0_a0_00_ag").unwrap();
        let b = dc.lmc.state_index("p1_a0_01_ag").unwrap();
        assert!(p.same_block(a, b));
    }

    #[test]
    fn three_participants_expand_and_conserve_mass() {
        let dc = dining(3, 2, 5);
        // Per scenario: 4 first-layer, 8 middle, 4 final; plus starts, done.
        assert_eq!(dc.lmc.num_states(), 35);
        let opts = HorizonOptions::default();
        for start in dc.starts {
            let d = dc.lmc.horizon_distribution(start, 5, &opts).unwrap();
            assert_eq!(d.total_mass(), Rational::one());
            // All traces: init, three announcements, done.
            for trace in d.mass.keys() {
                assert_eq!(trace[0], 0);
                assert_eq!(trace[4], 3);
            }
        }
        // Every coin enters the announcement xor twice and one participant
        // paid, so each trace carries an odd number of agreements.
        let d = dc
            .lmc
            .horizon_distribution(dc.starts[0], 5, &opts)
            .unwrap();
        for trace in d.mass.keys() {
            let agreements = trace.iter().filter(|&&l| l == 1).count();
            assert_eq!(agreements % 2, 1, "trace {:?}", trace);
        }
    }

    #[test]
    fn fair_coin_three_party_scenarios_are_bisimilar() {
        let dc = dining(3, 1, 2);
        let p = dc.lmc.bisimilarity_partition();
        assert!(p.same_block(dc.starts[0], dc.starts[1]));
    }

    #[test]
    fn random_chains_are_reproducible() {
        let config = RandomConfig {
            states: 8,
            alphabet_size: 3,
            density: rat(1, 2),
            seed: 11,
        };
        let a = generate_random(&config).unwrap();
        let b = generate_random(&config).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        let c = generate_random(&RandomConfig { seed: 12, ..config }).unwrap();
        assert_ne!(a.to_text(), c.to_text());
    }

    #[test]
    fn random_chain_rows_have_requested_support() {
        let m = generate_random(&RandomConfig {
            states: 6,
            alphabet_size: 2,
            density: rat(1, 2),
            seed: 5,
        })
        .unwrap();
        assert_eq!(m.num_states(), 6);
        for s in 0..6 {
            assert_eq!(m.row(s).len(), 3);
        }
        let full = generate_random(&RandomConfig {
            states: 5,
            alphabet_size: 2,
            density: Rational::one(),
            seed: 5,
        })
        .unwrap();
        for s in 0..5 {
            assert_eq!(full.row(s).len(), 5);
        }
    }

    #[test]
    fn random_config_validation() {
        assert!(generate_random(&RandomConfig {
            states: 0,
            alphabet_size: 1,
            density: Rational::one(),
            seed: 0,
        })
        .is_err());
        assert!(generate_random(&RandomConfig {
            states: 3,
            alphabet_size: 0,
            density: Rational::one(),
            seed: 0,
        })
        .is_err());
        assert!(generate_random(&RandomConfig {
            states: 3,
            alphabet_size: 2,
            density: rat(3, 2),
            seed: 0,
        })
        .is_err());
    }
}
