//! Sender-side collision detection emulated in the plain `BL` model.
//!
//! Each emulation round takes two sub-slots. A participant beeps in one of
//! them according to the current bit of its signature and listens in the
//! other; hearing a beep while listening means somebody else chose the
//! opposite sub-slot, which reveals a collision. After `r` rounds, a group
//! of participants stays undetected only if all of their signatures are
//! identical.

use crate::error::{Error, Result};
use crate::model::{resolve_slot, ModelVariant, Observation, SlotAction};
use crate::rng::NodeRng;

/// Longest supported signature.
pub const MAX_ROUNDS: u32 = 64;

/// The `r` random bits a node uses for every emulation it takes part in.
///
/// Round `i` reads bit `i` counting from the most significant of the `r`
/// bits, so `0b1010` and `0b1011` first differ in the last round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature {
    bits: u64,
    len: u32,
}

impl Signature {
    pub fn new(bits: u64, len: u32) -> Result<Self> {
        check_rounds(len)?;
        if len < 64 && bits >> len != 0 {
            return Err(Error::InvalidInput(format!(
                "signature {bits:#b} does not fit in {len} bits"
            )));
        }
        Ok(Self { bits, len })
    }

    pub fn random(rng: &mut NodeRng, len: u32) -> Result<Self> {
        check_rounds(len)?;
        Ok(Self {
            bits: rng.bits(len),
            len,
        })
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn rounds(&self) -> u32 {
        self.len
    }

    /// Bit used in round `round` (0-based).
    pub fn bit(&self, round: u32) -> bool {
        debug_assert!(round < self.len);
        (self.bits >> (self.len - 1 - round)) & 1 == 1
    }

    /// Action in sub-slot `sub_slot` of the `2r`-slot window: bit 0 beeps
    /// in the first half of the round, bit 1 in the second.
    #[inline]
    pub fn action(&self, sub_slot: u32) -> SlotAction {
        let beep_in_second = self.bit(sub_slot / 2);
        if beep_in_second == (sub_slot % 2 == 1) {
            SlotAction::Beep
        } else {
            SlotAction::Listen
        }
    }
}

fn check_rounds(r: u32) -> Result<()> {
    if (1..=MAX_ROUNDS).contains(&r) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "emulation rounds must be in 1..={MAX_ROUNDS}, got {r}"
        )))
    }
}

/// Whether a participant learns of a collision from one sub-slot.
#[inline]
pub fn reveals_collision(action: SlotAction, observation: Observation) -> bool {
    action == SlotAction::Listen && observation.heard_beep()
}

/// How the number of emulation rounds is picked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RPolicy {
    /// Each node is correct with probability at least `1 - epsilon`.
    PerNode { epsilon: f64 },
    /// The emulation is correct with probability at least `1 - epsilon`,
    /// given an upper bound on the network size.
    Global { epsilon: f64, upper_bound: u64 },
    /// Correct with high probability, given an upper bound on the size.
    WithHighProbability { upper_bound: u64 },
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "epsilon must lie strictly between 0 and 1, got {epsilon}"
        )))
    }
}

fn check_upper_bound(upper_bound: u64) -> Result<()> {
    if upper_bound >= 1 {
        Ok(())
    } else {
        Err(Error::Config(
            "the size upper bound must be at least 1".into(),
        ))
    }
}

/// Number of emulation rounds for a policy; logarithms are base 2 and the
/// result is at least 1.
pub fn choose_r(policy: RPolicy) -> Result<u32> {
    let exact = match policy {
        RPolicy::PerNode { epsilon } => {
            check_epsilon(epsilon)?;
            (1.0 / epsilon).log2()
        }
        RPolicy::Global {
            epsilon,
            upper_bound,
        } => {
            check_epsilon(epsilon)?;
            check_upper_bound(upper_bound)?;
            (upper_bound as f64 / epsilon).log2()
        }
        RPolicy::WithHighProbability { upper_bound } => {
            check_upper_bound(upper_bound)?;
            2.0 * (upper_bound as f64).log2()
        }
    };
    let r = exact.ceil().max(1.0);
    if r > MAX_ROUNDS as f64 {
        return Err(Error::Config(format!(
            "{policy:?} needs {r} emulation rounds, more than the supported {MAX_ROUNDS}"
        )));
    }
    Ok(r as u32)
}

/// Exact probability that `participants` nodes with independent uniform
/// `r`-bit signatures all fail to detect each other.
pub fn undetected_probability(r: u32, participants: u32) -> f64 {
    if participants <= 1 {
        return 1.0;
    }
    (0.5f64).powi((r * (participants - 1)) as i32)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundOutcome {
    /// Per participant: heard a beep in the sub-slot it listened in.
    pub collisions: Vec<bool>,
    /// Whether the pure listeners heard a beep in either sub-slot.
    pub listener_heard: bool,
}

/// One two-sub-slot round among `participant_bits.len()` participants and
/// `listeners` silent nodes.
pub fn emulation_round(participant_bits: &[bool], listeners: usize) -> Result<RoundOutcome> {
    let m = participant_bits.len();
    let mut outcome = RoundOutcome {
        collisions: vec![false; m],
        listener_heard: false,
    };
    for second_half in [false, true] {
        let actions: Vec<SlotAction> = participant_bits
            .iter()
            .map(|&bit| {
                if bit == second_half {
                    SlotAction::Beep
                } else {
                    SlotAction::Listen
                }
            })
            .chain(std::iter::repeat_n(SlotAction::Listen, listeners))
            .collect();
        let obs = resolve_slot(&actions, ModelVariant::BL)?;
        for (i, flag) in outcome.collisions.iter_mut().enumerate() {
            *flag |= reveals_collision(actions[i], obs[i]);
        }
        outcome.listener_heard |= obs[m..].iter().any(|o| o.heard_beep());
    }
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmulationOutcome {
    /// Per participant: whether the emulation reported a collision.
    pub collisions: Vec<bool>,
    pub listener_heard: bool,
}

/// Runs the full `r`-round emulation. The collision flag is sticky, and
/// every participant plays all rounds.
pub fn emulate_bcd(signatures: &[Signature], listeners: usize) -> Result<EmulationOutcome> {
    let Some(first) = signatures.first() else {
        return Ok(EmulationOutcome {
            collisions: Vec::new(),
            listener_heard: false,
        });
    };
    let r = first.rounds();
    if signatures.iter().any(|s| s.rounds() != r) {
        return Err(Error::InvalidInput(
            "all signatures in one emulation must have the same length".into(),
        ));
    }
    let mut collisions = vec![false; signatures.len()];
    let mut listener_heard = false;
    let mut bits = vec![false; signatures.len()];
    for round in 0..r {
        for (b, s) in bits.iter_mut().zip(signatures) {
            *b = s.bit(round);
        }
        let out = emulation_round(&bits, listeners)?;
        for (c, hit) in collisions.iter_mut().zip(out.collisions) {
            *c |= hit;
        }
        listener_heard |= out.listener_heard;
    }
    Ok(EmulationOutcome {
        collisions,
        listener_heard,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lone_participant_never_collides() {
        for bit in [false, true] {
            let out = emulation_round(&[bit], 2).unwrap();
            assert_eq!(out.collisions, vec![false]);
            assert!(out.listener_heard);
        }
    }

    #[test]
    fn differing_bits_are_detected_by_both() {
        let out = emulation_round(&[false, true], 0).unwrap();
        assert_eq!(out.collisions, vec![true, true]);
    }

    #[test]
    fn identical_bits_go_unnoticed() {
        let out = emulation_round(&[false, false], 1).unwrap();
        assert_eq!(out.collisions, vec![false, false]);
        assert!(out.listener_heard);
    }

    #[test]
    fn no_participants_means_silence() {
        let out = emulation_round(&[], 3).unwrap();
        assert!(!out.listener_heard);
        assert!(emulation_round(&[], 0).is_err());
    }

    #[test]
    fn signatures_differing_in_last_round() {
        let a = Signature::new(0b1010, 4).unwrap();
        let b = Signature::new(0b1011, 4).unwrap();
        assert!(a.bit(0) && b.bit(0) && !a.bit(3) && b.bit(3));
        let out = emulate_bcd(&[a, b], 0).unwrap();
        assert_eq!(out.collisions, vec![true, true]);
    }

    #[test]
    fn single_emulation_is_collision_free() {
        let s = Signature::new(0b0110, 4).unwrap();
        assert_eq!(emulate_bcd(&[s], 5).unwrap().collisions, vec![false]);
    }

    #[test]
    fn signature_actions_follow_bits() {
        let s = Signature::new(0b10, 2).unwrap();
        use SlotAction::*;
        let window: Vec<_> = (0..4).map(|j| s.action(j)).collect();
        assert_eq!(window, vec![Listen, Beep, Beep, Listen]);
    }

    #[test]
    fn signature_validation() {
        assert!(Signature::new(0b100, 2).is_err());
        assert!(Signature::new(0, 0).is_err());
        assert!(Signature::new(u64::MAX, 64).is_ok());
    }

    #[test]
    fn choose_r_examples() {
        assert_eq!(choose_r(RPolicy::PerNode { epsilon: 0.5 }).unwrap(), 1);
        assert_eq!(choose_r(RPolicy::PerNode { epsilon: 0.1 }).unwrap(), 4);
        assert_eq!(choose_r(RPolicy::PerNode { epsilon: 0.01 }).unwrap(), 7);
        assert_eq!(choose_r(RPolicy::PerNode { epsilon: 0.9 }).unwrap(), 1);
        assert_eq!(
            choose_r(RPolicy::WithHighProbability { upper_bound: 1024 }).unwrap(),
            20
        );
        assert_eq!(
            choose_r(RPolicy::WithHighProbability { upper_bound: 1 }).unwrap(),
            1
        );
        assert_eq!(
            choose_r(RPolicy::Global {
                epsilon: 0.1,
                upper_bound: 16
            })
            .unwrap(),
            8
        );
    }

    #[test]
    fn choose_r_rejects_bad_parameters() {
        for epsilon in [0.0, 1.0, -0.5, 2.0, f64::NAN] {
            assert!(choose_r(RPolicy::PerNode { epsilon }).is_err());
        }
        assert!(choose_r(RPolicy::Global {
            epsilon: 0.1,
            upper_bound: 0
        })
        .is_err());
        assert!(choose_r(RPolicy::WithHighProbability { upper_bound: 0 }).is_err());
        assert!(choose_r(RPolicy::PerNode { epsilon: 1e-30 }).is_err());
    }

    /// Enumerates every assignment of `r`-bit signatures to `m` nodes.
    fn all_undetected_fraction(r: u32, m: u32) -> f64 {
        let words = 1u64 << r;
        let total = words.pow(m);
        let mut undetected = 0u64;
        for code in 0..total {
            let sigs: Vec<_> = (0..m)
                .map(|i| Signature::new((code / words.pow(i)) % words, r).unwrap())
                .collect();
            let out = emulate_bcd(&sigs, 1).unwrap();
            if out.collisions.iter().all(|c| !c) {
                undetected += 1;
            }
            // either everyone detects or nobody does
            assert!(out.collisions.iter().all(|&c| c == out.collisions[0]));
        }
        undetected as f64 / total as f64
    }

    #[test]
    fn exhaustive_failure_law() {
        for r in 1..=4 {
            for m in 2..=3 {
                assert_eq!(all_undetected_fraction(r, m), undetected_probability(r, m));
            }
        }
    }

    proptest! {
        #[test]
        fn outcome_is_symmetric_in_participants(
            words in proptest::collection::vec(0u64..256, 1..6),
            rot in 0usize..6,
        ) {
            let sigs: Vec<_> = words.iter().map(|&w| Signature::new(w, 8).unwrap()).collect();
            let out = emulate_bcd(&sigs, 1).unwrap();
            let mut rotated = sigs.clone();
            let k = rot % sigs.len();
            rotated.rotate_left(k);
            let mut expected = out.collisions.clone();
            expected.rotate_left(k);
            prop_assert_eq!(emulate_bcd(&rotated, 1).unwrap().collisions, expected);
            prop_assert!(out.listener_heard);
            let all_same = words.iter().all(|&w| w == words[0]);
            prop_assert_eq!(out.collisions.iter().any(|&c| c), !all_same);
        }
    }
}
