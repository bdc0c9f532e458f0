//! Beeping-model variants and slot resolution.
//!
//! The network is a complete graph: every node hears every other node, so
//! the outcome of a slot depends only on how many nodes beeped and on the
//! collision-detection capabilities of the variant.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// One of the four beeping models, `B` or `B_cd` crossed with `L` or `L_cd`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelVariant {
    /// Beepers can tell whether they beeped alone (`B_cd`).
    pub speaker_cd: bool,
    /// Listeners can tell one beep from several (`L_cd`).
    pub listener_cd: bool,
}

impl ModelVariant {
    pub const BL: Self = Self::new(false, false);
    pub const BCD_L: Self = Self::new(true, false);
    pub const BL_CD: Self = Self::new(false, true);
    pub const BCD_L_CD: Self = Self::new(true, true);

    pub const ALL: [Self; 4] = [Self::BL, Self::BCD_L, Self::BL_CD, Self::BCD_L_CD];

    pub const fn new(speaker_cd: bool, listener_cd: bool) -> Self {
        Self {
            speaker_cd,
            listener_cd,
        }
    }

    pub fn name(self) -> &'static str {
        match (self.speaker_cd, self.listener_cd) {
            (false, false) => "BL",
            (true, false) => "BcdL",
            (false, true) => "BLcd",
            (true, true) => "BcdLcd",
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown model variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlotAction {
    Beep,
    Listen,
}

/// What a single node perceives at the end of a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Observation {
    /// Beeped, and nobody else did (`B_cd` only).
    SpeakerAlone,
    /// Beeped together with at least one other node (`B_cd` only).
    SpeakerCollision,
    /// Beeped without collision detection (`B` only).
    SpeakerUnknown,
    /// Listened, and nobody beeped.
    Silence,
    /// Listened and heard at least one beep (`L` only).
    HeardBeep,
    /// Listened and heard exactly one beep (`L_cd` only).
    HeardOne,
    /// Listened and heard two or more beeps (`L_cd` only).
    HeardMany,
}

impl Observation {
    /// Whether a listener perceived any beep at all.
    pub fn heard_beep(self) -> bool {
        matches!(self, Self::HeardBeep | Self::HeardOne | Self::HeardMany)
    }

    pub fn is_speaker(self) -> bool {
        matches!(
            self,
            Self::SpeakerAlone | Self::SpeakerCollision | Self::SpeakerUnknown
        )
    }
}

/// Full account of one slot, kept only when tracing is enabled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotRecord {
    pub slot_index: u64,
    pub beeper_count: usize,
    pub actions: Vec<SlotAction>,
    pub observations: Vec<Observation>,
}

/// Observation of one node given its own action and the slot's beeper count.
#[inline]
pub fn observe(action: SlotAction, beeper_count: usize, variant: ModelVariant) -> Observation {
    match action {
        SlotAction::Beep if !variant.speaker_cd => Observation::SpeakerUnknown,
        SlotAction::Beep if beeper_count == 1 => Observation::SpeakerAlone,
        SlotAction::Beep => Observation::SpeakerCollision,
        SlotAction::Listen => match beeper_count {
            0 => Observation::Silence,
            _ if !variant.listener_cd => Observation::HeardBeep,
            1 => Observation::HeardOne,
            _ => Observation::HeardMany,
        },
    }
}

pub fn beeper_count(actions: &[SlotAction]) -> usize {
    actions.iter().filter(|&&a| a == SlotAction::Beep).count()
}

/// Resolves a slot on the complete graph: every node's observation, in the
/// order of `actions`.
pub fn resolve_slot(actions: &[SlotAction], variant: ModelVariant) -> Result<Vec<Observation>> {
    if actions.is_empty() {
        return Err(Error::InvalidInput(
            "a slot needs at least one node".to_string(),
        ));
    }
    let beepers = beeper_count(actions);
    Ok(actions
        .iter()
        .map(|&a| observe(a, beepers, variant))
        .collect())
}
