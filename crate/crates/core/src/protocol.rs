//! Counting protocols, written as per-node state machines.
//!
//! Every protocol repeats a fixed-length phase. In the first slot of a
//! phase, each uncounted node contends by beeping with probability `1/k`.
//! A node that is recognised as the only contender becomes counted, and
//! every other node increases its size estimate. The phase ends with a slot
//! in which all uncounted nodes beep; silence there means everybody has
//! been counted and all nodes terminate together. Uncounted nodes lower
//! `k` after a silent first slot (down to 2) and raise it after a
//! collision.
//!
//! The four protocols differ in how a lone contender is recognised:
//!
//! | protocol | model    | slots  | lone contender detected by |
//! |----------|----------|--------|-----------------------------|
//! | `bcdl`   | `B_cd L` | 3      | itself, then announced in slot 2 |
//! | `bcdlcd` | `B_cd L_cd` | 2   | itself and the listeners, in slot 1 |
//! | `blcd`   | `B L_cd` | 4      | the listeners, who answer in slots 2 and 3 |
//! | `bl-mc`  | `B L`    | 2r + 2 | an `r`-round emulation window (may err) |
//!
//! Nodes never see their index in the network. Counted nodes keep taking
//! part in every slot until termination.

use std::fmt;
use std::str::FromStr;

use crate::emulation::{reveals_collision, Signature};
use crate::error::{Error, Result};
use crate::model::{ModelVariant, Observation, SlotAction};
use crate::rng::NodeRng;
use crate::sim::Network;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Protocol {
    Bcdl,
    Bcdlcd,
    Blcd,
    BlMc,
}

impl Protocol {
    pub const ALL: [Self; 4] = [Self::Bcdl, Self::Bcdlcd, Self::Blcd, Self::BlMc];

    pub fn id(self) -> &'static str {
        match self {
            Self::Bcdl => "bcdl",
            Self::Bcdlcd => "bcdlcd",
            Self::Blcd => "blcd",
            Self::BlMc => "bl-mc",
        }
    }

    /// The model the protocol is written for.
    pub fn variant(self) -> ModelVariant {
        match self {
            Self::Bcdl => ModelVariant::BCD_L,
            Self::Bcdlcd => ModelVariant::BCD_L_CD,
            Self::Blcd => ModelVariant::BL_CD,
            Self::BlMc => ModelVariant::BL,
        }
    }

    /// `r` is only used by `bl-mc`.
    pub fn slots_per_phase(self, r: u32) -> u64 {
        match self {
            Self::Bcdl => 3,
            Self::Bcdlcd => 2,
            Self::Blcd => 4,
            Self::BlMc => 2 * u64::from(r) + 2,
        }
    }

    /// Always correct on termination (as opposed to Monte Carlo).
    pub fn is_las_vegas(self) -> bool {
        self != Self::BlMc
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.id() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown protocol {s:?}")))
    }
}

/// Protocol variables of one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountingState {
    pub counted: bool,
    pub terminated: bool,
    /// Contention parameter; uncounted nodes beep with probability `1/k`.
    pub k: u32,
    /// Number of nodes this node has counted so far, itself included.
    pub size: u64,
    pub signature: Option<Signature>,
}

impl Default for CountingState {
    fn default() -> Self {
        Self {
            counted: false,
            terminated: false,
            k: 2,
            size: 1,
            signature: None,
        }
    }
}

impl CountingState {
    fn lower_k(&mut self) {
        if self.k > 2 {
            self.k -= 1;
        }
    }

    fn raise_k(&mut self) {
        self.k += 1;
    }
}

/// Summary of one phase of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseRecord {
    pub phase_index: u64,
    /// Number of beepers in each slot of the phase. For `bl-mc` the first
    /// `2r` entries are the emulation window.
    pub slot_beepers: Vec<usize>,
    /// Nodes that drew the `1/k` coin and contended.
    pub contenders: usize,
    /// Shared `k` of the uncounted nodes at the start of the phase.
    pub k_before: u32,
    /// Shared `k` of the uncounted nodes at the end; `None` once all are counted.
    pub k_after: Option<u32>,
    pub counted_this_phase: usize,
}

impl PhaseRecord {
    pub fn node_counted_this_phase(&self) -> bool {
        self.counted_this_phase > 0
    }
}

/// A node that the synchronous scheduler can drive through a phase.
///
/// Per slot, the scheduler collects `act` from every live node, resolves
/// the slot, and hands each node its own observation. `end_phase` runs
/// after the last slot.
pub trait CountingNode {
    fn state(&self) -> &CountingState;
    /// Action for slot `slot` (0-based within the phase).
    fn act(&mut self, slot: u32) -> SlotAction;
    fn observe(&mut self, slot: u32, action: SlotAction, observation: Observation);
    fn end_phase(&mut self);
    /// Whether the node drew the contention coin this phase.
    fn contended(&self) -> bool;
}

macro_rules! impl_common {
    () => {
        fn state(&self) -> &CountingState {
            &self.state
        }

        fn contended(&self) -> bool {
            self.contended
        }
    };
}

/// Three-slot protocol for `B_cd L`.
#[derive(Debug, Clone)]
pub struct BcdlNode<C = NodeRng> {
    state: CountingState,
    coins: C,
    contended: bool,
    heard: [Observation; 3],
}

impl<C: CoinSource> BcdlNode<C> {
    pub fn new(coins: C) -> Self {
        Self {
            state: CountingState::default(),
            coins,
            contended: false,
            heard: [Observation::Silence; 3],
        }
    }
}

impl<C: CoinSource> CountingNode for BcdlNode<C> {
    impl_common!();

    fn act(&mut self, slot: u32) -> SlotAction {
        let beep = match slot {
            0 => {
                self.contended = !self.state.counted && self.coins.one_in(self.state.k);
                self.contended
            }
            1 => {
                let won = self.contended && self.heard[0] == Observation::SpeakerAlone;
                if won {
                    self.state.counted = true;
                }
                won
            }
            _ => !self.state.counted,
        };
        beep_if(beep)
    }

    fn observe(&mut self, slot: u32, _action: SlotAction, observation: Observation) {
        self.heard[slot as usize] = observation;
    }

    fn end_phase(&mut self) {
        let [first, second, third] = self.heard;
        if second.heard_beep() {
            self.state.size += 1;
        }
        if third == Observation::Silence {
            self.state.terminated = true;
        }
        if self.state.counted {
            return;
        }
        // Listeners cannot hear a collision directly: a beep in slot 1
        // followed by a silent slot 2 means nobody won.
        let collision = first == Observation::SpeakerCollision
            || (first.heard_beep() && second == Observation::Silence);
        if first == Observation::Silence {
            self.state.lower_k();
        } else if collision {
            self.state.raise_k();
        }
    }
}

/// Two-slot protocol for `B_cd L_cd`: listeners recognise a lone beep
/// directly, so no announcement slot is needed.
#[derive(Debug, Clone)]
pub struct BcdlcdNode<C = NodeRng> {
    state: CountingState,
    coins: C,
    contended: bool,
    heard: [Observation; 2],
}

impl<C: CoinSource> BcdlcdNode<C> {
    pub fn new(coins: C) -> Self {
        Self {
            state: CountingState::default(),
            coins,
            contended: false,
            heard: [Observation::Silence; 2],
        }
    }
}

impl<C: CoinSource> CountingNode for BcdlcdNode<C> {
    impl_common!();

    fn act(&mut self, slot: u32) -> SlotAction {
        let beep = match slot {
            0 => {
                self.contended = !self.state.counted && self.coins.one_in(self.state.k);
                self.contended
            }
            _ => !self.state.counted,
        };
        beep_if(beep)
    }

    fn observe(&mut self, slot: u32, _action: SlotAction, observation: Observation) {
        if slot == 0 && observation == Observation::SpeakerAlone {
            self.state.counted = true;
        }
        self.heard[slot as usize] = observation;
    }

    fn end_phase(&mut self) {
        let [first, second] = self.heard;
        if first == Observation::HeardOne {
            self.state.size += 1;
        }
        if second == Observation::Silence {
            self.state.terminated = true;
        }
        if self.state.counted {
            return;
        }
        match first {
            Observation::Silence => self.state.lower_k(),
            Observation::SpeakerCollision | Observation::HeardMany => self.state.raise_k(),
            _ => {}
        }
    }
}

/// Four-slot protocol for `B L_cd`. Slot-1 listeners beep in slot 2 (so a
/// contender can tell it was not alone when everybody contended) and, if
/// they heard several contenders, again in slot 3. A contender is counted
/// when slot 2 is busy and slot 3 is silent. Needs at least two nodes.
#[derive(Debug, Clone)]
pub struct BlcdNode<C = NodeRng> {
    state: CountingState,
    coins: C,
    contended: bool,
    heard: [Observation; 4],
}

impl<C: CoinSource> BlcdNode<C> {
    pub fn new(coins: C) -> Self {
        Self {
            state: CountingState::default(),
            coins,
            contended: false,
            heard: [Observation::Silence; 4],
        }
    }
}

impl<C: CoinSource> CountingNode for BlcdNode<C> {
    impl_common!();

    fn act(&mut self, slot: u32) -> SlotAction {
        let beep = match slot {
            0 => {
                self.contended = !self.state.counted && self.coins.one_in(self.state.k);
                self.contended
            }
            1 => !self.contended,
            2 => !self.contended && self.heard[0] == Observation::HeardMany,
            _ => !self.state.counted,
        };
        beep_if(beep)
    }

    fn observe(&mut self, slot: u32, _action: SlotAction, observation: Observation) {
        self.heard[slot as usize] = observation;
        if slot == 2
            && self.contended
            && self.heard[1].heard_beep()
            && observation == Observation::Silence
        {
            self.state.counted = true;
        }
    }

    fn end_phase(&mut self) {
        let [first, second, third, fourth] = self.heard;
        if first == Observation::HeardOne {
            self.state.size += 1;
        }
        if fourth == Observation::Silence {
            self.state.terminated = true;
        }
        if self.state.counted {
            return;
        }
        if self.contended {
            // An uncounted contender saw either a silent slot 2 (everyone
            // contended) or a complaint in slot 3.
            debug_assert!(second == Observation::Silence || third.heard_beep());
            self.state.raise_k();
        } else {
            match first {
                Observation::Silence => self.state.lower_k(),
                Observation::HeardMany => self.state.raise_k(),
                _ => {}
            }
        }
    }
}

/// Monte Carlo protocol for `B L`: the contention beep is replaced by an
/// `r`-round emulation of sender-side collision detection, using a
/// signature drawn once per node.
#[derive(Debug, Clone)]
pub struct BlMcNode<C = NodeRng> {
    state: CountingState,
    coins: C,
    signature: Signature,
    window: u32,
    contended: bool,
    collision: bool,
    heard_window: bool,
    heard: [Observation; 2],
}

impl<C: CoinSource> BlMcNode<C> {
    pub fn new(coins: C, signature: Signature) -> Self {
        Self {
            state: CountingState {
                signature: Some(signature),
                ..CountingState::default()
            },
            coins,
            signature,
            window: 2 * signature.rounds(),
            contended: false,
            collision: false,
            heard_window: false,
            heard: [Observation::Silence; 2],
        }
    }
}

impl<C: CoinSource> CountingNode for BlMcNode<C> {
    impl_common!();

    fn act(&mut self, slot: u32) -> SlotAction {
        if slot == 0 {
            self.contended = !self.state.counted && self.coins.one_in(self.state.k);
            self.collision = false;
            self.heard_window = false;
        }
        if slot < self.window {
            return if self.contended {
                self.signature.action(slot)
            } else {
                SlotAction::Listen
            };
        }
        let beep = if slot == self.window {
            let won = self.contended && !self.collision;
            if won {
                self.state.counted = true;
            }
            won
        } else {
            !self.state.counted
        };
        beep_if(beep)
    }

    fn observe(&mut self, slot: u32, action: SlotAction, observation: Observation) {
        if slot < self.window {
            if self.contended {
                self.collision |= reveals_collision(action, observation);
            } else {
                self.heard_window |= observation.heard_beep();
            }
        } else {
            self.heard[(slot - self.window) as usize] = observation;
        }
    }

    fn end_phase(&mut self) {
        let [second, third] = self.heard;
        if second.heard_beep() {
            self.state.size += 1;
        }
        if third == Observation::Silence {
            self.state.terminated = true;
        }
        if self.state.counted {
            return;
        }
        if self.contended {
            debug_assert!(self.collision);
            self.state.raise_k();
        } else if !self.heard_window {
            self.state.lower_k();
        } else if second == Observation::Silence {
            self.state.raise_k();
        }
    }
}

/// Source of the `1/k` contention coin.
pub trait CoinSource {
    fn one_in(&mut self, k: u32) -> bool;
}

impl CoinSource for NodeRng {
    #[inline]
    fn one_in(&mut self, k: u32) -> bool {
        NodeRng::one_in(self, k)
    }
}

/// Coin outcomes fixed in advance, for replaying a hand-written trace.
/// Panics when it runs out of outcomes.
#[derive(Debug, Clone, Default)]
pub struct ScriptedCoins(std::collections::VecDeque<bool>);

impl ScriptedCoins {
    pub fn new(outcomes: impl IntoIterator<Item = bool>) -> Self {
        Self(outcomes.into_iter().collect())
    }
}

impl CoinSource for ScriptedCoins {
    fn one_in(&mut self, _k: u32) -> bool {
        self.0
            .pop_front()
            .expect("scripted coin outcomes exhausted")
    }
}

#[inline]
fn beep_if(beep: bool) -> SlotAction {
    if beep {
        SlotAction::Beep
    } else {
        SlotAction::Listen
    }
}

/// One phase of the `B_cd L` protocol.
pub fn phase_bcdl<C: CoinSource>(network: &mut Network<BcdlNode<C>>) -> Result<PhaseRecord> {
    network.step_phase()
}

/// One phase of the `B_cd L_cd` protocol.
pub fn phase_bcdlcd<C: CoinSource>(network: &mut Network<BcdlcdNode<C>>) -> Result<PhaseRecord> {
    network.step_phase()
}

/// One phase of the `B L_cd` protocol.
pub fn phase_blcd<C: CoinSource>(network: &mut Network<BlcdNode<C>>) -> Result<PhaseRecord> {
    network.step_phase()
}

/// One phase of the Monte Carlo `B L` protocol.
pub fn phase_bl_mc<C: CoinSource>(network: &mut Network<BlMcNode<C>>) -> Result<PhaseRecord> {
    network.step_phase()
}
