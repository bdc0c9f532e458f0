//! Synchronous scheduler and the seeded run driver.

use crate::emulation::Signature;
use crate::error::{Error, Result};
use crate::model::{observe, ModelVariant, SlotAction, SlotRecord};
use crate::protocol::{
    BcdlNode, BcdlcdNode, BlMcNode, BlcdNode, CountingNode, PhaseRecord, Protocol,
};
use crate::rng::{NodeRng, COIN_LANE, SIGNATURE_LANE};

/// Phase cap per node when none is configured.
pub const DEFAULT_PHASE_CAP_PER_NODE: u64 = 10_000;

/// A one-hop network of protocol nodes, advanced one phase at a time.
///
/// After each phase the scheduler checks that all uncounted nodes share the
/// same `k`, and, for protocols with exact collision detection, that at most
/// one node was counted and only when it contended alone.
#[derive(Debug)]
pub struct Network<N> {
    nodes: Vec<N>,
    variant: ModelVariant,
    slots_per_phase: u32,
    exact: bool,
    phases: u64,
    slots: u64,
    actions: Vec<SlotAction>,
    live: Vec<usize>,
    slot_trace: Option<Vec<SlotRecord>>,
}

impl<N: CountingNode> Network<N> {
    /// `exact` marks protocols where collision detection never errs.
    pub fn new(nodes: Vec<N>, variant: ModelVariant, slots_per_phase: u32, exact: bool) -> Self {
        Self {
            actions: Vec::with_capacity(nodes.len()),
            live: Vec::with_capacity(nodes.len()),
            nodes,
            variant,
            slots_per_phase,
            exact,
            phases: 0,
            slots: 0,
            slot_trace: None,
        }
    }

    /// Keep a [`SlotRecord`] for every slot from now on.
    pub fn record_slots(&mut self) {
        self.slot_trace.get_or_insert_with(Vec::new);
    }

    pub fn take_slot_trace(&mut self) -> Option<Vec<SlotRecord>> {
        self.slot_trace.take()
    }

    pub fn nodes(&self) -> &[N] {
        &self.nodes
    }

    pub fn phases(&self) -> u64 {
        self.phases
    }

    pub fn slots(&self) -> u64 {
        self.slots
    }

    pub fn all_terminated(&self) -> bool {
        self.nodes.iter().all(|n| n.state().terminated)
    }

    pub fn live_count(&self) -> usize {
        self.nodes.iter().filter(|n| !n.state().terminated).count()
    }

    /// `k` shared by all live uncounted nodes, `None` if there are none.
    fn uncounted_k(&self) -> Result<Option<u32>> {
        let mut ks = self
            .nodes
            .iter()
            .map(|n| n.state())
            .filter(|s| !s.terminated && !s.counted)
            .map(|s| s.k);
        let Some(k) = ks.next() else {
            return Ok(None);
        };
        if let Some(other) = ks.find(|&other| other != k) {
            return Err(self.violation(format!("uncounted nodes disagree on k ({k} vs {other})")));
        }
        Ok(Some(k))
    }

    fn violation(&self, detail: String) -> Error {
        Error::Invariant {
            phase: self.phases,
            detail,
        }
    }

    fn counted(&self) -> usize {
        self.nodes.iter().filter(|n| n.state().counted).count()
    }

    /// Runs all slots of one phase for every live node.
    pub fn step_phase(&mut self) -> Result<PhaseRecord> {
        self.live.clear();
        self.live.extend(
            self.nodes
                .iter()
                .enumerate()
                .filter(|(_, n)| !n.state().terminated)
                .map(|(i, _)| i),
        );
        if self.live.is_empty() {
            return Err(Error::InvalidInput(
                "every node has already terminated".into(),
            ));
        }
        let k_before = self
            .uncounted_k()?
            .ok_or_else(|| self.violation("live nodes remain but all are counted".into()))?;
        let counted_before = self.counted();
        let mut slot_beepers = Vec::with_capacity(self.slots_per_phase as usize);

        for slot in 0..self.slots_per_phase {
            self.actions.clear();
            for &i in &self.live {
                self.actions.push(self.nodes[i].act(slot));
            }
            let beepers = crate::model::beeper_count(&self.actions);
            let mut observations = self
                .slot_trace
                .as_ref()
                .map(|_| Vec::with_capacity(self.live.len()));
            for (&i, &action) in self.live.iter().zip(&self.actions) {
                let obs = observe(action, beepers, self.variant);
                self.nodes[i].observe(slot, action, obs);
                if let Some(o) = observations.as_mut() {
                    o.push(obs);
                }
            }
            if let (Some(trace), Some(observations)) = (self.slot_trace.as_mut(), observations) {
                trace.push(SlotRecord {
                    slot_index: self.slots,
                    beeper_count: beepers,
                    actions: self.actions.clone(),
                    observations,
                });
            }
            slot_beepers.push(beepers);
            self.slots += 1;
        }

        let contenders = self
            .live
            .iter()
            .filter(|&&i| self.nodes[i].contended())
            .count();
        for &i in &self.live {
            self.nodes[i].end_phase();
        }

        let record = PhaseRecord {
            phase_index: self.phases,
            slot_beepers,
            contenders,
            k_before,
            k_after: self.uncounted_k()?,
            counted_this_phase: self.counted() - counted_before,
        };
        if self.exact
            && record.node_counted_this_phase()
            && (record.counted_this_phase > 1 || record.contenders != 1)
        {
            return Err(self.violation(format!(
                "{} nodes counted with {} contenders",
                record.counted_this_phase, record.contenders
            )));
        }
        self.phases += 1;
        Ok(record)
    }
}

/// Per-run options.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    /// Emulation rounds for `bl-mc`; must be `None` for the other protocols.
    pub r: Option<u32>,
    /// Abort after this many phases; defaults to 10 000 per node.
    pub phase_cap: Option<u64>,
    /// Keep per-phase and per-slot records.
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub protocol: Protocol,
    pub variant: ModelVariant,
    pub n: usize,
    pub seed: u64,
    pub r: Option<u32>,
    pub phases: u64,
    pub slots: u64,
    /// Final size reported by every node.
    pub sizes: Vec<u64>,
    /// Every node reported `n` and all terminated in the same phase.
    pub correct: bool,
    /// Hit the phase cap before termination.
    pub aborted: bool,
    pub phase_records: Option<Vec<PhaseRecord>>,
    pub slot_records: Option<Vec<SlotRecord>>,
}

impl RunResult {
    pub fn min_size(&self) -> u64 {
        self.sizes.iter().copied().min().unwrap_or(0)
    }

    pub fn max_size(&self) -> u64 {
        self.sizes.iter().copied().max().unwrap_or(0)
    }
}

/// Checks that a protocol can run on `n` nodes under `variant` and `config`.
pub fn validate(
    protocol: Protocol,
    n: usize,
    variant: ModelVariant,
    config: &RunConfig,
) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidInput(
            "a network needs at least one node".into(),
        ));
    }
    if variant != protocol.variant() {
        return Err(Error::VariantMismatch {
            protocol,
            variant,
            expected: protocol.variant(),
        });
    }
    if protocol == Protocol::Blcd && n == 1 {
        return Err(Error::SingleNodeUndecidable);
    }
    match (protocol, config.r) {
        (Protocol::BlMc, None) => {
            return Err(Error::Config(
                "bl-mc needs a number of emulation rounds r".into(),
            ))
        }
        (Protocol::BlMc, Some(r)) if !(1..=crate::emulation::MAX_ROUNDS).contains(&r) => {
            return Err(Error::Config(format!(
                "emulation rounds must be in 1..={}, got {r}",
                crate::emulation::MAX_ROUNDS
            )))
        }
        (Protocol::BlMc, Some(_)) => {}
        (_, Some(_)) => {
            return Err(Error::Config(format!(
                "emulation rounds only apply to bl-mc, not {protocol}"
            )))
        }
        (_, None) => {}
    }
    if config.phase_cap == Some(0) {
        return Err(Error::Config("the phase cap must be positive".into()));
    }
    Ok(())
}

/// Runs one protocol to termination (or to the phase cap) on the complete
/// graph with `n` nodes.
///
/// The run is a pure function of its arguments: node `i` draws its coins
/// from stream `i` of the generator keyed by `seed`.
pub fn run_protocol(
    protocol: Protocol,
    n: usize,
    variant: ModelVariant,
    seed: u64,
    config: &RunConfig,
) -> Result<RunResult> {
    validate(protocol, n, variant, config)?;
    let coins = |i| NodeRng::new(seed, i, COIN_LANE);
    let spp = protocol.slots_per_phase(config.r.unwrap_or(0)) as u32;
    let outcome = match protocol {
        Protocol::Bcdl => drive(
            Network::new(
                (0..n).map(|i| BcdlNode::new(coins(i))).collect(),
                variant,
                spp,
                true,
            ),
            config,
        )?,
        Protocol::Bcdlcd => drive(
            Network::new(
                (0..n).map(|i| BcdlcdNode::new(coins(i))).collect(),
                variant,
                spp,
                true,
            ),
            config,
        )?,
        Protocol::Blcd => drive(
            Network::new(
                (0..n).map(|i| BlcdNode::new(coins(i))).collect(),
                variant,
                spp,
                true,
            ),
            config,
        )?,
        Protocol::BlMc => {
            let r = config.r.expect("validated");
            let nodes = (0..n)
                .map(|i| {
                    let mut sig_rng = NodeRng::new(seed, i, SIGNATURE_LANE);
                    Ok(BlMcNode::new(coins(i), Signature::random(&mut sig_rng, r)?))
                })
                .collect::<Result<Vec<_>>>()?;
            drive(Network::new(nodes, variant, spp, false), config)?
        }
    };

    let correct = !outcome.aborted
        && !outcome.split_termination
        && outcome.sizes.iter().all(|&s| s == n as u64);
    Ok(RunResult {
        protocol,
        variant,
        n,
        seed,
        r: config.r,
        phases: outcome.phases,
        slots: outcome.slots,
        sizes: outcome.sizes,
        correct,
        aborted: outcome.aborted,
        phase_records: outcome.phase_records,
        slot_records: outcome.slot_records,
    })
}

struct Outcome {
    phases: u64,
    slots: u64,
    sizes: Vec<u64>,
    aborted: bool,
    split_termination: bool,
    phase_records: Option<Vec<PhaseRecord>>,
    slot_records: Option<Vec<SlotRecord>>,
}

fn drive<N: CountingNode>(mut net: Network<N>, config: &RunConfig) -> Result<Outcome> {
    let n = net.nodes().len() as u64;
    let cap = config
        .phase_cap
        .unwrap_or(DEFAULT_PHASE_CAP_PER_NODE.saturating_mul(n));
    let mut phase_records = config.trace.then(Vec::new);
    if config.trace {
        net.record_slots();
    }
    let mut split_termination = false;
    let mut aborted = false;

    while !net.all_terminated() {
        if net.phases() >= cap {
            log::warn!(
                "run aborted after {} phases with {} of {n} nodes still live",
                net.phases(),
                net.live_count()
            );
            aborted = true;
            break;
        }
        let live_before = net.live_count();
        let record = net.step_phase()?;
        let live_after = net.live_count();
        if live_after != 0 && live_after != live_before {
            split_termination = true;
        }
        if let Some(records) = phase_records.as_mut() {
            records.push(record);
        }
    }

    Ok(Outcome {
        phases: net.phases(),
        slots: net.slots(),
        sizes: net.nodes().iter().map(|n| n.state().size).collect(),
        aborted,
        split_termination,
        phase_records,
        slot_records: net.take_slot_trace(),
    })
}
