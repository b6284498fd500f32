//! Slot-accurate discrete-event simulation of one TSCH link running the
//! hopping-function exchange.
//!
//! The engine only visits ASNs where a scheduled cell fires while the sender
//! has something queued. Stretches with an empty queue are skipped in one
//! step: the receiver's idle listens over the skipped range are counted
//! arithmetically and charged in bulk.
//!
//! Data frames are generated every `t_app`; update requests fall on every
//! `t_update`, which is a whole multiple of `t_app`, so each request coincides
//! with a generation instant. At any instant generation happens first, then
//! the update request, then the slot's radio activity, so a frame generated
//! at the very ASN of its cell is sent in that slot.
//!
//! Application latency counts from the generation slot to the end of the slot
//! in which the receiver first gets the frame (`delivery - generation + 1`
//! slots). Exchange timestamps are raw ASNs.

use std::collections::VecDeque;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, Scenario, ScenarioConfig};
use crate::energy::{EnergyLedger, PowerRow, SlotEvent};
use crate::fsm::{
    ExchangeLog, ExchangeRecord, Frame, FsmError, RxMode, RxNodeState, TxAction, TxMode,
    TxNodeState,
};
use crate::hopping::{self, Asn, HoppingFunction, MAX_CHANNEL, MIN_CHANNEL};
use crate::ie;
use crate::medium::{LossModel, MediumError, Outcome};
use crate::metrics::SlotHistogram;

/// RNG stream used to draw the content of new hopping functions.
pub const HOPPING_STREAM: u64 = 1;
const RECENT_STEPS: usize = 32;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Medium(#[from] MediumError),
    #[error("protocol invariant violated: {0}")]
    Violation(Box<Violation>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    /// The sender transmitted on a slot/channel the receiver was not tuned to.
    ChannelDisagreement {
        slot_offset: u32,
        channel: u8,
        listening: Vec<(u32, u8)>,
    },
    /// The receiver state machine rejected a delivered frame.
    Fsm(FsmError),
}

/// One visited firing, kept for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub asn: Asn,
    pub tx_mode: TxMode,
    pub rx_mode: RxMode,
    /// (slot offset, channel, IE id) of the transmission, if any.
    pub transmission: Option<(u32, u8, Option<u32>)>,
    pub outcome: Option<Outcome>,
}

impl fmt::Display for StepTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "asn={} tx={:?} rx={:?}",
            self.asn, self.tx_mode, self.rx_mode
        )?;
        if let Some((off, ch, ie)) = self.transmission {
            write!(f, " send(off={off}, ch={ch}, ie={ie:?})")?;
        }
        if let Some(o) = self.outcome {
            write!(f, " -> {o}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub asn: Asn,
    pub seed: u64,
    pub kind: ViolationKind,
    pub tx: TxNodeState,
    pub rx: RxNodeState,
    /// Most recent firings, oldest first.
    pub recent: Vec<StepTrace>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:?} at asn {} (seed {})",
            self.kind, self.asn, self.seed
        )?;
        writeln!(
            f,
            "  tx current={:?} backup={:?}",
            (
                self.tx.current().slot_offset,
                self.tx.current().binding_id()
            ),
            (self.tx.backup().slot_offset, self.tx.backup().binding_id())
        )?;
        writeln!(
            f,
            "  rx current={:?} backup={:?}",
            (
                self.rx.current().slot_offset,
                self.rx.current().binding_id()
            ),
            (self.rx.backup().slot_offset, self.rx.backup().binding_id())
        )?;
        for s in &self.recent {
            writeln!(f, "  {s}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub generated: u64,
    /// Frames delivered at least once (first deliveries).
    pub delivered: u64,
    /// Repeated deliveries of an already delivered frame.
    pub duplicates: u64,
    /// Frames whose ACK reached the sender (removed from the queue).
    pub acknowledged: u64,
    /// Generated but not yet acknowledged when the run ended.
    pub in_flight: u64,
    pub tx_attempts: u64,
    pub exchanges_requested: u64,
    pub exchanges_completed: u64,
    pub exchanges_aborted: u64,
    /// Exchanges still running when the run ended.
    pub exchanges_open: u64,
    /// Completed exchanges whose timestamps break the ordering invariants.
    pub ill_ordered_exchanges: u64,
}

#[derive(Debug, Clone)]
pub struct SimReport {
    pub config: ScenarioConfig,
    pub slot_s: f64,
    pub elapsed_s: f64,
    pub tx_energy: EnergyLedger,
    pub rx_energy: EnergyLedger,
    pub power: PowerRow,
    /// Relative change of total power versus the paired disabled run, percent.
    pub delta_pct: Option<f64>,
    /// Application latency, slots.
    pub latency: SlotHistogram,
    pub d_sw: SlotHistogram,
    pub d_dl: SlotHistogram,
    pub d_tot: SlotHistogram,
    pub counters: Counters,
}

impl SimReport {
    pub fn samples_per_channel(&self) -> Option<f64> {
        self.config
            .consip_enabled
            .then(|| self.config.samples_per_channel())
    }

    fn set_delta(&mut self, baseline: &SimReport) {
        let base = baseline.power.tot();
        self.delta_pct = (base > 0.0).then(|| (self.power.tot() - base) / base * 100.0);
    }
}

struct Queued {
    frame: Frame,
    delivered: bool,
}

/// Draws fresh hopping functions: a random-size subset of the band in random
/// order, sized so its IE fits the configured payload budget.
struct HoppingSource {
    rng: ChaCha8Rng,
    next_id: u32,
    min_len: usize,
    max_len: usize,
}

impl HoppingSource {
    fn new(seed: u64, l_ie_p: u32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(HOPPING_STREAM);
        let max_len = ie::max_channels_for_budget(l_ie_p as usize).clamp(1, hopping::BAND_CHANNELS);
        Self {
            rng,
            next_id: 1,
            min_len: max_len.min(8),
            max_len,
        }
    }

    fn draw(&mut self) -> HoppingFunction {
        let len = self.rng.gen_range(self.min_len..=self.max_len);
        let mut channels: Vec<u8> = (MIN_CHANNEL..=MAX_CHANNEL).collect();
        channels.shuffle(&mut self.rng);
        channels.truncate(len);
        let id = self.next_id;
        self.next_id += 1;
        HoppingFunction::new(id, channels).expect("subset of the band is valid")
    }
}

/// One simulation run. Most callers want [`run`].
pub struct Simulation {
    scenario: Scenario,
    tx: TxNodeState,
    rx: RxNodeState,
    medium: LossModel,
    hopping: HoppingSource,
    queue: VecDeque<Queued>,
    log: ExchangeLog,
    tx_energy: EnergyLedger,
    rx_energy: EnergyLedger,
    latency: SlotHistogram,
    d_sw: SlotHistogram,
    d_dl: SlotHistogram,
    d_tot: SlotHistogram,
    counters: Counters,
    recent: VecDeque<StepTrace>,
    next_seq: u64,
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, SimError> {
        let medium = LossModel::random(cfg.loss, cfg.seed)?;
        Self::with_loss_model(cfg, medium)
    }

    /// Uses an explicit loss model, e.g. a replayed outcome trace.
    pub fn with_loss_model(cfg: &ScenarioConfig, medium: LossModel) -> Result<Self, SimError> {
        let scenario = cfg.validate()?;
        let initial = HoppingFunction::first_channels(0, cfg.n_ch);
        let tx = TxNodeState::new(cfg.cell_i, cfg.cell_j, cfg.channel_offset, initial.clone())
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let rx = RxNodeState::new(cfg.cell_i, cfg.cell_j, cfg.channel_offset, initial)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(Self {
            hopping: HoppingSource::new(cfg.seed, cfg.frame.l_ie_p),
            scenario,
            tx,
            rx,
            medium,
            queue: VecDeque::new(),
            log: ExchangeLog::new(),
            tx_energy: EnergyLedger::default(),
            rx_energy: EnergyLedger::default(),
            latency: SlotHistogram::new(),
            d_sw: SlotHistogram::new(),
            d_dl: SlotHistogram::new(),
            d_tot: SlotHistogram::new(),
            counters: Counters::default(),
            recent: VecDeque::with_capacity(RECENT_STEPS),
            next_seq: 0,
        })
    }

    pub fn run(mut self) -> Result<SimReport, SimError> {
        let end = Asn(self.scenario.duration_slots);
        let t_app = self.scenario.t_app_slots;
        let t_update = self.scenario.t_update_slots;
        let mut next_gen = Asn(0);
        let mut next_update = t_update.map(Asn);
        let mut cursor = Asn(0);

        loop {
            while next_gen <= cursor && next_gen < end {
                self.generate(next_gen);
                if next_update == Some(next_gen) {
                    self.request_update(next_gen)?;
                    next_update = t_update.map(|p| Asn(next_gen.0 + p));
                }
                next_gen = Asn(next_gen.0 + t_app);
            }
            if cursor >= end {
                break;
            }
            let horizon = next_gen.min(end);
            if self.queue.is_empty() {
                self.charge_idle_range(cursor, horizon);
                cursor = horizon;
                continue;
            }
            let firing = self.next_firing(cursor);
            if firing >= horizon {
                cursor = horizon;
                continue;
            }
            self.fire(firing)?;
            cursor = Asn(firing.0 + 1);
        }
        Ok(self.finish())
    }

    fn generate(&mut self, at: Asn) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.counters.generated += 1;
        let payload = self
            .scenario
            .config
            .frame
            .l_payload
            .min(u32::from(u16::MAX)) as u16;
        self.queue.push_back(Queued {
            frame: Frame::data(seq, payload, at),
            delivered: false,
        });
    }

    fn request_update(&mut self, at: Asn) -> Result<(), SimError> {
        let nu = self.hopping.draw();
        let outcome = self
            .tx
            .request_update(nu)
            .map_err(|e| self.violation(at, ViolationKind::Fsm(e)))?;
        self.log.on_request(outcome, at);
        self.counters.exchanges_requested += 1;
        Ok(())
    }

    fn active_rx_offsets(&self) -> impl Iterator<Item = u32> + '_ {
        [self.rx.current(), self.rx.backup()]
            .into_iter()
            .filter(|c| c.is_active())
            .map(|c| c.slot_offset)
    }

    fn next_firing(&self, from: Asn) -> Asn {
        let n = self.scenario.slotframe.n_slots();
        std::iter::once(self.tx.current().slot_offset)
            .chain(self.active_rx_offsets())
            .map(|off| hopping::next_occurrence(from, off, n))
            .min()
            .expect("at least one cell")
    }

    fn charge_idle_range(&mut self, from: Asn, to: Asn) {
        let n = self.scenario.slotframe.n_slots();
        let count: u64 = self
            .active_rx_offsets()
            .map(|off| hopping::occurrences_between(from, to, off, n))
            .sum();
        self.rx_energy
            .charge_idle(count, &self.scenario.config.energy);
    }

    fn fire(&mut self, at: Asn) -> Result<(), SimError> {
        let cfg = self.scenario.slotframe;
        let energy = self.scenario.config.energy;
        let action = self
            .tx
            .slot_action(at, self.queue.front().map(|q| &q.frame), &cfg);
        let listening = self.rx.listening_set(at, &cfg);
        let mut step = StepTrace {
            asn: at,
            tx_mode: self.tx.mode(),
            rx_mode: self.rx.mode(),
            transmission: None,
            outcome: None,
        };

        let TxAction::Transmit {
            slot_offset,
            channel,
            frame,
        } = action
        else {
            for _ in &listening {
                self.rx_energy
                    .charge(SlotEvent::RxListen { frame: None }, &energy);
            }
            self.remember(step);
            return Ok(());
        };

        step.transmission = Some((slot_offset, channel, frame.ie_id()));
        let Some(target) = listening
            .iter()
            .find(|l| l.slot_offset == slot_offset && l.channel == channel)
            .copied()
        else {
            self.remember(step);
            let kind = ViolationKind::ChannelDisagreement {
                slot_offset,
                channel,
                listening: listening
                    .iter()
                    .map(|l| (l.slot_offset, l.channel))
                    .collect(),
            };
            return Err(self.violation(at, kind));
        };

        let outcome = self.medium.next_outcome()?;
        step.outcome = Some(outcome);
        self.remember(step);
        self.counters.tx_attempts += 1;
        let l_tot = self.scenario.config.frame.l_tot(frame.ie.is_some());
        self.tx_energy.charge(
            SlotEvent::TxAttempt {
                l_tot,
                ack_received: outcome.acked(),
            },
            &energy,
        );

        for l in &listening {
            if l.slot_offset == target.slot_offset && outcome.frame_arrived() {
                self.rx_energy
                    .charge(SlotEvent::RxListen { frame: Some(l_tot) }, &energy);
                self.receive(&frame, target.role, at)?;
            } else {
                self.rx_energy
                    .charge(SlotEvent::RxListen { frame: None }, &energy);
            }
        }

        if outcome.acked() {
            let event = self.tx.on_ack(&frame);
            self.log.on_ack(event, at);
            self.queue.pop_front();
            self.counters.acknowledged += 1;
        }
        Ok(())
    }

    fn receive(
        &mut self,
        frame: &Frame,
        via: crate::fsm::CellRole,
        at: Asn,
    ) -> Result<(), SimError> {
        let event = self
            .rx
            .on_frame(frame, via)
            .map_err(|e| self.violation(at, ViolationKind::Fsm(e)))?;
        if let Some(done) = self.log.on_rx(event, at) {
            self.record_exchange(&done);
        }
        let head = self.queue.front_mut().expect("transmitted frame is queued");
        if head.delivered {
            self.counters.duplicates += 1;
        } else {
            head.delivered = true;
            self.counters.delivered += 1;
            self.latency.record(at.since(frame.generated_at) + 1);
        }
        Ok(())
    }

    fn record_exchange(&mut self, r: &ExchangeRecord) {
        self.counters.exchanges_completed += 1;
        if !r.is_well_ordered() {
            self.counters.ill_ordered_exchanges += 1;
        }
        if let Some(d) = r.d_sw() {
            self.d_sw.record(d);
        }
        if let Some(d) = r.d_dl() {
            self.d_dl.record(d);
        }
        if let Some(d) = r.d_tot() {
            self.d_tot.record(d);
        }
    }

    fn remember(&mut self, step: StepTrace) {
        if self.recent.len() == RECENT_STEPS {
            self.recent.pop_front();
        }
        self.recent.push_back(step);
    }

    fn violation(&self, asn: Asn, kind: ViolationKind) -> SimError {
        SimError::Violation(Box::new(Violation {
            asn,
            seed: self.scenario.config.seed,
            kind,
            tx: self.tx.clone(),
            rx: self.rx.clone(),
            recent: self.recent.iter().cloned().collect(),
        }))
    }

    fn finish(mut self) -> SimReport {
        let elapsed_s = self.scenario.elapsed_seconds();
        self.tx_energy.elapsed_s = elapsed_s;
        self.rx_energy.elapsed_s = elapsed_s;
        self.counters.in_flight = self.queue.len() as u64;
        self.counters.exchanges_aborted = self.log.aborted_count();
        self.counters.exchanges_open = self.log.open_count() as u64;
        SimReport {
            slot_s: self.scenario.slot_seconds(),
            elapsed_s,
            power: PowerRow::from_ledgers(&self.tx_energy, &self.rx_energy, elapsed_s),
            tx_energy: self.tx_energy,
            rx_energy: self.rx_energy,
            delta_pct: None,
            latency: self.latency,
            d_sw: self.d_sw,
            d_dl: self.d_dl,
            d_tot: self.d_tot,
            counters: self.counters,
            config: self.scenario.config,
        }
    }
}

/// Runs one scenario to completion.
pub fn run(cfg: &ScenarioConfig) -> Result<SimReport, SimError> {
    Simulation::new(cfg)?.run()
}

/// Runs the disabled baseline plus one enabled run per update period (minutes),
/// all with the same seed. The baseline comes first; every enabled report
/// carries its power delta against it.
pub fn paired_sweep(
    base: &ScenarioConfig,
    t_updates_min: &[f64],
) -> Result<Vec<SimReport>, SimError> {
    let mut configs = vec![ScenarioConfig {
        consip_enabled: false,
        ..base.clone()
    }];
    configs.extend(t_updates_min.iter().map(|&t| ScenarioConfig {
        consip_enabled: true,
        t_update_min: t,
        ..base.clone()
    }));
    let mut reports = run_many(&configs)?;
    let (baseline, enabled) = reports.split_first_mut().expect("baseline present");
    for r in enabled {
        r.set_delta(baseline);
    }
    Ok(reports)
}

/// Runs a disabled baseline followed by `variants`, setting each variant's
/// power delta against the baseline.
pub fn paired_variants(
    base: &ScenarioConfig,
    variants: &[ScenarioConfig],
) -> Result<Vec<SimReport>, SimError> {
    let mut configs = vec![ScenarioConfig {
        consip_enabled: false,
        ..base.clone()
    }];
    configs.extend(variants.iter().cloned());
    let mut reports = run_many(&configs)?;
    let (baseline, rest) = reports.split_first_mut().expect("baseline present");
    for r in rest {
        r.set_delta(baseline);
    }
    Ok(reports)
}

/// Runs independent scenarios on the current rayon pool, preserving order.
pub fn run_many(configs: &[ScenarioConfig]) -> Result<Vec<SimReport>, SimError> {
    configs.par_iter().map(run).collect()
}

#[derive(Debug, Clone)]
pub struct PlacementReport {
    /// Backup cell half a slotframe away from the current cell.
    pub spaced: SimReport,
    /// Backup cell in the slot right after the current cell.
    pub contiguous: SimReport,
}

/// Compares evenly spaced against adjacent cell placement; the two runs
/// differ only in the backup cell offset.
pub fn placement_experiment(base: &ScenarioConfig) -> Result<PlacementReport, SimError> {
    let n = base.n_slots;
    let spaced = ScenarioConfig {
        consip_enabled: true,
        cell_j: (base.cell_i + n / 2) % n,
        ..base.clone()
    };
    let contiguous = ScenarioConfig {
        cell_j: (base.cell_i + 1) % n,
        ..spaced.clone()
    };
    let mut runs = run_many(&[spaced, contiguous])?;
    let contiguous = runs.pop().expect("two runs");
    let spaced = runs.pop().expect("two runs");
    Ok(PlacementReport { spaced, contiguous })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::LossParams;

    fn short(days: f64) -> ScenarioConfig {
        ScenarioConfig {
            duration_s: days * 86_400.0,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn zero_duration_is_an_empty_run() {
        let r = run(&ScenarioConfig {
            duration_s: 0.0,
            ..ScenarioConfig::default()
        })
        .unwrap();
        assert_eq!(r.counters, Counters::default());
        assert!(r.latency.summarize().is_none());
        assert_eq!(r.tx_energy.total() + r.rx_energy.total(), 0.0);
        assert_eq!(r.power.tot(), 0.0);
    }

    #[test]
    fn lossless_disabled_link_costs_204_uj_per_packet() {
        let cfg = ScenarioConfig {
            consip_enabled: false,
            loss: LossParams::lossless(),
            ..short(1.0)
        };
        let r = run(&cfg).unwrap();
        assert_eq!(r.counters.generated, 2880);
        assert_eq!(r.counters.tx_attempts, r.counters.delivered);
        let per_packet = r.tx_energy.total() / r.counters.tx_attempts as f64;
        assert!((per_packet - 204.0).abs() < 1e-9);
        assert_eq!(r.counters.duplicates, 0);
    }

    #[test]
    fn lossless_latency_is_wait_for_cell_plus_one_slot() {
        let cfg = ScenarioConfig {
            consip_enabled: false,
            loss: LossParams::lossless(),
            ..short(2.0)
        };
        let r = run(&cfg).unwrap();
        // generation k at 1500k, cell at offset 1: wait (1 - 1500k) mod 101
        let mut oracle = SlotHistogram::new();
        for k in 0..r.counters.generated {
            let g = 1500 * k;
            let wait = (101 + 1 - g % 101) % 101;
            oracle.record(wait + 1);
        }
        assert_eq!(r.latency, oracle);
    }

    #[test]
    fn lossless_exchanges_follow_hand_trace() {
        let cfg = ScenarioConfig {
            loss: LossParams::lossless(),
            ..short(3.0)
        };
        let r = run(&cfg).unwrap();
        let exchanges = r.counters.exchanges_requested;
        assert_eq!(exchanges, 3 * 48 - 1);
        assert_eq!(r.counters.exchanges_completed, exchanges);
        // every IE frame is acked on its first attempt: d_sw is only the wait
        assert!(r.d_sw.max().unwrap() <= 100);
        // the next frame is generated t_app later and waits for the new cell
        assert!(r.d_tot.min().unwrap() >= 1500);
        assert!(r.d_tot.max().unwrap() < 1500 + 101);

        // hand trace: request m at 90000m; current offset alternates 1, 51
        let mut d_sw = SlotHistogram::new();
        let mut d_tot = SlotHistogram::new();
        let (mut cur, mut back) = (1u64, 51u64);
        for m in 1..=exchanges {
            let t = 90_000 * m;
            let sw = (101 + cur - t % 101) % 101;
            let next = t + 1500;
            let e = next + (101 + back - next % 101) % 101;
            d_sw.record(sw);
            d_tot.record(e - t);
            std::mem::swap(&mut cur, &mut back);
        }
        assert_eq!(r.d_sw, d_sw);
        assert_eq!(r.d_tot, d_tot);
    }

    #[test]
    fn identical_configs_give_identical_reports() {
        let cfg = short(2.0);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a.latency, b.latency);
        assert_eq!(a.d_sw, b.d_sw);
        assert_eq!(a.counters, b.counters);
        assert_eq!(a.power, b.power);
    }

    #[test]
    fn packets_are_conserved() {
        let r = run(&short(5.0)).unwrap();
        let c = r.counters;
        assert_eq!(c.generated, c.acknowledged + c.in_flight);
        assert!(c.delivered >= c.acknowledged && c.delivered <= c.generated);
        assert!(c.in_flight <= 1);
        assert_eq!(r.latency.total(), c.delivered);
        assert_eq!(c.ill_ordered_exchanges, 0);
    }

    #[test]
    fn replayed_trace_drives_the_run() {
        let cfg = ScenarioConfig {
            consip_enabled: false,
            duration_s: 40.0,
            ..ScenarioConfig::default()
        };
        // two packets (t=0, t=30 s): first lost once, second acked after an ACK loss
        let trace = [
            Outcome::FrameLost,
            Outcome::Delivered,
            Outcome::AckLost,
            Outcome::Delivered,
        ];
        let r = Simulation::with_loss_model(&cfg, LossModel::trace(trace))
            .unwrap()
            .run()
            .unwrap();
        assert_eq!(r.counters.tx_attempts, 4);
        assert_eq!(r.counters.delivered, 2);
        assert_eq!(r.counters.duplicates, 1);
        // first packet: sent at asn 1, retried at 102; second generated at 1500, sent at 1516
        assert_eq!(r.latency.max(), Some(102 + 1));
        assert_eq!(r.latency.min(), Some(16 + 1));

        let starved = Simulation::with_loss_model(&cfg, LossModel::trace([Outcome::FrameLost]))
            .unwrap()
            .run();
        assert!(matches!(
            starved,
            Err(SimError::Medium(MediumError::TraceExhausted(1)))
        ));
    }

    #[test]
    fn invalid_placement_is_rejected() {
        let cfg = ScenarioConfig {
            cell_j: 1,
            ..short(1.0)
        };
        assert!(matches!(run(&cfg), Err(SimError::Config(_))));
    }

    #[test]
    fn empty_sweep_is_baseline_only() {
        let reports = paired_sweep(&short(1.0), &[]).unwrap();
        assert_eq!(reports.len(), 1);
        assert!(!reports[0].config.consip_enabled);
        assert_eq!(reports[0].delta_pct, None);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

        #[test]
        fn random_scenarios_keep_their_invariants(
            seed in 0u64..1_000,
            eps_f in 0.0f64..0.8,
            eps_a in 0.0f64..0.8,
            t_app_slots in 60u64..2_000,
            update_mult in 1u64..6,
            cell_i in 0u32..101,
            gap in 1u32..101,
            enabled in proptest::bool::ANY,
        ) {
            let t_app_s = t_app_slots as f64 * 0.02;
            let cfg = ScenarioConfig {
                seed,
                loss: LossParams { eps_f, eps_a },
                t_app_s,
                t_update_min: t_app_s * update_mult as f64 / 60.0,
                consip_enabled: enabled,
                cell_i,
                cell_j: (cell_i + gap) % 101,
                duration_s: 2.0 * 3600.0,
                ..ScenarioConfig::default()
            };
            let r = run(&cfg).unwrap();
            let c = &r.counters;
            proptest::prop_assert_eq!(c.generated, c.acknowledged + c.in_flight);
            proptest::prop_assert_eq!(r.latency.total(), c.delivered);
            proptest::prop_assert_eq!(c.ill_ordered_exchanges, 0);
            proptest::prop_assert_eq!(r.d_tot.total(), c.exchanges_completed);
            let q = r.power.quantized();
            proptest::prop_assert_eq!(q.tot(), q.tx_tot + q.rx + q.listen);
            let ledger_sum = |l: &EnergyLedger| l.data_tx + l.data_rx + l.ack_tx + l.ack_rx + l.idle_listen;
            proptest::prop_assert!((r.tx_energy.total() - ledger_sum(&r.tx_energy)).abs() < 1e-6);
            // a swapped exchange waiting for its closing frame plus a fresh request
            proptest::prop_assert!(c.exchanges_open <= 2);
            proptest::prop_assert_eq!(
                c.exchanges_requested,
                c.exchanges_completed + c.exchanges_aborted + c.exchanges_open
            );
            proptest::prop_assert!(!enabled || r.d_tot.min().is_none_or(|m| m > 0));
            if !enabled {
                proptest::prop_assert_eq!(c.exchanges_requested, 0);
            }
            let again = run(&cfg).unwrap();
            proptest::prop_assert_eq!(&again.latency, &r.latency);
            proptest::prop_assert_eq!(again.power, r.power);
        }
    }
}
