//! Bounded exhaustive checking of the exchange protocol.
//!
//! The sender is kept saturated, so every firing of its current cell is a
//! transmission with one of three outcomes. All `3^horizon` outcome sequences
//! are enumerated depth-first from the steady initial state; scripted update
//! requests and aborts are injected before chosen firings. Checked on every
//! firing:
//!
//! - agreement: the receiver listens on the sender's slot and channel;
//! - no split brain: both sides steady implies the same current cell;
//! - completion: once the sender has swapped, the next frame that reaches the
//!   receiver leaves both sides on the same current cell.
//!
//! At the end of each path whose last two firings were delivered and
//! acknowledged (with no scripted event at those firings and no abort still
//! in effect) both sides must be steady on the most recently requested
//! function.

use std::fmt;

use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::fsm::{
    CellRole, Frame, FsmError, ListeningSet, RequestOutcome, RxEvent, RxMode, RxNodeState,
    TxAckEvent, TxAction, TxNodeState,
};
use crate::hopping::{self, Asn, Cell, HoppingFunction, SlotframeConfig, BAND_CHANNELS};
use crate::medium::{self, Outcome};
use crate::simulator::{self, SimError, SimReport};

pub const MAX_HORIZON: usize = 12;

/// Receiver behaviour as seen by the checker.
pub trait Receiver: Clone {
    fn listening_set(&self, x: Asn, cfg: &SlotframeConfig) -> ListeningSet;
    fn on_frame(&mut self, frame: &Frame, via: CellRole) -> Result<RxEvent, FsmError>;
    fn current(&self) -> &Cell;
    fn backup(&self) -> &Cell;
    fn is_steady(&self) -> bool;
}

impl Receiver for RxNodeState {
    fn listening_set(&self, x: Asn, cfg: &SlotframeConfig) -> ListeningSet {
        RxNodeState::listening_set(self, x, cfg)
    }

    fn on_frame(&mut self, frame: &Frame, via: CellRole) -> Result<RxEvent, FsmError> {
        RxNodeState::on_frame(self, frame, via)
    }

    fn current(&self) -> &Cell {
        RxNodeState::current(self)
    }

    fn backup(&self) -> &Cell {
        RxNodeState::backup(self)
    }

    fn is_steady(&self) -> bool {
        self.mode() == RxMode::Steady
    }
}

/// A deliberately broken receiver that switches to a new function as soon as
/// it hears about it, without double listening. Used to show the checker
/// finds real bugs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkipDoubleListening {
    c_curr: Cell,
    c_back: Cell,
}

impl SkipDoubleListening {
    pub fn new(
        curr_offset: u32,
        back_offset: u32,
        channel_offset: u16,
        initial: HoppingFunction,
    ) -> Self {
        Self {
            c_curr: Cell::new(curr_offset, channel_offset, Some(initial)),
            c_back: Cell::inactive(back_offset, channel_offset),
        }
    }
}

impl Receiver for SkipDoubleListening {
    fn listening_set(&self, x: Asn, cfg: &SlotframeConfig) -> ListeningSet {
        let mut set = ListeningSet::new();
        if let (true, Some(channel)) = (self.c_curr.fires(x, cfg), self.c_curr.channel_at(x)) {
            set.push(crate::fsm::Listen {
                role: CellRole::Current,
                slot_offset: self.c_curr.slot_offset,
                channel,
            });
        }
        set
    }

    fn on_frame(&mut self, frame: &Frame, via: CellRole) -> Result<RxEvent, FsmError> {
        if via != CellRole::Current {
            return Err(FsmError::InactiveCell(via));
        }
        match &frame.ie {
            Some(nu) if self.c_curr.binding_id() != Some(nu.id()) => {
                std::mem::swap(&mut self.c_curr, &mut self.c_back);
                self.c_curr.binding = Some(nu.clone());
                self.c_back.binding = None;
                Ok(RxEvent::Completed { id: nu.id() })
            }
            _ => Ok(RxEvent::Data),
        }
    }

    fn current(&self) -> &Cell {
        &self.c_curr
    }

    fn backup(&self) -> &Cell {
        &self.c_back
    }

    fn is_steady(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScriptEvent {
    /// Sender asks for a new function (a replacement if one is pending).
    Request,
    /// Sender abandons the pending exchange.
    Abort,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScriptError {
    #[error("bad script item {0:?}: expected request@N or abort@N")]
    BadItem(String),
}

/// Scripted sender-side events keyed by the firing they precede.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExchangeScript {
    events: Vec<(usize, ScriptEvent)>,
}

impl ExchangeScript {
    pub fn new(mut events: Vec<(usize, ScriptEvent)>) -> Self {
        events.sort_by_key(|(k, _)| *k);
        Self { events }
    }

    /// One update request before the first firing.
    pub fn single_request() -> Self {
        Self::new(vec![(0, ScriptEvent::Request)])
    }

    /// Parses `request@0,abort@2,...`.
    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let mut events = Vec::new();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let bad = || ScriptError::BadItem(item.to_string());
            let (name, at) = item.split_once('@').ok_or_else(bad)?;
            let at: usize = at.trim().parse().map_err(|_| bad())?;
            let event = match name.trim() {
                "request" => ScriptEvent::Request,
                "abort" => ScriptEvent::Abort,
                _ => return Err(bad()),
            };
            events.push((at, event));
        }
        Ok(Self::new(events))
    }

    pub fn events_at(&self, firing: usize) -> impl Iterator<Item = ScriptEvent> + '_ {
        self.events
            .iter()
            .filter(move |(k, _)| *k == firing)
            .map(|(_, e)| *e)
    }

    fn has_event_at(&self, firing: usize) -> bool {
        self.events.iter().any(|(k, _)| *k == firing)
    }
}

impl fmt::Display for ExchangeScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self
            .events
            .iter()
            .map(|(k, e)| match e {
                ScriptEvent::Request => format!("request@{k}"),
                ScriptEvent::Abort => format!("abort@{k}"),
            })
            .collect();
        write!(f, "{}", items.join(","))
    }
}

/// Link layout used by the checker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifySetup {
    pub slotframe: SlotframeConfig,
    pub cell_i: u32,
    pub cell_j: u32,
    pub channel_offset: u16,
}

impl Default for VerifySetup {
    fn default() -> Self {
        Self {
            slotframe: SlotframeConfig::default(),
            cell_i: 1,
            cell_j: 51,
            channel_offset: 0,
        }
    }
}

/// Hopping function number `k` of a verification run. Each has its own
/// length and ordering so that disagreements show up as channel mismatches,
/// not just slot mismatches.
pub fn scripted_function(k: u32) -> HoppingFunction {
    if k == 0 {
        return HoppingFunction::identity(0);
    }
    let mut seq: Vec<u8> = (hopping::MIN_CHANNEL..=hopping::MAX_CHANNEL)
        .rev()
        .collect();
    seq.rotate_left((3 * k as usize) % BAND_CHANNELS);
    seq.truncate(BAND_CHANNELS - (k as usize % 9));
    HoppingFunction::new(k, seq).expect("subset of the band")
}

#[derive(Debug, Clone, PartialEq)]
pub enum PropertyViolation {
    ChannelDisagreement {
        slot_offset: u32,
        channel: u8,
        listening: Vec<(u32, u8)>,
    },
    ReceiverRejected(FsmError),
    SplitBrain,
    ExchangeNotCompleted,
    NoProgress,
}

/// Snapshot of both sides after one firing.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSnapshot {
    pub firing: usize,
    pub asn: Asn,
    pub outcome: Outcome,
    pub tx_current: (u32, Option<u32>),
    pub tx_pending: Option<u32>,
    pub rx_current: (u32, Option<u32>),
    pub rx_backup: (u32, Option<u32>),
}

impl fmt::Display for StepSnapshot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "firing {} asn {} {} | tx cur={:?} pending={:?} | rx cur={:?} back={:?}",
            self.firing,
            self.asn,
            self.outcome,
            self.tx_current,
            self.tx_pending,
            self.rx_current,
            self.rx_backup
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub script: ExchangeScript,
    pub outcomes: Vec<Outcome>,
    pub violation: PropertyViolation,
    pub log: Vec<StepSnapshot>,
}

impl Counterexample {
    /// Outcome trace in the loss-trace file format, state log as comments.
    pub fn to_trace_file(&self) -> String {
        let mut comments = vec![
            format!("script: {}", self.script),
            format!("violation: {:?}", self.violation),
        ];
        comments.extend(self.log.iter().map(ToString::to_string));
        medium::format_trace(&self.outcomes, &comments)
    }
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "violation {:?} after {} firings",
            self.violation,
            self.outcomes.len()
        )?;
        writeln!(f, "script: {}", self.script)?;
        for s in &self.log {
            writeln!(f, "  {s}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("horizon {0} exceeds the limit of {MAX_HORIZON} firings")]
    HorizonTooLarge(usize),
    #[error("counterexample found:\n{0}")]
    Counterexample(Box<Counterexample>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyReport {
    pub horizon: usize,
    /// Complete outcome sequences checked.
    pub paths: u64,
    /// Joint states visited (tree nodes, root included).
    pub states: u64,
}

#[derive(Clone)]
struct Joint<R> {
    tx: TxNodeState,
    rx: R,
    next_asn: Asn,
    next_id: u32,
    latest_request: Option<u32>,
    abort_in_effect: bool,
    awaiting_end: bool,
}

impl<R: Receiver> Joint<R> {
    fn snapshot(&self, firing: usize, asn: Asn, outcome: Outcome) -> StepSnapshot {
        StepSnapshot {
            firing,
            asn,
            outcome,
            tx_current: (
                self.tx.current().slot_offset,
                self.tx.current().binding_id(),
            ),
            tx_pending: self.tx.pending().map(HoppingFunction::id),
            rx_current: (
                self.rx.current().slot_offset,
                self.rx.current().binding_id(),
            ),
            rx_backup: (self.rx.backup().slot_offset, self.rx.backup().binding_id()),
        }
    }

    fn same_current(&self) -> bool {
        let (t, r) = (self.tx.current(), self.rx.current());
        t.slot_offset == r.slot_offset && t.binding_id() == r.binding_id()
    }

    fn apply_script(&mut self, script: &ExchangeScript, firing: usize) {
        for event in script.events_at(firing) {
            match event {
                ScriptEvent::Request => {
                    let nu = scripted_function(self.next_id);
                    self.next_id += 1;
                    if let Ok(
                        RequestOutcome::Started { id } | RequestOutcome::Replaced { id, .. },
                    ) = self.tx.request_update(nu)
                    {
                        self.latest_request = Some(id);
                        self.abort_in_effect = false;
                    }
                }
                ScriptEvent::Abort => {
                    if self.tx.abort().is_some() {
                        self.abort_in_effect = true;
                    }
                }
            }
        }
    }

    /// Advances one firing with `outcome`; returns the asn used.
    fn step(
        &mut self,
        setup: &VerifySetup,
        script: &ExchangeScript,
        firing: usize,
        outcome: Outcome,
    ) -> Result<Asn, PropertyViolation> {
        self.apply_script(script, firing);
        let cfg = &setup.slotframe;
        let at =
            hopping::next_occurrence(self.next_asn, self.tx.current().slot_offset, cfg.n_slots());
        self.next_asn = Asn(at.0 + 1);
        let head = Frame::data(firing as u64, 30, Asn(0));
        let TxAction::Transmit {
            slot_offset,
            channel,
            frame,
        } = self.tx.slot_action(at, Some(&head), cfg)
        else {
            unreachable!("saturated sender always transmits at its own cell");
        };
        let listening = self.rx.listening_set(at, cfg);
        let Some(target) = listening
            .iter()
            .find(|l| l.slot_offset == slot_offset && l.channel == channel)
        else {
            return Err(PropertyViolation::ChannelDisagreement {
                slot_offset,
                channel,
                listening: listening
                    .iter()
                    .map(|l| (l.slot_offset, l.channel))
                    .collect(),
            });
        };

        let was_awaiting = self.awaiting_end;
        if outcome.frame_arrived() {
            self.rx
                .on_frame(&frame, target.role)
                .map_err(PropertyViolation::ReceiverRejected)?;
            if was_awaiting {
                if !self.same_current() {
                    return Err(PropertyViolation::ExchangeNotCompleted);
                }
                self.awaiting_end = false;
            }
        }
        if outcome.acked() {
            if let TxAckEvent::Swapped { .. } = self.tx.on_ack(&frame) {
                self.awaiting_end = true;
            }
        }
        let tx_steady = self.tx.pending().is_none();
        if tx_steady && self.rx.is_steady() && !self.same_current() {
            return Err(PropertyViolation::SplitBrain);
        }
        Ok(at)
    }

    fn check_progress(
        &self,
        script: &ExchangeScript,
        outcomes: &[Outcome],
    ) -> Result<(), PropertyViolation> {
        let h = outcomes.len();
        if h < 2 || self.abort_in_effect {
            return Ok(());
        }
        let tail_delivered = outcomes[h - 2..].iter().all(|o| *o == Outcome::Delivered);
        if !tail_delivered || script.has_event_at(h - 1) || script.has_event_at(h - 2) {
            return Ok(());
        }
        let on_latest = match self.latest_request {
            Some(id) => self.tx.current().binding_id() == Some(id),
            None => true,
        };
        if self.tx.pending().is_none() && self.rx.is_steady() && self.same_current() && on_latest {
            Ok(())
        } else {
            Err(PropertyViolation::NoProgress)
        }
    }
}

struct Search<'a, R> {
    setup: &'a VerifySetup,
    script: &'a ExchangeScript,
    horizon: usize,
    paths: u64,
    states: u64,
    best: Option<(Vec<Outcome>, PropertyViolation)>,
    initial: Joint<R>,
}

impl<R: Receiver> Search<'_, R> {
    fn explore(&mut self, state: &Joint<R>, prefix: &mut Vec<Outcome>) {
        self.states += 1;
        let depth = prefix.len();
        if let Some((best, _)) = &self.best {
            if depth >= best.len() {
                return;
            }
        }
        if depth == self.horizon {
            match state.check_progress(self.script, prefix) {
                Ok(()) => self.paths += 1,
                Err(v) => self.best = Some((prefix.clone(), v)),
            }
            return;
        }
        for outcome in Outcome::ALL {
            let mut next = state.clone();
            prefix.push(outcome);
            match next.step(self.setup, self.script, depth, outcome) {
                Ok(_) => self.explore(&next, prefix),
                Err(v) => {
                    let shorter = self
                        .best
                        .as_ref()
                        .is_none_or(|(b, _)| prefix.len() < b.len());
                    if shorter {
                        self.best = Some((prefix.clone(), v));
                    }
                }
            }
            prefix.pop();
        }
    }

    fn replay(&self, outcomes: &[Outcome]) -> Vec<StepSnapshot> {
        let mut state = self.initial.clone();
        let mut log = Vec::with_capacity(outcomes.len());
        for (k, &o) in outcomes.iter().enumerate() {
            let before = state.clone();
            match state.step(self.setup, self.script, k, o) {
                Ok(at) => log.push(state.snapshot(k, at, o)),
                Err(_) => {
                    let at = hopping::next_occurrence(
                        before.next_asn,
                        state.tx.current().slot_offset,
                        self.setup.slotframe.n_slots(),
                    );
                    log.push(state.snapshot(k, at, o));
                    break;
                }
            }
        }
        log
    }
}

/// Exhaustively checks the real protocol with the default link layout.
pub fn verify(horizon: usize, script: &ExchangeScript) -> Result<VerifyReport, VerifyError> {
    let setup = VerifySetup::default();
    let rx = RxNodeState::new(
        setup.cell_i,
        setup.cell_j,
        setup.channel_offset,
        scripted_function(0),
    )
    .expect("default cells differ");
    verify_with(&setup, horizon, script, rx)
}

/// Exhaustively checks an arbitrary receiver implementation.
pub fn verify_with<R: Receiver>(
    setup: &VerifySetup,
    horizon: usize,
    script: &ExchangeScript,
    receiver: R,
) -> Result<VerifyReport, VerifyError> {
    if horizon > MAX_HORIZON {
        return Err(VerifyError::HorizonTooLarge(horizon));
    }
    let tx = TxNodeState::new(
        setup.cell_i,
        setup.cell_j,
        setup.channel_offset,
        scripted_function(0),
    )
    .expect("verify setup cells differ");
    let initial = Joint {
        tx,
        rx: receiver,
        next_asn: Asn(0),
        next_id: 1,
        latest_request: None,
        abort_in_effect: false,
        awaiting_end: false,
    };
    let mut search = Search {
        setup,
        script,
        horizon,
        paths: 0,
        states: 0,
        best: None,
        initial: initial.clone(),
    };
    search.explore(&initial, &mut Vec::with_capacity(horizon));
    match search.best.take() {
        None => Ok(VerifyReport {
            horizon,
            paths: search.paths,
            states: search.states,
        }),
        Some((outcomes, violation)) => {
            let log = search.replay(&outcomes);
            Err(VerifyError::Counterexample(Box::new(Counterexample {
                script: script.clone(),
                outcomes,
                violation,
                log,
            })))
        }
    }
}

/// Replays one outcome sequence against the real protocol and returns the
/// per-firing state log, stopping at the first violation.
pub fn replay(
    script: &ExchangeScript,
    outcomes: &[Outcome],
) -> (Vec<StepSnapshot>, Option<PropertyViolation>) {
    let setup = VerifySetup::default();
    let f0 = scripted_function(0);
    let mut state = Joint {
        tx: TxNodeState::new(setup.cell_i, setup.cell_j, 0, f0.clone()).expect("distinct"),
        rx: RxNodeState::new(setup.cell_i, setup.cell_j, 0, f0).expect("distinct"),
        next_asn: Asn(0),
        next_id: 1,
        latest_request: None,
        abort_in_effect: false,
        awaiting_end: false,
    };
    let mut log = Vec::new();
    for (k, &o) in outcomes.iter().enumerate() {
        match state.step(&setup, script, k, o) {
            Ok(at) => log.push(state.snapshot(k, at, o)),
            Err(v) => return (log, Some(v)),
        }
    }
    let verdict = state.check_progress(script, outcomes).err();
    (log, verdict)
}

#[derive(Debug, Error)]
pub enum SoakError {
    #[error(transparent)]
    Sim(SimError),
    #[error("soak with seed {seed} hit a violation:\n{detail}")]
    Violation { seed: u64, detail: String },
}

#[derive(Debug, Clone)]
pub struct SoakReport {
    pub seed: u64,
    pub exchanges_requested: u64,
    pub exchanges_completed: u64,
    pub report: SimReport,
}

/// Runs the simulator long enough for `n_exchanges` update requests with every
/// runtime assertion armed.
pub fn random_soak(
    base: &ScenarioConfig,
    n_exchanges: u64,
    seed: u64,
) -> Result<SoakReport, SoakError> {
    let cfg = ScenarioConfig {
        seed,
        duration_s: (n_exchanges as f64 + 1.0) * base.t_update_min * 60.0,
        ..base.clone()
    };
    match simulator::run(&cfg) {
        Ok(report) => Ok(SoakReport {
            seed,
            exchanges_requested: report.counters.exchanges_requested,
            exchanges_completed: report.counters.exchanges_completed,
            report,
        }),
        Err(SimError::Violation(v)) => Err(SoakError::Violation {
            seed,
            detail: v.to_string(),
        }),
        Err(e) => Err(SoakError::Sim(e)),
    }
}
