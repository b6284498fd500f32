//! Sender and receiver state machines of the consistent hopping-function
//! exchange.
//!
//! Each end point of a link owns two cells at distinct slot offsets: the
//! current cell and a backup cell that is only bound while an exchange is in
//! flight. The sender piggybacks the new hopping function on ordinary data
//! frames and switches to it (swapping cell roles) only after one of those
//! frames is acknowledged. The receiver listens on both cells, old function
//! on the current cell and new function on the backup cell, until a frame
//! arrives on the backup cell, which proves the sender has switched.
//!
//! Transitions are plain methods on owned state, so cloning a state and
//! driving both copies with the same events yields identical traces.

use std::collections::HashMap;

use arrayvec::ArrayVec;
use thiserror::Error;

use crate::hopping::{hop_channel, Asn, Cell, HoppingFunction, SlotframeConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FsmError {
    #[error("current and backup cells share slot offset {0}")]
    SameSlotOffset(u32),
    #[error("current cell must be bound to a hopping function")]
    UnboundCurrentCell,
    #[error("hopping function {0} is already in use")]
    AlreadyCurrent(u32),
    #[error("hopping function {0} is already being exchanged")]
    AlreadyPending(u32),
    #[error("frame received through inactive {0:?} cell")]
    InactiveCell(CellRole),
}

/// Exchanges the roles of two cells. Slot offsets and bindings travel with
/// their cells; callers rebind afterwards.
pub fn swap(a: Cell, b: Cell) -> Result<(Cell, Cell), FsmError> {
    if a.slot_offset == b.slot_offset {
        return Err(FsmError::SameSlotOffset(a.slot_offset));
    }
    Ok((b, a))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellRole {
    Current,
    Backup,
}

/// An application data frame, optionally carrying a hopping-function IE.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub seq: u64,
    pub payload_len: u16,
    pub ie: Option<HoppingFunction>,
    pub generated_at: Asn,
}

impl Frame {
    pub fn data(seq: u64, payload_len: u16, generated_at: Asn) -> Self {
        Self {
            seq,
            payload_len,
            ie: None,
            generated_at,
        }
    }

    pub fn ie_id(&self) -> Option<u32> {
        self.ie.as_ref().map(HoppingFunction::id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxMode {
    Steady,
    ExchangePending,
}

/// What the sender does in one slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TxAction {
    Transmit {
        slot_offset: u32,
        channel: u8,
        frame: Frame,
    },
    Sleep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestOutcome {
    Started {
        id: u32,
    },
    /// A pending exchange was replaced on the fly.
    Replaced {
        previous: u32,
        id: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxAckEvent {
    /// Ordinary delivery confirmation; no state change.
    Delivered,
    /// The IE frame was acknowledged and the sender now uses the new function.
    Swapped { id: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxNodeState {
    c_curr: Cell,
    c_back: Cell,
    pending: Option<HoppingFunction>,
}

impl TxNodeState {
    /// Steady sender with `initial` bound to the cell at `curr_offset`.
    pub fn new(
        curr_offset: u32,
        back_offset: u32,
        channel_offset: u16,
        initial: HoppingFunction,
    ) -> Result<Self, FsmError> {
        if curr_offset == back_offset {
            return Err(FsmError::SameSlotOffset(curr_offset));
        }
        Ok(Self {
            c_curr: Cell::new(curr_offset, channel_offset, Some(initial)),
            c_back: Cell::inactive(back_offset, channel_offset),
            pending: None,
        })
    }

    pub fn mode(&self) -> TxMode {
        if self.pending.is_some() {
            TxMode::ExchangePending
        } else {
            TxMode::Steady
        }
    }

    pub fn current(&self) -> &Cell {
        &self.c_curr
    }

    pub fn backup(&self) -> &Cell {
        &self.c_back
    }

    pub fn pending(&self) -> Option<&HoppingFunction> {
        self.pending.as_ref()
    }

    /// Starts an exchange, or replaces the function of the pending one.
    pub fn request_update(&mut self, nu_new: HoppingFunction) -> Result<RequestOutcome, FsmError> {
        if self.c_curr.binding_id() == Some(nu_new.id()) {
            return Err(FsmError::AlreadyCurrent(nu_new.id()));
        }
        let id = nu_new.id();
        match self.pending.replace(nu_new) {
            None => Ok(RequestOutcome::Started { id }),
            Some(previous) if previous.id() == id => {
                self.pending = Some(previous);
                Err(FsmError::AlreadyPending(id))
            }
            Some(previous) => Ok(RequestOutcome::Replaced {
                previous: previous.id(),
                id,
            }),
        }
    }

    /// The sender only ever transmits in its current cell; while an exchange
    /// is pending every frame carries the new function.
    pub fn slot_action(
        &self,
        x: Asn,
        queue_head: Option<&Frame>,
        cfg: &SlotframeConfig,
    ) -> TxAction {
        let (Some(head), Some(h)) = (queue_head, self.c_curr.binding.as_ref()) else {
            return TxAction::Sleep;
        };
        if !self.c_curr.scheduled_at(x, cfg) {
            return TxAction::Sleep;
        }
        let mut frame = head.clone();
        frame.ie = self.pending.clone();
        TxAction::Transmit {
            slot_offset: self.c_curr.slot_offset,
            channel: hop_channel(x, self.c_curr.channel_offset, h),
            frame,
        }
    }

    /// ACK received in the current cell for `acked`.
    pub fn on_ack(&mut self, acked: &Frame) -> TxAckEvent {
        let matches_pending = match (&acked.ie, &self.pending) {
            (Some(ie), Some(p)) => ie.id() == p.id(),
            _ => false,
        };
        if !matches_pending {
            return TxAckEvent::Delivered;
        }
        let nu = self.pending.take().expect("pending checked above");
        let id = nu.id();
        std::mem::swap(&mut self.c_curr, &mut self.c_back);
        self.c_curr.binding = Some(nu);
        self.c_back.binding = None;
        TxAckEvent::Swapped { id }
    }

    /// Abandons the pending exchange, returning its id. No-op when steady.
    pub fn abort(&mut self) -> Option<u32> {
        self.pending.take().map(|h| h.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RxMode {
    Steady,
    DoubleListening,
}

/// One cell the receiver has its radio on for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Listen {
    pub role: CellRole,
    pub slot_offset: u32,
    pub channel: u8,
}

pub type ListeningSet = ArrayVec<Listen, 2>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RxEvent {
    /// Plain data; state unchanged.
    Data,
    /// First reception of a new function; backup cell activated.
    EnteredDoubleListening { id: u32 },
    /// Same function received again (the sender missed our ACK).
    Retransmission { id: u32 },
    /// The function being exchanged was replaced on the fly.
    Replaced { previous: u32, id: u32 },
    /// Frame on the backup cell: sender has switched, exchange finished.
    Completed { id: u32 },
    /// Frame on the backup cell carrying yet another function: the previous
    /// exchange finishes and a new one begins in the same slot.
    CompletedAndStarted { completed: u32, started: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RxNodeState {
    c_curr: Cell,
    c_back: Cell,
}

impl RxNodeState {
    pub fn new(
        curr_offset: u32,
        back_offset: u32,
        channel_offset: u16,
        initial: HoppingFunction,
    ) -> Result<Self, FsmError> {
        if curr_offset == back_offset {
            return Err(FsmError::SameSlotOffset(curr_offset));
        }
        Ok(Self {
            c_curr: Cell::new(curr_offset, channel_offset, Some(initial)),
            c_back: Cell::inactive(back_offset, channel_offset),
        })
    }

    pub fn mode(&self) -> RxMode {
        if self.c_back.is_active() {
            RxMode::DoubleListening
        } else {
            RxMode::Steady
        }
    }

    pub fn current(&self) -> &Cell {
        &self.c_curr
    }

    pub fn backup(&self) -> &Cell {
        &self.c_back
    }

    pub fn cell(&self, role: CellRole) -> &Cell {
        match role {
            CellRole::Current => &self.c_curr,
            CellRole::Backup => &self.c_back,
        }
    }

    /// Cells (and channels) the radio listens on at `x`; empty means sleep.
    pub fn listening_set(&self, x: Asn, cfg: &SlotframeConfig) -> ListeningSet {
        let mut set = ListeningSet::new();
        for (role, cell) in [
            (CellRole::Current, &self.c_curr),
            (CellRole::Backup, &self.c_back),
        ] {
            if cell.fires(x, cfg) {
                if let Some(channel) = cell.channel_at(x) {
                    set.push(Listen {
                        role,
                        slot_offset: cell.slot_offset,
                        channel,
                    });
                }
            }
        }
        set
    }

    pub fn on_frame(&mut self, frame: &Frame, via: CellRole) -> Result<RxEvent, FsmError> {
        if !self.cell(via).is_active() {
            return Err(FsmError::InactiveCell(via));
        }
        let event = match (self.mode(), via, &frame.ie) {
            (_, CellRole::Current, None) => RxEvent::Data,
            (RxMode::Steady, CellRole::Current, Some(nu)) => {
                if self.c_curr.binding_id() == Some(nu.id()) {
                    return Ok(RxEvent::Data);
                }
                self.c_back.binding = Some(nu.clone());
                RxEvent::EnteredDoubleListening { id: nu.id() }
            }
            (RxMode::DoubleListening, CellRole::Current, Some(nu)) => {
                let previous = self.c_back.binding_id().expect("double listening");
                if previous == nu.id() {
                    RxEvent::Retransmission { id: previous }
                } else {
                    self.c_back.binding = Some(nu.clone());
                    RxEvent::Replaced {
                        previous,
                        id: nu.id(),
                    }
                }
            }
            (_, CellRole::Backup, ie) => {
                let completed = self.c_back.binding_id().expect("backup checked active");
                std::mem::swap(&mut self.c_curr, &mut self.c_back);
                match ie {
                    Some(nu) if nu.id() != completed => {
                        self.c_back.binding = Some(nu.clone());
                        RxEvent::CompletedAndStarted {
                            completed,
                            started: nu.id(),
                        }
                    }
                    _ => {
                        self.c_back.binding = None;
                        RxEvent::Completed { id: completed }
                    }
                }
            }
        };
        Ok(event)
    }
}

/// Timestamps of one exchange, all at ASN resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExchangeRecord {
    pub id: u32,
    /// Update request at the sender.
    pub t_ur: Asn,
    /// Receiver first holds the new function (enters double listening).
    pub t_dl: Option<Asn>,
    /// Sender swaps to the new function.
    pub t_sw: Option<Asn>,
    /// Receiver leaves double listening on the new function.
    pub t_e: Option<Asn>,
    pub aborted: bool,
}

impl ExchangeRecord {
    pub fn new(id: u32, t_ur: Asn) -> Self {
        Self {
            id,
            t_ur,
            t_dl: None,
            t_sw: None,
            t_e: None,
            aborted: false,
        }
    }

    pub fn is_complete(&self) -> bool {
        !self.aborted && self.t_e.is_some()
    }

    /// Swap latency in slots.
    pub fn d_sw(&self) -> Option<u64> {
        self.t_sw.map(|t| t.since(self.t_ur))
    }

    /// Double-listening latency in slots.
    pub fn d_dl(&self) -> Option<u64> {
        Some(self.t_e?.since(self.t_dl?))
    }

    /// Total exchange latency in slots.
    pub fn d_tot(&self) -> Option<u64> {
        self.t_e.map(|t| t.since(self.t_ur))
    }

    /// Ordering invariants for a finished exchange.
    pub fn is_well_ordered(&self) -> bool {
        match (self.t_dl, self.t_sw, self.t_e) {
            (Some(dl), Some(sw), Some(e)) => {
                self.t_ur <= dl && dl <= e && self.t_ur <= sw && sw <= e
            }
            _ => false,
        }
    }
}

/// Joins sender and receiver events into per-exchange timestamp records.
#[derive(Debug, Default, Clone)]
pub struct ExchangeLog {
    open: HashMap<u32, ExchangeRecord>,
    aborted: u64,
}

impl ExchangeLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on_request(&mut self, outcome: RequestOutcome, now: Asn) {
        match outcome {
            RequestOutcome::Started { id } => {
                self.open.insert(id, ExchangeRecord::new(id, now));
            }
            RequestOutcome::Replaced { previous, id } => {
                self.supersede(previous);
                self.open.insert(id, ExchangeRecord::new(id, now));
            }
        }
    }

    pub fn on_abort(&mut self, id: u32) {
        self.supersede(id);
    }

    pub fn on_ack(&mut self, event: TxAckEvent, now: Asn) {
        if let TxAckEvent::Swapped { id } = event {
            if let Some(r) = self.open.get_mut(&id) {
                r.t_sw = Some(now);
            }
        }
    }

    /// Applies a receiver event, returning the exchange it completed, if any.
    pub fn on_rx(&mut self, event: RxEvent, now: Asn) -> Option<ExchangeRecord> {
        match event {
            RxEvent::Data | RxEvent::Retransmission { .. } => None,
            RxEvent::EnteredDoubleListening { id } => {
                self.mark_double_listening(id, now);
                None
            }
            RxEvent::Replaced { previous, id } => {
                self.supersede(previous);
                self.mark_double_listening(id, now);
                None
            }
            RxEvent::Completed { id } => self.finish(id, now),
            RxEvent::CompletedAndStarted { completed, started } => {
                let done = self.finish(completed, now);
                self.mark_double_listening(started, now);
                done
            }
        }
    }

    /// Exchanges still in flight.
    pub fn open_count(&self) -> usize {
        self.open.len()
    }

    pub fn aborted_count(&self) -> u64 {
        self.aborted
    }

    fn mark_double_listening(&mut self, id: u32, now: Asn) {
        if let Some(r) = self.open.get_mut(&id) {
            if r.t_dl.is_none() {
                r.t_dl = Some(now);
            }
        }
    }

    fn supersede(&mut self, id: u32) {
        if self.open.remove(&id).is_some() {
            self.aborted += 1;
        }
    }

    fn finish(&mut self, id: u32, now: Asn) -> Option<ExchangeRecord> {
        let mut r = self.open.remove(&id)?;
        r.t_e = Some(now);
        Some(r)
    }
}
