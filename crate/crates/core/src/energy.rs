//! Per-event radio energy costs and per-node energy ledgers.
//!
//! All energies are in µJ, power in µW (µJ/s).

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyParams {
    pub e_tx0: f64,
    pub e_tx_per_byte: f64,
    pub e_rx0: f64,
    pub e_rx_per_byte: f64,
    /// Sending a 33-byte ACK.
    pub e_tx_ack: f64,
    /// Receiving a 33-byte ACK.
    pub e_rx_ack: f64,
    /// Radio on with nothing arriving.
    pub e_listen: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            e_tx0: 7.0,
            e_tx_per_byte: 2.0,
            e_rx0: 65.0,
            e_rx_per_byte: 1.3,
            e_tx_ack: 106.0,
            e_rx_ack: 79.0,
            e_listen: 138.0,
        }
    }
}

impl EnergyParams {
    pub fn is_valid(&self) -> bool {
        [
            self.e_tx0,
            self.e_tx_per_byte,
            self.e_rx0,
            self.e_rx_per_byte,
            self.e_tx_ack,
            self.e_rx_ack,
            self.e_listen,
        ]
        .iter()
        .all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// Energy to transmit a data frame of `l_tot` bytes.
pub fn data_tx_energy(l_tot: u32, p: &EnergyParams) -> f64 {
    debug_assert!(l_tot > 0);
    p.e_tx0 + p.e_tx_per_byte * f64::from(l_tot)
}

/// Energy to receive a data frame of `l_tot` bytes.
pub fn data_rx_energy(l_tot: u32, p: &EnergyParams) -> f64 {
    debug_assert!(l_tot > 0);
    p.e_rx0 + p.e_rx_per_byte * f64::from(l_tot)
}

/// Frame size components in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameSizeModel {
    /// PHY + MAC headers.
    pub l_header: u32,
    pub l_payload: u32,
    pub l_ie_h: u32,
    pub l_ie_p: u32,
}

impl Default for FrameSizeModel {
    fn default() -> Self {
        Self {
            l_header: 29,
            l_payload: 30,
            l_ie_h: 2,
            l_ie_p: 16,
        }
    }
}

impl FrameSizeModel {
    pub fn l_ie(&self) -> u32 {
        self.l_ie_h + self.l_ie_p
    }

    pub fn l_tot(&self, with_ie: bool) -> u32 {
        let base = self.l_header + self.l_payload;
        if with_ie {
            base + self.l_ie()
        } else {
            base
        }
    }
}

/// One radio event in a slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlotEvent {
    /// Sender transmitted `l_tot` bytes and then waited for an ACK.
    TxAttempt { l_tot: u32, ack_received: bool },
    /// Receiver had its radio on for one cell; `frame` is the received size.
    RxListen { frame: Option<u32> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Sender,
    Receiver,
}

/// Accumulated energy of one node, by category.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyLedger {
    pub data_tx: f64,
    pub data_rx: f64,
    pub ack_tx: f64,
    pub ack_rx: f64,
    pub idle_listen: f64,
    /// Simulated time covered by this ledger, seconds.
    pub elapsed_s: f64,
}

impl EnergyLedger {
    pub fn total(&self) -> f64 {
        self.data_tx + self.data_rx + self.ack_tx + self.ack_rx + self.idle_listen
    }

    /// Average power over the covered time in µW; zero for an empty ledger.
    pub fn average_power(&self) -> f64 {
        if self.elapsed_s > 0.0 {
            self.total() / self.elapsed_s
        } else {
            0.0
        }
    }

    pub fn charge(&mut self, event: SlotEvent, p: &EnergyParams) {
        match event {
            SlotEvent::TxAttempt {
                l_tot,
                ack_received,
            } => {
                self.data_tx += data_tx_energy(l_tot, p);
                if ack_received {
                    self.ack_rx += p.e_rx_ack;
                } else {
                    self.idle_listen += p.e_listen;
                }
            }
            SlotEvent::RxListen { frame: Some(l_tot) } => {
                self.data_rx += data_rx_energy(l_tot, p);
                self.ack_tx += p.e_tx_ack;
            }
            SlotEvent::RxListen { frame: None } => self.idle_listen += p.e_listen,
        }
    }

    /// Charges `count` idle listens at once.
    pub fn charge_idle(&mut self, count: u64, p: &EnergyParams) {
        self.idle_listen += count as f64 * p.e_listen;
    }

    /// Combines two ledgers covering disjoint time segments.
    pub fn combine(&self, other: &EnergyLedger) -> EnergyLedger {
        EnergyLedger {
            data_tx: self.data_tx + other.data_tx,
            data_rx: self.data_rx + other.data_rx,
            ack_tx: self.ack_tx + other.ack_tx,
            ack_rx: self.ack_rx + other.ack_rx,
            idle_listen: self.idle_listen + other.idle_listen,
            elapsed_s: self.elapsed_s + other.elapsed_s,
        }
    }
}

/// Free-function form of [`EnergyLedger::charge`]; `role` must match the event.
pub fn charge_slot_events(
    ledger: &mut EnergyLedger,
    role: Role,
    event: SlotEvent,
    p: &EnergyParams,
) {
    debug_assert!(matches!(
        (role, event),
        (Role::Sender, SlotEvent::TxAttempt { .. }) | (Role::Receiver, SlotEvent::RxListen { .. })
    ));
    ledger.charge(event, p);
}

/// Average power of the link split the way result tables report it, µW.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PowerRow {
    /// Everything the sender spends.
    pub tx_tot: f64,
    /// Receiver: data reception plus ACK transmission.
    pub rx: f64,
    /// Receiver: idle listening.
    pub listen: f64,
}

impl PowerRow {
    pub fn from_ledgers(tx: &EnergyLedger, rx: &EnergyLedger, elapsed_s: f64) -> Self {
        if elapsed_s <= 0.0 {
            return Self::default();
        }
        Self {
            tx_tot: tx.total() / elapsed_s,
            rx: (rx.data_rx + rx.ack_tx + rx.data_tx + rx.ack_rx) / elapsed_s,
            listen: rx.idle_listen / elapsed_s,
        }
    }

    pub fn rx_tot(&self) -> f64 {
        self.rx + self.listen
    }

    pub fn tot(&self) -> f64 {
        self.tx_tot + self.rx_tot()
    }

    /// Rounds the three measured columns to nW; totals are derived from the
    /// rounded values so the emitted row adds up exactly.
    pub fn quantized(&self) -> QuantizedPower {
        let nw = |uw: f64| (uw * 1000.0).round().max(0.0) as u64;
        QuantizedPower {
            tx_tot: nw(self.tx_tot),
            rx: nw(self.rx),
            listen: nw(self.listen),
        }
    }
}

/// A power row at nW resolution (three decimals of µW).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QuantizedPower {
    pub tx_tot: u64,
    pub rx: u64,
    pub listen: u64,
}

impl QuantizedPower {
    pub fn rx_tot(&self) -> u64 {
        self.rx + self.listen
    }

    pub fn tot(&self) -> u64 {
        self.tx_tot + self.rx_tot()
    }
}

/// Formats a nW count as µW with three decimals.
pub struct MicroWatts(pub u64);

impl fmt::Display for MicroWatts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:03}", self.0 / 1000, self.0 % 1000)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn frame_energies() {
        let p = EnergyParams::default();
        let sizes = FrameSizeModel::default();
        assert_eq!(sizes.l_tot(false), 59);
        assert_eq!(sizes.l_tot(true), 77);
        assert!(close(data_tx_energy(59, &p), 125.0));
        assert!(close(data_tx_energy(77, &p), 161.0));
        assert!(close(data_tx_energy(1, &p), 9.0));
        assert!(close(data_rx_energy(59, &p), 141.7));
        assert!(close(data_rx_energy(77, &p), 165.1));
        assert!(close(data_rx_energy(1, &p), 66.3));
    }

    #[test]
    fn slot_event_charges() {
        let p = EnergyParams::default();
        let mut rx = EnergyLedger::default();
        charge_slot_events(
            &mut rx,
            Role::Receiver,
            SlotEvent::RxListen { frame: None },
            &p,
        );
        assert!(close(rx.idle_listen, 138.0));
        charge_slot_events(
            &mut rx,
            Role::Receiver,
            SlotEvent::RxListen { frame: Some(59) },
            &p,
        );
        assert!(close(rx.data_rx, 141.7));
        assert!(close(rx.ack_tx, 106.0));

        let mut tx = EnergyLedger::default();
        let ok = SlotEvent::TxAttempt {
            l_tot: 59,
            ack_received: true,
        };
        charge_slot_events(&mut tx, Role::Sender, ok, &p);
        assert!(close(tx.data_tx, 125.0));
        assert!(close(tx.ack_rx, 79.0));
        assert!(close(tx.total(), 204.0));
        tx.charge(
            SlotEvent::TxAttempt {
                l_tot: 59,
                ack_received: false,
            },
            &p,
        );
        assert!(close(tx.idle_listen, 138.0));
        assert!(close(
            tx.total(),
            tx.data_tx + tx.data_rx + tx.ack_tx + tx.ack_rx + tx.idle_listen
        ));
    }

    #[test]
    fn power_is_invariant_under_segmentation() {
        let p = EnergyParams::default();
        let mut a = EnergyLedger {
            elapsed_s: 10.0,
            ..Default::default()
        };
        let mut b = EnergyLedger {
            elapsed_s: 30.0,
            ..Default::default()
        };
        let mut whole = EnergyLedger {
            elapsed_s: 40.0,
            ..Default::default()
        };
        for (k, ev) in [
            SlotEvent::RxListen { frame: None },
            SlotEvent::RxListen { frame: Some(77) },
            SlotEvent::TxAttempt {
                l_tot: 59,
                ack_received: false,
            },
        ]
        .into_iter()
        .enumerate()
        {
            if k % 2 == 0 {
                a.charge(ev, &p)
            } else {
                b.charge(ev, &p)
            }
            whole.charge(ev, &p);
        }
        let joined = a.combine(&b);
        assert!(close(joined.average_power(), whole.average_power()));
        assert_eq!(EnergyLedger::default().average_power(), 0.0);
    }

    #[test]
    fn quantized_rows_add_up() {
        let row = PowerRow {
            tx_tot: 8.6224,
            rx: 9.8234,
            listen: 62.5964,
        };
        let q = row.quantized();
        assert_eq!((q.tx_tot, q.rx, q.listen), (8622, 9823, 62596));
        assert_eq!(q.rx_tot(), 72419);
        assert_eq!(q.tot(), 81041);
        assert_eq!(MicroWatts(q.tot()).to_string(), "81.041");
        assert_eq!(MicroWatts(5).to_string(), "0.005");
    }

    fn event() -> impl proptest::strategy::Strategy<Value = SlotEvent> {
        use proptest::prelude::*;
        prop_oneof![
            (1u32..128, any::<bool>()).prop_map(|(l_tot, ack_received)| SlotEvent::TxAttempt {
                l_tot,
                ack_received
            }),
            proptest::option::of(1u32..128).prop_map(|frame| SlotEvent::RxListen { frame }),
        ]
    }

    proptest::proptest! {
        #[test]
        fn ledger_total_is_sum_of_categories(events in proptest::collection::vec(event(), 0..200)) {
            let p = EnergyParams::default();
            let mut l = EnergyLedger::default();
            for e in &events {
                l.charge(*e, &p);
            }
            let sum = l.data_tx + l.data_rx + l.ack_tx + l.ack_rx + l.idle_listen;
            proptest::prop_assert_eq!(l.total(), sum);
        }

        #[test]
        fn power_survives_any_split(
            events in proptest::collection::vec(event(), 1..200),
            cut in 0usize..200,
            t1 in 1.0f64..1e6,
            t2 in 1.0f64..1e6,
        ) {
            let p = EnergyParams::default();
            let cut = cut.min(events.len());
            let mut a = EnergyLedger { elapsed_s: t1, ..Default::default() };
            let mut b = EnergyLedger { elapsed_s: t2, ..Default::default() };
            let mut whole = EnergyLedger { elapsed_s: t1 + t2, ..Default::default() };
            for (k, e) in events.iter().enumerate() {
                if k < cut { a.charge(*e, &p) } else { b.charge(*e, &p) }
                whole.charge(*e, &p);
            }
            let joined = a.combine(&b).average_power();
            proptest::prop_assert!((joined - whole.average_power()).abs() <= 1e-9 * whole.average_power().max(1.0));
        }
    }
}
