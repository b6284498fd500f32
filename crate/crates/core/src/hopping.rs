//! TSCH time and cell model plus the per-link channel-hopping computation.
//!
//! A link hops over a (possibly white-listed) subset of the sixteen 2.4 GHz
//! IEEE 802.15.4 channels. The channel used at absolute slot number `x` by a
//! cell with channel offset `c` is `sequence[(x + c) mod len]`.

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lowest 2.4 GHz O-QPSK channel number.
pub const MIN_CHANNEL: u8 = 11;
/// Highest 2.4 GHz O-QPSK channel number.
pub const MAX_CHANNEL: u8 = 26;
/// Number of channels in the 2.4 GHz band.
pub const BAND_CHANNELS: usize = (MAX_CHANNEL - MIN_CHANNEL + 1) as usize;

/// Absolute Slot Number: slots elapsed since the network epoch.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
pub struct Asn(pub u64);

impl Asn {
    pub fn value(self) -> u64 {
        self.0
    }

    /// Slots elapsed from `earlier` to `self`, saturating at zero.
    pub fn since(self, earlier: Asn) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl fmt::Display for Asn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SlotframeError {
    #[error("slotframe needs at least 2 slots, got {0}")]
    TooFewSlots(u32),
    #[error("slot duration must be positive")]
    ZeroSlotDuration,
}

/// Slotframe length and slot duration shared by both end points of the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotframeConfig {
    n_slots: u32,
    slot_duration: Duration,
}

impl SlotframeConfig {
    pub fn new(n_slots: u32, slot_duration: Duration) -> Result<Self, SlotframeError> {
        if n_slots < 2 {
            return Err(SlotframeError::TooFewSlots(n_slots));
        }
        if slot_duration.is_zero() {
            return Err(SlotframeError::ZeroSlotDuration);
        }
        Ok(Self {
            n_slots,
            slot_duration,
        })
    }

    pub fn n_slots(&self) -> u32 {
        self.n_slots
    }

    pub fn slot_duration(&self) -> Duration {
        self.slot_duration
    }

    pub fn slot_seconds(&self) -> f64 {
        self.slot_duration.as_secs_f64()
    }

    /// Duration of one slotframe cycle in seconds.
    pub fn cycle_seconds(&self) -> f64 {
        self.slot_seconds() * f64::from(self.n_slots)
    }

    pub fn slots_to_seconds(&self, slots: u64) -> f64 {
        slots as f64 * self.slot_seconds()
    }
}

impl Default for SlotframeConfig {
    fn default() -> Self {
        Self {
            n_slots: 101,
            slot_duration: Duration::from_millis(20),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HoppingError {
    #[error("empty hopping sequence")]
    Empty,
    #[error("duplicate channel {0} in hopping sequence")]
    DuplicateChannel(u8),
    #[error("channel {0} outside {MIN_CHANNEL}..={MAX_CHANNEL}")]
    ChannelOutOfRange(u8),
    #[error("hopping sequence has {0} entries, at most {BAND_CHANNELS} allowed")]
    TooLong(usize),
}

/// A versioned hopping function: an ordered, duplicate-free list of physical
/// channels whose length is the effective modulus of the hopping computation.
///
/// The sequence is reference counted so binding the same function to several
/// cells and frames never copies it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HoppingFunction {
    id: u32,
    sequence: Arc<[u8]>,
}

impl HoppingFunction {
    pub fn new(id: u32, sequence: impl Into<Vec<u8>>) -> Result<Self, HoppingError> {
        let sequence: Vec<u8> = sequence.into();
        validate_sequence(&sequence)?;
        Ok(Self {
            id,
            sequence: sequence.into(),
        })
    }

    /// The full band in ascending order: `[11, 12, ..., 26]`.
    pub fn identity(id: u32) -> Self {
        Self::first_channels(id, BAND_CHANNELS)
    }

    /// The first `n` channels of the band in ascending order.
    ///
    /// `n` is clamped to `1..=16`.
    pub fn first_channels(id: u32, n: usize) -> Self {
        let n = n.clamp(1, BAND_CHANNELS) as u8;
        Self {
            id,
            sequence: (MIN_CHANNEL..MIN_CHANNEL + n).collect::<Vec<_>>().into(),
        }
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn sequence(&self) -> &[u8] {
        &self.sequence
    }

    /// Effective number of channels, the modulus of the hopping computation.
    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    /// Re-checks the structural invariants.
    pub fn validate(&self) -> Result<(), HoppingError> {
        validate_sequence(&self.sequence)
    }
}

/// Checks that a sequence is a nonempty permutation of a subset of the band.
pub fn validate_sequence(sequence: &[u8]) -> Result<(), HoppingError> {
    if sequence.is_empty() {
        return Err(HoppingError::Empty);
    }
    if sequence.len() > BAND_CHANNELS {
        return Err(HoppingError::TooLong(sequence.len()));
    }
    let mut seen = [false; BAND_CHANNELS];
    for &ch in sequence {
        if !(MIN_CHANNEL..=MAX_CHANNEL).contains(&ch) {
            return Err(HoppingError::ChannelOutOfRange(ch));
        }
        let slot = &mut seen[usize::from(ch - MIN_CHANNEL)];
        if *slot {
            return Err(HoppingError::DuplicateChannel(ch));
        }
        *slot = true;
    }
    Ok(())
}

/// Physical channel for ASN `x` and channel offset `c` under hopping function `h`.
pub fn hop_channel(x: Asn, channel_offset: u16, h: &HoppingFunction) -> u8 {
    let len = h.sequence.len() as u64;
    let index = (x.0 % len + u64::from(channel_offset) % len) % len;
    h.sequence[index as usize]
}

/// A scheduled (slot offset, channel offset) position, optionally bound to a
/// hopping function. Only bound cells are active.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub slot_offset: u32,
    pub channel_offset: u16,
    pub binding: Option<HoppingFunction>,
}

impl Cell {
    pub fn new(slot_offset: u32, channel_offset: u16, binding: Option<HoppingFunction>) -> Self {
        Self {
            slot_offset,
            channel_offset,
            binding,
        }
    }

    pub fn inactive(slot_offset: u32, channel_offset: u16) -> Self {
        Self::new(slot_offset, channel_offset, None)
    }

    pub fn is_active(&self) -> bool {
        self.binding.is_some()
    }

    /// Id of the bound hopping function, if any.
    pub fn binding_id(&self) -> Option<u32> {
        self.binding.as_ref().map(HoppingFunction::id)
    }

    /// True when `x` falls on this cell's slot offset, regardless of binding.
    pub fn scheduled_at(&self, x: Asn, cfg: &SlotframeConfig) -> bool {
        x.0 % u64::from(cfg.n_slots()) == u64::from(self.slot_offset)
    }

    /// True when the cell is active and scheduled at `x`.
    pub fn fires(&self, x: Asn, cfg: &SlotframeConfig) -> bool {
        self.is_active() && self.scheduled_at(x, cfg)
    }

    /// Physical channel at `x`, or `None` for an inactive cell.
    pub fn channel_at(&self, x: Asn) -> Option<u8> {
        self.binding
            .as_ref()
            .map(|h| hop_channel(x, self.channel_offset, h))
    }
}

/// Free-function form of [`Cell::fires`].
pub fn cell_fires(x: Asn, cell: &Cell, cfg: &SlotframeConfig) -> bool {
    cell.fires(x, cfg)
}

/// First ASN `>= from` whose slot offset equals `offset`.
pub fn next_occurrence(from: Asn, offset: u32, n_slots: u32) -> Asn {
    let n = u64::from(n_slots);
    let off = u64::from(offset);
    let base = from.0 - from.0 % n;
    let candidate = base + off;
    if candidate >= from.0 {
        Asn(candidate)
    } else {
        Asn(candidate + n)
    }
}

/// Number of ASNs in `[from, to)` whose slot offset equals `offset`.
pub fn occurrences_between(from: Asn, to: Asn, offset: u32, n_slots: u32) -> u64 {
    if to.0 <= from.0 {
        return 0;
    }
    // count of x in [0, bound) with x mod n == off
    let below = |bound: u64| -> u64 {
        let n = u64::from(n_slots);
        let off = u64::from(offset);
        if bound <= off {
            0
        } else {
            (bound - off - 1) / n + 1
        }
    };
    below(to.0) - below(from.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn full() -> HoppingFunction {
        HoppingFunction::identity(0)
    }

    #[test]
    fn hop_channel_examples() {
        assert_eq!(hop_channel(Asn(0), 0, &full()), 11);
        // (100 + 5) mod 16 = 9
        assert_eq!(hop_channel(Asn(100), 5, &full()), 20);
        let white = HoppingFunction::new(3, vec![15, 20, 25]).unwrap();
        assert_eq!(hop_channel(Asn(7), 0, &white), 20);
    }

    #[test]
    fn validation_rules() {
        assert_eq!(
            HoppingFunction::new(1, vec![11, 11]).unwrap_err(),
            HoppingError::DuplicateChannel(11)
        );
        assert_eq!(
            HoppingFunction::new(1, vec![]).unwrap_err(),
            HoppingError::Empty
        );
        assert_eq!(
            HoppingFunction::new(1, vec![10]).unwrap_err(),
            HoppingError::ChannelOutOfRange(10)
        );
        assert_eq!(
            HoppingFunction::new(1, vec![27]).unwrap_err(),
            HoppingError::ChannelOutOfRange(27)
        );
        assert!(HoppingFunction::new(1, (11..=26).collect::<Vec<u8>>()).is_ok());
        assert!(full().validate().is_ok());
    }

    #[test]
    fn slotframe_rejects_degenerate_shapes() {
        assert_eq!(
            SlotframeConfig::new(1, Duration::from_millis(20)).unwrap_err(),
            SlotframeError::TooFewSlots(1)
        );
        assert_eq!(
            SlotframeConfig::new(101, Duration::ZERO).unwrap_err(),
            SlotframeError::ZeroSlotDuration
        );
        let cfg = SlotframeConfig::default();
        assert!((cfg.cycle_seconds() - 2.02).abs() < 1e-12);
    }

    #[test]
    fn cell_fires_examples() {
        let cfg = SlotframeConfig::default();
        let active = Cell::new(1, 0, Some(full()));
        assert!(!cell_fires(Asn(103), &active, &cfg));
        assert!(cell_fires(Asn(102), &active, &cfg));
        let inactive = Cell::inactive(1, 0);
        assert!(!cell_fires(Asn(102), &inactive, &cfg));
        assert!(inactive.scheduled_at(Asn(102), &cfg));
        assert_eq!(inactive.channel_at(Asn(102)), None);
    }

    #[test]
    fn occurrence_helpers() {
        assert_eq!(next_occurrence(Asn(0), 1, 101), Asn(1));
        assert_eq!(next_occurrence(Asn(1), 1, 101), Asn(1));
        assert_eq!(next_occurrence(Asn(2), 1, 101), Asn(102));
        assert_eq!(next_occurrence(Asn(102), 51, 101), Asn(152));
        assert_eq!(occurrences_between(Asn(0), Asn(1), 0, 101), 1);
        assert_eq!(occurrences_between(Asn(0), Asn(1), 1, 101), 0);
        assert_eq!(occurrences_between(Asn(1), Asn(103), 1, 101), 2);
        assert_eq!(occurrences_between(Asn(5), Asn(5), 1, 101), 0);
    }

    fn arb_hopping() -> impl Strategy<Value = HoppingFunction> {
        (1usize..=16, any::<u64>()).prop_map(|(len, seed)| {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut all: Vec<u8> = (MIN_CHANNEL..=MAX_CHANNEL).collect();
            all.shuffle(&mut rng);
            all.truncate(len);
            HoppingFunction::new(7, all).unwrap()
        })
    }

    proptest! {
        #[test]
        fn every_channel_visited_once_per_period(h in arb_hopping(), start in 0u64..1_000_000, c in 0u16..64) {
            let mut visited: Vec<u8> = (0..h.len() as u64)
                .map(|k| hop_channel(Asn(start + k), c, &h))
                .collect();
            visited.sort_unstable();
            let mut expected = h.sequence().to_vec();
            expected.sort_unstable();
            prop_assert_eq!(visited, expected);
        }

        #[test]
        fn offset_shift_is_invisible(h in arb_hopping(), x in 0u64..1_000_000, c in 0u16..1000, k in -500i64..500) {
            prop_assume!(i64::from(c) - k >= 0 && x as i64 + k >= 0);
            let shifted = hop_channel(Asn((x as i64 + k) as u64), (i64::from(c) - k) as u16, &h);
            prop_assert_eq!(hop_channel(Asn(x), c, &h), shifted);
        }

        #[test]
        fn occurrence_count_matches_enumeration(from in 0u64..1000, span in 0u64..700, off in 0u32..101) {
            let brute = (from..from + span).filter(|x| x % 101 == u64::from(off)).count() as u64;
            prop_assert_eq!(occurrences_between(Asn(from), Asn(from + span), off, 101), brute);
            let next = next_occurrence(Asn(from), off, 101);
            prop_assert!(next.0 >= from && next.0 < from + 101 && next.0 % 101 == u64::from(off));
        }
    }
}
