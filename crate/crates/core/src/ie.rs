//! Information Element codec carrying a hopping function inside a data frame.
//!
//! Layout (big-endian):
//!
//! ```text
//! +---------+---------+------------+-------+-----------------+
//! | elem id | length  | hf id (2B) | L(1B) | L channel bytes |
//! +---------+---------+------------+-------+-----------------+
//!  \---- header ----/  \------------- payload --------------/
//! ```
//!
//! `length` counts payload bytes. The payload must fit the configured IE
//! payload budget (16 bytes by default).

use thiserror::Error;

use crate::hopping::{HoppingError, HoppingFunction};

/// Element id used for the hopping-function IE.
pub const HOPPING_IE_ID: u8 = 0x4c;
pub const IE_HEADER_LEN: usize = 2;
/// Bytes of payload preceding the channel list.
pub const IE_PAYLOAD_FIXED: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IeError {
    #[error("hopping function id {0} does not fit in 16 bits")]
    IdOutOfRange(u32),
    #[error("payload of {needed} bytes exceeds the {budget}-byte IE payload budget")]
    TooLarge { needed: usize, budget: usize },
    #[error("truncated IE: {0} bytes")]
    Truncated(usize),
    #[error("unexpected element id {0:#04x}")]
    WrongElementId(u8),
    #[error("length field {field} disagrees with {actual} payload bytes")]
    LengthMismatch { field: usize, actual: usize },
    #[error("invalid hopping function: {0}")]
    Invalid(#[from] HoppingError),
}

/// Largest hopping sequence that fits a payload budget.
pub fn max_channels_for_budget(budget: usize) -> usize {
    budget.saturating_sub(IE_PAYLOAD_FIXED)
}

pub fn encode(h: &HoppingFunction, payload_budget: usize) -> Result<Vec<u8>, IeError> {
    let id = u16::try_from(h.id()).map_err(|_| IeError::IdOutOfRange(h.id()))?;
    let payload_len = IE_PAYLOAD_FIXED + h.len();
    if payload_len > payload_budget || payload_len > usize::from(u8::MAX) {
        return Err(IeError::TooLarge {
            needed: payload_len,
            budget: payload_budget,
        });
    }
    let mut out = Vec::with_capacity(IE_HEADER_LEN + payload_len);
    out.push(HOPPING_IE_ID);
    out.push(payload_len as u8);
    out.extend_from_slice(&id.to_be_bytes());
    out.push(h.len() as u8);
    out.extend_from_slice(h.sequence());
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<HoppingFunction, IeError> {
    if bytes.len() < IE_HEADER_LEN + IE_PAYLOAD_FIXED {
        return Err(IeError::Truncated(bytes.len()));
    }
    if bytes[0] != HOPPING_IE_ID {
        return Err(IeError::WrongElementId(bytes[0]));
    }
    let payload = &bytes[IE_HEADER_LEN..];
    let field = usize::from(bytes[1]);
    if field != payload.len() {
        return Err(IeError::LengthMismatch {
            field,
            actual: payload.len(),
        });
    }
    let id = u16::from_be_bytes([payload[0], payload[1]]);
    let n = usize::from(payload[2]);
    let channels = &payload[IE_PAYLOAD_FIXED..];
    if channels.len() != n {
        return Err(IeError::LengthMismatch {
            field: n,
            actual: channels.len(),
        });
    }
    Ok(HoppingFunction::new(u32::from(id), channels.to_vec())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encodes_known_layout() {
        let h = HoppingFunction::new(0x0102, vec![15, 20, 25]).unwrap();
        assert_eq!(
            encode(&h, 16).unwrap(),
            vec![HOPPING_IE_ID, 6, 0x01, 0x02, 3, 15, 20, 25]
        );
    }

    #[test]
    fn budget_is_enforced() {
        let full = HoppingFunction::identity(1);
        assert_eq!(
            encode(&full, 16).unwrap_err(),
            IeError::TooLarge {
                needed: 19,
                budget: 16
            }
        );
        let thirteen = HoppingFunction::first_channels(1, max_channels_for_budget(16));
        assert_eq!(encode(&thirteen, 16).unwrap().len(), 18);
        assert_eq!(max_channels_for_budget(8), 5);
    }

    #[test]
    fn rejects_malformed_input() {
        assert_eq!(
            decode(&[HOPPING_IE_ID, 3]).unwrap_err(),
            IeError::Truncated(2)
        );
        assert_eq!(
            decode(&[0x00, 4, 0, 1, 1, 11]).unwrap_err(),
            IeError::WrongElementId(0)
        );
        assert!(matches!(
            decode(&[HOPPING_IE_ID, 5, 0, 1, 1, 11]),
            Err(IeError::LengthMismatch { .. })
        ));
        assert_eq!(
            decode(&[HOPPING_IE_ID, 5, 0, 1, 2, 11, 11]).unwrap_err(),
            IeError::Invalid(HoppingError::DuplicateChannel(11))
        );
        let big = HoppingFunction::identity(70_000);
        assert_eq!(encode(&big, 64).unwrap_err(), IeError::IdOutOfRange(70_000));
    }

    proptest! {
        #[test]
        fn round_trip(id in 0u32..=u32::from(u16::MAX), len in 1usize..=13, rot in 0usize..16) {
            let mut seq: Vec<u8> = (11..=26).collect();
            seq.rotate_left(rot);
            seq.truncate(len);
            let h = HoppingFunction::new(id, seq).unwrap();
            let bytes = encode(&h, 16).unwrap();
            prop_assert!(bytes.len() <= IE_HEADER_LEN + 16);
            prop_assert_eq!(decode(&bytes).unwrap(), h);
        }
    }
}
