//! Link model producing one outcome per transmission attempt.
//!
//! In random mode each attempt consumes exactly one uniform draw `u` from a
//! ChaCha8 stream seeded with the scenario seed:
//! `u < eps_f` loses the frame, `u < eps_f + (1 - eps_f) * eps_a` loses the
//! ACK, anything else is a clean delivery. ACK loss is therefore conditional
//! on the data frame having arrived. Using a single draw per attempt keeps two
//! runs with the same seed aligned attempt by attempt even when they differ in
//! what they transmit.

use std::collections::VecDeque;
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// RNG stream reserved for link outcomes.
pub const OUTCOME_STREAM: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    FrameLost,
    AckLost,
    Delivered,
}

impl Outcome {
    pub const ALL: [Outcome; 3] = [Outcome::FrameLost, Outcome::AckLost, Outcome::Delivered];

    /// The data frame reached the receiver.
    pub fn frame_arrived(self) -> bool {
        self != Outcome::FrameLost
    }

    /// The sender got its ACK.
    pub fn acked(self) -> bool {
        self == Outcome::Delivered
    }

    pub fn token(self) -> char {
        match self {
            Outcome::FrameLost => 'F',
            Outcome::AckLost => 'A',
            Outcome::Delivered => 'D',
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.token())
    }
}

impl FromStr for Outcome {
    type Err = MediumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "F" => Ok(Outcome::FrameLost),
            "A" => Ok(Outcome::AckLost),
            "D" => Ok(Outcome::Delivered),
            other => Err(MediumError::BadToken(other.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum MediumError {
    #[error("loss probability {name}={value} outside [0, 1)")]
    BadProbability { name: &'static str, value: f64 },
    #[error("outcome trace exhausted after {0} attempts")]
    TraceExhausted(u64),
    #[error("unknown outcome token {0:?} (expected F, A or D)")]
    BadToken(String),
    #[error("line {line}: {source}")]
    TraceLine {
        line: usize,
        #[source]
        source: Box<MediumError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Loss probabilities of the link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossParams {
    /// Data-frame loss probability.
    pub eps_f: f64,
    /// ACK loss probability, conditional on the data frame arriving.
    pub eps_a: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            eps_f: 0.126,
            eps_a: 0.08,
        }
    }
}

impl LossParams {
    pub fn lossless() -> Self {
        Self {
            eps_f: 0.0,
            eps_a: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), MediumError> {
        for (name, value) in [("eps_f", self.eps_f), ("eps_a", self.eps_a)] {
            if !(0.0..1.0).contains(&value) {
                return Err(MediumError::BadProbability { name, value });
            }
        }
        Ok(())
    }

    /// Probability that one attempt is both delivered and acknowledged.
    pub fn acked_success(&self) -> f64 {
        (1.0 - self.eps_f) * (1.0 - self.eps_a)
    }
}

#[derive(Debug, Clone)]
enum Source {
    Random(Box<ChaCha8Rng>),
    Trace(VecDeque<Outcome>),
}

#[derive(Debug, Clone)]
pub struct LossModel {
    params: LossParams,
    source: Source,
    drawn: u64,
}

impl LossModel {
    /// Seeded random outcomes.
    pub fn random(params: LossParams, seed: u64) -> Result<Self, MediumError> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(OUTCOME_STREAM);
        Ok(Self {
            params,
            source: Source::Random(Box::new(rng)),
            drawn: 0,
        })
    }

    /// Replays a fixed outcome list; fails once it runs out.
    pub fn trace(outcomes: impl IntoIterator<Item = Outcome>) -> Self {
        Self {
            params: LossParams::lossless(),
            source: Source::Trace(outcomes.into_iter().collect()),
            drawn: 0,
        }
    }

    pub fn params(&self) -> LossParams {
        self.params
    }

    /// Attempts served so far.
    pub fn drawn(&self) -> u64 {
        self.drawn
    }

    pub fn next_outcome(&mut self) -> Result<Outcome, MediumError> {
        let outcome = match &mut self.source {
            Source::Random(rng) => {
                let u: f64 = rng.gen();
                let p = self.params;
                if u < p.eps_f {
                    Outcome::FrameLost
                } else if u < p.eps_f + (1.0 - p.eps_f) * p.eps_a {
                    Outcome::AckLost
                } else {
                    Outcome::Delivered
                }
            }
            Source::Trace(queue) => queue
                .pop_front()
                .ok_or(MediumError::TraceExhausted(self.drawn))?,
        };
        self.drawn += 1;
        Ok(outcome)
    }
}

/// Free-function form of [`LossModel::next_outcome`].
pub fn attempt_outcome(model: &mut LossModel) -> Result<Outcome, MediumError> {
    model.next_outcome()
}

/// Parses a trace: one token per line, `#` starts a comment, blank lines ignored.
pub fn parse_trace(text: &str) -> Result<Vec<Outcome>, MediumError> {
    read_trace(text.as_bytes())
}

pub fn read_trace(reader: impl BufRead) -> Result<Vec<Outcome>, MediumError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let outcome = body.parse().map_err(|e| MediumError::TraceLine {
            line: idx + 1,
            source: Box::new(e),
        })?;
        out.push(outcome);
    }
    Ok(out)
}

/// Renders a trace, optionally preceded by `#` comment lines.
pub fn format_trace(outcomes: &[Outcome], comments: &[String]) -> String {
    let mut s = String::new();
    for c in comments {
        s.push_str("# ");
        s.push_str(c);
        s.push('\n');
    }
    for o in outcomes {
        s.push(o.token());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn draws(params: LossParams, seed: u64, n: usize) -> Vec<Outcome> {
        let mut m = LossModel::random(params, seed).unwrap();
        (0..n).map(|_| m.next_outcome().unwrap()).collect()
    }

    #[test]
    fn lossless_link_always_delivers() {
        assert!(draws(LossParams::lossless(), 3, 10_000)
            .iter()
            .all(|o| *o == Outcome::Delivered));
    }

    #[test]
    fn probability_one_is_rejected_but_near_one_loses_everything() {
        assert!(LossModel::random(
            LossParams {
                eps_f: 1.0,
                eps_a: 0.0
            },
            0
        )
        .is_err());
        assert!(LossModel::random(
            LossParams {
                eps_f: -0.1,
                eps_a: 0.0
            },
            0
        )
        .is_err());
        let p = LossParams {
            eps_f: 1.0 - f64::EPSILON,
            eps_a: 0.0,
        };
        assert!(draws(p, 5, 10_000).iter().all(|o| *o == Outcome::FrameLost));
    }

    #[test]
    fn empirical_frequencies_match_parameters() {
        let n = 1_000_000;
        let v = draws(LossParams::default(), 42, n);
        let frac = |k: Outcome| v.iter().filter(|o| **o == k).count() as f64 / n as f64;
        assert!((frac(Outcome::FrameLost) - 0.126).abs() < 0.001);
        assert!((frac(Outcome::Delivered) - 0.874 * 0.92).abs() < 0.002);
        assert!((frac(Outcome::AckLost) - 0.874 * 0.08).abs() < 0.002);
    }

    #[test]
    fn trace_mode_replays_then_fails() {
        let mut m = LossModel::trace(parse_trace("# header\nD\n\nF  # lost\nA\n").unwrap());
        assert_eq!(m.next_outcome().unwrap(), Outcome::Delivered);
        assert_eq!(m.next_outcome().unwrap(), Outcome::FrameLost);
        assert_eq!(attempt_outcome(&mut m).unwrap(), Outcome::AckLost);
        assert!(matches!(
            m.next_outcome(),
            Err(MediumError::TraceExhausted(3))
        ));
    }

    #[test]
    fn bad_trace_token_reports_line() {
        let err = parse_trace("D\nX\n").unwrap_err();
        assert!(matches!(err, MediumError::TraceLine { line: 2, .. }));
    }

    #[test]
    fn trace_text_round_trips() {
        let v = vec![Outcome::FrameLost, Outcome::AckLost, Outcome::Delivered];
        let text = format_trace(&v, &["counterexample".to_string()]);
        assert!(text.starts_with("# counterexample\n"));
        assert_eq!(parse_trace(&text).unwrap(), v);
    }

    proptest! {
        #[test]
        fn same_seed_same_sequence(seed in any::<u64>(), f in 0.0f64..0.99, a in 0.0f64..0.99) {
            let p = LossParams { eps_f: f, eps_a: a };
            prop_assert_eq!(draws(p, seed, 200), draws(p, seed, 200));
        }
    }
}
