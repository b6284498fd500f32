//! Exact slot-resolution latency statistics.
//!
//! Every latency in the simulator is an integer number of slots, so an exact
//! histogram is both cheap and lossless: percentiles are nearest-rank on the
//! true sample, and mean/σ come from exact counts.

use std::collections::BTreeMap;
use std::io::Write;

/// Exact histogram of non-negative slot counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SlotHistogram {
    counts: BTreeMap<u64, u64>,
    total: u64,
}

/// Summary statistics in slots. Population σ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: u64,
    pub mean: f64,
    pub stddev: f64,
    pub min: u64,
    pub max: u64,
    pub p99: u64,
    pub p999: u64,
}

/// [`Summary`] converted to seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummarySeconds {
    pub count: u64,
    pub mean: f64,
    pub stddev: f64,
    pub min: f64,
    pub max: f64,
    pub p99: f64,
    pub p999: f64,
}

impl Summary {
    pub fn to_seconds(&self, slot_s: f64) -> SummarySeconds {
        SummarySeconds {
            count: self.count,
            mean: self.mean * slot_s,
            stddev: self.stddev * slot_s,
            min: self.min as f64 * slot_s,
            max: self.max as f64 * slot_s,
            p99: self.p99 as f64 * slot_s,
            p999: self.p999 as f64 * slot_s,
        }
    }
}

/// One row of a PDF/CDF table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionRow {
    pub slots: u64,
    pub seconds: f64,
    pub pdf: f64,
    pub cdf: f64,
}

impl SlotHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, slots: u64) {
        self.record_n(slots, 1);
    }

    pub fn record_n(&mut self, slots: u64, n: u64) {
        if n == 0 {
            return;
        }
        *self.counts.entry(slots).or_insert(0) += n;
        self.total += n;
    }

    pub fn merge(&mut self, other: &SlotHistogram) {
        for (&v, &n) in &other.counts {
            self.record_n(v, n);
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn count_of(&self, slots: u64) -> u64 {
        self.counts.get(&slots).copied().unwrap_or(0)
    }

    /// (value, count) pairs in ascending value order.
    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(|(&v, &n)| (v, n))
    }

    pub fn min(&self) -> Option<u64> {
        self.counts.keys().next().copied()
    }

    pub fn max(&self) -> Option<u64> {
        self.counts.keys().next_back().copied()
    }

    /// Smallest value `v` with `CDF(v) >= num/den`. `None` when empty.
    pub fn percentile_ratio(&self, num: u64, den: u64) -> Option<u64> {
        assert!(den > 0 && num <= den, "percentile fraction out of range");
        if self.total == 0 {
            return None;
        }
        let target = u128::from(num) * u128::from(self.total);
        let mut cum: u128 = 0;
        for (&v, &n) in &self.counts {
            cum += u128::from(n);
            if cum * u128::from(den) >= target {
                return Some(v);
            }
        }
        self.max()
    }

    /// Nearest-rank percentile for `p` given in per-mille (990 = p99).
    pub fn percentile_permille(&self, permille: u64) -> Option<u64> {
        self.percentile_ratio(permille, 1000)
    }

    pub fn mean(&self) -> Option<f64> {
        if self.total == 0 {
            return None;
        }
        let sum: u128 = self
            .counts
            .iter()
            .map(|(&v, &n)| u128::from(v) * u128::from(n))
            .sum();
        Some(sum as f64 / self.total as f64)
    }

    pub fn stddev(&self) -> Option<f64> {
        let mean = self.mean()?;
        let ss: f64 = self
            .counts
            .iter()
            .map(|(&v, &n)| {
                let d = v as f64 - mean;
                d * d * n as f64
            })
            .sum();
        Some((ss / self.total as f64).sqrt())
    }

    pub fn summarize(&self) -> Option<Summary> {
        Some(Summary {
            count: self.total,
            mean: self.mean()?,
            stddev: self.stddev()?,
            min: self.min()?,
            max: self.max()?,
            p99: self.percentile_permille(990)?,
            p999: self.percentile_permille(999)?,
        })
    }

    /// Probability mass and cumulative distribution per occupied bin.
    pub fn pdf_cdf(&self, slot_s: f64) -> Vec<DistributionRow> {
        let total = self.total as f64;
        let mut cum = 0u64;
        self.counts
            .iter()
            .map(|(&v, &n)| {
                cum += n;
                DistributionRow {
                    slots: v,
                    seconds: v as f64 * slot_s,
                    pdf: n as f64 / total,
                    cdf: cum as f64 / total,
                }
            })
            .collect()
    }

    /// Sample counts aggregated into consecutive bins of `width` slots,
    /// starting at zero, up to the last occupied bin.
    pub fn plateau_masses(&self, width: u64) -> Vec<u64> {
        let Some(max) = self.max() else {
            return Vec::new();
        };
        let mut out = vec![0u64; (max / width + 1) as usize];
        for (&v, &n) in &self.counts {
            out[(v / width) as usize] += n;
        }
        out
    }
}

/// Free-function form of [`SlotHistogram::pdf_cdf`].
pub fn export_pdf_cdf(h: &SlotHistogram, slot_s: f64) -> Vec<DistributionRow> {
    h.pdf_cdf(slot_s)
}

/// Writes `slots,seconds,pdf,cdf` rows with a header.
pub fn write_pdf_cdf_csv<W: Write>(out: W, rows: &[DistributionRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["slots", "seconds", "pdf", "cdf"])?;
    for r in rows {
        w.write_record([
            r.slots.to_string(),
            format!("{:.3}", r.seconds),
            format!("{:.12}", r.pdf),
            format!("{:.12}", r.cdf),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `slots,seconds,count` rows with a header.
pub fn write_histogram_csv<W: Write>(out: W, h: &SlotHistogram, slot_s: f64) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["slots", "seconds", "count"])?;
    for (v, n) in h.iter() {
        w.write_record([
            v.to_string(),
            format!("{:.3}", v as f64 * slot_s),
            n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
