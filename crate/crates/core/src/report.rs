//! Result tables and CSV output.
//!
//! Powers are printed in µW and times in seconds, both with three decimals.
//! Power totals are summed from the rounded columns so every row adds up.

use std::io::Write;

use crate::config::ScenarioConfig;
use crate::energy::MicroWatts;
use crate::metrics::{SlotHistogram, Summary};
use crate::simulator::{self, PlacementReport, SimError, SimReport};

/// Update periods swept for the power table, minutes.
pub const TABLE1_T_UPDATES_MIN: [f64; 6] = [7.5, 15.0, 30.0, 60.0, 120.0, 240.0];
/// Application periods of the two power-table blocks, seconds.
pub const TABLE1_T_APPS_S: [f64; 2] = [30.0, 5.0];
/// IE payload budgets swept for the IE-size table, bytes.
pub const TABLE2_L_IE_P: [u32; 5] = [16, 14, 12, 10, 8];

const POWER_COLUMNS: [&str; 6] = [
    "p_tx_tot_uw",
    "p_rx_uw",
    "p_listen_uw",
    "p_rx_tot_uw",
    "p_tot_uw",
    "delta_pct",
];
const LATENCY_COLUMNS: [&str; 5] = ["mu_d_s", "sigma_d_s", "d_p99_s", "d_p999_s", "d_max_s"];
const EXCHANGE_COLUMNS: [&str; 9] = [
    "latency",
    "count",
    "mean_s",
    "sigma_s",
    "min_s",
    "p99_s",
    "p999_s",
    "max_s",
    "duration_s",
];

fn secs(v: f64) -> String {
    format!("{v:.3}")
}

fn power_cells(r: &SimReport) -> Vec<String> {
    let q = r.power.quantized();
    vec![
        MicroWatts(q.tx_tot).to_string(),
        MicroWatts(q.rx).to_string(),
        MicroWatts(q.listen).to_string(),
        MicroWatts(q.rx_tot()).to_string(),
        MicroWatts(q.tot()).to_string(),
        r.delta_pct.map(|d| format!("{d:+.3}")).unwrap_or_default(),
    ]
}

fn latency_cells(h: &SlotHistogram, slot_s: f64) -> Vec<String> {
    match h.summarize() {
        Some(s) => {
            let s = s.to_seconds(slot_s);
            vec![
                secs(s.mean),
                secs(s.stddev),
                secs(s.p99),
                secs(s.p999),
                secs(s.max),
            ]
        }
        None => vec![String::new(); LATENCY_COLUMNS.len()],
    }
}

fn exchange_cells(name: &str, h: &SlotHistogram, slot_s: f64, duration_s: f64) -> Vec<String> {
    let mut row = vec![name.to_string(), h.total().to_string()];
    match h.summarize() {
        Some(s) => {
            let s = s.to_seconds(slot_s);
            row.extend([s.mean, s.stddev, s.min, s.p99, s.p999, s.max].map(secs));
        }
        None => row.extend(std::iter::repeat_n(String::new(), 6)),
    }
    row.push(secs(duration_s));
    row
}

fn listing(r: &SimReport) -> &'static str {
    if r.config.consip_enabled {
        "enabled"
    } else {
        "disabled"
    }
}

fn header(lead: &[&str]) -> Vec<String> {
    lead.iter()
        .chain(POWER_COLUMNS.iter())
        .chain(LATENCY_COLUMNS.iter())
        .chain(["duration_s"].iter())
        .map(ToString::to_string)
        .collect()
}

fn power_table_row(r: &SimReport) -> Vec<String> {
    let mut row = vec![
        listing(r).to_string(),
        secs(r.config.t_app_s),
        if r.config.consip_enabled {
            secs(r.config.t_update_min)
        } else {
            String::new()
        },
        r.samples_per_channel()
            .map(|n| format!("{n:.2}"))
            .unwrap_or_default(),
    ];
    row.extend(power_cells(r));
    row.extend(latency_cells(&r.latency, r.slot_s));
    row.push(secs(r.elapsed_s));
    row
}

fn write_rows<W: Write>(
    out: W,
    header: Vec<String>,
    rows: impl IntoIterator<Item = Vec<String>>,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// One power-and-latency row per report.
pub fn write_power_table<W: Write>(out: W, reports: &[SimReport]) -> csv::Result<()> {
    write_rows(
        out,
        header(&["listing", "t_app_s", "t_update_min", "samples_per_channel"]),
        reports.iter().map(power_table_row),
    )
}

/// Single-run report: the same row shape as the power table.
pub fn write_report_row<W: Write>(out: W, report: &SimReport) -> csv::Result<()> {
    write_power_table(out, std::slice::from_ref(report))
}

/// IE-size table: one row per report, keyed by the IE payload budget.
pub fn write_ie_size_table<W: Write>(out: W, reports: &[SimReport]) -> csv::Result<()> {
    let mut head = vec!["l_ie_p_b".to_string()];
    head.extend(POWER_COLUMNS.iter().map(ToString::to_string));
    head.push("duration_s".into());
    let rows = reports.iter().map(|r| {
        let mut row = vec![r.config.frame.l_ie_p.to_string()];
        row.extend(power_cells(r));
        row.push(secs(r.elapsed_s));
        row
    });
    write_rows(out, head, rows)
}

/// Exchange latency table: switch, double-listening and total rows.
pub fn write_exchange_table<W: Write>(out: W, report: &SimReport) -> csv::Result<()> {
    let d = report.elapsed_s;
    let rows = [
        exchange_cells("d_sw", &report.d_sw, report.slot_s, d),
        exchange_cells("d_dl", &report.d_dl, report.slot_s, d),
        exchange_cells("d_tot", &report.d_tot, report.slot_s, d),
    ];
    write_rows(out, EXCHANGE_COLUMNS.map(String::from).to_vec(), rows)
}

/// Application latency summary of one run.
pub fn write_latency_summary<W: Write>(out: W, report: &SimReport) -> csv::Result<()> {
    let mut row = exchange_cells("app", &report.latency, report.slot_s, report.elapsed_s);
    row[0] = "app".into();
    write_rows(out, EXCHANGE_COLUMNS.map(String::from).to_vec(), [row])
}

pub fn write_placement<W: Write>(out: W, p: &PlacementReport) -> csv::Result<()> {
    let head = header(&["placement", "cell_i", "cell_j"]);
    let rows = [("spaced", &p.spaced), ("contiguous", &p.contiguous)].map(|(name, r)| {
        let mut row = vec![
            name.to_string(),
            r.config.cell_i.to_string(),
            r.config.cell_j.to_string(),
        ];
        row.extend(power_cells(r));
        row.extend(latency_cells(&r.latency, r.slot_s));
        row.push(secs(r.elapsed_s));
        row
    });
    write_rows(out, head, rows)
}

/// Human-readable multi-line summary of one run.
pub fn summary_text(r: &SimReport) -> String {
    let q = r.power.quantized();
    let mut s = format!(
        "{} run, t_app {} s, {:.3} s simulated\n",
        listing(r),
        r.config.t_app_s,
        r.elapsed_s
    );
    s += &format!(
        "power [uW]: tx/tot {}  rx {}  listen {}  rx/tot {}  tot {}\n",
        MicroWatts(q.tx_tot),
        MicroWatts(q.rx),
        MicroWatts(q.listen),
        MicroWatts(q.rx_tot()),
        MicroWatts(q.tot())
    );
    let line = |name: &str, h: &SlotHistogram| match h.summarize() {
        Some(x) => format_summary(name, &x, r.slot_s),
        None => format!("{name}: no samples\n"),
    };
    s += &line("latency", &r.latency);
    if r.config.consip_enabled {
        s += &line("d_sw", &r.d_sw);
        s += &line("d_dl", &r.d_dl);
        s += &line("d_tot", &r.d_tot);
    }
    let c = &r.counters;
    s += &format!(
        "packets: generated {} delivered {} duplicates {} attempts {}\n",
        c.generated, c.delivered, c.duplicates, c.tx_attempts
    );
    if r.config.consip_enabled {
        s += &format!(
            "exchanges: requested {} completed {} aborted {} open {}\n",
            c.exchanges_requested, c.exchanges_completed, c.exchanges_aborted, c.exchanges_open
        );
    }
    s
}

fn format_summary(name: &str, x: &Summary, slot_s: f64) -> String {
    let t = x.to_seconds(slot_s);
    format!(
        "{name} [s]: n {} mean {:.3} sd {:.3} min {:.3} p99 {:.3} p99.9 {:.3} max {:.3}\n",
        t.count, t.mean, t.stddev, t.min, t.p99, t.p999, t.max
    )
}

/// Both blocks of the power table: for each application period, the disabled
/// baseline followed by one enabled run per update period.
pub fn table1(base: &ScenarioConfig) -> Result<Vec<SimReport>, SimError> {
    let mut out = Vec::with_capacity(TABLE1_T_APPS_S.len() * (TABLE1_T_UPDATES_MIN.len() + 1));
    for t_app in TABLE1_T_APPS_S {
        let cfg = ScenarioConfig {
            t_app_s: t_app,
            ..base.clone()
        };
        out.extend(simulator::paired_sweep(&cfg, &TABLE1_T_UPDATES_MIN)?);
    }
    Ok(out)
}

/// IE-size sweep at the base update period. Returns the disabled baseline
/// followed by one enabled run per budget.
pub fn table2(base: &ScenarioConfig) -> Result<Vec<SimReport>, SimError> {
    let variants: Vec<ScenarioConfig> = TABLE2_L_IE_P
        .iter()
        .map(|&l| {
            let mut c = base.clone();
            c.consip_enabled = true;
            c.frame.l_ie_p = l;
            c
        })
        .collect();
    simulator::paired_variants(base, &variants)
}

/// The enabled run behind the exchange latency table and the switch-latency
/// distribution.
pub fn table3(base: &ScenarioConfig) -> Result<SimReport, SimError> {
    simulator::run(&ScenarioConfig {
        consip_enabled: true,
        ..base.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::LossParams;

    fn short() -> ScenarioConfig {
        ScenarioConfig {
            duration_s: 2.0 * 86_400.0,
            ..ScenarioConfig::default()
        }
    }

    fn to_string(f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> String {
        let mut buf = Vec::new();
        f(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    fn parse(text: &str) -> Vec<Vec<String>> {
        text.lines()
            .map(|l| l.split(',').map(String::from).collect())
            .collect()
    }

    #[test]
    fn report_row_adds_up() {
        let r = simulator::run(&ScenarioConfig {
            consip_enabled: false,
            ..short()
        })
        .unwrap();
        let rows = parse(&to_string(|b| write_report_row(b, &r)));
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].len(), rows[1].len());
        assert_eq!(rows[1][0], "disabled");
        let col = |name: &str| {
            let i = rows[0].iter().position(|h| h == name).unwrap();
            let v = &rows[1][i];
            let (a, b) = v.split_once('.').unwrap();
            assert_eq!(b.len(), 3, "{name} = {v}");
            a.parse::<u64>().unwrap() * 1000 + b.parse::<u64>().unwrap()
        };
        assert_eq!(col("p_rx_tot_uw"), col("p_rx_uw") + col("p_listen_uw"));
        assert_eq!(col("p_tot_uw"), col("p_tx_tot_uw") + col("p_rx_tot_uw"));
        assert_eq!(
            rows[1][rows[0].iter().position(|h| h == "delta_pct").unwrap()],
            ""
        );
        assert_eq!(rows[1].last().unwrap(), "172800.000");
    }

    #[test]
    fn table_shapes() {
        let base = ScenarioConfig {
            duration_s: 86_400.0,
            ..ScenarioConfig::default()
        };
        let t1 = table1(&base).unwrap();
        assert_eq!(t1.len(), 14);
        assert_eq!(parse(&to_string(|b| write_power_table(b, &t1))).len(), 15);
        let t2 = table2(&base).unwrap();
        assert_eq!(t2.len(), 6);
        assert_eq!(
            parse(&to_string(|b| write_ie_size_table(b, &t2[1..]))).len(),
            6
        );
        let t3 = table3(&base).unwrap();
        let rows = parse(&to_string(|b| write_exchange_table(b, &t3)));
        assert_eq!(
            rows.iter()
                .skip(1)
                .map(|r| r[0].as_str())
                .collect::<Vec<_>>(),
            ["d_sw", "d_dl", "d_tot"]
        );
    }

    #[test]
    fn empty_run_leaves_statistics_blank() {
        let r = simulator::run(&ScenarioConfig {
            duration_s: 0.0,
            ..ScenarioConfig::default()
        })
        .unwrap();
        let text = to_string(|b| write_exchange_table(b, &r));
        assert!(text.contains("\nd_sw,0,,,,,,,0.000\n"));
        assert!(summary_text(&r).contains("latency: no samples"));
    }

    #[test]
    fn lossless_exchange_summary() {
        let r = table3(&ScenarioConfig {
            loss: LossParams::lossless(),
            ..short()
        })
        .unwrap();
        let text = to_string(|b| write_exchange_table(b, &r));
        let rows = parse(&text);
        let tot = &rows[3];
        assert_eq!(tot[4], "30.000");
        assert!(summary_text(&r).contains("exchanges: requested"));
    }

    #[test]
    fn outputs_are_deterministic() {
        let cfg = short();
        let a = to_string(|b| write_report_row(b, &simulator::run(&cfg).unwrap()));
        let b = to_string(|b| write_report_row(b, &simulator::run(&cfg).unwrap()));
        assert_eq!(a, b);
    }
}
