//! Evaluation quantities: NLoS time, obstruction onset delay and NLoS-time
//! reduction against a static-gNB baseline, plus trace CSV I/O.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One tick of a run. Column order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: u64,
    pub gnb_x: f64,
    pub ue_x: f64,
    pub ue_y: f64,
    pub obs_x: f64,
    pub obs_y: f64,
    pub los: u8,
    pub path_loss: f64,
    /// Action that led into this tick; empty on the initial tick.
    pub action: Option<u8>,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceMeta {
    pub use_case: String,
    pub policy_id: String,
    pub seed: u64,
    pub config_hash: String,
    pub tick_seconds: f64,
    /// Free-form description of the initial placements.
    pub initial: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub meta: TraceMeta,
    pub records: Vec<TraceRecord>,
}

impl RunTrace {
    pub fn run_seconds(&self) -> f64 {
        self.records.len() as f64 * self.meta.tick_seconds
    }

    fn first_nlos(&self) -> Option<usize> {
        self.records.iter().position(|r| r.los == 1)
    }

    fn nlos_ticks(&self) -> usize {
        self.records.iter().filter(|r| r.los == 1).count()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((i, r)) = self.records.iter().enumerate().find(|(i, r)| r.tick != *i as u64) {
            return Err(Error::Trace(format!(
                "tick {} found at row {i}; ticks must run 0, 1, 2, ...",
                r.tick
            )));
        }
        if !(self.meta.tick_seconds > 0.0) {
            return Err(Error::Trace("tick_seconds must be > 0".into()));
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let m = &self.meta;
        writeln!(out, "# use_case={}", m.use_case)?;
        writeln!(out, "# policy_id={}", m.policy_id)?;
        writeln!(out, "# seed={}", m.seed)?;
        writeln!(out, "# config_hash={}", m.config_hash)?;
        writeln!(out, "# tick_seconds={}", m.tick_seconds)?;
        writeln!(out, "# initial={}", m.initial)?;
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        if self.records.is_empty() {
            w.write_record([
                "tick",
                "gnb_x",
                "ue_x",
                "ue_y",
                "obs_x",
                "obs_y",
                "los",
                "path_loss",
                "action",
                "reward",
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = BufReader::new(input);
        let mut meta = TraceMeta::default();
        let mut body = String::new();
        let mut line = String::new();
        while reader.read_line(&mut line)? > 0 {
            if let Some(rest) = line.strip_prefix("# ") {
                let (key, value) = rest
                    .trim_end_matches(['\r', '\n'])
                    .split_once('=')
                    .ok_or_else(|| Error::Trace(format!("malformed header line `{}`", line.trim_end())))?;
                match key {
                    "use_case" => meta.use_case = value.to_string(),
                    "policy_id" => meta.policy_id = value.to_string(),
                    "seed" => meta.seed = value.parse().map_err(|_| Error::Trace("bad seed".into()))?,
                    "config_hash" => meta.config_hash = value.to_string(),
                    "tick_seconds" => {
                        meta.tick_seconds = value.parse().map_err(|_| Error::Trace("bad tick_seconds".into()))?
                    }
                    "initial" => meta.initial = value.to_string(),
                    _ => {}
                }
                line.clear();
            } else {
                body.push_str(&line);
                reader.read_to_string(&mut body)?;
                break;
            }
        }
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let records = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<TraceRecord>, _>>()?;
        let trace = RunTrace { meta, records };
        trace.validate()?;
        Ok(trace)
    }
}

/// Total obstructed time: NLoS tick count × Δt.
pub fn nlos_total_time(trace: &RunTrace) -> f64 {
    trace.nlos_ticks() as f64 * trace.meta.tick_seconds
}

/// Time until the link first clears, for runs that start obstructed.
pub fn time_to_los(trace: &RunTrace) -> Option<f64> {
    trace
        .records
        .iter()
        .position(|r| r.los == 0)
        .map(|i| i as f64 * trace.meta.tick_seconds)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnsetDelay {
    pub seconds: f64,
    /// The controlled run never lost LoS; `seconds` then measures the
    /// remainder of the run after the baseline's onset.
    pub never_obstructed: bool,
}

/// Obstruction onset of `trace_rl` relative to `trace_static`.
pub fn onset_delay(trace_rl: &RunTrace, trace_static: &RunTrace) -> Result<OnsetDelay> {
    let dt = trace_static.meta.tick_seconds;
    let base = trace_static
        .first_nlos()
        .ok_or_else(|| Error::Benchmark(format!("baseline for {} never loses LoS", trace_static.meta.use_case)))?;
    Ok(match trace_rl.first_nlos() {
        Some(first) => OnsetDelay {
            seconds: (first as f64 - base as f64) * dt,
            never_obstructed: false,
        },
        None => OnsetDelay {
            seconds: (trace_rl.records.len() as f64 - base as f64) * dt,
            never_obstructed: true,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub test: String,
    pub onset_delay_s: f64,
    pub never_obstructed: bool,
    pub nlos_time_static_s: f64,
    pub nlos_time_rl_s: f64,
    pub reduction_pct: f64,
    /// Time for the controlled run to first reach LoS, when it starts obstructed.
    pub recovery_time_s: Option<f64>,
}

pub fn compare(trace_rl: &RunTrace, trace_static: &RunTrace) -> Result<ComparisonReport> {
    if trace_rl.meta.config_hash != trace_static.meta.config_hash
        || trace_rl.meta.use_case != trace_static.meta.use_case
    {
        return Err(Error::Benchmark(
            "traces come from different configs or use cases".into(),
        ));
    }
    let delay = onset_delay(trace_rl, trace_static)?;
    let static_ticks = trace_static.nlos_ticks();
    let rl_ticks = trace_rl.nlos_ticks();
    let reduction_pct = 100.0 * (static_ticks as f64 - rl_ticks as f64) / static_ticks as f64;
    let recovery_time_s = if trace_rl.records.first().is_some_and(|r| r.los == 1) {
        time_to_los(trace_rl)
    } else {
        None
    };
    Ok(ComparisonReport {
        test: trace_rl.meta.use_case.clone(),
        onset_delay_s: delay.seconds,
        never_obstructed: delay.never_obstructed,
        nlos_time_static_s: nlos_total_time(trace_static),
        nlos_time_rl_s: nlos_total_time(trace_rl),
        reduction_pct,
        recovery_time_s,
    })
}

/// Truncates toward zero at one decimal, the granularity of published
/// results (41.66… → 41.6). The tiny bias absorbs representation error.
pub fn one_decimal(x: f64) -> f64 {
    let scaled = x * 10.0;
    let t = if scaled >= 0.0 {
        (scaled + 1e-9).floor()
    } else {
        (scaled - 1e-9).ceil()
    };
    t / 10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub test: String,
    pub delay_s: f64,
    pub reduction_pct: f64,
    pub never_obstructed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovery_time_s: Option<f64>,
}

impl From<&ComparisonReport> for ReportRow {
    fn from(r: &ComparisonReport) -> Self {
        Self {
            test: r.test.clone(),
            delay_s: one_decimal(r.onset_delay_s),
            reduction_pct: one_decimal(r.reduction_pct),
            never_obstructed: r.never_obstructed,
            recovery_time_s: r.recovery_time_s.map(one_decimal),
        }
    }
}

pub fn report_json(reports: &[ComparisonReport]) -> Result<String> {
    let rows: Vec<ReportRow> = reports.iter().map(ReportRow::from).collect();
    Ok(serde_json::to_string_pretty(&rows)?)
}

pub fn report_table(reports: &[ComparisonReport]) -> String {
    let mut s = String::from("Test   Delay (s)   Static NLoS (s)   RL NLoS (s)   Reduction (%)\n");
    for r in reports {
        let row = ReportRow::from(r);
        let flag = if r.never_obstructed { " *" } else { "" };
        s.push_str(&format!(
            "{:<6} {:>9.1}{:<2} {:>15.1} {:>13.1} {:>15.1}\n",
            row.test, row.delay_s, flag, r.nlos_time_static_s, r.nlos_time_rl_s, row.reduction_pct
        ));
        if let Some(t) = row.recovery_time_s {
            s.push_str(&format!("       recovered LoS after {t:.1} s\n"));
        }
    }
    if reports.iter().any(|r| r.never_obstructed) {
        s.push_str("* controlled run never obstructed\n");
    }
    s
}

/// Attaches externally captured measurements (for example SNR and
/// throughput logged by the RAN) to trace ticks. `external` is a CSV whose
/// first column is the time in seconds; each tick receives the latest row
/// at or before its own time.
pub fn join_external<R: Read>(trace: &RunTrace, external: R) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::Reader::from_reader(external);
    let headers: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut rows: Vec<(f64, Vec<String>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let t: f64 = rec
            .get(0)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::Trace("external CSV needs a numeric time column first".into()))?;
        rows.push((t, rec.iter().skip(1).map(str::to_string).collect()));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let joined = trace
        .records
        .iter()
        .map(|r| {
            let t = r.tick as f64 * trace.meta.tick_seconds;
            let idx = rows.partition_point(|(rt, _)| *rt <= t + 1e-9);
            if idx == 0 {
                vec![String::new(); headers.len()]
            } else {
                rows[idx - 1].1.clone()
            }
        })
        .collect();
    Ok((headers, joined))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn trace_from_flags(flags: &[u8]) -> RunTrace {
        RunTrace {
            meta: TraceMeta {
                use_case: "O.1".into(),
                policy_id: "p".into(),
                seed: 7,
                config_hash: "h".into(),
                tick_seconds: 0.2,
                initial: "test".into(),
            },
            records: flags
                .iter()
                .enumerate()
                .map(|(i, &los)| TraceRecord {
                    tick: i as u64,
                    gnb_x: 4.0 + i as f64 * 0.07,
                    ue_x: 4.0,
                    ue_y: 3.5,
                    obs_x: 2.0 + i as f64 * 0.12,
                    obs_y: 2.0,
                    los,
                    path_loss: 52.3 + f64::from(los) * 20.0,
                    action: if i == 0 { None } else { Some((i % 3) as u8) },
                    reward: if los == 1 { -0.4 } else { 0.49 },
                })
                .collect(),
        }
    }

    fn onset_at(len: usize, first: Option<usize>, nlos_len: usize) -> RunTrace {
        let mut flags = vec![0u8; len];
        if let Some(f) = first {
            for v in flags.iter_mut().skip(f).take(nlos_len) {
                *v = 1;
            }
        }
        trace_from_flags(&flags)
    }

    #[test]
    fn nlos_time_examples() {
        assert_eq!(nlos_total_time(&trace_from_flags(&[0; 30])), 0.0);
        assert!((nlos_total_time(&onset_at(30, Some(5), 10)) - 2.0).abs() < 1e-12);
        let alternating: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        assert!((nlos_total_time(&trace_from_flags(&alternating)) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn onset_examples() {
        let s = onset_at(75, Some(25), 8);
        assert_eq!(onset_delay(&s, &s).unwrap().seconds, 0.0);
        let d = onset_delay(&onset_at(75, Some(30), 5), &s).unwrap();
        assert!((d.seconds - 1.0).abs() < 1e-12 && !d.never_obstructed);
        let d = onset_delay(&onset_at(75, None, 0), &s).unwrap();
        assert!(d.never_obstructed);
        assert!((d.seconds - 10.0).abs() < 1e-12);
        assert!(matches!(
            onset_delay(&s, &onset_at(75, None, 0)),
            Err(Error::Benchmark(_))
        ));
    }

    #[test]
    fn reduction_examples() {
        let r = compare(&onset_at(75, Some(20), 7), &onset_at(75, Some(14), 12)).unwrap();
        assert!((r.nlos_time_static_s - 2.4).abs() < 1e-12 && (r.nlos_time_rl_s - 1.4).abs() < 1e-12);
        assert_eq!(ReportRow::from(&r).reduction_pct, 41.6);
        let r = compare(&onset_at(75, Some(20), 10), &onset_at(75, Some(20), 10)).unwrap();
        assert_eq!(r.reduction_pct, 0.0);
        let r = compare(&onset_at(75, Some(20), 7), &onset_at(75, Some(20), 8)).unwrap();
        assert_eq!(ReportRow::from(&r).reduction_pct, 12.5);
        let r = compare(&onset_at(75, None, 0), &onset_at(75, Some(20), 8)).unwrap();
        assert_eq!(r.reduction_pct, 100.0);
    }

    #[test]
    fn recovery_reported_for_obstructed_start() {
        let r = compare(&onset_at(75, Some(0), 6), &onset_at(75, Some(0), 75)).unwrap();
        assert_eq!(r.onset_delay_s, 0.0);
        assert!((r.recovery_time_s.unwrap() - 1.2).abs() < 1e-12);
        assert!((r.reduction_pct - 100.0 * 69.0 / 75.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_mismatched_traces() {
        let a = onset_at(10, Some(2), 2);
        let mut b = a.clone();
        b.meta.config_hash = "other".into();
        assert!(compare(&a, &b).is_err());
    }

    #[test]
    fn one_decimal_truncates() {
        assert_eq!(one_decimal(41.666), 41.6);
        assert_eq!(one_decimal(12.5), 12.5);
        assert_eq!(one_decimal(24.999999999999996), 25.0);
        assert_eq!(one_decimal(-0.85), -0.8);
    }

    #[test]
    fn report_formats() {
        let r = compare(&onset_at(75, Some(20), 7), &onset_at(75, Some(14), 12)).unwrap();
        let json = report_json(std::slice::from_ref(&r)).unwrap();
        let rows: Vec<ReportRow> = serde_json::from_str(&json).unwrap();
        assert_eq!(rows[0].test, "O.1");
        assert_eq!(rows[0].delay_s, 1.2);
        assert!(report_table(&[r]).contains("41.6"));
    }

    #[test]
    fn joins_external_measurements() {
        let trace = onset_at(4, Some(1), 1);
        let ext = "time_s,snr_db,throughput_mbps\n0.0,20.5,80\n0.3,9.0,30\n";
        let (headers, rows) = join_external(&trace, ext.as_bytes()).unwrap();
        assert_eq!(headers, vec!["snr_db", "throughput_mbps"]);
        assert_eq!(rows[0], vec!["20.5", "80"]);
        assert_eq!(rows[1], vec!["20.5", "80"]);
        assert_eq!(rows[2], vec!["9.0", "30"]);
    }

    proptest! {
        #[test]
        fn csv_round_trip(flags in proptest::collection::vec(0u8..2, 1..80)) {
            let t = trace_from_flags(&flags);
            let back = RunTrace::read_csv(t.to_csv_string().unwrap().as_bytes()).unwrap();
            prop_assert_eq!(back, t);
        }

        #[test]
        fn reduction_bounded(static_flags in proptest::collection::vec(0u8..2, 30), rl_flags in proptest::collection::vec(0u8..2, 30)) {
            let mut s = trace_from_flags(&static_flags);
            s.records[3].los = 1;
            let rl = trace_from_flags(&rl_flags);
            let r = compare(&rl, &s).unwrap();
            prop_assert!(r.reduction_pct <= 100.0);
            prop_assert_eq!(r.reduction_pct == 100.0, rl.records.iter().all(|x| x.los == 0));
        }

        #[test]
        fn swapping_negates_delay(a in 0usize..40, b in 0usize..40) {
            let x = onset_at(60, Some(a), 5);
            let y = onset_at(60, Some(b), 9);
            let xy = compare(&x, &y).unwrap();
            let yx = compare(&y, &x).unwrap();
            prop_assert_eq!(xy.onset_delay_s, -yx.onset_delay_s);
            prop_assert!((yx.reduction_pct - 100.0 * (5.0 - 9.0) / 5.0).abs() < 1e-9);
        }
    }
}
