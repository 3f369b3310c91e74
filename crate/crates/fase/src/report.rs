//! Run reports: a human-readable summary and a line-oriented key=value
//! machine format with a versioned header. The machine format is fully
//! deterministic (sorted keys, integer counters, fixed-precision seconds) so
//! identical runs diff byte-for-byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::runtime::RunOutcome;
use crate::transport::TrafficLedger;

pub const REPORT_HEADER: &str = "fase-report v1";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("not a fase report (bad header)")]
    BadHeader,
    #[error("line {0}: expected key=value")]
    BadLine(usize),
    #[error("metric {0:?} not present")]
    MissingMetric(String),
    #[error("metric {0:?} is not numeric")]
    NotNumeric(String),
    #[error("reference metric is zero")]
    ZeroReference,
}

/// A parsed or freshly produced report: ordered key -> value text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Report {
    pub fields: BTreeMap<String, String>,
}

fn opcode_name(op: u8) -> &'static str {
    use crate::wire::opcode::*;
    match op {
        REDIRECT => "redirect",
        NEXT => "next",
        MMU_SET => "mmu_set",
        SYNC_I => "sync_i",
        HFUTEX => "hfutex",
        REG_READ => "reg_read",
        REG_WRITE => "reg_write",
        MEM_READ => "mem_read",
        MEM_WRITE => "mem_write",
        PAGE_SET => "page_set",
        PAGE_COPY => "page_copy",
        PAGE_READ => "page_read",
        PAGE_WRITE => "page_write",
        TICK => "tick",
        UTICK => "utick",
        DIRECT_REG_ACCESS => "direct_reg_access",
        DIRECT_INJECT => "direct_inject",
        DIRECT_POLL => "direct_poll",
        _ => "unknown",
    }
}

impl Report {
    pub fn from_outcome(outcome: &RunOutcome) -> Report {
        let mut f = BTreeMap::new();
        let mut put = |k: String, v: String| {
            f.insert(k, v);
        };
        put("exit.main".into(), outcome.main_exit.to_string());
        for (tid, code) in &outcome.exit_codes {
            put(format!("exit.tid.{tid}"), code.to_string());
        }
        if let Some(msg) = &outcome.fatal {
            put("fatal".into(), msg.replace('\n', " "));
        }
        put("ticks".into(), outcome.ticks.to_string());
        for (i, u) in outcome.uticks.iter().enumerate() {
            put(format!("utick.{i}"), u.to_string());
        }
        put("seconds".into(), format!("{:.9}", outcome.sim_seconds));
        put("bytes.sent".into(), outcome.ledger.bytes_sent.to_string());
        put("bytes.received".into(), outcome.ledger.bytes_received.to_string());
        put("bytes.total".into(), outcome.ledger.total_bytes().to_string());
        for (op, c) in &outcome.ledger.opcodes {
            let name = opcode_name(*op);
            put(format!("opcode.{name}.bytes"), c.total_bytes().to_string());
            put(format!("opcode.{name}.frames"), (c.frames_sent).to_string());
        }
        for (label, bytes) in &outcome.ledger.attributions {
            put(format!("attr.{label}.bytes"), bytes.to_string());
        }
        for (name, count) in &outcome.syscall_counts {
            put(format!("syscall.{name}.count"), count.to_string());
        }
        put("stat.page_faults".into(), outcome.stats.page_faults.to_string());
        put("stat.pages_preloaded".into(), outcome.stats.pages_preloaded.to_string());
        put("stat.ctx_saves".into(), outcome.stats.ctx_saves.to_string());
        put("stat.ctx_restores".into(), outcome.stats.ctx_restores.to_string());
        put("stat.signals_delivered".into(), outcome.stats.signals_delivered.to_string());
        if let Some(ts) = &outcome.target_stats {
            put("target.absorbed_wakes".into(), ts.absorbed_wakes.to_string());
            put("target.events_enqueued".into(), ts.events_enqueued.to_string());
            put("target.injected_insts".into(), ts.injected_insts.to_string());
        }
        if let Some(out) = &outcome.stdout {
            put("stdout.len".into(), out.len().to_string());
            put("stdout.hex".into(), hex(out));
        }
        Report { fields: f }
    }

    /// Serialize: versioned header, then sorted key=value lines.
    pub fn to_machine_string(&self) -> String {
        let mut s = String::new();
        s.push_str(REPORT_HEADER);
        s.push('\n');
        for (k, v) in &self.fields {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Report, ReportError> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == REPORT_HEADER => {}
            _ => return Err(ReportError::BadHeader),
        }
        let mut fields = BTreeMap::new();
        for (i, line) in lines.enumerate() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ReportError::BadLine(i + 2))?;
            fields.insert(k.to_string(), v.to_string());
        }
        Ok(Report { fields })
    }

    pub fn metric(&self, name: &str) -> Result<f64, ReportError> {
        let v = self.fields.get(name).ok_or_else(|| ReportError::MissingMetric(name.into()))?;
        v.parse::<f64>().map_err(|_| ReportError::NotNumeric(name.into()))
    }

    /// Human-readable rendering: summary plus both traffic tables.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let get = |k: &str| self.fields.get(k).map(String::as_str).unwrap_or("-");
        let _ = writeln!(s, "run summary");
        let _ = writeln!(s, "  main exit code : {}", get("exit.main"));
        if let Some(fatal) = self.fields.get("fatal") {
            let _ = writeln!(s, "  fatal          : {fatal}");
        }
        let _ = writeln!(s, "  ticks          : {}", get("ticks"));
        let _ = writeln!(s, "  simulated secs : {}", get("seconds"));
        let _ = writeln!(s, "  wire bytes     : {} sent / {} received", get("bytes.sent"), get("bytes.received"));
        let uticks: Vec<(String, String)> = self
            .fields
            .iter()
            .filter(|(k, _)| k.starts_with("utick."))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        if !uticks.is_empty() {
            let _ = write!(s, "  per-core utick :");
            for (k, v) in &uticks {
                let _ = write!(s, " {}={}", k.trim_start_matches("utick."), v);
            }
            let _ = writeln!(s);
        }
        for (heading, table) in
            [("traffic by request", self.traffic_table(GroupBy::Opcode)), ("traffic by syscall", self.traffic_table(GroupBy::Syscall))]
        {
            if table.is_empty() {
                continue;
            }
            let _ = writeln!(s, "{heading}");
            for row in table {
                let _ = writeln!(s, "  {:<24} {:>12} B {:>7.2}%", row.label, row.bytes, row.share * 100.0);
            }
        }
        let syscalls: Vec<(String, String)> = self
            .fields
            .iter()
            .filter_map(|(k, v)| {
                k.strip_prefix("syscall.")
                    .and_then(|r| r.strip_suffix(".count"))
                    .map(|name| (name.to_string(), v.clone()))
            })
            .collect();
        if !syscalls.is_empty() {
            let _ = writeln!(s, "syscall invocation counts");
            for (name, count) in syscalls {
                let _ = writeln!(s, "  {name:<24} {count:>12}");
            }
        }
        s
    }

    pub fn traffic_table(&self, group_by: GroupBy) -> Vec<TrafficRow> {
        let prefix = match group_by {
            GroupBy::Opcode => "opcode.",
            GroupBy::Syscall => "attr.",
        };
        let mut rows: Vec<TrafficRow> = self
            .fields
            .iter()
            .filter_map(|(k, v)| {
                let rest = k.strip_prefix(prefix)?;
                let label = rest.strip_suffix(".bytes")?;
                Some(TrafficRow { label: label.to_string(), bytes: v.parse().ok()?, share: 0.0 })
            })
            .collect();
        let total: u64 = rows.iter().map(|r| r.bytes).sum();
        if total > 0 {
            for r in &mut rows {
                r.share = r.bytes as f64 / total as f64;
            }
        }
        rows.sort_by(|a, b| b.bytes.cmp(&a.bytes).then(a.label.cmp(&b.label)));
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Opcode,
    Syscall,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficRow {
    pub label: String,
    pub bytes: u64,
    pub share: f64,
}

/// Relative error of `b` against reference `a`: (b - a) / a.
pub fn relative_error(a: f64, b: f64) -> Result<f64, ReportError> {
    if a == 0.0 {
        return Err(ReportError::ZeroReference);
    }
    Ok((b - a) / a)
}

pub fn compare(reference: &Report, candidate: &Report, metric: &str) -> Result<f64, ReportError> {
    relative_error(reference.metric(metric)?, candidate.metric(metric)?)
}

fn hex(data: &[u8]) -> String {
    let mut s = String::with_capacity(data.len() * 2);
    for b in data {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Ledger sanity used by tests: grouped sums reconcile with the total.
pub fn ledger_reconciles(ledger: &TrafficLedger) -> bool {
    ledger.reconciles()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        let mut r = Report::default();
        r.fields.insert("ticks".into(), "100".into());
        r.fields.insert("opcode.tick.bytes".into(), "30".into());
        r.fields.insert("opcode.next.bytes".into(), "70".into());
        r.fields.insert("attr.idle.bytes".into(), "100".into());
        r
    }

    #[test]
    fn machine_format_round_trips() {
        let r = sample();
        let text = r.to_machine_string();
        let parsed = Report::parse(&text).unwrap();
        assert_eq!(parsed, r);
    }

    #[test]
    fn golden_machine_format() {
        let r = sample();
        let expected = "fase-report v1\n\
                        attr.idle.bytes=100\n\
                        opcode.next.bytes=70\n\
                        opcode.tick.bytes=30\n\
                        ticks=100\n";
        assert_eq!(r.to_machine_string(), expected);
    }

    #[test]
    fn compare_arithmetic() {
        let mut a = Report::default();
        a.fields.insert("ticks".into(), "100".into());
        let mut b = Report::default();
        b.fields.insert("ticks".into(), "103".into());
        let e = compare(&a, &b, "ticks").unwrap();
        assert!((e - 0.03).abs() < 1e-12);
        assert_eq!(compare(&a, &a, "ticks").unwrap(), 0.0);
        a.fields.insert("ticks".into(), "0".into());
        assert!(matches!(compare(&a, &b, "ticks"), Err(ReportError::ZeroReference)));
    }

    #[test]
    fn traffic_shares_sum_to_one() {
        let r = sample();
        let table = r.traffic_table(GroupBy::Opcode);
        assert_eq!(table.len(), 2);
        assert_eq!(table[0].label, "next");
        let total: f64 = table.iter().map(|r| r.share).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bad_header_rejected() {
        assert!(matches!(Report::parse("nope\na=1\n"), Err(ReportError::BadHeader)));
    }
}
