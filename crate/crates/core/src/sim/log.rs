//! Optional event log for auditing simulator runs.
//!
//! Each record snapshots the system right after an event was processed, with
//! enough detail to replay the invariants of the service discipline: totals
//! per class and how many of each class are actually in service.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LogClass {
    Pu,
    Su,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LogEventKind {
    Arrival,
    Departure,
}

/// State snapshot taken immediately after one event was applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogRecord {
    pub time: f64,
    pub kind: LogEventKind,
    pub class: LogClass,
    /// Channel index, for topologies that distinguish channels.
    pub channel: Option<usize>,
    pub pu_total: usize,
    pub su_total: usize,
    pub pu_in_service: usize,
    pub su_in_service: usize,
}

/// Event trace of a single replication.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EventLog {
    pub records: Vec<LogRecord>,
}

impl EventLog {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", crate::CSV_VERSION_HEADER)?;
        writeln!(
            out,
            "time,event,class,channel,pu_total,su_total,pu_in_service,su_in_service"
        )?;
        for r in &self.records {
            let kind = match r.kind {
                LogEventKind::Arrival => "arrival",
                LogEventKind::Departure => "departure",
            };
            let class = match r.class {
                LogClass::Pu => "pu",
                LogClass::Su => "su",
            };
            let channel = r.channel.map(|c| c.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.time, kind, class, channel, r.pu_total, r.su_total, r.pu_in_service, r.su_in_service
            )?;
        }
        Ok(())
    }
}
