//! Append-only event records produced by a trajectory, the sinks that collect
//! them, and aggregate run statistics.
//!
//! Records serialize as line-delimited JSON with stable field names; all
//! frequencies are exported in cyclic Hz. A full log together with the run
//! configuration and seed reproduces a run bit for bit.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::crystal::Mode;
use crate::error::Result;

/// The two long-lived electronic states of the atomic logic ion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomicLevel {
    G,
    E,
}

/// Rotational transition actually taken during a pulse (simulator truth;
/// protocols never see this, only detection outcomes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub j_from: u32,
    pub j_to: u32,
    /// Sideband order of the line that drove it.
    pub n: i32,
    /// Mode of that line; None for carriers.
    pub mode: Option<Mode>,
}

/// What happened in one elementary step of the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    /// Comb Raman pulse at a relative offset (cyclic Hz).
    Pulse {
        offset_hz: f64,
        duration_s: f64,
        addressed_mode: Mode,
        transition: Option<Transition>,
    },
    /// Atomic red-sideband transfer attempt on the selected mode.
    Transfer { excited: bool },
    /// State-selective fluorescence detection of the atom.
    Detect { bright: bool },
    /// Optical pumping of the atom and recooling of the crystal motion.
    Reset,
    /// Rotational state resampled from the thermal distribution.
    Retherm,
    /// Explicit wait with no drive applied.
    Idle { duration_s: f64 },
    /// Comb repetition rate changed (cyclic Hz).
    SpacingSet { spacing_hz: f64 },
    /// Protocol-level milestone, free-form.
    Note { label: String },
}

/// One log line: timestamp, the event, and the state right after it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    /// Simulated time at the end of the event, s.
    pub t_s: f64,
    #[serde(flatten)]
    pub kind: EventKind,
    /// Rotational level after the event.
    pub j: u32,
    /// Motional quanta in the selected mode after the event.
    pub n_motion: u32,
    /// Atomic level after the event.
    pub atom: AtomicLevel,
}

impl EventRecord {
    /// Canonical single-line serialization used for log files.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("event records always serialize")
    }
}

/// Receiver for the event stream of one trajectory.
pub trait EventSink {
    fn record(&mut self, record: &EventRecord) -> Result<()>;
}

/// Discards everything; for throughput-bound runs where only statistics and
/// protocol results matter.
#[derive(Debug, Default)]
pub struct NullSink;

impl EventSink for NullSink {
    fn record(&mut self, _record: &EventRecord) -> Result<()> {
        Ok(())
    }
}

/// Keeps every record in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub records: Vec<EventRecord>,
}

impl EventSink for MemorySink {
    fn record(&mut self, record: &EventRecord) -> Result<()> {
        self.records.push(record.clone());
        Ok(())
    }
}

/// Streams records as JSON lines to any writer. Wrap files in a buffered
/// writer; one line per record.
#[derive(Debug)]
pub struct WriterSink<W: Write> {
    writer: W,
}

impl<W: Write> WriterSink<W> {
    pub fn new(writer: W) -> Self {
        Self { writer }
    }

    pub fn into_inner(self) -> W {
        self.writer
    }
}

impl<W: Write> EventSink for WriterSink<W> {
    fn record(&mut self, record: &EventRecord) -> Result<()> {
        self.writer.write_all(record.to_line().as_bytes())?;
        self.writer.write_all(b"\n")?;
        Ok(())
    }
}

/// Aggregate counters over a run, maintained by the trajectory engine.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub pulses: u64,
    /// Pulses that actually drove a rotational transition.
    pub pulse_transitions: u64,
    pub transfers: u64,
    /// Transfers that removed a quantum and excited the atom.
    pub transfer_excitations: u64,
    pub detections: u64,
    pub brights: u64,
    pub darks: u64,
    pub resets: u64,
    /// Rethermalization resamples actually applied.
    pub retherms: u64,
    pub heating_quanta: u64,
    pub spacing_changes: u64,
    /// Total time spent in explicit idles, s.
    pub idle_s: f64,
    /// Simulated clock at the end of the run, s.
    pub sim_time_s: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_record() -> EventRecord {
        EventRecord {
            t_s: 1.25e-3,
            kind: EventKind::Pulse {
                offset_hz: 3.59010e8,
                duration_s: 1e-5,
                addressed_mode: Mode::Minus,
                transition: Some(Transition { j_from: 4, j_to: 2, n: -1, mode: Some(Mode::Minus) }),
            },
            j: 2,
            n_motion: 1,
            atom: AtomicLevel::G,
        }
    }

    #[test]
    fn record_roundtrips_through_json() {
        let rec = sample_record();
        let line = rec.to_line();
        assert!(line.contains("\"event\":\"pulse\""));
        assert!(!line.contains('\n'));
        let back: EventRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn serialization_is_stable() {
        // Same record serializes to the same bytes every time; replay
        // verification depends on this.
        let rec = sample_record();
        assert_eq!(rec.to_line(), rec.to_line());
    }

    #[test]
    fn sinks_collect_records() {
        let rec = sample_record();
        let mut mem = MemorySink::default();
        mem.record(&rec).unwrap();
        mem.record(&rec).unwrap();
        assert_eq!(mem.records.len(), 2);

        let mut writer = WriterSink::new(Vec::new());
        writer.record(&rec).unwrap();
        let bytes = writer.into_inner();
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().count(), 1);

        NullSink.record(&rec).unwrap();
    }
}
