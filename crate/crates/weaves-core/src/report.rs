//! Per-run reports returned by the scheduler.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct StringReport {
    pub id: u32,
    pub name: String,
    /// Final status label: `finished`, `failed`, `blocked(reason)`, ...
    pub status: String,
    /// Times this string was switched in.
    pub switches: u64,
    pub guest_calls: u64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub strings: Vec<StringReport>,
    pub total_switches: u64,
    pub wall_ms: f64,
    /// Strings still blocked when the scheduler ran out of eligible work,
    /// with their block reasons. Empty on a clean completion.
    pub deadlocked: Vec<(u32, String)>,
}

impl RunReport {
    pub fn all_finished(&self) -> bool {
        self.strings.iter().all(|s| s.status == "finished")
    }

    pub fn failed(&self) -> Vec<&StringReport> {
        self.strings.iter().filter(|s| s.status == "failed").collect()
    }

    /// CSV with the documented schema:
    /// `string_id,status,switches,guest_calls,wall_ms`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("string_id,status,switches,guest_calls,wall_ms\n");
        for s in &self.strings {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.3}",
                s.id, s.status, s.switches, s.guest_calls, s.wall_ms
            );
        }
        out
    }
}
