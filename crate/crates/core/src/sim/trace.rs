use std::fmt;

use crate::grid::Cell;
use crate::value::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    Fire,
    Complete,
    /// An ILDR moved a result to `thread`.
    Retag,
    /// A retag fell outside the thread group; `thread` is the retagged id.
    Drop,
    /// A result could not leave its unit for lack of buffer credit.
    Stall,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Fire => "fire",
            EventKind::Complete => "complete",
            EventKind::Retag => "retag",
            EventKind::Drop => "drop",
            EventKind::Stall => "stall",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub cycle: u64,
    pub cell: Cell,
    pub kind: EventKind,
    pub thread: u32,
    pub value: Value,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cycle={} unit={} event={} thread={} value={}",
            self.cycle, self.cell, self.kind, self.thread, self.value
        )
    }
}

/// One event per line, in emission order.
pub fn render_trace(events: &[TraceEvent]) -> String {
    let mut s = String::with_capacity(events.len() * 48);
    for e in events {
        s.push_str(&e.to_string());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_format() {
        let e =
            TraceEvent { cycle: 12, cell: Cell::new(0, 4), kind: EventKind::Retag, thread: 3, value: Value::Int(-2) };
        assert_eq!(e.to_string(), "cycle=12 unit=r0c4 event=retag thread=3 value=-2");
    }
}
