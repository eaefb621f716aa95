//! Execution event log.
//!
//! One record per line: `timestamp_us,event,cpu,thread,task,task_type`.
//! Timestamps are microseconds with nanosecond decimals. Thread ids are
//! global (`runtime * n_cpus + slot`), task ids carry their runtime in the
//! upper 32 bits. `prediction` records put the target CPU count in the task
//! column and `r<runtime>;<type>=<contribution>;...` in the type column.

use std::fmt;
use std::io;
use std::str::FromStr;

use thiserror::Error;

/// Task ids of runtime `r` start at `r << RUNTIME_SHIFT`.
pub const RUNTIME_SHIFT: u32 = 32;

pub fn runtime_of_task(task: u64) -> usize {
    (task >> RUNTIME_SHIFT) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    Create,
    Ready,
    Start,
    End,
    Park,
    Resume,
    Lend,
    Reclaim,
    Prediction,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Create => "create",
            EventKind::Ready => "ready",
            EventKind::Start => "start",
            EventKind::End => "end",
            EventKind::Park => "park",
            EventKind::Resume => "resume",
            EventKind::Lend => "lend",
            EventKind::Reclaim => "reclaim",
            EventKind::Prediction => "prediction",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "create" => EventKind::Create,
            "ready" => EventKind::Ready,
            "start" => EventKind::Start,
            "end" => EventKind::End,
            "park" => EventKind::Park,
            "resume" => EventKind::Resume,
            "lend" => EventKind::Lend,
            "reclaim" => EventKind::Reclaim,
            "prediction" => EventKind::Prediction,
            other => return Err(format!("unknown event kind `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time_ns: u64,
    pub kind: EventKind,
    pub runtime: u32,
    pub cpu: Option<u32>,
    pub thread: Option<u32>,
    /// Task id, or the target CPU count for `prediction` records.
    pub task: Option<u64>,
    pub task_type: Option<u32>,
    /// Per-type contributions, `prediction` records only.
    pub contributions: Option<Box<[(u32, f64)]>>,
    /// Task cost on `create` records. Not part of the dump.
    pub cost: Option<f64>,
}

impl Event {
    pub fn new(time_ns: u64, kind: EventKind, runtime: usize) -> Self {
        Self {
            time_ns,
            kind,
            runtime: runtime as u32,
            cpu: None,
            thread: None,
            task: None,
            task_type: None,
            contributions: None,
            cost: None,
        }
    }

    pub fn cpu(mut self, cpu: usize) -> Self {
        self.cpu = Some(cpu as u32);
        self
    }

    pub fn thread(mut self, thread: usize) -> Self {
        self.thread = Some(thread as u32);
        self
    }

    pub fn task(mut self, task: u64, task_type: u32) -> Self {
        self.task = Some(task);
        self.task_type = Some(task_type);
        self
    }
}

/// Anything that consumes events as they are produced.
pub trait EventSink {
    fn record(&mut self, event: Event);
}

impl EventSink for () {
    fn record(&mut self, _: Event) {}
}

impl<A: EventSink, B: EventSink> EventSink for (A, B) {
    fn record(&mut self, event: Event) {
        self.0.record(event.clone());
        self.1.record(event);
    }
}

impl<S: EventSink + ?Sized> EventSink for &mut S {
    fn record(&mut self, event: Event) {
        (**self).record(event)
    }
}

impl<S: EventSink> EventSink for Option<S> {
    fn record(&mut self, event: Event) {
        if let Some(s) = self {
            s.record(event)
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// A complete event log of one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventLog {
    pub n_cpus: usize,
    /// Task type labels, per runtime.
    pub labels: Vec<Vec<String>>,
    pub events: Vec<Event>,
}

impl EventSink for EventLog {
    fn record(&mut self, event: Event) {
        self.events.push(event);
    }
}

impl EventSink for Vec<Event> {
    fn record(&mut self, event: Event) {
        self.push(event);
    }
}

fn fmt_time(ns: u64) -> String {
    format!("{}.{:03}", ns / 1000, ns % 1000)
}

fn parse_time(s: &str) -> Option<u64> {
    let (us, frac) = s.split_once('.').unwrap_or((s, "0"));
    if frac.is_empty() || frac.len() > 3 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let frac: u64 = format!("{frac:0<3}").parse().ok()?;
    Some(us.parse::<u64>().ok()? * 1000 + frac)
}

impl EventLog {
    pub fn new(n_cpus: usize, labels: Vec<Vec<String>>) -> Self {
        Self {
            n_cpus,
            labels,
            events: Vec::new(),
        }
    }

    fn label(&self, runtime: u32, ty: u32) -> &str {
        self.labels
            .get(runtime as usize)
            .and_then(|l| l.get(ty as usize))
            .map_or("?", String::as_str)
    }

    pub fn write_to<W: io::Write>(&self, mut out: W) -> io::Result<()> {
        for e in &self.events {
            let opt = |v: Option<u32>| v.map(|v| v.to_string()).unwrap_or_default();
            let (task, ty) = match e.kind {
                EventKind::Prediction => {
                    let mut ty = format!("r{}", e.runtime);
                    for (t, beta) in e.contributions.iter().flat_map(|c| c.iter()) {
                        ty.push_str(&format!(";{}={beta:.4}", self.label(e.runtime, *t)));
                    }
                    (e.task.map(|t| t.to_string()).unwrap_or_default(), ty)
                }
                _ => (
                    e.task.map(|t| t.to_string()).unwrap_or_default(),
                    e.task_type
                        .map(|t| self.label(e.runtime, t).to_string())
                        .unwrap_or_default(),
                ),
            };
            writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt_time(e.time_ns),
                e.kind,
                opt(e.cpu),
                opt(e.thread),
                task,
                ty
            )?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("log is ascii")
    }

    /// Parses a dumped log. Unknown type labels are interned per runtime in
    /// order of appearance.
    pub fn parse(text: &str, n_cpus: usize) -> Result<Self, ParseError> {
        let mut log = EventLog::new(n_cpus, Vec::new());
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| ParseError::Malformed {
                line: i + 1,
                message,
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(err(format!("expected 6 fields, got {}", fields.len())));
            }
            let time_ns = parse_time(fields[0])
                .ok_or_else(|| err(format!("bad timestamp `{}`", fields[0])))?;
            let kind: EventKind = fields[1].parse().map_err(err)?;
            let num = |s: &str, what: &str| -> Result<Option<u64>, ParseError> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse()
                        .map(Some)
                        .map_err(|_| err(format!("bad {what} `{s}`")))
                }
            };
            let cpu = num(fields[2], "cpu")?.map(|v| v as u32);
            let thread = num(fields[3], "thread")?.map(|v| v as u32);
            let task = num(fields[4], "task")?;
            let mut event = Event::new(time_ns, kind, 0);
            event.cpu = cpu;
            event.thread = thread;
            event.task = task;
            if kind == EventKind::Prediction {
                let mut parts = fields[5].split(';');
                let rt = parts
                    .next()
                    .and_then(|r| r.strip_prefix('r'))
                    .and_then(|r| r.parse::<u32>().ok())
                    .ok_or_else(|| err("prediction record without runtime".into()))?;
                event.runtime = rt;
                let mut contributions = Vec::new();
                for p in parts {
                    let (label, beta) = p
                        .split_once('=')
                        .ok_or_else(|| err(format!("bad contribution `{p}`")))?;
                    let beta: f64 = beta
                        .parse()
                        .map_err(|_| err(format!("bad contribution `{p}`")))?;
                    contributions.push((log.intern(rt, label), beta));
                }
                event.contributions = Some(contributions.into_boxed_slice());
            } else {
                event.runtime = match (task, thread) {
                    (Some(t), _) => runtime_of_task(t) as u32,
                    (None, Some(th)) if n_cpus > 0 => th / n_cpus as u32,
                    _ => 0,
                };
                if !fields[5].is_empty() {
                    event.task_type = Some(log.intern(event.runtime, fields[5]));
                }
            }
            log.events.push(event);
        }
        Ok(log)
    }

    fn intern(&mut self, runtime: u32, label: &str) -> u32 {
        let rt = runtime as usize;
        if self.labels.len() <= rt {
            self.labels.resize(rt + 1, Vec::new());
        }
        let labels = &mut self.labels[rt];
        match labels.iter().position(|l| l == label) {
            Some(i) => i as u32,
            None => {
                labels.push(label.to_string());
                (labels.len() - 1) as u32
            }
        }
    }

    /// Time of the last task end, in ns.
    pub fn makespan_ns(&self) -> u64 {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::End)
            .map(|e| e.time_ns)
            .max()
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> EventLog {
        let mut log = EventLog::new(2, vec![vec!["gemm".into(), "potrf".into()]]);
        log.record(Event::new(0, EventKind::Create, 0).task(0, 1));
        log.record(Event::new(0, EventKind::Ready, 0).task(0, 1));
        log.record(
            Event::new(1_500, EventKind::Start, 0)
                .cpu(1)
                .thread(1)
                .task(0, 1),
        );
        let mut p = Event::new(50_000, EventKind::Prediction, 0);
        p.task = Some(2);
        p.contributions = Some(vec![(0, 1.25), (1, 0.5)].into_boxed_slice());
        log.record(p);
        log.record(Event::new(60_007, EventKind::Park, 0).cpu(0).thread(0));
        log.record(
            Event::new(90_000, EventKind::End, 0)
                .cpu(1)
                .thread(1)
                .task(0, 1),
        );
        log
    }

    #[test]
    fn dump_format() {
        assert_eq!(
            sample().to_text(),
            "0.000,create,,,0,potrf\n\
             0.000,ready,,,0,potrf\n\
             1.500,start,1,1,0,potrf\n\
             50.000,prediction,,,2,r0;gemm=1.2500;potrf=0.5000\n\
             60.007,park,0,0,,\n\
             90.000,end,1,1,0,potrf\n"
        );
    }

    #[test]
    fn parse_round_trips_text() {
        let text = sample().to_text();
        let parsed = EventLog::parse(&text, 2).unwrap();
        assert_eq!(parsed.to_text(), text);
        assert_eq!(parsed.makespan_ns(), 90_000);
    }

    #[test]
    fn parse_reports_line() {
        let err = EventLog::parse("0.000,create,,,0,a\n1.0,bogus,,,,\n", 1).unwrap_err();
        assert_eq!(
            err,
            ParseError::Malformed {
                line: 2,
                message: "unknown event kind `bogus`".into()
            }
        );
    }

    proptest! {
        #[test]
        fn timestamps_round_trip(ns in 0u64..1u64 << 50) {
            prop_assert_eq!(parse_time(&fmt_time(ns)), Some(ns));
        }
    }
}
