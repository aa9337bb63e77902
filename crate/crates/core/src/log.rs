//! Event logs: activities, traces, and the CSV / XES readers.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use quick_xml::events::{BytesStart, Event};
use quick_xml::{Reader, XmlVersion};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Markers reserved for the artificial start and end nodes of a DFG.
pub const START_MARKER: &str = "▷";
pub const END_MARKER: &str = "□";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogError {
    #[error("activity label is empty")]
    EmptyActivity,
    #[error("activity label {0:?} contains a reserved marker")]
    ReservedMarker(String),
    #[error("event log is empty")]
    EmptyLog,
    #[error("column {0:?} not found in header")]
    MissingColumn(String),
    #[error("line {line}: {reason}")]
    Row { line: u64, reason: String },
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("malformed XML at byte {offset}: {reason}")]
    Xml { offset: u64, reason: String },
    #[error("content is not valid UTF-8")]
    Encoding,
}

/// An activity label. Cloning is cheap.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Activity(Arc<str>);

impl Activity {
    /// Builds an activity from a raw label, trimming surrounding whitespace.
    pub fn new(label: &str) -> Result<Self, LogError> {
        let label = label.trim();
        if label.is_empty() {
            return Err(LogError::EmptyActivity);
        }
        if label.contains(START_MARKER) || label.contains(END_MARKER) {
            return Err(LogError::ReservedMarker(label.to_string()));
        }
        Ok(Activity(Arc::from(label)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Borrow<str> for Activity {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl Serialize for Activity {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Activity {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        Activity::new(&raw).map_err(serde::de::Error::custom)
    }
}

/// One process execution. May be empty.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trace(Vec<Activity>);

impl Trace {
    pub fn new(activities: Vec<Activity>) -> Self {
        Trace(activities)
    }

    /// Convenience constructor for tests and fixtures.
    ///
    /// # Panics
    /// If any label is not a valid activity.
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Self {
        Trace(
            labels
                .iter()
                .map(|l| Activity::new(l.as_ref()).expect("valid activity label"))
                .collect(),
        )
    }

    /// Keeps only the activities in `keep`, preserving order.
    pub fn project(&self, keep: &BTreeSet<Activity>) -> Trace {
        Trace(
            self.0
                .iter()
                .filter(|a| keep.contains(*a))
                .cloned()
                .collect(),
        )
    }

    pub fn into_inner(self) -> Vec<Activity> {
        self.0
    }
}

impl Deref for Trace {
    type Target = [Activity];

    fn deref(&self) -> &[Activity] {
        &self.0
    }
}

impl FromIterator<Activity> for Trace {
    fn from_iter<I: IntoIterator<Item = Activity>>(iter: I) -> Self {
        Trace(iter.into_iter().collect())
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(">")
    }
}

/// A multiset of traces.
///
/// Traces are kept in insertion order (case order for parsed files), but
/// equality is multiset equality.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(from = "Vec<Trace>", into = "Vec<Trace>")]
pub struct EventLog {
    traces: Vec<Trace>,
    alphabet: BTreeSet<Activity>,
}

impl EventLog {
    pub fn new(traces: Vec<Trace>) -> Self {
        let alphabet = traces.iter().flat_map(|t| t.iter().cloned()).collect();
        EventLog { traces, alphabet }
    }

    /// Builds a log from label slices; panics on invalid labels.
    pub fn from_labels<S: AsRef<str>>(traces: &[&[S]]) -> Self {
        EventLog::new(traces.iter().map(|t| Trace::from_labels(t)).collect())
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    /// Activities occurring in at least one trace.
    pub fn alphabet(&self) -> &BTreeSet<Activity> {
        &self.alphabet
    }

    pub fn trace_count(&self) -> usize {
        self.traces.len()
    }

    pub fn event_count(&self) -> usize {
        self.traces.iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    /// Distinct traces with their multiplicities.
    pub fn variants(&self) -> BTreeMap<&Trace, usize> {
        let mut out = BTreeMap::new();
        for t in &self.traces {
            *out.entry(t).or_insert(0) += 1;
        }
        out
    }

    /// Filters every trace to the activities in `keep`. Traces that become
    /// empty are kept.
    pub fn project(&self, keep: &BTreeSet<Activity>) -> EventLog {
        EventLog::new(self.traces.iter().map(|t| t.project(keep)).collect())
    }

    /// Writes the log as CSV with the default column names, one case per
    /// trace numbered from 1. Empty traces cannot be represented and are
    /// skipped.
    pub fn to_csv(&self) -> String {
        let cfg = CsvConfig::default();
        let mut out = format!("{},{}\n", cfg.case_column, cfg.activity_column);
        for (i, t) in self.traces.iter().enumerate() {
            for a in t.iter() {
                out.push_str(&format!("{},{}\n", i + 1, csv_field(a.as_str())));
            }
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl PartialEq for EventLog {
    fn eq(&self, other: &Self) -> bool {
        self.variants() == other.variants()
    }
}

impl Eq for EventLog {}

impl From<Vec<Trace>> for EventLog {
    fn from(traces: Vec<Trace>) -> Self {
        EventLog::new(traces)
    }
}

impl From<EventLog> for Vec<Trace> {
    fn from(log: EventLog) -> Self {
        log.traces
    }
}

impl FromIterator<Trace> for EventLog {
    fn from_iter<I: IntoIterator<Item = Trace>>(iter: I) -> Self {
        EventLog::new(iter.into_iter().collect())
    }
}

/// Column mapping for CSV input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvConfig {
    pub case_column: String,
    pub activity_column: String,
    /// Used for ordering when the column is present in the header; otherwise
    /// events keep file order.
    pub timestamp_column: Option<String>,
}

impl Default for CsvConfig {
    fn default() -> Self {
        CsvConfig {
            case_column: "case:concept:name".into(),
            activity_column: "concept:name".into(),
            timestamp_column: Some("time:timestamp".into()),
        }
    }
}

fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.naive_utc());
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(dt);
        }
    }
    if let Ok(dt) = DateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S%.f%:z") {
        return Some(dt.naive_utc());
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

/// Parses a CSV event table, grouping rows into one trace per case.
///
/// Cases appear in order of first occurrence. Within a case, events are
/// sorted by timestamp when the timestamp column exists (stable, so ties keep
/// file order), otherwise they keep file order.
pub fn parse_csv(bytes: &[u8], config: &CsvConfig) -> Result<EventLog, LogError> {
    let text = std::str::from_utf8(bytes).map_err(|_| LogError::Encoding)?;
    if text.trim().is_empty() {
        return Err(LogError::EmptyLog);
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| LogError::Csv(e.to_string()))?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let case_idx = column(&config.case_column)
        .ok_or_else(|| LogError::MissingColumn(config.case_column.clone()))?;
    let act_idx = column(&config.activity_column)
        .ok_or_else(|| LogError::MissingColumn(config.activity_column.clone()))?;
    let ts_idx = config.timestamp_column.as_deref().and_then(column);

    let mut order: Vec<String> = Vec::new();
    let mut cases: HashMap<String, Vec<(Option<NaiveDateTime>, Activity)>> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| match e.position() {
            Some(p) => LogError::Row {
                line: p.line(),
                reason: e.to_string(),
            },
            None => LogError::Csv(e.to_string()),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row_err = |reason: String| LogError::Row { line, reason };
        let case = record
            .get(case_idx)
            .ok_or_else(|| row_err("missing case identifier".into()))?
            .to_string();
        let label = record
            .get(act_idx)
            .ok_or_else(|| row_err("missing activity".into()))?;
        let activity = Activity::new(label).map_err(|e| row_err(e.to_string()))?;
        let ts = match ts_idx {
            Some(i) => {
                let raw = record.get(i).unwrap_or("");
                Some(
                    parse_timestamp(raw)
                        .ok_or_else(|| row_err(format!("unparsable timestamp {raw:?}")))?,
                )
            }
            None => None,
        };
        let events = cases.entry(case.clone()).or_insert_with(|| {
            order.push(case);
            Vec::new()
        });
        events.push((ts, activity));
    }
    if order.is_empty() {
        return Err(LogError::EmptyLog);
    }
    let traces = order
        .into_iter()
        .map(|case| {
            let mut events = cases.remove(&case).unwrap_or_default();
            events.sort_by_key(|e| e.0);
            events.into_iter().map(|(_, a)| a).collect()
        })
        .collect();
    Ok(EventLog::new(traces))
}

/// Result of reading a XES document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct XesImport {
    pub log: EventLog,
    /// Events dropped because they carried no `concept:name` string.
    pub skipped_events: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum XesScope {
    Log,
    Trace,
    Event,
    Other,
}

/// Parses the minimal XES subset: `log` → `trace`* → `event`*, taking the
/// activity from each event's `<string key="concept:name">` attribute.
pub fn parse_xes(bytes: &[u8]) -> Result<XesImport, LogError> {
    let mut reader = Reader::from_reader(bytes);
    let mut buf = Vec::new();
    let mut stack: Vec<XesScope> = Vec::new();
    let mut traces = Vec::new();
    let mut current: Option<Vec<Activity>> = None;
    let mut event_label: Option<Activity> = None;
    let mut skipped = 0usize;
    let mut seen_root = false;

    let xml_err = |offset: u64, reason: String| LogError::Xml { offset, reason };

    loop {
        let offset = reader.buffer_position();
        let event = reader
            .read_event_into(&mut buf)
            .map_err(|e| xml_err(reader.error_position(), e.to_string()))?;
        match event {
            Event::Start(ref start) | Event::Empty(ref start) => {
                let is_empty = matches!(event, Event::Empty(_));
                let local = start.local_name();
                let name = local.into_inner();
                let parent = stack.last().copied();
                let scope = match (parent, name) {
                    (None, "log") => {
                        seen_root = true;
                        XesScope::Log
                    }
                    (None, other) => {
                        return Err(xml_err(
                            offset,
                            format!("expected <log> root, found <{}>", other),
                        ))
                    }
                    (Some(XesScope::Log), "trace") => {
                        current = Some(Vec::new());
                        XesScope::Trace
                    }
                    (Some(XesScope::Trace), "event") => {
                        event_label = None;
                        XesScope::Event
                    }
                    (Some(XesScope::Event), "string") => {
                        if let Some(label) = concept_name(start, offset)? {
                            let activity = Activity::new(&label)
                                .map_err(|e| xml_err(offset, e.to_string()))?;
                            event_label = Some(activity);
                        }
                        XesScope::Other
                    }
                    _ => XesScope::Other,
                };
                if is_empty {
                    close_scope(
                        scope,
                        &mut current,
                        &mut event_label,
                        &mut traces,
                        &mut skipped,
                    );
                } else {
                    stack.push(scope);
                }
            }
            Event::End(_) => {
                let scope = stack
                    .pop()
                    .ok_or_else(|| xml_err(offset, "unbalanced closing tag".into()))?;
                close_scope(
                    scope,
                    &mut current,
                    &mut event_label,
                    &mut traces,
                    &mut skipped,
                );
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if !stack.is_empty() {
        return Err(xml_err(
            reader.buffer_position(),
            "unexpected end of document".into(),
        ));
    }
    if !seen_root {
        return Err(xml_err(0, "no <log> element".into()));
    }
    if traces.is_empty() {
        return Err(LogError::EmptyLog);
    }
    Ok(XesImport {
        log: EventLog::new(traces),
        skipped_events: skipped,
    })
}

fn close_scope(
    scope: XesScope,
    current: &mut Option<Vec<Activity>>,
    event_label: &mut Option<Activity>,
    traces: &mut Vec<Trace>,
    skipped: &mut usize,
) {
    match scope {
        XesScope::Event => match (event_label.take(), current.as_mut()) {
            (Some(a), Some(events)) => events.push(a),
            _ => *skipped += 1,
        },
        XesScope::Trace => {
            if let Some(events) = current.take() {
                traces.push(Trace::new(events));
            }
        }
        XesScope::Log | XesScope::Other => {}
    }
}

fn concept_name(start: &BytesStart<'_>, offset: u64) -> Result<Option<String>, LogError> {
    let mut key = None;
    let mut value = None;
    for attr in start.attributes() {
        let attr = attr.map_err(|e| LogError::Xml {
            offset,
            reason: e.to_string(),
        })?;
        let text = attr
            .normalized_value(XmlVersion::Implicit1_0)
            .map_err(|e| LogError::Xml {
                offset,
                reason: e.to_string(),
            })?
            .into_owned();
        match attr.key.local_name().into_inner() {
            "key" => key = Some(text),
            "value" => value = Some(text),
            _ => {}
        }
    }
    Ok(match key.as_deref() {
        Some("concept:name") => value,
        _ => None,
    })
}
