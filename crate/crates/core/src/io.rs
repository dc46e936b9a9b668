//! On-disk formats.
//!
//! * Event logs: `events.csv` with header `t,v,g_w,g_u` plus a `meta.json`
//!   sidecar holding `K`, `n0`, the per-group initial counts and the
//!   generating configuration (informational only).
//! * Snapshots: a whitespace-separated edge list (two node ids per line) and a
//!   labels file (node id, group id per line). Lines starting with `#` or `%`
//!   are comments.
//! * Reports: canonical JSON with sorted keys and floats rounded to six
//!   significant digits.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{KpaError, Result};
use crate::events::{EventLog, EventRecord};
use crate::model::{GroupLabel, ModelParams};
use crate::simulator::SimConfig;

pub const EVENTS_FILE: &str = "events.csv";
pub const META_FILE: &str = "meta.json";
pub const STATE_FILE: &str = "state.json";
pub const EVENTS_HEADER: [&str; 4] = ["t", "v", "g_w", "g_u"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLogMeta {
    pub num_groups: usize,
    pub n0: u64,
    pub per_group_initial: Vec<u64>,
    #[serde(default)]
    pub params: Option<ModelParams>,
    #[serde(default)]
    pub sim: Option<SimConfig>,
}

impl EventLogMeta {
    pub fn for_log(log: &EventLog, sim: Option<&SimConfig>) -> Self {
        EventLogMeta {
            num_groups: log.num_groups(),
            n0: log.n0,
            per_group_initial: log.per_group_initial.clone(),
            params: log.params_hint.clone(),
            sim: sim.cloned(),
        }
    }
}

pub fn write_events_csv<W: Write>(log: &EventLog, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EVENTS_HEADER).map_err(csv_err)?;
    for r in &log.records {
        w.write_record([r.t.to_string(), r.v.to_string(), r.g_w.to_string(), r.g_u.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> KpaError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => KpaError::Io(io),
        other => KpaError::Parse { line, message: format!("{other:?}") },
    }
}

/// Parses an event CSV for a log with the given header fields.
pub fn read_events_csv<R: std::io::Read>(input: R, meta: &EventLogMeta) -> Result<EventLog> {
    let mut reader =
        csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(input);
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>() != EVENTS_HEADER {
        return Err(KpaError::Parse {
            line: 1,
            message: format!("expected header {}", EVENTS_HEADER.join(",")),
        });
    }
    let k = meta.num_groups;
    let mut log = EventLog::new(meta.per_group_initial.clone());
    if log.n0 != meta.n0 || log.num_groups() != k {
        return Err(KpaError::Parse { line: 0, message: "meta.json is inconsistent".into() });
    }
    log.params_hint = meta.params.clone();
    for row in reader.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| KpaError::Parse { line, message };
        if row.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", row.len())));
        }
        let int = |i: usize| -> Result<u64> {
            row[i].parse::<u64>().map_err(|_| bad(format!("field {} = {:?} is not an integer", EVENTS_HEADER[i], &row[i])))
        };
        let (t, v, gw, gu) = (int(0)?, int(1)?, int(2)?, int(3)?);
        let expected = log.records.len() as u64 + 1;
        if t != expected {
            return Err(bad(format!("t = {t}, expected {expected}")));
        }
        if v > 1 {
            return Err(bad(format!("v = {v} is not 0 or 1")));
        }
        let label = |g: u64| GroupLabel::new(g as u32, k).map_err(|e| bad(e.to_string()));
        log.records.push(EventRecord { t, v: v as u8, g_w: label(gw)?, g_u: label(gu)? });
    }
    Ok(log)
}

/// Writes `events.csv` and `meta.json` into `dir`.
pub fn write_event_log(dir: &Path, log: &EventLog, sim: Option<&SimConfig>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let file = fs::File::create(dir.join(EVENTS_FILE))?;
    write_events_csv(log, std::io::BufWriter::new(file))?;
    let meta = serde_json::to_value(EventLogMeta::for_log(log, sim))?;
    fs::write(dir.join(META_FILE), to_pretty_sorted(&meta)? + "\n")?;
    Ok(())
}

/// Resolves a directory or an `events.csv` path to `(events, meta)` paths.
pub fn event_log_paths(path: &Path) -> (PathBuf, PathBuf) {
    if path.is_dir() {
        (path.join(EVENTS_FILE), path.join(META_FILE))
    } else {
        let dir = path.parent().unwrap_or(Path::new("."));
        (path.to_path_buf(), dir.join(META_FILE))
    }
}

pub fn read_event_log(path: &Path) -> Result<EventLog> {
    let (events, meta_path) = event_log_paths(path);
    let meta: EventLogMeta = serde_json::from_slice(&fs::read(&meta_path)?)?;
    read_events_csv(fs::File::open(events)?, &meta)
}

fn data_lines(text: &str) -> impl Iterator<Item = (u64, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('%') {
            return None;
        }
        let fields = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
        Some((i as u64 + 1, fields))
    })
}

/// Ordered node pairs, one per line.
pub fn parse_edge_list(text: &str) -> Result<Vec<(String, String)>> {
    data_lines(text)
        .map(|(line, f)| {
            if f.len() < 2 {
                return Err(KpaError::Parse { line, message: "expected two node ids".into() });
            }
            Ok((f[0].to_string(), f[1].to_string()))
        })
        .collect()
}

/// Node labels with `K` and, when group ids are not positive integers, the
/// external names of groups `1..=K` in sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    pub labels: HashMap<String, GroupLabel>,
    pub num_groups: usize,
    pub group_names: Option<Vec<String>>,
}

pub fn parse_labels(text: &str) -> Result<Labels> {
    let mut raw = Vec::new();
    for (line, f) in data_lines(text) {
        if f.len() < 2 {
            return Err(KpaError::Parse { line, message: "expected node id and group id".into() });
        }
        raw.push((line, f[0].to_string(), f[1].to_string()));
    }
    let numeric: Option<Vec<u32>> = raw.iter().map(|r| r.2.parse::<u32>().ok().filter(|&g| g > 0)).collect();
    let (ids, num_groups, group_names) = match numeric {
        Some(ids) => {
            let k = ids.iter().copied().max().unwrap_or(0) as usize;
            (ids, k, None)
        }
        None => {
            let names: Vec<String> = raw.iter().map(|r| r.2.clone()).collect::<BTreeSet<_>>().into_iter().collect();
            let ids = raw
                .iter()
                .map(|r| names.binary_search(&r.2).expect("name collected above") as u32 + 1)
                .collect();
            let k = names.len();
            (ids, k, Some(names))
        }
    };
    let mut labels = HashMap::with_capacity(raw.len());
    for ((line, node, _), id) in raw.into_iter().zip(ids) {
        let g = GroupLabel::new(id, num_groups).map_err(|e| KpaError::Parse { line, message: e.to_string() })?;
        if labels.insert(node.clone(), g).is_some_and(|prev| prev != g) {
            return Err(KpaError::Parse { line, message: format!("node {node} labeled twice") });
        }
    }
    Ok(Labels { labels, num_groups, group_names })
}

/// Rounds every float to six significant digits.
pub fn round_floats(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("checked");
            if let Some(r) = serde_json::Number::from_f64(round_sig(x, 6)) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

pub fn round_sig(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", digits - 1, x).parse().unwrap_or(x)
}

/// Canonical report JSON: sorted keys, floats at six significant digits.
pub fn canonical_json<T: Serialize>(report: &T) -> Result<String> {
    let mut v = serde_json::to_value(report)?;
    round_floats(&mut v);
    to_pretty_sorted(&v)
}

fn to_pretty_sorted(v: &Value) -> Result<String> {
    // serde_json::Map is ordered by key without the preserve_order feature
    Ok(serde_json::to_string_pretty(v)?)
}

/// Left-aligned first column, right-aligned others.
pub fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate().take(cols) {
            width[i] = width[i].max(cell.len());
        }
    }
    let fmt_row = |cells: Vec<&str>| {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| if i == 0 { format!("{:<w$}", c, w = width[i]) } else { format!("{:>w$}", c, w = width[i]) })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = fmt_row(header.to_vec());
    out.push('\n');
    out.push_str(&width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    out.push('\n');
    for row in rows {
        out.push_str(&fmt_row(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

/// Six significant digits for table cells.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let r = round_sig(x, 6);
    let a = r.abs();
    if a != 0.0 && !(1e-4..1e6).contains(&a) {
        format!("{r:.5e}")
    } else {
        format!("{r}")
    }
}
