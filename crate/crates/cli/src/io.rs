//! File formats: strict CSV readers for the six input schemas and
//! deterministic JSON/CSV writers for reports.
//!
//! Readers fail fast with the file and 1-based line number of the first bad
//! row. Schema problems are wrapped in [`SchemaViolation`] so the binary can
//! map them to the dedicated exit code.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

use notefx::cascade::RepostEvent;
use notefx::model::{MetricKind, NoteStatus, NoteStatusEvent, RawObservation};
use notefx::time::TimestampMs;

/// Marker error for malformed input rows; mapped to exit code 2.
#[derive(Debug)]
pub struct SchemaViolation(pub String);

impl fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "schema violation: {}", self.0)
    }
}

impl std::error::Error for SchemaViolation {}

pub fn schema_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(SchemaViolation(msg.into()).into())
}

/// One parsed posts.csv row.
#[derive(Debug, Clone)]
pub struct PostRow {
    pub post_id: String,
    pub created_at: TimestampMs,
    pub author_follower_count: f64,
    pub line: u64,
}

/// One parsed labels.csv row.
#[derive(Debug, Clone)]
pub struct LabelRow {
    pub post_id: String,
    pub key: String,
    pub value: String,
    pub line: u64,
}

/// A note status event plus the resolved note text, if the row referenced one.
#[derive(Debug, Clone)]
pub struct NoteEventRow {
    pub event: NoteStatusEvent,
    pub text: Option<String>,
    pub line: u64,
}

struct CsvTable {
    path: PathBuf,
    headers: Vec<String>,
    records: Vec<(u64, csv::StringRecord)>,
}

impl CsvTable {
    /// Reads a CSV file and checks that its header is exactly `expected`
    /// (order-insensitive, no extras, no duplicates).
    fn open(path: &Path, expected: &[&str]) -> Result<CsvTable> {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(BufReader::new(file));

        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| SchemaViolation(format!("{}: {e}", path.display())))?
            .iter()
            .map(|h| h.to_string())
            .collect();
        for want in expected {
            if !headers.iter().any(|h| h == want) {
                return schema_err(format!(
                    "{}: missing column {want:?} (found {headers:?})",
                    path.display()
                ));
            }
        }
        for found in &headers {
            if !expected.contains(&found.as_str()) {
                return schema_err(format!(
                    "{}: unexpected column {found:?}",
                    path.display()
                ));
            }
        }
        if headers.len() != expected.len() {
            return schema_err(format!("{}: duplicate column in header", path.display()));
        }

        let mut records = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| SchemaViolation(format!("{}: {e}", path.display())))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() != headers.len() {
                return schema_err(format!(
                    "{} line {line}: expected {} fields, found {}",
                    path.display(),
                    headers.len(),
                    rec.len()
                ));
            }
            records.push((line, rec));
        }
        Ok(CsvTable {
            path: path.to_path_buf(),
            headers,
            records,
        })
    }

    fn idx(&self, name: &str) -> usize {
        self.headers.iter().position(|h| h == name).unwrap()
    }
}

struct Row<'a> {
    table: &'a CsvTable,
    rec: &'a csv::StringRecord,
    line: u64,
}

impl<'a> Row<'a> {
    fn str(&self, col: &str) -> &'a str {
        &self.rec[self.table.idx(col)]
    }

    fn nonempty(&self, col: &str) -> Result<&'a str> {
        let v = self.str(col);
        if v.is_empty() {
            return schema_err(format!(
                "{} line {}: empty {col}",
                self.table.path.display(),
                self.line
            ));
        }
        Ok(v)
    }

    fn f64(&self, col: &str) -> Result<f64> {
        let raw = self.nonempty(col)?;
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => schema_err(format!(
                "{} line {}: {col} must be a finite number, got {raw:?}",
                self.table.path.display(),
                self.line
            )),
        }
    }

    fn u64(&self, col: &str) -> Result<u64> {
        let raw = self.nonempty(col)?;
        raw.parse::<u64>().map_or_else(
            |_| {
                schema_err(format!(
                    "{} line {}: {col} must be a non-negative integer, got {raw:?}",
                    self.table.path.display(),
                    self.line
                ))
            },
            Ok,
        )
    }

    fn timestamp(&self, col: &str) -> Result<TimestampMs> {
        let raw = self.nonempty(col)?;
        TimestampMs::parse_iso(raw).map_err(|e| {
            SchemaViolation(format!(
                "{} line {}: bad {col}: {e}",
                self.table.path.display(),
                self.line
            ))
            .into()
        })
    }
}

fn rows(table: &CsvTable) -> impl Iterator<Item = Row<'_>> {
    table.records.iter().map(move |(line, rec)| Row {
        table,
        rec,
        line: *line,
    })
}

pub fn read_posts(path: &Path) -> Result<Vec<PostRow>> {
    let table = CsvTable::open(path, &["post_id", "created_at", "author_follower_count"])?;
    let mut out = Vec::with_capacity(table.records.len());
    for row in rows(&table) {
        let count = row.f64("author_follower_count")?;
        if count < 0.0 {
            return schema_err(format!(
                "{} line {}: author_follower_count must be non-negative",
                path.display(),
                row.line
            ));
        }
        out.push(PostRow {
            post_id: row.nonempty("post_id")?.to_string(),
            created_at: row.timestamp("created_at")?,
            author_follower_count: count,
            line: row.line,
        });
    }
    Ok(out)
}

pub fn read_observations(path: &Path) -> Result<Vec<(RawObservation, u64)>> {
    let table = CsvTable::open(path, &["post_id", "metric", "observed_at", "value"])?;
    let mut out = Vec::with_capacity(table.records.len());
    for row in rows(&table) {
        let metric_raw = row.nonempty("metric")?;
        let Some(metric) = MetricKind::parse(metric_raw) else {
            return schema_err(format!(
                "{} line {}: unknown metric {metric_raw:?}",
                path.display(),
                row.line
            ));
        };
        out.push((
            RawObservation {
                post_id: row.nonempty("post_id")?.to_string(),
                metric,
                observed_at: row.timestamp("observed_at")?,
                value: row.f64("value")?,
            },
            row.line,
        ));
    }
    Ok(out)
}

/// Reads note events. `note_text_ref` is a path relative to the CSV's own
/// directory; empty means the note text is unknown. Referenced files must
/// exist.
pub fn read_note_events(path: &Path) -> Result<Vec<NoteEventRow>> {
    let table = CsvTable::open(
        path,
        &["post_id", "note_id", "status", "at", "note_text_ref"],
    )?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::with_capacity(table.records.len());
    for row in rows(&table) {
        let status_raw = row.nonempty("status")?;
        let Some(status) = NoteStatus::parse(status_raw) else {
            return schema_err(format!(
                "{} line {}: unknown note status {status_raw:?}",
                path.display(),
                row.line
            ));
        };
        let text_ref = row.str("note_text_ref");
        let text = if text_ref.is_empty() {
            None
        } else {
            let text_path = base.join(text_ref);
            match std::fs::read_to_string(&text_path) {
                Ok(t) => Some(t),
                Err(e) => {
                    return schema_err(format!(
                        "{} line {}: note_text_ref {text_ref:?} unreadable ({e})",
                        path.display(),
                        row.line
                    ))
                }
            }
        };
        out.push(NoteEventRow {
            event: NoteStatusEvent {
                post_id: row.nonempty("post_id")?.to_string(),
                note_id: row.nonempty("note_id")?.to_string(),
                at: row.timestamp("at")?,
                status,
            },
            text,
            line: row.line,
        });
    }
    Ok(out)
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRow>> {
    let table = CsvTable::open(path, &["post_id", "key", "value"])?;
    let mut out = Vec::with_capacity(table.records.len());
    for row in rows(&table) {
        out.push(LabelRow {
            post_id: row.nonempty("post_id")?.to_string(),
            key: row.nonempty("key")?.to_string(),
            value: row.nonempty("value")?.to_string(),
            line: row.line,
        });
    }
    Ok(out)
}

pub fn read_reposts(path: &Path) -> Result<Vec<(RepostEvent, u64)>> {
    let table = CsvTable::open(path, &["root_post_id", "reposter_id", "at"])?;
    let mut out = Vec::with_capacity(table.records.len());
    for row in rows(&table) {
        out.push((
            RepostEvent {
                root_post: row.nonempty("root_post_id")?.to_string(),
                reposter: row.u64("reposter_id")?,
                at: row.timestamp("at")?,
            },
            row.line,
        ));
    }
    Ok(out)
}

pub fn read_follows(path: &Path) -> Result<Vec<(u64, u64)>> {
    let table = CsvTable::open(path, &["follower_id", "followee_id"])?;
    let mut out = Vec::with_capacity(table.records.len());
    for row in rows(&table) {
        out.push((row.u64("follower_id")?, row.u64("followee_id")?));
    }
    Ok(out)
}

/// Writes pretty-printed JSON with a trailing newline. Pretty layout keeps
/// reports diffable; content is deterministic because every map in them is a
/// BTreeMap and no timestamps or hostnames are recorded.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .with_context(|| format!("serializing {}", path.display()))?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let value = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| SchemaViolation(format!("{}: {e}", path.display())))?;
    Ok(value)
}

/// CSV writer that owns header emission and flushes on finish.
pub struct CsvOut {
    path: PathBuf,
    wtr: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    pub fn create(path: &Path, header: &[&str]) -> Result<CsvOut> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut wtr = csv::Writer::from_writer(BufWriter::new(file));
        wtr.write_record(header)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(CsvOut {
            path: path.to_path_buf(),
            wtr,
        })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.wtr
            .write_record(fields)
            .with_context(|| format!("writing {}", self.path.display()))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.wtr
            .flush()
            .with_context(|| format!("flushing {}", self.path.display()))?;
        Ok(())
    }
}

/// Shortest-roundtrip decimal for report CSVs; `Display` on f64 is exact and
/// deterministic. Empty string for absent optionals.
pub fn num(v: f64) -> String {
    v.to_string()
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Groups label rows into per-post annotation sets. Multi-valued keys repeat
/// rows; single-valued keys must not conflict.
pub fn labels_by_post(
    rows: &[LabelRow],
    path: &Path,
) -> Result<BTreeMap<String, notefx::model::Labels>> {
    let mut out: BTreeMap<String, notefx::model::Labels> = BTreeMap::new();
    for row in rows {
        let labels = out.entry(row.post_id.clone()).or_default();
        match row.key.as_str() {
            "partisanship" => {
                set_single(&mut labels.partisanship, row, path)?;
            }
            "media_type" => {
                set_single(&mut labels.media_type, row, path)?;
            }
            "accuracy_concern" => {
                if !labels.accuracy_concerns.contains(&row.value) {
                    labels.accuracy_concerns.push(row.value.clone());
                }
            }
            other => {
                return schema_err(format!(
                    "{} line {}: unknown label key {other:?}",
                    path.display(),
                    row.line
                ));
            }
        }
    }
    for labels in out.values_mut() {
        labels.accuracy_concerns.sort();
    }
    Ok(out)
}

fn set_single(slot: &mut Option<String>, row: &LabelRow, path: &Path) -> Result<()> {
    match slot {
        Some(existing) if *existing != row.value => schema_err(format!(
            "{} line {}: conflicting {} for post {} ({existing:?} vs {:?})",
            path.display(),
            row.line,
            row.key,
            row.post_id,
            row.value
        )),
        _ => {
            *slot = Some(row.value.clone());
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(dir: &Path, name: &str, content: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, content).unwrap();
        p
    }

    #[test]
    fn posts_round_trip_and_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            dir.path(),
            "posts.csv",
            "post_id,created_at,author_follower_count\n\
             p1,2023-01-01T00:00:00.000Z,120\n\
             p2,2023-01-02T06:30:00.000Z,0\n",
        );
        let rows = read_posts(&p).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].post_id, "p1");
        assert_eq!(rows[1].line, 3);
        assert_eq!(rows[0].created_at.to_iso(), "2023-01-01T00:00:00.000Z");
    }

    #[test]
    fn bad_timestamp_names_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            dir.path(),
            "posts.csv",
            "post_id,created_at,author_follower_count\np1,not-a-time,5\n",
        );
        let err = read_posts(&p).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("line 2"), "{msg}");
        assert!(err.downcast_ref::<SchemaViolation>().is_some());
    }

    #[test]
    fn unknown_column_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            dir.path(),
            "posts.csv",
            "post_id,created_at,author_follower_count,extra\np1,2023-01-01T00:00:00Z,5,x\n",
        );
        assert!(read_posts(&p).is_err());
    }

    #[test]
    fn observation_metric_is_validated() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            dir.path(),
            "obs.csv",
            "post_id,metric,observed_at,value\np1,sparkles,2023-01-01T00:00:00Z,3\n",
        );
        let err = read_observations(&p).unwrap_err();
        assert!(format!("{err}").contains("sparkles"));
    }

    #[test]
    fn note_text_ref_resolves_relative() {
        let dir = tempfile::tempdir().unwrap();
        write_tmp(dir.path(), "n1.txt", "context added");
        let p = write_tmp(
            dir.path(),
            "note_events.csv",
            "post_id,note_id,status,at,note_text_ref\n\
             p1,n1,helpful,2023-01-01T05:00:00Z,n1.txt\n\
             p1,n1,needs_more_ratings,2023-01-01T01:00:00Z,\n",
        );
        let rows = read_note_events(&p).unwrap();
        assert_eq!(rows[0].text.as_deref(), Some("context added"));
        assert_eq!(rows[1].text, None);
        assert_eq!(rows[1].event.status, NoteStatus::NeedsMoreRatings);
    }

    #[test]
    fn missing_note_text_file_is_schema_violation() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            dir.path(),
            "note_events.csv",
            "post_id,note_id,status,at,note_text_ref\np1,n1,helpful,2023-01-01T05:00:00Z,gone.txt\n",
        );
        let err = read_note_events(&p).unwrap_err();
        assert!(err.downcast_ref::<SchemaViolation>().is_some());
    }

    #[test]
    fn labels_group_multi_and_reject_conflicts() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            dir.path(),
            "labels.csv",
            "post_id,key,value\n\
             p1,partisanship,left\n\
             p1,accuracy_concern,factual_error\n\
             p1,accuracy_concern,missing_context\n",
        );
        let rows = read_labels(&p).unwrap();
        let by_post = labels_by_post(&rows, &p).unwrap();
        let l = &by_post["p1"];
        assert_eq!(l.partisanship.as_deref(), Some("left"));
        assert_eq!(l.accuracy_concerns.len(), 2);

        let p2 = write_tmp(
            dir.path(),
            "labels2.csv",
            "post_id,key,value\np1,media_type,text\np1,media_type,video\n",
        );
        let rows2 = read_labels(&p2).unwrap();
        assert!(labels_by_post(&rows2, &p2).is_err());
    }

    #[test]
    fn follows_parse_user_ids() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            dir.path(),
            "follows.csv",
            "follower_id,followee_id\n10,3\n4,10\n",
        );
        assert_eq!(read_follows(&p).unwrap(), vec![(10, 3), (4, 10)]);
    }
}
