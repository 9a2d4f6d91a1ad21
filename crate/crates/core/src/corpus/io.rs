//! Newline-delimited JSON ingestion and emission for post records.
//!
//! Ingest accepts minimally-shaped raw records (`post_id`, `account_id`,
//! `created_at`, `text`, `like_count`), derives hashtags, mentions, and
//! normalized link domains from the raw text, and leaves the text itself
//! untouched (`normalized: false`) so the reply filter can still see
//! leading @-handles.

use std::io::{BufRead, Write};

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::Deserialize;

use super::normalize::{extract_hashtags, extract_mentions, extract_urls, normalize_link};
use super::{CorpusError, FilterReport, MediaAsset, PostRecord};

#[derive(Debug, Deserialize)]
struct RawPost {
    post_id: String,
    account_id: String,
    created_at: String,
    text: String,
    like_count: u64,
    #[serde(default)]
    media: Vec<MediaAsset>,
}

/// Accepted timestamp shapes: RFC 3339 or `YYYY-MM-DD HH:MM:SS` (UTC).
/// Sub-second precision is truncated.
pub fn parse_timestamp(value: &str) -> Option<DateTime<Utc>> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(value) {
        return Some(dt.with_timezone(&Utc).with_nanosecond_zeroed());
    }
    if let Ok(naive) = NaiveDateTime::parse_from_str(value, "%Y-%m-%d %H:%M:%S") {
        return Some(naive.and_utc());
    }
    None
}

trait ZeroNanos {
    fn with_nanosecond_zeroed(self) -> Self;
}

impl ZeroNanos for DateTime<Utc> {
    fn with_nanosecond_zeroed(self) -> Self {
        use chrono::Timelike;
        self.with_nanosecond(0).unwrap_or(self)
    }
}

/// Per-record ingest problems; the offending record is skipped.
#[derive(Debug)]
pub struct RecordError {
    pub line: usize,
    pub reason: String,
}

/// Ingest result: parsed records plus the record-level errors encountered.
#[derive(Debug, Default)]
pub struct IngestOutcome {
    pub posts: Vec<PostRecord>,
    pub errors: Vec<RecordError>,
}

/// Ingest raw NDJSON posts. Duplicate `post_id`s abort the ingest with an
/// error naming both occurrences; malformed records are collected as
/// line-numbered errors and skipped.
pub fn ingest_posts<R: BufRead>(reader: R) -> Result<IngestOutcome, CorpusError> {
    let mut outcome = IngestOutcome::default();
    let mut seen: std::collections::HashMap<String, usize> = std::collections::HashMap::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawPost = match serde_json::from_str(&line) {
            Ok(raw) => raw,
            Err(e) => {
                outcome.errors.push(RecordError {
                    line: line_no,
                    reason: format!("malformed record: {e}"),
                });
                continue;
            }
        };
        let Some(created_at) = parse_timestamp(&raw.created_at) else {
            outcome.errors.push(RecordError {
                line: line_no,
                reason: format!("malformed timestamp: {:?}", raw.created_at),
            });
            continue;
        };
        if let Some(&first_line) = seen.get(&raw.post_id) {
            return Err(CorpusError::DuplicatePostId {
                post_id: raw.post_id,
                first_line,
                second_line: line_no,
            });
        }
        seen.insert(raw.post_id.clone(), line_no);

        let link_domains = extract_urls(&raw.text)
            .iter()
            .filter_map(|u| normalize_link(u))
            .collect();
        outcome.posts.push(PostRecord {
            hashtags: extract_hashtags(&raw.text),
            mentions: extract_mentions(&raw.text),
            link_domains,
            post_id: raw.post_id,
            account_id: raw.account_id,
            created_at,
            text: raw.text,
            media: raw.media,
            like_count: raw.like_count,
            like_percentile: None,
            normalized: false,
        });
    }
    Ok(outcome)
}

/// Read canonical `PostRecord` NDJSON (the output format of this module).
pub fn read_posts<R: BufRead>(reader: R) -> Result<Vec<PostRecord>, CorpusError> {
    let mut posts = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let post: PostRecord = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        posts.push(post);
    }
    Ok(posts)
}

/// Write records as NDJSON in canonical order.
pub fn write_posts<W: Write>(writer: &mut W, posts: &[PostRecord]) -> Result<(), CorpusError> {
    let mut sorted: Vec<&PostRecord> = posts.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.account_id, a.created_at, &a.post_id).cmp(&(&b.account_id, b.created_at, &b.post_id))
    });
    for post in sorted {
        serde_json::to_writer(&mut *writer, post)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Write a filter report as a single JSON document.
pub fn write_report<W: Write>(writer: &mut W, report: &FilterReport) -> Result<(), CorpusError> {
    serde_json::to_writer_pretty(&mut *writer, report)?;
    writer.write_all(b"\n")?;
    Ok(())
}
