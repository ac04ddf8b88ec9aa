//! Shape checks for every artifact a run writes, and timing-free digests
//! used to compare runs.

use serde_json::Value;

use crate::artifact::digest;
use crate::debate::Transcript;
use crate::nas::post_process;
use crate::report::parse_report;
use crate::runtime::JournalLine;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtifactKind {
    NasReport,
    Transcript,
    DebateSummary,
    Journal,
    Manifest,
}

impl ArtifactKind {
    /// Recognizes an artifact from its file name suffix.
    pub fn from_name(name: &str) -> Option<Self> {
        let table = [
            ("nas_report.json", Self::NasReport),
            ("transcript.json", Self::Transcript),
            ("transcript.partial.json", Self::Transcript),
            ("debate_summary.json", Self::DebateSummary),
            ("journal.jsonl", Self::Journal),
            ("manifest.json", Self::Manifest),
        ];
        table.iter().find(|(suffix, _)| name.ends_with(suffix)).map(|(_, k)| *k)
    }
}

const TIMING_KEYS: [&str; 6] = ["metadata", "started_at", "elapsed_seconds", "timing", "written_at", "retrieved_at"];

fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(map) => {
            for k in TIMING_KEYS {
                map.remove(k);
            }
            map.values_mut().for_each(strip_timing);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

fn normalize_journal_line(v: &mut Value) {
    strip_timing(v);
    if let Some(event) = v.get_mut("event").and_then(Value::as_object_mut) {
        if event.get("type").and_then(Value::as_str) == Some("artifact_written") {
            event.remove("digest");
            if let Some(Value::String(path)) = event.get_mut("path") {
                let base = std::path::Path::new(path.as_str())
                    .file_name()
                    .map(|f| f.to_string_lossy().into_owned())
                    .unwrap_or_default();
                *path = base;
            }
        }
    }
}

/// Digest of an artifact with clock-dependent fields removed. Non-JSON
/// content is digested as is.
pub fn content_digest(name: &str, bytes: &[u8]) -> String {
    let text = String::from_utf8_lossy(bytes);
    if name.ends_with(".jsonl") {
        let mut out = String::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match serde_json::from_str::<Value>(line) {
                Ok(mut v) => {
                    normalize_journal_line(&mut v);
                    out.push_str(&v.to_string());
                }
                Err(_) => out.push_str(line),
            }
            out.push('\n');
        }
        return digest(out.as_bytes());
    }
    match serde_json::from_slice::<Value>(bytes) {
        Ok(mut v) => {
            strip_timing(&mut v);
            digest(v.to_string().as_bytes())
        }
        Err(_) => digest(bytes),
    }
}

/// Checks `bytes` against the schema for `kind`. Returns every problem found.
pub fn check_artifact(kind: ArtifactKind, bytes: &[u8]) -> Result<(), Vec<String>> {
    let text = std::str::from_utf8(bytes).map_err(|e| vec![e.to_string()])?;
    match kind {
        ArtifactKind::Journal => {
            let problems: Vec<String> = text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .filter_map(|(i, l)| {
                    serde_json::from_str::<JournalLine>(l)
                        .err()
                        .map(|e| format!("line {}: {e}", i + 1))
                })
                .collect();
            if problems.is_empty() { Ok(()) } else { Err(problems) }
        }
        ArtifactKind::NasReport => {
            let report = post_process(text).map_err(|e| vec![e.to_string()])?;
            let value: Value = serde_json::from_str(text).map_err(|e| vec![e.to_string()])?;
            let mut problems = Vec::new();
            if report.metadata.is_none() {
                problems.push("metadata: missing".to_string());
            }
            if value.as_object().is_some_and(|o| o.len() != 2) {
                problems.push("top level must hold exactly \"Analysis Summary\" and \"metadata\"".into());
            }
            if problems.is_empty() { Ok(()) } else { Err(problems) }
        }
        ArtifactKind::Transcript => Transcript::from_json(text).map(|_| ()).map_err(|e| vec![e.to_string()]),
        ArtifactKind::DebateSummary => {
            let value: Value = serde_json::from_str(text).map_err(|e| vec![e.to_string()])?;
            parse_report(&value).map(|_| ()).map_err(|e| vec![e.to_string()])
        }
        ArtifactKind::Manifest => serde_json::from_str::<crate::orchestrator::Manifest>(text)
            .map(|_| ())
            .map_err(|e| vec![e.to_string()]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timing_does_not_change_content_digest() {
        let a = br#"{"x": 1, "metadata": {"started_at": "a"}, "steps": [{"elapsed_seconds": 1.5, "t": "s"}]}"#;
        let b = br#"{"x": 1, "metadata": {"started_at": "b"}, "steps": [{"elapsed_seconds": 9.0, "t": "s"}]}"#;
        assert_eq!(content_digest("r.json", a), content_digest("r.json", b));
        assert_ne!(content_digest("r.json", a), content_digest("r.json", br#"{"x": 2}"#));
    }

    #[test]
    fn journal_paths_reduce_to_file_names() {
        let a = br#"{"seq":0,"session":"s","event":{"type":"artifact_written","path":"/a/x_t.json","digest":"1"},"timing":{"at":"2025-01-01T00:00:00Z"}}"#;
        let b = br#"{"seq":0,"session":"s","event":{"type":"artifact_written","path":"/b/x_t.json","digest":"2"},"timing":{"at":"2026-01-01T00:00:00Z"}}"#;
        assert_eq!(content_digest("j.jsonl", a), content_digest("j.jsonl", b));
    }

    #[test]
    fn kinds_from_names() {
        assert_eq!(ArtifactKind::from_name("A_1_transcript.partial.json"), Some(ArtifactKind::Transcript));
        assert_eq!(ArtifactKind::from_name("A_1_debate_summary.json"), Some(ArtifactKind::DebateSummary));
        assert_eq!(ArtifactKind::from_name("notes.txt"), None);
    }
}
