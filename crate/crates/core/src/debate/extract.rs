//! Pulls citations, factor mentions, questions and falsifiability notes out of
//! free-form debate text.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::guideline::{FactorId, Fingerprint};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Citation {
    pub date: Option<String>,
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    /// Set when the speaker marked the citation as coming from a web search.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub web: bool,
}

impl Citation {
    pub fn new(date: Option<&str>, source: Option<&str>) -> Self {
        let clean = |s: Option<&str>| {
            s.map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
        };
        Self {
            date: clean(date),
            source: clean(source),
            value: None,
            web: false,
        }
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint::of(
            self.date.as_deref(),
            self.source.as_deref(),
            self.value.as_deref(),
        )
    }

    /// `(date, source)` key used for conservation checks.
    pub fn key(&self) -> (Option<String>, Option<String>) {
        (self.date.clone(), self.source.clone())
    }

    pub fn render(&self) -> String {
        format!(
            "({}, {})",
            self.date.as_deref().unwrap_or("undated"),
            self.source.as_deref().unwrap_or("unknown source")
        )
    }
}

/// Everything the validator and the aggregator need from one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Structure {
    pub citations: Vec<Citation>,
    /// Byte offset of each citation in the text; `None` for sidecar entries.
    pub citation_offsets: Vec<Option<usize>>,
    /// Distinct factors in first-mention order, sidecar-only factors last.
    pub factors: Vec<FactorId>,
    /// Every factor mention with its byte offset, in text order.
    pub mentions: Vec<(usize, FactorId)>,
    pub question_count: usize,
    pub falsifiability_notes: Option<String>,
    /// Characters of prose, excluding any sidecar block.
    pub body_chars: usize,
    pub sentences: Vec<Range<usize>>,
    /// The text with the sidecar block blanked out.
    pub body: String,
}

const DATE: &str = r"(?:\d{4}[-./]\d{1,2}[-./]\d{1,2}|\d{4}[-./]\d{1,2}|\d{4}년(?:\s?\d{1,2}월)?(?:\s?\d{1,2}일)?|(?:Jan|Feb|Mar|Apr|May|Jun|Jul|Aug|Sep|Sept|Oct|Nov|Dec)[a-z]*\.?\s\d{4}|(?:19|20)\d{2})";

struct Patterns {
    sidecar: Regex,
    source_quoted: Regex,
    source_plain: Regex,
    date_source: Regex,
    source_date: Regex,
    undated_source: Regex,
    bare_date: Regex,
    date_any: Regex,
    falsifiability: Regex,
    factors: Regex,
    factor_lookup: HashMap<String, FactorId>,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| {
        let mut lookup = HashMap::new();
        let mut phrases: Vec<String> = Vec::new();
        for id in FactorId::ALL {
            let spec = id.spec();
            for phrase in spec
                .aliases
                .iter()
                .map(|a| a.to_string())
                .chain([spec.name.to_lowercase(), id.as_str().to_string()])
            {
                if lookup.insert(phrase.clone(), id).is_none() {
                    phrases.push(phrase);
                }
            }
        }
        phrases.sort_by_key(|p| std::cmp::Reverse(p.len()));
        let alternation = phrases
            .iter()
            .map(|p| {
                let escaped = regex::escape(p).replace(' ', r"\s+");
                if p.is_ascii() {
                    format!(r"\b{escaped}")
                } else {
                    escaped
                }
            })
            .collect::<Vec<_>>()
            .join("|");
        Patterns {
            sidecar: Regex::new(r"(?s)```sidecar[^\n]*\n(.*?)```").unwrap(),
            source_quoted: Regex::new(
                r#"(?i)(?:\bsource|출처)\s*[:：]\s*(?:'([^'\n]*)'|"([^"\n]*)"|‘([^’\n]*)’|“([^”\n]*)”)"#,
            )
            .unwrap(),
            source_plain: Regex::new(r"(?i)(?:\bsource|출처)\s*[:：]\s*([^\n]*?)\s*(?:\.\s|\.$|\n|$)")
                .unwrap(),
            date_source: Regex::new(&format!(
                r"[(\[]\s*({DATE})\s*[,;]\s*([^()\[\]\n]*?)\s*[)\]]"
            ))
            .unwrap(),
            source_date: Regex::new(&format!(
                r"[(\[]\s*([^()\[\],;\n]*?\pL[^()\[\],;\n]*?)\s*[,;]\s*({DATE})\s*[)\]]"
            ))
            .unwrap(),
            undated_source: Regex::new(
                r"(?i)[(\[]\s*(?:n\.?\s?d\.?|undated|date unknown)\s*[,;]\s*([^()\[\]\n]*?)\s*[)\]]",
            )
            .unwrap(),
            bare_date: Regex::new(&format!(r"[(\[]\s*({DATE})\s*[)\]]")).unwrap(),
            date_any: Regex::new(DATE).unwrap(),
            falsifiability: Regex::new(
                r"(?im)^\s*(?:[-*]\s*)?(?:falsifiability|falsifiable if|counter-condition|반증 조건|반증)\s*[:：]?\s*(.+?)\s*$",
            )
            .unwrap(),
            factors: Regex::new(&format!("(?i)(?:{alternation})")).unwrap(),
            factor_lookup: lookup,
        }
    })
}

/// Distinct factors mentioned in `text`, in order of first mention.
pub fn detect_factors(text: &str) -> Vec<FactorId> {
    let mut out = Vec::new();
    for (_, f) in factor_mentions(text) {
        if !out.contains(&f) {
            out.push(f);
        }
    }
    out
}

fn factor_mentions(text: &str) -> Vec<(usize, FactorId)> {
    let p = patterns();
    p.factors
        .find_iter(text)
        .filter_map(|m| {
            let norm = m
                .as_str()
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" ")
                .to_lowercase();
            p.factor_lookup.get(&norm).map(|&f| (m.start(), f))
        })
        .collect()
}

/// Overwrites a byte range with spaces so later patterns skip it while
/// offsets stay valid.
fn blank(buf: &mut String, range: Range<usize>) {
    let spaces = " ".repeat(range.len());
    buf.replace_range(range, &spaces);
}

#[derive(Deserialize, Default)]
struct Sidecar {
    #[serde(default)]
    citations: Vec<SidecarCitation>,
    #[serde(default)]
    factors: Vec<String>,
    #[serde(default)]
    falsifiability: Option<String>,
}

#[derive(Deserialize)]
struct SidecarCitation {
    date: Option<String>,
    source: Option<String>,
    #[serde(default)]
    value: Option<serde_json::Value>,
    #[serde(default)]
    origin: Option<String>,
}

pub fn extract_structure(text: &str) -> Structure {
    let p = patterns();
    let mut body = text.to_string();
    let mut sidecar = Sidecar::default();
    let sidecar_ranges: Vec<_> = p.sidecar.captures_iter(text).collect();
    for cap in &sidecar_ranges {
        if let Ok(sc) = serde_json::from_str::<Sidecar>(cap[1].trim()) {
            sidecar.citations.extend(sc.citations);
            sidecar.factors.extend(sc.factors);
            if sc.falsifiability.is_some() {
                sidecar.falsifiability = sc.falsifiability;
            }
        }
    }
    for cap in sidecar_ranges.iter().rev() {
        blank(&mut body, cap.get(0).unwrap().range());
    }

    let mut found: Vec<(usize, Citation)> = Vec::new();
    let mut scan = body.clone();

    for cap in p.source_quoted.captures_iter(&body) {
        let whole = cap.get(0).unwrap();
        let inner = (1..=4).find_map(|i| cap.get(i)).map_or("", |m| m.as_str());
        found.push((whole.start(), source_field(inner)));
        blank(&mut scan, whole.range());
    }
    let snapshot = scan.clone();
    for cap in p.source_plain.captures_iter(&snapshot) {
        let whole = cap.get(1).unwrap();
        let start = cap.get(0).unwrap().start();
        found.push((start, source_field(whole.as_str())));
        blank(&mut scan, start..whole.end());
    }
    for re_kind in 0..4 {
        let snapshot = scan.clone();
        let re = match re_kind {
            0 => &p.date_source,
            1 => &p.source_date,
            2 => &p.undated_source,
            _ => &p.bare_date,
        };
        for cap in re.captures_iter(&snapshot) {
            let whole = cap.get(0).unwrap();
            let c = match re_kind {
                0 => Citation::new(Some(&cap[1]), Some(&cap[2])),
                1 => Citation::new(Some(&cap[2]), Some(&cap[1])),
                2 => Citation::new(None, Some(&cap[1])),
                _ => Citation::new(Some(&cap[1]), None),
            };
            found.push((whole.start(), c));
            blank(&mut scan, whole.range());
        }
    }
    found.sort_by_key(|(at, _)| *at);

    let mut citations = Vec::new();
    let mut citation_offsets = Vec::new();
    for (at, c) in found {
        citations.push(c);
        citation_offsets.push(Some(at));
    }
    for sc in sidecar.citations {
        let mut c = Citation::new(sc.date.as_deref(), sc.source.as_deref());
        c.value = sc.value.and_then(|v| match v {
            serde_json::Value::Null => None,
            serde_json::Value::String(s) => Some(s),
            other => Some(other.to_string()),
        });
        c.web = sc
            .origin
            .is_some_and(|o| o.eq_ignore_ascii_case("web") || o.eq_ignore_ascii_case("web_search"));
        citations.push(c);
        citation_offsets.push(None);
    }

    // Factor names inside citations (e.g. a source titled "Search Trend
    // Report") still count as mentions; only the sidecar is excluded.
    let mentions = factor_mentions(&body);
    let mut factors = Vec::new();
    for (_, f) in &mentions {
        if !factors.contains(f) {
            factors.push(*f);
        }
    }
    for label in &sidecar.factors {
        if let Some(f) = FactorId::parse_label(label) {
            if !factors.contains(&f) {
                factors.push(f);
            }
        }
    }

    let mut notes: Vec<String> = p
        .falsifiability
        .captures_iter(&body)
        .map(|c| c[1].to_string())
        .collect();
    if let Some(f) = sidecar.falsifiability.filter(|f| !f.trim().is_empty()) {
        if !notes.contains(&f) {
            notes.push(f);
        }
    }

    Structure {
        citations,
        citation_offsets,
        factors,
        mentions,
        question_count: count_questions(&body),
        falsifiability_notes: (!notes.is_empty()).then(|| notes.join(" / ")),
        body_chars: body.trim_end().chars().count(),
        sentences: sentence_spans(&body),
        body,
    }
}

/// Interprets the contents of a `Source: ...` field. An embedded date is
/// split off; an empty field yields a citation with neither part.
fn source_field(inner: &str) -> Citation {
    let p = patterns();
    let inner = inner.trim();
    match p.date_any.find(inner) {
        Some(d) => {
            let mut source = format!("{}{}", &inner[..d.start()], &inner[d.end()..]);
            source = source
                .replace("()", "")
                .replace("[]", "")
                .trim()
                .trim_end_matches([',', ';', '-'])
                .trim()
                .to_string();
            Citation::new(Some(d.as_str()), Some(&source))
        }
        None => Citation::new(None, Some(inner)),
    }
}

/// Sentence-final question marks; a run like `??` counts once.
pub fn count_questions(text: &str) -> usize {
    let chars: Vec<char> = text.chars().collect();
    let mut count = 0;
    let mut i = 0;
    while i < chars.len() {
        if matches!(chars[i], '?' | '？') {
            let mut j = i;
            while j < chars.len() && matches!(chars[j], '?' | '？') {
                j += 1;
            }
            let mut k = j;
            while k < chars.len() && matches!(chars[k], '"' | '\'' | '”' | '’' | ')' | ']' | '*') {
                k += 1;
            }
            if k == chars.len() || chars[k].is_whitespace() {
                count += 1;
            }
            i = j;
        } else {
            i += 1;
        }
    }
    count
}

/// Byte ranges of sentences. Terminators inside brackets or quotes do not
/// end a sentence; blank ranges are dropped.
pub fn sentence_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut depth = 0i32;
    let mut in_quote = false;
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth = (depth - 1).max(0),
            '"' | '“' | '”' => in_quote = !in_quote,
            _ => {}
        }
        let next = iter.peek().map(|&(_, n)| n);
        let ends = match c {
            '\n' => true,
            '.' | '!' | '?' | '？' | '。' => {
                depth == 0 && !in_quote && next.is_none_or(char::is_whitespace)
            }
            _ => false,
        };
        if ends {
            let end = i + c.len_utf8();
            if c == '\n' {
                in_quote = false;
                depth = 0;
            }
            if !text[start..end].trim().is_empty() {
                spans.push(start..end);
            }
            start = end;
        }
    }
    if !text[start..].trim().is_empty() {
        spans.push(start..text.len());
    }
    spans
}

impl Structure {
    fn sentence_of(&self, offset: usize) -> Option<usize> {
        self.sentences
            .iter()
            .position(|s| s.start <= offset && offset < s.end)
    }

    /// Factor each citation supports, by position in the text. A citation
    /// goes to the closest preceding mention in its sentence, then the first
    /// mention in its sentence, then the nearest earlier mention anywhere,
    /// then the first later one. Sidecar entries go to the first factor.
    pub fn citation_factors(&self) -> Vec<Option<FactorId>> {
        self.citation_offsets
            .iter()
            .map(|off| match off {
                None => self.factors.first().copied(),
                Some(at) => {
                    let at = *at;
                    let sentence = self.sentence_of(at).map(|i| self.sentences[i].clone());
                    let in_sentence = |m: &&(usize, FactorId)| {
                        sentence.as_ref().is_some_and(|s| s.contains(&m.0))
                    };
                    self.mentions
                        .iter()
                        .filter(in_sentence)
                        .filter(|m| m.0 <= at)
                        .last()
                        .or_else(|| self.mentions.iter().find(in_sentence))
                        .or_else(|| self.mentions.iter().filter(|m| m.0 <= at).last())
                        .or_else(|| self.mentions.iter().find(|m| m.0 > at))
                        .map(|m| m.1)
                }
            })
            .collect()
    }

    /// Sentences mentioning `factor`, trimmed, in text order.
    pub fn sentences_about(&self, factor: FactorId) -> Vec<&str> {
        self.sentences
            .iter()
            .filter(|s| {
                self.mentions
                    .iter()
                    .any(|m| m.1 == factor && s.contains(&m.0))
            })
            .map(|s| self.body[s.clone()].trim())
            .collect()
    }

    /// Evidence fingerprints per factor. A factor with no linked citation
    /// gets the fingerprint of empty evidence.
    pub fn factor_fingerprints(&self) -> Vec<(FactorId, Fingerprint)> {
        let links = self.citation_factors();
        let mut out: Vec<(FactorId, Fingerprint)> = Vec::new();
        for &f in &self.factors {
            let mut any = false;
            for (c, link) in self.citations.iter().zip(&links) {
                if *link == Some(f) {
                    any = true;
                    let fp = c.fingerprint();
                    if !out.iter().any(|(g, h)| *g == f && *h == fp) {
                        out.push((f, fp));
                    }
                }
            }
            if !any {
                out.push((f, Fingerprint::of(None, None, None)));
            }
        }
        out
    }
}
