//! Turns a patent's invention description into a standardized query.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::PatentDocument;

pub const DEFAULT_MAX_CHARS: usize = 6_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("{0}: empty input")]
    EmptyInput(String),
    #[error("max_chars must be positive")]
    ZeroLimit,
}

fn tag_pattern() -> &'static Regex {
    static TAG: OnceLock<Regex> = OnceLock::new();
    TAG.get_or_init(|| Regex::new(r"<!--[^<>]*-->|<[/!?]?[A-Za-z][^<>]*>").expect("valid tag regex"))
}

/// Strips markup tags and control characters, normalizes to NFC and
/// collapses whitespace runs into single spaces. Idempotent.
pub fn preprocess_text(raw: &str) -> String {
    let no_controls: String = raw
        .chars()
        .filter_map(|c| {
            if c.is_whitespace() {
                Some(' ')
            } else if c.is_control() || c == '\u{FEFF}' {
                None
            } else {
                Some(c)
            }
        })
        .collect();
    let mut text: String = no_controls.nfc().collect();
    // Removing one tag can expose another ("<<b>p>"), so strip to a fixed point.
    loop {
        let stripped = tag_pattern().replace_all(&text, " ");
        if stripped.len() == text.len() && stripped == text {
            break;
        }
        text = stripped.into_owned();
    }
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectionKind {
    Background,
    Summary,
    DetailedDescription,
    Other,
}

/// Heading lexicon used to segment descriptions. Matching is done on whole
/// lines, case-insensitively, ignoring a trailing colon and paragraph
/// numbering such as `[0001]`.
#[derive(Debug, Clone)]
pub struct HeadingLexicon {
    entries: Vec<(String, SectionKind)>,
}

impl Default for HeadingLexicon {
    fn default() -> Self {
        use SectionKind::*;
        let entries = [
            ("background", Background),
            ("background of the invention", Background),
            ("background art", Background),
            ("description of the related art", Background),
            ("related art", Background),
            ("背景技术", Background),
            ("背景", Background),
            ("summary", Summary),
            ("summary of the invention", Summary),
            ("brief summary", Summary),
            ("disclosure of the invention", Summary),
            ("发明内容", Summary),
            ("detailed description", DetailedDescription),
            ("detailed description of the invention", DetailedDescription),
            ("detailed description of the embodiments", DetailedDescription),
            ("detailed description of the preferred embodiments", DetailedDescription),
            ("description of embodiments", DetailedDescription),
            ("description of the embodiments", DetailedDescription),
            ("具体实施方式", DetailedDescription),
            ("technical field", Other),
            ("field", Other),
            ("field of the invention", Other),
            ("brief description of the drawings", Other),
            ("技术领域", Other),
            ("附图说明", Other),
        ];
        HeadingLexicon {
            entries: entries.iter().map(|(h, k)| (h.to_string(), *k)).collect(),
        }
    }
}

impl HeadingLexicon {
    pub fn new(entries: Vec<(String, SectionKind)>) -> Self {
        HeadingLexicon {
            entries: entries
                .into_iter()
                .map(|(h, k)| (h.to_lowercase(), k))
                .collect(),
        }
    }

    pub fn classify(&self, line: &str) -> Option<SectionKind> {
        let key = heading_key(line)?;
        self.entries
            .iter()
            .find(|(h, _)| *h == key)
            .map(|(_, kind)| *kind)
    }
}

fn heading_key(line: &str) -> Option<String> {
    let mut s = preprocess_text(line);
    if s.starts_with('[') {
        if let Some(end) = s.find(']') {
            if s[1..end].chars().all(|c| c.is_ascii_digit()) {
                s = s[end + 1..].trim().to_string();
            }
        }
    }
    let s = s
        .trim_end_matches([':', '：', '.'])
        .trim()
        .to_lowercase();
    (!s.is_empty()).then_some(s)
}

/// Segmented invention description. Section texts are preprocessed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptionSections {
    pub background: String,
    pub summary: String,
    pub detailed_description: String,
    pub other: Vec<(String, String)>,
}

impl DescriptionSections {
    pub fn is_empty(&self) -> bool {
        self.background.is_empty()
            && self.summary.is_empty()
            && self.detailed_description.is_empty()
            && self.other.iter().all(|(_, t)| t.is_empty())
    }

    /// All section texts in field order.
    pub fn texts(&self) -> Vec<&str> {
        let mut out = vec![
            self.background.as_str(),
            self.summary.as_str(),
            self.detailed_description.as_str(),
        ];
        out.extend(self.other.iter().map(|(_, t)| t.as_str()));
        out
    }
}

fn append(target: &mut String, text: &str) {
    if text.is_empty() {
        return;
    }
    if !target.is_empty() {
        target.push(' ');
    }
    target.push_str(text);
}

pub fn parse_description(doc: &PatentDocument) -> Result<DescriptionSections, QueryError> {
    parse_description_with(doc, &HeadingLexicon::default())
}

/// Splits the description on recognized heading lines. Content before the
/// first heading lands in `other` under an empty heading; a description
/// without any recognized heading goes wholly to `detailed_description`.
pub fn parse_description_with(
    doc: &PatentDocument,
    lexicon: &HeadingLexicon,
) -> Result<DescriptionSections, QueryError> {
    if preprocess_text(&doc.description).is_empty() {
        return Err(QueryError::EmptyInput(format!("description of {}", doc.doc_id)));
    }
    let mut blocks: Vec<(Option<(SectionKind, String)>, String)> = vec![(None, String::new())];
    for line in doc.description.lines() {
        match lexicon.classify(line) {
            Some(kind) => blocks.push((Some((kind, preprocess_text(line))), String::new())),
            None => {
                let text = preprocess_text(line);
                append(&mut blocks.last_mut().expect("non-empty").1, &text);
            }
        }
    }

    let mut sections = DescriptionSections::default();
    if blocks.len() == 1 {
        sections.detailed_description = blocks.pop().expect("one block").1;
        return Ok(sections);
    }
    for (heading, text) in blocks {
        match heading {
            None if text.is_empty() => {}
            None => sections.other.push((String::new(), text)),
            Some((SectionKind::Background, _)) => append(&mut sections.background, &text),
            Some((SectionKind::Summary, _)) => append(&mut sections.summary, &text),
            Some((SectionKind::DetailedDescription, _)) => {
                append(&mut sections.detailed_description, &text)
            }
            Some((SectionKind::Other, h)) => sections.other.push((h, text)),
        }
    }
    Ok(sections)
}

/// Background and detailed description joined by a blank line; falls back
/// to every section when both are empty.
pub fn extract_key_sections(sections: &DescriptionSections) -> Result<String, QueryError> {
    let key: Vec<&str> = [
        sections.background.as_str(),
        sections.detailed_description.as_str(),
    ]
    .into_iter()
    .filter(|s| !s.is_empty())
    .collect();
    if !key.is_empty() {
        return Ok(key.join("\n\n"));
    }
    let all: Vec<&str> = sections.texts().into_iter().filter(|s| !s.is_empty()).collect();
    if all.is_empty() {
        return Err(QueryError::EmptyInput("description sections".into()));
    }
    Ok(all.join("\n\n"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub text: String,
    pub language: String,
    pub char_length: usize,
    pub truncated: bool,
}

fn is_sentence_end(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '。' | '！' | '？' | '；' | ';')
}

/// Cuts `text` to at most `max_chars` scalar values, preferring the last
/// sentence end at or below the limit. Without any sentence end in range the
/// cut is made at the limit itself.
fn truncate_at_sentence(text: &str, max_chars: usize) -> (String, bool) {
    let chars: Vec<char> = text.chars().collect();
    if chars.len() <= max_chars {
        return (text.to_string(), false);
    }
    let window = &chars[..max_chars];
    let cut = window
        .iter()
        .rposition(|&c| is_sentence_end(c))
        .map(|i| i + 1)
        .unwrap_or(max_chars);
    let out: String = window[..cut].iter().collect();
    (out.trim_end().to_string(), true)
}

/// Builds the query payload for a main patent.
pub fn build_query(doc: &PatentDocument, max_chars: usize) -> Result<Query, QueryError> {
    if max_chars == 0 {
        return Err(QueryError::ZeroLimit);
    }
    let sections = parse_description(doc)?;
    let key = extract_key_sections(&sections)?;
    let text = preprocess_text(&key);
    let (text, truncated) = truncate_at_sentence(&text, max_chars);
    if text.is_empty() {
        return Err(QueryError::EmptyInput(format!("query text of {}", doc.doc_id)));
    }
    Ok(Query {
        query_id: doc.doc_id.clone(),
        char_length: text.chars().count(),
        text,
        language: doc.language.clone(),
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::doc;
    use proptest::prelude::*;

    fn with_description(text: &str) -> PatentDocument {
        let mut d = doc("CN1", "f");
        d.description = text.to_string();
        d
    }

    #[test]
    fn preprocess_strips_tags_and_whitespace() {
        assert_eq!(preprocess_text("<p>A  pump</p>"), "A pump");
        assert_eq!(preprocess_text("A pump"), "A pump");
        assert_eq!(preprocess_text("a\u{0007}b\tc\r\nd"), "ab c d");
        assert_eq!(preprocess_text("<<b>p>x"), "< p>x");
        assert_eq!(preprocess_text("<!-- note -->kept<br/>text"), "kept text");
        assert_eq!(preprocess_text("a < b and c > d"), "a < b and c > d");
        assert_eq!(preprocess_text(""), "");
        assert_eq!(preprocess_text("\u{FEFF}text"), "text");
    }

    #[test]
    fn preprocess_nfc_matches_frozen_python_oracle() {
        // Expected values produced by Python's unicodedata.normalize("NFC", ...)
        // after the same whitespace handling; full-width digits are not
        // folded by canonical composition.
        let raw = "Ｎｏ．１２３ and 123, e\u{301}te\u{301}\u{3000}ＡＢＣ";
        assert_eq!(
            preprocess_text(raw),
            "Ｎｏ．１２３ and 123, \u{e9}t\u{e9} ＡＢＣ"
        );
        assert_eq!(preprocess_text("\u{212B}ngstr\u{f6}m"), "\u{c5}ngstr\u{f6}m");
    }

    proptest! {
        #[test]
        fn preprocess_is_idempotent(s in "(<[a-z/]{0,3}>|[a-zA-Z0-9 \t\n<>\u{301}\u{7}\u{3000}。背景]){0,40}") {
            let once = preprocess_text(&s);
            prop_assert_eq!(preprocess_text(&once), once);
        }

        #[test]
        fn preprocess_is_idempotent_any(s in any::<String>()) {
            let once = preprocess_text(&s);
            prop_assert_eq!(preprocess_text(&once), once);
        }
    }

    #[test]
    fn english_headings() {
        let d = with_description(
            "BACKGROUND\nPumps are old.\nDETAILED DESCRIPTION\nThe pump has a rotor.\nIt spins.",
        );
        let s = parse_description(&d).unwrap();
        assert_eq!(s.background, "Pumps are old.");
        assert_eq!(s.detailed_description, "The pump has a rotor. It spins.");
        assert!(s.summary.is_empty());
        assert!(s.other.is_empty());
    }

    #[test]
    fn headingless_goes_to_detailed() {
        let d = with_description("A rotor.\nA stator.");
        let s = parse_description(&d).unwrap();
        assert_eq!(s.detailed_description, "A rotor. A stator.");
        assert!(s.background.is_empty() && s.other.is_empty());
    }

    #[test]
    fn chinese_headings_and_numbered_variants() {
        let d = with_description(
            "技术领域\n本发明涉及泵。\n背景技术\n现有的泵效率低。\n发明内容\n提供一种泵。\n具体实施方式\n泵包括转子。",
        );
        let s = parse_description(&d).unwrap();
        assert_eq!(s.background, "现有的泵效率低。");
        assert_eq!(s.summary, "提供一种泵。");
        assert_eq!(s.detailed_description, "泵包括转子。");
        assert_eq!(s.other, vec![("技术领域".to_string(), "本发明涉及泵。".to_string())]);

        let d = with_description("[0001] Background of the Invention:\nOld.\n<h2>Detailed Description</h2>\nNew.");
        let s = parse_description(&d).unwrap();
        assert_eq!(s.background, "Old.");
        assert_eq!(s.detailed_description, "New.");
    }

    #[test]
    fn preamble_before_first_heading_is_kept() {
        let d = with_description("Preamble text.\nSUMMARY\nShort.");
        let s = parse_description(&d).unwrap();
        assert_eq!(s.other, vec![(String::new(), "Preamble text.".to_string())]);
        assert_eq!(s.summary, "Short.");
    }

    #[test]
    fn empty_description_is_an_error() {
        assert!(matches!(
            parse_description(&with_description(" \n ")),
            Err(QueryError::EmptyInput(_))
        ));
    }

    #[test]
    fn key_section_selection() {
        let mut s = DescriptionSections {
            background: "B".into(),
            detailed_description: "D".into(),
            ..Default::default()
        };
        assert_eq!(extract_key_sections(&s).unwrap(), "B\n\nD");
        s.background.clear();
        assert_eq!(extract_key_sections(&s).unwrap(), "D");
        s.detailed_description.clear();
        s.summary = "S".into();
        s.other.push(("Field".into(), "F".into()));
        assert_eq!(extract_key_sections(&s).unwrap(), "S\n\nF");
        assert!(extract_key_sections(&DescriptionSections::default()).is_err());
    }

    #[test]
    fn key_sections_of_annotated_fixture() {
        let d = with_description(
            "TECHNICAL FIELD\nFluid machines.\nBACKGROUND\nKnown pumps leak.\nSUMMARY\nA sealed pump.\nDETAILED DESCRIPTION\nThe seal is a ring. The ring is rubber.",
        );
        let key = extract_key_sections(&parse_description(&d).unwrap()).unwrap();
        assert_eq!(key, "Known pumps leak.\n\nThe seal is a ring. The ring is rubber.");
    }

    #[test]
    fn short_query_not_truncated() {
        let d = with_description("BACKGROUND\nOld pumps.\nDETAILED DESCRIPTION\nNew pump.");
        let q = build_query(&d, 100).unwrap();
        assert_eq!(q.text, "Old pumps. New pump.");
        assert!(!q.truncated);
        assert_eq!(q.char_length, q.text.chars().count());
        assert_eq!(q.query_id, "CN1");
        assert_eq!(q.language, "en");
    }

    #[test]
    fn long_query_cut_at_sentence_boundary() {
        let sentence = "The rotor turns inside the housing at speed. ";
        let text = sentence.repeat(10_000 / sentence.len() + 1);
        let d = with_description(&text);
        let q = build_query(&d, 4_000).unwrap();
        assert!(q.truncated);
        assert!(q.char_length <= 4_000);
        assert!(q.text.ends_with('.'));
        assert!(q.char_length > 4_000 - sentence.len());
    }

    #[test]
    fn hard_cut_without_sentence_end() {
        let d = with_description(&"无标点中文文本".repeat(100));
        let q = build_query(&d, 50).unwrap();
        assert!(q.truncated);
        assert_eq!(q.char_length, 50);
        assert_eq!(build_query(&d, 0), Err(QueryError::ZeroLimit));
    }

    proptest! {
        #[test]
        fn sections_are_lossless(lines in proptest::collection::vec(
            prop_oneof![
                Just("BACKGROUND".to_string()),
                Just("背景技术".to_string()),
                Just("DETAILED DESCRIPTION".to_string()),
                Just("Summary:".to_string()),
                Just("附图说明".to_string()),
                "[a-z ]{1,12}",
            ], 1..12)) {
            let d = with_description(&lines.join("\n"));
            let lexicon = HeadingLexicon::default();
            if let Ok(s) = parse_description(&d) {
                let mut expected: Vec<char> = lines
                    .iter()
                    .filter(|l| lexicon.classify(l).is_none())
                    .flat_map(|l| l.chars())
                    .filter(|c| !c.is_whitespace())
                    .collect();
                let mut got: Vec<char> = s.texts().concat().chars().filter(|c| !c.is_whitespace()).collect();
                expected.sort();
                got.sort();
                prop_assert_eq!(got, expected);
            }
        }

        #[test]
        fn query_never_exceeds_limit(body in "[a-z .。]{1,400}", max in 1usize..120) {
            let d = with_description(&body);
            if let Ok(q) = build_query(&d, max) {
                prop_assert!(q.char_length <= max);
                prop_assert!(!q.text.is_empty());
                prop_assert_eq!(q.char_length, q.text.chars().count());
                prop_assert_eq!(q.truncated, preprocess_text(&body).chars().count() > max);
            }
        }
    }
}
