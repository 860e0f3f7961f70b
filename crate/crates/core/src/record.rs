//! Line-oriented `field=value` records separated by tabs.
//!
//! Every on-disk format in the crate (task suites, golden artifacts, memory
//! logs, identity files) is a sequence of these lines. Values escape `\`,
//! tab, newline and carriage return so a record always occupies exactly one
//! line. Field names may not contain `=`, tab or newline.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RecordError {
    #[error("line {line}: field without '=': {field:?}")]
    MissingEquals { line: usize, field: String },
    #[error("line {line}: bad escape sequence in {value:?}")]
    BadEscape { line: usize, value: String },
    #[error("line {line}: missing field {field}")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: invalid value for {field}: {value:?}")]
    InvalidValue {
        line: usize,
        field: String,
        value: String,
    },
    #[error("line {line}: unrecognised record")]
    UnknownRecord { line: usize },
}

pub fn escape(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape(value: &str) -> Option<String> {
    let mut out = String::with_capacity(value.len());
    let mut chars = value.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next()? {
            '\\' => out.push('\\'),
            't' => out.push('\t'),
            'n' => out.push('\n'),
            'r' => out.push('\r'),
            _ => return None,
        }
    }
    Some(out)
}

/// One parsed line: ordered fields, duplicates allowed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Record {
    /// 1-based source line, 0 when built in memory.
    pub line: usize,
    fields: Vec<(String, String)>,
}

impl Record {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl AsRef<str>) -> Self {
        self.push(key, value);
        self
    }

    pub fn push(&mut self, key: &str, value: impl AsRef<str>) {
        debug_assert!(!key.contains(['=', '\t', '\n']));
        self.fields.push((key.to_owned(), value.as_ref().to_owned()));
    }

    pub fn parse(line_no: usize, line: &str) -> Result<Self, RecordError> {
        let mut fields = Vec::new();
        for raw in line.split('\t') {
            let (key, value) = raw.split_once('=').ok_or_else(|| RecordError::MissingEquals {
                line: line_no,
                field: raw.to_owned(),
            })?;
            let value = unescape(value).ok_or_else(|| RecordError::BadEscape {
                line: line_no,
                value: value.to_owned(),
            })?;
            fields.push((key.to_owned(), value));
        }
        Ok(Record {
            line: line_no,
            fields,
        })
    }

    pub fn render(&self) -> String {
        self.fields
            .iter()
            .map(|(k, v)| format!("{k}={}", escape(v)))
            .collect::<Vec<_>>()
            .join("\t")
    }

    pub fn first_key(&self) -> Option<&str> {
        self.fields.first().map(|(k, _)| k.as_str())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.fields
            .iter()
            .filter(move |(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &'static str) -> Result<&str, RecordError> {
        self.get(key).ok_or(RecordError::MissingField {
            line: self.line,
            field: key,
        })
    }

    pub fn parse_field<T: std::str::FromStr>(&self, key: &'static str) -> Result<T, RecordError> {
        let raw = self.require(key)?;
        raw.parse().map_err(|_| self.invalid(key, raw))
    }

    pub fn invalid(&self, field: &str, value: &str) -> RecordError {
        RecordError::InvalidValue {
            line: self.line,
            field: field.to_owned(),
            value: value.to_owned(),
        }
    }
}

/// Parses every non-empty line of `text`.
pub fn parse_lines(text: &str) -> Result<Vec<Record>, RecordError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| Record::parse(i + 1, l))
        .collect()
}

/// Renders records one per line, each terminated by `\n`.
pub fn render_lines<'a>(records: impl IntoIterator<Item = &'a Record>) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.render());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn escapes_control_characters() {
        let r = Record::new().with("content", "a\tb\nc\\d");
        assert_eq!(r.render(), "content=a\\tb\\nc\\\\d");
        let back = Record::parse(1, &r.render()).unwrap();
        assert_eq!(back.get("content"), Some("a\tb\nc\\d"));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            Record::parse(3, "novalue"),
            Err(RecordError::MissingEquals { line: 3, .. })
        ));
        assert!(matches!(
            Record::parse(1, "k=bad\\q"),
            Err(RecordError::BadEscape { .. })
        ));
    }

    proptest! {
        #[test]
        fn value_round_trip(value in "\\PC*|[\\t\\n\\r\\\\=a-z]*") {
            let r = Record::new().with("k", &value).with("k", "x=y");
            let back = Record::parse(0, &r.render()).unwrap();
            prop_assert_eq!(back, r);
        }
    }
}
