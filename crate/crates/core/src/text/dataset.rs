//! CSV ingestion for `id,sentence,label` files.
//!
//! Fields are comma separated and may be wrapped in double quotes, with `""`
//! standing for a literal quote inside a quoted field. A first row whose
//! label field is non-numeric is treated as a header.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    /// Labeled training domain.
    Source,
    /// Out-of-domain evaluation domain.
    Target,
}

impl Domain {
    pub fn class(self) -> usize {
        match self {
            Domain::Source => 0,
            Domain::Target => 1,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Source => "A",
            Domain::Target => "B",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawExample {
    pub id: String,
    pub sentence: String,
    /// 1 = suggestion.
    pub label: Option<u8>,
    pub domain: Domain,
}

struct Record {
    line: usize,
    fields: Vec<String>,
}

fn parse_records(text: &str, path: &Path) -> Result<Vec<Record>> {
    let err = |line: usize, msg: &str| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.to_string(),
    };
    let mut records = Vec::new();
    let mut chars = text.chars().peekable();
    let mut line = 1;
    while chars.peek().is_some() {
        let start_line = line;
        let mut fields = Vec::new();
        let mut field = String::new();
        let mut quoted = false;
        let mut after_quote = false;
        loop {
            let Some(c) = chars.next() else {
                if quoted {
                    return Err(err(start_line, "unterminated quoted field"));
                }
                break;
            };
            if quoted {
                match c {
                    '"' if chars.peek() == Some(&'"') => {
                        chars.next();
                        field.push('"');
                    }
                    '"' => {
                        quoted = false;
                        after_quote = true;
                    }
                    '\n' => {
                        line += 1;
                        field.push(c);
                    }
                    _ => field.push(c),
                }
                continue;
            }
            match c {
                ',' => {
                    fields.push(std::mem::take(&mut field));
                    after_quote = false;
                }
                '\r' if chars.peek() == Some(&'\n') => {}
                '\n' => {
                    line += 1;
                    break;
                }
                '"' if field.is_empty() && !after_quote => quoted = true,
                '"' => return Err(err(line, "unexpected quote inside field")),
                _ if after_quote => return Err(err(line, "text after closing quote")),
                _ => field.push(c),
            }
        }
        fields.push(field);
        if fields.len() == 1 && fields[0].trim().is_empty() {
            continue;
        }
        records.push(Record {
            line: start_line,
            fields,
        });
    }
    Ok(records)
}

fn is_header(rec: &Record, labeled: bool) -> bool {
    match rec.fields.as_slice() {
        [_, _, label] => {
            let l = label.trim();
            !l.is_empty() && l.parse::<f64>().is_err()
        }
        [id, sentence] if !labeled => {
            id.trim().eq_ignore_ascii_case("id") && sentence.trim().eq_ignore_ascii_case("sentence")
        }
        _ => false,
    }
}

/// Parses a dataset file. With `labeled`, every row must carry a label in
/// {0, 1}; otherwise the label column may be missing or empty.
pub fn load_dataset(path: &Path, domain: Domain, labeled: bool) -> Result<Vec<RawExample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, path, domain, labeled)
}

pub fn parse_dataset(text: &str, path: &Path, domain: Domain, labeled: bool) -> Result<Vec<RawExample>> {
    let records = parse_records(text, path)?;
    let skip = usize::from(records.first().is_some_and(|r| is_header(r, labeled)));
    let mut out = Vec::with_capacity(records.len());
    for rec in &records[skip..] {
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: rec.line,
            msg,
        };
        let (id, sentence, label) = match rec.fields.as_slice() {
            [id, sentence, label] => (id, sentence, Some(label.trim())),
            [id, sentence] if !labeled => (id, sentence, None),
            f => return Err(err(format!("expected {} fields, found {}", if labeled { 3 } else { 2 }, f.len()))),
        };
        let label = match label {
            Some("0") => Some(0),
            Some("1") => Some(1),
            Some("") | None if !labeled => None,
            Some(other) => return Err(err(format!("label must be 0 or 1, found {other:?}"))),
            None => return Err(err("missing label".into())),
        };
        if sentence.trim().is_empty() {
            return Err(err("empty sentence".into()));
        }
        out.push(RawExample {
            id: id.clone(),
            sentence: sentence.clone(),
            label,
            domain,
        });
    }
    Ok(out)
}

fn quote(field: &str) -> String {
    let needs = field.contains([',', '"', '\n', '\r'])
        || field.starts_with(char::is_whitespace)
        || field.ends_with(char::is_whitespace);
    if needs {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Serializes examples in the loader's dialect, with a header row.
pub fn to_csv(examples: &[RawExample]) -> String {
    let mut out = String::from("id,sentence,label\n");
    for ex in examples {
        out.push_str(&quote(&ex.id));
        out.push(',');
        out.push_str(&quote(&ex.sentence));
        out.push(',');
        if let Some(l) = ex.label {
            out.push_str(&l.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn write_dataset(path: &Path, examples: &[RawExample]) -> Result<()> {
    fs::write(path, to_csv(examples)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str, labeled: bool) -> Result<Vec<RawExample>> {
        parse_dataset(text, Path::new("mem.csv"), Domain::Source, labeled)
    }

    #[test]
    fn two_labeled_rows() {
        let rows = parse("1,Please add a dark mode,1\n2,\"It works, mostly.\",0\n", true).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].id, "1");
        assert_eq!(rows[0].label, Some(1));
        assert_eq!(rows[1].sentence, "It works, mostly.");
        assert_eq!(rows[1].label, Some(0));
    }

    #[test]
    fn header_is_detected() {
        let rows = parse("id,sentence,label\na,\"say \"\"hi\"\"\",1\n", true).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].sentence, "say \"hi\"");
    }

    #[test]
    fn bad_label_names_the_line() {
        let err = parse("id,sentence,label\na,fine,1\nb,broken,2\n", true).unwrap_err();
        match err {
            Error::Parse { line, msg, .. } => {
                assert_eq!(line, 3);
                assert!(msg.contains("\"2\""), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_quotes_are_errors() {
        assert!(matches!(parse("a,\"open,1\n", true), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("a,ok,1\nb,x\"y,1\n", true), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse("a,\"q\"z,1\n", true), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn unlabeled_rows() {
        let rows = parse("id,sentence\nx,hello there\ny,\"again\"\n", false).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.label.is_none()));
        let rows = parse("x,hello,\ny,hi,1\n", false).unwrap();
        assert_eq!(rows[0].label, None);
        assert_eq!(rows[1].label, Some(1));
        assert!(parse("x,hello\n", true).is_err());
    }

    #[test]
    fn multiline_field_keeps_start_line() {
        let text = "a,\"two\nlines\",1\nb,bad,7\n";
        match parse(text, true).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn write_then_load_round_trips(
            rows in proptest::collection::vec(
                ("[a-z0-9-]{1,8}", "[A-Za-z ,\"'.!\n]{0,30}[A-Za-z]", proptest::option::of(0u8..2)),
                1..12,
            )
        ) {
            let examples: Vec<RawExample> = rows
                .into_iter()
                .map(|(id, sentence, label)| RawExample { id, sentence, label, domain: Domain::Target })
                .collect();
            let text = to_csv(&examples);
            let back = parse_dataset(&text, Path::new("rt.csv"), Domain::Target, false).unwrap();
            prop_assert_eq!(back, examples);
        }
    }
}
