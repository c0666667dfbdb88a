use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::Serialize;
use serde_json::Value;

use super::{ClinicalNote, CodeSystem, CorpusError, IcdDiagnosis, TableFormat};
use super::icd::normalize_code;

/// One data row with 1-based numbering over data rows (header excluded).
struct Row {
    number: usize,
    fields: BTreeMap<String, String>,
}

impl Row {
    fn raw(&self, field: &str) -> Option<&str> {
        self.fields.get(field).map(String::as_str)
    }

    fn optional(&self, field: &str) -> Option<String> {
        self.raw(field)
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(str::to_string)
    }

    fn required(&self, field: &'static str) -> Result<String, CorpusError> {
        self.optional(field).ok_or_else(|| CorpusError::Schema {
            row: self.number,
            field,
            message: "missing or empty".into(),
        })
    }

    fn date(&self, field: &'static str, value: &str) -> Result<NaiveDate, CorpusError> {
        parse_date(value).ok_or_else(|| CorpusError::Schema {
            row: self.number,
            field,
            message: format!("unparseable date {value:?}"),
        })
    }
}

/// Accepts `YYYY-MM-DD`, optionally followed by a time of day or a full
/// RFC 3339 timestamp; the time part is discarded.
pub fn parse_date(value: &str) -> Option<NaiveDate> {
    let value = value.trim();
    if let Ok(d) = NaiveDate::parse_from_str(value, "%Y-%m-%d") {
        return Some(d);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(value, fmt) {
            return Some(dt.date());
        }
    }
    DateTime::parse_from_rfc3339(value).ok().map(|dt| dt.date_naive())
}

fn open(path: &Path) -> Result<File, CorpusError> {
    if !path.exists() {
        return Err(CorpusError::NotFound(path.to_path_buf()));
    }
    File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn json_scalar(value: &Value) -> Option<Result<String, String>> {
    match value {
        Value::Null => None,
        Value::String(s) => Some(Ok(s.clone())),
        Value::Number(n) => Some(Ok(n.to_string())),
        Value::Bool(b) => Some(Ok(b.to_string())),
        other => Some(Err(format!("expected a scalar, got {other}"))),
    }
}

fn read_jsonl_rows(path: &Path) -> Result<(Vec<Row>, bool), CorpusError> {
    let reader = BufReader::new(open(path)?);
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let number = idx + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            row: number,
            message: e.to_string(),
        })?;
        let Value::Object(map) = value else {
            return Err(CorpusError::Malformed {
                row: number,
                message: "expected a JSON object".into(),
            });
        };
        let mut fields = BTreeMap::new();
        for (key, value) in &map {
            match json_scalar(value) {
                None => {}
                Some(Ok(s)) => {
                    fields.insert(key.clone(), s);
                }
                Some(Err(message)) => {
                    return Err(CorpusError::Malformed {
                        row: number,
                        message: format!("field `{key}`: {message}"),
                    })
                }
            }
        }
        rows.push(Row { number, fields });
    }
    Ok((rows, true))
}

/// Returns the rows and whether a `code_system` column is present.
fn read_csv_rows(path: &Path) -> Result<(Vec<Row>, bool), CorpusError> {
    let file = open(path)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers: Vec<String> = match reader.headers() {
        Ok(h) => h.iter().map(|s| s.trim().to_string()).collect(),
        Err(e) => {
            return Err(CorpusError::Malformed {
                row: 0,
                message: e.to_string(),
            })
        }
    };
    let has_code_system = headers.iter().any(|h| h == "code_system");
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let number = idx + 1;
        let record = record.map_err(|e| CorpusError::Malformed {
            row: number,
            message: e.to_string(),
        })?;
        let fields = headers
            .iter()
            .cloned()
            .zip(record.iter().map(str::to_string))
            .collect();
        rows.push(Row { number, fields });
    }
    // A file with no header line at all is an empty table.
    Ok((rows, has_code_system || headers.is_empty()))
}

fn read_rows(path: &Path, format: TableFormat) -> Result<(Vec<Row>, bool), CorpusError> {
    match format {
        TableFormat::Jsonl => read_jsonl_rows(path),
        TableFormat::Csv => read_csv_rows(path),
    }
}

/// Loads notes in file order; rejects duplicate note ids.
pub fn load_notes(path: &Path, format: TableFormat) -> Result<Vec<ClinicalNote>, CorpusError> {
    let (rows, _) = read_rows(path, format)?;
    let mut seen = HashSet::new();
    let mut notes = Vec::with_capacity(rows.len());
    for row in rows {
        let note_id = row.required("note_id")?;
        let patient_id = row.required("patient_id")?;
        let chart_date = row.required("chart_date")?;
        let chart_date = row.date("chart_date", &chart_date)?;
        let text = row
            .raw("text")
            .map(str::to_string)
            .ok_or_else(|| CorpusError::Schema {
                row: row.number,
                field: "text",
                message: "missing".into(),
            })?;
        if !seen.insert(note_id.clone()) {
            return Err(CorpusError::DuplicateNoteId(note_id));
        }
        notes.push(ClinicalNote {
            note_id,
            patient_id,
            admission_id: row.optional("admission_id"),
            chart_date,
            text,
        });
    }
    Ok(notes)
}

/// Loads diagnoses, normalizing codes. The code system always comes from
/// the `code_system` column.
pub fn load_diagnoses(path: &Path, format: TableFormat) -> Result<Vec<IcdDiagnosis>, CorpusError> {
    let (rows, has_code_system) = read_rows(path, format)?;
    if !has_code_system {
        return Err(CorpusError::MissingCodeSystemColumn);
    }
    rows.into_iter()
        .map(|row| {
            let patient_id = row.required("patient_id")?;
            let system = row.required("code_system")?;
            let code_system: CodeSystem =
                system.parse().map_err(|message| CorpusError::Schema {
                    row: row.number,
                    field: "code_system",
                    message,
                })?;
            let code = normalize_code(row.raw("code").unwrap_or_default());
            if code.is_empty() {
                return Err(CorpusError::Schema {
                    row: row.number,
                    field: "code",
                    message: "empty code".into(),
                });
            }
            let diagnosis_date = match row.optional("diagnosis_date") {
                Some(v) => Some(row.date("diagnosis_date", &v)?),
                None => None,
            };
            Ok(IcdDiagnosis {
                patient_id,
                admission_id: row.optional("admission_id"),
                code_system,
                code,
                diagnosis_date,
            })
        })
        .collect()
}

fn write_table<T: Serialize>(path: &Path, format: TableFormat, rows: &[T]) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(io_err(path))?;
    match format {
        TableFormat::Jsonl => {
            let mut out = BufWriter::new(file);
            for row in rows {
                serde_json::to_writer(&mut out, row)
                    .map_err(|e| io_err(path)(std::io::Error::other(e)))?;
                out.write_all(b"\n").map_err(io_err(path))?;
            }
            out.flush().map_err(io_err(path))
        }
        TableFormat::Csv => {
            let mut out = csv::Writer::from_writer(file);
            for row in rows {
                out.serialize(row)
                    .map_err(|e| io_err(path)(std::io::Error::other(e)))?;
            }
            out.flush().map_err(io_err(path))
        }
    }
}

pub fn write_notes(path: &Path, format: TableFormat, notes: &[ClinicalNote]) -> Result<(), CorpusError> {
    write_table(path, format, notes)
}

pub fn write_diagnoses(
    path: &Path,
    format: TableFormat,
    diagnoses: &[IcdDiagnosis],
) -> Result<(), CorpusError> {
    write_table(path, format, diagnoses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn loads_jsonl_notes_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            &dir,
            "notes.jsonl",
            concat!(
                r#"{"note_id":"n2","patient_id":7,"chart_date":"2021-03-04","text":"b"}"#, "\n",
                r#"{"note_id":"n1","patient_id":"p1","admission_id":null,"chart_date":"2021-03-05T13:45:00","text":"a"}"#, "\n",
                r#"{"note_id":"n3","patient_id":"p1","admission_id":"h1","chart_date":"2021-03-06 08:00:00","text":""}"#, "\n",
            ),
        );
        let notes = load_notes(&path, TableFormat::Jsonl).unwrap();
        assert_eq!(notes.iter().map(|n| n.note_id.as_str()).collect::<Vec<_>>(), vec!["n2", "n1", "n3"]);
        assert_eq!(notes[0].patient_id, "7");
        assert_eq!(notes[1].chart_date, NaiveDate::from_ymd_opt(2021, 3, 5).unwrap());
        assert_eq!(notes[2].admission_id.as_deref(), Some("h1"));
        assert_eq!(notes[2].text, "");
    }

    #[test]
    fn missing_note_id_names_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            &dir,
            "notes.csv",
            "note_id,patient_id,admission_id,chart_date,text\nn1,p1,,2021-01-01,ok\n,p1,,2021-01-02,bad\n",
        );
        let err = load_notes(&path, TableFormat::Csv).unwrap_err();
        assert!(matches!(err, CorpusError::Schema { row: 2, field: "note_id", .. }), "{err}");
        assert!(err.to_string().contains("row 2"));
    }

    #[test]
    fn bad_date_is_rejected_with_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            &dir,
            "notes.jsonl",
            "{\"note_id\":\"n1\",\"patient_id\":\"p\",\"chart_date\":\"2021-02-30\",\"text\":\"x\"}\n",
        );
        let err = load_notes(&path, TableFormat::Jsonl).unwrap_err();
        assert!(matches!(err, CorpusError::Schema { row: 1, field: "chart_date", .. }));
    }

    #[test]
    fn duplicate_note_id_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            &dir,
            "notes.csv",
            "note_id,patient_id,chart_date,text\ndup,p1,2021-01-01,a\ndup,p2,2021-01-02,b\n",
        );
        let err = load_notes(&path, TableFormat::Csv).unwrap_err();
        assert!(matches!(&err, CorpusError::DuplicateNoteId(id) if id == "dup"));
        assert!(err.to_string().contains("dup"));
    }

    #[test]
    fn missing_file() {
        let err = load_notes(Path::new("/nonexistent/notes.jsonl"), TableFormat::Jsonl).unwrap_err();
        assert!(matches!(err, CorpusError::NotFound(_)));
    }

    #[test]
    fn diagnoses_normalize_codes() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            &dir,
            "dx.csv",
            "patient_id,admission_id,code_system,code,diagnosis_date\np1,h1,ICD10,c78.1,2020-05-01\np2,,ICD9,197.0,\n",
        );
        let dx = load_diagnoses(&path, TableFormat::Csv).unwrap();
        assert_eq!(dx[0].code, "C781");
        assert_eq!(dx[0].code_system, CodeSystem::Icd10);
        assert_eq!(dx[1].code, "1970");
        assert_eq!(dx[1].admission_id, None);
        assert_eq!(dx[1].diagnosis_date, None);
    }

    #[test]
    fn diagnoses_errors() {
        let dir = tempfile::tempdir().unwrap();
        let empty_code = write(&dir, "a.csv", "patient_id,code_system,code\np1,ICD10,\n");
        assert!(matches!(
            load_diagnoses(&empty_code, TableFormat::Csv),
            Err(CorpusError::Schema { field: "code", .. })
        ));
        let no_column = write(&dir, "b.csv", "patient_id,code\np1,C78\n");
        assert!(matches!(
            load_diagnoses(&no_column, TableFormat::Csv),
            Err(CorpusError::MissingCodeSystemColumn)
        ));
        let no_field = write(&dir, "c.jsonl", "{\"patient_id\":\"p\",\"code\":\"C78\"}\n");
        assert!(matches!(
            load_diagnoses(&no_field, TableFormat::Jsonl),
            Err(CorpusError::Schema { field: "code_system", .. })
        ));
    }

    #[test]
    fn empty_files_give_empty_tables() {
        let dir = tempfile::tempdir().unwrap();
        let csv_header_only = write(&dir, "a.csv", "patient_id,admission_id,code_system,code,diagnosis_date\n");
        assert!(load_diagnoses(&csv_header_only, TableFormat::Csv).unwrap().is_empty());
        let blank = write(&dir, "b.csv", "");
        assert!(load_diagnoses(&blank, TableFormat::Csv).unwrap().is_empty());
        let jsonl = write(&dir, "c.jsonl", "");
        assert!(load_diagnoses(&jsonl, TableFormat::Jsonl).unwrap().is_empty());
    }

    #[test]
    fn date_parsing() {
        let d = NaiveDate::from_ymd_opt(2019, 12, 31).unwrap();
        assert_eq!(parse_date("2019-12-31"), Some(d));
        assert_eq!(parse_date("2019-12-31T23:59:59.123"), Some(d));
        assert_eq!(parse_date("2019-12-31T23:59:59Z"), Some(d));
        assert_eq!(parse_date("2019-12-31T23:59:59+02:00"), Some(d));
        assert_eq!(parse_date("31/12/2019"), None);
    }
}
