use crate::{io_err, CliError};
use chrono::DateTime;
use std::collections::BTreeMap;
use std::path::Path;
use ueba_core::features::{input_column_names, FeatureRecord, Role, WindowKey, FEATURE_NAMES, NUM_NUMERIC};
use ueba_core::synth::{TestLabel, TestSet};
use ueba_core::Matrix;

/// Leading columns identifying a window in matrix CSVs.
pub const KEY_COLUMNS: [&str; 3] = ["user", "role", "window_start"];

const PROCESS_SEPARATOR: char = '|';

fn schema(path: &Path, reason: impl Into<String>) -> CliError {
    CliError::Schema {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| schema(path, e.to_string())
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    csv::Writer::from_path(path).map_err(csv_err(path))
}

fn reader(path: &Path, expected: &[String]) -> Result<csv::Reader<std::fs::File>, CliError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut r = csv::Reader::from_reader(file);
    let header: Vec<String> = r.headers().map_err(csv_err(path))?.iter().map(str::to_string).collect();
    if header != expected {
        return Err(schema(path, format!("unexpected header {header:?}")));
    }
    Ok(r)
}

fn parse_f64(path: &Path, line: u64, col: &str, v: &str) -> Result<f64, CliError> {
    let x: f64 = v
        .parse()
        .map_err(|_| schema(path, format!("line {line}: column {col}: {v:?} is not a number")))?;
    if !x.is_finite() {
        return Err(schema(path, format!("line {line}: column {col} is not finite")));
    }
    Ok(x)
}

fn parse_start(path: &Path, line: u64, v: &str) -> Result<i64, CliError> {
    DateTime::parse_from_rfc3339(v)
        .map(|t| t.timestamp())
        .map_err(|e| schema(path, format!("line {line}: window_start {v:?}: {e}")))
}

fn windows_header() -> Vec<String> {
    let mut h: Vec<String> = KEY_COLUMNS.iter().map(|s| s.to_string()).collect();
    h.push("window_seconds".into());
    h.extend(FEATURE_NAMES.iter().map(|s| s.to_string()));
    h.push("process_list".into());
    h
}

/// Columns: `user,role,window_start,window_seconds`, the 19 features, then the
/// `|`-separated process list.
pub fn write_windows_csv(path: &Path, records: &[FeatureRecord]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(windows_header()).map_err(csv_err(path))?;
    for r in records {
        if r.process_list.iter().any(|p| p.contains(PROCESS_SEPARATOR)) {
            return Err(schema(
                path,
                format!("process path in window {} contains '|'", r.key.start_iso()),
            ));
        }
        let mut row = vec![
            r.key.user.clone(),
            r.key.role.to_string(),
            r.key.start_iso(),
            r.key.duration.to_string(),
        ];
        row.extend(r.numeric.iter().map(f64::to_string));
        row.push(r.process_list.join("|"));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_windows_csv(path: &Path) -> Result<Vec<FeatureRecord>, CliError> {
    let mut r = reader(path, &windows_header())?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let line = rec.position().map_or(0, |p| p.line());
        let role: Role = rec[1]
            .parse()
            .map_err(|e: String| schema(path, format!("line {line}: {e}")))?;
        let start = parse_start(path, line, &rec[2])?;
        let duration: i64 = rec[3]
            .parse()
            .map_err(|_| schema(path, format!("line {line}: bad window_seconds {:?}", &rec[3])))?;
        let mut numeric = [0.0; NUM_NUMERIC];
        for (i, v) in numeric.iter_mut().enumerate() {
            *v = parse_f64(path, line, FEATURE_NAMES[i], &rec[4 + i])?;
        }
        let list = &rec[4 + NUM_NUMERIC];
        out.push(FeatureRecord {
            key: WindowKey {
                user: rec[0].to_string(),
                role,
                start,
                duration,
            },
            numeric,
            process_list: if list.is_empty() {
                Vec::new()
            } else {
                list.split(PROCESS_SEPARATOR).map(str::to_string).collect()
            },
        });
    }
    Ok(out)
}

fn matrix_header() -> Vec<String> {
    KEY_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(input_column_names())
        .collect()
}

/// Key columns followed by the 83 named input columns.
pub fn write_matrix_csv(path: &Path, keys: &[WindowKey], x: &Matrix) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(matrix_header()).map_err(csv_err(path))?;
    for (k, row) in keys.iter().zip(x.iter_rows()) {
        let mut rec = vec![k.user.clone(), k.role.to_string(), k.start_iso()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_matrix_csv(path: &Path, window_seconds: i64) -> Result<(Vec<WindowKey>, Matrix), CliError> {
    let header = matrix_header();
    let mut r = reader(path, &header)?;
    let mut keys = Vec::new();
    let mut x = Matrix::empty(header.len() - KEY_COLUMNS.len());
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let line = rec.position().map_or(0, |p| p.line());
        let role: Role = rec[1]
            .parse()
            .map_err(|e: String| schema(path, format!("line {line}: {e}")))?;
        keys.push(WindowKey {
            user: rec[0].to_string(),
            role,
            start: parse_start(path, line, &rec[2])?,
            duration: window_seconds,
        });
        let row = (KEY_COLUMNS.len()..header.len())
            .map(|c| parse_f64(path, line, &header[c], &rec[c]))
            .collect::<Result<Vec<_>, _>>()?;
        x.push_row(&row).map_err(|e| schema(path, e.to_string()))?;
    }
    Ok((keys, x))
}

fn stress_header() -> Vec<String> {
    ["template_id", "type", "lambda"]
        .iter()
        .map(|s| s.to_string())
        .chain(input_column_names())
        .collect()
}

/// Columns: `template_id,type,lambda`, then the 83 scaled inputs.
pub fn write_stress_csv(path: &Path, set: &TestSet) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(stress_header()).map_err(csv_err(path))?;
    for (l, row) in set.labels.iter().zip(set.rows.iter_rows()) {
        let mut rec = vec![l.template_id.to_string(), l.kind.to_string(), l.lambda.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_stress_csv(path: &Path) -> Result<TestSet, CliError> {
    let header = stress_header();
    let mut r = reader(path, &header)?;
    let mut labels = Vec::new();
    let mut rows = Matrix::empty(header.len() - 3);
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |what: &str| schema(path, format!("line {line}: bad {what}"));
        labels.push(TestLabel {
            template_id: rec[0].parse().map_err(|_| bad("template_id"))?,
            kind: rec[1].parse().map_err(|_| bad("type"))?,
            lambda: parse_f64(path, line, "lambda", &rec[2])?,
        });
        let row = (3..header.len())
            .map(|c| parse_f64(path, line, &header[c], &rec[c]))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push_row(&row).map_err(|e| schema(path, e.to_string()))?;
    }
    Ok(TestSet { rows, labels })
}

/// JSON object mapping user names to roles.
pub fn read_roles(path: &Path) -> Result<BTreeMap<String, Role>, CliError> {
    serde_json::from_str(&crate::read_text(path)?).map_err(|e| schema(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ueba_core::synth::AnomalyType;

    fn record(user: &str, start: i64, tokens: &[&str]) -> FeatureRecord {
        let mut numeric = [0.0; NUM_NUMERIC];
        for (i, v) in numeric.iter_mut().enumerate() {
            *v = (i as f64).sqrt() * 1e3 / 7.0;
        }
        FeatureRecord {
            key: WindowKey {
                user: user.into(),
                role: Role::Ep,
                start,
                duration: 3600,
            },
            numeric,
            process_list: tokens.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn windows_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        let recs = vec![
            record("a", 1_704_067_200, &["c:\\x.exe", "c:\\y, z.exe"]),
            record("b", 1_704_070_800, &[]),
        ];
        write_windows_csv(&path, &recs).unwrap();
        assert_eq!(read_windows_csv(&path).unwrap(), recs);
    }

    #[test]
    fn matrix_and_stress_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let keys = vec![record("a", 1_704_067_200, &[]).key];
        let x = Matrix::from_vec(1, 83, (0..83).map(|i| i as f64 / 3.0).collect());
        let p = dir.path().join("m.csv");
        write_matrix_csv(&p, &keys, &x).unwrap();
        assert_eq!(read_matrix_csv(&p, 3600).unwrap(), (keys, x.clone()));

        let set = TestSet {
            rows: x,
            labels: vec![TestLabel {
                template_id: 7,
                kind: AnomalyType::Email,
                lambda: 0.07,
            }],
        };
        let s = dir.path().join("s.csv");
        write_stress_csv(&s, &set).unwrap();
        assert_eq!(read_stress_csv(&s).unwrap(), set);
    }

    #[test]
    fn wrong_header_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_windows_csv(&p), Err(CliError::Schema { .. })));
    }
}
