use super::FeatureError;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ProcessStart,
    LoginOk,
    LoginFail,
    AntivirusAlert,
    FirewallAlert,
    EmailSent,
    EmailReceived,
    EmailIncident,
    #[serde(rename = "ps_4100")]
    Ps4100,
    #[serde(rename = "ps_4104")]
    Ps4104,
}

impl EventKind {
    pub const ALL: [EventKind; 10] = [
        EventKind::ProcessStart,
        EventKind::LoginOk,
        EventKind::LoginFail,
        EventKind::AntivirusAlert,
        EventKind::FirewallAlert,
        EventKind::EmailSent,
        EventKind::EmailReceived,
        EventKind::EmailIncident,
        EventKind::Ps4100,
        EventKind::Ps4104,
    ];
}

/// Kind-specific fields; everything is optional on the wire.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Payload {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub process: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size_bytes: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attachments: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub links: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEvent {
    pub time: DateTime<Utc>,
    pub user: String,
    pub workstation: String,
    pub kind: EventKind,
    #[serde(default)]
    pub payload: Payload,
}

impl RawEvent {
    pub fn new(time: DateTime<Utc>, user: &str, workstation: &str, kind: EventKind) -> Self {
        Self {
            time,
            user: user.to_string(),
            workstation: workstation.to_string(),
            kind,
            payload: Payload::default(),
        }
    }

    pub fn with_payload(mut self, payload: Payload) -> Self {
        self.payload = payload;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.user.is_empty() {
            return Err("empty user".into());
        }
        if let Some(s) = self.payload.size_bytes {
            if !(s.is_finite() && s >= 0.0) {
                return Err(format!("invalid email size {s}"));
            }
        }
        Ok(())
    }

    /// Unix seconds with sub-second precision.
    pub fn seconds(&self) -> f64 {
        self.time.timestamp() as f64 + f64::from(self.time.timestamp_subsec_nanos()) * 1e-9
    }
}

/// Parses one event per non-blank line; errors carry 1-based line numbers.
pub fn read_events_jsonl<R: BufRead>(reader: R) -> Result<Vec<RawEvent>, FeatureError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev: RawEvent = serde_json::from_str(&line).map_err(|e| FeatureError::InvalidEvent {
            line: i + 1,
            reason: e.to_string(),
        })?;
        ev.validate()
            .map_err(|reason| FeatureError::InvalidEvent { line: i + 1, reason })?;
        out.push(ev);
    }
    Ok(out)
}

pub fn write_events_jsonl<W: Write>(mut w: W, events: &[RawEvent]) -> Result<(), FeatureError> {
    for ev in events {
        serde_json::to_writer(&mut w, ev).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_format_uses_documented_names() {
        let line = r#"{"time":"2024-03-01T09:30:00Z","user":"alice","workstation":"WS1","kind":"email_sent","payload":{"size_bytes":2048.0,"attachments":1,"links":3}}"#;
        let evs = read_events_jsonl(line.as_bytes()).unwrap();
        assert_eq!(evs[0].kind, EventKind::EmailSent);
        assert_eq!(evs[0].payload.attachments, Some(1));
        assert_eq!(evs[0].seconds(), 1_709_285_400.0);
        let mut buf = Vec::new();
        write_events_jsonl(&mut buf, &evs).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), line);
        let ps = r#"{"time":"2024-03-01T09:30:00Z","user":"a","workstation":"w","kind":"ps_4104"}"#;
        assert_eq!(read_events_jsonl(ps.as_bytes()).unwrap()[0].kind, EventKind::Ps4104);
    }

    #[test]
    fn bad_lines_report_their_position() {
        let text = "\n{\"time\":\"2024-03-01T09:30:00Z\",\"user\":\"\",\"workstation\":\"w\",\"kind\":\"login_ok\"}\n";
        match read_events_jsonl(text.as_bytes()) {
            Err(FeatureError::InvalidEvent { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let neg = r#"{"time":"2024-03-01T09:30:00Z","user":"a","workstation":"w","kind":"email_sent","payload":{"size_bytes":-1}}"#;
        assert!(read_events_jsonl(neg.as_bytes()).is_err());
        assert!(read_events_jsonl("{not json".as_bytes()).is_err());
    }
}
