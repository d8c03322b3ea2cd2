//! Raw events to model inputs.
//!
//! Events are grouped per user into fixed windows and summarised into the 19
//! engineered features below. The window's process launches form a token list
//! that is embedded with the DBOW model; numerics and embedding are
//! concatenated into an 83-wide vector and scaled with a robust scaler
//! followed by min-max scaling.

mod aggregate;
mod event;
mod scaler;

pub use aggregate::{aggregate, AggregateOptions, UnmappedUser, DEFAULT_WINDOW_SECONDS};
pub use event::{read_events_jsonl, write_events_jsonl, EventKind, Payload, RawEvent};
pub use scaler::{fit_scaler, ScalerParams, IQR_EPSILON};

use crate::doc2vec::Doc2VecModel;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const NUM_NUMERIC: usize = 19;
pub const EMBEDDING_DIM: usize = 64;
pub const INPUT_DIM: usize = NUM_NUMERIC + EMBEDDING_DIM;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("line {line}: {reason}")]
    InvalidEvent { line: usize, reason: String },
    #[error("user {0:?} has no role mapping")]
    UnmappedUser(String),
    #[error("window duration must be positive, got {0}")]
    InvalidWindow(i64),
    #[error("expected {expected} columns, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need at least {needed} rows to fit a scaler, got {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Customer management.
    Cm,
    /// Executive positions.
    Ep,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Cm => "cm",
            Role::Ep => "ep",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cm" => Ok(Role::Cm),
            "ep" => Ok(Role::Ep),
            other => Err(format!("unknown role {other:?} (expected cm or ep)")),
        }
    }
}

/// The engineered numeric features, in column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feature {
    NumNewProcess,
    NumLogins,
    AvgSecBetLogins,
    NumFLogins,
    AvgSecBetFLogins,
    NumAntivirusAlerts,
    NumFirewallAlerts,
    SentEmails,
    ReceivedEmails,
    IncidentEmails,
    SentEmailsSize,
    ReceivedEmailsSize,
    SentEmailFiles,
    ReceivedEmailFiles,
    SentEmailLinks,
    ReceivedEmailLinks,
    Events4100,
    Events4104,
    WorkstationCount,
}

impl Feature {
    pub const ALL: [Feature; NUM_NUMERIC] = [
        Feature::NumNewProcess,
        Feature::NumLogins,
        Feature::AvgSecBetLogins,
        Feature::NumFLogins,
        Feature::AvgSecBetFLogins,
        Feature::NumAntivirusAlerts,
        Feature::NumFirewallAlerts,
        Feature::SentEmails,
        Feature::ReceivedEmails,
        Feature::IncidentEmails,
        Feature::SentEmailsSize,
        Feature::ReceivedEmailsSize,
        Feature::SentEmailFiles,
        Feature::ReceivedEmailFiles,
        Feature::SentEmailLinks,
        Feature::ReceivedEmailLinks,
        Feature::Events4100,
        Feature::Events4104,
        Feature::WorkstationCount,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        FEATURE_NAMES[self.index()]
    }

    pub fn from_name(name: &str) -> Option<Self> {
        FEATURE_NAMES.iter().position(|&n| n == name).map(|i| Self::ALL[i])
    }

    /// Mean inter-event gap features; imputed to the window length when
    /// fewer than two events occur.
    pub fn is_timing(self) -> bool {
        matches!(self, Feature::AvgSecBetLogins | Feature::AvgSecBetFLogins)
    }
}

pub const FEATURE_NAMES: [&str; NUM_NUMERIC] = [
    "num_new_process",
    "num_logins",
    "avg_sec_bet_logins",
    "num_f_logins",
    "avg_sec_bet_f_logins",
    "num_antivirus_alerts",
    "num_firewall_alerts",
    "sent_emails",
    "received_emails",
    "incident_emails",
    "sent_emails_size",
    "received_emails_size",
    "sent_email_files",
    "received_email_files",
    "sent_email_links",
    "received_email_links",
    "events_4100",
    "events_4104",
    "workstation_count",
];

/// The 83 model-input column names: the 19 numerics, then `e0..e63`.
pub fn input_column_names() -> Vec<String> {
    FEATURE_NAMES
        .iter()
        .map(|s| s.to_string())
        .chain((0..EMBEDDING_DIM).map(|i| format!("e{i}")))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WindowKey {
    pub user: String,
    pub role: Role,
    /// Unix seconds, a multiple of `duration`.
    pub start: i64,
    pub duration: i64,
}

impl WindowKey {
    pub fn start_iso(&self) -> String {
        chrono::DateTime::from_timestamp(self.start, 0)
            .map(|t| t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
            .unwrap_or_else(|| self.start.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub key: WindowKey,
    pub numeric: [f64; NUM_NUMERIC],
    /// Lowercased executable paths in launch order.
    pub process_list: Vec<String>,
}

impl FeatureRecord {
    pub fn get(&self, f: Feature) -> f64 {
        self.numeric[f.index()]
    }
}

/// Unscaled 83-wide vector for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedRecord {
    pub values: Vec<f64>,
    /// The process list had no in-vocabulary token; the embedding is zero.
    pub degenerate: bool,
}

/// `[numerics ++ embedding(process_list)]`.
pub fn attach_embedding(record: &FeatureRecord, model: &Doc2VecModel) -> EmbeddedRecord {
    let inf = model.infer(&record.process_list);
    let mut values = Vec::with_capacity(NUM_NUMERIC + inf.vector.len());
    values.extend_from_slice(&record.numeric);
    values.extend_from_slice(&inf.vector);
    EmbeddedRecord {
        values,
        degenerate: inf.degenerate,
    }
}

/// A scaled model input tied to its window.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub key: WindowKey,
    pub values: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc2vec::{train_dbow, Doc2VecParams};

    fn record(tokens: &[&str]) -> FeatureRecord {
        let mut numeric = [0.0; NUM_NUMERIC];
        for (i, v) in numeric.iter_mut().enumerate() {
            *v = i as f64 * 1.5;
        }
        FeatureRecord {
            key: WindowKey {
                user: "u".into(),
                role: Role::Cm,
                start: 0,
                duration: 3600,
            },
            numeric,
            process_list: tokens.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn names_and_indices_agree() {
        for f in Feature::ALL {
            assert_eq!(Feature::from_name(f.name()), Some(f));
        }
        let cols = input_column_names();
        assert_eq!(cols.len(), INPUT_DIM);
        assert_eq!(cols[18], "workstation_count");
        assert_eq!(cols[19], "e0");
        assert_eq!(cols[82], "e63");
    }

    #[test]
    fn embedding_is_appended_after_untouched_numerics() {
        let corpus = vec![vec!["a.exe".to_string(), "b.exe".to_string()]];
        let (model, _) = train_dbow(&corpus, &Doc2VecParams::default()).unwrap();
        let r = record(&["a.exe", "b.exe"]);
        let e = attach_embedding(&r, &model);
        assert_eq!(e.values.len(), 83);
        assert_eq!(&e.values[..19], &r.numeric);
        assert!(!e.degenerate);

        let empty = attach_embedding(&record(&[]), &model);
        assert!(empty.degenerate);
        assert!(empty.values[19..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn role_parsing() {
        assert_eq!("CM".parse::<Role>(), Ok(Role::Cm));
        assert_eq!("ep".parse::<Role>(), Ok(Role::Ep));
        assert!("hr".parse::<Role>().is_err());
    }
}
