use super::{EventKind, Feature, FeatureError, FeatureRecord, RawEvent, Role, WindowKey, NUM_NUMERIC};
use std::collections::{BTreeMap, BTreeSet};

pub const DEFAULT_WINDOW_SECONDS: i64 = 3600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnmappedUser {
    /// Drop events of users without a role.
    #[default]
    Skip,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AggregateOptions {
    pub window_seconds: i64,
    pub unmapped: UnmappedUser,
}

impl Default for AggregateOptions {
    fn default() -> Self {
        Self {
            window_seconds: DEFAULT_WINDOW_SECONDS,
            unmapped: UnmappedUser::Skip,
        }
    }
}

#[derive(Default)]
struct WindowAcc<'a> {
    counts: [f64; NUM_NUMERIC],
    logins: Vec<f64>,
    failed: Vec<f64>,
    workstations: BTreeSet<&'a str>,
    processes: Vec<String>,
}

impl<'a> WindowAcc<'a> {
    fn add(&mut self, ev: &'a RawEvent) {
        use Feature as F;
        let c = &mut self.counts;
        let p = &ev.payload;
        let size = p.size_bytes.unwrap_or(0.0);
        let files = f64::from(p.attachments.unwrap_or(0));
        let links = f64::from(p.links.unwrap_or(0));
        match ev.kind {
            EventKind::ProcessStart => {
                c[F::NumNewProcess.index()] += 1.0;
                if let Some(path) = &p.process {
                    self.processes.push(path.to_lowercase());
                }
            }
            EventKind::LoginOk => {
                c[F::NumLogins.index()] += 1.0;
                self.logins.push(ev.seconds());
            }
            EventKind::LoginFail => {
                c[F::NumFLogins.index()] += 1.0;
                self.failed.push(ev.seconds());
            }
            EventKind::AntivirusAlert => c[F::NumAntivirusAlerts.index()] += 1.0,
            EventKind::FirewallAlert => c[F::NumFirewallAlerts.index()] += 1.0,
            EventKind::EmailSent => {
                c[F::SentEmails.index()] += 1.0;
                c[F::SentEmailsSize.index()] += size;
                c[F::SentEmailFiles.index()] += files;
                c[F::SentEmailLinks.index()] += links;
            }
            EventKind::EmailReceived => {
                c[F::ReceivedEmails.index()] += 1.0;
                c[F::ReceivedEmailsSize.index()] += size;
                c[F::ReceivedEmailFiles.index()] += files;
                c[F::ReceivedEmailLinks.index()] += links;
            }
            EventKind::EmailIncident => c[F::IncidentEmails.index()] += 1.0,
            EventKind::Ps4100 => c[F::Events4100.index()] += 1.0,
            EventKind::Ps4104 => c[F::Events4104.index()] += 1.0,
        }
        self.workstations.insert(&ev.workstation);
    }

    fn finish(mut self, key: WindowKey) -> FeatureRecord {
        let duration = key.duration as f64;
        self.counts[Feature::AvgSecBetLogins.index()] = mean_gap(&self.logins, duration);
        self.counts[Feature::AvgSecBetFLogins.index()] = mean_gap(&self.failed, duration);
        self.counts[Feature::WorkstationCount.index()] = self.workstations.len() as f64;
        FeatureRecord {
            key,
            numeric: self.counts,
            process_list: self.processes,
        }
    }
}

/// Mean gap between consecutive sorted times, or `duration` with fewer than two.
fn mean_gap(times: &[f64], duration: f64) -> f64 {
    match (times.first(), times.last()) {
        (Some(first), Some(last)) if times.len() >= 2 => (last - first) / (times.len() - 1) as f64,
        _ => duration,
    }
}

/// Folds events into one record per (user, window), ordered by user then
/// window start. Every window between a user's first and last active window
/// is emitted, empty ones included.
pub fn aggregate(
    events: &[RawEvent],
    opts: &AggregateOptions,
    roles: &BTreeMap<String, Role>,
) -> Result<Vec<FeatureRecord>, FeatureError> {
    let d = opts.window_seconds;
    if d <= 0 {
        return Err(FeatureError::InvalidWindow(d));
    }
    let mut per_user: BTreeMap<&str, Vec<&RawEvent>> = BTreeMap::new();
    for (i, ev) in events.iter().enumerate() {
        ev.validate()
            .map_err(|reason| FeatureError::InvalidEvent { line: i + 1, reason })?;
        per_user.entry(ev.user.as_str()).or_default().push(ev);
    }

    let mut out = Vec::new();
    for (user, mut evs) in per_user {
        let role = match roles.get(user) {
            Some(&r) => r,
            None => match opts.unmapped {
                UnmappedUser::Skip => continue,
                UnmappedUser::Fail => return Err(FeatureError::UnmappedUser(user.to_string())),
            },
        };
        evs.sort_by_key(|e| e.time);
        let window_of = |e: &RawEvent| e.time.timestamp().div_euclid(d) * d;
        let first = window_of(evs[0]);
        let last = window_of(evs[evs.len() - 1]);
        let mut it = evs.into_iter().peekable();
        let mut start = first;
        while start <= last {
            let mut acc = WindowAcc::default();
            while let Some(ev) = it.next_if(|e| window_of(e) == start) {
                acc.add(ev);
            }
            out.push(acc.finish(WindowKey {
                user: user.to_string(),
                role,
                start,
                duration: d,
            }));
            start += d;
        }
    }
    Ok(out)
}
