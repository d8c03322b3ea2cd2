use super::SynthError;
use crate::features::{EventKind, Payload, RawEvent, Role};
use crate::rng::child_rng;
use chrono::{DateTime, Datelike, Duration, Timelike, Utc, Weekday};
use rand::distr::weighted::WeightedIndex;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

/// Mean event count per active window, per kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EventRates {
    pub process_start: f64,
    pub login_ok: f64,
    pub login_fail: f64,
    pub antivirus_alert: f64,
    pub firewall_alert: f64,
    pub email_sent: f64,
    pub email_received: f64,
    pub email_incident: f64,
    pub ps_4100: f64,
    pub ps_4104: f64,
}

impl EventRates {
    pub fn get(&self, kind: EventKind) -> f64 {
        match kind {
            EventKind::ProcessStart => self.process_start,
            EventKind::LoginOk => self.login_ok,
            EventKind::LoginFail => self.login_fail,
            EventKind::AntivirusAlert => self.antivirus_alert,
            EventKind::FirewallAlert => self.firewall_alert,
            EventKind::EmailSent => self.email_sent,
            EventKind::EmailReceived => self.email_received,
            EventKind::EmailIncident => self.email_incident,
            EventKind::Ps4100 => self.ps_4100,
            EventKind::Ps4104 => self.ps_4104,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmailDistribution {
    /// Mean and standard deviation of `ln(size_bytes)`.
    pub size_log_mean: f64,
    pub size_log_sd: f64,
    pub attachments_mean: f64,
    pub links_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessToken {
    pub path: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleProfile {
    pub role: Role,
    pub start: DateTime<Utc>,
    pub window_seconds: i64,
    pub rates: EventRates,
    /// Standard deviation of the per-user log multiplier on every rate.
    pub user_rate_spread: f64,
    /// Variance of the mean-one Gamma multiplier drawn per active window and
    /// applied to every rate; 0 gives plain Poisson counts.
    pub window_dispersion: f64,
    /// Standard deviation of the per-user log multiplier on each process weight.
    pub process_habit_spread: f64,
    pub workstations_per_user: u32,
    /// Chance that an event happens away from the user's primary workstation.
    pub roaming_probability: f64,
    /// UTC hours whose windows carry activity.
    pub active_hours: Vec<u32>,
    pub weekend_active: bool,
    pub processes: Vec<ProcessToken>,
    pub sent_email: EmailDistribution,
    pub received_email: EmailDistribution,
}

fn tokens(list: &[(&str, f64)]) -> Vec<ProcessToken> {
    list.iter()
        .map(|&(path, weight)| ProcessToken {
            path: path.to_string(),
            weight,
        })
        .collect()
}

fn epoch() -> DateTime<Utc> {
    DateTime::from_timestamp(1_704_067_200, 0).expect("valid constant")
}

impl RoleProfile {
    pub fn customer_management() -> Self {
        Self {
            role: Role::Cm,
            start: epoch(),
            window_seconds: 3600,
            rates: EventRates {
                process_start: 6.0,
                login_ok: 2.5,
                login_fail: 0.3,
                antivirus_alert: 0.05,
                firewall_alert: 0.2,
                email_sent: 4.0,
                email_received: 8.0,
                email_incident: 0.05,
                ps_4100: 0.3,
                ps_4104: 1.0,
            },
            user_rate_spread: 0.25,
            window_dispersion: 1.2,
            process_habit_spread: 1.5,
            workstations_per_user: 2,
            roaming_probability: 0.05,
            active_hours: (7..19).collect(),
            weekend_active: false,
            processes: tokens(&[
                ("c:\\program files\\microsoft office\\outlook.exe", 8.0),
                ("c:\\program files\\microsoft office\\excel.exe", 6.0),
                ("c:\\program files\\microsoft office\\winword.exe", 4.0),
                ("c:\\program files\\google\\chrome\\chrome.exe", 7.0),
                ("c:\\program files\\crm\\crmclient.exe", 9.0),
                ("c:\\program files\\teams\\teams.exe", 5.0),
                ("c:\\windows\\explorer.exe", 3.0),
                ("c:\\windows\\system32\\notepad.exe", 1.0),
                ("c:\\program files\\adobe\\acrord32.exe", 2.0),
                ("c:\\windows\\system32\\svchost.exe", 2.0),
                ("c:\\program files\\core banking\\cbterm.exe", 6.0),
                ("c:\\windows\\system32\\calc.exe", 0.5),
            ]),
            sent_email: EmailDistribution {
                size_log_mean: 10.0,
                size_log_sd: 1.0,
                attachments_mean: 0.4,
                links_mean: 0.5,
            },
            received_email: EmailDistribution {
                size_log_mean: 10.5,
                size_log_sd: 1.2,
                attachments_mean: 0.5,
                links_mean: 1.5,
            },
        }
    }

    pub fn executive_positions() -> Self {
        Self {
            role: Role::Ep,
            rates: EventRates {
                process_start: 4.0,
                login_ok: 1.5,
                login_fail: 0.2,
                antivirus_alert: 0.03,
                firewall_alert: 0.1,
                email_sent: 6.0,
                email_received: 12.0,
                email_incident: 0.1,
                ps_4100: 0.1,
                ps_4104: 0.4,
            },
            active_hours: (8..21).collect(),
            weekend_active: true,
            processes: tokens(&[
                ("c:\\program files\\microsoft office\\outlook.exe", 12.0),
                ("c:\\program files\\microsoft office\\powerpnt.exe", 5.0),
                ("c:\\program files\\microsoft office\\excel.exe", 4.0),
                ("c:\\program files\\microsoft office\\winword.exe", 5.0),
                ("c:\\program files\\google\\chrome\\chrome.exe", 6.0),
                ("c:\\program files\\teams\\teams.exe", 8.0),
                ("c:\\program files\\zoom\\zoom.exe", 3.0),
                ("c:\\windows\\explorer.exe", 3.0),
                ("c:\\program files\\adobe\\acrord32.exe", 4.0),
                ("c:\\program files\\bi\\dashboard.exe", 2.0),
            ]),
            sent_email: EmailDistribution {
                size_log_mean: 10.5,
                size_log_sd: 1.1,
                attachments_mean: 0.6,
                links_mean: 0.3,
            },
            received_email: EmailDistribution {
                size_log_mean: 11.0,
                size_log_sd: 1.2,
                attachments_mean: 0.7,
                links_mean: 1.0,
            },
            ..Self::customer_management()
        }
    }

    pub fn for_role(role: Role) -> Self {
        match role {
            Role::Cm => Self::customer_management(),
            Role::Ep => Self::executive_positions(),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidProfile(m));
        if self.window_seconds <= 0 || 86_400 % self.window_seconds != 0 {
            return bad(format!("window_seconds {} must divide one day", self.window_seconds));
        }
        if self.start.timestamp() % self.window_seconds != 0 {
            return bad("start must lie on the window grid".into());
        }
        for kind in EventKind::ALL {
            let r = self.rates.get(kind);
            if !(r.is_finite() && r >= 0.0) {
                return bad(format!("rate for {kind:?} must be finite and non-negative"));
            }
        }
        if !(self.user_rate_spread.is_finite() && self.user_rate_spread >= 0.0) {
            return bad("user_rate_spread must be non-negative".into());
        }
        if !(self.window_dispersion.is_finite() && self.window_dispersion >= 0.0) {
            return bad("window_dispersion must be non-negative".into());
        }
        if !(self.process_habit_spread.is_finite() && self.process_habit_spread >= 0.0) {
            return bad("process_habit_spread must be non-negative".into());
        }
        if self.workstations_per_user == 0 {
            return bad("workstations_per_user must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.roaming_probability) {
            return bad("roaming_probability must lie in [0, 1]".into());
        }
        if self.active_hours.iter().any(|&h| h > 23) {
            return bad("active hours must lie in 0..=23".into());
        }
        if self.processes.is_empty() {
            return bad("process vocabulary is empty".into());
        }
        if self
            .processes
            .iter()
            .any(|p| p.path.is_empty() || !(p.weight.is_finite() && p.weight > 0.0))
        {
            return bad("process tokens need a path and a positive weight".into());
        }
        for (name, e) in [
            ("sent_email", &self.sent_email),
            ("received_email", &self.received_email),
        ] {
            let ok = e.size_log_mean.is_finite()
                && e.size_log_sd.is_finite()
                && e.size_log_sd >= 0.0
                && e.attachments_mean.is_finite()
                && e.attachments_mean >= 0.0
                && e.links_mean.is_finite()
                && e.links_mean >= 0.0;
            if !ok {
                return bad(format!("{name} distribution parameters are invalid"));
            }
        }
        Ok(())
    }

    fn is_active(&self, t: DateTime<Utc>) -> bool {
        let weekend = matches!(t.weekday(), Weekday::Sat | Weekday::Sun);
        (self.weekend_active || !weekend) && self.active_hours.contains(&t.hour())
    }
}

fn poisson(mean: f64, rng: &mut crate::rng::Rng) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("validated mean").sample(rng) as u64
}

fn email_payload(d: &EmailDistribution, rng: &mut crate::rng::Rng) -> Payload {
    let size = LogNormal::new(d.size_log_mean, d.size_log_sd)
        .expect("validated")
        .sample(rng);
    Payload {
        process: None,
        size_bytes: Some(size.round()),
        attachments: Some(poisson(d.attachments_mean, rng) as u32),
        links: Some(poisson(d.links_mean, rng) as u32),
    }
}

/// Synthetic events for `num_users` users over `num_days` days, sorted by time
/// then user. Each user draws from an independent stream derived from `seed`.
pub fn generate_logs(
    profile: &RoleProfile,
    num_users: usize,
    num_days: usize,
    seed: u64,
) -> Result<Vec<RawEvent>, SynthError> {
    profile.validate()?;
    if num_users == 0 || num_days == 0 {
        return Err(SynthError::InvalidProfile(
            "num_users and num_days must be positive".into(),
        ));
    }
    let role = profile.role.as_str();
    let weights: Vec<f64> = profile.processes.iter().map(|p| p.weight).collect();
    let spread = Normal::new(0.0, profile.user_rate_spread).expect("validated");
    let habits = Normal::new(0.0, profile.process_habit_spread).expect("validated");
    let dispersion = (profile.window_dispersion > 0.0).then(|| {
        let v = profile.window_dispersion;
        Gamma::new(1.0 / v, v).expect("validated dispersion")
    });
    let windows = num_days as i64 * 86_400 / profile.window_seconds;
    let mut events = Vec::new();

    for u in 0..num_users {
        let mut rng = child_rng(seed, &format!("synth/{role}/user/{u}"));
        let user = format!("{role}_user_{u:03}");
        let stations: Vec<String> = (0..profile.workstations_per_user)
            .map(|k| format!("{}-WS-{u:03}-{k}", role.to_uppercase()))
            .collect();
        let multipliers: Vec<f64> = EventKind::ALL.iter().map(|_| spread.sample(&mut rng).exp()).collect();
        let process_weights: Vec<f64> = weights.iter().map(|w| w * habits.sample(&mut rng).exp()).collect();
        let process_dist = WeightedIndex::new(&process_weights).expect("validated weights");

        for w in 0..windows {
            let start = profile.start + Duration::seconds(w * profile.window_seconds);
            if !profile.is_active(start) {
                continue;
            }
            let burst = match &dispersion {
                Some(g) => g.sample(&mut rng),
                None => 1.0,
            };
            let mut window_events = Vec::new();
            for (kind, m) in EventKind::ALL.into_iter().zip(&multipliers) {
                for _ in 0..poisson(profile.rates.get(kind) * m * burst, &mut rng) {
                    let offset = rng.random_range(0..profile.window_seconds);
                    let station = if stations.len() > 1 && rng.random_bool(profile.roaming_probability) {
                        &stations[rng.random_range(1..stations.len())]
                    } else {
                        &stations[0]
                    };
                    let payload = match kind {
                        EventKind::ProcessStart => Payload {
                            process: Some(profile.processes[process_dist.sample(&mut rng)].path.clone()),
                            ..Payload::default()
                        },
                        EventKind::EmailSent => email_payload(&profile.sent_email, &mut rng),
                        EventKind::EmailReceived => email_payload(&profile.received_email, &mut rng),
                        _ => Payload::default(),
                    };
                    window_events.push(
                        RawEvent::new(start + Duration::seconds(offset), &user, station, kind).with_payload(payload),
                    );
                }
            }
            window_events.sort_by_key(|e| e.time);
            events.extend(window_events);
        }
    }
    events.sort_by(|a, b| a.time.cmp(&b.time).then_with(|| a.user.cmp(&b.user)));
    Ok(events)
}
