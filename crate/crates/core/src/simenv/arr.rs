use serde::{Deserialize, Serialize};

use super::Request;
use crate::decoder::TargetingProfile;
use crate::error::{GprError, Result};
use crate::quantizer::CodePath;
use crate::schema::{EnvContext, Token, TokenKind, UserJourney};

pub const PEAK_INTERVAL_SECS: i64 = 2 * 3600;
pub const OFF_PEAK_INTERVAL_SECS: i64 = 4 * 3600;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "tier")]
pub enum ActivityTier {
    High,
    /// Request rate relative to the high tier, in `(0, 1]`.
    Low { relative_rate: f64 },
}

impl ActivityTier {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ActivityTier::High => Ok(()),
            ActivityTier::Low { relative_rate } if relative_rate > 0.0 && relative_rate <= 1.0 => Ok(()),
            ActivityTier::Low { relative_rate } => Err(GprError::invalid(format!(
                "relative request rate {relative_rate} outside (0, 1]"
            ))),
        }
    }
}

/// Next synthetic-request time after `clock`.
pub fn arr_schedule(tier: ActivityTier, clock: i64, peak: bool) -> Result<i64> {
    tier.validate()?;
    let base = if peak { PEAK_INTERVAL_SECS } else { OFF_PEAK_INTERVAL_SECS };
    let interval = match tier {
        ActivityTier::High => base,
        ActivityTier::Low { relative_rate } => (base as f64 / relative_rate).round() as i64,
    };
    Ok(clock + interval)
}

/// Hours of the day `[start, end)` treated as peak traffic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeakHours {
    pub start_hour: u8,
    pub end_hour: u8,
}

impl Default for PeakHours {
    fn default() -> Self {
        PeakHours {
            start_hour: 18,
            end_hour: 23,
        }
    }
}

impl PeakHours {
    pub fn is_peak(&self, clock: i64) -> bool {
        let hour = clock.rem_euclid(86_400) / 3600;
        (i64::from(self.start_hour)..i64::from(self.end_hour)).contains(&hour)
    }
}

/// What the rehearsal scheduler knows about a user between requests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    pub user_id: String,
    pub segment: u32,
    pub profile: TargetingProfile,
    pub tier: ActivityTier,
    pub last_request: Option<Request>,
    /// Organic content viewed since the last request, oldest first.
    pub fresh_organic: Vec<CodePath>,
}

/// Builds a synthetic request: the U token of the previous request, its O
/// tokens advanced by the fresh organic views (the window keeps the previous
/// number of O tokens), and an E token from the current environment.
pub fn synthesize_request(user: &UserState, env: EnvContext, clock: i64, request_id: u64) -> Result<Request> {
    let prev = user
        .last_request
        .as_ref()
        .ok_or_else(|| GprError::invalid(format!("user {} has no prior request", user.user_id)))?;
    if clock < prev.timestamp {
        return Err(GprError::invalid("synthetic request precedes the previous request"));
    }
    let pj = &prev.journey;
    let mut tokens = Vec::new();
    let mut stamps = Vec::new();
    for (t, &ts) in pj.tokens.iter().zip(&pj.timestamps) {
        if t.kind() == TokenKind::U {
            tokens.push(t.clone());
            stamps.push(ts);
        }
    }
    let mut organic: Vec<(Token, i64)> = pj
        .tokens
        .iter()
        .zip(&pj.timestamps)
        .filter(|(t, _)| t.kind() == TokenKind::O)
        .map(|(t, &ts)| (t.clone(), ts))
        .collect();
    let keep = if organic.is_empty() { user.fresh_organic.len() } else { organic.len() };
    organic.extend(user.fresh_organic.iter().map(|p| (Token::Organic(p.clone()), clock)));
    let drop = organic.len().saturating_sub(keep);
    for (t, ts) in organic.into_iter().skip(drop) {
        tokens.push(t);
        stamps.push(ts);
    }
    tokens.push(Token::Env(env));
    stamps.push(clock);
    Ok(Request {
        request_id,
        user_id: user.user_id.clone(),
        segment: user.segment,
        profile: user.profile,
        journey: UserJourney::new(user.user_id.clone(), tokens, stamps)?,
        timestamp: clock,
        synthetic: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::UserProfile;

    #[test]
    fn schedule_intervals() {
        assert_eq!(arr_schedule(ActivityTier::High, 0, true).unwrap(), 7200);
        assert_eq!(arr_schedule(ActivityTier::High, 0, false).unwrap(), 14400);
        let half = ActivityTier::Low { relative_rate: 0.5 };
        assert_eq!(arr_schedule(half, 0, true).unwrap(), 14400);
        assert_eq!(arr_schedule(half, 100, false).unwrap(), 100 + 28800);
        assert!(arr_schedule(ActivityTier::Low { relative_rate: 0.0 }, 0, true).is_err());
        assert!(arr_schedule(ActivityTier::Low { relative_rate: 1.5 }, 0, true).is_err());
    }

    #[test]
    fn peak_hours() {
        let p = PeakHours::default();
        assert!(p.is_peak(18 * 3600));
        assert!(!p.is_peak(23 * 3600));
        assert!(p.is_peak(86_400 + 20 * 3600));
    }

    fn env(placement: u32) -> EnvContext {
        EnvContext {
            placement_id: placement,
            hour_of_day: 10,
            privacy: false,
        }
    }

    fn user(fresh: Vec<CodePath>) -> UserState {
        let u = Token::User(UserProfile {
            age_bucket: 3,
            gender: 1,
            activity_tier: 0,
        });
        let tokens = vec![
            u,
            Token::Organic(CodePath::new(vec![0, 1])),
            Token::Organic(CodePath::new(vec![1, 1])),
            Token::Env(env(1)),
        ];
        let journey = UserJourney::new("u", tokens, vec![0, 10, 20, 30]).unwrap();
        UserState {
            user_id: "u".into(),
            segment: 1,
            profile: TargetingProfile::default(),
            tier: ActivityTier::High,
            last_request: Some(Request {
                request_id: 1,
                user_id: "u".into(),
                segment: 1,
                profile: TargetingProfile::default(),
                journey,
                timestamp: 30,
                synthetic: false,
            }),
            fresh_organic: fresh,
        }
    }

    fn parts(r: &Request) -> (Vec<Token>, Vec<Token>, Vec<Token>) {
        let pick = |k| r.journey.tokens.iter().filter(|t| t.kind() == k).cloned().collect();
        (pick(TokenKind::U), pick(TokenKind::O), pick(TokenKind::E))
    }

    #[test]
    fn without_fresh_views_organic_is_unchanged() {
        let s = user(vec![]);
        let r = synthesize_request(&s, env(1), 100, 2).unwrap();
        let prev = parts(s.last_request.as_ref().unwrap());
        let now = parts(&r);
        assert_eq!(now.0, prev.0);
        assert_eq!(now.1, prev.1);
        assert!(r.synthetic);
    }

    #[test]
    fn fresh_views_and_snapshot_flow_in() {
        let s = user(vec![CodePath::new(vec![1, 0])]);
        let r = synthesize_request(&s, env(7), 100, 2).unwrap();
        let prev = parts(s.last_request.as_ref().unwrap());
        let (u, o, e) = parts(&r);
        assert_eq!(u, prev.0);
        assert_eq!(
            o,
            vec![Token::Organic(CodePath::new(vec![1, 1])), Token::Organic(CodePath::new(vec![1, 0]))]
        );
        assert_eq!(e, vec![Token::Env(env(7))]);
    }

    #[test]
    fn requires_prior_request() {
        let mut s = user(vec![]);
        s.last_request = None;
        assert!(synthesize_request(&s, env(1), 100, 2).is_err());
    }
}
