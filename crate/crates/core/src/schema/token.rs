use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{GprError, Result};
use crate::quantizer::CodePath;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TokenKind {
    U,
    O,
    E,
    I,
}

impl TokenKind {
    pub const ALL: [TokenKind; 4] = [TokenKind::U, TokenKind::O, TokenKind::E, TokenKind::I];

    /// U, O and E tokens form the prompt region that attends bidirectionally.
    pub fn is_prefix(self) -> bool {
        !matches!(self, TokenKind::I)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionType {
    Impression,
    Click,
    Conversion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct UserProfile {
    pub age_bucket: u8,
    pub gender: u8,
    pub activity_tier: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct EnvContext {
    pub placement_id: u32,
    pub hour_of_day: u8,
    pub privacy: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdInteraction {
    pub path: CodePath,
    pub action: ActionType,
    pub ecpm: f64,
    pub pctr: f64,
    pub pcvr: f64,
}

impl AdInteraction {
    pub fn validate(&self) -> Result<()> {
        if !(self.ecpm >= 0.0 && self.ecpm.is_finite()) {
            return Err(GprError::invalid(format!("eCPM {} must be finite and non-negative", self.ecpm)));
        }
        for (name, p) in [("pCTR", self.pctr), ("pCVR", self.pcvr)] {
            if !(p > 0.0 && p <= 1.0) {
                return Err(GprError::invalid(format!("{name} {p} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Token {
    User(UserProfile),
    Organic(CodePath),
    Env(EnvContext),
    Ad(AdInteraction),
}

impl Token {
    pub fn kind(&self) -> TokenKind {
        match self {
            Token::User(_) => TokenKind::U,
            Token::Organic(_) => TokenKind::O,
            Token::Env(_) => TokenKind::E,
            Token::Ad(_) => TokenKind::I,
        }
    }

    pub fn path(&self) -> Option<&CodePath> {
        match self {
            Token::Organic(p) => Some(p),
            Token::Ad(a) => Some(&a.path),
            _ => None,
        }
    }

    /// Checks payload invariants, and code paths against `level_sizes` when given.
    pub fn validate(&self, level_sizes: Option<&[usize]>) -> Result<()> {
        if let Token::Ad(a) = self {
            a.validate()?;
        }
        if let (Some(p), Some(sizes)) = (self.path(), level_sizes) {
            p.validate(sizes)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserJourney {
    pub user_id: String,
    pub tokens: Vec<Token>,
    pub timestamps: Vec<i64>,
}

impl UserJourney {
    pub fn new(user_id: impl Into<String>, tokens: Vec<Token>, timestamps: Vec<i64>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(GprError::invalid("a journey needs at least one token"));
        }
        if tokens.len() != timestamps.len() {
            return Err(GprError::invalid("token and timestamp counts differ"));
        }
        if timestamps.windows(2).any(|w| w[1] < w[0]) {
            return Err(GprError::invalid("journey timestamps must be non-decreasing"));
        }
        Ok(UserJourney {
            user_id: user_id.into(),
            tokens,
            timestamps,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn kinds(&self) -> Vec<TokenKind> {
        self.tokens.iter().map(Token::kind).collect()
    }

    pub fn profile(&self) -> Option<UserProfile> {
        self.tokens.iter().find_map(|t| match t {
            Token::User(p) => Some(*p),
            _ => None,
        })
    }

    pub fn last_timestamp(&self) -> i64 {
        *self.timestamps.last().expect("journeys are non-empty")
    }
}

/// One line of an event log. Payload fields are optional and checked
/// against `kind` when the journey is assembled.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RawEvent {
    pub user_id: String,
    pub ts: i64,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age_bucket: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activity_tier: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hour_of_day: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub privacy: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ActionType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ecpm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pctr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pcvr: Option<f64>,
}

impl RawEvent {
    pub fn from_token(user_id: &str, ts: i64, token: &Token) -> Self {
        let mut ev = RawEvent {
            user_id: user_id.to_string(),
            ts,
            ..Default::default()
        };
        match token {
            Token::User(p) => {
                ev.kind = "U".into();
                ev.age_bucket = Some(p.age_bucket);
                ev.gender = Some(p.gender);
                ev.activity_tier = Some(p.activity_tier);
            }
            Token::Organic(path) => {
                ev.kind = "O".into();
                ev.path = Some(path.0.clone());
            }
            Token::Env(e) => {
                ev.kind = "E".into();
                ev.placement_id = Some(e.placement_id);
                ev.hour_of_day = Some(e.hour_of_day);
                ev.privacy = Some(e.privacy);
            }
            Token::Ad(a) => {
                ev.kind = "I".into();
                ev.path = Some(a.path.0.clone());
                ev.action = Some(a.action);
                ev.ecpm = Some(a.ecpm);
                ev.pctr = Some(a.pctr);
                ev.pcvr = Some(a.pcvr);
            }
        }
        ev
    }

    fn field<T: Copy>(&self, v: Option<T>, name: &str) -> Result<T> {
        v.ok_or_else(|| GprError::invalid(format!("{} event at ts {} lacks {name}", self.kind, self.ts)))
    }

    pub fn to_token(&self) -> Result<Token> {
        let token = match self.kind.as_str() {
            "U" => Token::User(UserProfile {
                age_bucket: self.field(self.age_bucket, "age_bucket")?,
                gender: self.field(self.gender, "gender")?,
                activity_tier: self.field(self.activity_tier, "activity_tier")?,
            }),
            "O" => Token::Organic(CodePath(self.path_field()?)),
            "E" => Token::Env(EnvContext {
                placement_id: self.field(self.placement_id, "placement_id")?,
                hour_of_day: self.field(self.hour_of_day, "hour_of_day")?,
                privacy: self.privacy.unwrap_or(false),
            }),
            "I" => Token::Ad(AdInteraction {
                path: CodePath(self.path_field()?),
                action: self.field(self.action, "action")?,
                ecpm: self.field(self.ecpm, "ecpm")?,
                pctr: self.field(self.pctr, "pctr")?,
                pcvr: self.field(self.pcvr, "pcvr")?,
            }),
            other => return Err(GprError::invalid(format!("unknown event kind {other:?}"))),
        };
        Ok(token)
    }

    fn path_field(&self) -> Result<Vec<u32>> {
        self.path
            .clone()
            .ok_or_else(|| GprError::invalid(format!("{} event at ts {} lacks path", self.kind, self.ts)))
    }
}

/// Assembles a validated journey from raw events of a single user.
///
/// Events are sorted stably by timestamp, then U tokens are moved to the
/// front; their timestamps are clamped to the earliest event so the journey
/// stays chronological.
pub fn build_sequence(events: &[RawEvent], level_sizes: Option<&[usize]>) -> Result<UserJourney> {
    let first = events.first().ok_or_else(|| GprError::invalid("no events to build a journey from"))?;
    if let Some(ev) = events.iter().find(|e| e.user_id != first.user_id) {
        return Err(GprError::invalid(format!(
            "events of users {:?} and {:?} mixed in one journey",
            first.user_id, ev.user_id
        )));
    }
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by_key(|&i| events[i].ts);
    let min_ts = events[order[0]].ts;
    let mut head = Vec::new();
    let mut tail = Vec::new();
    for i in order {
        let ev = &events[i];
        let token = ev.to_token()?;
        token.validate(level_sizes)?;
        if token.kind() == TokenKind::U {
            head.push((min_ts, token));
        } else {
            tail.push((ev.ts, token));
        }
    }
    let (timestamps, tokens) = head.into_iter().chain(tail).unzip();
    UserJourney::new(first.user_id.clone(), tokens, timestamps)
}

pub fn read_events_jsonl<R: BufRead>(reader: R) -> Result<Vec<RawEvent>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev: RawEvent = serde_json::from_str(&line)
            .map_err(|e| GprError::Format(format!("event log line {}: {e}", n + 1)))?;
        out.push(ev);
    }
    Ok(out)
}

pub fn write_events_jsonl<W: Write>(events: &[RawEvent], mut writer: W) -> Result<()> {
    for ev in events {
        serde_json::to_writer(&mut writer, ev)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Groups events by user, preserving log order within each user.
pub fn group_events(events: Vec<RawEvent>) -> BTreeMap<String, Vec<RawEvent>> {
    let mut out: BTreeMap<String, Vec<RawEvent>> = BTreeMap::new();
    for ev in events {
        out.entry(ev.user_id.clone()).or_default().push(ev);
    }
    out
}
