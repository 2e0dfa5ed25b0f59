use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// One step of the study protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Consent,
    Baseline,
    Instructions,
    Demo,
    Level1,
    Break1,
    Level2,
    Break2,
    Level3,
    Break3,
    Level4,
    Rest,
    Done,
}

/// The only legal phase sequence.
pub const PROTOCOL_ORDER: [Phase; 13] = [
    Phase::Consent,
    Phase::Baseline,
    Phase::Instructions,
    Phase::Demo,
    Phase::Level1,
    Phase::Break1,
    Phase::Level2,
    Phase::Break2,
    Phase::Level3,
    Phase::Break3,
    Phase::Level4,
    Phase::Rest,
    Phase::Done,
];

/// Phases reported in the headline heart-rate table.
pub const HEADLINE_PHASES: [Phase; 6] = [
    Phase::Baseline,
    Phase::Level1,
    Phase::Level2,
    Phase::Level3,
    Phase::Level4,
    Phase::Rest,
];

/// What may end a phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    UserAction,
    TimerExpired,
}

impl Phase {
    pub fn position(self) -> usize {
        PROTOCOL_ORDER.iter().position(|&p| p == self).unwrap()
    }

    pub fn next(self) -> Option<Phase> {
        PROTOCOL_ORDER.get(self.position() + 1).copied()
    }

    /// Quiz level 1..=4 for level phases.
    pub fn level(self) -> Option<u8> {
        match self {
            Phase::Level1 => Some(1),
            Phase::Level2 => Some(2),
            Phase::Level3 => Some(3),
            Phase::Level4 => Some(4),
            _ => None,
        }
    }

    /// Level after which a break is taken.
    pub fn break_after(self) -> Option<u8> {
        match self {
            Phase::Break1 => Some(1),
            Phase::Break2 => Some(2),
            Phase::Break3 => Some(3),
            _ => None,
        }
    }

    pub fn is_break(self) -> bool {
        self.break_after().is_some()
    }

    pub fn accepts(self, trigger: Trigger) -> bool {
        match self {
            Phase::Consent | Phase::Instructions | Phase::Demo => trigger == Trigger::UserAction,
            Phase::Baseline | Phase::Rest => trigger == Trigger::TimerExpired,
            Phase::Break1 | Phase::Break2 | Phase::Break3 => true,
            Phase::Done => false,
            _ => trigger == Trigger::TimerExpired,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Consent => "consent",
            Phase::Baseline => "baseline",
            Phase::Instructions => "instructions",
            Phase::Demo => "demo",
            Phase::Level1 => "level1",
            Phase::Break1 => "break1",
            Phase::Level2 => "level2",
            Phase::Break2 => "break2",
            Phase::Level3 => "level3",
            Phase::Break3 => "break3",
            Phase::Level4 => "level4",
            Phase::Rest => "rest",
            Phase::Done => "done",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PROTOCOL_ORDER
            .iter()
            .copied()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown phase {s:?}"))
    }
}

impl Serialize for Phase {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Phase {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_and_names() {
        assert_eq!(Phase::Consent.next(), Some(Phase::Baseline));
        assert_eq!(Phase::Level4.next(), Some(Phase::Rest));
        assert_eq!(Phase::Done.next(), None);
        for p in PROTOCOL_ORDER {
            assert_eq!(p.as_str().parse::<Phase>(), Ok(p));
        }
        assert_eq!(serde_json::to_string(&Phase::Break2).unwrap(), "\"break2\"");
    }

    #[test]
    fn triggers() {
        assert!(Phase::Consent.accepts(Trigger::UserAction));
        assert!(!Phase::Baseline.accepts(Trigger::UserAction));
        assert!(Phase::Break1.accepts(Trigger::UserAction));
        assert!(Phase::Break1.accepts(Trigger::TimerExpired));
        assert!(!Phase::Level2.accepts(Trigger::UserAction));
        assert!(!Phase::Done.accepts(Trigger::TimerExpired));
    }
}
