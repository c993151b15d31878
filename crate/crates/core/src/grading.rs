//! Gleason patterns, Gleason scores and ISUP grade groups.

use std::fmt;
use std::str::FromStr;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GradingError {
    #[error("benign cannot be combined with Gleason pattern {0}")]
    MixedBenign(Pattern),
    #[error("unrecognised grading value {0:?}")]
    Parse(String),
}

/// One Gleason-pattern class as predicted by a classification head.
///
/// Ordered benign < 3 < 4 < 5; the derived `Ord` is relied upon for tie-breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pattern {
    Benign,
    P3,
    P4,
    P5,
}

impl Pattern {
    /// Class order used by head logits.
    pub const ALL: [Pattern; 4] = [Pattern::Benign, Pattern::P3, Pattern::P4, Pattern::P5];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Pattern> {
        Self::ALL.get(i).copied()
    }

    pub fn is_benign(self) -> bool {
        self == Pattern::Benign
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pattern::Benign => "benign",
            Pattern::P3 => "3",
            Pattern::P4 => "4",
            Pattern::P5 => "5",
        })
    }
}

impl FromStr for Pattern {
    type Err = GradingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "benign" | "0" => Ok(Pattern::Benign),
            "3" => Ok(Pattern::P3),
            "4" => Ok(Pattern::P4),
            "5" => Ok(Pattern::P5),
            _ => Err(GradingError::Parse(s.to_string())),
        }
    }
}

/// ISUP grade group, with benign as the lowest value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Isup {
    Benign,
    G1,
    G2,
    G3,
    G4,
    G5,
}

impl Isup {
    pub const ALL: [Isup; 6] = [Isup::Benign, Isup::G1, Isup::G2, Isup::G3, Isup::G4, Isup::G5];
    pub const MALIGNANT: [Isup; 5] = [Isup::G1, Isup::G2, Isup::G3, Isup::G4, Isup::G5];

    /// Grade number, 0 for benign.
    pub fn grade(self) -> u8 {
        self as u8
    }

    pub fn from_grade(g: u8) -> Option<Isup> {
        Self::ALL.get(g as usize).copied()
    }

    pub fn is_benign(self) -> bool {
        self == Isup::Benign
    }
}

impl fmt::Display for Isup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Isup::Benign => f.write_str("benign"),
            g => write!(f, "{}", g.grade()),
        }
    }
}

impl FromStr for Isup {
    type Err = GradingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        let t = t.strip_prefix("isup").map(str::trim).unwrap_or(&t);
        let t = t.strip_prefix('_').unwrap_or(t);
        if t == "benign" {
            return Ok(Isup::Benign);
        }
        t.parse::<u8>()
            .ok()
            .filter(|g| (1..=5).contains(g))
            .and_then(Isup::from_grade)
            .ok_or_else(|| GradingError::Parse(s.to_string()))
    }
}

/// A slide-level Gleason score: benign, or a primary + secondary pattern pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GleasonScore {
    Benign,
    Cancer { primary: Pattern, secondary: Pattern },
}

impl GleasonScore {
    pub fn new(primary: Pattern, secondary: Pattern) -> Result<Self, GradingError> {
        match (primary, secondary) {
            (Pattern::Benign, Pattern::Benign) => Ok(GleasonScore::Benign),
            (Pattern::Benign, p) | (p, Pattern::Benign) => Err(GradingError::MixedBenign(p)),
            (primary, secondary) => Ok(GleasonScore::Cancer { primary, secondary }),
        }
    }

    pub fn isup(self) -> Isup {
        match self {
            GleasonScore::Benign => Isup::Benign,
            GleasonScore::Cancer { primary, secondary } => {
                gleason_to_isup(primary, secondary).expect("validated on construction")
            }
        }
    }

    /// Key that orders scores by ISUP translation, then by primary and
    /// secondary pattern. Used to break majority-vote ties.
    pub fn severity_key(self) -> (Isup, Pattern, Pattern) {
        match self {
            GleasonScore::Benign => (Isup::Benign, Pattern::Benign, Pattern::Benign),
            GleasonScore::Cancer { primary, secondary } => (self.isup(), primary, secondary),
        }
    }
}

impl fmt::Display for GleasonScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GleasonScore::Benign => f.write_str("benign"),
            GleasonScore::Cancer { primary, secondary } => write!(f, "{primary}+{secondary}"),
        }
    }
}

impl FromStr for GleasonScore {
    type Err = GradingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("benign") {
            return Ok(GleasonScore::Benign);
        }
        let (a, b) = t
            .split_once('+')
            .ok_or_else(|| GradingError::Parse(s.to_string()))?;
        let (a, b): (Pattern, Pattern) = (a.parse()?, b.parse()?);
        if a.is_benign() || b.is_benign() {
            return Err(GradingError::Parse(s.to_string()));
        }
        GleasonScore::new(a, b)
    }
}

/// Translate a Gleason pattern pair into an ISUP grade group.
///
/// 3+3 → 1, 3+4 → 2, 4+3 → 3, {4+4, 3+5, 5+3} → 4, {4+5, 5+4, 5+5} → 5.
pub fn gleason_to_isup(primary: Pattern, secondary: Pattern) -> Result<Isup, GradingError> {
    use Pattern::*;
    Ok(match (primary, secondary) {
        (Benign, Benign) => Isup::Benign,
        (Benign, p) | (p, Benign) => return Err(GradingError::MixedBenign(p)),
        (P3, P3) => Isup::G1,
        (P3, P4) => Isup::G2,
        (P4, P3) => Isup::G3,
        (P4, P4) | (P3, P5) | (P5, P3) => Isup::G4,
        (P4, P5) | (P5, P4) | (P5, P5) => Isup::G5,
    })
}

macro_rules! string_serde {
    ($ty:ty, $expecting:literal) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                struct V;
                impl Visitor<'_> for V {
                    type Value = $ty;
                    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                        f.write_str($expecting)
                    }
                    fn visit_str<E: de::Error>(self, v: &str) -> Result<$ty, E> {
                        v.parse().map_err(E::custom)
                    }
                    fn visit_u64<E: de::Error>(self, v: u64) -> Result<$ty, E> {
                        self.visit_str(&v.to_string())
                    }
                    fn visit_i64<E: de::Error>(self, v: i64) -> Result<$ty, E> {
                        self.visit_str(&v.to_string())
                    }
                }
                d.deserialize_any(V)
            }
        }
    };
}

string_serde!(Pattern, "a Gleason pattern (benign, 3, 4 or 5)");
string_serde!(Isup, "an ISUP grade (benign or 1-5)");
string_serde!(GleasonScore, "a Gleason score such as \"3+4\" or \"benign\"");

#[cfg(test)]
mod tests {
    use super::*;
    use Pattern::*;

    #[test]
    fn isup_table_groupings() {
        assert_eq!(gleason_to_isup(P3, P3).unwrap(), Isup::G1);
        assert_eq!(gleason_to_isup(P5, P4).unwrap(), Isup::G5);
        assert_eq!(gleason_to_isup(Benign, Benign).unwrap(), Isup::Benign);
        assert_eq!(gleason_to_isup(P3, P5).unwrap(), Isup::G4);
    }

    #[test]
    fn mixed_benign_is_rejected() {
        assert!(matches!(gleason_to_isup(Benign, P4), Err(GradingError::MixedBenign(P4))));
        assert!(gleason_to_isup(P3, Benign).is_err());
        assert!(GleasonScore::new(P5, Benign).is_err());
    }

    #[test]
    fn parse_and_display() {
        let g: GleasonScore = "4+3".parse().unwrap();
        assert_eq!(g.to_string(), "4+3");
        assert_eq!(g.isup(), Isup::G3);
        assert_eq!("ISUP 2".parse::<Isup>().unwrap(), Isup::G2);
        assert_eq!("isup_5".parse::<Isup>().unwrap(), Isup::G5);
        assert!("6".parse::<Isup>().is_err());
        assert!("3+benign".parse::<GleasonScore>().is_err());
    }

    #[test]
    fn serde_forms() {
        let v = serde_json::to_string(&(Isup::G4, Isup::Benign, GleasonScore::new(P3, P4).unwrap()))
            .unwrap();
        assert_eq!(v, r#"["4","benign","3+4"]"#);
        let back: Isup = serde_json::from_str("3").unwrap();
        assert_eq!(back, Isup::G3);
    }
}
