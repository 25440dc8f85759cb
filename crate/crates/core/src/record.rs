//! Line-level record types shared by ingestion, cohorting and synthesis.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// Decade age bands used for stratification, plus an `Unknown` bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeBand {
    #[serde(rename = "0-9")]
    A0_9,
    #[serde(rename = "10-19")]
    A10_19,
    #[serde(rename = "20-29")]
    A20_29,
    #[serde(rename = "30-39")]
    A30_39,
    #[serde(rename = "40-49")]
    A40_49,
    #[serde(rename = "50-59")]
    A50_59,
    #[serde(rename = "60-69")]
    A60_69,
    #[serde(rename = "70-79")]
    A70_79,
    #[serde(rename = "80+")]
    A80Plus,
    #[serde(rename = "unknown")]
    Unknown,
}

impl AgeBand {
    /// Every band, known ones first in ascending order, `Unknown` last.
    pub const ALL: [AgeBand; 10] = [
        AgeBand::A0_9,
        AgeBand::A10_19,
        AgeBand::A20_29,
        AgeBand::A30_39,
        AgeBand::A40_49,
        AgeBand::A50_59,
        AgeBand::A60_69,
        AgeBand::A70_79,
        AgeBand::A80Plus,
        AgeBand::Unknown,
    ];

    pub const KNOWN: [AgeBand; 9] = [
        AgeBand::A0_9,
        AgeBand::A10_19,
        AgeBand::A20_29,
        AgeBand::A30_39,
        AgeBand::A40_49,
        AgeBand::A50_59,
        AgeBand::A60_69,
        AgeBand::A70_79,
        AgeBand::A80Plus,
    ];

    pub fn from_years(age: u32) -> AgeBand {
        match age {
            0..=9 => AgeBand::A0_9,
            10..=19 => AgeBand::A10_19,
            20..=29 => AgeBand::A20_29,
            30..=39 => AgeBand::A30_39,
            40..=49 => AgeBand::A40_49,
            50..=59 => AgeBand::A50_59,
            60..=69 => AgeBand::A60_69,
            70..=79 => AgeBand::A70_79,
            _ => AgeBand::A80Plus,
        }
    }

    /// Inclusive lower bound and (for closed bands) inclusive upper bound.
    pub fn bounds(self) -> Option<(u32, Option<u32>)> {
        match self {
            AgeBand::Unknown => None,
            AgeBand::A80Plus => Some((80, None)),
            b => {
                let lo = 10 * b.index() as u32;
                Some((lo, Some(lo + 9)))
            }
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<AgeBand> {
        AgeBand::ALL.get(i).copied()
    }

    pub fn is_known(self) -> bool {
        self != AgeBand::Unknown
    }

    pub fn label(self) -> &'static str {
        match self {
            AgeBand::A0_9 => "0-9",
            AgeBand::A10_19 => "10-19",
            AgeBand::A20_29 => "20-29",
            AgeBand::A30_39 => "30-39",
            AgeBand::A40_49 => "40-49",
            AgeBand::A50_59 => "50-59",
            AgeBand::A60_69 => "60-69",
            AgeBand::A70_79 => "70-79",
            AgeBand::A80Plus => "80+",
            AgeBand::Unknown => "unknown",
        }
    }
}

impl fmt::Display for AgeBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AgeBand {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AgeBand::ALL
            .iter()
            .copied()
            .find(|b| b.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown age band `{s}`"))
    }
}

/// Age as delivered by a source file: integer years or a pre-binned band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgeRaw {
    Years(u32),
    Band(AgeBand),
    Unknown,
}

impl AgeRaw {
    pub fn band(self) -> AgeBand {
        match self {
            AgeRaw::Years(y) => AgeBand::from_years(y),
            AgeRaw::Band(b) => b,
            AgeRaw::Unknown => AgeBand::Unknown,
        }
    }
}

/// Gender as spelled in the source, before merging unknown/missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenderRaw {
    Female,
    Male,
    Unknown,
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
    OtherUnknown,
}

impl From<GenderRaw> for Gender {
    fn from(g: GenderRaw) -> Self {
        match g {
            GenderRaw::Female => Gender::Female,
            GenderRaw::Male => Gender::Male,
            GenderRaw::Unknown | GenderRaw::Missing => Gender::OtherUnknown,
        }
    }
}

impl Gender {
    pub fn label(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
            Gender::OtherUnknown => "unknown",
        }
    }
}

/// The four answer categories for eventual hospitalization / death.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeRaw {
    Yes,
    No,
    Unknown,
    Missing,
}

impl OutcomeRaw {
    pub const ALL: [OutcomeRaw; 4] = [
        OutcomeRaw::Yes,
        OutcomeRaw::No,
        OutcomeRaw::Unknown,
        OutcomeRaw::Missing,
    ];

    pub fn label(self) -> &'static str {
        match self {
            OutcomeRaw::Yes => "yes",
            OutcomeRaw::No => "no",
            OutcomeRaw::Unknown => "unknown",
            OutcomeRaw::Missing => "missing",
        }
    }
}

/// Collapse an outcome category to a boolean: only an explicit "yes" counts.
pub fn recode_outcome(raw: OutcomeRaw) -> bool {
    matches!(raw, OutcomeRaw::Yes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfirmationKind {
    PcrPositive,
    Other,
}

/// Two-letter state / jurisdiction code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateCode([u8; 2]);

impl StateCode {
    pub fn new(code: &str) -> Option<StateCode> {
        let b = code.trim().as_bytes();
        if b.len() != 2 || !b.iter().all(|c| c.is_ascii_alphabetic()) {
            return None;
        }
        Some(StateCode([b[0].to_ascii_uppercase(), b[1].to_ascii_uppercase()]))
    }

    pub fn as_bytes(&self) -> [u8; 2] {
        self.0
    }

    pub fn from_bytes(b: [u8; 2]) -> Option<StateCode> {
        std::str::from_utf8(&b).ok().and_then(StateCode::new)
    }

    pub fn as_str(&self) -> &str {
        // constructed only from ASCII letters
        std::str::from_utf8(&self.0).unwrap_or("??")
    }
}

impl fmt::Display for StateCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for StateCode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for StateCode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        StateCode::new(&s).ok_or_else(|| serde::de::Error::custom(format!("bad state code `{s}`")))
    }
}

/// One parsed row, categories preserved as spelled in the source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawLineRecord {
    pub event_date: NaiveDate,
    pub age: AgeRaw,
    pub gender: GenderRaw,
    pub hospitalized: OutcomeRaw,
    pub died: OutcomeRaw,
    pub state: Option<StateCode>,
    pub confirmation: ConfirmationKind,
}

impl RawLineRecord {
    pub fn recode(&self) -> LineRecord {
        LineRecord {
            event_date: self.event_date,
            age_band: self.age.band(),
            gender: self.gender.into(),
            hospitalized: recode_outcome(self.hospitalized),
            died: recode_outcome(self.died),
            state: self.state,
        }
    }
}

/// A confirmed case after outcome recoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineRecord {
    pub event_date: NaiveDate,
    pub age_band: AgeBand,
    pub gender: Gender,
    pub hospitalized: bool,
    pub died: bool,
    pub state: Option<StateCode>,
}

/// Anything carrying an event date, so cohort filters apply to raw and recoded records alike.
pub trait Dated {
    fn event_date(&self) -> NaiveDate;
}

impl Dated for RawLineRecord {
    fn event_date(&self) -> NaiveDate {
        self.event_date
    }
}

impl Dated for LineRecord {
    fn event_date(&self) -> NaiveDate {
        self.event_date
    }
}

pub trait HasState {
    fn state(&self) -> Option<StateCode>;
}

impl HasState for RawLineRecord {
    fn state(&self) -> Option<StateCode> {
        self.state
    }
}

impl HasState for LineRecord {
    fn state(&self) -> Option<StateCode> {
        self.state
    }
}
