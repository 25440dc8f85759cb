//! Declarative column and category mappings for line-level files.
//!
//! A schema is a small TOML document; the two built-in schemas can be
//! dumped with [`SchemaConfig::to_toml`] and edited when public column
//! names drift.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{ConfirmationKind, GenderRaw, OutcomeRaw};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub name: String,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default = "default_date_formats")]
    pub date_formats: Vec<String>,
    pub columns: ColumnMap,
    pub outcome: CategorySpellings,
    pub gender: CategorySpellings,
    #[serde(default)]
    pub confirmation: Option<ConfirmationSpellings>,
    /// Use the alternate date column (e.g. positive specimen date) as event date.
    #[serde(default)]
    pub use_alternate_date: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub event_date: String,
    #[serde(default)]
    pub alternate_event_date: Option<String>,
    pub age: String,
    pub gender: String,
    pub hospitalized: String,
    pub died: String,
    #[serde(default)]
    pub state: Option<String>,
    #[serde(default)]
    pub confirmation: Option<String>,
}

/// Spellings for a four-way category. Matching trims and ignores ASCII case.
/// For genders, `yes`/`no` are read as female/male.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySpellings {
    pub yes: Vec<String>,
    pub no: Vec<String>,
    pub unknown: Vec<String>,
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfirmationSpellings {
    pub pcr_positive: Vec<String>,
}

fn default_delimiter() -> char {
    ','
}

fn default_date_formats() -> Vec<String> {
    ["%Y-%m-%d", "%Y/%m/%d", "%m/%d/%Y", "%Y%m%d"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl CategorySpellings {
    fn classify(&self, value: &str) -> Option<OutcomeRaw> {
        let v = value.trim();
        let hit = |list: &[String]| list.iter().any(|s| s.trim().eq_ignore_ascii_case(v));
        if hit(&self.yes) {
            Some(OutcomeRaw::Yes)
        } else if hit(&self.no) {
            Some(OutcomeRaw::No)
        } else if hit(&self.unknown) {
            Some(OutcomeRaw::Unknown)
        } else if hit(&self.missing) {
            Some(OutcomeRaw::Missing)
        } else {
            None
        }
    }
}

impl SchemaConfig {
    /// Florida Department of Health case line export.
    pub fn florida() -> SchemaConfig {
        SchemaConfig {
            name: "florida".into(),
            delimiter: ',',
            date_formats: default_date_formats(),
            columns: ColumnMap {
                event_date: "Case1".into(),
                alternate_event_date: None,
                age: "Age".into(),
                gender: "Gender".into(),
                hospitalized: "Hospitalized".into(),
                died: "Died".into(),
                state: None,
                confirmation: None,
            },
            outcome: CategorySpellings {
                yes: strings(&["YES", "Y"]),
                no: strings(&["NO", "N"]),
                unknown: strings(&["UNKNOWN", "UNK"]),
                missing: strings(&["", "NA", "MISSING"]),
            },
            gender: CategorySpellings {
                yes: strings(&["Female", "F"]),
                no: strings(&["Male", "M"]),
                unknown: strings(&["Unknown", "Other", "UNK"]),
                missing: strings(&["", "NA", "Missing"]),
            },
            confirmation: None,
            use_alternate_date: false,
        }
    }

    /// CDC case surveillance public-use export.
    pub fn cdc() -> SchemaConfig {
        SchemaConfig {
            name: "cdc".into(),
            delimiter: ',',
            date_formats: default_date_formats(),
            columns: ColumnMap {
                event_date: "cdc_report_dt".into(),
                alternate_event_date: Some("pos_spec_dt".into()),
                age: "age_group".into(),
                gender: "sex".into(),
                hospitalized: "hosp_yn".into(),
                died: "death_yn".into(),
                state: Some("res_state".into()),
                confirmation: Some("current_status".into()),
            },
            outcome: CategorySpellings {
                yes: strings(&["Yes"]),
                no: strings(&["No"]),
                unknown: strings(&["Unknown"]),
                missing: strings(&["Missing", "", "NA"]),
            },
            gender: CategorySpellings {
                yes: strings(&["Female"]),
                no: strings(&["Male"]),
                unknown: strings(&["Unknown", "Other"]),
                missing: strings(&["Missing", "", "NA"]),
            },
            confirmation: Some(ConfirmationSpellings {
                pcr_positive: strings(&["Laboratory-confirmed case"]),
            }),
            use_alternate_date: false,
        }
    }

    pub fn builtin(name: &str) -> Option<SchemaConfig> {
        match name {
            "florida" => Some(SchemaConfig::florida()),
            "cdc" => Some(SchemaConfig::cdc()),
            _ => None,
        }
    }

    pub fn from_toml(text: &str) -> Result<SchemaConfig> {
        let cfg: SchemaConfig =
            toml::from_str(text).map_err(|e| Error::SchemaConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("schema config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !self.delimiter.is_ascii() {
            return Err(Error::SchemaConfig("delimiter must be a single ASCII character".into()));
        }
        if self.date_formats.is_empty() {
            return Err(Error::SchemaConfig("at least one date format is required".into()));
        }
        if self.use_alternate_date && self.columns.alternate_event_date.is_none() {
            return Err(Error::SchemaConfig(
                "use_alternate_date set but no alternate_event_date column configured".into(),
            ));
        }
        if self.columns.confirmation.is_some() != self.confirmation.is_some() {
            return Err(Error::SchemaConfig(
                "confirmation column and confirmation spellings must be given together".into(),
            ));
        }
        Ok(())
    }

    pub fn delimiter_byte(&self) -> u8 {
        self.delimiter as u8
    }

    /// Map header names to field indices.
    pub fn resolve(&self, header: &csv::StringRecord) -> Result<ResolvedSchema> {
        let find = |field: &'static str, name: &str| -> Result<usize> {
            header
                .iter()
                .position(|h| h.trim().trim_start_matches('\u{feff}') == name)
                .ok_or_else(|| Error::MissingColumn { field, column: name.to_string() })
        };
        let c = &self.columns;
        let date_col = if self.use_alternate_date {
            let alt = c.alternate_event_date.as_deref().unwrap_or_default();
            find("alternate_event_date", alt)?
        } else {
            find("event_date", &c.event_date)?
        };
        Ok(ResolvedSchema {
            event_date: date_col,
            age: find("age", &c.age)?,
            gender: find("gender", &c.gender)?,
            hospitalized: find("hospitalized", &c.hospitalized)?,
            died: find("died", &c.died)?,
            state: c.state.as_deref().map(|s| find("state", s)).transpose()?,
            confirmation: c.confirmation.as_deref().map(|s| find("confirmation", s)).transpose()?,
            width: header.len(),
        })
    }

    pub fn parse_date(&self, value: &str) -> Option<NaiveDate> {
        parse_date_with(&self.date_formats, value)
    }

    pub fn classify_outcome(&self, value: &str) -> Option<OutcomeRaw> {
        self.outcome.classify(value)
    }

    pub fn classify_gender(&self, value: &str) -> Option<GenderRaw> {
        self.gender.classify(value).map(|c| match c {
            OutcomeRaw::Yes => GenderRaw::Female,
            OutcomeRaw::No => GenderRaw::Male,
            OutcomeRaw::Unknown => GenderRaw::Unknown,
            OutcomeRaw::Missing => GenderRaw::Missing,
        })
    }

    pub fn classify_confirmation(&self, value: &str) -> ConfirmationKind {
        match &self.confirmation {
            None => ConfirmationKind::PcrPositive,
            Some(c) => {
                let v = value.trim();
                if c.pcr_positive.iter().any(|s| s.trim().eq_ignore_ascii_case(v)) {
                    ConfirmationKind::PcrPositive
                } else {
                    ConfirmationKind::Other
                }
            }
        }
    }
}

/// Parse a date, ignoring any time-of-day suffix after a space or `T`.
pub fn parse_date_with(formats: &[String], value: &str) -> Option<NaiveDate> {
    let v = value.trim();
    let day_part = v.split([' ', 'T']).next().unwrap_or("");
    if day_part.is_empty() {
        return None;
    }
    formats
        .iter()
        .find_map(|f| NaiveDate::parse_from_str(day_part, f).ok())
}

#[derive(Debug, Clone, Copy)]
pub struct ResolvedSchema {
    pub event_date: usize,
    pub age: usize,
    pub gender: usize,
    pub hospitalized: usize,
    pub died: usize,
    pub state: Option<usize>,
    pub confirmation: Option<usize>,
    pub width: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_roundtrip_through_toml() {
        for cfg in [SchemaConfig::florida(), SchemaConfig::cdc()] {
            let text = cfg.to_toml();
            assert_eq!(SchemaConfig::from_toml(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn dates_with_time_suffix() {
        let f = default_date_formats();
        let d = NaiveDate::from_ymd_opt(2020, 5, 1).unwrap();
        assert_eq!(parse_date_with(&f, "2020/05/01 05:00:00+00"), Some(d));
        assert_eq!(parse_date_with(&f, "2020-05-01T00:00:00.000"), Some(d));
        assert_eq!(parse_date_with(&f, "05/01/2020 12:00:00 AM"), Some(d));
        assert_eq!(parse_date_with(&f, "20200501"), Some(d));
        assert_eq!(parse_date_with(&f, "13/45/2020"), None);
        assert_eq!(parse_date_with(&f, ""), None);
    }

    #[test]
    fn category_matching_ignores_case_and_space() {
        let s = SchemaConfig::florida();
        assert_eq!(s.classify_outcome(" yes "), Some(OutcomeRaw::Yes));
        assert_eq!(s.classify_outcome(""), Some(OutcomeRaw::Missing));
        assert_eq!(s.classify_outcome("Unknown"), Some(OutcomeRaw::Unknown));
        assert_eq!(s.classify_outcome("maybe"), None);
        assert_eq!(s.classify_gender("F"), Some(GenderRaw::Female));
    }

    #[test]
    fn bad_config_is_rejected() {
        let mut cfg = SchemaConfig::florida();
        cfg.use_alternate_date = true;
        assert!(matches!(cfg.validate(), Err(Error::SchemaConfig(_))));
        assert!(SchemaConfig::from_toml("name = 3").is_err());
    }
}
