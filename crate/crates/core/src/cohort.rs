//! Per-day, per-stratum cohort counts and demographic summaries.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{AgeBand, Gender, LineRecord};
use crate::signals::{ratio_of_smoothed, trailing_average_7d, RateKind, RateSeries, TimeSeries};

/// Smoothed-denominator floor for gender fractions.
pub const GENDER_MIN_DENOMINATOR: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgeStratum {
    Aggregate,
    Band(AgeBand),
}

impl AgeStratum {
    pub fn label(self) -> &'static str {
        match self {
            AgeStratum::Aggregate => "aggregate",
            AgeStratum::Band(b) => b.label(),
        }
    }
}

impl FromStr for AgeStratum {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.trim().eq_ignore_ascii_case("aggregate") {
            Ok(AgeStratum::Aggregate)
        } else {
            s.parse().map(AgeStratum::Band)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GenderStratum {
    Female,
    Male,
    All,
}

impl GenderStratum {
    pub const ALL: [GenderStratum; 3] = [GenderStratum::Female, GenderStratum::Male, GenderStratum::All];

    pub fn label(self) -> &'static str {
        match self {
            GenderStratum::Female => "female",
            GenderStratum::Male => "male",
            GenderStratum::All => "all",
        }
    }
}

impl FromStr for GenderStratum {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "female" => Ok(GenderStratum::Female),
            "male" => Ok(GenderStratum::Male),
            "all" => Ok(GenderStratum::All),
            other => Err(format!("unknown gender stratum `{other}`")),
        }
    }
}

/// Serialized as its display form, e.g. `60-69/female` or `aggregate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct StratumKey {
    pub age: AgeStratum,
    pub gender: GenderStratum,
}

impl StratumKey {
    pub const AGGREGATE: StratumKey = StratumKey { age: AgeStratum::Aggregate, gender: GenderStratum::All };

    pub fn band(band: AgeBand) -> StratumKey {
        StratumKey { age: AgeStratum::Band(band), gender: GenderStratum::All }
    }

    pub fn new(age: AgeStratum, gender: GenderStratum) -> StratumKey {
        StratumKey { age, gender }
    }

    /// All 33 strata: (aggregate + 10 bands) x (female, male, all).
    pub fn all() -> Vec<StratumKey> {
        let ages = std::iter::once(AgeStratum::Aggregate).chain(AgeBand::ALL.iter().map(|b| AgeStratum::Band(*b)));
        ages.flat_map(|a| GenderStratum::ALL.iter().map(move |g| StratumKey::new(a, *g)))
            .collect()
    }
}

impl fmt::Display for StratumKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.gender {
            GenderStratum::All => f.write_str(self.age.label()),
            g => write!(f, "{}/{}", self.age.label(), g.label()),
        }
    }
}

impl FromStr for StratumKey {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.split_once('/') {
            Some((a, g)) => Ok(StratumKey::new(a.parse()?, g.parse()?)),
            None => Ok(StratumKey::new(s.parse()?, GenderStratum::All)),
        }
    }
}

impl From<StratumKey> for String {
    fn from(k: StratumKey) -> String {
        k.to_string()
    }
}

impl TryFrom<String> for StratumKey {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    Cases,
    Hospitalizations,
    Deaths,
    HospitalizedAndDied,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyCounts {
    pub date: NaiveDate,
    pub cases: u64,
    pub eventual_hospitalizations: u64,
    pub eventual_deaths: u64,
    pub hospitalized_and_died: u64,
}

impl DailyCounts {
    pub fn zero(date: NaiveDate) -> Self {
        DailyCounts { date, cases: 0, eventual_hospitalizations: 0, eventual_deaths: 0, hospitalized_and_died: 0 }
    }

    pub fn get(&self, s: Signal) -> u64 {
        match s {
            Signal::Cases => self.cases,
            Signal::Hospitalizations => self.eventual_hospitalizations,
            Signal::Deaths => self.eventual_deaths,
            Signal::HospitalizedAndDied => self.hospitalized_and_died,
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.hospitalized_and_died <= self.eventual_hospitalizations.min(self.eventual_deaths)
            && self.eventual_deaths <= self.cases
            && self.eventual_hospitalizations <= self.cases
    }

    fn add(&mut self, c: [u64; 4]) {
        self.cases += c[0];
        self.eventual_hospitalizations += c[1];
        self.eventual_deaths += c[2];
        self.hospitalized_and_died += c[3];
    }
}

/// Dense per-stratum daily counts over `[start, end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortTable {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub series: BTreeMap<StratumKey, Vec<DailyCounts>>,
}

const N_GENDER: usize = 3;
const N_AGE: usize = 10;

fn gender_index(g: Gender) -> usize {
    match g {
        Gender::Female => 0,
        Gender::Male => 1,
        Gender::OtherUnknown => 2,
    }
}

/// Incremental table construction, so records can be streamed from disk.
#[derive(Debug, Clone)]
pub struct CohortTableBuilder {
    start: NaiveDate,
    end: NaiveDate,
    days: usize,
    // [day][age][gender][signal]
    cells: Vec<[u64; 4]>,
    skipped: u64,
}

impl CohortTableBuilder {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if start > end {
            return Err(Error::InvalidArgument(format!("range start {start} after end {end}")));
        }
        let days = (end - start).num_days() as usize + 1;
        Ok(CohortTableBuilder { start, end, days, cells: vec![[0; 4]; days * N_AGE * N_GENDER], skipped: 0 })
    }

    pub fn push(&mut self, r: &LineRecord) {
        if r.event_date < self.start || r.event_date > self.end {
            self.skipped += 1;
            return;
        }
        let day = (r.event_date - self.start).num_days() as usize;
        let cell = &mut self.cells[(day * N_AGE + r.age_band.index()) * N_GENDER + gender_index(r.gender)];
        cell[0] += 1;
        cell[1] += r.hospitalized as u64;
        cell[2] += r.died as u64;
        cell[3] += (r.hospitalized && r.died) as u64;
    }

    /// Add already aggregated counts for one day and cell. Counts for dates
    /// outside the range are ignored and their cases counted as skipped.
    pub fn push_counts(&mut self, date: NaiveDate, band: AgeBand, gender: Gender, counts: &DailyCounts) {
        if date < self.start || date > self.end {
            self.skipped += counts.cases;
            return;
        }
        let day = (date - self.start).num_days() as usize;
        let cell = &mut self.cells[(day * N_AGE + band.index()) * N_GENDER + gender_index(gender)];
        cell[0] += counts.cases;
        cell[1] += counts.eventual_hospitalizations;
        cell[2] += counts.eventual_deaths;
        cell[3] += counts.hospitalized_and_died;
    }

    /// Records that fell outside the range and were ignored.
    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    pub fn finish(self) -> CohortTable {
        let dates: Vec<NaiveDate> = (0..self.days).map(|i| self.start + Days::new(i as u64)).collect();
        let zero = || dates.iter().map(|d| DailyCounts::zero(*d)).collect::<Vec<_>>();
        let mut series: BTreeMap<StratumKey, Vec<DailyCounts>> =
            StratumKey::all().into_iter().map(|k| (k, zero())).collect();
        let genders = [GenderStratum::Female, GenderStratum::Male];
        for day in 0..self.days {
            for (ai, band) in AgeBand::ALL.iter().enumerate() {
                for gi in 0..N_GENDER {
                    let c = self.cells[(day * N_AGE + ai) * N_GENDER + gi];
                    if c[0] == 0 {
                        continue;
                    }
                    let mut targets = vec![
                        StratumKey::new(AgeStratum::Band(*band), GenderStratum::All),
                        StratumKey::AGGREGATE,
                    ];
                    if let Some(&g) = genders.get(gi) {
                        targets.push(StratumKey::new(AgeStratum::Band(*band), g));
                        targets.push(StratumKey::new(AgeStratum::Aggregate, g));
                    }
                    for k in targets {
                        series.get_mut(&k).expect("all strata present")[day].add(c);
                    }
                }
            }
        }
        CohortTable { start: self.start, end: self.end, series }
    }
}

/// Aggregate cohort-filtered records into a dense table over `[start, end]`.
pub fn build_cohort_table(records: &[LineRecord], range: (NaiveDate, NaiveDate)) -> Result<CohortTable> {
    let mut b = CohortTableBuilder::new(range.0, range.1)?;
    for r in records {
        b.push(r);
    }
    Ok(b.finish())
}

#[derive(Serialize, Deserialize)]
struct LongRow {
    date: NaiveDate,
    age_band: String,
    gender: String,
    cases: u64,
    hosp: u64,
    deaths: u64,
    hosp_and_died: u64,
}

impl CohortTable {
    pub fn len(&self) -> usize {
        (self.end - self.start).num_days() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        (0..self.len()).map(|i| self.start + Days::new(i as u64))
    }

    pub fn get(&self, key: StratumKey) -> Option<&[DailyCounts]> {
        self.series.get(&key).map(|v| v.as_slice())
    }

    pub fn signal(&self, key: StratumKey, s: Signal) -> Option<Vec<u64>> {
        self.get(key).map(|v| v.iter().map(|c| c.get(s)).collect())
    }

    pub fn signal_series(&self, key: StratumKey, s: Signal) -> Option<TimeSeries> {
        self.signal(key, s).map(|c| TimeSeries::from_counts(self.start, &c))
    }

    pub fn total(&self, key: StratumKey, s: Signal) -> u64 {
        self.get(key).map(|v| v.iter().map(|c| c.get(s)).sum()).unwrap_or(0)
    }

    /// Long format: `date,age_band,gender,cases,hosp,deaths,hosp_and_died`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for (key, days) in &self.series {
            for c in days {
                w.serialize(LongRow {
                    date: c.date,
                    age_band: key.age.label().to_string(),
                    gender: key.gender.label().to_string(),
                    cases: c.cases,
                    hosp: c.eventual_hospitalizations,
                    deaths: c.eventual_deaths,
                    hosp_and_died: c.hospitalized_and_died,
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<CohortTable> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut rows: BTreeMap<StratumKey, BTreeMap<NaiveDate, DailyCounts>> = BTreeMap::new();
        for row in rdr.deserialize::<LongRow>() {
            let row = row?;
            let age: AgeStratum = row.age_band.parse().map_err(Error::InvalidArgument)?;
            let gender: GenderStratum = row.gender.parse().map_err(Error::InvalidArgument)?;
            rows.entry(StratumKey::new(age, gender)).or_default().insert(
                row.date,
                DailyCounts {
                    date: row.date,
                    cases: row.cases,
                    eventual_hospitalizations: row.hosp,
                    eventual_deaths: row.deaths,
                    hospitalized_and_died: row.hosp_and_died,
                },
            );
        }
        CohortTable::from_rows(rows)
    }

    fn from_rows(rows: BTreeMap<StratumKey, BTreeMap<NaiveDate, DailyCounts>>) -> Result<CohortTable> {
        let (start, end) = rows
            .values()
            .filter_map(|m| Some((*m.keys().next()?, *m.keys().next_back()?)))
            .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)))
            .ok_or_else(|| Error::InsufficientData("cohort table has no rows".into()))?;
        let days = (end - start).num_days() as usize + 1;
        let mut series = BTreeMap::new();
        for key in StratumKey::all() {
            let m = rows.get(&key);
            let v: Vec<DailyCounts> = (0..days)
                .map(|i| {
                    let d = start + Days::new(i as u64);
                    m.and_then(|m| m.get(&d)).copied().unwrap_or(DailyCounts::zero(d))
                })
                .collect();
            series.insert(key, v);
        }
        Ok(CohortTable { start, end, series })
    }

    pub fn to_json(&self) -> Result<String> {
        let obj = CohortTableJson {
            start: self.start,
            end: self.end,
            strata: self
                .series
                .iter()
                .map(|(k, v)| StratumJson {
                    age_band: k.age.label().to_string(),
                    gender: k.gender.label().to_string(),
                    days: v.clone(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&obj)?)
    }

    pub fn from_json(text: &str) -> Result<CohortTable> {
        let obj: CohortTableJson = serde_json::from_str(text)?;
        let mut rows: BTreeMap<StratumKey, BTreeMap<NaiveDate, DailyCounts>> = BTreeMap::new();
        for s in obj.strata {
            let age: AgeStratum = s.age_band.parse().map_err(Error::InvalidArgument)?;
            let gender: GenderStratum = s.gender.parse().map_err(Error::InvalidArgument)?;
            rows.insert(StratumKey::new(age, gender), s.days.into_iter().map(|d| (d.date, d)).collect());
        }
        let mut t = CohortTable::from_rows(rows)?;
        t.start = t.start.min(obj.start);
        t.end = t.end.max(obj.end);
        Ok(t)
    }
}

#[derive(Serialize, Deserialize)]
struct CohortTableJson {
    start: NaiveDate,
    end: NaiveDate,
    strata: Vec<StratumJson>,
}

#[derive(Serialize, Deserialize)]
struct StratumJson {
    age_band: String,
    gender: String,
    days: Vec<DailyCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountShare {
    pub label: String,
    pub count: u64,
    pub percent: f64,
}

/// Case counts and percentages by age, gender and outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicsSummary {
    pub total_cases: u64,
    pub age: Vec<CountShare>,
    pub gender: Vec<CountShare>,
    pub hospitalized_yes: CountShare,
    pub hospitalized_no: CountShare,
    pub died_yes: CountShare,
    pub died_no: CountShare,
}

/// Streaming accumulator behind [`summarize_demographics`].
#[derive(Debug, Clone, Default)]
pub struct DemographicsBuilder {
    total: u64,
    age: [u64; 10],
    gender: [u64; 3],
    hosp: u64,
    died: u64,
}

impl DemographicsBuilder {
    pub fn push(&mut self, r: &LineRecord) {
        self.total += 1;
        self.age[r.age_band.index()] += 1;
        self.gender[gender_index(r.gender)] += 1;
        self.hosp += r.hospitalized as u64;
        self.died += r.died as u64;
    }

    pub fn finish(&self) -> DemographicsSummary {
        let total = self.total;
        let share = |label: &str, count: u64| CountShare {
            label: label.to_string(),
            count,
            percent: if total == 0 { 0.0 } else { 100.0 * count as f64 / total as f64 },
        };
        DemographicsSummary {
            total_cases: total,
            age: AgeBand::ALL.iter().map(|b| share(b.label(), self.age[b.index()])).collect(),
            gender: [Gender::Female, Gender::Male, Gender::OtherUnknown]
                .iter()
                .map(|g| share(g.label(), self.gender[gender_index(*g)]))
                .collect(),
            hospitalized_yes: share("yes", self.hosp),
            hospitalized_no: share("no", total - self.hosp),
            died_yes: share("yes", self.died),
            died_no: share("no", total - self.died),
        }
    }
}

pub fn summarize_demographics(records: &[LineRecord]) -> DemographicsSummary {
    let mut b = DemographicsBuilder::default();
    for r in records {
        b.push(r);
    }
    b.finish()
}

impl DemographicsSummary {
    /// Aligned text block in the "count (pct%)" layout.
    pub fn render_text(&self) -> String {
        let cell = |c: &CountShare| format!("{} ({:.1}%)", c.count, c.percent);
        let mut s = String::new();
        s.push_str(&format!("{:<28}{}\n", "Lab confirmed cases", self.total_cases));
        s.push_str("Age\n");
        for a in &self.age {
            s.push_str(&format!("    {:<24}{}\n", a.label, cell(a)));
        }
        s.push_str("Gender\n");
        for g in &self.gender {
            s.push_str(&format!("    {:<24}{}\n", g.label, cell(g)));
        }
        s.push_str("Hospitalized\n");
        s.push_str(&format!("    {:<24}{}\n", "yes", cell(&self.hospitalized_yes)));
        s.push_str(&format!("    {:<24}{}\n", "no", cell(&self.hospitalized_no)));
        s.push_str("Died\n");
        s.push_str(&format!("    {:<24}{}\n", "yes", cell(&self.died_yes)));
        s.push_str(&format!("    {:<24}{}\n", "no", cell(&self.died_no)));
        s
    }

    /// `section,label,count,percent` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["section", "label", "count", "percent"])?;
        w.write_record(["total", "cases", &self.total_cases.to_string(), "100"])?;
        let mut rows = |section: &str, c: &CountShare| -> Result<()> {
            w.write_record([section, &c.label, &c.count.to_string(), &c.percent.to_string()])?;
            Ok(())
        };
        for a in &self.age {
            rows("age", a)?;
        }
        for g in &self.gender {
            rows("gender", g)?;
        }
        rows("hospitalized", &self.hospitalized_yes)?;
        rows("hospitalized", &self.hospitalized_no)?;
        rows("died", &self.died_yes)?;
        rows("died", &self.died_no)?;
        w.flush()?;
        Ok(())
    }
}

fn smoothed(table: &CohortTable, key: StratumKey, signal: Signal) -> TimeSeries {
    let counts = table.signal(key, signal).unwrap_or_else(|| vec![0; table.len()]);
    trailing_average_7d(&TimeSeries::from_counts(table.start, &counts))
}

/// Per-band share of the smoothed signal among known-age bands (all genders).
/// Returned in band order; dates with a zero denominator are gaps.
pub fn age_distribution_shares(table: &CohortTable, signal: Signal) -> Result<Vec<RateSeries>> {
    let per_band: Vec<TimeSeries> = AgeBand::KNOWN.iter().map(|b| smoothed(table, StratumKey::band(*b), signal)).collect();
    let n = table.len();
    let mut den = TimeSeries { start: table.start, values: vec![0.0; n], gaps: vec![false; n] };
    for s in &per_band {
        for i in 0..n {
            den.values[i] += s.values[i];
            den.gaps[i] |= s.gaps[i];
        }
    }
    AgeBand::KNOWN
        .iter()
        .zip(per_band)
        .map(|(b, num)| ratio_of_smoothed(RateKind::Share, b.label(), num, den.clone()))
        .collect()
}

/// Female fraction `female / (female + male)` of the smoothed signal for the
/// aggregate and every known band. Dates whose smoothed denominator is below
/// `min_denominator` are gaps.
pub fn gender_fraction_series(table: &CohortTable, signal: Signal, min_denominator: f64) -> Result<Vec<RateSeries>> {
    let ages = std::iter::once(AgeStratum::Aggregate).chain(AgeBand::KNOWN.iter().map(|b| AgeStratum::Band(*b)));
    ages.map(|age| {
        let f = smoothed(table, StratumKey::new(age, GenderStratum::Female), signal);
        let m = smoothed(table, StratumKey::new(age, GenderStratum::Male), signal);
        let mut den = f.clone();
        for i in 0..den.len() {
            den.values[i] += m.values[i];
            den.gaps[i] |= m.gaps[i];
        }
        let mut r = ratio_of_smoothed(RateKind::Share, age.label(), f, den)?;
        for i in 0..r.ratio.len() {
            if r.denominator.get(i).is_none_or(|d| d < min_denominator) {
                r.ratio.gaps[i] = true;
                r.ratio.values[i] = 0.0;
            }
        }
        Ok(r)
    })
    .collect()
}
