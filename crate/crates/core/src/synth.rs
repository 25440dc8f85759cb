//! Synthetic line-level data with known hospitalization fatality trends.
//!
//! Per day and age band the case count is Poisson with the configured
//! intensity; each case is hospitalized with `p_hosp(t)` and, if
//! hospitalized, dies with `hfr(t)`. Outcome fields can be relabelled as
//! unknown/missing to exercise recoding; by default only true "no"
//! outcomes are relabelled, so recoding to "no" is lossless.

use std::io::Write;

use chrono::{Days, NaiveDate};
use rand::RngCore;
use rand_distr::{Binomial, Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{CohortTable, CohortTableBuilder, DailyCounts};
use crate::error::{Error, Result};
use crate::record::{AgeBand, AgeRaw, ConfirmationKind, Gender, GenderRaw, OutcomeRaw, RawLineRecord};
use crate::trend::rng::{replicate_rng, uniform_index, uniform_unit};

/// A daily curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Curve {
    Constant { value: f64 },
    /// Straight line through two points, extended in both directions.
    Linear { date_a: NaiveDate, value_a: f64, date_b: NaiveDate, value_b: f64 },
    /// Linear interpolation between knots, constant beyond the ends.
    Piecewise { knots: Vec<(NaiveDate, f64)> },
}

impl Curve {
    pub fn constant(value: f64) -> Curve {
        Curve::Constant { value }
    }

    pub fn at(&self, date: NaiveDate) -> f64 {
        match self {
            Curve::Constant { value } => *value,
            Curve::Linear { date_a, value_a, date_b, value_b } => {
                let span = (*date_b - *date_a).num_days() as f64;
                if span == 0.0 {
                    return *value_a;
                }
                let t = (date - *date_a).num_days() as f64 / span;
                value_a + t * (value_b - value_a)
            }
            Curve::Piecewise { knots } => {
                let Some(first) = knots.first() else { return 0.0 };
                if date <= first.0 {
                    return first.1;
                }
                for w in knots.windows(2) {
                    let (d0, v0) = w[0];
                    let (d1, v1) = w[1];
                    if date <= d1 {
                        let span = (d1 - d0).num_days() as f64;
                        let t = (date - d0).num_days() as f64 / span;
                        return v0 + t * (v1 - v0);
                    }
                }
                knots.last().map(|k| k.1).unwrap_or(0.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandConfig {
    pub band: AgeBand,
    /// Expected confirmed cases per day.
    pub intensity: Curve,
    pub p_hosp: Curve,
    /// Probability of death given hospitalization.
    pub hfr: Curve,
    /// Probability of death without hospitalization.
    #[serde(default = "zero_curve")]
    pub p_death_unhospitalized: Curve,
}

fn zero_curve() -> Curve {
    Curve::constant(0.0)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Missingness {
    pub hosp_unknown: f64,
    pub hosp_missing: f64,
    pub death_unknown: f64,
    pub death_missing: f64,
    /// Also relabel true "yes" outcomes (biases recoded rates downward).
    #[serde(default)]
    pub wrap_yes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub bands: Vec<BandConfig>,
    pub female_fraction: f64,
    pub seed: u64,
    #[serde(default)]
    pub missingness: Missingness,
}

fn prob_ok(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

impl SynthConfig {
    pub fn days(&self) -> usize {
        (self.end - self.start).num_days() as usize + 1
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        (0..self.days()).map(|i| self.start + Days::new(i as u64))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.start > self.end {
            return bad(format!("start {} after end {}", self.start, self.end));
        }
        if !prob_ok(self.female_fraction) {
            return bad("female_fraction must be in [0, 1]".into());
        }
        let m = &self.missingness;
        for (name, a, b) in [("hosp", m.hosp_unknown, m.hosp_missing), ("death", m.death_unknown, m.death_missing)] {
            if !prob_ok(a) || !prob_ok(b) || a + b > 1.0 {
                return bad(format!("{name} missingness rates must be probabilities summing to <= 1"));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for b in &self.bands {
            if !seen.insert(b.band) {
                return bad(format!("band {} configured twice", b.band));
            }
            for d in self.dates() {
                let lam = b.intensity.at(d);
                if !lam.is_finite() || lam < 0.0 {
                    return bad(format!("band {} intensity {lam} invalid on {d}", b.band));
                }
                for (name, c) in [("p_hosp", &b.p_hosp), ("hfr", &b.hfr), ("p_death_unhospitalized", &b.p_death_unhospitalized)] {
                    if !prob_ok(c.at(d)) {
                        return bad(format!("band {} {name} = {} outside [0, 1] on {d}", b.band, c.at(d)));
                    }
                }
            }
        }
        Ok(())
    }

    /// True aggregate HFR: hospitalization-weighted mean of band HFRs.
    pub fn aggregate_hfr(&self, date: NaiveDate) -> Option<f64> {
        let (num, den) = self.bands.iter().fold((0.0, 0.0), |(n, d), b| {
            let h = b.intensity.at(date) * b.p_hosp.at(date);
            (n + h * b.hfr.at(date), d + h)
        });
        (den > 0.0).then(|| num / den)
    }

    pub fn band_hfr(&self, band: AgeBand, date: NaiveDate) -> Option<f64> {
        self.bands.iter().find(|b| b.band == band).map(|b| b.hfr.at(date))
    }
}

/// Exact per-band curves behind a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTable {
    pub start: NaiveDate,
    pub bands: Vec<BandTruth>,
    pub aggregate_hfr: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandTruth {
    pub band: AgeBand,
    pub intensity: Vec<f64>,
    pub p_hosp: Vec<f64>,
    pub hfr: Vec<f64>,
}

impl TruthTable {
    fn from_config(cfg: &SynthConfig) -> TruthTable {
        let dates: Vec<NaiveDate> = cfg.dates().collect();
        let eval = |c: &Curve| dates.iter().map(|d| c.at(*d)).collect::<Vec<f64>>();
        TruthTable {
            start: cfg.start,
            bands: cfg
                .bands
                .iter()
                .map(|b| BandTruth { band: b.band, intensity: eval(&b.intensity), p_hosp: eval(&b.p_hosp), hfr: eval(&b.hfr) })
                .collect(),
            aggregate_hfr: dates.iter().map(|d| cfg.aggregate_hfr(*d)).collect(),
        }
    }

    /// `date,band,intensity,p_hosp,hfr` rows, with `aggregate` rows carrying only the HFR.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "band", "intensity", "p_hosp", "hfr"])?;
        for (i, agg) in self.aggregate_hfr.iter().enumerate() {
            let date = (self.start + Days::new(i as u64)).to_string();
            for b in &self.bands {
                w.write_record([
                    date.clone(),
                    b.band.label().to_string(),
                    b.intensity[i].to_string(),
                    b.p_hosp[i].to_string(),
                    b.hfr[i].to_string(),
                ])?;
            }
            let agg = agg.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([date, "aggregate".into(), String::new(), String::new(), agg])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn bernoulli<R: RngCore>(rng: &mut R, p: f64) -> bool {
    uniform_unit(rng) < p
}

fn relabel<R: RngCore>(rng: &mut R, truth: bool, unknown: f64, missing: f64, wrap_yes: bool) -> OutcomeRaw {
    let base = if truth { OutcomeRaw::Yes } else { OutcomeRaw::No };
    if unknown + missing == 0.0 || (truth && !wrap_yes) {
        return base;
    }
    let u = uniform_unit(rng);
    if u < unknown {
        OutcomeRaw::Unknown
    } else if u < unknown + missing {
        OutcomeRaw::Missing
    } else {
        base
    }
}

fn age_in_band<R: RngCore>(rng: &mut R, band: AgeBand) -> AgeRaw {
    match band.bounds() {
        None => AgeRaw::Unknown,
        Some((lo, hi)) => {
            let hi = hi.unwrap_or(99);
            AgeRaw::Years(lo + uniform_index(rng, (hi - lo + 1) as u64) as u32)
        }
    }
}

/// Generate records day by day. Each day draws from its own stream of the
/// seed, so days are generated in parallel and merged in date order.
pub fn generate_line_records(config: &SynthConfig) -> Result<(Vec<RawLineRecord>, TruthTable)> {
    config.validate()?;
    let m = &config.missingness;
    let per_day: Vec<Vec<RawLineRecord>> = (0..config.days())
        .into_par_iter()
        .map(|day| {
            let date = config.start + Days::new(day as u64);
            let mut rng = replicate_rng(config.seed, day as u64);
            let mut out = Vec::new();
            for b in &config.bands {
                let lam = b.intensity.at(date);
                let n = if lam > 0.0 {
                    let pois = Poisson::new(lam).map_err(|e| Error::InvalidArgument(e.to_string()))?;
                    pois.sample(&mut rng) as u64
                } else {
                    0
                };
                let (ph, hfr, pd) = (b.p_hosp.at(date), b.hfr.at(date), b.p_death_unhospitalized.at(date));
                for _ in 0..n {
                    let gender = if bernoulli(&mut rng, config.female_fraction) { GenderRaw::Female } else { GenderRaw::Male };
                    let age = age_in_band(&mut rng, b.band);
                    let hosp = bernoulli(&mut rng, ph);
                    let died = bernoulli(&mut rng, if hosp { hfr } else { pd });
                    out.push(RawLineRecord {
                        event_date: date,
                        age,
                        gender,
                        hospitalized: relabel(&mut rng, hosp, m.hosp_unknown, m.hosp_missing, m.wrap_yes),
                        died: relabel(&mut rng, died, m.death_unknown, m.death_missing, m.wrap_yes),
                        state: None,
                        confirmation: ConfirmationKind::PcrPositive,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((per_day.into_iter().flatten().collect(), TruthTable::from_config(config)))
}

fn binomial<R: RngCore>(rng: &mut R, n: u64, p: f64) -> Result<u64> {
    if n == 0 || p <= 0.0 {
        return Ok(0);
    }
    let b = Binomial::new(n, p.min(1.0)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(b.sample(rng))
}

/// Draw daily cohort counts directly, without materializing records.
///
/// Per day, band and gender this has the same distribution as aggregating
/// [`generate_line_records`] after recoding, which makes very large
/// scenarios cheap. Relabelled "yes" outcomes are not modelled here.
pub fn generate_cohort_counts(config: &SynthConfig) -> Result<(CohortTable, TruthTable)> {
    config.validate()?;
    if config.missingness.wrap_yes {
        return Err(Error::InvalidArgument("count-level generation does not model relabelled yes outcomes".into()));
    }
    let per_day: Vec<Vec<(AgeBand, Gender, DailyCounts)>> = (0..config.days())
        .into_par_iter()
        .map(|day| {
            let date = config.start + Days::new(day as u64);
            let mut rng = replicate_rng(config.seed, day as u64);
            let mut out = Vec::new();
            for b in &config.bands {
                let lam = b.intensity.at(date);
                let n = if lam > 0.0 {
                    Poisson::new(lam).map_err(|e| Error::InvalidArgument(e.to_string()))?.sample(&mut rng) as u64
                } else {
                    0
                };
                let female = binomial(&mut rng, n, config.female_fraction)?;
                for (gender, cases) in [(Gender::Female, female), (Gender::Male, n - female)] {
                    let hosp = binomial(&mut rng, cases, b.p_hosp.at(date))?;
                    let joint = binomial(&mut rng, hosp, b.hfr.at(date))?;
                    let other = binomial(&mut rng, cases - hosp, b.p_death_unhospitalized.at(date))?;
                    out.push((
                        b.band,
                        gender,
                        DailyCounts {
                            date,
                            cases,
                            eventual_hospitalizations: hosp,
                            eventual_deaths: joint + other,
                            hospitalized_and_died: joint,
                        },
                    ));
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut builder = CohortTableBuilder::new(config.start, config.end)?;
    for (band, gender, c) in per_day.iter().flatten() {
        builder.push_counts(c.date, *band, *gender, c);
    }
    Ok((builder.finish(), TruthTable::from_config(config)))
}

fn outcome_spelling(o: OutcomeRaw) -> &'static str {
    match o {
        OutcomeRaw::Yes => "YES",
        OutcomeRaw::No => "NO",
        OutcomeRaw::Unknown => "UNKNOWN",
        OutcomeRaw::Missing => "",
    }
}

/// Write records in the Florida case line layout understood by the default
/// Florida schema.
pub fn write_florida_csv<W: Write>(records: &[RawLineRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["County", "Age", "Gender", "Hospitalized", "Died", "Case1"])?;
    for r in records {
        let age = match r.age {
            AgeRaw::Years(y) => y.to_string(),
            AgeRaw::Band(b) => b.label().to_string(),
            AgeRaw::Unknown => String::new(),
        };
        let gender = match r.gender {
            GenderRaw::Female => "Female",
            GenderRaw::Male => "Male",
            GenderRaw::Unknown => "Unknown",
            GenderRaw::Missing => "",
        };
        w.write_record([
            "Synthetic",
            &age,
            gender,
            outcome_spelling(r.hospitalized),
            outcome_spelling(r.died),
            &format!("{} 05:00:00+00", r.event_date.format("%Y/%m/%d")),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

/// First and second peak dates used by the canned scenarios.
pub fn peak_dates() -> (NaiveDate, NaiveDate) {
    (ymd(2020, 4, 15), ymd(2020, 7, 15))
}

/// Band HFRs at the two peaks, mirroring the Florida peak-to-peak estimates
/// (each band rises by 2% to 12%).
const SIMPSON_BANDS: [(AgeBand, f64, f64, f64); 5] = [
    // band, hfr at first peak, hfr at second peak, p_hosp
    (AgeBand::A40_49, 0.050, 0.054, 0.30),
    (AgeBand::A50_59, 0.092, 0.102, 0.40),
    (AgeBand::A60_69, 0.190, 0.2128, 0.50),
    (AgeBand::A70_79, 0.320, 0.3312, 0.60),
    (AgeBand::A80Plus, 0.470, 0.4794, 0.70),
];
/// Hospitalization mix at the first peak, and the younger mix it drifts toward.
const SIMPSON_MIX_OLD: [f64; 5] = [0.10, 0.20, 0.25, 0.22, 0.23];
const SIMPSON_MIX_YOUNG: [f64; 5] = [0.35, 0.30, 0.20, 0.08, 0.07];
/// Aggregate relative change the mix shift is tuned to.
pub const SIMPSON_AGGREGATE_CHANGE: f64 = -0.026;
const SIMPSON_DAILY_HOSPITALIZATIONS: f64 = 2_000.0;

/// Every band's HFR rises between the peaks while hospitalizations shift
/// young enough that the aggregate HFR falls by about 2.6%.
pub fn simpson_scenario() -> SynthConfig {
    simpson_scenario_scaled(SIMPSON_DAILY_HOSPITALIZATIONS)
}

/// [`simpson_scenario`] with a different number of hospitalizations per day.
pub fn simpson_scenario_scaled(daily_hospitalizations: f64) -> SynthConfig {
    let (d0, d1) = peak_dates();
    let old_agg: f64 = SIMPSON_BANDS.iter().zip(SIMPSON_MIX_OLD).map(|(b, w)| w * b.1).sum();
    let at_new = |mix: &[f64; 5]| -> f64 { SIMPSON_BANDS.iter().zip(mix).map(|(b, w)| w * b.2).sum() };
    // new mix = (1 - s) old + s young, with s solving the target aggregate
    let target = old_agg * (1.0 + SIMPSON_AGGREGATE_CHANGE);
    let s = (at_new(&SIMPSON_MIX_OLD) - target) / (at_new(&SIMPSON_MIX_OLD) - at_new(&SIMPSON_MIX_YOUNG));
    let bands = SIMPSON_BANDS
        .iter()
        .enumerate()
        .map(|(i, &(band, h0, h1, p))| {
            let w0 = SIMPSON_MIX_OLD[i];
            let w1 = (1.0 - s) * w0 + s * SIMPSON_MIX_YOUNG[i];
            let line = |a: f64, b: f64| Curve::Linear { date_a: d0, value_a: a, date_b: d1, value_b: b };
            BandConfig {
                band,
                intensity: line(daily_hospitalizations * w0 / p, daily_hospitalizations * w1 / p),
                p_hosp: Curve::constant(p),
                hfr: line(h0, h1),
                p_death_unhospitalized: Curve::constant(0.0),
            }
        })
        .collect();
    SynthConfig {
        start: ymd(2020, 3, 26),
        end: ymd(2020, 9, 30),
        bands,
        female_fraction: 0.5,
        seed: 2020,
        missingness: Missingness { hosp_unknown: 0.3, hosp_missing: 0.05, death_unknown: 0.0, death_missing: 0.5, wrap_yes: false },
    }
}

/// Relative HFR change per band and in aggregate between two dates,
/// computed from the configured curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueChanges {
    pub bands: Vec<(AgeBand, f64)>,
    pub aggregate: f64,
}

pub fn true_changes(config: &SynthConfig, date_old: NaiveDate, date_new: NaiveDate) -> Option<TrueChanges> {
    let rel = |a: f64, b: f64| (b - a) / a;
    Some(TrueChanges {
        bands: config.bands.iter().map(|b| (b.band, rel(b.hfr.at(date_old), b.hfr.at(date_new)))).collect(),
        aggregate: rel(config.aggregate_hfr(date_old)?, config.aggregate_hfr(date_new)?),
    })
}

/// HFR steps down from 0.30 to 0.18 between the peaks (a -40% change), in
/// every band alike.
pub fn step_down_scenario() -> SynthConfig {
    let hfr = Curve::Piecewise { knots: vec![(ymd(2020, 5, 10), 0.30), (ymd(2020, 6, 20), 0.18)] };
    let mix = [(AgeBand::A40_49, 700.0), (AgeBand::A50_59, 800.0), (AgeBand::A60_69, 700.0), (AgeBand::A70_79, 500.0), (AgeBand::A80Plus, 300.0)];
    SynthConfig {
        start: ymd(2020, 3, 26),
        end: ymd(2020, 9, 30),
        bands: mix
            .iter()
            .map(|&(band, cases)| BandConfig {
                band,
                intensity: Curve::constant(cases),
                p_hosp: Curve::constant(0.15),
                hfr: hfr.clone(),
                p_death_unhospitalized: Curve::constant(0.005),
            })
            .collect(),
        female_fraction: 0.52,
        seed: 415,
        missingness: Missingness { hosp_unknown: 0.4, hosp_missing: 0.01, death_unknown: 0.0, death_missing: 0.9, wrap_yes: false },
    }
}
