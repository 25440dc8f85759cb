//! Desk-scale acceptance gate. Runs criteria 1-7 and prints one PASS/FAIL
//! line each; criterion 8 runs only when real input files are named in
//! `HFRSCOPE_FLORIDA_CSV` and/or `HFRSCOPE_CDC_CSV`.

use std::fs::File;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use chrono::{Days, NaiveDate};
use hfrscope::cohort::{build_cohort_table, summarize_demographics, AgeStratum, GenderStratum, StratumKey};
use hfrscope::ingest::{
    default_window, detect_reporting_artifacts, parse_florida_lines, parse_stream, CohortFilter, ParseOptions,
    SchemaConfig,
};
use hfrscope::record::{AgeBand, Gender, LineRecord, StateCode};
use hfrscope::report::{default_strata, peak_table};
use hfrscope::signals::{trailing_average_7d, TimeSeries};
use hfrscope::synth::{
    generate_cohort_counts, generate_line_records, peak_dates, simpson_scenario_scaled, step_down_scenario,
    write_florida_csv,
};
use hfrscope::trend::{fit_points, BootstrapConfig, Lambda, ReplicateSet};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration, detail: String) -> Outcome {
    check(elapsed < limit, format!("{detail}; {:.2} s (limit {} s)", elapsed.as_secs_f64(), limit.as_secs()))
}

fn origin() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 4, 1).unwrap()
}

fn smoothing_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for rep in 0..100 {
        let values: Vec<f64> = (0..90).map(|_| rng.random_range(0..5_000u32) as f64).collect();
        let got = trailing_average_7d(&TimeSeries::new(origin(), values.clone()));
        for t in 0..90 {
            if t < 6 {
                if !got.gaps[t] {
                    return Err(format!("series {rep}: day {t} defined before a full window"));
                }
                continue;
            }
            let mut sum = 0.0;
            for v in &values[t - 6..=t] {
                sum += v;
            }
            let want = sum / 7.0;
            if got.gaps[t] || got.values[t].to_bits() != want.to_bits() {
                return Err(format!("series {rep} day {t}: {} vs {want}", got.values[t]));
            }
        }
    }
    within(t0.elapsed(), Duration::from_secs(1), "100 series bitwise equal".into())
}

fn in_stratum(r: &LineRecord, k: StratumKey) -> bool {
    let age_ok = match k.age {
        AgeStratum::Aggregate => true,
        AgeStratum::Band(b) => r.age_band == b,
    };
    let gender_ok = match k.gender {
        GenderStratum::All => true,
        GenderStratum::Female => r.gender == Gender::Female,
        GenderStratum::Male => r.gender == Gender::Male,
    };
    age_ok && gender_ok
}

fn cohort_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let states = [StateCode::new("FL"), StateCode::new("NY"), None];
    for rep in 0..10 {
        let n = if rep == 0 { 10_000 } else { rng.random_range(1..=10_000) };
        let span: u64 = rng.random_range(1..60);
        let recs: Vec<LineRecord> = (0..n)
            .map(|_| {
                let hospitalized = rng.random_bool(0.15);
                LineRecord {
                    event_date: origin() + Days::new(rng.random_range(0..span)),
                    age_band: AgeBand::ALL[rng.random_range(0..AgeBand::ALL.len())],
                    gender: [Gender::Female, Gender::Male, Gender::OtherUnknown][rng.random_range(0..3)],
                    hospitalized,
                    died: rng.random_bool(if hospitalized { 0.25 } else { 0.01 }),
                    state: states[rng.random_range(0..3)],
                }
            })
            .collect();
        let table = build_cohort_table(&recs, (origin(), origin() + Days::new(span - 1))).map_err(|e| e.to_string())?;
        // nested loop: stratum x day x record
        for k in StratumKey::all() {
            let days = table.get(k).ok_or(format!("missing stratum {k}"))?;
            for (i, day) in days.iter().enumerate() {
                let date = origin() + Days::new(i as u64);
                let mut want = (0u64, 0u64, 0u64, 0u64);
                for r in recs.iter().filter(|r| r.event_date == date && in_stratum(r, k)) {
                    want.0 += 1;
                    want.1 += r.hospitalized as u64;
                    want.2 += r.died as u64;
                    want.3 += (r.hospitalized && r.died) as u64;
                }
                let got = (day.cases, day.eventual_hospitalizations, day.eventual_deaths, day.hospitalized_and_died);
                if got != want {
                    return Err(format!("dataset {rep} stratum {k} {date}: {got:?} vs {want:?}"));
                }
            }
        }
    }
    within(t0.elapsed(), Duration::from_secs(5), "10 datasets equal exactly".into())
}

fn dense_penalty(x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let m = n - 2;
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let mut q = DMatrix::<f64>::zeros(n, m);
    let mut r = DMatrix::<f64>::zeros(m, m);
    for j in 0..m {
        q[(j, j)] = 1.0 / h[j];
        q[(j + 1, j)] = -1.0 / h[j] - 1.0 / h[j + 1];
        q[(j + 2, j)] = 1.0 / h[j + 1];
        r[(j, j)] = (h[j] + h[j + 1]) / 3.0;
        if j + 1 < m {
            r[(j, j + 1)] = h[j + 1] / 6.0;
            r[(j + 1, j)] = h[j + 1] / 6.0;
        }
    }
    &q * r.try_inverse().unwrap() * q.transpose()
}

fn dense_fit(x: &[f64], y: &[f64], lambda: f64) -> Vec<f64> {
    let n = x.len();
    let a = DMatrix::<f64>::identity(n, n) + dense_penalty(x) * lambda;
    a.lu().solve(&DVector::from_column_slice(y)).unwrap().iter().copied().collect()
}

fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

fn abscissae(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut t = 0.0;
    (0..n)
        .map(|_| {
            let v = t;
            t += if rng.random_bool(0.15) { rng.random_range(2..5) as f64 } else { 1.0 };
            v
        })
        .collect()
}

fn spline_correctness() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let err = |e: hfrscope::Error| e.to_string();

    let mut line_err: f64 = 0.0;
    for lambda in [Lambda::Fixed(1e-3), Lambda::Fixed(1.0), Lambda::Fixed(1e4), Lambda::Gcv, Lambda::block_cv_for(7)] {
        let x = abscissae(&mut rng, 60);
        let (a, b) = (rng.random_range(-1.0..1.0), rng.random_range(-0.01..0.01));
        let y: Vec<f64> = x.iter().map(|t| a + b * t).collect();
        let fit = fit_points(origin(), &x, &y, lambda).map_err(err)?;
        for (f, w) in fit.fitted.iter().zip(&y) {
            line_err = line_err.max((f - w).abs());
        }
    }

    let x: Vec<f64> = (0..50).map(|i| i as f64).collect();
    let y: Vec<f64> = x.iter().map(|t| 0.3 - 0.002 * t + 0.05 * (t / 4.0).sin() + rng.random_range(-0.03..0.03)).collect();
    let fit = fit_points(origin(), &x, &y, Lambda::Fixed(1e12)).map_err(err)?;
    let (a, b) = ols(&x, &y);
    let ols_err = fit.fitted.iter().zip(&x).map(|(f, t)| (f - (a + b * t)).abs()).fold(0.0, f64::max);

    let mut dense_err: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(5..=200);
        let x = abscissae(&mut rng, n);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let lambda = 10f64.powf(rng.random_range(-2.0..4.0));
        let fit = fit_points(origin(), &x, &y, Lambda::Fixed(lambda)).map_err(err)?;
        let dense = dense_fit(&x, &y, lambda);
        let num = fit.fitted.iter().zip(&dense).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let den = dense.iter().map(|q| q * q).sum::<f64>().sqrt();
        dense_err = dense_err.max(num / den);
    }

    let detail = format!("line {line_err:.1e} abs, lambda=1e12 vs OLS {ols_err:.1e} abs, dense {dense_err:.1e} rel");
    if line_err > 1e-8 || ols_err > 1e-6 || dense_err > 1e-8 {
        return Err(detail);
    }
    within(t0.elapsed(), Duration::from_secs(10), detail)
}

fn step_down_table() -> hfrscope::cohort::CohortTable {
    let cfg = hfrscope::synth::SynthConfig { end: NaiveDate::from_ymd_opt(2020, 8, 31).unwrap(), ..step_down_scenario() };
    generate_cohort_counts(&cfg).unwrap().0
}

fn determinism() -> Outcome {
    let (d0, d1) = peak_dates();
    let table = step_down_table();
    let config = BootstrapConfig { replicates: 300, seed: 11, ..Default::default() };
    let render = || -> Result<Vec<u8>, String> {
        let t = peak_table(&table, &default_strata(), d0, d1, 2, &config).map_err(|e| e.to_string())?;
        let mut out = t.render_text().into_bytes();
        t.write_csv(&mut out).map_err(|e| e.to_string())?;
        Ok(out)
    };
    let (a, b) = (render()?, render()?);
    if a != b {
        return Err("two runs with seed 11 differ".into());
    }

    let mut widest: f64 = 0.0;
    let flat = [TimeSeries::new(origin(), vec![0.3; 120]), {
        // constant ratio with gaps from the death floor
        let gaps: Vec<bool> = (0..120).map(|i| i % 17 == 3).collect();
        TimeSeries::with_gaps(origin(), vec![0.125; 120], gaps).unwrap()
    }];
    for s in &flat {
        let set = ReplicateSet::generate(s, &BootstrapConfig { replicates: 200, ..Default::default() }).map_err(|e| e.to_string())?;
        for band in set.bands().map_err(|e| e.to_string())? {
            widest = widest.max(band.upper - band.lower);
        }
        let drop = set.drop_between(origin() + Days::new(10), origin() + Days::new(100)).map_err(|e| e.to_string())?;
        widest = widest.max(drop.upper - drop.lower);
    }
    check(widest == 0.0, format!("{} byte-identical bytes; widest zero-residual interval {widest}", a.len()))
}

const COVERAGE_REPS: u64 = 200;
const COVERAGE_N: usize = 200;

fn coverage() -> Outcome {
    let t0 = Instant::now();
    let daily = |t: f64| 0.25 + 0.05 * (2.0 * std::f64::consts::PI * t / 120.0).sin();
    // the observed ratio pools days i..i+6, so the target is their mean rate
    let truth = |i: usize| (i..i + 7).map(|d| daily(d as f64)).sum::<f64>() / 7.0;
    let probes: Vec<usize> = (1..=5).map(|i| i * COVERAGE_N / 6).collect();
    let pois = Poisson::new(200.0).unwrap();
    let mut hits = 0usize;
    for rep in 0..COVERAGE_REPS {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + rep);
        let mut hosp = Vec::with_capacity(COVERAGE_N + 6);
        let mut deaths = Vec::with_capacity(COVERAGE_N + 6);
        for d in 0..COVERAGE_N + 6 {
            let h = pois.sample(&mut rng) as u64;
            deaths.push(Binomial::new(h, daily(d as f64)).unwrap().sample(&mut rng) as f64);
            hosp.push(h as f64);
        }
        let y: Vec<f64> = (0..COVERAGE_N)
            .map(|i| deaths[i..i + 7].iter().sum::<f64>() / hosp[i..i + 7].iter().sum::<f64>())
            .collect();
        let config = BootstrapConfig { replicates: 500, seed: rep, ..Default::default() };
        let set = ReplicateSet::generate(&TimeSeries::new(origin(), y), &config).map_err(|e| e.to_string())?;
        for &p in &probes {
            let iv = set.interval(origin() + Days::new(p as u64)).map_err(|e| e.to_string())?;
            hits += (iv.lower <= truth(p) && truth(p) <= iv.upper) as usize;
        }
    }
    let cov = hits as f64 / (probes.len() as u64 * COVERAGE_REPS) as f64;
    let detail = format!("coverage {cov:.3} over {COVERAGE_REPS} reps x {} probes", probes.len());
    if !(0.88..=0.99).contains(&cov) {
        return Err(detail);
    }
    within(t0.elapsed(), Duration::from_secs(300), detail)
}

fn end_to_end() -> Outcome {
    let cfg = step_down_scenario();
    let (raw, _) = generate_line_records(&cfg).map_err(|e| e.to_string())?;
    let mut csv = Vec::new();
    write_florida_csv(&raw, &mut csv).map_err(|e| e.to_string())?;
    drop(raw);
    let (parsed, _) = parse_florida_lines(csv.as_slice(), &ParseOptions::new(SchemaConfig::florida())).map_err(|e| e.to_string())?;
    let records: Vec<LineRecord> = parsed.iter().map(|r| r.recode()).collect();
    let vintage = records.iter().map(|r| r.event_date).max().ok_or("no records")?;
    let (start, end) = default_window();
    let filter = CohortFilter::new(start, end, 30, vintage).map_err(|e| e.to_string())?;
    let kept = filter.apply(&records);
    let table = build_cohort_table(&kept, filter.effective_range().ok_or("empty range")?).map_err(|e| e.to_string())?;
    let (d0, d1) = peak_dates();
    let t = peak_table(&table, &[StratumKey::AGGREGATE], d0, d1, 2, &BootstrapConfig::default()).map_err(|e| e.to_string())?;
    let (_, _, change) = t.estimated(StratumKey::AGGREGATE).ok_or("aggregate not estimated")?;
    let detail = format!(
        "{} cases; drop {:.3} ({:.3}, {:.3}) vs true -0.40",
        records.len(),
        change.median,
        change.lower,
        change.upper
    );
    check(
        records.len() >= 200_000 && change.lower <= -0.40 && -0.40 <= change.upper && (change.median + 0.40).abs() <= 0.05,
        detail,
    )
}

fn simpson() -> Outcome {
    let cfg = simpson_scenario_scaled(100_000.0);
    let (table, _) = generate_cohort_counts(&cfg).map_err(|e| e.to_string())?;
    let bands = [AgeBand::A40_49, AgeBand::A50_59, AgeBand::A60_69, AgeBand::A70_79, AgeBand::A80Plus];
    let strata: Vec<StratumKey> = std::iter::once(StratumKey::AGGREGATE).chain(bands.map(StratumKey::band)).collect();
    let (d0, d1) = peak_dates();
    let t = peak_table(&table, &strata, d0, d1, 2, &BootstrapConfig::default()).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for &k in &strata {
        let (_, _, c) = t.estimated(k).ok_or(format!("{k} not estimated"))?;
        ok &= if k == StratumKey::AGGREGATE { c.median < 0.0 } else { c.median > 0.0 };
        parts.push(format!("{k} {:+.3}", c.median));
    }
    check(ok, parts.join(", "))
}

fn real_data() -> Option<Outcome> {
    let florida = std::env::var_os("HFRSCOPE_FLORIDA_CSV");
    let cdc = std::env::var_os("HFRSCOPE_CDC_CSV");
    if florida.is_none() && cdc.is_none() {
        return None;
    }
    let load = |path: &std::ffi::OsStr, schema: SchemaConfig| -> Result<Vec<LineRecord>, String> {
        let file = File::open(path).map_err(|e| format!("{}: {e}", path.to_string_lossy()))?;
        let mut out = Vec::new();
        parse_stream(file, &ParseOptions::new(schema), None, |r| {
            out.push(r.recode());
            Ok(())
        })
        .map_err(|e| e.to_string())?;
        Ok(out)
    };
    let cohort = |records: &[LineRecord], excluded: Vec<StateCode>| -> Result<(Vec<LineRecord>, (NaiveDate, NaiveDate)), String> {
        let vintage = records.iter().map(|r| r.event_date).max().ok_or("no records")?;
        let (start, end) = default_window();
        let f = CohortFilter::new(start, end, 30, vintage).map_err(|e| e.to_string())?.with_excluded_states(excluded);
        Ok((f.apply(records), f.effective_range().ok_or("empty range")?))
    };
    let run = || -> Outcome {
        let mut ok = true;
        let mut parts = Vec::new();
        if let Some(path) = &florida {
            let (kept, _) = cohort(&load(path, SchemaConfig::florida())?, Vec::new())?;
            let s = summarize_demographics(&kept);
            let got = (s.total_cases, s.hospitalized_yes.count, s.died_yes.count);
            ok &= got == (806_709, 50_414, 18_333);
            parts.push(format!("Florida cases/hosp/deaths {got:?}"));
        }
        if let Some(path) = &cdc {
            let records = load(path, SchemaConfig::cdc())?;
            let flagged = detect_reporting_artifacts(&records, 0.5).map_err(|e| e.to_string())?;
            let names: Vec<&str> = flagged.iter().map(|e| e.state.as_str()).collect();
            ok &= ["NJ", "IL", "CT"].iter().all(|s| names.contains(s));
            let (kept, range) = cohort(&records, flagged.iter().map(|e| e.state).collect())?;
            let table = build_cohort_table(&kept, range).map_err(|e| e.to_string())?;
            let (d0, d1) = peak_dates();
            let t = peak_table(&table, &[StratumKey::AGGREGATE], d0, d1, 2, &BootstrapConfig::default())
                .map_err(|e| e.to_string())?;
            let (old, _, change) = t.estimated(StratumKey::AGGREGATE).ok_or("national aggregate not estimated")?;
            ok &= (old.median - 0.30).abs() <= 0.02 && old.lower <= 0.31 && old.upper >= 0.29;
            ok &= (change.median + 0.39).abs() <= 0.02 && change.lower <= -0.35 && change.upper >= -0.43;
            parts.push(format!(
                "flagged {names:?}; HFR {d0} {:.3} ({:.3}, {:.3}); drop {:.3} ({:.3}, {:.3})",
                old.median, old.lower, old.upper, change.median, change.lower, change.upper
            ));
        }
        check(ok, parts.join("; "))
    };
    Some(run())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("smoothing oracle", smoothing_oracle),
        ("cohort oracle", cohort_oracle),
        ("spline correctness", spline_correctness),
        ("bootstrap determinism and degeneracy", determinism),
        ("bootstrap coverage", coverage),
        ("end-to-end step-down recovery", end_to_end),
        ("Simpson reversal", simpson),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = f();
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {}: PASS  {name}: {d} [{secs:.1} s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {d} [{secs:.1} s]", i + 1)
            }
        }
    }
    match real_data() {
        None => println!("criterion 8: SKIP  real-data reproduction (set HFRSCOPE_FLORIDA_CSV / HFRSCOPE_CDC_CSV)"),
        Some(Ok(d)) => println!("criterion 8: PASS  real-data reproduction: {d}"),
        Some(Err(d)) => {
            failed += 1;
            println!("criterion 8: FAIL  real-data reproduction: {d}")
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
