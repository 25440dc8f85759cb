use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{Days, NaiveDate};
use hfrscope::cohort::{build_cohort_table, StratumKey};
use hfrscope::ingest::{filter_cohort, parse_florida_lines, CohortFilter, ParseOptions, SchemaConfig};
use hfrscope::record::{AgeBand, LineRecord};
use hfrscope::signals::{hfr_series, write_rate_csv};
use hfrscope::synth::{write_florida_csv, BandConfig, Curve, Missingness, SynthConfig};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hfrscope"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn hfrscope")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const FL_HEADER: &str = "County,Age,Gender,Hospitalized,Died,Case1\n";

fn d(m: u32, day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, m, day).unwrap()
}

fn one_band(hfr: f64, seed: u64) -> SynthConfig {
    SynthConfig {
        start: d(3, 26),
        end: d(7, 31),
        bands: vec![BandConfig {
            band: AgeBand::A60_69,
            intensity: Curve::constant(250.0),
            p_hosp: Curve::constant(0.3),
            hfr: Curve::constant(hfr),
            p_death_unhospitalized: Curve::constant(0.01),
        }],
        female_fraction: 0.5,
        seed,
        missingness: Missingness { hosp_unknown: 0.2, hosp_missing: 0.05, death_unknown: 0.0, death_missing: 0.6, wrap_yes: false },
    }
}

fn synth_csv(dir: &Path, cfg: &SynthConfig) -> PathBuf {
    let (recs, _) = hfrscope::synth::generate_line_records(cfg).unwrap();
    let path = dir.join("cases.csv");
    write_florida_csv(&recs, fs::File::create(&path).unwrap()).unwrap();
    path
}

fn ingest(dir: &Path, input: &Path) -> PathBuf {
    let out = dir.join("ingest");
    let o = run(&["ingest", "--input", s(input), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out.join("records.hfrs")
}

fn assert_same_files(a: &Path, b: &Path) {
    let mut n = 0;
    for e in fs::read_dir(a).unwrap() {
        let name = e.unwrap().file_name();
        if name == "manifest.json" {
            continue;
        }
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?} differs");
        n += 1;
    }
    assert!(n > 0);
}

#[test]
fn fixture_ingest_totals() {
    let tmp = TempDir::new().unwrap();
    // 20 rows: 16 good, 2 bad dates, 1 missing date, 1 short row
    let rows = [
        "Dade,37,Female,YES,,2020/04/01 05:00:00+00",
        "Dade,61,Male,YES,Yes,2020/04/01 05:00:00+00",
        "Dade,85,Female,NO,NA,2020/04/02 05:00:00+00",
        "Broward,44,Male,UNKNOWN,,2020/04/02 05:00:00+00",
        "Broward,29,Female,,,2020/04/03 05:00:00+00",
        "Broward,70,Male,YES,Yes,2020/04/03 05:00:00+00",
        "Orange,55,Female,NO,,2020/04/04 05:00:00+00",
        "Orange,9,Male,NO,,2020/04/04 05:00:00+00",
        "Orange,Unknown,Unknown,YES,,2020/04/05 05:00:00+00",
        "Leon,66,Female,YES,Yes,2020/04/05 05:00:00+00",
        "Leon,18,Male,NO,,2020/04/06 05:00:00+00",
        "Leon,92,Female,YES,Yes,2020/04/06 05:00:00+00",
        "Pinellas,33,Male,NO,,2020/04/07 05:00:00+00",
        "Pinellas,47,Female,YES,,2020/04/07 05:00:00+00",
        "Pinellas,58,Male,UNKNOWN,Yes,2020/04/08 05:00:00+00",
        "Duval,74,Female,YES,,2020/04/08 05:00:00+00",
        "Duval,40,Male,NO,,31/31/2020",
        "Duval,41,Female,NO,,not a date",
        "Duval,42,Male,NO,,",
        "Duval,43",
    ];
    let input = tmp.path().join("fl.csv");
    fs::write(&input, format!("{FL_HEADER}{}\n", rows.join("\n"))).unwrap();
    let out = tmp.path().join("out");
    let o = run(&["ingest", "--input", s(&input), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("ingest_report.json")).unwrap()).unwrap();
    assert_eq!(report["total_rows"], 20);
    assert_eq!(report["kept_rows"], 16);
    assert_eq!(report["rejected_rows_by_reason"]["bad_date"], 2);
    assert_eq!(report["rejected_rows_by_reason"]["missing_date"], 1);
    assert_eq!(report["rejected_rows_by_reason"]["malformed_row"], 1);
    // hand counts over the 16 kept rows
    let h = &report["hospitalization_tally"];
    assert_eq!((h["yes"].as_u64(), h["no"].as_u64(), h["unknown"].as_u64(), h["missing"].as_u64()), (Some(8), Some(5), Some(2), Some(1)));
    let dd = &report["death_tally"];
    assert_eq!((dd["yes"].as_u64(), dd["missing"].as_u64(), dd["unknown"].as_u64()), (Some(5), Some(11), Some(0)));

    let store = hfrscope::store::read_store(fs::File::open(out.join("records.hfrs")).unwrap()).unwrap();
    assert_eq!(store.len(), 16);
    assert_eq!(store.iter().filter(|r| r.hospitalized && r.died).count(), 4);
    assert_eq!(store.iter().filter(|r| r.age_band == AgeBand::Unknown).count(), 1);
    let quarantine = fs::read_to_string(out.join("quarantine.csv")).unwrap();
    assert_eq!(quarantine.lines().count(), 1 + 4);

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["row_counts"]["kept_rows"], 16);
    assert_eq!(manifest["command"]["subcommand"], "ingest");
}

#[test]
fn empty_file_warns_and_succeeds() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("empty.csv");
    fs::write(&input, FL_HEADER).unwrap();
    let out = tmp.path().join("out");
    let o = run(&["ingest", "--input", s(&input), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("no data rows"), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("ingest_report.json")).unwrap()).unwrap();
    assert_eq!(report["kept_rows"], 0);
}

#[test]
fn missing_column_names_it() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("bad.csv");
    fs::write(&input, "County,Age,Gender,Died,Case1\nDade,1,Male,NO,2020-05-01\n").unwrap();
    let o = run(&["ingest", "--input", s(&input), "--out", s(&tmp.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Hospitalized"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(run(&["analyze", "--store", "x", "--window", "2020-05-01", "--out", "y"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    let tmp = TempDir::new().unwrap();
    let o = run(&["synth", "--scenario", "no-such-scenario", "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn analyze_matches_direct_module_calls() {
    let tmp = TempDir::new().unwrap();
    let input = synth_csv(tmp.path(), &one_band(0.25, 11));
    let store = ingest(tmp.path(), &input);
    let out = tmp.path().join("analyze");
    let o = run(&["analyze", "--store", s(&store), "--min-deaths", "3", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("notes.txt").exists());
    assert!(!out.join("pos_test_rate.csv").exists());

    let (raw, _) = parse_florida_lines(fs::read(&input).unwrap().as_slice(), &ParseOptions::new(SchemaConfig::florida())).unwrap();
    let recs: Vec<LineRecord> = raw.iter().map(|r| r.recode()).collect();
    let vintage = recs.iter().map(|r| r.event_date).max().unwrap();
    let window = (d(3, 26), d(11, 1));
    let kept = filter_cohort(&recs, window, 30, vintage).unwrap();
    let range = CohortFilter::new(window.0, window.1, 30, vintage).unwrap().effective_range().unwrap();
    let table = build_cohort_table(&kept, range).unwrap();

    let mut cohort = Vec::new();
    table.write_csv(&mut cohort).unwrap();
    assert_eq!(fs::read(out.join("cohort.csv")).unwrap(), cohort);

    let series: Vec<_> = StratumKey::all().into_iter().map(|k| hfr_series(&table, k, 3).unwrap()).collect();
    let mut hfr = Vec::new();
    write_rate_csv(&mut hfr, &series).unwrap();
    assert_eq!(fs::read(out.join("hfr.csv")).unwrap(), hfr);

    let demo = hfrscope::cohort::summarize_demographics(&kept);
    assert_eq!(fs::read_to_string(out.join("demographics.txt")).unwrap(), demo.render_text());
}

#[test]
fn analyze_with_testing_file() {
    let tmp = TempDir::new().unwrap();
    let input = synth_csv(tmp.path(), &one_band(0.25, 12));
    let store = ingest(tmp.path(), &input);
    let mut testing = String::from("date,state,positive,totalTestResults\n");
    for i in 0..30u64 {
        let day = d(4, 1) + Days::new(i);
        testing.push_str(&format!("{},FL,{},{}\n", day.format("%Y%m%d"), 100 * (i + 1), 1000 * (i + 1)));
        testing.push_str(&format!("{},GA,{},{}\n", day.format("%Y%m%d"), 7 * (i + 1), 9 * (i + 1)));
    }
    let tpath = tmp.path().join("tests.csv");
    fs::write(&tpath, testing).unwrap();
    let out = tmp.path().join("analyze");
    let o = run(&["analyze", "--store", s(&store), "--testing", s(&tpath), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rate = fs::read_to_string(out.join("pos_test_rate.csv")).unwrap();
    let lines: Vec<&str> = rate.lines().collect();
    assert_eq!(lines.len(), 31);
    // every FL day has 100 positives of 1000 tests
    let last: Vec<&str> = lines[30].split(',').collect();
    assert_eq!(last[2].parse::<f64>().unwrap(), 0.1);
}

fn bootstrap(store: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["bootstrap", "--store", s(store), "--out", s(out), "--replicates", "200", "--seed", "9"];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn bootstrap_is_byte_identical_across_runs_and_replays() {
    let tmp = TempDir::new().unwrap();
    let input = synth_csv(tmp.path(), &one_band(0.3, 13));
    let store = ingest(tmp.path(), &input);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let extra = ["--strata", "aggregate,60-69,60-69/female", "--dates", "2020-04-15,2020-06-15"];
    for dir in [&a, &b] {
        let o = bootstrap(&store, dir, &extra);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_same_files(&a, &b);
    assert!(a.join("bands_60-69_female.csv").exists());

    let c = tmp.path().join("c");
    let o = run(&["report", "--manifest", s(&a.join("manifest.json")), "--out", s(&c)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_same_files(&a, &c);

    let text = fs::read_to_string(a.join("peak_20200415_20200615.txt")).unwrap();
    // bands without cases are dashed
    assert!(text.lines().count() >= 4, "{text}");
}

#[test]
fn zero_residual_input_gives_zero_width() {
    let tmp = TempDir::new().unwrap();
    // every day: 10 hospitalized in 60-69, 3 of them died
    let mut csv = String::from(FL_HEADER);
    for i in 0..120u64 {
        let day = d(3, 26) + Days::new(i);
        for k in 0..10 {
            let died = if k < 3 { "Yes" } else { "" };
            csv.push_str(&format!("Dade,65,Female,YES,{died},{} 05:00:00+00\n", day.format("%Y/%m/%d")));
        }
    }
    let input = tmp.path().join("flat.csv");
    fs::write(&input, csv).unwrap();
    let store = ingest(tmp.path(), &input);
    let out = tmp.path().join("bs");
    let o = bootstrap(&store, &out, &["--strata", "aggregate,60-69", "--dates", "2020-04-15,2020-06-01"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(out.join("peak_20200415_20200601.csv")).unwrap();
    for row in rdr.records() {
        let row = row.unwrap();
        let v = |i: usize| row[i].parse::<f64>().unwrap();
        assert_eq!(v(3), 0.3);
        for (lo, hi) in [(4, 5), (7, 8), (10, 11)] {
            assert_eq!(v(lo), v(hi), "width at column {lo}");
        }
    }
    let bands = fs::read_to_string(out.join("bands_60-69.csv")).unwrap();
    for line in bands.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[3], f[4], "{line}");
    }
}

#[test]
fn bootstrap_without_support_exits_3() {
    let tmp = TempDir::new().unwrap();
    let mut csv = String::from(FL_HEADER);
    for i in 0..60u64 {
        let day = d(4, 1) + Days::new(i);
        csv.push_str(&format!("Dade,65,Male,NO,,{} 05:00:00+00\n", day.format("%Y/%m/%d")));
    }
    let input = tmp.path().join("nodeaths.csv");
    fs::write(&input, csv).unwrap();
    let store = ingest(tmp.path(), &input);
    let out = tmp.path().join("bs");
    let o = bootstrap(&store, &out, &["--strata", "aggregate"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("peak_20200415_20200715.txt")).unwrap();
    assert!(text.lines().nth(1).unwrap().trim_end().ends_with('-'));
    assert!(out.join("manifest.json").exists());
}

#[test]
fn synth_scenario_file_and_replay() {
    let tmp = TempDir::new().unwrap();
    let cfg = one_band(0.2, 5);
    let path = tmp.path().join("scenario.json");
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let a = tmp.path().join("a");
    let o = run(&["synth", "--scenario", s(&path), "--seed", "6", "--out", s(&a)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let written: SynthConfig = serde_json::from_str(&fs::read_to_string(a.join("scenario.json")).unwrap()).unwrap();
    assert_eq!(written.seed, 6);

    let b = tmp.path().join("b");
    let o = run(&["report", "--manifest", s(&a.join("manifest.json")), "--out", s(&b)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_same_files(&a, &b);
}
