use chrono::NaiveDate;
use hfrscope::cohort::{GenderStratum, StratumKey};
use hfrscope::report::{default_date_pairs, default_strata, peak_tables, PeakRow};
use hfrscope::trend::{BlockScheme, BootstrapConfig, Lambda, ResidualKind};

use super::{prepare, RunLog};
use crate::args::{BootstrapArgs, GenderArg, LambdaArg, ResidualsArg, SchemeArg};
use crate::error::CliResult;

pub fn bootstrap_config(args: &BootstrapArgs) -> BootstrapConfig {
    BootstrapConfig {
        replicates: args.replicates,
        block_length: args.blocks,
        seed: args.seed,
        scheme: match args.scheme {
            SchemeArg::Moving => BlockScheme::Moving,
            SchemeArg::NonOverlapping => BlockScheme::NonOverlapping,
        },
        lambda: match args.lambda {
            LambdaArg::Cv => Lambda::block_cv_for(args.blocks),
            LambdaArg::Gcv => Lambda::Gcv,
            LambdaArg::Fixed(v) => Lambda::Fixed(v),
        },
        residuals: match args.residuals {
            ResidualsArg::LeaveBlockOut => ResidualKind::LeaveBlockOut,
            ResidualsArg::Fitted => ResidualKind::Fitted,
        },
        reselect_lambda: args.reselect_lambda,
        ..BootstrapConfig::default()
    }
}

pub fn strata(args: &BootstrapArgs) -> Vec<StratumKey> {
    if !args.strata.is_empty() {
        return args.strata.clone();
    }
    let gender = match args.gender {
        None => return default_strata(),
        Some(GenderArg::Female) => GenderStratum::Female,
        Some(GenderArg::Male) => GenderStratum::Male,
    };
    default_strata().into_iter().map(|k| StratumKey::new(k.age, gender)).collect()
}

/// File-name form of a stratum: `80+/female` becomes `80plus_female`.
pub fn slug(k: StratumKey) -> String {
    k.to_string().replace('+', "plus").replace('/', "_")
}

fn pair_name(old: NaiveDate, new: NaiveDate) -> String {
    format!("peak_{}_{}", old.format("%Y%m%d"), new.format("%Y%m%d"))
}

pub fn run(args: &BootstrapArgs, log: &mut RunLog) -> CliResult<()> {
    let prep = prepare(&args.cohort, log)?;
    let config = bootstrap_config(args);
    let strata = strata(args);
    let pairs: Vec<(NaiveDate, NaiveDate)> = if args.dates.is_empty() {
        default_date_pairs()
    } else {
        args.dates.iter().map(|p| (p.old, p.new)).collect()
    };
    log.resolve("bootstrap", &config)?;
    log.resolve("strata", &strata)?;
    log.resolve("date_pairs", &pairs)?;

    let mut ribbons = Vec::new();
    let tables = peak_tables(&prep.table, &strata, &pairs, args.cohort.min_deaths, &config, |k, set| {
        let mut buf = Vec::new();
        set.write_bands_csv(&mut buf)?;
        ribbons.push((k, buf));
        Ok(())
    })?;
    for (k, buf) in &ribbons {
        log.write_with(&format!("bands_{}.csv", slug(*k)), |w| Ok(std::io::Write::write_all(w, buf)?))?;
    }

    let mut estimated = 0;
    for t in &tables {
        let name = pair_name(t.date_old, t.date_new);
        let text = t.render_text();
        log.write_text(&format!("{name}.txt"), &text)?;
        log.write_with(&format!("{name}.csv"), |w| t.write_csv(w))?;
        println!("{text}");
        estimated += t.rows.iter().filter(|r| matches!(r, PeakRow::Estimated { .. })).count();
    }
    log.count("estimated_rows", estimated as u64);
    if estimated == 0 {
        log.insufficient = Some("no stratum had enough supported days to estimate".into());
    }
    Ok(())
}
