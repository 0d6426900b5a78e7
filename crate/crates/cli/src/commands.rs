use std::fs::File;

use anyhow::{Context, Result};
use gridcopula::gof::{equal_tailed, lpml, posterior_mean_grid, rho_draws, GofOptions, Lpml};
use gridcopula::mcmc::{run_chain, AcceptanceSummary};
use gridcopula::rng::seeded;
use gridcopula::{Chain, CopulaFamily, GofReport, McmcConfig, SbepConfig};
use serde::Serialize;

use crate::data::{load_counts, pseudo_sample, read_pairs, write_json, write_pairs};
use crate::{FitArgs, GofArgs, SimulateArgs};

/// A numerical procedure produced an unusable result.
#[derive(Debug, thiserror::Error)]
#[error("numerical failure: {0}")]
pub struct NumericFailure(pub String);

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let family = args.family.family()?.context("--family is required")?;
    if args.n == 0 {
        anyhow::bail!("--n must be at least 1");
    }
    let sample = family.sample(args.n, &mut seeded(args.seed))?;
    write_pairs(&args.out, &sample)
}

#[derive(Serialize)]
struct PriorSummary {
    a: f64,
    b: f64,
    c: u32,
}

#[derive(Serialize)]
struct RhoSummary {
    mean: f64,
    lower: f64,
    upper: f64,
    level: f64,
    /// Spearman's rho of the pseudo-observations.
    sample: f64,
}

#[derive(Serialize)]
struct FitSummary {
    m: usize,
    n: u64,
    mode: &'static str,
    prior: PriorSummary,
    mcmc: McmcConfig,
    stored_draws: usize,
    counts: Vec<Vec<u64>>,
    posterior_mean: Vec<Vec<f64>>,
    acceptance: AcceptanceSummary,
    rho: RhoSummary,
    lpml: Lpml,
    warnings: Vec<String>,
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let (x, y) = read_pairs(&args.data.input)?;
    let sample = pseudo_sample(&x, &y, args.data.mode, args.data.ties())?;
    let counts = gridcopula::CellCounts::from_sample(&sample, args.m)?;
    let prior = SbepConfig::uniform(args.m, args.prior.a, args.prior.b, args.prior.c)?;
    let config = args.mcmc.config();

    let mut warnings = Vec::new();
    if !prior.within_data_guidance(counts.n()) {
        let w = format!(
            "c = {} exceeds sqrt(n)/5 = {:.3}; the prior may dominate the data",
            args.prior.c,
            (counts.n() as f64).sqrt() / 5.0
        );
        log::warn!("{w}");
        warnings.push(w);
    }

    let chain = run_chain(&counts, &prior, &config)?;
    let rhos = rho_draws(&chain)?;
    let (lower, upper) = equal_tailed(&rhos, 0.95)?;
    let mean_rho = rhos.iter().sum::<f64>() / rhos.len() as f64;
    let l = lpml(&chain, &counts)?;
    if !l.flagged.is_empty() {
        warnings.push(format!(
            "{} occupied cells had zero mass in some draw",
            l.flagged.len()
        ));
    }
    let mean = posterior_mean_grid(&chain)?;
    if !mean_rho.is_finite() || mean.cells().iter().any(|c| !c.is_finite()) {
        return Err(NumericFailure("posterior summaries are not finite".into()).into());
    }

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    let chain_path = args.out.join("chain.csv");
    chain.write_csv(crate::data::create(&chain_path)?)?;

    let m = args.m;
    let summary = FitSummary {
        m,
        n: counts.n(),
        mode: args.data.mode.as_str(),
        prior: PriorSummary {
            a: args.prior.a,
            b: args.prior.b,
            c: args.prior.c,
        },
        mcmc: config,
        stored_draws: chain.len(),
        counts: counts.to_rows(),
        posterior_mean: mean.cells().chunks(m).map(|r| r.to_vec()).collect(),
        acceptance: chain.acceptance_summary(),
        rho: RhoSummary {
            mean: mean_rho,
            lower,
            upper,
            level: 0.95,
            sample: sample.spearman(),
        },
        lpml: l,
        warnings,
    };
    write_json(&args.out.join("summary.json"), &summary)?;
    println!(
        "rho 95% interval ({:.3}, {:.3}), LPML {:.4}, acceptance {:.3}",
        lower, upper, summary.lpml.per_observation, summary.acceptance.pooled
    );
    Ok(())
}

pub fn gof(args: &GofArgs) -> Result<()> {
    let file =
        File::open(&args.chain).with_context(|| format!("cannot open {}", args.chain.display()))?;
    let chain = Chain::read_csv(file)
        .with_context(|| format!("cannot read chain {}", args.chain.display()))?;
    let counts = load_counts(&args.data.input, chain.m, args.data.mode, args.data.ties())?;
    let reference = match &args.reference {
        Some(name) => Some(CopulaFamily::from_name(name, args.theta)?),
        None if args.theta.is_some() => anyhow::bail!("--theta given without --reference"),
        None => None,
    };
    if args.sample_copula && reference.is_none() {
        anyhow::bail!("--sample-copula needs a --reference family to compare against");
    }
    let opts = GofOptions {
        c: args.c,
        mode: args.data.mode.as_str().to_string(),
        level: args.level,
        reference,
        sample_copula: args.sample_copula,
    };
    let report = GofReport::compute(&chain, &counts, &opts)?;
    println!("{}", GofReport::table_header());
    println!("{}", report.table_row());
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Ok(())
}
