//! `racklay gradcheck`: run the finite-difference gradient suite.

use anyhow::{bail, Result};
use clap::Args;

use racklay_core::tensornet::{check_gradients, default_suite};

/// Worst relative error allowed for any operation in the suite.
const TOLERANCE: f64 = 1e-4;

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Only run cases whose name contains this substring.
    #[arg(long)]
    pub filter: Option<String>,
}

pub fn run(args: GradcheckArgs) -> Result<()> {
    let suite = default_suite();
    let mut ran = 0usize;
    let mut failed = 0usize;
    for case in &suite {
        if let Some(filter) = &args.filter {
            if !case.name.contains(filter.as_str()) {
                continue;
            }
        }
        let report = check_gradients(case);
        ran += 1;
        let ok = report.max_rel_err < TOLERANCE;
        if !ok {
            failed += 1;
        }
        println!(
            "{:<40} max_rel_err {:.3e} over {:>5} elements  {}",
            report.name,
            report.max_rel_err,
            report.elements,
            if ok { "ok" } else { "FAIL" }
        );
    }
    if ran == 0 {
        bail!("no gradient-check cases matched the filter");
    }
    if failed > 0 {
        bail!("{failed} of {ran} gradient checks exceeded {TOLERANCE:e}");
    }
    println!("all {ran} gradient checks within {TOLERANCE:e}");
    Ok(())
}
