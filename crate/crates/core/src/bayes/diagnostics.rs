use std::io::Write;

use super::sampler::{ChainRecord, PosteriorSummary};

/// `sample_index,theta_1..theta_m,cost,qoi_error,accepted_count`, one row
/// per accepted sample.
pub fn write_chain_csv(chain: &ChainRecord, mut w: impl Write) -> std::io::Result<()> {
    let m = chain.initial_theta.len();
    write!(w, "sample_index")?;
    for i in 1..=m {
        write!(w, ",theta_{i}")?;
    }
    writeln!(w, ",cost,qoi_error,accepted_count")?;
    for s in &chain.accepted {
        write!(w, "{}", s.proposal_index)?;
        for t in &s.theta {
            write!(w, ",{t:.16e}")?;
        }
        writeln!(w, ",{:.16e},{:.16e},{}", s.cost, s.qoi_error, s.accepted_count)?;
    }
    Ok(())
}

/// Per-proposal `proposal,cost,qoi_error,running_acceptance`.
pub fn write_diagnostics_csv(chain: &ChainRecord, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "proposal,cost,qoi_error,running_acceptance")?;
    for (i, ((c, q), a)) in chain
        .cost_series
        .iter()
        .zip(&chain.qoi_error_series)
        .zip(&chain.running_acceptance)
        .enumerate()
    {
        writeln!(w, "{},{c:.16e},{q:.16e},{a:.16e}", i + 1)?;
    }
    Ok(())
}

pub fn write_summary_json(summary: &PosteriorSummary, w: impl Write) -> serde_json::Result<()> {
    serde_json::to_writer_pretty(w, summary)
}
