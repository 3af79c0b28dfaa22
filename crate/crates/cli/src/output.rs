//! CSV and report writers. Every file starts with a versioned header
//! comment and prints numbers with 12 significant digits so that reruns
//! with the same configuration and seed are byte-identical.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use opcomp_core::cache_opt::OptimizerState;
use opcomp_core::sim::{SweepRow, TraceRow};
use opcomp_core::MetricsRecord;

use crate::config::FullConfig;

/// Formats a number with 12 significant digits in scientific notation.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.11e}")
}

pub fn write_metrics(path: &Path, cfg: &FullConfig, m: &MetricsRecord) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# opcomp-csv v1 metrics")?;
    writeln!(
        w,
        "user,interruption_prob,overflow_prob,smooth_interruption,smooth_overflow,avg_power,avg_queue"
    )?;
    for k in 0..m.interruption.len() {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            k,
            fmt_num(m.interruption[k]),
            fmt_num(m.overflow[k]),
            fmt_num(m.smooth_interruption[k]),
            fmt_num(m.smooth_overflow[k]),
            fmt_num(m.avg_power[k]),
            fmt_num(m.avg_queue[k]),
        )?;
    }
    writeln!(w, "# combined_cost = {}", fmt_num(m.combined_cost))?;
    writeln!(w, "# underflow_freq = {}", fmt_num(m.underflow_freq))?;
    writeln!(w, "# pr_comp = {}", fmt_num(m.pr_comp))?;
    writeln!(w, "# measured_slots = {}", m.measured_slots)?;
    writeln!(w, "# policy = {}", cfg.sim.policy)?;
    writeln!(w, "# seed = {}", cfg.sim.seed)?;
    w.flush()
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# opcomp-csv v1 trace")?;
    let n = rows.first().map_or(0, |r| r.queues.len());
    let mut header = String::from("slot,s,q_min");
    for tag in ["queue", "gain", "power", "rate"] {
        for k in 0..n {
            header.push_str(&format!(",{tag}_{k}"));
        }
    }
    writeln!(w, "{header}")?;
    for r in rows {
        let mut line = format!("{},{},{}", r.slot, r.s, fmt_num(r.q_min));
        for vals in [&r.queues, &r.gains, &r.powers, &r.rates] {
            for &v in vals.iter() {
                line.push(',');
                line.push_str(&fmt_num(v));
            }
        }
        writeln!(w, "{line}")?;
    }
    w.flush()
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# opcomp-csv v1 sweep")?;
    writeln!(
        w,
        "policy,beta,gamma,eta_or_kappa,avg_power_per_user,interruption_prob,overflow_prob,combined_cost,pr_comp,occupancy_bits,seed,n_slots"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.policy_id,
            fmt_num(r.beta),
            fmt_num(r.gamma),
            fmt_num(r.eta_or_kappa),
            fmt_num(r.avg_power_per_user),
            fmt_num(r.interruption_prob),
            fmt_num(r.overflow_prob),
            fmt_num(r.combined_cost),
            fmt_num(r.pr_comp),
            fmt_num(r.occupancy_bits),
            r.seed,
            r.n_slots,
        )?;
    }
    w.flush()
}

pub fn write_cache_opt(
    path: &Path,
    cfg: &FullConfig,
    state: &OptimizerState,
    u_avg: &[f64],
    q_rows: &[Vec<f64>],
) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# opcomp-csv v1 cache-opt")?;
    let mut header = String::from("iter,u_window_avg,occupancy_bits");
    for l in 0..cfg.system.n_files {
        header.push_str(&format!(",q_{}", l + 1));
    }
    writeln!(w, "{header}")?;
    for (i, &(iter, _u, occ)) in state.trace.iter().enumerate() {
        let mut line = format!("{},{},{}", iter, fmt_num(u_avg[i]), fmt_num(occ));
        for &ql in &q_rows[i] {
            line.push(',');
            line.push_str(&fmt_num(ql));
        }
        writeln!(w, "{line}")?;
    }
    writeln!(w, "# sigma0 = {}", fmt_num(state.sigma0))?;
    writeln!(w, "# iterations = {}", state.trace.len())?;
    w.flush()
}

pub fn write_report(path: &Path, entries: &[(String, f64)]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# opcomp-report v1")?;
    for (k, v) in entries {
        writeln!(w, "{k} = {}", fmt_num(*v))?;
    }
    w.flush()
}
