//! Closed-loop slot simulation: URP process, policy dispatch, queue and
//! ledger updates, metric accumulation and parameter sweeps.

use std::collections::HashMap;
use std::rc::Rc;

use rand::Rng;

use crate::baselines::{
    baseline1_power, baseline2_power, baseline3_df_step, sample_relay_channel, BaselineConfig,
};
use crate::cache::{account_slot, q_min, sample_cache_state, CacheVector, SegmentLedger, Urp};
use crate::channel::{instantaneous_rate, sample_channel, select_and_beamform};
use crate::error::{Error, Result};
use crate::power::{policy_step, PolicyTables};
use crate::queue::{step_queue, QueueVector, SystemConfig};

/// i.i.d. categorical file request per user.
pub fn sample_urp<R: Rng + ?Sized>(rng: &mut R, rho: &[f64], n_users: usize) -> Result<Urp> {
    if rho.is_empty() || rho.iter().any(|&p| p < 0.0) {
        return Err(Error::Config("popularity vector must be nonnegative".into()));
    }
    let total: f64 = rho.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("popularity vector sums to {total}, expected 1")));
    }
    let mut pi = Vec::with_capacity(n_users);
    for _ in 0..n_users {
        let u: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = rho.len() - 1;
        for (l, &p) in rho.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = l;
                break;
            }
        }
        pi.push(pick);
    }
    Ok(Urp(pi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    Proposed,
    Baseline1(BaselineConfig),
    Baseline2(BaselineConfig),
    Baseline3(BaselineConfig),
}

impl Policy {
    pub fn id(&self) -> u8 {
        match self {
            Policy::Proposed => 0,
            Policy::Baseline1(_) => 1,
            Policy::Baseline2(_) => 2,
            Policy::Baseline3(_) => 3,
        }
    }
}

/// Post-burn-in averages for one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    /// Fraction of slots with Q_k < W_L.
    pub interruption: Vec<f64>,
    /// Fraction of slots with Q_k > W_H.
    pub overflow: Vec<f64>,
    /// Time-average of e^{-alpha (Q - W_L)^+}.
    pub smooth_interruption: Vec<f64>,
    /// Time-average of e^{-alpha (W_H - Q)^+}.
    pub smooth_overflow: Vec<f64>,
    pub avg_power: Vec<f64>,
    pub avg_queue: Vec<f64>,
    /// sum_k (beta_k I_k + gamma_k B_k) + average total power.
    pub combined_cost: f64,
    /// Cached-parity underflow events per measured slot (proposed only).
    pub underflow_freq: f64,
    /// Empirical Pr[S = 1] over the measurement window (proposed only).
    pub pr_comp: f64,
    pub measured_slots: usize,
}

#[derive(Debug, Clone)]
pub struct TraceRow {
    pub slot: usize,
    pub s: u8,
    pub q_min: f64,
    pub queues: Vec<f64>,
    pub gains: Vec<f64>,
    pub powers: Vec<f64>,
    pub rates: Vec<f64>,
}

fn check_finite(slot: usize, queues: &[f64], powers: &[f64]) -> Result<()> {
    for (k, &v) in queues.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Numeric(format!("queue {k} is {v} at slot {slot}")));
        }
    }
    for (k, &v) in powers.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Numeric(format!("power {k} is {v} at slot {slot}")));
        }
    }
    Ok(())
}

/// Runs one episode; the first 10% of slots is burn-in and excluded from
/// the metrics.
pub fn run_episode<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    policy: Policy,
    q: &CacheVector,
    n_slots: usize,
    trace: bool,
    rng: &mut R,
) -> Result<(MetricsRecord, Option<Vec<TraceRow>>)> {
    let n = cfg.n_users();
    let burn_in = n_slots / 10;
    let mut queues = QueueVector(vec![cfg.w_low; n]);
    let mut pi = sample_urp(rng, &cfg.rho, n)?;

    // Policy tables are keyed by q_min; the cache vector is fixed for the
    // episode so only a handful of values ever occur.
    let mut table_cache: HashMap<u64, Rc<PolicyTables>> = HashMap::new();
    let mut tables: Option<Rc<PolicyTables>> = None;
    let mut ledgers: Vec<SegmentLedger> =
        pi.0.iter().map(|&l| SegmentLedger::new(cfg.segment_bits, q.0[l])).collect();

    let get_tables = |qm: f64, cache: &mut HashMap<u64, Rc<PolicyTables>>| -> Result<Rc<PolicyTables>> {
        if let Some(t) = cache.get(&qm.to_bits()) {
            return Ok(t.clone());
        }
        let t = Rc::new(PolicyTables::build_with_memo(qm, cfg, 2048)?);
        cache.insert(qm.to_bits(), t.clone());
        Ok(t)
    };
    if policy == Policy::Proposed {
        tables = Some(get_tables(q_min(q, &pi), &mut table_cache)?);
    }

    let mut interruption = vec![0.0; n];
    let mut overflow = vec![0.0; n];
    let mut smooth_i = vec![0.0; n];
    let mut smooth_o = vec![0.0; n];
    let mut power_sum = vec![0.0; n];
    let mut queue_sum = vec![0.0; n];
    let mut s_count = 0usize;
    let mut underflow_at_burn_in = 0u64;
    let mut measured = 0usize;
    let mut rows = if trace { Some(Vec::with_capacity(n_slots)) } else { None };

    for slot in 0..n_slots {
        if slot > 0 && slot % cfg.urp_hold_slots == 0 {
            pi = sample_urp(rng, &cfg.rho, n)?;
            if policy == Policy::Proposed {
                tables = Some(get_tables(q_min(q, &pi), &mut table_cache)?);
            }
            for (led, &l) in ledgers.iter_mut().zip(&pi.0) {
                led.retarget(q.0[l]);
            }
        }
        if slot == burn_in {
            underflow_at_burn_in = ledgers.iter().map(|l| l.underflow_events).sum();
        }

        let s = sample_cache_state(rng, q, &pi);
        let h = sample_channel(rng, cfg.m);
        let (gains, powers, rates) = match policy {
            Policy::Proposed => {
                let out = select_and_beamform(&h, s, rng)?;
                let powers = policy_step(&queues, &out, tables.as_ref().unwrap(), cfg)?;
                let rates: Vec<f64> = out
                    .gains
                    .iter()
                    .zip(&powers)
                    .map(|(&g, &p)| instantaneous_rate(g, p, cfg.bw))
                    .collect();
                (out.gains, powers, rates)
            }
            Policy::Baseline1(bl) => {
                let out = select_and_beamform(&h, 0, rng)?;
                let powers: Vec<f64> =
                    out.gains.iter().map(|&g| baseline1_power(g, cfg, &bl)).collect();
                let rates: Vec<f64> = out
                    .gains
                    .iter()
                    .zip(&powers)
                    .map(|(&g, &p)| instantaneous_rate(g, p, cfg.bw))
                    .collect();
                (out.gains, powers, rates)
            }
            Policy::Baseline2(bl) => {
                let out = select_and_beamform(&h, 0, rng)?;
                let powers: Vec<f64> = out
                    .gains
                    .iter()
                    .zip(&queues.0)
                    .map(|(&g, &qk)| baseline2_power(g, qk, cfg, &bl))
                    .collect();
                let rates: Vec<f64> = out
                    .gains
                    .iter()
                    .zip(&powers)
                    .map(|(&g, &p)| instantaneous_rate(g, p, cfg.bw))
                    .collect();
                (out.gains, powers, rates)
            }
            Policy::Baseline3(bl) => {
                let h_br = sample_relay_channel(rng, cfg.m, bl.relay_gain_db);
                let out = baseline3_df_step(&h, &h_br, &queues, cfg, &bl, rng)?;
                (vec![0.0; n], out.powers, out.rates)
            }
        };
        check_finite(slot, &queues.0, &powers)?;

        if policy == Policy::Proposed {
            for (k, led) in ledgers.iter_mut().enumerate() {
                account_slot(led, rates[k] * cfg.tau, s);
            }
        }

        if slot >= burn_in {
            measured += 1;
            s_count += usize::from(s == 1);
            for k in 0..n {
                let qk = queues.0[k];
                interruption[k] += f64::from(qk < cfg.w_low);
                overflow[k] += f64::from(qk > cfg.w_high);
                smooth_i[k] += (-cfg.alpha * (qk - cfg.w_low).max(0.0)).exp();
                smooth_o[k] += (-cfg.alpha * (cfg.w_high - qk).max(0.0)).exp();
                power_sum[k] += powers[k];
                queue_sum[k] += qk;
            }
        }

        if let Some(rows) = rows.as_mut() {
            rows.push(TraceRow {
                slot,
                s,
                q_min: q_min(q, &pi),
                queues: queues.0.clone(),
                gains: gains.clone(),
                powers: powers.clone(),
                rates: rates.clone(),
            });
        }

        for k in 0..n {
            queues.0[k] = step_queue(queues.0[k], rates[k], cfg);
        }
    }

    let mf = measured as f64;
    let norm = |v: Vec<f64>| v.into_iter().map(|x| x / mf).collect::<Vec<f64>>();
    let interruption = norm(interruption);
    let overflow = norm(overflow);
    let avg_power = norm(power_sum);
    let total_power: f64 = avg_power.iter().sum();
    let mut combined = total_power;
    for k in 0..n {
        combined += cfg.beta[k] * interruption[k] + cfg.gamma[k] * overflow[k];
    }
    let underflow_total: u64 = ledgers.iter().map(|l| l.underflow_events).sum();
    let record = MetricsRecord {
        interruption,
        overflow,
        smooth_interruption: norm(smooth_i),
        smooth_overflow: norm(smooth_o),
        avg_power,
        avg_queue: norm(queue_sum),
        combined_cost: combined,
        underflow_freq: (underflow_total - underflow_at_burn_in) as f64 / mf,
        pr_comp: if policy == Policy::Proposed { s_count as f64 / mf } else { 0.0 },
        measured_slots: measured,
    };
    Ok((record, rows))
}

/// One tradeoff-curve point: interruption/overflow prices and the policy's
/// own knob (eta for the proposed policy, kappa for baselines).
#[derive(Debug, Clone, Copy)]
pub struct SweepPoint {
    pub policy_id: u8,
    pub beta: f64,
    pub gamma: f64,
    pub knob: f64,
}

#[derive(Debug, Clone)]
pub struct SweepGrid {
    pub points: Vec<SweepPoint>,
    pub seeds: Vec<u64>,
    pub n_slots: usize,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::Config("sweep grid has no points".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() || self.seeds.is_empty() {
            return Err(Error::Config("sweep seeds must be nonempty and distinct".into()));
        }
        Ok(())
    }
}

/// Sentinel seed values for the aggregate rows.
pub const SEED_MEAN: i64 = -1;
pub const SEED_STDERR: i64 = -2;

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub policy_id: u8,
    pub beta: f64,
    pub gamma: f64,
    pub eta_or_kappa: f64,
    pub avg_power_per_user: f64,
    pub interruption_prob: f64,
    pub overflow_prob: f64,
    pub combined_cost: f64,
    pub pr_comp: f64,
    pub occupancy_bits: f64,
    /// Actual seed, or SEED_MEAN / SEED_STDERR for aggregates.
    pub seed: i64,
    pub n_slots: usize,
}

fn policy_for(point: &SweepPoint) -> Result<Policy> {
    Ok(match point.policy_id {
        0 => Policy::Proposed,
        1 => Policy::Baseline1(BaselineConfig::new(point.knob, 1)?),
        2 => Policy::Baseline2(BaselineConfig::new(point.knob, 2)?),
        3 => Policy::Baseline3(BaselineConfig::new(point.knob, 3)?),
        other => return Err(Error::Config(format!("unknown policy id {other}"))),
    })
}

/// Runs every (point, seed) episode in deterministic order; failures are
/// recorded and the sweep continues. Per-seed rows are followed by a mean
/// and a standard-error row for each point.
pub fn sweep<F>(
    grid: &SweepGrid,
    cfg: &SystemConfig,
    q: &CacheVector,
    mut make_rng: F,
) -> (Vec<SweepRow>, Vec<(usize, u64, String)>)
where
    F: FnMut(u64) -> rand_chacha::ChaCha8Rng,
{
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let occ = crate::cache::occupancy_bits(q, &cfg.file_sizes);
    for (pi_idx, point) in grid.points.iter().enumerate() {
        let mut cfg_pt = cfg.clone();
        let n = cfg.n_users();
        cfg_pt.beta = vec![point.beta; n];
        cfg_pt.gamma = vec![point.gamma; n];
        if point.policy_id == 0 {
            cfg_pt.eta = point.knob;
        }
        let mut point_rows = Vec::new();
        for &seed in &grid.seeds {
            let policy = match policy_for(point) {
                Ok(p) => p,
                Err(e) => {
                    failures.push((pi_idx, seed, e.to_string()));
                    continue;
                }
            };
            let mut rng = make_rng(seed);
            match run_episode(&cfg_pt, policy, q, grid.n_slots, false, &mut rng) {
                Ok((m, _)) => {
                    point_rows.push(SweepRow {
                        policy_id: point.policy_id,
                        beta: point.beta,
                        gamma: point.gamma,
                        eta_or_kappa: point.knob,
                        avg_power_per_user: m.avg_power.iter().sum::<f64>() / n as f64,
                        interruption_prob: m.interruption[0],
                        overflow_prob: m.overflow[0],
                        combined_cost: m.combined_cost,
                        pr_comp: m.pr_comp,
                        occupancy_bits: occ,
                        seed: seed as i64,
                        n_slots: grid.n_slots,
                    });
                }
                Err(e) => failures.push((pi_idx, seed, e.to_string())),
            }
        }
        if !point_rows.is_empty() {
            let nf = point_rows.len() as f64;
            let mean = |f: &dyn Fn(&SweepRow) -> f64| {
                point_rows.iter().map(|r| f(r)).sum::<f64>() / nf
            };
            let stderr = |f: &dyn Fn(&SweepRow) -> f64, mu: f64| {
                if point_rows.len() < 2 {
                    return 0.0;
                }
                let var =
                    point_rows.iter().map(|r| (f(r) - mu).powi(2)).sum::<f64>() / (nf - 1.0);
                (var / nf).sqrt()
            };
            let mp = mean(&|r: &SweepRow| r.avg_power_per_user);
            let mi = mean(&|r: &SweepRow| r.interruption_prob);
            let mo = mean(&|r: &SweepRow| r.overflow_prob);
            let mc = mean(&|r: &SweepRow| r.combined_cost);
            let ms = mean(&|r: &SweepRow| r.pr_comp);
            let sp = stderr(&|r: &SweepRow| r.avg_power_per_user, mp);
            let si = stderr(&|r: &SweepRow| r.interruption_prob, mi);
            let so = stderr(&|r: &SweepRow| r.overflow_prob, mo);
            let sc = stderr(&|r: &SweepRow| r.combined_cost, mc);
            let ss = stderr(&|r: &SweepRow| r.pr_comp, ms);
            let proto = point_rows[0].clone();
            rows.extend(point_rows);
            rows.push(SweepRow {
                avg_power_per_user: mp,
                interruption_prob: mi,
                overflow_prob: mo,
                combined_cost: mc,
                pr_comp: ms,
                seed: SEED_MEAN,
                ..proto.clone()
            });
            rows.push(SweepRow {
                avg_power_per_user: sp,
                interruption_prob: si,
                overflow_prob: so,
                combined_cost: sc,
                pr_comp: ss,
                seed: SEED_STDERR,
                ..proto
            });
        }
    }
    (rows, failures)
}
