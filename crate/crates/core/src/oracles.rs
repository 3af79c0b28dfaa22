//! Independent Monte Carlo and brute-force verifiers for the closed-form
//! results: gain-mixture check, single-user value iteration, surrogate gap
//! scan and the conditional service-rate identity.

use rand::Rng;

use crate::cache::{q_min, CacheVector, Urp};
use crate::cache_opt::c_hat;
use crate::channel::{instantaneous_rate, sample_channel, select_and_beamform};
use crate::error::{Error, Result};
use crate::power::{policy_step, theta_tilde, xi, PolicyTables};
use crate::queue::{
    lambda_zero, playback_rate, stage_cost, step_queue, QueueVector, SystemConfig,
};
use crate::special::exp_integral_e1;

const LN2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy)]
pub struct GainReport {
    /// Empirical fraction of zero effective gains.
    pub zero_mass: f64,
    /// Mean of the positive gains (unit for the exponential branch).
    pub tail_mean: f64,
    /// Kolmogorov-Smirnov statistic of the positive gains against Exp(1).
    pub ks_stat: f64,
    pub n_samples: usize,
}

/// End-to-end check of the effective-gain mixture: simulates cache state,
/// channel, selection and ZF beamforming (no shortcut through the mixture)
/// and compares user 0's gain distribution against
/// ((1+q)/2) Exp(1) + ((1-q)/2) delta_0.
pub fn mc_effective_gain_check<R: Rng + ?Sized>(
    q_min_v: f64,
    n_samples: usize,
    m: usize,
    rng: &mut R,
) -> Result<GainReport> {
    if n_samples < 10_000 {
        return Err(Error::Config("gain check needs at least 1e4 samples".into()));
    }
    let mut zeros = 0usize;
    let mut positives = Vec::new();
    for _ in 0..n_samples {
        let s = u8::from(rng.random::<f64>() < q_min_v);
        let h = sample_channel(rng, m);
        let out = select_and_beamform(&h, s, rng)?;
        let g = out.gains[0];
        if g == 0.0 {
            zeros += 1;
        } else {
            positives.push(g);
        }
    }
    positives.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let np = positives.len().max(1) as f64;
    let tail_mean = positives.iter().sum::<f64>() / np;
    let mut ks: f64 = 0.0;
    for (i, &g) in positives.iter().enumerate() {
        let model = 1.0 - (-g).exp();
        let lo = i as f64 / np;
        let hi = (i + 1) as f64 / np;
        ks = ks.max((model - lo).abs()).max((hi - model).abs());
    }
    Ok(GainReport {
        zero_mass: zeros as f64 / n_samples as f64,
        tail_mean,
        ks_stat: ks,
        n_samples,
    })
}

/// Discretization of the single-user average-cost chain.
#[derive(Debug, Clone, Copy)]
pub struct MdpDisc {
    pub q_points: usize,
    pub g_points: usize,
    pub p_points: usize,
    /// Queue-grid truncation (reflecting top boundary).
    pub q_max: f64,
    /// Optional hard power cap; used by the zero-power sandbox.
    pub p_max: Option<f64>,
}

/// Relative value iteration on the discretized single-user chain with the
/// gain mixture sampled by quantile; returns the converged average cost.
///
/// Built only from the primitive model pieces (stage cost, queue dynamics,
/// rate formula) — none of the closed forms under test.
pub fn tiny_mdp_average_cost(disc: &MdpDisc, q_min_v: f64, cfg: &SystemConfig, k: usize) -> Result<f64> {
    let nq = disc.q_points;
    let ng = disc.g_points;
    let np = disc.p_points;
    if nq > 400 || ng > 64 || np > 64 {
        return Err(Error::Config("value-iteration grids beyond desk scale".into()));
    }
    let dx = disc.q_max / (nq - 1) as f64;
    let xs: Vec<f64> = (0..nq).map(|i| i as f64 * dx).collect();

    // Gain mixture: atom at 0 plus Exp(1) midpoint quantiles.
    let mut gains: Vec<(f64, f64)> = vec![(0.0, 0.5 * (1.0 - q_min_v))];
    let w_pos = 0.5 * (1.0 + q_min_v) / ng as f64;
    for j in 0..ng {
        let u = (j as f64 + 0.5) / ng as f64;
        gains.push(((-(1.0 - u).ln()), w_pos));
    }

    // Power grid: 0 plus log-spaced values up to the cap (by default 10x
    // the water level that supports mu_0 at this mixture weight).
    let p_cap = match disc.p_max {
        Some(p) => p,
        None => {
            let target = cfg.mu0 * LN2 / (cfg.bw * xi(q_min_v));
            let f = |lw: f64| exp_integral_e1(1.0 / lw).unwrap() - target;
            let mut lw = 1.0;
            let mut it = 0;
            while f(lw) < 0.0 {
                lw *= 2.0;
                it += 1;
                if it > 200 {
                    return Err(Error::Numeric("power-cap bracket failed".into()));
                }
            }
            10.0 * lw
        }
    };
    let mut powers = vec![0.0];
    if p_cap > 0.0 && np > 1 {
        let p_lo = p_cap / 1000.0;
        let ratio = (p_cap / p_lo).powf(1.0 / (np - 2).max(1) as f64);
        let mut p = p_lo;
        for _ in 0..np - 1 {
            powers.push(p.min(p_cap));
            p *= ratio;
        }
    }

    // Precompute next-state interpolation for every (x, g, p).
    let n_gp = gains.len() * powers.len();
    let mut next_idx = vec![0usize; nq * n_gp];
    let mut next_frac = vec![0.0f64; nq * n_gp];
    for (i, &x) in xs.iter().enumerate() {
        let mu = playback_rate(x, cfg);
        for (j, &(g, _)) in gains.iter().enumerate() {
            for (m_i, &p) in powers.iter().enumerate() {
                let r = instantaneous_rate(g, p, cfg.bw);
                let xn = (x + (r - mu) * cfg.tau).clamp(0.0, disc.q_max);
                let pos = xn / dx;
                let lo = (pos.floor() as usize).min(nq - 2);
                let idx = i * n_gp + j * powers.len() + m_i;
                next_idx[idx] = lo;
                next_frac[idx] = pos - lo as f64;
            }
        }
    }

    let costs: Vec<f64> = xs.iter().map(|&x| stage_cost(x, cfg, k)).collect();
    let mut v = vec![0.0f64; nq];
    let mut v_new = vec![0.0f64; nq];
    let max_iter = 200_000;
    for it in 0..max_iter {
        for i in 0..nq {
            let mut expect = 0.0;
            for (j, &(_, w)) in gains.iter().enumerate() {
                let mut best = f64::INFINITY;
                for (m_i, &p) in powers.iter().enumerate() {
                    let idx = i * n_gp + j * powers.len() + m_i;
                    let lo = next_idx[idx];
                    let t = next_frac[idx];
                    let vn = v[lo] + t * (v[lo + 1] - v[lo]);
                    let val = p + vn;
                    if val < best {
                        best = val;
                    }
                }
                expect += w * best;
            }
            v_new[i] = costs[i] + expect;
        }
        let mut lo_gain = f64::INFINITY;
        let mut hi_gain = f64::NEG_INFINITY;
        for i in 0..nq {
            let d = v_new[i] - v[i];
            lo_gain = lo_gain.min(d);
            hi_gain = hi_gain.max(d);
        }
        let theta = 0.5 * (lo_gain + hi_gain);
        if hi_gain - lo_gain < 1e-6 * theta.abs().max(1.0) {
            return Ok(theta);
        }
        let anchor = v_new[0];
        for i in 0..nq {
            v[i] = v_new[i] - anchor;
        }
        if it == max_iter - 1 {
            return Err(Error::Convergence {
                iters: max_iter,
                best: theta,
                residual: hi_gain - lo_gain,
            });
        }
    }
    unreachable!()
}

/// Relative gaps |theta - C_hat|/theta across streaming-rate ratios
/// mu_0/B_W; interruption/overflow prices are re-scaled per ratio to keep
/// the price assumptions satisfied (the floor grows with the rate).
pub fn surrogate_error_scan(ratios: &[f64], q_min_v: f64, cfg: &SystemConfig) -> Result<Vec<f64>> {
    let mut gaps = Vec::with_capacity(ratios.len());
    for &ratio in ratios {
        let mut c = cfg.clone();
        c.mu0 = ratio * c.bw;
        let lam0 = lambda_zero(&c)?;
        let p0 = 0.5 * (lam0 * (-1.0 / lam0).exp() - exp_integral_e1(1.0 / lam0).unwrap());
        let span = (c.w_high - c.w_low) * c.alpha;
        let edge = (-0.5 * span).exp();
        // beta = gamma = price: floor is (p0 + price*edge)/(1-edge).
        let price = 1.25 * p0 / (1.0 - 2.0 * edge);
        let price = price.max(cfg.beta[0]);
        c.beta = vec![price; c.n_users()];
        c.gamma = vec![price; c.n_users()];
        let theta = theta_tilde(q_min_v, &c, 0)?;
        let q = CacheVector::uniform(c.n_files, q_min_v)?;
        let pi = Urp(vec![0; c.n_users()]);
        let chat = c_hat(&q, &pi, &c)? / c.n_users() as f64;
        gaps.push((theta - chat).abs() / theta.abs());
    }
    Ok(gaps)
}

#[derive(Debug, Clone, Copy)]
pub struct ServiceReport {
    /// Average per-slot service (bits) conditioned on CoMP slots.
    pub r_bar_a: f64,
    /// Average per-slot service (bits) conditioned on being selected.
    pub r_bar_b: f64,
    /// 2 mu_0 tau / (1 + q_min).
    pub target: f64,
    pub gap: f64,
}

/// Measures the two conditional service averages for user 0 under the
/// proposed policy with a fixed URP, over a long closed-loop run.
pub fn service_rate_identity_check<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    q: &CacheVector,
    pi: &Urp,
    n_slots: usize,
    rng: &mut R,
) -> Result<ServiceReport> {
    let qm = q_min(q, pi);
    let tables = PolicyTables::build_with_memo(qm, cfg, 2048)?;
    let n = cfg.n_users();
    let mut queues = QueueVector(vec![cfg.w_low; n]);
    let burn_in = n_slots / 10;
    let mut sum_a = 0.0;
    let mut n_a = 0usize;
    let mut sum_b = 0.0;
    let mut n_b = 0usize;
    for slot in 0..n_slots {
        let s = u8::from(rng.random::<f64>() < qm);
        let h = sample_channel(rng, cfg.m);
        let out = select_and_beamform(&h, s, rng)?;
        let powers = policy_step(&queues, &out, &tables, cfg)?;
        let rates: Vec<f64> = out
            .gains
            .iter()
            .zip(&powers)
            .map(|(&g, &p)| instantaneous_rate(g, p, cfg.bw))
            .collect();
        if slot >= burn_in {
            let bits = rates[0] * cfg.tau;
            if s == 1 {
                sum_a += bits;
                n_a += 1;
            }
            if out.selected.contains(&0) {
                sum_b += bits;
                n_b += 1;
            }
        }
        for k in 0..n {
            queues.0[k] = step_queue(queues.0[k], rates[k], cfg);
        }
    }
    let r_bar_a = sum_a / n_a.max(1) as f64;
    let r_bar_b = sum_b / n_b.max(1) as f64;
    let target = 2.0 * cfg.mu0 * cfg.tau / (1.0 + qm);
    Ok(ServiceReport {
        r_bar_a,
        r_bar_b,
        target,
        gap: (r_bar_a - r_bar_b).abs() / r_bar_b.abs().max(1e-300),
    })
}

/// Convenience: theta gap |theta_VI - theta|/theta for one slot duration
/// with the grids scaled to it.
pub fn theta_gap_at_tau(
    tau: f64,
    disc: &MdpDisc,
    q_min_v: f64,
    cfg: &SystemConfig,
) -> Result<f64> {
    let mut c = cfg.clone();
    c.tau = tau;
    let theta_vi = tiny_mdp_average_cost(disc, q_min_v, &c, 0)?;
    let theta = theta_tilde(q_min_v, &c, 0)?;
    Ok((theta_vi - theta).abs() / theta.abs())
}
