//! Playback-buffer dynamics, per-stage costs and price-parameter validation.

use crate::error::{Error, Result};
use crate::special::{exp_integral_e1, find_root, BracketedProblem};

/// All scalar system parameters.
#[derive(Debug, Clone)]
pub struct SystemConfig {
    /// System bandwidth B_W in Hz.
    pub bw: f64,
    /// Slot duration tau in seconds.
    pub tau: f64,
    /// Smoothing parameter alpha in 1/bits.
    pub alpha: f64,
    /// Low playback threshold W_L in bits.
    pub w_low: f64,
    /// Target maximum buffer W_H in bits.
    pub w_high: f64,
    /// Streaming rate mu_0 in bits/s.
    pub mu0: f64,
    /// Antennas per site M; users = 2M.
    pub m: usize,
    /// Number of video files L.
    pub n_files: usize,
    /// File sizes F_l in bits.
    pub file_sizes: Vec<f64>,
    /// Interruption prices beta_k, one per user.
    pub beta: Vec<f64>,
    /// Buffer prices gamma_k, one per user.
    pub gamma: Vec<f64>,
    /// Cache price eta.
    pub eta: f64,
    /// Segment size L_S in bits.
    pub segment_bits: f64,
    /// Slots the URP stays constant.
    pub urp_hold_slots: usize,
    /// File popularity rho (generation only; controllers never read it).
    pub rho: Vec<f64>,
}

impl SystemConfig {
    /// The simulation parameter set used throughout: B_W = 1 MHz,
    /// tau = 5 ms, alpha = 7.5e-5, W_H = 2.5e5, W_L = 2e4, mu_0 = 2 Mb/s,
    /// M = 2, L = 6, 600 MByte files, beta = gamma = 15.
    pub fn paper_default() -> Self {
        let n_users = 4;
        SystemConfig {
            bw: 1e6,
            tau: 5e-3,
            alpha: 7.5e-5,
            w_low: 2e4,
            w_high: 2.5e5,
            mu0: 2e6,
            m: 2,
            n_files: 6,
            file_sizes: vec![600.0 * 8e6; 6],
            beta: vec![15.0; n_users],
            gamma: vec![15.0; n_users],
            eta: 1e-9,
            segment_bits: 1e6,
            urp_hold_slots: 10_000,
            rho: vec![0.6, 0.3, 0.08, 0.01, 0.005, 0.005],
        }
    }

    pub fn n_users(&self) -> usize {
        2 * self.m
    }

    /// mu_0 ln2 / B_W, the rate-to-bandwidth ratio used by the surrogates.
    pub fn mu_ratio_ln2(&self) -> f64 {
        self.mu0 * std::f64::consts::LN_2 / self.bw
    }
}

/// Per-user playback buffer occupancies in bits.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueVector(pub Vec<f64>);

impl QueueVector {
    pub fn uniform(n: usize, q: f64) -> Self {
        QueueVector(vec![q; n])
    }
}

/// Playback (departure) rate in bits/s: linear ramp below W_L, mu_0 above.
pub fn playback_rate(qk: f64, cfg: &SystemConfig) -> f64 {
    if qk < cfg.w_low {
        qk * cfg.mu0 / cfg.w_low
    } else {
        cfg.mu0
    }
}

/// One-slot fluid queue update; nonnegative whenever W_L > mu_0 tau.
pub fn step_queue(qk: f64, rate: f64, cfg: &SystemConfig) -> f64 {
    qk + (rate - playback_rate(qk, cfg)) * cfg.tau
}

/// Two-exponential per-stage cost: beta e^{-a(Q-W_L)+} + gamma e^{-a(W_H-Q)+}.
pub fn stage_cost(qk: f64, cfg: &SystemConfig, k: usize) -> f64 {
    let a = cfg.alpha;
    let low = (qk - cfg.w_low).max(0.0);
    let high = (cfg.w_high - qk).max(0.0);
    cfg.beta[k] * (-a * low).exp() + cfg.gamma[k] * (-a * high).exp()
}

/// Stage-cost minimizer: (ln beta - ln gamma)/(2 alpha) + (W_L + W_H)/2.
pub fn q_circ(cfg: &SystemConfig, k: usize) -> Result<f64> {
    let q = (cfg.beta[k].ln() - cfg.gamma[k].ln()) / (2.0 * cfg.alpha)
        + 0.5 * (cfg.w_low + cfg.w_high);
    if q <= cfg.w_low || q >= cfg.w_high {
        return Err(Error::Assumption(vec![format!(
            "price ratio beta_{k}/gamma_{k} puts the stage-cost minimizer at {q:.3} outside (W_L, W_H)"
        )]));
    }
    Ok(q)
}

/// Solves (B_W / (2 ln2)) E1(1/lambda) = mu_0 for lambda > 0.
///
/// This is the water level that supports the streaming rate with no cache
/// (q_min = 0); it feeds the lower bound on the interruption price.
pub fn lambda_zero(cfg: &SystemConfig) -> Result<f64> {
    let target = cfg.mu0;
    let f = |lam: f64| cfg.bw / (2.0 * std::f64::consts::LN_2) * exp_integral_e1(1.0 / lam).unwrap() - target;
    let mut hi = 1.0;
    let mut iter = 0;
    while f(hi) < 0.0 {
        hi *= 4.0;
        iter += 1;
        if iter > 200 {
            return Err(Error::Numeric("lambda_0 bracket expansion failed".into()));
        }
    }
    let p = BracketedProblem {
        objective: &f,
        lo: 1e-6,
        hi,
        tol_abs: 1e-9 * target.max(1.0),
        tol_rel: 1e-14,
        max_iter: 300,
    };
    find_root(&p)
}

/// Checks the price-parameter assumptions plus W_L > mu_0 tau.
/// Returns the list of violated conditions (empty when valid).
pub fn validate_assumptions(cfg: &SystemConfig) -> Vec<String> {
    let mut violations = Vec::new();
    if cfg.bw <= 0.0 || cfg.tau <= 0.0 || cfg.alpha <= 0.0 || cfg.mu0 <= 0.0 {
        violations.push("bw, tau, alpha and mu0 must all be positive".into());
        return violations;
    }
    if cfg.w_low <= cfg.mu0 * cfg.tau {
        violations.push(format!(
            "slot-size condition W_L > mu0*tau violated: {} <= {}",
            cfg.w_low,
            cfg.mu0 * cfg.tau
        ));
    }
    if cfg.w_high <= cfg.w_low {
        violations.push(format!("W_H ({}) must exceed W_L ({})", cfg.w_high, cfg.w_low));
    }
    if cfg.beta.len() != cfg.n_users() || cfg.gamma.len() != cfg.n_users() {
        violations.push("beta/gamma must have one entry per user".into());
        return violations;
    }

    let span = (cfg.w_high - cfg.w_low) * cfg.alpha;
    let lam0 = match lambda_zero(cfg) {
        Ok(l) => l,
        Err(e) => {
            violations.push(format!("mu0/B_W inconsistent, lambda_0 unsolvable: {e}"));
            return violations;
        }
    };
    // Average power to support mu_0 with no cache help.
    let p0 = 0.5 * (lam0 * (-1.0 / lam0).exp() - exp_integral_e1(1.0 / lam0).unwrap());
    let edge = (-0.5 * span).exp();

    for k in 0..cfg.n_users() {
        let ratio = cfg.beta[k] / cfg.gamma[k];
        if ratio <= (-span).exp() || ratio >= span.exp() {
            violations.push(format!(
                "price-ratio condition violated for user {k}: beta/gamma = {ratio:.6} not inside (e^-{span:.4}, e^{span:.4})"
            ));
        }
        let beta_floor = (p0 + cfg.gamma[k] * edge) / (1.0 - edge);
        if cfg.beta[k] <= beta_floor {
            violations.push(format!(
                "interruption price too small for user {k}: beta = {} <= {beta_floor:.6}",
                cfg.beta[k]
            ));
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg() -> SystemConfig {
        SystemConfig::paper_default()
    }

    #[test]
    fn playback_rate_cases() {
        let c = cfg();
        assert_eq!(playback_rate(0.0, &c), 0.0);
        assert_relative_eq!(playback_rate(c.w_low, &c), 2e6);
        assert_relative_eq!(playback_rate(c.w_low / 2.0, &c), 1e6);
    }

    #[test]
    fn step_queue_cases() {
        let c = cfg();
        // Fixed point at rate = mu0, Q >= W_L.
        assert_relative_eq!(step_queue(5e4, c.mu0, &c), 5e4);
        assert_eq!(step_queue(0.0, 0.0, &c), 0.0);
        // Q = 1e4, rate 0: Q(1 - mu0*tau/W_L) = 1e4 * 0.5.
        assert_relative_eq!(step_queue(1e4, 0.0, &c), 5e3);
    }

    #[test]
    fn stage_cost_below_wl() {
        let c = cfg();
        let qk = 1e4;
        let expect = c.beta[0] + c.gamma[0] * (-c.alpha * (c.w_high - qk)).exp();
        assert_relative_eq!(stage_cost(qk, &c, 0), expect, max_relative = 1e-14);
    }

    #[test]
    fn stage_cost_at_midpoint_symmetric_prices() {
        let c = cfg();
        let q0 = q_circ(&c, 0).unwrap();
        assert_relative_eq!(q0, 1.35e5, max_relative = 1e-12);
        let expect = 2.0 * c.beta[0] * (-c.alpha * (c.w_high - c.w_low) / 2.0).exp();
        assert_relative_eq!(stage_cost(q0, &c, 0), expect, max_relative = 1e-12);
    }

    #[test]
    fn q_circ_grid_search_oracle() {
        let mut c = cfg();
        c.beta = vec![40.0; 4];
        c.gamma = vec![10.0; 4];
        let q0 = q_circ(&c, 0).unwrap();
        // Grid-search the minimizer of stage_cost independently.
        let mut best = (f64::INFINITY, 0.0);
        let n = 200_000;
        for i in 0..=n {
            let q = c.w_low + (c.w_high - c.w_low) * i as f64 / n as f64;
            let v = stage_cost(q, &c, 0);
            if v < best.0 {
                best = (v, q);
            }
        }
        let step = (c.w_high - c.w_low) / n as f64;
        assert!((best.1 - q0).abs() <= step, "grid {} vs closed form {}", best.1, q0);
    }

    #[test]
    fn q_circ_boundary_limit() {
        let mut c = cfg();
        // As beta/gamma -> e^{alpha (W_H - W_L)}, Q0 -> W_H.
        let span = (c.w_high - c.w_low) * c.alpha;
        c.beta = vec![10.0 * (0.999 * span).exp(); 4];
        c.gamma = vec![10.0; 4];
        let q0 = q_circ(&c, 0).unwrap();
        assert!(q0 > c.w_high - 0.001 * (c.w_high - c.w_low));
    }

    #[test]
    fn paper_defaults_pass_assumptions() {
        assert!(validate_assumptions(&cfg()).is_empty());
    }

    #[test]
    fn ratio_violation_flagged() {
        let mut c = cfg();
        let span = (c.w_high - c.w_low) * c.alpha;
        c.beta = vec![10.0 * (2.0 * span).exp(); 4];
        c.gamma = vec![10.0; 4];
        let v = validate_assumptions(&c);
        assert!(v.iter().any(|s| s.contains("price-ratio")));
    }

    #[test]
    fn slot_size_violation_flagged() {
        let mut c = cfg();
        c.tau = c.w_low / c.mu0;
        let v = validate_assumptions(&c);
        assert!(v.iter().any(|s| s.contains("slot-size")));
    }

    #[test]
    fn stage_cost_unimodal() {
        // Below W_L only the overflow term varies, so the cost creeps up;
        // from W_L it falls to the minimizer, then rises again.
        let c = cfg();
        let q0 = q_circ(&c, 0).unwrap();
        let mut prev = stage_cost(0.0, &c, 0);
        let mut q = 1000.0;
        while q < c.w_low {
            let v = stage_cost(q, &c, 0);
            assert!(v >= prev - 1e-12);
            prev = v;
            q += 1000.0;
        }
        prev = stage_cost(c.w_low, &c, 0);
        q = c.w_low + 1000.0;
        while q < q0 {
            let v = stage_cost(q, &c, 0);
            assert!(v <= prev + 1e-12);
            prev = v;
            q += 1000.0;
        }
        prev = stage_cost(q0, &c, 0);
        q = q0 + 1000.0;
        while q <= c.w_high {
            let v = stage_cost(q, &c, 0);
            assert!(v >= prev - 1e-12);
            prev = v;
            q += 1000.0;
        }
        // Above W_H the overflow term saturates at gamma and the cost decays
        // toward it.
        assert!(stage_cost(3.0 * c.w_high, &c, 0) >= c.gamma[0]);
        assert!(stage_cost(3.0 * c.w_high, &c, 0) <= stage_cost(c.w_high, &c, 0));
    }

    proptest! {
        #[test]
        fn queue_stays_nonnegative(qk in 0.0..1e6f64, rate in 0.0..1e8f64) {
            let c = cfg();
            let next = step_queue(qk, rate, &c);
            prop_assert!(next >= 0.0);
        }
    }
}
