//! Closed-form approximate-Bellman power controller: per-queue water levels,
//! average-cost constants and the multi-level water-filling allocation.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::channel::BeamformOutcome;
use crate::error::{Error, Result};
use crate::queue::{playback_rate, q_circ, stage_cost, QueueVector, SystemConfig};
use crate::special::{exp_integral_e1, exp_integral_ei, find_root, BracketedProblem};

const LN2: f64 = std::f64::consts::LN_2;

/// Exclusion band around f = 0 where the fixed-point function has an
/// essential singularity; it is crossed by evaluating limits.
const F_GUARD: f64 = 1e-12;

/// CoMP-opportunity weight (1 + q_min)/2.
pub fn xi(q_min: f64) -> f64 {
    0.5 * (1.0 + q_min)
}

/// Unique negative solution of the drift equation
/// xi (B_W/ln2) E1(-ln2/(lambda B_W)) = mu_k(x).
///
/// Returns `None` as a no-service sentinel when mu_k(x) = 0 (empty buffer
/// target rate); the solution then degenerates to lambda -> 0^-.
pub fn lambda_tilde(x: f64, q_min: f64, cfg: &SystemConfig) -> Result<Option<f64>> {
    let mu = playback_rate(x, cfg);
    if mu <= 0.0 {
        return Ok(None);
    }
    let xi_v = xi(q_min);
    // Solve on the positive water level lw = -lambda B_W / ln2, O(1) scale.
    let target = mu / cfg.bw;
    let h = move |lw: f64| xi_v / LN2 * exp_integral_e1(1.0 / lw).unwrap() - target;
    let mut lo = 1.0;
    let mut iters = 0;
    while h(lo) > 0.0 {
        lo *= 0.25;
        iters += 1;
        if iters > 300 {
            return Err(Error::Numeric(format!("lambda bracket (low side) failed at x={x}")));
        }
    }
    let mut hi = lo * 4.0;
    iters = 0;
    while h(hi) < 0.0 {
        hi *= 4.0;
        iters += 1;
        if iters > 300 {
            return Err(Error::Numeric(format!("lambda bracket (high side) failed at x={x}")));
        }
    }
    let p = BracketedProblem {
        objective: &h,
        lo,
        hi,
        tol_abs: 1e-14,
        tol_rel: 1e-15,
        max_iter: 300,
    };
    let lw = find_root(&p)?;
    Ok(Some(-lw * LN2 / cfg.bw))
}

/// Closed-form average water-filling power at water level lw under the
/// effective-gain mixture: xi (lw e^{-1/lw} - E1(1/lw)).
pub fn average_power_at_level(lw: f64, q_min: f64) -> f64 {
    xi(q_min) * (lw * (-1.0 / lw).exp() - exp_integral_e1(1.0 / lw).unwrap())
}

/// Approximate optimal per-user average cost theta_k.
pub fn theta_tilde(q_min: f64, cfg: &SystemConfig, k: usize) -> Result<f64> {
    let q0 = q_circ(cfg, k)?;
    let lam = lambda_tilde(q0, q_min, cfg)?
        .ok_or_else(|| Error::Numeric("lambda sentinel at Q0".into()))?;
    let lw = -lam * cfg.bw / LN2;
    Ok(stage_cost(q0, cfg, k) + average_power_at_level(lw, q_min))
}

/// LHS of the per-queue fixed-point equation (as a function of f), whose
/// root at level theta_k yields the value-function derivative f_k(x).
pub fn bellman_lhs(x: f64, f: f64, q_min: f64, cfg: &SystemConfig, k: usize) -> f64 {
    let c_hat = stage_cost(x, cfg, k);
    let mu = playback_rate(x, cfg);
    let xi_v = xi(q_min);
    if f.abs() < F_GUARD {
        // Limit from below; from above the function diverges to +inf.
        return if f > 0.0 { f64::MAX } else { c_hat };
    }
    if f < 0.0 {
        let u = -LN2 / (f * cfg.bw); // > 0
        let e1 = exp_integral_e1(u).unwrap();
        let rate_term = xi_v * cfg.bw / LN2 * e1;
        let power_term = xi_v * ((f * cfg.bw / LN2) * (-u).exp() + e1);
        c_hat + (rate_term - mu) * f - power_term
    } else {
        let u = LN2 / (f * cfg.bw); // > 0
        if u > 650.0 {
            return f64::MAX;
        }
        // E1 of a negative argument via the -Ei continuation.
        let e1_neg = -exp_integral_ei(u).unwrap();
        let rate_term = xi_v * cfg.bw / LN2 * e1_neg;
        let power_term = xi_v * ((f * cfg.bw / LN2) * u.exp() + e1_neg);
        c_hat + (rate_term - mu) * f - power_term
    }
}

struct UserTable {
    q_circ: f64,
    theta: f64,
    lambda_at_qcirc: f64,
    memo: Option<Memo>,
}

struct Memo {
    xs: Vec<f64>,
    fs: Vec<f64>,
}

/// Per-(q_min, config) solver state for the power controller.
pub struct PolicyTables {
    pub q_min: f64,
    users: Vec<UserTable>,
    sign_crossings: AtomicU64,
}

impl PolicyTables {
    pub fn build(q_min: f64, cfg: &SystemConfig) -> Result<Self> {
        let mut users = Vec::with_capacity(cfg.n_users());
        for k in 0..cfg.n_users() {
            let q0 = q_circ(cfg, k)?;
            let theta = theta_tilde(q_min, cfg, k)?;
            let lam = lambda_tilde(q0, q_min, cfg)?
                .ok_or_else(|| Error::Numeric("lambda sentinel at Q0".into()))?;
            users.push(UserTable { q_circ: q0, theta, lambda_at_qcirc: lam, memo: None });
        }
        Ok(PolicyTables { q_min, users, sign_crossings: AtomicU64::new(0) })
    }

    /// Builds the interpolation memo used by the simulation loop
    /// (log-spaced nodes on [0, 4 W_H]); the solver stays the source of
    /// truth and acceptance checks bypass the memo.
    pub fn build_with_memo(q_min: f64, cfg: &SystemConfig, nodes: usize) -> Result<Self> {
        let mut tables = Self::build(q_min, cfg)?;
        let x_max = 4.0 * cfg.w_high;
        let x_min = 1.0; // one bit
        let ratio = (x_max / x_min).powf(1.0 / (nodes as f64 - 2.0));
        let mut xs = Vec::with_capacity(nodes);
        xs.push(0.0);
        let mut x = x_min;
        for _ in 0..nodes - 1 {
            xs.push(x.min(x_max));
            x *= ratio;
        }
        for k in 0..tables.users.len() {
            // Identical price pairs share one memo shape, but the solve is
            // cheap enough to just do per user.
            let fs: Result<Vec<f64>> =
                xs.iter().map(|&xv| tables.solve_f_tilde_relaxed(xv, cfg, k)).collect();
            tables.users[k].memo = Some(Memo { xs: xs.clone(), fs: fs? });
        }
        Ok(tables)
    }

    pub fn theta(&self, k: usize) -> f64 {
        self.users[k].theta
    }

    pub fn q_circ(&self, k: usize) -> f64 {
        self.users[k].q_circ
    }

    pub fn lambda_at_qcirc(&self, k: usize) -> f64 {
        self.users[k].lambda_at_qcirc
    }

    pub fn total_theta(&self) -> f64 {
        self.users.iter().map(|u| u.theta).sum()
    }

    pub fn sign_crossings(&self) -> u64 {
        self.sign_crossings.load(Ordering::Relaxed)
    }

    /// Solves the fixed-point equation for f_k(x) by bracketed search.
    ///
    /// Branch 1 (x <= Q0): unique root in (-inf, lambda(x)]; branch 2
    /// (x > Q0): unique root in [lambda(x), inf), possibly past f = 0 where
    /// the -Ei continuation applies and the physical power is zero.
    pub fn solve_f_tilde(&self, x: f64, cfg: &SystemConfig, k: usize) -> Result<f64> {
        self.solve_f_tilde_inner(x, cfg, k, true)
    }

    /// Like `solve_f_tilde`, but when the positive continuation never
    /// re-crosses the cost level (deep-overflow states where the stage cost
    /// saturates) it returns the positive f with the smallest excess
    /// instead of failing; the allocated power is zero for any f > 0, so
    /// only the sign matters to the controller there.
    fn solve_f_tilde_relaxed(&self, x: f64, cfg: &SystemConfig, k: usize) -> Result<f64> {
        self.solve_f_tilde_inner(x, cfg, k, false)
    }

    fn solve_f_tilde_inner(&self, x: f64, cfg: &SystemConfig, k: usize, strict: bool) -> Result<f64> {
        let u = &self.users[k];
        let theta = u.theta;
        let tol = 1e-10 * theta.abs().max(1.0);
        let lam_x = match lambda_tilde(x, self.q_min, cfg)? {
            Some(l) => l,
            None => -F_GUARD, // x = 0: branch-1 anchor just below the guard
        };
        let g = |f: f64| bellman_lhs(x, f, self.q_min, cfg, k) - theta;

        if x <= u.q_circ {
            let hi = lam_x;
            let ghi = g(hi);
            if ghi.abs() <= tol {
                return Ok(hi);
            }
            if ghi < 0.0 {
                // Numerical slack right at Q0 where equality holds.
                if ghi.abs() <= 1e-6 * theta.abs().max(1.0) {
                    return Ok(hi);
                }
                return Err(Error::Numeric(format!(
                    "branch-1 anchor below level at x={x}: g={ghi}"
                )));
            }
            let mut delta = 0.5 * lam_x.abs() + 1e-9;
            let mut lo = hi - delta;
            let mut iters = 0;
            while g(lo) > 0.0 {
                delta *= 2.0;
                lo = hi - delta;
                iters += 1;
                if iters > 200 {
                    return Err(Error::Convergence { iters, best: lo, residual: g(lo).abs() });
                }
            }
            let p = BracketedProblem {
                objective: &g,
                lo,
                hi,
                tol_abs: tol,
                tol_rel: 1e-15,
                max_iter: 300,
            };
            return find_root(&p);
        }

        // Branch 2: march toward (and possibly across) zero.
        let glam = g(lam_x);
        if glam.abs() <= tol {
            return Ok(lam_x);
        }
        if glam < 0.0 {
            if glam.abs() <= 1e-6 * theta.abs().max(1.0) {
                return Ok(lam_x);
            }
            return Err(Error::Numeric(format!(
                "branch-2 anchor below level at x={x}: g={glam}"
            )));
        }
        let mut lo = lam_x;
        let mut delta = 0.5 * lam_x.abs() + 1e-9;
        let mut iters = 0;
        loop {
            let hi = (lo + delta).min(-F_GUARD);
            if g(hi) < 0.0 {
                let p = BracketedProblem {
                    objective: &g,
                    lo,
                    hi,
                    tol_abs: tol,
                    tol_rel: 1e-15,
                    max_iter: 300,
                };
                return find_root(&p);
            }
            lo = hi;
            if hi >= -F_GUARD {
                break;
            }
            delta *= 2.0;
            iters += 1;
            if iters > 300 {
                return Err(Error::Convergence { iters, best: hi, residual: g(hi).abs() });
            }
        }
        // No root in the negative region: cross the guard band into f > 0.
        self.sign_crossings.fetch_add(1, Ordering::Relaxed);
        let mut prev = F_GUARD;
        let mut f = F_GUARD;
        let mut best = (f64::INFINITY, F_GUARD);
        iters = 0;
        loop {
            f *= 2.0;
            if f > 1.0 {
                if !strict {
                    return Ok(best.1);
                }
                return Err(Error::Convergence { iters, best: prev, residual: g(prev).abs() });
            }
            let gf = g(f);
            if gf < best.0 {
                best = (gf, f);
            }
            if gf < 0.0 {
                let p = BracketedProblem {
                    objective: &g,
                    lo: prev,
                    hi: f,
                    tol_abs: tol,
                    tol_rel: 1e-15,
                    max_iter: 300,
                };
                return find_root(&p);
            }
            prev = f;
            iters += 1;
        }
    }

    /// Memoized f_k lookup for the simulation loop; falls back to the
    /// solver off-table.
    pub fn f_at(&self, x: f64, cfg: &SystemConfig, k: usize) -> Result<f64> {
        if let Some(memo) = &self.users[k].memo {
            if x <= *memo.xs.last().unwrap() {
                let idx = match memo.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
                    Ok(i) => return Ok(memo.fs[i]),
                    Err(i) => i,
                };
                let (x0, x1) = (memo.xs[idx - 1], memo.xs[idx]);
                let (f0, f1) = (memo.fs[idx - 1], memo.fs[idx]);
                let t = (x - x0) / (x1 - x0);
                return Ok(f0 + t * (f1 - f0));
            }
        }
        self.solve_f_tilde_relaxed(x, cfg, k)
    }
}

/// Clipped multi-level water-filling: p = (-f B_W/ln2 - 1/g)^+.
pub fn allocate_power(f_tilde: f64, g: f64, cfg: &SystemConfig) -> f64 {
    if g <= 0.0 || f_tilde >= 0.0 {
        return 0.0;
    }
    (-f_tilde * cfg.bw / LN2 - 1.0 / g).max(0.0)
}

/// One Algorithm-I step: powers for every user given queues and beamforming.
pub fn policy_step(
    queues: &QueueVector,
    outcome: &BeamformOutcome,
    tables: &PolicyTables,
    cfg: &SystemConfig,
) -> Result<Vec<f64>> {
    let mut powers = Vec::with_capacity(queues.0.len());
    for (k, &qk) in queues.0.iter().enumerate() {
        let g = outcome.gains[k];
        if g <= 0.0 {
            powers.push(0.0);
            continue;
        }
        let f = tables.f_at(qk, cfg, k)?;
        powers.push(allocate_power(f, g, cfg));
    }
    Ok(powers)
}
