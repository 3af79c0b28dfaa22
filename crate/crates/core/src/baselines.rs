//! Comparison policies: CSI-only water-filling, queue-weighted
//! water-filling, and the half-duplex decode-and-forward relay scheme.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::{random_subset, zf_project, ChannelState};
use crate::error::{Error, Result};
use crate::queue::{QueueVector, SystemConfig};

const LN2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    /// Power price kappa trading interruption probability against power.
    pub kappa: f64,
    /// BS-RS path gain advantage in dB (amplitude scale 10^(db/20)).
    pub relay_gain_db: f64,
    pub baseline_id: u8,
}

impl BaselineConfig {
    pub fn new(kappa: f64, baseline_id: u8) -> Result<Self> {
        if kappa <= 0.0 {
            return Err(Error::Config("kappa must be positive".into()));
        }
        Ok(BaselineConfig { kappa, relay_gain_db: 20.0, baseline_id })
    }
}

/// CSI-only water-filling: p = (B_W/(kappa ln2) - 1/g)^+.
pub fn baseline1_power(g: f64, cfg: &SystemConfig, bl: &BaselineConfig) -> f64 {
    if g <= 0.0 {
        return 0.0;
    }
    (cfg.bw / (bl.kappa * LN2) - 1.0 / g).max(0.0)
}

/// Queue-weighted water-filling: p = ((W_H - qk)^+ B_W/(kappa ln2) - 1/g)^+.
pub fn baseline2_power(g: f64, qk: f64, cfg: &SystemConfig, bl: &BaselineConfig) -> f64 {
    if g <= 0.0 {
        return 0.0;
    }
    let w = (cfg.w_high - qk).max(0.0);
    (w * cfg.bw / (bl.kappa * LN2) - 1.0 / g).max(0.0)
}

/// M x M BS-to-RS channel with the configured path-gain advantage.
pub fn sample_relay_channel<R: Rng + ?Sized>(
    rng: &mut R,
    m: usize,
    relay_gain_db: f64,
) -> Vec<Vec<Complex64>> {
    let amp = 10f64.powf(relay_gain_db / 20.0) * std::f64::consts::FRAC_1_SQRT_2;
    (0..m)
        .map(|_| {
            (0..m)
                .map(|_| {
                    let a: f64 = rng.sample(StandardNormal);
                    let b: f64 = rng.sample(StandardNormal);
                    Complex64::new(a * amp, b * amp)
                })
                .collect()
        })
        .collect()
}

/// Gauss-Jordan inverse with partial pivoting; rejects singular input.
fn invert(a: &[Vec<Complex64>]) -> Result<Vec<Vec<Complex64>>> {
    let n = a.len();
    let mut aug: Vec<Vec<Complex64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| {
                if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }
            }));
            r
        })
        .collect();
    for col in 0..n {
        let (pivot, mag) = (col..n)
            .map(|r| (r, aug[r][col].norm()))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        if mag < 1e-12 {
            return Err(Error::DegenerateChannel);
        }
        aug.swap(col, pivot);
        let inv = Complex64::new(1.0, 0.0) / aug[col][col];
        for v in aug[col].iter_mut() {
            *v *= inv;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = aug[r][col];
            if f.norm() == 0.0 {
                continue;
            }
            let src = aug[col].clone();
            for (v, s) in aug[r].iter_mut().zip(&src) {
                *v -= f * s;
            }
        }
    }
    Ok(aug.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Per-stream transmit-ZF gains over a square channel: 1/||column i of
/// H^{-1}||^2.
pub fn zf_stream_gains(h: &[Vec<Complex64>]) -> Result<Vec<f64>> {
    let inv = invert(h)?;
    let n = h.len();
    Ok((0..n)
        .map(|i| {
            let col_norm_sq: f64 = (0..n).map(|r| inv[r][i].norm_sqr()).sum();
            1.0 / col_norm_sq
        })
        .collect())
}

fn golden_section_max(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, tol_rel: f64) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = lo;
    let mut b = hi;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a) > tol_rel * hi.abs().max(1e-300) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[derive(Debug, Clone)]
pub struct Baseline3Outcome {
    pub selected: Vec<usize>,
    /// End-to-end rate in bits/s per user (0 for unselected).
    pub rates: Vec<f64>,
    /// Per-user transmit power (0 for unselected).
    pub powers: Vec<f64>,
}

/// One half-duplex DF relay slot: phase 1 BS -> RS over `h_br` with
/// transmit ZF, phase 2 joint 2M-antenna ZF to the M selected users; the
/// end-to-end rate is half the min of the phase rates at equal per-phase
/// power, and each user's power maximizes (W_H - Q)^+ r - kappa p by
/// golden-section search.
pub fn baseline3_df_step<R: Rng + ?Sized>(
    h: &ChannelState,
    h_br: &[Vec<Complex64>],
    queues: &QueueVector,
    cfg: &SystemConfig,
    bl: &BaselineConfig,
    rng: &mut R,
) -> Result<Baseline3Outcome> {
    let n = h.n_users();
    let selected = random_subset(rng, n, h.m);
    let g1 = zf_stream_gains(h_br)?;
    let mut rates = vec![0.0; n];
    let mut powers = vec![0.0; n];
    for (i, &k) in selected.iter().enumerate() {
        let co: Vec<&[Complex64]> =
            selected.iter().filter(|&&j| j != k).map(|&j| h.row(j)).collect();
        let (_, g2) = zf_project(h.row(k), &co)?;
        let g1k = g1[i];
        let weight = (cfg.w_high - queues.0[k]).max(0.0);
        let rate = |p: f64| {
            let r1 = cfg.bw * (1.0 + g1k * p).log2();
            let r2 = cfg.bw * (1.0 + g2 * p).log2();
            0.5 * r1.min(r2)
        };
        let objective = |p: f64| weight * rate(p) - bl.kappa * p;
        let p_max = cfg.w_high * cfg.bw / (bl.kappa * LN2);
        let p_star = golden_section_max(&objective, 0.0, p_max, 1e-3);
        let p_star = if objective(p_star) > 0.0 { p_star } else { 0.0 };
        rates[k] = rate(p_star);
        powers[k] = p_star;
    }
    Ok(Baseline3Outcome { selected, rates, powers })
}
