//! Rayleigh channel sampling, Mode-0/Mode-1 user selection and
//! zero-forcing beamforming.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Full 2M x 2M channel: row k is user k's channel to all BS+RS antennas,
/// the first M columns are the BS sub-channel.
#[derive(Debug, Clone)]
pub struct ChannelState {
    pub m: usize,
    rows: Vec<Vec<Complex64>>,
}

impl ChannelState {
    pub fn n_users(&self) -> usize {
        2 * self.m
    }

    /// Full row h_k (length 2M).
    pub fn row(&self, k: usize) -> &[Complex64] {
        &self.rows[k]
    }

    /// BS sub-row h_bar_k (length M).
    pub fn bs_row(&self, k: usize) -> &[Complex64] {
        &self.rows[k][..self.m]
    }
}

/// Result of user selection plus ZF beamforming for one slot.
#[derive(Debug, Clone)]
pub struct BeamformOutcome {
    /// Transmission mode (= cache state).
    pub mode: u8,
    /// Selected users, ascending.
    pub selected: Vec<usize>,
    /// Unit beamformer per selected user (M entries in mode 0, 2M in mode 1),
    /// index-aligned with `selected`.
    pub beamformers: Vec<Vec<Complex64>>,
    /// Effective gain g_k for every user (0 for unselected).
    pub gains: Vec<f64>,
}

/// i.i.d. circular complex Gaussian entries (a + bi)/sqrt(2).
pub fn sample_channel<R: Rng + ?Sized>(rng: &mut R, m: usize) -> ChannelState {
    let n = 2 * m;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let rows = (0..n)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let a: f64 = rng.sample(StandardNormal);
                    let b: f64 = rng.sample(StandardNormal);
                    Complex64::new(a * s, b * s)
                })
                .collect()
        })
        .collect();
    ChannelState { m, rows }
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm_sq(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// Projects `target` onto the orthogonal complement of span(co_rows) and
/// normalizes. Returns (unit beamformer, effective gain |h† v|²).
///
/// Gram-Schmidt on the co-user rows; rank deficiency (probability zero for
/// the continuous channel law) is rejected rather than regularized.
pub fn zf_project(target: &[Complex64], co_rows: &[&[Complex64]]) -> Result<(Vec<Complex64>, f64)> {
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(co_rows.len());
    for row in co_rows {
        let mut v = row.to_vec();
        for b in &basis {
            let c = inner(b, &v);
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= c * bi;
            }
        }
        let n2 = norm_sq(&v);
        if n2 < 1e-24 * norm_sq(row).max(1e-300) {
            return Err(Error::DegenerateChannel);
        }
        let inv = 1.0 / n2.sqrt();
        for vi in v.iter_mut() {
            *vi *= inv;
        }
        basis.push(v);
    }
    let mut v = target.to_vec();
    for b in &basis {
        let c = inner(b, &v);
        for (vi, bi) in v.iter_mut().zip(b) {
            *vi -= c * bi;
        }
    }
    let n2 = norm_sq(&v);
    if n2 < 1e-24 * norm_sq(target).max(1e-300) {
        return Err(Error::DegenerateChannel);
    }
    let inv = 1.0 / n2.sqrt();
    for vi in v.iter_mut() {
        *vi *= inv;
    }
    // |h† v|² = ||residual||² for a projection beamformer.
    let g = inner(target, &v).norm_sqr();
    Ok((v, g))
}

/// Draws a uniform size-M subset of {0..2M-1}, ascending.
pub fn random_subset<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..m {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    let mut sel = idx[..m].to_vec();
    sel.sort_unstable();
    sel
}

/// Mode-0 / Mode-1 selection plus ZF beamforming.
///
/// Mode 0 (s = 0): M users drawn uniformly, served from the M BS antennas.
/// Mode 1 (s = 1): all 2M users served jointly from all 2M antennas.
/// The mode-0 subset is drawn before (independently of) the channel.
pub fn select_and_beamform<R: Rng + ?Sized>(
    h: &ChannelState,
    s: u8,
    rng: &mut R,
) -> Result<BeamformOutcome> {
    let n = h.n_users();
    let selected: Vec<usize> = if s == 1 {
        (0..n).collect()
    } else {
        random_subset(rng, n, h.m)
    };
    let mut gains = vec![0.0; n];
    let mut beamformers = Vec::with_capacity(selected.len());
    for &k in &selected {
        let co: Vec<&[Complex64]> = selected
            .iter()
            .filter(|&&j| j != k)
            .map(|&j| if s == 1 { h.row(j) } else { h.bs_row(j) })
            .collect();
        let target = if s == 1 { h.row(k) } else { h.bs_row(k) };
        let (v, g) = zf_project(target, &co)?;
        gains[k] = g;
        beamformers.push(v);
    }
    Ok(BeamformOutcome { mode: s, selected, beamformers, gains })
}

/// Shannon rate in bits/s: B_W log2(1 + g p).
pub fn instantaneous_rate(g: f64, p: f64, bw: f64) -> f64 {
    bw * (1.0 + g * p).log2()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sample_channel_deterministic() {
        let a = sample_channel(&mut ChaCha8Rng::seed_from_u64(7), 2);
        let b = sample_channel(&mut ChaCha8Rng::seed_from_u64(7), 2);
        for k in 0..4 {
            assert_eq!(a.row(k), b.row(k));
        }
    }

    #[test]
    fn sample_channel_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut mag = 0.0;
        let mut var_re = 0.0;
        let mut var_im = 0.0;
        for _ in 0..n {
            let h = sample_channel(&mut rng, 1);
            let z = h.row(0)[0];
            mag += z.norm_sqr();
            var_re += z.re * z.re;
            var_im += z.im * z.im;
        }
        let nf = n as f64;
        assert!((mag / nf - 1.0).abs() < 0.01);
        assert!((var_re / nf - 0.5).abs() < 0.01);
        assert!((var_im / nf - 0.5).abs() < 0.01);
    }

    #[test]
    fn single_user_full_projection() {
        // No co-users: v = h/||h||, g = ||h||².
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = sample_channel(&mut rng, 2);
        let (v, g) = zf_project(h.row(0), &[]).unwrap();
        let n2: f64 = h.row(0).iter().map(|z| z.norm_sqr()).sum();
        assert!((g - n2).abs() < 1e-12 * n2);
        let vn: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        assert!((vn - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonality_and_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for s in [0u8, 1u8] {
            for _ in 0..200 {
                let h = sample_channel(&mut rng, 2);
                let out = select_and_beamform(&h, s, &mut rng).unwrap();
                for (i, &k) in out.selected.iter().enumerate() {
                    let v = &out.beamformers[i];
                    let vn: f64 = v.iter().map(|z| z.norm_sqr()).sum();
                    assert!((vn.sqrt() - 1.0).abs() < 1e-12);
                    for &j in &out.selected {
                        if j == k {
                            continue;
                        }
                        let hj = if s == 1 { h.row(j) } else { h.bs_row(j) };
                        let res = inner(hj, v).norm();
                        let hnorm = norm_sq(hj).sqrt();
                        assert!(res <= 1e-9 * hnorm, "ZF residual {res} vs norm {hnorm}");
                    }
                }
            }
        }
    }

    #[test]
    fn rank_deficient_rejected() {
        let h = sample_channel(&mut ChaCha8Rng::seed_from_u64(5), 2);
        let row = h.row(0).to_vec();
        let dup = row.clone();
        let r = zf_project(h.row(1), &[&row, &dup]);
        assert!(matches!(r, Err(Error::DegenerateChannel)));
    }

    #[test]
    fn gain_mixture_weights() {
        // With Bernoulli(q_min) cache states, g_k follows
        // ((1+q)/2) Exp(1) + ((1-q)/2) delta_0 (Lemma-1 mixture).
        let q_min = 0.5;
        let n = 200_000;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut zero = 0usize;
        let mut pos_sum = 0.0;
        let mut pos_n = 0usize;
        for _ in 0..n {
            let s = u8::from(rng.random::<f64>() < q_min);
            let h = sample_channel(&mut rng, 2);
            let out = select_and_beamform(&h, s, &mut rng).unwrap();
            let g = out.gains[0];
            if g == 0.0 {
                zero += 1;
            } else {
                pos_sum += g;
                pos_n += 1;
            }
        }
        let zero_frac = zero as f64 / n as f64;
        assert!((zero_frac - 0.25).abs() < 0.01, "zero mass {zero_frac}");
        let mean = pos_sum / pos_n as f64;
        assert!((mean - 1.0).abs() < 0.02, "conditional mean {mean}");
    }

    #[test]
    fn selection_fairness() {
        let q_min = 0.5;
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let s = u8::from(rng.random::<f64>() < q_min);
            let h = sample_channel(&mut rng, 2);
            let out = select_and_beamform(&h, s, &mut rng).unwrap();
            for &k in &out.selected {
                counts[k] += 1;
            }
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((f - 0.75).abs() < 0.01, "inclusion frequency {f}");
        }
    }

    #[test]
    fn rate_examples() {
        assert_eq!(instantaneous_rate(1.0, 0.0, 1e6), 0.0);
        assert_eq!(instantaneous_rate(0.0, 5.0, 1e6), 0.0);
        assert!((instantaneous_rate(1.0, 1.0, 1e6) - 1e6).abs() < 1e-6);
    }
}
