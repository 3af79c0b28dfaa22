//! MDS-coded random cache: cache vector, Bernoulli cache state,
//! per-user parity ledgers, occupancy and update-load accounting.

use rand::Rng;

use crate::error::{Error, Result};

/// Per-file cache control variables, each in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct CacheVector(pub Vec<f64>);

impl CacheVector {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if q.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Config("cache control entries must lie in [0,1]".into()));
        }
        Ok(CacheVector(q))
    }

    pub fn uniform(n: usize, v: f64) -> Result<Self> {
        CacheVector::new(vec![v; n])
    }
}

/// User request profile: file index per user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Urp(pub Vec<usize>);

/// Minimum cache fraction over the requested files; equals Pr[S=1].
pub fn q_min(q: &CacheVector, pi: &Urp) -> f64 {
    pi.0.iter().map(|&l| q.0[l]).fold(f64::INFINITY, f64::min)
}

/// Bernoulli(q_min) cache state for one slot.
pub fn sample_cache_state<R: Rng + ?Sized>(rng: &mut R, q: &CacheVector, pi: &Urp) -> u8 {
    u8::from(rng.random::<f64>() < q_min(q, pi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheScheme {
    /// The MDS-coded random cache: Pr[S=1] = min_k q_{pi_k}.
    MdsRandom,
    /// Naive independent per-file caching: Pr[all hits] = prod_k q_{pi_k}.
    NaiveIndependent,
}

/// Probability that a CoMP slot is possible under the given scheme.
pub fn comp_probability(q: &CacheVector, pi: &Urp, scheme: CacheScheme) -> f64 {
    match scheme {
        CacheScheme::MdsRandom => q_min(q, pi),
        CacheScheme::NaiveIndependent => pi.0.iter().map(|&l| q.0[l]).product(),
    }
}

/// Per-user parity-bit accounting for one segment in flight.
#[derive(Debug, Clone)]
pub struct SegmentLedger {
    /// Segment size L_S in bits.
    pub segment_bits: f64,
    /// Cached parity budget 2 q L_S / (1 + q).
    pub cached_budget: f64,
    pub cached_sent: f64,
    pub noncached_sent: f64,
    pub underflow_excess: f64,
    pub total_sent: f64,
    pub underflow_events: u64,
    pub segments_completed: u64,
}

impl SegmentLedger {
    pub fn new(segment_bits: f64, q_file: f64) -> Self {
        SegmentLedger {
            segment_bits,
            cached_budget: 2.0 * q_file * segment_bits / (1.0 + q_file),
            cached_sent: 0.0,
            noncached_sent: 0.0,
            underflow_excess: 0.0,
            total_sent: 0.0,
            underflow_events: 0,
            segments_completed: 0,
        }
    }

    /// Re-targets the ledger at a new file fraction (URP change); counters
    /// for the in-flight segment restart.
    pub fn retarget(&mut self, q_file: f64) {
        self.cached_budget = 2.0 * q_file * self.segment_bits / (1.0 + q_file);
        self.cached_sent = 0.0;
        self.noncached_sent = 0.0;
        self.underflow_excess = 0.0;
        self.total_sent = 0.0;
    }
}

/// Books `bits_sent` for one slot with cache state `s`.
///
/// During a CoMP slot the bits come from the cached parity stream; once the
/// budget is exhausted the excess is counted as an underflow event (the
/// transmission is still credited to the queue, the BS sourcing the
/// residual). A segment rolls over when total_sent reaches L_S.
pub fn account_slot(ledger: &mut SegmentLedger, bits_sent: f64, s: u8) {
    debug_assert!(bits_sent >= 0.0);
    if s == 1 {
        let headroom = ledger.cached_budget - ledger.cached_sent;
        if bits_sent > headroom {
            if headroom < bits_sent {
                ledger.underflow_events += 1;
            }
            ledger.underflow_excess += bits_sent - headroom;
            ledger.cached_sent = ledger.cached_budget;
        } else {
            ledger.cached_sent += bits_sent;
        }
    } else {
        ledger.noncached_sent += bits_sent;
    }
    ledger.total_sent += bits_sent;
    while ledger.total_sent >= ledger.segment_bits {
        let carry = ledger.total_sent - ledger.segment_bits;
        ledger.segments_completed += 1;
        ledger.cached_sent = 0.0;
        ledger.underflow_excess = 0.0;
        // Residual bits of the carry belong to the next segment; they were
        // delivered outside its cached budget.
        ledger.noncached_sent = carry;
        ledger.total_sent = carry;
    }
}

/// Physical RS occupancy: sum_l F_l * 2 q_l / (1 + q_l) bits.
pub fn occupancy_bits(q: &CacheVector, file_sizes: &[f64]) -> f64 {
    q.0.iter()
        .zip(file_sizes)
        .map(|(&ql, &fl)| fl * 2.0 * ql / (1.0 + ql))
        .sum()
}

/// Average backhaul load to refresh `bits` of cache every `period` seconds.
pub fn update_load_bps(bits: f64, period: f64) -> f64 {
    bits / period
}
