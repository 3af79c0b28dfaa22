//! Flat INI-style configuration: [system], [prices], [cache], [sweep],
//! [sim] sections of key = value lines, plus command-line overrides.

use std::collections::BTreeMap;
use std::fmt;

use opcomp_core::sim::{SweepGrid, SweepPoint};
use opcomp_core::{CacheVector, SystemConfig};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type CResult<T> = std::result::Result<T, ConfigError>;

const SECTIONS: &[&str] = &["system", "prices", "cache", "sweep", "sim"];

const KNOWN_KEYS: &[(&str, &str)] = &[
    ("system", "bw"),
    ("system", "tau"),
    ("system", "alpha"),
    ("system", "w_low"),
    ("system", "w_high"),
    ("system", "mu0"),
    ("system", "m"),
    ("system", "n_files"),
    ("system", "file_size"),
    ("system", "rho"),
    ("system", "segment_bits"),
    ("system", "urp_hold_slots"),
    ("prices", "beta"),
    ("prices", "gamma"),
    ("prices", "eta"),
    ("cache", "q_init"),
    ("cache", "sigma0"),
    ("cache", "n_urp"),
    ("cache", "u_window"),
    ("sweep", "policy"),
    ("sweep", "betas"),
    ("sweep", "kappas"),
    ("sweep", "seeds"),
    ("sweep", "n_slots"),
    ("sim", "policy"),
    ("sim", "kappa"),
    ("sim", "seed"),
    ("sim", "n_slots"),
];

const REQUIRED: &[(&str, &str)] = &[
    ("system", "bw"),
    ("system", "tau"),
    ("system", "alpha"),
    ("system", "w_low"),
    ("system", "w_high"),
    ("system", "mu0"),
    ("system", "m"),
    ("system", "n_files"),
    ("system", "file_size"),
    ("system", "rho"),
];

/// Parsed raw document: (section, key) -> value string.
pub struct RawConfig {
    values: BTreeMap<(String, String), String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> CResult<Self> {
        let mut values = BTreeMap::new();
        let mut section = String::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim().to_string();
                if !SECTIONS.contains(&name.as_str()) {
                    return Err(ConfigError(format!(
                        "line {}: unknown section [{name}]",
                        ln + 1
                    )));
                }
                section = name;
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError(format!(
                    "line {}: expected key = value, got {line:?}",
                    ln + 1
                )));
            };
            if section.is_empty() {
                return Err(ConfigError(format!(
                    "line {}: key {} appears before any section header",
                    ln + 1,
                    k.trim()
                )));
            }
            let key = k.trim().to_string();
            if !KNOWN_KEYS.iter().any(|&(s, kk)| s == section && kk == key) {
                return Err(ConfigError(format!("unknown key [{section}].{key}")));
            }
            values.insert((section.clone(), key), v.trim().to_string());
        }
        Ok(RawConfig { values })
    }

    /// Applies `key=value` or `section.key=value` overrides.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> CResult<()> {
        for ov in overrides {
            let Some((k, v)) = ov.split_once('=') else {
                return Err(ConfigError(format!("override {ov:?} is not key=value")));
            };
            let (section, key) = match k.trim().split_once('.') {
                Some((s, kk)) => (s.to_string(), kk.to_string()),
                None => {
                    let key = k.trim();
                    let hits: Vec<&str> = KNOWN_KEYS
                        .iter()
                        .filter(|&&(_, kk)| kk == key)
                        .map(|&(s, _)| s)
                        .collect();
                    match hits.as_slice() {
                        [] => return Err(ConfigError(format!("unknown override key {key}"))),
                        [s] => (s.to_string(), key.to_string()),
                        _ => {
                            return Err(ConfigError(format!(
                                "ambiguous override key {key}; qualify as section.{key}"
                            )))
                        }
                    }
                }
            };
            if !KNOWN_KEYS.iter().any(|&(s, kk)| s == section && kk == key) {
                return Err(ConfigError(format!("unknown key [{section}].{key}")));
            }
            self.values.insert((section, key), v.trim().to_string());
        }
        Ok(())
    }

    fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.values.get(&(section.to_string(), key.to_string())).map(|s| s.as_str())
    }

    fn f64_req(&self, section: &str, key: &str) -> CResult<f64> {
        match self.get(section, key) {
            None => Err(ConfigError(format!("missing required key [{section}].{key}"))),
            Some(v) => v.parse().map_err(|_| {
                ConfigError(format!("[{section}].{key}: expected a number, got {v:?}"))
            }),
        }
    }

    fn f64_opt(&self, section: &str, key: &str, default: f64) -> CResult<f64> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                ConfigError(format!("[{section}].{key}: expected a number, got {v:?}"))
            }),
        }
    }

    fn usize_req(&self, section: &str, key: &str) -> CResult<usize> {
        match self.get(section, key) {
            None => Err(ConfigError(format!("missing required key [{section}].{key}"))),
            Some(v) => v.parse().map_err(|_| {
                ConfigError(format!("[{section}].{key}: expected an integer, got {v:?}"))
            }),
        }
    }

    fn usize_opt(&self, section: &str, key: &str, default: usize) -> CResult<usize> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                ConfigError(format!("[{section}].{key}: expected an integer, got {v:?}"))
            }),
        }
    }

    fn f64_list(&self, section: &str, key: &str) -> CResult<Option<Vec<f64>>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim().parse().map_err(|_| {
                        ConfigError(format!(
                            "[{section}].{key}: expected comma-separated numbers, got {s:?}"
                        ))
                    })
                })
                .collect::<CResult<Vec<f64>>>()
                .map(Some),
        }
    }

    fn u64_list(&self, section: &str, key: &str) -> CResult<Option<Vec<u64>>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim().parse().map_err(|_| {
                        ConfigError(format!(
                            "[{section}].{key}: expected comma-separated integers, got {s:?}"
                        ))
                    })
                })
                .collect::<CResult<Vec<u64>>>()
                .map(Some),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimSection {
    pub policy: String,
    pub kappa: f64,
    pub seed: u64,
    pub n_slots: usize,
}

#[derive(Debug, Clone)]
pub struct CacheSection {
    pub q_init: Vec<f64>,
    pub sigma0: f64,
    pub n_urp: usize,
    pub u_window: usize,
}

#[derive(Debug, Clone)]
pub struct FullConfig {
    pub system: SystemConfig,
    pub cache: CacheSection,
    pub sim: SimSection,
    pub sweep: SweepGrid,
}

pub fn build(raw: &RawConfig) -> CResult<FullConfig> {
    for &(s, k) in REQUIRED {
        if raw.get(s, k).is_none() {
            return Err(ConfigError(format!("missing required key [{s}].{k}")));
        }
    }
    let m = raw.usize_req("system", "m")?;
    let n_users = 2 * m;
    let n_files = raw.usize_req("system", "n_files")?;
    let file_size = raw.f64_req("system", "file_size")?;
    let rho = raw
        .f64_list("system", "rho")?
        .ok_or_else(|| ConfigError("missing required key [system].rho".into()))?;
    if rho.len() != n_files {
        return Err(ConfigError(format!(
            "[system].rho has {} entries, expected n_files = {n_files}",
            rho.len()
        )));
    }
    let beta = raw.f64_opt("prices", "beta", 15.0)?;
    let gamma = raw.f64_opt("prices", "gamma", 15.0)?;
    let eta = raw.f64_opt("prices", "eta", 1e-9)?;
    let system = SystemConfig {
        bw: raw.f64_req("system", "bw")?,
        tau: raw.f64_req("system", "tau")?,
        alpha: raw.f64_req("system", "alpha")?,
        w_low: raw.f64_req("system", "w_low")?,
        w_high: raw.f64_req("system", "w_high")?,
        mu0: raw.f64_req("system", "mu0")?,
        m,
        n_files,
        file_sizes: vec![file_size; n_files],
        beta: vec![beta; n_users],
        gamma: vec![gamma; n_users],
        eta,
        segment_bits: raw.f64_opt("system", "segment_bits", 1e6)?,
        urp_hold_slots: raw.usize_opt("system", "urp_hold_slots", 10_000)?,
        rho,
    };

    let q_init = match raw.f64_list("cache", "q_init")? {
        None => vec![0.5; n_files],
        Some(v) if v.len() == 1 => vec![v[0]; n_files],
        Some(v) if v.len() == n_files => v,
        Some(v) => {
            return Err(ConfigError(format!(
                "[cache].q_init has {} entries, expected 1 or n_files = {n_files}",
                v.len()
            )))
        }
    };
    CacheVector::new(q_init.clone())
        .map_err(|e| ConfigError(format!("[cache].q_init: {e}")))?;
    let cache = CacheSection {
        q_init,
        sigma0: raw.f64_opt("cache", "sigma0", 2.5e-3)?,
        n_urp: raw.usize_opt("cache", "n_urp", 2000)?,
        u_window: raw.usize_opt("cache", "u_window", 100)?,
    };

    let sim = SimSection {
        policy: raw.get("sim", "policy").unwrap_or("proposed").to_string(),
        kappa: raw.f64_opt("sim", "kappa", 2e7)?,
        seed: raw.usize_opt("sim", "seed", 1)? as u64,
        n_slots: raw.usize_opt("sim", "n_slots", 100_000)?,
    };
    policy_id(&sim.policy).map_err(|e| ConfigError(format!("[sim].policy: {e}")))?;

    let sweep_policy = raw.get("sweep", "policy").unwrap_or("proposed").to_string();
    let pid = policy_id(&sweep_policy).map_err(|e| ConfigError(format!("[sweep].policy: {e}")))?;
    let points = if pid == 0 {
        let betas = raw
            .f64_list("sweep", "betas")?
            .unwrap_or_else(|| vec![8.0, 15.0, 30.0]);
        betas
            .into_iter()
            .map(|b| SweepPoint { policy_id: 0, beta: b, gamma: b, knob: eta })
            .collect()
    } else {
        let kappas = raw
            .f64_list("sweep", "kappas")?
            .unwrap_or_else(|| vec![1e7, 2e7, 4e7]);
        kappas
            .into_iter()
            .map(|k| SweepPoint { policy_id: pid, beta, gamma, knob: k })
            .collect()
    };
    let sweep = SweepGrid {
        points,
        seeds: raw.u64_list("sweep", "seeds")?.unwrap_or_else(|| vec![1, 2, 3]),
        n_slots: raw.usize_opt("sweep", "n_slots", 100_000)?,
    };

    Ok(FullConfig { system, cache, sim, sweep })
}

pub fn policy_id(name: &str) -> CResult<u8> {
    match name {
        "proposed" | "0" => Ok(0),
        "baseline1" | "1" => Ok(1),
        "baseline2" | "2" => Ok(2),
        "baseline3" | "3" => Ok(3),
        other => Err(ConfigError(format!(
            "unknown policy {other:?} (expected proposed or baseline1..3)"
        ))),
    }
}
