//! Null calibration of the test constant `β`, parallel and cached on disk.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Mutex;

use quadfun_core::pipeline::{beta_from_null, null_statistic};
use quadfun_core::{derive_seed, Estimator};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

pub const DEFAULT_REPLICATIONS: usize = 2000;

/// Everything the calibrated value depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationKey {
    pub estimator: String,
    pub p: usize,
    #[serde(rename = "N")]
    pub total: usize,
    pub s: usize,
    pub delta: f64,
    pub replications: usize,
    pub seed: u64,
}

impl CalibrationKey {
    pub fn new(estimator: &Estimator, p: usize, total: usize, s: usize, delta: f64, replications: usize, seed: u64) -> Self {
        Self {
            estimator: format!("{estimator:?}"),
            p,
            total,
            s,
            delta,
            replications,
            seed,
        }
    }

    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("key serializes");
        hex_prefix(&Sha256::digest(json.as_bytes()), 16)
    }
}

pub(crate) fn hex_prefix(bytes: &[u8], chars: usize) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect::<String>()[..chars].to_string()
}

/// Same value as [`quadfun_core::calibrate_beta`], with trials spread over
/// the rayon pool.
pub fn calibrate_beta_parallel(
    estimator: &Estimator,
    p: usize,
    total: usize,
    s: usize,
    delta: f64,
    replications: usize,
    seed: u64,
) -> Result<f64> {
    let stats = (0..replications as u64)
        .into_par_iter()
        .map(|i| null_statistic(estimator, p, total, s, derive_seed(seed, i)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(beta_from_null(&stats, delta)?)
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    key: CalibrationKey,
    beta: f64,
}

/// In-memory cache of calibrated constants, optionally backed by a directory.
#[derive(Debug, Default)]
pub struct BetaCache {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, f64>>,
}

impl BetaCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: Some(dir.into()),
            memory: Mutex::default(),
        }
    }

    fn path(&self, digest: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("beta-{digest}.json")))
    }

    pub fn get_or_calibrate(&self, estimator: &Estimator, key: &CalibrationKey) -> Result<f64> {
        let digest = key.digest();
        if let Some(&beta) = self.memory.lock().expect("cache lock").get(&digest) {
            return Ok(beta);
        }
        if let Some(path) = self.path(&digest) {
            if let Ok(text) = std::fs::read_to_string(&path) {
                if let Ok(entry) = serde_json::from_str::<CacheEntry>(&text) {
                    if entry.key == *key {
                        self.memory.lock().expect("cache lock").insert(digest, entry.beta);
                        return Ok(entry.beta);
                    }
                }
            }
        }
        let beta = calibrate_beta_parallel(estimator, key.p, key.total, key.s, key.delta, key.replications, key.seed)?;
        if let Some(path) = self.path(&digest) {
            let dir = path.parent().expect("cache file has a parent");
            std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
            let entry = CacheEntry { key: key.clone(), beta };
            std::fs::write(&path, serde_json::to_string_pretty(&entry)?).map_err(|e| HarnessError::io(&path, e))?;
        }
        self.memory.lock().expect("cache lock").insert(digest, beta);
        Ok(beta)
    }
}
