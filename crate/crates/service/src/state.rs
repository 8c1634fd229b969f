use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};

use ccg_core::abduction::{Abductor, PosteriorModel};
use ccg_core::conformal::K_MAX;
use ccg_core::envsim::FidelityLevel;
use ccg_core::harness::{AbductionMethod, AbductionSection, CalibrationFile};
use ccg_core::pipeline::Episode;
use ccg_core::policy::PolicyTables;
use ccg_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Server settings. A loaded calibration overrides the twin, `k_max` and
/// abduction settings with the ones it was calibrated under.
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Root of every server-drawn random stream.
    pub seed: u64,
    /// Append-only episode log, replayed on start.
    pub store: Option<PathBuf>,
    pub calibration: Option<CalibrationFile>,
    pub abduction: AbductionSection,
    pub twin: FidelityLevel,
    pub k_max: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            store: None,
            calibration: None,
            abduction: AbductionSection::default(),
            twin: FidelityLevel::Q2,
            k_max: K_MAX,
        }
    }
}

/// One line of the persistence log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredEpisode {
    pub id: String,
    pub episode: Episode,
}

/// Shared server state: many readers, one writer for the episode log.
pub struct AppState {
    pub tables: PolicyTables,
    pub seed: u64,
    pub twin: FidelityLevel,
    pub k_max: usize,
    pub calibration: Option<CalibrationFile>,
    pub(crate) abductor: Box<dyn Abductor + Send + Sync>,
    episodes: RwLock<HashMap<String, Episode>>,
    log: Mutex<Option<File>>,
    next_id: AtomicU64,
    next_query: AtomicU64,
}

fn id_number(id: &str) -> Option<u64> {
    id.strip_prefix("ep-")?.parse().ok()
}

impl AppState {
    /// Builds the state and replays the episode log if one is configured.
    pub fn open(config: ServiceConfig) -> Result<Self> {
        let (twin, k_max, abduction) = match &config.calibration {
            Some(c) => (c.twin, c.k_max, c.abduction.clone()),
            None => (config.twin, config.k_max, config.abduction.clone()),
        };
        if k_max == 0 {
            return Err(Error::Config("k_max must be at least 1".into()));
        }
        let abductor: Box<dyn Abductor + Send + Sync> = match abduction.method {
            AbductionMethod::Abc => Box::new(abduction.abc(twin)),
            AbductionMethod::Npe => match &abduction.npe_model {
                Some(p) => Box::new(PosteriorModel::load(std::path::Path::new(p))?),
                None => return Err(Error::Config("the service needs abduction.npe_model to use npe".into())),
            },
        };
        let mut episodes = HashMap::new();
        let mut next = 1;
        let log = match &config.store {
            Some(path) => {
                if path.exists() {
                    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
                        let line = line?;
                        if line.trim().is_empty() {
                            continue;
                        }
                        let s: StoredEpisode = serde_json::from_str(&line)
                            .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), i + 1)))?;
                        if let Some(n) = id_number(&s.id) {
                            next = next.max(n + 1);
                        }
                        episodes.insert(s.id, s.episode);
                    }
                }
                Some(OpenOptions::new().create(true).append(true).open(path)?)
            }
            None => None,
        };
        Ok(Self {
            tables: PolicyTables::default(),
            seed: config.seed,
            twin,
            k_max,
            calibration: config.calibration,
            abductor,
            episodes: RwLock::new(episodes),
            log: Mutex::new(log),
            next_id: AtomicU64::new(next),
            next_query: AtomicU64::new(0),
        })
    }

    pub fn len(&self) -> usize {
        self.episodes.read().expect("episode lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, id: &str) -> Option<Episode> {
        self.episodes.read().expect("episode lock").get(id).cloned()
    }

    /// Reserves a fresh id and its sequence number.
    pub(crate) fn reserve_id(&self) -> (String, u64) {
        let n = self.next_id.fetch_add(1, Ordering::Relaxed);
        (format!("ep-{n:06}"), n)
    }

    pub(crate) fn next_query(&self) -> u64 {
        self.next_query.fetch_add(1, Ordering::Relaxed)
    }

    /// Logs then registers an episode.
    pub(crate) fn insert(&self, id: String, episode: Episode) -> Result<()> {
        let mut log = self.log.lock().expect("log lock");
        if let Some(f) = log.as_mut() {
            let mut line = serde_json::to_vec(&StoredEpisode { id: id.clone(), episode: episode.clone() })?;
            line.push(b'\n');
            f.write_all(&line)?;
            f.flush()?;
        }
        self.episodes.write().expect("episode lock").insert(id, episode);
        Ok(())
    }
}
