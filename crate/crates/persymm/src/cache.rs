//! Persistent oracle results, one JSON record per line.
//!
//! Records are keyed by canonical shape and engine version. Records from
//! another engine version are kept on rewrite but never served.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_bigint::BigUint;
use persymm_core::{RankDistribution, Source, StackedShape};
use serde::{Deserialize, Serialize};

use crate::oracle::{enumerate_rank_distribution, EnumerationBudget, OracleError};

/// Version tag written into every record.
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable naming the default cache file.
pub const CACHE_ENV: &str = "PERSYMM_CACHE";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub shape: String,
    /// Γ₀… as decimal strings.
    pub counts: Vec<String>,
    pub free_param_count: usize,
    pub engine_version: String,
    /// Milliseconds spent enumerating.
    pub wall_time: u64,
}

impl CacheRecord {
    pub fn from_dist(dist: &RankDistribution, free_param_count: usize, wall_time: u64) -> Self {
        Self {
            shape: dist.shape_str().to_owned(),
            counts: dist.counts().iter().map(ToString::to_string).collect(),
            free_param_count,
            engine_version: ENGINE_VERSION.to_owned(),
            wall_time,
        }
    }

    /// Rebuilds and checks the distribution: shape parses to its own
    /// canonical form, parameter count matches, and the counts pass the
    /// checksum.
    pub fn to_dist(&self) -> Result<RankDistribution, String> {
        let shape = StackedShape::parse(&self.shape).map_err(|e| e.to_string())?;
        if shape.canonical_string() != self.shape {
            return Err(format!("shape key {:?} is not canonical", self.shape));
        }
        if shape.free_param_count() != self.free_param_count {
            return Err(format!(
                "free_param_count {} but {} has {}",
                self.free_param_count,
                self.shape,
                shape.free_param_count()
            ));
        }
        let counts = self
            .counts
            .iter()
            .map(|c| {
                c.parse::<BigUint>()
                    .map_err(|_| format!("count {c:?} is not a decimal integer"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        RankDistribution::new(&shape, counts, Source::Oracle).map_err(|e| e.to_string())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: corrupt cache record: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug)]
pub struct DistCache {
    path: PathBuf,
    records: Vec<CacheRecord>,
    current: BTreeMap<String, RankDistribution>,
}

impl DistCache {
    /// Loads `path`; a missing file is an empty cache. Every record is
    /// validated up front.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, CacheError> {
        let path = path.into();
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(source) => return Err(CacheError::Io { path, source }),
        };
        let mut records = Vec::new();
        let mut current = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let corrupt = |reason: String| CacheError::Corrupt {
                path: path.clone(),
                line: n + 1,
                reason,
            };
            let rec: CacheRecord = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
            let dist = rec.to_dist().map_err(corrupt)?;
            if rec.engine_version == ENGINE_VERSION {
                if let Some(prev) = current.get(&rec.shape) {
                    if !dist.same_counts(prev) {
                        return Err(corrupt(format!("conflicts with an earlier record for {}", rec.shape)));
                    }
                }
                current.insert(rec.shape.clone(), dist);
            }
            records.push(rec);
        }
        Ok(Self {
            path,
            records,
            current,
        })
    }

    /// Cache at `$PERSYMM_CACHE`, if set.
    pub fn from_env() -> Result<Option<Self>, CacheError> {
        match std::env::var_os(CACHE_ENV) {
            Some(p) if !p.is_empty() => Self::open(PathBuf::from(p)).map(Some),
            _ => Ok(None),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.current.len()
    }

    pub fn is_empty(&self) -> bool {
        self.current.is_empty()
    }

    pub fn get(&self, shape: &StackedShape) -> Option<&RankDistribution> {
        self.current.get(&shape.canonical_string())
    }

    /// Records `dist` and rewrites the file atomically.
    pub fn insert(&mut self, dist: &RankDistribution, wall_time: u64) -> Result<(), CacheError> {
        let shape = dist.shape().map_err(|e| CacheError::Corrupt {
            path: self.path.clone(),
            line: 0,
            reason: e.to_string(),
        })?;
        let rec = CacheRecord::from_dist(dist, shape.free_param_count(), wall_time);
        self.records.push(rec);
        self.current
            .insert(dist.shape_str().to_owned(), dist.clone().with_source(Source::Oracle));
        self.persist()
    }

    fn persist(&self) -> Result<(), CacheError> {
        let io = |source| CacheError::Io {
            path: self.path.clone(),
            source,
        };
        let dir = match self.path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&dir).map_err(io)?;
        let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
        for rec in &self.records {
            let line = serde_json::to_string(rec).expect("records serialize");
            writeln!(tmp, "{line}").map_err(io)?;
        }
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(&self.path).map_err(|e| io(e.error))?;
        Ok(())
    }

    /// Cached distribution for `shape`, or a fresh enumeration that is then
    /// stored.
    pub fn lookup_or_compute(
        &mut self,
        shape: &StackedShape,
        budget: &EnumerationBudget,
    ) -> Result<RankDistribution, CacheError> {
        if let Some(d) = self.get(shape) {
            return Ok(d.clone());
        }
        let start = Instant::now();
        let dist = enumerate_rank_distribution(shape, budget)?;
        let ms = start.elapsed().as_millis() as u64;
        self.insert(&dist, ms)?;
        Ok(dist)
    }
}

/// Oracle results memoized in memory and, when a cache file is attached,
/// on disk.
#[derive(Debug, Default)]
pub struct OracleMemo {
    memo: BTreeMap<String, RankDistribution>,
    disk: Option<DistCache>,
}

impl OracleMemo {
    pub fn new(disk: Option<DistCache>) -> Self {
        Self {
            memo: BTreeMap::new(),
            disk,
        }
    }

    pub fn distribution(
        &mut self,
        shape: &StackedShape,
        budget: &EnumerationBudget,
    ) -> Result<RankDistribution, CacheError> {
        let key = shape.canonical_string();
        if let Some(d) = self.memo.get(&key) {
            return Ok(d.clone());
        }
        let d = match &mut self.disk {
            Some(c) => c.lookup_or_compute(shape, budget)?,
            None => enumerate_rank_distribution(shape, budget)?,
        };
        self.memo.insert(key, d.clone());
        Ok(d)
    }
}
