//! Dataset download with a local cache and a SHA-256 manifest.
//!
//! The cache directory holds the data files and a `manifest.sha256` with one
//! `<hex digest>  <file name>` line per file, the same layout `sha256sum -c`
//! reads. The first successful download records the digest; afterwards both
//! cache hits and fresh downloads must match it.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const ABALONE_URL: &str = "https://archive.ics.uci.edu/ml/machine-learning-databases/abalone/abalone.data";
pub const ABALONE_ROWS: usize = 4177;
pub const CACHE_DIR_ENV: &str = "ANM_CACHE_DIR";
pub const ABALONE_URL_ENV: &str = "ANM_ABALONE_URL";
pub const MANIFEST_FILE: &str = "manifest.sha256";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Abalone,
}

impl Dataset {
    pub fn file_name(self) -> &'static str {
        match self {
            Dataset::Abalone => "abalone.data",
        }
    }

    pub fn default_url(self) -> String {
        match self {
            Dataset::Abalone => std::env::var(ABALONE_URL_ENV).unwrap_or_else(|_| ABALONE_URL.to_string()),
        }
    }

    /// Rejects truncated or foreign files before they enter the cache.
    pub fn validate(self, bytes: &[u8]) -> Result<usize> {
        let text = std::str::from_utf8(bytes).context("dataset is not UTF-8 text")?;
        let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        match self {
            Dataset::Abalone => {
                if rows.len() != ABALONE_ROWS {
                    bail!("expected {ABALONE_ROWS} rows, got {}", rows.len());
                }
                if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.split(',').count() != 9) {
                    bail!("row {} does not have 9 fields", i + 1);
                }
            }
        }
        Ok(rows.len())
    }
}

impl FromStr for Dataset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "abalone" => Ok(Dataset::Abalone),
            _ => Err(format!("unknown dataset {s:?} (known: abalone)")),
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dataset::Abalone => "abalone",
        })
    }
}

#[derive(Debug, Clone)]
pub struct FetchOptions {
    pub cache_dir: PathBuf,
    pub url: String,
    pub timeout: Duration,
}

impl FetchOptions {
    /// Flags win over the environment, which wins over the defaults.
    pub fn resolve(dataset: Dataset, cache_dir: Option<PathBuf>, url: Option<String>) -> Self {
        FetchOptions {
            cache_dir: cache_dir.unwrap_or_else(default_cache_dir),
            url: url.unwrap_or_else(|| dataset.default_url()),
            timeout: Duration::from_secs(30),
        }
    }
}

/// `$ANM_CACHE_DIR`, else `$XDG_CACHE_HOME/anm`, else `~/.cache/anm`.
pub fn default_cache_dir() -> PathBuf {
    if let Some(d) = std::env::var_os(CACHE_DIR_ENV) {
        return PathBuf::from(d);
    }
    if let Some(d) = std::env::var_os("XDG_CACHE_HOME") {
        return PathBuf::from(d).join("anm");
    }
    match std::env::var_os("HOME") {
        Some(h) => PathBuf::from(h).join(".cache").join("anm"),
        None => PathBuf::from(".anm-cache"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fetched {
    pub dataset: Dataset,
    pub path: PathBuf,
    pub sha256: String,
    pub rows: usize,
    pub from_cache: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read_manifest(dir: &Path) -> Result<BTreeMap<String, String>> {
    let path = dir.join(MANIFEST_FILE);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(BTreeMap::new()),
        Err(e) => return Err(e).with_context(|| format!("cannot read {}", path.display())),
    };
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let Some((digest, name)) = line.split_once("  ") else {
            bail!("{} line {}: expected `<sha256>  <file>`", path.display(), i + 1);
        };
        out.insert(name.trim().to_string(), digest.trim().to_ascii_lowercase());
    }
    Ok(out)
}

fn write_manifest(dir: &Path, entries: &BTreeMap<String, String>) -> Result<()> {
    let text: String = entries.iter().map(|(name, d)| format!("{d}  {name}\n")).collect();
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Returns the cached file, downloading it first if needed.
pub fn fetch_dataset(dataset: Dataset, opts: &FetchOptions) -> Result<Fetched> {
    let name = dataset.file_name();
    let path = opts.cache_dir.join(name);
    let mut manifest = read_manifest(&opts.cache_dir)?;
    let recorded = manifest.get(name).cloned();

    if let (Some(expected), true) = (&recorded, path.exists()) {
        let bytes = fs::read(&path).with_context(|| format!("cannot read {}", path.display()))?;
        let actual = sha256_hex(&bytes);
        if &actual != expected {
            bail!(
                "checksum mismatch for {}: manifest has {expected}, file has {actual}; \
                 delete the file to download it again",
                path.display()
            );
        }
        let rows = dataset.validate(&bytes)?;
        return Ok(Fetched {
            dataset,
            path,
            sha256: actual,
            rows,
            from_cache: true,
        });
    }

    let bytes = download(&opts.url, opts.timeout).with_context(|| {
        format!(
            "download of {dataset} failed and {} has no cached copy",
            opts.cache_dir.display()
        )
    })?;
    let rows = dataset
        .validate(&bytes)
        .with_context(|| format!("{} did not serve a valid {dataset} file", opts.url))?;
    let digest = sha256_hex(&bytes);
    if let Some(expected) = &recorded {
        if &digest != expected {
            bail!(
                "checksum mismatch for download from {}: manifest has {expected}, got {digest}",
                opts.url
            );
        }
    }

    fs::create_dir_all(&opts.cache_dir).with_context(|| format!("cannot create {}", opts.cache_dir.display()))?;
    let tmp = opts.cache_dir.join(format!("{name}.part"));
    fs::write(&tmp, &bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
    fs::rename(&tmp, &path).with_context(|| format!("cannot move into {}", path.display()))?;
    manifest.insert(name.to_string(), digest.clone());
    write_manifest(&opts.cache_dir, &manifest)?;
    Ok(Fetched {
        dataset,
        path,
        sha256: digest,
        rows,
        from_cache: false,
    })
}

fn download(url: &str, timeout: Duration) -> Result<Vec<u8>> {
    let agent = ureq::AgentBuilder::new().timeout(timeout).build();
    let resp = agent.get(url).call().with_context(|| format!("GET {url}"))?;
    let mut bytes = Vec::new();
    resp.into_reader()
        .take(64 << 20)
        .read_to_end(&mut bytes)
        .with_context(|| format!("reading body of {url}"))?;
    Ok(bytes)
}
