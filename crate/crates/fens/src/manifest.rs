//! Versioned run manifest: artifact digests, member statuses, and the only
//! place timing information is allowed to live.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use fens_core::{Error, Result};

use crate::cache::{MemberMeta, MemberStatus};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemberEntry {
    pub index: usize,
    pub status: MemberStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divergence: Option<String>,
    #[serde(default)]
    pub files: BTreeMap<String, String>,
}

impl From<&MemberMeta> for MemberEntry {
    fn from(meta: &MemberMeta) -> Self {
        MemberEntry {
            index: meta.member,
            status: meta.status,
            divergence: meta.divergence.clone(),
            files: meta.digests.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ModeManifest {
    pub members: Vec<MemberEntry>,
    /// Report file name to digest.
    #[serde(default)]
    pub reports: BTreeMap<String, String>,
    /// Set when the whole mode produced no reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub created_unix_seconds: u64,
    pub duration_seconds: f64,
    pub config: serde_json::Value,
    /// True when some member or mode failed but the run still finished.
    pub partial: bool,
    /// Training episodes executed by this invocation; a warm rerun
    /// reports zero.
    pub trained_members: usize,
    pub cached_members: usize,
    pub modes: BTreeMap<String, ModeManifest>,
    /// Run-level report files (the merged long-format table) by digest.
    #[serde(default)]
    pub reports: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(config: serde_json::Value) -> Self {
        let created = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        RunManifest {
            schema_version: MANIFEST_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            created_unix_seconds: created,
            duration_seconds: 0.0,
            config,
            partial: false,
            trained_members: 0,
            cached_members: 0,
            modes: BTreeMap::new(),
            reports: BTreeMap::new(),
        }
    }

    pub fn save(&self, out_dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("manifest: {e}")))?;
        Ok(std::fs::write(out_dir.join(MANIFEST_FILE), text)?)
    }

    pub fn load(out_dir: &Path) -> Result<RunManifest> {
        let path = out_dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("manifest: {e}")))
    }
}
