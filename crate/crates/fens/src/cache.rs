//! On-disk prediction cache: per-member labels, scores, trajectory, and
//! model files plus a digest-carrying sidecar that marks a member as
//! committed. A member is a cache hit only when every file matches its
//! recorded digest, so hits return bit-identical data.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fens_core::learners::{TrainedModel, TrajectoryLog};
use fens_core::rng::AblationMode;
use fens_core::{Error, Result};

pub fn labels_path(out: &Path, mode: AblationMode, index: usize) -> PathBuf {
    out.join(format!("labels_{}_{index}.csv", mode.name()))
}

pub fn scores_path(out: &Path, mode: AblationMode, index: usize) -> PathBuf {
    out.join(format!("scores_{}_{index}.csv", mode.name()))
}

pub fn trajectory_path(out: &Path, mode: AblationMode, index: usize) -> PathBuf {
    out.join(format!("trajectory_{}_{index}.csv", mode.name()))
}

pub fn model_path(out: &Path, mode: AblationMode, index: usize) -> PathBuf {
    out.join(format!("model_{}_{index}.fens", mode.name()))
}

pub fn meta_path(out: &Path, mode: AblationMode, index: usize) -> PathBuf {
    out.join(format!("member_{}_{index}.json", mode.name()))
}

/// Hex SHA-256 of a byte string.
pub fn digest_bytes(bytes: &[u8]) -> String {
    let mut hex = String::with_capacity(64);
    for byte in Sha256::digest(bytes) {
        let _ = write!(hex, "{byte:02x}");
    }
    hex
}

pub fn digest_file(path: &Path) -> Result<String> {
    Ok(digest_bytes(&std::fs::read(path)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemberStatus {
    Ok,
    Diverged,
}

/// Sidecar describing one cached member; written last so its presence
/// commits the artifact set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemberMeta {
    pub member: usize,
    pub mode: String,
    pub status: MemberStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divergence: Option<String>,
    #[serde(default)]
    pub digests: BTreeMap<String, String>,
}

/// Everything one training episode produces.
#[derive(Debug, Clone)]
pub struct MemberArtifacts {
    pub labels: Vec<usize>,
    pub scores: Option<Array2<f64>>,
    pub trajectory: TrajectoryLog,
    pub model: TrainedModel,
}

/// Cache lookup result for one (mode, index) key.
#[derive(Debug, Clone)]
pub enum CacheEntry {
    Hit(MemberArtifacts),
    Diverged(String),
    Miss,
}

fn labels_text(labels: &[usize]) -> String {
    let mut out = String::new();
    for y in labels {
        let _ = writeln!(out, "{y}");
    }
    out
}

fn scores_text(scores: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in scores.rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            // 17 significant digits round-trip any f64 exactly.
            let _ = write!(out, "{v:.16e}");
        }
        out.push('\n');
    }
    out
}

fn trajectory_text(log: &TrajectoryLog) -> String {
    let mut out = String::from("epoch,test_accuracy\n");
    for (epoch, acc) in log.test_accuracy.iter().enumerate() {
        let _ = writeln!(out, "{epoch},{acc}");
    }
    out
}

fn parse_labels(text: &str) -> Result<Vec<usize>> {
    text.lines()
        .enumerate()
        .map(|(row, line)| {
            line.trim().parse().map_err(|_| Error::Parse {
                row,
                column: "label".into(),
                message: format!("not an integer: {line:?}"),
            })
        })
        .collect()
}

fn parse_scores(text: &str) -> Result<Array2<f64>> {
    let mut rows = Vec::new();
    let mut width = None;
    for (row, line) in text.lines().enumerate() {
        let values: Vec<f64> = line
            .split(',')
            .map(|cell| {
                cell.trim().parse().map_err(|_| Error::Parse {
                    row,
                    column: "score".into(),
                    message: format!("not a number: {cell:?}"),
                })
            })
            .collect::<Result<_>>()?;
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::Parse {
                    row,
                    column: "score".into(),
                    message: format!("expected {w} columns, found {}", values.len()),
                });
            }
            Some(_) => {}
        }
        rows.push(values);
    }
    let width = width.ok_or_else(|| Error::EmptyInput("scores file has no rows".into()))?;
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let height = flat.len() / width;
    Array2::from_shape_vec((height, width), flat)
        .map_err(|e| Error::Shape(format!("scores file: {e}")))
}

fn parse_trajectory(text: &str) -> Result<TrajectoryLog> {
    let mut accuracy = Vec::new();
    for (row, line) in text.lines().skip(1).enumerate() {
        let cell = line.split(',').nth(1).ok_or_else(|| Error::Parse {
            row,
            column: "test_accuracy".into(),
            message: "missing accuracy column".into(),
        })?;
        let value = cell.trim().parse().map_err(|_| Error::Parse {
            row,
            column: "test_accuracy".into(),
            message: format!("not a number: {cell:?}"),
        })?;
        accuracy.push(value);
    }
    Ok(TrajectoryLog {
        test_accuracy: accuracy,
    })
}

/// Persist one member's artifacts and commit them with the sidecar.
pub fn write_member(
    out: &Path,
    mode: AblationMode,
    index: usize,
    artifacts: &MemberArtifacts,
) -> Result<MemberMeta> {
    std::fs::create_dir_all(out)?;
    let mut digests = BTreeMap::new();

    let labels = labels_text(&artifacts.labels);
    let path = labels_path(out, mode, index);
    std::fs::write(&path, &labels)?;
    digests.insert(file_name(&path), digest_bytes(labels.as_bytes()));

    if let Some(scores) = &artifacts.scores {
        let text = scores_text(scores);
        let path = scores_path(out, mode, index);
        std::fs::write(&path, &text)?;
        digests.insert(file_name(&path), digest_bytes(text.as_bytes()));
    } else {
        // A leftover scores file from another learner family must not
        // shadow this member.
        let _ = std::fs::remove_file(scores_path(out, mode, index));
    }

    let trajectory = trajectory_text(&artifacts.trajectory);
    let path = trajectory_path(out, mode, index);
    std::fs::write(&path, &trajectory)?;
    digests.insert(file_name(&path), digest_bytes(trajectory.as_bytes()));

    let model = artifacts.model.to_bytes();
    let path = model_path(out, mode, index);
    std::fs::write(&path, &model)?;
    digests.insert(file_name(&path), digest_bytes(&model));

    let meta = MemberMeta {
        member: index,
        mode: mode.name().into(),
        status: MemberStatus::Ok,
        divergence: None,
        digests,
    };
    write_meta(out, mode, index, &meta)?;
    Ok(meta)
}

/// Record a diverged member: no artifacts, only the sidecar, so warm runs
/// do not retrain a deterministically failing episode.
pub fn write_diverged(
    out: &Path,
    mode: AblationMode,
    index: usize,
    message: &str,
) -> Result<MemberMeta> {
    std::fs::create_dir_all(out)?;
    for path in [
        labels_path(out, mode, index),
        scores_path(out, mode, index),
        trajectory_path(out, mode, index),
        model_path(out, mode, index),
    ] {
        let _ = std::fs::remove_file(path);
    }
    let meta = MemberMeta {
        member: index,
        mode: mode.name().into(),
        status: MemberStatus::Diverged,
        divergence: Some(message.into()),
        digests: BTreeMap::new(),
    };
    write_meta(out, mode, index, &meta)?;
    Ok(meta)
}

fn write_meta(out: &Path, mode: AblationMode, index: usize, meta: &MemberMeta) -> Result<()> {
    let text = serde_json::to_string_pretty(meta)
        .map_err(|e| Error::Format(format!("member meta: {e}")))?;
    Ok(std::fs::write(meta_path(out, mode, index), text)?)
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .expect("cache paths always carry a file name")
        .to_string_lossy()
        .into_owned()
}

fn verified_read(path: PathBuf, meta: &MemberMeta) -> Option<Vec<u8>> {
    let name = file_name(&path);
    let bytes = std::fs::read(&path).ok()?;
    let expected = meta.digests.get(&name)?;
    (digest_bytes(&bytes) == *expected).then_some(bytes)
}

/// Look up one member. Any missing or digest-mismatched file demotes the
/// entry to a miss, which retrains and rewrites it.
pub fn load_member(out: &Path, mode: AblationMode, index: usize) -> CacheEntry {
    let Ok(text) = std::fs::read_to_string(meta_path(out, mode, index)) else {
        return CacheEntry::Miss;
    };
    let Ok(meta) = serde_json::from_str::<MemberMeta>(&text) else {
        return CacheEntry::Miss;
    };
    match meta.status {
        MemberStatus::Diverged => {
            CacheEntry::Diverged(meta.divergence.unwrap_or_else(|| "diverged".into()))
        }
        MemberStatus::Ok => {
            let Some(labels) = verified_read(labels_path(out, mode, index), &meta) else {
                return CacheEntry::Miss;
            };
            let scores_name = file_name(&scores_path(out, mode, index));
            let scores = if meta.digests.contains_key(&scores_name) {
                match verified_read(scores_path(out, mode, index), &meta) {
                    Some(bytes) => bytes,
                    None => return CacheEntry::Miss,
                }
            } else {
                Vec::new()
            };
            let Some(trajectory) = verified_read(trajectory_path(out, mode, index), &meta)
            else {
                return CacheEntry::Miss;
            };
            let Some(model) = verified_read(model_path(out, mode, index), &meta) else {
                return CacheEntry::Miss;
            };
            let parsed = (|| -> Result<MemberArtifacts> {
                Ok(MemberArtifacts {
                    labels: parse_labels(std::str::from_utf8(&labels).map_err(utf8_err)?)?,
                    scores: if scores.is_empty() {
                        None
                    } else {
                        Some(parse_scores(std::str::from_utf8(&scores).map_err(utf8_err)?)?)
                    },
                    trajectory: parse_trajectory(
                        std::str::from_utf8(&trajectory).map_err(utf8_err)?,
                    )?,
                    model: TrainedModel::from_bytes(&model)?,
                })
            })();
            match parsed {
                Ok(artifacts) => CacheEntry::Hit(artifacts),
                Err(_) => CacheEntry::Miss,
            }
        }
    }
}

fn utf8_err(e: std::str::Utf8Error) -> Error {
    Error::Format(format!("cache file is not utf-8: {e}"))
}

/// Read a member's sidecar directly; used for manifest assembly after the
/// pool is ensured.
pub fn read_meta(out: &Path, mode: AblationMode, index: usize) -> Result<MemberMeta> {
    let text = std::fs::read_to_string(meta_path(out, mode, index))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("member meta: {e}")))
}
