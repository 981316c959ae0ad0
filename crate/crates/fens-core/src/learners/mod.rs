//! Model families and their shared prediction and serialization surface.

pub mod mlp;
pub mod tree;

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::SampleTable;
use crate::error::{Error, Result};

pub use mlp::{
    gradient_check, mlp_gradient_check, mlp_init, mlp_train, AugmentationConfig, GradCheckReport,
    LrSchedule, MLPConfig, MLPModel, TrajectoryLog,
};
pub use tree::{tree_train, TreeConfig, TreeModel, TreeNode};

const MAGIC: &[u8; 4] = b"FENS";
const FORMAT_VERSION: u16 = 1;
const KIND_MLP: u8 = 0;
const KIND_TREE: u8 = 1;

/// Labels for every row plus, when the family provides them, class scores
/// whose rows sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<usize>,
    pub scores: Option<Array2<f64>>,
}

/// Either model family behind one prediction and persistence interface.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Mlp(MLPModel),
    Tree(TreeModel),
}

#[derive(Serialize, Deserialize)]
struct TreeHeader {
    config: TreeConfig,
    class_count: usize,
    feature_dim: usize,
}

impl TrainedModel {
    pub fn class_count(&self) -> usize {
        match self {
            TrainedModel::Mlp(m) => m.class_count(),
            TrainedModel::Tree(t) => t.class_count(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            TrainedModel::Mlp(m) => m.feature_dim(),
            TrainedModel::Tree(t) => t.feature_dim(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            TrainedModel::Mlp(_) => "mlp",
            TrainedModel::Tree(_) => "tree",
        }
    }

    /// Predict labels (and scores for score-bearing families) for a table.
    pub fn predict(&self, table: &SampleTable) -> Result<Prediction> {
        match self {
            TrainedModel::Mlp(m) => {
                let scores = m.scores(table.features())?;
                let labels = scores.rows().into_iter().map(argmax_row).collect();
                Ok(Prediction {
                    labels,
                    scores: Some(scores),
                })
            }
            TrainedModel::Tree(t) => Ok(Prediction {
                labels: t.predict_labels(table.features())?,
                scores: None,
            }),
        }
    }

    /// Binary container: magic, format version, kind byte, JSON config echo,
    /// then a little-endian parameter block (trees as a preorder node list).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        match self {
            TrainedModel::Mlp(m) => {
                out.push(KIND_MLP);
                let config = serde_json::to_vec(m.config()).expect("config serializes");
                out.extend_from_slice(&(config.len() as u32).to_le_bytes());
                out.extend_from_slice(&config);
                let params = m.flat_params();
                out.extend_from_slice(&(params.len() as u64).to_le_bytes());
                for p in params {
                    out.extend_from_slice(&p.to_le_bytes());
                }
            }
            TrainedModel::Tree(t) => {
                out.push(KIND_TREE);
                let header = TreeHeader {
                    config: *t.config(),
                    class_count: t.class_count(),
                    feature_dim: t.feature_dim(),
                };
                let config = serde_json::to_vec(&header).expect("config serializes");
                out.extend_from_slice(&(config.len() as u32).to_le_bytes());
                out.extend_from_slice(&config);
                out.extend_from_slice(&(t.node_count() as u64).to_le_bytes());
                write_node(t.root(), &mut out);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<TrainedModel> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format version {version}"
            )));
        }
        let kind = r.u8()?;
        let config_len = r.u32()? as usize;
        let config_bytes = r.take(config_len)?;
        let model = match kind {
            KIND_MLP => {
                let config: MLPConfig = serde_json::from_slice(config_bytes)
                    .map_err(|e| Error::Format(format!("config echo: {e}")))?;
                let count = r.u64()? as usize;
                let mut params = Vec::with_capacity(count);
                for _ in 0..count {
                    params.push(r.f64()?);
                }
                TrainedModel::Mlp(MLPModel::from_flat(config, &params)?)
            }
            KIND_TREE => {
                let header: TreeHeader = serde_json::from_slice(config_bytes)
                    .map_err(|e| Error::Format(format!("config echo: {e}")))?;
                let count = r.u64()? as usize;
                let mut read = 0usize;
                let root = read_node(&mut r, &mut read)?;
                if read != count {
                    return Err(Error::Format(format!(
                        "node count mismatch: header {count}, stream {read}"
                    )));
                }
                TrainedModel::Tree(TreeModel::from_parts(
                    header.config,
                    header.class_count,
                    header.feature_dim,
                    root,
                )?)
            }
            other => return Err(Error::Format(format!("unknown model kind {other}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after model".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TrainedModel> {
        let bytes = std::fs::read(path)?;
        TrainedModel::from_bytes(&bytes)
    }
}

fn argmax_row(row: ndarray::ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    let mut best_v = row[0];
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

fn write_node(node: &TreeNode, out: &mut Vec<u8>) {
    match node {
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            out.push(0);
            out.extend_from_slice(&(*feature as u32).to_le_bytes());
            out.extend_from_slice(&threshold.to_le_bytes());
            write_node(left, out);
            write_node(right, out);
        }
        TreeNode::Leaf { label } => {
            out.push(1);
            out.extend_from_slice(&(*label as u32).to_le_bytes());
        }
    }
}

fn read_node(r: &mut Reader<'_>, count: &mut usize) -> Result<TreeNode> {
    *count += 1;
    match r.u8()? {
        0 => {
            let feature = r.u32()? as usize;
            let threshold = r.f64()?;
            let left = Box::new(read_node(r, count)?);
            let right = Box::new(read_node(r, count)?);
            Ok(TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            })
        }
        1 => Ok(TreeNode::Leaf {
            label: r.u32()? as usize,
        }),
        other => Err(Error::Format(format!("unknown node tag {other}"))),
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("truncated model file".into()));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
