//! Binary checkpoint layout, all integers little-endian:
//!
//! ```text
//! "CCL1"  u16 version  u32 text_len  text
//! repeated until EOF: u32 name_len  name  u32 rows  u32 cols  f64 × rows·cols
//! ```
//!
//! `text` holds sorted `key=value` lines: the training config under `train.`
//! and the loop state under `state.`. Tensors are the layer parameters
//! (`layer{k}.weight`, `layer{k}.bias`) followed by `history`, one
//! `step, epoch, loss, align_term, unif_term, lr` row per optimizer step.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use super::mlp::{Dense, Mlp};
use super::train::{HistoryRow, TrainConfig};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngState};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CCL1";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Snapshot of a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Mlp,
    pub config: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    /// Generator position for the next epoch.
    pub rng: RngState,
    pub history: Vec<HistoryRow>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!(
                "checkpoint truncated at byte {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn put_tensor(out: &mut Vec<u8>, name: &str, m: &Matrix) {
    out.extend((name.len() as u32).to_le_bytes());
    out.extend(name.as_bytes());
    out.extend((m.rows() as u32).to_le_bytes());
    out.extend((m.cols() as u32).to_le_bytes());
    for v in m.data() {
        out.extend(v.to_le_bytes());
    }
}

impl Checkpoint {
    /// The untrained model for `config`, as `train` would start from it.
    pub fn init(config: &TrainConfig, input_dim: usize) -> Result<Self> {
        Ok(Self {
            model: super::train::init_model(config, input_dim)?,
            config: config.clone(),
            epoch: 0,
            rng: crate::numerics::Rng::new(config.seed).split(1).state(),
            history: Vec::new(),
        })
    }

    fn text_block(&self) -> String {
        let mut kv: BTreeMap<String, String> = self
            .config
            .to_kv()
            .into_iter()
            .map(|(k, v)| (format!("train.{k}"), v))
            .collect();
        kv.insert("state.epoch".into(), self.epoch.to_string());
        kv.insert("state.rng_seed".into(), self.rng.seed.to_string());
        kv.insert("state.rng_stream".into(), self.rng.stream.to_string());
        kv.insert("state.rng_word_pos".into(), self.rng.word_pos.to_string());
        kv.into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn history_matrix(&self) -> Result<Matrix> {
        let data = self
            .history
            .iter()
            .flat_map(|h| {
                [
                    h.step as f64,
                    h.epoch as f64,
                    h.loss,
                    h.align_term,
                    h.unif_term,
                    h.lr,
                ]
            })
            .collect();
        Matrix::new(self.history.len(), 6, data)
    }

    /// History as CSV with a header row.
    pub fn history_csv(&self) -> String {
        let mut s = String::from(HistoryRow::CSV_HEADER);
        s.push('\n');
        for h in &self.history {
            s.push_str(&h.csv_row());
            s.push('\n');
        }
        s
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let text = self.text_block();
        let mut out = Vec::new();
        out.extend(CHECKPOINT_MAGIC);
        out.extend(CHECKPOINT_VERSION.to_le_bytes());
        out.extend((text.len() as u32).to_le_bytes());
        out.extend(text.as_bytes());
        for (name, m) in self.model.param_names().iter().zip(self.model.params()) {
            put_tensor(&mut out, name, m);
        }
        put_tensor(&mut out, "history", &self.history_matrix()?);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format("config block is not UTF-8".into()))?;
        let mut train_kv = BTreeMap::new();
        let mut state = BTreeMap::new();
        for line in text.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad config line `{line}`")))?;
            if let Some(k) = k.strip_prefix("train.") {
                train_kv.insert(k.to_string(), v.to_string());
            } else if let Some(k) = k.strip_prefix("state.") {
                state.insert(k.to_string(), v.to_string());
            } else {
                return Err(Error::Format(format!("unknown key `{k}`")));
            }
        }
        let config = TrainConfig::from_kv(&train_kv)?;
        let st = |k: &str| {
            state
                .get(k)
                .ok_or_else(|| Error::Format(format!("missing state.{k}")))
        };
        let bad = |k: &str| Error::Format(format!("bad state.{k}"));
        let epoch = st("epoch")?.parse().map_err(|_| bad("epoch"))?;
        let rng = RngState {
            seed: st("rng_seed")?.parse().map_err(|_| bad("rng_seed"))?,
            stream: st("rng_stream")?.parse().map_err(|_| bad("rng_stream"))?,
            word_pos: st("rng_word_pos")?
                .parse()
                .map_err(|_| bad("rng_word_pos"))?,
        };

        let mut tensors = Vec::new();
        while !r.done() {
            let n = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(n)?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let raw = r.take(rows * cols * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push((name, Matrix::new(rows, cols, data)?));
        }
        let (hname, hist) = tensors
            .pop()
            .ok_or_else(|| Error::Format("checkpoint has no tensors".into()))?;
        if hname != "history" || hist.cols() != 6 {
            return Err(Error::Format("last tensor must be the n×6 history".into()));
        }
        if tensors.len() % 2 != 0 {
            return Err(Error::Format("unpaired layer tensors".into()));
        }
        let mut layers = Vec::new();
        for (k, pair) in tensors.chunks_exact(2).enumerate() {
            if pair[0].0 != format!("layer{k}.weight") || pair[1].0 != format!("layer{k}.bias") {
                return Err(Error::Format(format!(
                    "expected layer{k} tensors, found `{}`, `{}`",
                    pair[0].0, pair[1].0
                )));
            }
            layers.push(Dense {
                weight: pair[0].1.clone(),
                bias: pair[1].1.clone(),
            });
        }
        let model = if layers.is_empty() {
            return Err(Error::Format("checkpoint has no layers".into()));
        } else {
            Mlp::from_layers(layers)?
        };
        let history = hist
            .row_iter()
            .map(|h| HistoryRow {
                step: h[0] as usize,
                epoch: h[1] as usize,
                loss: h[2],
                align_term: h[3],
                unif_term: h[4],
                lr: h[5],
            })
            .collect();
        Ok(Self {
            model,
            config,
            epoch,
            rng,
            history,
        })
    }

    /// Writes through a temporary file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes()?)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
