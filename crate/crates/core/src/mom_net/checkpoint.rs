//! Checkpoint container: JSON with shortest round-trip float formatting, so
//! save → load reproduces every parameter bit for bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::MomNet;
use super::train::TrainConfig;
use super::NetError;

pub const CHECKPOINT_FORMAT: &str = "mom-checkpoint/1";

/// Losses after one epoch. Test losses use a fixed sample of the held-out
/// split; train losses average the epoch's mini-batches before each update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loc: f64,
    pub train_rec: f64,
    pub test_loc: f64,
    pub test_rec: f64,
}

impl EpochRecord {
    pub fn train_total(&self, lambda: f64) -> f64 {
        self.train_loc + lambda * self.train_rec
    }

    pub fn test_total(&self, lambda: f64) -> f64 {
        self.test_loc + lambda * self.test_rec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub config: TrainConfig,
    pub epoch: usize,
    pub net: MomNet,
    pub history: Vec<EpochRecord>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String, NetError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, NetError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let format = value.get("format").and_then(|f| f.as_str()).unwrap_or("");
        if format != CHECKPOINT_FORMAT {
            return Err(NetError::UnsupportedFormat(format.to_string()));
        }
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        ckpt.net.validate()?;
        if ckpt.history.len() != ckpt.epoch {
            return Err(NetError::ShapeMismatch(format!(
                "loss history has {} entries for {} epochs",
                ckpt.history.len(),
                ckpt.epoch
            )));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        let mut f = fs::File::create(path)?;
        f.write_all(self.to_json()?.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NetError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// `epoch,train_loss,test_loss` with localization losses, comparable
    /// across reconstruction weights.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,test_loss\n");
        for r in &self.history {
            out.push_str(&format!("{},{},{}\n", r.epoch, r.train_loc, r.test_loc));
        }
        out
    }

    /// Epoch (1-based) with the lowest test localization loss; earliest wins ties.
    pub fn best_test_epoch(&self) -> Option<usize> {
        self.history
            .iter()
            .min_by(|a, b| a.test_loc.total_cmp(&b.test_loc).then(a.epoch.cmp(&b.epoch)))
            .map(|r| r.epoch)
    }
}
