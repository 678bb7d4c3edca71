//! INQ run checkpoints, written as versioned JSON at step boundaries.
//!
//! Floats go through `serde_json`'s round-trip formatting, so every weight
//! is restored bit-exactly. Momentum restarts at every step, so no
//! optimizer velocity needs saving.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inq::{InqConfig, InqState, StepMetrics};
use crate::mask::PartitionMask;
use crate::nn::Network;
use crate::quant::QuantGrid;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InqCheckpoint {
    pub version: u32,
    pub config: InqConfig,
    pub network: Network,
    pub masks: PartitionMask,
    pub grids: Vec<QuantGrid>,
    /// Completed steps.
    pub step: usize,
    pub sigma: f64,
    pub history: Vec<StepMetrics>,
}

impl InqCheckpoint {
    pub fn capture(config: &InqConfig, state: &InqState, history: &[StepMetrics]) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            network: state.network().clone(),
            masks: state.masks().clone(),
            grids: state.grids().to_vec(),
            step: state.step(),
            sigma: state.sigma(),
            history: history.to_vec(),
        }
    }

    pub fn into_state(self) -> Result<(InqConfig, InqState, Vec<StepMetrics>)> {
        let network = Network::from_parts(
            &self.network.input_shape().to_vec(),
            self.network.layers().to_vec(),
            self.network.into_params(),
        )?;
        if self.step > self.config.schedule.len() {
            return Err(Error::Malformed(format!(
                "checkpoint at step {} of a {}-step schedule",
                self.step,
                self.config.schedule.len()
            )));
        }
        let state = InqState::restore(network, self.masks, self.grids, self.step, self.sigma)?;
        Ok((self.config, state, self.history))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Probe {
            version: u32,
        }
        let probe: Probe = serde_json::from_str(text)?;
        if probe.version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                found: probe.version.min(u16::MAX as u32) as u16,
                expected: CHECKPOINT_VERSION as u16,
            });
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
