use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Accumulated portions of weights frozen after each step, ending at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct InqSchedule {
    sigmas: Vec<f64>,
}

impl TryFrom<Vec<f64>> for InqSchedule {
    type Error = Error;

    fn try_from(sigmas: Vec<f64>) -> Result<Self> {
        Self::new(sigmas)
    }
}

impl From<InqSchedule> for Vec<f64> {
    fn from(s: InqSchedule) -> Self {
        s.sigmas
    }
}

impl InqSchedule {
    pub fn new(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(Error::InvalidSchedule("schedule is empty".into()));
        }
        if let Some(s) = sigmas.iter().find(|s| !(**s > 0.0 && **s <= 1.0)) {
            return Err(Error::InvalidSchedule(format!("portion {s} outside (0, 1]")));
        }
        if sigmas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSchedule(
                "portions must be strictly increasing".into(),
            ));
        }
        if sigmas.last() != Some(&1.0) {
            return Err(Error::InvalidSchedule("last portion must be 1".into()));
        }
        Ok(Self { sigmas })
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    /// A preset name, or an explicit comma-separated list such as `0.5,0.75,1`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if let Some(preset) = preset(spec) {
            return Ok(preset);
        }
        let sigmas = spec
            .trim_matches(|c| c == '{' || c == '}')
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::UnknownPreset(spec.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(sigmas)
    }
}

const PRESETS: &[(&str, &[f64])] = &[
    ("alexnet", &[0.3, 0.6, 0.8, 1.0]),
    ("vgg16", &[0.5, 0.75, 0.875, 1.0]),
    ("googlenet", &[0.2, 0.4, 0.6, 0.8, 1.0]),
    ("resnet18-5bit", &[0.5, 0.75, 0.875, 1.0]),
    ("resnet50-5bit", &[0.5, 0.75, 0.875, 1.0]),
    ("4bit", &[0.3, 0.5, 0.8, 0.9, 0.95, 1.0]),
    ("3bit", &[0.2, 0.4, 0.6, 0.7, 0.8, 0.9, 0.95, 1.0]),
    (
        "2bit",
        &[0.2, 0.4, 0.6, 0.7, 0.8, 0.85, 0.9, 0.95, 0.975, 1.0],
    ),
];

/// The named schedule catalog.
pub fn preset_schedules() -> Vec<(&'static str, InqSchedule)> {
    PRESETS
        .iter()
        .map(|(name, s)| (*name, InqSchedule::new(s.to_vec()).expect("valid preset")))
        .collect()
}

pub fn preset(name: &str) -> Option<InqSchedule> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| InqSchedule::new(s.to_vec()).expect("valid preset"))
}
