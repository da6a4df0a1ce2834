//! Pipeline configuration and its flat `key = value` file format.
//!
//! ```text
//! # comments and blank lines are ignored
//! block_size = 50
//! channel = P
//! ```
//!
//! Keys not present keep their defaults; unknown keys are errors.

use std::fmt;
use std::str::FromStr;

use crate::color_transform::ChannelMode;
use crate::error::{Error, Result};

/// Every tunable of the segmentation pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Side of a base block in pixels.
    pub block_size: usize,
    pub histogram_bins: usize,
    pub smooth_radius: usize,
    /// Minimum smoothed peak height, as a fraction of the highest bin.
    pub peak_min_fraction: f64,
    /// Minority-mode mass below which a two-peak block counts as dominated.
    pub dominance_ratio: f64,
    /// Unresolved single-mode regions with mean P at or above this are background.
    pub background_p_cutoff: f64,
    /// Smallest nucleus area kept, in pixels.
    pub min_area: usize,
    /// Components with solidity below this are split candidates.
    pub solidity_threshold: f64,
    pub max_iterations: usize,
    pub contrast_low: f64,
    pub contrast_high: f64,
    pub channel: ChannelMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            block_size: 50,
            histogram_bins: 32,
            smooth_radius: 2,
            peak_min_fraction: 0.1,
            dominance_ratio: 0.15,
            background_p_cutoff: 0.5,
            min_area: 30,
            solidity_threshold: 0.88,
            max_iterations: 10,
            contrast_low: 0.01,
            contrast_high: 0.99,
            channel: ChannelMode::P,
        }
    }
}

impl fmt::Display for ChannelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelMode::P => "P",
            ChannelMode::L => "L",
        })
    }
}

impl FromStr for ChannelMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "P" | "p" => Ok(ChannelMode::P),
            "L" | "l" => Ok(ChannelMode::L),
            other => Err(format!("unknown channel mode {other:?}, expected P or L")),
        }
    }
}

const KEYS: [&str; 12] = [
    "block_size",
    "histogram_bins",
    "smooth_radius",
    "peak_min_fraction",
    "dominance_ratio",
    "background_p_cutoff",
    "min_area",
    "solidity_threshold",
    "max_iterations",
    "contrast_low",
    "contrast_high",
    "channel",
];

fn unit_interval(name: &str, v: f64) -> std::result::Result<(), String> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(format!("{name} = {v} is outside [0, 1]"))
    }
}

impl PipelineConfig {
    pub fn with_channel(mut self, channel: ChannelMode) -> Self {
        self.channel = channel;
        self
    }

    /// Check every field against its documented range.
    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|msg| Error::Config { line: 0, msg })
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.block_size < 8 {
            return Err(format!("block_size = {} is below 8", self.block_size));
        }
        if !(8..=1024).contains(&self.histogram_bins) {
            return Err(format!("histogram_bins = {} is outside [8, 1024]", self.histogram_bins));
        }
        if self.smooth_radius > 10 {
            return Err(format!("smooth_radius = {} exceeds 10", self.smooth_radius));
        }
        unit_interval("peak_min_fraction", self.peak_min_fraction)?;
        if !(0.0..=0.5).contains(&self.dominance_ratio) {
            return Err(format!("dominance_ratio = {} is outside [0, 0.5]", self.dominance_ratio));
        }
        unit_interval("background_p_cutoff", self.background_p_cutoff)?;
        if self.min_area < 1 {
            return Err("min_area must be at least 1".into());
        }
        if !(self.solidity_threshold > 0.0 && self.solidity_threshold <= 1.0) {
            return Err(format!("solidity_threshold = {} is outside (0, 1]", self.solidity_threshold));
        }
        if self.max_iterations < 1 {
            return Err("max_iterations must be at least 1".into());
        }
        if !(0.0 <= self.contrast_low && self.contrast_low < self.contrast_high && self.contrast_high <= 1.0) {
            return Err(format!(
                "contrast percentiles ({}, {}) must satisfy 0 <= low < high <= 1",
                self.contrast_low, self.contrast_high
            ));
        }
        Ok(())
    }

    /// Serialize as a `key = value` document, one key per line, in a fixed order.
    pub fn to_config_string(&self) -> String {
        let values: [String; 12] = [
            self.block_size.to_string(),
            self.histogram_bins.to_string(),
            self.smooth_radius.to_string(),
            self.peak_min_fraction.to_string(),
            self.dominance_ratio.to_string(),
            self.background_p_cutoff.to_string(),
            self.min_area.to_string(),
            self.solidity_threshold.to_string(),
            self.max_iterations.to_string(),
            self.contrast_low.to_string(),
            self.contrast_high.to_string(),
            self.channel.to_string(),
        ];
        KEYS.iter().zip(values).map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Parse a `key = value` document on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |msg: String| Error::Config { line, msg };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(format!("expected `key = value`, got {content:?}")))?;
            if seen.contains(&key) {
                return Err(err(format!("duplicate key {key:?}")));
            }
            fn num<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
                v.parse().map_err(|_| format!("invalid value {v:?} for {key}"))
            }
            let res = match key {
                "block_size" => num(key, value).map(|v| cfg.block_size = v),
                "histogram_bins" => num(key, value).map(|v| cfg.histogram_bins = v),
                "smooth_radius" => num(key, value).map(|v| cfg.smooth_radius = v),
                "peak_min_fraction" => num(key, value).map(|v| cfg.peak_min_fraction = v),
                "dominance_ratio" => num(key, value).map(|v| cfg.dominance_ratio = v),
                "background_p_cutoff" => num(key, value).map(|v| cfg.background_p_cutoff = v),
                "min_area" => num(key, value).map(|v| cfg.min_area = v),
                "solidity_threshold" => num(key, value).map(|v| cfg.solidity_threshold = v),
                "max_iterations" => num(key, value).map(|v| cfg.max_iterations = v),
                "contrast_low" => num(key, value).map(|v| cfg.contrast_low = v),
                "contrast_high" => num(key, value).map(|v| cfg.contrast_high = v),
                "channel" => value.parse().map(|v| cfg.channel = v),
                other => Err(format!("unknown key {other:?}")),
            };
            res.map_err(err)?;
            seen.push(key);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl FromStr for PipelineConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}
