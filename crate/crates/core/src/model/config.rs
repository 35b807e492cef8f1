use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which network a [`ModelState`](super::ModelState) parameterises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Dilated main stream gated by the attention stream.
    Agnet,
    /// Main stream only; every gate is the all-ones mask.
    Sdtcn,
    /// Dropout followed by a single pointwise classifier.
    Bottleneck,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Agnet => "agnet",
            ModelKind::Sdtcn => "sdtcn",
            ModelKind::Bottleneck => "bottleneck",
        }
    }

    pub fn uses_attention(self) -> bool {
        self == ModelKind::Agnet
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "agnet" => Ok(ModelKind::Agnet),
            "sdtcn" => Ok(ModelKind::Sdtcn),
            "bottleneck" => Ok(ModelKind::Bottleneck),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgnetConfig {
    pub kind: ModelKind,
    /// Main-stream input width.
    pub input_channels: usize,
    /// Attention-stream input width (ignored unless `kind` is `Agnet`).
    pub attention_channels: usize,
    /// Main-stream hidden width.
    pub hidden: usize,
    /// Attention width as a fraction of `hidden`.
    pub beta: f64,
    pub n_classes: usize,
    pub n_blocks: usize,
    pub kernel_size: usize,
    /// Per-block dilations. Empty means the doubling schedule `2^(i-1)`.
    #[serde(default)]
    pub dilations: Vec<usize>,
    pub dropout_p: f64,
}

impl AgnetConfig {
    pub fn new(kind: ModelKind, input_channels: usize, attention_channels: usize, n_classes: usize) -> Self {
        Self {
            kind,
            input_channels,
            attention_channels,
            hidden: 512,
            beta: 1.0 / 8.0,
            n_classes,
            n_blocks: 5,
            kernel_size: 3,
            dilations: Vec::new(),
            dropout_p: 0.5,
        }
    }

    /// Attention-stream width: `beta * hidden` rounded to nearest, at least 1.
    pub fn attention_width(&self) -> usize {
        ((self.beta * self.hidden as f64).round() as usize).max(1)
    }

    pub fn dilation(&self, block: usize) -> usize {
        self.dilations.get(block).copied().unwrap_or(1 << block)
    }

    pub fn resolved_dilations(&self) -> Vec<usize> {
        (0..self.n_blocks).map(|i| self.dilation(i)).collect()
    }

    /// Half-width of the stack's receptive field at the output, in time steps.
    pub fn temporal_reach(&self) -> usize {
        if self.kind == ModelKind::Bottleneck {
            return 0;
        }
        let half = (self.kernel_size - 1) / 2;
        (0..self.n_blocks).map(|i| half * self.dilation(i)).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.input_channels == 0 {
            return fail("input_channels must be >= 1".into());
        }
        if self.n_classes == 0 {
            return fail("n_classes must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return fail(format!("dropout_p must be in [0, 1), got {}", self.dropout_p));
        }
        if self.kind == ModelKind::Bottleneck {
            return Ok(());
        }
        if self.hidden == 0 || self.n_blocks == 0 {
            return fail("hidden and n_blocks must be >= 1".into());
        }
        if self.kernel_size.is_multiple_of(2) {
            return fail(format!("kernel_size must be odd, got {}", self.kernel_size));
        }
        if !self.dilations.is_empty() && self.dilations.len() != self.n_blocks {
            return fail(format!(
                "{} dilations given for {} blocks",
                self.dilations.len(),
                self.n_blocks
            ));
        }
        if self.dilations.contains(&0) {
            return fail("dilations must be >= 1".into());
        }
        if self.kind == ModelKind::Agnet {
            if !(self.beta > 0.0 && self.beta <= 1.0) {
                return fail(format!("beta must be in (0, 1], got {}", self.beta));
            }
            if self.attention_channels == 0 {
                return fail("agnet needs attention_channels >= 1".into());
            }
        }
        Ok(())
    }

    /// `key=value` lines, in a fixed order, as stored in checkpoints.
    pub fn to_text(&self) -> String {
        let dil: Vec<String> = self.resolved_dilations().iter().map(|d| d.to_string()).collect();
        format!(
            "kind={}\ninput_channels={}\nattention_channels={}\nhidden={}\nbeta={}\nattention_width={}\nn_classes={}\nn_blocks={}\nkernel_size={}\ndilations={}\ndropout_p={}\n",
            self.kind,
            self.input_channels,
            self.attention_channels,
            self.hidden,
            self.beta,
            self.attention_width(),
            self.n_classes,
            self.n_blocks,
            self.kernel_size,
            dil.join(","),
            self.dropout_p,
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut fields = std::collections::BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("malformed config line {line:?}")))?;
            fields.insert(k.trim(), v.trim());
        }
        let get = |key: &str| {
            fields
                .get(key)
                .copied()
                .ok_or_else(|| Error::Config(format!("missing config field {key:?}")))
        };
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
        }
        let dilations = match get("dilations")? {
            "" => Vec::new(),
            s => s
                .split(',')
                .map(|d| num::<usize>("dilations", d))
                .collect::<Result<Vec<_>>>()?,
        };
        let mut cfg = Self {
            kind: get("kind")?.parse()?,
            input_channels: num("input_channels", get("input_channels")?)?,
            attention_channels: num("attention_channels", get("attention_channels")?)?,
            hidden: num("hidden", get("hidden")?)?,
            beta: num("beta", get("beta")?)?,
            n_classes: num("n_classes", get("n_classes")?)?,
            n_blocks: num("n_blocks", get("n_blocks")?)?,
            kernel_size: num("kernel_size", get("kernel_size")?)?,
            dilations,
            dropout_p: num("dropout_p", get("dropout_p")?)?,
        };
        if cfg.dilations.iter().enumerate().all(|(i, &d)| d == 1 << i) {
            cfg.dilations.clear();
        }
        let width: usize = num("attention_width", get("attention_width")?)?;
        if width != cfg.attention_width() {
            return Err(Error::Config(format!(
                "attention_width {width} disagrees with beta * hidden = {}",
                cfg.attention_width()
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
