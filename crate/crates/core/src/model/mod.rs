//! The two-stream attention-guided network, its ablations, and late fusion.
//!
//! Both streams start with a linear pointwise bottleneck. Each block `i` then computes
//!
//! ```text
//! h_i       = relu(conv(FA_i, k, d_i))
//! FA_{i+1}  = FA_i + h_i
//! A_i       = sigmoid(W_i h_i)
//! FB_{i+1}  = FB_i + relu(conv(FB_i, k, d_i)) * A_i
//! ```
//!
//! and the classifier is `P = sigmoid(W' FB_last)`. The SD-TCN ablation drops the
//! attention stream (every `A_i` is all ones) and the bottleneck baseline is a
//! dropout layer followed by a single pointwise classifier.

mod checkpoint;
mod config;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use config::{AgnetConfig, ModelKind};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tape::{GradTape, Var};
use crate::tensor::{self, ConvKernel, TimeMatrix};

/// `(out_channels, in_channels, kernel_size, dilation)` of one kernel.
pub type KernelShape = (usize, usize, usize, usize);

/// All learnable weights of a model together with the config that shapes them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    config: AgnetConfig,
    kernels: Vec<ConvKernel>,
}

/// Kernel shapes in declaration order.
///
/// AGNet: main input bottleneck, attention input bottleneck, then per block
/// (main conv, attention conv, gate projection `W_i`), then the classifier `W'`.
/// SD-TCN drops the attention kernels; the bottleneck baseline has only its classifier.
pub fn kernel_shapes(config: &AgnetConfig) -> Vec<KernelShape> {
    let (c2, ca, k) = (config.hidden, config.attention_width(), config.kernel_size);
    match config.kind {
        ModelKind::Bottleneck => vec![(config.n_classes, config.input_channels, 1, 1)],
        ModelKind::Sdtcn => {
            let mut shapes = vec![(c2, config.input_channels, 1, 1)];
            shapes.extend((0..config.n_blocks).map(|i| (c2, c2, k, config.dilation(i))));
            shapes.push((config.n_classes, c2, 1, 1));
            shapes
        }
        ModelKind::Agnet => {
            let mut shapes = vec![
                (c2, config.input_channels, 1, 1),
                (ca, config.attention_channels, 1, 1),
            ];
            for i in 0..config.n_blocks {
                shapes.push((c2, c2, k, config.dilation(i)));
                shapes.push((ca, ca, k, config.dilation(i)));
                shapes.push((c2, ca, 1, 1));
            }
            shapes.push((config.n_classes, c2, 1, 1));
            shapes
        }
    }
}

/// Per-block activations from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Attention-stream feature maps `FA_1 ..= FA_{n+1}` (empty without attention stream).
    pub attention_features: Vec<TimeMatrix>,
    /// Main-stream feature maps `FB_1 ..= FB_{n+1}`.
    pub main_features: Vec<TimeMatrix>,
    /// Attention masks `A_1 ..= A_n` (empty for SD-TCN).
    pub attention: Vec<TimeMatrix>,
    /// Classifier output before the final sigmoid.
    pub logits: TimeMatrix,
    /// Per-step class probabilities.
    pub probs: TimeMatrix,
}

/// Source of the per-block masks multiplying the main-stream increments.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Gating<'a> {
    Attention(&'a TimeMatrix),
    /// Attention stream is still evaluated but every mask is replaced by this constant.
    Constant(&'a TimeMatrix, f64),
    Ungated,
}

pub(crate) struct Recorded {
    pub logits: Var,
    pub attention_features: Vec<Var>,
    pub main_features: Vec<Var>,
    pub gates: Vec<Var>,
}

impl ModelState {
    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights with `fan_in = C_in * k`; zero biases.
    pub fn init(config: AgnetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kernels = kernel_shapes(&config)
            .into_iter()
            .map(|(o, c, k, d)| {
                let bound = 1.0 / ((c * k) as f64).sqrt();
                let weights = (0..o * c * k).map(|_| rng.random_range(-bound..=bound)).collect();
                ConvKernel::new(o, c, k, d, weights, vec![0.0; o])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config, kernels })
    }

    pub fn from_parts(config: AgnetConfig, kernels: Vec<ConvKernel>) -> Result<Self> {
        config.validate()?;
        let shapes = kernel_shapes(&config);
        if shapes.len() != kernels.len() {
            return Err(Error::Config(format!(
                "{} kernels supplied, config needs {}",
                kernels.len(),
                shapes.len()
            )));
        }
        for (i, (k, s)) in kernels.iter().zip(&shapes).enumerate() {
            let got = (k.out_channels(), k.in_channels(), k.kernel_size(), k.dilation());
            if got != *s {
                return Err(Error::Config(format!("kernel {i} has shape {got:?}, expected {s:?}")));
            }
        }
        Ok(Self { config, kernels })
    }

    pub fn config(&self) -> &AgnetConfig {
        &self.config
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn kernels(&self) -> &[ConvKernel] {
        &self.kernels
    }

    pub fn kernels_mut(&mut self) -> &mut [ConvKernel] {
        &mut self.kernels
    }

    pub fn parameter_count(&self) -> usize {
        self.kernels.iter().map(ConvKernel::parameter_count).sum()
    }

    /// Every weight and bias buffer, `w0, b0, w1, b1, ...`.
    pub fn parameter_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.kernels
            .iter_mut()
            .flat_map(|k| [k.weights.as_mut_slice(), k.bias.as_mut_slice()])
            .collect()
    }

    fn has_attention(&self) -> bool {
        self.config.kind == ModelKind::Agnet
    }

    fn main_in(&self) -> usize {
        0
    }

    fn att_in(&self) -> usize {
        1
    }

    fn main_conv(&self, block: usize) -> usize {
        if self.has_attention() {
            2 + 3 * block
        } else {
            1 + block
        }
    }

    fn att_conv(&self, block: usize) -> usize {
        2 + 3 * block + 1
    }

    fn gate(&self, block: usize) -> usize {
        2 + 3 * block + 2
    }

    fn classifier(&self) -> usize {
        self.kernels.len() - 1
    }

    fn check_main(&self, x: &TimeMatrix) -> Result<()> {
        if x.steps() == 0 {
            return Err(Error::shape("forward", "input has no time steps"));
        }
        if x.channels() != self.config.input_channels {
            return Err(Error::shape(
                "forward",
                format!(
                    "main stream has {} channels, model expects {}",
                    x.channels(),
                    self.config.input_channels
                ),
            ));
        }
        Ok(())
    }

    fn check_attention(&self, x_main: &TimeMatrix, x_att: &TimeMatrix) -> Result<()> {
        if !self.has_attention() {
            return Err(Error::Config(format!(
                "{} model has no attention stream",
                self.config.kind
            )));
        }
        if x_att.steps() != x_main.steps() {
            return Err(Error::shape(
                "forward",
                format!(
                    "attention stream has {} steps, main stream {}",
                    x_att.steps(),
                    x_main.steps()
                ),
            ));
        }
        if x_att.channels() != self.config.attention_channels {
            return Err(Error::shape(
                "forward",
                format!(
                    "attention stream has {} channels, model expects {}",
                    x_att.channels(),
                    self.config.attention_channels
                ),
            ));
        }
        Ok(())
    }

    /// Records the temporal network (not the bottleneck baseline) on `tape`.
    pub(crate) fn record_temporal<'k>(
        &'k self,
        tape: &mut GradTape<'k>,
        x_main: &TimeMatrix,
        gating: Gating<'_>,
    ) -> Result<Recorded> {
        if self.config.kind == ModelKind::Bottleneck {
            return Err(Error::Config("bottleneck model has no temporal stack".into()));
        }
        self.check_main(x_main)?;
        let att_input = match gating {
            Gating::Attention(a) | Gating::Constant(a, _) => {
                self.check_attention(x_main, a)?;
                Some(a)
            }
            Gating::Ungated => None,
        };

        let k = &self.kernels;
        let xm = tape.input(x_main.clone());
        let mut fb = tape.pointwise_conv(xm, &k[self.main_in()], self.main_in())?;
        let mut fa = match att_input {
            Some(a) => {
                let xa = tape.input(a.clone());
                Some(tape.pointwise_conv(xa, &k[self.att_in()], self.att_in())?)
            }
            None => None,
        };

        let mut rec = Recorded {
            logits: fb,
            attention_features: fa.into_iter().collect(),
            main_features: vec![fb],
            gates: Vec::new(),
        };

        for i in 0..self.config.n_blocks {
            let gate = match (fa, gating) {
                (Some(fa_i), _) => {
                    let ac = self.att_conv(i);
                    let pre = tape.conv1d_dilated(fa_i, &k[ac], ac, k[ac].same_padding())?;
                    let h = tape.relu(pre);
                    let next = tape.add(fa_i, h)?;
                    fa = Some(next);
                    rec.attention_features.push(next);
                    let g = self.gate(i);
                    let logits = tape.pointwise_conv(h, &k[g], g)?;
                    let mask = match gating {
                        Gating::Constant(_, v) => {
                            let shape = tape.value(logits).shape();
                            tape.input(TimeMatrix::filled(shape.0, shape.1, v))
                        }
                        _ => tape.sigmoid(logits),
                    };
                    rec.gates.push(mask);
                    Some(mask)
                }
                (None, _) => None,
            };

            let mc = self.main_conv(i);
            let pre = tape.conv1d_dilated(fb, &k[mc], mc, k[mc].same_padding())?;
            let mut inc = tape.relu(pre);
            if let Some(mask) = gate {
                inc = tape.hadamard(inc, mask)?;
            }
            fb = tape.add(fb, inc)?;
            rec.main_features.push(fb);
        }

        let cl = self.classifier();
        rec.logits = tape.pointwise_conv(fb, &k[cl], cl)?;
        Ok(rec)
    }

    /// Records the dropout + pointwise classifier baseline; returns the logits.
    pub(crate) fn record_bottleneck<'k, R: Rng + ?Sized>(
        &'k self,
        tape: &mut GradTape<'k>,
        x_main: &TimeMatrix,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if self.config.kind != ModelKind::Bottleneck {
            return Err(Error::Config(format!(
                "{} model is not a bottleneck baseline",
                self.config.kind
            )));
        }
        self.check_main(x_main)?;
        let x = tape.input(x_main.clone());
        let dropped = tape.dropout(x, self.config.dropout_p, training, rng)?;
        tape.pointwise_conv(dropped, &self.kernels[0], 0)
    }

    fn trace(&self, x_main: &TimeMatrix, gating: Gating<'_>) -> Result<ForwardTrace> {
        let mut tape = GradTape::new();
        let rec = self.record_temporal(&mut tape, x_main, gating)?;
        let collect = |vars: &[Var]| vars.iter().map(|&v| tape.value(v).clone()).collect();
        let logits = tape.value(rec.logits).clone();
        let attention = match gating {
            Gating::Attention(_) => collect(&rec.gates),
            _ => Vec::new(),
        };
        Ok(ForwardTrace {
            attention_features: collect(&rec.attention_features),
            main_features: collect(&rec.main_features),
            attention,
            probs: tensor::sigmoid(&logits),
            logits,
        })
    }

    /// Full two-stream forward pass.
    pub fn forward_agnet(&self, x_main: &TimeMatrix, x_att: &TimeMatrix) -> Result<ForwardTrace> {
        self.trace(x_main, Gating::Attention(x_att))
    }

    /// Two-stream forward pass with every attention mask replaced by `value`.
    pub fn forward_with_constant_attention(
        &self,
        x_main: &TimeMatrix,
        x_att: &TimeMatrix,
        value: f64,
    ) -> Result<ForwardTrace> {
        self.trace(x_main, Gating::Constant(x_att, value))
    }

    /// Main stream only, with plain residual dilated blocks.
    pub fn forward_sdtcn(&self, x_main: &TimeMatrix) -> Result<ForwardTrace> {
        self.trace(x_main, Gating::Ungated)
    }

    /// Dropout + pointwise classifier; returns per-step probabilities.
    pub fn forward_bottleneck<R: Rng + ?Sized>(
        &self,
        x_main: &TimeMatrix,
        training: bool,
        rng: &mut R,
    ) -> Result<TimeMatrix> {
        let mut tape = GradTape::new();
        let logits = self.record_bottleneck(&mut tape, x_main, training, rng)?;
        Ok(tensor::sigmoid(tape.value(logits)))
    }

    /// Inference-mode probabilities for whichever network this state holds.
    pub fn predict(&self, x_main: &TimeMatrix, x_att: Option<&TimeMatrix>) -> Result<TimeMatrix> {
        match self.config.kind {
            ModelKind::Agnet => {
                let att = x_att.ok_or_else(|| {
                    Error::InvalidArgument("agnet prediction needs the attention stream".into())
                })?;
                Ok(self.forward_agnet(x_main, att)?.probs)
            }
            ModelKind::Sdtcn => Ok(self.forward_sdtcn(x_main)?.probs),
            ModelKind::Bottleneck => {
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                self.forward_bottleneck(x_main, false, &mut rng)
            }
        }
    }
}

/// Late fusion of two synchronised prediction sets: the elementwise mean.
pub fn fuse_predictions(p1: &TimeMatrix, p2: &TimeMatrix) -> Result<TimeMatrix> {
    p1.ensure_same_shape(p2, "fuse_predictions")?;
    let data = p1
        .as_slice()
        .iter()
        .zip(p2.as_slice())
        .map(|(a, b)| (a + b) / 2.0)
        .collect();
    TimeMatrix::new(p1.steps(), p1.channels(), data)
}

/// Channel-averaged attention per block: `n_blocks` rows of `T` values.
pub fn export_attention(trace: &ForwardTrace) -> Result<Vec<Vec<f64>>> {
    if trace.attention.is_empty() {
        return Err(Error::InvalidArgument(
            "trace has no attention maps (not produced by the attention network)".into(),
        ));
    }
    Ok(trace
        .attention
        .iter()
        .map(|a| {
            (0..a.steps())
                .map(|t| a.row(t).iter().sum::<f64>() / a.channels() as f64)
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: ModelKind) -> AgnetConfig {
        let mut c = AgnetConfig::new(kind, 5, 3, 4);
        c.hidden = 8;
        c.beta = 0.5;
        c
    }

    fn random_input(rng: &mut ChaCha8Rng, t: usize, c: usize) -> TimeMatrix {
        TimeMatrix::new(t, c, (0..t * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = ModelState::init(small(ModelKind::Agnet), 9).unwrap();
        let b = ModelState::init(small(ModelKind::Agnet), 9).unwrap();
        assert_eq!(a, b);
        assert!(a.kernels().iter().all(|k| k.bias.iter().all(|&v| v == 0.0)));
        let c = ModelState::init(small(ModelKind::Agnet), 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_weights_are_centred_and_bounded() {
        let mut cfg = small(ModelKind::Sdtcn);
        cfg.hidden = 64;
        let s = ModelState::init(cfg, 1).unwrap();
        for k in s.kernels() {
            let bound = 1.0 / ((k.in_channels() * k.kernel_size()) as f64).sqrt();
            assert!(k.weights.iter().all(|w| w.abs() <= bound));
        }
        // Block kernels: 64*64*3 draws from U(-b, b), sigma of the mean = b / sqrt(3n).
        let k = &s.kernels()[1];
        let n = k.weights.len() as f64;
        assert!(n >= 1e4);
        let bound = 1.0 / (64.0f64 * 3.0).sqrt();
        let mean = k.weights.iter().sum::<f64>() / n;
        assert!(mean.abs() < 3.0 * bound / (3.0 * n).sqrt());
    }

    #[test]
    fn parameter_count_follows_config() {
        let cfg = small(ModelKind::Agnet);
        let s = ModelState::init(cfg.clone(), 0).unwrap();
        let expected: usize = kernel_shapes(&cfg).iter().map(|(o, c, k, _)| o * c * k + o).sum();
        assert_eq!(s.parameter_count(), expected);
        // 8x5+8, 4x3+4, 5 blocks x (8x8x3+8, 4x4x3+4, 8x4+8), 4x8+4
        assert_eq!(expected, 48 + 16 + 5 * (200 + 52 + 40) + 36);
    }

    #[test]
    fn output_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = ModelState::init(small(ModelKind::Agnet), 0).unwrap();
        for t in [1, 2, 7, 40] {
            let tr = s
                .forward_agnet(&random_input(&mut rng, t, 5), &random_input(&mut rng, t, 3))
                .unwrap();
            assert_eq!(tr.probs.shape(), (t, 4));
            assert_eq!(tr.attention.len(), 5);
            assert_eq!(tr.main_features.len(), 6);
            assert_eq!(tr.attention_features.len(), 6);
            assert!(tr.attention.iter().all(|a| a.shape() == (t, 8)));
            assert!(tr.attention_features.iter().all(|a| a.shape() == (t, 4)));
        }
    }

    #[test]
    fn zero_gate_weights_give_half_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = ModelState::init(small(ModelKind::Agnet), 0).unwrap();
        for i in 0..5 {
            let g = s.gate(i);
            s.kernels_mut()[g].weights.fill(0.0);
        }
        let xm = random_input(&mut rng, 12, 5);
        let xa = random_input(&mut rng, 12, 3);
        let tr = s.forward_agnet(&xm, &xa).unwrap();
        assert!(tr.attention.iter().all(|a| a.as_slice().iter().all(|&v| v == 0.5)));
        let halved = s.forward_with_constant_attention(&xm, &xa, 0.5).unwrap();
        assert_eq!(tr.probs, halved.probs);
        assert_eq!(export_attention(&tr).unwrap(), vec![vec![0.5; 12]; 5]);
    }

    #[test]
    fn stream_mismatches_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = ModelState::init(small(ModelKind::Agnet), 0).unwrap();
        let xm = random_input(&mut rng, 10, 5);
        assert!(s.forward_agnet(&xm, &random_input(&mut rng, 9, 3)).is_err());
        assert!(s.forward_agnet(&xm, &random_input(&mut rng, 10, 2)).is_err());
        assert!(s.forward_agnet(&random_input(&mut rng, 10, 4), &random_input(&mut rng, 10, 3)).is_err());
        let sd = ModelState::init(small(ModelKind::Sdtcn), 0).unwrap();
        assert!(sd.forward_agnet(&xm, &random_input(&mut rng, 10, 3)).is_err());
    }

    #[test]
    fn unity_masks_reproduce_sdtcn_bit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = ModelState::init(small(ModelKind::Agnet), 3).unwrap();
        let xm = random_input(&mut rng, 30, 5);
        let xa = random_input(&mut rng, 30, 3);
        let masked = s.forward_with_constant_attention(&xm, &xa, 1.0).unwrap();
        let plain = s.forward_sdtcn(&xm).unwrap();
        assert_eq!(masked.probs, plain.probs);
        assert_eq!(masked.main_features, plain.main_features);
        assert!(plain.attention.is_empty());
        assert!(export_attention(&plain).is_err());
    }

    #[test]
    fn bottleneck_is_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = ModelState::init(small(ModelKind::Bottleneck), 1).unwrap();
        let x = random_input(&mut rng, 10, 5);
        let p = s.forward_bottleneck(&x, false, &mut rng).unwrap();
        let mut x2 = x.clone();
        x2.set(4, 2, 9.0);
        let p2 = s.forward_bottleneck(&x2, false, &mut rng).unwrap();
        for t in 0..10 {
            assert_eq!(p.row(t) == p2.row(t), t != 4);
        }
        let mut zero = s.clone();
        zero.kernels_mut()[0].weights.fill(0.0);
        let pz = zero.forward_bottleneck(&x, false, &mut rng).unwrap();
        assert!(pz.as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn fusion_properties() {
        let p = TimeMatrix::from_rows(&[[0.2, 0.9], [0.4, 0.1]]).unwrap();
        assert_eq!(fuse_predictions(&p, &p).unwrap(), p);
        let a = TimeMatrix::column(&[0.2]);
        let b = TimeMatrix::column(&[0.8]);
        assert_eq!(fuse_predictions(&a, &b).unwrap().as_slice(), &[0.5]);
        assert_eq!(fuse_predictions(&a, &b).unwrap(), fuse_predictions(&b, &a).unwrap());
        assert!(fuse_predictions(&a, &p).is_err());
    }

    #[test]
    fn export_channel_means() {
        let a = TimeMatrix::from_rows(&[[0.2, 0.4], [0.6, 0.8]]).unwrap();
        let trace = ForwardTrace {
            attention_features: vec![],
            main_features: vec![],
            attention: vec![a],
            logits: TimeMatrix::zeros(2, 1),
            probs: TimeMatrix::zeros(2, 1),
        };
        let out = export_attention(&trace).unwrap();
        assert!((out[0][0] - 0.3).abs() < 1e-15 && (out[0][1] - 0.7).abs() < 1e-15);
    }
}
