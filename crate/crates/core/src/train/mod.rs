//! Multi-label BCE objective, Adam, plateau scheduling and the epoch loop.

mod adam;
mod loss;
mod plateau;

pub use adam::AdamState;
pub use loss::bce_multilabel;
pub use plateau::PlateauSchedule;

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Gating, ModelKind, ModelState};
use crate::tape::GradTape;
use crate::tensor::{KernelGrad, TimeMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Videos per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// One training video: main-stream features, optional attention-stream
/// features, and the binary target matrix, all on the same timeline.
#[derive(Debug, Clone)]
pub struct VideoSample {
    pub id: String,
    pub main: TimeMatrix,
    pub attention: Option<TimeMatrix>,
    pub labels: TimeMatrix,
}

impl VideoSample {
    pub fn new(
        id: impl Into<String>,
        main: TimeMatrix,
        attention: Option<TimeMatrix>,
        labels: TimeMatrix,
    ) -> Result<Self> {
        let id = id.into();
        if main.steps() == 0 {
            return Err(Error::InvalidArgument(format!("video {id}: no time steps")));
        }
        if labels.steps() != main.steps() {
            return Err(Error::InvalidArgument(format!(
                "video {id}: {} feature steps but {} label steps",
                main.steps(),
                labels.steps()
            )));
        }
        if let Some(a) = &attention {
            if a.steps() != main.steps() {
                return Err(Error::InvalidArgument(format!(
                    "video {id}: attention stream has {} steps, main stream {}",
                    a.steps(),
                    main.steps()
                )));
            }
        }
        if labels.as_slice().iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::InvalidArgument(format!("video {id}: labels must be binary")));
        }
        Ok(Self {
            id,
            main,
            attention,
            labels,
        })
    }
}

/// Loss of one video and the gradient of that loss for every kernel of `model`.
pub fn video_gradients<R: Rng + ?Sized>(
    model: &ModelState,
    sample: &VideoSample,
    training: bool,
    rng: &mut R,
) -> Result<(f64, Vec<KernelGrad>)> {
    let mut tape = GradTape::new();
    let logits = match model.kind() {
        ModelKind::Bottleneck => model.record_bottleneck(&mut tape, &sample.main, training, rng)?,
        ModelKind::Sdtcn => model.record_temporal(&mut tape, &sample.main, Gating::Ungated)?.logits,
        ModelKind::Agnet => {
            let att = sample.attention.as_ref().ok_or_else(|| {
                Error::InvalidArgument(format!("video {}: missing attention stream", sample.id))
            })?;
            model
                .record_temporal(&mut tape, &sample.main, Gating::Attention(att))?
                .logits
        }
    };
    let (loss, seed) = bce_multilabel(tape.value(logits), &sample.labels)?;
    let grads = tape.backward(logits, &seed)?.into_params();
    let per_kernel = model
        .kernels()
        .iter()
        .enumerate()
        .map(|(i, k)| {
            grads
                .get(i)
                .cloned()
                .flatten()
                .unwrap_or_else(|| KernelGrad::zeros_like(k))
        })
        .collect();
    Ok((loss, per_kernel))
}

/// Inference-mode loss of one video.
pub fn video_loss(model: &ModelState, sample: &VideoSample) -> Result<f64> {
    let probs_logits = match model.kind() {
        ModelKind::Agnet => {
            let att = sample.attention.as_ref().ok_or_else(|| {
                Error::InvalidArgument(format!("video {}: missing attention stream", sample.id))
            })?;
            model.forward_agnet(&sample.main, att)?.logits
        }
        ModelKind::Sdtcn => model.forward_sdtcn(&sample.main)?.logits,
        ModelKind::Bottleneck => {
            let mut tape = GradTape::new();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let z = model.record_bottleneck(&mut tape, &sample.main, false, &mut rng)?;
            tape.value(z).clone()
        }
    };
    Ok(bce_multilabel(&probs_logits, &sample.labels)?.0)
}

fn mean_loss(model: &ModelState, samples: &[VideoSample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        total += video_loss(model, s)?;
    }
    Ok(total / samples.len() as f64)
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    /// 1-based epoch index.
    pub epoch: usize,
    /// Learning rate in effect during the epoch.
    pub lr: f64,
    /// Mean per-video loss over the epoch's training passes.
    pub train_loss: f64,
    pub heldout_loss: Option<f64>,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}\t", self.epoch, self.lr, self.train_loss)?;
        match self.heldout_loss {
            Some(l) => write!(f, "{l}"),
            None => f.write_str("-"),
        }
    }
}

/// Returned by the per-epoch callback of [`fit_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelState,
    pub log: Vec<EpochLog>,
}

pub fn fit(
    model: ModelState,
    train: &[VideoSample],
    heldout: Option<&[VideoSample]>,
    config: &TrainConfig,
    adam: &mut AdamState,
    schedule: &mut PlateauSchedule,
) -> Result<TrainOutcome> {
    fit_with(model, train, heldout, config, adam, schedule, |_, _| Control::Continue)
}

/// Epoch loop: shuffle (seeded), split into mini-batches, sum per-video gradients
/// over each batch, take one Adam step per batch. After every epoch the
/// scheduler sees the held-out loss when `heldout` is given, else the training loss.
pub fn fit_with(
    mut model: ModelState,
    train: &[VideoSample],
    heldout: Option<&[VideoSample]>,
    config: &TrainConfig,
    adam: &mut AdamState,
    schedule: &mut PlateauSchedule,
    mut on_epoch: impl FnMut(&ModelState, &EpochLog) -> Control,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if model.kind().uses_attention() {
        if let Some(s) = train
            .iter()
            .chain(heldout.unwrap_or_default())
            .find(|s| s.attention.is_none())
        {
            return Err(Error::InvalidArgument(format!(
                "video {}: agnet training needs the attention stream",
                s.id
            )));
        }
    }
    if let Some(h) = heldout {
        if h.is_empty() {
            return Err(Error::InvalidArgument("held-out set is empty".into()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        adam.lr = schedule.lr;
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut summed: Option<Vec<KernelGrad>> = None;
            for &i in batch {
                let (loss, grads) = video_gradients(&model, &train[i], true, &mut rng)?;
                epoch_loss += loss;
                match &mut summed {
                    Some(acc) => acc.iter_mut().zip(&grads).for_each(|(a, g)| a.add_assign(g)),
                    None => summed = Some(grads),
                }
            }
            let summed = summed.expect("chunks are non-empty");
            let flat: Vec<&[f64]> = summed
                .iter()
                .flat_map(|g| [g.weights.as_slice(), g.bias.as_slice()])
                .collect();
            adam.step(&mut model.parameter_slices_mut(), &flat)?;
        }

        let train_loss = epoch_loss / train.len() as f64;
        let heldout_loss = heldout.map(|h| mean_loss(&model, h)).transpose()?;
        let entry = EpochLog {
            epoch,
            lr: adam.lr,
            train_loss,
            heldout_loss,
        };
        schedule.update(heldout_loss.unwrap_or(train_loss))?;
        let control = on_epoch(&model, &entry);
        log.push(entry);
        if control == Control::Stop {
            break;
        }
    }
    Ok(TrainOutcome { model, log })
}
