//! DDPM training loop: epsilon-matching MSE over all pixels (the pattern
//! region included, since keys must be learned), Adam, stateless per-step
//! RNG so interrupted runs resume exactly.

use super::condition::embed_caption;
use super::nn::Adam;
use super::unet::{CondMode, SmallUnet, UnetGrads};
use super::{forward_noise, gaussian, make_linear_schedule, Denoiser, NoiseSchedule};
use crate::error::{Error, Result};
use crate::imgdata::CaptionedDataset;
use crate::rng;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub seed: u64,
    pub timesteps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub conditional: bool,
    pub base_channels: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 16,
            learning_rate: 2e-3,
            seed: 0,
            timesteps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
            conditional: true,
            base_channels: 12,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.base_channels == 0 {
            return Err(Error::Config(
                "epochs, batch size and base channels must be positive".into(),
            ));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        make_linear_schedule(self.timesteps, self.beta_start, self.beta_end).map(|_| ())
    }

    pub fn steps_for(&self, dataset_len: usize) -> usize {
        self.epochs * dataset_len.div_ceil(self.batch_size)
    }
}

/// A trained model plus everything needed to continue training it.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: SmallUnet,
    pub schedule: NoiseSchedule,
    pub config: TrainConfig,
    pub completed_steps: usize,
    pub adam: Adam,
    pub loss_trace: Vec<f32>,
}

/// Structured run report written next to checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config: TrainConfig,
    pub completed_steps: usize,
    pub final_loss: Option<f32>,
    pub loss_trace: Vec<f32>,
}

fn batch_items(
    dataset: &CaptionedDataset,
    conditional: bool,
) -> Result<Vec<(Vec<f32>, Option<Vec<f32>>)>> {
    let first = &dataset.items[0].image;
    let mut out = Vec::with_capacity(dataset.len());
    for item in &dataset.items {
        if !item.image.same_dims(first) {
            return Err(Error::Dimension(format!(
                "item {} is {}x{}, dataset is {}x{}",
                item.id, item.image.height, item.image.width, first.height, first.width
            )));
        }
        let cond = if conditional {
            Some(embed_caption(&item.caption)?)
        } else {
            None
        };
        out.push((item.image.pixels.clone(), cond));
    }
    Ok(out)
}

/// Train a fresh model on a pattern-augmented dataset.
pub fn train(dataset: &CaptionedDataset, config: &TrainConfig) -> Result<Checkpoint> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }
    let img = &dataset.items[0].image;
    let mode = if config.conditional {
        CondMode::Conditional {
            dim: super::condition::COND_DIM,
        }
    } else {
        CondMode::Unconditional
    };
    let model = SmallUnet::new(
        img.channels,
        img.height,
        img.width,
        config.base_channels,
        mode,
        rng::sub_seed(config.seed, &["init"]),
    )?;
    let adam = Adam::new(config.learning_rate, model.param_count());
    let schedule = make_linear_schedule(config.timesteps, config.beta_start, config.beta_end)?;
    let mut checkpoint = Checkpoint {
        model,
        schedule,
        config: config.clone(),
        completed_steps: 0,
        adam,
        loss_trace: Vec::new(),
    };
    resume(&mut checkpoint, dataset)?;
    Ok(checkpoint)
}

/// Continue training a checkpoint until the configured step count. Each step
/// derives its RNG from `(seed, step)`, so a resumed run is bit-identical to
/// an uninterrupted one.
pub fn resume(checkpoint: &mut Checkpoint, dataset: &CaptionedDataset) -> Result<()> {
    let config = checkpoint.config.clone();
    let items = batch_items(dataset, config.conditional)?;
    let total_steps = config.steps_for(items.len());
    let img_len = checkpoint.model.pixel_count();
    if items[0].0.len() != img_len {
        return Err(Error::Dimension(format!(
            "dataset images have {} entries, model expects {img_len}",
            items[0].0.len()
        )));
    }

    while checkpoint.completed_steps < total_steps {
        let step = checkpoint.completed_steps;
        let mut step_rng = rng::stream(config.seed, &["train-step", &step.to_string()]);
        let batch: Vec<(usize, usize, Vec<f32>)> = (0..config.batch_size)
            .map(|_| {
                let idx = step_rng.gen_range(0..items.len());
                let t = step_rng.gen_range(1..=config.timesteps);
                let eps = gaussian(&mut step_rng, img_len);
                (idx, t, eps)
            })
            .collect();

        // Per-sample forward/backward in parallel; reduce in batch order so
        // gradients are deterministic regardless of worker count.
        let results: Vec<(f64, UnetGrads)> = batch
            .par_iter()
            .map(|(idx, t, eps)| {
                let (x0, cond) = &items[*idx];
                let x_t = forward_noise(x0, *t, eps, &checkpoint.schedule)
                    .expect("dims checked above");
                let (out, cache) = checkpoint.model.forward_full(
                    &x_t,
                    cond.as_deref().filter(|_| config.conditional),
                    *t,
                    true,
                );
                let norm = 1.0 / img_len as f32;
                let mut loss = 0.0f64;
                let d_out: Vec<f32> = out
                    .iter()
                    .zip(eps)
                    .map(|(o, e)| {
                        let diff = o - e;
                        loss += (diff as f64) * (diff as f64);
                        2.0 * diff * norm
                    })
                    .collect();
                let mut grads = UnetGrads::zeros_like(&checkpoint.model);
                checkpoint
                    .model
                    .backward(&cache.expect("cache requested"), &d_out, &mut grads);
                (loss / img_len as f64, grads)
            })
            .collect();

        let mut total = UnetGrads::zeros_like(&checkpoint.model);
        let mut loss_sum = 0.0f64;
        for (loss, grads) in &results {
            loss_sum += loss;
            total.add(grads);
        }
        total.scale(1.0 / config.batch_size as f32);
        let mean_loss = (loss_sum / config.batch_size as f64) as f32;
        if !mean_loss.is_finite() {
            return Err(Error::Training {
                step,
                message: format!("non-finite loss {mean_loss}"),
            });
        }

        let mut params = checkpoint.model.to_flat();
        checkpoint.adam.update(&mut params, &total.to_flat());
        checkpoint.model.apply_flat(&params)?;
        checkpoint.loss_trace.push(mean_loss);
        checkpoint.completed_steps += 1;
    }
    Ok(())
}

impl Checkpoint {
    pub fn report(&self) -> RunReport {
        RunReport {
            config: self.config.clone(),
            completed_steps: self.completed_steps,
            final_loss: self.loss_trace.last().copied(),
            loss_trace: self.loss_trace.clone(),
        }
    }
}

const MAGIC: &[u8; 4] = b"SMCK";
const VERSION: u32 = 1;

/// Versioned binary checkpoint: dims, mode, schedule, optimizer state, loss
/// trace and parameters, all little-endian.
pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);

    w.write_all(MAGIC).map_err(io_err)?;
    w.write_u32::<LittleEndian>(VERSION).map_err(io_err)?;
    let m = &checkpoint.model;
    w.write_u8(matches!(m.mode, CondMode::Conditional { .. }) as u8)
        .map_err(io_err)?;
    for dim in [m.channels, m.height, m.width, m.base, m.cond_dim()] {
        w.write_u32::<LittleEndian>(dim as u32).map_err(io_err)?;
    }
    let c = &checkpoint.config;
    w.write_u32::<LittleEndian>(c.epochs as u32).map_err(io_err)?;
    w.write_u32::<LittleEndian>(c.batch_size as u32).map_err(io_err)?;
    w.write_f32::<LittleEndian>(c.learning_rate).map_err(io_err)?;
    w.write_u64::<LittleEndian>(c.seed).map_err(io_err)?;
    w.write_u32::<LittleEndian>(c.timesteps as u32).map_err(io_err)?;
    w.write_f64::<LittleEndian>(c.beta_start).map_err(io_err)?;
    w.write_f64::<LittleEndian>(c.beta_end).map_err(io_err)?;
    w.write_u32::<LittleEndian>(c.base_channels as u32).map_err(io_err)?;
    w.write_u64::<LittleEndian>(checkpoint.completed_steps as u64)
        .map_err(io_err)?;

    let params = m.to_flat();
    w.write_u64::<LittleEndian>(params.len() as u64).map_err(io_err)?;
    for v in &params {
        w.write_f32::<LittleEndian>(*v).map_err(io_err)?;
    }
    w.write_u64::<LittleEndian>(checkpoint.adam.step).map_err(io_err)?;
    for buf in [&checkpoint.adam.m, &checkpoint.adam.v] {
        for v in buf {
            w.write_f32::<LittleEndian>(*v).map_err(io_err)?;
        }
    }
    w.write_u64::<LittleEndian>(checkpoint.loss_trace.len() as u64)
        .map_err(io_err)?;
    for v in &checkpoint.loss_trace {
        w.write_f32::<LittleEndian>(*v).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);
    let parse = |message: &str| Error::Parse {
        path: path.display().to_string(),
        record: 0,
        message: message.to_string(),
    };

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(parse("not a checkpoint file"));
    }
    let version = r.read_u32::<LittleEndian>().map_err(io_err)?;
    if version != VERSION {
        return Err(parse(&format!("unsupported checkpoint version {version}")));
    }
    let conditional = r.read_u8().map_err(io_err)? != 0;
    let channels = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let height = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let width = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let base = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let cond_dim = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;

    let config = TrainConfig {
        epochs: r.read_u32::<LittleEndian>().map_err(io_err)? as usize,
        batch_size: r.read_u32::<LittleEndian>().map_err(io_err)? as usize,
        learning_rate: r.read_f32::<LittleEndian>().map_err(io_err)?,
        seed: r.read_u64::<LittleEndian>().map_err(io_err)?,
        timesteps: r.read_u32::<LittleEndian>().map_err(io_err)? as usize,
        beta_start: r.read_f64::<LittleEndian>().map_err(io_err)?,
        beta_end: r.read_f64::<LittleEndian>().map_err(io_err)?,
        conditional,
        base_channels: r.read_u32::<LittleEndian>().map_err(io_err)? as usize,
    };
    let completed_steps = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;

    let mode = if conditional {
        CondMode::Conditional { dim: cond_dim }
    } else {
        CondMode::Unconditional
    };
    let mut model = SmallUnet::new(
        channels,
        height,
        width,
        base,
        mode,
        rng::sub_seed(config.seed, &["init"]),
    )?;
    let param_len = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
    if param_len != model.param_count() {
        return Err(parse(&format!(
            "checkpoint has {param_len} parameters, model expects {}",
            model.param_count()
        )));
    }
    let mut params = vec![0.0f32; param_len];
    for v in &mut params {
        *v = r.read_f32::<LittleEndian>().map_err(io_err)?;
    }
    model.apply_flat(&params)?;

    let mut adam = Adam::new(config.learning_rate, param_len);
    adam.step = r.read_u64::<LittleEndian>().map_err(io_err)?;
    for buf in [&mut adam.m, &mut adam.v] {
        for v in buf.iter_mut() {
            *v = r.read_f32::<LittleEndian>().map_err(io_err)?;
        }
    }
    let trace_len = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
    let mut loss_trace = vec![0.0f32; trace_len];
    for v in &mut loss_trace {
        *v = r.read_f32::<LittleEndian>().map_err(io_err)?;
    }

    let schedule = make_linear_schedule(config.timesteps, config.beta_start, config.beta_end)?;
    Ok(Checkpoint {
        model,
        schedule,
        config,
        completed_steps,
        adam,
        loss_trace,
    })
}
