//! The training loop: augment -> crop -> degrade -> forward -> total loss
//! -> backward -> Adam, with an epoch-level loss history and strict
//! reproducibility from the run seed.

use std::path::Path;

use dagf_core::graph::Graph;
use dagf_core::loss::{total_loss, LossWeights};
use dagf_core::network::{forward, init_params, DagfConfig};
use dagf_core::optim::{adam_step, OptimizerState};
use dagf_core::params::ParamStore;
use dagf_core::rng::{streams, SeedRng};
use dagf_core::Image32;

use crate::augment::{augment, crop_patches};
use crate::dataset::SamplePair;
use crate::degrade::{degrade, upsample_input};
use crate::error::{HarnessError, Result};
use crate::model::images_to_batch;

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    /// High-resolution patch size; patches larger than the image fall back
    /// to the full image.
    pub patch_size: usize,
    pub learning_rate: f64,
    /// The learning rate halves every this many epochs.
    pub lr_halve_every: usize,
    pub seed: u64,
    /// Pins sequential, bit-reproducible execution. The trainer is always
    /// sequential; the flag additionally forbids any future worker pools.
    pub strict: bool,
    pub weights: LossWeights,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 100,
            batch_size: 32,
            patch_size: 256,
            learning_rate: 1e-4,
            lr_halve_every: 80,
            seed: 0,
            strict: true,
            weights: LossWeights::default(),
        }
    }
}

/// Learning rate at a given epoch under the halving schedule.
pub fn lr_at_epoch(base: f64, halve_every: usize, epoch: usize) -> f64 {
    base * 0.5f64.powi((epoch / halve_every.max(1)) as i32)
}

#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    pub l1: f64,
    pub boundary: f64,
    pub multi_stage: f64,
    pub omega3: f64,
    pub total: f64,
}

pub struct TrainResult {
    pub params: ParamStore<f32>,
    pub optimizer: OptimizerState<f32>,
    pub history: Vec<EpochStats>,
}

/// Zero the weights of loss terms the ablation variant does not train with
/// (only the full model uses all three).
fn variant_weights(cfg: &DagfConfig, base: &LossWeights) -> LossWeights {
    let mut w = *base;
    if !cfg.variant.uses_multi_stage_loss() {
        w.omega3 = 0.0;
    }
    if !cfg.variant.uses_boundary_loss() {
        w.omega2 = 0.0;
    }
    w
}

pub fn train(dataset: &[SamplePair], cfg: &DagfConfig, opts: &TrainOptions) -> Result<TrainResult> {
    let params = init_params::<f32>(cfg, opts.seed)?;
    let optimizer = OptimizerState::new(opts.learning_rate);
    train_from(params, optimizer, 0, dataset, cfg, opts)
}

/// Continue training from existing parameters and optimizer state (resume
/// keeps step counts and moment buffers).
pub fn train_from(
    mut params: ParamStore<f32>,
    mut optimizer: OptimizerState<f32>,
    start_epoch: usize,
    dataset: &[SamplePair],
    cfg: &DagfConfig,
    opts: &TrainOptions,
) -> Result<TrainResult> {
    if dataset.is_empty() {
        return Err(HarnessError::EmptyDataset);
    }
    cfg.validate()?;
    opts.weights.validate()?;
    if opts.batch_size == 0 {
        return Err(HarnessError::InvalidParameter("batch size must be >= 1".into()));
    }
    let weights = variant_weights(cfg, &opts.weights);

    let mut order_rng = SeedRng::new(opts.seed, streams::USER);
    let mut aug_rng = SeedRng::new(opts.seed, streams::AUGMENT);
    let mut crop_rng = SeedRng::new(opts.seed, streams::CROP);
    let mut noise_rng = SeedRng::new(opts.seed, streams::NOISE);

    let mut history = Vec::with_capacity(opts.epochs.saturating_sub(start_epoch));
    for epoch in start_epoch..opts.epochs {
        optimizer.learning_rate = lr_at_epoch(opts.learning_rate, opts.lr_halve_every, epoch);

        // Deterministic shuffle for the epoch.
        let mut indices: Vec<usize> = (0..dataset.len()).collect();
        for i in (1..indices.len()).rev() {
            indices.swap(i, order_rng.below(i + 1));
        }

        let mut sums = [0.0f64; 5];
        let mut batches = 0usize;
        for (iteration, chunk) in indices.chunks(opts.batch_size).enumerate() {
            let mut targets_up = Vec::with_capacity(chunk.len());
            let mut guides = Vec::with_capacity(chunk.len());
            let mut gts = Vec::with_capacity(chunk.len());
            for &idx in chunk {
                let pair = augment(&dataset[idx], &mut aug_rng);
                let pair = if opts.patch_size < pair.target_gt.height
                    || opts.patch_size < pair.target_gt.width
                {
                    crop_patches(&pair, opts.patch_size, &mut crop_rng)?
                } else {
                    pair
                };
                let meta = &pair.meta;
                let low = degrade(&pair.target_gt, meta.scale, meta.mode, meta.noise_sigma, &mut noise_rng)?;
                targets_up.push(upsample_input(&low, meta.scale));
                guides.push(pair.guidance.clone());
                gts.push(pair.target_gt.clone());
            }
            let t_batch = images_to_batch(&targets_up.iter().collect::<Vec<&Image32>>())?;
            let g_batch = images_to_batch(&guides.iter().collect::<Vec<&Image32>>())?;
            let gt_batch = images_to_batch(&gts.iter().collect::<Vec<&Image32>>())?;

            let mut graph = Graph::new();
            let bound = params.bind(&mut graph);
            let t = graph.constant(t_batch);
            let gv = graph.constant(g_batch);
            let pass = forward(&mut graph, &bound, cfg, t, gv)?;
            let gt = graph.constant(gt_batch);
            let (loss, breakdown) = total_loss(&mut graph, &pass.outputs, gt, &weights, epoch)?;
            if !breakdown.total.is_finite() {
                return Err(HarnessError::NonFiniteLoss { epoch, iteration, breakdown });
            }
            let grads = graph.backward(loss)?;
            let by_name = bound.collect_gradients(&params, &grads);
            drop(graph);
            adam_step(&mut params, &by_name, &mut optimizer)?;

            sums[0] += breakdown.l1;
            sums[1] += breakdown.boundary;
            sums[2] += breakdown.multi_stage;
            sums[3] += breakdown.omega3_effective;
            sums[4] += breakdown.total;
            batches += 1;
        }
        let n = batches as f64;
        history.push(EpochStats {
            epoch,
            learning_rate: optimizer.learning_rate,
            l1: sums[0] / n,
            boundary: sums[1] / n,
            multi_stage: sums[2] / n,
            omega3: sums[3] / n,
            total: sums[4] / n,
        });
    }
    Ok(TrainResult { params, optimizer, history })
}

/// Per-epoch loss breakdown as CSV: epoch, l1, ba, ms, omega3, total.
pub fn write_loss_csv(history: &[EpochStats], path: &Path) -> Result<()> {
    let mut text = String::from("epoch,lr,l1,ba,ms,omega3,total\n");
    for s in history {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.epoch, s.learning_rate, s.l1, s.boundary, s.multi_stage, s.omega3, s.total
        ));
    }
    std::fs::write(path, text)?;
    Ok(())
}
