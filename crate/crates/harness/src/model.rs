//! Image-level wrapper around the network: owns the parameters and config,
//! runs single images or channel-split multi-channel targets.

use std::path::Path;

use dagf_core::checkpoint::{load_checkpoint, save_checkpoint};
use dagf_core::graph::Graph;
use dagf_core::image::Image;
use dagf_core::network::{forward, init_params, DagfConfig};
use dagf_core::params::ParamStore;
use dagf_core::{Image32, TensorData};

use crate::degrade::guidance_expand;
use crate::error::{HarnessError, Result};

pub struct DagfModel {
    pub cfg: DagfConfig,
    pub params: ParamStore<f32>,
}

impl DagfModel {
    pub fn init(cfg: DagfConfig, seed: u64) -> Result<Self> {
        Ok(DagfModel { params: init_params(&cfg, seed)?, cfg })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (params, cfg) = load_checkpoint::<f32>(path)?;
        Ok(DagfModel { cfg, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(&self.params, &self.cfg, path)?;
        Ok(())
    }

    /// Run a single-channel target with its guidance (both at the same
    /// resolution) and return the final output image.
    pub fn run_single(&self, target: &Image32, guidance: &Image32) -> Result<Image32> {
        if target.channels != 1 {
            return Err(HarnessError::InvalidParameter(format!(
                "run_single expects a 1-channel target, got {}",
                target.channels
            )));
        }
        let guidance = guidance_expand(guidance)?;
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let t = g.constant(target.to_tensor());
        let gv = g.constant(guidance.to_tensor());
        let pass = forward(&mut g, &bound, &self.cfg, t, gv)?;
        let out = Image::from_tensor(g.value(pass.final_output()), target.range)?;
        Ok(out)
    }

    /// Multi-channel targets run channel by channel against the shared
    /// guidance and restack.
    pub fn per_channel_apply(&self, target: &Image32, guidance: &Image32) -> Result<Image32> {
        if target.channels == 1 {
            return self.run_single(target, guidance);
        }
        let mut planes = Vec::with_capacity(target.channels);
        for c in 0..target.channels {
            let out = self.run_single(&target.channel(c), guidance)?;
            planes.push(out.plane(0));
        }
        Ok(Image::from_planes(target.height, target.width, target.range, &planes)?)
    }

    /// Dump the per-stage kernel fields and attention maps of one forward
    /// pass into `dir` (raw float containers; kernels get a `.k` sidecar).
    pub fn dump_internals(&self, target: &Image32, guidance: &Image32, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let guidance = guidance_expand(guidance)?;
        let target = if target.channels == 1 { target.clone() } else { target.channel(0) };
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let t = g.constant(target.to_tensor());
        let gv = g.constant(guidance.to_tensor());
        let pass = forward(&mut g, &bound, &self.cfg, t, gv)?;
        for (stage, kf) in pass.kernels.iter().enumerate() {
            let field = dagf_core::kernel::KernelField::new(self.cfg.k, g.value(*kf).clone())?;
            field.dump(&dir.join(format!("stage{stage}_kernels.fimg")))?;
        }
        for (stage, attn) in pass.attention.iter().enumerate() {
            if let Some(a) = attn {
                let img = Image::from_tensor(g.value(*a), dagf_core::image::ValueRange::Unit)?;
                dagf_core::image::save_fimg(&img, &dir.join(format!("stage{stage}_attention.fimg")))?;
            }
        }
        Ok(())
    }
}

/// Stack same-shaped images into one (N, C, H, W) tensor.
pub fn images_to_batch(images: &[&Image32]) -> Result<TensorData<f32>> {
    let first = images
        .first()
        .ok_or_else(|| HarnessError::InvalidParameter("empty batch".into()))?;
    let dims = dagf_core::Dims::new(images.len(), first.channels, first.height, first.width);
    let mut data = Vec::with_capacity(dims.numel());
    for img in images {
        if !img.same_dims(first) {
            return Err(HarnessError::InvalidParameter("batch images differ in shape".into()));
        }
        data.extend_from_slice(&img.to_tensor().data);
    }
    Ok(TensorData::from_vec(dims, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dagf_core::image::ValueRange;
    use dagf_core::rng::{streams, SeedRng};

    fn toy_model() -> DagfModel {
        let cfg = DagfConfig { m: 2, k: 3, channels: 4, ..DagfConfig::default() };
        DagfModel::init(cfg, 5).unwrap()
    }

    fn random_image(h: usize, w: usize, c: usize, seed: u64) -> Image32 {
        let mut rng = SeedRng::new(seed, streams::TEST);
        let data = (0..h * w * c).map(|_| rng.uniform()).collect();
        Image32::from_vec(h, w, c, ValueRange::Unit, data).unwrap()
    }

    #[test]
    fn per_channel_apply_matches_single_runs() {
        let model = toy_model();
        let target = random_image(8, 8, 3, 1);
        let guidance = random_image(8, 8, 3, 2);
        let stacked = model.per_channel_apply(&target, &guidance).unwrap();
        for c in 0..3 {
            let single = model.run_single(&target.channel(c), &guidance).unwrap();
            assert_eq!(stacked.plane(c), single.plane(0), "channel {c}");
        }
    }

    #[test]
    fn single_channel_guidance_is_expanded() {
        let model = toy_model();
        let target = random_image(8, 8, 1, 3);
        let guidance = random_image(8, 8, 1, 4);
        let out = model.run_single(&target, &guidance).unwrap();
        assert_eq!((out.height, out.width, out.channels), (8, 8, 1));
    }

    #[test]
    fn checkpoint_round_trip_gives_identical_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let model = toy_model();
        model.save(&path).unwrap();
        let loaded = DagfModel::load(&path).unwrap();
        let target = random_image(8, 8, 1, 5);
        let guidance = random_image(8, 8, 3, 6);
        let a = model.run_single(&target, &guidance).unwrap();
        let b = loaded.run_single(&target, &guidance).unwrap();
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn batch_stacking_layout() {
        let a = random_image(2, 2, 1, 7);
        let b = random_image(2, 2, 1, 8);
        let batch = images_to_batch(&[&a, &b]).unwrap();
        assert_eq!(batch.dims, dagf_core::Dims::new(2, 1, 2, 2));
        assert_eq!(batch.get(0, 0, 1, 1), a.get(1, 1, 0));
        assert_eq!(batch.get(1, 0, 0, 1), b.get(0, 1, 0));
    }
}
