//! Sample pairs, manifest loading, and the synthetic dataset generator used
//! by all offline runs.

use std::path::{Path, PathBuf};

use dagf_core::image::{Image, ValueRange};
use dagf_core::rng::{streams, SeedRng};
use dagf_core::Image32;

use crate::degrade::{degrade, DegradeMode};
use crate::error::{HarnessError, Result};
use crate::io::load_png;

/// Degradation description attached to a pair.
#[derive(Debug, Clone)]
pub struct PairMeta {
    pub scale: usize,
    pub mode: DegradeMode,
    pub noise_sigma: f64,
    pub source_id: String,
}

/// One guidance / ground-truth / degraded-target triple.
#[derive(Debug, Clone)]
pub struct SamplePair {
    /// 3-channel high-resolution guidance.
    pub guidance: Image32,
    /// High-resolution ground-truth target.
    pub target_gt: Image32,
    /// Degraded target at gt dims / scale.
    pub target_degraded: Image32,
    pub meta: PairMeta,
}

impl SamplePair {
    pub fn validate(&self) -> Result<()> {
        if self.guidance.height != self.target_gt.height
            || self.guidance.width != self.target_gt.width
        {
            return Err(HarnessError::Manifest(format!(
                "{}: guidance {}x{} vs target {}x{}",
                self.meta.source_id,
                self.guidance.height,
                self.guidance.width,
                self.target_gt.height,
                self.target_gt.width
            )));
        }
        let s = self.meta.scale;
        if self.target_degraded.height * s != self.target_gt.height
            || self.target_degraded.width * s != self.target_gt.width
        {
            return Err(HarnessError::Manifest(format!(
                "{}: degraded target is not gt/{s}",
                self.meta.source_id
            )));
        }
        Ok(())
    }
}

/// One manifest line: tab-separated guidance and target paths (relative
/// paths resolve against the manifest's directory).
#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub guidance: PathBuf,
    pub target: PathBuf,
}

pub fn parse_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Manifest(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let (g, t) = match (fields.next(), fields.next()) {
            (Some(g), Some(t)) if !g.is_empty() && !t.is_empty() => (g, t),
            _ => {
                return Err(HarnessError::Manifest(format!(
                    "{}:{}: expected two tab-separated paths",
                    path.display(),
                    lineno + 1
                )))
            }
        };
        let resolve = |p: &str| {
            let pb = PathBuf::from(p);
            if pb.is_absolute() {
                pb
            } else {
                base.join(pb)
            }
        };
        entries.push(ManifestEntry { guidance: resolve(g), target: resolve(t) });
    }
    if entries.is_empty() {
        return Err(HarnessError::Manifest(format!("{}: no entries", path.display())));
    }
    Ok(entries)
}

/// Load every pair in a manifest and synthesize the degraded targets.
/// Missing files are collected exhaustively before aborting.
pub fn load_manifest(
    path: &Path,
    scale: usize,
    mode: DegradeMode,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<SamplePair>> {
    let entries = parse_manifest(path)?;
    let missing: Vec<PathBuf> = entries
        .iter()
        .flat_map(|e| [e.guidance.clone(), e.target.clone()])
        .filter(|p| !p.exists())
        .collect();
    if !missing.is_empty() {
        return Err(HarnessError::MissingFiles(missing));
    }
    let mut rng = SeedRng::new(seed, streams::NOISE);
    let mut pairs = Vec::with_capacity(entries.len());
    for entry in entries {
        let guidance = crate::degrade::guidance_expand(&load_png(&entry.guidance)?)?;
        let target_gt = load_png(&entry.target)?;
        let target_degraded = degrade(&target_gt, scale, mode, noise_sigma, &mut rng)?;
        let pair = SamplePair {
            guidance,
            target_gt,
            target_degraded,
            meta: PairMeta {
                scale,
                mode,
                noise_sigma,
                source_id: entry.target.display().to_string(),
            },
        };
        pair.validate()?;
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Write a manifest for (guidance, target) file pairs.
pub fn write_manifest(path: &Path, entries: &[(PathBuf, PathBuf)]) -> Result<()> {
    let mut text = String::new();
    for (g, t) in entries {
        text.push_str(&format!("{}\t{}\n", g.display(), t.display()));
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Options for the synthetic scene generator.
#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub count: usize,
    pub size: usize,
    pub scale: usize,
    pub mode: DegradeMode,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            count: 8,
            size: 64,
            scale: 16,
            mode: DegradeMode::Nearest,
            noise_sigma: 0.0,
            seed: 7,
        }
    }
}

/// Piecewise-constant "depth" scenes made of random rectangles, with an RGB
/// rendering whose region edges align with the depth edges plus extra
/// texture stripes that exist only in the guidance (the texture-copying
/// trap the attention mechanism is meant to handle).
pub fn generate_synthetic_pairs(opts: &SynthOptions) -> Result<Vec<SamplePair>> {
    if opts.size % opts.scale != 0 {
        return Err(HarnessError::InvalidParameter(format!(
            "synthetic size {} must be divisible by scale {}",
            opts.size, opts.scale
        )));
    }
    let mut rng = SeedRng::new(opts.seed, streams::SYNTH);
    let mut noise_rng = SeedRng::new(opts.seed, streams::NOISE);
    let mut pairs = Vec::with_capacity(opts.count);
    for idx in 0..opts.count {
        let (depth, color) = synth_scene(opts.size, &mut rng);
        let degraded = degrade(&depth, opts.scale, opts.mode, opts.noise_sigma, &mut noise_rng)?;
        let pair = SamplePair {
            guidance: color,
            target_gt: depth,
            target_degraded: degraded,
            meta: PairMeta {
                scale: opts.scale,
                mode: opts.mode,
                noise_sigma: opts.noise_sigma,
                source_id: format!("synthetic-{idx}"),
            },
        };
        pair.validate()?;
        pairs.push(pair);
    }
    Ok(pairs)
}

fn synth_scene(size: usize, rng: &mut SeedRng) -> (Image32, Image32) {
    let mut depth = Image::from_vec(
        size,
        size,
        1,
        ValueRange::Unit,
        vec![rng.uniform_in::<f32>(0.35, 0.65); size * size],
    )
    .expect("constant plane");
    let mut color = Image32::new(size, size, 3, ValueRange::Unit);
    let base_rgb = [rng.uniform::<f32>(), rng.uniform::<f32>(), rng.uniform::<f32>()];
    for y in 0..size {
        for x in 0..size {
            for c in 0..3 {
                color.set(y, x, c, 0.25 + 0.5 * base_rgb[c]);
            }
        }
    }

    // Foreground rectangles: aligned depth and color edges.
    let rects = 4 + rng.below(4);
    for _ in 0..rects {
        let h = size / 4 + rng.below(size / 2);
        let w = size / 4 + rng.below(size / 2);
        let y0 = rng.below(size - h);
        let x0 = rng.below(size - w);
        let d = rng.uniform_in::<f32>(0.1, 0.9);
        let rgb = [rng.uniform::<f32>(), rng.uniform::<f32>(), rng.uniform::<f32>()];
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                depth.set(y, x, 0, d);
                for c in 0..3 {
                    color.set(y, x, c, 0.1 + 0.8 * rgb[c]);
                }
            }
        }
    }

    // Texture stripes on the guidance only: edges with no depth counterpart.
    let stripes = 1 + rng.below(2);
    for _ in 0..stripes {
        let h = size / 4 + rng.below(size / 3);
        let w = size / 4 + rng.below(size / 3);
        let y0 = rng.below(size - h);
        let x0 = rng.below(size - w);
        let period = 2 + rng.below(4);
        let amp = rng.uniform_in::<f32>(0.1, 0.25);
        let horizontal = rng.coin();
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                let phase = if horizontal { y } else { x };
                let sign = if (phase / period) % 2 == 0 { 1.0 } else { -1.0 };
                for c in 0..3 {
                    let v = (color.get(y, x, c) + sign * amp).clamp(0.0, 1.0);
                    color.set(y, x, c, v);
                }
            }
        }
    }
    (depth, color)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::save_png;

    #[test]
    fn synthetic_pairs_are_valid_and_reproducible() {
        let opts = SynthOptions { count: 3, size: 32, scale: 4, ..SynthOptions::default() };
        let a = generate_synthetic_pairs(&opts).unwrap();
        let b = generate_synthetic_pairs(&opts).unwrap();
        assert_eq!(a.len(), 3);
        for (pa, pb) in a.iter().zip(&b) {
            pa.validate().unwrap();
            assert_eq!(pa.target_gt.data, pb.target_gt.data);
            assert_eq!(pa.guidance.data, pb.guidance.data);
        }
        // Depth edges exist (piecewise-constant, not globally constant).
        let (lo, hi) = a[0].target_gt.min_max();
        assert!(hi - lo > 0.05);
    }

    #[test]
    fn manifest_round_trip_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let opts = SynthOptions { count: 2, size: 16, scale: 4, ..SynthOptions::default() };
        let pairs = generate_synthetic_pairs(&opts).unwrap();
        let mut entries = Vec::new();
        for (i, p) in pairs.iter().enumerate() {
            let g = dir.path().join(format!("g{i}.png"));
            let t = dir.path().join(format!("t{i}.png"));
            save_png(&p.guidance, &g).unwrap();
            save_png(&p.target_gt, &t).unwrap();
            entries.push((g, t));
        }
        let manifest = dir.path().join("pairs.tsv");
        write_manifest(&manifest, &entries).unwrap();
        let loaded = load_manifest(&manifest, 4, DegradeMode::Nearest, 0.0, 1).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].guidance.channels, 3);
        assert_eq!(loaded[0].target_degraded.height, 4);

        // Missing files are listed exhaustively.
        let mut bad_entries = entries.clone();
        bad_entries.push((dir.path().join("nope-g.png"), dir.path().join("nope-t.png")));
        let bad_manifest = dir.path().join("bad.tsv");
        write_manifest(&bad_manifest, &bad_entries).unwrap();
        match load_manifest(&bad_manifest, 4, DegradeMode::Nearest, 0.0, 1) {
            Err(HarnessError::MissingFiles(files)) => assert_eq!(files.len(), 2),
            other => panic!("expected MissingFiles, got {:?}", other.is_ok()),
        }
    }

    #[test]
    fn malformed_manifest_lines_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tsv");
        std::fs::write(&path, "only-one-field\n").unwrap();
        assert!(matches!(parse_manifest(&path), Err(HarnessError::Manifest(_))));
    }
}
