//! H x W x C raster images with value-range metadata, plus conversions to
//! and from NCHW tensors and the raw float container used for lossless
//! intermediates.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::resample::{resize_plane, ResizeMode};
use crate::scalar::Scalar;
use crate::tensor::{Dims, TensorData};

/// Declared value convention of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueRange {
    /// Values in [0, 1].
    Unit,
    /// Values in [0, 255].
    Byte,
    /// Physical units (e.g. centimeters); unbounded.
    Metric,
}

impl ValueRange {
    pub fn parse(name: &str) -> Option<ValueRange> {
        match name {
            "unit" => Some(ValueRange::Unit),
            "byte" => Some(ValueRange::Byte),
            "metric" => Some(ValueRange::Metric),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ValueRange::Unit => "unit",
            ValueRange::Byte => "byte",
            ValueRange::Metric => "metric",
        }
    }

    /// Clamp bounds, when the convention has them.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self {
            ValueRange::Unit => Some((0.0, 1.0)),
            ValueRange::Byte => Some((0.0, 255.0)),
            ValueRange::Metric => None,
        }
    }
}

/// Interleaved H x W x C image, row-major, C in {1, 3}.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<S: Scalar> {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub range: ValueRange,
    pub data: Vec<S>,
}

impl<S: Scalar> Image<S> {
    pub fn new(height: usize, width: usize, channels: usize, range: ValueRange) -> Self {
        Image { height, width, channels, range, data: vec![S::zero(); height * width * channels] }
    }

    pub fn from_vec(
        height: usize,
        width: usize,
        channels: usize,
        range: ValueRange,
        data: Vec<S>,
    ) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(CoreError::ShapeMismatch(format!(
                "image data length {} != {height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(Image { height, width, channels, range, data })
    }

    #[inline]
    pub fn idx(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> S {
        self.data[self.idx(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: S) {
        let i = self.idx(y, x, c);
        self.data[i] = v;
    }

    pub fn same_dims(&self, other: &Image<S>) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub fn min_max(&self) -> (S, S) {
        let mut lo = S::infinity();
        let mut hi = S::neg_infinity();
        for v in &self.data {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        (lo, hi)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// One channel as a contiguous plane (H*W values).
    pub fn plane(&self, c: usize) -> Vec<S> {
        let mut out = Vec::with_capacity(self.height * self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                out.push(self.get(y, x, c));
            }
        }
        out
    }

    pub fn from_planes(
        height: usize,
        width: usize,
        range: ValueRange,
        planes: &[Vec<S>],
    ) -> Result<Self> {
        let channels = planes.len();
        let mut img = Image::new(height, width, channels, range);
        for (c, p) in planes.iter().enumerate() {
            if p.len() != height * width {
                return Err(CoreError::ShapeMismatch("plane size mismatch".into()));
            }
            for y in 0..height {
                for x in 0..width {
                    img.set(y, x, c, p[y * width + x]);
                }
            }
        }
        Ok(img)
    }

    /// Single-channel slice of a multi-channel image.
    pub fn channel(&self, c: usize) -> Image<S> {
        Image {
            height: self.height,
            width: self.width,
            channels: 1,
            range: self.range,
            data: self.plane(c),
        }
    }

    /// Deterministic separable resampling of every channel.
    pub fn resize(&self, out_h: usize, out_w: usize, mode: ResizeMode) -> Image<S> {
        let planes: Vec<Vec<S>> = (0..self.channels)
            .map(|c| resize_plane(&self.plane(c), self.height, self.width, out_h, out_w, mode))
            .collect();
        Image::from_planes(out_h, out_w, self.range, &planes).expect("plane sizes are consistent")
    }

    /// (1, C, H, W) tensor view of this image.
    pub fn to_tensor(&self) -> TensorData<S> {
        let dims = Dims::new(1, self.channels, self.height, self.width);
        let mut data = vec![S::zero(); dims.numel()];
        for c in 0..self.channels {
            for y in 0..self.height {
                for x in 0..self.width {
                    data[dims.at(0, c, y, x)] = self.get(y, x, c);
                }
            }
        }
        TensorData { dims, data }
    }

    /// Back from a (1, C, H, W) tensor.
    pub fn from_tensor(t: &TensorData<S>, range: ValueRange) -> Result<Self> {
        if t.dims.n != 1 {
            return Err(CoreError::ShapeMismatch(format!(
                "image conversion expects batch 1, got {}",
                t.dims
            )));
        }
        let mut img = Image::new(t.dims.h, t.dims.w, t.dims.c, range);
        for c in 0..t.dims.c {
            for y in 0..t.dims.h {
                for x in 0..t.dims.w {
                    img.set(y, x, c, t.get(0, c, y, x));
                }
            }
        }
        Ok(img)
    }

    pub fn cast<T: Scalar>(&self) -> Image<T> {
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            range: self.range,
            data: self.data.iter().map(|v| T::from_f64(v.to_f64s())).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Image<S>) -> f64 {
        assert!(self.same_dims(other), "max_abs_diff dims");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.to_f64s() - b.to_f64s()).abs())
            .fold(0.0, f64::max)
    }
}

const FIMG_MAGIC: &[u8; 4] = b"FIMG";

/// Write the lossless raw-float container: magic "FIMG", u32 h/w/c
/// little-endian, then f32 payload in H x W x C order.
pub fn write_fimg<S: Scalar, W: Write>(img: &Image<S>, out: &mut W) -> Result<()> {
    out.write_all(FIMG_MAGIC)?;
    out.write_all(&(img.height as u32).to_le_bytes())?;
    out.write_all(&(img.width as u32).to_le_bytes())?;
    out.write_all(&(img.channels as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(img.data.len() * 4);
    for v in &img.data {
        (v.to_f64s() as f32).write_le(&mut buf);
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_fimg<R: Read>(input: &mut R, range: ValueRange) -> Result<Image<f32>> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != FIMG_MAGIC {
        return Err(CoreError::CorruptCheckpoint("not a FIMG file".into()));
    }
    let mut u32buf = [0u8; 4];
    let mut read_u32 = |input: &mut R| -> Result<u32> {
        input.read_exact(&mut u32buf)?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let h = read_u32(input)? as usize;
    let w = read_u32(input)? as usize;
    let c = read_u32(input)? as usize;
    let mut payload = vec![0u8; h * w * c * 4];
    input.read_exact(&mut payload)?;
    let data = payload.chunks_exact(4).map(f32::read_le).collect();
    Image::from_vec(h, w, c, range, data)
}

pub fn save_fimg<S: Scalar>(img: &Image<S>, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    write_fimg(img, &mut f)
}

pub fn load_fimg(path: &Path, range: ValueRange) -> Result<Image<f32>> {
    let mut f = std::fs::File::open(path)?;
    read_fimg(&mut f, range)
}
