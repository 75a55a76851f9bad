//! Classical guided filters: box, joint bilateral, guided image filter, and
//! joint bilateral upsampling.
//!
//! Border convention throughout: windows are clipped to the image and
//! weights renormalized over the samples actually present (box means divide
//! by the clipped window size). Accumulation runs in f64 regardless of the
//! image scalar type.

use crate::error::{CoreError, Result};
use crate::image::Image;
use crate::scalar::{s, Scalar};

/// Spatial/range scales for the bilateral family.
#[derive(Debug, Clone, Copy)]
pub struct BilateralParams {
    /// Spatial Gaussian scale in pixels.
    pub sigma_s: f64,
    /// Range Gaussian scale in guidance-value units.
    pub sigma_r: f64,
    /// Window half-size.
    pub radius: usize,
}

impl BilateralParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_s > 0.0) || !(self.sigma_r > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "bilateral sigmas must be positive (sigma_s={}, sigma_r={})",
                self.sigma_s, self.sigma_r
            )));
        }
        if self.radius < 1 {
            return Err(CoreError::InvalidParameter("bilateral radius must be >= 1".into()));
        }
        Ok(())
    }

    /// True when the window is wide enough for the spatial Gaussian.
    /// Callers may warn (not fail) when this is violated.
    pub fn radius_covers_sigma(&self) -> bool {
        self.radius as f64 >= 2.0 * self.sigma_s
    }
}

/// Window half-size and regularizer of the guided image filter.
#[derive(Debug, Clone, Copy)]
pub struct GifParams {
    pub radius: usize,
    pub epsilon: f64,
}

impl GifParams {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon < 0.0 {
            return Err(CoreError::InvalidParameter(format!(
                "guided filter epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        if self.radius < 1 {
            return Err(CoreError::InvalidParameter("guided filter radius must be >= 1".into()));
        }
        Ok(())
    }
}

/// Clipped-window mean via an integral image; cost independent of radius.
pub fn box_filter<S: Scalar>(img: &Image<S>, radius: usize) -> Result<Image<S>> {
    if radius < 1 {
        return Err(CoreError::InvalidParameter("box radius must be >= 1".into()));
    }
    if radius >= img.height || radius >= img.width {
        return Err(CoreError::InvalidParameter(format!(
            "box radius {radius} too large for {}x{} image",
            img.height, img.width
        )));
    }
    let (h, w, c) = (img.height, img.width, img.channels);
    let mut out = Image::new(h, w, c, img.range);
    let mut integral = vec![0.0f64; (h + 1) * (w + 1)];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                integral[(y + 1) * (w + 1) + (x + 1)] = img.get(y, x, ch).to_f64s()
                    + integral[y * (w + 1) + (x + 1)]
                    + integral[(y + 1) * (w + 1) + x]
                    - integral[y * (w + 1) + x];
            }
        }
        for y in 0..h {
            let y0 = y.saturating_sub(radius);
            let y1 = (y + radius + 1).min(h);
            for x in 0..w {
                let x0 = x.saturating_sub(radius);
                let x1 = (x + radius + 1).min(w);
                let sum = integral[y1 * (w + 1) + x1] - integral[y0 * (w + 1) + x1]
                    - integral[y1 * (w + 1) + x0]
                    + integral[y0 * (w + 1) + x0];
                let count = ((y1 - y0) * (x1 - x0)) as f64;
                out.set(y, x, ch, s(sum / count));
            }
        }
    }
    Ok(out)
}

fn squared_guidance_distance<S: Scalar>(g: &Image<S>, y0: usize, x0: usize, y1: usize, x1: usize) -> f64 {
    let mut acc = 0.0;
    for c in 0..g.channels {
        let d = g.get(y0, x0, c).to_f64s() - g.get(y1, x1, c).to_f64s();
        acc += d * d;
    }
    acc
}

/// Joint bilateral filter: Gaussian spatial term, Gaussian range term on the
/// guidance, normalized over the clipped window.
pub fn bilateral_filter<S: Scalar>(t: &Image<S>, g: &Image<S>, p: &BilateralParams) -> Result<Image<S>> {
    p.validate()?;
    if t.height != g.height || t.width != g.width {
        return Err(CoreError::ShapeMismatch(format!(
            "bilateral: target {}x{} vs guidance {}x{}",
            t.height, t.width, g.height, g.width
        )));
    }
    let (h, w) = (t.height, t.width);
    let r = p.radius;
    let inv_2ss = 1.0 / (2.0 * p.sigma_s * p.sigma_s);
    let inv_2sr = 1.0 / (2.0 * p.sigma_r * p.sigma_r);
    let mut out = Image::new(h, w, t.channels, t.range);
    let mut acc = vec![0.0f64; t.channels];
    for y in 0..h {
        for x in 0..w {
            acc.iter_mut().for_each(|a| *a = 0.0);
            let mut norm = 0.0f64;
            let y_lo = y.saturating_sub(r);
            let y_hi = (y + r + 1).min(h);
            let x_lo = x.saturating_sub(r);
            let x_hi = (x + r + 1).min(w);
            for yy in y_lo..y_hi {
                for xx in x_lo..x_hi {
                    let dy = yy as f64 - y as f64;
                    let dx = xx as f64 - x as f64;
                    let ws = (-(dy * dy + dx * dx) * inv_2ss).exp();
                    let wr = (-squared_guidance_distance(g, y, x, yy, xx) * inv_2sr).exp();
                    let wgt = ws * wr;
                    norm += wgt;
                    for (c, a) in acc.iter_mut().enumerate() {
                        *a += wgt * t.get(yy, xx, c).to_f64s();
                    }
                }
            }
            for c in 0..t.channels {
                out.set(y, x, c, s(acc[c] / norm));
            }
        }
    }
    Ok(out)
}

/// Guided image filter in the linear-model form: per-window
/// a = cov(g,t)/(var(g)+eps), b = mean(t) - a*mean(g), then window-averaged
/// coefficients applied to the guidance. Multi-channel guidance is handled
/// per channel and the outputs averaged.
pub fn guided_image_filter<S: Scalar>(t: &Image<S>, g: &Image<S>, p: &GifParams) -> Result<Image<S>> {
    p.validate()?;
    if t.height != g.height || t.width != g.width {
        return Err(CoreError::ShapeMismatch(format!(
            "guided filter: target {}x{} vs guidance {}x{}",
            t.height, t.width, g.height, g.width
        )));
    }
    if g.channels == 1 {
        return gif_single(t, g, p);
    }
    // Average the per-channel filterings.
    let mut sum: Option<Image<S>> = None;
    for c in 0..g.channels {
        let gc = g.channel(c);
        let f = gif_single(t, &gc, p)?;
        sum = Some(match sum {
            None => f,
            Some(mut acc) => {
                for (a, b) in acc.data.iter_mut().zip(&f.data) {
                    *a += *b;
                }
                acc
            }
        });
    }
    let mut avg = sum.expect("at least one channel");
    let inv = s::<S>(1.0 / g.channels as f64);
    for v in avg.data.iter_mut() {
        *v *= inv;
    }
    Ok(avg)
}

fn gif_single<S: Scalar>(t: &Image<S>, g: &Image<S>, p: &GifParams) -> Result<Image<S>> {
    let (h, w) = (t.height, t.width);
    let mut out = Image::new(h, w, t.channels, t.range);
    let mean_g = box_filter(g, p.radius)?;
    let gg = product_image(g, g, 0, 0);
    let mean_gg = box_filter(&gg, p.radius)?;

    for c in 0..t.channels {
        let tc = t.channel(c);
        let mean_t = box_filter(&tc, p.radius)?;
        let gt = product_image(g, &tc, 0, 0);
        let mean_gt = box_filter(&gt, p.radius)?;

        let mut a_img = Image::<S>::new(h, w, 1, t.range);
        let mut b_img = Image::<S>::new(h, w, 1, t.range);
        for y in 0..h {
            for x in 0..w {
                let mg = mean_g.get(y, x, 0).to_f64s();
                let mt = mean_t.get(y, x, 0).to_f64s();
                let var = mean_gg.get(y, x, 0).to_f64s() - mg * mg;
                let cov = mean_gt.get(y, x, 0).to_f64s() - mg * mt;
                let a = cov / (var + p.epsilon);
                a_img.set(y, x, 0, s(a));
                b_img.set(y, x, 0, s(mt - a * mg));
            }
        }
        let mean_a = box_filter(&a_img, p.radius)?;
        let mean_b = box_filter(&b_img, p.radius)?;
        for y in 0..h {
            for x in 0..w {
                let f = mean_a.get(y, x, 0).to_f64s() * g.get(y, x, 0).to_f64s()
                    + mean_b.get(y, x, 0).to_f64s();
                out.set(y, x, c, s(f));
            }
        }
    }
    Ok(out)
}

fn product_image<S: Scalar>(a: &Image<S>, b: &Image<S>, ca: usize, cb: usize) -> Image<S> {
    let mut out = Image::new(a.height, a.width, 1, a.range);
    for y in 0..a.height {
        for x in 0..a.width {
            out.set(y, x, 0, a.get(y, x, ca) * b.get(y, x, cb));
        }
    }
    out
}

/// Joint bilateral upsampling. Spatial weights live in low-res coordinates;
/// range weights compare the high-res guidance at the output pixel against
/// the guidance at each low-res sample's corresponding high-res position.
pub fn joint_bilateral_upsample<S: Scalar>(
    t_lr: &Image<S>,
    g_hr: &Image<S>,
    p: &BilateralParams,
    scale: usize,
) -> Result<Image<S>> {
    p.validate()?;
    if scale < 1 {
        return Err(CoreError::InvalidParameter("scale must be >= 1".into()));
    }
    if g_hr.height != t_lr.height * scale || g_hr.width != t_lr.width * scale {
        return Err(CoreError::ShapeMismatch(format!(
            "jbu: guidance {}x{} is not {scale}x the {}x{} target",
            g_hr.height, g_hr.width, t_lr.height, t_lr.width
        )));
    }
    let (lh, lw) = (t_lr.height, t_lr.width);
    let (hh, hw) = (g_hr.height, g_hr.width);
    let r = p.radius as isize;
    let inv_2ss = 1.0 / (2.0 * p.sigma_s * p.sigma_s);
    let inv_2sr = 1.0 / (2.0 * p.sigma_r * p.sigma_r);
    let sf = scale as f64;
    // High-res position of low-res sample i: centers map to centers,
    // rounded to the nearest pixel (callers clamp to the valid bound).
    let to_hr = |i: usize| -> usize { (((i as f64 + 0.5) * sf - 0.5) + 0.5).floor().max(0.0) as usize };
    let mut out = Image::new(hh, hw, t_lr.channels, t_lr.range);
    let mut acc = vec![0.0f64; t_lr.channels];
    for y in 0..hh {
        let cy = (y as f64 + 0.5) / sf - 0.5;
        let by = (cy + 0.5).floor() as isize;
        for x in 0..hw {
            let cx = (x as f64 + 0.5) / sf - 0.5;
            let bx = (cx + 0.5).floor() as isize;
            acc.iter_mut().for_each(|a| *a = 0.0);
            let mut norm = 0.0f64;
            for yl in (by - r).max(0)..=(by + r).min(lh as isize - 1) {
                let gy = (to_hr(yl as usize)).min(hh - 1);
                for xl in (bx - r).max(0)..=(bx + r).min(lw as isize - 1) {
                    let gx = (to_hr(xl as usize)).min(hw - 1);
                    let dy = yl as f64 - cy;
                    let dx = xl as f64 - cx;
                    let ws = (-(dy * dy + dx * dx) * inv_2ss).exp();
                    let wr = (-squared_guidance_distance(g_hr, y, x, gy, gx) * inv_2sr).exp();
                    let wgt = ws * wr;
                    norm += wgt;
                    for (c, a) in acc.iter_mut().enumerate() {
                        *a += wgt * t_lr.get(yl as usize, xl as usize, c).to_f64s();
                    }
                }
            }
            for c in 0..t_lr.channels {
                out.set(y, x, c, s(acc[c] / norm));
            }
        }
    }
    Ok(out)
}
