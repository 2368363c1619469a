//! Cell-level feature maps: unsigned gradient-orientation histograms plus
//! the two color-name channels, tapered by a separable Hann window.

use std::f64::consts::PI;

use crate::camera::BoundingBox;
use crate::error::TrackerError;
use crate::raster::{sample_window, Patch, Raster};

use super::color_names::{ColorTable, CN_CHANNELS};

/// Feature planes of `width` x `height` cells, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    width: usize,
    height: usize,
    cell_size: usize,
    channels: Vec<Vec<f64>>,
}

impl FeatureMap {
    pub fn new(width: usize, height: usize, cell_size: usize, channels: Vec<Vec<f64>>) -> Result<Self, TrackerError> {
        if width == 0 || height == 0 || channels.is_empty() {
            return Err(TrackerError::InvalidParameter("feature map must be non-empty".into()));
        }
        if channels.iter().any(|c| c.len() != width * height) {
            return Err(TrackerError::InvalidParameter("channel planes must share W x H".into()));
        }
        if channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(TrackerError::InvalidParameter("feature values must be finite".into()));
        }
        Ok(Self { width, height, cell_size, channels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> usize {
        self.cell_size
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels.len())
    }

    pub fn squared_norm(&self) -> f64 {
        self.channels.iter().flatten().map(|v| v * v).sum()
    }

    /// Content moved by (`dx`, `dy`) cells with wrap-around.
    pub fn cyclic_shift(&self, dx: isize, dy: isize) -> Self {
        let (w, h) = (self.width as isize, self.height as isize);
        let channels = self
            .channels
            .iter()
            .map(|plane| {
                let mut out = vec![0.0; plane.len()];
                for y in 0..h {
                    for x in 0..w {
                        let sx = (x - dx).rem_euclid(w);
                        let sy = (y - dy).rem_euclid(h);
                        out[(y * w + x) as usize] = plane[(sy * w + sx) as usize];
                    }
                }
                out
            })
            .collect();
        Self { channels, ..self.clone() }
    }

    /// `self * (1 - rate) + other * rate`, channel by channel.
    pub fn interpolate(&mut self, other: &FeatureMap, rate: f64) {
        for (a, b) in self.channels.iter_mut().zip(&other.channels) {
            for (x, y) in a.iter_mut().zip(b) {
                *x = (1.0 - rate) * *x + rate * y;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureParams {
    pub cell_size: usize,
    /// Search window size relative to the target box.
    pub padding: f64,
    pub orientation_bins: usize,
    pub color_weight: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self { cell_size: 4, padding: 2.5, orientation_bins: 9, color_weight: 1.0 }
    }
}

impl FeatureParams {
    pub fn num_channels(&self) -> usize {
        self.orientation_bins + CN_CHANNELS
    }
}

/// Pixel size of the resampled search window; always a multiple of the cell size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemplateSize {
    pub width_px: usize,
    pub height_px: usize,
}

impl TemplateSize {
    /// Window at native resolution (one template pixel per image pixel).
    pub fn native(bbox: &BoundingBox, params: &FeatureParams) -> Self {
        Self::fitted(bbox, params, f64::INFINITY)
    }

    /// Window downscaled (never upscaled) so its area is at most `max_area` pixels.
    pub fn fitted(bbox: &BoundingBox, params: &FeatureParams, max_area: f64) -> Self {
        let w = bbox.width * params.padding;
        let h = bbox.height * params.padding;
        let k = (max_area / (w * h)).sqrt().min(1.0);
        let cells = |v: f64| (((v * k) / params.cell_size as f64).round() as usize).max(2);
        Self { width_px: cells(w) * params.cell_size, height_px: cells(h) * params.cell_size }
    }

    pub fn cells(&self, cell_size: usize) -> (usize, usize) {
        (self.width_px / cell_size, self.height_px / cell_size)
    }
}

/// Samples the padded window around `bbox` and computes its feature map.
pub fn extract_features(
    image: &Raster,
    bbox: &BoundingBox,
    params: &FeatureParams,
    template: TemplateSize,
) -> Result<FeatureMap, TrackerError> {
    let patch = sample_window(
        image,
        bbox.center.x,
        bbox.center.y,
        bbox.width * params.padding,
        bbox.height * params.padding,
        template.width_px,
        template.height_px,
    )?;
    features_from_patch(&patch, params)
}

/// Untapered orientation histograms, one plane per bin.
pub fn orientation_histograms(patch: &Patch, cell_size: usize, bins: usize) -> (usize, usize, Vec<Vec<f64>>) {
    let cw = patch.width / cell_size;
    let ch = patch.height / cell_size;
    let mut hist = vec![vec![0.0; cw * ch]; bins];
    let (pw, ph) = (patch.width as isize, patch.height as isize);
    let at = |x: isize, y: isize| patch.rgb[(y.clamp(0, ph - 1) * pw + x.clamp(0, pw - 1)) as usize];
    let bin_width = PI / bins as f64;
    let norm = 1.0 / (cell_size * cell_size) as f64;
    for y in 0..(ch * cell_size) as isize {
        for x in 0..(cw * cell_size) as isize {
            // strongest color channel gradient
            let (l, r, u, d) = (at(x - 1, y), at(x + 1, y), at(x, y - 1), at(x, y + 1));
            let mut best = (0.0, 0.0, 0.0);
            for c in 0..3 {
                let gx = (r[c] - l[c]) / 2.0;
                let gy = (d[c] - u[c]) / 2.0;
                let m = gx * gx + gy * gy;
                if m > best.0 {
                    best = (m, gx, gy);
                }
            }
            if best.0 == 0.0 {
                continue;
            }
            let mag = best.0.sqrt();
            let theta = best.2.atan2(best.1).rem_euclid(PI);
            let pos = theta / bin_width;
            let lo = pos.floor();
            let frac = pos - lo;
            let lo = (lo as usize) % bins;
            let hi = (lo + 1) % bins;
            let cell = (y as usize / cell_size) * cw + x as usize / cell_size;
            hist[lo][cell] += mag * (1.0 - frac) * norm;
            hist[hi][cell] += mag * frac * norm;
        }
    }
    (cw, ch, hist)
}

pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n).map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / (n - 1) as f64).cos())).collect()
}

pub fn features_from_patch(patch: &Patch, params: &FeatureParams) -> Result<FeatureMap, TrackerError> {
    let cs = params.cell_size;
    if cs == 0 || patch.width < cs || patch.height < cs {
        return Err(TrackerError::InvalidParameter("patch smaller than one cell".into()));
    }
    let (cw, ch, mut channels) = orientation_histograms(patch, cs, params.orientation_bins);

    let mut color = vec![vec![0.0; cw * ch]; CN_CHANNELS];
    if !patch.grayscale_source && params.color_weight != 0.0 {
        let table = ColorTable::shipped();
        let norm = params.color_weight / (cs * cs) as f64;
        for y in 0..ch * cs {
            for x in 0..cw * cs {
                let v = table.lookup(patch.rgb[y * patch.width + x]);
                let cell = (y / cs) * cw + x / cs;
                for k in 0..CN_CHANNELS {
                    color[k][cell] += v[k] * norm;
                }
            }
        }
    }
    channels.extend(color);

    let hx = hann(cw);
    let hy = hann(ch);
    for plane in channels.iter_mut() {
        for y in 0..ch {
            for x in 0..cw {
                plane[y * cw + x] *= hx[x] * hy[y];
            }
        }
    }
    FeatureMap::new(cw, ch, cs, channels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Channels;
    use nalgebra::Point2;

    fn patch_from(w: usize, h: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> Patch {
        let rgb = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Patch { width: w, height: h, rgb, grayscale_source: false }
    }

    #[test]
    fn constant_patch_has_no_gradient_energy() {
        let p = patch_from(32, 32, |_, _| [0.4, 0.4, 0.4]);
        let f = features_from_patch(&p, &FeatureParams::default()).unwrap();
        for c in 0..9 {
            assert!(f.channel(c).iter().all(|&v| v == 0.0));
        }
    }

    /// Per-pixel reference: bins each gradient into its nearest orientation
    /// bin without interpolation, straight from the intensity differences.
    fn brute_force_dominant_bin(p: &Patch, bins: usize) -> usize {
        let mut hist = vec![0.0; bins];
        for y in 1..p.height - 1 {
            for x in 1..p.width - 1 {
                let gx = p.gray(x + 1, y) - p.gray(x - 1, y);
                let gy = p.gray(x, y + 1) - p.gray(x, y - 1);
                let m = (gx * gx + gy * gy).sqrt();
                if m > 0.0 {
                    let th = gy.atan2(gx).rem_euclid(PI);
                    let b = ((th / (PI / bins as f64)).round() as usize) % bins;
                    hist[b] += m;
                }
            }
        }
        (0..bins).max_by(|&a, &b| hist[a].total_cmp(&hist[b])).unwrap()
    }

    #[test]
    fn vertical_step_edge_lands_in_horizontal_gradient_bin() {
        let p = patch_from(32, 32, |x, _| if x < 16 { [0.1; 3] } else { [0.9; 3] });
        assert_eq!(brute_force_dominant_bin(&p, 9), 0);
        let (_, _, hist) = orientation_histograms(&p, 4, 9);
        let energy: Vec<f64> = hist.iter().map(|plane| plane.iter().sum()).collect();
        let total: f64 = energy.iter().sum();
        assert!(energy[0] / total > 0.99, "{energy:?}");
        let f = features_from_patch(&p, &FeatureParams::default()).unwrap();
        let tapered: Vec<f64> = (0..9).map(|c| f.channel(c).iter().map(|v| v * v).sum()).collect();
        let best = (0..9).max_by(|&a, &b| tapered[a].total_cmp(&tapered[b])).unwrap();
        assert_eq!(best, 0);
    }

    #[test]
    fn diagonal_edge_agrees_with_brute_force() {
        let p = patch_from(40, 40, |x, y| if x + y < 40 { [0.2; 3] } else { [0.8; 3] });
        let (_, _, hist) = orientation_histograms(&p, 4, 9);
        let energy: Vec<f64> = hist.iter().map(|plane| plane.iter().sum()).collect();
        let best = (0..9).max_by(|&a, &b| energy[a].total_cmp(&energy[b])).unwrap();
        // 45 degrees sits between bins 2 (40 deg) and 3 (60 deg), closer to bin 2
        assert_eq!(best, brute_force_dominant_bin(&p, 9));
        assert_eq!(best, 2);
    }

    #[test]
    fn box_half_outside_image_uses_replicated_border() {
        let mut img = Raster::filled(64, 64, Channels::Rgb, 30);
        for y in 0..64 {
            for x in 0..64 {
                if (x / 4 + y / 4) % 2 == 0 {
                    img.set_pixel(x, y, [200, 50, 50]);
                }
            }
        }
        let bbox = BoundingBox::new(Point2::new(0.0, 32.0), 16.0, 16.0, 1.0).unwrap();
        let params = FeatureParams::default();
        let f = extract_features(&img, &bbox, &params, TemplateSize::native(&bbox, &params)).unwrap();
        assert_eq!(f.dims(), (10, 10, 11));
        assert!(f.channels().iter().flatten().all(|v| v.is_finite()));
        let far = BoundingBox::new(Point2::new(-200.0, 32.0), 16.0, 16.0, 1.0).unwrap();
        assert!(matches!(
            extract_features(&img, &far, &params, TemplateSize::native(&far, &params)),
            Err(TrackerError::EmptyIntersection)
        ));
    }

    #[test]
    fn grayscale_frames_have_zero_color_channels() {
        let mut img = Raster::filled(40, 40, Channels::Gray, 0);
        for y in 0..40 {
            for x in 0..40 {
                img.set_pixel(x, y, [((x * 13 + y * 7) % 256) as u8; 3]);
            }
        }
        let bbox = BoundingBox::new(Point2::new(20.0, 20.0), 8.0, 8.0, 1.0).unwrap();
        let params = FeatureParams::default();
        let f = extract_features(&img, &bbox, &params, TemplateSize::native(&bbox, &params)).unwrap();
        assert!(f.channel(9).iter().chain(f.channel(10)).all(|&v| v == 0.0));
    }

    #[test]
    fn cyclic_shift_wraps() {
        let f = FeatureMap::new(3, 2, 4, vec![vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]]).unwrap();
        let s = f.cyclic_shift(1, 1);
        assert_eq!(s.channel(0), &[6.0, 4.0, 5.0, 3.0, 1.0, 2.0]);
    }
}
