//! Synthetic camera frames: a panoramic background that pans with the
//! robot's heading, the person drawn as a textured upright box, scripted
//! occluders and additive Gaussian pixel noise.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::camera::{initial_bbox, BoundingBox, CameraCalibration, PersonModel};
use crate::raster::{Channels, Raster};

use super::scenario::{ImageConfig, OcclusionWindow};
use super::stream_seed;

const PANORAMA_COLUMNS: usize = 3600;
const WORLD_SEED: u64 = 0x00c0_ffee;
const NOISE_STREAM: u64 = 1;

/// Ground truth for one rendered frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTruth {
    /// Image box of the person; `None` when the person is behind the camera.
    pub bbox: Option<BoundingBox>,
    /// Some part of the box overlaps the image.
    pub in_view: bool,
    pub occluded: bool,
    /// The occluder box contains the whole person box.
    pub fully_covered: bool,
}

#[derive(Debug, Clone)]
pub struct Renderer {
    cal: CameraCalibration,
    person: PersonModel,
    config: ImageConfig,
    panorama: Vec<[u8; 3]>,
    seed: u64,
}

impl Renderer {
    pub fn new(cal: CameraCalibration, person: PersonModel, config: ImageConfig, seed: u64) -> Self {
        let panorama = build_panorama(cal.height() as usize);
        Self { cal, person, config, panorama, seed }
    }

    pub fn calibration(&self) -> &CameraCalibration {
        &self.cal
    }

    /// Image box of the person with the emitter at robot-frame `x`.
    pub fn true_box(&self, x: &Vector3<f64>) -> Option<BoundingBox> {
        initial_bbox(x, &self.person, &self.cal).ok()
    }

    fn occluder_box(&self, target: &BoundingBox, occ: &OcclusionWindow) -> BoundingBox {
        let mut b = *target;
        b.center.x += occ.offset_px[0];
        b.center.y += occ.offset_px[1];
        b.width *= occ.cover;
        b.height *= occ.cover;
        b
    }

    /// Renders frame `index` with the person at robot-frame `x` and the
    /// robot facing `heading` (rad, world frame).
    pub fn render(
        &self,
        index: usize,
        heading: f64,
        x: &Vector3<f64>,
        occluder: Option<&OcclusionWindow>,
    ) -> (Raster, FrameTruth) {
        let (w, h) = (self.cal.width() as usize, self.cal.height() as usize);
        let mut img = Raster::filled(w, h, Channels::Rgb, 0);
        let fx = self.cal.fx();
        let cx = self.cal.intrinsics()[(0, 2)];
        let cols: Vec<usize> = (0..w)
            .map(|u| {
                let bearing = heading + ((cx - (u as f64 + 0.5)) / fx).atan();
                let turns = bearing / std::f64::consts::TAU;
                ((turns - turns.floor()) * PANORAMA_COLUMNS as f64) as usize % PANORAMA_COLUMNS
            })
            .collect();
        for v in 0..h {
            for (u, &c) in cols.iter().enumerate() {
                img.set_pixel(u, v, self.panorama[v * PANORAMA_COLUMNS + c]);
            }
        }

        let bbox = self.true_box(x);
        let mut truth = FrameTruth { bbox, in_view: false, occluded: occluder.is_some(), fully_covered: false };
        if let Some(b) = bbox {
            truth.in_view = b.right() > 0.0 && b.left() < w as f64 && b.bottom() > 0.0 && b.top() < h as f64;
            let contrast = self.config.target_contrast;
            paint_box(&mut img, &b, |s, t| {
                let c = person_texture(s, t);
                c.map(|v| (128.0 + contrast * (v as f64 - 128.0)).round().clamp(0.0, 255.0) as u8)
            });
            if let Some(occ) = occluder {
                let ob = self.occluder_box(&b, occ);
                truth.fully_covered = ob.contains_box(&b);
                paint_box(&mut img, &ob, |s, t| occluder_texture(s * ob.width, t * ob.height));
            }
        }

        let sigma = self.config.pixel_noise;
        if sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(self.seed, NOISE_STREAM, index as u64));
            let normal = Normal::new(0.0, sigma).expect("finite noise");
            for p in img.data_mut() {
                *p = (*p as f64 + normal.sample(&mut rng)).round().clamp(0.0, 255.0) as u8;
            }
        }
        (img, truth)
    }
}

/// Paints `texture(s, t)` (normalized box coordinates) over the box with
/// 3x3 supersampled coverage at its edges.
fn paint_box(img: &mut Raster, b: &BoundingBox, texture: impl Fn(f64, f64) -> [u8; 3]) {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let x0 = (b.left().floor() as isize).max(0);
    let x1 = (b.right().ceil() as isize).min(w);
    let y0 = (b.top().floor() as isize).max(0);
    let y1 = (b.bottom().ceil() as isize).min(h);
    const SUB: usize = 3;
    for y in y0..y1 {
        for x in x0..x1 {
            let bg = img.pixel(x as usize, y as usize);
            let mut acc = [0.0; 3];
            for j in 0..SUB {
                for i in 0..SUB {
                    let px = x as f64 + (i as f64 + 0.5) / SUB as f64;
                    let py = y as f64 + (j as f64 + 0.5) / SUB as f64;
                    let s = (px - b.left()) / b.width;
                    let t = (py - b.top()) / b.height;
                    let c = if (0.0..1.0).contains(&s) && (0.0..1.0).contains(&t) { texture(s, t) } else { bg };
                    for k in 0..3 {
                        acc[k] += c[k] as f64;
                    }
                }
            }
            let n = (SUB * SUB) as f64;
            img.set_pixel(x as usize, y as usize, acc.map(|a| (a / n).round() as u8));
        }
    }
}

/// High-contrast person appearance: head, checkered shirt, trousers with a
/// gap between the legs.
fn person_texture(s: f64, t: f64) -> [u8; 3] {
    if t < 0.13 {
        let dx = (s - 0.5) / 0.22;
        let dy = (t - 0.065) / 0.065;
        return if dx * dx + dy * dy <= 1.0 { [224, 172, 140] } else { [60, 45, 35] };
    }
    if t < 0.55 {
        let row = ((t - 0.13) / 0.105) as usize;
        let col = (s * 3.0) as usize;
        let shade = 0.75 + 0.25 * (t - 0.13) / 0.42;
        let c = if (row + col) % 2 == 0 { [220.0, 40.0, 40.0] } else { [250.0, 215.0, 70.0] };
        return c.map(|v| (v * shade) as u8);
    }
    if (0.45..0.55).contains(&s) && t > 0.62 {
        return [20, 20, 30];
    }
    let shade = 1.0 - 0.4 * (t - 0.55) / 0.45;
    [(40.0 * shade) as u8, (60.0 * shade) as u8, (170.0 * shade) as u8]
}

/// Panel with a coarse diagonal pattern; arguments in pixels from the
/// occluder's corner.
fn occluder_texture(x: f64, y: f64) -> [u8; 3] {
    let band = (((x + y) / 9.0).floor() as i64).rem_euclid(3);
    let g = match band {
        0 => 95,
        1 => 140,
        _ => 118,
    };
    [g, g + 8, g - 10]
}

/// Skyline of colored blocks over a ground band; rows match image rows.
fn build_panorama(height: usize) -> Vec<[u8; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(WORLD_SEED);
    let mut out = vec![[0u8; 3]; PANORAMA_COLUMNS * height];
    let horizon = height as f64 * 0.62;
    let mut col = 0;
    while col < PANORAMA_COLUMNS {
        let width = rng.gen_range(20..90).min(PANORAMA_COLUMNS - col);
        let top = horizon - rng.gen_range(0.1..0.55) * height as f64;
        let base = [rng.gen_range(70..170u8), rng.gen_range(80..160u8), rng.gen_range(70..150u8)];
        let window_pitch = rng.gen_range(6..14usize);
        for c in col..col + width {
            for r in 0..height {
                let rf = r as f64;
                let px = if rf >= horizon {
                    let g = 80.0 + 30.0 * (((c / 7) + (r / 5)) % 3) as f64 / 2.0;
                    [g as u8, (g * 0.95) as u8, (g * 0.8) as u8]
                } else if rf >= top {
                    let wx = (c - col) % window_pitch < window_pitch / 2;
                    let wy = r % window_pitch < window_pitch / 2;
                    if wx && wy { base.map(|v| v.saturating_sub(35)) } else { base }
                } else {
                    let k = rf / horizon;
                    [(150.0 + 60.0 * k) as u8, (185.0 + 40.0 * k) as u8, 235]
                };
                out[r * PANORAMA_COLUMNS + c] = px;
            }
        }
        col += width;
    }
    out
}
