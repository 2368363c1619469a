//! Scale estimation: a 1-D correlation filter over a geometric pyramid of
//! window scales, the scale implied by the current 3-D estimate, and the
//! inverse-uncertainty fusion of the two.

use std::sync::Arc;

use nalgebra::Point2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::camera::{person_anchor_points, project_point, CameraCalibration, PersonModel};
use crate::error::TrackerError;
use crate::fusion::TargetState3D;
use crate::raster::{sample_window, Raster};

use super::features::hann;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleParams {
    pub levels: usize,
    pub step: f64,
    /// Label bandwidth as a fraction of sqrt(levels).
    pub sigma_factor: f64,
    pub lambda: f64,
    /// Approximate number of coarse cells per scale sample.
    pub coarse_cells: usize,
    /// Pixels per coarse cell side in the resampled window.
    pub cell_px: usize,
    pub sigma_floor: f64,
    /// Sampled window size relative to the scaled target box.
    pub padding: f64,
}

impl Default for ScaleParams {
    fn default() -> Self {
        Self {
            levels: 17,
            step: 1.03,
            sigma_factor: 0.25,
            lambda: 0.0001,
            coarse_cells: 128,
            cell_px: 2,
            sigma_floor: 0.01,
            padding: 1.5,
        }
    }
}

#[derive(Clone)]
pub struct ScaleFilter {
    params: ScaleParams,
    base_width: f64,
    base_height: f64,
    grid: (usize, usize),
    factors: Vec<f64>,
    window: Vec<f64>,
    /// Circular overlap of the level taper with itself at each response
    /// index, relative to zero shift.
    overlap: Vec<f64>,
    label_hat: Vec<Complex64>,
    num: Vec<Vec<Complex64>>,
    den: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ScaleFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScaleFilter")
            .field("params", &self.params)
            .field("grid", &self.grid)
            .finish_non_exhaustive()
    }
}

/// Outcome of one scale search.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSearch {
    pub s2d: f64,
    pub sigma2d: f64,
    pub scales: Vec<f64>,
    pub scores: Vec<f64>,
}

impl ScaleFilter {
    /// Sets up the pyramid for a target of `base_width` x `base_height` pixels at scale 1.
    pub fn new(params: ScaleParams, base_width: f64, base_height: f64) -> Result<Self, TrackerError> {
        if params.levels == 0 || !(params.step > 1.0) || !(params.padding >= 1.0) || !(params.lambda > 0.0) || params.cell_px == 0 {
            return Err(TrackerError::InvalidParameter("invalid scale filter parameters".into()));
        }
        if !(base_width > 0.0 && base_height > 0.0) {
            return Err(TrackerError::InvalidParameter("scale filter needs a positive base size".into()));
        }
        let aspect = base_width / base_height;
        let gh = ((params.coarse_cells as f64 / aspect).sqrt().round() as usize).max(2);
        let gw = ((params.coarse_cells as f64 * aspect).sqrt().round() as usize).max(2);
        let s = params.levels;
        let mid = (s as f64 - 1.0) / 2.0;
        let factors = (0..s).map(|i| params.step.powf(i as f64 - mid)).collect();
        let sigma = params.sigma_factor * (s as f64).sqrt();
        let label: Vec<Complex64> = (0..s)
            .map(|i| {
                let d = i as f64 - mid;
                Complex64::new((-0.5 * d * d / (sigma * sigma)).exp(), 0.0)
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(s);
        let inv = planner.plan_fft_inverse(s);
        let window = hann(s);
        let zero_shift: f64 = window.iter().map(|w| w * w).sum();
        let overlap = (0..s)
            .map(|k| {
                let d = k as isize - mid as isize;
                let o: f64 = (0..s).map(|l| window[l] * window[(l as isize - d).rem_euclid(s as isize) as usize]).sum();
                (o / zero_shift).max(0.25)
            })
            .collect();
        let mut label_hat = label;
        fwd.process(&mut label_hat);
        Ok(Self {
            params,
            base_width,
            base_height,
            grid: (gw, gh),
            factors,
            window,
            overlap,
            label_hat,
            num: Vec::new(),
            den: vec![0.0; s],
            fwd,
            inv,
        })
    }

    pub fn params(&self) -> &ScaleParams {
        &self.params
    }

    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    pub fn is_trained(&self) -> bool {
        !self.num.is_empty()
    }

    /// Coarse samples: one row per feature, one column per scale level.
    /// Levels whose window misses the image are all-zero and flagged.
    fn samples(&self, img: &Raster, center: Point2<f64>, scale: f64) -> (Vec<Vec<f64>>, Vec<bool>) {
        let (gw, gh) = self.grid;
        let cp = self.params.cell_px;
        let d = gw * gh;
        let s = self.params.levels;
        let mut rows = vec![vec![0.0; s]; d];
        let mut inside = vec![true; s];
        for (lvl, &f) in self.factors.iter().enumerate() {
            let w = self.base_width * scale * f * self.params.padding;
            let h = self.base_height * scale * f * self.params.padding;
            let patch = match sample_window(img, center.x, center.y, w, h, gw * cp, gh * cp) {
                Ok(p) => p,
                Err(_) => {
                    inside[lvl] = false;
                    continue;
                }
            };
            let mut cells = vec![0.0; d];
            for y in 0..gh * cp {
                for x in 0..gw * cp {
                    cells[(y / cp) * gw + x / cp] += patch.gray(x, y);
                }
            }
            let mean = cells.iter().sum::<f64>() / d as f64;
            let norm = 1.0 / (cp * cp) as f64;
            for (k, v) in cells.into_iter().enumerate() {
                rows[k][lvl] = (v - mean) * norm;
            }
        }
        // each feature's variation across levels, tapered
        let n_in = inside.iter().filter(|&&b| b).count().max(1) as f64;
        for row in rows.iter_mut() {
            let m = row.iter().zip(&inside).filter(|(_, &ok)| ok).map(|(v, _)| v).sum::<f64>() / n_in;
            for (lvl, v) in row.iter_mut().enumerate() {
                *v = if inside[lvl] { (*v - m) * self.window[lvl] } else { 0.0 };
            }
        }
        (rows, inside)
    }

    fn spectra(&self, rows: Vec<Vec<f64>>) -> Vec<Vec<Complex64>> {
        rows.into_iter()
            .map(|r| {
                let mut buf: Vec<Complex64> = r.into_iter().map(|v| Complex64::new(v, 0.0)).collect();
                self.fwd.process(&mut buf);
                buf
            })
            .collect()
    }

    /// Trains on the pyramid at (`center`, `scale`) and blends it into the
    /// model with `rate` (1 replaces the model).
    pub fn update(&mut self, img: &Raster, center: Point2<f64>, scale: f64, rate: f64) {
        let (rows, _) = self.samples(img, center, scale);
        let f = self.spectra(rows);
        let s = self.params.levels;
        let mut den = vec![0.0; s];
        let num: Vec<Vec<Complex64>> = f
            .iter()
            .map(|fl| {
                fl.iter()
                    .enumerate()
                    .map(|(k, v)| {
                        den[k] += v.norm_sqr();
                        self.label_hat[k] * v.conj()
                    })
                    .collect()
            })
            .collect();
        if self.num.is_empty() || rate >= 1.0 {
            self.num = num;
            self.den = den;
            return;
        }
        for (old, new) in self.num.iter_mut().zip(&num) {
            for (a, b) in old.iter_mut().zip(new) {
                *a = *a * (1.0 - rate) + *b * rate;
            }
        }
        for (a, b) in self.den.iter_mut().zip(&den) {
            *a = *a * (1.0 - rate) + b * rate;
        }
    }

    /// Scores every pyramid level around `center`; the best level gives
    /// s2d and the score-weighted spread of the scale grid gives sigma2d.
    pub fn estimate(&self, img: &Raster, center: Point2<f64>, scale: f64) -> Result<ScaleSearch, TrackerError> {
        if !self.is_trained() {
            return Err(TrackerError::InvalidParameter("scale filter is not trained".into()));
        }
        let (rows, inside) = self.samples(img, center, scale);
        let z = self.spectra(rows);
        let s = self.params.levels;
        let mut acc = vec![Complex64::new(0.0, 0.0); s];
        for (a_l, z_l) in self.num.iter().zip(&z) {
            for k in 0..s {
                acc[k] += a_l[k] * z_l[k];
            }
        }
        for k in 0..s {
            acc[k] /= self.den[k] + self.params.lambda;
        }
        self.inv.process(&mut acc);
        let scores: Vec<f64> = acc
            .iter()
            .zip(&inside)
            .zip(&self.overlap)
            .map(|((v, &ok), o)| if ok { v.re / (s as f64 * o) } else { 0.0 })
            .collect();
        let scales: Vec<f64> = self.factors.iter().map(|f| f * scale).collect();
        let best = (0..s).fold(0, |b, i| if scores[i] > scores[b] { i } else { b });
        let sigma2d = weighted_spread(&scales, &scores).max(self.params.sigma_floor);
        let s2d = scales[best] * self.params.step.powf(parabolic_offset(&scores, best));
        Ok(ScaleSearch { s2d, sigma2d, scales, scores })
    }
}

/// Vertex of the parabola through the peak and its two neighbors, in
/// levels relative to `best`; zero at the ends of the pyramid.
fn parabolic_offset(scores: &[f64], best: usize) -> f64 {
    if best == 0 || best + 1 >= scores.len() {
        return 0.0;
    }
    let (l, c, r) = (scores[best - 1], scores[best], scores[best + 1]);
    let curv = l - 2.0 * c + r;
    if !(curv < 0.0) {
        return 0.0;
    }
    (0.5 * (l - r) / curv).clamp(-0.5, 0.5)
}

/// Standard deviation of `values` under weights `max(score, 0)`; uniform
/// weights when no score is positive.
pub fn weighted_spread(values: &[f64], scores: &[f64]) -> f64 {
    let mut w: Vec<f64> = scores.iter().map(|s| s.max(0.0)).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        w = vec![1.0; values.len()];
    }
    let total: f64 = w.iter().sum();
    let mean = values.iter().zip(&w).map(|(v, w)| v * w).sum::<f64>() / total;
    let var = values.iter().zip(&w).map(|(v, w)| w * (v - mean).powi(2)).sum::<f64>() / total;
    var.sqrt()
}

/// Scale implied by the 3-D estimate: projected head-to-feet height over the
/// initial box height, with the z standard deviation as its uncertainty.
pub fn scale_from_3d(
    state: &TargetState3D,
    person: &PersonModel,
    cal: &CameraCalibration,
    v_init_height: f64,
) -> Result<(f64, f64), TrackerError> {
    if !(v_init_height > 0.0) {
        return Err(TrackerError::InvalidParameter("initial box height must be positive".into()));
    }
    let anchors = person_anchor_points(&state.x, person);
    let head = project_point(&anchors.head, cal)?;
    let feet = project_point(&anchors.feet, cal)?;
    let s3d = (feet.y - head.y) / v_init_height;
    let sigma3d = state.p[(2, 2)].max(0.0).sqrt();
    Ok((s3d, sigma3d))
}

/// Inverse-standard-deviation weighted combination of the two scale estimates.
pub fn fuse_scale(s2d: f64, sigma2d: f64, s3d: f64, sigma3d: f64) -> f64 {
    (s2d / sigma2d + s3d / sigma3d) * (sigma2d * sigma3d) / (sigma2d + sigma3d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Vector3};
    use proptest::prelude::*;

    #[test]
    fn fusion_identities() {
        assert!((fuse_scale(1.3, 0.2, 1.3, 0.2) - 1.3).abs() < 1e-12);
        assert!((fuse_scale(0.9, 0.07, 1.1, 0.07) - 1.0).abs() < 1e-12);
        // (1.0/0.1 + 1.2/0.3) * (0.1*0.3)/(0.1+0.3) = 14 * 0.075
        assert!((fuse_scale(1.0, 0.1, 1.2, 0.3) - 1.05).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn fusion_fixed_point(s in 0.1f64..5.0, a in 1e-3f64..10.0, b in 1e-3f64..10.0) {
            prop_assert!((fuse_scale(s, a, s, b) - s).abs() < 1e-12);
        }

        #[test]
        fn fusion_is_between_inputs(s1 in 0.1f64..5.0, s2 in 0.1f64..5.0, a in 1e-3f64..10.0, b in 1e-3f64..10.0) {
            let f = fuse_scale(s1, a, s2, b);
            prop_assert!(f >= s1.min(s2) - 1e-12 && f <= s1.max(s2) + 1e-12);
        }
    }

    #[test]
    fn uniform_scores_give_plain_grid_spread() {
        let scales: Vec<f64> = (0..17).map(|i| 1.03f64.powf(i as f64 - 8.0)).collect();
        let mean = scales.iter().sum::<f64>() / 17.0;
        let sd = (scales.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / 17.0).sqrt();
        assert!((weighted_spread(&scales, &[0.4; 17]) - sd).abs() < 1e-12);
        assert!((weighted_spread(&scales, &[0.0; 17]) - sd).abs() < 1e-12);
    }

    fn robot_cal() -> CameraCalibration {
        CameraCalibration::forward_looking(300.0, 300.0, 160.0, 120.0, 320, 240, Vector3::zeros()).unwrap()
    }

    #[test]
    fn projected_scale_at_initial_and_doubled_depth() {
        let cal = robot_cal();
        let person = PersonModel::new(1.7).unwrap();
        let x0 = Vector3::new(2.5, 0.2, 0.1);
        let h0 = crate::camera::initial_bbox(&x0, &person, &cal).unwrap().height;
        let st = TargetState3D::new(x0, Matrix3::from_diagonal(&Vector3::new(0.01, 0.01, 0.04)), 0.0);
        let (s, sigma) = scale_from_3d(&st, &person, &cal, h0).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        assert!((sigma - 0.2).abs() < 1e-12);
        let far = TargetState3D::new(Vector3::new(5.0, 0.4, 0.2), st.p, 0.0);
        let (s, _) = scale_from_3d(&far, &person, &cal, h0).unwrap();
        assert!((s - 0.5).abs() < 1e-6);
    }

    /// Textured rectangle of `w` x `h` pixels centered in a gray frame.
    fn frame_with_target(w: f64, h: f64) -> Raster {
        let (iw, ih) = (200usize, 200usize);
        let mut img = Raster::filled(iw, ih, crate::raster::Channels::Gray, 128);
        let (cx, cy) = (100.0, 100.0);
        for y in 0..ih {
            for x in 0..iw {
                let u = (x as f64 + 0.5 - (cx - w / 2.0)) / w;
                let v = (y as f64 + 0.5 - (cy - h / 2.0)) / h;
                if (0.0..1.0).contains(&u) && (0.0..1.0).contains(&v) {
                    let checker = ((u * 4.0) as usize + (v * 6.0) as usize) % 2;
                    let g = if checker == 0 { 30 } else { 220 };
                    let g = (g as f64 * (0.6 + 0.4 * v)) as u8;
                    img.set_pixel(x, y, [g; 3]);
                }
            }
        }
        img
    }

    #[test]
    fn static_target_keeps_its_scale() {
        let img = frame_with_target(40.0, 90.0);
        let mut f = ScaleFilter::new(ScaleParams::default(), 40.0, 90.0).unwrap();
        f.update(&img, Point2::new(100.0, 100.0), 1.0, 1.0);
        let est = f.estimate(&img, Point2::new(100.0, 100.0), 1.0).unwrap();
        assert!((est.s2d - 1.0).abs() < 1e-9, "{:?}", est);
        assert!(est.sigma2d >= 0.01);
    }

    #[test]
    fn enlarged_target_found_within_one_step() {
        let mut f = ScaleFilter::new(ScaleParams::default(), 40.0, 90.0).unwrap();
        f.update(&frame_with_target(40.0, 90.0), Point2::new(100.0, 100.0), 1.0, 1.0);
        let est = f.estimate(&frame_with_target(44.0, 99.0), Point2::new(100.0, 100.0), 1.0).unwrap();
        assert!((est.s2d - 1.1).abs() <= 1.1 * 0.03 + 1e-9, "{:?} {:?}", est.s2d, est.scores);
    }

    #[test]
    fn levels_off_image_score_zero() {
        let img = frame_with_target(40.0, 90.0);
        let mut f = ScaleFilter::new(ScaleParams::default(), 40.0, 90.0).unwrap();
        f.update(&img, Point2::new(100.0, 100.0), 1.0, 1.0);
        let est = f.estimate(&img, Point2::new(-300.0, 100.0), 1.0).unwrap();
        assert!(est.scores.iter().all(|&s| s == 0.0));
    }
}
