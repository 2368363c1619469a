//! Correlation-filter tracking of the person box in camera frames.

pub mod color_names;
pub mod features;
pub mod kcf;
pub mod scale;
pub mod spectral;

use nalgebra::{Point2, Vector2};
use serde::Serialize;

use crate::camera::{project_point, BoundingBox, CameraCalibration, PersonModel};
use crate::error::TrackerError;
use crate::fusion::TargetState3D;
use crate::raster::Raster;

pub use features::{extract_features, FeatureMap, FeatureParams, TemplateSize};
pub use kcf::{compute_pce, detect, train_filter, FilterModel, KcfParams, Kernel, ResponseMap};
pub use scale::{fuse_scale, scale_from_3d, ScaleFilter, ScaleParams, ScaleSearch};
use spectral::Fft2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerParams {
    pub features: FeatureParams,
    pub kcf: KcfParams,
    pub scale: ScaleParams,
    pub pce_threshold: f64,
    /// Upper bound on the resampled search window area in pixels.
    pub max_template_area: f64,
    pub min_scale: f64,
    pub max_scale: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            features: FeatureParams::default(),
            kcf: KcfParams::default(),
            scale: ScaleParams::default(),
            pce_threshold: 0.2,
            max_template_area: 96.0 * 96.0,
            min_scale: 0.2,
            max_scale: 5.0,
        }
    }
}

impl TrackerParams {
    pub fn validate(&self) -> Result<(), TrackerError> {
        self.kcf.validate()?;
        if !(self.pce_threshold > 0.0 && self.pce_threshold < 1.0) {
            return Err(TrackerError::InvalidParameter("PCE threshold must be in (0, 1)".into()));
        }
        if self.features.cell_size == 0 || !(self.features.padding >= 1.0) || self.features.orientation_bins == 0 {
            return Err(TrackerError::InvalidParameter("invalid feature parameters".into()));
        }
        if !(self.max_template_area > 0.0) {
            return Err(TrackerError::InvalidParameter("template area must be positive".into()));
        }
        if !(self.min_scale > 0.0 && self.min_scale <= 1.0 && self.max_scale >= 1.0) {
            return Err(TrackerError::InvalidParameter("scale bounds must bracket 1".into()));
        }
        Ok(())
    }
}

/// Per-frame scale quantities; absent entries were not computed this frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleEstimate {
    pub s2d: Option<f64>,
    pub sigma2d: Option<f64>,
    pub s3d: Option<f64>,
    pub sigma3d: Option<f64>,
    pub fused: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    /// Detected target center; the camera measurement for this frame.
    pub measurement: Point2<f64>,
    /// Box carried to the next frame.
    pub bbox: BoundingBox,
    pub pce: f64,
    pub gated: bool,
    pub scale: ScaleEstimate,
}

/// One line of the tracker trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub frame: usize,
    pub stamp: f64,
    pub u: f64,
    pub v: f64,
    pub box_u: f64,
    pub box_v: f64,
    pub box_width: f64,
    pub box_height: f64,
    pub scale: f64,
    pub pce: f64,
    pub gated: bool,
}

impl TraceRecord {
    pub fn new(frame: usize, stamp: f64, r: &FrameResult) -> Self {
        Self {
            frame,
            stamp,
            u: r.measurement.x,
            v: r.measurement.y,
            box_u: r.bbox.center.x,
            box_v: r.bbox.center.y,
            box_width: r.bbox.width,
            box_height: r.bbox.height,
            scale: r.bbox.scale,
            pce: r.pce,
            gated: r.gated,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrackerState {
    params: TrackerParams,
    model: FilterModel,
    scale_model: ScaleFilter,
    bbox: BoundingBox,
    base_width: f64,
    base_height: f64,
    template: TemplateSize,
    fft: Fft2,
    last_pce: f64,
    update_gated: bool,
    model_writes: u64,
}

impl TrackerState {
    /// Trains the filters on the initial box; its size defines scale 1.
    pub fn init(image: &Raster, bbox: BoundingBox, params: TrackerParams) -> Result<Self, TrackerError> {
        params.validate()?;
        let bbox = BoundingBox::new(bbox.center, bbox.width, bbox.height, 1.0)?;
        let template = TemplateSize::fitted(&bbox, &params.features, params.max_template_area);
        let features = extract_features(image, &bbox, &params.features, template)?;
        let fft = Fft2::new(features.width(), features.height());
        let model = train_filter(&features, &params.kcf, &fft)?;
        let mut scale_model = ScaleFilter::new(params.scale, bbox.width, bbox.height)?;
        scale_model.update(image, bbox.center, 1.0, 1.0);
        Ok(Self {
            params,
            model,
            scale_model,
            bbox,
            base_width: bbox.width,
            base_height: bbox.height,
            template,
            fft,
            last_pce: 1.0,
            update_gated: false,
            model_writes: 0,
        })
    }

    pub fn params(&self) -> &TrackerParams {
        &self.params
    }

    pub fn model(&self) -> &FilterModel {
        &self.model
    }

    pub fn scale_model(&self) -> &ScaleFilter {
        &self.scale_model
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    /// Box height in pixels at scale 1.
    pub fn initial_height(&self) -> f64 {
        self.base_height
    }

    pub fn template_size(&self) -> TemplateSize {
        self.template
    }

    pub fn last_pce(&self) -> f64 {
        self.last_pce
    }

    pub fn update_gated(&self) -> bool {
        self.update_gated
    }

    /// Number of appearance-model updates since initialization.
    pub fn model_writes(&self) -> u64 {
        self.model_writes
    }

    pub fn pce_threshold(&self) -> f64 {
        self.params.pce_threshold
    }

    pub fn extract(&self, image: &Raster, bbox: &BoundingBox) -> Result<FeatureMap, TrackerError> {
        extract_features(image, bbox, &self.params.features, self.template)
    }

    /// Blends a filter trained on `features` into the model when `pce`
    /// clears the threshold; otherwise leaves it untouched and marks the
    /// frame as gated.
    pub fn update_model(&mut self, features: &FeatureMap, pce: f64) -> Result<(), TrackerError> {
        if !(pce > self.params.pce_threshold) {
            self.update_gated = true;
            return Ok(());
        }
        self.update_gated = false;
        let fresh = train_filter(features, &self.params.kcf, &self.fft)?;
        self.model.interpolate(&fresh, self.params.kcf.learning_rate);
        self.model_writes += 1;
        Ok(())
    }

    pub fn estimate_scale_2d(&self, image: &Raster, center: Point2<f64>) -> Result<ScaleSearch, TrackerError> {
        self.scale_model.estimate(image, center, self.bbox.scale)
    }

    /// Image pixels per template pixel along x and y.
    fn pixel_pitch(&self) -> Vector2<f64> {
        let p = self.params.features.padding;
        Vector2::new(
            self.bbox.width * p / self.template.width_px as f64,
            self.bbox.height * p / self.template.height_px as f64,
        )
    }

    /// Detects the target around the previous box, re-estimates its scale
    /// and updates the appearance models when the detection is confident.
    pub fn track_frame(
        &mut self,
        image: &Raster,
        x_k: Option<&TargetState3D>,
        person: &PersonModel,
        cal: &CameraCalibration,
    ) -> Result<FrameResult, TrackerError> {
        let response = self.extract(image, &self.bbox).and_then(|search| detect(&self.model, &search, &self.fft));
        let (offset, pce) = match response {
            Ok(resp) => (resp.peak_offset(), resp.pce()),
            Err(TrackerError::ZeroResponse | TrackerError::EmptyIntersection) => ((0.0, 0.0), 0.0),
            Err(e) => return Err(e),
        };
        self.last_pce = pce;
        let cs = self.params.features.cell_size as f64;
        let pitch = self.pixel_pitch();
        let detected = self.bbox.center + Vector2::new(offset.0 * cs * pitch.x, offset.1 * cs * pitch.y);
        let confident = pce > self.params.pce_threshold;

        let center = if confident {
            detected
        } else {
            x_k.and_then(|s| project_point(&s.x, cal).ok()).unwrap_or(self.bbox.center)
        };

        let projected = match x_k {
            Some(s) => Some(scale_from_3d(s, person, cal, self.base_height)?),
            None => None,
        };
        let mut est = ScaleEstimate { s2d: None, sigma2d: None, s3d: None, sigma3d: None, fused: self.bbox.scale };
        if let Some((s3d, sigma3d)) = projected {
            est.s3d = Some(s3d);
            est.sigma3d = Some(sigma3d);
        }
        if confident {
            let search = self.estimate_scale_2d(image, center)?;
            est.s2d = Some(search.s2d);
            est.sigma2d = Some(search.sigma2d);
            est.fused = match projected {
                Some((s3d, sigma3d)) if sigma3d > 0.0 => fuse_scale(search.s2d, search.sigma2d, s3d, sigma3d),
                Some((s3d, _)) => s3d,
                None => search.s2d,
            };
        } else if let Some((s3d, _)) = projected {
            est.fused = s3d;
        }
        if !est.fused.is_finite() {
            est.fused = self.bbox.scale;
        }
        let s_k = est.fused.clamp(self.params.min_scale, self.params.max_scale);

        self.bbox = BoundingBox::new(center, self.base_width * s_k, self.base_height * s_k, s_k)?;

        if confident {
            let fresh = self.extract(image, &self.bbox)?;
            self.update_model(&fresh, pce)?;
            self.scale_model.update(image, center, s_k, self.params.kcf.learning_rate);
        } else {
            self.update_gated = true;
        }

        Ok(FrameResult { measurement: detected, bbox: self.bbox, pce, gated: self.update_gated, scale: est })
    }
}

pub fn write_trace<W: std::io::Write>(records: &[TraceRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
pub(crate) mod test_scenes {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::raster::{Channels, Raster};

    /// Textured background with a textured rectangle centered at (`cx`, `cy`).
    pub fn scene(w: usize, h: usize, cx: f64, cy: f64, tw: f64, th: f64, seed: u64) -> Raster {
        let mut bg = ChaCha8Rng::seed_from_u64(seed);
        let mut img = Raster::filled(w, h, Channels::Rgb, 0);
        for y in 0..h {
            for x in 0..w {
                let g = 90 + bg.gen_range(0..40u8);
                img.set_pixel(x, y, [g, g + 10, g]);
            }
        }
        let (x0, y0) = (cx - tw / 2.0, cy - th / 2.0);
        for y in 0..h {
            for x in 0..w {
                let (fx, fy) = (x as f64 + 0.5 - x0, y as f64 + 0.5 - y0);
                if fx >= 0.0 && fx < tw && fy >= 0.0 && fy < th {
                    let stripe = ((fy / 6.0) as usize + (fx / 5.0) as usize) % 2;
                    let shirt = fy < th * 0.55;
                    let c = match (shirt, stripe) {
                        (true, 0) => [200, 40, 40],
                        (true, _) => [240, 200, 60],
                        (false, 0) => [30, 40, 120],
                        (false, _) => [60, 80, 200],
                    };
                    img.set_pixel(x, y, c);
                }
            }
        }
        img
    }

    pub fn occlude(img: &mut Raster, x0: usize, y0: usize, x1: usize, y1: usize) {
        for y in y0..y1.min(img.height()) {
            for x in x0..x1.min(img.width()) {
                let v = (((x / 3) * 7 + (y / 3) * 13) % 5) as u8 * 12 + 120;
                img.set_pixel(x, y, [v, v, v]);
            }
        }
    }
}
