//! Static line plots of truth against each mode's estimate, the PCE over
//! time, and annotated debug frames. No text; colors identify the series.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use imageproc::drawing::{draw_hollow_rect_mut, draw_line_segment_mut};
use imageproc::rect::Rect;

use crate::camera::BoundingBox;
use crate::error::HarnessError;
use crate::raster::Raster;

use super::{Mode, RunReport};

const WIDTH: u32 = 960;
const HEIGHT: u32 = 320;
const MARGIN: f32 = 24.0;

const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const FRAME: Rgb<u8> = Rgb([150, 150, 150]);
const GRID: Rgb<u8> = Rgb([228, 228, 228]);
const TRUTH: Rgb<u8> = Rgb([0, 0, 0]);
const THRESHOLD: Rgb<u8> = Rgb([200, 120, 0]);
const OCCLUDED: Rgb<u8> = Rgb([255, 236, 236]);

pub fn mode_color(mode: Mode) -> Rgb<u8> {
    match mode {
        Mode::Fused => Rgb([30, 90, 220]),
        Mode::Camera => Rgb([210, 40, 40]),
        Mode::Sonar => Rgb([20, 150, 60]),
    }
}

pub struct Series<'a> {
    pub color: Rgb<u8>,
    pub points: &'a [(f64, f64)],
}

/// Axis-aligned plot of several series sharing one time axis. Shaded
/// spans mark `bands` (time intervals), dashed lines mark `levels`.
pub fn line_plot(series: &[Series<'_>], bands: &[(f64, f64)], levels: &[f64]) -> Result<RgbImage, HarnessError> {
    let all = series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut t0, mut t1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(t, v) in all {
        t0 = t0.min(t);
        t1 = t1.max(t);
        v0 = v0.min(v);
        v1 = v1.max(v);
    }
    if !t0.is_finite() {
        return Err(HarnessError::NoData);
    }
    for &l in levels {
        v0 = v0.min(l);
        v1 = v1.max(l);
    }
    if t1 - t0 < 1e-9 {
        t1 = t0 + 1.0;
    }
    let pad = ((v1 - v0) * 0.05).max(1e-3);
    let (v0, v1) = (v0 - pad, v1 + pad);

    let (w, h) = (WIDTH as f32, HEIGHT as f32);
    let px = |t: f64| MARGIN + ((t - t0) / (t1 - t0)) as f32 * (w - 2.0 * MARGIN);
    let py = |v: f64| h - MARGIN - ((v - v0) / (v1 - v0)) as f32 * (h - 2.0 * MARGIN);

    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, BACKGROUND);
    for &(a, b) in bands {
        let (xa, xb) = (px(a.max(t0)).round(), px(b.min(t1)).round());
        if xb > xa {
            let r = Rect::at(xa as i32, MARGIN as i32).of_size((xb - xa) as u32, (h - 2.0 * MARGIN) as u32);
            imageproc::drawing::draw_filled_rect_mut(&mut img, r, OCCLUDED);
        }
    }
    for k in 1..10 {
        let y = MARGIN + k as f32 * (h - 2.0 * MARGIN) / 10.0;
        draw_line_segment_mut(&mut img, (MARGIN, y), (w - MARGIN, y), GRID);
    }
    for &l in levels {
        let y = py(l);
        let mut x = MARGIN;
        while x < w - MARGIN {
            draw_line_segment_mut(&mut img, (x, y), ((x + 6.0).min(w - MARGIN), y), THRESHOLD);
            x += 12.0;
        }
    }
    let border = Rect::at(MARGIN as i32, MARGIN as i32).of_size((w - 2.0 * MARGIN) as u32, (h - 2.0 * MARGIN) as u32);
    draw_hollow_rect_mut(&mut img, border, FRAME);

    for s in series {
        let mut prev: Option<(f32, f32)> = None;
        for &(t, v) in s.points {
            if !(t.is_finite() && v.is_finite()) {
                prev = None;
                continue;
            }
            let p = (px(t), py(v));
            if let Some(q) = prev {
                draw_line_segment_mut(&mut img, q, p, s.color);
            }
            prev = Some(p);
        }
    }
    Ok(img)
}

/// Writes `plot_x.png`, `plot_y.png`, `plot_z.png` and `plot_pce.png`.
pub fn emit_plots(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if report.frames.is_empty() || report.modes.iter().all(|m| m.series.is_empty()) {
        return Err(HarnessError::NoData);
    }
    std::fs::create_dir_all(dir)?;
    let bands: Vec<(f64, f64)> = report.scenario.occlusions.iter().map(|o| (o.start, o.end)).collect();
    let truth: Vec<[(f64, f64); 3]> = report
        .truth
        .samples
        .iter()
        .map(|s| [(s.stamp, s.position.x), (s.stamp, s.position.y), (s.stamp, s.position.z)])
        .collect();
    let mut written = Vec::new();
    for (axis, name) in ["x", "y", "z"].into_iter().enumerate() {
        let truth_pts: Vec<(f64, f64)> = truth.iter().map(|p| p[axis]).collect();
        let est: Vec<(Mode, Vec<(f64, f64)>)> = report
            .modes
            .iter()
            .map(|m| {
                let pts = m.series.iter().map(|s| (s.stamp, [s.x, s.y, s.z][axis])).collect();
                (m.mode, pts)
            })
            .collect();
        let mut series = vec![Series { color: TRUTH, points: &truth_pts }];
        series.extend(est.iter().map(|(mode, pts)| Series { color: mode_color(*mode), points: pts }));
        let path = dir.join(format!("plot_{name}.png"));
        line_plot(&series, &bands, &[])?.save(&path)?;
        written.push(path);
    }
    let pce: Vec<(f64, f64)> = report.frames.iter().skip(1).map(|f| (f.stamp, f.pce)).collect();
    let path = dir.join("plot_pce.png");
    let threshold = report.scenario.tracker.pce_threshold;
    line_plot(&[Series { color: mode_color(Mode::Fused), points: &pce }], &bands, &[threshold, 0.0])?.save(&path)?;
    written.push(path);
    Ok(written)
}

pub fn raster_to_image(r: &Raster) -> RgbImage {
    RgbImage::from_fn(r.width() as u32, r.height() as u32, |x, y| Rgb(r.pixel(x as usize, y as usize)))
}

fn box_rect(b: &BoundingBox) -> Option<Rect> {
    let (w, h) = (b.width.round() as u32, b.height.round() as u32);
    (w > 0 && h > 0).then(|| Rect::at(b.left().round() as i32, b.top().round() as i32).of_size(w, h))
}

/// Frame with the tracked box in blue and the true box in green.
pub fn annotated_frame(r: &Raster, tracked: &BoundingBox, truth: Option<&BoundingBox>) -> RgbImage {
    let mut img = raster_to_image(r);
    if let Some(rect) = truth.and_then(box_rect) {
        draw_hollow_rect_mut(&mut img, rect, Rgb([0, 220, 0]));
    }
    if let Some(rect) = box_rect(tracked) {
        draw_hollow_rect_mut(&mut img, rect, Rgb([0, 80, 255]));
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_series_is_an_error() {
        assert!(matches!(line_plot(&[], &[], &[]), Err(HarnessError::NoData)));
        let nan = [(f64::NAN, 1.0)];
        assert!(matches!(line_plot(&[Series { color: TRUTH, points: &nan }], &[], &[]), Err(HarnessError::NoData)));
    }

    #[test]
    fn plots_are_deterministic_and_drawn() {
        let pts: Vec<(f64, f64)> = (0..50).map(|i| (i as f64 * 0.1, (i as f64 * 0.3).sin())).collect();
        let a = line_plot(&[Series { color: TRUTH, points: &pts }], &[(1.0, 2.0)], &[0.2]).unwrap();
        let b = line_plot(&[Series { color: TRUTH, points: &pts }], &[(1.0, 2.0)], &[0.2]).unwrap();
        assert_eq!(a, b);
        assert!(a.pixels().any(|p| *p == TRUTH));
        assert!(a.pixels().any(|p| *p == OCCLUDED));
    }

    #[test]
    fn constant_series_still_plots() {
        let pts = [(0.0, 1.0), (0.0, 1.0)];
        assert!(line_plot(&[Series { color: TRUTH, points: &pts }], &[], &[]).is_ok());
    }
}
