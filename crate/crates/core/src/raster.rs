//! 8-bit row-major raster frames (grayscale or RGB) and sub-pixel sampling
//! with border replication.

use crate::error::TrackerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channels {
    Gray = 1,
    Rgb = 3,
}

impl Channels {
    pub fn count(self) -> usize {
        self as usize
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: Channels,
    data: Vec<u8>,
}

impl std::fmt::Debug for Raster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Raster")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: Channels, data: Vec<u8>) -> Result<Self, TrackerError> {
        if width == 0 || height == 0 {
            return Err(TrackerError::InvalidRaster("zero-sized raster".into()));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels.count()))
            .ok_or_else(|| TrackerError::InvalidRaster("raster size overflows".into()))?;
        if data.len() != expected {
            return Err(TrackerError::InvalidRaster(format!(
                "expected {expected} bytes for {width}x{height}x{}, got {}",
                channels.count(),
                data.len()
            )));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn filled(width: usize, height: usize, channels: Channels, value: u8) -> Self {
        assert!(width > 0 && height > 0, "zero-sized raster");
        Self { width, height, channels, data: vec![value; width * height * channels.count()] }
    }

    /// Decodes a raw frame: a channel count (1 or 3) in byte 0, then little-endian
    /// u16 width and height, then the row-major pixel bytes.
    pub fn from_raw_frame(bytes: &[u8]) -> Result<Self, TrackerError> {
        if bytes.len() < 5 {
            return Err(TrackerError::InvalidRaster("truncated header".into()));
        }
        let channels = match bytes[0] {
            1 => Channels::Gray,
            3 => Channels::Rgb,
            c => return Err(TrackerError::InvalidRaster(format!("unsupported channel count {c}"))),
        };
        let width = u16::from_le_bytes([bytes[1], bytes[2]]) as usize;
        let height = u16::from_le_bytes([bytes[3], bytes[4]]) as usize;
        Self::new(width, height, channels, bytes[5..].to_vec())
    }

    pub fn to_raw_frame(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + self.data.len());
        out.push(self.channels.count() as u8);
        out.extend_from_slice(&(self.width as u16).to_le_bytes());
        out.extend_from_slice(&(self.height as u16).to_le_bytes());
        out.extend_from_slice(&self.data);
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> Channels {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * self.channels.count();
        match self.channels {
            Channels::Gray => [self.data[i]; 3],
            Channels::Rgb => [self.data[i], self.data[i + 1], self.data[i + 2]],
        }
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * self.channels.count();
        match self.channels {
            Channels::Gray => {
                self.data[i] = ((u16::from(rgb[0]) + u16::from(rgb[1]) + u16::from(rgb[2])) / 3) as u8
            }
            Channels::Rgb => self.data[i..i + 3].copy_from_slice(&rgb),
        }
    }

    /// Pixel with coordinates clamped to the image (border replication).
    #[inline]
    pub fn pixel_clamped(&self, x: isize, y: isize) -> [u8; 3] {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.pixel(x, y)
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers at
    /// integer positions), values in [0, 1].
    pub fn sample(&self, x: f64, y: f64) -> [f64; 3] {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as isize, y0 as isize);
        let p00 = self.pixel_clamped(xi, yi);
        let p10 = self.pixel_clamped(xi + 1, yi);
        let p01 = self.pixel_clamped(xi, yi + 1);
        let p11 = self.pixel_clamped(xi + 1, yi + 1);
        let mut out = [0.0; 3];
        for c in 0..3 {
            let top = f64::from(p00[c]) * (1.0 - fx) + f64::from(p10[c]) * fx;
            let bot = f64::from(p01[c]) * (1.0 - fx) + f64::from(p11[c]) * fx;
            out[c] = (top * (1.0 - fy) + bot * fy) / 255.0;
        }
        out
    }
}

/// A resampled RGB window, row-major, values in [0, 1].
#[derive(Debug, Clone)]
pub struct Patch {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<[f64; 3]>,
    pub grayscale_source: bool,
}

impl Patch {
    pub fn gray(&self, x: usize, y: usize) -> f64 {
        let p = self.rgb[y * self.width + x];
        (p[0] + p[1] + p[2]) / 3.0
    }
}

/// Resamples the window of `win_w` x `win_h` image pixels centered at
/// (`cx`, `cy`) onto an `out_w` x `out_h` grid. Each output pixel averages a
/// small grid of bilinear samples when downsampling. Pixels outside the
/// image are replicated from the border; a window that misses the image
/// entirely is an error.
#[allow(clippy::too_many_arguments)]
pub fn sample_window(
    img: &Raster,
    cx: f64,
    cy: f64,
    win_w: f64,
    win_h: f64,
    out_w: usize,
    out_h: usize,
) -> Result<Patch, TrackerError> {
    if !(win_w > 0.0 && win_h > 0.0) || out_w == 0 || out_h == 0 || !cx.is_finite() || !cy.is_finite() {
        return Err(TrackerError::EmptyIntersection);
    }
    let left = cx - win_w / 2.0;
    let top = cy - win_h / 2.0;
    // pixel i covers [i - 0.5, i + 0.5)
    if left + win_w <= -0.5
        || top + win_h <= -0.5
        || left >= img.width as f64 - 0.5
        || top >= img.height as f64 - 0.5
    {
        return Err(TrackerError::EmptyIntersection);
    }
    let sx = win_w / out_w as f64;
    let sy = win_h / out_h as f64;
    let nx = sx.ceil().max(1.0) as usize;
    let ny = sy.ceil().max(1.0) as usize;
    let norm = 1.0 / (nx * ny) as f64;
    let mut rgb = Vec::with_capacity(out_w * out_h);
    for oy in 0..out_h {
        for ox in 0..out_w {
            let mut acc = [0.0; 3];
            for j in 0..ny {
                let y = top + sy * (oy as f64 + (j as f64 + 0.5) / ny as f64) - 0.5;
                for i in 0..nx {
                    let x = left + sx * (ox as f64 + (i as f64 + 0.5) / nx as f64) - 0.5;
                    let s = img.sample(x, y);
                    acc[0] += s[0];
                    acc[1] += s[1];
                    acc[2] += s[2];
                }
            }
            rgb.push([acc[0] * norm, acc[1] * norm, acc[2] * norm]);
        }
    }
    Ok(Patch { width: out_w, height: out_h, rgb, grayscale_source: img.channels == Channels::Gray })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_buffer_length() {
        assert!(Raster::new(4, 4, Channels::Rgb, vec![0; 47]).is_err());
        assert!(Raster::new(0, 4, Channels::Gray, vec![]).is_err());
        assert!(Raster::new(4, 4, Channels::Gray, vec![0; 16]).is_ok());
    }

    #[test]
    fn raw_frame_round_trip() {
        let mut r = Raster::filled(3, 2, Channels::Rgb, 7);
        r.set_pixel(2, 1, [1, 2, 3]);
        let back = Raster::from_raw_frame(&r.to_raw_frame()).unwrap();
        assert_eq!(back, r);
        assert!(Raster::from_raw_frame(&[2, 1, 0, 1, 0, 0, 0]).is_err());
        assert!(Raster::from_raw_frame(&[1, 1]).is_err());
    }

    #[test]
    fn bilinear_midpoint_and_border_replication() {
        let mut r = Raster::filled(2, 1, Channels::Gray, 0);
        r.set_pixel(1, 0, [255, 255, 255]);
        assert!((r.sample(0.5, 0.0)[0] - 0.5).abs() < 1e-12);
        assert_eq!(r.sample(-10.0, -3.0)[0], 0.0);
        assert_eq!(r.sample(10.0, 3.0)[0], 1.0);
    }

    #[test]
    fn window_outside_image_is_rejected_but_partial_overlap_is_not() {
        let r = Raster::filled(10, 10, Channels::Gray, 100);
        assert!(matches!(
            sample_window(&r, -20.0, 5.0, 10.0, 10.0, 4, 4),
            Err(TrackerError::EmptyIntersection)
        ));
        let p = sample_window(&r, 0.0, 0.0, 10.0, 10.0, 4, 4).unwrap();
        assert!(p.rgb.iter().all(|v| (v[0] - 100.0 / 255.0).abs() < 1e-12));
    }
}
