//! Kernelized correlation filter: ridge regression over all cyclic shifts of
//! the target appearance, solved element-wise in the Fourier domain.
//!
//! Shift convention: a patch whose content moved by `d` cells relative to
//! the template produces a response peak at `d` (wrapped to `0..W`, `0..H`).

use num_complex::Complex64;

use crate::error::TrackerError;

use super::features::FeatureMap;
use super::spectral::Fft2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// Plain inner product.
    Linear,
    /// `exp(-|a - b|^2 / sigma^2)` on unit-normalized feature maps.
    Gaussian { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KcfParams {
    pub lambda: f64,
    /// Label bandwidth in cells.
    pub output_sigma: f64,
    pub kernel: Kernel,
    pub learning_rate: f64,
}

impl Default for KcfParams {
    fn default() -> Self {
        Self { lambda: 1e-4, output_sigma: 0.5, kernel: Kernel::Gaussian { sigma: 0.5 }, learning_rate: 0.02 }
    }
}

impl KcfParams {
    pub fn validate(&self) -> Result<(), TrackerError> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(TrackerError::InvalidParameter("lambda must be positive".into()));
        }
        if !(self.output_sigma > 0.0) {
            return Err(TrackerError::InvalidParameter("output sigma must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.learning_rate) {
            return Err(TrackerError::InvalidParameter("learning rate must be in [0, 1]".into()));
        }
        if let Kernel::Gaussian { sigma } = self.kernel {
            if !(sigma > 0.0) {
                return Err(TrackerError::InvalidParameter("kernel bandwidth must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Learned filter: dual coefficients in the Fourier domain plus the
/// appearance template they were trained against.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterModel {
    alpha_hat: Vec<Complex64>,
    template: FeatureMap,
    template_hat: Vec<Vec<Complex64>>,
    label_hat: Vec<Complex64>,
    params: KcfParams,
}

impl FilterModel {
    pub fn alpha_hat(&self) -> &[Complex64] {
        &self.alpha_hat
    }

    pub fn template(&self) -> &FeatureMap {
        &self.template
    }

    pub fn label_hat(&self) -> &[Complex64] {
        &self.label_hat
    }

    pub fn params(&self) -> &KcfParams {
        &self.params
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.template.dims()
    }

    /// Dual coefficients in the spatial domain.
    pub fn alpha(&self, fft: &Fft2) -> Vec<f64> {
        fft.inverse_real(self.alpha_hat.clone())
    }

    /// Moves template and coefficients toward `fresh` by `rate`.
    pub fn interpolate(&mut self, fresh: &FilterModel, rate: f64) {
        for (a, b) in self.alpha_hat.iter_mut().zip(&fresh.alpha_hat) {
            *a = *a * (1.0 - rate) + *b * rate;
        }
        self.template.interpolate(&fresh.template, rate);
        for (plane, fresh_plane) in self.template_hat.iter_mut().zip(&fresh.template_hat) {
            for (a, b) in plane.iter_mut().zip(fresh_plane) {
                *a = *a * (1.0 - rate) + *b * rate;
            }
        }
    }
}

/// Periodic 2-D Gaussian with its peak at cell (0, 0).
pub fn gaussian_label(width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let wrap = |i: usize, n: usize| {
        let i = i as f64;
        let n = n as f64;
        if i > n / 2.0 {
            i - n
        } else {
            i
        }
    };
    let mut y = Vec::with_capacity(width * height);
    for r in 0..height {
        let dy = wrap(r, height);
        for c in 0..width {
            let dx = wrap(c, width);
            y.push((-0.5 * (dx * dx + dy * dy) / (sigma * sigma)).exp());
        }
    }
    y
}

fn spectra(features: &FeatureMap, fft: &Fft2) -> Vec<Vec<Complex64>> {
    features.channels().iter().map(|c| fft.forward_real(c)).collect()
}

/// `q[m] = k(shift_m(x), z)` for every cyclic shift `m` of `x`.
fn kernel_correlation(
    kernel: Kernel,
    x_hat: &[Vec<Complex64>],
    x_norm2: f64,
    z_hat: &[Vec<Complex64>],
    z_norm2: f64,
    fft: &Fft2,
) -> Vec<f64> {
    let n = fft.len();
    let mut acc = vec![Complex64::new(0.0, 0.0); n];
    for (xc, zc) in x_hat.iter().zip(z_hat) {
        for ((a, x), z) in acc.iter_mut().zip(xc).zip(zc) {
            *a += x.conj() * z;
        }
    }
    let linear = fft.inverse_real(acc);
    match kernel {
        Kernel::Linear => linear,
        Kernel::Gaussian { sigma } => {
            let (nx, nz) = (x_norm2.sqrt(), z_norm2.sqrt());
            let s2 = sigma * sigma;
            linear
                .into_iter()
                .map(|l| {
                    let d2 = if nx > 0.0 && nz > 0.0 {
                        (2.0 - 2.0 * l / (nx * nz)).max(0.0)
                    } else if nx > 0.0 || nz > 0.0 {
                        1.0
                    } else {
                        0.0
                    };
                    (-d2 / s2).exp()
                })
                .collect()
        }
    }
}

pub fn train_filter(features: &FeatureMap, params: &KcfParams, fft: &Fft2) -> Result<FilterModel, TrackerError> {
    params.validate()?;
    let (w, h, _) = features.dims();
    if fft.width() != w || fft.height() != h {
        return Err(TrackerError::InvalidParameter("FFT plan does not match the feature map".into()));
    }
    let template_hat = spectra(features, fft);
    let norm2 = features.squared_norm();
    let kss = kernel_correlation(params.kernel, &template_hat, norm2, &template_hat, norm2, fft);
    let kss_hat = fft.forward_real(&kss);
    let label_hat = fft.forward_real(&gaussian_label(w, h, params.output_sigma));
    let alpha_hat = label_hat
        .iter()
        .zip(&kss_hat)
        .map(|(y, k)| y / (k + params.lambda))
        .collect();
    Ok(FilterModel { alpha_hat, template: features.clone(), template_hat, label_hat, params: *params })
}

/// Correlation output over all shifts plus its peak statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    /// Location of the largest (signed) response, `(column, row)` in cells.
    peak_pos: (usize, usize),
    /// Largest response magnitude.
    peak_value: f64,
    energy: f64,
    pce: f64,
}

impl ResponseMap {
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self, TrackerError> {
        if width * height != values.len() {
            return Err(TrackerError::InvalidResponse);
        }
        let (peak_value, energy) = peak_and_energy(&values)?;
        let (idx, _) = values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
        Ok(Self {
            width,
            height,
            peak_pos: (idx % width, idx / width),
            peak_value,
            energy,
            pce: peak_value * peak_value / energy,
            values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn peak_pos(&self) -> (usize, usize) {
        self.peak_pos
    }

    pub fn peak_value(&self) -> f64 {
        self.peak_value
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn pce(&self) -> f64 {
        self.pce
    }

    pub fn at(&self, col: isize, row: isize) -> f64 {
        let c = col.rem_euclid(self.width as isize) as usize;
        let r = row.rem_euclid(self.height as isize) as usize;
        self.values[r * self.width + c]
    }

    /// Peak displacement in cells, wrapped to `(-W/2, W/2]`, refined by a
    /// least-squares quadratic over the 3x3 neighborhood of the peak.
    pub fn peak_offset(&self) -> (f64, f64) {
        let (pc, pr) = self.peak_pos;
        let wrap = |p: usize, n: usize| if p > n / 2 { p as f64 - n as f64 } else { p as f64 };
        let (dx, dy) = subcell_refinement(self, pc as isize, pr as isize);
        (wrap(pc, self.width) + dx, wrap(pr, self.height) + dy)
    }
}

fn subcell_refinement(resp: &ResponseMap, pc: isize, pr: isize) -> (f64, f64) {
    if resp.width < 3 || resp.height < 3 {
        return (0.0, 0.0);
    }
    // orthogonal basis over {-1,0,1}^2: 1, x, y, x^2-2/3, y^2-2/3, xy
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for j in -1..=1 {
        for i in -1..=1 {
            let f = resp.at(pc + i, pr + j);
            let (x, y) = (i as f64, j as f64);
            sx += x * f;
            sy += y * f;
            sxx += (x * x - 2.0 / 3.0) * f;
            syy += (y * y - 2.0 / 3.0) * f;
            sxy += x * y * f;
        }
    }
    let b = sx / 6.0;
    let c = sy / 6.0;
    let d = sxx / 2.0;
    let f = syy / 2.0;
    let e = sxy / 4.0;
    // stationary point of b x + c y + d x^2 + f y^2 + e x y
    let det = 4.0 * d * f - e * e;
    if d < 0.0 && det > 0.0 {
        let x = (-2.0 * f * b + e * c) / det;
        let y = (-2.0 * d * c + e * b) / det;
        if x.is_finite() && y.is_finite() {
            return (x.clamp(-1.0, 1.0), y.clamp(-1.0, 1.0));
        }
    }
    (0.0, 0.0)
}

fn peak_and_energy(values: &[f64]) -> Result<(f64, f64), TrackerError> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(TrackerError::InvalidResponse);
    }
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let energy: f64 = values.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return Err(TrackerError::ZeroResponse);
    }
    Ok((peak, energy))
}

/// Peak-to-correlation energy: squared peak magnitude over the map energy.
pub fn compute_pce(resp: &[f64]) -> Result<f64, TrackerError> {
    let (peak, energy) = peak_and_energy(resp)?;
    Ok(peak * peak / energy)
}

pub fn detect(model: &FilterModel, features: &FeatureMap, fft: &Fft2) -> Result<ResponseMap, TrackerError> {
    if features.dims() != model.dims() {
        return Err(TrackerError::DimensionMismatch { expected: model.dims(), got: features.dims() });
    }
    let z_hat = spectra(features, fft);
    let q = kernel_correlation(
        model.params.kernel,
        &model.template_hat,
        model.template.squared_norm(),
        &z_hat,
        features.squared_norm(),
        fft,
    );
    let q_hat = fft.forward_real(&q);
    let prod = q_hat.iter().zip(&model.alpha_hat).map(|(q, a)| q * a.conj()).collect();
    let values = fft.inverse_real(prod);
    ResponseMap::from_values(features.width(), features.height(), values)
}
