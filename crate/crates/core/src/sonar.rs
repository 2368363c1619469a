//! Ultrasonic localization: one Gaussian-process reading model per receiver,
//! a grid search for the most probable planar position given four readings,
//! and the measurement function the filter uses for these estimates.
//!
//! Readings are acoustic path lengths in meters.

use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix2, Matrix2x3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::SonarError;

pub const RECEIVERS: usize = 4;

/// Squared-exponential kernel hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    pub length_scale: f64,
    pub signal_std: f64,
    pub noise_std: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self { length_scale: 0.5, signal_std: 0.2, noise_std: 0.02 }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<(), SonarError> {
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return Err(SonarError::InvalidInput("length scale must be positive".into()));
        }
        if !(self.signal_std > 0.0 && self.signal_std.is_finite()) {
            return Err(SonarError::InvalidInput("signal std must be positive".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(SonarError::InvalidInput("noise std must be non-negative".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn k(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let dx = a[0] - b[0];
        let dy = a[1] - b[1];
        let l2 = self.length_scale * self.length_scale;
        self.signal_std * self.signal_std * (-(dx * dx + dy * dy) / (2.0 * l2)).exp()
    }
}

/// GP regression from planar position to one receiver's reading, with a
/// constant prior mean equal to the training-target average.
#[derive(Debug, Clone)]
pub struct GprModel {
    inputs: Vec<[f64; 2]>,
    targets: Vec<f64>,
    kernel: KernelParams,
    prior_mean: f64,
    chol: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
}

pub fn gpr_fit(inputs: &[[f64; 2]], targets: &[f64], kernel: KernelParams) -> Result<GprModel, SonarError> {
    kernel.validate()?;
    if inputs.len() != targets.len() {
        return Err(SonarError::InvalidInput("inputs and targets differ in length".into()));
    }
    if inputs.len() < 2 {
        return Err(SonarError::InvalidInput("need at least two training points".into()));
    }
    if inputs.iter().flatten().chain(targets).any(|v| !v.is_finite()) {
        return Err(SonarError::InvalidInput("non-finite training data".into()));
    }
    let n = inputs.len();
    let prior_mean = targets.iter().sum::<f64>() / n as f64;
    let noise = kernel.noise_std * kernel.noise_std;
    let gram = DMatrix::from_fn(n, n, |i, j| kernel.k(inputs[i], inputs[j]) + if i == j { noise } else { 0.0 });
    let chol = Cholesky::new(gram).ok_or(SonarError::SingularGram)?;
    let centered = DVector::from_iterator(n, targets.iter().map(|t| t - prior_mean));
    let weights = chol.solve(&centered);
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(SonarError::SingularGram);
    }
    Ok(GprModel { inputs: inputs.to_vec(), targets: targets.to_vec(), kernel, prior_mean, chol, weights })
}

impl GprModel {
    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn inputs(&self) -> &[[f64; 2]] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Predictive mean and variance of a new reading at `q` (the variance
    /// includes the observation noise).
    pub fn predict(&self, q: [f64; 2]) -> (f64, f64) {
        let kq = DVector::from_iterator(self.inputs.len(), self.inputs.iter().map(|x| self.kernel.k(*x, q)));
        let mean = self.prior_mean + kq.dot(&self.weights);
        let v = self.chol.l().solve_lower_triangular(&kq).expect("Cholesky factor is nonsingular");
        let prior = self.kernel.signal_std * self.kernel.signal_std;
        let latent = (prior - v.norm_squared()).max(0.0);
        (mean, latent + self.kernel.noise_std * self.kernel.noise_std)
    }
}

pub fn gpr_predict(model: &GprModel, q: [f64; 2]) -> (f64, f64) {
    model.predict(q)
}

/// Receivers on a line along the robot's y axis, equally spaced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SonarArrayGeometry {
    pub receiver_y: [f64; RECEIVERS],
}

impl Default for SonarArrayGeometry {
    fn default() -> Self {
        Self { receiver_y: [-0.3, -0.1, 0.1, 0.3] }
    }
}

impl SonarArrayGeometry {
    pub fn validate(&self) -> Result<(), SonarError> {
        let y = &self.receiver_y;
        let gap = y[1] - y[0];
        if !(gap > 0.0) || y.windows(2).any(|w| ((w[1] - w[0]) - gap).abs() > 1e-9) {
            return Err(SonarError::InvalidInput("receivers must be equally spaced in increasing y".into()));
        }
        Ok(())
    }

    /// Noise-free path lengths from a target at planar position (`x_u`, `y_u`).
    pub fn ideal_readings(&self, x_u: f64, y_u: f64) -> [f64; RECEIVERS] {
        self.receiver_y.map(|yi| (x_u * x_u + (y_u - yi) * (y_u - yi)).sqrt())
    }
}

/// Rectangular search region sampled at a fixed resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub resolution: f64,
}

impl Default for PosteriorGrid {
    fn default() -> Self {
        Self { x_min: 0.5, x_max: 5.0, y_min: -2.0, y_max: 2.0, resolution: 0.05 }
    }
}

impl PosteriorGrid {
    pub fn validate(&self) -> Result<(), SonarError> {
        let ok = [self.x_min, self.x_max, self.y_min, self.y_max, self.resolution].iter().all(|v| v.is_finite())
            && self.x_min > 0.0
            && self.x_max >= self.x_min
            && self.y_max >= self.y_min
            && self.resolution > 0.0
            && self.shape().0 * self.shape().1 <= 4_000_000;
        if !ok {
            return Err(SonarError::InvalidInput("grid must be non-empty, in front of the array and of bounded size".into()));
        }
        Ok(())
    }

    pub fn shape(&self) -> (usize, usize) {
        let n = |lo: f64, hi: f64| ((hi - lo) / self.resolution + 1e-9).floor() as usize + 1;
        (n(self.x_min, self.x_max), n(self.y_min, self.y_max))
    }

    pub fn node(&self, ix: usize, iy: usize) -> [f64; 2] {
        [self.x_min + ix as f64 * self.resolution, self.y_min + iy as f64 * self.resolution]
    }

    pub fn nodes(&self) -> Vec<[f64; 2]> {
        let (nx, ny) = self.shape();
        (0..nx).flat_map(|ix| (0..ny).map(move |iy| (ix, iy))).map(|(ix, iy)| self.node(ix, iy)).collect()
    }

    pub fn refined(&self, factor: usize) -> Self {
        Self { resolution: self.resolution / factor as f64, ..*self }
    }
}

/// Most probable planar position with its covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SonarEstimate {
    pub x_u: f64,
    pub y_u: f64,
    pub covariance: Matrix2<f64>,
}

fn log_likelihood(readings: &[f64; RECEIVERS], stats: impl Iterator<Item = (f64, f64)>) -> f64 {
    stats
        .zip(readings)
        .map(|((m, v), u)| -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (u - m) * (u - m) / v))
        .sum()
}

fn node_log_posterior(models: &[GprModel; RECEIVERS], readings: &[f64; RECEIVERS], q: [f64; 2]) -> f64 {
    log_likelihood(readings, models.iter().map(|m| m.predict(q)))
}

/// First index of the largest finite value.
fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if v.is_finite() && best.map_or(true, |b| *v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Laplace covariance: the inverse Hessian of the negative log-posterior at
/// the peak by central differences, with eigenvalues floored so no axis
/// exceeds `max_std`, plus the grid quantization variance.
fn laplace_covariance(
    models: &[GprModel; RECEIVERS],
    readings: &[f64; RECEIVERS],
    peak: [f64; 2],
    resolution: f64,
) -> Matrix2<f64> {
    let h = resolution / 2.0;
    let f = |dx: f64, dy: f64| -node_log_posterior(models, readings, [peak[0] + dx, peak[1] + dy]);
    let f0 = f(0.0, 0.0);
    let hxx = (f(h, 0.0) - 2.0 * f0 + f(-h, 0.0)) / (h * h);
    let hyy = (f(0.0, h) - 2.0 * f0 + f(0.0, -h)) / (h * h);
    let hxy = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
    let hess = Matrix2::new(hxx, hxy, hxy, hyy);
    let max_std: f64 = 2.0;
    let eig = hess.symmetric_eigen();
    let floor = 1.0 / (max_std * max_std);
    let inv = eig.eigenvalues.map(|l| if l.is_finite() { 1.0 / l.max(floor) } else { 1.0 / floor });
    let cov = eig.eigenvectors * Matrix2::from_diagonal(&inv) * eig.eigenvectors.transpose();
    let cov = (cov + cov.transpose()) * 0.5;
    cov + Matrix2::identity() * (resolution * resolution / 12.0)
}

/// Grid search over the product of the four receiver likelihoods under a
/// uniform prior, evaluated in log space.
pub fn sonar_posterior(
    models: &[GprModel; RECEIVERS],
    readings: &[f64; RECEIVERS],
    grid: &PosteriorGrid,
) -> Result<SonarEstimate, SonarError> {
    grid.validate()?;
    if readings.iter().any(|u| !u.is_finite()) {
        return Err(SonarError::InvalidInput("non-finite reading".into()));
    }
    let nodes = grid.nodes();
    let logp: Vec<f64> = nodes.par_iter().map(|q| node_log_posterior(models, readings, *q)).collect();
    let best = argmax(&logp).ok_or(SonarError::DegeneratePosterior)?;
    let peak = nodes[best];
    Ok(SonarEstimate { x_u: peak[0], y_u: peak[1], covariance: laplace_covariance(models, readings, peak, grid.resolution) })
}

/// Receiver models with their predictions cached on a fixed grid.
#[derive(Debug, Clone)]
pub struct SonarLocalizer {
    models: [GprModel; RECEIVERS],
    grid: PosteriorGrid,
    nodes: Vec<[f64; 2]>,
    /// Per node, the (mean, variance) of each receiver.
    table: Vec<[(f64, f64); RECEIVERS]>,
}

impl SonarLocalizer {
    pub fn new(models: [GprModel; RECEIVERS], grid: PosteriorGrid) -> Result<Self, SonarError> {
        grid.validate()?;
        let nodes = grid.nodes();
        let table = nodes
            .par_iter()
            .map(|q| {
                let mut row = [(0.0, 0.0); RECEIVERS];
                for (r, m) in row.iter_mut().zip(&models) {
                    *r = m.predict(*q);
                }
                row
            })
            .collect();
        Ok(Self { models, grid, nodes, table })
    }

    pub fn train(data: &TrainingSet, kernel: KernelParams, grid: PosteriorGrid) -> Result<Self, SonarError> {
        let models = data.fit(kernel)?;
        Self::new(models, grid)
    }

    pub fn models(&self) -> &[GprModel; RECEIVERS] {
        &self.models
    }

    pub fn grid(&self) -> &PosteriorGrid {
        &self.grid
    }

    /// Same result as [`sonar_posterior`] on this localizer's grid.
    pub fn estimate(&self, readings: &[f64; RECEIVERS]) -> Result<SonarEstimate, SonarError> {
        if readings.iter().any(|u| !u.is_finite()) {
            return Err(SonarError::InvalidInput("non-finite reading".into()));
        }
        let logp: Vec<f64> = self.table.iter().map(|row| log_likelihood(readings, row.iter().copied())).collect();
        let best = argmax(&logp).ok_or(SonarError::DegeneratePosterior)?;
        let peak = self.nodes[best];
        Ok(SonarEstimate {
            x_u: peak[0],
            y_u: peak[1],
            covariance: laplace_covariance(&self.models, readings, peak, self.grid.resolution),
        })
    }
}

/// Planar range and lateral offset seen by the array.
pub fn sonar_measurement_fn(x: &Vector3<f64>) -> Result<(f64, f64), SonarError> {
    let r = x.x.hypot(x.z);
    if !(r > 0.0) {
        return Err(SonarError::UndefinedRange);
    }
    Ok((r, x.y))
}

pub fn sonar_measurement_jacobian(x: &Vector3<f64>) -> Result<Matrix2x3<f64>, SonarError> {
    let r = x.x.hypot(x.z);
    if !(r > 0.0) {
        return Err(SonarError::UndefinedRange);
    }
    Ok(Matrix2x3::new(x.x / r, 0.0, x.z / r, 0.0, 1.0, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct TrainingRow {
    x: f64,
    y: f64,
    u1: f64,
    u2: f64,
    u3: f64,
    u4: f64,
}

/// Reading samples at known planar positions, one column per receiver.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingSet {
    pub inputs: Vec<[f64; 2]>,
    pub readings: Vec<[f64; RECEIVERS]>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn fit(&self, kernel: KernelParams) -> Result<[GprModel; RECEIVERS], SonarError> {
        let fit = |i: usize| {
            let t: Vec<f64> = self.readings.iter().map(|r| r[i]).collect();
            gpr_fit(&self.inputs, &t, kernel)
        };
        Ok([fit(0)?, fit(1)?, fit(2)?, fit(3)?])
    }

    pub fn read_csv<R: std::io::Read>(rdr: R) -> Result<Self, SonarError> {
        let mut set = TrainingSet::default();
        for row in csv::Reader::from_reader(rdr).deserialize() {
            let r: TrainingRow = row?;
            let vals = [r.x, r.y, r.u1, r.u2, r.u3, r.u4];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(SonarError::TrainingData("non-finite value".into()));
            }
            set.inputs.push([r.x, r.y]);
            set.readings.push([r.u1, r.u2, r.u3, r.u4]);
        }
        if set.len() < 2 {
            return Err(SonarError::TrainingData("need at least two rows".into()));
        }
        Ok(set)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), SonarError> {
        let mut w = csv::Writer::from_writer(out);
        for (p, u) in self.inputs.iter().zip(&self.readings) {
            w.serialize(TrainingRow { x: p[0], y: p[1], u1: u[0], u2: u[1], u3: u[2], u4: u[3] })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SonarError> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), SonarError> {
        self.write_csv(std::fs::File::create(path)?)
    }
}
