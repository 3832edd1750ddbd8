//! Truncated shifted-Chebyshev approximation of kernel-of-Laplacian
//! operators: coefficient quadrature and matrix-free application through the
//! three-term recurrence.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{GraphSignal, Laplacian, Spectrum};
use crate::kernels::KernelSpec;
use crate::sgwt::{Provenance, WaveletCoefficients};

/// Default quadrature node count for a given polynomial order.
pub fn default_quad_points(order: usize) -> usize {
    500.max(8 * (order + 1))
}

/// Shifted-Chebyshev series coefficients c_0..c_K of `f` on [0, lambda_max],
/// computed by midpoint quadrature of
/// c_k = (2/pi) * int_0^pi cos(k theta) f(lambda_max (cos theta + 1)/2) dtheta.
/// The series is evaluated as c_0/2 + sum_{k>=1} c_k T_k.
pub fn cheb_coeffs(
    f: impl Fn(f64) -> f64,
    lambda_max: f64,
    order: usize,
    quad_points: usize,
) -> Result<Vec<f64>> {
    if order < 1 {
        return Err(Error::Validation("Chebyshev order must be at least 1".into()));
    }
    if quad_points < 4 * (order + 1) {
        return Err(Error::Validation(format!(
            "need at least {} quadrature points for order {order}, got {quad_points}",
            4 * (order + 1)
        )));
    }
    let step = std::f64::consts::PI / quad_points as f64;
    // Evaluate f once per node, reuse across k.
    let mut nodes = Vec::with_capacity(quad_points);
    for i in 0..quad_points {
        let theta = (i as f64 + 0.5) * step;
        let lambda = lambda_max * (theta.cos() + 1.0) / 2.0;
        let value = f(lambda);
        if !value.is_finite() {
            return Err(Error::Numerical(format!(
                "kernel evaluated to {value} at theta = {theta}"
            )));
        }
        nodes.push((theta, value));
    }
    let mut coeffs = Vec::with_capacity(order + 1);
    for k in 0..=order {
        let sum: f64 = nodes
            .iter()
            .map(|&(theta, value)| (k as f64 * theta).cos() * value)
            .sum();
        coeffs.push(2.0 / std::f64::consts::PI * sum * step);
    }
    Ok(coeffs)
}

/// Per-band coefficient vectors, one band per filter in transform order.
#[derive(Debug, Clone)]
pub struct ChebyshevCoefficients {
    bands: Vec<Vec<f64>>,
    order: usize,
    lambda_max: f64,
}

impl ChebyshevCoefficients {
    pub fn bands(&self) -> &[Vec<f64>] {
        &self.bands
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }
}

/// Matrix-free realization of the stacked wavelet operator: per-band
/// Chebyshev series applied through the shifted recurrence on L.
#[derive(Debug, Clone)]
pub struct ChebyshevOperator {
    coeffs: ChebyshevCoefficients,
    laplacian: Arc<Laplacian>,
    spec: KernelSpec,
}

/// Builds one coefficient band per filter: the scaling kernel first when the
/// family has one, then wavelet scales in ascending order.
pub fn build_operator(
    spec: &KernelSpec,
    laplacian: Arc<Laplacian>,
    order: usize,
) -> Result<ChebyshevOperator> {
    let lm = laplacian.lambda_max();
    if lm <= 0.0 {
        return Err(Error::Config(
            "cannot build a Chebyshev operator on a graph with lambda_max = 0".into(),
        ));
    }
    let rel = (spec.lambda_max() - lm).abs() / lm;
    if rel > 1e-9 {
        return Err(Error::Config(format!(
            "kernel design lambda_max {} does not match the Laplacian estimate {lm}",
            spec.lambda_max()
        )));
    }
    let quad = default_quad_points(order);
    let mut bands = Vec::with_capacity(spec.num_bands());
    if spec.has_scaling() {
        bands.push(cheb_coeffs(|l| spec.scaling(l).expect("scaling present"), lm, order, quad)?);
    }
    for j in 0..spec.num_scales() {
        bands.push(cheb_coeffs(|l| spec.wavelet(j, l), lm, order, quad)?);
    }
    Ok(ChebyshevOperator {
        coeffs: ChebyshevCoefficients { bands, order, lambda_max: lm },
        laplacian,
        spec: spec.clone(),
    })
}

impl ChebyshevOperator {
    pub fn coefficients(&self) -> &ChebyshevCoefficients {
        &self.coeffs
    }

    pub fn laplacian(&self) -> &Laplacian {
        &self.laplacian
    }

    pub fn kernel_spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn num_bands(&self) -> usize {
        self.coeffs.bands.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.laplacian.num_nodes()
    }

    pub fn order(&self) -> usize {
        self.coeffs.order
    }

    fn check_rows(&self, x: &GraphSignal) -> Result<()> {
        if x.nrows() != self.num_nodes() {
            return Err(Error::Validation(format!(
                "signal has {} rows but the graph has {} nodes",
                x.nrows(),
                self.num_nodes()
            )));
        }
        Ok(())
    }

    /// All bands in one fused recurrence pass: the T_k iterates are shared
    /// across bands because the recurrence does not depend on coefficients.
    pub fn apply(&self, x: &GraphSignal) -> Result<WaveletCoefficients> {
        self.check_rows(x)?;
        let l = self.laplacian.matrix();
        let scale = 2.0 / self.coeffs.lambda_max;
        let order = self.coeffs.order;

        let t0 = x.clone();
        let t1 = scale * (l * x) - x;
        let mut out: Vec<DMatrix<f64>> = self
            .coeffs
            .bands
            .iter()
            .map(|c| 0.5 * c[0] * &t0 + c[1] * &t1)
            .collect();
        let mut t_prev = t0;
        let mut t_cur = t1;
        for k in 2..=order {
            let t_next = 2.0 * (scale * (l * &t_cur) - &t_cur) - &t_prev;
            for (band, c) in out.iter_mut().zip(&self.coeffs.bands) {
                *band += c[k] * &t_next;
            }
            t_prev = t_cur;
            t_cur = t_next;
        }
        WaveletCoefficients::new(out, Provenance::Chebyshev(order))
    }

    /// Single-band application, used by the adjoint path.
    pub fn apply_band(&self, band: usize, x: &GraphSignal) -> Result<GraphSignal> {
        self.check_rows(x)?;
        let c = self
            .coeffs
            .bands
            .get(band)
            .ok_or_else(|| Error::Validation(format!("band {band} out of range")))?;
        let l = self.laplacian.matrix();
        let scale = 2.0 / self.coeffs.lambda_max;
        let t0 = x.clone();
        let t1 = scale * (l * x) - x;
        let mut acc = 0.5 * c[0] * &t0 + c[1] * &t1;
        let mut t_prev = t0;
        let mut t_cur = t1;
        for &ck in &c[2..] {
            let t_next = 2.0 * (scale * (l * &t_cur) - &t_cur) - &t_prev;
            acc += ck * &t_next;
            t_prev = t_cur;
            t_cur = t_next;
        }
        Ok(acc)
    }
}

/// Exact kernel-of-Laplacian application through the eigendecomposition.
/// This is the oracle the Chebyshev path is tested against.
pub fn exact_apply(
    spec: &KernelSpec,
    spectrum: &Spectrum,
    x: &GraphSignal,
) -> Result<WaveletCoefficients> {
    if x.nrows() != spectrum.num_nodes() {
        return Err(Error::Validation(format!(
            "signal has {} rows but the spectrum has {} nodes",
            x.nrows(),
            spectrum.num_nodes()
        )));
    }
    let bands = (0..spec.num_bands())
        .map(|b| exact_apply_band(spec, spectrum, b, x))
        .collect();
    WaveletCoefficients::new(bands, Provenance::Exact)
}

pub fn exact_apply_band(
    spec: &KernelSpec,
    spectrum: &Spectrum,
    band: usize,
    x: &GraphSignal,
) -> GraphSignal {
    let u = spectrum.eigenvectors();
    let mut hat = u.transpose() * x;
    for (l, mut row) in hat.row_iter_mut().enumerate() {
        row *= spec.band_response(band, spectrum.eigenvalues()[l]);
    }
    u * hat
}
