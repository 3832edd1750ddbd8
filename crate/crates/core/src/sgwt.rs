//! The stacked wavelet transform: forward decomposition into a scaling band
//! plus J wavelet bands, the adjoint used as the inverse inside learnable
//! layers, and the wavelet-domain diagonal filter.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::chebyshev::{exact_apply, exact_apply_band, ChebyshevOperator};
use crate::error::{Error, Result};
use crate::graph::{GraphSignal, Spectrum};
use crate::kernels::KernelSpec;

/// How a coefficient stack was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Exact,
    Chebyshev(usize),
}

/// Band stack [scaling; a_1; ...; a_J] (no scaling band for the heat family),
/// each band an N x d matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletCoefficients {
    bands: Vec<DMatrix<f64>>,
    provenance: Provenance,
}

impl WaveletCoefficients {
    pub fn new(bands: Vec<DMatrix<f64>>, provenance: Provenance) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::Validation("coefficient stack has no bands".into()));
        }
        let shape = bands[0].shape();
        for (i, b) in bands.iter().enumerate() {
            if b.shape() != shape {
                return Err(Error::Validation(format!(
                    "band {i} has shape {:?}, expected {:?}",
                    b.shape(),
                    shape
                )));
            }
        }
        Ok(WaveletCoefficients { bands, provenance })
    }

    pub fn band(&self, b: usize) -> &DMatrix<f64> {
        &self.bands[b]
    }

    pub fn bands(&self) -> &[DMatrix<f64>] {
        &self.bands
    }

    pub fn num_bands(&self) -> usize {
        self.bands.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.bands[0].nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.bands[0].ncols()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
}

/// A concrete realization of the stacked operator W: either the matrix-free
/// Chebyshev path or the exact eigendecomposition path.
#[derive(Debug, Clone)]
pub enum WaveletTransform {
    Chebyshev(Arc<ChebyshevOperator>),
    Exact {
        spec: KernelSpec,
        spectrum: Arc<Spectrum>,
    },
}

impl WaveletTransform {
    pub fn num_bands(&self) -> usize {
        match self {
            WaveletTransform::Chebyshev(op) => op.num_bands(),
            WaveletTransform::Exact { spec, .. } => spec.num_bands(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        match self {
            WaveletTransform::Chebyshev(op) => op.num_nodes(),
            WaveletTransform::Exact { spectrum, .. } => spectrum.num_nodes(),
        }
    }

    pub fn kernel_spec(&self) -> &KernelSpec {
        match self {
            WaveletTransform::Chebyshev(op) => op.kernel_spec(),
            WaveletTransform::Exact { spec, .. } => spec,
        }
    }

    /// W x: one output band per filter, tagged with provenance.
    pub fn forward(&self, x: &GraphSignal) -> Result<WaveletCoefficients> {
        match self {
            WaveletTransform::Chebyshev(op) => op.apply(x),
            WaveletTransform::Exact { spec, spectrum } => exact_apply(spec, spectrum, x),
        }
    }

    fn filter_band(&self, band: usize, x: &GraphSignal) -> Result<GraphSignal> {
        match self {
            WaveletTransform::Chebyshev(op) => op.apply_band(band, x),
            WaveletTransform::Exact { spec, spectrum } => {
                Ok(exact_apply_band(spec, spectrum, band, x))
            }
        }
    }

    /// W^T C = sum_b f_b(L) C_b. Each band filter is a symmetric matrix, so
    /// the adjoint is band-wise re-filtering followed by summation.
    pub fn adjoint(&self, coeffs: &WaveletCoefficients) -> Result<GraphSignal> {
        if coeffs.num_bands() != self.num_bands() {
            return Err(Error::Validation(format!(
                "coefficient stack has {} bands but the operator has {}",
                coeffs.num_bands(),
                self.num_bands()
            )));
        }
        let mut acc = self.filter_band(0, coeffs.band(0))?;
        for b in 1..coeffs.num_bands() {
            acc += self.filter_band(b, coeffs.band(b))?;
        }
        Ok(acc)
    }
}

/// Applies the wavelet-domain diagonal filter: entry (b, n, :) is scaled by
/// theta[b*N + n], identically across feature columns.
pub fn diag_filter(coeffs: &WaveletCoefficients, theta: &[f64]) -> Result<WaveletCoefficients> {
    let n = coeffs.num_nodes();
    let expected = coeffs.num_bands() * n;
    if theta.len() != expected {
        return Err(Error::Validation(format!(
            "theta has length {}, expected B*N = {expected}",
            theta.len()
        )));
    }
    let bands = coeffs
        .bands()
        .iter()
        .enumerate()
        .map(|(b, m)| {
            let mut out = m.clone();
            for (i, mut row) in out.row_iter_mut().enumerate() {
                row *= theta[b * n + i];
            }
            out
        })
        .collect();
    WaveletCoefficients::new(bands, coeffs.provenance())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chebyshev::build_operator;
    use crate::graph::{eigendecompose, laplacian, Graph};
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_setup(
        n: usize,
        j: usize,
        k: usize,
        seed: u64,
    ) -> (WaveletTransform, WaveletTransform) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = loop {
            let mut edges = Vec::new();
            for i in 0..n {
                for jj in (i + 1)..n {
                    if rng.gen_bool(0.5) {
                        edges.push((i, jj));
                    }
                }
            }
            if !edges.is_empty() {
                break Graph::from_edges(n, &edges, None).unwrap();
            }
        };
        let l = Arc::new(laplacian(&g).unwrap());
        let spec = KernelSpec::mexican_hat(2.0, l.lambda_max(), j).unwrap();
        let spectrum = Arc::new(eigendecompose(&l).unwrap());
        let cheb = WaveletTransform::Chebyshev(Arc::new(build_operator(&spec, l, k).unwrap()));
        let exact = WaveletTransform::Exact { spec, spectrum };
        (cheb, exact)
    }

    #[test]
    fn forward_zero_signal() {
        let (cheb, exact) = random_setup(6, 2, 10, 1);
        let x = DMatrix::zeros(6, 3);
        for op in [&cheb, &exact] {
            let c = op.forward(&x).unwrap();
            for b in 0..c.num_bands() {
                assert_eq!(c.band(b).norm(), 0.0);
            }
        }
    }

    #[test]
    fn forward_constant_signal_exact() {
        let (_, exact) = random_setup(7, 3, 10, 2);
        let x = DMatrix::from_element(7, 2, 2.5);
        let c = exact.forward(&x).unwrap();
        for b in 1..c.num_bands() {
            assert!(c.band(b).norm() < 1e-10);
        }
        let h0 = exact.kernel_spec().scaling(0.0).unwrap();
        assert_relative_eq!(c.band(0), &(h0 * &x), epsilon = 1e-10);
    }

    #[test]
    fn forward_chebyshev_matches_exact() {
        let (cheb, exact) = random_setup(10, 2, 40, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = DMatrix::from_fn(10, 4, |_, _| rng.gen_range(-1.0..1.0));
        let ca = cheb.forward(&x).unwrap();
        let ce = exact.forward(&x).unwrap();
        assert_eq!(ca.provenance(), Provenance::Chebyshev(40));
        assert_eq!(ce.provenance(), Provenance::Exact);
        for b in 0..ca.num_bands() {
            let rel = (ca.band(b) - ce.band(b)).norm() / ce.band(b).norm().max(1e-300);
            assert!(rel <= 1e-6, "band {b} relative error {rel}");
        }
    }

    #[test]
    fn adjoint_of_zero() {
        let (cheb, _) = random_setup(6, 2, 8, 4);
        let zeros =
            WaveletCoefficients::new(vec![DMatrix::zeros(6, 2); 3], Provenance::Exact).unwrap();
        let x = cheb.adjoint(&zeros).unwrap();
        assert_eq!(x.norm(), 0.0);
    }

    #[test]
    fn adjoint_band_mismatch_rejected() {
        let (cheb, _) = random_setup(6, 2, 8, 5);
        let wrong =
            WaveletCoefficients::new(vec![DMatrix::zeros(6, 2); 2], Provenance::Exact).unwrap();
        assert!(cheb.adjoint(&wrong).is_err());
    }

    #[test]
    fn adjoint_inner_product_identity() {
        for seed in 0..6 {
            let (cheb, exact) = random_setup(8, 2, 20, 100 + seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = DMatrix::from_fn(8, 2, |_, _| rng.gen_range(-1.0..1.0));
            let c = WaveletCoefficients::new(
                (0..3)
                    .map(|_| DMatrix::from_fn(8, 2, |_, _| rng.gen_range(-1.0..1.0)))
                    .collect(),
                Provenance::Exact,
            )
            .unwrap();
            for op in [&cheb, &exact] {
                let wx = op.forward(&x).unwrap();
                let wtc = op.adjoint(&c).unwrap();
                let lhs: f64 = (0..3).map(|b| wx.band(b).dot(c.band(b))).sum();
                let rhs = x.dot(&wtc);
                let scale = lhs.abs().max(rhs.abs()).max(1e-12);
                assert!(
                    (lhs - rhs).abs() / scale < 1e-9,
                    "adjoint identity violated: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn round_trip_matches_frame_profile() {
        // In exact mode, adjoint(forward(x)) applies sum_b f_b(L)^2; its
        // action on the eigenbasis must match the sum-of-squares curve.
        let (_, exact) = random_setup(9, 3, 10, 6);
        let (spec, spectrum) = match &exact {
            WaveletTransform::Exact { spec, spectrum } => (spec.clone(), spectrum.clone()),
            _ => unreachable!(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(9, 1, |_, _| rng.gen_range(-1.0..1.0));
        let round = exact.adjoint(&exact.forward(&x).unwrap()).unwrap();
        let xhat = spectrum.eigenvectors().transpose() * &x;
        let rhat = spectrum.eigenvectors().transpose() * &round;
        for l in 0..9 {
            if xhat[(l, 0)].abs() < 1e-8 {
                continue;
            }
            let lambda = spectrum.eigenvalues()[l];
            let mut expect = spec.scaling(lambda).unwrap().powi(2);
            for j in 0..spec.num_scales() {
                expect += spec.wavelet(j, lambda).powi(2);
            }
            let ratio = rhat[(l, 0)] / xhat[(l, 0)];
            assert_relative_eq!(ratio, expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn diag_filter_identity_zero_and_oracle() {
        let (cheb, _) = random_setup(5, 2, 8, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(5, 3, |_, _| rng.gen_range(-1.0..1.0));
        let c = cheb.forward(&x).unwrap();

        let ones = vec![1.0; 15];
        assert_eq!(diag_filter(&c, &ones).unwrap(), c);

        let zeros = vec![0.0; 15];
        let z = diag_filter(&c, &zeros).unwrap();
        for b in 0..3 {
            assert_eq!(z.band(b).norm(), 0.0);
        }

        // Dense diagonal-matrix oracle on the flattened stack.
        let theta: Vec<f64> = (0..15).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let filtered = diag_filter(&c, &theta).unwrap();
        for b in 0..3 {
            for n in 0..5 {
                for t in 0..3 {
                    assert_relative_eq!(
                        filtered.band(b)[(n, t)],
                        theta[b * 5 + n] * c.band(b)[(n, t)],
                        epsilon = 1e-15
                    );
                }
            }
        }

        assert!(diag_filter(&c, &ones[..10]).is_err());
    }
}
