//! Wavelet and scaling kernel families, scale-set generation, admissibility
//! checks, and the sum-of-squares frame profile.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Supported kernel families. The heat kernel has no scaling companion and
/// knowingly violates the g(0) = 0 admissibility constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    MexicanHat,
    CubicSpline,
    Heat,
}

impl KernelFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            KernelFamily::MexicanHat => "mexican_hat",
            KernelFamily::CubicSpline => "cubic_spline",
            KernelFamily::Heat => "heat",
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mexican_hat" => Ok(KernelFamily::MexicanHat),
            "cubic_spline" => Ok(KernelFamily::CubicSpline),
            "heat" => Ok(KernelFamily::Heat),
            other => Err(Error::Config(format!("unknown kernel family '{other}'"))),
        }
    }
}

/// Piecewise cubic-spline band-pass parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineParams {
    pub alpha: f64,
    pub beta: f64,
    pub lam1: f64,
    pub lam2: f64,
}

impl Default for SplineParams {
    fn default() -> Self {
        SplineParams { alpha: 2.0, beta: 2.0, lam1: 1.0, lam2: 2.0 }
    }
}

/// A concrete filter bank: wavelet kernel g at J ascending scales, plus a
/// low-pass scaling kernel h for the families that have one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    family: KernelFamily,
    scales: Vec<f64>,
    q: f64,
    gamma: Option<f64>,
    lambda_max: f64,
    spline: Option<SplineParams>,
}

/// Geometric scale progression from a_1 = 1/lambda_max to a_J = 2/lambda_min
/// with lambda_min = lambda_max / Q. J = 1 yields just {a_1}.
pub fn scales(lambda_max: f64, q: f64, j: usize) -> Result<Vec<f64>> {
    if lambda_max <= 0.0 {
        return Err(Error::Validation(format!("lambda_max must be positive, got {lambda_max}")));
    }
    if q <= 1.0 {
        return Err(Error::Validation(format!("Q must exceed 1, got {q}")));
    }
    if j < 1 {
        return Err(Error::Validation("J must be at least 1".into()));
    }
    let a1 = 1.0 / lambda_max;
    if j == 1 {
        return Ok(vec![a1]);
    }
    let lambda_min = lambda_max / q;
    let aj = 2.0 / lambda_min;
    let ratio = aj / a1;
    Ok((0..j)
        .map(|i| a1 * ratio.powf(i as f64 / (j - 1) as f64))
        .collect())
}

fn scaling_kernel(gamma: f64, q: f64, lambda_max: f64, lambda: f64) -> f64 {
    let lambda = lambda.max(0.0);
    // Fourth-power exponent per the kernel table; the running-text version
    // prints the first power, which does not produce the low-pass shape.
    gamma * (-((q * lambda) / (0.6 * lambda_max)).powi(4)).exp()
}

fn mexican_hat_g(arg: f64) -> f64 {
    let arg = arg.max(0.0);
    arg * (-arg).exp()
}

fn cubic_spline_g(p: &SplineParams, arg: f64) -> f64 {
    let x = arg.max(0.0);
    if x < p.lam1 {
        p.lam1.powf(-p.alpha) * x.powf(p.alpha)
    } else if x <= p.lam2 {
        -5.0 + 11.0 * x - 6.0 * x * x + x * x * x
    } else {
        // Decay branch written as lam2^beta * x^(-beta) so the kernel decays
        // and stays continuous at lam2.
        p.lam2.powf(p.beta) * x.powf(-p.beta)
    }
}

impl KernelSpec {
    pub fn mexican_hat(q: f64, lambda_max: f64, j: usize) -> Result<Self> {
        let scales = scales(lambda_max, q, j)?;
        Ok(KernelSpec {
            family: KernelFamily::MexicanHat,
            scales,
            q,
            gamma: Some((-1.0f64).exp()),
            lambda_max,
            spline: None,
        })
    }

    pub fn cubic_spline(q: f64, lambda_max: f64, j: usize, params: SplineParams) -> Result<Self> {
        if params.lam1 <= 0.0 || params.lam2 <= params.lam1 {
            return Err(Error::Validation(format!(
                "need 0 < lam1 < lam2, got lam1={} lam2={}",
                params.lam1, params.lam2
            )));
        }
        let scales = scales(lambda_max, q, j)?;
        // gamma = g_max found numerically on a dense grid over [0, Q*lambda_max].
        let grid = 10_000;
        let hi = q * lambda_max;
        let gamma = (0..=grid)
            .map(|i| cubic_spline_g(&params, hi * i as f64 / grid as f64))
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(KernelSpec {
            family: KernelFamily::CubicSpline,
            scales,
            q,
            gamma: Some(gamma),
            lambda_max,
            spline: Some(params),
        })
    }

    pub fn heat(lambda_max: f64, j: usize) -> Result<Self> {
        let q = 2.0;
        let scales = scales(lambda_max, q, j)?;
        Ok(KernelSpec {
            family: KernelFamily::Heat,
            scales,
            q,
            gamma: None,
            lambda_max,
            spline: None,
        })
    }

    pub fn from_family(family: KernelFamily, q: f64, lambda_max: f64, j: usize) -> Result<Self> {
        match family {
            KernelFamily::MexicanHat => KernelSpec::mexican_hat(q, lambda_max, j),
            KernelFamily::CubicSpline => {
                KernelSpec::cubic_spline(q, lambda_max, j, SplineParams::default())
            }
            KernelFamily::Heat => KernelSpec::heat(lambda_max, j),
        }
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn num_scales(&self) -> usize {
        self.scales.len()
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    pub fn has_scaling(&self) -> bool {
        self.family != KernelFamily::Heat
    }

    /// Total transform band count: J wavelet bands plus the scaling band
    /// when the family has one.
    pub fn num_bands(&self) -> usize {
        self.num_scales() + usize::from(self.has_scaling())
    }

    /// Wavelet kernel at scale index `j` (0-based): g(a_j * lambda).
    /// Negative lambda is clamped to zero.
    pub fn wavelet(&self, j: usize, lambda: f64) -> f64 {
        let arg = self.scales[j] * lambda.max(0.0);
        match self.family {
            KernelFamily::MexicanHat => mexican_hat_g(arg),
            KernelFamily::CubicSpline => {
                cubic_spline_g(self.spline.as_ref().expect("spline params"), arg)
            }
            KernelFamily::Heat => (-arg).exp(),
        }
    }

    /// Low-pass scaling kernel h(lambda), or an error for families without one.
    pub fn scaling(&self, lambda: f64) -> Result<f64> {
        match self.gamma {
            Some(gamma) => Ok(scaling_kernel(gamma, self.q, self.lambda_max, lambda)),
            None => Err(Error::Config(format!(
                "kernel family {} has no scaling kernel",
                self.family.as_str()
            ))),
        }
    }

    /// Spectral response of transform band `b`: band 0 is the scaling kernel
    /// when present, wavelet scales follow in ascending order.
    pub fn band_response(&self, b: usize, lambda: f64) -> f64 {
        if self.has_scaling() {
            if b == 0 {
                self.scaling(lambda).expect("scaling present")
            } else {
                self.wavelet(b - 1, lambda)
            }
        } else {
            self.wavelet(b, lambda)
        }
    }

    pub fn band_name(&self, b: usize) -> String {
        if self.has_scaling() {
            if b == 0 {
                "scaling".to_string()
            } else {
                format!("wavelet_{b}")
            }
        } else {
            format!("wavelet_{}", b + 1)
        }
    }
}

/// Per-filter admissibility probe values and the overall verdict.
#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    pub lambda_probe: f64,
    pub g_at_zero: Vec<f64>,
    pub g_at_probe: Vec<f64>,
    pub h_at_zero: Option<f64>,
    pub h_at_probe: Option<f64>,
    pub failures: Vec<String>,
    pub pass: bool,
}

/// Default probe multiple for the decay-at-infinity checks. Large enough that
/// the cubic spline's polynomial decay branch falls below the 1e-6 gate.
pub const DEFAULT_PROBE_FACTOR: f64 = 1e4;

pub fn default_lambda_probe(spec: &KernelSpec) -> f64 {
    DEFAULT_PROBE_FACTOR * spec.lambda_max()
}

/// Checks the band-pass/low-pass constraints: g(0) = 0 and g decays for every
/// scale; h(0) > 0 and h decays. Reports, never errors.
pub fn check_admissibility(spec: &KernelSpec, lambda_probe: f64) -> AdmissibilityReport {
    let mut g_at_zero = Vec::new();
    let mut g_at_probe = Vec::new();
    let mut failures = Vec::new();
    for j in 0..spec.num_scales() {
        let g0 = spec.wavelet(j, 0.0);
        let gp = spec.wavelet(j, lambda_probe);
        if g0.abs() > 1e-12 {
            failures.push(format!("g(a_{} * 0) = {g0} violates g(0) = 0", j + 1));
        }
        if gp.abs() > 1e-6 {
            failures.push(format!(
                "g(a_{} * lambda_probe) = {gp} violates decay at infinity",
                j + 1
            ));
        }
        g_at_zero.push(g0);
        g_at_probe.push(gp);
    }
    let (h_at_zero, h_at_probe) = if spec.has_scaling() {
        let h0 = spec.scaling(0.0).expect("scaling present");
        let hp = spec.scaling(lambda_probe).expect("scaling present");
        if h0 <= 0.0 {
            failures.push(format!("h(0) = {h0} violates h(0) > 0"));
        }
        if hp.abs() > 1e-6 {
            failures.push(format!("h(lambda_probe) = {hp} violates decay at infinity"));
        }
        (Some(h0), Some(hp))
    } else {
        (None, None)
    };
    AdmissibilityReport {
        lambda_probe,
        g_at_zero,
        g_at_probe,
        h_at_zero,
        h_at_probe,
        pass: failures.is_empty(),
        failures,
    }
}

/// Sum-of-squares frequency response of the filter bank over [0, lambda_max].
#[derive(Debug, Clone)]
pub struct FrameProfile {
    pub lambdas: Vec<f64>,
    /// h(lambda) samples; absent for families without a scaling kernel.
    pub h: Option<Vec<f64>>,
    /// One curve per wavelet scale, g(a_j * lambda).
    pub g: Vec<Vec<f64>>,
    /// h^2 + sum_j g_j^2 at each grid point.
    pub sum_sq: Vec<f64>,
    /// Empirical frame bounds over (0, lambda_max] (grid point 0 excluded).
    pub min: f64,
    pub max: f64,
}

pub fn frame_profile(spec: &KernelSpec, grid: usize) -> Result<FrameProfile> {
    if grid < 2 {
        return Err(Error::Validation("frame profile needs at least 2 grid points".into()));
    }
    let lambdas: Vec<f64> = (0..grid)
        .map(|i| spec.lambda_max() * i as f64 / (grid - 1) as f64)
        .collect();
    let h = if spec.has_scaling() {
        Some(
            lambdas
                .iter()
                .map(|&l| spec.scaling(l).expect("scaling present"))
                .collect::<Vec<_>>(),
        )
    } else {
        None
    };
    let g: Vec<Vec<f64>> = (0..spec.num_scales())
        .map(|j| lambdas.iter().map(|&l| spec.wavelet(j, l)).collect())
        .collect();
    let sum_sq: Vec<f64> = (0..grid)
        .map(|i| {
            let mut s = 0.0;
            if let Some(ref h) = h {
                s += h[i] * h[i];
            }
            for gj in &g {
                s += gj[i] * gj[i];
            }
            s
        })
        .collect();
    let min = sum_sq[1..].iter().cloned().fold(f64::INFINITY, f64::min);
    let max = sum_sq[1..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(FrameProfile { lambdas, h, g, sum_sq, min, max })
}
