//! Proximal operators for the cognition regularizers.
//!
//! Every scalar map acts on magnitudes and preserves phase. Each map below
//! computes `argmin_x ½‖x − v‖² + τ·g(x)` for its `g`.

pub mod shearlet;

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2, Axis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ComplexTensor3;

pub use shearlet::{build_shearlet, FrameTransform, Subband};

pub const LP_MAX_ITERS: usize = 64;
pub const LP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CognitionKind {
    L1,
    Lp,
    L2,
    TransformL1,
    Nuclear,
}

impl CognitionKind {
    pub fn is_convex(self) -> bool {
        !matches!(self, CognitionKind::Lp)
    }
}

/// How `beta` in a [`CognitionSpec`] is turned into an absolute weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaScale {
    #[default]
    Absolute,
    /// Multiplied by the peak magnitude of the matched-filter image.
    Peak,
    /// Multiplied by the largest singular value over the slices of the matched-filter image.
    SigmaMax,
}

/// Axis held fixed when a tensor is cut into matrices for the nuclear norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceAxis {
    X,
    Y,
    /// Frontal slices (third index fixed).
    #[default]
    Z,
}

impl SliceAxis {
    fn index(self) -> usize {
        match self {
            SliceAxis::X => 0,
            SliceAxis::Y => 1,
            SliceAxis::Z => 2,
        }
    }
}

fn default_scales() -> usize {
    2
}

fn default_shears() -> usize {
    3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransformSpec {
    Shearlet {
        #[serde(default = "default_scales")]
        scales: usize,
        #[serde(default = "default_shears")]
        shears_per_scale: usize,
    },
}

impl Default for TransformSpec {
    fn default() -> Self {
        TransformSpec::Shearlet {
            scales: default_scales(),
            shears_per_scale: default_shears(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CognitionSpec {
    pub kind: CognitionKind,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<TransformSpec>,
    #[serde(default)]
    pub component: usize,
    #[serde(default)]
    pub scale: BetaScale,
    #[serde(default)]
    pub axis: SliceAxis,
}

impl CognitionSpec {
    pub fn new(kind: CognitionKind, beta: f64, component: usize) -> Self {
        Self {
            kind,
            beta,
            p: (kind == CognitionKind::Lp).then_some(0.5),
            transform: (kind == CognitionKind::TransformL1).then(TransformSpec::default),
            component,
            scale: BetaScale::Absolute,
            axis: SliceAxis::Z,
        }
    }

    pub fn with_scale(mut self, scale: BetaScale) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = Some(p);
        self
    }

    pub fn validate(&self, component_count: usize) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::Wiring(format!(
                "{:?}: beta must be positive, got {}",
                self.kind, self.beta
            )));
        }
        if self.component >= component_count {
            return Err(Error::Wiring(format!(
                "{:?} acts on component {} but the model has {} component(s)",
                self.kind, self.component, component_count
            )));
        }
        match self.kind {
            CognitionKind::Lp => match self.p {
                Some(p) if p > 0.0 && p < 1.0 => {}
                other => return Err(Error::Wiring(format!("Lp needs 0 < p < 1, got {other:?}"))),
            },
            _ if self.p.is_some() => {
                return Err(Error::Wiring(format!("{:?} takes no exponent", self.kind)));
            }
            _ => {}
        }
        if self.transform.is_some() && self.kind != CognitionKind::TransformL1 {
            return Err(Error::Wiring(format!("{:?} takes no transform", self.kind)));
        }
        Ok(())
    }

    /// Absolute weight for this cognition given the matched-filter image `m`.
    pub fn effective_beta(&self, m: &ComplexTensor3) -> Result<f64> {
        let factor = match self.scale {
            BetaScale::Absolute => 1.0,
            BetaScale::Peak => m.max_abs(),
            BetaScale::SigmaMax => max_singular_value(m, self.axis)?,
        };
        Ok(self.beta * factor)
    }
}

fn check_threshold(name: &str, tau: f64) -> Result<()> {
    if tau.is_finite() && tau > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be positive and finite, got {tau}"
        )))
    }
}

#[inline]
fn soft(z: Complex64, tau: f64) -> Complex64 {
    let m = z.norm();
    if m <= tau {
        Complex64::new(0.0, 0.0)
    } else {
        z * ((m - tau) / m)
    }
}

/// Complex soft-threshold: `v/|v| · max(|v| − τ, 0)`.
pub fn prox_l1(v: &ComplexTensor3, tau: f64) -> Result<ComplexTensor3> {
    check_threshold("tau", tau)?;
    Ok(v.map(|z| soft(z, tau)))
}

/// Magnitude below which the ℓp proximal map returns zero.
pub fn lp_threshold(lambda: f64, p: f64) -> f64 {
    let a = 2.0 * lambda * (1.0 - p);
    a.powf(1.0 / (2.0 - p)) + lambda * p * a.powf((p - 1.0) / (2.0 - p))
}

/// Scalar ℓp proximal map on a magnitude (generalized soft-thresholding).
pub fn lp_shrink(magnitude: f64, lambda: f64, p: f64) -> Result<f64> {
    let tau = lp_threshold(lambda, p);
    if magnitude <= tau {
        return Ok(0.0);
    }
    let mut m = magnitude;
    for _ in 0..LP_MAX_ITERS {
        let next = magnitude - lambda * p * m.powf(p - 1.0);
        if (next - m).abs() <= LP_TOL * m.max(1.0) {
            return Ok(next);
        }
        m = next;
    }
    Err(Error::ProxNonConvergence {
        magnitude,
        lambda,
        p,
        iterations: LP_MAX_ITERS,
    })
}

pub fn prox_lp(v: &ComplexTensor3, lambda: f64, p: f64) -> Result<ComplexTensor3> {
    check_threshold("lambda", lambda)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "p must lie in (0, 1), got {p}"
        )));
    }
    let mut out = v.clone();
    for z in out.as_mut_slice() {
        let m = z.norm();
        let shrunk = lp_shrink(m, lambda, p)?;
        *z = if shrunk == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            *z * (shrunk / m)
        };
    }
    Ok(out)
}

/// Proximal map of `(β/γ)·½‖x‖²`.
pub fn prox_l2(v: &ComplexTensor3, beta_over_gamma: f64) -> Result<ComplexTensor3> {
    if !(beta_over_gamma.is_finite() && beta_over_gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "beta/gamma must be non-negative, got {beta_over_gamma}"
        )));
    }
    Ok(v.scale_real(1.0 / (1.0 + beta_over_gamma)))
}

fn to_matrix(view: ArrayView2<'_, Complex64>) -> DMatrix<Complex64> {
    let (r, c) = view.dim();
    DMatrix::from_fn(r, c, |a, b| view[[a, b]])
}

fn svd(
    view: ArrayView2<'_, Complex64>,
    slice: usize,
    vectors: bool,
) -> Result<nalgebra::SVD<Complex64, nalgebra::Dyn, nalgebra::Dyn>> {
    nalgebra::SVD::try_new(to_matrix(view), vectors, vectors, 1e-14, 10_000)
        .ok_or(Error::SvdFailure { slice })
}

/// Singular values of every slice taken with `axis` fixed.
pub fn slice_singular_values(v: &ComplexTensor3, axis: SliceAxis) -> Result<Vec<Vec<f64>>> {
    v.array()
        .axis_iter(Axis(axis.index()))
        .enumerate()
        .map(|(s, view)| {
            Ok(svd(view, s, false)?
                .singular_values
                .iter()
                .copied()
                .collect())
        })
        .collect()
}

pub fn max_singular_value(v: &ComplexTensor3, axis: SliceAxis) -> Result<f64> {
    Ok(slice_singular_values(v, axis)?
        .iter()
        .flat_map(|s| s.iter().copied())
        .fold(0.0, f64::max))
}

pub fn nuclear_norm(v: &ComplexTensor3, axis: SliceAxis) -> Result<f64> {
    Ok(slice_singular_values(v, axis)?.iter().flatten().sum())
}

/// Singular value thresholding on frontal slices.
pub fn prox_nuclear(v: &ComplexTensor3, tau: f64) -> Result<ComplexTensor3> {
    prox_nuclear_along(v, tau, SliceAxis::Z)
}

pub fn prox_nuclear_along(v: &ComplexTensor3, tau: f64, axis: SliceAxis) -> Result<ComplexTensor3> {
    check_threshold("tau", tau)?;
    let mut out = v.clone();
    let ax = Axis(axis.index());
    for (s, (src, mut dst)) in v
        .array()
        .axis_iter(ax)
        .zip(out.array_mut().axis_iter_mut(ax))
        .enumerate()
    {
        let dec = svd(src, s, true)?;
        let (u, vt) = match (dec.u, dec.v_t) {
            (Some(u), Some(vt)) => (u, vt),
            _ => return Err(Error::SvdFailure { slice: s }),
        };
        let shrunk: Vec<f64> = dec
            .singular_values
            .iter()
            .map(|&x| (x - tau).max(0.0))
            .collect();
        let (rows, cols) = src.dim();
        let rebuilt = Array2::from_shape_fn((rows, cols), |(a, b)| {
            shrunk
                .iter()
                .enumerate()
                .filter(|(_, &sv)| sv > 0.0)
                .map(|(r, &sv)| u[(a, r)] * vt[(r, b)] * sv)
                .sum::<Complex64>()
        });
        dst.assign(&rebuilt);
    }
    Ok(out)
}

/// `adjoint(soft(forward(v), τ))`, the tight-frame approximation of the analysis prox.
pub fn prox_transform_l1(
    v: &ComplexTensor3,
    tau: f64,
    t: &FrameTransform,
) -> Result<ComplexTensor3> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tau must be non-negative, got {tau}"
        )));
    }
    t.threshold(v, |z| soft(z, tau))
}

/// A cognition with its weight resolved and any transform built, ready for the solver.
#[derive(Debug, Clone)]
pub struct PreparedCognition {
    pub spec: CognitionSpec,
    pub beta: f64,
    frame: Option<FrameTransform>,
}

impl PreparedCognition {
    pub fn new(spec: CognitionSpec, mf_image: &ComplexTensor3) -> Result<Self> {
        let beta = spec.effective_beta(mf_image)?;
        let frame = match spec.kind {
            CognitionKind::TransformL1 => {
                let TransformSpec::Shearlet {
                    scales,
                    shears_per_scale,
                } = spec.transform.unwrap_or_default();
                let (nx, ny, _) = mf_image.dims();
                if nx != ny {
                    return Err(Error::Wiring(format!(
                        "shearlet frame needs square slices, got {nx}×{ny}"
                    )));
                }
                Some(build_shearlet((nx, ny), scales, shears_per_scale)?)
            }
            _ => None,
        };
        Ok(Self { spec, beta, frame })
    }

    /// `prox_{(β/γ)·g}(v)`.
    pub fn prox(&self, v: &ComplexTensor3, gamma: f64) -> Result<ComplexTensor3> {
        let t = self.beta / gamma;
        match self.spec.kind {
            CognitionKind::L1 => prox_l1(v, t),
            CognitionKind::Lp => prox_lp(v, t, self.spec.p.unwrap_or(0.5)),
            CognitionKind::L2 => prox_l2(v, t),
            CognitionKind::TransformL1 => {
                prox_transform_l1(v, t, self.frame.as_ref().expect("built in new"))
            }
            CognitionKind::Nuclear => prox_nuclear_along(v, t, self.spec.axis),
        }
    }

    /// Unweighted regularizer value `g(z)`.
    pub fn value(&self, z: &ComplexTensor3) -> Result<f64> {
        let s = z.as_slice();
        Ok(match self.spec.kind {
            CognitionKind::L1 => s.iter().map(|c| c.norm()).sum(),
            CognitionKind::Lp => {
                let p = self.spec.p.unwrap_or(0.5);
                s.iter().map(|c| c.norm().powf(p)).sum()
            }
            CognitionKind::L2 => 0.5 * z.frob_norm_sqr(),
            CognitionKind::TransformL1 => self.frame.as_ref().expect("built in new").l1_norm(z)?,
            CognitionKind::Nuclear => nuclear_norm(z, self.spec.axis)?,
        })
    }
}
