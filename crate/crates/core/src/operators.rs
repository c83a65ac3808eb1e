//! The approximated observation model: an imaging operator and its adjoint.
//!
//! Both operators are a single pointwise filter in the 3D spectral domain:
//!
//! ```text
//! imaging(Y)         = ifft3(fft3(Y) ⊙ Pc)
//! echo_generation(X) = ifft3(fft3(X) ⊙ conj(Pc))
//! ```
//!
//! With unitary transforms and a unit-modulus filter the second is the exact
//! adjoint of the first, and `imaging ∘ echo_generation` is the orthogonal
//! projection onto the filter support.
//!
//! The filter is the planar-aperture dispersion relation. Transverse
//! wavenumbers `kx, ky` follow FFT ordering of the aperture samples; the third
//! spectral index `q` is the stepped-frequency sample with `k = 2π·f_q / c`:
//!
//! ```text
//! Pc(kx, ky, k) = exp(j·z0·(√(4k² − kx² − ky²) − 2k))   where 4k² ≥ kx² + ky²
//!               = 0                                    elsewhere (evanescent)
//! ```
//!
//! There is no Stolt resampling, so targets away from `z0` keep a residual
//! defocus relative to a full range-migration processor.

use ndarray::Array3;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::RadarGeometry;
use crate::tensor::{fft3, fft_freqs, ifft3, ComplexTensor3};

#[derive(Debug, Clone)]
pub struct OperatorPair {
    geometry: RadarGeometry,
    pc: ComplexTensor3,
    support: Array3<bool>,
}

pub fn build_operator_pair(g: &RadarGeometry) -> Result<OperatorPair> {
    OperatorPair::new(g)
}

impl OperatorPair {
    pub fn new(g: &RadarGeometry) -> Result<Self> {
        g.validate()?;
        let two_pi = 2.0 * std::f64::consts::PI;
        let kx: Vec<f64> = fft_freqs(g.nx, g.dx)
            .into_iter()
            .map(|f| two_pi * f)
            .collect();
        let ky: Vec<f64> = fft_freqs(g.ny, g.dy)
            .into_iter()
            .map(|f| two_pi * f)
            .collect();
        let k: Vec<f64> = (0..g.nr).map(|q| g.wavenumber(q)).collect();

        let mut support = Array3::from_elem(g.dims(), false);
        let pc = ComplexTensor3::from_fn(g.dims(), |(i, j, q)| {
            let kz2 = 4.0 * k[q] * k[q] - kx[i] * kx[i] - ky[j] * ky[j];
            if kz2 >= 0.0 {
                support[(i, j, q)] = true;
                Complex64::from_polar(1.0, g.z0 * (kz2.sqrt() - 2.0 * k[q]))
            } else {
                Complex64::default()
            }
        })?;
        Ok(Self {
            geometry: *g,
            pc,
            support,
        })
    }

    /// Builds a pair around an arbitrary filter. Every entry must be either
    /// exactly zero or of unit modulus (within 1e-12).
    pub fn from_filter(g: &RadarGeometry, pc: ComplexTensor3) -> Result<Self> {
        g.validate()?;
        if pc.dims() != g.dims() {
            return Err(Error::DimensionMismatch {
                expected: g.dims(),
                found: pc.dims(),
            });
        }
        let mut support = Array3::from_elem(g.dims(), false);
        for (s, z) in support.iter_mut().zip(pc.as_slice()) {
            let m = z.norm();
            if m == 0.0 {
                continue;
            }
            if (m - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "filter entries must be 0 or unit modulus, found modulus {m}"
                )));
            }
            *s = true;
        }
        Ok(Self {
            geometry: *g,
            pc,
            support,
        })
    }

    pub fn geometry(&self) -> &RadarGeometry {
        &self.geometry
    }

    pub fn filter(&self) -> &ComplexTensor3 {
        &self.pc
    }

    pub fn support(&self) -> &Array3<bool> {
        &self.support
    }

    pub fn support_fraction(&self) -> f64 {
        self.support.iter().filter(|&&s| s).count() as f64 / self.support.len() as f64
    }

    fn check(&self, t: &ComplexTensor3) -> Result<()> {
        if t.dims() != self.geometry.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.geometry.dims(),
                found: t.dims(),
            });
        }
        Ok(())
    }

    fn apply(&self, t: &ComplexTensor3, conjugate: bool) -> Result<ComplexTensor3> {
        self.check(t)?;
        let mut spec = fft3(t);
        for (s, p) in spec.as_mut_slice().iter_mut().zip(self.pc.as_slice()) {
            *s *= if conjugate { p.conj() } else { *p };
        }
        Ok(ifft3(&spec))
    }

    /// Imaging operator: echo tensor to image tensor.
    pub fn imaging(&self, y: &ComplexTensor3) -> Result<ComplexTensor3> {
        self.apply(y, false)
    }

    /// Echo-generation operator: image tensor to echo tensor; adjoint of [`imaging`](Self::imaging).
    pub fn echo_generation(&self, x: &ComplexTensor3) -> Result<ComplexTensor3> {
        self.apply(x, true)
    }

    /// Spectral projection onto the propagating support.
    pub fn project_support(&self, x: &ComplexTensor3) -> Result<ComplexTensor3> {
        self.check(x)?;
        let mut spec = fft3(x);
        for (s, &keep) in spec.as_mut_slice().iter_mut().zip(self.support.iter()) {
            if !keep {
                *s = Complex64::default();
            }
        }
        Ok(ifft3(&spec))
    }
}

pub fn imaging(op: &OperatorPair, y: &ComplexTensor3) -> Result<ComplexTensor3> {
    op.imaging(y)
}

pub fn echo_generation(op: &OperatorPair, x: &ComplexTensor3) -> Result<ComplexTensor3> {
    op.echo_generation(x)
}
