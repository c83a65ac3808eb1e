//! Band-limited cone-adapted directional frame on square frontal slices.
//!
//! All filters live in the 2D DFT domain and are real and non-negative.
//! The radial partition uses Meyer-type steps at `ρ = 2^(j−J−1)` with
//! `ρ = max(|ξ1|, |ξ2|)/(n/2)`; each band is cut angularly into `2·shears`
//! wedges along the pseudo-angle
//!
//! ```text
//! u = 1 + ξ2/ξ1   (|ξ2| ≤ |ξ1|, horizontal cone)
//! u = 3 − ξ1/ξ2   (|ξ1| < |ξ2|, vertical cone)
//! ```
//!
//! which runs over `[0, 4)` and is periodic. The squared filters sum to one at
//! every frequency, so the frame is Parseval and its adjoint is its inverse.

use ndarray::{Array2, Axis, Zip};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftDirection;
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::tensor::{fft_axis, ComplexTensor3};

/// Which part of the frequency plane a filter covers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subband {
    /// 0 for the low-pass, 1..=scales from coarse to fine.
    pub scale: usize,
    /// Wedge index, `None` for the low-pass.
    pub wedge: Option<usize>,
    /// Pseudo-angle at the wedge center (1 and 3 are the cone axes).
    pub direction: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FrameTransform {
    n: usize,
    filters: Vec<Array2<f64>>,
    bands: Vec<Subband>,
}

/// Smooth step with `ν(t) + ν(1 − t) = 1`, flat at both ends.
fn meyer_nu(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t.powi(4) * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t.powi(3))
}

/// Squared low-pass profile: 1 up to `b`, falling to 0 at `2b`.
fn lowpass_sq(rho: f64, b: f64) -> f64 {
    (FRAC_PI_2 * meyer_nu(rho / b - 1.0)).cos().powi(2)
}

fn pseudo_angle(x1: f64, x2: f64) -> f64 {
    if x1 == 0.0 && x2 == 0.0 {
        0.0
    } else if x2.abs() <= x1.abs() {
        1.0 + x2 / x1
    } else {
        3.0 - x1 / x2
    }
}

/// Signed distance from `a` to `b` on the circle of circumference 4, in [−2, 2).
fn circ_dist(a: f64, b: f64) -> f64 {
    (a - b + 2.0).rem_euclid(4.0) - 2.0
}

/// Squared angular window of the wedge of the given `width` around `center`,
/// with transitions of half-width `h` at both edges.
fn wedge_sq(u: f64, center: f64, width: f64, h: f64) -> f64 {
    let d = circ_dist(u, center);
    let rise = (FRAC_PI_2 * meyer_nu((d + width / 2.0 + h) / (2.0 * h)))
        .sin()
        .powi(2);
    let fall = (FRAC_PI_2 * meyer_nu((d - width / 2.0 + h) / (2.0 * h)))
        .cos()
        .powi(2);
    rise * fall
}

fn fft_index(i: usize, n: usize) -> f64 {
    if i < n.div_ceil(2) {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

/// Builds the frame for `n × n` slices with `scales` radial bands and
/// `shears_per_scale` wedges per cone.
pub fn build_shearlet(
    dims2d: (usize, usize),
    scales: usize,
    shears_per_scale: usize,
) -> Result<FrameTransform> {
    let (n, m) = dims2d;
    if n != m || n < 16 || !n.is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "shearlet frame needs n × n slices with n a power of two >= 16, got {n}×{m}"
        )));
    }
    if !(1..=3).contains(&scales) {
        return Err(Error::InvalidParameter(format!(
            "scales must be 1, 2 or 3, got {scales}"
        )));
    }
    if shears_per_scale == 0 {
        return Err(Error::InvalidParameter(
            "need at least one shear per cone".into(),
        ));
    }
    let wedges = 2 * shears_per_scale;
    let width = 4.0 / wedges as f64;
    let h = width / 4.0;
    let half = (n / 2) as f64;
    let steps: Vec<f64> = (1..=scales)
        .map(|j| 2f64.powi(j as i32 - scales as i32 - 1))
        .collect();

    let mut filters = Vec::with_capacity(1 + scales * wedges);
    let mut bands = Vec::with_capacity(filters.capacity());
    let rho = Array2::from_shape_fn((n, n), |(i, j)| {
        fft_index(i, n).abs().max(fft_index(j, n).abs()) / half
    });
    let u = Array2::from_shape_fn((n, n), |(i, j)| {
        pseudo_angle(fft_index(i, n), fft_index(j, n))
    });

    filters.push(rho.mapv(|r| lowpass_sq(r, steps[0]).sqrt()));
    bands.push(Subband {
        scale: 0,
        wedge: None,
        direction: None,
    });
    for s in 0..scales {
        let band = |r: f64| {
            let outer = steps.get(s + 1).map_or(1.0, |&b| lowpass_sq(r, b));
            (outer - lowpass_sq(r, steps[s])).max(0.0)
        };
        for w in 0..wedges {
            // the centers of shear 0 land on the cone axes u = 1 and u = 3
            let center = 1.0 + (w as f64 - (shears_per_scale / 2) as f64) * width;
            let mut f = Array2::zeros((n, n));
            Zip::from(&mut f).and(&rho).and(&u).for_each(|f, &r, &a| {
                *f = (band(r) * wedge_sq(a, center, width, h)).sqrt();
            });
            filters.push(f);
            bands.push(Subband {
                scale: s + 1,
                wedge: Some(w),
                direction: Some(center.rem_euclid(4.0)),
            });
        }
    }

    let t = FrameTransform { n, filters, bands };
    t.check_parseval()?;
    Ok(t)
}

impl FrameTransform {
    pub fn slice_size(&self) -> usize {
        self.n
    }

    pub fn subbands(&self) -> &[Subband] {
        &self.bands
    }

    /// Number of coefficient tensors per input tensor.
    pub fn redundancy(&self) -> usize {
        self.filters.len()
    }

    fn check_dims(&self, x: &ComplexTensor3) -> Result<()> {
        let (a, b, k) = x.dims();
        if a != self.n || b != self.n {
            return Err(Error::DimensionMismatch {
                expected: (self.n, self.n, k),
                found: x.dims(),
            });
        }
        Ok(())
    }

    fn check_parseval(&self) -> Result<()> {
        let mut total = Array2::<f64>::zeros((self.n, self.n));
        for f in &self.filters {
            total += &f.mapv(|v| v * v);
        }
        if total.iter().any(|v| (v - 1.0).abs() > 1e-12) {
            return Err(Error::InvalidParameter(
                "filter bank is not a partition of unity".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let x = ComplexTensor3::from_fn((self.n, self.n, 1), |_| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })?;
        let back = self.adjoint(&self.forward(&x)?)?;
        if back.rel_diff(&x)? > 1e-6 {
            return Err(Error::InvalidParameter(
                "frame failed the Parseval roundtrip".into(),
            ));
        }
        Ok(())
    }

    fn spectrum(x: &ComplexTensor3, direction: FftDirection) -> ComplexTensor3 {
        let mut data = x.array().clone();
        fft_axis(&mut data, 0, direction);
        fft_axis(&mut data, 1, direction);
        ComplexTensor3::from_array(data).expect("dims unchanged")
    }

    fn apply_filter(&self, f: &Array2<f64>, spec: &mut ComplexTensor3) {
        for mut slice in spec.array_mut().axis_iter_mut(Axis(2)) {
            Zip::from(&mut slice).and(f).for_each(|z, &w| *z *= w);
        }
    }

    /// One coefficient tensor per filter, each the size of `x`.
    pub fn forward(&self, x: &ComplexTensor3) -> Result<Vec<ComplexTensor3>> {
        self.check_dims(x)?;
        let spec = Self::spectrum(x, FftDirection::Forward);
        Ok(self
            .filters
            .iter()
            .map(|f| {
                let mut s = spec.clone();
                self.apply_filter(f, &mut s);
                Self::spectrum(&s, FftDirection::Inverse)
            })
            .collect())
    }

    pub fn adjoint(&self, coeffs: &[ComplexTensor3]) -> Result<ComplexTensor3> {
        if coeffs.len() != self.filters.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} coefficient tensors, got {}",
                self.filters.len(),
                coeffs.len()
            )));
        }
        self.check_dims(&coeffs[0])?;
        let mut acc = ComplexTensor3::zeros(coeffs[0].dims())?;
        for (f, c) in self.filters.iter().zip(coeffs) {
            c.ensure_same_dims(&coeffs[0])?;
            let mut s = Self::spectrum(c, FftDirection::Forward);
            self.apply_filter(f, &mut s);
            acc = &acc + &s;
        }
        Ok(Self::spectrum(&acc, FftDirection::Inverse))
    }

    /// `adjoint(map(forward(x)))` without holding all coefficients at once.
    pub fn threshold<F: Fn(Complex64) -> Complex64>(
        &self,
        x: &ComplexTensor3,
        map: F,
    ) -> Result<ComplexTensor3> {
        self.check_dims(x)?;
        let spec = Self::spectrum(x, FftDirection::Forward);
        let mut acc = ComplexTensor3::zeros(x.dims())?;
        for f in &self.filters {
            let mut s = spec.clone();
            self.apply_filter(f, &mut s);
            let c = Self::spectrum(&s, FftDirection::Inverse).map(&map);
            let mut back = Self::spectrum(&c, FftDirection::Forward);
            self.apply_filter(f, &mut back);
            acc = &acc + &back;
        }
        Ok(Self::spectrum(&acc, FftDirection::Inverse))
    }

    /// Sum of coefficient magnitudes.
    pub fn l1_norm(&self, x: &ComplexTensor3) -> Result<f64> {
        Ok(self
            .forward(x)?
            .iter()
            .map(|c| c.as_slice().iter().map(|z| z.norm()).sum::<f64>())
            .sum())
    }
}
