//! Dense complex 3D tensors and the unitary separable DFT.
//!
//! Every echo, image, spectrum and filter in the toolkit is a
//! [`ComplexTensor3`]. Storage is row-major with the third index varying
//! fastest, so element `(i, j, k)` lives at offset `(i * ny + j) * nz + k`.
//! The binary tensor file format relies on this ordering.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use ndarray::{Array3, ArrayView2, Axis};
use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{Error, Result};

pub type Dims = (usize, usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor3 {
    data: Array3<Complex64>,
}

fn checked_len(dims: Dims) -> Result<usize> {
    let (nx, ny, nz) = dims;
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(Error::InvalidDims(dims, "every axis must be non-empty"));
    }
    nx.checked_mul(ny)
        .and_then(|n| n.checked_mul(nz))
        .and_then(|n| n.checked_mul(std::mem::size_of::<Complex64>()).map(|_| n))
        .filter(|&n| n <= isize::MAX as usize / std::mem::size_of::<Complex64>())
        .ok_or(Error::InvalidDims(dims, "size exceeds addressable memory"))
}

impl ComplexTensor3 {
    pub fn zeros(dims: Dims) -> Result<Self> {
        checked_len(dims)?;
        Ok(Self {
            data: Array3::zeros(dims),
        })
    }

    pub fn filled(dims: Dims, value: Complex64) -> Result<Self> {
        checked_len(dims)?;
        Ok(Self {
            data: Array3::from_elem(dims, value),
        })
    }

    pub fn from_vec(dims: Dims, values: Vec<Complex64>) -> Result<Self> {
        let len = checked_len(dims)?;
        if values.len() != len {
            return Err(Error::InvalidDims(dims, "data length does not match dims"));
        }
        let data = Array3::from_shape_vec(dims, values).expect("length checked above");
        Ok(Self { data })
    }

    pub fn from_fn<F>(dims: Dims, f: F) -> Result<Self>
    where
        F: FnMut((usize, usize, usize)) -> Complex64,
    {
        checked_len(dims)?;
        Ok(Self {
            data: Array3::from_shape_fn(dims, f),
        })
    }

    /// Wraps an existing array. The array is copied into standard layout if needed.
    pub fn from_array(data: Array3<Complex64>) -> Result<Self> {
        let (a, b, c) = data.dim();
        checked_len((a, b, c))?;
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().into_owned()
        };
        Ok(Self { data })
    }

    /// Kronecker delta of the given value at `at`.
    pub fn delta(dims: Dims, at: Dims, value: Complex64) -> Result<Self> {
        let mut t = Self::zeros(dims)?;
        t.data[at] = value;
        Ok(t)
    }

    pub fn dims(&self) -> Dims {
        self.data.dim()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        self.data.as_slice().expect("standard layout")
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        self.data.as_slice_mut().expect("standard layout")
    }

    pub fn array(&self) -> &Array3<Complex64> {
        &self.data
    }

    pub fn array_mut(&mut self) -> &mut Array3<Complex64> {
        &mut self.data
    }

    pub fn into_array(self) -> Array3<Complex64> {
        self.data
    }

    /// Frontal slice: the `nx × ny` matrix at fixed third index `k`.
    pub fn frontal_slice(&self, k: usize) -> ArrayView2<'_, Complex64> {
        self.data.index_axis(Axis(2), k)
    }

    pub fn ensure_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(())
    }

    pub fn map<F: FnMut(Complex64) -> Complex64>(&self, f: F) -> Self {
        Self {
            data: self.data.mapv(f),
        }
    }

    pub fn zip_map<F>(&self, other: &Self, f: F) -> Result<Self>
    where
        F: Fn(Complex64, Complex64) -> Complex64,
    {
        self.ensure_same_dims(other)?;
        let values = self
            .as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::from_vec(self.dims(), values)
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        self.map(|z| z * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    /// `Σ a · conj(b)`.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        self.ensure_same_dims(other)?;
        Ok(self
            .as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| a * b.conj())
            .sum())
    }

    pub fn frob_norm_sqr(&self) -> f64 {
        self.as_slice().iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.frob_norm_sqr().sqrt()
    }

    /// Largest entry modulus (the ∞-norm over all entries).
    pub fn max_abs(&self) -> f64 {
        self.as_slice().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Index of the entry with the largest modulus (first one on ties).
    pub fn argmax_abs(&self) -> Dims {
        let (_, ny, nz) = self.dims();
        let mut best = 0;
        let mut best_val = -1.0;
        for (n, z) in self.as_slice().iter().enumerate() {
            let v = z.norm();
            if v > best_val {
                best_val = v;
                best = n;
            }
        }
        (best / (ny * nz), (best / nz) % ny, best % nz)
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice()
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Relative Frobenius distance `‖self − other‖ / ‖other‖`.
    pub fn rel_diff(&self, other: &Self) -> Result<f64> {
        self.ensure_same_dims(other)?;
        let num: f64 = self
            .as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let den = other.frob_norm_sqr();
        Ok(if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        })
    }

    pub fn fft3(&self) -> Self {
        fft3(self)
    }

    pub fn ifft3(&self) -> Self {
        ifft3(self)
    }
}

impl Index<Dims> for ComplexTensor3 {
    type Output = Complex64;
    fn index(&self, idx: Dims) -> &Complex64 {
        &self.data[idx]
    }
}

impl IndexMut<Dims> for ComplexTensor3 {
    fn index_mut(&mut self, idx: Dims) -> &mut Complex64 {
        &mut self.data[idx]
    }
}

// Operator forms panic on mismatched dims; use the `Result` methods when
// dims are not known to agree.
impl Add for &ComplexTensor3 {
    type Output = ComplexTensor3;
    fn add(self, rhs: Self) -> ComplexTensor3 {
        ComplexTensor3::add(self, rhs).expect("tensor dims must match")
    }
}

impl Sub for &ComplexTensor3 {
    type Output = ComplexTensor3;
    fn sub(self, rhs: Self) -> ComplexTensor3 {
        ComplexTensor3::sub(self, rhs).expect("tensor dims must match")
    }
}

impl Mul<f64> for &ComplexTensor3 {
    type Output = ComplexTensor3;
    fn mul(self, rhs: f64) -> ComplexTensor3 {
        self.scale_real(rhs)
    }
}

/// Unitary 1D DFT of every lane along `axis`, in place.
pub fn fft_axis(data: &mut Array3<Complex64>, axis: usize, direction: FftDirection) {
    let n = data.len_of(Axis(axis));
    if n <= 1 {
        return;
    }
    let fft = FftPlanner::new().plan_fft(n, direction);
    let norm = 1.0 / (n as f64).sqrt();
    let mut buf = vec![Complex64::default(); n];
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    for mut lane in data.lanes_mut(Axis(axis)) {
        for (b, v) in buf.iter_mut().zip(lane.iter()) {
            *b = *v;
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (v, b) in lane.iter_mut().zip(&buf) {
            *v = b * norm;
        }
    }
}

fn transform(t: &ComplexTensor3, direction: FftDirection) -> ComplexTensor3 {
    let mut data = t.data.clone();
    for axis in 0..3 {
        fft_axis(&mut data, axis, direction);
    }
    ComplexTensor3 { data }
}

/// Separable 3D DFT with unitary normalization (`1/√(nx·ny·nz)` overall).
pub fn fft3(t: &ComplexTensor3) -> ComplexTensor3 {
    transform(t, FftDirection::Forward)
}

/// Exact inverse of [`fft3`].
pub fn ifft3(t: &ComplexTensor3) -> ComplexTensor3 {
    transform(t, FftDirection::Inverse)
}

pub fn hadamard(a: &ComplexTensor3, b: &ComplexTensor3) -> Result<ComplexTensor3> {
    a.hadamard(b)
}

pub fn inner(a: &ComplexTensor3, b: &ComplexTensor3) -> Result<Complex64> {
    a.inner(b)
}

pub fn frob_norm(t: &ComplexTensor3) -> f64 {
    t.frob_norm()
}

/// DFT sample frequencies in cycles per unit spacing, in FFT order
/// (`0, 1, …, n/2−1, −n/2, …, −1` divided by `n·spacing`).
pub fn fft_freqs(n: usize, spacing: f64) -> Vec<f64> {
    let nf = n as f64;
    (0..n)
        .map(|i| {
            let m = if i < n.div_ceil(2) {
                i as f64
            } else {
                i as f64 - nf
            };
            m / (nf * spacing)
        })
        .collect()
}


#[cfg(test)]
mod tests {
    use super::test_util::random_tensor;
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Direct O(N²) 3D DFT, unitary.
    fn dft3_direct(t: &ComplexTensor3) -> ComplexTensor3 {
        let (nx, ny, nz) = t.dims();
        let norm = 1.0 / ((nx * ny * nz) as f64).sqrt();
        ComplexTensor3::from_fn(t.dims(), |(u, v, w)| {
            let mut acc = Complex64::default();
            for i in 0..nx {
                for j in 0..ny {
                    for k in 0..nz {
                        let phase = -2.0
                            * PI
                            * ((u * i) as f64 / nx as f64
                                + (v * j) as f64 / ny as f64
                                + (w * k) as f64 / nz as f64);
                        acc += t[(i, j, k)] * Complex64::from_polar(1.0, phase);
                    }
                }
            }
            acc * norm
        })
        .unwrap()
    }

    #[test]
    fn delta_transforms_to_flat_spectrum() {
        let t = ComplexTensor3::delta((4, 4, 4), (0, 0, 0), c(1.0, 0.0)).unwrap();
        let f = fft3(&t);
        for z in f.as_slice() {
            assert!((z - c(0.125, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn constant_inverse_transforms_to_scaled_delta() {
        let n = 6;
        let value = c(0.3, -1.2);
        let t = ComplexTensor3::filled((n, n, n), value).unwrap();
        let f = ifft3(&t);
        let peak = value * (n as f64).powf(1.5);
        assert!((f[(0, 0, 0)] - peak).norm() < 1e-12);
        let rest: f64 = f.as_slice()[1..].iter().map(|z| z.norm()).sum();
        assert!(rest < 1e-11);
    }

    #[test]
    fn matches_direct_dft_on_2x2x2() {
        let t = random_tensor((2, 2, 2), 7);
        let fast = fft3(&t);
        let slow = dft3_direct(&t);
        for (a, b) in fast.as_slice().iter().zip(slow.as_slice()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn matches_direct_dft_on_odd_dims() {
        let t = random_tensor((3, 5, 4), 8);
        assert!(fft3(&t).rel_diff(&dft3_direct(&t)).unwrap() < 1e-12);
    }

    #[test]
    fn roundtrip_and_parseval() {
        let t = random_tensor((8, 8, 16), 1);
        let f = fft3(&t);
        assert!(ifft3(&f).rel_diff(&t).unwrap() < 1e-12);
        assert!(fft3(&ifft3(&t)).rel_diff(&t).unwrap() < 1e-12);
        assert!((f.frob_norm() - t.frob_norm()).abs() / t.frob_norm() < 1e-12);
        assert!((ifft3(&t).frob_norm() - t.frob_norm()).abs() / t.frob_norm() < 1e-12);
    }

    #[test]
    fn roundtrip_at_largest_stated_size() {
        let t = random_tensor((32, 32, 64), 2);
        assert!(ifft3(&fft3(&t)).rel_diff(&t).unwrap() < 1e-12);
    }

    #[test]
    fn hadamard_identities() {
        let t = random_tensor((3, 4, 5), 3);
        let ones = ComplexTensor3::filled(t.dims(), c(1.0, 0.0)).unwrap();
        assert_eq!(hadamard(&t, &ones).unwrap(), t);

        let sq = hadamard(&t, &t.conj()).unwrap();
        for (s, z) in sq.as_slice().iter().zip(t.as_slice()) {
            assert_eq!(s.im, 0.0);
            assert!((s.re - z.norm_sqr()).abs() < 1e-15);
        }

        let a = ComplexTensor3::filled((1, 1, 1), c(1.0, 1.0)).unwrap();
        let b = ComplexTensor3::filled((1, 1, 1), c(2.0, -1.0)).unwrap();
        assert_eq!(hadamard(&a, &b).unwrap()[(0, 0, 0)], c(3.0, 1.0));
    }

    #[test]
    fn mismatched_dims_are_rejected() {
        let a = ComplexTensor3::zeros((2, 2, 2)).unwrap();
        let b = ComplexTensor3::zeros((2, 2, 3)).unwrap();
        assert!(matches!(
            hadamard(&a, &b),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(inner(&a, &b).is_err());
    }

    #[test]
    fn inner_product_properties() {
        let a = random_tensor((4, 3, 5), 4);
        let b = random_tensor((4, 3, 5), 5);
        let aa = inner(&a, &a).unwrap();
        assert_eq!(aa.im, 0.0);
        assert!((aa.re - a.frob_norm().powi(2)).abs() < 1e-12);
        let ab = inner(&a, &b).unwrap();
        let ba = inner(&b, &a).unwrap();
        assert!((ab - ba.conj()).norm() < 1e-12);
        assert_eq!(frob_norm(&ComplexTensor3::zeros((3, 3, 3)).unwrap()), 0.0);
    }

    #[test]
    fn oversized_dims_are_rejected() {
        assert!(ComplexTensor3::zeros((usize::MAX / 2, 4, 4)).is_err());
        assert!(ComplexTensor3::zeros((0, 4, 4)).is_err());
    }

    #[test]
    fn layout_has_third_index_fastest() {
        let t =
            ComplexTensor3::from_fn((2, 3, 4), |(i, j, k)| c((100 * i + 10 * j + k) as f64, 0.0))
                .unwrap();
        assert_eq!(t.as_slice()[1].re, 1.0);
        assert_eq!(t.as_slice()[4].re, 10.0);
        assert_eq!(t.as_slice()[12].re, 100.0);
        assert_eq!(t.argmax_abs(), (1, 2, 3));
    }

    #[test]
    fn fft_freqs_ordering() {
        assert_eq!(fft_freqs(4, 1.0), vec![0.0, 0.25, -0.5, -0.25]);
        assert_eq!(fft_freqs(5, 0.5), vec![0.0, 0.4, 0.8, -0.8, -0.4]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn fft_is_linear(seed in any::<u64>(), ar in -2.0f64..2.0, ai in -2.0f64..2.0, br in -2.0f64..2.0) {
                let a = random_tensor((4, 6, 8), seed);
                let b = random_tensor((4, 6, 8), seed.wrapping_add(1));
                let alpha = c(ar, ai);
                let beta = c(br, 0.5);
                let lhs = fft3(&(&a.scale(alpha) + &b.scale(beta)));
                let rhs = &fft3(&a).scale(alpha) + &fft3(&b).scale(beta);
                prop_assert!(lhs.rel_diff(&rhs).unwrap() < 1e-12);
            }

            #[test]
            fn fft_roundtrip(seed in any::<u64>(), nx in 1usize..9, ny in 1usize..9, nz in 1usize..17) {
                let t = random_tensor((nx, ny, nz), seed);
                prop_assert!(ifft3(&fft3(&t)).rel_diff(&t).unwrap() < 1e-12);
                prop_assert!((fft3(&t).frob_norm() - t.frob_norm()).abs() / t.frob_norm() < 1e-12);
            }
        }
    }
}
