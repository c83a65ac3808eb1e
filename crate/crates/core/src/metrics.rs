//! Image quality metrics: relative energy error, SSIM on projections, and
//! target-to-background ratio.

use ndarray::{s, Array2, Array3, Axis};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometry::RadarGeometry;
use crate::regularizers::SliceAxis;
use crate::simulator::Scene;
use crate::tensor::ComplexTensor3;

pub const REE_RADIUS: usize = 3;
pub const SSIM_WINDOW: usize = 8;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
pub const TBR_DILATION: usize = 1;

/// Per-scatterer `| |peak| − |α| | / |α|`, where the peak is the largest
/// magnitude within [`REE_RADIUS`] voxels of the scatterer.
pub fn relative_energy_error(
    est: &ComplexTensor3,
    truth: &Scene,
    g: &RadarGeometry,
) -> Result<Vec<f64>> {
    if est.dims() != g.dims() {
        return Err(Error::DimensionMismatch {
            expected: g.dims(),
            found: est.dims(),
        });
    }
    if truth.scatterers.is_empty() || !truth.is_point_scene() {
        return Err(Error::Metric(
            "relative energy error needs a scene of isolated point scatterers".into(),
        ));
    }
    let (nx, ny, nr) = est.dims();
    let r = REE_RADIUS as isize;
    truth
        .scatterers
        .iter()
        .map(|s| {
            let alpha = s.amplitude().norm();
            if alpha == 0.0 {
                return Err(Error::Metric("scatterer with zero amplitude".into()));
            }
            let (ci, cj, ck) = g
                .nearest_voxel(s.position())
                .ok_or_else(|| Error::Metric("scatterer outside the image grid".into()))?;
            let mut peak = 0.0f64;
            for di in -r..=r {
                for dj in -r..=r {
                    for dk in -r..=r {
                        if di * di + dj * dj + dk * dk > r * r {
                            continue;
                        }
                        let (i, j, k) = (ci as isize + di, cj as isize + dj, ck as isize + dk);
                        if i < 0
                            || j < 0
                            || k < 0
                            || i >= nx as isize
                            || j >= ny as isize
                            || k >= nr as isize
                        {
                            continue;
                        }
                        peak = peak.max(est[(i as usize, j as usize, k as usize)].norm());
                    }
                }
            }
            Ok(if peak == 0.0 {
                1.0
            } else {
                (peak - alpha).abs() / alpha
            })
        })
        .collect()
}

/// Per-pixel maximum of `|img|` along `axis`.
pub fn max_intensity_projection(img: &ComplexTensor3, axis: SliceAxis) -> Array2<f64> {
    let ax = match axis {
        SliceAxis::X => Axis(0),
        SliceAxis::Y => Axis(1),
        SliceAxis::Z => Axis(2),
    };
    img.array()
        .map_axis(ax, |lane| lane.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Mean SSIM over all 8×8 windows, after scaling both images by their joint maximum.
pub fn ssim(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Metric(format!(
            "projection sizes differ: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let (h, w) = a.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Metric(format!(
            "image {h}×{w} smaller than the {SSIM_WINDOW}×{SSIM_WINDOW} window"
        )));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Metric(
            "projections must be finite and non-negative".into(),
        ));
    }
    let peak = a.iter().chain(b.iter()).fold(0.0, |m: f64, &v| m.max(v));
    let scale = if peak > 0.0 { 1.0 / peak } else { 1.0 };
    let (a, b) = (a * scale, b * scale);
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..=h - SSIM_WINDOW {
        for j in 0..=w - SSIM_WINDOW {
            let wa = a.slice(s![i..i + SSIM_WINDOW, j..j + SSIM_WINDOW]);
            let wb = b.slice(s![i..i + SSIM_WINDOW, j..j + SSIM_WINDOW]);
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (&x, &y) in wa.iter().zip(wb.iter()) {
                sa += x;
                sb += y;
                saa += x * x;
                sbb += y * y;
                sab += x * y;
            }
            let (ma, mb) = (sa / n, sb / n);
            let va = saa / n - ma * ma;
            let vb = sbb / n - mb * mb;
            let cov = sab / n - ma * mb;
            total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// SSIM between the max-intensity projections of two volumes.
pub fn projection_ssim(
    est: &ComplexTensor3,
    truth: &ComplexTensor3,
    axis: SliceAxis,
) -> Result<f64> {
    est.ensure_same_dims(truth)?;
    ssim(
        &max_intensity_projection(est, axis),
        &max_intensity_projection(truth, axis),
    )
}

/// `20·log10(max_target |img| / mean_background |img|)`; `+∞` when the background is exactly zero.
pub fn tbr(img: &ComplexTensor3, target_mask: &Array3<bool>) -> Result<f64> {
    let (nx, ny, nr) = img.dims();
    if target_mask.dim() != (nx, ny, nr) {
        return Err(Error::DimensionMismatch {
            expected: img.dims(),
            found: target_mask.dim(),
        });
    }
    let targets = target_mask.iter().filter(|&&m| m).count();
    if targets == 0 || targets == target_mask.len() {
        return Err(Error::Metric(
            "target mask must be neither empty nor full".into(),
        ));
    }
    let mut peak = 0.0f64;
    let mut background = 0.0;
    for (z, &m) in img.as_slice().iter().zip(target_mask.iter()) {
        if m {
            peak = peak.max(z.norm());
        } else {
            background += z.norm();
        }
    }
    let mean = background / (target_mask.len() - targets) as f64;
    if mean == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (peak / mean).log10())
}

/// Voxels where the tensor is nonzero.
pub fn support_mask(t: &ComplexTensor3) -> Array3<bool> {
    t.array().mapv(|z| z.norm() > 0.0)
}

/// Cubic dilation by `radius` voxels.
pub fn dilate(mask: &Array3<bool>, radius: usize) -> Array3<bool> {
    let (nx, ny, nz) = mask.dim();
    let mut out = Array3::from_elem((nx, ny, nz), false);
    for ((i, j, k), _) in mask.indexed_iter().filter(|(_, &m)| m) {
        let lo = |c: usize| c.saturating_sub(radius);
        let hi = |c: usize, n: usize| (c + radius).min(n - 1);
        out.slice_mut(s![lo(i)..=hi(i, nx), lo(j)..=hi(j, ny), lo(k)..=hi(k, nz)])
            .fill(true);
    }
    out
}

/// Ground-truth support dilated by [`TBR_DILATION`] voxels.
pub fn target_mask(truth: &ComplexTensor3) -> Array3<bool> {
    dilate(&support_mask(truth), TBR_DILATION)
}

mod tbr_format {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match v {
            Some(x) if x.is_infinite() && *x > 0.0 => s.serialize_str("inf"),
            Some(x) => s.serialize_f64(*x),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Option<f64>, D::Error> {
        match Option::<Repr>::deserialize(d)? {
            None => Ok(None),
            Some(Repr::Number(x)) => Ok(Some(x)),
            Some(Repr::Text(t)) if t == "inf" => Ok(Some(f64::INFINITY)),
            Some(Repr::Text(t)) => Err(serde::de::Error::custom(format!("bad TBR value {t:?}"))),
        }
    }
}

/// Settings a report was computed with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricParams {
    pub ree_radius_voxels: usize,
    /// Always "magnitude": REE compares peak magnitudes, not squared magnitudes.
    pub ree_convention: String,
    pub ssim_window: usize,
    pub ssim_c1: f64,
    pub ssim_c2: f64,
    pub projection: String,
    pub projection_axis: SliceAxis,
    pub tbr_mask: String,
    pub tbr_mask_dilation_voxels: usize,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            ree_radius_voxels: REE_RADIUS,
            ree_convention: "magnitude".into(),
            ssim_window: SSIM_WINDOW,
            ssim_c1: SSIM_C1,
            ssim_c2: SSIM_C2,
            projection: "max_intensity".into(),
            projection_axis: SliceAxis::Z,
            tbr_mask: "dilated_truth_support".into(),
            tbr_mask_dilation_voxels: TBR_DILATION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ree: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_ree: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ssim: Option<f64>,
    #[serde(default, with = "tbr_format", skip_serializing_if = "Option::is_none")]
    pub tbr_db: Option<f64>,
    pub params: MetricParams,
}

impl MetricReport {
    pub fn empty() -> Self {
        Self {
            ree: None,
            mean_ree: None,
            ssim: None,
            tbr_db: None,
            params: MetricParams::default(),
        }
    }

    pub fn set_ree(&mut self, ree: Vec<f64>) {
        self.mean_ree = Some(ree.iter().sum::<f64>() / ree.len() as f64);
        self.ree = Some(ree);
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Metric(m.into()));
        if let Some(ree) = &self.ree {
            if ree.is_empty() || ree.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return bad("REE values must be finite and non-negative");
            }
            match self.mean_ree {
                Some(m)
                    if (m - ree.iter().sum::<f64>() / ree.len() as f64).abs()
                        <= 1e-12 * m.max(1.0) => {}
                _ => return bad("mean REE does not match the per-scatterer values"),
            }
        } else if self.mean_ree.is_some() {
            return bad("mean REE without per-scatterer values");
        }
        if let Some(s) = self.ssim {
            if !(-1.0..=1.0 + 1e-12).contains(&s) {
                return bad("SSIM outside [-1, 1]");
            }
        }
        if let Some(t) = self.tbr_db {
            if t.is_nan() || t == f64::NEG_INFINITY {
                return bad("TBR must be a number or +inf");
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        r.validate()?;
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TASK1_SYSTEM;
    use crate::simulator::{make_phantom, Scatterer};
    use crate::tasks::TaskId;
    use crate::tensor::test_util::random_tensor;
    use num_complex::Complex64;

    fn task1() -> (RadarGeometry, Scene, ComplexTensor3) {
        let g = RadarGeometry::from_preset(&TASK1_SYSTEM, 32, 32, 64).unwrap();
        let (scene, truth) = make_phantom(TaskId::ScatteringDiagnosis, &g, 3).unwrap();
        (g, scene, truth)
    }

    #[test]
    fn ree_zero_on_truth_and_definitional_scaling() {
        let (g, scene, truth) = task1();
        assert!(relative_energy_error(&truth, &scene, &g)
            .unwrap()
            .iter()
            .all(|&e| e == 0.0));
        for s in [1.1, 2.0] {
            let ree = relative_energy_error(&truth.scale_real(s), &scene, &g).unwrap();
            assert!(ree.iter().all(|e| (e - (s - 1.0)).abs() < 1e-12), "{ree:?}");
        }
        let zero = ComplexTensor3::zeros(g.dims()).unwrap();
        assert_eq!(
            relative_energy_error(&zero, &scene, &g).unwrap(),
            vec![1.0; 3]
        );
    }

    #[test]
    fn ree_rejects_distributed_scenes() {
        let (g, mut scene, truth) = task1();
        scene.scatterers[0].distributed = true;
        assert!(matches!(
            relative_energy_error(&truth, &scene, &g),
            Err(Error::Metric(_))
        ));
        scene.scatterers.clear();
        assert!(relative_energy_error(&truth, &scene, &g).is_err());
    }

    #[test]
    fn ree_looks_within_radius_only() {
        let (g, _, _) = task1();
        let scene = Scene {
            scatterers: vec![Scatterer::point(
                g.voxel_center((16, 16, 32)),
                Complex64::new(1.0, 0.0),
            )],
            interference: None,
            snr_db: None,
            seed: 0,
        };
        let mut est = ComplexTensor3::zeros(g.dims()).unwrap();
        est[(16, 16, 35)] = Complex64::new(0.0, 0.8);
        assert!((relative_energy_error(&est, &scene, &g).unwrap()[0] - 0.2).abs() < 1e-12);
        est[(16, 16, 35)] = Complex64::new(0.0, 0.0);
        est[(16, 19, 35)] = Complex64::new(5.0, 0.0);
        assert_eq!(relative_energy_error(&est, &scene, &g).unwrap()[0], 1.0);
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let a = max_intensity_projection(&random_tensor((16, 16, 4), 1), SliceAxis::Z);
        let b = max_intensity_projection(&random_tensor((16, 16, 4), 2), SliceAxis::Z);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
        assert!(ssim(&a, &Array2::zeros((16, 8))).is_err());
        assert!(ssim(&Array2::zeros((4, 4)), &Array2::zeros((4, 4))).is_err());
    }

    #[test]
    fn ssim_of_complementary_half_planes_is_low() {
        let x = Array2::from_shape_fn((64, 64), |(_, j)| if j < 32 { 1.0 } else { 0.0 });
        let y = x.mapv(|v| 1.0 - v);
        let s = ssim(&x, &y).unwrap();
        assert!(s < 0.1, "{s}");
    }

    #[test]
    fn tbr_limits_and_scale_invariance() {
        let (_, _, truth) = task1();
        let mask = support_mask(&truth);
        let indicator = ComplexTensor3::from_array(
            mask.mapv(|m| Complex64::new(if m { 1.0 } else { 0.0 }, 0.0)),
        )
        .unwrap();
        assert_eq!(tbr(&indicator, &mask).unwrap(), f64::INFINITY);
        let uniform = ComplexTensor3::filled(truth.dims(), Complex64::new(0.0, 2.0)).unwrap();
        assert!(tbr(&uniform, &mask).unwrap().abs() < 1e-12);
        let img = random_tensor(truth.dims(), 4);
        let base = tbr(&img, &mask).unwrap();
        assert!((tbr(&img.scale_real(7.5), &mask).unwrap() - base).abs() < 1e-10);
        assert!(tbr(&img, &Array3::from_elem(truth.dims(), false)).is_err());
        assert!(tbr(&img, &Array3::from_elem(truth.dims(), true)).is_err());
    }

    #[test]
    fn projection_of_one_voxel() {
        let t = ComplexTensor3::delta((5, 6, 7), (2, 3, 4), Complex64::new(0.0, -3.0)).unwrap();
        let p = max_intensity_projection(&t, SliceAxis::Z);
        assert_eq!(p.dim(), (5, 6));
        assert_eq!(p[[2, 3]], 3.0);
        assert_eq!(p.iter().filter(|&&v| v > 0.0).count(), 1);
        assert_eq!(max_intensity_projection(&t, SliceAxis::X).dim(), (6, 7));
        assert_eq!(max_intensity_projection(&t, SliceAxis::Y)[[2, 4]], 3.0);
    }

    #[test]
    fn projection_ignores_order_along_collapsed_axis() {
        let t = random_tensor((4, 5, 6), 9);
        let reversed = ComplexTensor3::from_fn((4, 5, 6), |(i, j, k)| t[(i, j, 5 - k)]).unwrap();
        assert_eq!(
            max_intensity_projection(&t, SliceAxis::Z),
            max_intensity_projection(&reversed, SliceAxis::Z)
        );
    }

    #[test]
    fn projections_recover_rifle_bounding_box() {
        let g = RadarGeometry::from_preset(&crate::geometry::TASK2_SYSTEM, 32, 32, 64).unwrap();
        let (_, truth) = make_phantom(TaskId::PersonScreen, &g, 8).unwrap();
        let support: Vec<(usize, usize, usize)> = support_mask(&truth)
            .indexed_iter()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i)
            .collect();
        let range = |f: &dyn Fn(&(usize, usize, usize)) -> usize| {
            (
                support.iter().map(f).min().unwrap(),
                support.iter().map(f).max().unwrap(),
            )
        };
        let extent = |p: &Array2<f64>, axis: usize| {
            let idx: Vec<usize> = p
                .indexed_iter()
                .filter(|(_, &v)| v > 0.0)
                .map(|((a, b), _)| if axis == 0 { a } else { b })
                .collect();
            (*idx.iter().min().unwrap(), *idx.iter().max().unwrap())
        };
        let pz = max_intensity_projection(&truth, SliceAxis::Z);
        let px = max_intensity_projection(&truth, SliceAxis::X);
        assert_eq!(extent(&pz, 0), range(&|v| v.0));
        assert_eq!(extent(&pz, 1), range(&|v| v.1));
        assert_eq!(extent(&px, 1), range(&|v| v.2));
    }

    #[test]
    fn dilation_grows_by_one() {
        let mut m = Array3::from_elem((5, 5, 5), false);
        m[[0, 2, 4]] = true;
        let d = dilate(&m, 1);
        assert_eq!(d.iter().filter(|&&v| v).count(), 2 * 3 * 2);
    }

    #[test]
    fn report_json_roundtrip_with_inf() {
        let mut r = MetricReport::empty();
        r.set_ree(vec![0.0, 0.0, 0.0]);
        r.ssim = Some(1.0);
        r.tbr_db = Some(f64::INFINITY);
        let text = r.to_json().unwrap();
        assert!(text.contains("\"inf\""));
        assert_eq!(MetricReport::from_json(&text).unwrap(), r);
        r.tbr_db = Some(12.5);
        assert_eq!(MetricReport::from_json(&r.to_json().unwrap()).unwrap(), r);
        r.ssim = Some(1.5);
        assert!(r.validate().is_err());
        assert!(MetricReport::from_json(r#"{"params":{},"extra":1}"#).is_err());
    }
}
