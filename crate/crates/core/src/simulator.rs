//! Physical echo model and task phantoms.
//!
//! The oracle is a stepped-frequency monostatic model with exact spherical
//! distances. For aperture sample `(x_p, y_p, 0)` and frequency `f_q`,
//!
//! ```text
//! S(p, q) = Σ_n α_n · exp(−j·4π·f_q·(R_n − r_ref)/c)
//! ```
//!
//! where `R_n` is the Euclidean distance to scatterer `n` and `r_ref` is the
//! demodulation reference range ([`RadarGeometry::reference_range`]). The echo
//! consumed by the operators is the range profile: a unitary inverse DFT of
//! `S` along the frequency axis, scaled by a calibration gain so that a unit
//! scatterer at the scene center images to unit magnitude. This model never
//! goes through [`OperatorPair::echo_generation`], which is what makes it an
//! independent check of the imaging operator.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RadarGeometry;
use crate::operators::OperatorPair;
use crate::tasks::TaskId;
use crate::tensor::{fft_axis, ComplexTensor3, Dims};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scatterer {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub amp_re: f64,
    pub amp_im: f64,
    /// Part of a distributed target (a silhouette voxel) rather than an
    /// isolated point scatterer.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub distributed: bool,
}

impl Scatterer {
    pub fn point(position: (f64, f64, f64), amplitude: Complex64) -> Self {
        Self {
            x: position.0,
            y: position.1,
            z: position.2,
            amp_re: amplitude.re,
            amp_im: amplitude.im,
            distributed: false,
        }
    }

    pub fn position(&self) -> (f64, f64, f64) {
        (self.x, self.y, self.z)
    }

    pub fn amplitude(&self) -> Complex64 {
        Complex64::new(self.amp_re, self.amp_im)
    }
}

/// Low-rank image-domain interference: a slab of frontal slices around the
/// target, each slice a sum of `rank` outer products.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceSpec {
    pub rank: usize,
    /// Frobenius energy of the interference over the target image energy.
    pub energy_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    scatterers: Vec<Scatterer>,
    #[serde(default)]
    interference_rank: Option<usize>,
    #[serde(default)]
    interference_energy_ratio: Option<f64>,
    #[serde(default)]
    snr_db: Option<f64>,
    seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SceneDoc", into = "SceneDoc")]
pub struct Scene {
    pub scatterers: Vec<Scatterer>,
    pub interference: Option<InterferenceSpec>,
    /// `None` means noiseless.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl TryFrom<SceneDoc> for Scene {
    type Error = String;

    fn try_from(d: SceneDoc) -> std::result::Result<Self, String> {
        let interference = match (d.interference_rank, d.interference_energy_ratio) {
            (None | Some(0), None) => None,
            (Some(rank), Some(energy_ratio)) if rank > 0 => {
                if !(energy_ratio.is_finite() && energy_ratio > 0.0) {
                    return Err("interference_energy_ratio must be positive".into());
                }
                Some(InterferenceSpec { rank, energy_ratio })
            }
            _ => {
                return Err(
                    "interference_rank and interference_energy_ratio must be given together".into(),
                )
            }
        };
        for s in &d.scatterers {
            let vals = [s.x, s.y, s.z, s.amp_re, s.amp_im];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err("scatterer fields must be finite".into());
            }
        }
        if matches!(d.snr_db, Some(v) if v.is_nan()) {
            return Err("snr_db must not be NaN".into());
        }
        Ok(Scene {
            scatterers: d.scatterers,
            interference,
            snr_db: d.snr_db,
            seed: d.seed,
        })
    }
}

impl From<Scene> for SceneDoc {
    fn from(s: Scene) -> Self {
        SceneDoc {
            scatterers: s.scatterers,
            interference_rank: s.interference.map(|i| i.rank),
            interference_energy_ratio: s.interference.map(|i| i.energy_ratio),
            snr_db: s.snr_db,
            seed: s.seed,
        }
    }
}

impl Scene {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn is_point_scene(&self) -> bool {
        self.interference.is_none() && self.scatterers.iter().all(|s| !s.distributed)
    }

    /// Union of two scenes (scatterers concatenated; noise and interference dropped).
    pub fn union(&self, other: &Scene) -> Scene {
        Scene {
            scatterers: self
                .scatterers
                .iter()
                .chain(&other.scatterers)
                .copied()
                .collect(),
            interference: None,
            snr_db: None,
            seed: self.seed,
        }
    }

    pub fn validate(&self, g: &RadarGeometry) -> Result<()> {
        for s in &self.scatterers {
            if !g.contains(s.position()) {
                return Err(Error::InvalidParameter(format!(
                    "scatterer at ({}, {}, {}) lies outside the image grid",
                    s.x, s.y, s.z
                )));
            }
        }
        Ok(())
    }
}

/// Raw stepped-frequency samples of the scatterers (no interference, no noise, uncalibrated).
pub fn synthesize_spectrum(scene: &Scene, g: &RadarGeometry) -> Result<ComplexTensor3> {
    g.validate()?;
    let mut out = ComplexTensor3::zeros(g.dims())?;
    let (nx, ny, nr) = g.dims();
    let r_ref = g.reference_range();
    let k0 = g.wavenumber(0);
    let dk = 2.0 * std::f64::consts::PI * g.frequency_step() / g.c;
    let data = out.as_mut_slice();
    for s in &scene.scatterers {
        let amp = s.amplitude();
        for i in 0..nx {
            for j in 0..ny {
                let (xp, yp) = g.aperture_position(i, j);
                let r = ((xp - s.x).powi(2) + (yp - s.y).powi(2) + s.z * s.z).sqrt();
                let d = r - r_ref;
                let base = (i * ny + j) * nr;
                for (q, v) in data[base..base + nr].iter_mut().enumerate() {
                    let k = k0 + q as f64 * dk;
                    *v += amp * Complex64::from_polar(1.0, -2.0 * k * d);
                }
            }
        }
    }
    Ok(out)
}

/// Unitary inverse DFT along the frequency axis: stepped-frequency samples to range profiles.
pub fn range_compress(spectrum: &ComplexTensor3) -> ComplexTensor3 {
    let mut data = spectrum.array().clone();
    fft_axis(&mut data, 2, FftDirection::Inverse);
    ComplexTensor3::from_array(data).expect("dims unchanged")
}

/// Matched-filter peak magnitude of an uncalibrated unit scatterer at the scene center.
pub fn calibration_gain(g: &RadarGeometry) -> Result<f64> {
    let center = (g.nx / 2, g.ny / 2, g.nr / 2);
    let reference = Scene {
        scatterers: vec![Scatterer::point(
            g.voxel_center(center),
            Complex64::new(1.0, 0.0),
        )],
        interference: None,
        snr_db: None,
        seed: 0,
    };
    let op = OperatorPair::new(g)?;
    let img = op.imaging(&range_compress(&synthesize_spectrum(&reference, g)?))?;
    Ok(img[center].norm())
}

/// Calibrated range-profile echo of the scene, including interference and noise.
pub fn synthesize_echo(scene: &Scene, g: &RadarGeometry) -> Result<ComplexTensor3> {
    if scene.scatterers.is_empty() && scene.interference.is_none() {
        return Err(Error::EmptyScene);
    }
    scene.validate(g)?;
    let gain = calibration_gain(g)?;
    let mut echo = range_compress(&synthesize_spectrum(scene, g)?).scale_real(1.0 / gain);
    if scene.interference.is_some() {
        let op = OperatorPair::new(g)?;
        let interference = interference_image(scene, g)?;
        echo = &echo + &op.echo_generation(&interference)?;
    }
    match scene.snr_db {
        Some(snr) => add_noise(&echo, snr, scene.seed ^ NOISE_STREAM),
        None => Ok(echo),
    }
}

const NOISE_STREAM: u64 = 0x6e6f_6973_6500_0001;
const INTERFERENCE_STREAM: u64 = 0x696e_7466_0000_0002;

/// Adds i.i.d. circular complex Gaussian noise at the requested SNR.
///
/// `snr_db = +∞` returns the input unchanged.
pub fn add_noise(y: &ComplexTensor3, snr_db: f64, seed: u64) -> Result<ComplexTensor3> {
    if snr_db == f64::INFINITY {
        return Ok(y.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "snr_db must be finite or +inf, got {snr_db}"
        )));
    }
    let energy = y.frob_norm_sqr();
    if energy == 0.0 {
        return Err(Error::ZeroEnergy);
    }
    let sigma = (energy / (y.len() as f64 * 10f64.powf(snr_db / 10.0))).sqrt();
    let per_axis = sigma / std::f64::consts::SQRT_2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(y.map(|z| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        z + Complex64::new(re, im) * per_axis
    }))
}

/// Voxelized scatterers (nearest voxel, amplitudes summed).
pub fn ground_truth(scene: &Scene, g: &RadarGeometry) -> Result<ComplexTensor3> {
    let mut img = ComplexTensor3::zeros(g.dims())?;
    for s in &scene.scatterers {
        let idx = g.nearest_voxel(s.position()).ok_or_else(|| {
            Error::InvalidParameter("scatterer lies outside the image grid".into())
        })?;
        img[idx] += s.amplitude();
    }
    Ok(img)
}

/// Range slices covered by the interference slab: the target's slices plus one on each side.
fn interference_slices(scene: &Scene, g: &RadarGeometry) -> Vec<usize> {
    let bins: Vec<usize> = scene
        .scatterers
        .iter()
        .filter_map(|s| g.nearest_voxel(s.position()).map(|v| v.2))
        .collect();
    let (lo, hi) = match (bins.iter().min(), bins.iter().max()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => (g.nr / 2, g.nr / 2),
    };
    (lo.saturating_sub(1)..=(hi + 1).min(g.nr - 1)).collect()
}

/// Smooth dense random profile of length `n` (a few low-frequency harmonics).
fn smooth_profile(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let harmonics: Vec<(f64, f64, f64)> = (0..3)
        .map(|h| {
            (
                rng.random_range(0.5..1.0) / (h + 1) as f64,
                (h as f64 + rng.random_range(0.0..1.0)) * std::f64::consts::PI / n as f64,
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let offset = rng.random_range(0.8..1.2);
    let phase_slope = rng.random_range(-0.2..0.2);
    (0..n)
        .map(|t| {
            let t = t as f64;
            let mag = offset
                + harmonics
                    .iter()
                    .map(|(a, w, p)| a * (w * t + p).cos())
                    .sum::<f64>();
            Complex64::from_polar(mag, phase_slope * t)
        })
        .collect()
}

/// Materializes the scene's interference image (zero tensor when absent).
pub fn interference_image(scene: &Scene, g: &RadarGeometry) -> Result<ComplexTensor3> {
    let mut img = ComplexTensor3::zeros(g.dims())?;
    let Some(spec) = scene.interference else {
        return Ok(img);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed ^ INTERFERENCE_STREAM);
    for k in interference_slices(scene, g) {
        let mut slice = Array2::<Complex64>::zeros((g.nx, g.ny));
        for r in 0..spec.rank {
            let u = smooth_profile(g.nx, &mut rng);
            let v = smooth_profile(g.ny, &mut rng);
            let weight = 1.0 / (r + 1) as f64;
            for i in 0..g.nx {
                for j in 0..g.ny {
                    slice[(i, j)] += u[i] * v[j] * weight;
                }
            }
        }
        for i in 0..g.nx {
            for j in 0..g.ny {
                img[(i, j, k)] = slice[(i, j)];
            }
        }
    }
    let target_energy = ground_truth(scene, g)?.frob_norm_sqr();
    let reference = if target_energy > 0.0 {
        target_energy
    } else {
        1.0
    };
    let scale = (spec.energy_ratio * reference / img.frob_norm_sqr()).sqrt();
    Ok(img.scale_real(scale))
}

/// Numerical rank of a matrix: singular values above `rel_tol · σ_max`.
pub fn numerical_rank(m: &Array2<Complex64>, rel_tol: f64) -> usize {
    let (r, c) = m.dim();
    let mat = nalgebra::DMatrix::from_fn(r, c, |i, j| m[(i, j)]);
    let sv = mat.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

// ---------------------------------------------------------------------------
// Phantoms

const POINT_AMPLITUDES: [f64; 3] = [1.0, 0.5, 0.25];

fn central_range(n: usize) -> (usize, usize) {
    (n / 4, 3 * n / 4)
}

fn three_point_layout(g: &RadarGeometry, rng: &mut ChaCha8Rng) -> Vec<Dims> {
    let sep = (g.nx.min(g.ny) / 5).max(4);
    let (xlo, xhi) = central_range(g.nx);
    let (ylo, yhi) = central_range(g.ny);
    let zc = g.nr / 2;
    let zlo = zc.saturating_sub(2);
    let zhi = (zc + 2).min(g.nr - 1);
    for _ in 0..10_000 {
        let pts: Vec<Dims> = (0..3)
            .map(|_| {
                (
                    rng.random_range(xlo..=xhi),
                    rng.random_range(ylo..=yhi),
                    rng.random_range(zlo..=zhi),
                )
            })
            .collect();
        let ok = (0..3).all(|a| {
            (a + 1..3).all(|b| {
                pts[a].0.abs_diff(pts[b].0) >= sep
                    && pts[a].1.abs_diff(pts[b].1) >= sep
                    && pts[a].2 != pts[b].2
            })
        });
        if ok {
            return pts;
        }
    }
    // deterministic fallback along the diagonal
    (0..3)
        .map(|n| (xlo + n * sep, ylo + n * sep, zlo + n))
        .collect()
}

fn scattering_diagnosis_scene(g: &RadarGeometry, seed: u64) -> Result<Scene> {
    if g.nx < 16 || g.ny < 16 || g.nr < 5 {
        return Err(Error::InvalidGeometry(
            "scattering-diagnosis phantom needs at least 16×16×5 voxels".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scatterers = three_point_layout(g, &mut rng)
        .into_iter()
        .zip(POINT_AMPLITUDES)
        .map(|(idx, a)| Scatterer::point(g.voxel_center(idx), Complex64::new(a, 0.0)))
        .collect();
    Ok(Scene {
        scatterers,
        interference: None,
        snr_db: None,
        seed,
    })
}

/// Rectangle in the rifle's local frame: along-axis `[u0, u1]`, across-axis `[v0, v1]`,
/// in units of the rifle length.
struct Part {
    u: (f64, f64),
    v: (f64, f64),
}

const RIFLE_PARTS: [Part; 5] = [
    // barrel
    Part {
        u: (0.0, 0.55),
        v: (-0.045, 0.045),
    },
    // receiver
    Part {
        u: (0.45, 0.72),
        v: (-0.09, 0.09),
    },
    // magazine
    Part {
        u: (0.5, 0.6),
        v: (0.09, 0.3),
    },
    // grip
    Part {
        u: (0.64, 0.71),
        v: (0.09, 0.25),
    },
    // stock
    Part {
        u: (0.72, 1.0),
        v: (-0.1, 0.14),
    },
];

fn rifle_scene(g: &RadarGeometry, seed: u64) -> Result<Scene> {
    if g.nx < 16 || g.ny < 16 || g.nr < 3 {
        return Err(Error::InvalidGeometry(
            "rifle phantom needs at least 16×16×3 voxels".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.nx.min(g.ny) as f64;
    let length = 0.8 * n;
    let angle: f64 = rng.random_range(0.45..0.75) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let flip = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let (ca, sa) = (angle.cos(), angle.sin());
    let cx = g.nx as f64 / 2.0 + rng.random_range(-1.0..1.0);
    let cy = g.ny as f64 / 2.0 + rng.random_range(-1.0..1.0);
    let grade_lo = rng.random_range(0.25..0.3);
    let grade_hi = rng.random_range(0.45..0.5);
    let zc = g.nr / 2;

    let mut voxels: Vec<(Dims, f64)> = Vec::new();
    for i in 0..g.nx {
        for j in 0..g.ny {
            let dx = i as f64 - cx;
            let dy = j as f64 - cy;
            // local coordinates in rifle lengths, u from muzzle (0) to butt (1)
            let u = (dx * ca + dy * sa) / length + 0.5;
            let v = flip * (-dx * sa + dy * ca) / length;
            if let Some(part) = RIFLE_PARTS
                .iter()
                .position(|p| u >= p.u.0 && u <= p.u.1 && v >= p.v.0 && v <= p.v.1)
            {
                let amp = grade_lo + (grade_hi - grade_lo) * u;
                // stock sits one range bin deeper
                let k = if part == 4 {
                    (zc + 1).min(g.nr - 1)
                } else {
                    zc
                };
                voxels.push(((i, j, k), amp));
            }
        }
    }
    if voxels.len() < 8 {
        return Err(Error::InvalidGeometry(
            "grid too small to draw the rifle".into(),
        ));
    }
    // strong points: muzzle, receiver, butt
    let along = |idx: &Dims| {
        let dx = idx.0 as f64 - cx;
        let dy = idx.1 as f64 - cy;
        (dx * ca + dy * sa) / length + 0.5
    };
    let mut strong = Vec::new();
    for target in [0.02, 0.6, 0.97] {
        let best = voxels
            .iter()
            .enumerate()
            .filter(|(n, _)| !strong.contains(n))
            .min_by(|a, b| {
                (along(&a.1 .0) - target)
                    .abs()
                    .total_cmp(&(along(&b.1 .0) - target).abs())
            })
            .map(|(n, _)| n)
            .expect("non-empty");
        strong.push(best);
    }
    let scatterers = voxels
        .iter()
        .enumerate()
        .map(|(n, &(idx, amp))| {
            let is_point = strong.contains(&n);
            let mut s = Scatterer::point(
                g.voxel_center(idx),
                Complex64::new(if is_point { 1.0 } else { amp }, 0.0),
            );
            s.distributed = !is_point;
            s
        })
        .collect();
    Ok(Scene {
        scatterers,
        interference: None,
        snr_db: None,
        seed,
    })
}

/// Interference rank and energy ratio of the parcel-screening phantom.
pub const PARCEL_INTERFERENCE: InterferenceSpec = InterferenceSpec {
    rank: 3,
    energy_ratio: 5.0,
};

/// Builds the phantom scene for a task and its voxelized ground truth.
///
/// The ground truth holds the target only; parcel interference is clutter.
pub fn make_phantom(task: TaskId, g: &RadarGeometry, seed: u64) -> Result<(Scene, ComplexTensor3)> {
    g.validate()?;
    let scene = match task {
        TaskId::ScatteringDiagnosis => scattering_diagnosis_scene(g, seed)?,
        TaskId::PersonScreen => rifle_scene(g, seed)?,
        TaskId::ParcelScreen => Scene {
            interference: Some(PARCEL_INTERFERENCE),
            ..rifle_scene(g, seed)?
        },
    };
    let truth = ground_truth(&scene, g)?;
    Ok((scene, truth))
}
