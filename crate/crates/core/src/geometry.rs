//! Planar-aperture stepped-frequency sampling geometry.
//!
//! The aperture lies in the `z = 0` plane with samples at
//! `x_i = (i − nx/2)·dx`, `y_j = (j − ny/2)·dy`. Frequency samples are
//! `f_q = fc − bw/2 + q·bw/nr`. The image grid shares the transverse
//! sampling of the aperture; along range, voxel `m` sits at
//! `z0 + (m − nr/2)·δr` with `δr = c / (2·bw)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Dims;

pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

fn default_c() -> f64 {
    SPEED_OF_LIGHT
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarGeometry {
    pub nx: usize,
    pub ny: usize,
    pub nr: usize,
    /// Aperture spacing along x (m).
    pub dx: f64,
    /// Aperture spacing along y (m).
    pub dy: f64,
    /// Center frequency (Hz).
    pub fc: f64,
    /// Bandwidth (Hz).
    pub bw: f64,
    /// Center range (m).
    pub z0: f64,
    /// Propagation speed (m/s).
    #[serde(default = "default_c")]
    pub c: f64,
}

/// Measurement system parameters of one experiment setup, before discretization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemPreset {
    pub name: &'static str,
    pub fc: f64,
    pub bw: f64,
    pub array_x: f64,
    pub array_y: f64,
    pub z0: f64,
}

/// Microwave turntable-free planar scanner used for scattering diagnosis.
pub const TASK1_SYSTEM: SystemPreset = SystemPreset {
    name: "task1",
    fc: 11.0e9,
    bw: 2.0e9,
    array_x: 5.0,
    array_y: 5.0,
    z0: 15.0,
};

/// Millimeter-wave screening scanner (person screening).
pub const TASK2_SYSTEM: SystemPreset = SystemPreset {
    name: "task2",
    fc: 79.0e9,
    bw: 4.0e9,
    array_x: 0.4,
    array_y: 0.4,
    z0: 0.6,
};

/// Same scanner as task 2, used for parcel screening.
pub const TASK3_SYSTEM: SystemPreset = SystemPreset {
    name: "task3",
    ..TASK2_SYSTEM
};

pub fn system_preset(name: &str) -> Option<SystemPreset> {
    match name {
        "task1" => Some(TASK1_SYSTEM),
        "task2" => Some(TASK2_SYSTEM),
        "task3" => Some(TASK3_SYSTEM),
        _ => None,
    }
}

impl RadarGeometry {
    /// Discretizes a system preset onto an `nx × ny × nr` grid.
    ///
    /// The aperture spacing is the preset's `array / n` unless that would
    /// alias: a scene as wide as the aperture at range `z0` needs
    /// `dx ≤ √(π·z0 / (2·k_max·nx))`, where `k_max` is the wavenumber at the
    /// top of the band. Coarser spacing produces grating lobes of the same
    /// height as the main lobe, so the spacing is clamped and the sampled
    /// aperture becomes a centered sub-aperture of the full array.
    pub fn from_preset(preset: &SystemPreset, nx: usize, ny: usize, nr: usize) -> Result<Self> {
        if nx < 2 || ny < 2 || nr < 2 {
            return Err(Error::InvalidGeometry(
                "all sample counts must be >= 2".into(),
            ));
        }
        let k_max = 2.0 * std::f64::consts::PI * (preset.fc + preset.bw / 2.0) / SPEED_OF_LIGHT;
        let alias_free =
            |n: usize| (std::f64::consts::PI * preset.z0 / (2.0 * k_max * n as f64)).sqrt();
        let g = Self {
            nx,
            ny,
            nr,
            dx: (preset.array_x / nx as f64).min(alias_free(nx)),
            dy: (preset.array_y / ny as f64).min(alias_free(ny)),
            fc: preset.fc,
            bw: preset.bw,
            z0: preset.z0,
            c: SPEED_OF_LIGHT,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidGeometry(m.to_string()));
        if self.nx < 2 || self.ny < 2 || self.nr < 2 {
            return bad("all sample counts must be >= 2");
        }
        let reals = [self.dx, self.dy, self.fc, self.bw, self.z0, self.c];
        if reals.iter().any(|v| !v.is_finite()) {
            return bad("non-finite parameter");
        }
        if !(self.bw > 0.0 && self.fc > self.bw / 2.0) {
            return bad("need fc > bw/2 > 0");
        }
        if self.dx <= 0.0 || self.dy <= 0.0 || self.z0 <= 0.0 || self.c <= 0.0 {
            return bad("spacings, center range and c must be positive");
        }
        Ok(())
    }

    pub fn dims(&self) -> Dims {
        (self.nx, self.ny, self.nr)
    }

    pub fn frequency_step(&self) -> f64 {
        self.bw / self.nr as f64
    }

    pub fn frequency(&self, q: usize) -> f64 {
        self.fc - self.bw / 2.0 + q as f64 * self.frequency_step()
    }

    /// Free-space wavenumber `2π·f_q / c`.
    pub fn wavenumber(&self, q: usize) -> f64 {
        2.0 * std::f64::consts::PI * self.frequency(q) / self.c
    }

    pub fn range_resolution(&self) -> f64 {
        self.c / (2.0 * self.bw)
    }

    pub fn voxel_spacing(&self) -> (f64, f64, f64) {
        (self.dx, self.dy, self.range_resolution())
    }

    /// Range at which the demodulation reference sits; the echo phase is
    /// measured relative to this range so that `z0` lands on voxel `nr/2`.
    pub fn reference_range(&self) -> f64 {
        self.z0 - (self.nr / 2) as f64 * self.range_resolution()
    }

    pub fn aperture_position(&self, i: usize, j: usize) -> (f64, f64) {
        (
            (i as f64 - (self.nx / 2) as f64) * self.dx,
            (j as f64 - (self.ny / 2) as f64) * self.dy,
        )
    }

    pub fn voxel_center(&self, idx: Dims) -> (f64, f64, f64) {
        let (x, y) = self.aperture_position(idx.0, idx.1);
        let z = self.z0 + (idx.2 as f64 - (self.nr / 2) as f64) * self.range_resolution();
        (x, y, z)
    }

    /// Voxel coordinates (fractional) of a scene point.
    pub fn voxel_coords(&self, p: (f64, f64, f64)) -> (f64, f64, f64) {
        (
            p.0 / self.dx + (self.nx / 2) as f64,
            p.1 / self.dy + (self.ny / 2) as f64,
            (p.2 - self.z0) / self.range_resolution() + (self.nr / 2) as f64,
        )
    }

    /// Nearest voxel to a scene point, `None` outside the grid.
    pub fn nearest_voxel(&self, p: (f64, f64, f64)) -> Option<Dims> {
        let (a, b, c) = self.voxel_coords(p);
        let round = |v: f64, n: usize| {
            let r = v.round();
            (r >= 0.0 && r < n as f64).then_some(r as usize)
        };
        Some((round(a, self.nx)?, round(b, self.ny)?, round(c, self.nr)?))
    }

    pub fn contains(&self, p: (f64, f64, f64)) -> bool {
        let (a, b, c) = self.voxel_coords(p);
        let inside = |v: f64, n: usize| v > -0.5 && v < n as f64 - 0.5;
        inside(a, self.nx) && inside(b, self.ny) && inside(c, self.nr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_carry_system_table_values() {
        assert_eq!(TASK1_SYSTEM.fc, 11e9);
        assert_eq!(TASK1_SYSTEM.bw, 2e9);
        assert_eq!((TASK1_SYSTEM.array_x, TASK1_SYSTEM.array_y), (5.0, 5.0));
        assert_eq!(TASK1_SYSTEM.z0, 15.0);
        for p in [TASK2_SYSTEM, TASK3_SYSTEM] {
            assert_eq!(
                (p.fc, p.bw, p.array_x, p.array_y, p.z0),
                (79e9, 4e9, 0.4, 0.4, 0.6)
            );
        }
    }

    #[test]
    fn discretized_spacing_is_alias_free() {
        for preset in [TASK1_SYSTEM, TASK2_SYSTEM] {
            let g = RadarGeometry::from_preset(&preset, 32, 32, 64).unwrap();
            let k_max =
                g.wavenumber(g.nr - 1) + 2.0 * std::f64::consts::PI * g.frequency_step() / g.c;
            // widest transverse wavenumber seen from the aperture edge to the opposite scene edge
            let kx = 2.0 * k_max * (g.nx as f64 * g.dx) / g.z0;
            assert!(kx <= std::f64::consts::PI / g.dx * (1.0 + 1e-12));
            assert!(g.dx <= preset.array_x / 32.0);
        }
        // a densely sampled small array keeps its own spacing
        let small = SystemPreset {
            array_x: 0.01,
            array_y: 0.02,
            ..TASK2_SYSTEM
        };
        let g = RadarGeometry::from_preset(&small, 4, 4, 8).unwrap();
        assert_eq!((g.dx, g.dy), (0.0025, 0.005));
    }

    #[test]
    fn invalid_geometry_rejected() {
        let mut g = RadarGeometry::from_preset(&TASK1_SYSTEM, 8, 8, 8).unwrap();
        g.bw = 30e9;
        assert!(g.validate().is_err());
        g.bw = 2e9;
        g.nx = 1;
        assert!(g.validate().is_err());
        g.nx = 8;
        g.z0 = 0.0;
        assert!(g.validate().is_err());
    }

    #[test]
    fn voxel_mapping_roundtrip() {
        let g = RadarGeometry::from_preset(&TASK1_SYSTEM, 16, 16, 32).unwrap();
        assert_eq!(g.voxel_center((8, 8, 16)), (0.0, 0.0, 15.0));
        for idx in [(0, 0, 0), (3, 9, 30), (15, 15, 31)] {
            assert_eq!(g.nearest_voxel(g.voxel_center(idx)), Some(idx));
        }
        assert_eq!(g.nearest_voxel((100.0, 0.0, 15.0)), None);
        assert!((g.reference_range() - (15.0 - 16.0 * g.range_resolution())).abs() < 1e-12);
    }
}
