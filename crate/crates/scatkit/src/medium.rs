//! Refractive-index profiles with compact support.
//!
//! A [`MediumSpec`] couples an index profile with an axis-aligned support box
//! and a declared upper bound `n_max`. Outside the support box the index is
//! exactly 1 — evaluation short-circuits before touching the profile, so
//! "no contrast outside the box" holds to the last bit.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScatError};
use crate::geom::Vec3;

/// Axis-aligned box containing the support of the contrast `n² − 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportBox {
    pub min: Vec3,
    pub max: Vec3,
}

impl SupportBox {
    /// Build a box from two opposite corners, validating orientation.
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        if !(min.x < max.x && min.y < max.y && min.z < max.z) {
            return Err(ScatError::InvalidConfig(format!(
                "support box corners must satisfy min < max componentwise, \
                 got min {:?}, max {:?}",
                min.as_array(),
                max.as_array()
            )));
        }
        Ok(SupportBox { min, max })
    }

    /// Cube `[c−r, c+r]³` around `center`.
    pub fn cube(center: Vec3, half_width: f64) -> Result<Self> {
        if half_width <= 0.0 {
            return Err(ScatError::InvalidConfig(format!(
                "support box half-width must be positive, got {half_width}"
            )));
        }
        let r = Vec3::new(half_width, half_width, half_width);
        SupportBox::new(center - r, center + r)
    }

    /// Closed-box membership test.
    pub fn contains(&self, x: Vec3) -> bool {
        x.x >= self.min.x
            && x.x <= self.max.x
            && x.y >= self.min.y
            && x.y <= self.max.y
            && x.z >= self.min.z
            && x.z <= self.max.z
    }

    /// Membership with a strictly positive margin to every face.
    pub fn contains_strictly(&self, x: Vec3) -> bool {
        x.x > self.min.x
            && x.x < self.max.x
            && x.y > self.min.y
            && x.y < self.max.y
            && x.z > self.min.z
            && x.z < self.max.z
    }

    /// Does the closed ball `|y − center| ≤ radius` fit inside the box?
    pub fn contains_ball(&self, center: Vec3, radius: f64) -> bool {
        let r = Vec3::new(radius, radius, radius);
        self.contains(center - r) && self.contains(center + r)
    }

    pub fn widths(&self) -> [f64; 3] {
        (self.max - self.min).as_array()
    }
}

/// Regularly sampled index values for the `grid` profile variant.
///
/// The lattice stores vertex samples `values[(ix*ny + iy)*nz + iz]` at
/// `origin + spacing*(ix, iy, iz)`; evaluation interpolates trilinearly.
/// Points outside the lattice hull are a hard error — silently extrapolating
/// a measured index map would fabricate data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridProfile {
    pub origin: Vec3,
    pub spacing: f64,
    pub dims: [usize; 3],
    pub values: Vec<f64>,
}

impl GridProfile {
    fn validate(&self) -> Result<()> {
        if self.spacing <= 0.0 {
            return Err(ScatError::InvalidConfig(format!(
                "grid profile spacing must be positive, got {}",
                self.spacing
            )));
        }
        if self.dims.iter().any(|&d| d < 2) {
            return Err(ScatError::InvalidConfig(format!(
                "grid profile needs at least 2 samples per axis, got {:?}",
                self.dims
            )));
        }
        let expect = self.dims[0] * self.dims[1] * self.dims[2];
        if self.values.len() != expect {
            return Err(ScatError::InvalidConfig(format!(
                "grid profile has {} values but dims {:?} require {}",
                self.values.len(),
                self.dims,
                expect
            )));
        }
        Ok(())
    }

    /// Trilinear interpolation at `x`; errors if `x` is outside the lattice.
    fn interpolate(&self, x: Vec3) -> Result<f64> {
        let rel = (x - self.origin) * (1.0 / self.spacing);
        let rel = rel.as_array();
        let mut base = [0usize; 3];
        let mut frac = [0f64; 3];
        for axis in 0..3 {
            let top = (self.dims[axis] - 1) as f64;
            // Tolerate round-off on the hull faces but nothing beyond.
            if rel[axis] < -1e-9 || rel[axis] > top + 1e-9 {
                return Err(ScatError::GridDomain { x: x.x, y: x.y, z: x.z });
            }
            let clamped = rel[axis].clamp(0.0, top);
            let cell = (clamped.floor() as usize).min(self.dims[axis] - 2);
            base[axis] = cell;
            frac[axis] = clamped - cell as f64;
        }
        let at = |ix: usize, iy: usize, iz: usize| -> f64 {
            self.values[(ix * self.dims[1] + iy) * self.dims[2] + iz]
        };
        let mut out = 0.0;
        for dx in 0..2 {
            for dy in 0..2 {
                for dz in 0..2 {
                    let w = (if dx == 0 { 1.0 - frac[0] } else { frac[0] })
                        * (if dy == 0 { 1.0 - frac[1] } else { frac[1] })
                        * (if dz == 0 { 1.0 - frac[2] } else { frac[2] });
                    out += w * at(base[0] + dx, base[1] + dy, base[2] + dz);
                }
            }
        }
        Ok(out)
    }

    fn value_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    fn corner_max(&self) -> Vec3 {
        self.origin
            + Vec3::new(
                self.spacing * (self.dims[0] - 1) as f64,
                self.spacing * (self.dims[1] - 1) as f64,
                self.spacing * (self.dims[2] - 1) as f64,
            )
    }
}

/// The supported refractive-index profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum IndexProfile {
    /// `n = n0` inside the ball, 1 outside.
    ConstantBall { n0: f64, radius: f64, center: Vec3 },
    /// `n = 1 + (n0−1)·exp(1 − R²/(R² − ρ²))` for `ρ = |x−center| < R`.
    ///
    /// The formula is smooth, so it lies in every Hölder class; `alpha`
    /// records the regularity assumed of the medium it stands in for and is
    /// carried through to reports.
    SmoothBump { n0: f64, radius: f64, center: Vec3, alpha: f64 },
    /// Trilinearly interpolated lattice samples.
    Grid(GridProfile),
}

/// A refractive-index profile together with its support box and bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediumSpec {
    profile: IndexProfile,
    support: SupportBox,
    n_max: f64,
}

impl MediumSpec {
    /// Validate and assemble a medium description.
    pub fn new(profile: IndexProfile, support: SupportBox, n_max: f64) -> Result<Self> {
        if !n_max.is_finite() || n_max <= 0.0 {
            return Err(ScatError::InvalidConfig(format!(
                "n_max must be a positive finite number, got {n_max}"
            )));
        }
        match &profile {
            IndexProfile::ConstantBall { n0, radius, center }
            | IndexProfile::SmoothBump { n0, radius, center, .. } => {
                if !(*n0 > 0.0 && *n0 <= n_max) {
                    return Err(ScatError::InvalidConfig(format!(
                        "profile peak n0 = {n0} must lie in (0, n_max = {n_max}]"
                    )));
                }
                if *radius <= 0.0 {
                    return Err(ScatError::InvalidConfig(format!(
                        "profile radius must be positive, got {radius}"
                    )));
                }
                if !support.contains_ball(*center, *radius) {
                    return Err(ScatError::InvalidConfig(format!(
                        "profile ball (center {:?}, radius {radius}) exceeds the \
                         support box",
                        center.as_array()
                    )));
                }
                if let IndexProfile::SmoothBump { alpha, .. } = &profile {
                    if !(*alpha > 0.0 && *alpha <= 1.0) {
                        return Err(ScatError::InvalidConfig(format!(
                            "bump regularity exponent must lie in (0, 1], got {alpha}"
                        )));
                    }
                }
            }
            IndexProfile::Grid(grid) => {
                grid.validate()?;
                let (lo, hi) = grid.value_range();
                if !(lo > 0.0 && hi <= n_max) {
                    return Err(ScatError::InvalidConfig(format!(
                        "grid index values must lie in (0, n_max = {n_max}], \
                         found range [{lo}, {hi}]"
                    )));
                }
                if !support.contains(grid.origin) || !support.contains(grid.corner_max()) {
                    return Err(ScatError::InvalidConfig(
                        "grid profile lattice exceeds the support box".into(),
                    ));
                }
            }
        }
        Ok(MediumSpec { profile, support, n_max })
    }

    /// Constant-ball medium in a cubic support box `[−half, half]³ + center`.
    pub fn constant_ball(n0: f64, radius: f64, center: Vec3, box_half_width: f64) -> Result<Self> {
        let support = SupportBox::cube(center, box_half_width)?;
        MediumSpec::new(
            IndexProfile::ConstantBall { n0, radius, center },
            support,
            n0.max(1.0),
        )
    }

    /// Smooth-bump medium in a cubic support box around its center.
    pub fn smooth_bump(
        n0: f64,
        radius: f64,
        center: Vec3,
        alpha: f64,
        box_half_width: f64,
    ) -> Result<Self> {
        let support = SupportBox::cube(center, box_half_width)?;
        MediumSpec::new(
            IndexProfile::SmoothBump { n0, radius, center, alpha },
            support,
            n0.max(1.0),
        )
    }

    /// The trivial medium `n ≡ 1` on the given box.
    pub fn homogeneous(support: SupportBox) -> Self {
        let center = (support.min + support.max) * 0.5;
        let radius = 0.25 * support.widths()[0].min(support.widths()[1]).min(support.widths()[2]);
        MediumSpec {
            profile: IndexProfile::ConstantBall { n0: 1.0, radius, center },
            support,
            n_max: 1.0,
        }
    }

    pub fn profile(&self) -> &IndexProfile {
        &self.profile
    }

    pub fn support(&self) -> &SupportBox {
        &self.support
    }

    pub fn n_max(&self) -> f64 {
        self.n_max
    }

    /// Evaluate the refractive index at `x`.
    ///
    /// Returns exactly 1 outside the support box. Inside, the grid variant
    /// can fail with [`ScatError::GridDomain`] when `x` escapes the sampled
    /// lattice.
    pub fn evaluate_index(&self, x: Vec3) -> Result<f64> {
        if !self.support.contains(x) {
            return Ok(1.0);
        }
        match &self.profile {
            IndexProfile::ConstantBall { n0, radius, center } => {
                if x.dist(*center) < *radius {
                    Ok(*n0)
                } else {
                    Ok(1.0)
                }
            }
            IndexProfile::SmoothBump { n0, radius, center, .. } => {
                let rho_sq = (x - *center).norm_sq();
                let r_sq = radius * radius;
                if rho_sq < r_sq {
                    Ok(1.0 + (n0 - 1.0) * (1.0 - r_sq / (r_sq - rho_sq)).exp())
                } else {
                    Ok(1.0)
                }
            }
            IndexProfile::Grid(grid) => grid.interpolate(x),
        }
    }

    /// Contrast `n(x)² − 1`; exactly 0 outside the support box.
    pub fn contrast(&self, x: Vec3) -> Result<f64> {
        let n = self.evaluate_index(x)?;
        Ok(n * n - 1.0)
    }

    /// True when the profile carries no contrast anywhere.
    pub fn is_trivial(&self) -> bool {
        match &self.profile {
            IndexProfile::ConstantBall { n0, .. } => *n0 == 1.0,
            IndexProfile::SmoothBump { n0, .. } => *n0 == 1.0,
            IndexProfile::Grid(grid) => grid.values.iter().all(|&v| v == 1.0),
        }
    }
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------
