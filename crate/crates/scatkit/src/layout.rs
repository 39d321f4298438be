//! Probe-inclusion layouts: where the small impedance balls go.
//!
//! A layout is an itinerary of probe *sites*; each site holds one ball or a
//! close pair of balls of common radius `a`. The surface impedance of every
//! ball scales like `a^{-h}` and the pair separation like `a^t`, so the two
//! exponents `(h, t)` decide whether the asymptotic reconstruction formulas
//! apply. Sites are visited one at a time — no two sites are ever present
//! simultaneously — hence ball disjointness is enforced within a site.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScatError};
use crate::geom::Vec3;
use crate::medium::SupportBox;

/// Default multiplicative band `[d_min, d_max]` around the nominal pair
/// separation `a^t`.
pub const DEFAULT_SEPARATION_BAND: (f64, f64) = (0.5, 1.5);

/// One probe site: a single ball center, or a close pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSite {
    pub first: Vec3,
    pub second: Option<Vec3>,
}

impl ProbeSite {
    pub fn single(center: Vec3) -> Self {
        ProbeSite { first: center, second: None }
    }

    pub fn pair(first: Vec3, second: Vec3) -> Self {
        ProbeSite { first, second: Some(second) }
    }

    pub fn centers(&self) -> impl Iterator<Item = Vec3> + '_ {
        std::iter::once(self.first).chain(self.second.iter().copied())
    }

    /// Pair separation, when the site holds two balls.
    pub fn separation(&self) -> Option<f64> {
        self.second.map(|s| s.dist(self.first))
    }

    /// Midpoint of the site (the pair midpoint, or the single center).
    pub fn anchor(&self) -> Vec3 {
        match self.second {
            Some(s) => (self.first + s) * 0.5,
            None => self.first,
        }
    }
}

/// Scaling parameters shared by every ball of a layout.
///
/// The surface-impedance magnitude scales as `a^{-h}` (with unit impedance
/// prefactor), pair separations as `a^t`. `cloud_exponent` records the
/// assumed growth rate of simultaneous-inclusion clouds (count `~ a^{-s}`);
/// the probing protocol here visits sites one at a time, so it stays 0 and
/// is carried only for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutScaling {
    pub radius: f64,
    pub impedance_exponent: f64,
    pub closeness_exponent: f64,
    #[serde(default = "default_band")]
    pub separation_band: (f64, f64),
    #[serde(default)]
    pub cloud_exponent: f64,
}

fn default_band() -> (f64, f64) {
    DEFAULT_SEPARATION_BAND
}

impl LayoutScaling {
    pub fn new(radius: f64, impedance_exponent: f64, closeness_exponent: f64) -> Self {
        LayoutScaling {
            radius,
            impedance_exponent,
            closeness_exponent,
            separation_band: DEFAULT_SEPARATION_BAND,
            cloud_exponent: 0.0,
        }
    }

    /// Nominal pair separation `a^t`.
    pub fn nominal_separation(&self) -> f64 {
        self.radius.powf(self.closeness_exponent)
    }
}

/// A validated itinerary of probe sites with common scaling parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionLayout {
    sites: Vec<ProbeSite>,
    scaling: LayoutScaling,
    /// True when the `(h, t)` window check was deliberately skipped.
    exponents_unchecked: bool,
}

impl InclusionLayout {
    /// Build a layout, enforcing every geometric and scaling constraint:
    ///
    /// * `0 < a < 1`, `h > 0`, `t > 0` and `h + 2t < 1`;
    /// * every center strictly inside the support box;
    /// * pair separations within `[d_min·a^t, d_max·a^t]`;
    /// * the two balls of a pair disjoint (`|z² − z¹| > 2a`).
    pub fn new(
        sites: Vec<ProbeSite>,
        scaling: LayoutScaling,
        support: &SupportBox,
    ) -> Result<Self> {
        let h = scaling.impedance_exponent;
        let t = scaling.closeness_exponent;
        if !(h > 0.0 && h + 2.0 * t < 1.0) {
            return Err(ScatError::InvalidLayout(format!(
                "exponents (h = {h}, t = {t}) violate h > 0 and h + 2t < 1"
            )));
        }
        Self::new_unchecked_exponents(sites, scaling, support).map(|mut layout| {
            layout.exponents_unchecked = false;
            layout
        })
    }

    /// Like [`InclusionLayout::new`] but without the `h + 2t < 1` window
    /// check, for experiments that deliberately leave the validity window of
    /// the reconstruction formulas. All geometric constraints still hold.
    pub fn new_unchecked_exponents(
        sites: Vec<ProbeSite>,
        scaling: LayoutScaling,
        support: &SupportBox,
    ) -> Result<Self> {
        let a = scaling.radius;
        let h = scaling.impedance_exponent;
        let t = scaling.closeness_exponent;
        if !(a > 0.0 && a < 1.0) {
            return Err(ScatError::InvalidLayout(format!(
                "ball radius must satisfy 0 < a < 1, got {a}"
            )));
        }
        if !(h > 0.0) {
            return Err(ScatError::InvalidLayout(format!(
                "impedance exponent must be positive, got {h}"
            )));
        }
        if !(t > 0.0) {
            return Err(ScatError::InvalidLayout(format!(
                "closeness exponent must be positive, got {t}"
            )));
        }
        let (d_lo, d_hi) = scaling.separation_band;
        if !(d_lo > 0.0 && d_lo <= d_hi) {
            return Err(ScatError::InvalidLayout(format!(
                "separation band must satisfy 0 < d_min ≤ d_max, got ({d_lo}, {d_hi})"
            )));
        }
        let layout = InclusionLayout { sites, scaling, exponents_unchecked: true };
        layout.validate_geometry(support, t)?;
        Ok(layout)
    }

    /// Re-check center containment, separation band (against exponent
    /// `t_check`) and pair disjointness. Used both at construction and after
    /// probe positions are perturbed.
    pub(crate) fn validate_geometry(&self, support: &SupportBox, t_check: f64) -> Result<()> {
        let a = self.scaling.radius;
        let (d_lo, d_hi) = self.scaling.separation_band;
        let nominal = a.powf(t_check);
        for (idx, site) in self.sites.iter().enumerate() {
            for c in site.centers() {
                if !support.contains_strictly(c) {
                    return Err(ScatError::InvalidLayout(format!(
                        "site {idx}: center ({:.6}, {:.6}, {:.6}) is not strictly \
                         inside the support box",
                        c.x, c.y, c.z
                    )));
                }
            }
            if let Some(d) = site.separation() {
                if !(d >= d_lo * nominal && d <= d_hi * nominal) {
                    return Err(ScatError::InvalidLayout(format!(
                        "site {idx}: pair separation {d:.6e} outside the band \
                         [{:.6e}, {:.6e}] = [d_min, d_max]·a^t",
                        d_lo * nominal,
                        d_hi * nominal
                    )));
                }
                if d <= 2.0 * a {
                    return Err(ScatError::InvalidLayout(format!(
                        "site {idx}: balls of radius {a:.3e} overlap at \
                         separation {d:.3e}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn sites(&self) -> &[ProbeSite] {
        &self.sites
    }

    pub fn scaling(&self) -> &LayoutScaling {
        &self.scaling
    }

    pub fn radius(&self) -> f64 {
        self.scaling.radius
    }

    pub fn impedance_exponent(&self) -> f64 {
        self.scaling.impedance_exponent
    }

    pub fn closeness_exponent(&self) -> f64 {
        self.scaling.closeness_exponent
    }

    /// Whether the `(h, t)` validity-window check was skipped at build time.
    pub fn exponents_unchecked(&self) -> bool {
        self.exponents_unchecked
    }

    /// Map the sites to new positions, preserving scaling parameters, and
    /// re-validate geometry against the closeness exponent `t_check`.
    pub(crate) fn with_sites(
        &self,
        sites: Vec<ProbeSite>,
        support: &SupportBox,
        t_check: f64,
    ) -> Result<Self> {
        let moved = InclusionLayout {
            sites,
            scaling: self.scaling,
            exponents_unchecked: self.exponents_unchecked,
        };
        moved.validate_geometry(support, t_check)?;
        Ok(moved)
    }
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::SupportBox;
    use proptest::prelude::*;

    fn unit_box() -> SupportBox {
        SupportBox::cube(Vec3::ZERO, 1.0).unwrap()
    }

    fn pair_sites(a: f64, t: f64) -> Vec<ProbeSite> {
        let d = a.powf(t);
        vec![ProbeSite::pair(
            Vec3::new(-0.5 * d, 0.0, 0.0),
            Vec3::new(0.5 * d, 0.0, 0.0),
        )]
    }

    #[test]
    fn test_accepts_valid_pair_layout() {
        let a = 0.01;
        let scaling = LayoutScaling::new(a, 0.25, 0.25);
        let layout = InclusionLayout::new(pair_sites(a, 0.25), scaling, &unit_box()).unwrap();
        assert_eq!(layout.sites().len(), 1);
        assert!(!layout.exponents_unchecked());
        let d = layout.sites()[0].separation().unwrap();
        assert!((d - a.powf(0.25)).abs() < 1e-12);
    }

    #[test]
    fn test_rejects_exponents_outside_window() {
        // h ≤ 0 and h + 2t ≥ 1 must both be rejected.
        let a = 0.01;
        for (h, t) in [(0.0, 0.2), (-0.1, 0.2), (0.5, 0.3), (0.4, 0.3001)] {
            let scaling = LayoutScaling::new(a, h, t);
            let err = InclusionLayout::new(pair_sites(a, t.max(0.05)), scaling, &unit_box());
            assert!(
                err.is_err(),
                "exponents (h={h}, t={t}) should be rejected by the checked builder"
            );
        }
    }

    #[test]
    fn test_unchecked_builder_admits_window_violation_but_not_bad_geometry() {
        let a = 0.01;
        // (h, t) = (0.5, 0.3) violates h + 2t < 1 but is admitted unchecked.
        let scaling = LayoutScaling::new(a, 0.5, 0.3);
        let layout =
            InclusionLayout::new_unchecked_exponents(pair_sites(a, 0.3), scaling, &unit_box())
                .unwrap();
        assert!(layout.exponents_unchecked());
        // Geometry violations are still rejected.
        let outside = vec![ProbeSite::single(Vec3::new(2.0, 0.0, 0.0))];
        let err = InclusionLayout::new_unchecked_exponents(outside, scaling, &unit_box());
        assert!(err.is_err(), "center outside the box must be rejected");
    }

    #[test]
    fn test_rejects_separation_outside_band() {
        let a = 0.01;
        let scaling = LayoutScaling::new(a, 0.25, 0.25);
        // Separation 3·a^t is far beyond the default band upper factor 1.5.
        let d = 3.0 * a.powf(0.25);
        let sites = vec![ProbeSite::pair(
            Vec3::new(-0.5 * d, 0.0, 0.0),
            Vec3::new(0.5 * d, 0.0, 0.0),
        )];
        let err = InclusionLayout::new(sites, scaling, &unit_box()).unwrap_err();
        assert!(matches!(err, ScatError::InvalidLayout(_)));
    }

    #[test]
    fn test_rejects_overlapping_pair_balls() {
        // Radius large enough that 2a exceeds the pair separation, while the
        // separation itself still sits inside the band. The exponent window
        // is skipped so the geometric check is the one that fires.
        let a = 0.2;
        let t = 0.9;
        let scaling = LayoutScaling::new(a, 0.05, t);
        let err = InclusionLayout::new_unchecked_exponents(pair_sites(a, t), scaling, &unit_box());
        assert!(err.is_err(), "overlapping balls must be rejected");
    }

    #[test]
    fn test_rejects_center_on_boundary() {
        let a = 0.01;
        let scaling = LayoutScaling::new(a, 0.25, 0.25);
        let sites = vec![ProbeSite::single(Vec3::new(1.0, 0.0, 0.0))];
        let err = InclusionLayout::new(sites, scaling, &unit_box());
        assert!(err.is_err(), "boundary center is not strictly inside");
    }

    proptest! {
        // Any (h, t) violating the window is rejected by the checked builder,
        // and any valid draw round-trips through construction.
        #[test]
        fn prop_checked_builder_enforces_exponent_window(
            h in -0.5f64..1.5,
            t in 0.01f64..0.7,
        ) {
            let a = 0.01f64;
            let scaling = LayoutScaling::new(a, h, t);
            let result = InclusionLayout::new(pair_sites(a, t), scaling, &unit_box());
            let admissible = h > 0.0 && h + 2.0 * t < 1.0;
            prop_assert_eq!(result.is_ok(), admissible);
        }
    }
}
