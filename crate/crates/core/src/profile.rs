//! Point spread function models and the blurred-halfspace profile.
//!
//! A PSF is a nonnegative unit-mass kernel; blurring the indicator of a
//! halfspace with it produces a 1D profile `theta(t)` of grey value against
//! signed distance. Both built-in kernels are rotation invariant, so the
//! profile does not depend on the halfspace orientation. Its inverse `phi`
//! converts grey values back to signed distances, which is what makes the
//! surface-tensor estimators work.

use crate::error::{Error, Result};
use crate::quad;
use crate::special;
use std::f64::consts::PI;
use std::fmt::Write as _;

/// Kernel family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsfKind {
    /// Standard Gaussian density.
    Gaussian,
    /// Normalized indicator of a centered ball of the given radius.
    BallIndicator { radius: f64 },
}

/// A point spread function in `dim` dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Psf {
    dim: usize,
    kind: PsfKind,
    /// Effective support radius: mass outside is below `tail_mass`.
    support_radius: f64,
    tail_mass: f64,
}

// Gaussian effective support. The radial tail mass at 6 sigma is ~1.5e-8 in
// d=2 and ~8e-8 in d=3; truncated kernels are renormalized wherever they are
// sampled, keeping synthesis errors well under the 1e-6 intensity tolerance.
const GAUSS_SUPPORT: f64 = 6.0;

impl Psf {
    pub fn gaussian(dim: usize) -> Psf {
        assert!(dim == 2 || dim == 3, "supported dimensions are 2 and 3");
        let tail = match dim {
            2 => (-0.5 * GAUSS_SUPPORT * GAUSS_SUPPORT).exp(),
            _ => 1.0e-7,
        };
        let psf = Psf {
            dim,
            kind: PsfKind::Gaussian,
            support_radius: GAUSS_SUPPORT,
            tail_mass: tail,
        };
        psf.assert_unit_mass();
        psf
    }

    pub fn ball(dim: usize, radius: f64) -> Result<Psf> {
        assert!(dim == 2 || dim == 3, "supported dimensions are 2 and 3");
        if !(radius > 0.0) {
            return Err(Error::Profile(format!("ball radius must be > 0, got {radius}")));
        }
        let psf = Psf {
            dim,
            kind: PsfKind::BallIndicator { radius },
            support_radius: radius,
            tail_mass: 0.0,
        };
        psf.assert_unit_mass();
        Ok(psf)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> PsfKind {
        self.kind
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn rotation_invariant(&self) -> bool {
        true
    }

    /// Kernel density at a point.
    pub fn density(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let r2: f64 = x.iter().map(|v| v * v).sum();
        self.density_radial(r2.sqrt())
    }

    /// Density as a function of radius (both kinds are rotation invariant).
    pub fn density_radial(&self, r: f64) -> f64 {
        match self.kind {
            PsfKind::Gaussian => {
                (2.0 * PI).powf(-(self.dim as f64) / 2.0) * (-0.5 * r * r).exp()
            }
            PsfKind::BallIndicator { radius } => {
                if r <= radius {
                    1.0 / ball_volume(self.dim, radius)
                } else {
                    0.0
                }
            }
        }
    }

    /// Resolution-scaled density `a^-d rho(x / a)`.
    pub fn scaled_density(&self, a: f64, x: &[f64]) -> Result<f64> {
        if !(a > 0.0) {
            return Err(Error::Profile(format!("resolution must be > 0, got {a}")));
        }
        let y: Vec<f64> = x.iter().map(|v| v / a).collect();
        Ok(a.powi(-(self.dim as i32)) * self.density(&y))
    }

    /// The blurred-halfspace profile associated to this kernel.
    pub fn profile(&self) -> Profile {
        Profile {
            dim: self.dim,
            kind: self.kind,
            support_radius: self.support_radius,
        }
    }

    fn assert_unit_mass(&self) {
        let d = self.dim as u32;
        let omega = special::sphere_surface(d);
        let rmax = match self.kind {
            PsfKind::Gaussian => 12.0,
            PsfKind::BallIndicator { radius } => radius,
        };
        let mass = quad::integrate_composite(
            |r| omega * r.powi(d as i32 - 1) * self.density_radial(r),
            0.0,
            rmax,
            64,
            16,
        );
        assert!(
            (mass - 1.0).abs() < 1e-9,
            "kernel mass {mass} deviates from 1"
        );
    }
}

fn ball_volume(dim: usize, radius: f64) -> f64 {
    match dim {
        2 => PI * radius * radius,
        3 => 4.0 / 3.0 * PI * radius.powi(3),
        _ => unreachable!(),
    }
}

/// Blurred-halfspace profile: grey value against signed distance from the
/// boundary, with derivative and inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Profile {
    dim: usize,
    kind: PsfKind,
    support_radius: f64,
}

impl Profile {
    /// Grey value at signed distance `t` (positive side is outside).
    pub fn theta(&self, t: f64) -> f64 {
        match self.kind {
            PsfKind::Gaussian => special::norm_cdf(-t),
            PsfKind::BallIndicator { radius } => {
                let r = radius;
                if t <= -r {
                    1.0
                } else if t >= r {
                    0.0
                } else {
                    match self.dim {
                        // Fraction of the ball on the covered side of a chord
                        // at signed distance t from the center.
                        2 => (r * r * (t / r).acos() - t * (r * r - t * t).sqrt()) / (PI * r * r),
                        3 => (r - t).powi(2) * (2.0 * r + t) / (4.0 * r.powi(3)),
                        _ => unreachable!(),
                    }
                }
            }
        }
    }

    /// Derivative of [`theta`](Self::theta).
    pub fn theta_prime(&self, t: f64) -> f64 {
        match self.kind {
            PsfKind::Gaussian => -special::norm_pdf(t),
            PsfKind::BallIndicator { radius } => {
                let r = radius;
                if t.abs() >= r {
                    0.0
                } else {
                    match self.dim {
                        2 => -2.0 * (r * r - t * t).sqrt() / (PI * r * r),
                        3 => -3.0 * (r * r - t * t) / (4.0 * r.powi(3)),
                        _ => unreachable!(),
                    }
                }
            }
        }
    }

    /// Maximal open interval on which theta is strictly decreasing, i.e.
    /// the preimage of (0, 1). Infinite for the Gaussian.
    pub fn monotone_window(&self) -> (f64, f64) {
        match self.kind {
            PsfKind::Gaussian => (f64::NEG_INFINITY, f64::INFINITY),
            PsfKind::BallIndicator { radius } => (-radius, radius),
        }
    }

    /// Finite window used for exports and plotting.
    pub fn export_window(&self) -> (f64, f64) {
        let (lo, hi) = self.monotone_window();
        (lo.max(-self.support_radius), hi.min(self.support_radius))
    }

    /// Inverse of theta on (0, 1).
    pub fn phi(&self, v: f64) -> Result<f64> {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::OutsideInvertibleRange(v));
        }
        match self.kind {
            PsfKind::Gaussian => Ok(-special::inv_norm_cdf(v)),
            PsfKind::BallIndicator { radius } => {
                let root = quad::brent_root(|t| self.theta(t) - v, -radius, radius, 1e-14)
                    .ok_or_else(|| Error::Profile("phi bracket failed".into()))?;
                Ok(root)
            }
        }
    }

    /// Whether `v` is a regular value: the profile slope at its preimage is
    /// bounded away from zero (relative to the peak slope), so thresholding
    /// at `v` is well posed.
    pub fn regular_value(&self, v: f64) -> bool {
        if !(v > 0.0 && v < 1.0) {
            return false;
        }
        let Ok(t) = self.phi(v) else { return false };
        let peak = -self.theta_prime(0.0);
        self.theta_prime(t) < -1e-3 * peak
    }

    /// Two-column text table (t, theta(t)) on a uniform grid over the
    /// export window.
    pub fn export_table(&self, n_points: usize) -> String {
        let n = n_points.max(2);
        let (lo, hi) = self.export_window();
        let mut out = String::new();
        for i in 0..n {
            let t = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            writeln!(out, "{:.16e}\t{:.16e}", t, self.theta(t)).unwrap();
        }
        out
    }
}

/// Outcome of the PSF admissibility check for threshold pair (beta, omega)
/// and lattice diameter V: the distance window [phi(omega)-V, phi(beta)+V]
/// must lie inside the strictly decreasing range of theta.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub valid: bool,
    /// Distance window that must be invertible.
    pub window: (f64, f64),
    /// Strictly decreasing range of theta.
    pub domain: (f64, f64),
    /// Distance to spare between window and domain (negative when invalid,
    /// infinite for profiles invertible on all of R).
    pub slack: f64,
    pub detail: String,
}

/// Checks that the profile is usable for configuration estimators with the
/// given thresholds: endpoints regular, window inside the invertible range.
pub fn validate_conditions(profile: &Profile, beta: f64, omega: f64, v_max: f64) -> ConditionReport {
    let domain = profile.monotone_window();
    let fail = |msg: String| ConditionReport {
        valid: false,
        window: (f64::NAN, f64::NAN),
        domain,
        slack: f64::NEG_INFINITY,
        detail: msg,
    };
    if !(0.0 < beta && beta < omega && omega < 1.0) {
        return fail(format!("need 0 < beta < omega < 1, got ({beta}, {omega})"));
    }
    if !(v_max > 0.0) {
        return fail(format!("need V > 0, got {v_max}"));
    }
    let (Ok(t_hi), Ok(t_lo)) = (profile.phi(beta), profile.phi(omega)) else {
        return fail("thresholds outside the invertible range".into());
    };
    let window = (t_lo - v_max, t_hi + v_max);
    let slack = (window.0 - domain.0).min(domain.1 - window.1);
    let valid = slack > 0.0;
    ConditionReport {
        valid,
        window,
        domain,
        slack,
        detail: if valid {
            format!("window [{:.4}, {:.4}] inside decreasing range", window.0, window.1)
        } else {
            format!(
                "window [{:.4}, {:.4}] exceeds decreasing range [{:.4}, {:.4}]",
                window.0, window.1, domain.0, domain.1
            )
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    #[test]
    fn gaussian_theta_at_zero_and_one() {
        let p = Psf::gaussian(2).profile();
        assert!((p.theta(0.0) - 0.5).abs() < 1e-15);
        // Complementary normal CDF, frozen from the series oracle.
        assert!((p.theta(1.0) - 0.15865525393145705).abs() < 1e-12);
    }

    #[test]
    fn ball_segment_profile_value() {
        // Chord at half radius: (arccos(1/2) - (1/2) sqrt(3)/2) / pi.
        let p = Psf::ball(2, 1.0).unwrap().profile();
        let expected = ((0.5f64).acos() - 0.5 * (0.75f64).sqrt()) / PI;
        assert!((p.theta(0.5) - expected).abs() < 1e-14);
        assert!((expected - 0.19550110947788532).abs() < 1e-14);
    }

    #[test]
    fn ball3_profile_endpoints() {
        let p = Psf::ball(3, 2.0).unwrap().profile();
        assert_eq!(p.theta(-2.0), 1.0);
        assert_eq!(p.theta(2.0), 0.0);
        assert!((p.theta(0.0) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn phi_inverts_theta() {
        let gauss = Psf::gaussian(2).profile();
        assert!(gauss.phi(0.5).unwrap().abs() < 1e-14);
        assert!((gauss.phi(0.15865525393145705).unwrap() - 1.0).abs() < 1e-10);
        let roundtrip = gauss.theta(gauss.phi(0.37).unwrap());
        assert!((roundtrip - 0.37).abs() < 1e-12);

        let ball = Psf::ball(2, 1.5).unwrap().profile();
        for &v in &[0.05, 0.3, 0.5, 0.77, 0.99] {
            let t = ball.phi(v).unwrap();
            assert!((ball.theta(t) - v).abs() < 1e-11, "v={v}");
        }
        assert!(gauss.phi(0.0).is_err());
        assert!(gauss.phi(1.0).is_err());
    }

    #[test]
    fn profile_symmetry_and_antitone() {
        for profile in [
            Psf::gaussian(2).profile(),
            Psf::ball(2, 1.3).unwrap().profile(),
            Psf::ball(3, 0.8).unwrap().profile(),
        ] {
            for k in 0..50 {
                let t = (rng::uniform01(11, k) - 0.5) * 4.0;
                let sum = profile.theta(t) + profile.theta(-t);
                assert!((sum - 1.0).abs() < 1e-12, "t={t}");
            }
            let (v1, v2) = (0.2, 0.6);
            assert!(profile.phi(v1).unwrap() > profile.phi(v2).unwrap());
        }
    }

    #[test]
    fn coordinate_identity_on_random_samples() {
        // phi(theta(t + <v,u>)) - phi(theta(t)) = <u,v> for any unit u and
        // offset v, inside the valid window.
        let p = Psf::gaussian(2).profile();
        for k in 0..200 {
            let ang = rng::uniform01(3, k) * 2.0 * PI;
            let u = [ang.cos(), ang.sin()];
            let v = if k % 2 == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
            let t = (rng::uniform01(5, k) - 0.5) * 4.0;
            let ip = u[0] * v[0] + u[1] * v[1];
            let lhs = p.phi(p.theta(t + ip)).unwrap() - p.phi(p.theta(t)).unwrap();
            assert!((lhs - ip).abs() < 1e-9, "t={t} ip={ip} lhs={lhs}");
        }
    }

    #[test]
    fn regular_values() {
        let gauss = Psf::gaussian(2).profile();
        assert!(gauss.regular_value(0.25));
        let ball = Psf::ball(2, 1.0).unwrap().profile();
        assert!(ball.regular_value(0.5));
        // Preimage at the support edge: slope vanishes.
        assert!(!ball.regular_value(1.0 - 1e-12));
        assert!(!ball.regular_value(1e-12));
    }

    #[test]
    fn condition_validation_examples() {
        let gauss = Psf::gaussian(2).profile();
        let rep = validate_conditions(&gauss, 0.1, 0.9, 1.5);
        assert!(rep.valid);
        assert!(rep.slack.is_infinite());

        let ball1 = Psf::ball(2, 1.0).unwrap().profile();
        let rep = validate_conditions(&ball1, 0.1, 0.9, 1.5);
        assert!(!rep.valid, "{}", rep.detail);
        assert!(rep.slack < 0.0);

        let ball4 = Psf::ball(2, 4.0).unwrap().profile();
        let rep = validate_conditions(&ball4, 0.3, 0.7, 1.0);
        assert!(rep.valid, "{}", rep.detail);
        assert!(rep.slack > 0.0 && rep.slack.is_finite());

        let rep = validate_conditions(&gauss, 0.9, 0.1, 1.0);
        assert!(!rep.valid);
    }

    #[test]
    fn scaled_density_values() {
        let psf = Psf::gaussian(2);
        let v = psf.scaled_density(1.0, &[0.0, 0.0]).unwrap();
        assert!((v - 1.0 / (2.0 * PI)).abs() < 1e-14);
        let v = psf.scaled_density(0.5, &[0.0, 0.0]).unwrap();
        assert!((v - 4.0 / (2.0 * PI)).abs() < 1e-13);
        assert!(psf.scaled_density(-1.0, &[0.0, 0.0]).is_err());

        // Scaled kernel keeps unit mass: radial quadrature over radius 6a.
        let a = 0.25;
        let mass = quad::integrate_composite(
            |r| 2.0 * PI * r * psf.scaled_density(a, &[r, 0.0]).unwrap(),
            0.0,
            6.0 * a,
            64,
            16,
        );
        assert!((mass - 1.0).abs() < 1e-6, "{mass}");
    }

    #[test]
    fn export_table_shape() {
        let p = Psf::ball(2, 2.0).unwrap().profile();
        let table = p.export_table(11);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 11);
        let first: Vec<f64> = lines[0]
            .split('\t')
            .map(|f| f.parse().unwrap())
            .collect();
        assert!((first[0] + 2.0).abs() < 1e-12);
        assert!((first[1] - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn phi_roundtrip_prop(v in 0.01f64..0.99) {
            let p = Psf::gaussian(2).profile();
            let t = p.phi(v).unwrap();
            prop_assert!((p.theta(t) - v).abs() < 1e-9);
        }
    }
}
