//! Local configuration estimators: weighted sums over lattice
//! configurations of a grey-scale image, converging to Minkowski tensors
//! as the resolution refines.
//!
//! Four estimator families are provided: thresholded volume tensors,
//! surface tensors from 2 x .. x 2 configurations, surface tensors from
//! 3 x .. x 3 configurations with vanishing first-order bias, and mean
//! curvature tensors from single-pixel weights with a calibrated constant.
//!
//! Estimators accept either a rendered [`GreyImage`] (one fixed lattice
//! translation) or an [`AnalyticField`] wrapping a [`Scene`], which supports
//! seeded Monte Carlo averaging over lattice translations. Lattice sums are
//! tiled with a fixed topology, so results are bitwise reproducible for any
//! worker count.

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::image::{ConfigOffsets, GreyImage, Lattice, Window};
use crate::profile::{validate_conditions, Profile, Psf};
use crate::quad;
use crate::rng;
use crate::shapes::Shape;
use crate::special::sphere_surface;
use crate::synth::Scene;
use crate::tensor::{multi_indices, SymTensor};
use std::sync::Arc;

// Intensities this close to 0 or 1 are treated as saturated; admissible
// boxes must keep clear of the saturation bands.
const SATURATION: f64 = 1e-9;

/// Conservative classification of a lattice point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointClass {
    /// Intensity is 1 within the saturation tolerance.
    Inside,
    /// Intensity is 0 within the saturation tolerance.
    Outside,
    /// Must be evaluated.
    Band,
}

/// Source of lattice-sampled intensities for the estimators.
pub trait IntensityField: Sync + Sized {
    fn dim(&self) -> usize;
    fn lattice(&self) -> &Lattice;
    /// Index window the lattice sum iterates over.
    fn iter_window(&self) -> Window;
    fn value_at(&self, idx: &[i64; 3]) -> f64;
    fn classify(&self, idx: &[i64; 3]) -> PointClass;
    fn supports_translation(&self) -> bool;
    fn with_translation(&self, frac: [f64; 3]) -> Result<Self>;
}

/// Analytic intensity source: a scene sampled on demand, supporting random
/// lattice translations.
#[derive(Debug, Clone)]
pub struct AnalyticField {
    scene: Scene,
    lattice: Lattice,
    window: Window,
}

impl AnalyticField {
    /// Window derived from the shape bounds with a margin of twice the
    /// effective PSF support.
    pub fn new(scene: Scene, lattice: Lattice) -> Result<AnalyticField> {
        let window = scene.window_for(&lattice, 2.0)?;
        AnalyticField::with_window(scene, lattice, window)
    }

    pub fn with_window(scene: Scene, lattice: Lattice, window: Window) -> Result<AnalyticField> {
        if lattice.dim() != scene.set().dim() {
            return Err(Error::DimMismatch {
                expected: scene.set().dim(),
                got: lattice.dim(),
            });
        }
        if ((lattice.resolution() - scene.resolution()) / scene.resolution()).abs() > 1e-12 {
            return Err(Error::Estimate(
                "lattice resolution does not match scene resolution".into(),
            ));
        }
        Ok(AnalyticField {
            scene,
            lattice,
            window,
        })
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }
}

impl IntensityField for AnalyticField {
    fn dim(&self) -> usize {
        self.lattice.dim()
    }

    fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    fn iter_window(&self) -> Window {
        self.window
    }

    fn value_at(&self, idx: &[i64; 3]) -> f64 {
        let p = self.lattice.position(idx);
        self.scene.intensity(&p[..self.dim()])
    }

    fn classify(&self, idx: &[i64; 3]) -> PointClass {
        let p = self.lattice.position(idx);
        let sd = self.scene.signed_distance(&p[..self.dim()]);
        let cut = self.scene.tail_cut() * self.lattice.resolution();
        if sd >= cut {
            PointClass::Outside
        } else if sd <= -cut {
            PointClass::Inside
        } else {
            PointClass::Band
        }
    }

    fn supports_translation(&self) -> bool {
        true
    }

    fn with_translation(&self, frac: [f64; 3]) -> Result<AnalyticField> {
        Ok(AnalyticField {
            scene: self.scene.clone(),
            lattice: self.lattice.with_translation(frac),
            window: self.window,
        })
    }
}

impl IntensityField for GreyImage {
    fn dim(&self) -> usize {
        self.lattice().dim()
    }

    fn lattice(&self) -> &Lattice {
        GreyImage::lattice(self)
    }

    fn iter_window(&self) -> Window {
        *self.window()
    }

    fn value_at(&self, idx: &[i64; 3]) -> f64 {
        self.value(idx).expect("index inside the image window")
    }

    fn classify(&self, idx: &[i64; 3]) -> PointClass {
        let v = self.value_at(idx);
        if v <= SATURATION {
            PointClass::Outside
        } else if v >= 1.0 - SATURATION {
            PointClass::Inside
        } else {
            PointClass::Band
        }
    }

    fn supports_translation(&self) -> bool {
        false
    }

    fn with_translation(&self, _frac: [f64; 3]) -> Result<GreyImage> {
        Err(Error::Estimate(
            "image sources have a fixed lattice translation; use an analytic field for Monte Carlo averaging".into(),
        ))
    }
}

/// Monte Carlo and execution options shared by all estimators.
#[derive(Debug, Clone, Copy)]
pub struct EstimatorOptions {
    pub translations: usize,
    pub seed: u64,
    pub mode: ExecMode,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            translations: 32,
            seed: 0,
            mode: ExecMode::Auto,
        }
    }
}

impl EstimatorOptions {
    pub fn with_seed(seed: u64) -> Self {
        EstimatorOptions {
            seed,
            ..Default::default()
        }
    }
}

/// Tensor estimate with its Monte Carlo spread.
#[derive(Debug, Clone)]
pub struct EstimateResult {
    /// Mean over translations.
    pub tensor: SymTensor,
    /// Component-wise standard error of the mean.
    pub std_error: SymTensor,
    pub per_translation: Vec<SymTensor>,
    pub a: f64,
    pub translations: usize,
}

impl EstimateResult {
    fn from_samples(samples: Vec<SymTensor>, a: f64) -> EstimateResult {
        let n = samples.len();
        let dim = samples[0].dim();
        let rank = samples[0].rank();
        let mut mean = SymTensor::zeros(dim, rank);
        for s in &samples {
            mean = mean.add(s).unwrap();
        }
        let mean = mean.scale(1.0 / n as f64);
        let mut var = SymTensor::zeros(dim, rank);
        if n > 1 {
            for s in &samples {
                let d = s.add(&mean.scale(-1.0)).unwrap();
                let sq: Vec<f64> = d.components().iter().map(|x| x * x).collect();
                for (acc, v) in var.components_mut().iter_mut().zip(sq) {
                    *acc += v;
                }
            }
            let scale = 1.0 / (n as f64 * (n - 1) as f64);
            for v in var.components_mut() {
                *v = (*v * scale).sqrt();
            }
        }
        EstimateResult {
            tensor: mean,
            std_error: var,
            per_translation: samples,
            a,
            translations: n,
        }
    }
}

/// Bundle-valued configuration weight: (tuple, physical position, out).
pub type WeightFn = Arc<dyn Fn(&[f64], &[f64; 3], &mut [f64]) + Send + Sync>;

/// A local weighted-sum specification: offset pattern, admissible box,
/// homogeneity degree q, and a bundle-valued weight evaluated at admissible
/// configurations.
#[derive(Clone)]
pub struct WeightSpec {
    pub offsets: ConfigOffsets,
    /// Closed intensity interval per offset; the weight is applied only
    /// when every tuple entry lies in its interval.
    pub admissible: Vec<[f64; 2]>,
    /// Homogeneity degree: the sum is scaled by a^degree.
    pub degree: i32,
    /// Number of bundle entries the weight produces.
    pub width: usize,
    /// Weight: (configuration tuple, physical position) -> bundle added
    /// into the accumulator.
    pub weight: WeightFn,
    /// Intensity values at which the weight (not the box) has kinks or
    /// jumps, for quadrature-side consumers.
    pub theta_breakpoints: Vec<f64>,
}

impl WeightSpec {
    pub fn new(
        offsets: ConfigOffsets,
        admissible: Vec<[f64; 2]>,
        degree: i32,
        width: usize,
        weight: WeightFn,
    ) -> Result<WeightSpec> {
        if admissible.len() != offsets.len() {
            return Err(Error::Estimate(format!(
                "admissible box arity {} does not match offsets {}",
                admissible.len(),
                offsets.len()
            )));
        }
        for iv in &admissible {
            if !(iv[0] <= iv[1]) {
                return Err(Error::Estimate(format!("empty interval {iv:?}")));
            }
            if iv[0] < 100.0 * SATURATION || iv[1] > 1.0 - 100.0 * SATURATION {
                return Err(Error::Estimate(format!(
                    "admissible interval {iv:?} reaches into the saturation bands"
                )));
            }
        }
        Ok(WeightSpec {
            offsets,
            admissible,
            degree,
            width,
            weight,
            theta_breakpoints: Vec::new(),
        })
    }

    /// Scalar indicator weight: 1 on the admissible box.
    pub fn indicator(offsets: ConfigOffsets, admissible: Vec<[f64; 2]>, degree: i32) -> Result<WeightSpec> {
        WeightSpec::new(
            offsets,
            admissible,
            degree,
            1,
            Arc::new(|_cfg, _pos, out| out[0] += 1.0),
        )
    }

    /// Checks that every interval endpoint is a regular value of the
    /// profile.
    pub fn validate_regular(&self, profile: &Profile) -> Result<()> {
        for iv in &self.admissible {
            for v in iv {
                if !profile.regular_value(*v) {
                    return Err(Error::Estimate(format!(
                        "admissible endpoint {v} is not a regular value of the profile"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl std::fmt::Debug for WeightSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WeightSpec")
            .field("offsets", &self.offsets)
            .field("admissible", &self.admissible)
            .field("degree", &self.degree)
            .field("width", &self.width)
            .finish()
    }
}

/// The weighted configuration sum a^q sum_z f(config(z), a z) for one
/// lattice translation.
///
/// Fails rather than silently truncating: if configurations on the window
/// rim could contribute (their center intensity lies in the admissible
/// box), the window is too small.
pub fn local_sum<F: IntensityField>(
    field: &F,
    spec: &WeightSpec,
    mode: ExecMode,
) -> Result<Vec<f64>> {
    let full = field.iter_window();
    let iter_w = full.shrink_for(spec.offsets.offsets());
    let d = field.dim();
    for i in 0..d {
        if iter_w.hi[i] <= iter_w.lo[i] {
            return Err(Error::WindowTooSmall(
                "window cannot hold a single configuration".into(),
            ));
        }
    }
    // Index of the zero offset, if present: enables the saturation skip and
    // the rim clipping check.
    let zero_pos = spec
        .offsets
        .offsets()
        .iter()
        .position(|o| *o == [0, 0, 0]);
    if let Some(zp) = zero_pos {
        rim_clip_check(field, &full, &iter_w, spec.admissible[zp], false)?;
    }
    let a = field.lattice().resolution();
    let rows = (iter_w.hi[0] - iter_w.lo[0]) as usize;
    let offsets = spec.offsets.offsets();
    let sums = exec::sum_bundles(mode, rows, spec.width, |row| {
        let i0 = iter_w.lo[0] + row as i64;
        let mut acc = vec![0.0; spec.width];
        let mut cfg = vec![0.0; offsets.len()];
        for i1 in iter_w.lo[1]..iter_w.hi[1] {
            for i2 in iter_w.lo[2]..iter_w.hi[2] {
                let z = [i0, i1, i2];
                if zero_pos.is_some() && field.classify(&z) != PointClass::Band {
                    continue;
                }
                let mut admissible = true;
                for (j, off) in offsets.iter().enumerate() {
                    let v = field.value_at(&[z[0] + off[0], z[1] + off[1], z[2] + off[2]]);
                    let iv = spec.admissible[j];
                    if v < iv[0] || v > iv[1] {
                        admissible = false;
                        break;
                    }
                    cfg[j] = v;
                }
                if admissible {
                    let pos = field.lattice().position(&z);
                    (spec.weight)(&cfg, &pos, &mut acc);
                }
            }
        }
        acc
    });
    let scale = a.powi(spec.degree);
    Ok(sums.into_iter().map(|v| v * scale).collect())
}

/// Errors when any rim configuration (excluded from the shrunk iteration
/// window) could have contributed: its center value lies in the interval,
/// or, when `include_inside` is set, the point is saturated-inside.
fn rim_clip_check<F: IntensityField>(
    field: &F,
    full: &Window,
    iter_w: &Window,
    center_interval: [f64; 2],
    include_inside: bool,
) -> Result<()> {
    let mut idx = full.lo;
    loop {
        let on_rim = (0..3).any(|i| idx[i] < iter_w.lo[i] || idx[i] >= iter_w.hi[i]);
        if on_rim {
            let clipped = match field.classify(&idx) {
                PointClass::Inside => include_inside,
                PointClass::Outside => false,
                PointClass::Band => {
                    let v = field.value_at(&idx);
                    v >= center_interval[0] && v <= center_interval[1]
                }
            };
            if clipped {
                return Err(Error::WindowTooSmall(format!(
                    "configuration support clipped at window rim (index {idx:?})"
                )));
            }
        }
        // Odometer.
        let mut axis = 3;
        loop {
            if axis == 0 {
                return Ok(());
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < full.hi[axis] {
                break;
            }
            idx[axis] = full.lo[axis];
        }
    }
}

/// Runs `per_translation` over the seeded translation sequence and collects
/// tensors. With a single translation the base field is used as-is.
fn monte_carlo<F, G>(field: &F, opts: &EstimatorOptions, per_translation: G) -> Result<Vec<SymTensor>>
where
    F: IntensityField,
    G: Fn(&F, ExecMode) -> Result<SymTensor> + Sync,
{
    if opts.translations == 0 {
        return Err(Error::Estimate("need at least one translation".into()));
    }
    if opts.translations == 1 {
        return Ok(vec![per_translation(field, opts.mode)?]);
    }
    if !field.supports_translation() {
        return Err(Error::Estimate(
            "this source has a fixed lattice translation; set translations = 1".into(),
        ));
    }
    let dim = field.dim();
    let results = exec::map_reduce_tiles(
        opts.mode,
        opts.translations,
        |k| {
            let frac = rng::translation(opts.seed, k as u64, dim);
            let f = field.with_translation(frac)?;
            per_translation(&f, ExecMode::Sequential)
        },
        |r| r,
    );
    results.into_iter().collect()
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

// ---------------------------------------------------------------------------
// Volume tensors
// ---------------------------------------------------------------------------

/// Thresholded volume tensor estimator:
/// a^d (1/r!) sum_{theta(az) >= beta} (az)^r.
pub fn volume_tensor_est<F: IntensityField>(
    field: &F,
    r: u32,
    beta: f64,
    opts: &EstimatorOptions,
) -> Result<EstimateResult> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Estimate(format!("beta must be in (0,1), got {beta}")));
    }
    let d = field.dim();
    let rank = r as usize;
    let indices = multi_indices(d, rank);
    let a = field.lattice().resolution();
    let samples = monte_carlo(field, opts, |f, mode| {
        let w = f.iter_window();
        let rows = (w.hi[0] - w.lo[0]) as usize;
        // The thresholded set must not touch the rim.
        let mut shell = vec![[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0]];
        if d == 3 {
            shell.push([0, 0, 1]);
            shell.push([0, 0, -1]);
        }
        let rim = w.shrink_for(&shell);
        rim_clip_check(f, &w, &rim, [beta, 1.0], true)
            .map_err(|_| Error::WindowTooSmall("thresholded set reaches the window rim".into()))?;
        let sums = exec::sum_bundles(mode, rows, indices.len(), |row| {
            let i0 = w.lo[0] + row as i64;
            let mut acc = vec![0.0; indices.len()];
            for i1 in w.lo[1]..w.hi[1] {
                for i2 in w.lo[2]..w.hi[2] {
                    let z = [i0, i1, i2];
                    let above = match f.classify(&z) {
                        PointClass::Outside => false,
                        PointClass::Inside => true,
                        PointClass::Band => f.value_at(&z) >= beta,
                    };
                    if above {
                        let pos = f.lattice().position(&z);
                        for (slot, alpha) in indices.iter().enumerate() {
                            let mut prod = 1.0;
                            for &i in alpha {
                                prod *= pos[i as usize];
                            }
                            acc[slot] += prod;
                        }
                    }
                }
            }
            acc
        });
        let scale = a.powi(d as i32) / factorial(r);
        let mut t = SymTensor::zeros(d, rank);
        for (c, v) in t.components_mut().iter_mut().zip(sums) {
            *c = v * scale;
        }
        Ok(t)
    })?;
    Ok(EstimateResult::from_samples(samples, a))
}

// ---------------------------------------------------------------------------
// Surface tensors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SurfaceVariant {
    TwoBlock,
    ThreeBlock,
}

/// Surface tensor estimator on 2 x .. x 2 configurations.
///
/// The weight pairs position factors with profile-inverted forward
/// differences along the basis; the result is normalized by
/// phi(beta) - phi(omega) and assembled into a tensor against the dual
/// basis.
pub fn surface_tensor_est2<F: IntensityField>(
    field: &F,
    profile: &Profile,
    r: u32,
    s: u32,
    beta: f64,
    omega: f64,
    opts: &EstimatorOptions,
) -> Result<EstimateResult> {
    surface_tensor_est(field, profile, r, s, beta, omega, 0.0, SurfaceVariant::TwoBlock, opts)
}

/// Surface tensor estimator on 3 x .. x 3 configurations: symmetrized
/// forward/backward differences cancel the first-order bias on r-regular
/// sets. The upper threshold is 1 - beta and the admissible box is widened
/// by `epsilon` in signed-distance units.
pub fn surface_tensor_est3<F: IntensityField>(
    field: &F,
    profile: &Profile,
    r: u32,
    s: u32,
    beta: f64,
    epsilon: f64,
    opts: &EstimatorOptions,
) -> Result<EstimateResult> {
    if !(beta > 0.0 && beta < 0.5) {
        return Err(Error::Estimate(format!("beta must be in (0, 1/2), got {beta}")));
    }
    surface_tensor_est(
        field,
        profile,
        r,
        s,
        beta,
        1.0 - beta,
        epsilon,
        SurfaceVariant::ThreeBlock,
        opts,
    )
}

/// Builds the weight spec shared by the two surface estimators.
#[allow(clippy::too_many_arguments)]
fn surface_weight_spec(
    profile: &Profile,
    lattice: &Lattice,
    r: u32,
    s: u32,
    beta: f64,
    omega: f64,
    epsilon: f64,
    variant: SurfaceVariant,
) -> Result<(WeightSpec, f64, usize, usize)> {
    let d = lattice.dim();
    let v_max = lattice.v_max();
    let widen = match variant {
        SurfaceVariant::TwoBlock => v_max,
        SurfaceVariant::ThreeBlock => v_max + epsilon,
    };
    let report = validate_conditions(profile, beta, omega, widen);
    if !report.valid {
        return Err(Error::PsfConditions(report.detail));
    }
    let offsets = match variant {
        SurfaceVariant::TwoBlock => ConfigOffsets::two_block(d),
        SurfaceVariant::ThreeBlock => ConfigOffsets::three_block(d),
    };
    let phi_beta = profile.phi(beta)?;
    let phi_omega = profile.phi(omega)?;
    let off_iv = [profile.theta(phi_beta + widen), profile.theta(phi_omega - widen)];
    let mut admissible = vec![[beta, omega]];
    for _ in 1..offsets.len() {
        admissible.push(off_iv);
    }
    let pos_indices = multi_indices(d, r as usize);
    let nrm_indices = multi_indices(d, s as usize);
    let (n_pos, n_nrm) = (pos_indices.len(), nrm_indices.len());
    let width = n_pos * n_nrm;
    let coeff = 2.0 / sphere_surface(s + 1) / (factorial(r) * factorial(s));
    let basis: Vec<[f64; 3]> = (0..d)
        .map(|i| {
            let mut o = [0i64; 3];
            o[i] = 1;
            lattice.offset_vector(&o)
        })
        .collect();
    let profile = *profile;
    let nrm_count = nrm_indices.len();
    let weight = Arc::new(move |cfg: &[f64], pos: &[f64; 3], out: &mut [f64]| {
        let phi0 = profile.phi(cfg[0]).expect("admissible box inside (0,1)");
        // Profile-inverted differences per basis direction.
        let mut fwd = [0.0_f64; 3];
        let mut bwd = [0.0_f64; 3];
        for i in 0..d {
            match variant {
                SurfaceVariant::TwoBlock => {
                    fwd[i] = profile.phi(cfg[1 + i]).expect("admissible") - phi0;
                }
                SurfaceVariant::ThreeBlock => {
                    fwd[i] = profile.phi(cfg[1 + 2 * i]).expect("admissible") - phi0;
                    bwd[i] = phi0 - profile.phi(cfg[2 + 2 * i]).expect("admissible");
                }
            }
        }
        for (pi, palpha) in pos_indices.iter().enumerate() {
            let mut pos_factor = coeff;
            for &i in palpha {
                let v = basis[i as usize];
                pos_factor *= pos[0] * v[0] + pos[1] * v[1] + pos[2] * v[2];
            }
            for (ni, nalpha) in nrm_indices.iter().enumerate() {
                let value = match variant {
                    SurfaceVariant::TwoBlock => {
                        let mut p = 1.0;
                        for &j in nalpha {
                            p *= fwd[j as usize];
                        }
                        p
                    }
                    SurfaceVariant::ThreeBlock => {
                        let (mut pf, mut pb) = (1.0, 1.0);
                        for &j in nalpha {
                            pf *= fwd[j as usize];
                            pb *= bwd[j as usize];
                        }
                        0.5 * (pf + pb)
                    }
                };
                out[pi * nrm_count + ni] += pos_factor * value;
            }
        }
    });
    let spec = WeightSpec::new(offsets, admissible, d as i32 - 1, width, weight)?;
    spec.validate_regular(&profile)?;
    Ok((spec, phi_beta - phi_omega, n_pos, n_nrm))
}

/// Weight spec and normalization constant of the 2-block surface
/// estimator, for quadrature-side consumers (exact mean-value studies).
pub fn surface_spec_two(
    profile: &Profile,
    lattice: &Lattice,
    r: u32,
    s: u32,
    beta: f64,
    omega: f64,
) -> Result<(WeightSpec, f64)> {
    let (spec, norm, _, _) =
        surface_weight_spec(profile, lattice, r, s, beta, omega, 0.0, SurfaceVariant::TwoBlock)?;
    Ok((spec, norm))
}

/// Weight spec and normalization constant of the 3-block surface
/// estimator.
pub fn surface_spec_three(
    profile: &Profile,
    lattice: &Lattice,
    r: u32,
    s: u32,
    beta: f64,
    epsilon: f64,
) -> Result<(WeightSpec, f64)> {
    let (spec, norm, _, _) = surface_weight_spec(
        profile,
        lattice,
        r,
        s,
        beta,
        1.0 - beta,
        epsilon,
        SurfaceVariant::ThreeBlock,
    )?;
    Ok((spec, norm))
}

#[allow(clippy::too_many_arguments)]
fn surface_tensor_est<F: IntensityField>(
    field: &F,
    profile: &Profile,
    r: u32,
    s: u32,
    beta: f64,
    omega: f64,
    epsilon: f64,
    variant: SurfaceVariant,
    opts: &EstimatorOptions,
) -> Result<EstimateResult> {
    if !(beta < omega) {
        return Err(Error::Estimate(format!(
            "thresholds must satisfy beta < omega, got ({beta}, {omega})"
        )));
    }
    let d = field.dim();
    let (spec, norm, _np, _nn) =
        surface_weight_spec(profile, field.lattice(), r, s, beta, omega, epsilon, variant)?;
    let a = field.lattice().resolution();
    let basis = *field.lattice().basis();
    let samples = monte_carlo(field, opts, |f, mode| {
        let bundle = local_sum(f, &spec, mode)?;
        let evals: Vec<f64> = bundle.iter().map(|v| v / norm).collect();
        assemble_from_split_evals(d, r as usize, s as usize, &evals, &basis)
    })?;
    Ok(EstimateResult::from_samples(samples, a))
}

/// Turns fixed-split evaluations (position multiset, normal multiset) into
/// tensor components: evaluations on basis tuples are split-averaged and
/// transformed through the dual basis.
fn assemble_from_split_evals(
    d: usize,
    r: usize,
    s: usize,
    evals: &[f64],
    basis: &[[f64; 3]; 3],
) -> Result<SymTensor> {
    let rank = r + s;
    let pos_indices = multi_indices(d, r);
    let nrm_indices = multi_indices(d, s);
    let nrm_count = nrm_indices.len();
    let slot_of = |mi: &[u8], table: &[Vec<u8>]| -> usize {
        let mut sorted = mi.to_vec();
        sorted.sort_unstable();
        table.iter().position(|m| m[..] == sorted[..]).unwrap()
    };
    // Split-averaged evaluation on an arbitrary basis-index tuple.
    let eval_full = |tuple: &[u8]| -> f64 {
        let mut sum = 0.0;
        let mut count = 0.0;
        for mask in 0u32..(1 << rank) {
            if mask.count_ones() as usize != r {
                continue;
            }
            let mut pos_part = Vec::with_capacity(r);
            let mut nrm_part = Vec::with_capacity(s);
            for (bit, &i) in tuple.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    pos_part.push(i);
                } else {
                    nrm_part.push(i);
                }
            }
            sum += evals[slot_of(&pos_part, &pos_indices) * nrm_count
                + slot_of(&nrm_part, &nrm_indices)];
            count += 1.0;
        }
        sum / count
    };
    // Dual-basis transform: with M holding the basis vectors as rows,
    // e_m = sum_j (M^-1)[m][j] v_j, so components in the standard basis are
    // T_alpha = sum_j prod_k (M^-1)[alpha_k][j_k] * eval_full(j).
    let binv = crate::image::invert_nd(basis, d);
    let mut out = SymTensor::zeros(d, rank);
    for alpha in multi_indices(d, rank) {
        let mut total = 0.0;
        let mut tuple = vec![0u8; rank];
        loop {
            let mut w = 1.0;
            for (k, &j) in tuple.iter().enumerate() {
                w *= binv[alpha[k] as usize][j as usize];
            }
            if w != 0.0 {
                total += w * eval_full(&tuple);
            }
            let mut axis = rank;
            let mut done = false;
            loop {
                if axis == 0 {
                    done = true;
                    break;
                }
                axis -= 1;
                tuple[axis] += 1;
                if (tuple[axis] as usize) < d {
                    break;
                }
                tuple[axis] = 0;
            }
            if done {
                break;
            }
        }
        out.set(&alpha, total);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Mean curvature tensors
// ---------------------------------------------------------------------------

/// Odd single-pixel weight driving the mean-curvature estimator; all
/// variants vanish outside [beta, 1 - beta] and satisfy g(x) = -g(1-x).
#[derive(Clone)]
pub enum GWeight {
    /// (theta - 1/2) on the admissible interval.
    CenteredLinear,
    /// +1 below 1/2, -1 above.
    StepSign,
    /// User-supplied; oddness is checked numerically where required.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for GWeight {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GWeight::CenteredLinear => write!(f, "CenteredLinear"),
            GWeight::StepSign => write!(f, "StepSign"),
            GWeight::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl GWeight {
    /// Weight value including the [beta, 1-beta] indicator. The cutoff is
    /// tolerant to one ulp of rounding in 1 - theta.
    pub fn eval(&self, theta: f64, beta: f64) -> f64 {
        if theta < beta - 1e-12 || theta > 1.0 - beta + 1e-12 {
            return 0.0;
        }
        match self {
            GWeight::CenteredLinear => theta - 0.5,
            GWeight::StepSign => {
                if theta < 0.5 {
                    1.0
                } else if theta > 0.5 {
                    -1.0
                } else {
                    0.0
                }
            }
            GWeight::Custom(f) => f(theta),
        }
    }

    /// Derivative in theta where it exists; None requests a finite
    /// difference.
    pub fn derivative(&self, _theta: f64) -> Option<f64> {
        match self {
            GWeight::CenteredLinear => Some(1.0),
            GWeight::StepSign => Some(0.0),
            GWeight::Custom(_) => None,
        }
    }

    /// Interior intensity values where the weight jumps or kinks.
    pub fn theta_breakpoints(&self) -> Vec<f64> {
        match self {
            GWeight::CenteredLinear => vec![],
            GWeight::StepSign => vec![0.5],
            GWeight::Custom(_) => vec![0.5],
        }
    }

    /// Numeric oddness check g(x) = -g(1-x) on a sample grid.
    pub fn check_odd(&self, beta: f64) -> Result<()> {
        for k in 0..=200 {
            let x = beta + (1.0 - 2.0 * beta) * k as f64 / 200.0;
            let v = self.eval(x, beta) + self.eval(1.0 - x, beta);
            if v.abs() > 1e-9 {
                return Err(Error::Estimate(format!(
                    "weight is not odd around 1/2: g({x}) + g({}) = {v}",
                    1.0 - x
                )));
            }
        }
        Ok(())
    }
}

/// The moment integral of the weight against the profile:
/// int_{-phi(beta)}^{phi(beta)} t g(theta(t)) dt, to 1e-8 or better.
pub fn compute_ig(profile: &Profile, g: &GWeight, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 0.5) {
        return Err(Error::Estimate(format!("beta must be in (0, 1/2), got {beta}")));
    }
    g.check_odd(beta)?;
    let t_hi = profile.phi(beta)?;
    let mut breaks = vec![0.0];
    for tb in g.theta_breakpoints() {
        if tb > beta && tb < 1.0 - beta {
            breaks.push(profile.phi(tb)?);
        }
    }
    Ok(quad::integrate_split(
        |t| t * g.eval(profile.theta(t), beta),
        -t_hi,
        t_hi,
        &breaks,
        0.05,
        16,
    ))
}

/// Uncorrected mean-curvature lattice sum a^(d-2) sum g(theta_0) (az)^r.
pub fn curvature_raw_est<F: IntensityField>(
    field: &F,
    r: u32,
    g: &GWeight,
    beta: f64,
    opts: &EstimatorOptions,
) -> Result<EstimateResult> {
    let d = field.dim();
    if d != 2 {
        return Err(Error::Estimate("curvature estimators are planar".into()));
    }
    let indices = multi_indices(d, r as usize);
    let width = indices.len();
    let g = g.clone();
    let idx_for_weight = indices.clone();
    let weight = Arc::new(move |cfg: &[f64], pos: &[f64; 3], out: &mut [f64]| {
        let gv = g.eval(cfg[0], beta);
        if gv != 0.0 {
            for (slot, alpha) in idx_for_weight.iter().enumerate() {
                let mut prod = gv;
                for &i in alpha {
                    prod *= pos[i as usize];
                }
                out[slot] += prod;
            }
        }
    });
    let spec = WeightSpec::new(
        ConfigOffsets::singleton(),
        vec![[beta, 1.0 - beta]],
        d as i32 - 2,
        width,
        weight,
    )?;
    let a = field.lattice().resolution();
    let rank = r as usize;
    let samples = monte_carlo(field, opts, |f, mode| {
        let bundle = local_sum(f, &spec, mode)?;
        let mut t = SymTensor::zeros(d, rank);
        for (c, v) in t.components_mut().iter_mut().zip(bundle) {
            *c = v;
        }
        Ok(t)
    })?;
    Ok(EstimateResult::from_samples(samples, a))
}

/// Calibrated constant of the mean-curvature estimator.
#[derive(Debug, Clone)]
pub struct CurvatureCalibration {
    /// Limit of the raw r = 0 estimator on a disk (total-curvature scale).
    pub c_g: f64,
    /// Moment integral of the weight, for the volume-term correction.
    pub i_g: f64,
    pub beta: f64,
    /// False when the Richardson extrapolation did not settle.
    pub stable: bool,
    /// Raw estimates along the schedule, for reporting.
    pub raw_values: Vec<f64>,
}

/// Calibrates the curvature constant by extrapolating the raw r = 0
/// estimator to a = 0 over a resolution schedule on a centered disk of the
/// given radius (least-squares intercept in a, the all-points form of the
/// pairwise extrapolation — far more tolerant of Monte Carlo noise).
pub fn calibrate_curvature(
    radius: f64,
    psf: &Psf,
    g: &GWeight,
    beta: f64,
    a_schedule: &[f64],
    opts: &EstimatorOptions,
) -> Result<CurvatureCalibration> {
    if a_schedule.len() < 2 {
        return Err(Error::Calibration("need at least two resolutions".into()));
    }
    if a_schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Calibration("schedule must strictly decrease".into()));
    }
    let profile = psf.profile();
    let i_g = compute_ig(&profile, g, beta)?;
    let shape = Shape::ball(2, &[0.0, 0.0], radius)?;
    let mut raw_values = Vec::new();
    for &a in a_schedule {
        let scene = Scene::shape(shape.clone(), *psf, a)?;
        let lattice = Lattice::standard(2, a);
        let field = AnalyticField::new(scene, lattice)?;
        let est = curvature_raw_est(&field, 0, g, beta, opts)?;
        raw_values.push(est.tensor.eval(&[])?);
    }
    let (c_g, _slope, rms) = quad::linear_fit(a_schedule, &raw_values);
    if c_g.abs() < 1e-3 {
        return Err(Error::Calibration(format!(
            "calibrated constant {c_g} is degenerate; the weight carries no curvature signal"
        )));
    }
    let stable = rms <= 0.02 * c_g.abs();
    Ok(CurvatureCalibration {
        c_g,
        i_g,
        beta,
        stable,
        raw_values,
    })
}

/// Corrected mean-curvature tensor estimator.
///
/// For r >= 2 the raw limit carries a volume term r! I_g Q * Phi_d^{r-2,0};
/// `volume_lower` must then supply the rank-(r-2) volume estimate from the
/// same translation stream. The corrected estimator is
/// (raw - correction) / (r! C_g).
pub fn curvature_tensor_est<F: IntensityField>(
    field: &F,
    r: u32,
    g: &GWeight,
    beta: f64,
    calib: &CurvatureCalibration,
    volume_lower: Option<&EstimateResult>,
    opts: &EstimatorOptions,
) -> Result<EstimateResult> {
    if calib.c_g.abs() < 1e-6 {
        return Err(Error::Estimate(
            "calibration constant too close to zero; correction is unstable".into(),
        ));
    }
    let d = field.dim();
    let raw = curvature_raw_est(field, r, g, beta, opts)?;
    let rf = factorial(r);
    let corrected: Result<Vec<SymTensor>> = raw
        .per_translation
        .iter()
        .enumerate()
        .map(|(k, sample)| {
            let mut t = sample.clone();
            if r >= 2 {
                let vol = volume_lower.ok_or_else(|| {
                    Error::Estimate(
                        "rank >= 2 needs the rank-(r-2) volume estimate for the correction".into(),
                    )
                })?;
                if vol.tensor.rank() != (r - 2) as usize {
                    return Err(Error::Estimate(format!(
                        "volume correction must have rank {}, got {}",
                        r - 2,
                        vol.tensor.rank()
                    )));
                }
                if vol.per_translation.len() != raw.per_translation.len() {
                    return Err(Error::Estimate(
                        "volume correction must use the same translation count".into(),
                    ));
                }
                let q = SymTensor::metric(d);
                let corr = q
                    .sym_product(&vol.per_translation[k])?
                    .scale(rf * calib.i_g);
                t = t.add(&corr.scale(-1.0))?;
            }
            Ok(t.scale(1.0 / (rf * calib.c_g)))
        })
        .collect();
    Ok(EstimateResult::from_samples(corrected?, raw.a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gauss2() -> Psf {
        Psf::gaussian(2)
    }

    fn disk_field(radius: f64, a: f64) -> AnalyticField {
        let shape = Shape::ball(2, &[0.0, 0.0], radius).unwrap();
        let scene = Scene::shape(shape, gauss2(), a).unwrap();
        AnalyticField::new(scene, Lattice::standard(2, a)).unwrap()
    }

    #[test]
    fn local_sum_counts_match_brute_force() {
        // Hand-placed 3x3 image; indicator weight on a box over {0, v1}.
        let lattice = Lattice::standard(2, 1.0);
        let window = Window::new(2, [0, 0, 0], [3, 3, 0]).unwrap();
        // Rim row kept outside the box so no support is clipped.
        #[rustfmt::skip]
        let values = vec![
            0.10, 0.45, 0.80,
            0.30, 0.55, 0.60,
            0.95, 0.85, 0.20,
        ];
        let img = GreyImage::new(lattice, window, values.clone()).unwrap();
        let offsets = ConfigOffsets::custom(vec![[0, 0, 0], [1, 0, 0]]).unwrap();
        let spec = WeightSpec::indicator(
            offsets.clone(),
            vec![[0.25, 0.75], [0.25, 0.75]],
            0,
        )
        .unwrap();
        let got = local_sum(&img, &spec, ExecMode::Sequential).unwrap()[0];
        // Brute force over all configurations with z + v1 inside.
        let mut expected = 0.0;
        for i0 in 0..2 {
            for i1 in 0..3 {
                let v0 = values[(i0 * 3 + i1) as usize];
                let v1 = values[((i0 + 1) * 3 + i1) as usize];
                if (0.25..=0.75).contains(&v0) && (0.25..=0.75).contains(&v1) {
                    expected += 1.0;
                }
            }
        }
        assert_eq!(got, expected);
        assert!(expected > 0.0);
    }

    #[test]
    fn local_sum_far_shape_is_zero() {
        // Every value below the admissible box: empty support.
        let a = 0.25;
        let shape = Shape::ball(2, &[0.0, 0.0], 1.0).unwrap();
        let scene = Scene::shape(shape, gauss2(), a).unwrap();
        let lattice = Lattice::standard(2, a);
        let window = Window::new(2, [40, 40, 0], [60, 60, 0]).unwrap();
        let field = AnalyticField::with_window(scene, lattice, window).unwrap();
        let spec = WeightSpec::indicator(
            ConfigOffsets::singleton(),
            vec![[0.25, 0.75]],
            1,
        )
        .unwrap();
        let v = local_sum(&field, &spec, ExecMode::Sequential).unwrap()[0];
        assert_eq!(v, 0.0);
    }

    #[test]
    fn local_sum_detects_clipped_window() {
        let a = 0.125;
        let shape = Shape::ball(2, &[0.0, 0.0], 1.0).unwrap();
        let scene = Scene::shape(shape, gauss2(), a).unwrap();
        let lattice = Lattice::standard(2, a);
        // Window cuts straight through the boundary band.
        let window = Window::new(2, [0, 0, 0], [6, 6, 0]).unwrap();
        let field = AnalyticField::with_window(scene, lattice, window).unwrap();
        let spec = WeightSpec::indicator(
            ConfigOffsets::two_block(2),
            vec![[0.1, 0.9], [0.05, 0.95], [0.05, 0.95]],
            1,
        )
        .unwrap();
        assert!(matches!(
            local_sum(&field, &spec, ExecMode::Sequential),
            Err(Error::WindowTooSmall(_))
        ));
    }

    #[test]
    fn indicator_sum_approaches_band_perimeter_product() {
        // Mean over translations of a^1 sum 1_{[0.25, 0.75]}(theta_0)
        // converges to (phi(0.25) - phi(0.75)) * perimeter.
        let a = 1.0 / 32.0;
        let field = disk_field(1.0, a);
        let spec = WeightSpec::indicator(
            ConfigOffsets::singleton(),
            vec![[0.25, 0.75]],
            1,
        )
        .unwrap();
        let opts = EstimatorOptions {
            translations: 32,
            seed: 7,
            mode: ExecMode::Auto,
        };
        let samples = monte_carlo(&field, &opts, |f, mode| {
            let v = local_sum(f, &spec, mode)?[0];
            Ok(SymTensor::scalar(2, v))
        })
        .unwrap();
        let est = EstimateResult::from_samples(samples, a);
        let profile = gauss2().profile();
        let expected =
            (profile.phi(0.25).unwrap() - profile.phi(0.75).unwrap()) * 2.0 * PI;
        let got = est.tensor.eval(&[]).unwrap();
        assert!(
            (got - expected).abs() < 0.02 * expected,
            "{got} vs {expected}"
        );
    }

    #[test]
    fn volume_estimates_disk_area_and_moments() {
        let a = 1.0 / 32.0;
        let field = disk_field(1.0, a);
        let opts = EstimatorOptions {
            translations: 16,
            seed: 3,
            mode: ExecMode::Auto,
        };
        let v0 = volume_tensor_est(&field, 0, 0.5, &opts).unwrap();
        let got = v0.tensor.eval(&[]).unwrap();
        assert!((got - PI).abs() < 0.015 * PI, "{got}");
        // Centered disk: rank-1 components vanish in expectation.
        let v1 = volume_tensor_est(&field, 1, 0.5, &opts).unwrap();
        assert!(v1.tensor.max_norm() < 0.04, "{:?}", v1.tensor);
        // Second moment (1,1) -> pi/8.
        let v2 = volume_tensor_est(&field, 2, 0.5, &opts).unwrap();
        let got = v2.tensor.get(&[0, 0]);
        assert!((got - PI / 8.0).abs() < 0.03 * PI / 8.0, "{got}");
    }

    #[test]
    fn volume_of_empty_image_is_zero() {
        let lattice = Lattice::standard(2, 0.5);
        let window = Window::new(2, [0, 0, 0], [8, 8, 0]).unwrap();
        let img = GreyImage::new(lattice, window, vec![0.0; 64]).unwrap();
        let est = volume_tensor_est(&img, 0, 0.5, &EstimatorOptions { translations: 1, ..Default::default() })
            .unwrap();
        assert_eq!(est.tensor.eval(&[]).unwrap(), 0.0);
    }

    #[test]
    fn surface_est2_circle_values() {
        let a = 1.0 / 32.0;
        let field = disk_field(1.0, a);
        let profile = gauss2().profile();
        let opts = EstimatorOptions {
            translations: 16,
            seed: 11,
            mode: ExecMode::Auto,
        };
        let s00 = surface_tensor_est2(&field, &profile, 0, 0, 0.1, 0.9, &opts).unwrap();
        let got = s00.tensor.eval(&[]).unwrap();
        assert!((got - 2.0 * PI).abs() < 0.02 * 2.0 * PI, "{got}");

        let s01 = surface_tensor_est2(&field, &profile, 0, 1, 0.1, 0.9, &opts).unwrap();
        assert!(s01.tensor.max_norm() < 0.08, "{:?}", s01.tensor);

        let s11 = surface_tensor_est2(&field, &profile, 1, 1, 0.1, 0.9, &opts).unwrap();
        let got = s11.tensor.get(&[0, 0]);
        assert!((got - 1.0).abs() < 0.05, "{got}");
    }

    #[test]
    fn surface_est3_circle_values() {
        let a = 1.0 / 32.0;
        let field = disk_field(1.0, a);
        let profile = gauss2().profile();
        let opts = EstimatorOptions {
            translations: 16,
            seed: 13,
            mode: ExecMode::Auto,
        };
        let s00 = surface_tensor_est3(&field, &profile, 0, 0, 0.1, 0.01, &opts).unwrap();
        let got = s00.tensor.eval(&[]).unwrap();
        assert!((got - 2.0 * PI).abs() < 0.02 * 2.0 * PI, "{got}");
        let s01 = surface_tensor_est3(&field, &profile, 0, 1, 0.1, 0.01, &opts).unwrap();
        assert!(s01.tensor.max_norm() < 0.05, "{:?}", s01.tensor);
    }

    #[test]
    fn sheared_lattice_assembles_standard_components() {
        // A non-orthogonal unit-cell basis exercises the dual-basis
        // transform: the assembled tensor must still carry standard-basis
        // components (Q for the unit circle's (1,1) surface tensor).
        let a = 1.0 / 32.0;
        let mut basis = [[0.0; 3]; 3];
        basis[0] = [1.0, 0.0, 0.0];
        basis[1] = [0.5, 1.0, 0.0];
        let lattice = Lattice::new(2, basis, a, [0.0; 3]).unwrap();
        let shape = Shape::ball(2, &[0.0, 0.0], 1.0).unwrap();
        let scene = Scene::shape(shape, gauss2(), a).unwrap();
        let field = AnalyticField::new(scene, lattice).unwrap();
        let profile = gauss2().profile();
        let opts = EstimatorOptions {
            translations: 24,
            seed: 31,
            mode: ExecMode::Auto,
        };
        let s00 = surface_tensor_est2(&field, &profile, 0, 0, 0.1, 0.9, &opts).unwrap();
        let got = s00.tensor.eval(&[]).unwrap();
        assert!((got - 2.0 * PI).abs() < 0.03 * 2.0 * PI, "{got}");
        let s11 = surface_tensor_est2(&field, &profile, 1, 1, 0.1, 0.9, &opts).unwrap();
        let gap = s11.tensor.max_component_diff(&SymTensor::metric(2)).unwrap();
        assert!(gap < 0.06, "{:?}", s11.tensor);
    }

    #[test]
    fn two_and_three_block_estimators_agree() {
        // Same target, different configurations: the (1,1) estimates must
        // agree within their combined error bars.
        let a = 1.0 / 32.0;
        let field = disk_field(1.0, a);
        let profile = gauss2().profile();
        let opts = EstimatorOptions {
            translations: 32,
            seed: 21,
            mode: ExecMode::Auto,
        };
        let e2 = surface_tensor_est2(&field, &profile, 1, 1, 0.1, 0.9, &opts).unwrap();
        let e3 = surface_tensor_est3(&field, &profile, 1, 1, 0.1, 0.01, &opts).unwrap();
        let gap = e2.tensor.max_component_diff(&e3.tensor).unwrap();
        let budget = 3.0 * (e2.std_error.max_norm() + e3.std_error.max_norm())
            + 2.0 * a; // first-order bias allowance for the 2-block side
        assert!(gap <= budget, "gap {gap} budget {budget}");
    }

    #[test]
    fn surface_est_rejects_invalid_psf_conditions() {
        let a = 0.125;
        let shape = Shape::ball(2, &[0.0, 0.0], 1.0).unwrap();
        let psf = Psf::ball(2, 1.0).unwrap();
        let scene = Scene::shape(shape, psf, a).unwrap();
        let field = AnalyticField::new(scene, Lattice::standard(2, a)).unwrap();
        let profile = psf.profile();
        let opts = EstimatorOptions::with_seed(1);
        assert!(matches!(
            surface_tensor_est2(&field, &profile, 0, 0, 0.1, 0.9, &opts),
            Err(Error::PsfConditions(_))
        ));
    }

    #[test]
    fn motion_covariance_under_lattice_shifts() {
        // Translating the shape by an exact lattice vector leaves the
        // (0,0) estimates unchanged: same configuration multiset.
        let a = 1.0 / 16.0;
        let profile = gauss2().profile();
        let opts = EstimatorOptions {
            translations: 1,
            seed: 0,
            mode: ExecMode::Sequential,
        };
        let base = {
            let f = disk_field(0.8, a);
            surface_tensor_est2(&f, &profile, 0, 0, 0.1, 0.9, &opts)
                .unwrap()
                .tensor
        };
        let shifted = {
            let shape = Shape::ball(2, &[3.0 * a, -2.0 * a], 0.8).unwrap();
            let scene = Scene::shape(shape, gauss2(), a).unwrap();
            let f = AnalyticField::new(scene, Lattice::standard(2, a)).unwrap();
            surface_tensor_est2(&f, &profile, 0, 0, 0.1, 0.9, &opts)
                .unwrap()
                .tensor
        };
        let diff = base.max_component_diff(&shifted).unwrap();
        assert!(diff < 1e-10, "{diff}");
    }

    #[test]
    fn ig_examples() {
        let profile = gauss2().profile();
        // Zero weight integrates to zero and fails calibration later.
        let zero = GWeight::Custom(Arc::new(|_| 0.0));
        assert_eq!(compute_ig(&profile, &zero, 0.1).unwrap(), 0.0);
        // Centered linear weight: strictly negative moment.
        let ig = compute_ig(&profile, &GWeight::CenteredLinear, 0.1).unwrap();
        assert!(ig < -0.1, "{ig}");
        // Step weight: closed form phi(beta)^2, cross-checked against a
        // blunt fixed-grid midpoint rule.
        let beta = 0.2;
        let ig_step = compute_ig(&profile, &GWeight::StepSign, beta).unwrap();
        let t_hi = profile.phi(beta).unwrap();
        assert!((ig_step - t_hi * t_hi).abs() < 1e-10);
        let n = 200_001;
        let h = 2.0 * t_hi / n as f64;
        let mut midpoint = 0.0;
        for k in 0..n {
            let t = -t_hi + (k as f64 + 0.5) * h;
            midpoint += t * GWeight::StepSign.eval(profile.theta(t), beta) * h;
        }
        assert!((ig_step - midpoint).abs() < 1e-6, "{ig_step} vs {midpoint}");
        // Non-odd weights are rejected.
        let skew = GWeight::Custom(Arc::new(|x| x));
        assert!(compute_ig(&profile, &skew, 0.1).is_err());
    }

    #[test]
    fn normalization_positive_for_ordered_thresholds() {
        let profile = gauss2().profile();
        for k in 0..50 {
            let beta = 0.02 + 0.4 * rng::uniform01(5, k);
            let omega = beta + (0.98 - beta - 0.02) * rng::uniform01(6, k) + 0.01;
            let diff = profile.phi(beta).unwrap() - profile.phi(omega).unwrap();
            assert!(diff > 0.0, "beta={beta} omega={omega}");
        }
    }

    #[test]
    fn calibration_and_curvature_estimate_on_disks() {
        let psf = gauss2();
        let g = GWeight::CenteredLinear;
        let beta = 0.1;
        let opts = EstimatorOptions {
            translations: 256,
            seed: 5,
            mode: ExecMode::Auto,
        };
        let calib =
            calibrate_curvature(1.0, &psf, &g, beta, &[1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0], &opts)
                .unwrap();
        // For the Gaussian profile the gradient and boundary contributions
        // cancel, leaving C_g = 2 pi I_g.
        let expected = 2.0 * PI * calib.i_g;
        assert!(
            (calib.c_g - expected).abs() < 0.05 * expected.abs(),
            "{} vs {expected}",
            calib.c_g
        );
        // r = 0 on a different disk: total curvature 1.
        let field = disk_field(0.7, 1.0 / 32.0);
        let est = curvature_tensor_est(&field, 0, &g, beta, &calib, None, &opts).unwrap();
        let got = est.tensor.eval(&[]).unwrap();
        assert!((got - 1.0).abs() < 0.04, "{got}");
        // Zero weight never calibrates.
        let zero = GWeight::Custom(Arc::new(|_| 0.0));
        assert!(
            calibrate_curvature(1.0, &psf, &zero, beta, &[0.25, 0.125], &opts).is_err()
        );
    }

    #[test]
    fn curvature_rank2_requires_matching_volume() {
        let field = disk_field(1.0, 1.0 / 16.0);
        let opts = EstimatorOptions {
            translations: 4,
            seed: 2,
            mode: ExecMode::Auto,
        };
        let calib = CurvatureCalibration {
            c_g: -3.0,
            i_g: -0.47,
            beta: 0.1,
            stable: true,
            raw_values: vec![],
        };
        let err = curvature_tensor_est(&field, 2, &GWeight::CenteredLinear, 0.1, &calib, None, &opts);
        assert!(err.is_err());
        let wrong_rank = volume_tensor_est(&field, 1, 0.5, &opts).unwrap();
        assert!(curvature_tensor_est(
            &field,
            2,
            &GWeight::CenteredLinear,
            0.1,
            &calib,
            Some(&wrong_rank),
            &opts
        )
        .is_err());
    }

    #[test]
    fn parallel_and_sequential_estimates_identical() {
        let a = 1.0 / 16.0;
        let field = disk_field(1.0, a);
        let profile = gauss2().profile();
        let par = EstimatorOptions {
            translations: 8,
            seed: 9,
            mode: ExecMode::Parallel,
        };
        let seq = EstimatorOptions {
            mode: ExecMode::Sequential,
            ..par
        };
        let t1 = surface_tensor_est2(&field, &profile, 1, 1, 0.1, 0.9, &par).unwrap();
        let t2 = surface_tensor_est2(&field, &profile, 1, 1, 0.1, 0.9, &seq).unwrap();
        assert_eq!(t1.tensor.components(), t2.tensor.components());
        let v1 = volume_tensor_est(&field, 2, 0.5, &par).unwrap();
        let v2 = volume_tensor_est(&field, 2, 0.5, &seq).unwrap();
        assert_eq!(v1.tensor.components(), v2.tensor.components());
    }
}
