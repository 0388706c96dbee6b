//! Quadrature and small numeric utilities shared across the crate:
//! Gauss-Legendre rules, breakpoint-aware composite integration, adaptive
//! refinement, bracketed root finding, Richardson extrapolation, and
//! log-log slope fits for convergence studies.

use std::sync::OnceLock;

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
///
/// Computed once by Newton iteration on the Legendre recurrence and cached;
/// accurate to ~1e-15 for the orders used here.
pub fn gauss_legendre(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    type Rule = (Vec<f64>, Vec<f64>);
    static CACHE: OnceLock<Vec<OnceLock<Rule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| (0..=64).map(|_| OnceLock::new()).collect());
    assert!((1..=64).contains(&n), "supported GL orders are 1..=64");
    cache[n].get_or_init(|| compute_gl(n))
}

fn compute_gl(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess for the i-th root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre P_n(x) and derivative via the three-term recurrence.
            let mut p0 = 1.0_f64;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Single-panel n-point Gauss-Legendre integral of `f` over [a, b].
pub fn integrate_gl<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut sum = 0.0;
    for (x, w) in nodes.iter().zip(weights) {
        sum += w * f(mid + half * x);
    }
    sum * half
}

/// Composite Gauss-Legendre: `panels` equal panels, `n` nodes each.
pub fn integrate_composite<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    panels: usize,
    n: usize,
) -> f64 {
    let h = (b - a) / panels as f64;
    let mut sum = 0.0;
    for p in 0..panels {
        sum += integrate_gl(&mut f, a + p as f64 * h, a + (p + 1) as f64 * h, n);
    }
    sum
}

/// Integrates `f` over [a, b] splitting at the given interior breakpoints,
/// so that discontinuities or kinks never sit inside a panel. Each smooth
/// piece is integrated by composite GL with panels no longer than `max_len`.
pub fn integrate_split<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    max_len: f64,
    n: usize,
) -> f64 {
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|t| *t > a + 1e-14 && *t < b - 1e-14)
        .collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-13);
    let mut sum = 0.0;
    let mut lo = a;
    for cut in cuts.into_iter().chain(std::iter::once(b)) {
        if cut > lo {
            let panels = ((cut - lo) / max_len).ceil().max(1.0) as usize;
            sum += integrate_composite(&mut f, lo, cut, panels, n);
        }
        lo = cut;
    }
    sum
}

/// Adaptive refinement around an initial composite estimate: panel count
/// doubles until two successive estimates agree within `tol` (absolute +
/// relative). Used where the integrand is smooth but its scale is unknown.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    let mut panels = 4;
    let mut prev = integrate_composite(&mut f, a, b, panels, 16);
    loop {
        panels *= 2;
        let next = integrate_composite(&mut f, a, b, panels, 16);
        if (next - prev).abs() <= tol * (1.0 + next.abs()) || panels >= 4096 {
            return next;
        }
        prev = next;
    }
}

/// Brent root finder on [a, b]; requires a sign change.
///
/// Returns the abscissa where |f| is driven below `ftol` or the bracket
/// shrinks below machine resolution.
pub fn brent_root<F: FnMut(f64) -> f64>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    ftol: f64,
) -> Option<f64> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa * fb > 0.0 {
        return None;
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb * fc > 0.0 {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5e-15;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb.abs() <= ftol {
            return Some(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            // Inverse quadratic / secant step.
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * xm * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 {
            d
        } else {
            tol1.copysign(xm)
        };
        fb = f(b);
    }
    Some(b)
}

/// One Richardson step for a sequence v(a) = L + c*a + o(a) sampled at the
/// given (strictly decreasing) resolutions; returns the extrapolated limit
/// from the finest pair together with a stability flag.
///
/// Stability means the pairwise extrapolants settle: the last two agree to
/// within `rel_tol` of the value scale.
pub fn richardson_linear(avals: &[f64], vvals: &[f64], rel_tol: f64) -> (f64, bool) {
    assert!(avals.len() == vvals.len() && avals.len() >= 2);
    let mut extr = Vec::new();
    for i in 1..avals.len() {
        let (a1, a2) = (avals[i - 1], avals[i]);
        let (v1, v2) = (vvals[i - 1], vvals[i]);
        extr.push((a1 * v2 - a2 * v1) / (a1 - a2));
    }
    let last = *extr.last().unwrap();
    let stable = if extr.len() >= 2 {
        let prev = extr[extr.len() - 2];
        (last - prev).abs() <= rel_tol * (1.0 + last.abs())
    } else {
        true
    };
    (last, stable)
}

/// Least-squares line v = intercept + slope * a; returns
/// (intercept, slope, rms residual). The intercept extrapolates a
/// first-order-in-a sequence to a = 0 using every sample, which is far
/// more noise-tolerant than pairwise extrapolation.
pub fn linear_fit(avals: &[f64], vvals: &[f64]) -> (f64, f64, f64) {
    assert!(avals.len() == vvals.len() && avals.len() >= 2);
    let n = avals.len() as f64;
    let sx: f64 = avals.iter().sum();
    let sy: f64 = vvals.iter().sum();
    let sxx: f64 = avals.iter().map(|a| a * a).sum();
    let sxy: f64 = avals.iter().zip(vvals).map(|(a, v)| a * v).sum();
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let rms = (avals
        .iter()
        .zip(vvals)
        .map(|(a, v)| (v - intercept - slope * a).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (intercept, slope, rms)
}

/// Least-squares slope of log|bias| against log a.
///
/// Points with |bias| below `floor` are dropped (they sit in the noise).
pub fn loglog_slope(avals: &[f64], biases: &[f64], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = avals
        .iter()
        .zip(biases)
        .filter(|(_, b)| b.abs() > floor)
        .map(|(a, b)| (a.ln(), b.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    Some((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gl_exactness_on_polynomials() {
        // n-point GL is exact through degree 2n-1.
        let v = integrate_gl(|x| x.powi(14) + 3.0 * x.powi(5), -1.0, 1.0, 8);
        assert!((v - 2.0 / 15.0).abs() < 1e-14, "{v}");
        let v = integrate_gl(|x| x * x, 0.0, 3.0, 2);
        assert!((v - 9.0).abs() < 1e-13);
    }

    #[test]
    fn composite_smooth_integral() {
        let v = integrate_composite(|x| x.sin(), 0.0, PI, 16, 8);
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn split_handles_step_integrand() {
        let f = |x: f64| if x < 0.3 { 1.0 } else { 2.0 };
        let v = integrate_split(f, 0.0, 1.0, &[0.3], 0.25, 8);
        assert!((v - 1.7).abs() < 1e-14, "{v}");
    }

    #[test]
    fn adaptive_reaches_tolerance() {
        let v = integrate_adaptive(|x| (-x * x).exp(), -8.0, 8.0, 1e-12);
        assert!((v - PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn brent_finds_cos_root() {
        let r = brent_root(|x| x.cos(), 0.0, 3.0, 1e-15).unwrap();
        assert!((r - PI / 2.0).abs() < 1e-12);
        assert!(brent_root(|x| x * x + 1.0, -1.0, 1.0, 1e-15).is_none());
    }

    #[test]
    fn richardson_recovers_linear_limit() {
        let avals = [0.1, 0.05, 0.025];
        let vvals: Vec<f64> = avals.iter().map(|a| 3.0 + 2.0 * a + 0.5 * a * a).collect();
        let (l, stable) = richardson_linear(&avals, &vvals, 1e-2);
        assert!((l - 3.0).abs() < 1e-3, "{l}");
        assert!(stable);
    }

    #[test]
    fn slope_fit_recovers_order() {
        let avals = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
        let biases: Vec<f64> = avals.iter().map(|a| 5.0 * a * a).collect();
        let s = loglog_slope(&avals, &biases, 0.0).unwrap();
        assert!((s - 2.0).abs() < 1e-12);
    }
}
