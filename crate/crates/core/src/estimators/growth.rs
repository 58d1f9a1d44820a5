use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{wilson_interval, ModelConfig, Process, Threshold};
use crate::error::{Error, Result};
use crate::metrics::{cost_ball_series, cost_distance, hop_ball_series, LazyFpp};
use crate::sampler::{trial_seed, BoxSpec, Budget, CffpField};

/// Ordinary least squares `y = intercept + slope x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub residuals: Vec<f64>,
}

/// Least squares `y = c0 + c1 x + c2 x^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub coeffs: [f64; 3],
    pub r2: f64,
    pub residuals: Vec<f64>,
}

/// `y = a + b x^s` with `s` chosen on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StretchedFit {
    pub a: f64,
    pub b: f64,
    pub s: f64,
    pub sse: f64,
    pub residuals: Vec<f64>,
}

fn r_squared(y: &[f64], residuals: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    if tss == 0.0 {
        if rss == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - rss / tss
    }
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::domain("linear fit needs two points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::domain("degenerate regressor: all x equal"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - intercept - slope * a).collect();
    Ok(LinearFit {
        slope,
        intercept,
        r2: r_squared(y, &residuals),
        residuals,
    })
}

pub fn quadratic_fit(x: &[f64], y: &[f64]) -> Result<QuadraticFit> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::domain("quadratic fit needs three points"));
    }
    // Normal equations on centered x for conditioning.
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let mut m = [[0.0f64; 4]; 3];
    for (&xi, &yi) in x.iter().zip(y) {
        let u = xi - mx;
        let basis = [1.0, u, u * u];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] += basis[r] * basis[c];
            }
            m[r][3] += basis[r] * yi;
        }
    }
    let beta = solve3(m).ok_or_else(|| Error::domain("degenerate regressor for quadratic fit"))?;
    let residuals: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let u = xi - mx;
            yi - beta[0] - beta[1] * u - beta[2] * u * u
        })
        .collect();
    let coeffs = [
        beta[0] - beta[1] * mx + beta[2] * mx * mx,
        beta[1] - 2.0 * beta[2] * mx,
        beta[2],
    ];
    Ok(QuadraticFit {
        coeffs,
        r2: r_squared(y, &residuals),
        residuals,
    })
}

fn solve3(mut m: [[f64; 4]; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        for row in 0..3 {
            if row != col {
                let f = m[row][col] / m[col][col];
                for c in col..4 {
                    m[row][c] -= f * m[col][c];
                }
            }
        }
    }
    let scale = m.iter().map(|r| r[0].abs().max(r[1].abs()).max(r[2].abs())).fold(0.0, f64::max);
    if (0..3).any(|i| m[i][i].abs() <= 1e-12 * scale) {
        return None;
    }
    Some([m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]])
}

/// Stretch exponents tried by [`stretched_fit`].
pub fn stretch_grid() -> impl Iterator<Item = f64> {
    (5..=300).map(|i| i as f64 / 100.0)
}

/// Fit `y = a + b x^s` over `s` in [`stretch_grid`] (x must be positive).
pub fn stretched_fit(x: &[f64], y: &[f64]) -> Result<StretchedFit> {
    if x.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::domain("stretched fit needs positive x"));
    }
    let mut best: Option<StretchedFit> = None;
    for s in stretch_grid() {
        let xs: Vec<f64> = x.iter().map(|v| v.powf(s)).collect();
        let Ok(fit) = linear_fit(&xs, y) else { continue };
        let sse = fit.residuals.iter().map(|r| r * r).sum::<f64>();
        if best.as_ref().is_none_or(|b| sse < b.sse) {
            best = Some(StretchedFit {
                a: fit.intercept,
                b: fit.slope,
                s,
                sse,
                residuals: fit.residuals,
            });
        }
    }
    best.ok_or_else(|| Error::domain("stretched fit needs two distinct positive x"))
}

/// Mean ball sizes `ĝ` over trials, with fits of `log ĝ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthSeries {
    pub root: usize,
    pub thresholds: Vec<f64>,
    pub mean_sizes: Vec<f64>,
    pub trials: usize,
    /// `log ĝ = intercept + slope · threshold`.
    pub log_linear: Option<LinearFit>,
    /// `log ĝ = a + b · threshold^s`, fitted on positive thresholds.
    pub stretched: Option<StretchedFit>,
    pub quadratic: Option<QuadraticFit>,
    /// Mean of the maximal Euclidean radius of the ball.
    pub mean_max_radius: Vec<f64>,
}

impl GrowthSeries {
    /// Build a series (with fits) from known values; used for synthetic `g`.
    pub fn from_values(root: usize, thresholds: Vec<f64>, mean_sizes: Vec<f64>, trials: usize) -> Result<Self> {
        if thresholds.len() != mean_sizes.len() {
            return Err(Error::LengthMismatch {
                expected: thresholds.len(),
                got: mean_sizes.len(),
            });
        }
        if thresholds.windows(2).any(|w| w[0] >= w[1]) || thresholds.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::domain("thresholds must be nonnegative and strictly increasing"));
        }
        let logs: Vec<f64> = mean_sizes.iter().map(|g| g.ln()).collect();
        let log_linear = linear_fit(&thresholds, &logs).ok();
        let quadratic = quadratic_fit(&thresholds, &logs).ok();
        let (px, py): (Vec<f64>, Vec<f64>) = thresholds
            .iter()
            .zip(&logs)
            .filter(|(t, _)| **t > 0.0)
            .map(|(t, l)| (*t, *l))
            .unzip();
        let stretched = stretched_fit(&px, &py).ok();
        let mean_max_radius = vec![0.0; thresholds.len()];
        Ok(GrowthSeries {
            root,
            thresholds,
            mean_sizes,
            trials,
            log_linear,
            stretched,
            quadratic,
            mean_max_radius,
        })
    }

    /// CSV with header `threshold,mean_size,mean_max_radius`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,mean_size,mean_max_radius\n");
        for i in 0..self.thresholds.len() {
            writeln!(out, "{},{},{}", self.thresholds[i], self.mean_sizes[i], self.mean_max_radius[i]).unwrap();
        }
        out
    }

    /// Piecewise-linear `ĝ`, with `ĝ(0) = 1` when 0 is not on the grid.
    pub fn interpolate(&self, t: f64) -> Result<f64> {
        let (xs, ys) = self.anchored();
        interp(&xs, &ys, t)
    }

    fn anchored(&self) -> (Vec<f64>, Vec<f64>) {
        let mut xs = self.thresholds.clone();
        let mut ys = self.mean_sizes.clone();
        if xs.first().is_none_or(|&t| t > 0.0) {
            xs.insert(0, 0.0);
            ys.insert(0, 1.0);
        }
        (xs, ys)
    }
}

fn interp(xs: &[f64], ys: &[f64], t: f64) -> Result<f64> {
    let last = *xs.last().unwrap();
    if !(t >= xs[0] && t <= last * (1.0 + 1e-12)) {
        return Err(Error::domain(format!("t = {t} outside the series range [{}, {last}]", xs[0])));
    }
    let t = t.min(last);
    let i = xs.partition_point(|&x| x <= t).clamp(1, xs.len() - 1);
    let (x0, x1) = (xs[i - 1], xs[i]);
    let w = if x1 > x0 { (t - x0) / (x1 - x0) } else { 0.0 };
    Ok(ys[i - 1] + w * (ys[i] - ys[i - 1]))
}

/// Estimate `E|B(root, threshold)|` for each threshold.
pub fn mc_ball_growth(config: &ModelConfig, root: usize, thresholds: &[Threshold], trials: usize, seed: u64) -> Result<GrowthSeries> {
    config.validate()?;
    if trials == 0 {
        return Err(Error::domain("trials must be >= 1"));
    }
    if thresholds.is_empty() {
        return Err(Error::domain("need at least one threshold"));
    }
    let hop = matches!(thresholds[0], Threshold::Hops(_));
    if thresholds.iter().any(|t| matches!(t, Threshold::Hops(_)) != hop) {
        return Err(Error::domain("thresholds must be all hops or all costs"));
    }
    if hop && config.process == Process::Cffp {
        return Err(Error::domain("CFFP is a complete graph; use cost thresholds"));
    }
    let hops: Vec<u32> = thresholds
        .iter()
        .filter_map(|t| match t {
            Threshold::Hops(k) => Some(*k),
            _ => None,
        })
        .collect();
    let costs: Vec<f64> = thresholds.iter().map(|t| t.value()).collect();
    let runs: Vec<(Vec<usize>, Vec<f64>)> = (0..trials as u64)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let s = trial_seed(seed, i);
            let series = match config.process {
                Process::Cffp => {
                    let field = config.cffp_field(s)?;
                    cost_ball_series(&field, &field, root, &costs)?
                }
                _ => {
                    let r = config.realization(s)?;
                    if hop {
                        hop_ball_series(&r, root, &hops)?
                    } else {
                        cost_ball_series(&LazyFpp { realization: &r, seed: s }, &r, root, &costs)?
                    }
                }
            };
            Ok((series.sizes, series.max_geo_radius))
        })
        .collect::<Result<_>>()?;
    let n = trials as f64;
    let mean_sizes: Vec<f64> = (0..thresholds.len())
        .map(|j| runs.iter().map(|r| r.0[j] as f64).sum::<f64>() / n)
        .collect();
    let mean_max_radius: Vec<f64> = (0..thresholds.len())
        .map(|j| runs.iter().map(|r| r.1[j]).sum::<f64>() / n)
        .collect();
    let mut series = GrowthSeries::from_values(root, costs, mean_sizes, trials)?;
    series.mean_max_radius = mean_max_radius;
    Ok(series)
}

/// Trapezoid rule for `∫_0^t g(t-y) (g(y) - offset) dy` on the series grid
/// intersected with `[0, t]`, with `g` interpolated piecewise linearly.
fn convolution(series: &GrowthSeries, t: f64, offset: f64) -> Result<f64> {
    let (xs, ys) = series.anchored();
    if !(t >= 0.0) || t > *xs.last().unwrap() * (1.0 + 1e-12) {
        return Err(Error::domain(format!("t = {t} outside the series range")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let mut nodes: Vec<f64> = xs.iter().copied().filter(|&x| x < t).collect();
    nodes.push(t);
    let mut integral = 0.0;
    let f = |y: f64| -> Result<f64> { Ok(interp(&xs, &ys, (t - y).max(0.0))? * (interp(&xs, &ys, y)? - offset)) };
    let mut prev = (nodes[0], f(nodes[0])?);
    for &y in &nodes[1..] {
        let fy = f(y)?;
        integral += 0.5 * (y - prev.0) * (prev.1 + fy);
        prev = (y, fy);
    }
    Ok(integral)
}

/// `h(t) = t^{αd} ∫_0^t ĝ(t-y)(ĝ(y) - 1) dy + e^{-δt}`.
pub fn fkt_h_functional(series: &GrowthSeries, t: f64, alpha: f64, d: usize, delta_rate: f64) -> Result<f64> {
    if !(alpha > 0.0) || d == 0 {
        return Err(Error::domain("need alpha > 0 and d >= 1"));
    }
    if !(delta_rate >= 0.0) {
        return Err(Error::domain("delta must be nonnegative"));
    }
    let integral = convolution(series, t, 1.0)?;
    let tail = if t == 0.0 { 1.0 } else { (-delta_rate * t).exp() };
    Ok(t.powf(alpha * d as f64) * integral + tail)
}

/// Smallest `c` with `ĝ(t)^α <= c (t^{αd} ∫_0^t ĝ(t-y) ĝ(y) dy + 1)` at every
/// grid point.
pub fn self_bounding_constant(series: &GrowthSeries, alpha: f64, d: usize) -> Result<f64> {
    let mut c = 0.0f64;
    for (&t, &g) in series.thresholds.iter().zip(&series.mean_sizes) {
        let rhs = t.powf(alpha * d as f64) * convolution(series, t, 0.0)? + 1.0;
        c = c.max(g.powf(alpha) / rhs);
    }
    Ok(c)
}

/// Conditional against unconditional cost tail on a small CFFP box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalWeightCheck {
    pub conditional: f64,
    pub unconditional: f64,
    pub factor: f64,
    /// Lower Wilson bound of the conditional estimate.
    pub conditional_low: f64,
    /// Factor times the upper Wilson bound of the unconditional estimate.
    pub scaled_high: f64,
    pub holds: bool,
}

/// Test `Pr[d(u, v) <= t | w_u = w] <= 2 w^α Pr[d(u, v) <= t]` on CFFP by
/// Monte Carlo; `holds` compares the lower interval bound of the left side
/// with the upper bound of the right side.
#[allow(clippy::too_many_arguments)]
pub fn conditional_weight_check(
    box_spec: &BoxSpec,
    params: &crate::kernels::ModelParams,
    u: usize,
    v: usize,
    w: f64,
    t: f64,
    trials: usize,
    seed: u64,
) -> Result<ConditionalWeightCheck> {
    if trials == 0 {
        return Err(Error::domain("trials must be >= 1"));
    }
    let budget = Budget::default();
    let hits: Vec<(bool, bool)> = (0..trials as u64)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let s = trial_seed(seed, i);
            let field = CffpField::sample(box_spec, params, s, &budget)?;
            let free = cost_distance(&field, u, v)?.is_some_and(|d| d <= t);
            let pinned = field.with_weight(u, w)?;
            let cond = cost_distance(&pinned, u, v)?.is_some_and(|d| d <= t);
            Ok((cond, free))
        })
        .collect::<Result<_>>()?;
    let c = hits.iter().filter(|h| h.0).count();
    let f = hits.iter().filter(|h| h.1).count();
    let (c_lo, _) = wilson_interval(c, trials)?;
    let (_, f_hi) = wilson_interval(f, trials)?;
    let factor = 2.0 * w.powf(params.alpha);
    Ok(ConditionalWeightCheck {
        conditional: c as f64 / trials as f64,
        unconditional: f as f64 / trials as f64,
        factor,
        conditional_low: c_lo,
        scaled_high: factor * f_hi,
        holds: c_lo <= factor * f_hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::ModelParams;

    #[test]
    fn fits_recover_exact_models() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.5 + 2.0 * v).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.5).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        let yq: Vec<f64> = x.iter().map(|v| 1.0 - v + 0.5 * v * v).collect();
        let q = quadratic_fit(&x, &yq).unwrap();
        assert!((q.coeffs[2] - 0.5).abs() < 1e-9 && (q.coeffs[1] + 1.0).abs() < 1e-9);
        let xs: Vec<f64> = (1..12).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|v| 0.2 + 1.3 * v.powf(0.7)).collect();
        let s = stretched_fit(&xs, &ys).unwrap();
        assert!((s.s - 0.7).abs() < 1e-9 && (s.b - 1.3).abs() < 1e-6);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }

    fn synthetic(g: impl Fn(f64) -> f64, t_max: f64, points: usize) -> GrowthSeries {
        let ts: Vec<f64> = (0..points).map(|i| t_max * i as f64 / (points - 1) as f64).collect();
        let gs = ts.iter().map(|&t| g(t)).collect();
        GrowthSeries::from_values(0, ts, gs, 1).unwrap()
    }

    #[test]
    fn h_functional_examples() {
        let flat = synthetic(|_| 1.0, 2.0, 21);
        assert!((fkt_h_functional(&flat, 1.5, 1.5, 1, 0.7).unwrap() - (-0.7f64 * 1.5).exp()).abs() < 1e-12);
        assert_eq!(fkt_h_functional(&flat, 0.0, 1.5, 1, 0.7).unwrap(), 1.0);
        let lin = synthetic(|y| 1.0 + y, 1.0, 1001);
        let h = fkt_h_functional(&lin, 1.0, 1.0, 1, f64::INFINITY).unwrap();
        assert!((h - 2.0 / 3.0).abs() < 1e-6, "h = {h}");
        assert!(fkt_h_functional(&lin, 1.5, 1.0, 1, 1.0).is_err());
    }

    #[test]
    fn quadrature_converges() {
        let g = |y: f64| (0.8 * y).exp();
        let coarse = fkt_h_functional(&synthetic(g, 2.0, 41), 2.0, 1.5, 1, 1.0).unwrap();
        let fine = fkt_h_functional(&synthetic(g, 2.0, 81), 2.0, 1.5, 1, 1.0).unwrap();
        assert!(((coarse - fine) / fine).abs() < 0.01);
    }

    #[test]
    fn implicit_anchor_at_zero() {
        let s = GrowthSeries::from_values(0, vec![0.5, 1.0], vec![2.0, 3.0], 1).unwrap();
        assert_eq!(s.interpolate(0.0).unwrap(), 1.0);
        assert_eq!(s.interpolate(0.25).unwrap(), 1.5);
        assert!(self_bounding_constant(&s, 1.5, 1).unwrap() > 0.0);
    }

    #[test]
    fn grid_hop_growth_is_exact() {
        let cfg = ModelConfig::new(
            Process::Lrp,
            BoxSpec::new(1, 41).unwrap(),
            ModelParams::lrp(1, 1.5, 0.0).unwrap(),
        );
        let ks: Vec<_> = (0..=6).map(Threshold::Hops).collect();
        let g = mc_ball_growth(&cfg, 20, &ks, 5, 0).unwrap();
        for (k, m) in g.mean_sizes.iter().enumerate() {
            assert_eq!(*m, (2 * k + 1) as f64);
        }
    }

    #[test]
    fn cffp_growth_starts_at_one() {
        let cfg = ModelConfig::new(
            Process::Cffp,
            BoxSpec::new(1, 31).unwrap(),
            ModelParams::new(1, 1.5, 4.0, 1.0).unwrap(),
        );
        let ts: Vec<_> = [0.0, 0.5, 1.0].into_iter().map(Threshold::Cost).collect();
        let g = mc_ball_growth(&cfg, 15, &ts, 20, 1).unwrap();
        assert_eq!(g.mean_sizes[0], 1.0);
        assert!(g.mean_sizes.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn conditional_weight_runs() {
        let b = BoxSpec::new(1, 9).unwrap();
        let p = ModelParams::new(1, 1.5, 4.0, 1.0).unwrap();
        let r = conditional_weight_check(&b, &p, 2, 6, 3.0, 1.0, 300, 4).unwrap();
        assert!(r.holds);
    }
}
