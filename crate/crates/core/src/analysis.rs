//! Decay-rate fits, recurrence counting, and seed-ensemble sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ranges below this (relative to the series scale) count as flat.
pub const FLAT_RANGE: f64 = 1e-9;
/// Fits whose explained decay `|A| (1 - e^{-kappa W})` is below this
/// fraction of the mean series level are flagged flat.
pub const FLAT_DECAY_FRACTION: f64 = 0.05;
/// A plain run with `kappa` below this is treated as non-thermalizing.
pub const DEFAULT_FLAT_KAPPA: f64 = 0.02;
pub const DEFAULT_PROMINENCE: f64 = 0.1;
const MIN_FIT_POINTS: usize = 6;

/// Model `A e^{-kappa t} + C` fitted over `[t_lo, t_hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Effective rate: 0 for flat fits.
    pub kappa: f64,
    /// Rate of the least-squares optimum, also for flat fits.
    pub raw_kappa: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub rms_residual: f64,
    /// One-sigma uncertainty of `kappa` from the residual covariance.
    pub kappa_sigma: f64,
    pub flat: bool,
    pub iterations: usize,
    pub series: String,
}

impl DecayFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (-self.kappa * t).exp() + self.offset
    }
}

fn window_points(times: &[f64], values: &[f64], t_lo: f64, t_hi: f64) -> (Vec<f64>, Vec<f64>) {
    let eps = 1e-12 * (1.0 + t_hi.abs());
    times
        .iter()
        .zip(values)
        .filter(|(&t, _)| t >= t_lo - eps && t <= t_hi + eps)
        .map(|(&t, &v)| (t, v))
        .unzip()
}

/// Best `(A, C, sse)` for a fixed rate.
fn profile_fit(t: &[f64], y: &[f64], k: f64) -> (f64, f64, f64) {
    let n = t.len() as f64;
    let (mut se, mut see, mut sy, mut sey) = (0.0, 0.0, 0.0, 0.0);
    for (&t, &y) in t.iter().zip(y) {
        let e = (-k * t).exp();
        se += e;
        see += e * e;
        sy += y;
        sey += e * y;
    }
    let det = n * see - se * se;
    let (a, c) = if det.abs() > 1e-300 {
        ((n * sey - se * sy) / det, (see * sy - se * sey) / det)
    } else {
        (0.0, sy / n)
    };
    (a, c, sse(t, y, a, k, c))
}

fn sse(t: &[f64], y: &[f64], a: f64, k: f64, c: f64) -> f64 {
    t.iter().zip(y).map(|(&t, &y)| (a * (-k * t).exp() + c - y).powi(2)).sum()
}

/// Ordinary least squares `y = m x + b`, returning `(m, b)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let m = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (m, my - m * mx)
}

/// Solve a 3x3 system by Gaussian elimination with partial pivoting.
fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut acc = b[row];
        for k in row + 1..3 {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

fn invert3(m: [[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let mut inv = [[0.0; 3]; 3];
    for c in 0..3 {
        let mut e = [0.0; 3];
        e[c] = 1.0;
        let col = solve3(m, e)?;
        for r in 0..3 {
            inv[r][c] = col[r];
        }
    }
    Some(inv)
}

/// Least-squares fit of `A e^{-kappa t} + C` on the samples inside `[t_lo, t_hi]`.
///
/// The offset is first estimated from the window extreme and a log-linear
/// regression of `y - C` seeds a scan of the profiled cost (for fixed
/// `kappa`, `A` and `C` are linear). Damped Gauss-Newton
/// (Levenberg-Marquardt) polishes all three parameters from the best
/// scan point. A minimum at the smallest scanned rate is reported as flat.
pub fn fit_decay(times: &[f64], values: &[f64], t_lo: f64, t_hi: f64, series: &str) -> Result<DecayFit> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            found: values.len(),
        });
    }
    let (t, y) = window_points(times, values, t_lo, t_hi);
    if t.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "{series}: {} points in [{t_lo}, {t_hi}], need {MIN_FIT_POINTS}",
            t.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit(format!("{series}: non-finite values")));
    }
    let ymax = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
    let range = ymax - ymin;
    let scale = ymax.abs().max(ymin.abs()).max(1e-300);
    let flat_fit = |iterations| DecayFit {
        kappa: 0.0,
        raw_kappa: 0.0,
        amplitude: 0.0,
        offset: y.iter().sum::<f64>() / y.len() as f64,
        t_lo,
        t_hi,
        rms_residual: (y.iter().map(|v| (v - y.iter().sum::<f64>() / y.len() as f64).powi(2)).sum::<f64>() / y.len() as f64).sqrt(),
        kappa_sigma: 0.0,
        flat: true,
        iterations,
        series: series.to_string(),
    };
    if range <= FLAT_RANGE * scale {
        return Ok(flat_fit(0));
    }

    // shift time so the amplitude refers to the window start
    let t0 = t[0];
    let ts: Vec<f64> = t.iter().map(|x| x - t0).collect();
    let span = ts[ts.len() - 1];
    let decreasing = y[0] >= y[y.len() - 1];
    let c0 = if decreasing { ymin - 0.01 * range } else { ymax + 0.01 * range };
    let logs: Vec<f64> = y.iter().map(|v| (v - c0).abs().ln()).collect();
    let (slope, _) = linear_fit(&ts, &logs);

    // variable projection: for fixed kappa, (A, C) is a linear problem
    let k_lo = 1e-4 / span;
    let k_hi = 200.0 / span;
    let profile = |k: f64| profile_fit(&ts, &y, k);
    let n_grid = 240;
    let mut grid: Vec<f64> = (0..n_grid)
        .map(|i| (k_lo.ln() + (k_hi.ln() - k_lo.ln()) * i as f64 / (n_grid - 1) as f64).exp())
        .collect();
    if -slope > k_lo && -slope < k_hi {
        grid.push(-slope);
        grid.sort_by(f64::total_cmp);
    }
    let costs: Vec<f64> = grid.iter().map(|&k| profile(k).2).collect();
    let best = (0..grid.len()).min_by(|&i, &j| costs[i].total_cmp(&costs[j])).expect("nonempty grid");
    if best == 0 {
        // no resolvable decay inside the window
        let (a, c, cost) = profile(grid[0]);
        let mut f = flat_fit(0);
        f.raw_kappa = grid[0];
        f.amplitude = a * (grid[0] * t0).exp();
        f.offset = c;
        f.rms_residual = (cost / ts.len() as f64).sqrt();
        return Ok(f);
    }
    let (mut lo, mut hi) = (grid[best - 1].ln(), grid[(best + 1).min(grid.len() - 1)].ln());
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if profile(m1.exp()).2 <= profile(m2.exp()).2 {
            hi = m2;
        } else {
            lo = m1;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    let k_start = (0.5 * (lo + hi)).exp();
    let (a_start, c_start, _) = profile(k_start);
    let (mut a, mut k, mut c) = (a_start, k_start, c_start);

    let mut cost = sse(&ts, &y, a, k, c);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..500 {
        iterations = it + 1;
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for (&t, &yv) in ts.iter().zip(&y) {
            let e = (-k * t).exp();
            let r = yv - (a * e + c);
            let g = [e, -a * t * e, 1.0];
            for i in 0..3 {
                jtr[i] += g[i] * r;
                for j in 0..3 {
                    jtj[i][j] += g[i] * g[j];
                }
            }
        }
        let mut improved = false;
        for _ in 0..40 {
            let mut m = jtj;
            for i in 0..3 {
                m[i][i] += lambda * jtj[i][i].max(1e-12);
            }
            let Some(delta) = solve3(m, jtr) else {
                lambda *= 10.0;
                continue;
            };
            let (na, nk, nc) = (a + delta[0], k + delta[1], c + delta[2]);
            let new_cost = sse(&ts, &y, na, nk, nc);
            if new_cost.is_finite() && new_cost <= cost {
                let rel = (cost - new_cost) / cost.max(1e-300);
                let step = delta[1].abs() / k.abs().max(1e-12);
                a = na;
                k = nk;
                c = nc;
                cost = new_cost;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if rel < 1e-15 || step < 1e-12 || cost < 1e-30 {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if converged || !improved {
            converged = true;
            break;
        }
    }
    if !converged || !k.is_finite() || !a.is_finite() {
        return Err(Error::Fit(format!(
            "{series}: no convergence after {iterations} iterations (kappa={k}, A={a}, C={c}, sse={cost:e})"
        )));
    }
    let n = ts.len() as f64;
    let rms = (cost / n).sqrt();
    // covariance from the final Jacobian
    let mut jtj = [[0.0; 3]; 3];
    for &t in &ts {
        let e = (-k * t).exp();
        let g = [e, -a * t * e, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                jtj[i][j] += g[i] * g[j];
            }
        }
    }
    let s2 = cost / (n - 3.0).max(1.0);
    let kappa_sigma = invert3(jtj).map(|inv| (inv[1][1] * s2).max(0.0).sqrt()).unwrap_or(f64::INFINITY);
    let level = y.iter().map(|v| v.abs()).sum::<f64>() / n;
    let explained = a.abs() * (1.0 - (-k * span).exp()).abs();
    let flat = explained < FLAT_DECAY_FRACTION * level;
    Ok(DecayFit {
        kappa: if flat { 0.0 } else { k },
        raw_kappa: k,
        amplitude: a * (k * t0).exp(),
        offset: c,
        t_lo,
        t_hi,
        rms_residual: rms,
        kappa_sigma,
        flat,
        iterations,
        series: series.to_string(),
    })
}

/// Fit window for a run: from one sample after the last shock (single
/// shock), from `t_max / 5` (cascade), or from `t_lo_plain` for plain runs.
pub fn default_window(times: &[f64], last_shock_step: Option<usize>, n_shocks: usize, plain_start: f64) -> (f64, f64) {
    let t_max = *times.last().expect("empty time grid");
    let lo = match (n_shocks, last_shock_step) {
        (0, _) | (_, None) => plain_start,
        (1, Some(s)) => times[(s + 1).min(times.len() - 1)],
        _ => t_max / 5.0,
    };
    (lo, t_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KappaRatio {
    Ratio { value: f64, sigma: f64 },
    /// The plain fit shows no resolvable decay; only the noisy rate is meaningful.
    PlainNonThermalizing { noisy_kappa: f64 },
}

impl KappaRatio {
    pub fn value(&self) -> Option<f64> {
        match self {
            KappaRatio::Ratio { value, .. } => Some(*value),
            KappaRatio::PlainNonThermalizing { .. } => None,
        }
    }
}

/// `kappa_noisy / kappa_plain` with first-order error propagation.
pub fn kappa_ratio(noisy: &DecayFit, plain: &DecayFit, flat_kappa: f64) -> KappaRatio {
    if plain.flat || plain.kappa < flat_kappa {
        return KappaRatio::PlainNonThermalizing { noisy_kappa: noisy.kappa };
    }
    let value = noisy.kappa / plain.kappa;
    let rel_n = if noisy.kappa != 0.0 { noisy.kappa_sigma / noisy.kappa } else { 0.0 };
    let rel_p = plain.kappa_sigma / plain.kappa;
    KappaRatio::Ratio {
        value,
        sigma: value.abs() * (rel_n * rel_n + rel_p * rel_p).sqrt(),
    }
}

/// Peak prominence of interior local maxima.
pub fn prominences(y: &[f64]) -> Vec<(usize, f64)> {
    let n = y.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if y[i] > y[i - 1] {
            // walk across a plateau
            let mut j = i;
            while j + 1 < n && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < n && y[j + 1] < y[i] {
                let peak = (i + j) / 2;
                let h = y[i];
                let mut left_min = h;
                for k in (0..i).rev() {
                    if y[k] > h {
                        break;
                    }
                    left_min = left_min.min(y[k]);
                }
                let mut right_min = h;
                for &v in &y[j + 1..] {
                    if v > h {
                        break;
                    }
                    right_min = right_min.min(v);
                }
                out.push((peak, h - left_min.max(right_min)));
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceScore {
    pub count: usize,
    pub mean_prominence: f64,
}

/// Count local maxima whose prominence exceeds `fraction` of the series range.
pub fn recurrence_score(values: &[f64], fraction: f64) -> RecurrenceScore {
    if values.len() < 3 {
        return RecurrenceScore {
            count: 0,
            mean_prominence: 0.0,
        };
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let threshold = fraction * (max - min);
    let peaks: Vec<f64> = prominences(values)
        .into_iter()
        .map(|(_, p)| p)
        .filter(|&p| p > threshold && p > 0.0)
        .collect();
    RecurrenceScore {
        count: peaks.len(),
        mean_prominence: if peaks.is_empty() {
            0.0
        } else {
            peaks.iter().sum::<f64>() / peaks.len() as f64
        },
    }
}

/// Linear-interpolated quantile of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

pub fn iqr(values: &[f64]) -> f64 {
    quantile(values, 0.75) - quantile(values, 0.25)
}

/// Residual sum of squares of a model comparison `y ~ f(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendComparison {
    pub slope: f64,
    pub intercept: f64,
    pub rss_model: f64,
    pub rss_alternative: f64,
}

impl TrendComparison {
    /// `rss_alternative / rss_model`; large means the model is preferred.
    pub fn residual_ratio(&self) -> f64 {
        if self.rss_model <= 0.0 {
            f64::INFINITY
        } else {
            self.rss_alternative / self.rss_model
        }
    }
}

fn rss(x: &[f64], y: &[f64], m: f64, b: f64) -> f64 {
    x.iter().zip(y).map(|(x, y)| (y - (m * x + b)).powi(2)).sum()
}

/// Linear fit against a constant fit.
pub fn linear_vs_constant(x: &[f64], y: &[f64]) -> TrendComparison {
    let (m, b) = linear_fit(x, y);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    TrendComparison {
        slope: m,
        intercept: b,
        rss_model: rss(x, y, m, b),
        rss_alternative: rss(x, y, 0.0, mean),
    }
}

/// `y ~ a ln x + b` against `y ~ a x + b`.
pub fn log_vs_linear(x: &[f64], y: &[f64]) -> TrendComparison {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let (m, b) = linear_fit(&lx, y);
    let (ml, bl) = linear_fit(x, y);
    TrendComparison {
        slope: m,
        intercept: b,
        rss_model: rss(&lx, y, m, b),
        rss_alternative: rss(x, y, ml, bl),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Frequency,
    NNoisySites,
    #[serde(rename = "L", alias = "l")]
    L,
    JPerp,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Frequency => "frequency",
            SweepAxis::NNoisySites => "n_noisy_sites",
            SweepAxis::L => "L",
            SweepAxis::JPerp => "j_perp",
        }
    }
}

/// Result of one `(grid value, seed)` job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSample {
    pub value: f64,
    pub seed: u64,
    pub kappa_noisy: f64,
    pub kappa_plain: f64,
    pub ratio: KappaRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub ratio_median: f64,
    pub ratio_iqr: f64,
    pub n_seeds: usize,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
    #[serde(skip)]
    pub samples: Vec<SweepSample>,
}

impl SweepResult {
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn medians(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.ratio_median).collect()
    }

    /// Raw per-seed CSV.
    pub fn write_csv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "{},seed,kappa_noisy,kappa_plain,ratio", self.axis.name())?;
        for s in &self.samples {
            let r = s.ratio.value().map(|v| format!("{v:.10e}")).unwrap_or_else(|| "nan".into());
            writeln!(w, "{},{},{:.10e},{:.10e},{}", s.value, s.seed, s.kappa_noisy, s.kappa_plain, r)?;
        }
        Ok(())
    }
}

/// Run `job(value, seed)` over the grid and seed list in parallel and
/// aggregate ratio medians. Failed jobs are logged and flagged; the sweep continues.
pub fn run_sweep<F>(axis: SweepAxis, grid: &[f64], seeds: &[u64], job: F) -> Result<SweepResult>
where
    F: Fn(f64, u64) -> Result<SweepSample> + Sync,
{
    if grid.is_empty() {
        return Err(Error::InvalidArgument("sweep grid is empty".into()));
    }
    let jobs: Vec<(usize, f64, u64)> = grid
        .iter()
        .enumerate()
        .flat_map(|(i, &v)| seeds.iter().map(move |&s| (i, v, s)))
        .collect();
    let outcomes: Vec<(usize, u64, Result<SweepSample>)> = jobs
        .par_iter()
        .map(|&(i, v, s)| (i, s, job(v, s)))
        .collect();
    let mut points = Vec::with_capacity(grid.len());
    let mut samples = Vec::new();
    for (i, &value) in grid.iter().enumerate() {
        let mut flags = Vec::new();
        let mut ratios = Vec::new();
        let mut n_seeds = 0;
        for (j, seed, out) in &outcomes {
            if *j != i {
                continue;
            }
            match out {
                Ok(sample) => {
                    n_seeds += 1;
                    match sample.ratio {
                        KappaRatio::Ratio { value, .. } => ratios.push(value),
                        KappaRatio::PlainNonThermalizing { .. } => {
                            if !flags.iter().any(|f| f == "plain_non_thermalizing") {
                                flags.push("plain_non_thermalizing".to_string());
                            }
                        }
                    }
                    samples.push(sample.clone());
                }
                Err(e) => {
                    log::warn!("sweep {} = {value}, seed {seed}: {e}", axis.name());
                    flags.push(format!("seed {seed} failed: {e}"));
                }
            }
        }
        if n_seeds < seeds.len() {
            flags.push(format!("only {n_seeds} of {} seeds succeeded", seeds.len()));
        }
        points.push(SweepPoint {
            value,
            ratio_median: median(&ratios),
            ratio_iqr: if ratios.is_empty() { f64::NAN } else { iqr(&ratios) },
            n_seeds,
            flags,
        });
    }
    Ok(SweepResult { axis, points, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn grid(n: usize, t_max: f64) -> Vec<f64> {
        (0..n).map(|k| k as f64 * t_max / (n - 1) as f64).collect()
    }

    #[test]
    fn exact_model_recovery() {
        let t = grid(50, 3.0);
        let y: Vec<f64> = t.iter().map(|t| 2.0 * (-3.0 * t).exp() + 0.1).collect();
        let f = fit_decay(&t, &y, 0.0, 3.0, "synthetic").unwrap();
        assert!((f.kappa - 3.0).abs() < 1e-6, "{f:?}");
        assert!((f.amplitude - 2.0).abs() < 1e-6);
        assert!((f.offset - 0.1).abs() < 1e-6);
        assert!(!f.flat);
    }

    #[test]
    fn window_offset_does_not_change_amplitude_convention() {
        let t = grid(60, 6.0);
        let y: Vec<f64> = t.iter().map(|t| 0.7 * (-0.8 * t).exp() + 0.02).collect();
        let f = fit_decay(&t, &y, 1.0, 6.0, "late").unwrap();
        assert!((f.kappa - 0.8).abs() < 1e-8);
        assert!((f.amplitude - 0.7).abs() < 1e-7);
        assert!((f.eval(t[20]) - y[20]).abs() < 1e-9);
    }

    #[test]
    fn refit_of_fitted_model_is_stable() {
        let t = grid(40, 5.0);
        let y: Vec<f64> = t.iter().enumerate().map(|(i, t)| 0.5 * (-0.6 * t).exp() + 0.05 + 0.003 * ((i * 7 % 5) as f64 - 2.0)).collect();
        let f = fit_decay(&t, &y, 0.0, 5.0, "a").unwrap();
        let model: Vec<f64> = t.iter().map(|&t| f.eval(t)).collect();
        let g = fit_decay(&t, &model, 0.0, 5.0, "b").unwrap();
        assert!((f.kappa - g.kappa).abs() < 1e-8);
        assert!((f.amplitude - g.amplitude).abs() < 1e-8);
        assert!((f.offset - g.offset).abs() < 1e-8);
    }

    #[test]
    fn constant_series_is_flat() {
        let t = grid(20, 1.0);
        let f = fit_decay(&t, &[0.3; 20], 0.0, 1.0, "c").unwrap();
        assert!(f.flat);
        assert_eq!(f.kappa, 0.0);
        assert!(matches!(kappa_ratio(&f, &f, DEFAULT_FLAT_KAPPA), KappaRatio::PlainNonThermalizing { .. }));
    }

    #[test]
    fn small_wiggles_on_a_plateau_are_flat() {
        let t = grid(48, 20.0);
        let y: Vec<f64> = t.iter().map(|t| 0.498 + 0.002 * (-0.4 * t).exp() + 2e-4 * (3.1 * t).sin()).collect();
        let f = fit_decay(&t, &y, 0.0, 20.0, "plateau").unwrap();
        assert!(f.flat);
        assert_eq!(f.kappa, 0.0);
        assert!(f.raw_kappa > 0.0);
    }

    #[test]
    fn noisy_recovery_within_five_percent() {
        // Monte Carlo calibration: 2% multiplicative noise, median error over trials
        let t = grid(50, 4.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.02).unwrap();
        let mut errors = Vec::new();
        for _ in 0..200 {
            let y: Vec<f64> = t
                .iter()
                .map(|t| (1.0 * (-1.2 * t).exp() + 0.05) * (1.0 + noise.sample(&mut rng)))
                .collect();
            let f = fit_decay(&t, &y, 0.0, 4.0, "mc").unwrap();
            errors.push((f.kappa / 1.2 - 1.0).abs());
        }
        assert!(quantile(&errors, 0.95) < 0.05, "95th percentile error {}", quantile(&errors, 0.95));
    }

    #[test]
    fn too_few_points() {
        let t = grid(10, 1.0);
        assert!(matches!(fit_decay(&t, &t, 0.8, 1.0, "x"), Err(Error::Fit(_))));
    }

    #[test]
    fn ratio_cases() {
        let mk = |k: f64| DecayFit {
            kappa: k,
            raw_kappa: k,
            amplitude: 1.0,
            offset: 0.0,
            t_lo: 0.0,
            t_hi: 1.0,
            rms_residual: 0.0,
            kappa_sigma: 0.01,
            flat: false,
            iterations: 1,
            series: String::new(),
        };
        let r = kappa_ratio(&mk(1.187), &mk(0.443), DEFAULT_FLAT_KAPPA).value().unwrap();
        assert!((r - 2.679).abs() < 1e-3);
        assert_eq!(kappa_ratio(&mk(0.5), &mk(0.5), DEFAULT_FLAT_KAPPA).value(), Some(1.0));
        assert_eq!(
            kappa_ratio(&mk(0.5), &mk(0.001), DEFAULT_FLAT_KAPPA),
            KappaRatio::PlainNonThermalizing { noisy_kappa: 0.5 }
        );
    }

    #[test]
    fn recurrence_counts() {
        let mono: Vec<f64> = (0..40).map(|k| (-0.1 * k as f64).exp()).collect();
        let r = recurrence_score(&mono, DEFAULT_PROMINENCE);
        assert_eq!((r.count, r.mean_prominence), (0, 0.0));
        let n = 300;
        let sine: Vec<f64> = (0..n)
            .map(|k| (2.0 * std::f64::consts::PI * 3.0 * k as f64 / n as f64).sin())
            .collect();
        assert_eq!(recurrence_score(&sine, DEFAULT_PROMINENCE).count, 3);
        // small ripples below the threshold are ignored
        let ripple: Vec<f64> = (0..100).map(|k| -(k as f64) + 0.01 * ((k % 2) as f64)).collect();
        assert_eq!(recurrence_score(&ripple, DEFAULT_PROMINENCE).count, 0);
    }

    #[test]
    fn trend_comparisons() {
        let x: Vec<f64> = (1..=8).map(|v| v as f64).collect();
        let lin: Vec<f64> = x.iter().map(|v| 0.3 * v + 1.0 + 0.01 * (v * 3.0).sin()).collect();
        assert!(linear_vs_constant(&x, &lin).residual_ratio() > 100.0);
        let lg: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        assert!(log_vs_linear(&x, &lg).residual_ratio() > 10.0);
    }

    #[test]
    fn quantiles() {
        let v = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(median(&v), 3.0);
        assert_eq!(iqr(&v), 2.0);
    }

    #[test]
    fn sweep_aggregation() {
        let res = run_sweep(SweepAxis::Frequency, &[1.0, 2.0], &[1, 2, 3], |v, s| {
            if v == 2.0 && s == 3 {
                return Err(Error::Fit("boom".into()));
            }
            Ok(SweepSample {
                value: v,
                seed: s,
                kappa_noisy: v * s as f64,
                kappa_plain: 1.0,
                ratio: KappaRatio::Ratio {
                    value: v * s as f64,
                    sigma: 0.0,
                },
            })
        })
        .unwrap();
        assert_eq!(res.points[0].ratio_median, 2.0);
        assert_eq!(res.points[0].n_seeds, 3);
        assert_eq!(res.points[1].n_seeds, 2);
        assert_eq!(res.points[1].ratio_median, 3.0);
        assert!(!res.points[1].flags.is_empty());
        let json = serde_json::to_value(&res).unwrap();
        assert_eq!(json["axis"], "frequency");
        assert!(json["points"][0]["ratio_iqr"].is_number());
        assert!(run_sweep(SweepAxis::L, &[], &[1], |_, _| unreachable!()).is_err());
    }
}
