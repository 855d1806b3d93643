//! Monte Carlo estimation of the growth shape.
//!
//! gamma(x,b) is the limit of R([nx],[nb])/n; it is estimated at fixed n
//! over independent clock seeds, with a two-point Richardson diagnostic in
//! place of any claim about the limit. The shape g(x) on the interior of
//! B0 is the unique root in b of gamma(x,b) = 1, found by adaptive-replica
//! bisection against the noisy monotone map b -> gamma_hat(x,b). The
//! velocity f is the grid Legendre conjugate f(u) = max_x { u.x + g(x) }.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clocks::ClockField;
use crate::error::Error;
use crate::lattice::Site;
use crate::rng;
use crate::sim::{self, Passage, SeedSpec};
use crate::stats;

/// Cache key for one gamma sample: the cell, scale, and clock seed pin the
/// value exactly.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GammaKey {
    pub dim: usize,
    pub x_bits: Vec<u64>,
    pub b_bits: u64,
    pub n: u64,
    pub clock_seed: u64,
}

/// Per-sample persistence hook; a warm cache must reproduce cold-run
/// numbers bit for bit, so values are keyed by everything that determines
/// them.
pub trait SampleCache: Sync {
    fn get(&self, key: &GammaKey) -> Option<Option<f64>>;
    fn put(&self, key: &GammaKey, value: Option<f64>);
}

/// No-op cache.
pub struct NoCache;

impl SampleCache for NoCache {
    fn get(&self, _: &GammaKey) -> Option<Option<f64>> {
        None
    }
    fn put(&self, _: &GammaKey, _: Option<f64>) {}
}

/// Monte Carlo estimate of gamma(x,b) at scale n.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub x: Vec<f64>,
    pub b: f64,
    pub n: u64,
    pub replicas: usize,
    pub mean: f64,
    pub stderr: f64,
    pub timeouts: usize,
}

impl GammaEstimate {
    /// Half-width of the 3-sigma interval.
    pub fn ci3(&self) -> f64 {
        3.0 * self.stderr
    }
}

fn gamma_samples(
    x: &[f64],
    b: f64,
    n: u64,
    replicas: usize,
    seed: u64,
    cache: &dyn SampleCache,
) -> Result<Vec<Option<f64>>, Error> {
    let dim = x.len();
    let target = Site::floor_of(x, n as f64);
    let h = crate::floor_snap(n as f64 * b);
    if h < 0 {
        return Err(Error::Invalid(format!("b must be nonnegative, got {b}")));
    }
    let spec = SeedSpec::origin(dim);
    let cap = sim::default_passage_cap(&spec, &target, h);
    let keys: Vec<GammaKey> = (0..replicas)
        .map(|r| GammaKey {
            dim,
            x_bits: x.iter().map(|v| v.to_bits()).collect(),
            b_bits: b.to_bits(),
            n,
            clock_seed: rng::derive(seed, "gamma-rep", &[r as u64]),
        })
        .collect();
    let mut samples: Vec<Option<Option<f64>>> = keys.iter().map(|k| cache.get(k)).collect();
    let misses: Vec<usize> = (0..replicas).filter(|&r| samples[r].is_none()).collect();
    let computed: Vec<(usize, Option<f64>)> = misses
        .into_par_iter()
        .map(|r| {
            let clocks = ClockField::new(keys[r].clock_seed);
            let sample = match sim::passage_time(&spec, &clocks, &target, h, cap) {
                Ok(Passage::Reached(t)) => Some(t / n as f64),
                Ok(Passage::TimedOut) => None,
                Err(_) => None,
            };
            (r, sample)
        })
        .collect();
    // cache writes in replica order, so a file-backed cache is appended
    // deterministically
    for (r, sample) in computed {
        cache.put(&keys[r], sample);
        samples[r] = Some(sample);
    }
    Ok(samples.into_iter().map(|s| s.unwrap()).collect())
}

/// Estimates gamma(x,b) = lim R([nx],[nb])/n by Monte Carlo over clock
/// seeds. More than 1% timed-out replicas invalidates the estimate.
pub fn estimate_gamma_cached(
    x: &[f64],
    b: f64,
    n: u64,
    replicas: usize,
    seed: u64,
    cache: &dyn SampleCache,
) -> Result<GammaEstimate, Error> {
    if replicas < 2 {
        return Err(Error::InsufficientReplicas {
            got: replicas,
            need: 2,
        });
    }
    let samples = gamma_samples(x, b, n, replicas, seed, cache)?;
    let timeouts = samples.iter().filter(|s| s.is_none()).count();
    let frac = timeouts as f64 / replicas as f64;
    if frac > 0.01 {
        return Err(Error::TooManyTimeouts { frac, replicas });
    }
    let ok: Vec<f64> = samples.into_iter().flatten().collect();
    let (mean, stderr) = stats::mean_stderr(&ok);
    Ok(GammaEstimate {
        x: x.to_vec(),
        b,
        n,
        replicas,
        mean,
        stderr,
        timeouts,
    })
}

pub fn estimate_gamma(
    x: &[f64],
    b: f64,
    n: u64,
    replicas: usize,
    seed: u64,
) -> Result<GammaEstimate, Error> {
    estimate_gamma_cached(x, b, n, replicas, seed, &NoCache)
}

/// Mean/stderr of R(u,h) at a raw lattice cell, shared by the grid checks.
pub fn sample_cell_mean(
    u: &Site,
    h: i64,
    replicas: usize,
    seed: u64,
) -> Result<(f64, f64), Error> {
    let spec = SeedSpec::origin(u.dim());
    let cap = sim::default_passage_cap(&spec, u, h);
    let samples: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let clocks = ClockField::new(rng::derive(seed, "cell-rep", &[r as u64]));
            sim::passage_time(&spec, &clocks, u, h, cap)
                .unwrap()
                .time()
                .unwrap_or(cap)
        })
        .collect();
    Ok(stats::mean_stderr(&samples))
}

/// Result of one mean-level inequality check.
#[derive(Clone, Debug, Serialize)]
pub struct InequalityCheck {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
}

/// Checks subadditivity at the mean level:
/// mean R(n(u+v), n(h+k)) <= mean R(nu,nh) + mean R(nv,nk) + 3 combined se.
pub fn check_subadditive(
    u: &Site,
    h: i64,
    v: &Site,
    k: i64,
    n: u64,
    replicas: usize,
    seed: u64,
) -> Result<InequalityCheck, Error> {
    let scale = |s: &Site| Site::new(s.coords.iter().map(|c| c * n as i64).collect());
    let (su, sv) = (scale(u), scale(v));
    let sum_site = su.add(&sv);
    let (m1, s1) = sample_cell_mean(&su, h * n as i64, replicas, rng::derive(seed, "sub", &[1]))?;
    let (m2, s2) = sample_cell_mean(&sv, k * n as i64, replicas, rng::derive(seed, "sub", &[2]))?;
    let (m3, s3) = sample_cell_mean(
        &sum_site,
        (h + k) * n as i64,
        replicas,
        rng::derive(seed, "sub", &[3]),
    )?;
    let slack = 3.0 * stats::combined_stderr(&[s1, s2, s3]);
    Ok(InequalityCheck {
        label: format!("R({sum_site},{}) <= R({su},{}) + R({sv},{})", h + k, h, k),
        lhs: m3,
        rhs: m1 + m2,
        slack,
        pass: m3 <= m1 + m2 + slack,
    })
}

/// One-sided Lipschitz bound at the mean level, from the domination
/// R(u,h) − R(v,k) by an Exp-sum of length |u−v| + (h−k)⁺:
/// mean R(u,h) − mean R(v,k) <= |u−v| + (h−k)⁺ + 3 combined se.
pub fn check_lipschitz(
    mean_uh: (f64, f64),
    mean_vk: (f64, f64),
    dist: i64,
    climb: i64,
) -> InequalityCheck {
    let slack = 3.0 * stats::combined_stderr(&[mean_uh.1, mean_vk.1]);
    let bound = (dist + climb.max(0)) as f64;
    InequalityCheck {
        label: format!("Lipschitz bound {bound}"),
        lhs: mean_uh.0 - mean_vk.0,
        rhs: bound,
        slack,
        pass: mean_uh.0 - mean_vk.0 <= bound + slack,
    }
}

/// Two-point Richardson diagnostic: gamma is a limit with no known rate,
/// so instead of claiming convergence we report the estimate at n
/// alongside the one at 2n and their drift.
#[derive(Clone, Debug, Serialize)]
pub struct RichardsonDiagnostic {
    pub at_n: GammaEstimate,
    pub at_2n: GammaEstimate,
    pub drift: f64,
    pub drift_stderr: f64,
}

pub fn richardson_gamma(
    x: &[f64],
    b: f64,
    n: u64,
    replicas: usize,
    seed: u64,
    cache: &dyn SampleCache,
) -> Result<RichardsonDiagnostic, Error> {
    let at_n = estimate_gamma_cached(x, b, n, replicas, rng::derive(seed, "rich", &[1]), cache)?;
    let at_2n =
        estimate_gamma_cached(x, b, 2 * n, replicas, rng::derive(seed, "rich", &[2]), cache)?;
    Ok(RichardsonDiagnostic {
        drift: at_2n.mean - at_n.mean,
        drift_stderr: stats::combined_stderr(&[at_n.stderr, at_2n.stderr]),
        at_n,
        at_2n,
    })
}

/// Configuration for the noisy-root bisection behind g.
#[derive(Clone, Debug)]
pub struct SolveConfig {
    pub replicas: usize,
    pub max_replicas: usize,
    pub tol: f64,
    pub b_max: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            replicas: 100,
            max_replicas: 800,
            tol: 0.02,
            b_max: 2.0,
        }
    }
}

/// Root result for g(x): gamma(x, g) = 1.
#[derive(Clone, Debug, Serialize)]
pub struct GRoot {
    pub x: Vec<f64>,
    pub g: f64,
    /// standard-error scale of the root (probe noise through the slope)
    pub stderr: f64,
    /// half-width combining bisection tolerance and 3x the noise scale
    pub ci: f64,
    pub n: u64,
    pub probes: usize,
    /// Fresh-seed re-estimate of gamma at the root (consistency check).
    pub gamma_at_root: GammaEstimate,
}

/// Gamma estimate with replicas doubled until the 3-sigma interval
/// excludes 1 or the replica budget is exhausted.
fn adaptive_gamma(
    x: &[f64],
    b: f64,
    n: u64,
    cfg: &SolveConfig,
    seed: u64,
    cache: &dyn SampleCache,
) -> Result<GammaEstimate, Error> {
    let mut replicas = cfg.replicas;
    loop {
        let est = estimate_gamma_cached(x, b, n, replicas, seed, cache)?;
        let excluded = (est.mean - 1.0).abs() > est.ci3();
        if excluded || replicas >= cfg.max_replicas {
            return Ok(est);
        }
        replicas = (replicas * 2).min(cfg.max_replicas);
    }
}

/// Solves gamma(x, b) = 1 for b by bisection on [0, b_max] against the
/// noisy monotone map, with adaptive replica doubling at each probe.
/// Deterministic given the seed schedule.
pub fn solve_g_cached(
    x: &[f64],
    n: u64,
    cfg: &SolveConfig,
    seed: u64,
    cache: &dyn SampleCache,
) -> Result<GRoot, Error> {
    // interior precondition: mu(x) = gamma(x, 0) must sit clearly below 1
    let at_zero = adaptive_gamma(x, 0.0, n, cfg, rng::derive(seed, "g-zero", &[]), cache)?;
    if at_zero.mean + at_zero.ci3() >= 1.0 {
        return Err(Error::NotInterior {
            mu: at_zero.mean,
            stderr: at_zero.stderr,
        });
    }
    let at_top = adaptive_gamma(x, cfg.b_max, n, cfg, rng::derive(seed, "g-top", &[]), cache)?;
    if at_top.mean - at_top.ci3() <= 1.0 {
        return Err(Error::NonBracketed {
            x: x.iter().map(|c| c.abs()).sum(),
            b_max: cfg.b_max,
        });
    }
    let mut lo = 0.0f64;
    let mut hi = cfg.b_max;
    let mut est_lo = at_zero;
    let mut est_hi = at_top;
    let mut probes = 2usize;
    while hi - lo > cfg.tol {
        let mid = 0.5 * (lo + hi);
        let est = adaptive_gamma(
            x,
            mid,
            n,
            cfg,
            rng::derive(seed, "g-probe", &[probes as u64]),
            cache,
        )?;
        probes += 1;
        if est.mean < 1.0 {
            lo = mid;
            est_lo = est;
        } else {
            hi = mid;
            est_hi = est;
        }
    }
    let g = 0.5 * (lo + hi);
    // root error model: probe noise through the local slope of
    // b -> gamma(x,b), the bisection bracket (uniform over its width), and
    // the lattice cell quantization of b at scale n (uniform over 1/n)
    let slope = ((est_hi.mean - est_lo.mean) / (hi - lo).max(cfg.tol)).max(0.05);
    let noise = 0.5 * (est_lo.stderr + est_hi.stderr) / slope;
    let bracket = (hi - lo) / 12f64.sqrt();
    let cell = 1.0 / (n as f64 * 12f64.sqrt());
    let stderr = stats::combined_stderr(&[noise, bracket, cell]);
    let ci = 3.0 * stderr;
    let gamma_at_root = estimate_gamma_cached(
        x,
        g,
        n,
        cfg.max_replicas,
        rng::derive(seed, "g-verify", &[]),
        cache,
    )?;
    Ok(GRoot {
        x: x.to_vec(),
        g,
        stderr,
        ci,
        n,
        probes,
        gamma_at_root,
    })
}

pub fn solve_g(x: &[f64], n: u64, cfg: &SolveConfig, seed: u64) -> Result<GRoot, Error> {
    solve_g_cached(x, n, cfg, seed, &NoCache)
}

/// solve_g with the bracket ceiling doubled on demand, up to three times.
pub fn solve_g_auto(
    x: &[f64],
    n: u64,
    cfg: &SolveConfig,
    seed: u64,
    cache: &dyn SampleCache,
) -> Result<GRoot, Error> {
    let mut cfg = cfg.clone();
    for _ in 0..4 {
        match solve_g_cached(x, n, &cfg, seed, cache) {
            Err(Error::NonBracketed { .. }) => cfg.b_max *= 2.0,
            other => return other,
        }
    }
    Err(Error::NonBracketed {
        x: x.iter().map(|c| c.abs()).sum(),
        b_max: cfg.b_max,
    })
}

/// Gridded estimate of g on a regular centered grid with spacing `step`;
/// absent points (outside the estimated interior) are stored as NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct GTable {
    pub dim: usize,
    pub step: f64,
    /// grid runs over indices -half..=half per axis
    pub half: usize,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n: u64,
    pub replicas: usize,
    pub seed: u64,
}

impl GTable {
    pub fn axis_len(&self) -> usize {
        2 * self.half + 1
    }

    pub fn len(&self) -> usize {
        self.axis_len().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|v| v.is_nan())
    }

    pub fn coord(&self, j: usize) -> f64 {
        (j as f64 - self.half as f64) * self.step
    }

    pub fn point(&self, mut idx: usize) -> Vec<f64> {
        let len = self.axis_len();
        let mut out = vec![0.0; self.dim];
        for a in (0..self.dim).rev() {
            out[a] = self.coord(idx % len);
            idx /= len;
        }
        out
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        let len = self.axis_len();
        multi.iter().fold(0usize, |acc, &j| acc * len + j)
    }

    /// Builds from an explicit function; for synthetic oracles.
    pub fn from_function<F: Fn(&[f64]) -> f64>(dim: usize, step: f64, half: usize, f: F) -> Self {
        let mut t = GTable {
            dim,
            step,
            half,
            values: Vec::new(),
            stderr: Vec::new(),
            n: 0,
            replicas: 0,
            seed: 0,
        };
        let total = t.len();
        t.values = (0..total).map(|i| f(&t.point(i))).collect();
        t.stderr = vec![0.0; total];
        t
    }

    /// Largest tabulated g value (g(0) for a symmetric concave table).
    pub fn max_g(&self) -> f64 {
        self.values
            .iter()
            .filter(|v| !v.is_nan())
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest |x| coordinate carrying a finite value, per axis maximum.
    pub fn support_radius(&self) -> f64 {
        let mut r: f64 = 0.0;
        for i in 0..self.len() {
            if !self.values[i].is_nan() {
                let p = self.point(i);
                r = r.max(p.iter().map(|c| c.abs()).fold(0.0, f64::max));
            }
        }
        r
    }

    /// Symmetrized copy: value at x and −x replaced by their average, which
    /// the reflection invariance of the model justifies.
    pub fn symmetrize(&self) -> GTable {
        let mut out = self.clone();
        let len = self.axis_len();
        for i in 0..self.len() {
            let mut multi = Vec::with_capacity(self.dim);
            let mut rem = i;
            for _ in 0..self.dim {
                multi.push(rem % len);
                rem /= len;
            }
            multi.reverse();
            let mirrored: Vec<usize> = multi.iter().map(|&q| len - 1 - q).collect();
            let m = self.index(&mirrored);
            let (a, b) = (self.values[i], self.values[m]);
            out.values[i] = if a.is_nan() || b.is_nan() {
                f64::NAN
            } else {
                0.5 * (a + b)
            };
            out.stderr[i] = 0.5 * (self.stderr[i] + self.stderr[m]);
        }
        out
    }

    /// Multilinear interpolation at w; None outside the hull of finite
    /// values.
    pub fn interpolate(&self, w: &[f64]) -> Option<f64> {
        debug_assert_eq!(w.len(), self.dim);
        let len = self.axis_len();
        let mut base = Vec::with_capacity(self.dim);
        let mut frac = Vec::with_capacity(self.dim);
        for &c in w {
            let t = c / self.step + self.half as f64;
            if t < 0.0 || t > (len - 1) as f64 {
                return None;
            }
            let j = (t.floor() as usize).min(len - 2);
            base.push(j);
            frac.push(t - j as f64);
        }
        let corners = 1usize << self.dim;
        let mut acc = 0.0;
        for mask in 0..corners {
            let mut weight = 1.0;
            let mut multi = Vec::with_capacity(self.dim);
            for a in 0..self.dim {
                if mask >> a & 1 == 1 {
                    weight *= frac[a];
                    multi.push(base[a] + 1);
                } else {
                    weight *= 1.0 - frac[a];
                    multi.push(base[a]);
                }
            }
            let v = self.values[self.index(&multi)];
            if v.is_nan() {
                if weight > 0.0 {
                    return None;
                }
                continue;
            }
            acc += weight * v;
        }
        Some(acc)
    }

    /// CSV: coordinates, estimate, stderr, n, replicas, seed. Absent grid
    /// points are not written.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        for a in 0..self.dim {
            write!(w, "x{a},")?;
        }
        writeln!(w, "g,stderr,n,replicas,seed")?;
        for i in 0..self.len() {
            if self.values[i].is_nan() {
                continue;
            }
            for c in self.point(i) {
                write!(w, "{c},")?;
            }
            writeln!(
                w,
                "{},{},{},{},{}",
                self.values[i], self.stderr[i], self.n, self.replicas, self.seed
            )?;
        }
        Ok(())
    }

    /// Parses and validates the CSV form. Rejects non-positive estimates
    /// and irregular grids before any simulation consumes the table.
    pub fn from_csv(text: &str) -> Result<GTable, Error> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty g table".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        let dim = cols.iter().take_while(|c| c.starts_with('x')).count();
        if dim == 0 || cols.len() < dim + 3 {
            return Err(Error::Parse(format!("bad g table header: {header}")));
        }
        let mut rows: Vec<(Vec<f64>, f64, f64, u64, usize, u64)> = Vec::new();
        for line in lines {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() < dim + 3 {
                return Err(Error::Parse(format!("short g table row: {line}")));
            }
            let parse = |s: &str| -> Result<f64, Error> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad number {s:?}")))
            };
            let x: Result<Vec<f64>, _> = f[..dim].iter().map(|s| parse(s)).collect();
            let g = parse(f[dim])?;
            let se = parse(f[dim + 1])?;
            if !(g > 0.0) {
                return Err(Error::Invalid(format!(
                    "g table entry must be positive, got {g}"
                )));
            }
            if se < 0.0 {
                return Err(Error::Invalid("negative stderr in g table".into()));
            }
            let n = f.get(dim + 2).and_then(|s| s.trim().parse().ok()).unwrap_or(0);
            let reps = f.get(dim + 3).and_then(|s| s.trim().parse().ok()).unwrap_or(0);
            let seed = f.get(dim + 4).and_then(|s| s.trim().parse().ok()).unwrap_or(0);
            rows.push((x?, g, se, n, reps, seed));
        }
        if rows.is_empty() {
            return Err(Error::Parse("g table has no rows".into()));
        }
        // infer the regular grid: unique sorted coordinates per axis
        let mut coords: Vec<f64> = rows.iter().flat_map(|(x, ..)| x.iter().cloned()).collect();
        coords.sort_by(f64::total_cmp);
        coords.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let max_abs = coords.iter().cloned().fold(0.0f64, |m, c| m.max(c.abs()));
        let step = if coords.len() > 1 {
            let mut best = f64::INFINITY;
            for w in coords.windows(2) {
                best = best.min(w[1] - w[0]);
            }
            best
        } else {
            1.0
        };
        if step <= 0.0 || !step.is_finite() {
            return Err(Error::Parse("cannot infer g table grid step".into()));
        }
        let half = (max_abs / step).round() as usize;
        let mut table = GTable {
            dim,
            step,
            half,
            values: Vec::new(),
            stderr: Vec::new(),
            n: rows[0].3,
            replicas: rows[0].4,
            seed: rows[0].5,
        };
        table.values = vec![f64::NAN; table.len()];
        table.stderr = vec![0.0; table.len()];
        for (x, g, se, ..) in rows {
            let mut multi = Vec::with_capacity(dim);
            for &c in &x {
                let t = c / step + half as f64;
                let j = t.round();
                if (t - j).abs() > 1e-6 || j < 0.0 || j as usize >= table.axis_len() {
                    return Err(Error::Parse(format!(
                        "g table point off the regular grid: {x:?}"
                    )));
                }
                multi.push(j as usize);
            }
            let idx = table.index(&multi);
            table.values[idx] = g;
            table.stderr[idx] = se;
        }
        Ok(table)
    }
}

/// Builds a GTable by solving for g at every grid point with
/// mu_hat(x) < 0.9, in parallel over points.
pub fn build_gtable(
    dim: usize,
    step: f64,
    half: usize,
    n: u64,
    cfg: &SolveConfig,
    seed: u64,
    cache: &dyn SampleCache,
) -> Result<(GTable, Vec<GRoot>), Error> {
    let mut table = GTable {
        dim,
        step,
        half,
        values: Vec::new(),
        stderr: Vec::new(),
        n,
        replicas: cfg.replicas,
        seed,
    };
    table.values = vec![f64::NAN; table.len()];
    table.stderr = vec![0.0; table.len()];
    let points: Vec<(usize, Vec<f64>)> = (0..table.len()).map(|i| (i, table.point(i))).collect();
    let results: Vec<(usize, Option<GRoot>)> = points
        .par_iter()
        .map(|(i, x)| {
            let sub = rng::derive(seed, "gtable", &[*i as u64]);
            // interior pre-filter: stay clear of the B0 boundary
            match estimate_gamma_cached(x, 0.0, n, cfg.replicas, sub, cache) {
                Ok(mu) if mu.mean + mu.ci3() < 0.9 => {
                    match solve_g_auto(x, n, cfg, sub, cache) {
                        Ok(root) => (*i, Some(root)),
                        Err(_) => (*i, None),
                    }
                }
                _ => (*i, None),
            }
        })
        .collect();
    let mut roots = Vec::new();
    for (i, r) in results {
        if let Some(root) = r {
            table.values[i] = root.g;
            table.stderr[i] = root.stderr;
            roots.push(root);
        }
    }
    if table.is_empty() {
        return Err(Error::Invalid(
            "no grid point admitted a g estimate; box or n too small".into(),
        ));
    }
    Ok((table, roots))
}

impl GTable {
    /// Midpoint concavity over every equally spaced grid triple, within
    /// three combined stderr: g(mid) >= (g(a) + g(c))/2 - slack.
    pub fn concavity_checks(&self) -> Vec<InequalityCheck> {
        let len = self.axis_len();
        let mut out = Vec::new();
        if self.dim != 1 {
            return out;
        }
        for gap in 1..=self.half {
            for j in gap..len - gap {
                let (a, m, c) = (j - gap, j, j + gap);
                let (va, vm, vc) = (self.values[a], self.values[m], self.values[c]);
                if va.is_nan() || vm.is_nan() || vc.is_nan() {
                    continue;
                }
                let avg = 0.5 * (va + vc);
                let slack = 3.0
                    * stats::combined_stderr(&[
                        self.stderr[m],
                        0.5 * self.stderr[a],
                        0.5 * self.stderr[c],
                    ]);
                out.push(InequalityCheck {
                    label: format!(
                        "g({}) >= (g({}) + g({}))/2",
                        self.coord(m),
                        self.coord(a),
                        self.coord(c)
                    ),
                    lhs: avg,
                    rhs: vm,
                    slack,
                    pass: vm >= avg - slack,
                });
            }
        }
        out
    }
}

/// Gridded Legendre-type conjugate f(u) = max over tabulated x of
/// u.x + g(x).
#[derive(Clone, Debug)]
pub struct FTable {
    pub us: Vec<Vec<f64>>,
    pub f: Vec<f64>,
    /// largest |x| in the source table, a lower-bound slope for f
    pub x_radius: f64,
}

pub fn legendre_f(g: &GTable, us: &[Vec<f64>]) -> Result<FTable, Error> {
    if g.is_empty() {
        return Err(Error::Invalid("empty g table".into()));
    }
    let points: Vec<(Vec<f64>, f64)> = (0..g.len())
        .filter(|&i| !g.values[i].is_nan())
        .map(|i| (g.point(i), g.values[i]))
        .collect();
    let f = us
        .iter()
        .map(|u| {
            points
                .iter()
                .map(|(x, gx)| u.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + gx)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    Ok(FTable {
        us: us.to_vec(),
        f,
        x_radius: g.support_radius(),
    })
}

impl FTable {
    pub fn value(&self, u: &[f64]) -> Option<f64> {
        self.us
            .iter()
            .position(|v| v.iter().zip(u).all(|(a, b)| (a - b).abs() < 1e-12))
            .map(|i| self.f[i])
    }

    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        let dim = self.us.first().map_or(0, Vec::len);
        for a in 0..dim {
            write!(w, "u{a},")?;
        }
        writeln!(w, "f")?;
        for (u, f) in self.us.iter().zip(&self.f) {
            for c in u {
                write!(w, "{c},")?;
            }
            writeln!(w, "{f}")?;
        }
        Ok(())
    }
}

/// Diagnostics of the d=1 large-slope behavior f(u) = |u| + g(1) + o(|u|).
#[derive(Clone, Debug, Serialize)]
pub struct AsymptoteReport {
    /// (|u|, f(u) - |u|) for the tabulated u >= 0, ascending.
    pub excess: Vec<(f64, f64)>,
    /// secant slope between |u| = 4 and |u| = 8
    pub slope_4_8: Option<f64>,
    /// f(u) >= |u| * x_radius held everywhere
    pub lower_bound_ok: bool,
    /// discrete convexity: second differences >= -1e-12
    pub convex_ok: bool,
}

pub fn asymptote_check_d1(f: &FTable) -> Result<AsymptoteReport, Error> {
    let dim = f.us.first().map_or(0, Vec::len);
    if dim != 1 {
        return Err(Error::Invalid("asymptote check is d=1 only".into()));
    }
    let mut pairs: Vec<(f64, f64)> = f.us.iter().map(|u| u[0]).zip(f.f.iter().cloned()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let max_u = pairs.iter().map(|(u, _)| u.abs()).fold(0.0, f64::max);
    if max_u < 8.0 {
        return Err(Error::Invalid(
            "asymptote check needs the grid to reach |u| = 8".into(),
        ));
    }
    let value_at = |target: f64| -> Option<f64> {
        pairs
            .iter()
            .find(|(u, _)| (u - target).abs() < 1e-9)
            .map(|(_, v)| *v)
    };
    let slope_4_8 = match (value_at(4.0), value_at(8.0)) {
        (Some(f4), Some(f8)) => Some((f8 - f4) / 4.0),
        _ => None,
    };
    let lower_bound_ok = pairs
        .iter()
        .all(|(u, v)| *v >= u.abs() * f.x_radius - 1e-12);
    let mut convex_ok = true;
    for w in pairs.windows(3) {
        if w[2].1 - 2.0 * w[1].1 + w[0].1 < -1e-12 {
            convex_ok = false;
        }
    }
    let excess = pairs
        .iter()
        .filter(|(u, _)| *u >= 0.0)
        .map(|(u, v)| (*u, v - u.abs()))
        .collect();
    Ok(AsymptoteReport {
        excess,
        slope_4_8,
        lower_bound_ok,
        convex_ok,
    })
}
