//! Hopf-Lax evaluation of the macroscopic height profile.
//!
//! psi(x,t) = sup over y in x + t int(B0) of { psi0(y) + t g((x-y)/t) },
//! evaluated over a gridded g with multilinear interpolation. The sup runs
//! over a candidate grid of velocities w = (x-y)/t restricted to
//! (1 - edge_shrink) B0_hat (g is undefined on the boundary), with local
//! refinement around the running argmax, plus the profile's special points
//! (a seed profile is -infinity everywhere except one point, which no grid
//! would hit).

use std::collections::BTreeMap;

use crate::error::Error;
use crate::fpp::RadialTable;
use crate::lattice::Site;
use crate::shape::GTable;

/// Macroscopic initial profile psi0, extended-real valued.
#[derive(Clone, Debug)]
pub enum ProfileSpec {
    /// psi0 = c everywhere.
    Flat(f64),
    /// 0 at one point, −∞ elsewhere.
    Seed { point: Vec<f64> },
    /// psi0(y) = −slope * |y| (l1 norm).
    Wedge { slope: f64 },
    /// Macroscopically flat zero; the harness plants a column of height
    /// n*height at the fixed lattice site when discretizing.
    Spike { site: Site, height: f64 },
    /// Gridded profile; −∞ outside the table hull.
    Table(GTable),
    /// base + dz pointwise.
    Shifted { base: Box<ProfileSpec>, dz: f64 },
}

impl ProfileSpec {
    pub fn eval(&self, y: &[f64]) -> f64 {
        match self {
            ProfileSpec::Flat(c) => *c,
            ProfileSpec::Seed { point } => {
                let same = point
                    .iter()
                    .zip(y)
                    .all(|(a, b)| (a - b).abs() < 1e-12);
                if same {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            ProfileSpec::Wedge { slope } => {
                -slope * y.iter().map(|c| c.abs()).sum::<f64>()
            }
            ProfileSpec::Spike { .. } => 0.0,
            ProfileSpec::Table(t) => t.interpolate(y).unwrap_or(f64::NEG_INFINITY),
            ProfileSpec::Shifted { base, dz } => base.eval(y) + dz,
        }
    }

    /// Points that carry mass a candidate grid can miss entirely.
    pub fn special_points(&self) -> Vec<Vec<f64>> {
        match self {
            ProfileSpec::Seed { point } => vec![point.clone()],
            ProfileSpec::Shifted { base, .. } => base.special_points(),
            _ => Vec::new(),
        }
    }

    pub fn shifted(self, dz: f64) -> ProfileSpec {
        ProfileSpec::Shifted {
            base: Box::new(self),
            dz,
        }
    }

    /// Parses from a key=value block: kind plus parameters.
    ///
    /// kind=flat c=0 | kind=seed point=0,0 | kind=wedge slope=1 |
    /// kind=spike position=1 height=1 | kind=table (with `csv` holding the
    /// table text, as loaded by the caller).
    pub fn parse(map: &BTreeMap<String, String>) -> Result<ProfileSpec, Error> {
        let kind = map
            .get("kind")
            .ok_or_else(|| Error::Parse("profile block needs kind=".into()))?;
        let num = |key: &str, default: Option<f64>| -> Result<f64, Error> {
            match map.get(key) {
                Some(v) => v
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad {key}: {v}"))),
                None => default.ok_or_else(|| Error::Parse(format!("profile needs {key}="))),
            }
        };
        let vector = |key: &str| -> Result<Vec<f64>, Error> {
            map.get(key)
                .ok_or_else(|| Error::Parse(format!("profile needs {key}=")))?
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad {key} component: {s}")))
                })
                .collect()
        };
        match kind.as_str() {
            "flat" => Ok(ProfileSpec::Flat(num("c", Some(0.0))?)),
            "seed" => Ok(ProfileSpec::Seed {
                point: vector("point").unwrap_or_else(|_| vec![0.0]),
            }),
            "wedge" => Ok(ProfileSpec::Wedge {
                slope: num("slope", Some(1.0))?,
            }),
            "spike" => {
                let pos = map
                    .get("position")
                    .map(|v| {
                        v.split(',')
                            .map(|s| {
                                s.trim()
                                    .parse::<i64>()
                                    .map_err(|_| Error::Parse(format!("bad position: {s}")))
                            })
                            .collect::<Result<Vec<i64>, _>>()
                    })
                    .transpose()?
                    .unwrap_or_else(|| vec![1]);
                Ok(ProfileSpec::Spike {
                    site: Site::new(pos),
                    height: num("height", Some(1.0))?,
                })
            }
            "table" => {
                let text = map
                    .get("csv")
                    .ok_or_else(|| Error::Parse("table profile needs csv text".into()))?;
                Ok(ProfileSpec::Table(GTable::from_csv(text)?))
            }
            other => Err(Error::Parse(format!("unknown profile kind {other:?}"))),
        }
    }
}

/// Candidate-grid controls for the variational sup.
#[derive(Clone, Debug)]
pub struct EvalOptions {
    /// Shrink factor keeping (x-y)/t strictly inside B0_hat.
    pub edge_shrink: f64,
    /// Candidate grid step as a fraction of the g-table step.
    pub step_fraction: f64,
    /// Rounds of 4x local refinement around the running argmax.
    pub refine_levels: u32,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            edge_shrink: 0.05,
            step_fraction: 0.25,
            refine_levels: 2,
        }
    }
}

/// Value plus coverage diagnostic.
#[derive(Clone, Copy, Debug)]
pub struct PsiValue {
    pub value: f64,
    /// candidates dropped because g was undefined at the needed argument
    pub skipped: usize,
}

fn admissible(w: &[f64], b0: &RadialTable, shrink: f64) -> bool {
    b0.hull_contains(w, 1.0 - shrink)
}

struct SupState<'a> {
    psi0: &'a ProfileSpec,
    g: &'a GTable,
    b0: &'a RadialTable,
    x: &'a [f64],
    t: f64,
    shrink: f64,
    best: f64,
    best_w: Option<Vec<f64>>,
    skipped: usize,
    hit_pos_inf: bool,
}

impl<'a> SupState<'a> {
    fn consider(&mut self, w: &[f64]) {
        let Some(gval) = self.g.interpolate(w) else {
            self.skipped += 1;
            return;
        };
        if !admissible(w, self.b0, self.shrink) {
            return;
        }
        let y: Vec<f64> = self
            .x
            .iter()
            .zip(w)
            .map(|(xi, wi)| xi - self.t * wi)
            .collect();
        let p0 = self.psi0.eval(&y);
        if p0 == f64::INFINITY {
            self.hit_pos_inf = true;
            return;
        }
        if p0 == f64::NEG_INFINITY {
            return;
        }
        let v = p0 + self.t * gval;
        if v > self.best || self.best_w.is_none() && v == self.best {
            self.best = v;
            self.best_w = Some(w.to_vec());
        }
    }

    fn sweep_grid(&mut self, center: &[f64], radius: f64, step: f64) {
        let dim = self.x.len();
        let k = (radius / step).ceil() as i64;
        let mut idx = vec![-k; dim];
        loop {
            let w: Vec<f64> = idx
                .iter()
                .zip(center)
                .map(|(&j, c)| c + j as f64 * step)
                .collect();
            self.consider(&w);
            // odometer increment
            let mut a = 0;
            loop {
                if a == dim {
                    return;
                }
                idx[a] += 1;
                if idx[a] <= k {
                    break;
                }
                idx[a] = -k;
                a += 1;
            }
        }
    }
}

/// Evaluates psi(x,t); t = 0 returns psi0(x) directly.
pub fn eval_psi(
    x: &[f64],
    t: f64,
    psi0: &ProfileSpec,
    g: &GTable,
    b0: &RadialTable,
    opts: &EvalOptions,
) -> Result<PsiValue, Error> {
    if t < 0.0 {
        return Err(Error::Invalid(format!("t must be nonnegative, got {t}")));
    }
    if t == 0.0 {
        return Ok(PsiValue {
            value: psi0.eval(x),
            skipped: 0,
        });
    }
    let dim = x.len();
    if g.dim != dim {
        return Err(Error::Invalid(format!(
            "g table dimension {} does not match point dimension {dim}",
            g.dim
        )));
    }
    let mut st = SupState {
        psi0,
        g,
        b0,
        x,
        t,
        shrink: opts.edge_shrink,
        best: f64::NEG_INFINITY,
        best_w: None,
        skipped: 0,
        hit_pos_inf: false,
    };
    let radius = (1.0 - opts.edge_shrink) * b0.max_radius();
    let step0 = g.step * opts.step_fraction;
    st.sweep_grid(&vec![0.0; dim], radius, step0);
    // the profile's isolated mass points enter as exact candidates
    for p in psi0.special_points() {
        let w: Vec<f64> = x.iter().zip(&p).map(|(xi, pi)| (xi - pi) / t).collect();
        st.consider(&w);
    }
    // local refinement around the running argmax
    let mut step = step0;
    for _ in 0..opts.refine_levels {
        if let Some(center) = st.best_w.clone() {
            let fine = step / 4.0;
            st.sweep_grid(&center, step, fine);
            step = fine;
        }
    }
    let value = if st.hit_pos_inf {
        f64::INFINITY
    } else {
        st.best
    };
    Ok(PsiValue {
        value,
        skipped: st.skipped,
    })
}

/// Evaluated solution on a list of space-time points, exportable as CSV.
#[derive(Clone, Debug)]
pub struct PsiField {
    pub points: Vec<(Vec<f64>, f64, f64)>,
}

pub fn evaluate_field(
    psi0: &ProfileSpec,
    g: &GTable,
    b0: &RadialTable,
    xs: &[Vec<f64>],
    ts: &[f64],
    opts: &EvalOptions,
) -> Result<PsiField, Error> {
    let mut points = Vec::with_capacity(xs.len() * ts.len());
    for t in ts {
        for x in xs {
            let v = eval_psi(x, *t, psi0, g, b0, opts)?;
            points.push((x.clone(), *t, v.value));
        }
    }
    Ok(PsiField { points })
}

impl PsiField {
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        let dim = self.points.first().map_or(0, |(x, _, _)| x.len());
        for a in 0..dim {
            write!(w, "x{a},")?;
        }
        writeln!(w, "t,psi")?;
        for (x, t, v) in &self.points {
            for c in x {
                write!(w, "{c},")?;
            }
            writeln!(w, "{t},{v}")?;
        }
        Ok(())
    }
}

/// Residual of the semigroup identity at (x, s, t): both sides evaluated
/// with the same candidate resolution.
#[derive(Clone, Copy, Debug)]
pub struct SemigroupResidual {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

pub fn semigroup_check(
    psi0: &ProfileSpec,
    g: &GTable,
    b0: &RadialTable,
    x: &[f64],
    s: f64,
    t: f64,
    opts: &EvalOptions,
) -> Result<SemigroupResidual, Error> {
    if !(0.0 < s && s < t) {
        return Err(Error::Invalid(format!("need 0 < s < t, got s={s}, t={t}")));
    }
    let lhs = eval_psi(x, t, psi0, g, b0, opts)?.value;
    // rhs: sup over y in x + (t-s) int B0 of psi(y,s) + (t-s) g((x-y)/(t-s))
    let dim = x.len();
    let dt = t - s;
    let radius = (1.0 - opts.edge_shrink) * b0.max_radius();
    let step = g.step * opts.step_fraction;
    let k = (radius / step).ceil() as i64;
    let mut rhs = f64::NEG_INFINITY;
    let mut idx = vec![-k; dim];
    'outer: loop {
        let w: Vec<f64> = idx.iter().map(|&j| j as f64 * step).collect();
        if admissible(&w, b0, opts.edge_shrink) {
            if let Some(gval) = g.interpolate(&w) {
                let y: Vec<f64> = x.iter().zip(&w).map(|(xi, wi)| xi - dt * wi).collect();
                let inner = eval_psi(&y, s, psi0, g, b0, opts)?.value;
                if inner > f64::NEG_INFINITY {
                    rhs = rhs.max(inner + dt * gval);
                }
            }
        }
        let mut a = 0;
        loop {
            if a == dim {
                break 'outer;
            }
            idx[a] += 1;
            if idx[a] <= k {
                break;
            }
            idx[a] = -k;
            a += 1;
        }
    }
    let residual = if lhs == f64::NEG_INFINITY && rhs == f64::NEG_INFINITY {
        0.0
    } else {
        (lhs - rhs).abs()
    };
    Ok(SemigroupResidual { lhs, rhs, residual })
}

/// One verified bound instance of the modulus report.
#[derive(Clone, Debug)]
pub struct BoundCheck {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct ModulusReport {
    pub checks: Vec<BoundCheck>,
    pub pass: bool,
}

/// Empirical modulus of continuity of F over a centered window:
/// osc(F; delta) = max |F(y1) - F(y2)| over grid pairs |y1-y2| <= delta.
fn empirical_osc<F: Fn(&[f64]) -> f64>(
    f: &F,
    dim: usize,
    window: f64,
    step: f64,
    delta: f64,
) -> f64 {
    let k = (window / step).ceil() as i64;
    let mut pts: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut idx = vec![-k; dim];
    'outer: loop {
        let y: Vec<f64> = idx.iter().map(|&j| j as f64 * step).collect();
        pts.push((y.clone(), f(&y)));
        let mut a = 0;
        loop {
            if a == dim {
                break 'outer;
            }
            idx[a] += 1;
            if idx[a] <= k {
                break;
            }
            idx[a] = -k;
            a += 1;
        }
    }
    let mut osc: f64 = 0.0;
    for (i, (yi, fi)) in pts.iter().enumerate() {
        if !fi.is_finite() {
            continue;
        }
        for (yj, fj) in pts.iter().skip(i + 1) {
            if !fj.is_finite() {
                continue;
            }
            let dist: f64 = yi.iter().zip(yj).map(|(a, b)| (a - b).abs()).sum();
            if dist <= delta + 1e-12 {
                osc = osc.max((fi - fj).abs());
            }
        }
    }
    osc
}

/// Verifies the time and space moduli on sampled points:
///   0 <= psi(x,t) - psi(x,s) <= osc(psi(.,s); b0 (t-s)) + (t-s) max g
///   |psi(x1,t) - psi(x2,t)| <= osc(psi0; |x1-x2|)
/// where osc is the empirical modulus on the evaluation grid and b0 is the
/// largest l1 extent of B0_hat. Grid-resolution slack is added on both
/// sides.
pub fn modulus_check(
    psi0: &ProfileSpec,
    g: &GTable,
    b0: &RadialTable,
    time_samples: &[(Vec<f64>, f64, f64)],
    space_samples: &[(Vec<f64>, Vec<f64>, f64)],
    opts: &EvalOptions,
) -> Result<ModulusReport, Error> {
    let dim = g.dim;
    let max_g = g.max_g();
    let b0_l1 = b0
        .directions
        .iter()
        .zip(&b0.radius)
        .map(|(d, r)| r * d.iter().map(|c| c.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let osc_step = g.step * opts.step_fraction;
    let slack = 4.0 * osc_step * (1.0 + max_g);
    let mut checks = Vec::new();
    for (x, s, t) in time_samples {
        if !(0.0 < *s && s <= t) {
            return Err(Error::Invalid("time samples need 0 < s <= t".into()));
        }
        let ps = eval_psi(x, *s, psi0, g, b0, opts)?.value;
        let pt = eval_psi(x, *t, psi0, g, b0, opts)?.value;
        let diff = pt - ps;
        checks.push(BoundCheck {
            label: format!("time lower bound at x={x:?}, {s}->{t}"),
            lhs: 0.0,
            rhs: diff,
            pass: diff >= -slack,
        });
        let delta = b0_l1 * (t - s);
        let window = delta + x.iter().map(|c| c.abs()).sum::<f64>() + 1.0;
        let f = |y: &[f64]| {
            eval_psi(y, *s, psi0, g, b0, opts)
                .map(|v| v.value)
                .unwrap_or(f64::NAN)
        };
        let osc = empirical_osc(&f, dim, window, osc_step.max(delta / 8.0).max(0.02), delta);
        let bound = osc + (t - s) * max_g;
        checks.push(BoundCheck {
            label: format!("time upper bound at x={x:?}, {s}->{t}"),
            lhs: diff,
            rhs: bound,
            pass: diff <= bound + slack,
        });
    }
    for (x1, x2, t) in space_samples {
        let p1 = eval_psi(x1, *t, psi0, g, b0, opts)?.value;
        let p2 = eval_psi(x2, *t, psi0, g, b0, opts)?.value;
        let delta: f64 = x1.iter().zip(x2).map(|(a, b)| (a - b).abs()).sum();
        let window = delta + x1.iter().map(|c| c.abs()).sum::<f64>() + t * b0_l1 + 1.0;
        let f = |y: &[f64]| psi0.eval(y);
        let osc = empirical_osc(&f, dim, window, osc_step.max(delta / 8.0).max(0.02), delta);
        checks.push(BoundCheck {
            label: format!("space bound {x1:?} vs {x2:?} at t={t}"),
            lhs: (p1 - p2).abs(),
            rhs: osc,
            pass: (p1 - p2).abs() <= osc + slack,
        });
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(ModulusReport { checks, pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_b0_d1() -> RadialTable {
        RadialTable {
            directions: vec![vec![1.0], vec![-1.0]],
            radius: vec![1.0, 1.0],
            stderr: vec![0.0, 0.0],
        }
    }

    /// Concave synthetic shape on a dyadic grid, so float arithmetic in the
    /// invariance tests is exact.
    fn synthetic_g() -> GTable {
        GTable::from_function(1, 0.0625, 16, |x| 2.0 - x[0] * x[0])
    }

    #[test]
    fn t_zero_returns_profile() {
        let g = synthetic_g();
        let b0 = unit_b0_d1();
        let psi0 = ProfileSpec::Wedge { slope: 1.0 };
        let v = eval_psi(&[0.75], 0.0, &psi0, &g, &b0, &EvalOptions::default()).unwrap();
        assert_eq!(v.value, -0.75);
    }

    #[test]
    fn seed_profile_reproduces_t_g_scaling() {
        let g = synthetic_g();
        let b0 = unit_b0_d1();
        let psi0 = ProfileSpec::Seed { point: vec![0.0] };
        let opts = EvalOptions::default();
        for (x, t) in [(0.0, 1.0), (0.25, 1.0), (0.5, 2.0), (-0.75, 1.5)] {
            let v = eval_psi(&[x], t, &psi0, &g, &b0, &opts).unwrap();
            let expect = t * (2.0 - (x / t) * (x / t));
            assert!(
                (v.value - expect).abs() < 1e-9,
                "psi({x},{t}) = {} vs {expect}",
                v.value
            );
        }
        // far outside the cone: no admissible candidate -> -inf + diagnostic
        let v = eval_psi(&[3.0], 1.0, &psi0, &g, &b0, &opts).unwrap();
        assert_eq!(v.value, f64::NEG_INFINITY);
        assert!(v.skipped > 0, "coverage diagnostic records the gap");
    }

    #[test]
    fn flat_profile_grows_at_max_g() {
        let g = synthetic_g();
        let b0 = unit_b0_d1();
        let psi0 = ProfileSpec::Flat(0.0);
        let opts = EvalOptions::default();
        for (x, t) in [(0.0, 1.0), (0.5, 1.0), (-1.25, 2.0)] {
            let v = eval_psi(&[x], t, &psi0, &g, &b0, &opts).unwrap();
            assert!(
                (v.value - t * 2.0).abs() < 1e-9,
                "flat psi({x},{t}) = {}",
                v.value
            );
        }
    }

    #[test]
    fn monotone_in_data_and_vertical_shift() {
        let g = synthetic_g();
        let b0 = unit_b0_d1();
        let opts = EvalOptions::default();
        let lo = ProfileSpec::Wedge { slope: 1.0 };
        let hi = ProfileSpec::Wedge { slope: 1.0 }.shifted(0.5);
        for x in [-0.5, 0.0, 0.75] {
            let a = eval_psi(&[x], 1.0, &lo, &g, &b0, &opts).unwrap().value;
            let b = eval_psi(&[x], 1.0, &hi, &g, &b0, &opts).unwrap().value;
            assert!(b >= a, "monotone in data");
            // dyadic data: the shift passes through exactly
            assert_eq!(b, a + 0.5);
        }
    }

    #[test]
    fn translation_covariance_on_dyadic_grid() {
        let g = synthetic_g();
        let b0 = unit_b0_d1();
        let opts = EvalOptions::default();
        let a = 0.5; // grid multiple
        let base = ProfileSpec::Seed { point: vec![0.0] };
        let moved = ProfileSpec::Seed { point: vec![a] };
        for x in [0.0, 0.25, -0.5] {
            let v0 = eval_psi(&[x], 1.0, &base, &g, &b0, &opts).unwrap().value;
            let v1 = eval_psi(&[x + a], 1.0, &moved, &g, &b0, &opts).unwrap().value;
            assert_eq!(v0, v1, "translation by {a} at x={x}");
        }
    }

    #[test]
    fn psi_nondecreasing_in_time_for_growing_data() {
        // growth property: with psi0 everywhere finite and g >= 0 the
        // solution only grows in t
        let g = synthetic_g();
        let b0 = unit_b0_d1();
        let opts = EvalOptions::default();
        for psi0 in [ProfileSpec::Flat(0.5), ProfileSpec::Wedge { slope: 2.0 }] {
            for x in [0.0, -0.75] {
                let mut prev = psi0.eval(&[x]);
                for t in [0.25, 0.5, 1.0, 2.0] {
                    let v = eval_psi(&[x], t, &psi0, &g, &b0, &opts).unwrap().value;
                    assert!(v >= prev - 1e-12, "psi({x},{t}) = {v} < {prev}");
                    prev = v;
                }
            }
        }
    }

    #[test]
    fn spike_profile_is_macroscopically_flat() {
        // the spike carries no macroscopic mass: psi equals the flat-zero
        // solution t * max g
        let g = synthetic_g();
        let b0 = unit_b0_d1();
        let opts = EvalOptions::default();
        let spike = ProfileSpec::Spike {
            site: Site::new(vec![1]),
            height: 1.0,
        };
        let flat = ProfileSpec::Flat(0.0);
        for (x, t) in [(0.0, 1.0), (0.5, 2.0)] {
            let a = eval_psi(&[x], t, &spike, &g, &b0, &opts).unwrap().value;
            let b = eval_psi(&[x], t, &flat, &g, &b0, &opts).unwrap().value;
            assert_eq!(a, b);
        }
    }

    #[test]
    fn pos_inf_short_circuits() {
        let g = synthetic_g();
        let b0 = unit_b0_d1();
        let psi0 = ProfileSpec::Flat(f64::INFINITY);
        let v = eval_psi(&[0.0], 1.0, &psi0, &g, &b0, &EvalOptions::default()).unwrap();
        assert_eq!(v.value, f64::INFINITY);
    }

    #[test]
    fn semigroup_residual_contracts_under_refinement() {
        let g = synthetic_g();
        let b0 = unit_b0_d1();
        for psi0 in [
            ProfileSpec::Seed { point: vec![0.0] },
            ProfileSpec::Flat(0.0),
            ProfileSpec::Wedge { slope: 1.0 },
        ] {
            let mut residuals = Vec::new();
            for frac in [1.0, 0.5, 0.25] {
                let opts = EvalOptions {
                    step_fraction: frac,
                    refine_levels: 0,
                    ..EvalOptions::default()
                };
                let r = semigroup_check(&psi0, &g, &b0, &[0.3], 0.45, 1.0, &opts).unwrap();
                residuals.push(r.residual);
            }
            for w in residuals.windows(2) {
                assert!(
                    w[1] <= 0.7 * w[0] + 1e-9,
                    "{psi0:?}: residuals {residuals:?}"
                );
            }
        }
    }

    #[test]
    fn semigroup_degenerate_step_small_residual() {
        let g = synthetic_g();
        let b0 = unit_b0_d1();
        let psi0 = ProfileSpec::Flat(0.0);
        let r = semigroup_check(&psi0, &g, &b0, &[0.0], 0.999, 1.0, &EvalOptions::default())
            .unwrap();
        assert!(r.residual < 1e-6, "residual {}", r.residual);
    }

    #[test]
    fn modulus_bounds_hold() {
        let g = synthetic_g();
        let b0 = unit_b0_d1();
        let opts = EvalOptions::default();
        // wedge: spatial bound with equality-scale slack; flat: trivially 0
        for psi0 in [ProfileSpec::Wedge { slope: 1.0 }, ProfileSpec::Flat(0.0)] {
            let rep = modulus_check(
                &psi0,
                &g,
                &b0,
                &[
                    (vec![0.0], 0.5, 1.0),
                    (vec![0.25], 0.25, 0.75),
                    (vec![0.0], 1.0, 1.0), // s = t degenerate
                ],
                &[
                    (vec![0.0], vec![0.5], 1.0),
                    (vec![-0.25], vec![0.25], 0.5),
                ],
                &opts,
            )
            .unwrap();
            assert!(rep.pass, "{:#?}", rep.checks);
        }
    }

    #[test]
    fn d2_seed_and_flat_evaluation() {
        let g2 = GTable::from_function(2, 0.125, 8, |x| 3.0 - x[0] * x[0] - x[1] * x[1]);
        let mut dirs = Vec::new();
        for k in 0..8 {
            let a = std::f64::consts::PI * k as f64 / 4.0;
            dirs.push(vec![a.cos(), a.sin()]);
        }
        let b0 = RadialTable {
            directions: dirs,
            radius: vec![1.0; 8],
            stderr: vec![0.0; 8],
        };
        let opts = EvalOptions::default();
        let seed = ProfileSpec::Seed {
            point: vec![0.0, 0.0],
        };
        // x/t on table nodes, so the bilinear interpolant is exact there
        for (x, t) in [([0.0, 0.0], 1.0), ([0.25, -0.5], 2.0), ([-0.375, 0.75], 1.5)] {
            let v = eval_psi(&x, t, &seed, &g2, &b0, &opts).unwrap();
            let expect = t * (3.0 - (x[0] / t).powi(2) - (x[1] / t).powi(2));
            assert!(
                (v.value - expect).abs() < 1e-9,
                "psi({x:?},{t}) = {} vs {expect}",
                v.value
            );
        }
        let flat = ProfileSpec::Flat(1.0);
        let v = eval_psi(&[0.5, 0.5], 2.0, &flat, &g2, &b0, &opts).unwrap();
        assert!((v.value - (1.0 + 2.0 * 3.0)).abs() < 1e-9);
    }

    #[test]
    fn profile_parsing() {
        let mut m = BTreeMap::new();
        m.insert("kind".into(), "wedge".into());
        m.insert("slope".into(), "2.5".into());
        match ProfileSpec::parse(&m).unwrap() {
            ProfileSpec::Wedge { slope } => assert_eq!(slope, 2.5),
            other => panic!("{other:?}"),
        }
        let mut m = BTreeMap::new();
        m.insert("kind".into(), "spike".into());
        m.insert("position".into(), "1".into());
        m.insert("height".into(), "1".into());
        match ProfileSpec::parse(&m).unwrap() {
            ProfileSpec::Spike { site, height } => {
                assert_eq!(site, Site::new(vec![1]));
                assert_eq!(height, 1.0);
            }
            other => panic!("{other:?}"),
        }
        let mut m = BTreeMap::new();
        m.insert("kind".into(), "nonsense".into());
        assert!(ProfileSpec::parse(&m).is_err());
    }

    #[test]
    fn psi_field_csv() {
        let g = synthetic_g();
        let b0 = unit_b0_d1();
        let psi0 = ProfileSpec::Flat(0.0);
        let field = evaluate_field(
            &psi0,
            &g,
            &b0,
            &[vec![0.0], vec![0.5]],
            &[0.0, 1.0],
            &EvalOptions::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        field.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x0,t,psi\n"));
        assert_eq!(text.lines().count(), 5);
    }
}
