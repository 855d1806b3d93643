//! Verification suite drivers shared by the CLI and the acceptance tests:
//! exact coupling checks over randomized initial data, the mean-level
//! inequality grid for the passage times, and the semigroup contraction
//! study.

use rayon::prelude::*;
use serde::Serialize;

use crate::clocks::ClockField;
use crate::error::Error;
use crate::fpp::{self, CellWeightField};
use crate::hopflax::{semigroup_check, EvalOptions, ProfileSpec};
use crate::lattice::{ExtHeight, LatticeBox, Site, NEG_INF};
use crate::rng;
use crate::shape::{check_lipschitz, GTable, InequalityCheck};
use crate::sim::{self, HeightField, SeedSpec};
use crate::stats;

#[derive(Clone, Debug, Serialize)]
pub struct SuiteCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn random_height(word: u64) -> ExtHeight {
    // -inf with probability 1/8, else uniform on -3..=3
    let w = rng::mix(word);
    if w % 8 == 0 {
        NEG_INF
    } else {
        ExtHeight::finite((rng::mix(w) % 7) as i64 - 3)
    }
}

/// Exact supremum identity over random sparse initial fields: sigma equals
/// the max of the zeta^v family at every event time, zero tolerance.
pub fn supremum_suite(
    box_radius: i64,
    max_finite: usize,
    clock_seeds: u64,
    horizon: f64,
    seed: u64,
) -> Result<SuiteCheck, Error> {
    let lattice = LatticeBox::new(1, box_radius, box_radius)?;
    let mut violations = 0usize;
    let mut events = 0u64;
    for s in 0..clock_seeds {
        let init_seed = rng::derive(seed, "sup-init", &[s]);
        let count = 1 + (rng::mix(init_seed) % max_finite as u64) as usize;
        let mut field = HeightField::empty(lattice.clone());
        for k in 0..count {
            let w = rng::derive(init_seed, "site", &[k as u64]);
            let pos = (rng::mix(w) % lattice.extent() as u64) as i64 - box_radius;
            let h = (rng::mix(w.wrapping_add(1)) % 7) as i64 - 3;
            field.set(&Site::new(vec![pos]), ExtHeight::finite(h))?;
        }
        let rep = sim::couple_supremum(&field, &ClockField::new(s), horizon)?;
        violations += rep.violations.len();
        events += rep.events;
    }
    Ok(SuiteCheck {
        name: "supremum coupling".into(),
        pass: violations == 0,
        detail: format!(
            "{clock_seeds} clock seeds, {events} events, {violations} violations"
        ),
    })
}

/// Monotone coupling over random ordered pairs (pointwise min/max of two
/// random fields, so −∞ entries are exercised too).
pub fn monotone_suite(
    box_radius: i64,
    pairs: u64,
    horizon: f64,
    seed: u64,
) -> Result<SuiteCheck, Error> {
    let lattice = LatticeBox::new(1, box_radius, box_radius)?;
    let mut violations = 0usize;
    for p in 0..pairs {
        let ps = rng::derive(seed, "mono-pair", &[p]);
        let mut hi = HeightField::empty(lattice.clone());
        let mut lo = HeightField::empty(lattice.clone());
        for idx in 0..lattice.len() {
            let a = random_height(rng::derive(ps, "a", &[idx as u64]));
            let b = random_height(rng::derive(ps, "b", &[idx as u64]));
            hi.heights[idx] = a.max(b);
            lo.heights[idx] = a.min(b);
        }
        let rep = sim::couple_monotone(&hi, &lo, &ClockField::new(p), horizon)?;
        violations += rep.violations.len();
    }
    Ok(SuiteCheck {
        name: "monotone coupling".into(),
        pass: violations == 0,
        detail: format!("{pairs} ordered pairs, {violations} violations"),
    })
}

/// Mean-level grid report for the passage-time inequalities.
#[derive(Clone, Debug, Serialize)]
pub struct GridReport {
    pub cells: usize,
    pub bound_checks: Vec<InequalityCheck>,
    pub subadd_checks: Vec<InequalityCheck>,
    pub lipschitz_checks: Vec<InequalityCheck>,
    pub domination_checks: Vec<InequalityCheck>,
    pub gamma_origin: f64,
    pub pass: bool,
}

fn d1_cells(reach: i64) -> Vec<(Site, i64)> {
    let mut cells = Vec::new();
    for u in -reach..=reach {
        for h in 0..=(reach - u.abs()) {
            cells.push((Site::new(vec![u]), h));
        }
    }
    cells
}

/// Samples mean R at every d=1 cell with |u| + h <= 2*grid_max and checks,
/// with 3-sigma slack:
///   - the Exp-sum bound mean R(u,h) <= |u| + h        (cells <= grid_max)
///   - subadditivity over all pairs of cells <= grid_max
///   - the one-sided Lipschitz bound over ordered pairs <= grid_max
///   - directed-model domination mean M(u,h) <= mean R(u,h)
/// plus the exact identity R(0,0) = 0.
pub fn grid_suite(
    grid_max: i64,
    replicas: usize,
    directed_replicas: usize,
    seed: u64,
) -> Result<GridReport, Error> {
    let spec = SeedSpec::origin(1);
    let all_cells = d1_cells(2 * grid_max);
    let small_cells = d1_cells(grid_max);
    // independent clock seeds per cell; means feed every inequality below
    let means: Vec<(f64, f64)> = all_cells
        .par_iter()
        .enumerate()
        .map(|(i, (u, h))| {
            let cap = sim::default_passage_cap(&spec, u, *h);
            let sub = rng::derive(seed, "grid-cell", &[i as u64]);
            let samples: Vec<f64> = (0..replicas)
                .map(|r| {
                    let clocks = ClockField::new(rng::derive(sub, "rep", &[r as u64]));
                    sim::passage_time(&spec, &clocks, u, *h, cap)
                        .unwrap()
                        .time()
                        .unwrap_or(cap)
                })
                .collect();
            stats::mean_stderr(&samples)
        })
        .collect();
    let lookup = |site: &Site, h: i64| -> (f64, f64) {
        let pos = all_cells
            .iter()
            .position(|(s, k)| s == site && *k == h)
            .expect("cell sampled");
        means[pos]
    };

    let mut bound_checks = Vec::new();
    for (u, h) in &small_cells {
        let (m, se) = lookup(u, *h);
        let bound = (u.norm1() + h) as f64;
        bound_checks.push(InequalityCheck {
            label: format!("mean R({u},{h}) <= {bound}"),
            lhs: m,
            rhs: bound,
            slack: 3.0 * se,
            pass: m <= bound + 3.0 * se,
        });
    }

    let mut subadd_checks = Vec::new();
    let mut lipschitz_checks = Vec::new();
    for (u, h) in &small_cells {
        let (m1, s1) = lookup(u, *h);
        for (v, k) in &small_cells {
            let (m2, s2) = lookup(v, *k);
            let sum = u.add(v);
            let (m3, s3) = lookup(&sum, h + k);
            // coincident summand cells reuse one estimate, so their
            // stderrs add linearly, not in quadrature
            let rhs_se = if u == v && h == k {
                s1 + s2
            } else {
                stats::combined_stderr(&[s1, s2])
            };
            let slack = 3.0 * stats::combined_stderr(&[rhs_se, s3]);
            subadd_checks.push(InequalityCheck {
                label: format!("R({sum},{}) <= R({u},{h}) + R({v},{k})", h + k),
                lhs: m3,
                rhs: m1 + m2,
                slack,
                pass: m3 <= m1 + m2 + slack,
            });
            let dist = u
                .coords
                .iter()
                .zip(&v.coords)
                .map(|(a, b)| (a - b).abs())
                .sum::<i64>();
            lipschitz_checks.push(check_lipschitz((m1, s1), (m2, s2), dist, h - k));
        }
    }

    // directed domination: one layered shortest path per replica covers the
    // whole grid
    let lattice = LatticeBox::new(1, 2 * grid_max.max(2), grid_max.max(1))?;
    let dir_rows: Vec<Vec<f64>> = (0..directed_replicas)
        .into_par_iter()
        .map(|r| {
            let cw = CellWeightField::sample(
                lattice.clone(),
                grid_max,
                rng::derive(seed, "grid-directed", &[r as u64]),
            );
            fpp::directed_passage_grid(&cw, &small_cells).unwrap()
        })
        .collect();
    let mut domination_checks = Vec::new();
    for (ci, (u, h)) in small_cells.iter().enumerate() {
        let ms: Vec<f64> = dir_rows.iter().map(|row| row[ci]).collect();
        let (mm, sm) = stats::mean_stderr(&ms);
        let (mr, sr) = lookup(u, *h);
        let slack = 3.0 * stats::combined_stderr(&[sm, sr]);
        domination_checks.push(InequalityCheck {
            label: format!("mean M({u},{h}) <= mean R({u},{h})"),
            lhs: mm,
            rhs: mr,
            slack,
            pass: mm <= mr + slack,
        });
    }

    let gamma_origin = lookup(&Site::origin(1), 0).0;
    let pass = gamma_origin == 0.0
        && bound_checks.iter().all(|c| c.pass)
        && subadd_checks.iter().all(|c| c.pass)
        && lipschitz_checks.iter().all(|c| c.pass)
        && domination_checks.iter().all(|c| c.pass);
    Ok(GridReport {
        cells: all_cells.len(),
        bound_checks,
        subadd_checks,
        lipschitz_checks,
        domination_checks,
        gamma_origin,
        pass,
    })
}

/// Semigroup residual contraction on the bundled profiles over a synthetic
/// concave shape: halving the candidate step twice must shrink the
/// residual by the stated ratio each time (or keep it at the noise floor).
pub fn semigroup_suite(ratio: f64) -> Result<SuiteCheck, Error> {
    let g = GTable::from_function(1, 0.0625, 16, |x| 2.0 - x[0] * x[0]);
    let b0 = fpp::RadialTable {
        directions: vec![vec![1.0], vec![-1.0]],
        radius: vec![1.0, 1.0],
        stderr: vec![0.0, 0.0],
    };
    let floor = 1e-9;
    let mut pass = true;
    let mut detail = String::new();
    for (name, psi0) in [
        ("seed", ProfileSpec::Seed { point: vec![0.0] }),
        ("flat", ProfileSpec::Flat(0.0)),
        ("wedge", ProfileSpec::Wedge { slope: 1.0 }),
    ] {
        let mut residuals = Vec::new();
        for frac in [1.0, 0.5, 0.25] {
            let opts = EvalOptions {
                step_fraction: frac,
                refine_levels: 0,
                ..EvalOptions::default()
            };
            let r = semigroup_check(&psi0, &g, &b0, &[0.3], 0.45, 1.0, &opts)?;
            residuals.push(r.residual);
        }
        let ok = residuals
            .windows(2)
            .all(|w| w[1] <= ratio * w[0] + floor);
        pass &= ok;
        detail.push_str(&format!("{name}: {residuals:?}; "));
    }
    Ok(SuiteCheck {
        name: "semigroup contraction".into(),
        pass,
        detail,
    })
}
