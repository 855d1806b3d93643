//! Hydrodynamic-limit experiments at desk scale.
//!
//! A scenario discretizes a macroscopic profile psi0 at scale n
//! (sigma_u(0) = floor(n psi0(u/n))), runs the deposition dynamics to time
//! n*t on fresh clock seeds, and compares the scaled heights
//! sigma_{[nx]}(nt)/n against the Hopf-Lax prediction psi(x,t). The
//! acceptance verdict is trend-plus-threshold: the scaling law gives no
//! rate, so the harness asks for a small final error and a nonincreasing
//! error sequence.
//!
//! Observation points must sit strictly inside the growth cone. At the
//! cone edge (x equal to t times the cluster speed, for a seed start in
//! d=1) no scaled limit exists: whether site [nt] is shadowed flips with
//! the fluctuation of the cluster's edge, leaving the height at −∞ or
//! finite from replica to replica. The bundled scenarios keep their
//! points well inside the cone.

use serde::Serialize;

use crate::clocks::ClockField;
use crate::error::Error;
use crate::fpp::RadialTable;
use crate::hopflax::{eval_psi, EvalOptions, ProfileSpec};
use crate::lattice::{ExtHeight, LatticeBox, Site, NEG_INF, POS_INF};
use crate::rng;
use crate::shape::GTable;
use crate::sim::{self, HeightField};
use crate::stats;
use rayon::prelude::*;

/// One hydrodynamic experiment: a profile, a macroscopic time, observation
/// points, and the ladder of scales.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub psi0: ProfileSpec,
    pub t: f64,
    pub observation_points: Vec<Vec<f64>>,
    pub scales: Vec<u64>,
    pub replicas: usize,
    pub seed: u64,
    pub tol_hydro: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.t > 0.0) {
            return Err(Error::Invalid("scenario needs t > 0".into()));
        }
        if self.scales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid("scales must be strictly increasing".into()));
        }
        if self.scales.is_empty() || self.observation_points.is_empty() {
            return Err(Error::Invalid("scenario needs scales and points".into()));
        }
        Ok(())
    }
}

/// sigma^n_u(0) = floor(n psi0(u/n)) with ±∞ passed through; the spike
/// profile plants its microscopic column on an otherwise flat zero field.
pub fn discretize_profile(
    psi0: &ProfileSpec,
    n: u64,
    lattice: &LatticeBox,
) -> Result<HeightField, Error> {
    if n < 1 {
        return Err(Error::Invalid("scale n must be at least 1".into()));
    }
    let mut field = HeightField::empty(lattice.clone());
    for idx in 0..lattice.len() {
        let u = lattice.site_of(idx);
        let y: Vec<f64> = u.coords.iter().map(|&c| c as f64 / n as f64).collect();
        let v = psi0.eval(&y);
        field.heights[idx] = if v == f64::NEG_INFINITY {
            NEG_INF
        } else if v == f64::INFINITY {
            POS_INF
        } else {
            ExtHeight::finite(crate::floor_snap(n as f64 * v))
        };
    }
    if let ProfileSpec::Spike { site, height } = psi0 {
        if lattice.contains(site) {
            field.set(site, ExtHeight::finite(crate::floor_snap(n as f64 * height)))?;
        }
    }
    // a macroscopic seed occupies the nearest lattice cell even when n is
    // too coarse for any u/n to hit the point exactly
    if let ProfileSpec::Seed { point } = psi0 {
        let u = Site::floor_of(point, n as f64);
        if lattice.contains(&u) {
            field.set(&u, ExtHeight::finite(0))?;
        }
    }
    Ok(field)
}

/// Record for one (x, n) pair.
#[derive(Clone, Debug, Serialize)]
pub struct PointRecord {
    pub x: Vec<f64>,
    pub n: u64,
    pub scaled_mean: f64,
    pub scaled_stderr: f64,
    pub prediction: f64,
    pub abs_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PointVerdict {
    pub x: Vec<f64>,
    pub final_error: f64,
    pub final_error_ok: bool,
    pub trend_ok: bool,
    /// fraction of replicate schedules with err(n_max) <= err(n_min)
    pub replica_trend_fraction: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub scenario: String,
    pub t: f64,
    pub scales: Vec<u64>,
    pub replicas: usize,
    pub seed: u64,
    pub tol_hydro: f64,
    pub records: Vec<PointRecord>,
    pub verdicts: Vec<PointVerdict>,
    pub pass: bool,
}

impl ConvergenceReport {
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        let dim = self
            .records
            .first()
            .map_or(0, |r| r.x.len());
        for a in 0..dim {
            write!(w, "x{a},")?;
        }
        writeln!(w, "n,scaled_mean,scaled_stderr,prediction,abs_error")?;
        for r in &self.records {
            for c in &r.x {
                write!(w, "{c},")?;
            }
            writeln!(
                w,
                "{},{},{},{},{}",
                r.n, r.scaled_mean, r.scaled_stderr, r.prediction, r.abs_error
            )?;
        }
        Ok(())
    }
}

fn observation_radius(sc: &Scenario, n: u64) -> i64 {
    let mut obs = 1i64;
    for x in &sc.observation_points {
        obs = obs.max(Site::floor_of(x, n as f64).norm_inf() + 1);
    }
    if let ProfileSpec::Spike { site, .. } = &sc.psi0 {
        obs = obs.max(site.norm_inf() + 1);
    }
    if let ProfileSpec::Seed { point } = &sc.psi0 {
        obs = obs.max(Site::floor_of(point, n as f64).norm_inf() + 1);
    }
    obs
}

/// Scaled heights at every observation point for one scenario scale,
/// one row per replica. Light-cone breaches abort the scenario.
fn run_scale(sc: &Scenario, n: u64, dim: usize) -> Result<Vec<Vec<f64>>, Error> {
    let horizon = n as f64 * sc.t;
    let lattice = LatticeBox::for_horizon(dim, observation_radius(sc, n), horizon);
    let init = discretize_profile(&sc.psi0, n, &lattice)?;
    let sites: Vec<Site> = sc
        .observation_points
        .iter()
        .map(|x| Site::floor_of(x, n as f64))
        .collect();
    (0..sc.replicas)
        .into_par_iter()
        .map(|r| {
            let clocks = ClockField::new(rng::derive(sc.seed, "hydro", &[n, r as u64]));
            let out = sim::run(&init, &clocks, horizon)?;
            if let Some(tb) = out.report.breach {
                return Err(Error::LightConeBreach(tb));
            }
            Ok(sites
                .iter()
                .map(|s| out.field.get(s).unwrap().to_f64() / n as f64)
                .collect())
        })
        .collect()
}

/// Runs the scenario across its scale ladder and compares against the
/// Hopf-Lax prediction. PASS iff at every observation point the error at
/// the largest n stays below tol_hydro and the error sequence is
/// nonincreasing up to one combined-CI slack.
pub fn run_scenario(
    sc: &Scenario,
    g: &GTable,
    b0: &RadialTable,
) -> Result<ConvergenceReport, Error> {
    sc.validate()?;
    let dim = g.dim;
    let opts = EvalOptions::default();
    let predictions: Vec<f64> = sc
        .observation_points
        .iter()
        .map(|x| eval_psi(x, sc.t, &sc.psi0, g, b0, &opts).map(|v| v.value))
        .collect::<Result<_, _>>()?;
    let mut records = Vec::new();
    // per point, per scale: (mean error, se); per point per replica endpoint errors
    let mut errors: Vec<Vec<(f64, f64)>> = vec![Vec::new(); sc.observation_points.len()];
    let mut first_errs: Vec<Vec<f64>> = vec![Vec::new(); sc.observation_points.len()];
    let mut last_errs: Vec<Vec<f64>> = vec![Vec::new(); sc.observation_points.len()];
    for (si, &n) in sc.scales.iter().enumerate() {
        let rows = run_scale(sc, n, dim)?;
        for (pi, x) in sc.observation_points.iter().enumerate() {
            let vals: Vec<f64> = rows.iter().map(|row| row[pi]).collect();
            let (mean, se) = stats::mean_stderr(&vals);
            let err = (mean - predictions[pi]).abs();
            records.push(PointRecord {
                x: x.clone(),
                n,
                scaled_mean: mean,
                scaled_stderr: se,
                prediction: predictions[pi],
                abs_error: err,
            });
            errors[pi].push((err, se));
            if si == 0 {
                first_errs[pi] = vals
                    .iter()
                    .map(|v| (v - predictions[pi]).abs())
                    .collect();
            }
            if si == sc.scales.len() - 1 {
                last_errs[pi] = vals
                    .iter()
                    .map(|v| (v - predictions[pi]).abs())
                    .collect();
            }
        }
    }
    let mut verdicts = Vec::new();
    for (pi, x) in sc.observation_points.iter().enumerate() {
        let seq = &errors[pi];
        let (final_error, _) = *seq.last().unwrap();
        let final_error_ok = final_error <= sc.tol_hydro;
        let trend_ok = seq
            .windows(2)
            .all(|w| w[1].0 <= w[0].0 + w[0].1 + w[1].1);
        let improved = first_errs[pi]
            .iter()
            .zip(&last_errs[pi])
            .filter(|(e0, e1)| e1 <= e0)
            .count();
        let replica_trend_fraction = improved as f64 / sc.replicas as f64;
        verdicts.push(PointVerdict {
            x: x.clone(),
            final_error,
            final_error_ok,
            trend_ok,
            replica_trend_fraction,
        });
    }
    let pass = verdicts.iter().all(|v| v.final_error_ok && v.trend_ok);
    Ok(ConvergenceReport {
        scenario: sc.name.clone(),
        t: sc.t,
        scales: sc.scales.clone(),
        replicas: sc.replicas,
        seed: sc.seed,
        tol_hydro: sc.tol_hydro,
        records,
        verdicts,
        pass,
    })
}

/// Trend verdict over independent repetitions of a whole scenario.
#[derive(Clone, Debug, Serialize)]
pub struct ScheduleReport {
    /// full report of the first (primary) schedule
    pub primary: ConvergenceReport,
    /// per observation point: fraction of schedules whose mean error at
    /// the largest scale is at most the mean error at the smallest scale
    pub trend_fractions: Vec<f64>,
    pub schedules: usize,
    pub pass: bool,
}

/// Runs `schedules` independent repetitions of the scenario (fresh clock
/// seed schedules, same replica count) and demands a nonincreasing error
/// trend in at least 90% of them, together with the primary schedule's
/// final-error threshold.
pub fn run_scenario_schedules(
    sc: &Scenario,
    g: &GTable,
    b0: &RadialTable,
    schedules: usize,
) -> Result<ScheduleReport, Error> {
    assert!(schedules >= 1);
    let mut reports = Vec::with_capacity(schedules);
    for s in 0..schedules {
        let mut sub = sc.clone();
        sub.seed = rng::derive(sc.seed, "schedule", &[s as u64]);
        reports.push(run_scenario(&sub, g, b0)?);
    }
    let points = sc.observation_points.len();
    let mut trend_fractions = Vec::with_capacity(points);
    for pi in 0..points {
        let improved = reports
            .iter()
            .filter(|rep| {
                let errs: Vec<f64> = rep
                    .records
                    .iter()
                    .filter(|r| r.x == sc.observation_points[pi])
                    .map(|r| r.abs_error)
                    .collect();
                errs.last() <= errs.first()
            })
            .count();
        trend_fractions.push(improved as f64 / schedules as f64);
    }
    let primary = reports.swap_remove(0);
    let final_ok = primary.verdicts.iter().all(|v| v.final_error_ok);
    let trend_ok = trend_fractions.iter().all(|f| *f >= 0.9);
    Ok(ScheduleReport {
        primary,
        trend_fractions,
        schedules,
        pass: final_ok && trend_ok,
    })
}

/// Report of the spike counterexample run.
#[derive(Clone, Debug, Serialize)]
pub struct SpikeReport {
    pub scales: Vec<u64>,
    pub scaled_mean_at_origin: Vec<f64>,
    pub scaled_stderr: Vec<f64>,
    pub flat_prediction: f64,
    /// mean at largest n >= 1 + t g(0) - tol
    pub lower_bound_ok: bool,
    /// exceeds the flat prediction by at least 0.7 at the largest n
    pub excess_ok: bool,
    /// spike run dominates the flat run pointwise on shared clocks
    pub monotone_vs_flat_ok: bool,
    /// scaled height far from the spike at the largest n
    pub far_mean: f64,
    pub far_ok: bool,
    pub pass: bool,
}

/// The uniformity counterexample: sigma^n(0) is flat zero with one column
/// of height n at a fixed site. The macroscopic profile converges to zero,
/// yet the scaled height at the origin stays above 1 + t g(0) because the
/// spike seeds its own growth cone.
pub fn spike_scenario(
    scales: &[u64],
    t: f64,
    replicas: usize,
    seed: u64,
    g: &GTable,
    b0: &RadialTable,
    tol: f64,
) -> Result<SpikeReport, Error> {
    if g.dim != 1 {
        return Err(Error::Invalid("spike scenario is d=1".into()));
    }
    let spike_site = Site::new(vec![1]);
    let psi0 = ProfileSpec::Spike {
        site: spike_site.clone(),
        height: 1.0,
    };
    let opts = EvalOptions::default();
    let flat_prediction = eval_psi(&[0.0], t, &ProfileSpec::Flat(0.0), g, b0, &opts)?.value;
    // far observation point: outside the spike's growth cone radius t*r + 1
    let far_x = t * b0.max_radius() + 1.2;
    let mut means = Vec::new();
    let mut ses = Vec::new();
    let mut far_mean = f64::NAN;
    let mut monotone_ok = true;
    for (si, &n) in scales.iter().enumerate() {
        let horizon = n as f64 * t;
        let far_site = Site::floor_of(&[far_x], n as f64);
        let obs = far_site.norm_inf().max(2);
        let lattice = LatticeBox::for_horizon(1, obs, horizon);
        let init = discretize_profile(&psi0, n, &lattice)?;
        let flat_init = discretize_profile(&ProfileSpec::Flat(0.0), n, &lattice)?;
        let rows: Vec<(f64, f64, bool)> = (0..replicas)
            .into_par_iter()
            .map(|r| {
                let clocks = ClockField::new(rng::derive(seed, "spike", &[n, r as u64]));
                let out = sim::run(&init, &clocks, horizon)?;
                if let Some(tb) = out.report.breach {
                    return Err(Error::LightConeBreach(tb));
                }
                let flat_out = sim::run(&flat_init, &clocks, horizon)?;
                let dominated = out
                    .field
                    .heights
                    .iter()
                    .zip(&flat_out.field.heights)
                    .all(|(a, b)| a >= b);
                let at0 = out.field.get(&Site::origin(1)).unwrap().to_f64() / n as f64;
                let far = out.field.get(&far_site).unwrap().to_f64() / n as f64;
                Ok((at0, far, dominated))
            })
            .collect::<Result<_, _>>()?;
        let vals: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let (mean, se) = stats::mean_stderr(&vals);
        means.push(mean);
        ses.push(se);
        monotone_ok &= rows.iter().all(|r| r.2);
        if si == scales.len() - 1 {
            let fars: Vec<f64> = rows.iter().map(|r| r.1).collect();
            far_mean = stats::mean_stderr(&fars).0;
        }
    }
    let last = *means.last().unwrap();
    let lower_bound_ok = last >= 1.0 + flat_prediction - tol;
    let excess_ok = last - flat_prediction >= 0.7;
    let far_ok = (far_mean - flat_prediction).abs() <= tol;
    let pass = lower_bound_ok && excess_ok && monotone_ok && far_ok;
    Ok(SpikeReport {
        scales: scales.to_vec(),
        scaled_mean_at_origin: means,
        scaled_stderr: ses,
        flat_prediction,
        lower_bound_ok,
        excess_ok,
        monotone_vs_flat_ok: monotone_ok,
        far_mean,
        far_ok,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::couple_supremum;

    #[test]
    fn discretize_flat_seed_wedge() {
        let lattice = LatticeBox::new(1, 10, 10).unwrap();
        // flat zero -> all-zero heights
        let f = discretize_profile(&ProfileSpec::Flat(0.0), 8, &lattice).unwrap();
        assert!(f.heights.iter().all(|&h| h == ExtHeight::finite(0)));
        // seed -> single occupied cell at the nearest lattice point
        let f = discretize_profile(&ProfileSpec::Seed { point: vec![0.0] }, 8, &lattice).unwrap();
        assert_eq!(f.get(&Site::origin(1)), Some(ExtHeight::finite(0)));
        assert_eq!(
            f.heights.iter().filter(|&&h| h != NEG_INF).count(),
            1,
            "exactly the seed cell"
        );
        // wedge slope 1 at n=10: sigma_7 = floor(10 * -0.7) = -7
        let f = discretize_profile(&ProfileSpec::Wedge { slope: 1.0 }, 10, &lattice).unwrap();
        assert_eq!(f.get(&Site::new(vec![7])), Some(ExtHeight::finite(-7)));
        assert_eq!(f.get(&Site::new(vec![-3])), Some(ExtHeight::finite(-3)));
        // spike: flat zero plus one column of height n at site 1
        let f = discretize_profile(
            &ProfileSpec::Spike {
                site: Site::new(vec![1]),
                height: 1.0,
            },
            10,
            &lattice,
        )
        .unwrap();
        assert_eq!(f.get(&Site::new(vec![1])), Some(ExtHeight::finite(10)));
        assert_eq!(f.get(&Site::new(vec![0])), Some(ExtHeight::finite(0)));
    }

    #[test]
    fn scenario_validation() {
        let sc = Scenario {
            name: "bad".into(),
            psi0: ProfileSpec::Flat(0.0),
            t: 1.0,
            observation_points: vec![vec![0.0]],
            scales: vec![8, 8],
            replicas: 2,
            seed: 1,
            tol_hydro: 0.15,
        };
        assert!(sc.validate().is_err());
    }

    #[test]
    fn harness_supremum_decomposition_small_scale() {
        // for n <= 8 and <= 5 finite sites, sigma^n equals the max over
        // zeta^v bitwise on shared clocks
        let table = GTable::from_function(1, 0.25, 1, |x| 0.5 - x[0].abs().min(0.4));
        let psi0 = ProfileSpec::Table(table);
        let lattice = LatticeBox::new(1, 12, 12).unwrap();
        let field = discretize_profile(&psi0, 8, &lattice).unwrap();
        let finite = field.heights.iter().filter(|&&h| h != NEG_INF).count();
        assert!(finite >= 2 && finite <= 5, "got {finite} finite sites");
        for s in 0..10 {
            let rep = couple_supremum(&field, &ClockField::new(s), 4.0).unwrap();
            assert!(rep.is_clean(), "seed {s}");
        }
    }

    #[test]
    fn flow_stacking_matches_single_run() {
        // two stacked runs equal one run on the same clocks
        let lattice = LatticeBox::for_horizon(1, 2, 4.0);
        let init = discretize_profile(&ProfileSpec::Flat(0.0), 4, &lattice).unwrap();
        let clocks = ClockField::new(5);
        let direct = sim::run(&init, &clocks, 4.0).unwrap();
        let part = sim::run(&init, &clocks, 1.75).unwrap();
        let stacked = sim::run(&part.field, &clocks, 4.0).unwrap();
        assert_eq!(direct.field, stacked.field);
    }

    #[test]
    fn report_is_deterministic() {
        let g = GTable::from_function(1, 0.1, 6, |x| 2.0 - 1.5 * x[0] * x[0]);
        let b0 = RadialTable {
            directions: vec![vec![1.0], vec![-1.0]],
            radius: vec![1.0, 1.0],
            stderr: vec![0.0, 0.0],
        };
        let sc = Scenario {
            name: "det".into(),
            psi0: ProfileSpec::Seed { point: vec![0.0] },
            t: 1.0,
            observation_points: vec![vec![0.0]],
            scales: vec![4, 8],
            replicas: 4,
            seed: 99,
            tol_hydro: 5.0,
        };
        let a = run_scenario(&sc, &g, &b0).unwrap();
        let b = run_scenario(&sc, &g, &b0).unwrap();
        let ja = serde_json::to_string(&a).unwrap();
        let jb = serde_json::to_string(&b).unwrap();
        assert_eq!(ja, jb);
    }

    #[test]
    fn convergence_csv_shape() {
        let g = GTable::from_function(1, 0.1, 6, |x| 2.0 - 1.5 * x[0] * x[0]);
        let b0 = RadialTable {
            directions: vec![vec![1.0], vec![-1.0]],
            radius: vec![1.0, 1.0],
            stderr: vec![0.0, 0.0],
        };
        let sc = Scenario {
            name: "csv".into(),
            psi0: ProfileSpec::Flat(0.0),
            t: 0.5,
            observation_points: vec![vec![0.0], vec![0.5]],
            scales: vec![4, 8],
            replicas: 3,
            seed: 7,
            tol_hydro: 5.0,
        };
        let rep = run_scenario(&sc, &g, &b0).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x0,n,scaled_mean"));
        assert_eq!(text.lines().count(), 1 + 2 * 2);
    }
}
