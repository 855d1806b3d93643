//! Acceptance suite: one pass/fail line per criterion, each pinned to its
//! stated tolerance and runtime budget. The final criterion re-runs the
//! whole pipeline from the same global seed and demands bit-identical
//! artifacts.
//!
//! Run with: cargo test --release --test acceptance -- --nocapture

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use bd_core::fpp::{self, RadialTable, WeightField};
use bd_core::hopflax::ProfileSpec;
use bd_core::hydro::{self, Scenario};
use bd_core::lattice::{LatticeBox, Site};
use bd_core::rng;
use bd_core::shape::{self, GTable, SolveConfig};
use bd_core::stats;
use bd_core::suites;

const ACCEPT_SEED: u64 = 20241;

struct Criterion {
    id: usize,
    name: &'static str,
    limit: Duration,
    pass: bool,
    detail: String,
    artifact: String,
    elapsed: Duration,
}

fn timed<F: FnOnce() -> (bool, String, String)>(
    id: usize,
    name: &'static str,
    limit_s: u64,
    f: F,
) -> Criterion {
    let t0 = Instant::now();
    let (pass, detail, artifact) = f();
    Criterion {
        id,
        name,
        limit: Duration::from_secs(limit_s),
        pass,
        detail,
        artifact,
        elapsed: t0.elapsed(),
    }
}

fn fnum(v: f64) -> String {
    format!("{v:?}")
}

// criterion 1: exact supremum coupling, zero tolerance
fn c01(seed: u64) -> Criterion {
    timed(1, "exact supremum coupling identity", 10, || {
        let check = suites::supremum_suite(5, 5, 50, 5.0, rng::derive(seed, "c01", &[])).unwrap();
        (check.pass, check.detail.clone(), check.detail)
    })
}

// criterion 2: monotone coupling over 100 random ordered pairs
fn c02(seed: u64) -> Criterion {
    timed(2, "monotone coupling order preservation", 10, || {
        let check = suites::monotone_suite(5, 100, 5.0, rng::derive(seed, "c02", &[])).unwrap();
        (check.pass, check.detail.clone(), check.detail)
    })
}

// criterion 3: BD/FPP distributional bridge
fn c03(seed: u64) -> Criterion {
    timed(3, "bd/fpp distributional bridge (KS + means)", 120, || {
        let sites: Vec<Site> = [1i64, 2, 3, 5]
            .iter()
            .map(|&u| Site::new(vec![u]))
            .collect();
        let rep = fpp::match_bd_fpp(&sites, 500, rng::derive(seed, "c03", &[])).unwrap();
        let mut art = String::new();
        let mut detail = String::new();
        for s in &rep.sites {
            let _ = write!(
                art,
                "{}:D={},p={},mbd={},mfpp={};",
                s.site,
                fnum(s.ks_d),
                fnum(s.p_adjusted),
                fnum(s.mean_bd),
                fnum(s.mean_fpp)
            );
            let _ = write!(detail, "{} p_adj={:.3} ", s.site, s.p_adjusted);
        }
        (rep.pass, detail, art)
    })
}

// criterion 4: d=1 percolation constant mu(1) = 1
fn c04(seed: u64) -> Criterion {
    timed(4, "d=1 percolation constant mu(1)", 60, || {
        let (mean, se) =
            fpp::estimate_mu(&[1.0], 200, 100, rng::derive(seed, "c04", &[])).unwrap();
        let pass = (0.97..=1.03).contains(&mean);
        (
            pass,
            format!("mu_hat = {mean:.4} +- {se:.4}"),
            format!("{},{}", fnum(mean), fnum(se)),
        )
    })
}

// criterion 5: shortest-path search vs exhaustive enumeration, all pairs
fn c05(seed: u64) -> Criterion {
    timed(5, "shortest-path exhaustive oracle", 30, || {
        let mut worst: f64 = 0.0;
        let mut pairs = 0usize;
        for s in 0..20u64 {
            let b1 = LatticeBox::new(1, 2, 2).unwrap();
            let w1 = WeightField::sample(b1.clone(), rng::derive(seed, "c05-1", &[s]));
            let b2 = LatticeBox::new(2, 1, 1).unwrap();
            let w2 = WeightField::sample(b2.clone(), rng::derive(seed, "c05-2", &[s]));
            for (bx, w) in [(&b1, &w1), (&b2, &w2)] {
                for a in 0..bx.len() {
                    let table = fpp::passage_times(w, &bx.site_of(a)).unwrap();
                    for b in 0..bx.len() {
                        let oracle =
                            fpp::exhaustive_passage_time(w, &bx.site_of(a), &bx.site_of(b))
                                .unwrap();
                        worst = worst.max((table.times[b] - oracle).abs());
                        pairs += 1;
                    }
                }
            }
        }
        (
            worst <= 1e-12,
            format!("{pairs} pairs, worst |diff| = {worst:.2e}"),
            format!("{pairs},{}", fnum(worst)),
        )
    })
}

// criteria 6 and 12 share one grid computation (300 passage replicas per
// cell; 200 directed replicas)
fn c06_c12(seed: u64) -> (Criterion, Criterion) {
    let t0 = Instant::now();
    let rep = suites::grid_suite(6, 300, 200, rng::derive(seed, "c06", &[])).unwrap();
    let elapsed = t0.elapsed();
    let summarize = |checks: &[shape::InequalityCheck]| -> (usize, usize, String) {
        let bad = checks.iter().filter(|c| !c.pass).count();
        let mut art = String::new();
        for c in checks {
            let _ = write!(art, "{},{};", fnum(c.lhs), fnum(c.rhs));
        }
        (checks.len(), bad, art)
    };
    let (nb, bb, ab) = summarize(&rep.bound_checks);
    let (ns, bs, as_) = summarize(&rep.subadd_checks);
    let (nl, bl, al) = summarize(&rep.lipschitz_checks);
    let pass6 = rep.gamma_origin == 0.0 && bb == 0 && bs == 0 && bl == 0;
    let c6 = Criterion {
        id: 6,
        name: "subadditivity and bounds grid",
        limit: Duration::from_secs(300),
        pass: pass6,
        detail: format!(
            "bounds {bb}/{nb} subadd {bs}/{ns} lipschitz {bl}/{nl} fail; gamma(0,0)={}",
            rep.gamma_origin
        ),
        artifact: format!("{}|{ab}|{as_}|{al}", fnum(rep.gamma_origin)),
        elapsed,
    };
    let (nd, bd, ad) = summarize(&rep.domination_checks);
    let c12 = Criterion {
        id: 12,
        name: "directed-model domination",
        limit: Duration::from_secs(300),
        pass: bd == 0,
        detail: format!("domination {bd}/{nd} fail"),
        artifact: ad,
        elapsed,
    };
    (c6, c12)
}

// criterion 7: solve_g self-consistency, symmetry, concavity
fn c07(seed: u64) -> Criterion {
    timed(7, "shape root self-consistency and structure", 900, || {
        let xs = [-0.4f64, -0.2, 0.0, 0.2, 0.4];
        let cfg = SolveConfig {
            replicas: 100,
            max_replicas: 800,
            tol: 0.02,
            b_max: 4.0,
        };
        let roots: Vec<shape::GRoot> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                shape::solve_g_auto(
                    &[*x],
                    40,
                    &cfg,
                    rng::derive(seed, "c07", &[i as u64]),
                    &shape::NoCache,
                )
                .unwrap()
            })
            .collect();
        let mut pass = true;
        let mut detail = String::new();
        let mut art = String::new();
        for r in &roots {
            let gam = r.gamma_at_root.mean;
            let ok = (gam - 1.0).abs() <= 0.08;
            pass &= ok;
            let _ = write!(detail, "g({})={:.3},gam={:.3} ", r.x[0], r.g, gam);
            let _ = write!(art, "{},{},{};", fnum(r.x[0]), fnum(r.g), fnum(gam));
        }
        // symmetry on the two mirrored pairs
        let se = |r: &shape::GRoot| r.stderr;
        for (a, b) in [(0usize, 4usize), (1, 3)] {
            let diff = (roots[a].g - roots[b].g).abs();
            let slack = 3.0 * stats::combined_stderr(&[se(&roots[a]), se(&roots[b])]);
            if diff > slack {
                pass = false;
                let _ = write!(detail, "SYMMETRY FAIL {diff:.4}>{slack:.4} ");
            }
        }
        // midpoint concavity on all equally spaced triples
        for (a, m, b) in [(0usize, 1usize, 2usize), (1, 2, 3), (2, 3, 4), (0, 2, 4)] {
            let mid = roots[m].g;
            let avg = 0.5 * (roots[a].g + roots[b].g);
            let slack = 3.0
                * stats::combined_stderr(&[
                    se(&roots[m]),
                    0.5 * se(&roots[a]),
                    0.5 * se(&roots[b]),
                ]);
            if mid < avg - slack {
                pass = false;
                let _ = write!(detail, "CONCAVITY FAIL at {} ", roots[m].x[0]);
            }
        }
        (pass, detail, art)
    })
}

// criterion 8: Legendre conjugacy against the closed form
fn c08(_seed: u64) -> Criterion {
    timed(8, "legendre conjugacy oracle", 5, || {
        let g = GTable::from_function(1, 0.05, 20, |x| 1.0 - x[0] * x[0]).symmetrize();
        let us: Vec<Vec<f64>> = (-40..=40).map(|k| vec![k as f64 * 0.05]).collect();
        let f = shape::legendre_f(&g, &us).unwrap();
        let mut worst: f64 = 0.0;
        for (u, fv) in f.us.iter().zip(&f.f) {
            worst = worst.max((fv - (u[0] * u[0] / 4.0 + 1.0)).abs());
        }
        // evenness exactly after symmetrization
        let mut even = true;
        let m = f.f.len();
        for k in 0..m {
            if f.f[k] != f.f[m - 1 - k] {
                even = false;
            }
        }
        // convexity on the grid: second differences within float round-off
        let mut convex = true;
        for w in f.f.windows(3) {
            if w[2] - 2.0 * w[1] + w[0] < -1e-12 {
                convex = false;
            }
        }
        let pass = worst <= 0.02 && even && convex;
        let mut art = String::new();
        for v in &f.f {
            let _ = write!(art, "{},", fnum(*v));
        }
        (
            pass,
            format!("max |f - closed form| = {worst:.4}, even={even}, convex={convex}"),
            art,
        )
    })
}

// criterion 9: semigroup residual contraction
fn c09(_seed: u64) -> Criterion {
    timed(9, "hopf-lax semigroup contraction", 60, || {
        let check = suites::semigroup_suite(0.7).unwrap();
        (check.pass, check.detail.clone(), check.detail)
    })
}

struct SharedTables {
    g: GTable,
    b0: RadialTable,
    artifact: String,
    elapsed: Duration,
}

// estimated shape tables feeding criteria 10 and 11
fn shared_tables(seed: u64) -> SharedTables {
    let t0 = Instant::now();
    let b0 = fpp::estimate_b0(
        &[vec![1.0], vec![-1.0]],
        200,
        100,
        rng::derive(seed, "tables-b0", &[]),
    )
    .unwrap();
    let cfg = SolveConfig {
        replicas: 100,
        max_replicas: 800,
        tol: 0.02,
        b_max: 4.0,
    };
    let (g, _) = shape::build_gtable(
        1,
        0.1 * b0.min_radius(),
        6,
        56,
        &cfg,
        rng::derive(seed, "tables-g", &[]),
        &shape::NoCache,
    )
    .unwrap();
    let mut artifact = String::new();
    let mut gcsv = Vec::new();
    g.write_csv(&mut gcsv).unwrap();
    artifact.push_str(&String::from_utf8(gcsv).unwrap());
    let mut bcsv = Vec::new();
    b0.write_csv(&mut bcsv).unwrap();
    artifact.push_str(&String::from_utf8(bcsv).unwrap());
    SharedTables {
        g,
        b0,
        artifact,
        elapsed: t0.elapsed(),
    }
}

// criterion 10: hydrodynamic convergence for seed and flat profiles.
// Final error at n = 64 within tol on the primary schedule; nonincreasing
// error trend (n = 64 vs n = 8) in at least 90% of independent replicate
// schedules, 30 replicas each.
fn c10(seed: u64, tables: &SharedTables) -> Criterion {
    timed(10, "hydrodynamic convergence (seed, flat)", 1200, || {
        let mut pass = true;
        let mut detail = String::new();
        let mut art = String::new();
        for (name, psi0, points) in [
            (
                "seed",
                ProfileSpec::Seed { point: vec![0.0] },
                vec![vec![0.0], vec![0.25]],
            ),
            ("flat", ProfileSpec::Flat(0.0), vec![vec![0.0], vec![0.5]]),
        ] {
            let sc = Scenario {
                name: name.into(),
                psi0,
                t: 1.0,
                observation_points: points,
                scales: vec![8, 16, 32, 64],
                replicas: 30,
                seed: rng::derive(seed, "c10", &[name.len() as u64]),
                tol_hydro: 0.15,
            };
            let rep = hydro::run_scenario_schedules(&sc, &tables.g, &tables.b0, 10).unwrap();
            for (v, frac) in rep.primary.verdicts.iter().zip(&rep.trend_fractions) {
                let ok = v.final_error_ok && *frac >= 0.9;
                pass &= ok;
                let _ = write!(
                    detail,
                    "{name}@{:?}: err={:.3} sched_frac={:.2} rep_frac={:.2} ",
                    v.x, v.final_error, frac, v.replica_trend_fraction
                );
            }
            for r in &rep.primary.records {
                let _ = write!(
                    art,
                    "{name},{},{},{},{};",
                    fnum(r.x[0]),
                    r.n,
                    fnum(r.scaled_mean),
                    fnum(r.prediction)
                );
            }
            for f in &rep.trend_fractions {
                let _ = write!(art, "{},", fnum(*f));
            }
        }
        (pass, detail, art)
    })
}

// criterion 11: the spike counterexample
fn c11(seed: u64, tables: &SharedTables) -> Criterion {
    timed(11, "spike counterexample lower bound", 300, || {
        let rep = hydro::spike_scenario(
            &[16, 64],
            1.0,
            30,
            rng::derive(seed, "c11", &[]),
            &tables.g,
            &tables.b0,
            0.15,
        )
        .unwrap();
        let last = *rep.scaled_mean_at_origin.last().unwrap();
        let detail = format!(
            "scaled mean {:.4} vs 1 + g(0) - tol = {:.4}; excess {:.3}; monotone {}; far {:.3}",
            last,
            1.0 + rep.flat_prediction - 0.15,
            last - rep.flat_prediction,
            rep.monotone_vs_flat_ok,
            rep.far_mean
        );
        let art = format!(
            "{},{},{},{}",
            fnum(last),
            fnum(rep.flat_prediction),
            fnum(rep.far_mean),
            rep.monotone_vs_flat_ok
        );
        (rep.pass, detail, art)
    })
}

fn run_all(seed: u64) -> (Vec<Criterion>, String) {
    let mut out = Vec::new();
    out.push(c01(seed));
    out.push(c02(seed));
    out.push(c03(seed));
    out.push(c04(seed));
    out.push(c05(seed));
    let (c6, c12) = c06_c12(seed);
    out.push(c6);
    out.push(c07(seed));
    out.push(c08(seed));
    out.push(c09(seed));
    let tables = shared_tables(seed);
    out.push(c10(seed, &tables));
    out.push(c11(seed, &tables));
    out.push(c12);
    out.sort_by_key(|c| c.id);
    (out, tables.artifact + &format!("[tables {:?}]", tables.elapsed))
}

#[test]
fn acceptance() {
    let whole = Instant::now();
    let (first, tables_art) = run_all(ACCEPT_SEED);
    let mut all_pass = true;
    for c in &first {
        println!(
            "criterion {:02} [{}] {} ({:.2?}, limit {:?})",
            c.id,
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.elapsed,
            c.limit
        );
        println!("             {}", c.detail);
        all_pass &= c.pass;
        assert!(
            c.elapsed <= c.limit,
            "criterion {} exceeded its runtime budget: {:?} > {:?}",
            c.id,
            c.elapsed,
            c.limit
        );
    }
    // criterion 13: bit-identical artifacts across two executions
    let t13 = Instant::now();
    let (second, tables_art2) = run_all(ACCEPT_SEED);
    let mut identical = tables_art.split('[').next() == tables_art2.split('[').next();
    for (a, b) in first.iter().zip(&second) {
        if a.artifact != b.artifact || a.pass != b.pass {
            identical = false;
            println!("criterion 13: artifact mismatch at criterion {}", a.id);
        }
    }
    println!(
        "criterion 13 [determinism across executions] {} ({:.2?})",
        if identical { "PASS" } else { "FAIL" },
        t13.elapsed()
    );
    println!("acceptance total {:.2?}", whole.elapsed());
    assert!(all_pass, "a criterion failed; see lines above");
    assert!(identical, "artifacts differ across executions");
}
