//! Subcommand implementations: simulate, estimate, verify.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};

use bd_core::clocks::ClockField;
use bd_core::fpp::{self, RadialTable};
use bd_core::hopflax::ProfileSpec;
use bd_core::hydro::{self, Scenario};
use bd_core::lattice::{LatticeBox, Site};
use bd_core::rng;
use bd_core::shape::{self, GTable, SolveConfig};
use bd_core::sim::{self, SeedSpec, SyncConfig};
use bd_core::suites;

use crate::cache::FileCache;
use crate::config::{Config, RunParams};

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn profile_from_config(cfg: &Config, out_dir: &Path) -> Result<ProfileSpec> {
    let Some(section) = cfg.section("profile") else {
        return Ok(ProfileSpec::Flat(0.0));
    };
    let mut map: BTreeMap<String, String> = section.clone();
    // table profiles reference a CSV file; inline the text for the parser
    if map.get("kind").map(String::as_str) == Some("table") {
        if let Some(path) = map.get("path").cloned() {
            let full = out_dir.join(&path);
            let candidate = if full.exists() {
                full
            } else {
                path.clone().into()
            };
            let text = fs::read_to_string(&candidate)
                .with_context(|| format!("reading profile table {}", candidate.display()))?;
            map.insert("csv".into(), text);
        }
    }
    Ok(ProfileSpec::parse(&map)?)
}

pub fn simulate(cfg: &Config, params: &RunParams) -> Result<()> {
    let dim = params.dimension;
    let mode = cfg.get("simulate", "mode").unwrap_or("seed");
    let mut buf: Vec<u8> = Vec::new();
    match mode {
        "seed" | "profile" => {
            let horizon: f64 = cfg.num("simulate", "horizon", 5.0)?;
            if horizon < 0.0 {
                bail!("[simulate] horizon must be nonnegative");
            }
            let snapshot_times = cfg.list_f64("simulate", "snapshot_times", &[horizon])?;
            let obs_default = horizon.ceil() as i64 + 2;
            let obs: i64 = cfg.num("simulate", "observation_radius", obs_default)?;
            let lattice = LatticeBox::for_horizon(dim, obs.max(1), horizon);
            let (init, occupied_only) = if mode == "seed" {
                let coords = cfg
                    .get("simulate", "seed_site")
                    .map(|v| {
                        v.split(',')
                            .map(|s| s.trim().parse::<i64>().context("bad seed_site"))
                            .collect::<Result<Vec<i64>>>()
                    })
                    .transpose()?
                    .unwrap_or_else(|| vec![0; dim]);
                let spec = SeedSpec {
                    seed_site: Site::new(coords),
                    seed_height: cfg.num("simulate", "seed_height", 0)?,
                };
                (spec.field(lattice.clone())?, true)
            } else {
                let n: u64 = cfg.num("simulate", "scale", 8)?;
                let psi0 = profile_from_config(cfg, &params.out)?;
                (hydro::discretize_profile(&psi0, n, &lattice)?, false)
            };
            let clocks = ClockField::new(rng::derive(params.seed, "simulate", &[]));
            let mut field = init;
            let mut header = true;
            let mut times = snapshot_times;
            times.sort_by(f64::total_cmp);
            for t in times {
                let out = sim::run(&field, &clocks, t.max(field.time))?;
                field = out.field;
                field.write_csv_rows(&mut buf, header, occupied_only)?;
                header = false;
            }
        }
        "synchronous" => {
            let p: f64 = cfg.num("simulate", "p", 0.5)?;
            let steps: u64 = cfg.num("simulate", "steps", 10)?;
            let radius: i64 = cfg.num("simulate", "box_radius", 16)?;
            let lattice = LatticeBox::new(dim, radius, radius)?;
            let psi0 = profile_from_config(cfg, &params.out)?;
            let n: u64 = cfg.num("simulate", "scale", 1)?;
            let mut field = hydro::discretize_profile(&psi0, n, &lattice)?;
            let sync_seed = rng::derive(params.seed, "sync", &[]);
            let mut header = true;
            for step in 0..steps {
                // fresh sub-seed per step so single-step calls chain like
                // one multi-step run
                let (next, _) = sim::run_synchronous(
                    &field,
                    &SyncConfig::new(p, 1)?,
                    rng::derive(sync_seed, "step", &[step]),
                );
                field = next;
                field.write_csv_rows(&mut buf, header, false)?;
                header = false;
            }
        }
        other => bail!("unknown [simulate] mode {other:?}"),
    }
    write_file(&params.out.join("trajectory.csv"), &buf)?;
    println!("wrote {}", params.out.join("trajectory.csv").display());
    Ok(())
}

fn default_directions(dim: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => {
            let mut dirs = Vec::new();
            for k in 0..8 {
                let a = std::f64::consts::PI * k as f64 / 4.0;
                dirs.push(vec![a.cos(), a.sin()]);
            }
            dirs
        }
        d => {
            let mut dirs = Vec::new();
            for axis in 0..d {
                for sign in [1.0, -1.0] {
                    let mut v = vec![0.0; d];
                    v[axis] = sign;
                    dirs.push(v);
                }
            }
            dirs
        }
    }
}

fn estimate_b0_table(cfg: &Config, params: &RunParams) -> Result<RadialTable> {
    let dim = params.dimension;
    let (n_def, reps_def) = if dim == 1 { (200, 100) } else { (24, 60) };
    let n: u64 = cfg.num("estimate", "b0_n", n_def)?;
    let replicas: usize = cfg.num("estimate", "b0_replicas", reps_def)?;
    Ok(fpp::estimate_b0(
        &default_directions(dim),
        n,
        replicas,
        rng::derive(params.seed, "b0", &[]),
    )?)
}

pub fn estimate(cfg: &Config, params: &RunParams) -> Result<()> {
    let dim = params.dimension;
    let targets: Vec<String> = cfg
        .get("estimate", "targets")
        .unwrap_or("mu,b0,g,f")
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut b0_table: Option<RadialTable> = None;

    if targets.iter().any(|t| t == "mu") {
        let x = cfg.list_f64("estimate", "mu_x", &{
            let mut v = vec![0.0; dim];
            v[0] = 1.0;
            v
        })?;
        let n: u64 = cfg.num("estimate", "mu_n", 200)?;
        let replicas: usize = cfg.num("estimate", "mu_replicas", 100)?;
        let (mean, se) = fpp::estimate_mu(&x, n, replicas, rng::derive(params.seed, "mu", &[]))?;
        let mut buf = Vec::new();
        for a in 0..dim {
            write!(buf, "x{a},")?;
        }
        writeln!(buf, "n,replicas,mu,stderr")?;
        for c in &x {
            write!(buf, "{c},")?;
        }
        writeln!(buf, "{n},{replicas},{mean},{se}")?;
        write_file(&params.out.join("mu.csv"), &buf)?;
        println!("mu({x:?}) = {mean:.4} +- {se:.4}");
    }

    if targets.iter().any(|t| t == "b0") {
        let table = estimate_b0_table(cfg, params)?;
        let mut buf = Vec::new();
        table.write_csv(&mut buf)?;
        write_file(&params.out.join("b0.csv"), &buf)?;
        println!(
            "B0 radius range [{:.4}, {:.4}]",
            table.min_radius(),
            table.max_radius()
        );
        b0_table = Some(table);
    }

    if targets.iter().any(|t| t == "g") {
        if dim != 1 {
            bail!("g table estimation is wired for d=1; configure [run] dimension = 1");
        }
        let b0 = match b0_table.take() {
            Some(t) => t,
            None => estimate_b0_table(cfg, params)?,
        };
        let r_hat = b0.min_radius();
        let step: f64 = cfg.num("estimate", "g_step", 0.1 * r_hat)?;
        let half: usize = cfg.num("estimate", "g_half", 9)?;
        let n: u64 = cfg.num("estimate", "g_n", 56)?;
        let solve = SolveConfig {
            replicas: cfg.num("estimate", "g_replicas", 100)?,
            max_replicas: cfg.num("estimate", "g_max_replicas", 800)?,
            tol: cfg.num("estimate", "g_tol", 0.02)?,
            b_max: cfg.num("estimate", "g_b_max", 2.0)?,
        };
        let cache = FileCache::open(&params.out.join("cache.csv"))?;
        let (table, roots) = shape::build_gtable(
            1,
            step,
            half,
            n,
            &solve,
            rng::derive(params.seed, "gtable", &[]),
            &cache,
        )?;
        let mut buf = Vec::new();
        table.write_csv(&mut buf)?;
        write_file(&params.out.join("g.csv"), &buf)?;
        write_file(
            &params.out.join("g_roots.json"),
            serde_json::to_string_pretty(&roots)?.as_bytes(),
        )?;
        let concavity = table.concavity_checks();
        let dented = concavity.iter().filter(|c| !c.pass).count();
        if dented > 0 {
            println!("warning: {dented} concavity triple(s) out of tolerance");
        }
        write_file(
            &params.out.join("g_concavity.json"),
            serde_json::to_string_pretty(&concavity)?.as_bytes(),
        )?;
        // finite-n drift diagnostic at the origin: estimates at n and 2n
        let diag = shape::richardson_gamma(
            &vec![0.0; 1],
            table.max_g(),
            n,
            solve.replicas,
            rng::derive(params.seed, "richardson", &[]),
            &cache,
        )?;
        write_file(
            &params.out.join("gamma_richardson.json"),
            serde_json::to_string_pretty(&diag)?.as_bytes(),
        )?;
        println!(
            "g table: {} points, g(0) ~ {:.4}; drift at 2n {:+.4}; cache {} samples",
            roots.len(),
            table.max_g(),
            diag.drift,
            cache.len()
        );
    }

    if targets.iter().any(|t| t == "f") {
        let g_path = params.out.join(
            cfg.get("estimate", "g_table")
                .unwrap_or("g.csv"),
        );
        if !g_path.exists() {
            bail!(
                "velocity table needs the shape table first: missing {} (run estimate with targets = g)",
                g_path.display()
            );
        }
        let table = GTable::from_csv(&fs::read_to_string(&g_path)?)?.symmetrize();
        let u_max: f64 = cfg.num("estimate", "f_u_max", 8.0)?;
        let u_step: f64 = cfg.num("estimate", "f_u_step", 0.5)?;
        let k = (u_max / u_step).round() as i64;
        let us: Vec<Vec<f64>> = (-k..=k).map(|j| vec![j as f64 * u_step]).collect();
        let f = shape::legendre_f(&table, &us)?;
        let mut buf = Vec::new();
        f.write_csv(&mut buf)?;
        write_file(&params.out.join("f.csv"), &buf)?;
        if dim == 1 && u_max >= 8.0 {
            let rep = shape::asymptote_check_d1(&f)?;
            write_file(
                &params.out.join("f_asymptote.json"),
                serde_json::to_string_pretty(&rep)?.as_bytes(),
            )?;
        }
        println!("f table: {} slopes", f.f.len());
    }
    Ok(())
}

fn load_or_estimate_shape(
    cfg: &Config,
    params: &RunParams,
) -> Result<(GTable, RadialTable)> {
    let b0 = match cfg.get("verify", "b0_table") {
        Some(path) => {
            let text = fs::read_to_string(params.out.join(path))
                .or_else(|_| fs::read_to_string(path))
                .with_context(|| format!("reading B0 table {path}"))?;
            parse_radial_csv(&text)?
        }
        None => estimate_b0_table(cfg, params)?,
    };
    let g = match cfg.get("verify", "g_table") {
        Some(path) => {
            let text = fs::read_to_string(params.out.join(path))
                .or_else(|_| fs::read_to_string(path))
                .with_context(|| format!("reading g table {path}"))?;
            GTable::from_csv(&text)?
        }
        None => {
            let solve = SolveConfig {
                replicas: cfg.num("verify", "g_replicas", 100)?,
                max_replicas: cfg.num("verify", "g_max_replicas", 800)?,
                tol: cfg.num("verify", "g_tol", 0.02)?,
                b_max: 2.0,
            };
            let n: u64 = cfg.num("verify", "g_n", 56)?;
            let half: usize = cfg.num("verify", "g_half", 6)?;
            let cache = FileCache::open(&params.out.join("cache.csv"))?;
            let (table, _) = shape::build_gtable(
                1,
                0.1 * b0.min_radius(),
                half,
                n,
                &solve,
                rng::derive(params.seed, "verify-g", &[]),
                &cache,
            )?;
            table
        }
    };
    Ok((g, b0))
}

fn parse_radial_csv(text: &str) -> Result<RadialTable> {
    let mut directions = Vec::new();
    let mut radius = Vec::new();
    let mut stderr = Vec::new();
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().context("empty B0 table")?;
    let dim = header.split(',').take_while(|c| c.starts_with('d')).count();
    if dim == 0 {
        bail!("bad B0 header: {header}");
    }
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < dim + 2 {
            bail!("short B0 row: {line}");
        }
        let nums: Vec<f64> = f
            .iter()
            .map(|s| s.trim().parse::<f64>().context("bad B0 number"))
            .collect::<Result<_>>()?;
        let r = nums[dim];
        if !(r > 0.0) {
            bail!("B0 radius must be positive, got {r}");
        }
        directions.push(nums[..dim].to_vec());
        radius.push(r);
        stderr.push(nums[dim + 1]);
    }
    Ok(RadialTable {
        directions,
        radius,
        stderr,
    })
}

pub fn verify(cfg: &Config, params: &RunParams) -> Result<i32> {
    if params.dimension != 1 {
        bail!("the verification suites run in d=1; set [run] dimension = 1");
    }
    let suites_requested: Vec<String> = cfg
        .get("verify", "suite")
        .unwrap_or("couplings,bridge,grid,semigroup,hydro,spike")
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let verify_dir = params.out.join("verify");
    fs::create_dir_all(&verify_dir)?;
    let mut checks: Vec<suites::SuiteCheck> = Vec::new();
    let seed = params.seed;

    // tables load (and validate) before any simulation spends time
    let need_shape = suites_requested
        .iter()
        .any(|s| s == "hydro" || s == "spike");
    let shape_tables = if need_shape {
        Some(load_or_estimate_shape(cfg, params)?)
    } else {
        None
    };

    for suite in &suites_requested {
        match suite.as_str() {
            "couplings" => {
                checks.push(suites::supremum_suite(
                    5,
                    5,
                    cfg.num("verify", "coupling_seeds", 50)?,
                    5.0,
                    rng::derive(seed, "v-sup", &[]),
                )?);
                checks.push(suites::monotone_suite(
                    5,
                    cfg.num("verify", "coupling_pairs", 100)?,
                    5.0,
                    rng::derive(seed, "v-mono", &[]),
                )?);
            }
            "bridge" => {
                let sites: Vec<Site> = cfg
                    .list_u64("verify", "bridge_sites", &[1, 2, 3, 5])?
                    .into_iter()
                    .map(|u| Site::new(vec![u as i64]))
                    .collect();
                let replicas: usize = cfg.num("verify", "bridge_replicas", 500)?;
                let rep = fpp::match_bd_fpp(&sites, replicas, rng::derive(seed, "v-bridge", &[]))?;
                let detail = rep
                    .sites
                    .iter()
                    .map(|s| format!("{}: p={:.3}", s.site, s.p_adjusted))
                    .collect::<Vec<_>>()
                    .join(", ");
                checks.push(suites::SuiteCheck {
                    name: "bd/fpp distributional bridge".into(),
                    pass: rep.pass,
                    detail,
                });
            }
            "grid" => {
                let rep = suites::grid_suite(
                    cfg.num("verify", "grid_max", 6)?,
                    cfg.num("verify", "grid_replicas", 300)?,
                    cfg.num("verify", "grid_directed_replicas", 200)?,
                    rng::derive(seed, "v-grid", &[]),
                )?;
                write_file(
                    &verify_dir.join("grid_report.json"),
                    serde_json::to_string_pretty(&rep)?.as_bytes(),
                )?;
                checks.push(suites::SuiteCheck {
                    name: "passage-time inequality grid".into(),
                    pass: rep.pass,
                    detail: format!(
                        "{} cells; subadd {} pairs; gamma(0,0) = {}",
                        rep.cells,
                        rep.subadd_checks.len(),
                        rep.gamma_origin
                    ),
                });
            }
            "semigroup" => checks.push(suites::semigroup_suite(0.7)?),
            "hydro" => {
                let (g, b0) = shape_tables.as_ref().unwrap();
                let scales = cfg.list_u64("verify", "hydro_scales", &[8, 16, 32, 64])?;
                let replicas: usize = cfg.num("verify", "hydro_replicas", 30)?;
                let t: f64 = cfg.num("verify", "hydro_t", 1.0)?;
                let tol: f64 = cfg.num("verify", "tol_hydro", 0.15)?;
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
                        t,
                        observation_points: points,
                        scales: scales.clone(),
                        replicas,
                        seed: rng::derive(seed, "v-hydro", &[name.len() as u64]),
                        tol_hydro: tol,
                    };
                    let schedules: usize = cfg.num("verify", "hydro_schedules", 10)?;
                    let rep = hydro::run_scenario_schedules(&sc, g, b0, schedules)?;
                    let mut buf = Vec::new();
                    rep.primary.write_csv(&mut buf)?;
                    write_file(&verify_dir.join(format!("hydro_{name}.csv")), &buf)?;
                    write_file(
                        &verify_dir.join(format!("hydro_{name}.json")),
                        serde_json::to_string_pretty(&rep)?.as_bytes(),
                    )?;
                    let worst = rep
                        .primary
                        .verdicts
                        .iter()
                        .map(|v| v.final_error)
                        .fold(0.0f64, f64::max);
                    checks.push(suites::SuiteCheck {
                        name: format!("hydrodynamic convergence ({name})"),
                        pass: rep.pass,
                        detail: format!(
                            "worst final error {worst:.4} (tol {tol}); trend fractions {:?}",
                            rep.trend_fractions
                        ),
                    });
                }
            }
            "spike" => {
                let (g, b0) = shape_tables.as_ref().unwrap();
                let scales = cfg.list_u64("verify", "spike_scales", &[16, 64])?;
                let replicas: usize = cfg.num("verify", "spike_replicas", 30)?;
                let rep = hydro::spike_scenario(
                    &scales,
                    cfg.num("verify", "hydro_t", 1.0)?,
                    replicas,
                    rng::derive(seed, "v-spike", &[]),
                    g,
                    b0,
                    cfg.num("verify", "tol_hydro", 0.15)?,
                )?;
                write_file(
                    &verify_dir.join("spike.json"),
                    serde_json::to_string_pretty(&rep)?.as_bytes(),
                )?;
                checks.push(suites::SuiteCheck {
                    name: "spike counterexample".into(),
                    pass: rep.pass,
                    detail: format!(
                        "scaled mean {:.4} vs flat prediction {:.4}",
                        rep.scaled_mean_at_origin.last().unwrap(),
                        rep.flat_prediction
                    ),
                });
            }
            other => bail!("unknown verify suite {other:?}"),
        }
    }

    let all_pass = checks.iter().all(|c| c.pass);
    let summary = serde_json::json!({
        "seed": seed,
        "checks": checks,
        "pass": all_pass,
    });
    write_file(
        &params.out.join("verify_report.json"),
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )?;
    for c in &checks {
        println!(
            "[{}] {} — {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    Ok(if all_pass { 0 } else { 1 })
}
