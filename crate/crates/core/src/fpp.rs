//! First-passage site percolation with Exp(1) waiting times on the sites.
//!
//! The passage time of a path charges the weight of every site the path
//! enters; the start site's weight is excluded. T(u,v) is the infimum over
//! nearest-neighbor paths, computed exactly by Dijkstra since weights are
//! positive. The same machinery covers the directed layered variant, whose
//! admissible steps are lateral moves within a layer or single steps up.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::clocks::ClockField;
use crate::error::Error;
use crate::lattice::{LatticeBox, Site};
use crate::rng;
use crate::sim::{self, SeedSpec};
use crate::stats;

/// Independent Exp(1) waiting time attached to every site of a box;
/// reproducible from the seed.
#[derive(Clone, Debug)]
pub struct WeightField {
    pub lattice: LatticeBox,
    pub seed: u64,
    weights: Vec<f64>,
}

/// Site-and-level weight used by both `WeightField` (level 0) and
/// `CellWeightField`, so the directed model shares its bottom layer with
/// the undirected one when the seeds agree.
fn cell_weight(seed: u64, site: &Site, level: i64) -> f64 {
    let base = rng::derive(seed, "weights", &[]);
    let words: Vec<u64> = site
        .coords
        .iter()
        .map(|&c| c as u64)
        .chain(std::iter::once(level as u64))
        .collect();
    -rng::stream_uniform(rng::mix_words(base, &words), 0).ln()
}

impl WeightField {
    pub fn sample(lattice: LatticeBox, seed: u64) -> Self {
        let weights = (0..lattice.len())
            .map(|i| cell_weight(seed, &lattice.site_of(i), 0))
            .collect();
        WeightField {
            lattice,
            seed,
            weights,
        }
    }

    /// Deterministic field with every weight equal to `w`, for oracles.
    pub fn constant(lattice: LatticeBox, w: f64) -> Self {
        assert!(w > 0.0);
        let n = lattice.len();
        WeightField {
            lattice,
            seed: 0,
            weights: vec![w; n],
        }
    }

    pub fn weight(&self, idx: usize) -> f64 {
        self.weights[idx]
    }
}

/// Passage times from one origin to every site of the box.
#[derive(Clone, Debug)]
pub struct PassageTable {
    pub lattice: LatticeBox,
    pub origin: Site,
    pub times: Vec<f64>,
}

impl PassageTable {
    pub fn time_to(&self, u: &Site) -> Option<f64> {
        self.lattice.index_of(u).map(|i| self.times[i])
    }

    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        for i in 0..self.lattice.dim {
            write!(w, "u{i},")?;
        }
        writeln!(w, "time")?;
        for idx in 0..self.times.len() {
            let s = self.lattice.site_of(idx);
            for c in &s.coords {
                write!(w, "{c},")?;
            }
            writeln!(w, "{}", self.times[idx])?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct QueueKey {
    dist: f64,
    node: usize,
}

impl PartialEq for QueueKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for QueueKey {}
impl PartialOrd for QueueKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueueKey {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Exact passage times T(origin, u) for every u in the box: Dijkstra where
/// entering a site costs that site's weight and the origin's own weight is
/// never charged.
pub fn passage_times(w: &WeightField, origin: &Site) -> Result<PassageTable, Error> {
    let lattice = w.lattice.clone();
    let start = lattice
        .index_of(origin)
        .ok_or_else(|| Error::OutOfBox(origin.to_string()))?;
    let n = lattice.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[start] = 0.0;
    heap.push(QueueKey {
        dist: 0.0,
        node: start,
    });
    while let Some(QueueKey { dist: d, node }) = heap.pop() {
        if settled[node] {
            continue;
        }
        settled[node] = true;
        for nb in lattice.neighbors(node) {
            let nd = d + w.weight(nb);
            if nd < dist[nb] {
                dist[nb] = nd;
                heap.push(QueueKey { dist: nd, node: nb });
            }
        }
    }
    Ok(PassageTable {
        lattice,
        origin: origin.clone(),
        times: dist,
    })
}

/// Brute-force reference: minimum passage time over all self-avoiding
/// nearest-neighbor paths, by depth-first enumeration. Exponential in the
/// box size; for validating the shortest-path search on tiny boxes only.
pub fn exhaustive_passage_time(w: &WeightField, origin: &Site, target: &Site) -> Option<f64> {
    let lattice = &w.lattice;
    let start = lattice.index_of(origin)?;
    let goal = lattice.index_of(target)?;
    assert!(lattice.len() <= 64, "exhaustive oracle is for tiny boxes");
    fn dfs(
        lattice: &LatticeBox,
        w: &WeightField,
        node: usize,
        goal: usize,
        visited: &mut Vec<bool>,
        acc: f64,
        best: &mut f64,
    ) {
        if node == goal {
            if acc < *best {
                *best = acc;
            }
            return;
        }
        if acc >= *best {
            return;
        }
        for nb in lattice.neighbors(node) {
            if !visited[nb] {
                visited[nb] = true;
                dfs(lattice, w, nb, goal, visited, acc + w.weight(nb), best);
                visited[nb] = false;
            }
        }
    }
    let mut visited = vec![false; lattice.len()];
    visited[start] = true;
    let mut best = f64::INFINITY;
    dfs(lattice, w, start, goal, &mut visited, 0.0, &mut best);
    if best.is_finite() {
        Some(best)
    } else {
        None
    }
}

/// Cluster at time t: {u : T(origin, u) <= t}.
pub fn cluster_at(table: &PassageTable, t: f64) -> Vec<Site> {
    assert!(t >= 0.0);
    (0..table.times.len())
        .filter(|&i| table.times[i] <= t)
        .map(|i| table.lattice.site_of(i))
        .collect()
}

fn mu_box(dim: usize, target: &Site) -> LatticeBox {
    let r = (1.25 * target.norm1() as f64).ceil() as i64 + 8;
    LatticeBox::new(dim, r, target.norm_inf().max(1)).unwrap()
}

/// Monte Carlo estimate of mu(x) = lim T(0,[nx])/n over independent weight
/// seeds. Returns (mean, stderr).
pub fn estimate_mu(
    x: &[f64],
    n: u64,
    replicas: usize,
    seed: u64,
) -> Result<(f64, f64), Error> {
    if replicas < 2 {
        return Err(Error::InsufficientReplicas {
            got: replicas,
            need: 2,
        });
    }
    let dim = x.len();
    let target = Site::floor_of(x, n as f64);
    if target.norm1() == 0 {
        return Ok((0.0, 0.0));
    }
    let lattice = mu_box(dim, &target);
    if !lattice.contains(&target) {
        return Err(Error::OutOfBox(target.to_string()));
    }
    let samples: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let ws = rng::derive(seed, "mu", &[n, r as u64]);
            let w = WeightField::sample(lattice.clone(), ws);
            let table = passage_times(&w, &Site::origin(dim)).unwrap();
            table.time_to(&target).unwrap() / n as f64
        })
        .collect();
    Ok(stats::mean_stderr(&samples))
}

/// Radial description of the estimated limit shape: mu(r(theta) theta) = 1,
/// so r(theta) = 1/mu(theta) by homogeneity.
#[derive(Clone, Debug)]
pub struct RadialTable {
    pub directions: Vec<Vec<f64>>,
    pub radius: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl RadialTable {
    pub fn max_radius(&self) -> f64 {
        self.radius.iter().cloned().fold(0.0, f64::max)
    }

    pub fn min_radius(&self) -> f64 {
        self.radius.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Radius bound in direction of `x` (linear interpolation over the
    /// tabulated directions for d <= 2; nearest direction above).
    pub fn radius_toward(&self, x: &[f64]) -> f64 {
        let norm: f64 = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 {
            return self.max_radius();
        }
        if x.len() == 1 {
            let want = if x[0] >= 0.0 { 1.0 } else { -1.0 };
            for (d, r) in self.directions.iter().zip(&self.radius) {
                if (d[0] - want).abs() < 1e-9 {
                    return *r;
                }
            }
            return self.min_radius();
        }
        if x.len() == 2 {
            let ang = x[1].atan2(x[0]);
            let mut best: Option<(f64, usize)> = None;
            let mut second: Option<(f64, usize)> = None;
            for (i, d) in self.directions.iter().enumerate() {
                let a = d[1].atan2(d[0]);
                let mut diff = (a - ang).abs();
                if diff > std::f64::consts::PI {
                    diff = 2.0 * std::f64::consts::PI - diff;
                }
                match best {
                    None => best = Some((diff, i)),
                    Some((bd, _)) if diff < bd => {
                        second = best;
                        best = Some((diff, i));
                    }
                    _ => match second {
                        None => second = Some((diff, i)),
                        Some((sd, _)) if diff < sd => second = Some((diff, i)),
                        _ => {}
                    },
                }
            }
            return match (best, second) {
                (Some((d1, i)), Some((d2, j))) if d1 + d2 > 0.0 => {
                    (self.radius[i] * d2 + self.radius[j] * d1) / (d1 + d2)
                }
                (Some((_, i)), _) => self.radius[i],
                _ => self.min_radius(),
            };
        }
        // nearest direction by cosine for d >= 3
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (i, d) in self.directions.iter().enumerate() {
            let dot: f64 = d.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / norm;
            if dot > best.0 {
                best = (dot, i);
            }
        }
        self.radius[best.1]
    }

    /// Sampled boundary points r(theta) * theta.
    pub fn boundary_points(&self) -> Vec<Vec<f64>> {
        self.directions
            .iter()
            .zip(&self.radius)
            .map(|(d, r)| d.iter().map(|c| c * r).collect())
            .collect()
    }

    /// Membership in the convex hull of the sampled boundary points,
    /// scaled by `scale`. The interval in d=1; the polygon of the
    /// angularly ordered points in d=2 (half-plane test edge by edge);
    /// conservative radial fallback above.
    pub fn hull_contains(&self, x: &[f64], scale: f64) -> bool {
        match x.len() {
            1 => {
                let mut lo = 0.0f64;
                let mut hi = 0.0f64;
                for p in self.boundary_points() {
                    lo = lo.min(p[0]);
                    hi = hi.max(p[0]);
                }
                x[0] >= scale * lo - 1e-12 && x[0] <= scale * hi + 1e-12
            }
            2 => {
                let mut pts = self.boundary_points();
                if pts.len() < 3 {
                    return false;
                }
                pts.sort_by(|a, b| a[1].atan2(a[0]).total_cmp(&b[1].atan2(b[0])));
                let m = pts.len();
                for i in 0..m {
                    let p = &pts[i];
                    let q = &pts[(i + 1) % m];
                    let cross = (q[0] - p[0]) * (x[1] - scale * p[1])
                        - (q[1] - p[1]) * (x[0] - scale * p[0]);
                    if cross < -1e-12 * scale.max(1.0) {
                        return false;
                    }
                }
                true
            }
            _ => {
                let n: f64 = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                n <= scale * self.radius_toward(x) + 1e-12
            }
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        let dim = self.directions.first().map_or(0, Vec::len);
        for i in 0..dim {
            write!(w, "d{i},")?;
        }
        writeln!(w, "radius,stderr")?;
        for ((d, r), se) in self.directions.iter().zip(&self.radius).zip(&self.stderr) {
            for c in d {
                write!(w, "{c},")?;
            }
            writeln!(w, "{r},{se}")?;
        }
        Ok(())
    }
}

/// Estimates the boundary of B0 along the given unit directions:
/// r(theta) = 1/mu(theta) with the delta-method standard error.
pub fn estimate_b0(
    directions: &[Vec<f64>],
    n: u64,
    replicas: usize,
    seed: u64,
) -> Result<RadialTable, Error> {
    let mut radius = Vec::with_capacity(directions.len());
    let mut stderr = Vec::with_capacity(directions.len());
    for (i, dir) in directions.iter().enumerate() {
        let (mu, se) = estimate_mu(dir, n, replicas, rng::derive(seed, "b0", &[i as u64]))?;
        if mu <= 0.0 {
            return Err(Error::Invalid(format!("mu estimate not positive: {mu}")));
        }
        radius.push(1.0 / mu);
        stderr.push(se / (mu * mu));
    }
    Ok(RadialTable {
        directions: directions.to_vec(),
        radius,
        stderr,
    })
}

/// I.i.d. Exp(1) waiting times on cells (u,h), 0 <= h <= h_max. Layer 0
/// coincides with `WeightField::sample` for the same seed.
#[derive(Clone, Debug)]
pub struct CellWeightField {
    pub lattice: LatticeBox,
    pub h_max: i64,
    pub seed: u64,
    weights: Vec<f64>,
    constant: Option<f64>,
}

impl CellWeightField {
    pub fn sample(lattice: LatticeBox, h_max: i64, seed: u64) -> Self {
        assert!(h_max >= 0);
        let n = lattice.len();
        let mut weights = Vec::with_capacity(n * (h_max as usize + 1));
        for level in 0..=h_max {
            for i in 0..n {
                weights.push(cell_weight(seed, &lattice.site_of(i), level));
            }
        }
        CellWeightField {
            lattice,
            h_max,
            seed,
            weights,
            constant: None,
        }
    }

    pub fn constant(lattice: LatticeBox, h_max: i64, w: f64) -> Self {
        assert!(w > 0.0 && h_max >= 0);
        let n = lattice.len() * (h_max as usize + 1);
        CellWeightField {
            lattice,
            h_max,
            seed: 0,
            weights: vec![w; n],
            constant: Some(w),
        }
    }

    #[inline]
    fn weight(&self, node: usize) -> f64 {
        if let Some(w) = self.constant {
            w
        } else {
            self.weights[node]
        }
    }
}

/// Directed passage times M(u,h) from cell (0,0) for every target in
/// `targets`: admissible steps are lateral within a layer or one layer up,
/// entered-cell weights summed with the start cell excluded.
pub fn directed_passage_grid(
    cw: &CellWeightField,
    targets: &[(Site, i64)],
) -> Result<Vec<f64>, Error> {
    let lattice = &cw.lattice;
    let n = lattice.len();
    let layers = cw.h_max as usize + 1;
    for (s, h) in targets {
        if !lattice.contains(s) || *h < 0 || *h > cw.h_max {
            return Err(Error::OutOfBox(format!("cell ({s}, {h})")));
        }
    }
    let start = lattice.index_of(&Site::origin(lattice.dim)).unwrap();
    let mut dist = vec![f64::INFINITY; n * layers];
    let mut settled = vec![false; n * layers];
    let mut heap = BinaryHeap::new();
    dist[start] = 0.0;
    heap.push(QueueKey {
        dist: 0.0,
        node: start,
    });
    while let Some(QueueKey { dist: d, node }) = heap.pop() {
        if settled[node] {
            continue;
        }
        settled[node] = true;
        let (layer, site) = (node / n, node % n);
        let relax = |nb: usize, heap: &mut BinaryHeap<QueueKey>, dist: &mut Vec<f64>| {
            let nd = d + cw.weight(nb);
            if nd < dist[nb] {
                dist[nb] = nd;
                heap.push(QueueKey { dist: nd, node: nb });
            }
        };
        for nb in lattice.neighbors(site) {
            relax(layer * n + nb, &mut heap, &mut dist);
        }
        if layer + 1 < layers {
            relax((layer + 1) * n + site, &mut heap, &mut dist);
        }
    }
    Ok(targets
        .iter()
        .map(|(s, h)| dist[(*h as usize) * n + lattice.index_of(s).unwrap()])
        .collect())
}

/// Directed passage time of a single cell.
pub fn directed_passage(cw: &CellWeightField, target: &Site, h: i64) -> Result<f64, Error> {
    Ok(directed_passage_grid(cw, &[(target.clone(), h)])?[0])
}

/// Per-site outcome of the distributional comparison between deposition
/// first-contact times R(u,0) and percolation passage times T(0,u).
#[derive(Clone, Debug)]
pub struct BridgeSite {
    pub site: Site,
    pub ks_d: f64,
    pub p: f64,
    pub p_adjusted: f64,
    pub mean_bd: f64,
    pub se_bd: f64,
    pub mean_fpp: f64,
    pub se_fpp: f64,
}

#[derive(Clone, Debug)]
pub struct BridgeReport {
    pub sites: Vec<BridgeSite>,
    pub pass: bool,
}

/// Tests the distributional equality {R(u,0)} = {T(0,u)} site by site:
/// two-sample KS with Bonferroni correction across sites, plus a 3-sigma
/// comparison of means. Requires at least 100 replicas per side.
pub fn match_bd_fpp(sites: &[Site], replicas: usize, seed: u64) -> Result<BridgeReport, Error> {
    if replicas < 100 {
        return Err(Error::InsufficientReplicas {
            got: replicas,
            need: 100,
        });
    }
    let dim = sites.first().map_or(1, Site::dim);
    let spec = SeedSpec::origin(dim);
    let targets: Vec<(Site, i64)> = sites.iter().map(|s| (s.clone(), 0)).collect();
    let cap = sites
        .iter()
        .map(|s| sim::default_passage_cap(&spec, s, 0))
        .fold(0.0f64, f64::max);

    let bd_rows: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let clocks = ClockField::new(rng::derive(seed, "bridge-bd", &[r as u64]));
            sim::passage_times_grid(&spec, &clocks, &targets, cap)
                .unwrap()
                .into_iter()
                .map(|p| p.time().expect("cap dominates mean by 4x"))
                .collect()
        })
        .collect();

    let far = sites.iter().map(|s| s.norm1()).max().unwrap_or(1);
    let lattice = mu_box(dim, &Site::axis(dim, 0, far));
    let fpp_rows: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let ws = rng::derive(seed, "bridge-fpp", &[r as u64]);
            let w = WeightField::sample(lattice.clone(), ws);
            let table = passage_times(&w, &Site::origin(dim)).unwrap();
            sites.iter().map(|s| table.time_to(s).unwrap()).collect()
        })
        .collect();

    let mut out = Vec::with_capacity(sites.len());
    let mut pass = true;
    for (i, site) in sites.iter().enumerate() {
        let bd: Vec<f64> = bd_rows.iter().map(|row| row[i]).collect();
        let fp: Vec<f64> = fpp_rows.iter().map(|row| row[i]).collect();
        let (mean_bd, se_bd) = stats::mean_stderr(&bd);
        let (mean_fpp, se_fpp) = stats::mean_stderr(&fp);
        let (d, p) = if site.norm1() == 0 {
            (0.0, 1.0) // both samples identically 0
        } else {
            stats::ks_two_sample(&bd, &fp)
        };
        let p_adjusted = stats::bonferroni(p, sites.len());
        let mean_ok =
            (mean_bd - mean_fpp).abs() <= 3.0 * stats::combined_stderr(&[se_bd, se_fpp]);
        if p_adjusted < 0.01 || !mean_ok {
            pass = false;
        }
        out.push(BridgeSite {
            site: site.clone(),
            ks_d: d,
            p,
            p_adjusted,
            mean_bd,
            se_bd,
            mean_fpp,
            se_fpp,
        });
    }
    Ok(BridgeReport { sites: out, pass })
}

/// Desk-scale proxy for the shape-theorem tail: the fraction of replicas in
/// which n(t-eps) B0_hat is not contained in the cluster at time nt, for
/// each n. The shape theorem makes this fraction decay in n.
pub fn tail_miss_fractions(
    n_values: &[u64],
    t: f64,
    eps: f64,
    r_hat: f64,
    replicas: usize,
    seed: u64,
) -> Result<Vec<f64>, Error> {
    let dim = 1usize;
    let mut out = Vec::with_capacity(n_values.len());
    for (k, &n) in n_values.iter().enumerate() {
        let horizon = n as f64 * t;
        let reach = (n as f64 * (t - eps) * r_hat).floor() as i64;
        let r = ((1.5 * horizon).ceil() as i64).max(reach + 2) + 8;
        let lattice = LatticeBox::new(dim, r, reach.max(1))?;
        let misses: usize = (0..replicas)
            .into_par_iter()
            .map(|rep| {
                let ws = rng::derive(seed, "tail", &[k as u64, rep as u64]);
                let w = WeightField::sample(lattice.clone(), ws);
                let table = passage_times(&w, &Site::origin(dim)).unwrap();
                let miss = (-reach..=reach).any(|u| {
                    table.time_to(&Site::new(vec![u])).unwrap() > horizon
                });
                usize::from(miss)
            })
            .sum();
        out.push(misses as f64 / replicas as f64);
    }
    Ok(out)
}

/// Tail proxy for the directed cluster: the fraction of replicas in which
/// some cell at l1 distance K or more from the origin has been reached by
/// time nu*K. The path-counting bound makes this decay in K once nu is
/// small, because a reach of K costs at least K Exp(1) weights.
pub fn directed_reach_fractions(
    k_values: &[i64],
    nu: f64,
    replicas: usize,
    seed: u64,
) -> Result<Vec<f64>, Error> {
    let mut out = Vec::with_capacity(k_values.len());
    for (i, &k) in k_values.iter().enumerate() {
        let lattice = LatticeBox::new(1, k, k)?;
        // cells exactly at distance K; reaching farther passes through these
        let boundary: Vec<(Site, i64)> = (-k..=k)
            .map(|u| (Site::new(vec![u]), k - u.abs()))
            .collect();
        let hits: usize = (0..replicas)
            .into_par_iter()
            .map(|r| {
                let cw = CellWeightField::sample(
                    lattice.clone(),
                    k,
                    rng::derive(seed, "reach", &[i as u64, r as u64]),
                );
                let times = directed_passage_grid(&cw, &boundary).unwrap();
                usize::from(times.iter().any(|t| *t <= nu * k as f64))
            })
            .sum();
        out.push(hits as f64 / replicas as f64);
    }
    Ok(out)
}
