//! Event-driven simulation of the ballistic deposition height process.
//!
//! The height above site u jumps at each epoch of u's clock to
//! max(sigma_u + 1, max over nearest neighbors), with extended-integer
//! arithmetic; a jump whose result is −∞ loses the particle. Runs are
//! deterministic functions of (initial field, clock field, horizon).
//!
//! Finite-box truncation: the outermost shell of the box (the halo) is
//! frozen at its initial value. A separate light-cone monitor walks the
//! same clock streams and reports the first time at which influence from
//! the frozen halo could have reached the observation region; the margin
//! built into `LatticeBox::for_horizon` makes that event vanishingly rare.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::clocks::{ClockCursor, ClockField};
use crate::error::Error;
use crate::lattice::{ext_add, ext_max, ExtHeight, LatticeBox, Site, NEG_INF, POS_INF};
use crate::rng;

/// Height configuration over a finite box at a point in simulation time.
#[derive(Clone, Debug, PartialEq)]
pub struct HeightField {
    pub lattice: LatticeBox,
    pub heights: Vec<ExtHeight>,
    pub time: f64,
}

impl HeightField {
    pub fn filled(lattice: LatticeBox, h: ExtHeight) -> Self {
        let n = lattice.len();
        HeightField {
            lattice,
            heights: vec![h; n],
            time: 0.0,
        }
    }

    /// All heights −∞ (the empty interface).
    pub fn empty(lattice: LatticeBox) -> Self {
        Self::filled(lattice, NEG_INF)
    }

    pub fn get(&self, u: &Site) -> Option<ExtHeight> {
        self.lattice.index_of(u).map(|i| self.heights[i])
    }

    pub fn set(&mut self, u: &Site, h: ExtHeight) -> Result<(), Error> {
        let idx = self
            .lattice
            .index_of(u)
            .ok_or_else(|| Error::OutOfBox(u.to_string()))?;
        self.heights[idx] = h;
        Ok(())
    }

    /// Sites with height > −∞.
    pub fn finite_sites(&self) -> Vec<Site> {
        (0..self.heights.len())
            .filter(|&i| self.heights[i] != NEG_INF)
            .map(|i| self.lattice.site_of(i))
            .collect()
    }

    /// Writes one snapshot in CSV form: d coordinate columns, height with
    /// "-inf"/"+inf" sentinels, and the field time.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        self.write_csv_rows(w, true, false)
    }

    /// Snapshot rows, optionally without the header (for multi-snapshot
    /// trajectory files) and optionally restricted to occupied columns.
    pub fn write_csv_rows<W: std::io::Write>(
        &self,
        w: &mut W,
        header: bool,
        occupied_only: bool,
    ) -> std::io::Result<()> {
        if header {
            for i in 0..self.lattice.dim {
                write!(w, "u{i},")?;
            }
            writeln!(w, "height,time")?;
        }
        for idx in 0..self.heights.len() {
            if occupied_only && self.heights[idx] == NEG_INF {
                continue;
            }
            let s = self.lattice.site_of(idx);
            for c in &s.coords {
                write!(w, "{c},")?;
            }
            writeln!(w, "{},{}", self.heights[idx], self.time)?;
        }
        Ok(())
    }
}

/// A single occupied cell (v, seed_height) as initial condition.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedSpec {
    pub seed_site: Site,
    pub seed_height: i64,
}

impl SeedSpec {
    pub fn origin(dim: usize) -> Self {
        SeedSpec {
            seed_site: Site::origin(dim),
            seed_height: 0,
        }
    }

    pub fn field(&self, lattice: LatticeBox) -> Result<HeightField, Error> {
        if !lattice.contains(&self.seed_site) {
            return Err(Error::OutOfBox(self.seed_site.to_string()));
        }
        let mut f = HeightField::empty(lattice);
        f.set(&self.seed_site, ExtHeight::finite(self.seed_height))?;
        Ok(f)
    }
}

/// Parameters of the synchronously updated (discrete-time Bernoulli)
/// variant.
#[derive(Clone, Copy, Debug)]
pub struct SyncConfig {
    pub p: f64,
    pub steps: u64,
}

impl SyncConfig {
    pub fn new(p: f64, steps: u64) -> Result<Self, Error> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Invalid(format!("p must lie in (0,1), got {p}")));
        }
        Ok(SyncConfig { p, steps })
    }
}

/// One deposition event at site u, returning the updated field. The new
/// height is max(sigma_u + 1, max over neighbors); if that is −∞ the
/// particle cannot stick and the field is unchanged.
pub fn deposit_jump(field: &HeightField, u: &Site) -> Result<HeightField, Error> {
    let idx = field
        .lattice
        .index_of(u)
        .ok_or_else(|| Error::OutOfBox(u.to_string()))?;
    let mut out = field.clone();
    jump_in_place(&field.lattice, &mut out.heights, idx);
    Ok(out)
}

#[inline]
fn jump_value(lattice: &LatticeBox, heights: &[ExtHeight], idx: usize) -> ExtHeight {
    let mut v = heights[idx].succ();
    for nb in lattice.neighbors(idx) {
        v = ext_max(v, heights[nb]);
    }
    v
}

#[inline]
fn jump_in_place(lattice: &LatticeBox, heights: &mut [ExtHeight], idx: usize) -> bool {
    let v = jump_value(lattice, heights, idx);
    if v != heights[idx] {
        heights[idx] = v;
        true
    } else {
        false
    }
}

/// A site's jump can change the field iff it has a finite height, or is −∞
/// with some neighbor above −∞. +∞ sites never change.
#[inline]
fn relevant(lattice: &LatticeBox, heights: &[ExtHeight], idx: usize) -> bool {
    match heights[idx] {
        h if h == POS_INF => false,
        h if h == NEG_INF => lattice.neighbors(idx).any(|nb| heights[nb] != NEG_INF),
        _ => true,
    }
}

#[derive(Clone, Copy, Debug)]
struct EventKey {
    time: f64,
    idx: usize,
}

impl PartialEq for EventKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for EventKey {}
impl PartialOrd for EventKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for EventKey {
    // reversed so BinaryHeap pops the earliest event; simultaneous epochs
    // (possible only through floating-point collision) break ties in
    // lexicographic site order
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

/// What a run reports besides the final field.
#[derive(Clone, Debug)]
pub struct RunReport {
    /// First time influence from the frozen halo could have reached the
    /// observation region, if that happened before the horizon.
    pub breach: Option<f64>,
    pub events: u64,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub field: HeightField,
    pub report: RunReport,
}

/// Walks the corruption front spreading inward from the frozen halo on the
/// same clock streams the dynamics use. A halo site diverges from the
/// infinite-lattice truth at its first epoch; any site whose neighbor has
/// diverged may diverge at its own next epoch. Returns the first time the
/// front touches the observation region, when that is <= horizon.
///
/// The front is always walked from time 0 regardless of the field's start
/// time, so stacked runs report identically to a single run.
pub fn light_cone_breach(lattice: &LatticeBox, clocks: &ClockField, horizon: f64) -> Option<f64> {
    let n = lattice.len();
    let mut corrupted = vec![false; n];
    let mut scheduled = vec![false; n];
    let mut heap: BinaryHeap<EventKey> = BinaryHeap::new();
    for idx in 0..n {
        if lattice.is_halo(idx) {
            let t = clocks.cursor(&lattice.site_of(idx), 0.0).next_event();
            if t <= horizon {
                heap.push(EventKey { time: t, idx });
            }
            scheduled[idx] = true;
        }
    }
    while let Some(EventKey { time, idx }) = heap.pop() {
        if time > horizon {
            break;
        }
        if corrupted[idx] {
            continue;
        }
        corrupted[idx] = true;
        if lattice.in_observation(idx) {
            return Some(time);
        }
        for nb in lattice.neighbors(idx) {
            if !corrupted[nb] && !scheduled[nb] {
                scheduled[nb] = true;
                let t = clocks.cursor(&lattice.site_of(nb), time).next_event();
                if t <= horizon {
                    heap.push(EventKey { time: t, idx: nb });
                }
            }
        }
    }
    None
}

/// The deposition event loop. Only sites whose jump could change the field
/// carry scheduled events; an epoch of any other site is a no-op by the
/// jump rule, so skipping it leaves the trajectory exact.
struct Engine<'a> {
    lattice: &'a LatticeBox,
    clocks: &'a ClockField,
    heights: Vec<ExtHeight>,
    cursors: Vec<Option<ClockCursor>>,
    scheduled: Vec<bool>,
    heap: BinaryHeap<EventKey>,
    events: u64,
}

impl<'a> Engine<'a> {
    fn new(field: &HeightField, clocks: &'a ClockField, lattice: &'a LatticeBox) -> Self {
        let n = lattice.len();
        let mut eng = Engine {
            lattice,
            clocks,
            heights: field.heights.clone(),
            cursors: (0..n).map(|_| None).collect(),
            scheduled: vec![false; n],
            heap: BinaryHeap::new(),
            events: 0,
        };
        // all sites to check initially: every site above -inf plus its
        // neighborhood; everything else is irrelevant until touched
        for idx in 0..n {
            if eng.heights[idx] != NEG_INF {
                eng.try_schedule(idx, field.time);
                for nb in lattice.neighbors(idx) {
                    eng.try_schedule(nb, field.time);
                }
            }
        }
        eng
    }

    fn try_schedule(&mut self, idx: usize, now: f64) {
        if self.scheduled[idx]
            || self.lattice.is_halo(idx)
            || !relevant(self.lattice, &self.heights, idx)
        {
            return;
        }
        let mut cur = self.clocks.cursor(&self.lattice.site_of(idx), now);
        let t = cur.next_event();
        self.cursors[idx] = Some(cur);
        self.scheduled[idx] = true;
        self.heap.push(EventKey { time: t, idx });
    }

    /// Advances until the next processed event would exceed `horizon`.
    /// Calls `on_jump(site index, time, new height)` after each change.
    fn run_until<F: FnMut(usize, f64, ExtHeight)>(&mut self, horizon: f64, mut on_jump: F) {
        while let Some(&EventKey { time, idx }) = self.heap.peek() {
            if time > horizon {
                break;
            }
            self.heap.pop();
            self.events += 1;
            if jump_in_place(self.lattice, &mut self.heights, idx) {
                on_jump(idx, time, self.heights[idx]);
                for nb in self.lattice.neighbors(idx) {
                    self.try_schedule(nb, time);
                }
            }
            // next epoch of this site, unless it can no longer change
            if self.heights[idx] != POS_INF {
                let t = self.cursors[idx].as_mut().expect("scheduled cursor").next_event();
                self.heap.push(EventKey { time: t, idx });
            } else {
                self.scheduled[idx] = false;
                self.cursors[idx] = None;
            }
        }
    }
}

/// Runs the deposition dynamics from `initial.time` to `horizon`, applying
/// the jump rule at every epoch of every box site in global time order.
pub fn run(initial: &HeightField, clocks: &ClockField, horizon: f64) -> Result<RunOutcome, Error> {
    if horizon < initial.time {
        return Err(Error::Invalid(format!(
            "horizon {horizon} precedes field time {}",
            initial.time
        )));
    }
    let lattice = initial.lattice.clone();
    let (heights, events) = {
        let mut eng = Engine::new(initial, clocks, &lattice);
        eng.run_until(horizon, |_, _, _| {});
        (eng.heights, eng.events)
    };
    let breach = light_cone_breach(&lattice, clocks, horizon);
    Ok(RunOutcome {
        field: HeightField {
            lattice,
            heights,
            time: horizon,
        },
        report: RunReport { breach, events },
    })
}

/// Runs the seed process Z^v: all −∞ except the seed cell.
pub fn run_seed(
    spec: &SeedSpec,
    lattice: &LatticeBox,
    clocks: &ClockField,
    horizon: f64,
) -> Result<RunOutcome, Error> {
    run(&spec.field(lattice.clone())?, clocks, horizon)
}

/// Outcome of a passage-time query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Passage {
    Reached(f64),
    TimedOut,
}

impl Passage {
    pub fn time(self) -> Option<f64> {
        match self {
            Passage::Reached(t) => Some(t),
            Passage::TimedOut => None,
        }
    }
}

/// Default simulation cap for reaching cell (u,h) from a seed: four times
/// the mean of the dominating Exp-sum plus slack; overshoot beyond that is
/// exponentially unlikely (kappa(4) > 1.6 per step).
pub fn default_passage_cap(spec: &SeedSpec, target: &Site, h: i64) -> f64 {
    let dist = target
        .coords
        .iter()
        .zip(&spec.seed_site.coords)
        .map(|(a, b)| (a - b).abs())
        .sum::<i64>();
    let climb = (h - spec.seed_height).max(0);
    4.0 * (dist + climb) as f64 + 20.0
}

/// Box sized so that a passage run up to `cap` keeps every target site
/// inside the observation region with the full light-cone margin.
pub fn passage_box(spec: &SeedSpec, targets: &[(Site, i64)], cap: f64) -> LatticeBox {
    let dim = spec.seed_site.dim();
    let obs = targets
        .iter()
        .map(|(s, _)| s.norm_inf())
        .chain(std::iter::once(spec.seed_site.norm_inf()))
        .max()
        .unwrap_or(0);
    LatticeBox::for_horizon(dim, obs, cap)
}

/// First time the seed process is at or above height h over `target`:
/// R(u,h) = inf{t > 0 : Z_u(t) >= h}, by convention 0 if the initial field
/// already covers the cell.
pub fn passage_time(
    spec: &SeedSpec,
    clocks: &ClockField,
    target: &Site,
    h: i64,
    cap: f64,
) -> Result<Passage, Error> {
    let res = passage_times_grid(spec, clocks, &[(target.clone(), h)], cap)?;
    Ok(res[0])
}

/// Passage times for a whole grid of cells from one seed run. Exact: each
/// cell's time is the global event time at which its threshold is first
/// met.
pub fn passage_times_grid(
    spec: &SeedSpec,
    clocks: &ClockField,
    targets: &[(Site, i64)],
    cap: f64,
) -> Result<Vec<Passage>, Error> {
    if !cap.is_finite() || cap <= 0.0 {
        return Err(Error::Invalid(format!("cap must be finite positive, got {cap}")));
    }
    let lattice = passage_box(spec, targets, cap);
    let field = spec.field(lattice.clone())?;
    let mut results = vec![Passage::TimedOut; targets.len()];
    // watchers per site index, as (threshold, slot), resolved in height order
    let mut watchers: std::collections::HashMap<usize, Vec<(i64, usize)>> =
        std::collections::HashMap::new();
    let mut pending = 0usize;
    for (slot, (site, h)) in targets.iter().enumerate() {
        let idx = lattice
            .index_of(site)
            .ok_or_else(|| Error::OutOfBox(site.to_string()))?;
        if field.heights[idx] >= ExtHeight::finite(*h) {
            results[slot] = Passage::Reached(0.0);
        } else {
            watchers.entry(idx).or_default().push((*h, slot));
            pending += 1;
        }
    }
    for list in watchers.values_mut() {
        list.sort();
    }
    if pending > 0 {
        let mut eng = Engine::new(&field, clocks, &lattice);
        let mut done = false;
        // run in chunks so the loop can stop early once every watcher fired
        let mut now = 0.0;
        let chunk = (cap / 64.0).max(1.0);
        while !done && now < cap {
            now = (now + chunk).min(cap);
            eng.run_until(now, |idx, t, new_h| {
                if let Some(list) = watchers.get_mut(&idx) {
                    while let Some(&(h, slot)) = list.first() {
                        if new_h >= ExtHeight::finite(h) {
                            results[slot] = Passage::Reached(t);
                            list.remove(0);
                            pending -= 1;
                        } else {
                            break;
                        }
                    }
                    if list.is_empty() {
                        watchers.remove(&idx);
                    }
                }
                if pending == 0 {
                    done = true;
                }
            });
        }
    }
    // the safety margin scales with cap, so a breach here indicates a
    // misconfigured box rather than ordinary noise; refuse the sample
    let resolved_horizon = results
        .iter()
        .filter_map(|p| p.time())
        .fold(0.0f64, f64::max);
    if let Some(tb) = light_cone_breach(&lattice, clocks, resolved_horizon.min(cap)) {
        return Err(Error::LightConeBreach(tb));
    }
    Ok(results)
}

/// Report from the synchronous (discrete-time) variant.
#[derive(Clone, Debug)]
pub struct SyncReport {
    /// Number of Bernoulli update attempts per site over all steps.
    pub attempts: Vec<u64>,
}

/// Synchronous Bernoulli dynamics: at each time step every non-halo site
/// independently applies the jump rule with probability p, all reads from
/// the pre-step snapshot (strict two-buffer update).
pub fn run_synchronous(
    initial: &HeightField,
    cfg: &SyncConfig,
    seed: u64,
) -> (HeightField, SyncReport) {
    let lattice = initial.lattice.clone();
    let n = lattice.len();
    let base = rng::derive(seed, "sync", &[]);
    let mut cur = initial.heights.clone();
    let mut next = cur.clone();
    let mut attempts = vec![0u64; n];
    for step in 0..cfg.steps {
        for idx in 0..n {
            if lattice.is_halo(idx) {
                continue;
            }
            let site = lattice.site_of(idx);
            let words: Vec<u64> = site
                .coords
                .iter()
                .map(|&c| c as u64)
                .chain(std::iter::once(step))
                .collect();
            let u = rng::stream_uniform(rng::mix_words(base, &words), 0);
            if u < cfg.p {
                attempts[idx] += 1;
                next[idx] = jump_value(&lattice, &cur, idx);
            } else {
                next[idx] = cur[idx];
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    (
        HeightField {
            lattice,
            heights: cur,
            time: initial.time + cfg.steps as f64,
        },
        SyncReport { attempts },
    )
}

/// A detected violation of a coupling identity.
#[derive(Clone, Debug)]
pub struct CouplingViolation {
    pub site: Site,
    pub time: f64,
    pub lhs: ExtHeight,
    pub rhs: ExtHeight,
}

#[derive(Clone, Debug)]
pub struct CouplingReport {
    pub violations: Vec<CouplingViolation>,
    pub events: u64,
}

impl CouplingReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lockstep driver: processes every epoch of every non-halo box site in
/// global time order and applies the jump to each field in the family, so
/// identities can be checked after every single event.
fn run_lockstep<F: FnMut(&[Vec<ExtHeight>], usize, f64, &mut Vec<CouplingViolation>)>(
    lattice: &LatticeBox,
    fields: &mut [Vec<ExtHeight>],
    clocks: &ClockField,
    t0: f64,
    horizon: f64,
    mut check: F,
) -> CouplingReport {
    let n = lattice.len();
    let mut heap: BinaryHeap<EventKey> = BinaryHeap::new();
    let mut cursors: Vec<Option<ClockCursor>> = (0..n).map(|_| None).collect();
    for idx in 0..n {
        if lattice.is_halo(idx) {
            continue;
        }
        let mut cur = clocks.cursor(&lattice.site_of(idx), t0);
        let t = cur.next_event();
        cursors[idx] = Some(cur);
        if t <= horizon {
            heap.push(EventKey { time: t, idx });
        }
    }
    let mut violations = Vec::new();
    let mut events = 0u64;
    while let Some(EventKey { time, idx }) = heap.pop() {
        events += 1;
        for heights in fields.iter_mut() {
            jump_in_place(lattice, heights, idx);
        }
        check(fields, idx, time, &mut violations);
        let t = cursors[idx].as_mut().unwrap().next_event();
        if t <= horizon {
            heap.push(EventKey { time: t, idx });
        }
    }
    CouplingReport { violations, events }
}

/// Runs the ordered pair (hi, lo) on identical clocks and checks that the
/// pointwise ordering is preserved after every event. Any violation
/// reported is an implementation bug, never expected behavior.
pub fn couple_monotone(
    init_hi: &HeightField,
    init_lo: &HeightField,
    clocks: &ClockField,
    horizon: f64,
) -> Result<CouplingReport, Error> {
    if init_hi.lattice != init_lo.lattice {
        return Err(Error::Invalid("coupled fields must share a box".into()));
    }
    for idx in 0..init_hi.heights.len() {
        if init_hi.heights[idx] < init_lo.heights[idx] {
            return Err(Error::Invalid(format!(
                "initial ordering violated at {}",
                init_hi.lattice.site_of(idx)
            )));
        }
    }
    let lattice = init_hi.lattice.clone();
    let mut fields = vec![init_hi.heights.clone(), init_lo.heights.clone()];
    let report = run_lockstep(
        &lattice,
        &mut fields,
        clocks,
        init_hi.time,
        horizon,
        |fs, idx, time, viol| {
            if fs[0][idx] < fs[1][idx] {
                viol.push(CouplingViolation {
                    site: lattice.site_of(idx),
                    time,
                    lhs: fs[0][idx],
                    rhs: fs[1][idx],
                });
            }
        },
    );
    Ok(report)
}

/// Runs sigma together with the full family zeta^v (one seed process per
/// site with initial height above −∞, shifted by that height) on one and
/// the same version of the clocks, and checks the exact supremum identity
/// sigma_u(t) = max_v zeta^v_u(t) after every event.
pub fn couple_supremum(
    initial: &HeightField,
    clocks: &ClockField,
    horizon: f64,
) -> Result<CouplingReport, Error> {
    let lattice = initial.lattice.clone();
    let n = lattice.len();
    let seeds: Vec<usize> = (0..n).filter(|&i| initial.heights[i] != NEG_INF).collect();
    let mut fields = Vec::with_capacity(seeds.len() + 1);
    fields.push(initial.heights.clone());
    for &v in &seeds {
        let mut zeta = vec![NEG_INF; n];
        zeta[v] = initial.heights[v];
        fields.push(zeta);
    }
    let sup_at = |fs: &[Vec<ExtHeight>], idx: usize| {
        fs[1..]
            .iter()
            .map(|z| z[idx])
            .fold(NEG_INF, ext_max)
    };
    // identity holds at t = 0 by construction
    for idx in 0..n {
        let rhs = sup_at(&fields, idx);
        if fields[0][idx] != rhs {
            return Err(Error::Invalid(format!(
                "supremum hypothesis fails at t=0, site {}",
                lattice.site_of(idx)
            )));
        }
    }
    let report = run_lockstep(
        &lattice,
        &mut fields,
        clocks,
        initial.time,
        horizon,
        |fs, idx, time, viol| {
            let rhs = fs[1..].iter().map(|z| z[idx]).fold(NEG_INF, ext_max);
            if fs[0][idx] != rhs {
                viol.push(CouplingViolation {
                    site: lattice.site_of(idx),
                    time,
                    lhs: fs[0][idx],
                    rhs,
                });
            }
        },
    );
    Ok(report)
}

/// zeta^v as a standalone process: seed at v with height sigma_v(0), which
/// equals sigma_v(0) + Z^v under the convention ∞ + (−∞) = −∞.
pub fn shifted_seed_field(
    initial: &HeightField,
    v: &Site,
) -> Result<HeightField, Error> {
    let h = initial
        .get(v)
        .ok_or_else(|| Error::OutOfBox(v.to_string()))?;
    let mut f = HeightField::empty(initial.lattice.clone());
    f.set(v, h)?;
    f.time = initial.time;
    Ok(f)
}

/// Pointwise check that a equals shift + b under extended addition, used by
/// tests of the zeta^v = sigma_v(0) + Z^v identity.
pub fn ext_shift_equal(a: &HeightField, shift: ExtHeight, b: &HeightField) -> bool {
    a.heights
        .iter()
        .zip(&b.heights)
        .all(|(&x, &y)| x == ext_add(shift, y))
}
