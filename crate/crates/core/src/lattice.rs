//! Lattice geometry and extended-integer height arithmetic.
//!
//! Sites live on Z^d with the l1 norm; heights take values in
//! Z ∪ {−∞, +∞} with the absorbing rule −∞ + x = −∞ (even for x = +∞).
//! A `LatticeBox` is the finite l∞ ball the simulators actually run on,
//! split into an observation region, a safety margin, and a frozen
//! one-site halo shell at the edge.

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// A point of Z^d.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Site {
    pub coords: Vec<i64>,
}

impl Site {
    pub fn new(coords: Vec<i64>) -> Self {
        assert!(!coords.is_empty(), "dimension must be at least 1");
        Site { coords }
    }

    pub fn origin(dim: usize) -> Self {
        Site::new(vec![0; dim])
    }

    /// Standard basis vector e_axis scaled by c.
    pub fn axis(dim: usize, axis: usize, c: i64) -> Self {
        let mut v = vec![0; dim];
        v[axis] = c;
        Site::new(v)
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// l1 norm |u| = sum |u_i|.
    pub fn norm1(&self) -> i64 {
        self.coords.iter().map(|c| c.abs()).sum()
    }

    pub fn norm_inf(&self) -> i64 {
        self.coords.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    pub fn add(&self, other: &Site) -> Site {
        Site::new(
            self.coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    /// [nx] applied coordinatewise: the lattice site of a scaled real point.
    pub fn floor_of(x: &[f64], n: f64) -> Site {
        Site::new(x.iter().map(|&xi| crate::floor_snap(n * xi)).collect())
    }
}

impl std::fmt::Display for Site {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Extended integer: a height value, −∞, or +∞.
///
/// Encoded as an i64 with the two extreme values reserved as sentinels, so
/// ordering and `max` are plain integer operations.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ExtHeight(i64);

pub const NEG_INF: ExtHeight = ExtHeight(i64::MIN);
pub const POS_INF: ExtHeight = ExtHeight(i64::MAX);

impl ExtHeight {
    pub fn finite(v: i64) -> Self {
        assert!(v > i64::MIN && v < i64::MAX, "height out of finite range");
        ExtHeight(v)
    }

    pub fn is_finite(self) -> bool {
        self != NEG_INF && self != POS_INF
    }

    pub fn as_finite(self) -> Option<i64> {
        if self.is_finite() {
            Some(self.0)
        } else {
            None
        }
    }

    /// σ + 1 with ±∞ fixed points.
    pub fn succ(self) -> Self {
        if self.is_finite() {
            ExtHeight(self.0 + 1)
        } else {
            self
        }
    }

    /// Parses the CSV form: an integer, "-inf", or "+inf".
    pub fn parse(s: &str) -> Result<Self, Error> {
        match s {
            "-inf" => Ok(NEG_INF),
            "+inf" | "inf" => Ok(POS_INF),
            _ => s
                .parse::<i64>()
                .map(ExtHeight::finite)
                .map_err(|_| Error::Parse(format!("bad height value {s:?}"))),
        }
    }

    /// Scaled value as f64 for macroscopic comparisons.
    pub fn to_f64(self) -> f64 {
        if self == NEG_INF {
            f64::NEG_INFINITY
        } else if self == POS_INF {
            f64::INFINITY
        } else {
            self.0 as f64
        }
    }
}

impl std::fmt::Display for ExtHeight {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if *self == NEG_INF {
            write!(f, "-inf")
        } else if *self == POS_INF {
            write!(f, "+inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl std::fmt::Debug for ExtHeight {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self}")
    }
}

pub fn ext_max(a: ExtHeight, b: ExtHeight) -> ExtHeight {
    if a >= b {
        a
    } else {
        b
    }
}

/// Extended addition with the state-space convention −∞ + x = −∞ for every
/// x, including +∞.
pub fn ext_add(a: ExtHeight, b: ExtHeight) -> ExtHeight {
    if a == NEG_INF || b == NEG_INF {
        NEG_INF
    } else if a == POS_INF || b == POS_INF {
        POS_INF
    } else {
        ExtHeight(a.0 + b.0)
    }
}

/// Finite l∞ ball {u : |u_i| <= radius} with row-major indexing.
///
/// The outermost shell (|u|_inf == radius) is the frozen halo; sites with
/// |u|_inf <= observation_radius are the region whose values a run is
/// allowed to report.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeBox {
    pub dim: usize,
    pub radius: i64,
    pub observation_radius: i64,
}

/// Safety margin between observation region and halo: ceil(4 * horizon) + 2
/// lattice units, from the light-cone growth rate of the jump rule.
pub fn safety_margin(horizon: f64) -> i64 {
    (4.0 * horizon.max(0.0)).ceil() as i64 + 2
}

impl LatticeBox {
    pub fn new(dim: usize, radius: i64, observation_radius: i64) -> Result<Self, Error> {
        if dim == 0 {
            return Err(Error::Invalid("dimension must be at least 1".into()));
        }
        if radius < 1 || observation_radius < 0 || observation_radius > radius {
            return Err(Error::Invalid(format!(
                "bad box: radius {radius}, observation radius {observation_radius}"
            )));
        }
        Ok(LatticeBox {
            dim,
            radius,
            observation_radius,
        })
    }

    /// Box sized for a run up to `horizon`: the observation region plus the
    /// light-cone safety margin.
    pub fn for_horizon(dim: usize, observation_radius: i64, horizon: f64) -> Self {
        LatticeBox {
            dim,
            radius: observation_radius + safety_margin(horizon),
            observation_radius,
        }
    }

    pub fn extent(&self) -> i64 {
        2 * self.radius + 1
    }

    pub fn len(&self) -> usize {
        (self.extent() as usize).pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, u: &Site) -> bool {
        u.dim() == self.dim && u.norm_inf() <= self.radius
    }

    /// Row-major index; ordering of indices equals lexicographic ordering
    /// of coordinate tuples, which is the deterministic tie-break order
    /// for simultaneous clock events.
    pub fn index_of(&self, u: &Site) -> Option<usize> {
        if !self.contains(u) {
            return None;
        }
        let ext = self.extent() as usize;
        let mut idx = 0usize;
        for &c in &u.coords {
            idx = idx * ext + (c + self.radius) as usize;
        }
        Some(idx)
    }

    pub fn site_of(&self, mut idx: usize) -> Site {
        let ext = self.extent() as usize;
        let mut coords = vec![0i64; self.dim];
        for i in (0..self.dim).rev() {
            coords[i] = (idx % ext) as i64 - self.radius;
            idx /= ext;
        }
        Site::new(coords)
    }

    /// Neighbor index along `axis` in direction `dir` (+1/-1), or None when
    /// it would leave the box.
    pub fn neighbor(&self, idx: usize, axis: usize, dir: i64) -> Option<usize> {
        let ext = self.extent() as usize;
        let stride = ext.pow((self.dim - 1 - axis) as u32);
        let coord = (idx / stride) % ext;
        if dir > 0 {
            if coord + 1 >= ext {
                None
            } else {
                Some(idx + stride)
            }
        } else if coord == 0 {
            None
        } else {
            Some(idx - stride)
        }
    }

    pub fn neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.dim).flat_map(move |axis| {
            [1i64, -1]
                .into_iter()
                .filter_map(move |dir| self.neighbor(idx, axis, dir))
        })
    }

    /// Halo = the outermost shell; held at its initial value during runs.
    pub fn is_halo(&self, idx: usize) -> bool {
        self.site_of(idx).norm_inf() >= self.radius
    }

    pub fn in_observation(&self, idx: usize) -> bool {
        self.site_of(idx).norm_inf() <= self.observation_radius
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.len()).map(|i| self.site_of(i))
    }
}

/// Cramér rate function for Exp(1): κ(x) = x − 1 − log x. Controls the
/// light-cone tail bounds used to size boxes.
pub fn cramer_kappa(x: f64) -> Result<f64, Error> {
    if !(x > 0.0) {
        return Err(Error::Invalid(format!("cramer_kappa needs x > 0, got {x}")));
    }
    Ok(x - 1.0 - x.ln())
}
