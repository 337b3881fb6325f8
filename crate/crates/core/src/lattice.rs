//! Finite triangular lattice with `N²` sites in axial coordinates.
//!
//! Site `(row, col)` has linear index `row * N + col`. The six neighbors of an
//! interior site are `(r, c±1)`, `(r±1, c)`, `(r-1, c+1)` and `(r+1, c-1)`;
//! boundary sites keep the subset that stays inside `[0, N)²`. The patch is a
//! rhombus in the Euclidean embedding of the triangular lattice.

use serde::{Deserialize, Serialize};

use crate::cluster::SiteMask;
use crate::error::{Error, Result};

/// Axial offsets `(d_row, d_col)` of the six triangular-lattice neighbors.
pub const AXIAL_OFFSETS: [(isize, isize); 6] = [(0, 1), (0, -1), (1, 0), (-1, 0), (-1, 1), (1, -1)];

/// Offsets to neighbors with a smaller linear index. A single forward scan
/// that unions each site with these three sees every edge exactly once.
pub(crate) const BACKWARD_OFFSETS: [(isize, isize); 3] = [(0, -1), (-1, 0), (-1, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SiteId {
    pub row: usize,
    pub col: usize,
}

impl SiteId {
    pub const fn new(row: usize, col: usize) -> Self {
        SiteId { row, col }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lattice {
    side: usize,
}

impl Lattice {
    pub fn new(side: usize) -> Result<Self> {
        if side == 0 {
            return Err(Error::invalid("N", "lattice side must be at least 1"));
        }
        Ok(Lattice { side })
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn site_count(&self) -> usize {
        self.side * self.side
    }

    #[inline]
    pub fn index(&self, site: SiteId) -> usize {
        debug_assert!(self.contains(site));
        site.row * self.side + site.col
    }

    #[inline]
    pub fn site(&self, index: usize) -> SiteId {
        SiteId::new(index / self.side, index % self.side)
    }

    #[inline]
    pub fn contains(&self, site: SiteId) -> bool {
        site.row < self.side && site.col < self.side
    }

    /// Central site `(N/2, N/2)`.
    pub fn center(&self) -> SiteId {
        SiteId::new(self.side / 2, self.side / 2)
    }

    #[inline]
    pub(crate) fn offset(&self, site: SiteId, (dr, dc): (isize, isize)) -> Option<SiteId> {
        let r = site.row.checked_add_signed(dr)?;
        let c = site.col.checked_add_signed(dc)?;
        (r < self.side && c < self.side).then_some(SiteId::new(r, c))
    }

    pub fn neighbors(&self, site: SiteId) -> impl Iterator<Item = SiteId> + '_ {
        AXIAL_OFFSETS
            .iter()
            .filter_map(move |&off| self.offset(site, off))
    }

    /// Linear indices of the neighbors of linear index `index`.
    pub fn neighbor_indices(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        let site = self.site(index);
        self.neighbors(site).map(move |s| self.index(s))
    }

    pub fn degree(&self, site: SiteId) -> usize {
        self.neighbors(site).count()
    }

    pub fn sites(&self) -> impl Iterator<Item = SiteId> + '_ {
        (0..self.site_count()).map(move |i| self.site(i))
    }
}

/// A picture sampled on the lattice, with a strict bound on its magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedPicture {
    lattice: Lattice,
    values: Vec<f64>,
    bound: f64,
}

impl DiscretizedPicture {
    /// Wraps raw site values (row-major). The bound is set just above the
    /// largest magnitude.
    pub fn from_values(lattice: Lattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.site_count() {
            return Err(Error::invalid(
                "values",
                format!("expected {} values, got {}", lattice.site_count(), values.len()),
            ));
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let bound = sup + f64::EPSILON * sup.max(1.0);
        Ok(DiscretizedPicture {
            lattice,
            values,
            bound,
        })
    }

    pub fn zero(lattice: Lattice) -> Self {
        Self::constant(lattice, 0.0)
    }

    pub fn constant(lattice: Lattice, value: f64) -> Self {
        Self::from_values(lattice, vec![value; lattice.site_count()])
            .expect("constant picture must be finite")
    }

    /// Zero picture with an axial square of `side` sites set to `intensity`,
    /// centered on the lattice.
    pub fn centered_square(lattice: Lattice, side: usize, intensity: f64) -> Result<Self> {
        let n = lattice.side();
        if side > n {
            return Err(Error::invalid("side", format!("square side {side} exceeds lattice side {n}")));
        }
        let start = (n - side) / 2;
        let mut values = vec![0.0; lattice.site_count()];
        for r in start..start + side {
            for c in start..start + side {
                values[r * n + c] = intensity;
            }
        }
        Self::from_values(lattice, values)
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, site: SiteId) -> f64 {
        self.values[self.lattice.index(site)]
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }
}

/// Samples `f` on the lattice. Site `(r, c)` takes `f(c/(N-1), r/(N-1))`; the
/// single site of a 1×1 lattice takes `f(0, 0)`.
pub fn discretize<F>(f: F, side: usize) -> Result<DiscretizedPicture>
where
    F: Fn(f64, f64) -> f64,
{
    let lattice = Lattice::new(side)?;
    let scale = if side > 1 { 1.0 / (side - 1) as f64 } else { 0.0 };
    let values = lattice
        .sites()
        .map(|s| f(s.col as f64 * scale, s.row as f64 * scale))
        .collect();
    DiscretizedPicture::from_values(lattice, values)
}

/// Side of the largest axial square `{(r+i, c+j) : 0 <= i, j < k}` fully
/// contained in the mask.
pub fn largest_square(mask: &SiteMask) -> usize {
    let n = mask.lattice().side();
    // run[c] holds the largest square with bottom-right corner at (r, c)
    let mut prev = vec![0usize; n];
    let mut cur = vec![0usize; n];
    let mut best = 0;
    for r in 0..n {
        for c in 0..n {
            cur[c] = if mask.is_marked(SiteId::new(r, c)) {
                if r == 0 || c == 0 {
                    1
                } else {
                    1 + prev[c].min(cur[c - 1]).min(prev[c - 1])
                }
            } else {
                0
            };
            best = best.max(cur[c]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

/// Bulk condition: some translate `s + T^(side)` lies entirely in the mask.
pub fn contains_square(mask: &SiteMask, side: usize) -> bool {
    side <= mask.lattice().side() && largest_square(mask) >= side
}
