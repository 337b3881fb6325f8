//! Level sets of observed images and their connected clusters.
//!
//! The labeling core is a single forward scan with a union-find (union by
//! size, full path compression). Each site is joined with its three neighbors
//! of smaller linear index, so every lattice edge is examined once.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::lattice::{Lattice, SiteId, BACKWARD_OFFSETS};
use crate::noise::ObservedImage;

/// Binary marking of lattice sites.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteMask {
    lattice: Lattice,
    marked: Vec<bool>,
}

impl SiteMask {
    pub fn empty(lattice: Lattice) -> Self {
        SiteMask {
            lattice,
            marked: vec![false; lattice.site_count()],
        }
    }

    pub fn full(lattice: Lattice) -> Self {
        SiteMask {
            lattice,
            marked: vec![true; lattice.site_count()],
        }
    }

    pub fn from_sites(lattice: Lattice, sites: impl IntoIterator<Item = SiteId>) -> Self {
        let mut m = Self::empty(lattice);
        for s in sites {
            m.mark(s);
        }
        m
    }

    /// Mask from a predicate on linear site indices.
    pub fn from_fn(lattice: Lattice, mut pred: impl FnMut(usize) -> bool) -> Self {
        SiteMask {
            lattice,
            marked: (0..lattice.site_count()).map(&mut pred).collect(),
        }
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn mark(&mut self, site: SiteId) {
        let i = self.lattice.index(site);
        self.marked[i] = true;
    }

    pub fn unmark(&mut self, site: SiteId) {
        let i = self.lattice.index(site);
        self.marked[i] = false;
    }

    #[inline]
    pub fn is_marked(&self, site: SiteId) -> bool {
        self.marked[self.lattice.index(site)]
    }

    #[inline]
    pub fn is_marked_index(&self, index: usize) -> bool {
        self.marked[index]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.marked
    }

    pub fn count(&self) -> usize {
        self.marked.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.marked.iter().any(|&m| m)
    }

    pub fn marked_sites(&self) -> impl Iterator<Item = SiteId> + '_ {
        self.marked
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| self.lattice.site(i))
    }

    pub fn is_subset_of(&self, other: &SiteMask) -> bool {
        self.lattice == other.lattice
            && self.marked.iter().zip(&other.marked).all(|(&a, &b)| !a || b)
    }
}

/// Decomposition of a mask into connected clusters. A cluster's label is the
/// smallest linear index among its sites.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLabeling {
    lattice: Lattice,
    labels: Vec<Option<usize>>,
    cluster_sizes: BTreeMap<usize, usize>,
    max_cluster_size: usize,
}

impl ClusterLabeling {
    fn from_labels(lattice: Lattice, labels: Vec<Option<usize>>) -> Self {
        let mut cluster_sizes = BTreeMap::new();
        for l in labels.iter().flatten() {
            *cluster_sizes.entry(*l).or_insert(0) += 1;
        }
        let max_cluster_size = cluster_sizes.values().copied().max().unwrap_or(0);
        ClusterLabeling {
            lattice,
            labels,
            cluster_sizes,
            max_cluster_size,
        }
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn label(&self, site: SiteId) -> Option<usize> {
        self.labels[self.lattice.index(site)]
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn cluster_sizes(&self) -> &BTreeMap<usize, usize> {
        &self.cluster_sizes
    }

    pub fn cluster_count(&self) -> usize {
        self.cluster_sizes.len()
    }

    pub fn max_cluster_size(&self) -> usize {
        self.max_cluster_size
    }

    /// Cluster sizes in decreasing order.
    pub fn size_multiset(&self) -> Vec<usize> {
        let mut v: Vec<_> = self.cluster_sizes.values().copied().collect();
        v.sort_unstable_by(|a, b| b.cmp(a));
        v
    }
}

/// Disjoint-set forest with union by size and path compression. Counts
/// elementary operations (pointer hops and unions) for complexity probes.
#[derive(Debug, Clone, Default)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
    ops: u64,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        let mut uf = UnionFind::default();
        uf.reset(n);
        uf
    }

    pub fn reset(&mut self, n: usize) {
        assert!(n <= u32::MAX as usize, "union-find supports at most 2^32 elements");
        self.parent.clear();
        self.parent.extend(0..n as u32);
        self.size.clear();
        self.size.resize(n, 1);
    }

    #[inline]
    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] as usize != root {
            root = self.parent[root] as usize;
            self.ops += 1;
        }
        let mut cur = x;
        while self.parent[cur] as usize != root {
            let next = self.parent[cur] as usize;
            self.parent[cur] = root as u32;
            cur = next;
        }
        root
    }

    /// Merges the sets of `a` and `b`; returns the surviving root.
    #[inline]
    pub fn union(&mut self, a: usize, b: usize) -> usize {
        self.ops += 1;
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return ra;
        }
        let (big, small) = if self.size[ra] >= self.size[rb] { (ra, rb) } else { (rb, ra) };
        self.parent[small] = big as u32;
        self.size[big] += self.size[small];
        big
    }

    pub fn set_size(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r] as usize
    }

    pub fn ops(&self) -> u64 {
        self.ops
    }

    pub fn take_ops(&mut self) -> u64 {
        std::mem::take(&mut self.ops)
    }
}

const TOP: u8 = 1;
const BOTTOM: u8 = 2;
const LEFT: u8 = 4;
const RIGHT: u8 = 8;

#[inline]
fn spans(flags: u8) -> bool {
    flags & (TOP | BOTTOM) == (TOP | BOTTOM) || flags & (LEFT | RIGHT) == (LEFT | RIGHT)
}

/// Outcome of one labeling scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScanSummary {
    pub max_cluster_size: usize,
    pub marked: usize,
    /// Some cluster touches rows `0` and `N-1`, or columns `0` and `N-1`.
    pub crossing: bool,
}

/// Reusable buffers for repeated scans of the same lattice size.
#[derive(Debug, Clone, Default)]
pub struct ClusterScratch {
    uf: UnionFind,
    marked: Vec<bool>,
    flags: Vec<u8>,
    site_visits: u64,
}

impl ClusterScratch {
    pub fn new() -> Self {
        Self::default()
    }

    /// Labels the sites satisfying `pred` (by linear index) in one pass.
    pub fn scan(&mut self, lattice: Lattice, mut pred: impl FnMut(usize) -> bool) -> ScanSummary {
        let n = lattice.side();
        let count = lattice.site_count();
        self.uf.reset(count);
        self.marked.clear();
        self.marked.resize(count, false);
        self.flags.clear();
        self.flags.resize(count, 0);
        self.site_visits += count as u64;

        let mut summary = ScanSummary::default();
        for r in 0..n {
            for c in 0..n {
                let i = r * n + c;
                if !pred(i) {
                    continue;
                }
                self.marked[i] = true;
                summary.marked += 1;
                let mut f = 0;
                if r == 0 {
                    f |= TOP;
                }
                if r == n - 1 {
                    f |= BOTTOM;
                }
                if c == 0 {
                    f |= LEFT;
                }
                if c == n - 1 {
                    f |= RIGHT;
                }
                self.flags[i] = f;
                let mut root = i;
                for &(dr, dc) in &BACKWARD_OFFSETS {
                    let (Some(nr), Some(nc)) = (r.checked_add_signed(dr), c.checked_add_signed(dc)) else {
                        continue;
                    };
                    if nc >= n {
                        continue;
                    }
                    let j = nr * n + nc;
                    if self.marked[j] {
                        let other = self.uf.find(j);
                        if other != root {
                            let merged = self.uf.union(root, other);
                            self.flags[merged] = self.flags[root] | self.flags[other];
                            root = merged;
                        }
                    }
                }
                let size = self.uf.size[root] as usize;
                summary.max_cluster_size = summary.max_cluster_size.max(size);
                summary.crossing |= spans(self.flags[root]);
            }
        }
        summary
    }

    pub fn scan_mask(&mut self, mask: &SiteMask) -> ScanSummary {
        self.scan(mask.lattice(), |i| mask.is_marked_index(i))
    }

    /// Scan of the level set of `image` at `a` on the given side.
    pub fn scan_level(&mut self, image: &ObservedImage, a: f64, side: LevelSide) -> ScanSummary {
        scan_values(self, image.lattice(), image.values(), a, side)
    }

    /// Elementary operations since the last call: union-find pointer hops and
    /// unions plus one per visited site.
    pub fn take_ops(&mut self) -> u64 {
        self.uf.take_ops() + std::mem::take(&mut self.site_visits)
    }

    /// Canonical labels of the most recent scan.
    fn labels(&mut self) -> Vec<Option<usize>> {
        let count = self.marked.len();
        let mut canonical: Vec<usize> = vec![usize::MAX; count];
        let mut labels = vec![None; count];
        for i in 0..count {
            if self.marked[i] {
                let root = self.uf.find(i);
                if canonical[root] == usize::MAX {
                    // first (smallest) index of this cluster in scan order
                    canonical[root] = i;
                }
                labels[i] = Some(canonical[root]);
            }
        }
        labels
    }
}

pub(crate) fn scan_values(
    scratch: &mut ClusterScratch,
    lattice: Lattice,
    values: &[f64],
    a: f64,
    side: LevelSide,
) -> ScanSummary {
    match side {
        LevelSide::Plus => scratch.scan(lattice, |i| values[i] >= a),
        LevelSide::Minus => scratch.scan(lattice, |i| values[i] <= -a),
    }
}

/// Which level set a statistic is taken on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelSide {
    /// `{Y >= a}`
    Plus,
    /// `{Y <= -a}`
    Minus,
}

/// `{s : Y(s) >= a}`.
pub fn super_level_set(image: &ObservedImage, a: f64) -> SiteMask {
    let v = image.values();
    SiteMask::from_fn(image.lattice(), |i| v[i] >= a)
}

/// `{s : Y(s) <= -a}`, intended for `a >= 0`.
pub fn sub_level_set(image: &ObservedImage, a: f64) -> SiteMask {
    let v = image.values();
    SiteMask::from_fn(image.lattice(), |i| v[i] <= -a)
}

pub fn level_set(image: &ObservedImage, a: f64, side: LevelSide) -> SiteMask {
    match side {
        LevelSide::Plus => super_level_set(image, a),
        LevelSide::Minus => sub_level_set(image, a),
    }
}

pub fn label_clusters(mask: &SiteMask) -> ClusterLabeling {
    let mut scratch = ClusterScratch::new();
    scratch.scan_mask(mask);
    ClusterLabeling::from_labels(mask.lattice(), scratch.labels())
}

/// Breadth-first labeling over the explicit neighbor relation; shares no code
/// with the union-find path.
pub fn label_clusters_oracle(mask: &SiteMask) -> ClusterLabeling {
    let lattice = mask.lattice();
    let mut labels: Vec<Option<usize>> = vec![None; lattice.site_count()];
    let mut queue = VecDeque::new();
    for start in 0..lattice.site_count() {
        if !mask.is_marked_index(start) || labels[start].is_some() {
            continue;
        }
        labels[start] = Some(start);
        queue.push_back(start);
        while let Some(cur) = queue.pop_front() {
            for nb in lattice.neighbor_indices(cur) {
                if mask.is_marked_index(nb) && labels[nb].is_none() {
                    labels[nb] = Some(start);
                    queue.push_back(nb);
                }
            }
        }
    }
    ClusterLabeling::from_labels(lattice, labels)
}

/// `T₊(a)` or `T₋(a)`: size of the largest cluster of the level set.
pub fn max_cluster_statistic(image: &ObservedImage, a: f64, side: LevelSide) -> usize {
    ClusterScratch::new().scan_level(image, a, side).max_cluster_size
}

/// Whether some cluster touches both extreme rows or both extreme columns.
pub fn crossing_cluster_exists(mask: &SiteMask) -> bool {
    ClusterScratch::new().scan_mask(mask).crossing
}
