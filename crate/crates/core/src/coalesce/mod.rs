//! Coalescing construction, collision times, and coalescence schemes.
//!
//! Coordinates are 0-based throughout the Rust API. Scheme entries keep
//! their 1-based combinatorial range `j_i ∈ {1, …, n − i}` (see [`Scheme`]).

mod index;
mod scheme;

pub use index::{scatter, slice, IndexSet, SliceMode};
pub use scheme::{
    enumerate_schemes, extract_scheme, scheme_count, scheme_replay, ReplayEvent, Scheme,
    SchemeReplay,
};

use crate::error::Result;
#[cfg(test)]
use crate::error::Error;
use crate::paths::{check_ordered, FreePaths, PinnedBundle, TimeGrid, WienerBundle};
use crate::scalar::Scalar;

/// One merge of two adjacent blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeEvent<F> {
    /// Grid node at which the order violation was first seen.
    pub node: usize,
    /// Index of the lower block in the block list current at the event.
    pub lower: usize,
    /// Leader (smallest coordinate) of the lower block; keeps moving.
    pub survivor: usize,
    /// Leader of the upper block; its absorption time is `node`.
    pub absorbed: usize,
    /// Linearly interpolated crossing time, for diagnostics only.
    pub crossing_time: F,
}

/// Coalesced trajectories together with the free paths they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalescedBundle<F> {
    free: FreePaths<F>,
    values: Vec<F>,
    absorbed_at: Vec<Option<usize>>,
    events: Vec<MergeEvent<F>>,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    lo: usize,
    hi: usize,
}

/// Event-driven adjacent-block merging.
///
/// At each node, adjacent alive blocks whose leaders are not in strict order
/// are merged, lower block index first; after a merge the new block is
/// re-checked against its right neighbour at the same node. A merged block
/// follows the free path of its smallest coordinate.
pub fn coalesce_bundle<F: Scalar>(free: FreePaths<F>) -> Result<CoalescedBundle<F>> {
    let n = free.n();
    let grid = *free.grid();
    let m = grid.steps();
    check_ordered(&free.starts())?;

    let mut blocks: Vec<Block> = (0..n).map(|k| Block { lo: k, hi: k }).collect();
    let mut absorbed_at = vec![None; n];
    let mut merged_into = vec![usize::MAX; n];
    let mut events = Vec::new();
    let dt = grid.dt();

    for i in 1..=m {
        let mut b = 0;
        while b + 1 < blocks.len() {
            let lo = blocks[b].lo;
            let up = blocks[b + 1].lo;
            let gap = free.at(up, i) - free.at(lo, i);
            if gap > F::zero() {
                b += 1;
                continue;
            }
            let prev = free.at(up, i - 1) - free.at(lo, i - 1);
            let denom = prev - gap;
            let frac = if denom > F::zero() { prev / denom } else { F::one() };
            events.push(MergeEvent {
                node: i,
                lower: b,
                survivor: lo,
                absorbed: up,
                crossing_time: grid.node(i - 1) + dt * frac,
            });
            absorbed_at[up] = Some(i);
            merged_into[up] = lo;
            blocks[b].hi = blocks[b + 1].hi;
            blocks.remove(b + 1);
        }
        if blocks.len() == 1 {
            break;
        }
    }

    // Coordinate k follows its free path until absorption, then the
    // coalesced path of the coordinate it merged into (always k' < k).
    let p = grid.points();
    let mut values = vec![F::zero(); n * p];
    for k in 0..n {
        let stop = absorbed_at[k].unwrap_or(p);
        for i in 0..p {
            values[k * p + i] = if i < stop {
                free.at(k, i)
            } else {
                values[merged_into[k] * p + i]
            };
        }
    }

    Ok(CoalescedBundle { free, values, absorbed_at, events })
}

/// Coalesces `u + W`.
pub fn coalesce_wiener<F: Scalar>(w: &WienerBundle<F>, u: &[F]) -> Result<CoalescedBundle<F>> {
    coalesce_bundle(FreePaths::from_wiener(w, u)?)
}

/// Coalesces a pinned bundle (free paths started at `u`).
pub fn coalesce_pinned<F: Scalar>(p: &PinnedBundle<F>) -> Result<CoalescedBundle<F>> {
    coalesce_bundle(FreePaths::from_pinned(p))
}

impl<F: Scalar> CoalescedBundle<F> {
    pub fn grid(&self) -> &TimeGrid<F> {
        self.free.grid()
    }

    pub fn n(&self) -> usize {
        self.free.n()
    }

    pub fn starts(&self) -> Vec<F> {
        self.free.starts()
    }

    pub fn free(&self) -> &FreePaths<F> {
        &self.free
    }

    /// Coalesced trajectory of coordinate `k`.
    pub fn path(&self, k: usize) -> &[F] {
        let p = self.grid().points();
        &self.values[k * p..(k + 1) * p]
    }

    pub fn terminal(&self, k: usize) -> F {
        self.path(k)[self.grid().steps()]
    }

    pub fn events(&self) -> &[MergeEvent<F>] {
        &self.events
    }

    /// Node of `τ_k`; `m` (time `T`) when never absorbed, and always for
    /// `k = 0`.
    pub fn absorption_node(&self, k: usize) -> usize {
        self.absorbed_at[k].unwrap_or(self.grid().steps())
    }

    pub fn absorption_nodes(&self) -> Vec<usize> {
        (0..self.n()).map(|k| self.absorption_node(k)).collect()
    }

    pub fn absorption_time(&self, k: usize) -> F {
        self.grid().node(self.absorption_node(k))
    }

    pub fn is_absorbed(&self, k: usize) -> bool {
        self.absorbed_at[k].is_some()
    }

    /// Coordinates still leading a block at `T`, ascending.
    pub fn survivors(&self) -> Vec<usize> {
        (0..self.n()).filter(|&k| self.absorbed_at[k].is_none()).collect()
    }

    /// Distinct terminal values, ascending.
    pub fn survivor_values(&self) -> Vec<F> {
        self.survivors().into_iter().map(|k| self.terminal(k)).collect()
    }

    /// Blocks `(lo, hi)` alive just after processing `node`.
    pub fn blocks_at(&self, node: usize) -> Vec<(usize, usize)> {
        let mut blocks: Vec<(usize, usize)> = (0..self.n()).map(|k| (k, k)).collect();
        for e in self.events.iter().take_while(|e| e.node <= node) {
            blocks[e.lower].1 = blocks[e.lower + 1].1;
            blocks.remove(e.lower + 1);
        }
        blocks
    }

    /// Whether two merge events share a grid node.
    pub fn has_tied_events(&self) -> bool {
        self.events.windows(2).any(|w| w[0].node == w[1].node)
    }
}

/// First-meeting nodes `θ_ij` of the free paths; `None` stands for `T`
/// (no order violation on the grid), and the diagonal is always `T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeetingTimes {
    n: usize,
    steps: usize,
    nodes: Vec<Option<usize>>,
}

impl MeetingTimes {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn raw(&self, i: usize, j: usize) -> Option<usize> {
        self.nodes[i * self.n + j]
    }

    /// Node of `θ_ij`, `m` when it equals `T`.
    pub fn node(&self, i: usize, j: usize) -> usize {
        self.raw(i, j).unwrap_or(self.steps)
    }

    pub fn time<F: Scalar>(&self, i: usize, j: usize, grid: &TimeGrid<F>) -> F {
        grid.node(self.node(i, j))
    }
}

/// For every pair `i < j`, the first node where `x_i < x_j` fails.
pub fn pairwise_meeting_times<F: Scalar>(free: &FreePaths<F>) -> MeetingTimes {
    let n = free.n();
    let m = free.grid().steps();
    let mut nodes = vec![None; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let (pi, pj) = (free.path(i), free.path(j));
            let hit = (1..=m).find(|&t| !(pi[t] < pj[t]));
            nodes[i * n + j] = hit;
            nodes[j * n + i] = hit;
        }
    }
    MeetingTimes { n, steps: m, nodes }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn make_grid(horizon: f64, steps: usize) -> crate::Result<crate::paths::TimeGrid<f64>> {
        crate::paths::make_grid(horizon, steps)
    }
    
    #[test]
    fn three_path_fixture() {
        let cb = coalesce_bundle(three_paths()).unwrap();
        let nodes: Vec<usize> = cb.events().iter().map(|e| e.node).collect();
        assert_eq!(nodes, vec![3, 7]);
        assert_eq!(cb.absorption_nodes(), vec![10, 7, 3]);
        assert_eq!(cb.events()[0].absorbed, 2);
        assert_eq!(cb.events()[1].absorbed, 1);
        assert!((cb.events()[0].crossing_time - 0.28).abs() < 1e-12);
        assert!((cb.events()[1].crossing_time - 0.68).abs() < 1e-12);
        assert_eq!(cb.survivors(), vec![0]);
        // after absorption coordinate 3 copies coordinate 2, then coordinate 1
        assert_eq!(cb.path(2)[5], cb.free().at(1, 5));
        assert_eq!(cb.path(2)[9], cb.free().at(0, 9));
        assert_eq!(cb.blocks_at(5), vec![(0, 0), (1, 2)]);
        assert_eq!(cb.blocks_at(10), vec![(0, 2)]);
    }

    #[test]
    fn meeting_times_fixture() {
        let mt = pairwise_meeting_times(&three_paths());
        assert_eq!(mt.node(1, 2), 3);
        assert_eq!(mt.node(0, 1), 7);
        for k in 0..3 {
            assert_eq!(mt.raw(k, k), None);
            assert_eq!(mt.node(k, k), 10);
        }
    }

    #[test]
    fn non_crossing_paths() {
        let g = make_grid(1.0, 8).unwrap();
        let v: Vec<f64> = (0..3).flat_map(|k| g.nodes().into_iter().map(move |t| k as f64 + 0.1 * t)).collect();
        let free = FreePaths::from_values(g, 3, v.clone()).unwrap();
        let mt = pairwise_meeting_times(&free);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(mt.node(i, j), 8);
            }
        }
        let cb = coalesce_bundle(free).unwrap();
        assert!(cb.events().is_empty());
        assert_eq!(cb.absorption_nodes(), vec![8, 8, 8]);
        for k in 0..3 {
            assert_eq!(cb.path(k), &v[k * 9..(k + 1) * 9]);
        }
    }

    #[test]
    fn unordered_start_is_rejected() {
        let g = make_grid(1.0, 2).unwrap();
        let free = FreePaths::from_values(g, 2, vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(coalesce_bundle(free), Err(Error::Domain(_))));
    }

    #[test]
    fn simultaneous_violations_merge_lower_block_first() {
        // all three cross at node 1
        let g = make_grid(1.0, 2).unwrap();
        let v = vec![0.0, 5.0, 5.0, 1.0, 3.0, 3.0, 2.0, 1.0, 1.0];
        let cb = coalesce_bundle(FreePaths::from_values(g, 3, v).unwrap()).unwrap();
        let lowers: Vec<usize> = cb.events().iter().map(|e| e.lower).collect();
        assert_eq!(lowers, vec![0, 0]);
        assert!(cb.has_tied_events());
        assert_eq!(extract_scheme(&cb).entries(), &[1, 1]);
    }
}
