use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CoalescedBundle, IndexSet, MeetingTimes};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest `n` for exhaustive scheme enumeration.
pub const MAX_ENUMERATION_N: usize = 8;

/// A coalescence scheme `(j_1, …, j_k) ∈ Sh_{n,k}`: at the `i`-th collision
/// the blocks `j_i` and `j_i + 1` (1-based, in the current listing by
/// ascending minima) merge. Entries satisfy `1 ≤ j_i ≤ n − i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scheme {
    n: usize,
    entries: Vec<usize>,
}

impl Scheme {
    pub fn new(n: usize, entries: Vec<usize>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Scheme("n must be at least 1".into()));
        }
        if entries.len() >= n {
            return Err(Error::Scheme(format!(
                "{} collisions impossible among {n} paths",
                entries.len()
            )));
        }
        for (i, &j) in entries.iter().enumerate() {
            if j == 0 || j > n - (i + 1) {
                return Err(Error::Scheme(format!(
                    "entry j_{} = {j} outside 1..={}",
                    i + 1,
                    n - (i + 1)
                )));
            }
        }
        Ok(Self { n, entries })
    }

    pub fn empty(n: usize) -> Self {
        Self { n, entries: Vec::new() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of collisions `k`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    /// Number of distinct terminal values under this scheme.
    pub fn survivors(&self) -> usize {
        self.n - self.entries.len()
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:", self.n, self.entries.len())?;
        for (i, j) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{j}")?;
        }
        Ok(())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    /// `n:k:j1,…,jk`; the empty scheme is `n:0:`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Scheme(format!("cannot parse `{s}` as n:k:j1,…,jk"));
        let mut parts = s.trim().splitn(3, ':');
        let n: usize = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let k: usize = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let rest = parts.next().ok_or_else(bad)?;
        let entries = rest
            .split(',')
            .filter(|t| !t.is_empty())
            .map(|t| t.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        if entries.len() != k {
            return Err(Error::Scheme(format!("`{s}` declares {k} entries, has {}", entries.len())));
        }
        Scheme::new(n, entries)
    }
}

impl Serialize for Scheme {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Scheme {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// `|Sh_{n,k}| = ∏_{i=1..k} (n − i)`; 1 for the empty scheme.
pub fn scheme_count(n: usize, k: usize) -> usize {
    if k >= n.max(1) && k > 0 {
        return 0;
    }
    (1..=k).map(|i| n - i).product()
}

/// All of `Sh_n`, grouped by `k = 0, …, n − 1`.
pub fn enumerate_schemes(n: usize) -> Result<Vec<Vec<Scheme>>> {
    if n == 0 || n > MAX_ENUMERATION_N {
        return Err(Error::Config(format!(
            "scheme enumeration supports 1 ≤ n ≤ {MAX_ENUMERATION_N}, got {n}"
        )));
    }
    let mut groups = vec![vec![Scheme::empty(n)]];
    for k in 1..n {
        let next = groups[k - 1]
            .iter()
            .flat_map(|s| {
                (1..=n - k).map(move |j| {
                    let mut e = s.entries.clone();
                    e.push(j);
                    Scheme { n, entries: e }
                })
            })
            .collect();
        groups.push(next);
    }
    Ok(groups)
}

/// Reads the scheme off a coalesced bundle: the `p`-th event contributes
/// the (1-based) index of its lower block in the listing current at that
/// event.
pub fn extract_scheme<F: Scalar>(cb: &CoalescedBundle<F>) -> Scheme {
    Scheme { n: cb.n(), entries: cb.events().iter().map(|e| e.lower + 1).collect() }
}

/// One step of a scheme replay; all indices are 0-based coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayEvent {
    /// Lower and upper merged blocks as index intervals `(lo, hi)`.
    pub lower: (usize, usize),
    pub upper: (usize, usize),
    /// Coordinate whose trajectory stops being its own at this event.
    pub absorbed: usize,
    /// Meeting pair (minimum of lower block, minimum of upper block).
    pub pair: (usize, usize),
}

/// Deterministic block history of a scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemeReplay {
    n: usize,
    events: Vec<ReplayEvent>,
    partition: Vec<(usize, usize)>,
    survivors: IndexSet,
    cutoff_event: Vec<Option<usize>>,
}

pub fn scheme_replay(n: usize, s: &Scheme) -> Result<SchemeReplay> {
    if s.n() != n {
        return Err(Error::Scheme(format!("scheme {s} is not a scheme for n = {n}")));
    }
    let mut blocks: Vec<(usize, usize)> = (0..n).map(|k| (k, k)).collect();
    let mut events = Vec::with_capacity(s.len());
    let mut cutoff_event = vec![None; n];
    for (p, &j) in s.entries().iter().enumerate() {
        let b = j - 1;
        if b + 1 >= blocks.len() {
            return Err(Error::Scheme(format!("entry {j} of {s} has no right neighbour")));
        }
        let (lower, upper) = (blocks[b], blocks[b + 1]);
        cutoff_event[upper.0] = Some(p);
        events.push(ReplayEvent { lower, upper, absorbed: upper.0, pair: (lower.0, upper.0) });
        blocks[b] = (lower.0, upper.1);
        blocks.remove(b + 1);
    }
    let survivors = IndexSet::new(blocks.iter().map(|b| b.0).collect())?;
    Ok(SchemeReplay { n, events, partition: blocks, survivors, cutoff_event })
}

impl SchemeReplay {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn events(&self) -> &[ReplayEvent] {
        &self.events
    }

    /// Final partition `π_1, …, π_{n−k}` as intervals.
    pub fn partition(&self) -> &[(usize, usize)] {
        &self.partition
    }

    /// `I(s)`: minima of the final blocks.
    pub fn survivors(&self) -> &IndexSet {
        &self.survivors
    }

    /// Event at which coordinate `k` is cut off (it is the larger element of
    /// that event's meeting pair); `None` means it runs to `T`.
    pub fn cutoff_event(&self, k: usize) -> Option<usize> {
        self.cutoff_event[k]
    }

    /// Block list after the first `p` events.
    pub fn blocks_after(&self, p: usize) -> Vec<(usize, usize)> {
        let mut blocks: Vec<(usize, usize)> = (0..self.n).map(|k| (k, k)).collect();
        for e in &self.events[..p] {
            let b = blocks.iter().position(|&x| x == e.lower).expect("replay is consistent");
            blocks[b] = (e.lower.0, e.upper.1);
            blocks.remove(b + 1);
        }
        blocks
    }

    /// Per-coordinate cutoff nodes read from pairwise meeting times through
    /// the meeting pairs of this scheme: `θ_{λ_1k λ_2k}`.
    pub fn cutoffs_from_meetings(&self, meetings: &MeetingTimes) -> Vec<usize> {
        (0..self.n)
            .map(|k| match self.cutoff_event[k] {
                Some(p) => {
                    let (i, j) = self.events[p].pair;
                    meetings.node(i, j)
                }
                None => meetings.node(k, k),
            })
            .collect()
    }

    /// Per-coordinate cutoff nodes from the nodes of the observed merge
    /// events (event `p` at `event_nodes[p]`); `steps` for survivors.
    pub fn cutoffs_from_event_nodes(&self, event_nodes: &[usize], steps: usize) -> Vec<usize> {
        (0..self.n)
            .map(|k| self.cutoff_event[k].map_or(steps, |p| event_nodes[p]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::{coalesce_bundle, pairwise_meeting_times};
    use super::*;

    fn s(n: usize, e: &[usize]) -> Scheme {
        Scheme::new(n, e.to_vec()).unwrap()
    }

    #[test]
    fn counts() {
        let g3 = enumerate_schemes(3).unwrap();
        assert_eq!(g3.iter().map(Vec::len).collect::<Vec<_>>(), vec![1, 2, 2]);
        let g4 = enumerate_schemes(4).unwrap();
        assert_eq!(g4.iter().map(Vec::len).sum::<usize>(), 16);
        assert_eq!(enumerate_schemes(1).unwrap(), vec![vec![Scheme::empty(1)]]);
        assert!(enumerate_schemes(0).is_err());
        assert!(enumerate_schemes(9).is_err());
        assert_eq!(scheme_count(4, 3), 6);
        assert_eq!(scheme_count(4, 0), 1);
        assert_eq!(scheme_count(4, 4), 0);
    }

    #[test]
    fn entry_ranges() {
        assert!(Scheme::new(3, vec![3]).is_err());
        assert!(Scheme::new(3, vec![2, 2]).is_err());
        assert!(Scheme::new(3, vec![1, 1, 1]).is_err());
        assert!(Scheme::new(3, vec![0]).is_err());
    }

    #[test]
    fn text_form() {
        assert_eq!(s(3, &[2, 1]).to_string(), "3:2:2,1");
        assert_eq!(Scheme::empty(4).to_string(), "4:0:");
        assert_eq!("4:0:".parse::<Scheme>().unwrap(), Scheme::empty(4));
        assert_eq!("3:2:2,1".parse::<Scheme>().unwrap(), s(3, &[2, 1]));
        assert!("3:1:2,1".parse::<Scheme>().is_err());
        assert!("3:1".parse::<Scheme>().is_err());
    }

    #[test]
    fn replay_single_merge() {
        let r = scheme_replay(3, &s(3, &[1])).unwrap();
        assert_eq!(r.partition(), &[(0, 1), (2, 2)]);
        assert_eq!(r.survivors().as_slice(), &[0, 2]);
    }

    #[test]
    fn replay_two_merges() {
        let r = scheme_replay(3, &s(3, &[2, 1])).unwrap();
        assert_eq!(r.events()[0].lower, (1, 1));
        assert_eq!(r.events()[0].upper, (2, 2));
        assert_eq!(r.events()[1].lower, (0, 0));
        assert_eq!(r.events()[1].upper, (1, 2));
        assert_eq!(r.events()[0].pair, (1, 2));
        assert_eq!(r.events()[1].pair, (0, 1));
        assert_eq!(r.survivors().as_slice(), &[0]);
        assert_eq!(r.cutoff_event(2), Some(0));
        assert_eq!(r.cutoff_event(1), Some(1));
        assert_eq!(r.cutoff_event(0), None);
    }

    #[test]
    fn replay_empty() {
        let r = scheme_replay(2, &Scheme::empty(2)).unwrap();
        assert_eq!(r.partition(), &[(0, 0), (1, 1)]);
        assert_eq!(r.survivors().as_slice(), &[0, 1]);
        assert!(r.events().is_empty());
        assert!(scheme_replay(3, &Scheme::empty(2)).is_err());
    }

    #[test]
    fn extraction_on_fixtures() {
        let cb = coalesce_bundle(three_paths()).unwrap();
        assert_eq!(extract_scheme(&cb), s(3, &[2, 1]));
        let cb = coalesce_bundle(only_lower_pair()).unwrap();
        assert_eq!(extract_scheme(&cb), s(3, &[1]));
        assert_eq!(cb.survivors(), vec![0, 2]);
    }

    #[test]
    fn cutoffs_agree_on_fixture() {
        let free = three_paths();
        let mt = pairwise_meeting_times(&free);
        let cb = coalesce_bundle(free).unwrap();
        let r = scheme_replay(3, &extract_scheme(&cb)).unwrap();
        let nodes: Vec<usize> = cb.events().iter().map(|e| e.node).collect();
        assert_eq!(r.cutoffs_from_meetings(&mt), vec![10, 7, 3]);
        assert_eq!(r.cutoffs_from_event_nodes(&nodes, 10), cb.absorption_nodes());
    }

    #[test]
    fn blocks_stay_contiguous_for_all_schemes() {
        for n in 1..=6 {
            for group in enumerate_schemes(n).unwrap() {
                for sc in group {
                    let r = scheme_replay(n, &sc).unwrap();
                    for p in 0..=sc.len() {
                        let blocks = r.blocks_after(p);
                        assert_eq!(blocks.len(), n - p);
                        assert_eq!(blocks[0].0, 0);
                        assert_eq!(blocks.last().unwrap().1, n - 1);
                        assert!(blocks.windows(2).all(|w| w[0].1 + 1 == w[1].0));
                    }
                    assert_eq!(r.survivors().len(), n - sc.len());
                    assert!(r.survivors().contains(0));
                }
            }
        }
    }
}
