use crate::error::{Error, Result};

/// Sorted set of 0-based coordinate indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct IndexSet(Vec<usize>);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceMode {
    /// `z^K`: keep only the listed coordinates.
    Keep,
    /// `z^{-K}`: remove the listed coordinates.
    Drop,
}

impl IndexSet {
    pub fn new(mut elems: Vec<usize>) -> Result<Self> {
        elems.sort_unstable();
        if elems.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate index in {elems:?}")));
        }
        Ok(Self(elems))
    }

    /// From the 1-based notation `{2, 4}`.
    pub fn from_one_based(elems: &[usize]) -> Result<Self> {
        if let Some(&bad) = elems.iter().find(|&&e| e == 0) {
            return Err(Error::IndexOutOfRange { index: bad, len: 0 });
        }
        Self::new(elems.iter().map(|e| e - 1).collect())
    }

    pub fn full(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.0.binary_search(&k).is_ok()
    }

    pub fn max(&self) -> Option<usize> {
        self.0.last().copied()
    }

    pub fn complement(&self, n: usize) -> Self {
        Self((0..n).filter(|k| !self.contains(*k)).collect())
    }

    pub fn check_range(&self, n: usize) -> Result<()> {
        match self.max() {
            Some(k) if k >= n => Err(Error::IndexOutOfRange { index: k + 1, len: n }),
            _ => Ok(()),
        }
    }

    /// Positions in the original vector selected by `z^{self, ±inner}`.
    pub fn compose(&self, inner: &IndexSet, mode: SliceMode) -> Result<Self> {
        Ok(Self(slice(&self.0, inner, mode)?))
    }

    /// All `j`-element subsets of `{0, …, n-1}`, lexicographic.
    pub fn subsets(n: usize, j: usize) -> Vec<IndexSet> {
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(j);
        fn rec(start: usize, n: usize, j: usize, cur: &mut Vec<usize>, out: &mut Vec<IndexSet>) {
            if cur.len() == j {
                out.push(IndexSet(cur.clone()));
                return;
            }
            for k in start..n {
                if n - k < j - cur.len() {
                    break;
                }
                cur.push(k);
                rec(k + 1, n, j, cur, out);
                cur.pop();
            }
        }
        if j <= n {
            rec(0, n, j, &mut cur, &mut out);
        }
        out
    }
}

/// `z^K` (keep) or `z^{-K}` (drop), order preserved.
pub fn slice<T: Copy>(z: &[T], k: &IndexSet, mode: SliceMode) -> Result<Vec<T>> {
    k.check_range(z.len())?;
    Ok(match mode {
        SliceMode::Keep => k.iter().map(|i| z[i]).collect(),
        SliceMode::Drop => z
            .iter()
            .enumerate()
            .filter(|(i, _)| !k.contains(*i))
            .map(|(_, &v)| v)
            .collect(),
    })
}

/// Inverse of slicing: writes `parts[p].1` into the positions `parts[p].0`
/// of an `n`-vector. The index sets must partition `{0, …, n-1}`.
pub fn scatter<T: Copy + Default>(n: usize, parts: &[(&IndexSet, &[T])]) -> Result<Vec<T>> {
    let mut out = vec![T::default(); n];
    let mut seen = vec![false; n];
    for (set, vals) in parts {
        set.check_range(n)?;
        if set.len() != vals.len() {
            return Err(Error::Dimension { expected: set.len(), got: vals.len() });
        }
        for (i, &v) in set.iter().zip(vals.iter()) {
            if seen[i] {
                return Err(Error::Config(format!("index {} assigned twice", i + 1)));
            }
            seen[i] = true;
            out[i] = v;
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::Config(format!("index {} left unassigned", i + 1)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[usize]) -> IndexSet {
        IndexSet::from_one_based(v).unwrap()
    }

    #[test]
    fn keep_and_drop() {
        let z = [5, 7, 9, 11];
        assert_eq!(slice(&z, &set(&[2, 4]), SliceMode::Keep).unwrap(), vec![7, 11]);
        assert_eq!(slice(&z, &set(&[2, 4]), SliceMode::Drop).unwrap(), vec![5, 9]);
    }

    #[test]
    fn composition() {
        let z = [5, 7, 9, 11];
        let outer = slice(&z, &set(&[1, 3, 4]), SliceMode::Keep).unwrap();
        assert_eq!(slice(&outer, &set(&[2]), SliceMode::Keep).unwrap(), vec![9]);
        let pos = set(&[1, 3, 4]).compose(&set(&[2]), SliceMode::Keep).unwrap();
        assert_eq!(pos, set(&[3]));
        let pos = set(&[1, 3, 4]).compose(&set(&[2]), SliceMode::Drop).unwrap();
        assert_eq!(pos, set(&[1, 4]));
    }

    #[test]
    fn out_of_range() {
        assert!(matches!(
            slice(&[1, 2], &set(&[3]), SliceMode::Keep),
            Err(Error::IndexOutOfRange { index: 3, len: 2 })
        ));
        assert!(IndexSet::from_one_based(&[0]).is_err());
        assert!(IndexSet::new(vec![1, 1]).is_err());
    }

    #[test]
    fn scatter_inverts_slicing() {
        let z = [1.0, 2.0, 3.0, 4.0, 5.0];
        let k = set(&[2, 5]);
        let c = k.complement(5);
        let a = slice(&z, &k, SliceMode::Keep).unwrap();
        let b = slice(&z, &k, SliceMode::Drop).unwrap();
        assert_eq!(scatter(5, &[(&k, &a), (&c, &b)]).unwrap(), z.to_vec());
        assert!(scatter(5, &[(&k, &a[..])]).is_err());
    }

    #[test]
    fn subsets_are_counted() {
        assert_eq!(IndexSet::subsets(4, 2).len(), 6);
        assert_eq!(IndexSet::subsets(3, 0).len(), 1);
        assert_eq!(IndexSet::subsets(2, 3).len(), 0);
        assert_eq!(IndexSet::subsets(3, 2)[1], IndexSet(vec![0, 2]));
    }
}
