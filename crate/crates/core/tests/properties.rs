use arratia::coalesce::{
    coalesce_bundle, enumerate_schemes, extract_scheme, scheme_count, scheme_replay, IndexSet, Scheme,
};
use arratia::estimators::{
    coalescence_probability, density_direct, lemma8_check, tie_frequency, DensityTarget, Sector, Simulation,
    Window,
};
use arratia::estimators::MCEstimate;
use arratia::reduce::{replicate, MeanAccumulator};
use arratia::paths::{make_grid, sample_drifted_flow, FreePaths};
use arratia::{DriftSpec, RngStream};
use proptest::prelude::*;

fn sim(u: &[f64], steps: usize, replicas: usize, seed: u64) -> Simulation<f64> {
    Simulation::new(make_grid(1.0, steps).unwrap(), u.to_vec(), replicas, seed).unwrap()
}

#[test]
fn scheme_counts_and_contiguous_blocks() {
    for n in 1..=6 {
        let groups = enumerate_schemes(n).unwrap();
        assert_eq!(groups.len(), n);
        for (k, g) in groups.iter().enumerate() {
            assert_eq!(g.len(), (1..=k).map(|i| n - i).product::<usize>());
            assert_eq!(g.len(), scheme_count(n, k));
            for s in g {
                let r = scheme_replay(n, s).unwrap();
                let blocks = r.partition();
                assert_eq!(blocks.len(), n - k);
                assert_eq!(blocks[0].0, 0);
                assert_eq!(blocks.last().unwrap().1, n - 1);
                for w in blocks.windows(2) {
                    assert_eq!(w[0].1 + 1, w[1].0);
                }
                let heads: Vec<usize> = blocks.iter().map(|b| b.0).collect();
                assert_eq!(r.survivors().as_slice(), heads.as_slice());
            }
        }
    }
}

#[test]
fn extraction_replays_to_simulated_state() {
    let grid = make_grid(1.0, 64).unwrap();
    let u = [0.0, 0.2, 0.5, 0.6];
    let drift = DriftSpec::tanh(1.0, 1.0);
    for r in 0..1000 {
        let mut rng = RngStream::replica(11, r);
        let cb = sample_drifted_flow(&grid, &u, &drift, &mut rng).unwrap();
        let s = extract_scheme(&cb);
        let replay = scheme_replay(4, &s).unwrap();
        assert_eq!(replay.survivors().as_slice(), &cb.survivors()[..], "replica {r}");
        assert_eq!(replay.partition(), cb.blocks_at(grid.steps()).as_slice(), "replica {r}");
        let back: Scheme = s.to_string().parse().unwrap();
        assert_eq!(back, s);
    }
}

fn scheme_strategy() -> impl Strategy<Value = Scheme> {
    (1usize..=7).prop_flat_map(|n| {
        (0..n).prop_flat_map(move |k| {
            let entries: Vec<_> = (1..=k).map(|i| 1..=n - i).collect();
            entries.prop_map(move |e| Scheme::new(n, e).unwrap())
        })
    })
}

/// Free paths on a short grid with values drawn from a small lattice, so
/// that ties are frequent.
fn free_paths_strategy() -> impl Strategy<Value = FreePaths<f64>> {
    (2usize..=5, 2usize..=6).prop_flat_map(|(n, m)| {
        prop::collection::vec(-4i32..=4, n * m).prop_map(move |steps| {
            let grid = make_grid(1.0, m).unwrap();
            let mut values = Vec::with_capacity(n * (m + 1));
            for k in 0..n {
                let mut x = 3 * k as i32;
                values.push(x as f64);
                for i in 0..m {
                    x += steps[k * m + i];
                    values.push(x as f64);
                }
            }
            FreePaths::from_values(grid, n, values).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn scheme_text_round_trip(s in scheme_strategy()) {
        let back: Scheme = s.to_string().parse().unwrap();
        prop_assert_eq!(&back, &s);
        let r = scheme_replay(s.n(), &s).unwrap();
        prop_assert_eq!(r.survivors().len(), s.n() - s.len());
    }

    #[test]
    fn coalesced_paths_are_ordered_and_follow_block_heads(free in free_paths_strategy()) {
        let cb = coalesce_bundle(free.clone()).unwrap();
        let m = free.grid().steps();
        for i in 0..=m {
            for k in 1..cb.n() {
                prop_assert!(cb.path(k - 1)[i] <= cb.path(k)[i]);
            }
            for (lo, hi) in cb.blocks_at(i) {
                for k in lo..=hi {
                    prop_assert_eq!(cb.path(k)[i], free.at(lo, i));
                }
            }
        }
        prop_assert_eq!(cb.survivors().len(), cb.n() - cb.events().len());
        let s = extract_scheme(&cb);
        let replay = scheme_replay(cb.n(), &s).unwrap();
        prop_assert_eq!(replay.survivors().as_slice(), &cb.survivors()[..]);
    }

    #[test]
    fn lower_blocks_ignore_an_unmerged_top_path(free in free_paths_strategy()) {
        let cb = coalesce_bundle(free.clone()).unwrap();
        let n = free.n();
        let head: Vec<f64> = (0..n - 1).flat_map(|k| free.path(k).to_vec()).collect();
        let sub = coalesce_bundle(FreePaths::from_values(*free.grid(), n - 1, head).unwrap()).unwrap();
        if cb.events().iter().all(|e| e.absorbed != n - 1) {
            for k in 0..n - 1 {
                prop_assert_eq!(cb.path(k), sub.path(k));
            }
        }
    }

    #[test]
    fn pooling_is_associative(
        xs in prop::collection::vec(-64i32..64, 3..60),
        cut in (0.0f64..1.0, 0.0f64..1.0),
    ) {
        // Quarter-integers keep every partial sum exact.
        let xs: Vec<f64> = xs.iter().map(|&x| x as f64 / 4.0).collect();
        let (i, j) = {
            let a = (cut.0 * xs.len() as f64) as usize;
            let b = (cut.1 * xs.len() as f64) as usize;
            (a.min(b), a.max(b))
        };
        let est = |v: &[f64]| {
            let mut acc = MeanAccumulator::default();
            v.iter().for_each(|&x| acc.push(x));
            MCEstimate::from_accumulator(&acc)
        };
        let (a, b, c) = (est(&xs[..i]), est(&xs[i..j]), est(&xs[j..]));
        let left = a.pooled(&b).pooled(&c);
        let right = a.pooled(&b.pooled(&c));
        let whole = est(&xs);
        prop_assert_eq!(left.accumulator(), whole.accumulator());
        prop_assert_eq!(right.accumulator(), whole.accumulator());
    }
}

#[test]
fn reduction_is_independent_of_worker_count() {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            replicate(10_000, MeanAccumulator::default, |acc, r| {
                acc.push(RngStream::replica(4, r).normal::<f64>().exp());
            })
        })
    };
    let one = run(1);
    assert_eq!(one, run(2));
    assert_eq!(one, run(8));
}

#[test]
fn ordered_sector_times_factorial_is_full_space() {
    let s = sim(&[0.0, 0.4, 0.9], 128, 4000, 5);
    let w = Window::cube(2, -6.0, 7.0, 0.5).unwrap();
    let target = DensityTarget::Count { k: 2 };
    let drift = DriftSpec::constant(0.5);
    let ordered = density_direct(&s, &drift, &target, &w, Sector::Ordered).unwrap();
    let full = density_direct(&s, &drift, &target, &w, Sector::Full).unwrap();
    assert!((full.integral() - 2.0 * ordered.integral()).abs() < 1e-9);
    let b = w.bins_per_axis()[0];
    for i in 0..b {
        for j in 0..b {
            assert_eq!(full.values[i * b + j], full.values[j * b + i]);
        }
    }
}

#[test]
fn ties_vanish_as_the_grid_refines() {
    let u = [0.0, 0.05, 0.1];
    let freq: Vec<_> = [16, 64, 256, 1024]
        .iter()
        .map(|&m| tie_frequency(&sim(&u, m, 20_000, 3)).unwrap())
        .collect();
    for w in freq.windows(2) {
        assert!(w[0].mean > w[1].mean + 3.0 * w[0].stderr, "{freq:?}");
    }
    assert!(freq[3].mean < freq[0].mean / 4.0, "{freq:?}");
}

#[test]
fn coalescence_probability_is_stable_under_refinement() {
    let rep = coalescence_probability(&sim(&[0.0, 1.0], 1024, 20_000, 9), &[1, 2, 4]).unwrap();
    let bias = rep.estimates.bias.as_ref().unwrap();
    for d in &bias.deltas {
        assert!(d.mean.abs() < 0.02, "{d:?}");
    }
    assert!((rep.estimates.finest().mean - rep.oracle).abs() < 0.03);
}

#[test]
fn stochastic_exponential_has_unit_mean() {
    for drift in [DriftSpec::constant(0.5), DriftSpec::tanh(1.0, 1.0), DriftSpec::sine(0.5)] {
        let w = Window::cube(1, -4.0, 4.0, 0.5).unwrap();
        let rep = lemma8_check(&sim(&[0.0, 0.5, 1.0], 128, 20_000, 21), 1, &drift, &w).unwrap();
        for e in [&rep.norm_big, &rep.norm_small] {
            assert!((e.mean - 1.0).abs() <= 4.0 * e.stderr, "{drift}: {e:?}");
        }
    }
}

#[test]
fn index_set_rejects_duplicates() {
    assert!(IndexSet::new(vec![1, 1]).is_err());
}
