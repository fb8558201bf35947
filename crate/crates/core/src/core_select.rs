//! Core selection: the `N - K` points of a configuration whose energy is
//! smallest among all subsets of that size.
//!
//! Selection is exact. Every one of the `C(N, K)` removal sets is scored, in
//! lexicographic order of the sorted removed indices. Candidates whose energy
//! equals the running minimum are resolved by reservoir sampling, so each
//! exact minimiser is returned with equal probability and the random stream is
//! touched only when a tie is met.

use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, dist_sq, PointConfiguration};

/// The minimising subset chosen from a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreSelection {
    /// Sorted indices of the kept points.
    pub kept: Vec<usize>,
    /// Sorted indices of the removed points.
    pub removed: Vec<usize>,
    /// Energy of the kept points, recomputed from scratch.
    pub core_energy: f64,
    /// Number of subsets attaining the minimum.
    pub tie_count: u64,
}

/// `sum_sq - |sum_vec|^2 / m`, the energy of `m` points with the given moments.
///
/// Results slightly below zero from rounding are clamped to zero. A deficit
/// larger than `1e-9 * max(1, sum_sq)` means the moments cannot come from real
/// points and is reported as [`Error::InconsistentMoments`].
pub fn moments_energy(sum_vec: &[f64], sum_sq: f64, m: usize) -> Result<f64> {
    let bound = geometry::norm_sq(sum_vec) / m as f64;
    let g = sum_sq - bound;
    if g >= 0.0 {
        Ok(g)
    } else if g >= -1e-9 * sum_sq.max(1.0) {
        Ok(0.0)
    } else {
        Err(Error::InconsistentMoments { sum_sq, bound })
    }
}

/// Lexicographic enumeration of the `k`-subsets of `{0, .., n-1}`.
#[derive(Debug, Clone)]
pub struct Combinations {
    n: usize,
    idx: Vec<usize>,
    started: bool,
    done: bool,
}

impl Combinations {
    pub fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            idx: (0..k).collect(),
            started: false,
            done: k > n,
        }
    }

    /// Moves to the next subset and borrows it, without allocating.
    pub fn advance(&mut self) -> Option<&[usize]> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(&self.idx);
        }
        let k = self.idx.len();
        // rightmost slot that can still move right
        let Some(i) = (0..k).rev().find(|&i| self.idx[i] < self.n - k + i) else {
            self.done = true;
            return None;
        };
        self.idx[i] += 1;
        for j in i + 1..k {
            self.idx[j] = self.idx[j - 1] + 1;
        }
        Some(&self.idx)
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        self.advance().map(<[usize]>::to_vec)
    }
}

/// All `C(n, k)` removal sets in lexicographic order.
pub fn enumerate_removals(n: usize, k: usize) -> Combinations {
    Combinations::new(n, k)
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k + 2 > n {
        Err(Error::InvalidK { n, k })
    } else {
        Ok(())
    }
}

/// Reusable scratch space for repeated selections of the same dimension.
///
/// Coordinates are shifted by the coordinate-wise median before moments are
/// formed. Subsets near the bulk of the configuration then have small
/// moments, and a single far outlier cannot swamp them.
#[derive(Debug, Clone, Default)]
pub struct CoreSelector {
    shifted: Vec<f64>,
    sq: Vec<f64>,
    column: Vec<f64>,
    sum: Vec<f64>,
    best_removed: Vec<usize>,
    tie_tol: f64,
}

impl CoreSelector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Relative tolerance under which two candidate energies count as tied.
    /// Zero (the default) means exact floating-point equality.
    pub fn with_tie_tolerance(mut self, tie_tol: f64) -> Self {
        self.tie_tol = tie_tol;
        self
    }

    fn load(&mut self, cfg: &PointConfiguration) {
        let (n, d) = (cfg.len(), cfg.dim());
        self.shifted.clear();
        self.shifted.extend_from_slice(cfg.as_flat());
        for c in 0..d {
            self.column.clear();
            self.column.extend((0..n).map(|i| self.shifted[i * d + c]));
            let mid = (n - 1) / 2;
            let (_, &mut median, _) = self.column.select_nth_unstable_by(mid, f64::total_cmp);
            for i in 0..n {
                self.shifted[i * d + c] -= median;
            }
        }
        self.sq.clear();
        self.sq
            .extend(self.shifted.chunks_exact(d).map(geometry::norm_sq));
    }

    #[inline]
    fn is_tie(&self, e: f64, best: f64) -> bool {
        if self.tie_tol == 0.0 {
            e == best
        } else {
            (e - best).abs() <= self.tie_tol * e.max(best)
        }
    }

    /// Exact minimiser over all removals of `k` points.
    pub fn select<R: Rng + ?Sized>(
        &mut self,
        cfg: &PointConfiguration,
        k: usize,
        rng: &mut R,
    ) -> Result<CoreSelection> {
        let (n, d) = (cfg.len(), cfg.dim());
        check_k(n, k)?;
        self.load(cfg);
        let m = n - k;
        let mut best = f64::INFINITY;
        let mut ties = 0u64;
        let mut combos = Combinations::new(n, k);
        while let Some(removed) = combos.advance() {
            self.sum.clear();
            self.sum.resize(d, 0.0);
            let mut sum_sq = 0.0;
            let mut r = 0;
            for i in 0..n {
                if r < k && removed[r] == i {
                    r += 1;
                    continue;
                }
                for (s, &c) in self.sum.iter_mut().zip(&self.shifted[i * d..(i + 1) * d]) {
                    *s += c;
                }
                sum_sq += self.sq[i];
            }
            let e = moments_energy(&self.sum, sum_sq, m)?;
            if ties > 0 && self.is_tie(e, best) {
                ties += 1;
                if rng.random_range(0..ties) == 0 {
                    self.best_removed.clear();
                    self.best_removed.extend_from_slice(removed);
                }
                best = best.min(e);
            } else if e < best {
                best = e;
                ties = 1;
                self.best_removed.clear();
                self.best_removed.extend_from_slice(removed);
            }
        }
        finish(cfg, &self.best_removed, ties)
    }

    /// Removes one point furthest from the barycentre; exact ties are broken
    /// uniformly. For `K = 1` this is the same core as [`CoreSelector::select`].
    pub fn furthest_point<R: Rng + ?Sized>(
        &mut self,
        cfg: &PointConfiguration,
        rng: &mut R,
    ) -> Result<CoreSelection> {
        let (n, d) = (cfg.len(), cfg.dim());
        check_k(n, 1)?;
        self.load(cfg);
        self.sum.clear();
        self.sum.resize(d, 0.0);
        for p in self.shifted.chunks_exact(d) {
            for (s, &c) in self.sum.iter_mut().zip(p) {
                *s += c;
            }
        }
        for s in &mut self.sum {
            *s /= n as f64;
        }
        let mut best = f64::NEG_INFINITY;
        let mut ties = 0u64;
        let mut chosen = 0;
        for (i, p) in self.shifted.chunks_exact(d).enumerate() {
            let r = dist_sq(p, &self.sum);
            if r == best {
                ties += 1;
                if rng.random_range(0..ties) == 0 {
                    chosen = i;
                }
            } else if r > best {
                best = r;
                ties = 1;
                chosen = i;
            }
        }
        finish(cfg, &[chosen], ties)
    }
}

fn finish(cfg: &PointConfiguration, removed: &[usize], tie_count: u64) -> Result<CoreSelection> {
    let kept: Vec<usize> = (0..cfg.len()).filter(|i| !removed.contains(i)).collect();
    let core_energy = geometry::energy(&cfg.subset(&kept)?);
    Ok(CoreSelection {
        kept,
        removed: removed.to_vec(),
        core_energy,
        tie_count,
    })
}

/// Keeps the `N - K` points of minimal energy. See [`CoreSelector::select`].
pub fn select_core<R: Rng + ?Sized>(
    cfg: &PointConfiguration,
    k: usize,
    rng: &mut R,
) -> Result<CoreSelection> {
    CoreSelector::new().select(cfg, k, rng)
}

/// Drops the point furthest from the barycentre. See
/// [`CoreSelector::furthest_point`].
pub fn furthest_point_core<R: Rng + ?Sized>(
    cfg: &PointConfiguration,
    rng: &mut R,
) -> Result<CoreSelection> {
    CoreSelector::new().furthest_point(cfg, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::energy;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    use rand_pcg::Pcg64;

    fn binomial(n: u64, k: u64) -> u64 {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    /// Rebuilds every kept subset and scores it with `energy` directly.
    fn naive_min(cfg: &PointConfiguration, k: usize) -> (f64, Vec<Vec<usize>>) {
        let n = cfg.len();
        let mut best = f64::INFINITY;
        let mut arg = Vec::new();
        for removed in enumerate_removals(n, k) {
            let kept: Vec<usize> = (0..n).filter(|i| !removed.contains(i)).collect();
            let e = energy(&cfg.subset(&kept).unwrap());
            if e < best {
                best = e;
                arg = vec![kept];
            } else if e == best {
                arg.push(kept);
            }
        }
        (best, arg)
    }

    fn gaussian_config(rng: &mut Pcg64, n: usize, d: usize) -> PointConfiguration {
        let c: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(rng)).collect();
        PointConfiguration::from_flat(c, d).unwrap()
    }

    #[test]
    fn moments_energy_examples() {
        assert_eq!(moments_energy(&[1.0], 1.0, 2).unwrap(), 0.5);
        assert_eq!(moments_energy(&[57.0], 1625.0, 2).unwrap(), 0.5);
        assert_eq!(moments_energy(&[0.0], 2758.0, 5).unwrap(), 2758.0);
        assert_eq!(moments_energy(&[2.0], 2.0 - 1e-12, 2).unwrap(), 0.0);
        assert!(matches!(
            moments_energy(&[2.0], 1.0, 2),
            Err(Error::InconsistentMoments { .. })
        ));
    }

    #[test]
    fn enumeration_order() {
        let v: Vec<_> = enumerate_removals(3, 1).collect();
        assert_eq!(v, vec![vec![0], vec![1], vec![2]]);
        let v: Vec<_> = enumerate_removals(4, 2).collect();
        assert_eq!(
            v,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        assert_eq!(enumerate_removals(12, 5).count(), 792);
        assert_eq!(enumerate_removals(5, 5).count(), 1);
        for n in 1..12 {
            for k in 1..=n {
                let all: Vec<_> = enumerate_removals(n, k).collect();
                assert_eq!(all.len() as u64, binomial(n as u64, k as u64));
                assert!(all.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn split_cluster_keeps_the_far_pair() {
        let cfg = PointConfiguration::from_scalars(&[-24.0, -19.0, -14.0, 28.0, 29.0]).unwrap();
        let mut rng = Pcg64::seed_from_u64(1);
        let sel = select_core(&cfg, 3, &mut rng).unwrap();
        assert_eq!(sel.kept, vec![3, 4]);
        assert_eq!(sel.removed, vec![0, 1, 2]);
        assert!((sel.core_energy - 0.5).abs() <= 1e-12);
        assert_eq!(sel.tie_count, 1);
        // not the three points furthest from the barycentre (29, 28, -24)
        assert_ne!(sel.removed, vec![0, 3, 4]);
    }

    #[test]
    fn small_examples() {
        let mut rng = Pcg64::seed_from_u64(2);
        let cfg = PointConfiguration::from_scalars(&[0.0, 1.0, 5.0]).unwrap();
        let sel = select_core(&cfg, 1, &mut rng).unwrap();
        assert_eq!(sel.removed, vec![2]);
        assert_eq!(sel.kept, vec![0, 1]);
        assert_eq!(furthest_point_core(&cfg, &mut rng).unwrap(), sel);

        let split = PointConfiguration::from_scalars(&[-24.0, -19.0, -14.0, 28.0, 29.0]).unwrap();
        assert_eq!(
            furthest_point_core(&split, &mut rng).unwrap().removed,
            vec![4]
        );

        let same = PointConfiguration::from_points(&[[0.3, -2.0]; 5]).unwrap();
        let sel = select_core(&same, 2, &mut rng).unwrap();
        assert_eq!(sel.core_energy, 0.0);
        assert_eq!(sel.tie_count, 10);
    }

    #[test]
    fn invalid_k() {
        let cfg = PointConfiguration::from_scalars(&[0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut rng = Pcg64::seed_from_u64(3);
        assert_eq!(
            select_core(&cfg, 0, &mut rng),
            Err(Error::InvalidK { n: 5, k: 0 })
        );
        assert_eq!(
            select_core(&cfg, 4, &mut rng),
            Err(Error::InvalidK { n: 5, k: 4 })
        );
        assert!(select_core(&cfg, 3, &mut rng).is_ok());
        let two = PointConfiguration::from_scalars(&[0.0, 1.0]).unwrap();
        assert!(furthest_point_core(&two, &mut rng).is_err());
    }

    #[test]
    fn agrees_with_naive_oracle() {
        let mut rng = Pcg64::seed_from_u64(0x0a11);
        let mut pick = Pcg64::seed_from_u64(9);
        for _ in 0..1000 {
            let n = rng.random_range(3..=10);
            let k = rng.random_range(1..=4.min(n - 2));
            let d = rng.random_range(1..=3);
            let cfg = gaussian_config(&mut rng, n, d);
            let sel = select_core(&cfg, k, &mut pick).unwrap();
            let (best, args) = naive_min(&cfg, k);
            assert_eq!(sel.core_energy, best);
            assert!(args.contains(&sel.kept));
        }
    }

    #[test]
    fn k1_matches_furthest_point() {
        let mut rng = Pcg64::seed_from_u64(0x1e1);
        let mut pick = Pcg64::seed_from_u64(5);
        for _ in 0..10_000 {
            let n = rng.random_range(3..=12);
            let d = rng.random_range(1..=3);
            let cfg = gaussian_config(&mut rng, n, d);
            let a = select_core(&cfg, 1, &mut pick).unwrap();
            let b = furthest_point_core(&cfg, &mut pick).unwrap();
            assert_eq!(a.removed, b.removed);
        }
    }

    #[test]
    fn ties_are_uniform() {
        let same = PointConfiguration::from_scalars(&[1.5; 5]).unwrap();
        let all: Vec<_> = enumerate_removals(5, 2).collect();
        let mut counts = [0u32; 10];
        for seed in 0..10_000u64 {
            let mut rng = Pcg64::seed_from_u64(seed);
            let sel = select_core(&same, 2, &mut rng).unwrap();
            counts[all.iter().position(|r| *r == sel.removed).unwrap()] += 1;
        }
        for c in counts {
            let f = f64::from(c) / 10_000.0;
            assert!((f - 0.1).abs() <= 0.02, "frequency {f}");
        }
    }

    #[test]
    fn symmetric_furthest_tie() {
        let cfg = PointConfiguration::from_scalars(&[-1.0, 0.0, 1.0]).unwrap();
        let mut left = 0;
        for seed in 0..4000u64 {
            let mut rng = Pcg64::seed_from_u64(seed);
            let sel = furthest_point_core(&cfg, &mut rng).unwrap();
            assert_eq!(sel.tie_count, 2);
            match sel.removed[..] {
                [0] => left += 1,
                [2] => {}
                _ => panic!("removed the centre"),
            }
        }
        assert!((f64::from(left) / 4000.0 - 0.5).abs() < 0.04);
    }

    #[test]
    fn tie_tolerance_merges_near_ties() {
        // two removals tie only approximately
        let cfg = PointConfiguration::from_scalars(&[-1.0, 0.0, 1.0 + 1e-12]).unwrap();
        let mut rng = Pcg64::seed_from_u64(4);
        let strict = CoreSelector::new().select(&cfg, 1, &mut rng).unwrap();
        assert_eq!(strict.tie_count, 1);
        assert_eq!(strict.removed, vec![2]);
        let loose = CoreSelector::new()
            .with_tie_tolerance(1e-9)
            .select(&cfg, 1, &mut rng)
            .unwrap();
        assert_eq!(loose.tie_count, 2);
    }

    #[test]
    fn far_outlier_does_not_spoil_precision() {
        let cfg =
            PointConfiguration::from_scalars(&[0.25, 0.25 + 1e-9, 0.25 + 3e-9, 0.25 - 2e-9, 4e15])
                .unwrap();
        let mut rng = Pcg64::seed_from_u64(6);
        let sel = select_core(&cfg, 1, &mut rng).unwrap();
        assert_eq!(sel.removed, vec![4]);
        let (best, _) = naive_min(&cfg, 1);
        assert_eq!(sel.core_energy, best);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;
        use rand::SeedableRng;
        use rand_pcg::Pcg64;

        proptest! {
            #[test]
            fn selection_partitions_indices(
                values in prop::collection::vec(-100.0f64..100.0, 3..11),
                k_raw in 1usize..9,
                seed in any::<u64>(),
            ) {
                let n = values.len();
                let k = 1 + k_raw % (n - 2);
                let cfg = PointConfiguration::from_scalars(&values).unwrap();
                let mut rng = Pcg64::seed_from_u64(seed);
                let sel = select_core(&cfg, k, &mut rng).unwrap();
                prop_assert_eq!(sel.removed.len(), k);
                let mut all: Vec<usize> = sel.kept.iter().chain(&sel.removed).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
                prop_assert!(sel.tie_count >= 1);
                let direct = crate::geometry::energy(&cfg.subset(&sel.kept).unwrap());
                prop_assert_eq!(sel.core_energy, direct);
            }
        }
    }
}
