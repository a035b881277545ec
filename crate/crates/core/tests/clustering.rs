mod common;

use proptest::prelude::*;
use rarerisk::clustering::{agnes_average_linkage, cut_clusters, gower_binary_dissimilarity, Cut, DissimilarityMatrix};
use rarerisk::rng;

use common::{gower_brute, naive_average_linkage, population_of, random_matrix};

/// Symmetric matrix with distinct off-diagonal entries, so no merge ties.
fn continuous(n: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::Rng as _;
    let mut r = rng::seeded(seed);
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = r.gen_range(0.01..1.0);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

fn to_matrix(d: &[Vec<f64>]) -> DissimilarityMatrix {
    let n = d.len();
    DissimilarityMatrix::new((0..n).map(|i| format!("o{i}")).collect(), d.concat()).unwrap()
}

#[test]
fn identical_columns_merge_first_at_zero() {
    let mut genes = random_matrix(150, 6, 0.5, 3);
    for i in 0..150 {
        let v = genes.get(i, 1) == 1;
        genes.set(i, 4, v);
    }
    let dg = agnes_average_linkage(&gower_binary_dissimilarity(&population_of(&genes)).unwrap());
    let first = dg.merges[0];
    assert_eq!((first.left, first.right, first.height), (1, 4, 0.0));
}

#[test]
fn complementary_columns_are_maximally_apart() {
    let mut genes = random_matrix(80, 3, 0.5, 5);
    for i in 0..80 {
        let v = genes.get(i, 0) == 0;
        genes.set(i, 2, v);
    }
    let d = gower_binary_dissimilarity(&population_of(&genes)).unwrap();
    assert_eq!(d.get(0, 2), 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gower_matches_brute_force(rows in 1usize..260, cols in 2usize..15, seed: u64) {
        let genes = random_matrix(rows, cols, 0.5, seed);
        let d = gower_binary_dissimilarity(&population_of(&genes)).unwrap();
        for j in 0..cols {
            prop_assert_eq!(d.get(j, j), 0.0);
            for k in 0..cols {
                prop_assert_eq!(d.get(j, k), gower_brute(&genes, j, k));
            }
        }
    }

    #[test]
    fn merge_heights_match_naive_oracle(n in 2usize..14, seed: u64) {
        let d = continuous(n, seed);
        let dg = agnes_average_linkage(&to_matrix(&d));
        let oracle = naive_average_linkage(&d, 1e-12);
        prop_assert_eq!(dg.merges.len(), n - 1);
        for (m, o) in dg.merges.iter().zip(&oracle) {
            prop_assert!((m.height - o.height).abs() <= 1e-12);
        }
        prop_assert!(dg.heights().windows(2).all(|w| w[1] >= w[0]));
        prop_assert!((0.0..=1.0).contains(&dg.agglomerative_coefficient));
    }

    #[test]
    fn relabelling_objects_permutes_the_tree(n in 3usize..12, seed: u64, shift in 1usize..11) {
        let d = continuous(n, seed);
        let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let mut pd = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                pd[perm[i]][perm[j]] = d[i][j];
            }
        }
        let a = agnes_average_linkage(&to_matrix(&d));
        let b = agnes_average_linkage(&to_matrix(&pd));
        for (s, (ma, mb)) in a.merges.iter().zip(&b.merges).enumerate() {
            prop_assert!((ma.height - mb.height).abs() <= 1e-12);
            let mut mapped: Vec<usize> = a.members(n + s).iter().map(|&i| perm[i]).collect();
            mapped.sort_unstable();
            prop_assert_eq!(mapped, b.members(n + s));
        }
        prop_assert!((a.agglomerative_coefficient - b.agglomerative_coefficient).abs() <= 1e-12);
    }

    #[test]
    fn cuts_partition_the_objects(n in 2usize..12, seed: u64, k in 1usize..12) {
        let dg = agnes_average_linkage(&to_matrix(&continuous(n, seed)));
        let k = k.min(n);
        let parts = cut_clusters(&dg, Cut::K(k)).unwrap();
        prop_assert_eq!(parts.len(), k);
        let mut all: Vec<usize> = parts.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let top = cut_clusters(&dg, Cut::Height(dg.final_height())).unwrap();
        prop_assert_eq!(top.len(), 1);
    }

    #[test]
    fn newick_names_every_leaf_once(n in 2usize..12, seed: u64) {
        let dg = agnes_average_linkage(&to_matrix(&continuous(n, seed)));
        let s = dg.to_newick();
        prop_assert!(s.ends_with(';'));
        for i in 0..n {
            let label = format!("o{i}:");
            prop_assert_eq!(s.matches(&label).count(), 1);
        }
    }
}
