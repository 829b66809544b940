use dsembed_core::decode::{brute_force_decode, greedy_decode, is_single_root_tree, mst_decode, ArcScores};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MASK: f64 = -1e9;

fn random_scores(n: usize, rng: &mut impl Rng) -> ArcScores {
    let mut data = vec![0.0; n * (n + 1)];
    for d in 0..n {
        for h in 0..=n {
            data[d * (n + 1) + h] = if h == d + 1 { MASK } else { rng.random_range(-5.0..5.0) };
        }
    }
    ArcScores::new(n, data).unwrap()
}

/// Independent exhaustive search over every head vector, no pruning.
fn exhaustive(scores: &ArcScores) -> (f64, Vec<usize>) {
    let n = scores.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut heads = vec![0usize; n];
    loop {
        if is_single_root_tree(&heads) && heads.iter().enumerate().all(|(i, &h)| h != i + 1) {
            let total = scores.total(&heads);
            if best.as_ref().is_none_or(|(b, _)| total > *b) {
                best = Some((total, heads.clone()));
            }
        }
        let mut i = 0;
        loop {
            if i == n {
                return best.expect("at least one tree");
            }
            heads[i] += 1;
            if heads[i] <= n {
                break;
            }
            heads[i] = 0;
            i += 1;
        }
    }
}

#[test]
fn mst_agrees_with_brute_force_on_random_matrices() {
    for n in 2..=7 {
        for seed in 0..200u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed * 31 + n as u64);
            let s = random_scores(n, &mut rng);
            let mst = mst_decode(&s);
            let brute = brute_force_decode(&s).unwrap();
            assert_eq!(mst, brute, "n={n} seed={seed}");
            assert!((s.total(&mst) - s.total(&brute)).abs() < 1e-9);
        }
    }
}

#[test]
fn brute_force_matches_unpruned_enumeration() {
    for n in 1..=5 {
        for seed in 0..40u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed * 7 + n as u64);
            let s = random_scores(n, &mut rng);
            let (total, heads) = exhaustive(&s);
            assert_eq!(brute_force_decode(&s).unwrap(), heads);
            assert_eq!(s.total(&heads), total);
        }
    }
}

#[test]
fn valid_greedy_output_is_kept() {
    let mut kept = 0;
    for seed in 0..300u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..7);
        let s = random_scores(n, &mut rng);
        let g = greedy_decode(&s);
        if is_single_root_tree(&g) {
            kept += 1;
            assert_eq!(mst_decode(&s), g);
        }
        assert!(s.total(&mst_decode(&s)) <= s.total(&g) + 1e-9);
    }
    assert!(kept > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mst_output_is_a_single_root_tree(n in 1usize..=40, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_scores(n, &mut rng);
        let heads = mst_decode(&s);
        prop_assert_eq!(heads.len(), n);
        prop_assert!(is_single_root_tree(&heads));
    }

    #[test]
    fn greedy_picks_row_maxima(n in 1usize..=12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_scores(n, &mut rng);
        for (d, &h) in greedy_decode(&s).iter().enumerate() {
            for c in 0..=n {
                prop_assert!(s.get(d + 1, h) >= s.get(d + 1, c));
            }
        }
    }
}
