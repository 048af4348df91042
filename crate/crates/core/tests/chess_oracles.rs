#[path = "support/chess_oracle.rs"]
mod chess_oracle;

use chess_oracle::{
    grid_of, oracle_check, oracle_insufficient, oracle_material, random_playout, random_sparse, sample,
};
use neurodenote::chess::{
    encode_board, in_check_label, insufficient_material_label, material_advantage_label, normalize_to_white,
    reflect_and_swap, to_fen, Color, LabelConfig,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn labels_match_brute_force_oracle_on_1000_positions() {
    let cfg = LabelConfig::default();
    let mut positives = [0usize; 3];
    for raw in sample() {
        let b = normalize_to_white(&raw);
        let g = grid_of(&b);
        let got = [
            material_advantage_label(&b, &cfg),
            in_check_label(&b),
            insufficient_material_label(&b, &cfg),
        ];
        let want = [oracle_material(&g), oracle_check(&g), oracle_insufficient(&g)];
        assert_eq!(got, want, "{}", to_fen(&b));
        for i in 0..3 {
            positives[i] += usize::from(got[i]);
        }
    }
    // the sample must exercise both classes of every label
    assert!(positives.iter().all(|&p| p > 10 && p < 990), "{positives:?}");
}

#[test]
fn normalization_identities_on_sample() {
    for b in sample() {
        let n = normalize_to_white(&b);
        assert_eq!(n.side_to_move, Color::White);
        assert_eq!(normalize_to_white(&n), n);
        assert_eq!(reflect_and_swap(&reflect_and_swap(&b)), b);
        let t = encode_board(&n).unwrap();
        assert_eq!(t.values().iter().filter(|&&v| v != 0).count(), n.piece_count());
    }
}

#[test]
fn material_labels_exclusive_under_colour_swap() {
    let cfg = LabelConfig::default();
    for b in sample() {
        let n = normalize_to_white(&b);
        let mut swapped = reflect_and_swap(&n);
        swapped.side_to_move = Color::White;
        assert!(!(material_advantage_label(&n, &cfg) && material_advantage_label(&swapped, &cfg)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn double_reflection_is_identity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = if seed % 2 == 0 { random_playout(&mut rng) } else { random_sparse(&mut rng) };
        prop_assert_eq!(reflect_and_swap(&reflect_and_swap(&b)), b.clone());
        let n = normalize_to_white(&b);
        prop_assert_eq!(normalize_to_white(&n), n);
    }
}
