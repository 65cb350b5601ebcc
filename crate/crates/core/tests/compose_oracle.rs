mod oracles;

use oracles::compose::{case, library, oracle};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn compose_matches_the_dense_oracle(seed in any::<u64>()) {
        let (inputs, cfg) = case(seed);
        prop_assert_eq!(library(&inputs, &cfg), oracle(&inputs, &cfg));
    }
}

#[test]
fn oracle_cases_cover_overlaps_gaps_and_empty_inputs() {
    let (mut overlaps, mut gaps, mut empty, mut ok) = (0, 0, 0, 0);
    for seed in 0..200 {
        let (inputs, cfg) = case(seed);
        let lib = library(&inputs, &cfg);
        assert_eq!(lib, oracle(&inputs, &cfg), "seed {seed}");
        let Some(out) = lib else { continue };
        ok += 1;
        gaps += usize::from(!out.seam.is_empty());
        empty += usize::from(inputs.iter().any(|i| i.latent.is_empty()));
        let total: usize = inputs.iter().map(|i| i.latent.len()).sum();
        overlaps += usize::from(inputs.len() > 1 && out.positions.len() - out.seam.len() < total);
    }
    assert!(
        ok >= 50 && overlaps >= 10 && gaps >= 10 && empty >= 5,
        "ok {ok} overlaps {overlaps} gaps {gaps} empty {empty}"
    );
}
