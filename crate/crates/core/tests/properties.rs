mod common;

use common::props::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn cosine_is_symmetric_bounded_and_scale_free(input in cosine_input()) {
        cosine_laws(input)?;
    }

    #[test]
    fn canonical_pairs_are_order_free(input in pair_input()) {
        canonical_pair(input)?;
    }

    #[test]
    fn local_hash_is_unit_and_deterministic(input in local_hash_input()) {
        local_hash_unit(input)?;
    }

    #[test]
    fn parsers_are_total(raw in model_output()) {
        parser_total(raw)?;
    }

    #[test]
    fn clusters_partition_accepted_keys(input in partition_input()) {
        clusters_partition(input)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn higher_threshold_never_adds_detections(input in monotonic_input()) {
        threshold_monotonic(input)?;
    }

    #[test]
    fn undecided_items_are_never_applied(input in gate_input()) {
        confirmation_gate(input)?;
    }
}
