use commqcd::cscc::{generate_codebook, quantize_type, CsccCodebook};
use commqcd::detectors::{scs_stop_block, sprt_stop};
use commqcd::{Distribution, ExtReal};
use proptest::prelude::*;

proptest! {
    #[test]
    fn scs_is_earliest_restarted_sprt(z in prop::collection::vec(-3.0f64..3.0, 1..60), b in 0.5f64..6.0) {
        let llrs: Vec<ExtReal> = z.iter().map(|&v| ExtReal::Finite(v)).collect();
        let earliest = (0..llrs.len())
            .filter_map(|j| sprt_stop(&llrs[j..], b).map(|k| k + j))
            .min();
        prop_assert_eq!(scs_stop_block(&llrs, b, 0.0), earliest);
    }

    #[test]
    fn quantized_type_is_within_one_count(w in prop::collection::vec(0.01f64..1.0, 1..6), len in 1usize..40) {
        let px = Distribution::from_weights(&w).unwrap();
        let t = quantize_type(&px, len).unwrap();
        prop_assert_eq!(t.len(), len);
        for (c, p) in t.counts().iter().zip(px.probs()) {
            prop_assert!((*c as f64 - p * len as f64).abs() < 1.0);
        }
    }

    #[test]
    fn codebook_keeps_composition_through_text(
        w in prop::collection::vec(0.05f64..1.0, 2..4),
        len in 1usize..8,
        blocks in 1usize..10,
        seed in any::<u64>(),
    ) {
        let t = quantize_type(&Distribution::from_weights(&w).unwrap(), len).unwrap();
        let book = generate_codebook(&t, blocks, 5, seed).unwrap();
        book.verify_composition().unwrap();
        prop_assert_eq!(&CsccCodebook::from_text(&book.to_text(&[])).unwrap(), &book);
        prop_assert_eq!(&generate_codebook(&t, blocks, 5, seed).unwrap(), &book);
    }
}
