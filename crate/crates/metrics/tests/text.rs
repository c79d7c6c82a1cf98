use metrics::{char_error_rate, edit_distance};
use proptest::prelude::*;

#[test]
fn classic_pairs_match_dp_reference() {
    assert_eq!(edit_distance("kitten", "sitting"), 3);
    assert_eq!(edit_distance("flaw", "lawn"), 2);
    assert_eq!(edit_distance("", "abc"), 3);
    assert_eq!(edit_distance("abc", ""), 3);
    assert_eq!(
        edit_distance("the quick brown fox jumps", "the quack brwn foxes jmp"),
        6
    );
}

#[test]
fn distance_counts_chars_not_bytes() {
    // Two substitutions even though the accented forms are multi-byte.
    assert_eq!(edit_distance("naïve café", "naive cafe"), 2);
    assert_eq!(char_error_rate("naïve café", "naive cafe").unwrap(), 2.0 / 10.0);
}

#[test]
fn identical_strings_cost_nothing() {
    assert_eq!(edit_distance("", ""), 0);
    assert_eq!(edit_distance("dewarp", "dewarp"), 0);
    assert_eq!(char_error_rate("dewarp", "dewarp").unwrap(), 0.0);
}

#[test]
fn cer_normalizes_by_reference_length() {
    let cer = char_error_rate("kitten", "sitting").unwrap();
    assert_eq!(cer, 3.0 / 7.0);
    // CER may exceed 1 when the hypothesis is much longer than the reference.
    assert_eq!(char_error_rate("aaaa", "b").unwrap(), 4.0);
}

#[test]
fn empty_reference_is_rejected_for_cer_only() {
    assert!(char_error_rate("anything", "").is_err());
    assert_eq!(edit_distance("anything", ""), 8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symmetric_with_unit_costs(a in "[abc]{0,12}", b in "[abc]{0,12}") {
        prop_assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
    }

    #[test]
    fn triangle_inequality(
        a in "[abcd]{0,10}",
        b in "[abcd]{0,10}",
        c in "[abcd]{0,10}",
    ) {
        let ac = edit_distance(&a, &c);
        let ab = edit_distance(&a, &b);
        let bc = edit_distance(&b, &c);
        prop_assert!(ac <= ab + bc, "d(a,c)={ac} > d(a,b)+d(b,c)={}", ab + bc);
    }

    #[test]
    fn bounded_by_lengths(a in "[ab]{0,12}", b in "[ab]{0,12}") {
        let d = edit_distance(&a, &b);
        let (la, lb) = (a.chars().count(), b.chars().count());
        prop_assert!(d >= la.abs_diff(lb));
        prop_assert!(d <= la.max(lb));
    }
}
