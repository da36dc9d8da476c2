use proptest::prelude::*;
use skelmerge::equiv::{equivalent, normalize};
use skelmerge::merge::{merge_pair, preserves};
use skelmerge::rng::seeded;
use skelmerge::Skel;

const LEFT: &[&str] = &[
    "c1*x0 + c2",
    "c1*x0^2 + c2",
    "c1*exp(c2*x0) + c3",
    "c1*sin(c2*x0 + c3) + c4",
    "c1*tanh(c2*x0) + c3",
    "c1/(x0 + c2) + c3",
    "c1*log(abs(x0)) + c2",
];

const RIGHT: &[&str] =
    &["c1*x1 + c2", "c1*sqrt(x1) + c2", "c1*cos(c2*x1) + c3", "c1*x1^3 + c2*x1 + c3", "c1*sinh(x1) + c2"];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn merges_preserve_both_inputs(i in 0..LEFT.len(), j in 0..RIGHT.len(), seed in any::<u64>()) {
        let a = Skel::parse(LEFT[i], 2).unwrap();
        let b = Skel::parse(RIGHT[j], 2).unwrap();
        let m = merge_pair(&a, &b, &mut seeded(seed)).unwrap();
        prop_assert!(preserves(&m, &a), "{} loses {}", m, a);
        prop_assert!(preserves(&m, &b), "{} loses {}", m, b);
    }

    #[test]
    fn normal_forms_are_fixed_points(i in 0..LEFT.len(), j in 0..RIGHT.len(), seed in any::<u64>()) {
        let a = Skel::parse(LEFT[i], 2).unwrap();
        let b = Skel::parse(RIGHT[j], 2).unwrap();
        let m = merge_pair(&a, &b, &mut seeded(seed)).unwrap();
        let n = normalize(&m);
        prop_assert_eq!(&normalize(&n), &n);
        prop_assert!(equivalent(&m, &n));
    }
}
