use brwre::kernels::{
    check_harmonicity, convolution_return_series, gaussian_moment, return_probability, return_series, wn_coefficients,
    StepKernel,
};
use brwre::rational::{frac, int, Q};
use brwre::MultiIndex;
use num_traits::{One, Zero};
use proptest::prelude::*;

fn index_strategy() -> impl Strategy<Value = MultiIndex> {
    (1usize..=3)
        .prop_flat_map(|d| prop::collection::vec(0u32..=4, d))
        .prop_filter("order at most 4", |v| v.iter().sum::<u32>() <= 4)
        .prop_map(MultiIndex)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn wn_structure_and_harmonicity(n in index_strategy()) {
        let d = n.dim();
        let w = wn_coefficients(&n, d).unwrap();
        let order = n.order();
        for ((i, j), a) in w.coeffs() {
            if i.iter().sum::<u32>() + 2 * j > order {
                prop_assert!(a.is_zero(), "A({i:?},{j}) = {a}");
            }
        }
        for i in brwre::lattice::multi_indices_of_order(d, order) {
            let expected = if i == n { Q::one() } else { Q::zero() };
            prop_assert_eq!(w.coeff(&i.0, 0), expected);
        }
        prop_assert!(check_harmonicity(&w, &StepKernel::simple(d), 0..=8, -4..=4));
    }

    #[test]
    fn kernels_are_distributions(d in 1usize..=4) {
        prop_assert_eq!(StepKernel::simple(d).total(), Q::one());
        prop_assert_eq!(StepKernel::difference(d).total(), Q::one());
    }
}

#[test]
fn every_low_order_polynomial_is_harmonic() {
    for d in 1..=3 {
        for order in 0..=4 {
            for n in brwre::lattice::multi_indices_of_order(d, order) {
                let w = wn_coefficients(&n, d).unwrap();
                assert!(check_harmonicity(&w, &StepKernel::simple(d), 0..=8, -4..=4), "{n:?}");
            }
        }
    }
}

#[test]
fn wrong_variance_constant_is_not_harmonic() {
    let n = MultiIndex(vec![2, 0, 0]);
    let mut coeffs = std::collections::BTreeMap::new();
    coeffs.insert((vec![2, 0, 0], 0), int(1));
    coeffs.insert((vec![0, 0, 0], 1), frac(-1, 2));
    let wrong = brwre::kernels::PolynomialWn::from_coeffs(n.clone(), coeffs);
    assert!(!check_harmonicity(&wrong, &StepKernel::simple(3), 0..=3, -2..=2));
    let right = wn_coefficients(&n, 3).unwrap();
    assert_eq!(right.coeff(&[0, 0, 0], 1), frac(-1, 3));
}

#[test]
fn convolution_and_product_return_series_agree() {
    for d in 1..=3 {
        let dense = convolution_return_series(&StepKernel::simple(d), 24).unwrap();
        let fast = return_series(d, 24);
        for (t, (a, b)) in dense.iter().zip(&fast).enumerate() {
            assert!((a - b).abs() < 1e-14, "d={d} t={t}: {a} vs {b}");
        }
    }
}

#[test]
fn return_probability_examples() {
    for d in [1, 2] {
        let r = return_probability(d, 100).unwrap();
        assert_eq!(r.value, 1.0);
        assert_eq!(r.half_width, 0.0);
    }
    let r = return_probability(3, 10_000).unwrap();
    assert!((r.value - 0.3405).abs() <= 0.001, "{r:?}");
    let high = return_probability(3, 100_000).unwrap();
    assert!((high.value - r.value).abs() <= r.half_width + high.half_width + 1e-9);
    assert!(return_probability(3, 1).is_err());
    let p4 = return_probability(4, 10_000).unwrap().value;
    assert!(0.0 < p4 && p4 < r.value);
}

#[test]
fn gaussian_moment_examples() {
    assert_eq!(gaussian_moment(&MultiIndex(vec![2, 0, 0]), 3), frac(1, 3));
    assert_eq!(gaussian_moment(&MultiIndex(vec![1, 0, 0]), 3), int(0));
    assert_eq!(gaussian_moment(&MultiIndex(vec![4, 0, 0]), 3), frac(1, 3));
    assert_eq!(gaussian_moment(&MultiIndex(vec![2, 2, 0]), 3), frac(1, 9));
    assert_eq!(gaussian_moment(&MultiIndex(vec![6]), 1), int(15));
}
