use proptest::prelude::*;
use weakconv::algebra::{compound_poisson, power_frac, weak_convolve};
use weakconv::kernels::Kernel;
use weakconv::measures::{kolmogorov_distance, Atom, MixingMeasure};

fn arb_atomic() -> impl Strategy<Value = MixingMeasure> {
    prop::collection::vec((0.1f64..5.0, 0.05f64..1.0), 1..=3).prop_map(|v| {
        let total: f64 = v.iter().map(|p| p.1).sum();
        MixingMeasure::new(v.into_iter().map(|(x, w)| Atom { x, w: w / total }).collect(), None).unwrap()
    })
}

fn arb_kernel() -> impl Strategy<Value = Kernel> {
    prop_oneof![
        (0.2f64..=2.0).prop_map(|a| Kernel::stable(a).unwrap()),
        (0.2f64..=1.0).prop_map(|a| Kernel::kendall(a).unwrap()),
        (2u32..6).prop_map(|n| Kernel::sphere(n).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn convolution_commutes(k in arb_kernel(), a in arb_atomic(), b in arb_atomic()) {
        let ab = weak_convolve(&k, &a, &b).unwrap();
        let ba = weak_convolve(&k, &b, &a).unwrap();
        prop_assert!(kolmogorov_distance(&ab, &ba) < 1e-9);
    }

    #[test]
    fn mixture_cf_multiplies(k in arb_kernel(), a in arb_atomic(), b in arb_atomic(), t in 0.05f64..5.0) {
        let ab = weak_convolve(&k, &a, &b).unwrap();
        let want = a.mixture_cf(&k, t) * b.mixture_cf(&k, t);
        prop_assert!((ab.mixture_cf(&k, t) - want).abs() < 1e-5, "{} vs {}", ab.mixture_cf(&k, t), want);
    }

    #[test]
    fn delta_zero_is_the_unit(k in arb_kernel(), a in arb_atomic()) {
        prop_assert_eq!(weak_convolve(&k, &a, &MixingMeasure::delta(0.0)).unwrap(), a.clone());
        prop_assert_eq!(weak_convolve(&k, &MixingMeasure::delta(0.0), &a).unwrap(), a);
    }

    #[test]
    fn compound_poisson_has_mass_one_and_atom_at_zero(
        alpha in 0.3f64..=1.0,
        rate in 0.1f64..3.0,
        a in arb_atomic(),
    ) {
        let k = Kernel::kendall(alpha).unwrap();
        let m = compound_poisson(&k, rate, &a).unwrap();
        prop_assert!((m.mass() - 1.0).abs() < 1e-6);
        let at_zero: f64 = m.atoms().iter().filter(|x| x.x == 0.0).map(|x| x.w).sum();
        prop_assert!((at_zero - (-rate).exp()).abs() < 1e-10);
    }

    #[test]
    fn fractional_powers_of_compound_poisson_rescale_the_rate(
        rate in 0.2f64..2.0,
        r in 0.1f64..0.9,
        a in arb_atomic(),
    ) {
        let k = Kernel::stable(1.0).unwrap();
        let m = compound_poisson(&k, rate, &a).unwrap();
        let got = power_frac(&k, &m, r).unwrap();
        let want = compound_poisson(&k, rate * r, &a).unwrap();
        prop_assert!(kolmogorov_distance(&got, &want) < 1e-6);
    }
}
