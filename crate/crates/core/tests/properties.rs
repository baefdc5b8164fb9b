use dualpol_core::chanlab::{
    apply_normalizer, fit_normalizer, generate_dataset, invert_normalizer, mean_profile, wrap_phase, CsiPair,
    ScenarioConfig,
};
use dualpol_core::evalkit::{dr_as_inverse, dr_as_transform, dr_mp_inverse, dr_mp_transform, subband_users, zf_precode};
use num_complex::Complex64;
use proptest::prelude::*;

fn scenario(index: usize) -> ScenarioConfig {
    [ScenarioConfig::cdl_a_like(), ScenarioConfig::cdl_b_like(), ScenarioConfig::cdl_c_like()][index].clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn same_seed_same_dataset(seed in any::<u64>(), which in 0usize..3) {
        let a = generate_dataset(&scenario(which), 3, 8, 8, seed).unwrap();
        let b = generate_dataset(&scenario(which), 3, 8, 8, seed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn fitted_split_spans_exactly_zero_to_one(seed in any::<u64>(), which in 0usize..3) {
        let raw = generate_dataset(&scenario(which), 4, 8, 8, seed).unwrap();
        let scaler = fit_normalizer(&raw).unwrap();
        let (norm, stats) = apply_normalizer(&raw, &scaler).unwrap();
        prop_assert_eq!(stats.clamped, 0);
        let values: Vec<f32> = norm
            .samples
            .iter()
            .flat_map(|p| p.h_v.as_slice().iter().chain(p.h_h.as_slice()))
            .flat_map(|z| [z.re, z.im])
            .collect();
        prop_assert_eq!(values.iter().copied().fold(f32::INFINITY, f32::min), 0.0);
        prop_assert_eq!(values.iter().copied().fold(f32::NEG_INFINITY, f32::max), 1.0);

        let back = invert_normalizer(&norm, &scaler).unwrap();
        let tol = 1e-6 * scaler.span();
        for (a, b) in back.samples.iter().zip(&raw.samples) {
            for (x, y) in a.h_v.as_slice().iter().zip(b.h_v.as_slice()) {
                prop_assert!(f64::from((x - y).norm()) <= tol);
            }
        }
    }

    #[test]
    fn ablation_roundtrips(seed in any::<u64>(), kappa in 0.0f64..=1.0) {
        let sc = ScenarioConfig { kappa, ..ScenarioConfig::cdl_b_like() };
        let pair = &generate_dataset(&sc, 1, 8, 8, seed).unwrap().samples[0];
        for m in [&pair.h_v, &pair.h_h] {
            prop_assert_eq!(&dr_as_inverse(&dr_as_transform(m)).unwrap(), m);
        }
        let t = dr_mp_transform(pair);
        let back: CsiPair = dr_mp_inverse(&t).unwrap();
        for (rec, phase) in [(&back.h_v, &t.phase_v), (&back.h_h, &t.phase_h)] {
            for (z, &p) in rec.as_slice().iter().zip(phase) {
                if z.norm() > 0.0 {
                    prop_assert!(wrap_phase(f64::from(z.arg()) - f64::from(p)).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn zero_forcing_removes_interference(seed in any::<u64>(), users in 1usize..=4) {
        let ds = generate_dataset(&ScenarioConfig::cdl_c_like(), users, 4, 16, seed).unwrap();
        let picked: Vec<&CsiPair> = ds.samples.iter().collect();
        for k in 0..ds.n_s {
            let h = subband_users(&picked, k);
            let v = zf_precode(&h).unwrap().v;
            let (mut off, mut diag) = (0.0, 0.0);
            for (i, hi) in h.iter().enumerate() {
                for j in 0..users {
                    let g: Complex64 = hi.iter().zip(v.column(j).iter()).map(|(a, b)| a * b).sum();
                    if i == j { diag += g.norm_sqr() } else { off += g.norm_sqr() }
                }
            }
            prop_assert!((off / diag).sqrt() <= 1e-8);
        }
    }
}

#[test]
fn coupling_raises_similarity() {
    let grid = [0.0, 0.4, 0.6, 0.8, 0.9, 1.0];
    let means: Vec<_> = grid
        .iter()
        .map(|&kappa| {
            let sc = ScenarioConfig {
                kappa,
                ..ScenarioConfig::cdl_b_like()
            };
            let ds = generate_dataset(&sc, 500, 16, 16, 9).unwrap();
            mean_profile(&ds.samples).unwrap().0
        })
        .collect();
    for w in means.windows(2) {
        assert!(w[1].magnitude >= w[0].magnitude, "{:?}", means);
        assert!(w[1].original >= w[0].original, "{:?}", means);
    }
}
