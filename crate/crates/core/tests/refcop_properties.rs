use gridcopula::refcop::sample_checkerboard;
use gridcopula::rng::{seeded, substream};
use gridcopula::CopulaFamily;
use proptest::prelude::*;
use rand::Rng;

const N: usize = 100_000;
const LEVELS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

#[test]
fn empirical_cdf_matches_closed_form() {
    let mut misses = Vec::new();
    for (i, fam) in CopulaFamily::study_list().into_iter().enumerate() {
        let mut rng = substream(77, i as u64);
        let s = fam.sample(N, &mut rng).unwrap();
        for &a in &LEVELS {
            for &b in &LEVELS {
                let hits = s.points().iter().filter(|p| p.0 <= a && p.1 <= b).count();
                let ecdf = hits as f64 / N as f64;
                let c = fam.cdf(a, b).unwrap();
                let band = 3.0 * (c * (1.0 - c) / N as f64).sqrt();
                if (ecdf - c).abs() > band {
                    misses.push(format!("{fam} at ({a},{b}): {ecdf:.5} vs {c:.5}"));
                }
            }
        }
    }
    assert!(misses.is_empty(), "{misses:#?}");
}

#[test]
fn sample_spearman_near_theoretical() {
    let mut rng = seeded(78);
    let p = CopulaFamily::Product
        .sample(N, &mut rng)
        .unwrap()
        .spearman();
    assert!(p.abs() < 3.0 / ((N - 1) as f64).sqrt());
    for (fam, target) in [
        (CopulaFamily::Normal(0.5), 0.4826),
        (CopulaFamily::Gumbel(1.3), 0.3368),
    ] {
        let r = fam.sample(N, &mut rng).unwrap().spearman();
        assert!((r - target).abs() < 0.01, "{fam}: {r}");
    }
}

#[test]
fn countermonotone_clayton_lies_on_the_antidiagonal() {
    let s = CopulaFamily::Clayton(-1.0)
        .sample(1000, &mut seeded(79))
        .unwrap();
    assert!(s.points().iter().all(|(u, v)| (u + v - 1.0).abs() < 1e-12));
}

#[test]
fn samplers_are_reproducible() {
    for fam in CopulaFamily::study_list() {
        let a = fam.sample(50, &mut seeded(5)).unwrap();
        let b = fam.sample(50, &mut seeded(5)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn rho_of_checkerboard_approaches_family_rho() {
    for fam in [CopulaFamily::Clayton(1.0), CopulaFamily::Amh(-0.5)] {
        let r = fam.true_rho().value;
        let coarse = fam.checkerboard(5).unwrap().spearman_rho();
        let fine = fam.checkerboard(64).unwrap().spearman_rho();
        assert!((fine - r).abs() < (coarse - r).abs());
        assert!((fine - r).abs() < 1e-3);
    }
}

#[test]
fn checkerboard_sampler_has_grid_margins() {
    let g = CopulaFamily::Normal(0.5).checkerboard(4).unwrap();
    let s = sample_checkerboard(&g, 40_000, &mut seeded(80)).unwrap();
    let below = s.points().iter().filter(|p| p.0 <= 0.25).count() as f64 / 40_000.0;
    assert!((below - 0.25).abs() < 3.0 * (0.25f64 * 0.75 / 40_000.0).sqrt());
}

fn family_strategy() -> impl Strategy<Value = CopulaFamily> {
    prop_oneof![
        Just(CopulaFamily::Product),
        (1.0f64..6.0).prop_map(CopulaFamily::Gumbel),
        (-1.0f64..-0.01).prop_map(CopulaFamily::Clayton),
        (0.01f64..8.0).prop_map(CopulaFamily::Clayton),
        (-1.0f64..0.99).prop_map(CopulaFamily::Amh),
        (-0.95f64..0.95).prop_map(CopulaFamily::Normal),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn cdf_is_two_increasing(fam in family_strategy(), seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let mut pair = || {
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            (a.min(b), a.max(b))
        };
        let (u1, u2) = pair();
        let (v1, v2) = pair();
        let c = |u, v| fam.cdf(u, v).unwrap();
        let mass = c(u2, v2) - c(u1, v2) - c(u2, v1) + c(u1, v1);
        prop_assert!(mass >= -1e-10, "{} on ({},{})x({},{}): {}", fam, u1, u2, v1, v2, mass);
    }

    #[test]
    fn cdf_within_frechet_bounds(fam in family_strategy(), u in 0.0f64..=1.0, v in 0.0f64..=1.0) {
        let c = fam.cdf(u, v).unwrap();
        prop_assert!(c >= (u + v - 1.0).max(0.0) - 1e-12 && c <= u.min(v) + 1e-12);
    }
}
