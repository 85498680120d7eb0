use std::f64::consts::PI;

use proptest::prelude::*;
use ropelab_core::encoding::{
    power_basis, rope_basis, truncated_basis, PowerParams, TruncationParams,
};
use ropelab_oracle::dd::{rope_freqs, Dd};

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// `θ_i (1 − 2i/d)^k` in double-double with the 0^k := 0 convention at i = d/2.
fn oracle_power(d: usize, base: f64, k: f64) -> Vec<Dd> {
    rope_freqs(d, base)
        .into_iter()
        .enumerate()
        .map(|(j, theta)| {
            let i = j + 1;
            if i == d / 2 {
                Dd::ZERO
            } else {
                let factor = Dd::ONE - Dd::from_ratio(2 * i as i64, d as i64);
                theta * factor.powd(Dd::from_f64(k))
            }
        })
        .collect()
}

fn table_cutoffs() -> (Dd, Dd, Dd) {
    let unit = Dd::pi() * Dd::from_f64(2.0) / Dd::from_f64(2048.0);
    (
        unit / Dd::from_f64(8.0),
        unit,
        unit / Dd::from_f64(16.0),
    )
}

#[test]
fn rope_matches_high_precision() {
    for d in [2usize, 4, 64, 128] {
        let got = rope_basis(d, 10000.0).unwrap();
        let want = rope_freqs(d, 10000.0);
        for (g, w) in got.freqs().iter().zip(&want) {
            assert!(rel(*g, w.to_f64()) < 1e-12, "d={d}: {g} vs {}", w.to_f64());
        }
    }
    // mpmath at 40 digits: 10000^(-126/128)
    let last = rope_basis(128, 10000.0).unwrap().freqs()[63];
    assert!(rel(last, 1.154_781_984_689_458_2e-4) < 1e-12);
}

#[test]
fn power_matches_high_precision() {
    for d in [2usize, 4, 64, 128] {
        for k in [0.0, 0.5, 1.0, 2.5] {
            let got = power_basis(d, 10000.0, &PowerParams { k }).unwrap();
            let want = oracle_power(d, 10000.0, k);
            for (g, w) in got.freqs().iter().zip(&want) {
                assert!(rel(*g, w.to_f64()) < 1e-12, "d={d} k={k}: {g} vs {}", w.to_f64());
            }
        }
    }
}

#[test]
fn power_below_rope_everywhere() {
    let rope = rope_basis(128, 10000.0).unwrap();
    let pow = power_basis(128, 10000.0, &PowerParams { k: 0.5 }).unwrap();
    let oracle = oracle_power(128, 10000.0, 0.5);
    for (i, ((r, p), o)) in rope.freqs().iter().zip(pow.freqs()).zip(&oracle).enumerate() {
        assert!(p < r, "pair {i}: power {p} not strictly below rope {r}");
        assert!(o.to_f64() < *r);
    }
}

#[test]
fn truncated_bands_from_oracle() {
    let (a, b, rho) = table_cutoffs();
    let params = TruncationParams::default();
    assert!(rel(params.a, a.to_f64()) < 1e-15);
    assert!(rel(params.b, b.to_f64()) < 1e-15);
    assert!(rel(params.rho, rho.to_f64()) < 1e-15);
    assert_eq!(params.b, 2.0 * PI / 2048.0);

    let theta = rope_freqs(128, 10000.0);
    let keep: Vec<usize> = (1..=64).filter(|&i| theta[i - 1] >= b).collect();
    let band: Vec<usize> = (1..=64)
        .filter(|&i| theta[i - 1] > a && theta[i - 1] < b)
        .collect();
    let zero: Vec<usize> = (1..=64).filter(|&i| theta[i - 1] <= a).collect();
    // Frozen from the double-double comparison above.
    assert_eq!(keep, (1..=41).collect::<Vec<_>>());
    assert_eq!(band, (42..=55).collect::<Vec<_>>());
    assert_eq!(zero, (56..=64).collect::<Vec<_>>());

    let got = truncated_basis(128, 10000.0, &params).unwrap();
    for i in 1..=64 {
        let g = got.freqs()[i - 1];
        let want = if keep.contains(&i) {
            theta[i - 1].to_f64()
        } else if band.contains(&i) {
            rho.to_f64()
        } else {
            0.0
        };
        assert!(rel(g, want) < 1e-12, "pair {i}: {g} vs {want}");
    }
}

#[test]
fn truncated_small_dims_against_oracle() {
    let (a, b, rho) = table_cutoffs();
    for d in [2usize, 4, 64] {
        let got = truncated_basis(d, 10000.0, &TruncationParams::default()).unwrap();
        for (g, t) in got.freqs().iter().zip(rope_freqs(d, 10000.0)) {
            let want = if t >= b {
                t
            } else if t > a {
                rho
            } else {
                Dd::ZERO
            };
            assert!(rel(*g, want.to_f64()) < 1e-12);
        }
    }
}

proptest! {
    #[test]
    fn rope_is_geometric(half in 3usize..96, base in 2.0f64..1e6) {
        let d = 2 * half;
        let f = rope_basis(d, base).unwrap();
        let f = f.freqs();
        for i in 2..f.len() {
            prop_assert!(rel(f[i] * f[i - 2], f[i - 1] * f[i - 1]) < 1e-10);
        }
        prop_assert_eq!(f[0], 1.0);
        prop_assert!(f.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn all_schemes_non_increasing(half in 1usize..96, k in 0.0f64..4.0) {
        let d = 2 * half;
        let p = power_basis(d, 10000.0, &PowerParams { k }).unwrap();
        let t = truncated_basis(d, 10000.0, &TruncationParams::default()).unwrap();
        for b in [p, t] {
            prop_assert_eq!(b.freqs().len(), d / 2);
            prop_assert!(b.freqs().iter().all(|&x| x >= 0.0));
            prop_assert!(b.freqs().windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn truncation_regimes_match_direct_comparison(
        half in 1usize..96,
        a in 1e-5f64..0.1,
        width in 1.01f64..50.0,
        rho_frac in 0.0f64..1.0,
    ) {
        let d = 2 * half;
        let b = a * width;
        let params = TruncationParams { a, b, rho: a + rho_frac * (b - a) };
        let rope = rope_basis(d, 10000.0).unwrap();
        let t = truncated_basis(d, 10000.0, &params).unwrap();
        for (theta, out) in rope.freqs().iter().zip(t.freqs()) {
            let expect = if *theta >= b { *theta } else if *theta > a { params.rho } else { 0.0 };
            prop_assert_eq!(*out, expect);
        }
    }

    #[test]
    fn power_k_zero_is_rope_except_last(half in 1usize..96, base in 2.0f64..1e6) {
        let d = 2 * half;
        let rope = rope_basis(d, base).unwrap();
        let pow = power_basis(d, base, &PowerParams { k: 0.0 }).unwrap();
        let n = d / 2;
        prop_assert_eq!(&pow.freqs()[..n - 1], &rope.freqs()[..n - 1]);
        prop_assert_eq!(pow.freqs()[n - 1], 0.0);
    }
}
