use std::sync::Arc;

use phasefield::{make_initial, Cutoff, Grid, InitKind, Norm, PhysicalField, SpectralField};
use proptest::prelude::*;

fn cutoff() -> impl Strategy<Value = Cutoff> {
    prop_oneof![Just(Cutoff::EuclideanBall), Just(Cutoff::Square)]
}

fn grid(n: usize, c: Cutoff) -> Arc<Grid> {
    Grid::with_cutoff(n, c).unwrap()
}

/// Arbitrary real samples on the full grid, so modes outside the cutoff are populated.
fn full_field(g: &Arc<Grid>, vals: &[f64]) -> SpectralField {
    let values = (0..g.len()).map(|i| vals[i % vals.len()] * ((i * 7919) % 13) as f64).collect();
    PhysicalField::new(g, values).unwrap().to_spectral().unwrap()
}

fn max_diff(a: &SpectralField, b: &SpectralField) -> f64 {
    a.coeffs().iter().zip(b.coeffs()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projection_idempotent_and_self_adjoint(
        c in cutoff(),
        n in 1usize..=8,
        vals in prop::collection::vec(-1.0f64..1.0, 5..40),
        wals in prop::collection::vec(-1.0f64..1.0, 5..40),
    ) {
        let g = grid(8, c);
        let f = full_field(&g, &vals);
        let h = full_field(&g, &wals);
        let pf = f.project(n, c).unwrap();
        prop_assert_eq!(&pf.project(n, c).unwrap(), &pf);
        let lhs = pf.inner(&h).unwrap();
        let rhs = f.inner(&h.project(n, c).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        prop_assert!(pf.is_in_cutoff() || n < 8);
        prop_assert!(pf.norm(Norm::L2) <= f.norm(Norm::L2) * (1.0 + 1e-14));
    }

    #[test]
    fn parseval_and_round_trip(
        c in cutoff(),
        n in 2usize..=12,
        seed in any::<u64>(),
        amp in 0.01f64..10.0,
        band_frac in 0.1f64..=1.0,
    ) {
        let g = grid(n, c);
        let band = ((n as f64 * band_frac).ceil() as usize).clamp(1, n);
        let u = make_initial(&InitKind::RandomBandlimited { seed, amplitude: amp, band }, &g).unwrap();
        let p = u.to_physical().unwrap();
        prop_assert!((p.max_abs() - u.norm(Norm::Linf)).abs() <= 1e-12 * amp);
        let l2 = u.norm(Norm::L2).powi(2);
        let quad = p.map(|v| v * v).quadrature();
        prop_assert!((l2 - quad).abs() <= 1e-12 * l2.max(1e-300));
        let back = p.to_spectral().unwrap();
        prop_assert!(max_diff(&back, &u) <= 1e-12 * u.max_abs_coeff());
        prop_assert_eq!(u.hermitian_defect(), 0.0);
    }

    #[test]
    fn multipliers_compose(
        n in 2usize..=10,
        seed in any::<u64>(),
        s in 0.1f64..3.0,
        t in 0.1f64..3.0,
    ) {
        let g = grid(n, Cutoff::EuclideanBall);
        let u = make_initial(&InitKind::RandomBandlimited { seed, amplitude: 1.0, band: n }, &g).unwrap();
        let st = u.frac_laplacian(s).unwrap().frac_laplacian(t).unwrap();
        let direct = u.frac_laplacian(s + t).unwrap();
        prop_assert!(max_diff(&st, &direct) <= 1e-12 * direct.max_abs_coeff());
        let back = direct.frac_laplacian(-(s + t)).unwrap();
        prop_assert!(max_diff(&back, &u) <= 1e-12 * u.max_abs_coeff());
        let lap = &u.partial(0).partial(0) + &u.partial(1).partial(1);
        prop_assert!(max_diff(&lap, &u.laplacian()) <= 1e-12 * lap.max_abs_coeff());
        // ‖f‖_{Ḣ¹}² = -(f, Δf)
        let h1 = u.norm(Norm::Hdot1).powi(2);
        prop_assert!((h1 + u.inner(&u.laplacian()).unwrap()).abs() <= 1e-12 * h1);
    }

    #[test]
    fn resample_up_and_down_is_identity(
        n in 2usize..=10,
        seed in any::<u64>(),
        extra in 1usize..8,
    ) {
        let g = grid(n, Cutoff::EuclideanBall);
        let big = grid(n + extra, Cutoff::EuclideanBall);
        let u = make_initial(&InitKind::RandomBandlimited { seed, amplitude: 1.0, band: n }, &g).unwrap();
        let up = u.resample(&big);
        prop_assert_eq!(up.resample(&g), u.clone());
        prop_assert!((up.norm(Norm::L2) - u.norm(Norm::L2)).abs() <= 1e-14 * u.norm(Norm::L2));
    }
}
