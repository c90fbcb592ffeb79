use num_complex::Complex64;
use proptest::prelude::*;

use witten_sampler::chebfilter::{chebyshev_sum, clenshaw, FilterSpec};
use witten_sampler::grid::{dot, gibbs_weights};
use witten_sampler::metrics::chi2_divergence;
use witten_sampler::reld::swap_rate_from_values;
use witten_sampler::{gibbs_state, harmonic, quartic_cosine_1d, tv_distance, BlockOperator, GridSpec, Potential};

fn density(raw: &[f64], cv: f64) -> Vec<f64> {
    let s: f64 = raw.iter().sum::<f64>() * cv;
    raw.iter().map(|x| x / s).collect()
}

fn densities(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n)
}

fn complex_vec(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n).prop_map(|v| v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect())
}

fn potential(which: u8) -> Potential {
    if which == 0 {
        harmonic(1.5, 1)
    } else {
        quartic_cosine_1d()
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn tv_is_a_bounded_symmetric_metric(p in densities(24), q in densities(24), r in densities(24)) {
        let cv = 0.25;
        let (p, q, r) = (density(&p, cv), density(&q, cv), density(&r, cv));
        let pq = tv_distance(&p, &q, cv).unwrap();
        prop_assert!((pq - tv_distance(&q, &p, cv).unwrap()).abs() < 1e-15);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&pq));
        prop_assert!(tv_distance(&p, &p, cv).unwrap() == 0.0);
        let pr = tv_distance(&p, &r, cv).unwrap();
        let rq = tv_distance(&r, &q, cv).unwrap();
        prop_assert!(pq <= pr + rq + 1e-12);
    }

    #[test]
    fn chi2_dominates_tv(p in densities(30), s in densities(30)) {
        let cv = 0.1;
        let (p, s) = (density(&p, cv), density(&s, cv));
        let tv = tv_distance(&p, &s, cv).unwrap();
        let chi2 = chi2_divergence(&p, &s, cv).unwrap();
        prop_assert!(chi2 >= 4.0 * tv * tv - 1e-12, "chi2 {chi2} tv {tv}");
    }

    #[test]
    fn block_operator_adjoint_pairs(u in complex_vec(16), w in complex_vec(16), beta in 0.2f64..5.0, which in 0u8..2) {
        let g = GridSpec::new(1, 16, 3.0).unwrap();
        let b = BlockOperator::langevin(&potential(which), beta, &g).unwrap();
        let lhs = dot(&b.apply(&u), &w);
        let rhs = dot(&u, &b.adjoint_apply(&w));
        prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + lhs.norm()));
    }

    #[test]
    fn witten_form_is_squared_norm(u in complex_vec(16), beta in 0.2f64..5.0, which in 0u8..2) {
        let g = GridSpec::new(1, 16, 3.0).unwrap();
        let b = BlockOperator::langevin(&potential(which), beta, &g).unwrap();
        let form = dot(&u, &b.witten_apply(&u));
        let lu = b.apply(&u);
        let sq = dot(&lu, &lu).re;
        prop_assert!(form.im.abs() <= 1e-9 * (1.0 + sq));
        prop_assert!((form.re - sq).abs() <= 1e-9 * (1.0 + sq));
        prop_assert!(form.re >= -1e-10);
        prop_assert!(sq.sqrt() <= b.alpha() * dot(&u, &u).re.sqrt() * (1.0 + 1e-12));
    }

    #[test]
    fn gibbs_state_is_unit_and_positive(beta in 0.0f64..12.0, half in 4usize..32, which in 0u8..2) {
        let g = GridSpec::new(1, 2 * half, 3.0).unwrap();
        let s = gibbs_state(&potential(which), beta, &g).unwrap();
        prop_assert!((s.norm() - 1.0).abs() < 1e-12);
        prop_assert!(s.amplitudes().iter().all(|a| a.re >= 0.0 && a.im == 0.0));
    }

    #[test]
    fn swap_rate_satisfies_detailed_balance(beta in 1.0f64..10.0, ratio in 0.05f64..1.0, vx in -3.0f64..3.0, vy in -3.0f64..3.0) {
        let bp = beta * ratio;
        let fwd = swap_rate_from_values(beta, bp, vx, vy);
        let bwd = swap_rate_from_values(beta, bp, vy, vx);
        prop_assert!(fwd > 0.0 && fwd <= 1.0);
        // σ_β(x) σ_β'(y) s(x, y) = σ_β(y) σ_β'(x) s(y, x), in log form
        let lhs = -beta * vx - bp * vy + fwd.ln();
        let rhs = -beta * vy - bp * vx + bwd.ln();
        prop_assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn designed_filters_are_even_and_bounded(s1 in 0.01f64..0.5, width in 0.02f64..0.4, frac in 0.2f64..1.0, degree in 20usize..300, x in -1.0f64..1.0) {
        let s2 = (s1 + width).min(1.0);
        let fs = FilterSpec::design(s1, s2, frac * (s2 - s1), degree, 1e-3).unwrap();
        let p = fs.evaluate(x).unwrap();
        prop_assert!(p.abs() <= 1.0 + 1e-9);
        prop_assert!((p - fs.evaluate(-x).unwrap()).abs() < 1e-10);
        prop_assert!(fs.coeffs.iter().skip(1).step_by(2).all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn clenshaw_agrees_with_direct_sum(coeffs in prop::collection::vec(-1.0f64..1.0, 1..60), x in -1.0f64..1.0) {
        let a = clenshaw(&coeffs, x);
        let b = chebyshev_sum(&coeffs, x);
        prop_assert!((a - b).abs() <= 1e-11 * coeffs.len() as f64);
    }
}

#[test]
fn gibbs_probabilities_match_weights() {
    let g = GridSpec::new(2, 12, 1.0).unwrap();
    let p = witten_sampler::muller_brown();
    let w = gibbs_weights(&p, 0.3, &g).unwrap();
    let s = gibbs_state(&p, 0.3, &g).unwrap();
    let z: f64 = w.iter().sum();
    for (wi, pi) in w.iter().zip(s.probabilities()) {
        assert!((wi / z - pi).abs() < 1e-14);
    }
}
