use blockclear_core::numerics::Tolerance;
use blockclear_core::stage3::{solve_cutoff, Stage3Solution};
use blockclear_core::valuations::{fosd_check, DiffusiveFamily, ValuationModel};
use proptest::prelude::*;

fn model_strategy() -> impl Strategy<Value = ValuationModel> {
    prop_oneof![
        (0.0..0.5f64, 0.6..3.0f64).prop_map(|(pi, v_bar)| ValuationModel::UniformOnFeeToMax { pi, v_bar }),
        (0.5..3.0f64).prop_map(|v_bar| ValuationModel::UniformOnZeroToMax { v_bar }),
        (0.5..3.0f64, 0.2..5.0f64).prop_map(|(v_bar, rate)| ValuationModel::TruncatedExponential { v_bar, rate }),
        (0.5..3.0f64, 1.0..4.0f64, 1.0..4.0f64)
            .prop_map(|(v_bar, alpha, beta)| ValuationModel::ScaledBeta { v_bar, alpha, beta }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quantile_inverts_cdf(model in model_strategy(), p in 0.0..=1.0f64) {
        let v = model.quantile(p).unwrap();
        prop_assert!((model.cdf(v) - p).abs() < 1e-10);
        let (lo, hi) = model.support();
        prop_assert!(v >= lo && v <= hi);
    }

    #[test]
    fn cutoff_increases_with_m(model in model_strategy(), frac in 0.0..0.4f64, m in 2usize..60) {
        let pi = frac * model.v_bar();
        let a = solve_cutoff(&model, m, pi, Tolerance::default()).unwrap();
        let b = solve_cutoff(&model, m + 1, pi, Tolerance::default()).unwrap();
        prop_assert!(pi < a && a < b && b < model.v_bar());
    }

    #[test]
    fn schedules_are_comonotone(model in model_strategy(), m in 2usize..20, t in 0.0..1.0f64, dt in 0.0..0.2f64) {
        let pi = 0.1 * model.v_bar();
        let s = Stage3Solution::solve(model, m, pi, Tolerance::default()).unwrap();
        let v1 = s.cutoff() + t * (s.v_bar() - s.cutoff());
        let v2 = (v1 + dt * s.v_bar()).min(s.v_bar());
        prop_assert!(s.volume_tilde(v2).unwrap() >= s.volume_tilde(v1).unwrap());
        let table = s.schedule().unwrap();
        prop_assert!(table.phi_per_depth(v2) >= table.phi_per_depth(v1));
        prop_assert!(s.volume_tilde(s.v_bar()).unwrap() == 0.5 * (s.v_bar() - pi));
    }

    #[test]
    fn deviation_never_beats_equilibrium(m in 2usize..8, t in 0.02..1.0f64, qf in 0.0..3.0f64, pf in 0.0..3.0f64) {
        let s = Stage3Solution::solve(
            ValuationModel::UniformOnFeeToMax { pi: 0.1, v_bar: 1.0 }, m, 0.1, Tolerance::default(),
        ).unwrap();
        let depth = 25.0;
        let v = s.cutoff() + t * (1.0 - s.cutoff());
        let q = depth * s.volume_tilde(v).unwrap();
        let phi = depth * s.schedule().unwrap().phi_per_depth(v);
        let eq = s.deviation_payoff(depth, v, q, phi, 0.0).unwrap();
        let dev = s.deviation_payoff(depth, v, qf * q, pf * phi, 0.0).unwrap();
        prop_assert!(eq - dev >= -1e-9);
    }

    #[test]
    fn default_family_dominance(t in 0.5..200.0f64, dt in 0.01..100.0f64) {
        let fam = DiffusiveFamily::default();
        prop_assert!(fosd_check(&fam, t, t + dt, 500).unwrap().holds);
    }
}

#[test]
fn sample_matches_cdf_ks() {
    use rand::SeedableRng;
    let model = ValuationModel::UniformOnFeeToMax { pi: 0.1, v_bar: 1.0 };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let n = 1_000_000;
    let mut xs: Vec<f64> = (0..n).map(|_| model.sample(&mut rng)).collect();
    xs.sort_by(f64::total_cmp);
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = model.cdf(x);
            (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.002, "{ks}");
}

#[test]
fn large_m_evaluations_are_finite() {
    let s = Stage3Solution::solve(
        ValuationModel::UniformOnFeeToMax { pi: 0.1, v_bar: 1.0 },
        100_000,
        0.1,
        Tolerance::default(),
    )
    .unwrap();
    for k in 0..=10 {
        let v = s.cutoff() + (1.0 - s.cutoff()) * k as f64 / 10.0;
        assert!(s.volume_tilde(v).unwrap().is_finite());
        assert!(s.phi_per_depth(v).unwrap().is_finite());
    }
    assert!(s.aggregate_volume(1.0).unwrap().is_finite());
}
