use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use syflow::flows::{init_identity, SplineFlowParams};
use syflow::objective::{
    kl_estimate, objective_grads, total_objective, KlNormalization, ObjectiveConfig,
};
use syflow::rules::{SoftPredicateParams, SoftRuleParams};
use syflow::Matrix;

fn gaussian_logpdf(x: f64, mu: f64, sd: f64) -> f64 {
    -0.5 * ((x - mu) / sd).powi(2) - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

#[test]
fn kl_estimate_converges_to_gaussian_kl() {
    // KL(N(1.5, 0.5) || N(0, 1)) = ln(1 / 0.5) + (0.25 + 2.25) / 2 - 1/2
    let exact = 2.0f64.ln() + (0.5f64.powi(2) + 1.5f64.powi(2)) / 2.0 - 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let inside = Normal::new(1.5, 0.5).unwrap();
    let n = 100_000;
    let mut s = Vec::with_capacity(n);
    let mut lp_sg = Vec::with_capacity(n);
    let mut lp_marg = Vec::with_capacity(n);
    for i in 0..n {
        // half the rows are members, drawn from the subgroup density
        let member = i % 2 == 0;
        let y = if member {
            inside.sample(&mut rng)
        } else {
            rng.gen_range(-3.0..3.0)
        };
        s.push(if member { 1.0 } else { 0.0 });
        lp_sg.push(gaussian_logpdf(y, 1.5, 0.5));
        lp_marg.push(gaussian_logpdf(y, 0.0, 1.0));
    }
    let est = kl_estimate(&s, &lp_sg, &lp_marg).unwrap();
    assert!((est - exact).abs() <= 0.02 * exact, "{est} vs {exact}");
}

proptest! {
    #[test]
    fn kl_estimate_is_scale_free_in_memberships(
        rows in prop::collection::vec((0.01..1.0f64, -3.0..3.0f64, -3.0..3.0f64), 1..50),
        c in 0.01..100.0f64,
    ) {
        let s: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let a: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let b: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let scaled: Vec<f64> = s.iter().map(|v| v * c).collect();
        let (k0, k1) = (kl_estimate(&s, &a, &b).unwrap(), kl_estimate(&scaled, &a, &b).unwrap());
        prop_assert!((k0 - k1).abs() <= 1e-10 * k0.abs().max(1.0));
    }

    #[test]
    fn objective_grows_with_kl_and_size(
        s in prop::collection::vec(0.05..1.0f64, 2..40),
        shift in 0.0..2.0f64,
        bump in 0.0..1.0f64,
        gamma in 0.0..2.0f64,
        population in any::<bool>(),
    ) {
        let n = s.len();
        let marg = vec![0.0; n];
        let cfg = ObjectiveConfig::new(gamma, 0.0).unwrap().with_normalization(if population {
            KlNormalization::Population
        } else {
            KlNormalization::Subgroup
        });
        // a constant non-negative log-ratio keeps the KL fixed when s changes
        let low = vec![shift; n];
        let high = vec![shift + bump; n];
        let base = total_objective(&s, &low, &marg, &[], &cfg).unwrap();
        prop_assert!(total_objective(&s, &high, &marg, &[], &cfg).unwrap() >= base - 1e-12);
        let bigger: Vec<f64> = s.iter().map(|v| (v + bump * (1.0 - v)).min(1.0)).collect();
        prop_assert!(total_objective(&bigger, &low, &marg, &[], &cfg).unwrap() >= base - 1e-12);
    }
}

fn shifted_flow(shift: f64) -> SplineFlowParams {
    let mut f = init_identity(8, 4.0);
    f.standardization.shift = shift;
    f
}

fn instance(rng: &mut ChaCha8Rng) -> (Matrix, Vec<f64>, SoftRuleParams) {
    let (n, p) = (40, 3);
    let data = (0..n * p).map(|_| rng.gen_range(0.0..1.0)).collect();
    let x = Matrix::new(n, p, data).unwrap();
    let y = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let preds = (0..p)
        .map(|_| {
            let a = rng.gen_range(-0.1..0.4);
            SoftPredicateParams::new(a, a + rng.gen_range(0.3..0.8))
        })
        .collect();
    let w = (0..p).map(|_| rng.gen_range(0.3..2.0)).collect();
    (x, y, SoftRuleParams::new(preds, w, 0.2).unwrap())
}

#[test]
fn zero_log_ratio_without_size_term_has_no_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (x, y, rule) = instance(&mut rng);
    // equal flows: the log-ratio is identically zero
    let f = shifted_flow(0.3);
    let cfg = ObjectiveConfig::new(0.0, 0.0).unwrap();
    let g = objective_grads(&x, &y, &rule, &f, &f, &[], &cfg)
        .unwrap()
        .to_flat();
    assert!(g.iter().all(|v| v.abs() < 1e-12), "{g:?}");
}

#[test]
fn regularizer_gradient_is_linear_in_lambda() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let (x, y, rule) = instance(&mut rng);
    let sg = shifted_flow(0.5);
    let marg = shifted_flow(0.0);
    let priors = vec![shifted_flow(-0.7), shifted_flow(1.2)];
    for norm in [KlNormalization::Subgroup, KlNormalization::Population] {
        let grad = |lambda: f64| {
            let cfg = ObjectiveConfig::new(0.5, lambda)
                .unwrap()
                .with_normalization(norm);
            objective_grads(&x, &y, &rule, &sg, &marg, &priors, &cfg)
                .unwrap()
                .to_flat()
        };
        let (g0, g1, g2) = (grad(0.0), grad(1.0), grad(2.0));
        for i in 0..g0.len() {
            let (r1, r2) = (g1[i] - g0[i], g2[i] - g0[i]);
            assert!(
                (r2 - 2.0 * r1).abs() <= 1e-10 * r2.abs().max(1e-6),
                "{norm:?} {i}"
            );
        }
    }
}
