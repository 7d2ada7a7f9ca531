use proptest::prelude::*;
use rand::Rng as _;
use softirl_core::data::{population_dataset, sample_transitions};
use softirl_core::gridworld::{build_env, expert_policy, GridworldSpec};
use softirl_core::maxent::{loglik_and_grad, maxent_fit, MaxEntConfig, Optimizer, StepSchedule};
use softirl_core::mdp::{
    apply_p, conditional_loglik, expect_mu, lambda_mu_norm, logsumexp_actions, policy_q, policy_value,
    soft_bellman_residual, soft_bellman_step, soft_value_iteration, stationary_distribution,
};
use softirl_core::metrics::{evaluate, qdiff, Truth};
use softirl_core::oracles::{fit_classifier, fit_regressor, ClassifierSpec, RegressionSample, RegressorSpec};
use softirl_core::rng::{self, Rng};
use softirl_core::solver::{
    check_normalization, classify_then_regress, exact_population_solver, shape, split_classify_regress, t_u_apply,
    Benchmark, IterationCount, NormalizationKind, NormalizationMeasure, SolverConfig,
};
use softirl_core::{
    FeatureMap, PolicyTable, SamplingRegime, StateActionFn, StateDistribution, StateFn, TabularMdp, TransitionDataset,
};

struct Instance {
    mdp: TabularMdp,
    pi: PolicyTable,
    rng: Rng,
}

fn instance(seed: u64, ns: usize, na: usize, gamma: f64) -> Instance {
    let mut rng = rng::stream(seed, 77);
    let kernel = (0..ns * na * ns).map(|_| rng.random_range(0.0..1.0)).collect();
    let mdp = TabularMdp::from_weights(ns, na, gamma, kernel).unwrap();
    let pi = random_policy(&mut rng, ns, na);
    Instance { mdp, pi, rng }
}

fn random_policy(rng: &mut Rng, ns: usize, na: usize) -> PolicyTable {
    PolicyTable::from_weights(ns, na, (0..ns * na).map(|_| rng.random_range(0.05..1.0)).collect()).unwrap()
}

fn random_table(rng: &mut Rng, ns: usize, na: usize, scale: f64) -> StateActionFn {
    StateActionFn::from_fn(ns, na, |_, _| rng.random_range(-scale..scale))
}

fn random_potential(rng: &mut Rng, ns: usize, scale: f64) -> StateFn {
    StateFn::from_fn(ns, |_| rng.random_range(-scale..scale))
}

fn mu_kind(index: usize, na: usize) -> NormalizationKind {
    match index % 3 {
        0 => NormalizationKind::Uniform,
        1 => NormalizationKind::PointMass(index % na),
        _ => NormalizationKind::BehaviorPolicy,
    }
}

/// Population data over uniform states: tabular oracles on it are exact.
fn exact_oracles(mdp: &TabularMdp, pi: &PolicyTable, k: usize, mu: NormalizationKind) -> (TransitionDataset, SolverConfig) {
    let data = population_dataset(mdp, pi, &StateDistribution::uniform(mdp.n_states())).unwrap();
    let cfg = SolverConfig {
        k: IterationCount::Fixed(k),
        mu,
        classifier: ClassifierSpec::tabular(0.0),
        ..SolverConfig::tabular(mdp.gamma())
    };
    (data, cfg)
}

/// Fixed point of `v = P mu (gamma v - u)` by iterating the contraction.
fn fixed_point(mdp: &TabularMdp, mu: &NormalizationMeasure, u: &StateActionFn) -> StateActionFn {
    let mut v = StateActionFn::zeros(mdp.n_states(), mdp.n_actions());
    for _ in 0..5000 {
        let next = t_u_apply(mdp, mu, u, &v).unwrap();
        let step = next.max_abs_diff(&v).unwrap();
        v = next;
        if step < 1e-15 {
            break;
        }
    }
    v
}

fn dims() -> impl Strategy<Value = (u64, usize, usize, f64)> {
    (any::<u64>(), 3usize..=10, 2usize..=5, 0.3f64..0.97)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn apply_p_preserves_constants((seed, ns, na, gamma) in dims(), c in -50.0f64..50.0) {
        let inst = instance(seed, ns, na, gamma);
        let out = apply_p(&inst.mdp, &StateFn::constant(ns, c)).unwrap();
        prop_assert!(out.values().iter().all(|x| (x - c).abs() <= 1e-12 * c.abs().max(1.0)));
    }

    #[test]
    fn log_probability_rows_have_zero_logsumexp((seed, ns, na, gamma) in dims()) {
        let inst = instance(seed, ns, na, gamma);
        let lse = logsumexp_actions(&inst.pi.log_table().unwrap());
        prop_assert!(lse.sup_norm() <= 1e-12);
    }

    #[test]
    fn soft_value_iteration_decays_geometrically((seed, ns, na, gamma) in dims()) {
        let mut inst = instance(seed, ns, na, gamma);
        let r = random_table(&mut inst.rng, ns, na, 2.0);
        let fixed = soft_value_iteration(&inst.mdp, &r, 1e-13, 1_000_000).unwrap().v;
        let mut v = StateActionFn::zeros(ns, na);
        let e0 = v.max_abs_diff(&fixed).unwrap();
        let slack = 1e-13 / (1.0 - gamma) * 4.0;
        for k in 1..=60 {
            v = soft_bellman_step(&inst.mdp, &r, &v).unwrap();
            let ek = v.max_abs_diff(&fixed).unwrap();
            prop_assert!(ek <= gamma.powi(k) * e0 + slack, "k={} ek={} bound={}", k, ek, gamma.powi(k) * e0);
        }
    }

    #[test]
    fn policy_q_solves_its_bellman_equation((seed, ns, na, gamma) in dims()) {
        let mut inst = instance(seed, ns, na, gamma);
        let r = random_table(&mut inst.rng, ns, na, 3.0);
        let q = policy_q(&inst.mdp, &r, &inst.pi).unwrap();
        let next = apply_p(&inst.mdp, &expect_mu(&inst.pi, &q).unwrap()).unwrap();
        let resid = q.zip_with(&r.add_scaled(&next, gamma).unwrap(), |a, b| a - b).unwrap().sup_norm();
        prop_assert!(resid <= 1e-9, "residual {}", resid);
    }

    #[test]
    fn shaping_keeps_feasibility_and_likelihood((seed, ns, na, gamma) in dims()) {
        let mut inst = instance(seed, ns, na, gamma);
        let u = inst.pi.log_table().unwrap();
        let v0 = StateActionFn::zeros(ns, na);
        prop_assert!(soft_bellman_residual(&inst.mdp, &u, &v0).unwrap().sup_norm() <= 1e-12);
        let c = random_potential(&mut inst.rng, ns, 5.0);
        let (r, v) = shape(&u, &v0, &c, &inst.mdp).unwrap();
        prop_assert!(soft_bellman_residual(&inst.mdp, &r, &v).unwrap().sup_norm() <= 1e-10);
        let rho = population_dataset(&inst.mdp, &inst.pi, &StateDistribution::uniform(ns))
            .unwrap()
            .sa_distribution()
            .unwrap();
        let base = conditional_loglik(&inst.mdp, &rho, &u, &v0).unwrap();
        let shaped = conditional_loglik(&inst.mdp, &rho, &r, &v).unwrap();
        prop_assert!((base - shaped).abs() <= 1e-10);
    }

    #[test]
    fn trivial_solution_maximizes_likelihood((seed, ns, na, gamma) in dims()) {
        let mut inst = instance(seed, ns, na, gamma);
        let u = inst.pi.log_table().unwrap();
        let v0 = StateActionFn::zeros(ns, na);
        prop_assert!(soft_bellman_residual(&inst.mdp, &u, &v0).unwrap().sup_norm() <= 1e-12);
        let rho = population_dataset(&inst.mdp, &inst.pi, &StateDistribution::uniform(ns))
            .unwrap()
            .sa_distribution()
            .unwrap();
        let best = conditional_loglik(&inst.mdp, &rho, &u, &v0).unwrap();
        for _ in 0..100 {
            let dr = random_table(&mut inst.rng, ns, na, 0.5);
            let dv = random_table(&mut inst.rng, ns, na, 0.5);
            let r = u.add_scaled(&dr, 1.0).unwrap();
            let ll = conditional_loglik(&inst.mdp, &rho, &r, &dv).unwrap();
            prop_assert!(best > ll, "{} vs {}", best, ll);
        }
    }

    #[test]
    fn expert_policy_ignores_shaping((seed, ns, na, gamma) in dims()) {
        let mut inst = instance(seed, ns, na, gamma);
        let r = random_table(&mut inst.rng, ns, na, 2.0);
        let c = random_potential(&mut inst.rng, ns, 3.0);
        let (shaped, _) = shape(&r, &StateActionFn::zeros(ns, na), &c, &inst.mdp).unwrap();
        let a = expert_policy(&inst.mdp, &r).unwrap();
        let b = expert_policy(&inst.mdp, &shaped).unwrap();
        prop_assert!(a.max_abs_diff(&b).unwrap() <= 1e-9);
        let back = expert_policy(&inst.mdp, &inst.pi.log_table().unwrap()).unwrap();
        prop_assert!(back.max_abs_diff(&inst.pi).unwrap() <= 1e-9);
    }

    #[test]
    fn exact_solution_is_a_fixed_point((seed, ns, na, gamma) in dims(), m in 0usize..3) {
        let inst = instance(seed, ns, na, gamma);
        let sol = exact_population_solver(&inst.mdp, &inst.pi, mu_kind(m, na)).unwrap();
        let applied = t_u_apply(&inst.mdp, &sol.mu, &sol.u_hat, &sol.v_hat).unwrap();
        prop_assert!(applied.max_abs_diff(&sol.v_hat).unwrap() <= 1e-9);
        prop_assert!(soft_bellman_residual(&inst.mdp, &sol.r_hat, &sol.v_hat).unwrap().sup_norm() <= 1e-9);
        prop_assert!(check_normalization(&sol.r_hat, &sol.mu).unwrap() <= 1e-10);
    }

    #[test]
    fn exact_oracle_iterates_contract((seed, ns, na, gamma) in dims(), m in 0usize..3) {
        let inst = instance(seed, ns, na, gamma);
        let (data, cfg) = exact_oracles(&inst.mdp, &inst.pi, 50, mu_kind(m, na));
        let bench = Benchmark { mdp: &inst.mdp, policy: &inst.pi };
        let sol = classify_then_regress(&data, &cfg, Some(bench)).unwrap();
        let exact = exact_population_solver(&inst.mdp, &inst.pi, cfg.mu).unwrap();
        let e0 = exact.v_hat.sup_norm();
        for (k, d) in sol.diagnostics.distance_to_exact.unwrap().iter().enumerate() {
            let bound = gamma.powi(k as i32 + 1) * e0 + 1e-12;
            prop_assert!(*d <= bound, "k={} d={} bound={}", k + 1, d, bound);
        }
    }

    #[test]
    fn fixed_point_is_lipschitz_in_u((seed, ns, na, gamma) in dims(), delta in 1e-3f64..1.0, uniform_mu in any::<bool>()) {
        let mut inst = instance(seed, ns, na, gamma);
        let mu_policy = if uniform_mu { PolicyTable::uniform(ns, na) } else { random_policy(&mut inst.rng, ns, na) };
        let mu = NormalizationMeasure::realize(NormalizationKind::BehaviorPolicy, ns, na, Some(&mu_policy)).unwrap();
        let u = inst.pi.log_table().unwrap();
        let u2 = u.add_scaled(&random_table(&mut inst.rng, ns, na, 1.0), delta).unwrap();
        let (v, v2) = (fixed_point(&inst.mdp, &mu, &u), fixed_point(&inst.mdp, &mu, &u2));
        let lambda = stationary_distribution(&inst.mdp, &mu.realized, 1e-12).unwrap();
        let dv = lambda_mu_norm(&v.add_scaled(&v2, -1.0).unwrap(), &lambda, &mu.realized).unwrap();
        let du = lambda_mu_norm(&u.add_scaled(&u2, -1.0).unwrap(), &lambda, &mu.realized).unwrap();
        prop_assert!(du <= delta + 1e-12);
        prop_assert!(dv <= du / (1.0 - gamma) + 1e-10, "dv={} du={}", dv, du);
    }

    #[test]
    fn behavior_normalization_keeps_likelihood_optimality((seed, ns, na, gamma) in dims(), k in 1usize..30) {
        let inst = instance(seed, ns, na, gamma);
        let (data, cfg) = exact_oracles(&inst.mdp, &inst.pi, k, NormalizationKind::BehaviorPolicy);
        let bench = Benchmark { mdp: &inst.mdp, policy: &inst.pi };
        let sol = classify_then_regress(&data, &cfg, Some(bench)).unwrap();
        let q = sol.q();
        let lse = logsumexp_actions(&q);
        let log_pi = inst.pi.log_table().unwrap();
        for s in 0..ns {
            for a in 0..na {
                prop_assert!((q.get(s, a) - lse[s] - log_pi.get(s, a)).abs() <= 1e-8);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn policy_value_differences_are_identified((seed, ns, na, gamma) in dims()) {
        let mut inst = instance(seed, ns, na, gamma);
        let u = inst.pi.log_table().unwrap();
        let c = random_potential(&mut inst.rng, ns, 5.0);
        let (r, _) = shape(&u, &StateActionFn::zeros(ns, na), &c, &inst.mdp).unwrap();
        let (p1, p2) = (random_policy(&mut inst.rng, ns, na), random_policy(&mut inst.rng, ns, na));
        let du = |p: &PolicyTable| policy_value(&inst.mdp, &u, p).unwrap();
        let dr = |p: &PolicyTable| policy_value(&inst.mdp, &r, p).unwrap();
        let (a1, a2, b1, b2) = (du(&p1), du(&p2), dr(&p1), dr(&p2));
        for s in 0..ns {
            prop_assert!(((a1[s] - a2[s]) - (b1[s] - b2[s])).abs() <= 1e-8);
        }
    }

    #[test]
    fn returned_rewards_are_normalized((seed, ns, na, gamma) in dims(), m in 0usize..3, split in any::<bool>()) {
        let inst = instance(seed, ns, na, gamma);
        let data = sample_transitions(
            &inst.mdp, &inst.pi, 400, &StateDistribution::uniform(ns), SamplingRegime::DiscountedRestart, seed, "rand",
        ).unwrap();
        let cfg = SolverConfig {
            k: IterationCount::Fixed(4),
            mu: mu_kind(m, na),
            classifier: ClassifierSpec::tabular(0.5),
            ..SolverConfig::tabular(gamma)
        };
        let sol = if split {
            split_classify_regress(&data, &cfg, None).unwrap()
        } else {
            classify_then_regress(&data, &cfg, None).unwrap()
        };
        let scale = sol.r_hat.sup_norm().max(1.0);
        prop_assert!(check_normalization(&sol.r_hat, &sol.mu).unwrap() <= 1e-13 * scale);
    }

    #[test]
    fn sampled_records_obey_the_kernel(seed in any::<u64>(), trajectory in any::<bool>()) {
        let env = build_env(&GridworldSpec::hard(seed % 1000)).unwrap();
        let pi = expert_policy(&env.mdp, &env.r_true).unwrap();
        let regime = if trajectory { SamplingRegime::Trajectory } else { SamplingRegime::DiscountedRestart };
        let data = sample_transitions(&env.mdp, &pi, 2000, &StateDistribution::uniform(64), regime, seed, "hard").unwrap();
        prop_assert!(data.check_kernel(&env.mdp).is_ok());
        let again = sample_transitions(&env.mdp, &pi, 2000, &StateDistribution::uniform(64), regime, seed, "hard").unwrap();
        prop_assert_eq!(data, again);
    }

    #[test]
    fn metrics_ignore_shaping_of_the_estimate((seed, ns, na, gamma) in dims(), ref_action in 0usize..2) {
        let mut inst = instance(seed, ns, na, gamma);
        let truth = Truth { q: random_table(&mut inst.rng, ns, na, 2.0) };
        let q_hat = random_table(&mut inst.rng, ns, na, 2.0);
        let c = random_potential(&mut inst.rng, ns, 10.0);
        let shifted = q_hat.add_state_fn(&c).unwrap();
        let d1 = qdiff(&q_hat, ref_action).unwrap();
        prop_assert!(d1.max_abs_diff(&qdiff(&shifted, ref_action).unwrap()).unwrap() <= 1e-12);
        let w = StateDistribution::from_weights((0..ns).map(|_| inst.rng.random_range(0.1..1.0)).collect()).unwrap();
        let a = evaluate(&truth, &q_hat, &w, ref_action).unwrap();
        let b = evaluate(&truth, &shifted, &w, ref_action).unwrap();
        prop_assert!((a.rmse_qdiff - b.rmse_qdiff).abs() <= 1e-9);
        prop_assert!((a.corr_qdiff.unwrap() - b.corr_qdiff.unwrap()).abs() <= 1e-9);
        prop_assert!((a.kl - b.kl).abs() <= 1e-9 && (a.tv - b.tv).abs() <= 1e-9 && a.top1 == b.top1);
        prop_assert!(a.kl >= 0.0 && (0.0..=1.0).contains(&a.tv) && (0.0..=1.0).contains(&a.top1));
        prop_assert!((-1.0..=1.0).contains(&a.corr_qdiff.unwrap()));
    }

    #[test]
    fn classifier_rows_respect_the_floor(seed in any::<u64>(), alpha in 0.0f64..2.0, floor_exp in 2i32..8) {
        let inst = instance(seed, 6, 4, 0.9);
        let data = sample_transitions(
            &inst.mdp, &inst.pi, 50, &StateDistribution::uniform(6), SamplingRegime::DiscountedRestart, seed, "rand",
        ).unwrap();
        let floor = 10f64.powi(-floor_exp);
        let spec = ClassifierSpec { prob_floor: floor, ..ClassifierSpec::tabular(alpha) };
        let fit = fit_classifier(&spec, &data).unwrap();
        for s in 0..6 {
            let row = fit.policy.row(s);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|&p| p >= floor / 2.0));
        }
    }

    #[test]
    fn ridge_on_one_hot_matches_cell_means(seed in any::<u64>(), n in 60usize..300) {
        let mut rng = rng::stream(seed, 5);
        let (ns, na) = (4, 3);
        let samples: Vec<RegressionSample> = (0..n)
            .map(|_| RegressionSample {
                s: rng.random_range(0..ns),
                a: rng.random_range(0..na),
                y: rng.random_range(-3.0..3.0),
                w: rng.random_range(0.1..2.0),
            })
            .collect();
        let tab = fit_regressor(&RegressorSpec::tabular(0.0), ns, na, &samples).unwrap();
        let ridge = fit_regressor(&RegressorSpec::ridge(FeatureMap::one_hot(ns, na), 0.0), ns, na, &samples);
        let visited: std::collections::BTreeSet<(usize, usize)> = samples.iter().map(|x| (x.s, x.a)).collect();
        prop_assume!(visited.len() == ns * na);
        let ridge = ridge.unwrap();
        for &(s, a) in &visited {
            prop_assert!((ridge.predict(s, a).unwrap() - tab.predict(s, a).unwrap()).abs() <= 1e-10);
        }
        // ERM dominance over the best constant predictor.
        let total: f64 = samples.iter().map(|x| x.w).sum();
        let mean = samples.iter().map(|x| x.w * x.y).sum::<f64>() / total;
        let risk = |f: &dyn Fn(usize, usize) -> f64| samples.iter().map(|x| x.w * (x.y - f(x.s, x.a)).powi(2)).sum::<f64>();
        prop_assert!(risk(&|s, a| tab.predict(s, a).unwrap()) <= risk(&|_, _| mean) + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(5))]

    #[test]
    fn maxent_gradient_matches_finite_differences(seed in any::<u64>()) {
        let mut rng = rng::stream(seed, 3);
        let (ns, na, dim) = (rng.random_range(3..=6), rng.random_range(2..=4), rng.random_range(2..=6));
        let inst = instance(seed, ns, na, rng.random_range(0.5..0.95));
        let phi = FeatureMap::from_fn(ns, na, dim, |_, _, f| f.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0))).unwrap();
        let theta: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rho = population_dataset(&inst.mdp, &inst.pi, &StateDistribution::uniform(ns)).unwrap().sa_distribution().unwrap();
        let eval = |t: &[f64]| loglik_and_grad(&inst.mdp, &phi, t, &rho, None, 1e-14, 1_000_000).unwrap();
        let g = eval(&theta).grad;
        let h = 1e-5;
        for i in 0..dim {
            let (mut up, mut dn) = (theta.clone(), theta.clone());
            up[i] += h;
            dn[i] -= h;
            let fd = (eval(&up).loglik - eval(&dn).loglik) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-4 * g[i].abs().max(1e-6), "coord {}: fd {} analytic {}", i, fd, g[i]);
        }
    }

    #[test]
    fn one_hot_maxent_reaches_the_classifier_likelihood(seed in any::<u64>()) {
        let inst = instance(seed, 4, 3, 0.8);
        let data = sample_transitions(
            &inst.mdp, &inst.pi, 2000, &StateDistribution::uniform(4), SamplingRegime::DiscountedRestart, seed, "rand",
        ).unwrap();
        let cfg = MaxEntConfig {
            optimizer: Optimizer::adam(),
            step_size: 0.1,
            schedule: StepSchedule::Constant,
            max_epochs: 3000,
            patience: 3000,
            ..MaxEntConfig::default()
        };
        let fit = maxent_fit(&inst.mdp, &FeatureMap::one_hot(4, 3), &data, &cfg).unwrap();
        let tab = fit_classifier(&ClassifierSpec::tabular(0.0), &data).unwrap();
        let rho = data.sa_distribution().unwrap();
        let kl_to_empirical = |p: &PolicyTable| -> f64 {
            let mut kl = 0.0;
            for s in 0..4 {
                let ns: f64 = (0..3).map(|a| rho.weight(s, a)).sum();
                for a in 0..3 {
                    let w = rho.weight(s, a);
                    if w > 0.0 {
                        kl += w * ((w / ns).ln() - p.prob(s, a).ln());
                    }
                }
            }
            kl
        };
        let (kl_fit, kl_tab) = (kl_to_empirical(&fit.policy), kl_to_empirical(&tab.policy));
        prop_assert!(kl_fit <= kl_tab + 1e-3, "maxent {} tabular {}", kl_fit, kl_tab);
    }
}

#[test]
fn action_frequencies_concentrate_at_200k() {
    let env = build_env(&GridworldSpec::easy(3)).unwrap();
    let pi = expert_policy(&env.mdp, &env.r_true).unwrap();
    let n = 200_000;
    let data = sample_transitions(&env.mdp, &pi, n, &StateDistribution::uniform(16), SamplingRegime::DiscountedRestart, 3, "easy").unwrap();
    let mut counts = vec![[0usize; 5]; 16];
    for t in data.records() {
        counts[t.s][t.a] += 1;
    }
    for (s, row) in counts.iter().enumerate() {
        let visits: usize = row.iter().sum();
        assert!(visits > 0);
        for (a, &c) in row.iter().enumerate() {
            let p = pi.prob(s, a);
            let se = (p * (1.0 - p) / visits as f64).sqrt();
            let freq = c as f64 / visits as f64;
            assert!((freq - p).abs() <= 3.0 * se, "state {s} action {a}: {freq} vs {p} (se {se})");
        }
    }
}

#[test]
fn tabular_classifier_kl_shrinks_with_n() {
    let env = build_env(&GridworldSpec::easy(0)).unwrap();
    let pi = expert_policy(&env.mdp, &env.r_true).unwrap();
    let sizes = [1_000, 10_000, 100_000];
    let seeds = 20;
    let mut improved = [0usize; 2];
    for seed in 0..seeds {
        let kl: Vec<f64> = sizes
            .iter()
            .map(|&n| {
                let data = sample_transitions(&env.mdp, &pi, n, &StateDistribution::uniform(16), SamplingRegime::DiscountedRestart, seed, "easy").unwrap();
                let fit = fit_classifier(&ClassifierSpec::tabular(0.5), &data).unwrap();
                let mut total = 0.0;
                for s in 0..16 {
                    for a in 0..5 {
                        let p = pi.prob(s, a);
                        total += p * (p / fit.policy.prob(s, a)).ln() / 16.0;
                    }
                }
                total
            })
            .collect();
        improved[0] += usize::from(kl[1] < kl[0]);
        improved[1] += usize::from(kl[2] < kl[1]);
    }
    // One-sided sign test at the 5% level: at least 15 of 20.
    assert!(improved.iter().all(|&k| k >= 15), "{improved:?}");
}
