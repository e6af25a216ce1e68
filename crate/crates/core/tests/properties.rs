use hmmclust::bounds::{
    bound_report, classification_sandwich, fastrate_diagnostic, gap_bounds_iid_j2, iid_class_risk,
    lambda_separation, total_variation, BoundOptions,
};
use hmmclust::clusterers::{
    monte_carlo_risks, oracle_bayes_cluster, plugin_cluster_with, Method, MethodSettings,
};
use hmmclust::inference::{bayes_classify, forward_filter, smooth};
use hmmclust::model::{sample_trajectory, EmissionModel, GaussianComponent};
use hmmclust::oracle::{bayes_class_risk_exact, bayes_clust_risk_exact, joint_posterior, Limits};
use hmmclust::partitions::{
    enumerate_partitions, misclassification_loss, permutation_overlap_loss, restricted_bell,
};
use hmmclust::spectral::{project_simplex, project_simplex_floor};
use hmmclust::{HmmParams, Likelihoods, Observations, Partition};
use itertools::Itertools;
use proptest::prelude::*;

fn normalize(w: Vec<f64>) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn prob_vec(k: usize, floor: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(floor..1.0f64, k).prop_map(normalize)
}

fn finite_emissions(j: usize, a: usize) -> impl Strategy<Value = Vec<EmissionModel>> {
    prop::collection::vec(prob_vec(a, 0.02), j).prop_map(|ps| {
        ps.into_iter()
            .map(|pmf| EmissionModel::Finite { pmf })
            .collect()
    })
}

fn iid_model(j: usize, a: usize) -> impl Strategy<Value = HmmParams> {
    (prob_vec(j, 0.05), finite_emissions(j, a)).prop_map(|(nu, e)| HmmParams::iid(nu, e).unwrap())
}

fn hmm_model(j: usize, a: usize) -> impl Strategy<Value = HmmParams> {
    (
        prop::collection::vec(prob_vec(j, 0.05), j),
        finite_emissions(j, a),
    )
        .prop_map(|(q, e)| HmmParams::stationary(q, e).unwrap())
}

/// Any model with `J ≤ 3` on an alphabet of size `≤ 3`.
fn small_model() -> impl Strategy<Value = HmmParams> {
    (1usize..=3, 1usize..=3, any::<bool>()).prop_flat_map(|(j, a, iid)| {
        if iid {
            iid_model(j, a).boxed()
        } else {
            hmm_model(j, a).boxed()
        }
    })
}

fn symbols(a: usize, n: usize) -> impl Strategy<Value = Observations> {
    prop::collection::vec(0..a, n).prop_map(Observations::Symbols)
}

fn alphabet(p: &HmmParams) -> usize {
    match &p.emissions[0] {
        EmissionModel::Finite { pmf } => pmf.len(),
        _ => unreachable!(),
    }
}

fn model_and_obs(max_n: usize) -> impl Strategy<Value = (HmmParams, Observations)> {
    (small_model(), 1..=max_n).prop_flat_map(|(p, n)| {
        let a = alphabet(&p);
        (Just(p), symbols(a, n))
    })
}

fn gaussian(mean: f64, sd: f64) -> EmissionModel {
    EmissionModel::GaussianMixture {
        components: vec![GaussianComponent::new(1.0, mean, sd)],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn smoothing_matches_joint_posterior((p, y) in model_and_obs(6)) {
        let sm = smooth(&p, &y).unwrap();
        let marg = joint_posterior(&p, &y, &Limits::default()).unwrap().marginals();
        for (row, exact) in sm.rows().zip(&marg) {
            let s: f64 = row.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            for (u, v) in row.iter().zip(exact) {
                prop_assert!((u - v).abs() < 1e-10);
            }
        }
        let ff = forward_filter(&p, &y).unwrap();
        prop_assert!((ff.loglik - sm.loglik).abs() < 1e-9);
    }

    #[test]
    fn relabelling_states((p, y) in model_and_obs(8), seed in any::<u64>()) {
        let j = p.num_states();
        let perms: Vec<Vec<usize>> = (0..j).permutations(j).collect();
        let tau = &perms[(seed % perms.len() as u64) as usize];
        let pt = p.permuted(tau);
        let l0 = forward_filter(&p, &y).unwrap().loglik;
        let l1 = forward_filter(&pt, &y).unwrap().loglik;
        prop_assert!((l0 - l1).abs() < 1e-9);

        let sm = smooth(&p, &y).unwrap();
        let unique = sm.rows().all(|r| {
            let mut s = r.to_vec();
            s.sort_by(|a, b| b.total_cmp(a));
            s.len() < 2 || s[0] - s[1] > 1e-9
        });
        if unique {
            let h = bayes_classify(&p, &y).unwrap();
            let ht = bayes_classify(&pt, &y).unwrap();
            prop_assert_eq!(h, ht.iter().map(|&x| tau[x]).collect::<Vec<_>>());
        }
    }

    #[test]
    fn iid_smoothing_rows_follow_their_observation(p in iid_model(3, 3), s in prop::collection::vec(0usize..3, 2..7)) {
        let y = Observations::Symbols(s.clone());
        let perm: Vec<usize> = (0..s.len()).rev().collect();
        let a = smooth(&p, &y).unwrap();
        let b = smooth(&p, &y.permuted(&perm)).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            for (u, v) in b.row(k).iter().zip(a.row(i)) {
                prop_assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loss_equals_overlap_loss(
        (j, h, x) in (1usize..=4, 1usize..=40)
            .prop_flat_map(|(j, n)| (Just(j), prop::collection::vec(0..j, n), prop::collection::vec(0..j, n)))
    ) {
        let a = Partition::from_labels(&h);
        let b = Partition::from_labels(&x);
        let l = misclassification_loss(&a, &b).unwrap();
        prop_assert_eq!(l, permutation_overlap_loss(&h, &x, j).unwrap());
        prop_assert_eq!(l, misclassification_loss(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&l));
        prop_assert_eq!(misclassification_loss(&a, &a).unwrap(), 0.0);

        let n = h.len();
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
        let coprime = perm.iter().unique().count() == n;
        if coprime {
            let hp: Vec<usize> = perm.iter().map(|&i| h[i]).collect();
            let xp: Vec<usize> = perm.iter().map(|&i| x[i]).collect();
            let lp = misclassification_loss(&Partition::from_labels(&hp), &Partition::from_labels(&xp)).unwrap();
            prop_assert_eq!(l, lp);
        }
    }

    #[test]
    fn sandwich_holds_for_iid_models(p in (2usize..=3, 2usize..=4).prop_flat_map(|(j, a)| iid_model(j, a))) {
        let s = classification_sandwich(&p).unwrap();
        let r = iid_class_risk(&p).unwrap().value;
        prop_assert!(s.lo - 1e-9 <= r && r <= s.hi + 1e-9, "{} {} {}", s.lo, r, s.hi);
    }

    #[test]
    fn sandwich_holds_for_small_hmms(p in (2usize..=3, 2usize..=3).prop_flat_map(|(j, a)| hmm_model(j, a)), n in 1usize..=5) {
        let s = classification_sandwich(&p).unwrap();
        let r = bayes_class_risk_exact(&p, n, &Limits::default()).unwrap();
        prop_assert!(s.lo - 1e-9 <= r && r <= s.hi + 1e-9, "{} {} {}", s.lo, r, s.hi);
    }

    #[test]
    fn gap_lies_between_zero_and_upper_bound(p in (2usize..=4).prop_flat_map(|a| iid_model(2, a)), n in 2usize..=7) {
        let lim = Limits::default();
        let class = bayes_class_risk_exact(&p, n, &lim).unwrap();
        let clust = bayes_clust_risk_exact(&p, n, &lim).unwrap();
        let g = class - clust;
        prop_assert!(g >= -1e-12);
        prop_assert!(g <= gap_bounds_iid_j2(0.5 - class, n).unwrap().upper + 1e-9);
    }

    #[test]
    fn two_state_lambda_is_one_minus_tv(m0 in -3.0..3.0f64, m1 in -3.0..3.0f64, s0 in 0.3..2.0f64, s1 in 0.3..2.0f64) {
        let e = [gaussian(m0, s0), gaussian(m1, s1)];
        let l = lambda_separation(&e).unwrap().value;
        let tv = total_variation(&e[0], &e[1]).unwrap().value;
        prop_assert!((l - (1.0 - tv)).abs() < 1e-8, "{} vs {}", l, 1.0 - tv);
    }

    #[test]
    fn bounds_ignore_state_labels(p in (2usize..=3, 2usize..=3, any::<bool>()).prop_flat_map(|(j, a, iid)| {
        if iid { iid_model(j, a).boxed() } else { hmm_model(j, a).boxed() }
    }), n in 50usize..5000) {
        let j = p.num_states();
        let opts = BoundOptions { class_risk: Some(0.1), ..BoundOptions::default() };
        let base = bound_report(&p, n, &opts).unwrap();
        for tau in (0..j).permutations(j) {
            let other = bound_report(&p.permuted(&tau), n, &opts).unwrap();
            prop_assert_eq!(base.entries.len(), other.entries.len());
            for (a, b) in base.entries.iter().zip(&other.entries) {
                prop_assert_eq!(a.name, b.name);
                let scale = a.value.abs().max(1.0);
                prop_assert!((a.value - b.value).abs() <= 1e-9 * scale, "{}: {} vs {}", a.name, a.value, b.value);
            }
        }
    }

    #[test]
    fn simplex_projection(v in prop::collection::vec(-2.0..2.0f64, 1..8)) {
        let p = project_simplex(&v);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        let floor = 0.5 / v.len() as f64 * 0.5;
        let q = project_simplex_floor(&v, floor);
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(q.iter().all(|&x| x >= floor - 1e-15));
    }
}

#[test]
fn partition_counts_match_restricted_bell() {
    for n in 1..=7 {
        for k in 1..=4 {
            let count = enumerate_partitions(n, k).unwrap().count() as u128;
            assert_eq!(count, restricted_bell(n, k), "n={n} k={k}");
        }
    }
}

#[test]
fn monte_carlo_clust_risk_below_class_risk() {
    let p = HmmParams::stationary(
        vec![vec![0.8, 0.2], vec![0.3, 0.7]],
        vec![gaussian(0.0, 1.0), gaussian(3.0, 1.0)],
    )
    .unwrap();
    let settings = MethodSettings::default();
    for m in Method::ALL {
        let r = monte_carlo_risks(&p, m, 3000, 20, 3, &settings).unwrap();
        let ci = r.class_risk.half_width.unwrap() + r.clust_risk.half_width.unwrap();
        assert!(
            r.clust_risk.mean <= r.class_risk.mean + 3.0 * ci,
            "{m:?}: {:?} vs {:?}",
            r.clust_risk,
            r.class_risk
        );
    }
}

#[test]
fn plugin_with_true_parameters_is_the_oracle() {
    let p = HmmParams::stationary(
        vec![vec![0.9, 0.1], vec![0.2, 0.8]],
        vec![gaussian(0.0, 1.0), gaussian(2.0, 0.7)],
    )
    .unwrap();
    let t = sample_trajectory(&p, 3000, 8).unwrap();
    let lik = Likelihoods::from_params(&p, &t.y);
    let a = oracle_bayes_cluster(&p, &t.y, Some(&t.x)).unwrap();
    let b = plugin_cluster_with(&p.nu, &p.transition, &lik, Some(&t.x), 0).unwrap();
    assert_eq!(a.labels, b.labels);
    assert_eq!(
        a.aligned_error.unwrap().to_bits(),
        b.aligned_error.unwrap().to_bits()
    );
}

#[test]
fn fastrate_with_exact_parameters() {
    let p = HmmParams::stationary(
        vec![vec![0.8, 0.2], vec![0.3, 0.7]],
        vec![gaussian(0.0, 1.0), gaussian(1.0, 1.0)],
    )
    .unwrap();
    let trajs: Vec<_> = (0..6)
        .map(|s| sample_trajectory(&p, 2000, s).unwrap())
        .collect();
    let r = fastrate_diagnostic(&p, &p, &trajs, 0.25).unwrap();
    assert_eq!(r.tv_term, 0.0);
    assert!(r.holds, "{r:?}");
    // the plug-in error is then the Bayes error itself
    assert!(
        (r.lhs - r.bayes_risk).abs() < 4.0 * r.lhs_se + 0.01,
        "{r:?}"
    );
}
