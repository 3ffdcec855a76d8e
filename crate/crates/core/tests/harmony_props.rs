mod common;

use harmony_core::correlated::{project, ErrorHypothesis};
use harmony_core::harmony::{layered_from_members, perturb, pool, Ensemble, PerturbationParams, Pooling};
use harmony_core::matching::{P_MAX, P_MIN};
use harmony_core::ObsMask;
use proptest::prelude::*;

fn hypothesis(obs: u64, ll: f64) -> ErrorHypothesis {
    ErrorHypothesis { mechanisms: Vec::new(), observables: ObsMask(obs), log_likelihood: ll }
}

fn arb_hyps() -> impl Strategy<Value = Vec<ErrorHypothesis>> {
    prop::collection::vec((0u64..4, -40.0f64..0.0), 1..30)
        .prop_map(|v| v.into_iter().map(|(o, l)| hypothesis(o, l)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn perturbed_priors_stay_in_their_window(seed in any::<u64>(), member in 0usize..50, a1 in 0.0f64..=1.0, a2 in 0.0f64..=1.0, a3 in 0.0f64..=1.0) {
        let mut rng = common::rng(seed);
        let pm = project(common::random_matchable(&mut rng, 12)).unwrap();
        let params = PerturbationParams::new(a1, a2, a3, seed).unwrap();
        let m = perturb(&pm, &params, member);
        let within = |base: f64, got: f64, a: f64| {
            let lo = ((1.0 - a) * base).clamp(P_MIN, P_MAX);
            let hi = ((1.0 + a) * base).clamp(P_MIN, P_MAX);
            got >= lo - 1e-15 && got <= hi + 1e-15
        };
        for g in 0..2 {
            for (b, p) in pm.priors.pass1[g].iter().zip(&m.priors.pass1[g]) {
                prop_assert!(within(*b, *p, a1));
            }
            for (b, p) in pm.priors.pass2[g].iter().zip(&m.priors.pass2[g]) {
                prop_assert!(within(*b, *p, a2));
            }
            for (bs, ps) in pm.priors.reweight_q[g].iter().zip(&m.priors.reweight_q[g]) {
                for (b, p) in bs.iter().zip(ps) {
                    prop_assert!(within(*b, *p, a3));
                }
            }
        }
        // Same key, same member.
        let again = perturb(&pm, &params, member);
        prop_assert_eq!(&again.priors.pass1, &m.priors.pass1);
        prop_assert_eq!(&again.priors.reweight_q, &m.priors.reweight_q);
    }

    #[test]
    fn members_do_not_depend_on_ensemble_size(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let pm = project(common::random_matchable(&mut rng, 10)).unwrap();
        let params = PerturbationParams { seed, ..PerturbationParams::default() };
        let small = Ensemble::new(&pm, params, 3).unwrap();
        let large = Ensemble::new(&pm, params, 9).unwrap();
        for k in 0..3 {
            prop_assert_eq!(&small.members[k].priors.pass2, &large.members[k].priors.pass2);
        }
    }

    #[test]
    fn vote_confidence_is_the_winning_share(hyps in arb_hyps()) {
        let n = hyps.len();
        let r = pool(hyps.clone(), Pooling::Vote);
        let votes = hyps.iter().filter(|h| h.observables == r.prediction).count();
        prop_assert!((r.confidence - votes as f64 / n as f64).abs() < 1e-15);
        for o in 0..4u64 {
            prop_assert!(hyps.iter().filter(|h| h.observables.0 == o).count() <= votes);
        }
    }

    #[test]
    fn most_likely_error_follows_the_best_member(hyps in arb_hyps()) {
        let best = hyps.iter().map(|h| h.log_likelihood).fold(f64::NEG_INFINITY, f64::max);
        let r = pool(hyps.clone(), Pooling::MostLikelyError);
        prop_assert!(hyps.iter().any(|h| h.observables == r.prediction && h.log_likelihood == best));
    }

    #[test]
    fn sum_likelihood_picks_the_heaviest_class(hyps in arb_hyps()) {
        let r = pool(hyps.clone(), Pooling::SumLikelihood);
        let mass = |o: ObsMask| hyps.iter().filter(|h| h.observables == o).map(|h| h.log_likelihood.exp()).sum::<f64>();
        let won = mass(r.prediction);
        for o in 0..4u64 {
            prop_assert!(mass(ObsMask(o)) <= won * (1.0 + 1e-12));
        }
    }

    #[test]
    fn unanimous_members_agree_under_every_pooling(obs in 0u64..4, lls in prop::collection::vec(-30.0f64..0.0, 1..20)) {
        let hyps: Vec<_> = lls.iter().map(|&l| hypothesis(obs, l)).collect();
        for pooling in [Pooling::Vote, Pooling::SumLikelihood, Pooling::MostLikelyError] {
            let r = pool(hyps.clone(), pooling);
            prop_assert_eq!(r.prediction, ObsMask(obs));
            prop_assert_eq!(r.confidence, 1.0);
        }
    }

    #[test]
    fn layered_escalates_exactly_on_dissent(hyps in arb_hyps(), n1 in 1usize..6) {
        let n2 = hyps.len();
        prop_assume!(n1 <= n2);
        let r = layered_from_members(&hyps, n1, n2, Pooling::Vote).unwrap();
        let dissent = hyps[..n1].iter().any(|h| h.observables != hyps[0].observables);
        prop_assert_eq!(r.triggered, dissent);
        prop_assert_eq!(r.instances_used, if dissent { n1 + n2 } else { n1 });
        if !dissent {
            prop_assert_eq!(r.prediction, hyps[0].observables);
        }
    }
}
