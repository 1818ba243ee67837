use dual_core::boottest::{bootstrap_multi_u, bootstrap_multi_u_batch, draw_rademacher, RademacherVec};
use dual_core::data::Problem;
use dual_core::kernel::{Geometry, PoolKernel};
use dual_core::oracle::{self, rel_err};
use dual_core::seed;
use dual_core::selection::{alignment, signum, selected_stat, SignVector};
use dual_core::ustat::{self, Regularization};
use proptest::prelude::*;

fn instance(s: u64, problem: Problem) -> (dual_core::data::Sample, Vec<PoolKernel>) {
    let mut rng = seed::rng(s);
    loop {
        let (sample, pool) = oracle::random_instance(&mut rng, (4, 9), 3, 2);
        if sample.problem() == problem {
            return (sample, pool);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn u_stat_matches_double_loop(s in any::<u64>(), indep in any::<bool>()) {
        let problem = if indep { Problem::Independence } else { Problem::TwoSample };
        let (sample, pool) = instance(s, problem);
        let fast = ustat::multi_u(&Geometry::new(&sample).unwrap().stack(&pool).unwrap()).unwrap();
        let slow = oracle::u_stat(&pool, &sample).unwrap();
        for (a, b) in fast.values.iter().zip(&slow) {
            prop_assert!(rel_err(*a, *b, 1e-3) < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn bootstrap_matches_double_loop(s in any::<u64>(), indep in any::<bool>()) {
        let problem = if indep { Problem::Independence } else { Problem::TwoSample };
        let (sample, pool) = instance(s, problem);
        let stack = Geometry::new(&sample).unwrap().stack(&pool).unwrap();
        let mut rng = seed::rng(s ^ 1);
        let eps: Vec<RademacherVec> = (0..3).map(|_| draw_rademacher(sample.len(), &mut rng)).collect();
        let batch = bootstrap_multi_u_batch(&stack, &eps).unwrap();
        for (e, ub) in eps.iter().zip(&batch) {
            let slow = oracle::bootstrap_u(&pool, &sample, &e.0).unwrap();
            let single = bootstrap_multi_u(&stack, e).unwrap();
            for ((a, b), c) in single.values.iter().zip(&slow).zip(&ub.values) {
                prop_assert!(rel_err(*a, *b, 1e-3) < 1e-12);
                prop_assert!(rel_err(*c, *b, 1e-3) < 1e-12);
            }
        }
    }

    #[test]
    fn selected_stat_never_exceeds_aggregated(s in any::<u64>()) {
        let (sample, pool) = instance(s, Problem::TwoSample);
        let mut rng = seed::rng(s ^ 2);
        let w_h0 = ustat::null_resample(&sample, &mut rng).unwrap();
        let h0 = Geometry::new(&w_h0).unwrap().stack(&pool).unwrap();
        let cov = ustat::estimate_null_cov(&h0, Regularization::Fixed(1e-3)).unwrap();
        let linv = ustat::sqrt_inv(&cov).unwrap();
        let u = ustat::multi_u(&Geometry::new(&sample).unwrap().stack(&pool).unwrap()).unwrap();
        let full = ustat::aggregated_stat(&u, &linv).unwrap();
        let f_tr = SignVector((0..pool.len()).map(|k| if (s >> k) & 1 == 0 { 1 } else { -1 }).collect());
        let mask = alignment(&f_tr, &signum(&linv.whiten(&u).unwrap()).unwrap()).unwrap();
        let sel = selected_stat(&u, &linv, &mask).unwrap();
        prop_assert!(sel <= full * (1.0 + 1e-12));
        let masked: Vec<u8> = mask.0.clone();
        let slow = oracle::selected(&u.values, &oracle::null_cov(&pool, &w_h0, 1e-3).unwrap(), u.n, &masked);
        prop_assert!(rel_err(sel, slow, 1e-9 * full.max(1e-300)) < 1e-9);
    }
}

#[test]
fn selfcheck_passes_at_full_precision() {
    for r in oracle::selfcheck(50, 99, 1e-12).unwrap() {
        assert!(r.pass, "{} worst {:e}", r.name, r.max_rel_err);
        assert_eq!(r.instances, 50);
    }
}
