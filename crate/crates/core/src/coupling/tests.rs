use super::*;
use crate::prob::{compose, entropy_raw, kl_divergence, ConditionalPmf};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ex1(m: usize) -> JointPmf2 {
    let probs = match m {
        1 => vec![0.30, 0.23, 0.27, 0.20],
        2 => vec![0.14, 0.29, 0.31, 0.26],
        _ => vec![0.52, 0.18, 0.23, 0.07],
    };
    JointPmf2::new(2, 2, probs).unwrap()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

fn channel(rows: &[[f64; 2]]) -> ConditionalPmf {
    ConditionalPmf::new(rows.iter().map(|r| Pmf::new(r.to_vec()).unwrap()).collect()).unwrap()
}

#[test]
fn two_marginals_own_marginals_is_identity() {
    let q = ex1(1);
    let r = iproject_two_marginals(&q, &q.marginal_x(), &q.marginal_y(), DEFAULT_TOL, DEFAULT_MAX_ITER)
        .unwrap();
    assert!(r.value < 1e-15);
    assert!(r.argmin_joint2().unwrap().linf_distance(&q) < 1e-15);
    assert!(r.converged);
}

#[test]
fn two_marginals_product_reference_factorizes() {
    let (qx, qy) = (Pmf::new(vec![0.2, 0.5, 0.3]).unwrap(), Pmf::new(vec![0.6, 0.4]).unwrap());
    let (px, py) = (Pmf::new(vec![0.1, 0.1, 0.8]).unwrap(), Pmf::new(vec![0.25, 0.75]).unwrap());
    let r = iproject_two_marginals(&qx.product(&qy), &px, &py, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let expect = kl_divergence(&px, &qx).unwrap() + kl_divergence(&py, &qy).unwrap();
    assert!((r.value - expect).abs() < 1e-12);
    assert!(r.argmin_joint2().unwrap().linf_distance(&px.product(&py)) < 1e-12);
}

#[test]
fn two_marginals_example1_matches_oracle() {
    let (q, t) = (ex1(1), ex1(2));
    let r = iproject_two_marginals(&q, &t.marginal_x(), &t.marginal_y(), DEFAULT_TOL, DEFAULT_MAX_ITER)
        .unwrap();
    let oracle =
        brute_force_min(&CouplingProblem::two_marginals(&q, &t.marginal_x(), &t.marginal_y()), 1e-3)
            .unwrap();
    assert!(r.value <= oracle + 1e-9);
    assert!((r.value - oracle).abs() < 1e-3, "{} vs {oracle}", r.value);
    assert!((kl_divergence(&r.argmin_joint2().unwrap(), &q).unwrap() - r.value).abs() < 1e-9);
}

#[test]
fn two_marginals_detects_support_infeasibility() {
    // diagonal reference cannot carry a non-diagonal coupling
    let q = JointPmf2::new(2, 2, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
    let px = Pmf::new(vec![0.3, 0.7]).unwrap();
    let py = Pmf::new(vec![0.6, 0.4]).unwrap();
    let r = iproject_two_marginals(&q, &px, &py, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert!(r.value.is_infinite() && !r.is_feasible());
    let oracle = brute_force_min(&CouplingProblem::two_marginals(&q, &px, &py), 0.01).unwrap();
    assert!(oracle.is_infinite());
    // the same reference is fine when targets agree
    let ok = iproject_two_marginals(&q, &px, &px, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert!(ok.value.is_finite());
}

#[test]
fn argmin_support_follows_reference() {
    let q = JointPmf2::new(3, 2, vec![0.2, 0.0, 0.1, 0.3, 0.0, 0.4]).unwrap();
    let px = Pmf::new(vec![0.3, 0.5, 0.2]).unwrap();
    let py = Pmf::new(vec![0.45, 0.55]).unwrap();
    let r = iproject_two_marginals(&q, &px, &py, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    for (a, b) in r.argmin.iter().zip(q.probs()) {
        assert_eq!(*a > 0.0, *b > 0.0);
    }
}

#[test]
fn two_marginals_rejects_bad_arguments() {
    let q = ex1(1);
    assert!(iproject_two_marginals(&q, &Pmf::uniform(3), &Pmf::uniform(2), 1e-9, 10).is_err());
    assert!(iproject_two_marginals(&q, &Pmf::uniform(2), &Pmf::uniform(2), 0.0, 10).is_err());
}

#[test]
fn unconverged_runs_are_flagged() {
    let q = JointPmf2::new(2, 2, vec![0.7, 0.1, 0.1, 0.1]).unwrap();
    let t = Pmf::new(vec![0.1, 0.9]).unwrap();
    let r = iproject_two_marginals(&q, &t, &Pmf::uniform(2), 1e-15, 1).unwrap();
    assert!(!r.converged);
    assert!(r.residual > 1e-15);
    assert!(r.value.is_finite());
}

#[test]
fn fitting_iterates_approach_the_limit_monotonically() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let q = JointPmf2::new(3, 3, random_vec(&mut rng, 9)).unwrap();
        let px = Pmf::new(random_vec(&mut rng, 3)).unwrap();
        let py = Pmf::new(random_vec(&mut rng, 3)).unwrap();
        let solved = iproject_two_marginals(&q, &px, &py, 1e-13, DEFAULT_MAX_ITER).unwrap();
        let limit = solved.argmin_joint2().unwrap();
        let iterates = two_marginal_iterates(&q, &px, &py, 40);
        let gaps: Vec<f64> = iterates.iter().map(|t| kl_divergence(&limit, t).unwrap()).collect();
        for w in gaps.windows(2) {
            assert!(w[1] <= w[0] + 1e-13, "{gaps:?}");
        }
        let last = kl_divergence(iterates.last().unwrap(), &q).unwrap();
        assert!((last - solved.value).abs() < 1e-10);
    }
}

fn ex1_tensor(m: usize, ch: &ConditionalPmf) -> JointPmf3 {
    compose(&ex1(m), ch).unwrap()
}

#[test]
fn overlapping_own_marginals_is_zero() {
    let p = ex1_tensor(1, &channel(&[[0.9, 0.1], [0.2, 0.8]]));
    let r = iproject_overlapping(&p, &p.marginal_ux(), &p.marginal_uy(), DEFAULT_TOL, DEFAULT_MAX_ITER)
        .unwrap();
    assert!(r.value < 1e-14);
}

#[test]
fn overlapping_independent_y_closed_form() {
    let pux = JointPmf2::new(2, 3, vec![0.1, 0.2, 0.15, 0.25, 0.05, 0.25]).unwrap();
    let py = Pmf::new(vec![0.4, 0.6]).unwrap();
    let probs: Vec<f64> = pux
        .probs()
        .iter()
        .flat_map(|a| py.probs().iter().map(move |b| a * b))
        .collect();
    let pref = JointPmf3::new(2, 3, 2, probs).unwrap();
    let piuy = JointPmf2::new(2, 2, vec![0.05, 0.4, 0.3, 0.25]).unwrap();
    let r = iproject_overlapping(&pref, &pux, &piuy, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let pu = pux.row_sums();
    let arg = r.argmin_joint3().unwrap();
    for u in 0..2 {
        for x in 0..3 {
            for y in 0..2 {
                let expect = pux.get(u, x) / pu[u] * piuy.get(u, y);
                assert!((arg.get(u, x, y) - expect).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn overlapping_u_marginal_mismatch_is_infeasible() {
    let p = ex1_tensor(1, &channel(&[[0.9, 0.1], [0.2, 0.8]]));
    let uy = JointPmf2::new(2, 2, vec![0.25, 0.25, 0.25, 0.25]).unwrap();
    let r = iproject_overlapping(&p, &p.marginal_ux(), &uy, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert!(r.value.is_infinite());
}

#[test]
fn overlapping_random_instances_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let pref = JointPmf3::new(2, 2, 2, random_vec(&mut rng, 8)).unwrap();
        let tgt = JointPmf3::new(2, 2, 2, random_vec(&mut rng, 8)).unwrap();
        let r = iproject_overlapping(&pref, &tgt.marginal_ux(), &tgt.marginal_uy(), DEFAULT_TOL, DEFAULT_MAX_ITER)
            .unwrap();
        let problem = CouplingProblem::overlapping(&pref, &tgt.marginal_ux(), &tgt.marginal_uy());
        let oracle = brute_force_min(&problem, 0.02).unwrap();
        assert!(r.value <= oracle + 1e-9);
        assert!(oracle - r.value < 2e-2, "{} vs {oracle}", r.value);
    }
}

fn entropy_instance() -> (JointPmf3, JointPmf2, Pmf, f64) {
    let ch = channel(&[[0.9, 0.1], [0.2, 0.8]]);
    let pref = ex1_tensor(1, &ch);
    let tgt = ex1_tensor(2, &ch);
    let h = tgt.conditional_entropy_u_given_y();
    (pref, tgt.marginal_ux(), tgt.marginal(crate::prob::Axis::Y), h)
}

#[test]
fn entropy_zero_bound_is_the_linear_projection() {
    let (pref, ux, py, _) = entropy_instance();
    let a = iproject_entropy_constrained(&pref, &ux, &py, 0.0, DEFAULT_TOL).unwrap();
    let layout = linear_family(2, 2, 2);
    let b = project_linear(
        &layout,
        pref.probs(),
        ux.probs(),
        py.probs(),
        vec![2, 2, 2],
        Method::ProportionalFitting,
        DEFAULT_TOL,
        DEFAULT_MAX_ITER,
    );
    assert_eq!(a.value.to_bits(), b.value.to_bits());
    assert_eq!(a.argmin, b.argmin);
    assert_eq!(a.multiplier, None);
}

#[test]
fn entropy_bound_at_log_u_is_infeasible_generically() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pref = JointPmf3::new(2, 2, 2, random_vec(&mut rng, 8)).unwrap();
    let ux = JointPmf2::new(2, 2, random_vec(&mut rng, 4)).unwrap();
    let py = Pmf::new(random_vec(&mut rng, 2)).unwrap();
    let r = iproject_entropy_constrained(&pref, &ux, &py, 2f64.ln(), DEFAULT_TOL).unwrap();
    assert!(r.value.is_infinite());
    assert!(iproject_entropy_constrained(&pref, &ux, &py, 1.0, DEFAULT_TOL).is_err());
}

#[test]
fn entropy_bound_at_maximum_uses_the_maximizer() {
    // U uniform and independent of everything else: log|U| is attainable
    let pux = JointPmf2::new(2, 2, vec![0.2, 0.3, 0.2, 0.3]).unwrap();
    let pref = compose(&ex1(1), &channel(&[[0.5, 0.5], [0.5, 0.5]])).unwrap();
    let py = ex1(2).marginal_y();
    let r = iproject_entropy_constrained(&pref, &pux, &py, 2f64.ln(), DEFAULT_TOL).unwrap();
    assert!(r.value.is_finite());
    let arg = r.argmin_joint3().unwrap();
    assert!(arg.conditional_entropy_u_given_y() >= 2f64.ln() - 1e-8);
}

#[test]
fn entropy_constrained_example1_matches_oracle() {
    let (pref, ux, py, h) = entropy_instance();
    let r = iproject_entropy_constrained(&pref, &ux, &py, h, DEFAULT_TOL).unwrap();
    let arg = r.argmin_joint3().unwrap();
    assert!(arg.conditional_entropy_u_given_y() >= h - 1e-9);
    assert!(arg.marginal_ux().linf_distance(&ux) < 1e-8);
    assert!(arg.marginal(crate::prob::Axis::Y).linf_distance(&py) < 1e-12);
    let oracle = brute_force_min(&CouplingProblem::entropy_constrained(&pref, &ux, &py, h), 0.02).unwrap();
    assert!(r.value <= oracle + 1e-9);
    assert!(oracle - r.value < 2e-2, "{} vs {oracle}", r.value);
    // the bound is active on this instance
    let free = iproject_entropy_constrained(&pref, &ux, &py, 0.0, DEFAULT_TOL).unwrap();
    assert!(r.value >= free.value);
}

#[test]
fn entropy_constrained_random_instances_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut active = 0;
    for _ in 0..8 {
        let pref = JointPmf3::new(2, 2, 2, random_vec(&mut rng, 8)).unwrap();
        let tgt = JointPmf3::new(2, 2, 2, random_vec(&mut rng, 8)).unwrap();
        let (ux, py) = (tgt.marginal_ux(), tgt.marginal(crate::prob::Axis::Y));
        let h = tgt.conditional_entropy_u_given_y();
        let r = iproject_entropy_constrained(&pref, &ux, &py, h, DEFAULT_TOL).unwrap();
        if r.multiplier.is_some() {
            active += 1;
        }
        let oracle = brute_force_min(&CouplingProblem::entropy_constrained(&pref, &ux, &py, h), 0.02).unwrap();
        assert!(r.value <= oracle + 1e-9, "{} vs {oracle}", r.value);
        assert!(oracle - r.value < 2e-2, "{} vs {oracle}", r.value);
    }
    assert!(active > 0);
}

#[test]
fn oracle_guard_and_identity() {
    let big = JointPmf2::new(4, 4, vec![1.0 / 16.0; 16]).unwrap();
    let p = CouplingProblem::two_marginals(&big, &big.marginal_x(), &big.marginal_y());
    assert!(matches!(brute_force_min(&p, 0.1), Err(crate::Error::GuardExceeded(_))));
    let q = ex1(3);
    let v = brute_force_min(&CouplingProblem::two_marginals(&q, &q.marginal_x(), &q.marginal_y()), 0.01)
        .unwrap();
    assert!(v < 1e-3);
}

#[test]
fn oracle_product_reference_closed_form() {
    let (qx, qy) = (Pmf::new(vec![0.35, 0.65]).unwrap(), Pmf::new(vec![0.5, 0.2, 0.3]).unwrap());
    let (px, py) = (Pmf::new(vec![0.6, 0.4]).unwrap(), Pmf::new(vec![0.1, 0.3, 0.6]).unwrap());
    let expect = kl_divergence(&px, &qx).unwrap() + kl_divergence(&py, &qy).unwrap();
    let delta = 0.01;
    let v = brute_force_min(&CouplingProblem::two_marginals(&qx.product(&qy), &px, &py), delta).unwrap();
    assert!(v >= expect - 1e-12 && v - expect < 5.0 * delta);
}

#[test]
fn entropy_helpers_agree() {
    let (pref, ..) = entropy_instance();
    let direct = pref.conditional_entropy_u_given_y();
    assert!((cond_entropy_u_given_y(pref.probs(), 2, 2, 2) - direct).abs() < 1e-15);
    let uy = uy_marginal(pref.probs(), 2, 2, 2);
    assert!((entropy_raw(&uy) - entropy_raw(pref.marginal_uy().probs())).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn oracle_upper_bounds_solver(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = JointPmf2::new(2, 2, random_vec(&mut rng, 4)).unwrap();
        let px = Pmf::new(random_vec(&mut rng, 2)).unwrap();
        let py = Pmf::new(random_vec(&mut rng, 2)).unwrap();
        let r = iproject_two_marginals(&q, &px, &py, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let o = brute_force_min(&CouplingProblem::two_marginals(&q, &px, &py), 0.01).unwrap();
        prop_assert!(o >= r.value - 1e-9);
        prop_assert!(r.residual <= DEFAULT_TOL);
    }
}
