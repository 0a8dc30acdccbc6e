use asyrgs_core::async_solver::{solve_async, AsyncConfig, SharedIterate, WriteMode};
use asyrgs_core::direction::DirectionStream;
use asyrgs_core::lsq::{solve_lsq_sync, LsqSystem};
use asyrgs_core::mm::{format_matrix_market, load_matrix_market, parse_matrix_market, write_matrix_market};
use asyrgs_core::replay::{replay, replay_directions, DelaySchedule, ReadModel};
use asyrgs_core::rgs::{solve_sync, SolveConfig};
use asyrgs_core::sparse::{rescale_to_unit_diagonal, SparseMatrix};
use asyrgs_core::testkit::{generate, random_rectangular, random_vector, unit_system, MatrixRecipe};
use asyrgs_core::theory::{beta_tilde, nu_tau_beta, rgs_bound, TheoryParams};
use proptest::prelude::*;

// chi-square upper 1e-6 quantile, 15 degrees of freedom (scipy.stats.chi2.isf)
const CHI2_15_CRIT: f64 = 56.49344249977338;

#[test]
fn directions_pass_chi_square() {
    for seed in [0u64, 1, 42, u64::MAX] {
        let s = DirectionStream::new(seed, 16);
        let mut counts = [0u64; 16];
        for d in s.iter(0, 160_000) {
            counts[d] += 1;
        }
        let expected = 10_000.0;
        let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(stat < CHI2_15_CRIT, "seed {seed}: chi2 = {stat}");
    }
}

#[test]
fn matrix_market_file_round_trip() {
    let a = generate(&MatrixRecipe::skewed(40, 7, 3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.mtx");
    write_matrix_market(&a, &path).unwrap();
    assert_eq!(load_matrix_market(&path).unwrap(), a);
}

#[test]
fn lsq_recovers_consistent_solution() {
    let a = random_rectangular(60, 20, 0.5, 9).unwrap();
    let x_true = random_vector(20, 10);
    let b = a.spmv(&x_true).unwrap();
    let sys = LsqSystem::from_rows(&a, &b).unwrap();
    let cfg = SolveConfig::sweeps(20, 400, 1);
    let (x, _) = solve_lsq_sync(&sys, &cfg, &[0.0; 20], None).unwrap();
    let y = sys.to_original(&x);
    for (u, v) in y.iter().zip(&x_true) {
        assert!((u - v).abs() < 1e-8, "{u} vs {v}");
    }
}

#[test]
fn async_threads_reduce_residual() {
    let sys = unit_system(&MatrixRecipe::laplacian_grid(20), &random_vector(400, 2)).unwrap();
    let cfg = AsyncConfig::new(SolveConfig::sweeps(400, 30, 5), 4);
    let r = solve_async(&sys, &cfg, &[0.0; 400], None).unwrap();
    let r0 = sys.residual_norm(&[0.0; 400]);
    assert!(sys.residual_norm(&r.x) < 0.1 * r0);
    assert_eq!(r.metadata.barrier_violations, 0);
}

fn recipe() -> impl Strategy<Value = MatrixRecipe> {
    prop_oneof![
        (3usize..40, 1usize..4, any::<u64>()).prop_map(|(n, b, s)| MatrixRecipe::banded_spd(n, b, s)),
        (3usize..30, any::<u64>()).prop_map(|(n, s)| MatrixRecipe::random_spd(n, 0.2, s)),
        (3usize..40, any::<u64>()).prop_map(|(n, s)| MatrixRecipe::diag_dominant(n, 0.2, s)),
        (3usize..40, 2usize..10, any::<u64>()).prop_map(|(n, b, s)| MatrixRecipe::skewed(n, b, s)),
        (2usize..7).prop_map(MatrixRecipe::laplacian_grid),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn directions_in_range_and_reproducible(seed in any::<u64>(), n in 1usize..1000, j in any::<u64>()) {
        let a = DirectionStream::new(seed, n);
        let b = DirectionStream::new(seed, n);
        prop_assert!(a.direction_at(j) < n);
        prop_assert_eq!(a.direction_at(j), b.direction_at(j));
    }

    #[test]
    fn rescaling_gives_unit_diagonal(r in recipe(), zs in any::<u64>()) {
        let b = generate(&r).unwrap();
        let z = random_vector(r.dim(), zs);
        let sys = rescale_to_unit_diagonal(&b, &z).unwrap();
        for d in sys.matrix().diagonal() {
            prop_assert_eq!(d, Some(1.0));
        }
        let y = random_vector(r.dim(), zs ^ 1);
        let back = sys.to_original(&sys.from_original(&y));
        for (u, v) in back.iter().zip(&y) {
            prop_assert!((u - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn matrix_market_text_round_trip(r in recipe()) {
        let a = generate(&r).unwrap();
        prop_assert_eq!(parse_matrix_market(&format_matrix_market(&a)).unwrap(), a);
    }

    #[test]
    fn sync_error_never_increases_for_unit_beta(r in recipe(), seed in any::<u64>()) {
        let sys = unit_system(&r, &random_vector(r.dim(), seed)).unwrap();
        let x_star = asyrgs_core::testkit::dense_solve(sys.matrix(), sys.rhs()).unwrap();
        let cfg = SolveConfig::sweeps(r.dim(), 3, seed).with_checkpoint_every(1).with_a_norm_error(true);
        let (_, trace) = solve_sync(&sys, &cfg, &vec![0.0; r.dim()], Some(&x_star)).unwrap();
        let e = trace.a_norm_error_sq.unwrap();
        for w in e.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-14);
        }
    }

    #[test]
    fn zero_delay_replay_matches_sync(r in recipe(), seed in any::<u64>(), inconsistent in any::<bool>()) {
        let n = r.dim();
        let sys = unit_system(&r, &random_vector(n, seed)).unwrap();
        let cfg = SolveConfig::sweeps(n, 4, seed).with_beta(0.8);
        let model = if inconsistent { ReadModel::Inconsistent } else { ReadModel::Consistent };
        let (xs, _) = solve_sync(&sys, &cfg, &vec![0.0; n], None).unwrap();
        let rr = replay(&sys, &cfg, &DelaySchedule::none(), model, &vec![0.0; n], None).unwrap();
        prop_assert_eq!(xs, rr.x_final);
    }

    #[test]
    fn full_window_models_agree(r in recipe(), seed in any::<u64>(), tau in 1u64..6) {
        // worst case: consistent k = j - tau misses the same updates as the
        // inconsistent model with an empty required set
        let n = r.dim();
        let sys = unit_system(&r, &random_vector(n, seed)).unwrap();
        let stream = DirectionStream::new(seed, n);
        let dirs: Vec<usize> = stream.iter(0, 5 * n as u64).collect();
        let sched = DelaySchedule::worst_case(tau);
        let a = replay_directions(&sys, 1.0, &sched, ReadModel::Consistent, &vec![0.0; n], &dirs).unwrap();
        let b = replay_directions(&sys, 1.0, &sched, ReadModel::Inconsistent, &vec![0.0; n], &dirs).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn atomic_adds_sum_exactly(vals in proptest::collection::vec(-1000i32..1000, 1..200)) {
        let s = SharedIterate::from_slice(&[0.0]);
        for v in &vals {
            s.add(0, *v as f64, WriteMode::Atomic);
        }
        prop_assert_eq!(s.load(0), vals.iter().map(|v| *v as f64).sum::<f64>());
    }

    #[test]
    fn sync_bound_decreases_in_m(beta in 0.05f64..1.95, m in 0u64..10_000) {
        let p = TheoryParams::new(500, 0.2, 1.5, 0.004, 0.002, 0, beta).unwrap();
        prop_assert!(rgs_bound(&p, m + 1, 1.0).unwrap() <= rgs_bound(&p, m, 1.0).unwrap());
    }

    #[test]
    fn beta_tilde_maximizes_nu(rho in 0.0f64..0.05, tau in 0u64..50, beta in 0.01f64..1.99) {
        let p = TheoryParams::new(100, 0.1, 1.0, rho, 0.0, tau, beta).unwrap();
        let best = nu_tau_beta(&p.with_beta(beta_tilde(&p))).0;
        prop_assert!(nu_tau_beta(&p).0 <= best + 1e-15);
    }
}

#[test]
fn matrix_market_header() {
    let text = format_matrix_market(&SparseMatrix::identity(3));
    assert!(text.starts_with("%%MatrixMarket matrix coordinate real"));
}
