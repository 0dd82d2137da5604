use symvi_core::diagnostics::estimate_moments;
use symvi_core::linalg::PosDefMatrix;
use symvi_core::mcmc::{chain_configs, reference_draws, run_chain, Algorithm, ChainConfig};
use symvi_core::par::Exec;
use symvi_core::targets::{make_gaussian_mixture_2d, make_multi_student_t, make_mvn};

fn base(dim: usize, algorithm: Algorithm, n_samples: usize) -> ChainConfig {
    ChainConfig {
        n_warmup: 2000,
        n_samples,
        seed: 21,
        algorithm,
        init: vec![0.0; dim],
    }
}

#[test]
fn rwm_recovers_gaussian_correlation() {
    let t = make_mvn(&[1.0, -1.0], &PosDefMatrix::equicorrelated(2, 0.5)).unwrap();
    let cfgs = chain_configs(4, &base(2, Algorithm::rwm(), 25_000), &[]);
    let (draws, ess, chains) = reference_draws(&t, &cfgs, Exec::default()).unwrap();
    let m = estimate_moments(&draws).unwrap();
    assert!((m.correlation[(0, 1)] - 0.5).abs() < 0.02, "{}", m.correlation[(0, 1)]);
    assert!((m.mean[0] - 1.0).abs() < 0.05 && (m.mean[1] + 1.0).abs() < 0.05);
    assert!(ess.iter().all(|e| *e > 1000.0), "{ess:?}");
    for c in &chains {
        assert!(c.acceptance_rate > 0.15 && c.acceptance_rate < 0.5, "{}", c.acceptance_rate);
    }
}

#[test]
fn hmc_recovers_student_correlation() {
    let dim = 5;
    let t = make_multi_student_t(10.0, &vec![0.0; dim], &PosDefMatrix::equicorrelated(dim, 0.9)).unwrap();
    let cfgs = chain_configs(4, &base(dim, Algorithm::hmc(0.05, 32), 5000), &[]);
    let (draws, _, chains) = reference_draws(&t, &cfgs, Exec::default()).unwrap();
    let m = estimate_moments(&draws).unwrap();
    for i in 0..dim {
        for j in 0..i {
            assert!((m.correlation[(i, j)] - 0.9).abs() < 0.02, "({i},{j}) {}", m.correlation[(i, j)]);
        }
    }
    assert!(chains.iter().all(|c| c.divergences == 0));
}

#[test]
fn mixture_chains_agree_with_known_moments() {
    let t = make_gaussian_mixture_2d();
    // Each coordinate is ½ N(−1, 4) + ½ N(3, 1): mean 1, variance 7.5 − 1.
    let mean = [1.0, 1.0];
    let var = 6.5;
    if let Some(known) = &t.known_moments.mean {
        assert_eq!(known, &mean.to_vec());
    }
    let cfgs = chain_configs(4, &base(2, Algorithm::rwm(), 50_000), &[vec![-1.0, -1.0], vec![3.0, 3.0]]);
    let (draws, _, _) = reference_draws(&t, &cfgs, Exec::default()).unwrap();
    let m = estimate_moments(&draws).unwrap();
    for i in 0..2 {
        assert!((m.mean[i] - mean[i]).abs() < 0.1, "{} vs {}", m.mean[i], mean[i]);
        assert!((m.covariance[(i, i)] / var - 1.0).abs() < 0.05, "{}", m.covariance[(i, i)]);
    }
}

#[test]
fn chains_are_reproducible_and_policy_independent() {
    let t = make_mvn(&[0.0, 0.0], &PosDefMatrix::equicorrelated(2, 0.3)).unwrap();
    let cfgs = chain_configs(3, &base(2, Algorithm::rwm(), 500), &[]);
    let (a, _, _) = reference_draws(&t, &cfgs, Exec::Parallel).unwrap();
    let (b, _, _) = reference_draws(&t, &cfgs, Exec::Sequential).unwrap();
    assert_eq!(a, b);
    let single = run_chain(&t, &cfgs[1]).unwrap();
    assert_eq!(single.draws.row(0), a.row(500));
}

#[test]
fn invalid_chain_configurations() {
    let t = make_mvn(&[0.0, 0.0], &PosDefMatrix::identity(2)).unwrap();
    let mut c = base(2, Algorithm::rwm(), 0);
    assert!(run_chain(&t, &c).is_err());
    c.n_samples = 10;
    c.init = vec![0.0];
    assert!(run_chain(&t, &c).is_err());
    let c = base(2, Algorithm::hmc(-1.0, 10), 10);
    assert!(run_chain(&t, &c).is_err());
}
