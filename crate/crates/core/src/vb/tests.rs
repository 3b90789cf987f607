use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::sampling::{build_tasks, CoprimeScheme, TaskWindow};
use crate::signal::{complex_noise, synthesize, LineSpectrum};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Φ from its defining formula, independent of the sensing module.
fn dense_phi(offsets: &[u64], n: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(offsets.len(), n, |m, i| {
        Complex64::from_polar(1.0, 2.0 * PI * (i as f64) * (offsets[m] as f64) / n as f64)
    })
}

struct Dense {
    sigma: DMatrix<Complex64>,
    mu: DVector<Complex64>,
}

/// `Σ = (βΦ^HΦ + A)^{-1}` by explicit inversion, `μ = βΣΦ^H y`.
fn dense_posterior(phi: &DMatrix<Complex64>, alpha: &[f64], beta: f64, y: &[Complex64]) -> Dense {
    let mut prec = phi.adjoint() * phi * c(beta, 0.0);
    for (i, &a) in alpha.iter().enumerate() {
        prec[(i, i)] += a;
    }
    let sigma = prec.try_inverse().expect("invertible");
    let mu = &sigma * phi.adjoint() * DVector::from_column_slice(y) * c(beta, 0.0);
    Dense { sigma, mu }
}

fn random_tasks(seed: u64, l: usize) -> TaskSet {
    let scheme = CoprimeScheme::new(9, 10, 11).unwrap();
    let idx = scheme.first_indices(l + 27 - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = complex_noise(&mut rng, idx.len(), 1.0);
    let rec = crate::signal::SampleRecord::new(idx, values, 1.0).unwrap();
    build_tasks(&rec, 27, l, 100, 1).unwrap()
}

fn signal_tasks(
    scheme: (u64, u64, u64),
    m: usize,
    l: usize,
    n: usize,
    spec: &LineSpectrum,
    noise: f64,
    seed: u64,
) -> TaskSet {
    let scheme = CoprimeScheme::new(scheme.0, scheme.1, scheme.2).unwrap();
    let rec = synthesize(spec, &scheme.first_indices(l + m - 1), noise, seed).unwrap();
    build_tasks(&rec, m, l, n, 1).unwrap()
}

fn perturbed_state(solver: &VbSolver, seed: u64) -> VbState {
    let mut state = solver.init_state().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = state.alpha_shape;
    state.alpha_rate = (0..solver.n()).map(|_| shape / rng.random_range(0.05..50.0)).collect();
    state.alpha_expect = state.alpha_rate.iter().map(|r| shape / r).collect();
    state.beta_rate = state.beta_shape / 3.7;
    state.beta_expect = 3.7;
    solver.update_s(&mut state).unwrap();
    state
}

#[test]
fn update_s_matches_dense_inverse() {
    let tasks = random_tasks(1, 4);
    let solver = VbSolver::new(&tasks, Hyperparams::default()).unwrap();
    let state = perturbed_state(&solver, 2);
    for (l, w) in tasks.windows().iter().enumerate() {
        let phi = dense_phi(&w.offsets, 100);
        let dense = dense_posterior(&phi, &state.alpha_expect, state.beta_expect, &w.values);
        for i in 0..100 {
            assert!((state.mu[l][i] - dense.mu[i]).norm() < 1e-9 * (1.0 + dense.mu[i].norm()));
        }
        let post = &state.posteriors()[solver.pattern_of(l)];
        for i in 0..100 {
            assert!((post.sigma_diag[i] - dense.sigma[(i, i)].re).abs() < 1e-10);
        }
        let sigma = solver.covariance(&state, l);
        assert!((&sigma - &dense.sigma).norm() < 1e-9 * dense.sigma.norm());

        // ln det Σ = −ln det Σ^{-1}
        let chol = nalgebra::Cholesky::new(dense.sigma.clone().try_inverse().unwrap()).unwrap();
        let log_det_inv: f64 = 2.0 * chol.l().diagonal().iter().map(|z| z.re.ln()).sum::<f64>();
        assert!((post.log_det + log_det_inv).abs() < 1e-8 * log_det_inv.abs());

        let trace = (&phi * &dense.sigma * phi.adjoint()).trace().re;
        assert!((post.phi_sigma_trace - trace).abs() < 1e-9 * trace);

        let resid = (DVector::from_column_slice(&w.values) - &phi * &dense.mu).norm_squared();
        assert!((state.residuals()[l] - resid).abs() < 1e-9 * (1.0 + resid));
    }
}

#[test]
fn covariance_inverse_and_solve_agree() {
    let tasks = random_tasks(3, 2);
    let solver = VbSolver::new(&tasks, Hyperparams::default()).unwrap();
    let state = perturbed_state(&solver, 4);
    let phi = dense_phi(&tasks.windows()[0].offsets, 100);
    let mut prec = phi.adjoint() * &phi * c(state.beta_expect, 0.0);
    for (i, &a) in state.alpha_expect.iter().enumerate() {
        prec[(i, i)] += a;
    }
    let by_inverse = prec.clone().try_inverse().unwrap();
    let by_solve = prec.lu().solve(&DMatrix::identity(100, 100)).unwrap();
    let diff = (&by_inverse - &by_solve).norm() / by_inverse.norm();
    assert!(diff < 1e-8, "{diff}");
    let ours = solver.covariance(&state, 0);
    assert!((&ours - &by_solve).norm() / by_solve.norm() < 1e-8);
}

#[test]
fn trace_term_two_orders() {
    let tasks = random_tasks(5, 1);
    let solver = VbSolver::new(&tasks, Hyperparams::default()).unwrap();
    let state = perturbed_state(&solver, 6);
    let phi = dense_phi(&tasks.windows()[0].offsets, 100);
    let sigma = solver.covariance(&state, 0);
    let by_rows: f64 = (0..phi.nrows())
        .map(|m| {
            let row = phi.row(m);
            (&row * &sigma * row.adjoint())[(0, 0)].re
        })
        .sum();
    let by_gram = (&sigma * phi.adjoint() * &phi).trace().re;
    assert!((by_rows - by_gram).abs() < 1e-8 * by_gram);
    assert!((state.posteriors()[0].phi_sigma_trace - by_rows).abs() < 1e-8 * by_rows);
}

#[test]
fn huge_alpha_shrinks_means() {
    let tasks = random_tasks(7, 3);
    let solver = VbSolver::new(&tasks, Hyperparams::default()).unwrap();
    let mut state = solver.init_state().unwrap();
    state.alpha_expect = vec![1e12; 100];
    solver.update_s(&mut state).unwrap();
    assert!(state.mu.iter().flatten().all(|z| z.norm() < 1e-9));
}

#[test]
fn full_fourier_limit_is_inverse_dft() {
    let n = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let y = complex_noise(&mut rng, n, 1.0);
    let offsets: Vec<u64> = (0..n as u64).collect();
    let window = TaskWindow {
        values: y.clone(),
        offsets,
        start_index: 1,
    };
    let tasks = TaskSet::from_windows(vec![window], n, n).unwrap();
    let solver = VbSolver::new(&tasks, Hyperparams::default()).unwrap();
    let mut state = solver.init_state().unwrap();
    state.alpha_expect = vec![1e-9; n];
    state.beta_expect = 1e9;
    solver.update_s(&mut state).unwrap();
    for i in 0..n {
        // (1/N) Σ_m y_m e^{−j2π i m/N}
        let idft: Complex64 = (0..n)
            .map(|m| y[m] * Complex64::from_polar(1.0, -2.0 * PI * (i * m) as f64 / n as f64))
            .sum::<Complex64>()
            / n as f64;
        assert!((state.mu[0][i] - idft).norm() < 1e-6, "bin {i}");
    }
}

#[test]
fn alpha_update_arithmetic() {
    let hp = Hyperparams::default();
    // μ = 1, Σ = 0.5 → moment 1.5
    let (shape, rate) = alpha_posterior(&hp, 1, &[1.5]);
    let alpha = shape / rate[0];
    assert!((alpha - (1e-6 + 1.0) / (1e-6 + 1.5)).abs() < 1e-15);
    assert!((alpha - 0.666_667).abs() < 1e-6);

    // identical per-task moments: doubling L leaves ⟨α⟩ ≈ 1/m
    let m = 0.8;
    let (s1, r1) = alpha_posterior(&hp, 10, &[10.0 * m]);
    let (s2, r2) = alpha_posterior(&hp, 20, &[20.0 * m]);
    assert!((s1 / r1[0] - s2 / r2[0]).abs() < 1e-6);
    assert!((s2 / r2[0] - 1.0 / m).abs() < 1e-6);

    // empty coefficient
    let (s, r) = alpha_posterior(&hp, 30, &[0.0]);
    assert!((s / r[0] - (1e-6 + 30.0) / 1e-6).abs() < 1e-3);
}

#[test]
fn beta_update_zero_residual() {
    let hp = Hyperparams::default();
    let (shape, rate) = beta_posterior(&hp, 30, 27, 0.0);
    assert_eq!(shape, 1e-6 + 810.0);
    assert_eq!(shape / rate, (1e-6 + 810.0) / 1e-6);
}

#[test]
fn shapes_are_fixed_after_updates() {
    let tasks = random_tasks(9, 6);
    let solver = VbSolver::new(&tasks, Hyperparams::default()).unwrap();
    let mut state = solver.init_state().unwrap();
    for _ in 0..3 {
        solver.sweep(&mut state).unwrap();
        assert_eq!(state.alpha_shape, 1e-6 + 6.0);
        assert_eq!(state.beta_shape, 1e-6 + 6.0 * 27.0);
    }
}

#[test]
fn zero_data_keeps_zero_means() {
    let window = TaskWindow {
        values: vec![c(0.0, 0.0); 5],
        offsets: vec![0, 1, 3, 4, 7],
        start_index: 2,
    };
    let tasks = TaskSet::from_windows(vec![window], 5, 20).unwrap();
    let solver = VbSolver::new(&tasks, Hyperparams::default()).unwrap();
    let mut state = solver.init_state().unwrap();
    assert_eq!(state.beta_expect, 100.0);
    for _ in 0..5 {
        solver.sweep(&mut state).unwrap();
        assert!(state.mu[0].iter().all(|z| z.norm() == 0.0));
    }
}

#[test]
fn solver_is_deterministic() {
    let tasks = random_tasks(10, 5);
    let a = run(&tasks, Hyperparams::default(), 20, 0.0).unwrap();
    let b = run(&tasks, Hyperparams::default(), 20, 0.0).unwrap();
    assert_eq!(a, b);
}

#[test]
fn iteration_contract() {
    let tasks = random_tasks(11, 2);
    assert!(run(&tasks, Hyperparams::default(), 0, 1e-6).is_err());
    let est = run(&tasks, Hyperparams::default(), 1, 1.0).unwrap();
    assert!(!est.converged);
    assert_eq!(est.iterations_used, 1);
    let bad = Hyperparams { a: 0.0, ..Hyperparams::default() };
    assert!(VbSolver::new(&tasks, bad).is_err());
}

#[test]
fn bound_never_decreases_per_update() {
    let spec = LineSpectrum::from_polar(vec![0.21, 0.5, 0.77], &[1.0, 0.6, 0.3], &[0.1, 2.0, -1.0]).unwrap();
    let tasks = signal_tasks((9, 10, 11), 27, 8, 100, &spec, 0.01, 3);
    let solver = VbSolver::new(&tasks, Hyperparams::default()).unwrap();
    let mut state = solver.init_state().unwrap();
    let mut prev = solver.variational_bound(&state);
    let check = |prev: &mut f64, now: f64, what: &str| {
        assert!(now >= *prev - 1e-8 * prev.abs(), "{what}: {prev} -> {now}");
        *prev = now;
    };
    for _ in 0..40 {
        solver.update_alpha(&mut state);
        check(&mut prev, solver.variational_bound(&state), "alpha");
        solver.update_beta(&mut state);
        check(&mut prev, solver.variational_bound(&state), "beta");
        solver.update_s(&mut state).unwrap();
        check(&mut prev, solver.variational_bound(&state), "s");
    }
}

#[test]
fn bound_ignores_task_order() {
    let tasks = random_tasks(12, 5);
    let mut reversed = tasks.windows().to_vec();
    reversed.reverse();
    let rev = TaskSet::from_windows(reversed, 27, 100).unwrap();
    let (sa, sb) = (
        VbSolver::new(&tasks, Hyperparams::default()).unwrap(),
        VbSolver::new(&rev, Hyperparams::default()).unwrap(),
    );
    let (mut a, mut b) = (sa.init_state().unwrap(), sb.init_state().unwrap());
    for _ in 0..5 {
        sa.sweep(&mut a).unwrap();
        sb.sweep(&mut b).unwrap();
    }
    let (ba, bb) = (sa.variational_bound(&a), sb.variational_bound(&b));
    assert!((ba - bb).abs() < 1e-9 * ba.abs());
}

#[test]
fn bound_prefers_optimal_alpha() {
    let spec = LineSpectrum::from_polar(vec![0.3], &[1.0], &[0.4]).unwrap();
    let tasks = signal_tasks((9, 10, 11), 27, 4, 100, &spec, 0.05, 1);
    let solver = VbSolver::new(&tasks, Hyperparams::default()).unwrap();
    let mut state = solver.init_state().unwrap();
    for _ in 0..5 {
        solver.sweep(&mut state).unwrap();
    }
    solver.update_alpha(&mut state);
    let best = solver.variational_bound(&state);
    for factor in [0.5, 0.9, 1.1, 2.0] {
        let mut moved = state.clone();
        for r in moved.alpha_rate.iter_mut() {
            *r *= factor;
        }
        moved.alpha_expect = moved.alpha_rate.iter().map(|r| moved.alpha_shape / r).collect();
        assert!(solver.variational_bound(&moved) < best, "factor {factor}");
    }
}

#[test]
fn covariances_stay_hermitian_psd() {
    let spec = LineSpectrum::from_polar(vec![0.12, 0.6], &[1.0, 0.5], &[0.0, 1.0]).unwrap();
    let tasks = signal_tasks((7, 8, 9), 32, 3, 100, &spec, 0.02, 2);
    let solver = VbSolver::new(&tasks, Hyperparams::default()).unwrap();
    let mut state = solver.init_state().unwrap();
    for _ in 0..10 {
        solver.sweep(&mut state).unwrap();
        for l in 0..3 {
            let s = solver.covariance(&state, l);
            let herm = (&s - s.adjoint()).norm();
            assert!(herm < 1e-10 * s.norm());
            let sym = (&s + s.adjoint()) * c(0.5, 0.0);
            let min = nalgebra::SymmetricEigen::new(sym).eigenvalues.min();
            assert!(min >= -1e-10, "min eigenvalue {min}");
        }
    }
}

#[test]
fn noiseless_single_tone_is_sparse() {
    let spec = LineSpectrum::from_polar(vec![0.42], &[1.3], &[0.7]).unwrap();
    let tasks = signal_tasks((9, 10, 11), 27, 10, 100, &spec, 0.0, 0);
    let solver = VbSolver::new(&tasks, Hyperparams::default()).unwrap();
    let (state, est) = solver.solve(RunOptions::default()).unwrap();
    let peak = est.grid_power[42];
    assert_eq!(extract_frequencies(&est, 1).unwrap(), vec![0.42]);
    for (i, &p) in est.grid_power.iter().enumerate() {
        if i != 42 {
            assert!(p < 1e-6 * peak, "bin {i}: {p} vs {peak}");
        }
    }
    // least squares on the true support: s = Φ_42^H y / M per task
    for (l, w) in tasks.windows().iter().enumerate() {
        let col = dense_phi(&w.offsets, 100).column(42).into_owned();
        let ls = (col.adjoint() * DVector::from_column_slice(&w.values))[(0, 0)] / 27.0;
        assert!((state.mu[l][42] - ls).norm() < 1e-6 * ls.norm());
    }
}
