use std::f64::consts::{E, PI};

use statrs::function::gamma::{digamma, ln_gamma};

use super::{VbSolver, VbState};

/// Entropy of `Gamma(shape, rate)`.
fn gamma_entropy(shape: f64, rate: f64) -> f64 {
    shape - rate.ln() + ln_gamma(shape) + (1.0 - shape) * digamma(shape)
}

/// `E[ln Gamma(x | shape0, rate0)]` under `x ~ Gamma(shape, rate)`.
fn gamma_cross(shape0: f64, rate0: f64, expect: f64, expect_ln: f64) -> f64 {
    shape0 * rate0.ln() - ln_gamma(shape0) + (shape0 - 1.0) * expect_ln - rate0 * expect
}

/// `E_q[ln p(Y, S, α, β)] + H[q(S)] + H[q(α)] + H[q(β)]`.
pub(super) fn evidence_lower_bound(solver: &VbSolver, state: &VbState) -> f64 {
    let hp = solver.hyperparams();
    let (l, m, n) = (solver.l() as f64, solver.m() as f64, solver.n() as f64);

    let beta = state.beta_shape / state.beta_rate;
    let ln_beta = digamma(state.beta_shape) - state.beta_rate.ln();
    let psi_alpha = digamma(state.alpha_shape);

    // likelihood, all tasks
    let mut total = -l * m * PI.ln() + l * m * ln_beta - beta * solver.expected_residual(state);

    // prior on s_l, all tasks, plus the alpha hyperprior and q(alpha) entropy
    let moments = solver.second_moments(state);
    total -= l * n * PI.ln();
    for (i, &rate) in state.alpha_rate.iter().enumerate() {
        let alpha = state.alpha_shape / rate;
        let ln_alpha = psi_alpha - rate.ln();
        total += l * ln_alpha - alpha * moments[i];
        total += gamma_cross(hp.a, hp.b, alpha, ln_alpha);
        total += gamma_entropy(state.alpha_shape, rate);
    }

    total += gamma_cross(hp.c, hp.d, beta, ln_beta);
    total += gamma_entropy(state.beta_shape, state.beta_rate);

    // complex Gaussian entropies: N ln(πe) + ln det Σ_l
    let per_task = n * (PI * E).ln();
    for l_idx in 0..solver.l() {
        total += per_task + state.posteriors()[solver.pattern_of(l_idx)].log_det;
    }
    total
}
