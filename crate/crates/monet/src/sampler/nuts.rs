//! One chain of multinomial NUTS with dual averaging and diagonal mass
//! estimation.

use super::{ChainConfig, SamplerError, TargetDensity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIVERGENCE_THRESHOLD: f64 = 1000.0;

pub(crate) struct ChainOutput {
    pub draws: Vec<f64>,
    pub divergences: usize,
}

#[derive(Clone)]
struct State {
    position: Vec<f64>,
    momentum: Vec<f64>,
    grad: Vec<f64>,
    log_density: f64,
}

struct Hamiltonian<'a, T: TargetDensity> {
    target: &'a T,
    inv_mass: Vec<f64>,
}

impl<'a, T: TargetDensity> Hamiltonian<'a, T> {
    fn energy(&self, s: &State) -> f64 {
        let kinetic: f64 = s
            .momentum
            .iter()
            .zip(&self.inv_mass)
            .map(|(p, im)| 0.5 * p * p * im)
            .sum();
        -s.log_density + kinetic
    }

    fn leapfrog(&self, s: &State, eps: f64) -> Option<State> {
        let dim = s.position.len();
        let mut momentum = s.momentum.clone();
        for i in 0..dim {
            momentum[i] += 0.5 * eps * s.grad[i];
        }
        let mut position = s.position.clone();
        for i in 0..dim {
            position[i] += eps * self.inv_mass[i] * momentum[i];
        }
        let (log_density, grad) = self.target.log_density_gradient(&position);
        if !log_density.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return None;
        }
        for i in 0..dim {
            momentum[i] += 0.5 * eps * grad[i];
        }
        Some(State { position, momentum, grad, log_density })
    }
}

/// Subtree summary for the multinomial trajectory build.
struct Tree {
    leftmost: State,
    rightmost: State,
    /// Multinomial proposal drawn from this subtree.
    proposal: State,
    log_sum_weight: f64,
    /// Momentum sum across the subtree, for the generalized U-turn check.
    rho: Vec<f64>,
    sum_accept_prob: f64,
    n_leapfrog: usize,
    diverged: bool,
    turned: bool,
}

fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn is_turned(inv_mass: &[f64], rho: &[f64], left: &State, right: &State) -> bool {
    let mut fwd = 0.0;
    let mut bwd = 0.0;
    for i in 0..rho.len() {
        fwd += right.momentum[i] * inv_mass[i] * rho[i];
        bwd += left.momentum[i] * inv_mass[i] * rho[i];
    }
    fwd <= 0.0 || bwd <= 0.0
}

#[allow(clippy::too_many_arguments)]
fn build_tree<T: TargetDensity>(
    ham: &Hamiltonian<T>,
    rng: &mut ChaCha8Rng,
    from: &State,
    depth: usize,
    eps: f64,
    direction: f64,
    h0: f64,
) -> Tree {
    if depth == 0 {
        let step = eps * direction;
        match ham.leapfrog(from, step) {
            Some(next) => {
                let h = ham.energy(&next);
                let delta = h0 - h;
                let diverged = !delta.is_finite() || delta < -DIVERGENCE_THRESHOLD;
                let accept = delta.min(0.0).exp();
                let rho = next.momentum.clone();
                Tree {
                    leftmost: next.clone(),
                    rightmost: next.clone(),
                    proposal: next,
                    log_sum_weight: if diverged { f64::NEG_INFINITY } else { delta },
                    rho,
                    sum_accept_prob: if accept.is_finite() { accept } else { 0.0 },
                    n_leapfrog: 1,
                    diverged,
                    turned: false,
                }
            }
            None => Tree {
                leftmost: from.clone(),
                rightmost: from.clone(),
                proposal: from.clone(),
                log_sum_weight: f64::NEG_INFINITY,
                rho: vec![0.0; from.position.len()],
                sum_accept_prob: 0.0,
                n_leapfrog: 1,
                diverged: true,
                turned: false,
            },
        }
    } else {
        let inner = build_tree(ham, rng, from, depth - 1, eps, direction, h0);
        if inner.diverged || inner.turned {
            return inner;
        }
        let grow_from = if direction > 0.0 { inner.rightmost.clone() } else { inner.leftmost.clone() };
        let outer = build_tree(ham, rng, &grow_from, depth - 1, eps, direction, h0);

        let log_sum_weight = logaddexp(inner.log_sum_weight, outer.log_sum_weight);
        // progressive multinomial sampling between the two halves
        let take_outer = {
            let p = (outer.log_sum_weight - log_sum_weight).exp();
            rng.random::<f64>() < p
        };
        let proposal = if take_outer { outer.proposal.clone() } else { inner.proposal.clone() };
        let (leftmost, rightmost) = if direction > 0.0 {
            (inner.leftmost.clone(), outer.rightmost.clone())
        } else {
            (outer.leftmost.clone(), inner.rightmost.clone())
        };
        let rho: Vec<f64> = inner.rho.iter().zip(&outer.rho).map(|(a, b)| a + b).collect();
        let turned = outer.turned
            || outer.diverged
            || is_turned(&ham.inv_mass, &rho, &leftmost, &rightmost);
        Tree {
            leftmost,
            rightmost,
            proposal,
            log_sum_weight,
            rho,
            sum_accept_prob: inner.sum_accept_prob + outer.sum_accept_prob,
            n_leapfrog: inner.n_leapfrog + outer.n_leapfrog,
            diverged: outer.diverged,
            turned,
        }
    }
}

struct Transition {
    state: State,
    accept_stat: f64,
    diverged: bool,
}

fn transition<T: TargetDensity>(
    ham: &Hamiltonian<T>,
    rng: &mut ChaCha8Rng,
    current: &State,
    eps: f64,
    max_depth: usize,
) -> Transition {
    let dim = current.position.len();
    let mut state = current.clone();
    state.momentum = (0..dim)
        .map(|i| sample_standard_normal(rng) / ham.inv_mass[i].sqrt())
        .collect();
    let h0 = ham.energy(&state);

    let mut left = state.clone();
    let mut right = state.clone();
    let mut proposal = state.clone();
    let mut rho = state.momentum.clone();
    let mut log_sum_weight = 0.0f64; // weight of the initial point: exp(h0 - h0)
    let mut sum_accept = 0.0;
    let mut n_leapfrog = 0usize;
    let mut diverged = false;

    for depth in 0..max_depth {
        let direction = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let start = if direction > 0.0 { right.clone() } else { left.clone() };
        let subtree = build_tree(ham, rng, &start, depth, eps, direction, h0);
        sum_accept += subtree.sum_accept_prob;
        n_leapfrog += subtree.n_leapfrog;
        if subtree.diverged {
            diverged = true;
            break;
        }
        if subtree.turned {
            break;
        }
        // biased progressive sampling toward the new subtree
        let p = ((subtree.log_sum_weight - log_sum_weight).exp()).min(1.0);
        if rng.random::<f64>() < p {
            proposal = subtree.proposal.clone();
        }
        log_sum_weight = logaddexp(log_sum_weight, subtree.log_sum_weight);
        if direction > 0.0 {
            right = subtree.rightmost;
        } else {
            left = subtree.leftmost;
        }
        for (r, s) in rho.iter_mut().zip(&subtree.rho) {
            *r += s;
        }
        if is_turned(&ham.inv_mass, &rho, &left, &right) {
            break;
        }
    }

    let accept_stat = if n_leapfrog == 0 { 0.0 } else { sum_accept / n_leapfrog as f64 };
    Transition { state: proposal, accept_stat, diverged }
}

fn sample_standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    StandardNormal.sample(rng)
}

/// Dual-averaging step-size adaptation (Hoffman & Gelman defaults).
struct DualAverage {
    mu: f64,
    log_eps: f64,
    log_eps_bar: f64,
    h_bar: f64,
    count: u64,
    gamma: f64,
    t0: f64,
    kappa: f64,
    target: f64,
}

impl DualAverage {
    fn new(eps0: f64, target: f64) -> Self {
        Self {
            mu: (10.0 * eps0).ln(),
            log_eps: eps0.ln(),
            log_eps_bar: 0.0,
            h_bar: 0.0,
            count: 0,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            target,
        }
    }

    fn update(&mut self, accept_stat: f64) {
        self.count += 1;
        let m = self.count as f64;
        let eta = 1.0 / (m + self.t0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_stat);
        self.log_eps = self.mu - m.sqrt() / self.gamma * self.h_bar;
        let w = m.powf(-self.kappa);
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar;
    }

    fn eps(&self) -> f64 {
        self.log_eps.exp()
    }

    fn final_eps(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

fn initial_step_size<T: TargetDensity>(
    ham: &Hamiltonian<T>,
    rng: &mut ChaCha8Rng,
    state: &State,
) -> f64 {
    // double or halve until the one-step acceptance crosses 0.5
    let dim = state.position.len();
    let mut s = state.clone();
    s.momentum = (0..dim).map(|i| sample_standard_normal(rng) / ham.inv_mass[i].sqrt()).collect();
    let h0 = ham.energy(&s);
    let mut eps = 1.0;
    let delta = |h1: f64| (h0 - h1).exp();
    let first = match ham.leapfrog(&s, eps) {
        Some(n) => delta(ham.energy(&n)),
        None => 0.0,
    };
    let grow = first > 0.5;
    for _ in 0..50 {
        eps *= if grow { 2.0 } else { 0.5 };
        let a = match ham.leapfrog(&s, eps) {
            Some(n) => delta(ham.energy(&n)),
            None => 0.0,
        };
        if (grow && a <= 0.5) || (!grow && a >= 0.5) {
            break;
        }
    }
    eps.clamp(1e-10, 10.0)
}

pub(crate) fn run_chain<T: TargetDensity>(
    target: &T,
    config: &ChainConfig,
    chain: usize,
) -> Result<ChainOutput, SamplerError> {
    let dim = target.dimension();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(chain as u64 + 1);

    let position = target.initial_position(chain);
    let (log_density, grad) = target.log_density_gradient(&position);
    if !log_density.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(SamplerError::NonFiniteGradient { point: position });
    }
    let mut state = State { position, momentum: vec![0.0; dim], grad, log_density };

    let mut inv_mass = vec![1.0; dim];
    let mut ham = Hamiltonian { target, inv_mass: inv_mass.clone() };
    let mut da = DualAverage::new(initial_step_size(&ham, &mut rng, &state), config.target_accept);

    // windowed warmup: settle step size, then estimate the mass matrix in
    // doubling windows, then settle the step size again
    let warmup = config.warmup;
    let init_buffer = (warmup as f64 * 0.15) as usize;
    let term_buffer = (warmup as f64 * 0.10) as usize;
    let mut window_end = init_buffer + (warmup - init_buffer - term_buffer).min(25);
    let mut window_size = 25usize;
    let mut window_draws: Vec<Vec<f64>> = Vec::new();

    let mut warmup_divergences = 0usize;
    for iter in 0..warmup {
        let t = transition(&ham, &mut rng, &state, da.eps(), config.max_tree_depth);
        if t.diverged {
            warmup_divergences += 1;
        }
        state = t.state;
        da.update(t.accept_stat);

        if iter >= init_buffer && iter < warmup - term_buffer {
            window_draws.push(state.position.clone());
            if iter + 1 == window_end {
                // regularized variance estimate, Stan-style shrinkage to unit
                let n = window_draws.len() as f64;
                if n > 3.0 {
                    for j in 0..dim {
                        let col: Vec<f64> = window_draws.iter().map(|d| d[j]).collect();
                        let v = crate::numeric::stats::variance(&col);
                        let reg = n / (n + 5.0) * v + 1e-3 * (5.0 / (n + 5.0));
                        inv_mass[j] = reg.max(1e-10);
                    }
                    ham = Hamiltonian { target, inv_mass: inv_mass.clone() };
                    let eps = da.final_eps().max(1e-10);
                    da = DualAverage::new(eps, config.target_accept);
                }
                window_draws.clear();
                window_size *= 2;
                let remaining = warmup.saturating_sub(term_buffer).saturating_sub(iter + 1);
                window_end = if remaining < 2 * window_size {
                    warmup - term_buffer
                } else {
                    iter + 1 + window_size
                };
            }
        }
    }
    if warmup > 0 && warmup_divergences == warmup {
        return Err(SamplerError::AllDivergent);
    }

    let eps = da.final_eps().clamp(1e-10, 10.0);
    let mut draws = Vec::with_capacity(config.keep * dim);
    let mut divergences = 0usize;
    for _ in 0..config.keep {
        let t = transition(&ham, &mut rng, &state, eps, config.max_tree_depth);
        if t.diverged {
            divergences += 1;
        }
        state = t.state;
        draws.extend_from_slice(&state.position);
    }
    Ok(ChainOutput { draws, divergences })
}
