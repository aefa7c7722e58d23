//! Multivariate Hawkes-process sequence classifier.
//!
//! Tweets in a thread are events of a four-dimensional point process: the
//! intensity of label y in thread m is a constant base rate plus
//! exponentially-decaying excitation from earlier events in the same thread,
//!
//! ```text
//! lambda_{y,m}(t) = mu_y + sum_{t_l < t, m_l = m} alpha[y_l][y] * k(t - t_l)
//! k(dt) = omega * exp(-omega * dt)
//! ```
//!
//! with the decay fixed at omega = 0.1 per second. Each event also emits its
//! token counts from a per-label multinomial (beta, Laplace-smoothed). The
//! joint likelihood factorizes into the text terms, the event intensities and
//! the compensator (the integral of total intensity over the observation
//! window). Fitting is either closed-form moment matching (base rates from
//! thread-initial events, excitation from consecutive-pair transition ratios)
//! or L-BFGS on the exact log-likelihood in log-parameter space, initialized
//! from the closed form. Decoding is greedy in chronological order.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::label::{StanceLabel, NUM_LABELS};
use crate::numeric::{self, Mat};
use crate::optim::{lbfgs, LbfgsConfig};

const L: usize = NUM_LABELS;

/// The decay rate used throughout, in 1/seconds.
pub const DEFAULT_OMEGA: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub enum HawkesError {
    NegativeDelta,
    /// An event has zero intensity or a zero-probability token.
    NonFiniteLikelihood,
    EmptyHistory,
    /// All observation windows have zero length; rates are undefined.
    ZeroHorizon,
    InvalidParams(&'static str),
    InvalidHistory(&'static str),
    OptimizationDiverged,
}

impl core::fmt::Display for HawkesError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            HawkesError::NegativeDelta => f.write_str("kernel requires a non-negative delta"),
            HawkesError::NonFiniteLikelihood => f.write_str("non-finite log-likelihood"),
            HawkesError::EmptyHistory => f.write_str("event history is empty"),
            HawkesError::ZeroHorizon => f.write_str("total observation horizon is zero"),
            HawkesError::InvalidParams(msg) => write!(f, "invalid parameters: {msg}"),
            HawkesError::InvalidHistory(msg) => write!(f, "invalid history: {msg}"),
            HawkesError::OptimizationDiverged => f.write_str("optimization diverged"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for HawkesError {}

/// One tweet as a point-process event: time relative to the thread start,
/// stance label and sparse token counts over the training vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct HawkesEvent {
    pub time: f64,
    pub label: StanceLabel,
    pub tokens: Vec<(usize, u32)>,
}

/// Events of one thread, observed on [0, horizon].
#[derive(Debug, Clone, PartialEq)]
pub struct ThreadEvents {
    pub thread_id: String,
    pub horizon: f64,
    pub events: Vec<HawkesEvent>,
}

/// Event streams for a collection of threads.
#[derive(Debug, Clone, PartialEq)]
pub struct EventHistory {
    pub threads: Vec<ThreadEvents>,
    pub vocab_size: usize,
}

impl EventHistory {
    pub fn new(threads: Vec<ThreadEvents>, vocab_size: usize) -> Result<Self, HawkesError> {
        for t in &threads {
            if !(t.horizon >= 0.0) {
                return Err(HawkesError::InvalidHistory("negative horizon"));
            }
            let mut prev = 0.0;
            for e in &t.events {
                if e.time < 0.0 || e.time > t.horizon {
                    return Err(HawkesError::InvalidHistory("event outside [0, horizon]"));
                }
                if e.time < prev {
                    return Err(HawkesError::InvalidHistory("times not non-decreasing"));
                }
                prev = e.time;
                if e.tokens.iter().any(|&(w, _)| w >= vocab_size) {
                    return Err(HawkesError::InvalidHistory("token index out of vocabulary"));
                }
            }
        }
        Ok(EventHistory {
            threads,
            vocab_size,
        })
    }

    pub fn num_events(&self) -> usize {
        self.threads.iter().map(|t| t.events.len()).sum()
    }
}

/// Base intensities, cross-excitation, decay and per-label word multinomials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HawkesParams {
    pub mu: [f64; L],
    /// Row = exciting label, column = excited label.
    pub alpha: [[f64; L]; L],
    pub omega: f64,
    /// 4 x V row-stochastic word multinomials.
    pub beta: Mat,
}

impl HawkesParams {
    pub fn validate(&self) -> Result<(), HawkesError> {
        if self.mu.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(HawkesError::InvalidParams("mu must be non-negative"));
        }
        if self
            .alpha
            .iter()
            .flatten()
            .any(|&a| !(a >= 0.0) || !a.is_finite())
        {
            return Err(HawkesError::InvalidParams("alpha must be non-negative"));
        }
        if !(self.omega > 0.0) {
            return Err(HawkesError::InvalidParams("omega must be positive"));
        }
        if self.beta.rows() != L {
            return Err(HawkesError::InvalidParams("beta must have four rows"));
        }
        if self.beta.cols() > 0 {
            for y in 0..L {
                let s: f64 = self.beta.row(y).iter().sum();
                if numeric::abs(s - 1.0) > 1e-9 {
                    return Err(HawkesError::InvalidParams("beta rows must sum to 1"));
                }
            }
        }
        Ok(())
    }

    pub fn vocab_size(&self) -> usize {
        self.beta.cols()
    }
}

/// Exponential kernel k(dt) = omega * exp(-omega * dt); unit mass over
/// [0, inf).
pub fn kernel(dt: f64, omega: f64) -> Result<f64, HawkesError> {
    if dt < 0.0 {
        return Err(HawkesError::NegativeDelta);
    }
    Ok(omega * numeric::exp(-omega * dt))
}

/// Intensity of label `y` at time `t` in one thread; only events strictly
/// before `t` (and in this thread) contribute.
pub fn intensity(y: StanceLabel, thread: &ThreadEvents, t: f64, params: &HawkesParams) -> f64 {
    let mut lambda = params.mu[y.index()];
    for e in &thread.events {
        if e.time >= t {
            break;
        }
        lambda += params.alpha[e.label.index()][y.index()]
            * params.omega
            * numeric::exp(-params.omega * (t - e.time));
    }
    lambda
}

/// Log of the per-label text multinomial, up to the label-independent
/// multinomial coefficient.
fn text_log_prob(tokens: &[(usize, u32)], y: usize, beta: &Mat) -> f64 {
    let mut s = 0.0;
    for &(w, c) in tokens {
        s += c as f64 * numeric::ln(beta.get(y, w));
    }
    s
}

/// Integral of the total intensity over [0, horizon] for one thread:
/// sum_y mu_y * T + sum_events sum_y alpha[y_l][y] * (1 - exp(-omega (T - t_l))).
pub fn compensator(thread: &ThreadEvents, params: &HawkesParams) -> f64 {
    let mu_total: f64 = params.mu.iter().sum();
    let mut total = mu_total * thread.horizon;
    for e in &thread.events {
        let survival = 1.0 - numeric::exp(-params.omega * (thread.horizon - e.time));
        let row_sum: f64 = params.alpha[e.label.index()].iter().sum();
        total += row_sum * survival;
    }
    total
}

/// Exact log-likelihood: text terms + log-intensities at event times minus
/// the compensator, summed over threads.
pub fn log_likelihood(history: &EventHistory, params: &HawkesParams) -> Result<f64, HawkesError> {
    params.validate()?;
    let mut ll = 0.0;
    for thread in &history.threads {
        for (n, e) in thread.events.iter().enumerate() {
            ll += text_log_prob(&e.tokens, e.label.index(), &params.beta);
            let mut lambda = params.mu[e.label.index()];
            for prior in &thread.events[..n] {
                if prior.time < e.time {
                    lambda += params.alpha[prior.label.index()][e.label.index()]
                        * params.omega
                        * numeric::exp(-params.omega * (e.time - prior.time));
                }
            }
            if lambda <= 0.0 {
                return Err(HawkesError::NonFiniteLikelihood);
            }
            ll += numeric::ln(lambda);
        }
        ll -= compensator(thread, params);
    }
    if !ll.is_finite() {
        return Err(HawkesError::NonFiniteLikelihood);
    }
    Ok(ll)
}

/// Log-likelihood terms that depend on mu and alpha (text terms excluded),
/// with their gradients.
pub fn ll_grad_mu_alpha(
    history: &EventHistory,
    mu: &[f64; L],
    alpha: &[[f64; L]; L],
    omega: f64,
) -> (f64, [f64; L], [[f64; L]; L]) {
    let mut ll = 0.0;
    let mut grad_mu = [0.0; L];
    let mut grad_alpha = [[0.0; L]; L];
    for thread in &history.threads {
        for (n, e) in thread.events.iter().enumerate() {
            let y = e.label.index();
            // decayed kernel mass per exciting label
            let mut excitation = [0.0; L];
            for prior in &thread.events[..n] {
                if prior.time < e.time {
                    excitation[prior.label.index()] +=
                        omega * numeric::exp(-omega * (e.time - prior.time));
                }
            }
            let mut lambda = mu[y];
            for a in 0..L {
                lambda += alpha[a][y] * excitation[a];
            }
            ll += numeric::ln(lambda);
            let inv = 1.0 / lambda;
            grad_mu[y] += inv;
            for a in 0..L {
                grad_alpha[a][y] += excitation[a] * inv;
            }
        }
        // compensator and its gradient
        let mu_total: f64 = mu.iter().sum();
        ll -= mu_total * thread.horizon;
        for g in grad_mu.iter_mut() {
            *g -= thread.horizon;
        }
        for e in &thread.events {
            let survival = 1.0 - numeric::exp(-omega * (thread.horizon - e.time));
            let a = e.label.index();
            for b in 0..L {
                ll -= alpha[a][b] * survival;
                grad_alpha[a][b] -= survival;
            }
        }
    }
    (ll, grad_mu, grad_alpha)
}

/// Laplace-smoothed per-label word multinomials:
/// beta[y][w] = (count(w | y) + 1) / (tokens(y) + V).
pub fn fit_beta(history: &EventHistory) -> Mat {
    let v = history.vocab_size;
    let mut counts = Mat::zeros(L, v);
    let mut totals = [0.0; L];
    for thread in &history.threads {
        for e in &thread.events {
            for &(w, c) in &e.tokens {
                counts.add_at(e.label.index(), w, c as f64);
                totals[e.label.index()] += c as f64;
            }
        }
    }
    let mut beta = Mat::zeros(L, v);
    for y in 0..L {
        for w in 0..v {
            beta.set(y, w, (counts.get(y, w) + 1.0) / (totals[y] + v as f64));
        }
    }
    beta
}

/// Closed-form moment-matching estimate: base rates from thread-initial
/// event counts over the total horizon, excitation from consecutive-pair
/// transition ratios (the kernel has unit mass), beta from `fit_beta` and
/// the fixed decay.
pub fn fit_approx(history: &EventHistory) -> Result<HawkesParams, HawkesError> {
    if history.num_events() == 0 {
        return Err(HawkesError::EmptyHistory);
    }
    let total_horizon: f64 = history.threads.iter().map(|t| t.horizon).sum();
    if total_horizon <= 0.0 {
        return Err(HawkesError::ZeroHorizon);
    }

    let mut base_counts = [0.0; L];
    let mut label_counts = [0.0; L];
    let mut pair_counts = [[0.0; L]; L];
    for thread in &history.threads {
        for (n, e) in thread.events.iter().enumerate() {
            label_counts[e.label.index()] += 1.0;
            if n == 0 {
                base_counts[e.label.index()] += 1.0;
            } else {
                let prev = &thread.events[n - 1];
                pair_counts[prev.label.index()][e.label.index()] += 1.0;
            }
        }
    }

    let mut mu = [0.0; L];
    for y in 0..L {
        mu[y] = base_counts[y] / total_horizon;
    }
    let mut alpha = [[0.0; L]; L];
    for a in 0..L {
        if label_counts[a] > 0.0 {
            for b in 0..L {
                alpha[a][b] = pair_counts[a][b] / label_counts[a];
            }
        }
    }

    let params = HawkesParams {
        mu,
        alpha,
        omega: DEFAULT_OMEGA,
        beta: fit_beta(history),
    };
    params.validate()?;
    Ok(params)
}

/// Floor applied to zero closed-form estimates before taking logs.
const LOG_FLOOR: f64 = 1e-10;

/// Maximize the exact log-likelihood over mu and alpha by L-BFGS in
/// log-parameter space (omega and beta stay fixed). Never returns parameters
/// with a lower log-likelihood than `init`.
pub fn fit_grad(
    history: &EventHistory,
    init: &HawkesParams,
    max_iter: usize,
    tol: f64,
) -> Result<HawkesParams, HawkesError> {
    init.validate()?;
    if history.num_events() == 0 {
        return Err(HawkesError::EmptyHistory);
    }
    let omega = init.omega;

    let mut theta0 = Vec::with_capacity(L + L * L);
    for &m in &init.mu {
        theta0.push(numeric::ln(numeric::max(m, LOG_FLOOR)));
    }
    for row in &init.alpha {
        for &a in row {
            theta0.push(numeric::ln(numeric::max(a, LOG_FLOOR)));
        }
    }

    let unpack = |theta: &[f64]| -> ([f64; L], [[f64; L]; L]) {
        let mut mu = [0.0; L];
        let mut alpha = [[0.0; L]; L];
        for y in 0..L {
            mu[y] = numeric::exp(theta[y]);
        }
        for a in 0..L {
            for b in 0..L {
                alpha[a][b] = numeric::exp(theta[L + a * L + b]);
            }
        }
        (mu, alpha)
    };

    let objective = |theta: &[f64], grad: &mut [f64]| -> f64 {
        let (mu, alpha) = unpack(theta);
        let (ll, gmu, galpha) = ll_grad_mu_alpha(history, &mu, &alpha, omega);
        // d/d(log p) = p * d/dp; objective is the negated log-likelihood
        for y in 0..L {
            grad[y] = -mu[y] * gmu[y];
        }
        for a in 0..L {
            for b in 0..L {
                grad[L + a * L + b] = -alpha[a][b] * galpha[a][b];
            }
        }
        -ll
    };

    let cfg = LbfgsConfig {
        max_iter,
        tol,
        ..Default::default()
    };
    let outcome = lbfgs(objective, theta0, &cfg).map_err(|_| HawkesError::OptimizationDiverged)?;
    if !outcome.value.is_finite() {
        return Err(HawkesError::OptimizationDiverged);
    }

    let (mu, alpha) = unpack(&outcome.x);
    let fitted = HawkesParams {
        mu,
        alpha,
        omega,
        beta: init.beta.clone(),
    };
    fitted.validate()?;

    // monotone acceptance relative to the original (unclamped) init
    let init_ll = log_likelihood(history, init)?;
    let fitted_ll = log_likelihood(history, &fitted)?;
    if fitted_ll >= init_ll - 1e-9 {
        Ok(fitted)
    } else {
        Ok(init.clone())
    }
}

/// Greedy decoding: for each event in chronological order pick the label
/// maximizing text likelihood + log-intensity (given the labels already
/// assigned) minus the event's own compensator contribution.
pub fn predict_greedy(
    params: &HawkesParams,
    times: &[f64],
    tokens: &[Vec<(usize, u32)>],
    horizon: f64,
) -> Vec<StanceLabel> {
    debug_assert_eq!(times.len(), tokens.len());
    let mut assigned: Vec<StanceLabel> = Vec::with_capacity(times.len());
    for (n, (&t, toks)) in times.iter().zip(tokens).enumerate() {
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for y in 0..L {
            let mut lambda = params.mu[y];
            for (m, &tm) in times[..n].iter().enumerate() {
                if tm < t {
                    lambda += params.alpha[assigned[m].index()][y]
                        * params.omega
                        * numeric::exp(-params.omega * (t - tm));
                }
            }
            let survival = 1.0 - numeric::exp(-params.omega * (horizon - t));
            let alpha_row: f64 = params.alpha[y].iter().sum();
            let score = text_log_prob(toks, y, &params.beta) + numeric::ln(lambda)
                - alpha_row * survival;
            if score > best_score {
                best_score = score;
                best = y;
            }
        }
        assigned.push(StanceLabel::from_index(best).unwrap());
    }
    assigned
}

/// Ogata thinning sampler. Labels are drawn proportionally to the per-label
/// intensities at accepted times; each event emits `tokens_per_event` draws
/// from its label's word multinomial. Deterministic given the seed.
pub fn simulate(
    params: &HawkesParams,
    n_threads: usize,
    horizon: f64,
    tokens_per_event: usize,
    seed: u64,
) -> EventHistory {
    params.validate().expect("simulate requires valid params");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = params.vocab_size();
    let mut threads = Vec::with_capacity(n_threads);
    for i in 0..n_threads {
        let mut thread = ThreadEvents {
            thread_id: alloc::format!("sim{i}"),
            horizon,
            events: Vec::new(),
        };
        let mut t = 0.0;
        loop {
            // upper bound: total intensity just after t dominates (t, next]
            let mut bound = params.mu.iter().sum::<f64>();
            for e in &thread.events {
                let row_sum: f64 = params.alpha[e.label.index()].iter().sum();
                bound += row_sum * params.omega * numeric::exp(-params.omega * (t - e.time));
            }
            if bound <= 0.0 {
                break;
            }
            let u: f64 = rng.gen();
            t -= numeric::ln(1.0 - u) / bound;
            if t > horizon {
                break;
            }
            let lambdas: Vec<f64> = StanceLabel::ALL
                .iter()
                .map(|&y| intensity(y, &thread, t, params))
                .collect();
            let total: f64 = lambdas.iter().sum();
            if rng.gen::<f64>() * bound <= total {
                let mut pick: f64 = rng.gen::<f64>() * total;
                let mut label = StanceLabel::Comment;
                for (y, &l) in lambdas.iter().enumerate() {
                    pick -= l;
                    if pick <= 0.0 {
                        label = StanceLabel::from_index(y).unwrap();
                        break;
                    }
                }
                let mut counts: alloc::collections::BTreeMap<usize, u32> =
                    alloc::collections::BTreeMap::new();
                if v > 0 {
                    let row = params.beta.row(label.index());
                    for _ in 0..tokens_per_event {
                        let mut pick: f64 = rng.gen();
                        let mut w = v - 1;
                        for (j, &p) in row.iter().enumerate() {
                            pick -= p;
                            if pick <= 0.0 {
                                w = j;
                                break;
                            }
                        }
                        *counts.entry(w).or_insert(0) += 1;
                    }
                }
                thread.events.push(HawkesEvent {
                    time: t,
                    label,
                    tokens: counts.into_iter().collect(),
                });
            }
        }
        threads.push(thread);
    }
    EventHistory {
        threads,
        vocab_size: v,
    }
}

/// Serialized form of a fitted model: parameters plus the vocabulary the
/// token indices refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HawkesModel {
    pub mu: [f64; L],
    pub alpha: [[f64; L]; L],
    pub omega: f64,
    pub vocabulary: Vec<String>,
    pub beta: Mat,
}

impl HawkesModel {
    pub fn new(params: HawkesParams, vocabulary: Vec<String>) -> Self {
        HawkesModel {
            mu: params.mu,
            alpha: params.alpha,
            omega: params.omega,
            vocabulary,
            beta: params.beta,
        }
    }

    pub fn params(&self) -> HawkesParams {
        HawkesParams {
            mu: self.mu,
            alpha: self.alpha,
            omega: self.omega,
            beta: self.beta.clone(),
        }
    }
}
