use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::check::HoldoutMask;
use crate::data::BiasMatrix;
use crate::error::{McmaError, Result};
use crate::rng::{stream, Stream};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    /// Full-batch Adamax ascent on the marginal log-likelihood.
    Adamax,
    /// Expectation-maximisation; monotone in the log-likelihood.
    Em,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpcaConfig {
    pub method: FitMethod,
    pub max_iters: usize,
    /// Stop when the relative change of the log-likelihood drops below this.
    pub tol: f64,
    pub learning_rate: f64,
    pub noise_floor: f64,
    pub seed: u64,
}

impl Default for PpcaConfig {
    fn default() -> Self {
        PpcaConfig {
            method: FitMethod::Adamax,
            max_iters: 2000,
            tol: 1e-6,
            learning_rate: 0.01,
            noise_floor: 1e-6,
            seed: 0,
        }
    }
}

/// Fitted PPCA parameters: loadings `W` (D x k), mean, isotropic noise variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FactorModelRepr", into = "FactorModelRepr")]
pub struct FactorModel {
    loadings: DMatrix<f64>,
    mean: DVector<f64>,
    noise_var: f64,
}

#[derive(Serialize, Deserialize)]
struct FactorModelRepr {
    /// Row-major, one row per bias domain.
    loadings: Vec<Vec<f64>>,
    mean: Vec<f64>,
    noise_var: f64,
    k: usize,
}

impl TryFrom<FactorModelRepr> for FactorModel {
    type Error = McmaError;
    fn try_from(r: FactorModelRepr) -> Result<Self> {
        let d = r.mean.len();
        if r.loadings.len() != d || r.loadings.iter().any(|row| row.len() != r.k) {
            return Err(McmaError::DimensionMismatch(
                "loadings do not match mean / k".into(),
            ));
        }
        let w = DMatrix::from_fn(d, r.k, |i, j| r.loadings[i][j]);
        FactorModel::new(w, DVector::from_vec(r.mean), r.noise_var)
    }
}

impl From<FactorModel> for FactorModelRepr {
    fn from(m: FactorModel) -> Self {
        FactorModelRepr {
            loadings: m
                .loadings
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            mean: m.mean.iter().copied().collect(),
            noise_var: m.noise_var,
            k: m.loadings.ncols(),
        }
    }
}

impl FactorModel {
    pub fn new(loadings: DMatrix<f64>, mean: DVector<f64>, noise_var: f64) -> Result<Self> {
        let (d, k) = loadings.shape();
        if mean.len() != d {
            return Err(McmaError::DimensionMismatch(format!(
                "mean has {} entries, D = {d}",
                mean.len()
            )));
        }
        if k == 0 || k >= d {
            return Err(McmaError::RankError { k, d });
        }
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(McmaError::InvalidArgument(format!(
                "noise variance {noise_var} must be > 0"
            )));
        }
        Ok(FactorModel {
            loadings,
            mean,
            noise_var,
        })
    }

    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.loadings
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn latent_dim(&self) -> usize {
        self.loadings.ncols()
    }

    pub fn dim(&self) -> usize {
        self.loadings.nrows()
    }

    /// Draws `n` rows from the generative model `x = W z + mu + eps`.
    pub fn sample(&self, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = stream(seed, Stream::Model);
        let noise = Normal::new(0.0, self.noise_var.sqrt()).expect("positive variance");
        let (d, k) = self.loadings.shape();
        let mut x = DMatrix::zeros(n, d);
        for i in 0..n {
            let z = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
            let mean = &self.loadings * z + &self.mean;
            for j in 0..d {
                x[(i, j)] = mean[j] + noise.sample(&mut rng);
            }
        }
        x
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PpcaFit {
    pub model: FactorModel,
    pub converged: bool,
    pub iterations: usize,
    /// Total log-likelihood evaluated at the start of every iteration.
    pub log_likelihood: Vec<f64>,
}

/// Per-RCT posterior means of the latent factor, one row per RCT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstituteConfounders {
    pub z: Vec<Vec<f64>>,
}

impl SubstituteConfounders {
    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn zeros(n: usize, k: usize) -> Self {
        SubstituteConfounders {
            z: vec![vec![0.0; k]; n],
        }
    }
}

pub fn fit_ppca(bias: &BiasMatrix, k: usize, config: &PpcaConfig) -> Result<PpcaFit> {
    fit_ppca_dense(&bias.to_matrix(), None, k, config)
}

/// Maximum-likelihood PPCA on a real matrix. With a mask, held-out entries are
/// ignored and the likelihood is the marginal over each row's observed entries.
pub fn fit_ppca_dense(
    x: &DMatrix<f64>,
    mask: Option<&HoldoutMask>,
    k: usize,
    config: &PpcaConfig,
) -> Result<PpcaFit> {
    let (n, d) = x.shape();
    if k == 0 || k >= d {
        return Err(McmaError::RankError { k, d });
    }
    if n < 2 {
        return Err(McmaError::InvalidArgument(format!(
            "PPCA needs at least 2 rows, got {n}"
        )));
    }
    if let Some(m) = mask {
        if (m.n(), m.d()) != (n, d) {
            return Err(McmaError::DimensionMismatch(
                "holdout mask does not match data".into(),
            ));
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(McmaError::DomainError(
            "non-finite entry in PPCA input".into(),
        ));
    }
    let observed = observed_indices(n, d, mask);
    let mut state = init_state(x, &observed, k, config);
    match config.method {
        FitMethod::Adamax => fit_adamax(x, &observed, &mut state, config),
        FitMethod::Em => fit_em(x, &observed, &mut state, config),
    }
}

fn observed_indices(n: usize, d: usize, mask: Option<&HoldoutMask>) -> Vec<Vec<usize>> {
    (0..n)
        .map(|i| {
            (0..d)
                .filter(|&j| mask.is_none_or(|m| !m.is_held(i, j)))
                .collect()
        })
        .collect()
}

struct State {
    w: DMatrix<f64>,
    mu: DVector<f64>,
    sigma2: f64,
}

fn init_state(x: &DMatrix<f64>, observed: &[Vec<usize>], k: usize, config: &PpcaConfig) -> State {
    let d = x.ncols();
    let mut sum = vec![0.0; d];
    let mut sq = vec![0.0; d];
    let mut cnt = vec![0usize; d];
    for (i, obs) in observed.iter().enumerate() {
        for &j in obs {
            sum[j] += x[(i, j)];
            sq[j] += x[(i, j)] * x[(i, j)];
            cnt[j] += 1;
        }
    }
    let mu = DVector::from_fn(d, |j, _| {
        if cnt[j] > 0 {
            sum[j] / cnt[j] as f64
        } else {
            0.0
        }
    });
    let var = (0..d)
        .filter(|&j| cnt[j] > 0)
        .map(|j| (sq[j] / cnt[j] as f64 - mu[j] * mu[j]).max(0.0))
        .sum::<f64>()
        / d as f64;
    let mut rng = stream(config.seed, Stream::Init);
    let w = DMatrix::from_fn(d, k, |_, _| {
        let v: f64 = StandardNormal.sample(&mut rng);
        0.1 * v
    });
    State {
        w,
        mu,
        sigma2: var.max(1e-2),
    }
}

/// Quantities of one row's observed-entry marginal, via the Woodbury identity.
struct RowPosterior {
    /// `M^-1` with `M = W_o^T W_o + sigma^2 I`.
    m_inv: DMatrix<f64>,
    /// Posterior mean of z given the observed entries.
    z_mean: DVector<f64>,
    ll: f64,
}

fn row_posterior(
    x: &DMatrix<f64>,
    i: usize,
    obs: &[usize],
    w: &DMatrix<f64>,
    mu: &DVector<f64>,
    sigma2: f64,
) -> Result<(RowPosterior, DMatrix<f64>, DVector<f64>)> {
    let k = w.ncols();
    let d_o = obs.len();
    let w_o = w.select_rows(obs);
    let r = DVector::from_fn(d_o, |t, _| x[(i, obs[t])] - mu[obs[t]]);
    let mut m = w_o.tr_mul(&w_o);
    for c in 0..k {
        m[(c, c)] += sigma2;
    }
    let chol = m.cholesky().ok_or(McmaError::SingularMatrix)?;
    let log_det_m = 2.0
        * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|v| v.ln())
            .sum::<f64>();
    let m_inv = chol.inverse();
    let wtr = w_o.tr_mul(&r);
    let z_mean = &m_inv * &wtr;
    let quad = (r.dot(&r) - wtr.dot(&z_mean)) / sigma2;
    let log_det_c = (d_o as f64 - k as f64) * sigma2.ln() + log_det_m;
    let ll = -0.5 * (d_o as f64 * LN_2PI + log_det_c + quad);
    Ok((RowPosterior { m_inv, z_mean, ll }, w_o, r))
}

fn total_log_likelihood(x: &DMatrix<f64>, observed: &[Vec<usize>], s: &State) -> Result<f64> {
    let mut ll = 0.0;
    for (i, obs) in observed.iter().enumerate() {
        if !obs.is_empty() {
            ll += row_posterior(x, i, obs, &s.w, &s.mu, s.sigma2)?.0.ll;
        }
    }
    Ok(ll)
}

fn relative_change(prev: f64, cur: f64) -> f64 {
    (cur - prev).abs() / prev.abs().max(1e-12)
}

fn finish(state: State, converged: bool, trace: Vec<f64>) -> Result<PpcaFit> {
    let iterations = trace.len();
    Ok(PpcaFit {
        model: FactorModel::new(state.w, state.mu, state.sigma2)?,
        converged,
        iterations,
        log_likelihood: trace,
    })
}

struct Adamax {
    m: Vec<f64>,
    u: Vec<f64>,
    t: i32,
}

impl Adamax {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize) -> Self {
        Adamax {
            m: vec![0.0; len],
            u: vec![0.0; len],
            t: 0,
        }
    }

    /// Returns the ascent step for gradient `g`.
    fn step(&mut self, g: &[f64], lr: f64) -> Vec<f64> {
        self.t += 1;
        let scale = lr / (1.0 - Self::BETA1.powi(self.t));
        g.iter()
            .enumerate()
            .map(|(p, &gp)| {
                self.m[p] = Self::BETA1 * self.m[p] + (1.0 - Self::BETA1) * gp;
                self.u[p] = (Self::BETA2 * self.u[p]).max(gp.abs());
                scale * self.m[p] / (self.u[p] + Self::EPS)
            })
            .collect()
    }
}

/// Gradient ascent in `(W, mu, log(sigma^2 - floor))` with the per-row
/// average log-likelihood as objective.
fn fit_adamax(
    x: &DMatrix<f64>,
    observed: &[Vec<usize>],
    s: &mut State,
    config: &PpcaConfig,
) -> Result<PpcaFit> {
    let (n, d) = x.shape();
    let k = s.w.ncols();
    let floor = config.noise_floor;
    let mut log_excess = (s.sigma2 - floor).max(1e-12).ln();
    s.sigma2 = floor + log_excess.exp();
    let n_params = d * k + d + 1;
    let mut opt = Adamax::new(n_params);
    let mut trace = Vec::new();
    let mut converged = false;

    for _ in 0..config.max_iters {
        let mut g_w = DMatrix::<f64>::zeros(d, k);
        let mut g_mu = DVector::<f64>::zeros(d);
        let mut g_s2 = 0.0;
        let mut ll = 0.0;
        for (i, obs) in observed.iter().enumerate() {
            if obs.is_empty() {
                continue;
            }
            let (post, w_o, r) = row_posterior(x, i, obs, &s.w, &s.mu, s.sigma2)?;
            ll += post.ll;
            // C^-1 r, with C^-1 = (I - W_o M^-1 W_o^T) / sigma^2.
            let v = (&r - &w_o * &post.z_mean) / s.sigma2;
            // dll/dW_o = v v^T W_o - W_o M^-1, since C^-1 W_o = W_o M^-1.
            let vtw = w_o.tr_mul(&v);
            let w_minv = &w_o * &post.m_inv;
            for (t, &j) in obs.iter().enumerate() {
                for c in 0..k {
                    g_w[(j, c)] += v[t] * vtw[c] - w_minv[(t, c)];
                }
                g_mu[j] += v[t];
            }
            let trace_c_inv =
                (obs.len() as f64 - (&post.m_inv * w_o.tr_mul(&w_o)).trace()) / s.sigma2;
            g_s2 += 0.5 * (v.dot(&v) - trace_c_inv);
        }
        if let Some(&prev) = trace.last() {
            if relative_change(prev, ll) < config.tol {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);

        let inv_n = 1.0 / n as f64;
        let mut grad = Vec::with_capacity(n_params);
        grad.extend(g_w.iter().map(|g| g * inv_n));
        grad.extend(g_mu.iter().map(|g| g * inv_n));
        grad.push(g_s2 * inv_n * (s.sigma2 - floor));
        let step = opt.step(&grad, config.learning_rate);
        for (p, w) in s.w.iter_mut().enumerate() {
            *w += step[p];
        }
        for (j, m) in s.mu.iter_mut().enumerate() {
            *m += step[d * k + j];
        }
        log_excess += step[n_params - 1];
        s.sigma2 = floor + log_excess.exp();
    }
    let state = State {
        w: s.w.clone(),
        mu: s.mu.clone(),
        sigma2: s.sigma2,
    };
    finish(state, converged, trace)
}

/// EM for PPCA with missing entries; `(W, mu)` are updated jointly by treating
/// the mean as the loading of a constant latent coordinate.
fn fit_em(
    x: &DMatrix<f64>,
    observed: &[Vec<usize>],
    s: &mut State,
    config: &PpcaConfig,
) -> Result<PpcaFit> {
    let (n, d) = x.shape();
    let k = s.w.ncols();
    let mut trace = Vec::new();
    let mut converged = false;

    for _ in 0..config.max_iters {
        let mut ez = Vec::with_capacity(n);
        let mut ezz = Vec::with_capacity(n);
        let mut ll = 0.0;
        for (i, obs) in observed.iter().enumerate() {
            if obs.is_empty() {
                ez.push(DVector::zeros(k));
                ezz.push(DMatrix::identity(k, k));
                continue;
            }
            let (post, _, _) = row_posterior(x, i, obs, &s.w, &s.mu, s.sigma2)?;
            ll += post.ll;
            let second = &post.m_inv * s.sigma2 + &post.z_mean * post.z_mean.transpose();
            ez.push(post.z_mean);
            ezz.push(second);
        }
        if let Some(&prev) = trace.last() {
            if relative_change(prev, ll) < config.tol {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);

        let mut rows_with = vec![Vec::new(); d];
        for (i, obs) in observed.iter().enumerate() {
            for &j in obs {
                rows_with[j].push(i);
            }
        }
        for (j, rows) in rows_with.iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            let mut g = DMatrix::<f64>::zeros(k + 1, k + 1);
            let mut b = DVector::<f64>::zeros(k + 1);
            for &i in rows {
                let xij = x[(i, j)];
                for c in 0..k {
                    for c2 in 0..k {
                        g[(c, c2)] += ezz[i][(c, c2)];
                    }
                    g[(c, k)] += ez[i][c];
                    g[(k, c)] += ez[i][c];
                    b[c] += xij * ez[i][c];
                }
                g[(k, k)] += 1.0;
                b[k] += xij;
            }
            if let Some(sol) = g.cholesky().map(|c| c.solve(&b)) {
                for c in 0..k {
                    s.w[(j, c)] = sol[c];
                }
                s.mu[j] = sol[k];
            }
        }

        let mut resid = 0.0;
        let mut count = 0usize;
        for (i, obs) in observed.iter().enumerate() {
            for &j in obs {
                let wj = s.w.row(j).transpose();
                let r = x[(i, j)] - s.mu[j];
                resid +=
                    r * r - 2.0 * r * wj.dot(&ez[i]) + (wj.transpose() * &ezz[i] * &wj)[(0, 0)];
                count += 1;
            }
        }
        s.sigma2 = (resid / count.max(1) as f64).max(config.noise_floor);
    }
    let state = State {
        w: s.w.clone(),
        mu: s.mu.clone(),
        sigma2: s.sigma2,
    };
    finish(state, converged, trace)
}

/// Log-likelihood of the rows (restricted to unmasked entries when a mask is given).
pub fn log_likelihood(
    model: &FactorModel,
    x: &DMatrix<f64>,
    mask: Option<&HoldoutMask>,
) -> Result<f64> {
    let (n, d) = x.shape();
    if d != model.dim() {
        return Err(McmaError::DimensionMismatch(format!(
            "data has {d} columns, model {}",
            model.dim()
        )));
    }
    let observed = observed_indices(n, d, mask);
    let state = State {
        w: model.loadings.clone(),
        mu: model.mean.clone(),
        sigma2: model.noise_var,
    };
    total_log_likelihood(x, &observed, &state)
}

/// `E[z | a] = M^-1 W^T (a - mu)` with `M = W^T W + sigma^2 I`.
pub fn posterior_mean(model: &FactorModel, a: &[f64]) -> Result<Vec<f64>> {
    let d = model.dim();
    if a.len() != d {
        return Err(McmaError::DimensionMismatch(format!(
            "input has {} entries, model {d}",
            a.len()
        )));
    }
    let k = model.latent_dim();
    let mut m = model.loadings.tr_mul(&model.loadings);
    for c in 0..k {
        m[(c, c)] += model.noise_var;
    }
    let chol = m.cholesky().ok_or(McmaError::SingularMatrix)?;
    let centered = DVector::from_fn(d, |j, _| a[j] - model.mean[j]);
    let z = chol.solve(&model.loadings.tr_mul(&centered));
    if z.iter().any(|v| !v.is_finite()) {
        return Err(McmaError::SingularMatrix);
    }
    Ok(z.iter().copied().collect())
}

pub fn posterior_means(model: &FactorModel, bias: &BiasMatrix) -> Result<SubstituteConfounders> {
    let z = bias
        .rows()
        .map(|row| {
            let a: Vec<f64> = row.iter().map(|&v| f64::from(v)).collect();
            posterior_mean(model, &a)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SubstituteConfounders { z })
}
