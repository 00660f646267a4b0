//! Maximum-likelihood fits: conditional multinomial logit, binary logistic
//! and OLS, with nested-model tests.
//!
//! Sums over instances or rows are reduced over fixed-size chunks and then
//! added in chunk order, so results are bitwise identical for any number of
//! worker threads.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::choices::ChoiceInstance;
use crate::design::Design;
use crate::error::{Error, Result};
use crate::special::{chi2_sf, f_sf, normal_two_sided, t_two_sided};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100;
const CHUNK: usize = 64;
const MAX_HALVINGS: usize = 60;
const SEPARATION_NORM: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mnl,
    Logistic,
    Ols,
}

/// OLS-only summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsSummary {
    pub rss: f64,
    pub sigma2: f64,
    pub r_squared: f64,
    pub f_statistic: f64,
    pub df_model: usize,
    pub df_resid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelKind,
    pub feature_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Two-sided p-values (normal for likelihood fits, t for OLS).
    pub p_values: Vec<f64>,
    pub loglik: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ols: Option<OlsSummary>,
    pub n_obs: usize,
    pub n_params: usize,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_max_abs: f64,
}

impl FitResult {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.feature_names.iter().position(|n| n == name).map(|j| self.coefficients[j])
    }
}

pub fn odds_ratio(coefficient: f64) -> f64 {
    coefficient.exp()
}

/// Per-instance utilities and choice probabilities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityTable {
    pub utilities: Vec<Vec<f64>>,
    pub probabilities: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn utilities(beta: &[f64], inst: &ChoiceInstance) -> Vec<f64> {
    inst.rows().map(|r| dot(r, beta)).collect()
}

/// Softmax with max-subtraction; returns probabilities and log Σ exp(u).
fn softmax(u: &[f64]) -> (Vec<f64>, f64) {
    let m = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = u.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    (e.iter().map(|v| v / s).collect(), m + s.ln())
}

fn check_instances(beta: &[f64], instances: &[ChoiceInstance]) -> Result<()> {
    for (i, inst) in instances.iter().enumerate() {
        if inst.n_features != beta.len() {
            return Err(Error::Invalid(format!(
                "instance {i} has {} features, coefficient vector has {}",
                inst.n_features,
                beta.len()
            )));
        }
    }
    Ok(())
}

/// Ordered chunked reduction of `f` over `items`.
fn reduce<T, A, F, G>(items: &[T], init: impl Fn() -> A + Sync, f: F, add: G) -> A
where
    T: Sync,
    A: Send,
    F: Fn(&mut A, &T) + Sync,
    G: Fn(&mut A, A),
{
    let parts: Vec<A> = items
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = init();
            for item in chunk {
                f(&mut acc, item);
            }
            acc
        })
        .collect();
    let mut total = init();
    for p in parts {
        add(&mut total, p);
    }
    total
}

pub fn mnl_loglik(beta: &[f64], instances: &[ChoiceInstance]) -> Result<f64> {
    check_instances(beta, instances)?;
    Ok(reduce(
        instances,
        || 0.0,
        |acc, inst| {
            let u = utilities(beta, inst);
            let (_, lse) = softmax(&u);
            *acc += u[inst.chosen] - lse;
        },
        |a, b| *a += b,
    ))
}

struct Derivs {
    ll: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

impl Derivs {
    fn zero(p: usize) -> Self {
        Derivs {
            ll: 0.0,
            grad: vec![0.0; p],
            hess: vec![0.0; p * p],
        }
    }

    fn add(&mut self, other: Derivs) {
        self.ll += other.ll;
        self.grad.iter_mut().zip(&other.grad).for_each(|(a, b)| *a += b);
        self.hess.iter_mut().zip(&other.hess).for_each(|(a, b)| *a += b);
    }

    fn hessian(&self) -> DMatrix<f64> {
        let p = self.grad.len();
        DMatrix::from_row_slice(p, p, &self.hess)
    }
}

fn mnl_derivs(beta: &[f64], instances: &[ChoiceInstance]) -> Derivs {
    let p = beta.len();
    reduce(
        instances,
        || Derivs::zero(p),
        |acc, inst| {
            let u = utilities(beta, inst);
            let (prob, lse) = softmax(&u);
            acc.ll += u[inst.chosen] - lse;
            let mut xbar = vec![0.0; p];
            for (pk, row) in prob.iter().zip(inst.rows()) {
                for (m, x) in xbar.iter_mut().zip(row) {
                    *m += pk * x;
                }
            }
            for ((g, x), m) in acc.grad.iter_mut().zip(inst.row(inst.chosen)).zip(&xbar) {
                *g += x - m;
            }
            // −Σ_k P_k (x_k − x̄)(x_k − x̄)ᵀ
            for (pk, row) in prob.iter().zip(inst.rows()) {
                for a in 0..p {
                    let da = row[a] - xbar[a];
                    if da == 0.0 {
                        continue;
                    }
                    for b in 0..p {
                        acc.hess[a * p + b] -= pk * da * (row[b] - xbar[b]);
                    }
                }
            }
        },
        Derivs::add,
    )
}

pub fn mnl_gradient(beta: &[f64], instances: &[ChoiceInstance]) -> Result<Vec<f64>> {
    check_instances(beta, instances)?;
    Ok(mnl_derivs(beta, instances).grad)
}

pub fn mnl_hessian(beta: &[f64], instances: &[ChoiceInstance]) -> Result<DMatrix<f64>> {
    check_instances(beta, instances)?;
    Ok(mnl_derivs(beta, instances).hessian())
}

pub fn mnl_probabilities(beta: &[f64], instances: &[ChoiceInstance]) -> Result<ProbabilityTable> {
    check_instances(beta, instances)?;
    let (utilities, probabilities) = instances
        .iter()
        .map(|inst| {
            let u = utilities(beta, inst);
            let (p, _) = softmax(&u);
            (u, p)
        })
        .unzip();
    Ok(ProbabilityTable { utilities, probabilities })
}

/// Share of instances whose chosen alternative has strictly the highest
/// utility. Ties count as misses.
pub fn mnl_accuracy(beta: &[f64], instances: &[ChoiceInstance]) -> Result<f64> {
    check_instances(beta, instances)?;
    if instances.is_empty() {
        return Err(Error::Invalid("accuracy needs at least one instance".into()));
    }
    let hits = instances
        .iter()
        .filter(|inst| {
            let u = utilities(beta, inst);
            let c = u[inst.chosen];
            u.iter().enumerate().all(|(k, &v)| k == inst.chosen || c > v)
        })
        .count();
    Ok(hits as f64 / instances.len() as f64)
}

/// Condition number of a symmetric matrix from its eigenvalues.
fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigenvalues();
    let max = eig.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Cholesky of the information matrix (−H), or a singularity error.
fn information_cholesky(hess: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let info = -hess;
    let cond = condition_number(&info);
    if !cond.is_finite() || cond > 1e14 {
        return Err(Error::Singular { condition: cond });
    }
    info.cholesky().ok_or(Error::Singular { condition: cond })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

struct NewtonOutcome {
    beta: Vec<f64>,
    derivs: Derivs,
    converged: bool,
    iterations: usize,
}

/// Damped Newton ascent on a concave objective. `check` runs after every
/// accepted step and may abort.
fn newton<D, L, C>(p: usize, tol: f64, max_iter: usize, derivs: D, loglik: L, mut check: C) -> Result<NewtonOutcome>
where
    D: Fn(&[f64]) -> Derivs,
    L: Fn(&[f64]) -> f64,
    C: FnMut(&[f64], bool) -> Result<()>,
{
    let mut beta = vec![0.0; p];
    let mut d = derivs(&beta);
    let mut iterations = 0;
    let mut converged = max_abs(&d.grad) < tol;
    while !converged && iterations < max_iter {
        let chol = match information_cholesky(&d.hessian()) {
            Ok(c) => c,
            Err(e) => {
                check(&beta, true)?;
                return Err(e);
            }
        };
        let step = chol.solve(&DVector::from_column_slice(&d.grad));
        // Predicted gain below the resolution of the log-likelihood: the
        // ascent check is meaningless, take the full step.
        let predicted_gain = 0.5 * dot(&d.grad, step.as_slice());
        let resolution = 64.0 * f64::EPSILON * d.ll.abs().max(1.0);
        let mut scale = 1.0;
        let mut accepted = None;
        if predicted_gain < resolution {
            accepted = Some(beta.iter().zip(step.iter()).map(|(b, s)| b + s).collect());
        }
        for _ in 0..MAX_HALVINGS {
            if accepted.is_some() {
                break;
            }
            let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
            let ll = loglik(&trial);
            if ll.is_finite() && ll >= d.ll {
                accepted = Some(trial);
                break;
            }
            scale *= 0.5;
        }
        iterations += 1;
        let Some(next) = accepted else {
            log::warn!("line search failed at iteration {iterations}");
            break;
        };
        beta = next;
        d = derivs(&beta);
        check(&beta, false)?;
        converged = max_abs(&d.grad) < tol;
    }
    Ok(NewtonOutcome {
        beta,
        derivs: d,
        converged,
        iterations,
    })
}

fn standard_errors(hess: &DMatrix<f64>) -> Result<Vec<f64>> {
    let chol = information_cholesky(hess)?;
    let cov = chol.inverse();
    Ok((0..cov.nrows()).map(|j| cov[(j, j)].max(0.0).sqrt()).collect())
}

fn z_p_values(beta: &[f64], se: &[f64]) -> Vec<f64> {
    beta.iter()
        .zip(se)
        .map(|(b, s)| if *s > 0.0 { normal_two_sided(b / s) } else { f64::NAN })
        .collect()
}

/// Newton fit of the conditional logit from β = 0.
pub fn mnl_fit(
    instances: &[ChoiceInstance],
    feature_names: &[String],
    tol: f64,
    max_iter: usize,
) -> Result<FitResult> {
    let p = feature_names.len();
    if instances.is_empty() {
        return Err(Error::Invalid("fit needs at least one choice instance".into()));
    }
    check_instances(&vec![0.0; p], instances)?;
    for inst in instances {
        inst.validate()?;
    }
    for (j, name) in feature_names.iter().enumerate() {
        let varies = instances.iter().any(|inst| {
            let first = inst.row(0)[j];
            inst.rows().any(|r| r[j] != first)
        });
        if !varies {
            return Err(Error::Unidentified(name.clone()));
        }
    }
    let out = newton(
        p,
        tol,
        max_iter,
        |b| mnl_derivs(b, instances),
        |b| mnl_loglik(b, instances).unwrap_or(f64::NEG_INFINITY),
        |_, _| Ok(()),
    )?;
    if !out.converged {
        log::warn!(
            "conditional logit did not converge after {} iterations (max |gradient| {:.3e})",
            out.iterations,
            max_abs(&out.derivs.grad)
        );
    }
    let se = standard_errors(&out.derivs.hessian())?;
    Ok(FitResult {
        model: ModelKind::Mnl,
        feature_names: feature_names.to_vec(),
        p_values: z_p_values(&out.beta, &se),
        coefficients: out.beta,
        std_errors: se,
        loglik: out.derivs.ll,
        ols: None,
        n_obs: instances.len(),
        n_params: p,
        converged: out.converged,
        iterations: out.iterations,
        gradient_max_abs: max_abs(&out.derivs.grad),
    })
}

fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn logistic_rows(design: &Design, y: &[f64]) -> Vec<(usize, f64)> {
    (0..design.n_rows).zip(y.iter().copied()).collect()
}

fn logistic_derivs(beta: &[f64], design: &Design, rows: &[(usize, f64)]) -> Derivs {
    let p = beta.len();
    reduce(
        rows,
        || Derivs::zero(p),
        |acc, &(i, yi)| {
            let x = design.row(i);
            let eta = dot(x, beta);
            acc.ll += yi * eta - softplus(eta);
            let mu = sigmoid(eta);
            let w = mu * (1.0 - mu);
            for a in 0..p {
                acc.grad[a] += (yi - mu) * x[a];
                if x[a] == 0.0 {
                    continue;
                }
                for b in 0..p {
                    acc.hess[a * p + b] -= w * x[a] * x[b];
                }
            }
        },
        Derivs::add,
    )
}

fn logistic_loglik(beta: &[f64], design: &Design, rows: &[(usize, f64)]) -> f64 {
    reduce(
        rows,
        || 0.0,
        |acc, &(i, yi)| {
            let eta = dot(design.row(i), beta);
            *acc += yi * eta - softplus(eta);
        },
        |a, b| *a += b,
    )
}

/// Column scales for the separation check: the standard deviation of each
/// non-constant column, 1 for constant ones.
fn column_scales(design: &Design) -> Vec<f64> {
    let n = design.n_rows as f64;
    (0..design.n_cols())
        .map(|j| {
            let col = design.column(j);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect()
}

/// Logistic regression by Newton–Raphson (IRLS) from β = 0.
pub fn logistic_fit(design: &Design, y: &[f64], tol: f64, max_iter: usize) -> Result<FitResult> {
    if y.len() != design.n_rows {
        return Err(Error::Invalid(format!("{} outcomes for {} design rows", y.len(), design.n_rows)));
    }
    if design.n_rows == 0 || design.n_cols() == 0 {
        return Err(Error::Invalid("logistic fit needs a non-empty design".into()));
    }
    if let Some(v) = y.iter().find(|v| **v != 0.0 && **v != 1.0) {
        return Err(Error::Invalid(format!("binary outcome expected, found {v}")));
    }
    let rows = logistic_rows(design, y);
    let scales = column_scales(design);
    let std_norm = |b: &[f64]| b.iter().zip(&scales).map(|(b, s)| (b * s).powi(2)).sum::<f64>().sqrt();
    let out = newton(
        design.n_cols(),
        tol,
        max_iter,
        |b| logistic_derivs(b, design, &rows),
        |b| logistic_loglik(b, design, &rows),
        |b, failing| {
            let norm = std_norm(b);
            if norm > SEPARATION_NORM || (failing && norm > SEPARATION_NORM / 3.0) {
                Err(Error::Separation { norm })
            } else {
                Ok(())
            }
        },
    )?;
    let se = standard_errors(&out.derivs.hessian()).map_err(|e| {
        let norm = std_norm(&out.beta);
        if norm > SEPARATION_NORM / 3.0 {
            Error::Separation { norm }
        } else {
            e
        }
    })?;
    Ok(FitResult {
        model: ModelKind::Logistic,
        feature_names: design.names.clone(),
        p_values: z_p_values(&out.beta, &se),
        coefficients: out.beta,
        std_errors: se,
        loglik: out.derivs.ll,
        ols: None,
        n_obs: design.n_rows,
        n_params: design.n_cols(),
        converged: out.converged,
        iterations: out.iterations,
        gradient_max_abs: max_abs(&out.derivs.grad),
    })
}

/// Columns that lie in the span of earlier columns.
fn dependent_columns(x: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let mut kept: Vec<usize> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j);
        let norm = col.norm();
        let independent = if norm == 0.0 {
            false
        } else if kept.is_empty() {
            true
        } else {
            let basis = x.select_columns(&kept);
            let qr = basis.qr();
            let q = qr.q();
            let resid = col - &q * (q.transpose() * col);
            resid.norm() > 1e-9 * norm
        };
        if independent {
            kept.push(j);
        } else {
            dependent.push(names[j].clone());
        }
    }
    dependent
}

/// Least squares via Householder QR.
pub fn ols_fit(design: &Design, y: &[f64]) -> Result<FitResult> {
    let (n, p) = (design.n_rows, design.n_cols());
    if y.len() != n {
        return Err(Error::Invalid(format!("{} outcomes for {n} design rows", y.len())));
    }
    if p == 0 || n <= p {
        return Err(Error::Invalid(format!("OLS needs more rows ({n}) than columns ({p})")));
    }
    let x = DMatrix::from_row_slice(n, p, &design.data);
    let yv = DVector::from_column_slice(y);
    let qr = x.clone().qr();
    let r = qr.r();
    let rmax = r.diagonal().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if r.diagonal().iter().any(|v| v.abs() <= 1e-10 * rmax) {
        return Err(Error::RankDeficient(dependent_columns(&x, &design.names)));
    }
    let q = qr.q();
    let qty = q.transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient(dependent_columns(&x, &design.names)))?;
    let resid = &yv - &x * &beta;
    let rss = resid.norm_squared();
    let df_resid = n - p;
    let sigma2 = rss / df_resid as f64;
    let rinv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::RankDeficient(dependent_columns(&x, &design.names)))?;
    let cov = &rinv * rinv.transpose() * sigma2;
    let se: Vec<f64> = (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let has_const = (0..p).any(|j| {
        let c = x.column(j);
        c[0] != 0.0 && c.iter().all(|v| *v == c[0])
    });
    let tss = if has_const {
        let mean = yv.mean();
        yv.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
    } else {
        yv.norm_squared()
    };
    let df_model = if has_const { p - 1 } else { p };
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    let f_statistic = if df_model > 0 && rss > 0.0 {
        ((tss - rss) / df_model as f64) / sigma2
    } else {
        f64::NAN
    };
    let nf = n as f64;
    let loglik = if rss > 0.0 {
        -0.5 * nf * ((2.0 * std::f64::consts::PI).ln() + (rss / nf).ln() + 1.0)
    } else {
        f64::INFINITY
    };
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let p_values = coefficients
        .iter()
        .zip(&se)
        .map(|(b, s)| if *s > 0.0 { t_two_sided(b / s, df_resid as f64) } else { f64::NAN })
        .collect();
    Ok(FitResult {
        model: ModelKind::Ols,
        feature_names: design.names.clone(),
        coefficients,
        std_errors: se,
        p_values,
        loglik,
        ols: Some(OlsSummary {
            rss,
            sigma2,
            r_squared,
            f_statistic,
            df_model,
            df_resid,
        }),
        n_obs: n,
        n_params: p,
        converged: true,
        iterations: 1,
        gradient_max_abs: max_abs((x.transpose() * resid).as_slice()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df_num: usize,
    /// Denominator degrees of freedom; present for F tests.
    pub df_den: Option<usize>,
    pub p_value: f64,
}

fn check_nested(full: &FitResult, reduced: &FitResult) -> Result<usize> {
    if full.n_obs != reduced.n_obs {
        return Err(Error::NotNested(format!(
            "models fitted on {} and {} observations",
            full.n_obs, reduced.n_obs
        )));
    }
    if let Some(missing) = reduced.feature_names.iter().find(|n| !full.feature_names.contains(n)) {
        return Err(Error::NotNested(format!("reduced-model column `{missing}` is absent from the full model")));
    }
    Ok(full.n_params - reduced.n_params)
}

/// Nested-model F test between two OLS fits.
pub fn f_test_nested(full: &FitResult, reduced: &FitResult) -> Result<TestResult> {
    let (Some(f), Some(r), ModelKind::Ols, ModelKind::Ols) = (&full.ols, &reduced.ols, full.model, reduced.model) else {
        return Err(Error::Invalid("F test needs two OLS fits".into()));
    };
    let ddf = check_nested(full, reduced)?;
    if f.rss > r.rss * (1.0 + 1e-12) + f64::MIN_POSITIVE {
        return Err(Error::NotNested(format!(
            "full-model RSS {} exceeds reduced-model RSS {}",
            f.rss, r.rss
        )));
    }
    if ddf == 0 {
        return Ok(TestResult {
            statistic: 0.0,
            df_num: 0,
            df_den: Some(f.df_resid),
            p_value: 1.0,
        });
    }
    let stat = (((r.rss - f.rss).max(0.0)) / ddf as f64) / (f.rss / f.df_resid as f64);
    Ok(TestResult {
        statistic: stat,
        df_num: ddf,
        df_den: Some(f.df_resid),
        p_value: f_sf(stat, ddf as f64, f.df_resid as f64),
    })
}

/// Likelihood-ratio test between two nested likelihood fits.
pub fn lr_test_nested(full: &FitResult, reduced: &FitResult) -> Result<TestResult> {
    if full.model != reduced.model || full.model == ModelKind::Ols {
        return Err(Error::Invalid("LR test needs two logistic or two conditional-logit fits".into()));
    }
    let ddf = check_nested(full, reduced)?;
    let tol = 1e-9 * reduced.loglik.abs().max(1.0);
    if full.loglik < reduced.loglik - tol {
        return Err(Error::NotNested(format!(
            "full-model log-likelihood {} is below reduced {}",
            full.loglik, reduced.loglik
        )));
    }
    if ddf == 0 {
        return Ok(TestResult {
            statistic: 0.0,
            df_num: 0,
            df_den: None,
            p_value: 1.0,
        });
    }
    let stat = (2.0 * (full.loglik - reduced.loglik)).max(0.0);
    Ok(TestResult {
        statistic: stat,
        df_num: ddf,
        df_den: None,
        p_value: chi2_sf(stat, ddf as f64),
    })
}

pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// Aligned coefficient table: estimate, std. error, test statistic, p, stars.
pub fn coefficient_table(fit: &FitResult) -> String {
    let stat_label = if fit.model == ModelKind::Ols { "t value" } else { "z value" };
    let p_label = if fit.model == ModelKind::Ols { "Pr(>|t|)" } else { "Pr(>|z|)" };
    let width = fit.feature_names.iter().map(String::len).max().unwrap_or(0).max(4);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>12}  {:>12}  {:>9}  {:>10}", "", "Estimate", "Std. Error", stat_label, p_label);
    for j in 0..fit.n_params {
        let (b, s, p) = (fit.coefficients[j], fit.std_errors[j], fit.p_values[j]);
        let _ = writeln!(
            out,
            "{:<width$}  {:>12.4}  {:>12.4}  {:>9.3}  {:>10.3e} {}",
            fit.feature_names[j],
            b,
            s,
            b / s,
            p,
            significance_stars(p)
        );
    }
    let _ = writeln!(out, "---");
    let _ = writeln!(out, "Signif. codes: 0 '***' 0.001 '**' 0.01 '*' 0.05");
    match &fit.ols {
        Some(o) => {
            let _ = writeln!(
                out,
                "n = {}, R-squared = {:.4}, F = {:.3} on {} and {} DF",
                fit.n_obs, o.r_squared, o.f_statistic, o.df_model, o.df_resid
            );
        }
        None => {
            let _ = writeln!(
                out,
                "n = {}, log-likelihood = {:.4}, converged = {} ({} iterations)",
                fit.n_obs, fit.loglik, fit.converged, fit.iterations
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(chosen_first: bool) -> ChoiceInstance {
        ChoiceInstance::from_rows(if chosen_first { 0 } else { 1 }, &[vec![1.0], vec![0.0]]).unwrap()
    }

    #[test]
    fn loglik_simple_values() {
        let zero = ChoiceInstance::from_rows(0, &[vec![1.0], vec![2.0]]).unwrap();
        let ll = mnl_loglik(&[0.0], &[zero.clone(), zero]).unwrap();
        assert!((ll + 2.0 * 2f64.ln()).abs() < 1e-14);
        let ll = mnl_loglik(&[3f64.ln()], &[pair(true)]).unwrap();
        assert!((ll - 0.75f64.ln()).abs() < 1e-14);
        assert!(mnl_loglik(&[0.0, 1.0], &[pair(true)]).is_err());
    }

    #[test]
    fn gradient_zero_for_identical_rows() {
        let inst = ChoiceInstance::from_rows(1, &[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!(mnl_gradient(&[0.0, 0.0], &[inst]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn closed_form_mle() {
        let data = vec![pair(true), pair(true), pair(true), pair(false)];
        let fit = mnl_fit(&data, &["x".into()], DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(fit.converged);
        assert!(fit.iterations <= 10);
        assert!((fit.coefficients[0] - 3f64.ln()).abs() < 1e-9);
        // information = n p (1-p) = 4 * 3/16
        assert!((fit.std_errors[0] - (1.0 / 0.75f64).sqrt()).abs() < 1e-9);

        let doubled: Vec<_> = data.iter().chain(&data).cloned().collect();
        let fit2 = mnl_fit(&doubled, &["x".into()], DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!((fit2.coefficients[0] - fit.coefficients[0]).abs() < 1e-9);
        assert!((fit.std_errors[0] / fit2.std_errors[0] - 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn unidentified_feature_named() {
        let inst = ChoiceInstance::from_rows(0, &[vec![1.0, 5.0], vec![0.0, 5.0]]).unwrap();
        let err = mnl_fit(&[inst], &["a".into(), "flat".into()], DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap_err();
        assert!(matches!(err, Error::Unidentified(ref n) if n == "flat"));
    }

    #[test]
    fn accuracy_rules() {
        assert_eq!(mnl_accuracy(&[1.0], &[pair(true)]).unwrap(), 1.0);
        assert_eq!(mnl_accuracy(&[0.0], &[pair(true), pair(false)]).unwrap(), 0.0);
        let three = vec![
            ChoiceInstance::from_rows(0, &[vec![2.0], vec![1.0], vec![0.0]]).unwrap(),
            ChoiceInstance::from_rows(2, &[vec![0.0], vec![1.0], vec![3.0]]).unwrap(),
            ChoiceInstance::from_rows(1, &[vec![5.0], vec![1.0], vec![0.0]]).unwrap(),
        ];
        assert!((mnl_accuracy(&[1.0], &three).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn odds_ratios() {
        assert_eq!(odds_ratio(0.0), 1.0);
        assert!((odds_ratio(2f64.ln()) - 2.0).abs() < 1e-15);
        assert!((odds_ratio(2.723) - 15.225931591501572).abs() < 1e-9);
    }

    #[test]
    fn logistic_intercept_only_balanced() {
        let d = Design::from_rows(&vec![vec![1.0]; 10], Some(vec!["(Intercept)".into()])).unwrap();
        let y: Vec<f64> = (0..10).map(|i| (i % 2) as f64).collect();
        let fit = logistic_fit(&d, &y, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(fit.converged);
        assert!(fit.coefficients[0].abs() < 1e-12);
    }

    #[test]
    fn logistic_separation() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![1.0, i as f64 - 19.5]).collect();
        let y: Vec<f64> = rows.iter().map(|r| if r[1] > 0.0 { 1.0 } else { 0.0 }).collect();
        let d = Design::from_rows(&rows, None).unwrap();
        assert!(matches!(logistic_fit(&d, &y, DEFAULT_TOL, DEFAULT_MAX_ITER), Err(Error::Separation { .. })));
    }

    #[test]
    fn ols_exact_and_intercept_only() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0, i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 3.0 + 2.0 * i as f64).collect();
        let d = Design::from_rows(&rows, None).unwrap();
        let fit = ols_fit(&d, &y).unwrap();
        let s = fit.ols.as_ref().unwrap();
        assert!(s.rss < 1e-20);
        assert!((s.r_squared - 1.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);

        let ones = Design::from_rows(&vec![vec![1.0]; 5], None).unwrap();
        let fit = ols_fit(&ones, &[1.0, 2.0, 3.0, 4.0, 10.0]).unwrap();
        assert!((fit.coefficients[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn ols_rank_deficiency_names_column() {
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![1.0, i as f64, 2.0 * i as f64 + 1.0]).collect();
        let d = Design::from_rows(&rows, Some(vec!["c".into(), "a".into(), "b".into()])).unwrap();
        let y: Vec<f64> = (0..8).map(|i| i as f64 * 0.3).collect();
        match ols_fit(&d, &y) {
            Err(Error::RankDeficient(cols)) => assert_eq!(cols, vec!["b".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn timing_model_prediction_arithmetic() {
        // intercept + role=P + (slope + interaction) * months
        let pred: f64 = -6.2153 - 0.8250 + (0.9348 - 0.0195) * 10.0;
        assert!((pred - 2.1127).abs() < 1e-9);
    }

    #[test]
    fn nested_tests_identical_models() {
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![1.0, (i * i % 7) as f64]).collect();
        let y: Vec<f64> = (0..12).map(|i| (i % 5) as f64).collect();
        let d = Design::from_rows(&rows, None).unwrap();
        let f = ols_fit(&d, &y).unwrap();
        let t = f_test_nested(&f, &f).unwrap();
        assert_eq!((t.statistic, t.p_value), (0.0, 1.0));
        let mut l = f.clone();
        l.model = ModelKind::Logistic;
        let t = lr_test_nested(&l, &l).unwrap();
        assert_eq!((t.statistic, t.p_value), (0.0, 1.0));
        assert!(f_test_nested(&l, &l).is_err());
    }

    #[test]
    fn lr_p_value_at_chi2_quantile() {
        let mut full = FitResult {
            model: ModelKind::Logistic,
            feature_names: vec!["a".into(), "b".into()],
            coefficients: vec![0.0; 2],
            std_errors: vec![1.0; 2],
            p_values: vec![1.0; 2],
            loglik: -100.0 + 3.841 / 2.0,
            ols: None,
            n_obs: 50,
            n_params: 2,
            converged: true,
            iterations: 1,
            gradient_max_abs: 0.0,
        };
        let mut reduced = full.clone();
        reduced.feature_names.pop();
        reduced.n_params = 1;
        reduced.loglik = -100.0;
        let t = lr_test_nested(&full, &reduced).unwrap();
        assert!((t.statistic - 3.841).abs() < 1e-12);
        assert!((t.p_value - 0.05).abs() < 1e-4);
        full.feature_names = vec!["x".into(), "y".into()];
        assert!(lr_test_nested(&full, &reduced).is_err());
    }

    #[test]
    fn stars() {
        assert_eq!(significance_stars(0.0009), "***");
        assert_eq!(significance_stars(0.001), "**");
        assert_eq!(significance_stars(0.01), "*");
        assert_eq!(significance_stars(0.05), "");
    }
}
