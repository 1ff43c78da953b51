// Copyright 2026 The iobalance Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Ordinary least squares with the diagnostics used for term selection:
//! R², adjusted R², standard errors, t statistics, two-sided p-values and
//! backward elimination of insignificant terms.
//!
//! Fitting goes through a Householder QR factorization of the column-scaled
//! design matrix. A design whose columns are linearly dependent is reported
//! as [`Error::Singular`]; there is no pseudo-inverse fallback.

mod student_t;

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use student_t::{ln_gamma, regularized_incomplete_beta, t_cdf, two_sided_p_value};

/// Ratio of |R_ii| to the largest |R_jj| below which a column is treated as
/// dependent on the preceding ones.
const RANK_TOLERANCE: f64 = 1e-10;

/// Residual norms at or below this fraction of ‖y‖ are exact fits.
const EXACT_FIT_TOLERANCE: f64 = 1e-9;

/// In an exact fit, a term whose contribution ‖β_j·x_j‖ is below this
/// fraction of ‖y‖ carries no signal.
const NEGLIGIBLE_CONTRIBUTION: f64 = 1e-8;

/// Significance level used for term elimination unless overridden.
pub const DEFAULT_ALPHA: f64 = 0.05;

/// One column of a design matrix, built from the feature columns of a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    Intercept,
    Linear(usize),
    Interaction(usize, usize),
    Squared(usize),
}

impl Term {
    fn normalized(self) -> Term {
        match self {
            Term::Interaction(a, b) if a > b => Term::Interaction(b, a),
            Term::Interaction(a, b) if a == b => Term::Squared(a),
            t => t,
        }
    }

    fn max_feature(&self) -> Option<usize> {
        match *self {
            Term::Intercept => None,
            Term::Linear(a) | Term::Squared(a) => Some(a),
            Term::Interaction(a, b) => Some(a.max(b)),
        }
    }

    pub fn eval(&self, row: &[f64]) -> f64 {
        match *self {
            Term::Intercept => 1.0,
            Term::Linear(a) => row[a],
            Term::Interaction(a, b) => row[a] * row[b],
            Term::Squared(a) => row[a] * row[a],
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Intercept => f.write_str("intercept"),
            Term::Linear(a) => write!(f, "x{a}"),
            Term::Interaction(a, b) => write!(f, "x{a}:x{b}"),
            Term::Squared(a) => write!(f, "x{a}^2"),
        }
    }
}

/// Ordered list of distinct terms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignSpec {
    terms: Vec<Term>,
}

impl DesignSpec {
    pub fn new(terms: impl IntoIterator<Item = Term>) -> Result<Self> {
        let mut out: Vec<Term> = Vec::new();
        for t in terms {
            let t = t.normalized();
            if out.contains(&t) {
                return Err(Error::InvalidValue(format!("duplicate design term {t}")));
            }
            out.push(t);
        }
        if out.is_empty() {
            return Err(Error::InvalidValue("design has no terms".into()));
        }
        Ok(DesignSpec { terms: out })
    }

    /// Intercept plus one linear term per feature.
    pub fn linear(features: usize) -> Self {
        let terms = std::iter::once(Term::Intercept).chain((0..features).map(Term::Linear));
        DesignSpec::new(terms).expect("distinct by construction")
    }

    /// Intercept, linear terms, all pairwise interactions and squares.
    pub fn quadratic(features: usize) -> Self {
        let mut terms = vec![Term::Intercept];
        terms.extend((0..features).map(Term::Linear));
        for a in 0..features {
            for b in a + 1..features {
                terms.push(Term::Interaction(a, b));
            }
        }
        terms.extend((0..features).map(Term::Squared));
        DesignSpec::new(terms).expect("distinct by construction")
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn has_intercept(&self) -> bool {
        self.terms.contains(&Term::Intercept)
    }

    pub fn position(&self, term: Term) -> Option<usize> {
        let term = term.normalized();
        self.terms.iter().position(|t| *t == term)
    }

    /// The design with one term dropped.
    pub fn without(&self, term: Term) -> Result<Self> {
        let term = term.normalized();
        DesignSpec::new(self.terms.iter().copied().filter(|t| *t != term))
    }

    fn matrix(&self, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let needed = self.terms.iter().filter_map(Term::max_feature).max();
        for (i, row) in rows.iter().enumerate() {
            if let Some(max) = needed {
                if row.len() <= max {
                    return Err(Error::InvalidValue(format!(
                        "row {i} has {} features, design needs {}",
                        row.len(),
                        max + 1
                    )));
                }
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidValue(format!("row {i} has a non-finite feature")));
            }
        }
        Ok(DMatrix::from_fn(rows.len(), self.terms.len(), |r, c| {
            self.terms[c].eval(&rows[r])
        }))
    }
}

/// Result of an OLS fit. Per-term vectors follow the order of `terms`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub terms: Vec<Term>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r_squared: f64,
    pub adjusted_r_squared: f64,
    /// Residual standard deviation, sqrt(SSE / (n − terms)).
    pub residual_sigma: f64,
    pub n_observations: usize,
    pub n_terms: usize,
    /// The residuals vanish to rounding; p-values are then 0 or 1 depending
    /// on whether a term contributes to the fitted values at all.
    pub exact_fit: bool,
}

impl FitDiagnostics {
    /// Coefficient of `term`, 0 when the term is not in the fit.
    pub fn coefficient(&self, term: Term) -> f64 {
        let term = term.normalized();
        self.terms
            .iter()
            .position(|t| *t == term)
            .map_or(0.0, |i| self.coefficients[i])
    }

    pub fn p_value(&self, term: Term) -> Option<f64> {
        let term = term.normalized();
        self.terms.iter().position(|t| *t == term).map(|i| self.p_values[i])
    }

    pub fn residual_dof(&self) -> usize {
        self.n_observations - self.n_terms
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.terms
            .iter()
            .zip(&self.coefficients)
            .map(|(t, c)| c * t.eval(row))
            .sum()
    }
}

/// Least-squares fit of `response` on the columns described by `design`.
pub fn fit_ols(design: &DesignSpec, rows: &[Vec<f64>], response: &[f64]) -> Result<FitDiagnostics> {
    let n = rows.len();
    let p = design.len();
    if response.len() != n {
        return Err(Error::InvalidValue(format!(
            "{n} rows but {} responses",
            response.len()
        )));
    }
    if n <= p {
        return Err(Error::TooFewRows { rows: n, terms: p });
    }
    if response.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidValue("response has a non-finite value".into()));
    }

    let x = design.matrix(rows)?;
    let y = DVector::from_column_slice(response);

    // Unit-norm columns keep the rank test and the triangular solve
    // independent of feature scale.
    let norms: Vec<f64> = x.column_iter().map(|c| c.norm()).collect();
    if let Some(column) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::Singular { column });
    }
    let mut xs = x.clone();
    for (j, mut col) in xs.column_iter_mut().enumerate() {
        col /= norms[j];
    }

    let qr = xs.clone().qr();
    let r = qr.r();
    let q = qr.q();
    let max_diag = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if let Some(column) = (0..p).find(|&i| r[(i, i)].abs() <= RANK_TOLERANCE * max_diag) {
        return Err(Error::Singular { column });
    }

    let solve = |rhs: &DVector<f64>| -> DVector<f64> {
        let qty = q.transpose() * rhs;
        r.solve_upper_triangular(&qty)
            .expect("diagonal checked nonzero")
    };
    let mut beta_scaled = solve(&y);
    // one step of iterative refinement
    let resid = &y - &xs * &beta_scaled;
    beta_scaled += solve(&resid);

    let coefficients: Vec<f64> = beta_scaled
        .iter()
        .zip(&norms)
        .map(|(b, s)| b / s)
        .collect();
    let beta = DVector::from_column_slice(&coefficients);
    let residuals = &y - &x * &beta;
    let sse = residuals.norm_squared();
    let mean = y.mean();
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let y_norm = y.norm();

    let dof = n - p;
    let sigma2 = sse / dof as f64;
    let residual_sigma = sigma2.sqrt();

    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or(Error::Singular { column: p - 1 })?;
    let std_errors: Vec<f64> = (0..p)
        .map(|j| {
            let diag: f64 = r_inv.row(j).iter().map(|v| v * v).sum();
            residual_sigma * diag.sqrt() / norms[j]
        })
        .collect();

    let exact_fit = sse.sqrt() <= EXACT_FIT_TOLERANCE * y_norm;
    let mut t_stats = Vec::with_capacity(p);
    let mut p_values = Vec::with_capacity(p);
    for j in 0..p {
        if exact_fit {
            let contribution = coefficients[j].abs() * norms[j];
            if contribution <= NEGLIGIBLE_CONTRIBUTION * y_norm {
                t_stats.push(0.0);
                p_values.push(1.0);
            } else {
                t_stats.push(coefficients[j].signum() * f64::INFINITY);
                p_values.push(0.0);
            }
        } else {
            let t = coefficients[j] / std_errors[j];
            t_stats.push(t);
            p_values.push(two_sided_p_value(t, dof as u32)?);
        }
    }

    let r_squared = if sst > 0.0 {
        (1.0 - sse / sst).clamp(0.0, 1.0)
    } else if exact_fit {
        1.0
    } else {
        0.0
    };
    let adjusted_r_squared = 1.0 - (1.0 - r_squared) * (n - 1) as f64 / dof as f64;

    Ok(FitDiagnostics {
        terms: design.terms().to_vec(),
        coefficients,
        std_errors,
        t_stats,
        p_values,
        r_squared,
        adjusted_r_squared,
        residual_sigma,
        n_observations: n,
        n_terms: p,
        exact_fit,
    })
}

/// Knobs for [`eliminate_insignificant`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EliminationOptions {
    pub alpha: f64,
    /// Whether the intercept may be dropped like any other term.
    pub allow_intercept: bool,
}

impl Default for EliminationOptions {
    fn default() -> Self {
        EliminationOptions {
            alpha: DEFAULT_ALPHA,
            allow_intercept: false,
        }
    }
}

/// Outcome of backward elimination.
#[derive(Debug, Clone, PartialEq)]
pub struct Elimination {
    pub design: DesignSpec,
    pub fit: FitDiagnostics,
    /// Terms dropped, in removal order. Their coefficients read as 0 through
    /// [`FitDiagnostics::coefficient`].
    pub removed: Vec<Term>,
}

/// Backward elimination: drop the single least significant removable term
/// with p > alpha, refit, repeat until every remaining term is significant
/// or one term is left.
pub fn eliminate_insignificant(
    fit: FitDiagnostics,
    design: DesignSpec,
    rows: &[Vec<f64>],
    response: &[f64],
    options: EliminationOptions,
) -> Result<Elimination> {
    if !(options.alpha > 0.0 && options.alpha < 1.0) {
        return Err(Error::InvalidValue(format!(
            "significance level {} is outside (0, 1)",
            options.alpha
        )));
    }
    let mut design = design;
    let mut fit = fit;
    let mut removed = Vec::new();
    while design.len() > 1 {
        // highest p first; ties go to the later term
        let worst = design
            .terms()
            .iter()
            .enumerate()
            .filter(|(_, t)| options.allow_intercept || **t != Term::Intercept)
            .map(|(i, t)| (i, *t, fit.p_values[i]))
            .filter(|&(_, _, p)| p > options.alpha)
            .max_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
        let Some((_, term, _)) = worst else { break };
        design = design.without(term)?;
        fit = fit_ols(&design, rows, response)?;
        removed.push(term);
    }
    Ok(Elimination {
        design,
        fit,
        removed,
    })
}
