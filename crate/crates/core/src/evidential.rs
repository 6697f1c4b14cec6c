//! Closed-form evidential maths.
//!
//! Regression heads emit Normal-Inverse-Gamma parameters `(x̂, v, α, β)` per
//! output feature; the marginal likelihood of a target is a Student-t with
//! `2α` degrees of freedom. Classification heads emit Dirichlet
//! concentrations `α = evidence + 1`.

use statrs::function::gamma::{digamma, ln_gamma};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NigParams {
    pub x_hat: f64,
    pub v: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl NigParams {
    pub fn new(x_hat: f64, v: f64, alpha: f64, beta: f64) -> Result<Self> {
        let p = Self { x_hat, v, alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_hat, self.v, self.alpha, self.beta].iter().all(|x| x.is_finite());
        if !finite || self.v <= 0.0 || self.alpha <= 1.0 || self.beta <= 0.0 {
            return Err(Error::Numeric(format!(
                "invalid NIG parameters (x̂={}, v={}, α={}, β={})",
                self.x_hat, self.v, self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// Partial derivatives with respect to `(x̂, v, α, β)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NigGrad {
    pub x_hat: f64,
    pub v: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyPair {
    pub aleatoric: f64,
    pub epistemic: f64,
}

/// Log density of `St(x; x̂, β(1+v)/(vα), 2α)`.
pub fn studentt_logpdf(x: f64, p: &NigParams) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Numeric(format!("non-finite target {x}")));
    }
    p.validate()?;
    Ok(-student_nll(x, p))
}

// 0.5 ln(π/v) − α ln Ω + (α+½) ln(v r² + Ω) + lnΓ(α) − lnΓ(α+½), Ω = 2β(1+v)
fn student_nll(x: f64, p: &NigParams) -> f64 {
    let omega = 2.0 * p.beta * (1.0 + p.v);
    let r = x - p.x_hat;
    0.5 * (std::f64::consts::PI / p.v).ln() - p.alpha * omega.ln()
        + (p.alpha + 0.5) * (p.v * r * r + omega).ln()
        + ln_gamma(p.alpha)
        - ln_gamma(p.alpha + 0.5)
}

fn student_nll_grad(x: f64, p: &NigParams) -> NigGrad {
    let omega = 2.0 * p.beta * (1.0 + p.v);
    let r = x - p.x_hat;
    let denom = p.v * r * r + omega;
    let a_half = p.alpha + 0.5;
    NigGrad {
        x_hat: -2.0 * a_half * p.v * r / denom,
        v: -0.5 / p.v - p.alpha * 2.0 * p.beta / omega + a_half * (r * r + 2.0 * p.beta) / denom,
        alpha: -omega.ln() + denom.ln() + digamma(p.alpha) - digamma(a_half),
        beta: -p.alpha / p.beta + a_half * 2.0 * (1.0 + p.v) / denom,
    }
}

/// Evidential regression loss: Student-t negative log-likelihood plus
/// `λ·|x − x̂|·(2v + α)`, with its analytic gradient. The subgradient of
/// `|x − x̂|` at zero is taken as zero.
pub fn regression_loss(x: f64, p: &NigParams, lambda: f64) -> Result<(f64, NigGrad)> {
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
    }
    if !x.is_finite() {
        return Err(Error::Numeric(format!("non-finite target {x}")));
    }
    p.validate()?;
    Ok(regression_loss_unchecked(x, p, lambda))
}

pub(crate) fn regression_loss_unchecked(x: f64, p: &NigParams, lambda: f64) -> (f64, NigGrad) {
    let r = x - p.x_hat;
    let evidence = 2.0 * p.v + p.alpha;
    let loss = student_nll(x, p) + lambda * r.abs() * evidence;
    let mut g = student_nll_grad(x, p);
    let sign = if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    };
    g.x_hat -= lambda * sign * evidence;
    g.v += 2.0 * lambda * r.abs();
    g.alpha += lambda * r.abs();
    (loss, g)
}

/// Epistemic `β / (v(α−1))` and aleatoric `β / (α−1)` variances.
pub fn nig_uncertainties(p: &NigParams) -> UncertaintyPair {
    let aleatoric = p.beta / (p.alpha - 1.0);
    UncertaintyPair {
        aleatoric,
        epistemic: aleatoric / p.v,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams {
    alpha: Vec<f64>,
}

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::Numeric(format!("need at least 2 classes, got {}", alpha.len())));
        }
        if alpha.iter().any(|a| !a.is_finite() || *a < 1.0) {
            return Err(Error::Numeric(format!("Dirichlet concentrations must be >= 1: {alpha:?}")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn classes(&self) -> usize {
        self.alpha.len()
    }

    pub fn strength(&self) -> f64 {
        self.alpha.iter().sum()
    }
}

/// Expected class probabilities `α_c / S`.
pub fn dirichlet_probs(d: &DirichletParams) -> Vec<f64> {
    let s = d.strength();
    d.alpha.iter().map(|a| a / s).collect()
}

/// Uncertainty mass `K / S`.
pub fn dirichlet_uncertainty(d: &DirichletParams) -> f64 {
    d.classes() as f64 / d.strength()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SquaredErrorForm {
    /// Sum of squares expected under the Dirichlet: bias plus variance terms.
    #[default]
    Expected,
    /// Squared error of the mean probabilities only.
    Plain,
}

/// Sum-of-squares classification loss and its gradient with respect to `α`.
pub fn classification_loss(y: &[f64], d: &DirichletParams, form: SquaredErrorForm) -> Result<(f64, Vec<f64>)> {
    if y.len() != d.classes() {
        return Err(Error::Shape(format!("target has {} classes, Dirichlet has {}", y.len(), d.classes())));
    }
    Ok(classification_loss_unchecked(y, &d.alpha, form))
}

pub(crate) fn classification_loss_unchecked(y: &[f64], alpha: &[f64], form: SquaredErrorForm) -> (f64, Vec<f64>) {
    let s: f64 = alpha.iter().sum();
    let p: Vec<f64> = alpha.iter().map(|a| a / s).collect();
    let sum_p_sq: f64 = p.iter().map(|q| q * q).sum();
    let bias: f64 = y.iter().zip(&p).map(|(yc, pc)| (yc - pc).powi(2)).sum();

    // dL/dp_c holding S fixed, then chain through p_c = α_c / S
    let (loss, dl_dp, dl_ds_direct) = match form {
        SquaredErrorForm::Expected => {
            let var = (1.0 - sum_p_sq) / (s + 1.0);
            let dl_dp: Vec<f64> = y
                .iter()
                .zip(&p)
                .map(|(yc, pc)| -2.0 * (yc - pc) - 2.0 * pc / (s + 1.0))
                .collect();
            (bias + var, dl_dp, -(1.0 - sum_p_sq) / (s + 1.0).powi(2))
        }
        SquaredErrorForm::Plain => {
            let dl_dp: Vec<f64> = y.iter().zip(&p).map(|(yc, pc)| -2.0 * (yc - pc)).collect();
            (bias, dl_dp, 0.0)
        }
    };
    let weighted: f64 = dl_dp.iter().zip(&p).map(|(g, pc)| g * pc).sum();
    let grad = dl_dp.iter().map(|g| (g - weighted) / s + dl_ds_direct).collect();
    (loss, grad)
}
