use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Below this magnitude the relative error is measured against the floor
/// instead of the gradient itself.
pub const DENOM_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(tensor index, flat coordinate)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(DENOM_FLOOR)
}

/// Compares reverse-mode gradients of a scalar function against central
/// differences, coordinate by coordinate.
pub fn grad_check<F>(theta: &[Tensor], f: F, eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&Tape<'_>, &[Var]) -> Result<Var>,
{
    let mut reports = grad_check_terms(theta, |tape, vars| Ok(vec![f(tape, vars)?]), eps, tol)?;
    Ok(reports.remove(0))
}

/// [`grad_check`] for a function with several scalar outputs. Every output is
/// checked against the same finite-difference sweep; one report per output.
pub fn grad_check_terms<F>(theta: &[Tensor], f: F, eps: f64, tol: f64) -> Result<Vec<GradCheckReport>>
where
    F: Fn(&Tape<'_>, &[Var]) -> Result<Vec<Var>>,
{
    let analytic: Vec<Vec<Vec<f64>>> = {
        let tape = Tape::with_grad();
        let vars: Vec<Var> = theta.iter().map(|t| tape.param(t)).collect();
        let outs = f(&tape, &vars)?;
        let mut per_term = Vec::with_capacity(outs.len());
        for &o in &outs {
            let g = tape.backward(o)?;
            per_term.push(
                vars.iter()
                    .zip(theta)
                    .map(|(&v, t)| g.get_or_zeros(v, t.numel()))
                    .collect(),
            );
        }
        per_term
    };

    let eval = |point: &[Tensor], ti: usize, ci: usize| -> Result<Vec<f64>> {
        let tape = Tape::inference();
        let vars: Vec<Var> = point.iter().map(|t| tape.param(t)).collect();
        let outs = f(&tape, &vars)?;
        let vals: Vec<f64> = outs.iter().map(|&o| tape.value(o).item()).collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "function value at tensor {ti}, coordinate {ci}"
            )));
        }
        Ok(vals)
    };

    let terms = analytic.len();
    let mut reports = vec![
        GradCheckReport {
            max_rel_error: 0.0,
            worst: None,
            checked: 0,
            tol,
        };
        terms
    ];
    let mut point = theta.to_vec();
    for ti in 0..theta.len() {
        for ci in 0..theta[ti].numel() {
            let orig = point[ti].data()[ci];
            point[ti].data_mut()[ci] = orig + eps;
            let plus = eval(&point, ti, ci)?;
            point[ti].data_mut()[ci] = orig - eps;
            let minus = eval(&point, ti, ci)?;
            point[ti].data_mut()[ci] = orig;
            for (k, report) in reports.iter_mut().enumerate() {
                let numeric = (plus[k] - minus[k]) / (2.0 * eps);
                let err = relative_error(analytic[k][ti][ci], numeric);
                report.checked += 1;
                if err > report.max_rel_error || report.worst.is_none() {
                    report.max_rel_error = report.max_rel_error.max(err);
                    if err >= report.max_rel_error {
                        report.worst = Some((ti, ci));
                    }
                }
            }
        }
    }
    Ok(reports)
}
