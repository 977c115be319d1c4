//! Central finite differences against tape adjoints.
//!
//! Each probed element is perturbed by `±eps`. If either perturbed forward
//! lands on a different side of a relu, pooling tie or probability clamp
//! than the base forward (detected through [`Tape::kink_signature`]), the
//! finite difference straddles a non-differentiable point: the element is
//! skipped and counted, and [`grad_check_sampled`] draws a fresh sample.

use rand::Rng;

use crate::error::{Result, TensorError};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    pub tol: f64,
    /// Lower bound on the relative-error denominator; gradients smaller than
    /// this are effectively judged by absolute error.
    pub denom_floor: f64,
    /// Probe at most this many evenly spaced elements per input.
    pub max_elements: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { eps: 1e-5, tol: 1e-5, denom_floor: 1e-3, max_elements: None }
    }
}

impl GradCheckOptions {
    pub fn with_tol(tol: f64) -> Self {
        GradCheckOptions { tol, ..Self::default() }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Worst relative error per input.
    pub per_input: Vec<f64>,
    /// `(input, element)` of the worst relative error.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    pub kink_skipped: usize,
    pub resampled: usize,
    pub passed: bool,
}

fn eval<F>(f: &F, inputs: &[Tensor<f64>]) -> Result<(f64, u64)>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::with_kink_tracking();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    if tape.data(out).len() != 1 {
        return Err(TensorError::NonScalarRoot(tape.shape(out).to_vec()));
    }
    Ok((tape.data(out)[0], tape.kink_signature()))
}

fn probe_indices(n: usize, max: Option<usize>) -> Vec<usize> {
    match max {
        Some(m) if m < n => (0..m).map(|k| k * n / m).collect(),
        _ => (0..n).collect(),
    }
}

/// Compare tape gradients of the scalar `f(inputs)` with central differences.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::with_kink_tracking();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let base_sig = tape.kink_signature();
    let grads = tape.backward(out)?;

    let mut report = GradCheckReport { per_input: vec![0.0; inputs.len()], ..Default::default() };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(*var);
        for j in probe_indices(inputs[i].numel(), opts.max_elements) {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + opts.eps;
            let (fp, sp) = eval(&f, &work)?;
            work[i].data_mut()[j] = orig - opts.eps;
            let (fm, sm) = eval(&f, &work)?;
            work[i].data_mut()[j] = orig;
            if sp != base_sig || sm != base_sig {
                report.kink_skipped += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * opts.eps);
            let a = analytic.data()[j];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(opts.denom_floor);
            report.checked += 1;
            report.max_abs_err = report.max_abs_err.max(abs);
            report.per_input[i] = report.per_input[i].max(rel);
            if rel >= report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((i, j));
            }
        }
    }
    report.passed = report.checked > 0 && report.max_rel_err < opts.tol;
    Ok(report)
}

/// Like [`grad_check`], drawing inputs from `sample` and redrawing (up to
/// `max_attempts` times) while any probe straddles a non-differentiable point.
pub fn grad_check_sampled<F, S, R>(
    f: F,
    mut sample: S,
    rng: &mut R,
    max_attempts: usize,
    opts: GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
    S: FnMut(&mut R) -> Vec<Tensor<f64>>,
    R: Rng,
{
    let mut resampled = 0;
    loop {
        let inputs = sample(rng);
        let mut report = grad_check(&f, &inputs, opts)?;
        if report.kink_skipped == 0 || resampled + 1 >= max_attempts.max(1) {
            report.resampled = resampled;
            return Ok(report);
        }
        resampled += 1;
    }
}
