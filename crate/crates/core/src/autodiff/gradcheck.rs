use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Worst disagreement between tape gradients and central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport<T> {
    pub max_relative_error: T,
    /// Index into the checked parameter list of the worst coordinate.
    pub worst_param: usize,
    pub worst_index: usize,
    pub analytic: T,
    pub numeric: T,
    pub coordinates: usize,
}

fn eval<T, F>(f: &F, params: &[Tensor<T>]) -> Result<(Tape<T>, Vec<Var>, Var)>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    if tape.value(loss).len() != 1 {
        return Err(Error::Contract("grad_check objective must be scalar".into()));
    }
    Ok((tape, vars, loss))
}

/// Compares reverse-mode gradients of `f` against central differences
/// `(f(θ+h) − f(θ−h)) / 2h`, one coordinate at a time.
///
/// The relative error per coordinate uses the denominator
/// `max(|analytic|, |numeric|, 1e-8)`. `params` is restored before return.
pub fn grad_check<T, F>(f: F, params: &mut [Tensor<T>], h: T) -> Result<GradCheckReport<T>>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    if h <= T::zero() {
        return Err(Error::Contract("grad_check step must be positive".into()));
    }
    let (mut tape, vars, loss) = eval(&f, params)?;
    tape.backward(loss)?;
    let analytic: Vec<Tensor<T>> = vars.iter().map(|&v| tape.grad(v)).collect();
    drop(tape);

    let floor = T::of(1e-8);
    let two_h = h + h;
    let mut report = GradCheckReport {
        max_relative_error: T::zero(),
        worst_param: 0,
        worst_index: 0,
        analytic: T::zero(),
        numeric: T::zero(),
        coordinates: 0,
    };
    for pi in 0..params.len() {
        for idx in 0..params[pi].len() {
            let orig = params[pi].data()[idx];
            params[pi].data_mut()[idx] = orig + h;
            let plus = eval(&f, params).map(|(t, _, l)| t.value(l).data()[0]);
            params[pi].data_mut()[idx] = orig - h;
            let minus = eval(&f, params).map(|(t, _, l)| t.value(l).data()[0]);
            params[pi].data_mut()[idx] = orig;
            let numeric = (plus? - minus?) / two_h;
            let a = analytic[pi].data()[idx];
            let denom = a.abs().max(numeric.abs()).max(floor);
            let rel = (a - numeric).abs() / denom;
            report.coordinates += 1;
            if rel > report.max_relative_error || rel.is_nan() {
                report.max_relative_error = rel;
                report.worst_param = pi;
                report.worst_index = idx;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
