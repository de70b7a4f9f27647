use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Gradient magnitudes below this are compared absolutely rather than
/// relatively, so entries that are zero up to rounding do not blow up the
/// ratio.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// `|a − b| / max(|a|, |b|, RELATIVE_ERROR_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(RELATIVE_ERROR_FLOOR);
    (a - b).abs() / denom
}

/// Compares tape gradients of `program` against central finite differences
/// `(f(θ+h) − f(θ−h)) / 2h` for every entry of every tensor in `params`, and
/// returns the largest relative error seen.
///
/// `program` receives a fresh tape and one leaf per parameter (in order) and
/// must return a scalar loss.
pub fn grad_check<F>(params: &[Tensor], h: f64, mut program: F) -> Result<f64>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(Error::Contract(format!("finite-difference step must be > 0, got {h}")));
    }
    let mut eval = |values: &[Tensor], track: bool| -> Result<(f64, Option<Vec<Tensor>>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values
            .iter()
            .map(|t| if track { tape.param(t.clone()) } else { tape.constant(t.clone()) })
            .collect();
        let loss = program(&mut tape, &vars)?;
        let value = tape.value(loss).item()?;
        if !value.is_finite() {
            return Err(Error::Numeric(format!("loss evaluated to {value}")));
        }
        if !track {
            return Ok((value, None));
        }
        let mut grads = tape.backward(loss)?;
        let shapes: Vec<_> = values.iter().map(Tensor::shape).collect();
        let out = vars
            .iter()
            .zip(shapes)
            .map(|(&v, s)| grads.take_or_zeros(v, s))
            .collect();
        Ok((value, Some(out)))
    };

    let (_, analytic) = eval(params, true)?;
    let analytic = analytic.expect("tracked evaluation returns gradients");

    let mut work: Vec<Tensor> = params.to_vec();
    let mut worst = 0.0f64;
    for p in 0..work.len() {
        for k in 0..work[p].len() {
            let orig = work[p].data()[k];
            work[p].data_mut()[k] = orig + h;
            let (plus, _) = eval(&work, false)?;
            work[p].data_mut()[k] = orig - h;
            let (minus, _) = eval(&work, false)?;
            work[p].data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(relative_error(analytic[p].data()[k], numeric));
        }
    }
    Ok(worst)
}
