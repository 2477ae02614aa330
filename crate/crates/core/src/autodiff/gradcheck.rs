//! Central finite-difference verification of tape gradients.

use super::param::{Gradients, ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Relative errors are measured against `max(|analytic|, |numeric|, FLOOR)` so
/// that coordinates whose true gradient is ~0 are judged on absolute error.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: Option<String>,
    pub worst_index: usize,
    pub coordinates: usize,
}

/// Compares tape gradients of `f` with `(f(θ+eps) − f(θ−eps)) / 2eps` for every
/// coordinate of `params` (all parameters when `None`). `f` must build the same
/// graph for the same parameter values; it is evaluated twice at the base
/// point to confirm this.
pub fn grad_check<F>(
    store: &ParamStore<f64>,
    params: Option<&[ParamId]>,
    eps: f64,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>) -> Result<Var>,
{
    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let mut tape = Tape::new(s);
        let loss = f(&mut tape)?;
        Ok(tape.scalar(loss))
    };

    let mut analytic = Gradients::for_store(store);
    let first = {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape)?;
        let v = tape.scalar(loss);
        tape.backward(loss, &mut analytic)?;
        v
    };
    let second = eval(store)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::NonDeterministic { first, second });
    }

    let ids: Vec<ParamId> = match params {
        Some(p) => p.to_vec(),
        None => store.ids().collect(),
    };

    let mut work = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: None,
        worst_index: 0,
        coordinates: 0,
    };
    for id in ids {
        let n = store.value(id).len();
        for k in 0..n {
            let orig = store.value(id).data()[k];
            work.value_mut(id).data_mut()[k] = orig + eps;
            let plus = eval(&work)?;
            work.value_mut(id).data_mut()[k] = orig - eps;
            let minus = eval(&work)?;
            work.value_mut(id).data_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.get(id).map_or(0.0, |g| g[k]);
            let denom = a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
            let err = (a - numeric).abs() / denom;
            report.coordinates += 1;
            if err > report.max_rel_error || !err.is_finite() {
                report.max_rel_error = if err.is_finite() { err } else { f64::INFINITY };
                report.worst_param = Some(store.get(id).name.clone());
                report.worst_index = k;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn linear_function_is_exact() {
        let mut s = ParamStore::new();
        let p = s.add("p", Tensor::vector(vec![0.3, -1.2, 2.0]));
        let r = grad_check(&s, None, 1e-5, |t| {
            let v = t.param(p);
            let c = t.constant_vec(vec![1.5, -2.0, 0.25]);
            t.dot(v, c)
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-9, "{r:?}");
        assert_eq!(r.coordinates, 3);
    }

    #[test]
    fn detects_nondeterminism() {
        use std::cell::Cell;
        let mut s = ParamStore::new();
        let p = s.add("p", Tensor::vector(vec![1.0]));
        let calls = Cell::new(0.0);
        let r = grad_check(&s, None, 1e-5, |t| {
            calls.set(calls.get() + 1.0);
            let v = t.param(p);
            let c = t.constant_vec(vec![calls.get()]);
            t.dot(v, c)
        });
        assert!(matches!(r, Err(Error::NonDeterministic { .. })));
    }
}
