//! Central finite-difference verification of tape adjoints (f64 only).

use crate::error::{DvtError, Result};

use super::{Rng, Tape, Tensor, Var};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tol: f64,
    /// Check at most this many coordinates per input, chosen at random.
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tol: 1e-4,
            max_coords: None,
            seed: 0,
        }
    }
}

impl GradCheckOptions {
    pub fn with_tol(tol: f64) -> Self {
        GradCheckOptions {
            tol,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradFailure {
    pub input: usize,
    pub coord: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradReport {
    pub max_rel_err: f64,
    /// `(input, coordinate)` of the largest error.
    pub worst: Option<(usize, usize)>,
    pub failures: Vec<GradFailure>,
    pub checked: usize,
    pub tol: f64,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn merge(&mut self, other: GradReport) {
        if other.max_rel_err > self.max_rel_err {
            self.max_rel_err = other.max_rel_err;
            self.worst = other.worst;
        }
        self.failures.extend(other.failures);
        self.checked += other.checked;
        self.tol = self.tol.max(other.tol);
    }
}

/// Below this magnitude a central difference with step 1e-5 is dominated by
/// rounding (about ε·|f|/h), so errors are measured against it instead.
pub const REL_ERR_FLOOR: f64 = 1e-6;

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_ERR_FLOOR)
}

/// Compares the adjoint of the scalar `f(inputs)` against central differences.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], opts: &GradCheckOptions) -> Result<GradReport>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<_> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let out = f(&tape, &vars)?;
        let v = out.value();
        if v.len() != 1 {
            return Err(DvtError::shape("grad_check", v.shape(), &[1]));
        }
        Ok(v.data()[0])
    };

    let analytic: Vec<Tensor<f64>> = {
        let tape = Tape::new();
        let vars: Vec<_> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
        let out = f(&tape, &vars)?;
        if out.value().len() != 1 {
            return Err(DvtError::shape("grad_check", out.value().shape(), &[1]));
        }
        let grads = tape.backward(out);
        vars.iter().map(|&v| grads.wrt(v)).collect()
    };

    let mut rng = Rng::new(opts.seed);
    let mut report = GradReport {
        tol: opts.tol,
        ..Default::default()
    };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (which, input) in inputs.iter().enumerate() {
        let mut coords: Vec<usize> = (0..input.len()).collect();
        if let Some(limit) = opts.max_coords {
            if coords.len() > limit {
                rng.shuffle(&mut coords);
                coords.truncate(limit);
                coords.sort_unstable();
            }
        }
        for &c in &coords {
            let orig = input.data()[c];
            work[which].data_mut()[c] = orig + opts.step;
            let up = eval(&work)?;
            work[which].data_mut()[c] = orig - opts.step;
            let down = eval(&work)?;
            work[which].data_mut()[c] = orig;
            let numeric = (up - down) / (2.0 * opts.step);
            let a = analytic[which].data()[c];
            let err = rel_err(a, numeric);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((which, c));
            }
            if err > opts.tol {
                report.failures.push(GradFailure {
                    input: which,
                    coord: c,
                    analytic: a,
                    numeric,
                    rel_err: err,
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares() {
        let x = Tensor::new(&[2], vec![1.0, 2.0]).unwrap();
        let tape = Tape::new();
        let v = tape.leaf(x.clone());
        let loss = v.mul(v).unwrap().sum();
        let g = tape.backward(loss).wrt(v);
        assert_eq!(g.data(), &[2.0, 4.0]);
        let report = grad_check(
            |_, xs| Ok(xs[0].mul(xs[0])?.sum()),
            &[x],
            &GradCheckOptions::with_tol(1e-9),
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.max_rel_err < 1e-9);
    }

    #[test]
    fn reports_failing_coordinates() {
        // A deliberately wrong adjoint: scale by 2 forward, record as identity.
        let x = Tensor::new(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let report = grad_check(
            |tape, xs| {
                let doubled = xs[0].value().map(|v| 2.0 * v);
                let id = xs[0].id();
                let wrong = tape.record(doubled, &[xs[0]], move |g, grads| {
                    grads.acc(id, |ga| ga.iter_mut().zip(g.data()).for_each(|(a, &b)| *a += b))
                });
                Ok(wrong.sum())
            },
            &[x],
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(!report.passed());
        let coords: Vec<usize> = report.failures.iter().map(|f| f.coord).collect();
        assert_eq!(coords, vec![0, 1, 2]);
    }
}
