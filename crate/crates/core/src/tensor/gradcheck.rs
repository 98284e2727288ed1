//! Central finite-difference checks against the tape's gradients.

use super::{ParamStore, Tape, Tensor, Var};
use crate::error::Result;

/// Bound on the relative rounding error of one function evaluation, in
/// units of machine epsilon.
const ROUNDING_ULPS: f64 = 10.0;

/// One compared coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradSample {
    pub coord: usize,
    pub autodiff: f64,
    pub finite_diff: f64,
    /// Rounding error bound of the central difference,
    /// `ROUNDING_ULPS * eps * max(1, |f(x+h)|, |f(x-h)|) / h`.
    pub noise: f64,
}

impl GradSample {
    pub fn abs_error(&self) -> f64 {
        (self.autodiff - self.finite_diff).abs()
    }

    /// `|ad - fd| / max(1e-12, |fd|)`.
    pub fn rel_error(&self) -> f64 {
        self.abs_error() / self.finite_diff.abs().max(1e-12)
    }

    /// Within `tol` relative error, or, for derivatives too small for the
    /// central difference to resolve, within its rounding error.
    pub fn agrees(&self, tol: f64) -> bool {
        self.rel_error() < tol || self.abs_error() <= self.noise
    }
}

/// Outcome of a finite-difference comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |ad - fd| / max(1e-12, |fd|)` over the compared coordinates.
    pub max_rel_error: f64,
    /// `max |ad - fd|` over the compared coordinates.
    pub max_abs_error: f64,
    /// Coordinate attaining `max_rel_error`.
    pub worst: Option<usize>,
    /// `(autodiff, finite difference)` at `worst`.
    pub worst_values: Option<(f64, f64)>,
    pub checked: usize,
    /// Coordinates whose `±step` evaluations crossed a kink (activation
    /// side or nearest-neighbour assignment changed), where the central
    /// difference is not an oracle for the one-sided derivative.
    pub skipped: usize,
    /// Evaluations that failed or produced non-finite values.
    pub failures: usize,
    pub samples: Vec<GradSample>,
}

impl GradCheckReport {
    /// Every compared coordinate [`agrees`](GradSample::agrees) at `tol`.
    pub fn passed(&self, tol: f64) -> bool {
        self.failures == 0 && self.checked > 0 && self.samples.iter().all(|s| s.agrees(tol))
    }

    /// Coordinates above `tol` relative error that pass only because the
    /// difference is below the rounding bound.
    pub fn unresolved(&self, tol: f64) -> usize {
        self.samples
            .iter()
            .filter(|s| s.rel_error() >= tol && s.abs_error() <= s.noise)
            .count()
    }

    /// Largest relative error among coordinates the central difference
    /// resolves, i.e. excluding [`unresolved`](Self::unresolved) ones.
    pub fn max_resolved_rel_error(&self) -> f64 {
        self.samples
            .iter()
            .filter(|s| s.abs_error() > s.noise)
            .map(GradSample::rel_error)
            .fold(0.0, f64::max)
    }

    fn new() -> Self {
        GradCheckReport {
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            worst: None,
            worst_values: None,
            checked: 0,
            skipped: 0,
            failures: 0,
            samples: Vec::new(),
        }
    }

    fn record(&mut self, coord: usize, ad: f64, (fp, fm): (f64, f64), step: f64) {
        let fd = (fp - fm) / (2.0 * step);
        let sample = GradSample {
            coord,
            autodiff: ad,
            finite_diff: fd,
            noise: ROUNDING_ULPS * f64::EPSILON * fp.abs().max(fm.abs()).max(1.0) / step,
        };
        let rel = sample.rel_error();
        self.checked += 1;
        if !rel.is_finite() {
            self.failures += 1;
            return;
        }
        if rel > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = rel.max(self.max_rel_error);
            self.worst = Some(coord);
            self.worst_values = Some((ad, fd));
        }
        self.max_abs_error = self.max_abs_error.max(sample.abs_error());
        self.samples.push(sample);
    }
}

fn eval<F>(f: &F, tape: &mut Tape, input: Var) -> Option<(f64, u64)>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let out = f(tape, input).ok()?;
    let v = tape.value(out);
    (v.len() == 1 && v.item().is_finite()).then(|| (v.item(), tape.branch_signature()))
}

/// Compares the tape gradient of the scalar function `f` at `input` with
/// central differences of half-width `step`, coordinate by coordinate.
pub fn finite_diff_check<F>(f: F, input: &Tensor, step: f64) -> GradCheckReport
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut report = GradCheckReport::new();
    let mut tape = Tape::new();
    let base = (|| -> Result<(Tensor, u64)> {
        let x = tape.constant(input.clone())?;
        let y = f(&mut tape, x)?;
        let g = tape.backward(y)?;
        Ok((g.get_or_zero(x), tape.branch_signature()))
    })();
    let Ok((grad, sig)) = base else {
        report.failures += 1;
        return report;
    };
    for i in 0..input.len() {
        let shifted = |delta: f64| {
            let mut x = input.clone();
            x.data_mut()[i] += delta;
            let mut tape = Tape::new();
            let v = tape.constant(x).ok()?;
            eval(&f, &mut tape, v)
        };
        match (shifted(step), shifted(-step)) {
            (Some((fp, sp)), Some((fm, sm))) => {
                if sp != sig || sm != sig {
                    report.skipped += 1;
                } else {
                    report.record(i, grad.data()[i], (fp, fm), step);
                }
            }
            _ => report.failures += 1,
        }
    }
    report
}

/// Finite-difference check with respect to the parameters of `store`.
///
/// `f` receives the tape and the bound parameter handles. When `coords` is
/// given only those flat coordinates (see [`ParamStore::flatten`]) are
/// compared.
pub fn finite_diff_check_params<F>(
    store: &ParamStore,
    f: F,
    step: f64,
    coords: Option<&[usize]>,
) -> GradCheckReport
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut report = GradCheckReport::new();
    let run = |s: &ParamStore, backward: bool| -> Result<(f64, u64, Option<Vec<f64>>)> {
        let mut tape = Tape::new();
        let p = tape.bind(s)?;
        let y = f(&mut tape, &p)?;
        let value = tape.value(y).item();
        let grads = if backward {
            let g = tape.backward(y)?;
            let flat = g
                .param_grads(s)
                .into_iter()
                .zip(s.iter())
                .flat_map(|(g, (_, _, t))| {
                    g.map(Tensor::into_data)
                        .unwrap_or_else(|| vec![0.0; t.len()])
                })
                .collect();
            Some(flat)
        } else {
            None
        };
        Ok((value, tape.branch_signature(), grads))
    };
    let Ok((_, sig, Some(grad))) = run(store, true) else {
        report.failures += 1;
        return report;
    };
    let flat = store.flatten();
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..flat.len()).collect();
            &all
        }
    };
    let mut work = store.clone();
    for &i in coords {
        let mut shifted = |delta: f64| {
            let mut x = flat.clone();
            x[i] += delta;
            work.set_flat(&x).ok()?;
            run(&work, false)
                .ok()
                .filter(|(v, _, _)| v.is_finite())
                .map(|(v, s, _)| (v, s))
        };
        match (shifted(step), shifted(-step)) {
            (Some((fp, sp)), Some((fm, sm))) => {
                if sp != sig || sm != sig {
                    report.skipped += 1;
                } else {
                    report.record(i, grad[i], (fp, fm), step);
                }
            }
            _ => report.failures += 1,
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
    }

    #[test]
    fn sum_has_exact_gradient() {
        let r = finite_diff_check(|t, x| t.sum(x), &random(3, 4, 0), 1e-5);
        assert_eq!(r.checked, 12);
        assert!(r.max_rel_error < 1e-10, "{r:?}");
    }

    #[test]
    fn softmax_sum_gradient_vanishes() {
        let r = finite_diff_check(
            |t, x| {
                let s = t.softmax_rows(x)?;
                t.sum(s)
            },
            &random(2, 5, 1),
            1e-5,
        );
        // the gradient is identically zero, so only the absolute error is
        // meaningful here
        assert!(r.max_abs_error < 1e-10, "{r:?}");
    }

    #[test]
    fn kinks_are_skipped_not_compared() {
        let x = Tensor::new(1, 2, vec![1e-7, 0.5]);
        let r = finite_diff_check(
            |t, x| {
                let a = t.abs(x)?;
                t.sum(a)
            },
            &x,
            1e-5,
        );
        assert_eq!(r.skipped, 1);
        assert_eq!(r.checked, 1);
        assert!(r.passed(1e-8));
    }
}
