//! Positivity/boundedness monitor: tracks per-step extremes of all three
//! fields and records every excursion outside `[-tol, m + tol]` with the
//! offending step, field and value. Reporting only; it never aborts a run.

use crate::coupling::CoupledOperators;
use crate::scalar::Scalar;
use crate::solver::{Observer, State};

#[derive(Clone, Copy, Debug)]
pub struct StepExtremes<T> {
    pub step: usize,
    pub t: T,
    pub min_macro: T,
    pub max_macro: T,
    pub min_u: T,
    pub max_u: T,
    pub min_v: T,
    pub max_v: T,
}

#[derive(Clone, Copy, Debug)]
pub struct Violation<T> {
    pub step: usize,
    pub field: &'static str,
    pub value: T,
    pub bound: T,
}

pub struct BoundsMonitor<T> {
    m1: T,
    m2: T,
    m3: T,
    tol: T,
    pub history: Vec<StepExtremes<T>>,
    pub violations: Vec<Violation<T>>,
}

fn extremes<T: Scalar>(values: impl Iterator<Item = T>) -> (T, T) {
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

impl<T: Scalar> BoundsMonitor<T> {
    /// Monitor against the uniform bounds `m1, m2, m3` with slack `tol`.
    pub fn new(m1: T, m2: T, m3: T, tol: T) -> Self {
        BoundsMonitor {
            m1,
            m2,
            m3,
            tol,
            history: Vec::new(),
            violations: Vec::new(),
        }
    }

    fn check(&mut self, step: usize, field: &'static str, lo: T, hi: T, upper: T) {
        if lo < -self.tol {
            self.violations.push(Violation {
                step,
                field,
                value: lo,
                bound: -self.tol,
            });
        }
        if hi > upper + self.tol {
            self.violations.push(Violation {
                step,
                field,
                value: hi,
                bound: upper + self.tol,
            });
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,t,min_U,max_U,min_u,max_u,min_v,max_v\n");
        for e in &self.history {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                e.step, e.t, e.min_macro, e.max_macro, e.min_u, e.max_u, e.min_v, e.max_v
            ));
        }
        out
    }
}

impl<T: Scalar> Observer<T> for BoundsMonitor<T> {
    fn observe(&mut self, step: usize, state: &State<T>, _ops: &CoupledOperators<T>) {
        let (min_macro, max_macro) = extremes(state.u_macro.iter().copied());
        let (min_u, max_u) = extremes(state.u_micro.coeffs.data().iter().copied());
        let (min_v, max_v) = extremes(state.v_micro.coeffs.data().iter().copied());
        self.history.push(StepExtremes {
            step,
            t: state.t,
            min_macro,
            max_macro,
            min_u,
            max_u,
            min_v,
            max_v,
        });
        self.check(step, "U", min_macro, max_macro, self.m1);
        self.check(step, "u", min_u, max_u, self.m2);
        self.check(step, "v", min_v, max_v, self.m3);
    }
}
