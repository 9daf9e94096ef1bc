//! Problem data: transport coefficients, the interface mass-transfer law
//! `b`, the reaction factorization `eta(r, s) = R(r) Q(s)`, boundary and
//! initial data, and the L-infinity bound constants used by the positivity
//! monitor.
//!
//! Structural requirements enforced here:
//! - (A1) all diffusivities strictly positive;
//! - (A2) `b` globally Lipschitz, `b(z) = 0` for `z <= 0`, `b(z) <= c_hat z`
//!   for `z > 0`;
//! - (A3) `R`, `Q` globally Lipschitz, positive exactly on the positive axis,
//!   and `k > 0`, `alpha > 0`;
//! - (A4) initial/boundary data nonnegative and bounded when the positivity
//!   suite is enabled.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type TimeFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;
pub type FieldFn<T> = Arc<dyn Fn([T; 2]) -> T + Send + Sync>;
pub type GradFieldFn<T> = Arc<dyn Fn([T; 2]) -> [T; 2] + Send + Sync>;
pub type TimeFieldFn<T> = Arc<dyn Fn(T, [T; 2]) -> T + Send + Sync>;
pub type TwoScaleDataFn<T> = Arc<dyn Fn([T; 2], [T; 2]) -> T + Send + Sync>;

pub fn const_field<T: Scalar>(c: T) -> FieldFn<T> {
    Arc::new(move |_| c)
}

pub fn const_time_field<T: Scalar>(c: T) -> TimeFieldFn<T> {
    Arc::new(move |_, _| c)
}

pub fn const_two_scale<T: Scalar>(c: T) -> TwoScaleDataFn<T> {
    Arc::new(move |_, _| c)
}

/// Interface mass-transfer law `b`. Both kinds vanish on the nonpositive
/// axis and are globally Lipschitz with constant `c_hat`; `c_hat = 0` is the
/// decoupling switch `b = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TransferFn<T> {
    /// `b(z) = c_hat * max(z, 0)`
    LinearPositivePart { c_hat: T },
    /// `b(z) = min(c_hat * max(z, 0), z_sat)`
    Saturating { c_hat: T, z_sat: T },
}

impl<T: Scalar> TransferFn<T> {
    pub fn eval(&self, z: T) -> T {
        if z <= T::zero() {
            return T::zero();
        }
        match *self {
            TransferFn::LinearPositivePart { c_hat } => c_hat * z,
            TransferFn::Saturating { c_hat, z_sat } => (c_hat * z).min(z_sat),
        }
    }

    /// Global Lipschitz constant.
    pub fn lipschitz(&self) -> T {
        match *self {
            TransferFn::LinearPositivePart { c_hat } => c_hat,
            TransferFn::Saturating { c_hat, .. } => c_hat,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.lipschitz() == T::zero()
    }

    pub fn validate(&self) -> Result<()> {
        let c_hat = self.lipschitz();
        if c_hat < T::zero() {
            return Err(Error::Precondition(
                "transfer law: c_hat must be >= 0 (A2)".into(),
            ));
        }
        if let TransferFn::Saturating { z_sat, .. } = *self {
            if z_sat <= T::zero() {
                return Err(Error::Precondition(
                    "transfer law: saturation threshold must be > 0".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Evaluate the transfer law (free-function form of [`TransferFn::eval`]).
pub fn eval_b<T: Scalar>(f: &TransferFn<T>, z: T) -> T {
    f.eval(z)
}

/// One factor of the reaction rate `eta(r, s) = R(r) Q(s)`: zero on the
/// nonpositive axis, positive on the positive axis, Lipschitz constant one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReactionFactorFn<T> {
    /// `R(r) = max(r, 0)`
    PositivePart,
    /// `R(r) = min(max(r, 0), cap)`
    ClippedPositivePart { cap: T },
}

impl<T: Scalar> ReactionFactorFn<T> {
    pub fn eval(&self, r: T) -> T {
        let pos = r.max(T::zero());
        match *self {
            ReactionFactorFn::PositivePart => pos,
            ReactionFactorFn::ClippedPositivePart { cap } => pos.min(cap),
        }
    }

    pub fn lipschitz(&self) -> T {
        T::one()
    }

    /// Maximum over `[0, hi]`, in closed form (both kinds are monotone).
    pub fn max_on(&self, hi: T) -> T {
        self.eval(hi.max(T::zero()))
    }

    pub fn validate(&self) -> Result<()> {
        if let ReactionFactorFn::ClippedPositivePart { cap } = *self {
            if cap <= T::zero() {
                return Err(Error::Precondition(
                    "reaction factor: cap must be > 0".into(),
                ));
            }
        }
        Ok(())
    }
}

/// `eta(r, s) = R(r) Q(s)`; vanishes whenever either argument is nonpositive.
pub fn eval_eta<T: Scalar>(
    r_factor: &ReactionFactorFn<T>,
    q_factor: &ReactionFactorFn<T>,
    r: T,
    s: T,
) -> T {
    r_factor.eval(r) * q_factor.eval(s)
}

/// Full problem data. Evaluations are pure; the type is cheap to clone and
/// freely shareable across threads.
#[derive(Clone)]
pub struct ModelParams<T> {
    /// porosity
    pub theta: T,
    /// macro diffusivity
    pub d_macro: T,
    /// micro diffusivity of the transferred species
    pub d1: T,
    /// micro diffusivity of the consumed species
    pub d2: T,
    /// reaction constant
    pub k: T,
    /// ratio of molecular weights
    pub alpha: T,
    pub b: TransferFn<T>,
    pub r_factor: ReactionFactorFn<T>,
    pub q_factor: ReactionFactorFn<T>,
    /// exterior concentration, Dirichlet datum on the macro boundary
    pub u_ext: TimeFieldFn<T>,
    /// initial macro concentration
    pub macro_init: FieldFn<T>,
    /// initial micro concentration of the transferred species
    pub micro_u_init: TwoScaleDataFn<T>,
    /// initial micro concentration of the consumed species
    pub micro_v_init: TwoScaleDataFn<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// Parameters with zero data functions; callers install data afterwards.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        theta: T,
        d_macro: T,
        d1: T,
        d2: T,
        k: T,
        alpha: T,
        b: TransferFn<T>,
        r_factor: ReactionFactorFn<T>,
        q_factor: ReactionFactorFn<T>,
    ) -> Self {
        ModelParams {
            theta,
            d_macro,
            d1,
            d2,
            k,
            alpha,
            b,
            r_factor,
            q_factor,
            u_ext: const_time_field(T::zero()),
            macro_init: const_field(T::zero()),
            micro_u_init: const_two_scale(T::zero()),
            micro_v_init: const_two_scale(T::zero()),
        }
    }

    pub fn eta(&self, r: T, s: T) -> T {
        eval_eta(&self.r_factor, &self.q_factor, r, s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta <= T::zero() {
            return Err(Error::Precondition("theta must be > 0".into()));
        }
        if self.d_macro <= T::zero() || self.d1 <= T::zero() || self.d2 <= T::zero() {
            return Err(Error::Precondition(
                "diffusivities must be strictly positive (A1)".into(),
            ));
        }
        // k = 0 is allowed as the decoupling switch; the reactive regime has
        // k > 0
        if self.k < T::zero() || self.alpha <= T::zero() {
            return Err(Error::Precondition(
                "k must be >= 0 and alpha > 0 (A3)".into(),
            ));
        }
        self.b.validate()?;
        self.r_factor.validate()?;
        self.q_factor.validate()
    }
}

/// Uniform bounds of the solution triple from the suprema of the data:
/// `m1 = 2 sup U_ext + sup U_I`, `m2 = max(sup u_I, m1)`, `m3 = sup v_I`.
pub fn linf_bounds<T: Scalar>(
    sup_u_ext: T,
    sup_macro_init: T,
    sup_micro_u_init: T,
    sup_micro_v_init: T,
) -> Result<(T, T, T)> {
    for s in [
        sup_u_ext,
        sup_macro_init,
        sup_micro_u_init,
        sup_micro_v_init,
    ] {
        if s < T::zero() {
            return Err(Error::Precondition("suprema must be nonnegative".into()));
        }
    }
    let m1 = T::cst(2.0) * sup_u_ext + sup_macro_init;
    let m2 = sup_micro_u_init.max(m1);
    let m3 = sup_micro_v_init;
    Ok((m1, m2, m3))
}

/// Maxima of the reaction factors over the bound intervals `[0, m2]`,
/// `[0, m3]`; closed form since both factor kinds are monotone.
pub fn reaction_max_factors<T: Scalar>(
    r_factor: &ReactionFactorFn<T>,
    q_factor: &ReactionFactorFn<T>,
    m2: T,
    m3: T,
) -> (T, T) {
    (r_factor.max_on(m2), q_factor.max_on(m3))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transfer_law_examples() {
        let linear = TransferFn::LinearPositivePart { c_hat: 1.0 };
        assert_eq!(linear.eval(-1.0), 0.0);
        assert_eq!(TransferFn::LinearPositivePart { c_hat: 2.0 }.eval(3.0), 6.0);
        assert_eq!(
            TransferFn::Saturating {
                c_hat: 1.0,
                z_sat: 0.5
            }
            .eval(3.0),
            0.5
        );
        assert_eq!(linear.eval(0.0), 0.0);
    }

    #[test]
    fn eta_examples() {
        let pp = ReactionFactorFn::PositivePart;
        assert_eq!(eval_eta(&pp, &pp, -1.0, 5.0), 0.0);
        assert_eq!(eval_eta(&pp, &pp, 2.0, 3.0), 6.0);
        let clipped = ReactionFactorFn::ClippedPositivePart { cap: 1.0 };
        assert_eq!(eval_eta(&clipped, &clipped, 2.0, 3.0), 1.0);
    }

    #[test]
    fn linf_bound_formulas() {
        assert_eq!(linf_bounds(1.0, 0.5, 0.1, 2.0).unwrap(), (2.5, 2.5, 2.0));
        assert_eq!(linf_bounds(0.0, 0.0, 0.0, 0.0).unwrap(), (0.0, 0.0, 0.0));
        assert_eq!(linf_bounds(1.0, 0.5, 10.0, 2.0).unwrap().1, 10.0);
        assert!(linf_bounds(-0.1, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn reaction_maxima() {
        let pp = ReactionFactorFn::PositivePart;
        let clipped = ReactionFactorFn::ClippedPositivePart { cap: 1.0 };
        assert_eq!(reaction_max_factors(&pp, &pp, 2.5, 3.0), (2.5, 3.0));
        assert_eq!(reaction_max_factors(&clipped, &pp, 2.5, 3.0).0, 1.0);
        assert_eq!(reaction_max_factors(&pp, &pp, 0.0, 0.0), (0.0, 0.0));
    }

    #[test]
    fn lipschitz_bounds_hold_on_random_samples() {
        // deterministic pseudo-random samples
        let mut state = 0x12345678u64;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 20.0 - 10.0
        };
        let b = TransferFn::Saturating {
            c_hat: 1.7,
            z_sat: 0.9,
        };
        let blin = TransferFn::LinearPositivePart { c_hat: 2.3 };
        let r = ReactionFactorFn::PositivePart;
        let q = ReactionFactorFn::ClippedPositivePart { cap: 1.2 };
        for _ in 0..10_000 {
            let z1 = next();
            let z2 = next();
            for law in [&b, &blin] {
                assert!(
                    (law.eval(z1) - law.eval(z2)).abs()
                        <= law.lipschitz() * (z1 - z2).abs() + 1e-14
                );
                if z1 > 0.0 {
                    assert!(law.eval(z1) <= law.lipschitz() * z1 + 1e-14);
                }
                assert!(law.eval(z1) >= 0.0);
            }
            assert!((r.eval(z1) - r.eval(z2)).abs() <= (z1 - z2).abs() + 1e-14);
            assert!((q.eval(z1) - q.eval(z2)).abs() <= (z1 - z2).abs() + 1e-14);
            if z1.min(z2) <= 0.0 {
                assert_eq!(eval_eta(&r, &q, z1, z2), 0.0);
            }
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn transfer_laws_are_lipschitz_and_vanish_below_zero(
                z1 in -50.0..50.0f64,
                z2 in -50.0..50.0f64,
                c_hat in 0.0..5.0f64,
                z_sat in 0.01..3.0f64,
            ) {
                for law in [
                    TransferFn::LinearPositivePart { c_hat },
                    TransferFn::Saturating { c_hat, z_sat },
                ] {
                    prop_assert!(law.eval(z1) >= 0.0);
                    prop_assert!(
                        (law.eval(z1) - law.eval(z2)).abs()
                            <= c_hat * (z1 - z2).abs() + 1e-12
                    );
                    if z1 <= 0.0 {
                        prop_assert_eq!(law.eval(z1), 0.0);
                    } else {
                        prop_assert!(law.eval(z1) <= c_hat * z1 + 1e-12);
                    }
                }
            }

            #[test]
            fn reaction_rate_positive_exactly_on_the_positive_quadrant(
                r in -10.0..10.0f64,
                s in -10.0..10.0f64,
                cap in 0.01..5.0f64,
            ) {
                for r_factor in [
                    ReactionFactorFn::PositivePart,
                    ReactionFactorFn::ClippedPositivePart { cap },
                ] {
                    for q_factor in [
                        ReactionFactorFn::PositivePart,
                        ReactionFactorFn::ClippedPositivePart { cap },
                    ] {
                        let eta = eval_eta(&r_factor, &q_factor, r, s);
                        if r > 0.0 && s > 0.0 {
                            prop_assert!(eta > 0.0);
                        } else {
                            prop_assert_eq!(eta, 0.0);
                        }
                        prop_assert!(
                            (r_factor.eval(r) - r_factor.eval(s)).abs()
                                <= r_factor.lipschitz() * (r - s).abs() + 1e-12
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn params_validation() {
        let good = ModelParams::new(
            1.0,
            1.0,
            0.1,
            0.1,
            1.0,
            1.0,
            TransferFn::LinearPositivePart { c_hat: 1.0 },
            ReactionFactorFn::PositivePart,
            ReactionFactorFn::PositivePart,
        );
        good.validate().unwrap();
        let mut bad = good.clone();
        bad.d_macro = -1.0;
        assert!(bad.validate().is_err());
        let mut bad = good.clone();
        bad.k = -1.0;
        assert!(bad.validate().is_err());
        let mut decoupled = good.clone();
        decoupled.k = 0.0;
        decoupled.validate().unwrap();
    }
}
