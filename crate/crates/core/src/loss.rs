//! Margin-based losses of the form `l(q) = exp(-f(q))`, `q = y * h(x)`.
//!
//! Each loss carries the accessories used by the margin and bound code:
//! `f`, `f'`, the inverse `g` of `f` on `[b_f, inf)`, `b_f`, the range
//! bound `B` and the Lipschitz constant `L_l` over outputs bounded by `B_f`.

use alloc::format;

use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `l(q) = e^{-q}`, `f(q) = q`.
    Exponential,
    /// `l(q) = log(1 + e^{-q})`, `f(q) = -log log(1 + e^{-q})`.
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
}

/// Upper end of the bisection bracket for the logistic inverse.
const INVERSE_UPPER: f64 = 1e6;
const INVERSE_TOL: f64 = 1e-10;

impl LossSpec {
    pub const fn exponential() -> Self {
        Self { kind: LossKind::Exponential }
    }

    pub const fn logistic() -> Self {
        Self { kind: LossKind::Logistic }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            LossKind::Exponential => "exponential",
            LossKind::Logistic => "logistic",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "exponential" | "exp" => Ok(Self::exponential()),
            "logistic" | "log" => Ok(Self::logistic()),
            other => Err(Error::InvalidInputs(format!("unknown loss '{other}'"))),
        }
    }

    /// `l(q)`.
    pub fn value(&self, q: f64) -> f64 {
        match self.kind {
            LossKind::Exponential => math::exp(-q),
            LossKind::Logistic => math::softplus(-q),
        }
    }

    /// `l'(q)`, always `<= 0`.
    pub fn derivative(&self, q: f64) -> f64 {
        match self.kind {
            LossKind::Exponential => -math::exp(-q),
            LossKind::Logistic => -math::sigmoid(-q),
        }
    }

    /// `f(q) = -log l(q)`.
    pub fn frak_f(&self, q: f64) -> f64 {
        match self.kind {
            LossKind::Exponential => q,
            LossKind::Logistic => {
                if q > 30.0 {
                    // log(1 + u) = u (log(1 + u) / u) with u = e^{-q}
                    let u = math::exp(-q);
                    if u == 0.0 {
                        q
                    } else {
                        q - math::ln(math::ln_1p(u) / u)
                    }
                } else {
                    -math::ln(math::softplus(-q))
                }
            }
        }
    }

    /// `f'(q) = -l'(q) / l(q)`.
    pub fn frak_f_prime(&self, q: f64) -> f64 {
        match self.kind {
            LossKind::Exponential => 1.0,
            LossKind::Logistic => {
                if q > 30.0 {
                    let u = math::exp(-q);
                    if u == 0.0 {
                        1.0
                    } else {
                        (u / (1.0 + u)) / math::ln_1p(u)
                    }
                } else {
                    math::sigmoid(-q) / math::softplus(-q)
                }
            }
        }
    }

    /// `b_f`: both losses have `x f'(x)` nondecreasing on `(0, inf)`.
    pub fn b_f(&self) -> f64 {
        0.0
    }

    /// `b_g >= max(2 f(b_f), f(2 b_f))`; recorded for reference only.
    pub fn b_g(&self) -> f64 {
        let fb = self.frak_f(self.b_f());
        (2.0 * fb).max(self.frak_f(2.0 * self.b_f()))
    }

    /// A valid (not tight) doubling constant `K`; recorded for reference only.
    /// For the logistic loss `f'` rises from `1/(2 log 2)` to 1, so every ratio
    /// `f'(y)/f'(θy)` stays below `2 log 2 < 2`.
    pub fn k_constant(&self) -> f64 {
        match self.kind {
            LossKind::Exponential => 1.0,
            LossKind::Logistic => 2.0,
        }
    }

    /// `g = f^{-1}` on `[f(b_f), inf)`.
    pub fn frak_g(&self, v: f64) -> Result<f64> {
        let lo_val = self.frak_f(self.b_f());
        if !(v >= lo_val) || !v.is_finite() {
            return Err(Error::InvalidInputs(format!("g is defined on [{lo_val}, inf), got {v}")));
        }
        match self.kind {
            LossKind::Exponential => Ok(v),
            LossKind::Logistic => {
                let (mut lo, mut hi) = (self.b_f(), INVERSE_UPPER);
                if self.frak_f(hi) < v {
                    return Err(Error::InvalidInputs(format!("g({v}) exceeds the bisection bracket")));
                }
                while hi - lo > INVERSE_TOL {
                    let mid = 0.5 * (lo + hi);
                    if self.frak_f(mid) < v {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok(0.5 * (lo + hi))
            }
        }
    }

    /// Range bound `B = l(-B_f)` for outputs with `|h| <= B_f`.
    pub fn range_bound(&self, output_bound: f64) -> f64 {
        self.value(-output_bound)
    }

    /// `L_l = sup_{|q| <= B_f} f'(q) e^{-f(q)} = sup |l'(q)|`, attained at `q = -B_f`.
    pub fn lipschitz(&self, output_bound: f64) -> f64 {
        -self.derivative(-output_bound.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const QS: [f64; 9] = [-20.0, -3.0, -0.5, 0.0, 0.3, 2.0, 10.0, 40.0, 800.0];

    #[test]
    fn loss_is_exp_of_minus_frak_f() {
        for loss in [LossSpec::exponential(), LossSpec::logistic()] {
            for q in QS {
                let l = loss.value(q);
                let via_f = math::exp(-loss.frak_f(q));
                assert!((l - via_f).abs() <= 1e-12 * l.max(1e-300), "{:?} q={q}", loss.kind);
            }
        }
    }

    #[test]
    fn inverse_round_trip() {
        for loss in [LossSpec::exponential(), LossSpec::logistic()] {
            for q in [0.0, 1e-3, 0.5, 3.0, 25.0, 31.0, 500.0] {
                let back = loss.frak_g(loss.frak_f(q)).unwrap();
                assert!((back - q).abs() < 1e-8, "{:?} q={q} back={back}", loss.kind);
            }
            assert!(loss.frak_g(loss.frak_f(0.0) - 0.1).is_err());
        }
    }

    #[test]
    fn loss_nonincreasing_and_derivative_matches() {
        for loss in [LossSpec::exponential(), LossSpec::logistic()] {
            for w in QS.windows(2) {
                assert!(loss.value(w[1]) <= loss.value(w[0]));
            }
            for q in [-2.0, 0.0, 1.5, 35.0] {
                let h = 1e-6;
                let fd = (loss.value(q + h) - loss.value(q - h)) / (2.0 * h);
                assert!((fd - loss.derivative(q)).abs() < 1e-7);
                let fd = (loss.frak_f(q + h) - loss.frak_f(q - h)) / (2.0 * h);
                assert!((fd - loss.frak_f_prime(q)).abs() < 1e-6);
                assert!(loss.frak_f_prime(q) >= 0.0);
            }
        }
    }

    #[test]
    fn lipschitz_constants() {
        assert!((LossSpec::exponential().lipschitz(2.0) - math::exp(2.0)).abs() < 1e-12);
        assert!((LossSpec::logistic().lipschitz(0.0) - 0.5).abs() < 1e-15);
        assert!(LossSpec::logistic().lipschitz(50.0) <= 1.0);
        assert!((LossSpec::exponential().range_bound(1.0) - math::exp(1.0)).abs() < 1e-12);
    }
}
