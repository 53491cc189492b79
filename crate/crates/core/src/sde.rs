//! Scalar SDE models tagged with a noise interpretation, and the
//! coefficient-level conversions between interpretations.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Coefficient function of `(x, t)`.
pub type Coef = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Meaning given to `g(X)·ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpretation {
    Ito,
    Stratonovich,
    #[serde(alias = "hk")]
    HaenggiKlimontovich,
}

impl Interpretation {
    pub const ALL: [Interpretation; 3] =
        [Interpretation::Ito, Interpretation::Stratonovich, Interpretation::HaenggiKlimontovich];

    /// Multiple of `g·∂ₓg` added to the drift to obtain the Itô drift.
    pub fn ito_offset(self) -> f64 {
        match self {
            Interpretation::Ito => 0.0,
            Interpretation::Stratonovich => 0.5,
            Interpretation::HaenggiKlimontovich => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Interpretation::Ito => "ito",
            Interpretation::Stratonovich => "stratonovich",
            Interpretation::HaenggiKlimontovich => "hk",
        }
    }
}

impl fmt::Display for Interpretation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Open state interval `(lo, hi)`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
}

impl Domain {
    /// Arguments this far outside the closed domain still count as on it.
    pub const TOLERANCE: f64 = 1e-12;

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || !(lo < hi) {
            return Err(invalid(format!("empty domain ({lo}, {hi})")));
        }
        Ok(Self { lo, hi })
    }

    pub const fn real_line() -> Self {
        Self { lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }

    pub const fn positive() -> Self {
        Self { lo: 0.0, hi: f64::INFINITY }
    }

    pub fn contains_open(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }

    pub fn contains_closed(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Clamps `x` onto the closed domain if it is within [`Self::TOLERANCE`]
    /// of it; `None` for a genuine violation.
    pub fn admit(&self, x: f64) -> Option<f64> {
        if x.is_nan() {
            None
        } else if x < self.lo {
            (x >= self.lo - Self::TOLERANCE).then_some(self.lo)
        } else if x > self.hi {
            (x <= self.hi + Self::TOLERANCE).then_some(self.hi)
        } else {
            Some(x)
        }
    }
}

/// `dX = f(X,t) dt + g(X,t) ∘ dW` under a stated interpretation.
#[derive(Clone)]
pub struct SdeModel {
    drift: Coef,
    diffusion: Coef,
    dgdx: Option<Coef>,
    pub interpretation: Interpretation,
    pub domain: Domain,
    pub x0: f64,
    /// Free-text note on the hypotheses the model is known to satisfy or
    /// violate; never checked.
    pub assumptions: String,
}

impl fmt::Debug for SdeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeModel")
            .field("interpretation", &self.interpretation)
            .field("domain", &self.domain)
            .field("x0", &self.x0)
            .field("analytic_dgdx", &self.dgdx.is_some())
            .field("assumptions", &self.assumptions)
            .finish()
    }
}

impl SdeModel {
    pub fn new<F, G>(drift: F, diffusion: G, interpretation: Interpretation, domain: Domain, x0: f64) -> Result<Self>
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self::from_coefs(Arc::new(drift), Arc::new(diffusion), interpretation, domain, x0)
    }

    pub fn from_coefs(drift: Coef, diffusion: Coef, interpretation: Interpretation, domain: Domain, x0: f64) -> Result<Self> {
        if !x0.is_finite() || !domain.contains_closed(x0) {
            return Err(Error::OutsideDomain { x: x0, lo: domain.lo, hi: domain.hi });
        }
        Ok(Self { drift, diffusion, dgdx: None, interpretation, domain, x0, assumptions: String::new() })
    }

    /// Supplies an analytic `∂g/∂x`.
    pub fn with_dgdx<D>(mut self, dgdx: D) -> Self
    where
        D: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        self.dgdx = Some(Arc::new(dgdx));
        self
    }

    pub fn with_dgdx_coef(mut self, dgdx: Option<Coef>) -> Self {
        self.dgdx = dgdx;
        self
    }

    pub fn with_x0(mut self, x0: f64) -> Result<Self> {
        if !x0.is_finite() || !self.domain.contains_closed(x0) {
            return Err(Error::OutsideDomain { x: x0, lo: self.domain.lo, hi: self.domain.hi });
        }
        self.x0 = x0;
        Ok(self)
    }

    pub fn with_assumptions(mut self, note: impl Into<String>) -> Self {
        self.assumptions = note.into();
        self
    }

    #[inline]
    pub fn drift(&self, x: f64, t: f64) -> f64 {
        (self.drift)(x, t)
    }

    #[inline]
    pub fn diffusion(&self, x: f64, t: f64) -> f64 {
        (self.diffusion)(x, t)
    }

    pub fn drift_coef(&self) -> &Coef {
        &self.drift
    }

    pub fn diffusion_coef(&self) -> &Coef {
        &self.diffusion
    }

    pub fn has_analytic_dgdx(&self) -> bool {
        self.dgdx.is_some()
    }

    /// `∂g/∂x`, analytic when supplied, otherwise by [`finite_diff_gprime`].
    pub fn dgdx(&self, x: f64, t: f64) -> GPrime {
        match &self.dgdx {
            Some(d) => GPrime { value: d(x, t), one_sided: false },
            None => finite_diff_gprime(&*self.diffusion, x, t, None, &self.domain),
        }
    }

    /// Drift with a finiteness check.
    pub fn drift_checked(&self, x: f64, t: f64) -> Result<f64> {
        let v = self.drift(x, t);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { what: "drift", x, t })
        }
    }

    /// Diffusion coefficient with a finiteness check.
    pub fn diffusion_checked(&self, x: f64, t: f64) -> Result<f64> {
        let v = self.diffusion(x, t);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { what: "diffusion", x, t })
        }
    }

    /// Drift of the equivalent Itô equation at one point.
    pub fn ito_drift(&self, x: f64, t: f64) -> Result<f64> {
        let f = self.drift_checked(x, t)?;
        let w = self.interpretation.ito_offset();
        if w == 0.0 {
            return Ok(f);
        }
        let g = self.diffusion_checked(x, t)?;
        let dg = self.dgdx(x, t).value;
        if !dg.is_finite() {
            return Err(Error::NonFinite { what: "dg/dx", x, t });
        }
        Ok(f + w * g * dg)
    }
}

/// Result of a finite-difference `∂g/∂x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GPrime {
    pub value: f64,
    /// The central stencil left the domain and a one-sided second-order
    /// formula was used instead.
    pub one_sided: bool,
}

/// Central difference `(g(x+h,t) − g(x−h,t)) / 2h` with default
/// `h = max(1e-6, 1e-6·|x|)`. Near a domain edge the stencil switches to
/// the one-sided second-order formula and raises `one_sided`.
pub fn finite_diff_gprime<G>(g: &G, x: f64, t: f64, h: Option<f64>, domain: &Domain) -> GPrime
where
    G: Fn(f64, f64) -> f64 + ?Sized,
{
    let h = h.unwrap_or_else(|| 1e-6_f64.max(1e-6 * x.abs()));
    let left_ok = x - h >= domain.lo;
    let right_ok = x + h <= domain.hi;
    if left_ok && right_ok {
        return GPrime { value: (g(x + h, t) - g(x - h, t)) / (2.0 * h), one_sided: false };
    }
    let value = if x + 2.0 * h <= domain.hi {
        (-3.0 * g(x, t) + 4.0 * g(x + h, t) - g(x + 2.0 * h, t)) / (2.0 * h)
    } else if x - 2.0 * h >= domain.lo {
        (3.0 * g(x, t) - 4.0 * g(x - h, t) + g(x - 2.0 * h, t)) / (2.0 * h)
    } else {
        f64::NAN
    };
    GPrime { value, one_sided: true }
}

fn shifted(model: &SdeModel, weight: f64, target: Interpretation) -> SdeModel {
    let f = model.drift.clone();
    let g = model.diffusion.clone();
    let dg = model.dgdx.clone();
    let domain = model.domain;
    let drift: Coef = match dg {
        Some(d) => Arc::new(move |x, t| f(x, t) + weight * g(x, t) * d(x, t)),
        None => Arc::new(move |x, t| {
            let gp = finite_diff_gprime(&*g, x, t, None, &domain).value;
            f(x, t) + weight * g(x, t) * gp
        }),
    };
    SdeModel { drift, interpretation: target, ..model.clone() }
}

/// Itô form: drift `f + g·∂ₓg` (HK) or `f + ½·g·∂ₓg` (Stratonovich); an
/// Itô model is returned unchanged.
///
/// The conversion composes coefficient functions; a failing `∂g/∂x`
/// surfaces as a non-finite drift at the offending point, which
/// [`SdeModel::drift_checked`] reports with its location.
pub fn to_ito(model: &SdeModel) -> SdeModel {
    match model.interpretation {
        Interpretation::Ito => model.clone(),
        other => shifted(model, other.ito_offset(), Interpretation::Ito),
    }
}

/// Inverse of [`to_ito`]: reinterprets an Itô model under `target`,
/// subtracting the corresponding multiple of `g·∂ₓg` from the drift.
pub fn from_ito(model: &SdeModel, target: Interpretation) -> Result<SdeModel> {
    if model.interpretation != Interpretation::Ito {
        return Err(invalid(format!("from_ito needs an Itô model, got {}", model.interpretation)));
    }
    Ok(match target {
        Interpretation::Ito => model.clone(),
        other => shifted(model, -other.ito_offset(), other),
    })
}

/// Re-expresses `model` under `target` with the same law.
pub fn convert(model: &SdeModel, target: Interpretation) -> Result<SdeModel> {
    if model.interpretation == target {
        return Ok(model.clone());
    }
    from_ito(&to_ito(model), target)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinetic(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, i: Interpretation) -> SdeModel {
        SdeModel::new(f, |k: f64, _| (2.0 * k).sqrt(), i, Domain::positive(), 1.0).unwrap()
    }

    #[test]
    fn hk_kinetic_to_ito() {
        let hk = kinetic(|k, _| -0.5 - 2.0 * k, Interpretation::HaenggiKlimontovich);
        assert_eq!(hk.drift(1.0, 0.0), -2.5);
        let ito = to_ito(&hk);
        assert_eq!(ito.interpretation, Interpretation::Ito);
        assert!((ito.drift(1.0, 0.0) + 1.5).abs() < 1e-8);
        let analytic = hk.clone().with_dgdx(|k, _| 1.0 / (2.0 * k).sqrt());
        assert!((to_ito(&analytic).drift(1.0, 0.0) + 1.5).abs() < 1e-14);
    }

    #[test]
    fn strat_kinetic_to_ito() {
        let s = kinetic(|k, _| -2.0 * k, Interpretation::Stratonovich).with_dgdx(|k, _| 1.0 / (2.0 * k).sqrt());
        assert!((to_ito(&s).drift(1.0, 0.0) + 1.5).abs() < 1e-14);
    }

    #[test]
    fn ito_to_hk() {
        let ito = kinetic(|k, _| 0.5 - 2.0 * k, Interpretation::Ito).with_dgdx(|k, _| 1.0 / (2.0 * k).sqrt());
        let hk = from_ito(&ito, Interpretation::HaenggiKlimontovich).unwrap();
        for k in [0.1, 1.0, 3.0] {
            assert!((hk.drift(k, 0.0) - (-0.5 - 2.0 * k)).abs() < 1e-12);
        }
        let same = from_ito(&ito, Interpretation::Ito).unwrap();
        assert!(Arc::ptr_eq(same.drift_coef(), ito.drift_coef()));
        assert!(from_ito(&hk, Interpretation::Ito).is_err());
    }

    #[test]
    fn state_independent_noise_leaves_drift_unchanged() {
        for i in Interpretation::ALL {
            let m = SdeModel::new(|x, _| -x, |_, t| 1.0 + t, i, Domain::real_line(), 0.0).unwrap();
            let ito = to_ito(&m);
            for x in [-2.0, 0.3, 5.0] {
                assert_eq!(ito.drift(x, 0.7), -x);
            }
        }
    }

    #[test]
    fn round_trip() {
        for i in Interpretation::ALL {
            let m = SdeModel::new(|x, t| x.sin() - t, |x, _| 1.0 + 0.5 * x.cos(), i, Domain::real_line(), 0.0).unwrap();
            let back = convert(&to_ito(&m), i).unwrap();
            for k in 0..100 {
                let x = -3.0 + 0.06 * k as f64;
                assert!((back.drift(x, 0.2) - m.drift(x, 0.2)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn offset_ladder() {
        let g = |x: f64, _| 1.0 + x * x;
        let mk = |i| SdeModel::new(|_, _| 0.3, g, i, Domain::real_line(), 0.0).unwrap().with_dgdx(|x, _| 2.0 * x);
        let x = 0.8;
        let d: Vec<f64> = Interpretation::ALL.iter().map(|&i| to_ito(&mk(i)).drift(x, 0.0)).collect();
        assert!(d[2] > d[1] && d[1] > d[0]);
    }

    #[test]
    fn finite_differences() {
        let d = Domain::real_line();
        let r = finite_diff_gprime(&|x: f64, _| x * x, 3.0, 0.0, None, &d);
        assert!((r.value - 6.0).abs() < 1e-6);
        assert!(!r.one_sided);
        let c = finite_diff_gprime(&|_: f64, _| 4.2, 1.0, 0.0, None, &d);
        assert!(c.value.abs() < 1e-9);
        let s = finite_diff_gprime(&|x: f64, _| (2.0 * x).sqrt(), 1e-8, 0.0, None, &Domain::positive());
        assert!(s.one_sided);
        assert!(s.value.is_finite());
    }

    #[test]
    fn domain_admission() {
        let d = Domain::positive();
        assert_eq!(d.admit(-1e-13), Some(0.0));
        assert_eq!(d.admit(-1e-9), None);
        assert_eq!(d.admit(2.0), Some(2.0));
        assert!(Domain::new(1.0, 1.0).is_err());
        assert!(SdeModel::new(|_, _| 0.0, |_, _| 1.0, Interpretation::Ito, d, -1.0).is_err());
    }
}
