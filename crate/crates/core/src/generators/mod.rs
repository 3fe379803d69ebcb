//! Deterministic BSDE drivers `f(t, y, z)` with scalar `z`.
//!
//! A [`Generator`] carries its declared growth class and constants next to
//! the evaluation closure so that regularization, solvers and bound checks
//! can read them without re-deriving anything.

mod registry;
mod validate;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub(crate) use registry::parse_call;
pub(crate) use validate::excess;
pub use registry::parse_generator;
pub use validate::{
    validate_growth, validate_local_z_lipschitz, validate_y_lipschitz, Domain, Property,
    SamplePlan, ValidationReport, ViolationTracker, Witness,
};

/// Driver closure `(t, y, z) -> f(t, y, z)`.
pub type DriverFn = dyn Fn(f64, f64, f64) -> f64 + Send + Sync;

/// Which growth assumption the generator claims.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrowthClass {
    /// `|f| <= L(1 + |y| + |z|^2)`
    Quadratic,
    /// `|f| <= L(1 + |y| + |z|)`
    Linear,
}

impl fmt::Display for GrowthClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GrowthClass::Quadratic => f.write_str("quadratic"),
            GrowthClass::Linear => f.write_str("linear"),
        }
    }
}

#[derive(Clone)]
pub struct Generator {
    eval: Arc<DriverFn>,
    growth: GrowthClass,
    lipschitz: f64,
    z_lipschitz: Option<f64>,
    // coefficient of the z-term inside the growth bound; 2 after quadratic convolution
    z_growth_factor: f64,
    label: String,
}

impl fmt::Debug for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Generator")
            .field("label", &self.label)
            .field("growth", &self.growth)
            .field("lipschitz", &self.lipschitz)
            .field("z_lipschitz", &self.z_lipschitz)
            .finish()
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite and > 0, got {value}")))
    }
}

impl Generator {
    pub fn new<F>(label: impl Into<String>, growth: GrowthClass, lipschitz: f64, f: F) -> Result<Self>
    where
        F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        check_positive("L", lipschitz)?;
        Ok(Self {
            eval: Arc::new(f),
            growth,
            lipschitz,
            z_lipschitz: None,
            z_growth_factor: 1.0,
            label: label.into(),
        })
    }

    /// Attaches the local z-Lipschitz constant `K` of
    /// `|f(t,y,z) - f(t,y,z')| <= K(1 + |z| + |z'|)|z - z'|`.
    pub fn with_local_z_lipschitz(mut self, k: f64) -> Result<Self> {
        check_positive("K", k)?;
        self.z_lipschitz = Some(k);
        Ok(self)
    }

    /// Replaces the declared growth / y-Lipschitz constant. Nothing is
    /// re-verified; use the validation operations for that.
    pub fn with_lipschitz(mut self, lipschitz: f64) -> Result<Self> {
        check_positive("L", lipschitz)?;
        self.lipschitz = lipschitz;
        Ok(self)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    #[inline]
    pub fn eval(&self, t: f64, y: f64, z: f64) -> f64 {
        (self.eval)(t, y, z)
    }

    pub fn growth_class(&self) -> GrowthClass {
        self.growth
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn local_z_lipschitz(&self) -> Option<f64> {
        self.z_lipschitz
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Right-hand side of the declared growth inequality at `(y, z)`:
    /// `L(1 + |y| + c|z|^2)` or `L(1 + |y| + c|z|)`, where `c` is 1 except for
    /// quadratic-penalty convolutions (`c = 2`).
    pub fn growth_bound(&self, y: f64, z: f64) -> f64 {
        let c = self.z_growth_factor;
        match self.growth {
            GrowthClass::Quadratic => self.lipschitz * (1.0 + y.abs() + c * z * z),
            GrowthClass::Linear => self.lipschitz * (1.0 + y.abs() + c * z.abs()),
        }
    }

    pub fn z_growth_factor(&self) -> f64 {
        self.z_growth_factor
    }

    /// Re-declares a linear-growth generator as quadratic-growth.
    ///
    /// `1 + |y| + |z| <= 1.5 (1 + |y| + |z|^2)`, so the constant becomes `1.5 L`
    /// and the y-Lipschitz bound stays valid.
    pub fn as_quadratic(&self) -> Generator {
        match self.growth {
            GrowthClass::Quadratic => self.clone(),
            GrowthClass::Linear => Generator {
                eval: Arc::clone(&self.eval),
                growth: GrowthClass::Quadratic,
                lipschitz: 1.5 * self.lipschitz,
                z_lipschitz: self.z_lipschitz,
                z_growth_factor: self.z_growth_factor,
                label: self.label.clone(),
            },
        }
    }

    /// Truncates the z-argument at radius `m`: `f(t, y, m z/|z|)` for `|z| > m`.
    ///
    /// Inside the radius the original closure is called unchanged. The growth
    /// class and constants of `self` remain valid for the result.
    pub fn localize(&self, m: f64) -> Result<Generator> {
        check_positive("M", m)?;
        let inner = Arc::clone(&self.eval);
        let eval: Arc<DriverFn> = Arc::new(move |t, y, z: f64| {
            if z.abs() <= m {
                inner(t, y, z)
            } else {
                inner(t, y, m.copysign(z))
            }
        });
        Ok(Generator {
            eval,
            growth: self.growth,
            lipschitz: self.lipschitz,
            z_lipschitz: self.z_lipschitz,
            z_growth_factor: self.z_growth_factor,
            label: format!("localize({}, {m})", self.label),
        })
    }

    pub(crate) fn from_parts(
        label: String,
        growth: GrowthClass,
        lipschitz: f64,
        z_lipschitz: Option<f64>,
        z_growth_factor: f64,
        eval: Arc<DriverFn>,
    ) -> Generator {
        Generator {
            eval,
            growth,
            lipschitz,
            z_lipschitz,
            z_growth_factor,
            label,
        }
    }
}
