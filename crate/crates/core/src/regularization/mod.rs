//! Sup- and inf-convolution of a driver in its `z` argument.
//!
//! For a penalty `p` (either `|u|^2` or `|u|`) and index `n`,
//!
//! ```text
//! sup-convolution:  f_n(t,y,z) = sup_v { f(t,y,v) - n p(z - v) }
//! inf-convolution:  f_n(t,y,z) = inf_v { f(t,y,v) + n p(z - v) }
//! ```
//!
//! The optimization over `v` is carried out on a certified interval
//! `[z - r, z + r]` that provably contains every optimizer, given the
//! generator's declared growth constant.

mod lemma;
pub mod search;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::generators::{DriverFn, Generator, GrowthClass};

pub use lemma::{
    verify_fixed_point, verify_lemma_bounds, verify_local_lipschitz, verify_monotone_in_n, verify_ordering,
    verify_pointwise_convergence, ConvergenceReport,
};

/// Margin required above the critical index (`2L` or `L`).
pub const INDEX_MARGIN: f64 = 1e-9;
/// Relative widening of the certified search radius.
pub const RADIUS_SAFETY: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Sup,
    Inf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Penalty {
    #[serde(rename = "quadratic")]
    QuadraticPenalty,
    #[serde(rename = "linear")]
    LinearPenalty,
}

impl Penalty {
    #[inline]
    fn apply(self, u: f64) -> f64 {
        match self {
            Penalty::QuadraticPenalty => u * u,
            Penalty::LinearPenalty => u.abs(),
        }
    }

    /// The growth class a generator must declare to be convolved with this penalty.
    pub fn growth_class(self) -> GrowthClass {
        match self {
            Penalty::QuadraticPenalty => GrowthClass::Quadratic,
            Penalty::LinearPenalty => GrowthClass::Linear,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Sup => "sup",
            Direction::Inf => "inf",
        })
    }
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Penalty::QuadraticPenalty => "quadratic",
            Penalty::LinearPenalty => "linear",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PenaltySpec {
    pub direction: Direction,
    pub penalty: Penalty,
    pub n: f64,
}

impl PenaltySpec {
    pub fn new(direction: Direction, penalty: Penalty, n: f64) -> Self {
        Self { direction, penalty, n }
    }

    pub fn with_n(self, n: f64) -> Self {
        Self { n, ..self }
    }

    /// Smallest admissible index is strictly above this value.
    pub fn critical_index(&self, lipschitz: f64) -> f64 {
        match self.penalty {
            Penalty::QuadraticPenalty => 2.0 * lipschitz,
            Penalty::LinearPenalty => lipschitz,
        }
    }

    /// Checks the index against the generator constant and the growth class
    /// against the penalty.
    pub fn check_against(&self, g: &Generator) -> Result<()> {
        if g.growth_class() != self.penalty.growth_class() {
            return Err(Error::Precondition(format!(
                "{} penalty needs a {}-growth generator, `{}` declares {} growth",
                self.penalty,
                self.penalty.growth_class(),
                g.label(),
                g.growth_class()
            )));
        }
        let critical = self.critical_index(g.lipschitz());
        if !(self.n.is_finite() && self.n - critical > INDEX_MARGIN) {
            let which = match self.penalty {
                Penalty::QuadraticPenalty => "2L",
                Penalty::LinearPenalty => "L",
            };
            return Err(Error::Precondition(format!(
                "{} {} convolution needs n > {which} = {critical} (margin {INDEX_MARGIN:e}), got n = {}",
                self.direction, self.penalty, self.n
            )));
        }
        Ok(())
    }

    /// Half-width `r` of an interval around `z` containing every optimizer.
    ///
    /// Quadratic penalty: `(n - 2L)|z - v|^2 <= 2L(1 + |y| + 2|z|^2)`.
    /// Linear penalty: `(n - L)|z - v| <= 2L(1 + |y| + |z|)`.
    /// Both are widened by [`RADIUS_SAFETY`].
    pub fn certified_radius(&self, lipschitz: f64, y: f64, z: f64) -> f64 {
        let l = lipschitz;
        let raw = match self.penalty {
            Penalty::QuadraticPenalty => {
                (2.0 * l * (1.0 + y.abs() + 2.0 * z * z) / (self.n - 2.0 * l)).sqrt()
            }
            Penalty::LinearPenalty => 2.0 * l * (1.0 + y.abs() + z.abs()) / (self.n - l),
        };
        RADIUS_SAFETY * raw
    }
}

impl fmt::Display for PenaltySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}(n={})", self.direction, self.penalty, self.n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub coarse_points: usize,
    pub refine_iters: usize,
    /// Accuracy of a convolution value, relative to `max(1, |value|)`.
    pub tol: f64,
    /// Multiplies the certified radius; `1.0` in production.
    pub radius_scale: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            coarse_points: 257,
            refine_iters: 60,
            tol: 1e-8,
            radius_scale: 1.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.coarse_points < 16 {
            return Err(Error::invalid("coarse_points", format!("must be >= 16, got {}", self.coarse_points)));
        }
        if self.refine_iters < 20 {
            return Err(Error::invalid("refine_iters", format!("must be >= 20, got {}", self.refine_iters)));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::invalid("tol", format!("must be finite and > 0, got {}", self.tol)));
        }
        if !(self.radius_scale.is_finite() && self.radius_scale >= 1.0) {
            return Err(Error::invalid(
                "radius_scale",
                format!("must be >= 1 so the certified interval is kept, got {}", self.radius_scale),
            ));
        }
        Ok(())
    }

    /// Absolute tolerance at a value of magnitude `value`.
    pub fn tol_at(&self, value: f64) -> f64 {
        self.tol * value.abs().max(1.0)
    }
}

/// One convolution evaluation with explicit inputs; used by [`convolve`] and
/// by the diagnostics that need the optimizer location.
pub fn convolve_at(g: &Generator, spec: &PenaltySpec, opt: &OptimizerConfig, t: f64, y: f64, z: f64) -> search::Maximum {
    let r = opt.radius_scale * spec.certified_radius(g.lipschitz(), y, z);
    let n = spec.n;
    let pen = spec.penalty;
    match spec.direction {
        Direction::Sup => search::maximize_around(
            |v| g.eval(t, y, v) - n * pen.apply(z - v),
            z,
            r,
            opt.coarse_points,
            opt.refine_iters,
        ),
        Direction::Inf => {
            let m = search::maximize_around(
                |v| -(g.eval(t, y, v) + n * pen.apply(z - v)),
                z,
                r,
                opt.coarse_points,
                opt.refine_iters,
            );
            search::Maximum {
                argmax: m.argmax,
                value: -m.value,
            }
        }
    }
}

/// Builds the convolved generator.
///
/// The result keeps the y-Lipschitz constant `L` of `g`; its growth bound is
/// `L(1 + |y| + 2|z|^2)` (quadratic penalty) or `L(1 + |y| + |z|)` (linear
/// penalty), and its local z-Lipschitz constant is `n`.
pub fn convolve(g: &Generator, spec: PenaltySpec, opt: OptimizerConfig) -> Result<Generator> {
    spec.check_against(g)?;
    opt.validate()?;
    let base = g.clone();
    let eval: Arc<DriverFn> = Arc::new(move |t, y, z| convolve_at(&base, &spec, &opt, t, y, z).value);
    let factor = match spec.penalty {
        Penalty::QuadraticPenalty => 2.0,
        Penalty::LinearPenalty => 1.0,
    };
    Ok(Generator::from_parts(
        format!("{spec}[{}]", g.label()),
        g.growth_class(),
        g.lipschitz(),
        Some(spec.n),
        factor,
        eval,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::parse_generator;

    fn square() -> Generator {
        parse_generator("quad(2)").unwrap()
    }

    fn at(g: &Generator, z: f64) -> f64 {
        g.eval(0.0, 0.0, z)
    }

    #[test]
    fn sup_quadratic_of_square() {
        let g = convolve(
            &square(),
            PenaltySpec::new(Direction::Sup, Penalty::QuadraticPenalty, 4.0),
            OptimizerConfig::default(),
        )
        .unwrap();
        assert!((at(&g, 1.0) - 4.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn inf_quadratic_of_square() {
        let g = convolve(
            &square(),
            PenaltySpec::new(Direction::Inf, Penalty::QuadraticPenalty, 4.0),
            OptimizerConfig::default(),
        )
        .unwrap();
        assert!((at(&g, 1.0) - 0.8).abs() < 1e-10);
    }

    #[test]
    fn constants_are_fixed() {
        let c = parse_generator("const(0.7)").unwrap();
        for (dir, pen, n) in [
            (Direction::Sup, Penalty::LinearPenalty, 1.5),
            (Direction::Inf, Penalty::LinearPenalty, 3.0),
        ] {
            let g = convolve(&c, PenaltySpec::new(dir, pen, n), OptimizerConfig::default()).unwrap();
            for z in [-3.0, 0.0, 2.5] {
                assert_eq!(at(&g, z), 0.7);
            }
        }
        let q = c.as_quadratic();
        let g = convolve(
            &q,
            PenaltySpec::new(Direction::Sup, Penalty::QuadraticPenalty, 4.0),
            OptimizerConfig::default(),
        )
        .unwrap();
        assert_eq!(at(&g, 1.0), 0.7);
    }

    #[test]
    fn inf_linear_of_abs_is_identity() {
        let g = convolve(
            &parse_generator("abs").unwrap(),
            PenaltySpec::new(Direction::Inf, Penalty::LinearPenalty, 1.0 + 1e-6),
            OptimizerConfig::default(),
        )
        .unwrap();
        assert!((at(&g, 2.0) - 2.0).abs() < 1e-8);
    }

    #[test]
    fn index_preconditions() {
        let err = convolve(
            &square(),
            PenaltySpec::new(Direction::Sup, Penalty::QuadraticPenalty, 2.0),
            OptimizerConfig::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("2L = 2"), "{err}");
        // growth class must match the penalty
        assert!(convolve(
            &square(),
            PenaltySpec::new(Direction::Sup, Penalty::LinearPenalty, 10.0),
            OptimizerConfig::default(),
        )
        .is_err());
        let abs = parse_generator("abs").unwrap();
        assert!(convolve(
            &abs,
            PenaltySpec::new(Direction::Inf, Penalty::LinearPenalty, 1.0),
            OptimizerConfig::default(),
        )
        .is_err());
    }

    #[test]
    fn optimizer_config_invariants() {
        let ok = OptimizerConfig::default();
        assert!(ok.validate().is_ok());
        assert!(OptimizerConfig { coarse_points: 15, ..ok }.validate().is_err());
        assert!(OptimizerConfig { refine_iters: 19, ..ok }.validate().is_err());
        assert!(OptimizerConfig { tol: 0.0, ..ok }.validate().is_err());
        assert!(OptimizerConfig { radius_scale: 0.5, ..ok }.validate().is_err());
    }

    #[test]
    fn optimizer_lies_inside_certified_interval() {
        let spec = PenaltySpec::new(Direction::Sup, Penalty::QuadraticPenalty, 3.0);
        let g = square();
        let opt = OptimizerConfig::default();
        for z in [-3.0, -1.0, 0.0, 0.5, 3.0] {
            let m = convolve_at(&g, &spec, &opt, 0.0, 0.0, z);
            let r = spec.certified_radius(1.0, 0.0, z) / RADIUS_SAFETY;
            assert!((m.argmax - z).abs() <= r, "z={z} argmax={} r={r}", m.argmax);
        }
    }

    #[test]
    fn widening_the_radius_does_not_move_the_value() {
        let base = OptimizerConfig::default();
        let wide = OptimizerConfig { radius_scale: 3.0, coarse_points: 3 * 257, ..base };
        for name in ["quad(2)", "pow(1.5, 1)"] {
            let g = parse_generator(name).unwrap();
            for dir in [Direction::Sup, Direction::Inf] {
                let spec = PenaltySpec::new(dir, Penalty::QuadraticPenalty, 4.0);
                for z in [-2.0, -0.3, 0.0, 1.0, 2.7] {
                    let a = convolve_at(&g, &spec, &base, 0.0, 0.0, z).value;
                    let b = convolve_at(&g, &spec, &wide, 0.0, 0.0, z).value;
                    assert!((a - b).abs() < base.tol_at(a), "{name} {dir} z={z}: {a} vs {b}");
                }
            }
        }
    }
}
