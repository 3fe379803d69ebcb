//! Sampling-based checks of the growth and Lipschitz assumptions.
//!
//! Every check walks a deterministic stratified grid first and then a
//! seeded pseudorandom cloud over the same box, so a reported witness can
//! always be reproduced from `(domain, count, seed)`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Generator, GrowthClass};
use crate::error::{Error, Result};

/// Relative allowance for floating-point rounding in every inequality check.
pub const ROUNDOFF: f64 = 64.0 * f64::EPSILON;

/// `lhs - rhs` minus a rounding allowance proportional to the magnitudes in play.
pub(crate) fn excess(lhs: f64, rhs: f64, scale: f64) -> f64 {
    lhs - rhs - ROUNDOFF * scale.abs().max(lhs.abs()).max(rhs.abs()).max(1.0)
}

/// Pair separations used by the Lipschitz checks.
pub const PAIR_SCALES: [f64; 3] = [1e-4, 1e-2, 1.0];

/// Closed box in `(t, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Domain {
    pub t: (f64, f64),
    pub y: (f64, f64),
    pub z: (f64, f64),
}

impl Domain {
    pub fn new(t: (f64, f64), y: (f64, f64), z: (f64, f64)) -> Result<Self> {
        for (name, (lo, hi)) in [("domain.t", t), ("domain.y", y), ("domain.z", z)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid(name, format!("need finite lo <= hi, got [{lo}, {hi}]")));
            }
        }
        Ok(Self { t, y, z })
    }

    /// `[0, horizon] x [-y_radius, y_radius] x [-z_radius, z_radius]`.
    pub fn symmetric(horizon: f64, y_radius: f64, z_radius: f64) -> Result<Self> {
        Self::new((0.0, horizon), (-y_radius, y_radius), (-z_radius, z_radius))
    }
}

/// The property a [`ValidationReport`] refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum Property {
    /// `|f| <= L(1+|y|+|z|^2)`.
    QuadraticGrowth,
    /// `|f| <= L(1+|y|+|z|)`.
    LinearGrowth,
    /// Lipschitz in `y` with constant `L`.
    YLipschitz,
    /// Local z-Lipschitz bound with constant `K`.
    LocalZLipschitz,
    /// Growth bound of a convolved generator.
    RegularizedGrowth,
    /// Monotonicity of a convolved generator in the index `n`.
    MonotoneInN,
    /// Convergence `f_n(t, y, z_n) -> f(t, y, z)`.
    PointwiseConvergence,
    /// Joint Lipschitz estimate of a convolved generator.
    RegularizedLipschitz,
    /// `sup-convolution >= f >= inf-convolution`.
    Ordering,
    /// Linear-penalty convolution reproduces a Lipschitz driver.
    FixedPoint,
    /// Y and Z bounds of a lattice solution.
    SolutionBounds,
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Point (or pair) achieving the worst violation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Witness {
    pub t: f64,
    pub y: f64,
    pub z: f64,
    pub y_alt: Option<f64>,
    pub z_alt: Option<f64>,
    pub n: Option<f64>,
}

impl Witness {
    pub fn point(t: f64, y: f64, z: f64) -> Self {
        Self {
            t,
            y,
            z,
            y_alt: None,
            z_alt: None,
            n: None,
        }
    }

    pub fn pair(t: f64, y: f64, z: f64, y_alt: f64, z_alt: f64) -> Self {
        Self {
            y_alt: Some(y_alt),
            z_alt: Some(z_alt),
            ..Self::point(t, y, z)
        }
    }

    pub fn with_n(mut self, n: f64) -> Self {
        self.n = Some(n);
        self
    }
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={} y={} z={}", self.t, self.y, self.z)?;
        if let Some(y) = self.y_alt {
            write!(f, " y'={y}")?;
        }
        if let Some(z) = self.z_alt {
            write!(f, " z'={z}")?;
        }
        if let Some(n) = self.n {
            write!(f, " n={n}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ValidationReport {
    pub assumption: Property,
    pub samples_tested: usize,
    /// `0` when every sample passed; `+inf` when a non-finite value was met.
    pub worst_violation: f64,
    /// Present iff `worst_violation > 0`.
    pub witness: Option<Witness>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.worst_violation == 0.0
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} samples, worst violation {:e}",
            self.assumption, self.samples_tested, self.worst_violation
        )?;
        if let Some(w) = &self.witness {
            write!(f, " at {w}")?;
        }
        Ok(())
    }
}

/// Running maximum of positive-part violations with the witness that set it.
#[derive(Debug, Clone)]
pub struct ViolationTracker {
    property: Property,
    samples: usize,
    worst: f64,
    witness: Option<Witness>,
}

impl ViolationTracker {
    pub fn new(property: Property) -> Self {
        Self {
            property,
            samples: 0,
            worst: 0.0,
            witness: None,
        }
    }

    /// Records `excess` (amount by which the inequality fails; `<= 0` is a
    /// pass). NaN counts as an infinite violation.
    pub fn record(&mut self, excess: f64, witness: impl FnOnce() -> Witness) {
        self.samples += 1;
        let v = if excess.is_nan() { f64::INFINITY } else { excess };
        if v > 0.0 && v > self.worst {
            self.worst = v;
            self.witness = Some(witness());
        }
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.samples += other.samples_tested;
        if other.worst_violation > self.worst {
            self.worst = other.worst_violation;
            self.witness = other.witness;
        }
    }

    pub fn finish(self) -> ValidationReport {
        ValidationReport {
            assumption: self.property,
            samples_tested: self.samples,
            worst_violation: self.worst,
            witness: self.witness,
        }
    }
}

/// Deterministic sample of points in a [`Domain`]: a stratified grid with an
/// odd number of nodes per axis (so centres and corners are hit) followed by
/// seeded uniform draws.
#[derive(Debug, Clone)]
pub struct SamplePlan {
    domain: Domain,
    count: usize,
    seed: u64,
}

fn axis_node(lo: f64, hi: f64, k: usize, nodes: usize) -> f64 {
    if nodes <= 1 {
        0.5 * (lo + hi)
    } else {
        lo + (hi - lo) * (k as f64) / ((nodes - 1) as f64)
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

impl SamplePlan {
    pub fn new(domain: Domain, count: usize, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::Precondition("sample count must be >= 1".into()));
        }
        Ok(Self {
            domain,
            count,
            seed,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Grid nodes per axis: the largest odd `g` with `g^3 <= count / 2`.
    fn grid_nodes(&self) -> usize {
        let budget = self.count / 2;
        let mut g = 1usize;
        while (g + 2).pow(3) <= budget {
            g += 2;
        }
        g
    }

    pub fn points(&self) -> Vec<(f64, f64, f64)> {
        let d = &self.domain;
        let g = self.grid_nodes();
        let mut out = Vec::with_capacity(self.count);
        'grid: for i in 0..g {
            for j in 0..g {
                for k in 0..g {
                    if out.len() == self.count {
                        break 'grid;
                    }
                    out.push((
                        axis_node(d.t.0, d.t.1, i, g),
                        axis_node(d.y.0, d.y.1, j, g),
                        axis_node(d.z.0, d.z.1, k, g),
                    ));
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        while out.len() < self.count {
            out.push((uniform(&mut rng, d.t), uniform(&mut rng, d.y), uniform(&mut rng, d.z)));
        }
        out
    }

    /// Base points paired with a partner coordinate at a stratified distance
    /// from [`PAIR_SCALES`]. The partner stays inside `range` when possible.
    pub fn pairs(&self, range: (f64, f64), pick: impl Fn(&(f64, f64, f64)) -> f64) -> Vec<((f64, f64, f64), f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9E37_79B9_7F4A_7C15);
        self.points()
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                let scale = PAIR_SCALES[i % PAIR_SCALES.len()];
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                let base = pick(&p);
                let mut other = base + sign * scale;
                if other < range.0 || other > range.1 {
                    other = base - sign * scale;
                }
                (p, other.clamp(range.0, range.1))
            })
            .collect()
    }
}

/// Worst `(|f| - bound)^+` of the declared growth inequality:
/// `L(1+|y|+|z|^2)` for quadratic generators, `L(1+|y|+|z|)` for linear ones.
pub fn validate_growth(g: &Generator, domain: &Domain, n_samples: usize, seed: u64) -> Result<ValidationReport> {
    let plan = SamplePlan::new(*domain, n_samples, seed)?;
    let property = match g.growth_class() {
        GrowthClass::Quadratic => Property::QuadraticGrowth,
        GrowthClass::Linear => Property::LinearGrowth,
    };
    let mut tracker = ViolationTracker::new(property);
    for (t, y, z) in plan.points() {
        let v = g.eval(t, y, z);
        let excess = if v.is_finite() {
            excess(v.abs(), g.growth_bound(y, z), 0.0)
        } else {
            f64::INFINITY
        };
        tracker.record(excess, || Witness::point(t, y, z));
    }
    Ok(tracker.finish())
}

/// Worst `(|f(t,y,z) - f(t,y',z)| - L|y - y'|)^+` over sampled pairs.
pub fn validate_y_lipschitz(g: &Generator, domain: &Domain, n_pairs: usize, seed: u64) -> Result<ValidationReport> {
    let plan = SamplePlan::new(*domain, n_pairs, seed)?;
    let l = g.lipschitz();
    let mut tracker = ViolationTracker::new(Property::YLipschitz);
    for ((t, y, z), y2) in plan.pairs(domain.y, |p| p.1) {
        let (a, b) = (g.eval(t, y, z), g.eval(t, y2, z));
        let excess = if a.is_finite() && b.is_finite() {
            excess((a - b).abs(), l * (y - y2).abs(), a.abs().max(b.abs()))
        } else {
            f64::INFINITY
        };
        tracker.record(excess, || Witness::pair(t, y, z, y2, z));
    }
    Ok(tracker.finish())
}

/// Worst `(|f(t,y,z) - f(t,y,z')| - K(1+|z|+|z'|)|z - z'|)^+` over sampled pairs.
pub fn validate_local_z_lipschitz(
    g: &Generator,
    domain: &Domain,
    n_pairs: usize,
    seed: u64,
) -> Result<ValidationReport> {
    let k = g.local_z_lipschitz().ok_or_else(|| {
        Error::Precondition(format!("generator `{}` declares no local z-Lipschitz constant K", g.label()))
    })?;
    let plan = SamplePlan::new(*domain, n_pairs, seed)?;
    let mut tracker = ViolationTracker::new(Property::LocalZLipschitz);
    for ((t, y, z), z2) in plan.pairs(domain.z, |p| p.2) {
        let (a, b) = (g.eval(t, y, z), g.eval(t, y, z2));
        let excess = if a.is_finite() && b.is_finite() {
            excess(
                (a - b).abs(),
                k * (1.0 + z.abs() + z2.abs()) * (z - z2).abs(),
                a.abs().max(b.abs()),
            )
        } else {
            f64::INFINITY
        };
        tracker.record(excess, || Witness::pair(t, y, z, y, z2));
    }
    Ok(tracker.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::parse_generator;

    fn box5() -> Domain {
        Domain::symmetric(1.0, 5.0, 5.0).unwrap()
    }

    #[test]
    fn growth_examples() {
        let g = Generator::new("z^2", GrowthClass::Quadratic, 1.0, |_, _, z| z * z).unwrap();
        let r = validate_growth(&g, &box5(), 2000, 1).unwrap();
        assert_eq!(r.worst_violation, 0.0);
        assert!(r.witness.is_none());
        assert_eq!(r.assumption, Property::QuadraticGrowth);

        let g = Generator::new("2z^2", GrowthClass::Quadratic, 1.0, |_, _, z| 2.0 * z * z).unwrap();
        let r = validate_growth(&g, &box5(), 2000, 1).unwrap();
        assert!(r.worst_violation >= 24.0 - 1e-9, "{r}");
        let w = r.witness.unwrap();
        assert_eq!((w.y, w.z.abs()), (0.0, 5.0));

        let g = parse_generator("trig(1, 1)").unwrap();
        let r = validate_growth(&g, &box5(), 2000, 1).unwrap();
        assert_eq!(r.worst_violation, 0.0);
        assert_eq!(r.assumption, Property::LinearGrowth);
    }

    #[test]
    fn non_finite_values_are_reported() {
        let g = Generator::new("blowup", GrowthClass::Linear, 1.0, |_, _, z| 1.0 / z).unwrap();
        let r = validate_growth(&g, &box5(), 500, 3).unwrap();
        assert_eq!(r.worst_violation, f64::INFINITY);
        assert_eq!(r.witness.unwrap().z, 0.0);
    }

    #[test]
    fn y_lipschitz_examples() {
        let g = Generator::new("y+z^2", GrowthClass::Quadratic, 1.0, |_, y, z| y + z * z).unwrap();
        assert_eq!(validate_y_lipschitz(&g, &box5(), 1000, 7).unwrap().worst_violation, 0.0);

        let g = Generator::new("2y", GrowthClass::Linear, 1.0, |_, y, _| 2.0 * y).unwrap();
        let r = validate_y_lipschitz(&g, &box5(), 1000, 7).unwrap();
        assert!(r.worst_violation > 0.0);
        let w = r.witness.unwrap();
        assert_ne!(w.y, w.y_alt.unwrap());

        let g = Generator::new("z", GrowthClass::Linear, 0.01, |_, _, z| z).unwrap();
        assert_eq!(validate_y_lipschitz(&g, &box5(), 1000, 7).unwrap().worst_violation, 0.0);
    }

    #[test]
    fn local_z_lipschitz_examples() {
        let sq = Generator::new("z^2", GrowthClass::Quadratic, 1.0, |_, _, z| z * z)
            .unwrap()
            .with_local_z_lipschitz(1.0)
            .unwrap();
        assert_eq!(validate_local_z_lipschitz(&sq, &box5(), 1000, 2).unwrap().worst_violation, 0.0);

        let abs = parse_generator("abs").unwrap();
        assert_eq!(validate_local_z_lipschitz(&abs, &box5(), 1000, 2).unwrap().worst_violation, 0.0);

        let no_k = Generator::new("z^2", GrowthClass::Quadratic, 1.0, |_, _, z| z * z).unwrap();
        assert!(matches!(
            validate_local_z_lipschitz(&no_k, &box5(), 10, 2),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn local_z_lipschitz_detects_steep_power() {
        let domain = Domain::symmetric(1.0, 1.0, 10.0).unwrap();
        let g = parse_generator("pow(1.5, 1)")
            .unwrap()
            .with_local_z_lipschitz(0.1)
            .unwrap();
        let r = validate_local_z_lipschitz(&g, &domain, 2000, 11).unwrap();

        // Dense grid over (z, z') pairs, independent of the sampler.
        let f = |z: f64| z.abs().powf(1.5);
        let mut oracle = 0.0_f64;
        let m = 401;
        for i in 0..m {
            let z = -10.0 + 20.0 * i as f64 / (m - 1) as f64;
            for j in 0..m {
                let z2 = -10.0 + 20.0 * j as f64 / (m - 1) as f64;
                let excess = (f(z) - f(z2)).abs() - 0.1 * (1.0 + z.abs() + z2.abs()) * (z - z2).abs();
                oracle = oracle.max(excess);
            }
        }
        assert!(oracle > 0.0);
        assert!(r.worst_violation > 0.0, "{r}");
        let w = r.witness.unwrap();
        let z2 = w.z_alt.unwrap();
        let replay = (f(w.z) - f(z2)).abs() - 0.1 * (1.0 + w.z.abs() + z2.abs()) * (w.z - z2).abs();
        assert!((replay - r.worst_violation).abs() < 1e-10);
    }

    #[test]
    fn reports_are_deterministic() {
        let g = parse_generator("pow(1.5, 1)").unwrap().with_local_z_lipschitz(0.1).unwrap();
        let a = validate_local_z_lipschitz(&g, &box5(), 777, 99).unwrap();
        let b = validate_local_z_lipschitz(&g, &box5(), 777, 99).unwrap();
        assert_eq!(a, b);
        let a = validate_growth(&g, &box5(), 777, 5).unwrap();
        let b = validate_growth(&g, &box5(), 777, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn plan_hits_centre_and_count() {
        let plan = SamplePlan::new(box5(), 300, 0).unwrap();
        let pts = plan.points();
        assert_eq!(pts.len(), 300);
        assert!(pts.iter().any(|&(_, y, z)| y == 0.0 && z == 5.0));
        assert!(SamplePlan::new(box5(), 0, 0).is_err());
    }
}
