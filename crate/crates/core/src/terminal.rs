//! Cylindrical terminal conditions `xi = phi(W_{t_1}, ..., W_{t_k})`.
//!
//! Every profile has the form `phi(x) = h(x_1 + ... + x_k)` for a scalar
//! function `h` with a closed-form derivative, so
//! `D_t xi = sum_{i : t <= t_i} h'(x_1 + ... + x_k)`.

use std::fmt;

use crate::error::{Error, Result};
use crate::generators::parse_call;

/// Largest number of observation times accepted by [`TerminalCondition::estimate_bounds`].
pub const MAX_GRID_DIMENSION: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub enum Profile {
    /// `a x`
    Identity(f64),
    /// `a sin x`
    Sin(f64),
    /// `a cos x`
    Cos(f64),
    /// `a tanh x`
    Tanh(f64),
    /// `c`
    Const(f64),
}

impl Profile {
    fn value(self, s: f64) -> f64 {
        match self {
            Profile::Identity(a) => a * s,
            Profile::Sin(a) => a * s.sin(),
            Profile::Cos(a) => a * s.cos(),
            Profile::Tanh(a) => a * s.tanh(),
            Profile::Const(c) => c,
        }
    }

    fn derivative(self, s: f64) -> f64 {
        match self {
            Profile::Identity(a) => a,
            Profile::Sin(a) => a * s.cos(),
            Profile::Cos(a) => -a * s.sin(),
            Profile::Tanh(a) => {
                let c = s.cosh();
                a / (c * c)
            }
            Profile::Const(_) => 0.0,
        }
    }

    /// `sup |h|`, `None` when unbounded.
    fn sup(self) -> Option<f64> {
        match self {
            Profile::Identity(a) => (a == 0.0).then_some(0.0),
            Profile::Sin(a) | Profile::Cos(a) | Profile::Tanh(a) => Some(a.abs()),
            Profile::Const(c) => Some(c.abs()),
        }
    }

    /// `sup |h'|`
    fn derivative_sup(self) -> f64 {
        match self {
            Profile::Identity(a) | Profile::Sin(a) | Profile::Cos(a) | Profile::Tanh(a) => a.abs(),
            Profile::Const(_) => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TerminalCondition {
    horizon: f64,
    obs_times: Vec<f64>,
    profile: Profile,
    offset: f64,
    sup_bound: Option<f64>,
    malliavin_bound: f64,
    label: String,
}

/// Grid maxima of `|phi|` and `max_t |D_t xi|`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct BoundEstimate {
    pub sup_estimate: f64,
    pub malliavin_estimate: f64,
    /// Grid spacing per axis.
    pub grid_spacing: f64,
    /// `true` when the sup estimate at the full radius exceeds the one at half
    /// the radius by more than 0.1% (an unbounded `xi`).
    pub sup_grows_with_radius: bool,
}

fn parse_time(token: &str, horizon: f64, full: &str) -> Result<f64> {
    let tok: String = token.chars().filter(|c| !c.is_whitespace()).collect();
    let err = |reason: &str| Error::Parse {
        what: "observation time",
        input: full.to_string(),
        reason: format!("`{tok}`: {reason}"),
    };
    let num = |s: &str| s.parse::<f64>().map_err(|e| err(&e.to_string()));
    // `[c][*]T[/m]` or a plain number
    let Some((head, tail)) = tok.split_once('T') else {
        return num(&tok);
    };
    let coef = match head.strip_suffix('*').unwrap_or(head) {
        "" => 1.0,
        c => num(c)?,
    };
    let den = match tail {
        "" => 1.0,
        t => num(t.strip_prefix('/').ok_or_else(|| err("expected `/` after `T`"))?)?,
    };
    Ok(coef * horizon / den)
}

impl TerminalCondition {
    /// Builds a terminal condition with declared bounds taken from the
    /// profile: `sup |h|` and `k sup |h'|`.
    pub fn new(horizon: f64, obs_times: Vec<f64>, profile: Profile) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid("T", format!("must be finite and > 0, got {horizon}")));
        }
        if obs_times.is_empty() {
            return Err(Error::invalid("obs_times", "need at least one observation time"));
        }
        if obs_times.iter().any(|&t| !(t > 0.0 && t <= horizon * (1.0 + 1e-12))) {
            return Err(Error::invalid("obs_times", format!("times must lie in (0, T], got {obs_times:?}")));
        }
        if obs_times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("obs_times", format!("must be strictly increasing, got {obs_times:?}")));
        }
        let k = obs_times.len() as f64;
        Ok(Self {
            horizon,
            sup_bound: profile.sup(),
            malliavin_bound: k * profile.derivative_sup(),
            label: format!("{profile:?}@{obs_times:?}"),
            obs_times,
            profile,
            offset: 0.0,
        })
    }

    /// Parses `sin@T`, `sin(3)@T`, `tanh@[T/2,T]`, `identity@T`,
    /// `const(0.5)@T`, `cos(2)@[0.25, 0.5T, T]`, `sin(1, -0.1)@T`. The first
    /// parameter is the amplitude `a` (or the constant `c`), the optional
    /// second one an additive offset; times may be `T`, `T/m`, `cT`, `c*T`, or
    /// an absolute number.
    pub fn parse(expr: &str, horizon: f64) -> Result<Self> {
        let (head, times) = expr.split_once('@').ok_or_else(|| Error::Parse {
            what: "terminal condition",
            input: expr.to_string(),
            reason: "expected `<profile>@<times>`".into(),
        })?;
        let (name, params) = parse_call(head)?;
        let (amplitude, offset) = match params.as_slice() {
            [] => (1.0, 0.0),
            [a] => (*a, 0.0),
            [a, c] => (*a, *c),
            _ => {
                return Err(Error::Parse {
                    what: "terminal condition",
                    input: expr.to_string(),
                    reason: "at most two parameters (amplitude, offset)".into(),
                })
            }
        };
        let profile = match name.as_str() {
            "identity" => Profile::Identity(amplitude),
            "sin" => Profile::Sin(amplitude),
            "cos" => Profile::Cos(amplitude),
            "tanh" => Profile::Tanh(amplitude),
            "const" => Profile::Const(if params.is_empty() { 0.0 } else { amplitude }),
            _ => {
                return Err(Error::UnknownName {
                    kind: "terminal profile",
                    name,
                })
            }
        };
        let times = times.trim();
        let obs = if let Some(list) = times.strip_prefix('[') {
            let list = list.strip_suffix(']').ok_or_else(|| Error::Parse {
                what: "terminal condition",
                input: expr.to_string(),
                reason: "missing `]`".into(),
            })?;
            list.split(',')
                .map(|tok| parse_time(tok, horizon, expr))
                .collect::<Result<Vec<_>>>()?
        } else {
            vec![parse_time(times, horizon, expr)?]
        };
        Ok(Self::new(horizon, obs, profile)?.with_offset(offset)?.with_label(expr.trim()))
    }

    /// Adds a constant to `xi`; the declared sup bound grows by `|offset|`.
    pub fn with_offset(mut self, offset: f64) -> Result<Self> {
        if !offset.is_finite() {
            return Err(Error::invalid("offset", format!("must be finite, got {offset}")));
        }
        self.sup_bound = self.sup_bound.map(|b| b - self.offset.abs() + offset.abs());
        self.offset = offset;
        Ok(self)
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Overrides the declared `sup |xi|` (`None` = unbounded).
    pub fn with_sup_bound(mut self, bound: Option<f64>) -> Result<Self> {
        if let Some(b) = bound {
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::invalid("sup_bound", format!("must be finite and >= 0, got {b}")));
            }
        }
        self.sup_bound = bound;
        Ok(self)
    }

    /// Overrides the declared bound on `|D_t xi|`.
    pub fn with_malliavin_bound(mut self, bound: f64) -> Result<Self> {
        if !(bound.is_finite() && bound >= 0.0) {
            return Err(Error::invalid("malliavin_bound", format!("must be finite and >= 0, got {bound}")));
        }
        self.malliavin_bound = bound;
        Ok(self)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn obs_times(&self) -> &[f64] {
        &self.obs_times
    }

    pub fn dimension(&self) -> usize {
        self.obs_times.len()
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    pub fn sup_bound(&self) -> Option<f64> {
        self.sup_bound
    }

    pub fn malliavin_bound(&self) -> f64 {
        self.malliavin_bound
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// A single observation at the horizon: the functional depends on `W_T` only.
    pub fn is_markovian(&self) -> bool {
        self.obs_times.len() == 1 && (self.obs_times[0] - self.horizon).abs() <= 1e-12 * self.horizon
    }

    fn check_len(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.obs_times.len() {
            return Err(Error::Precondition(format!(
                "terminal condition `{}` observes {} times, got {} values",
                self.label,
                self.obs_times.len(),
                w.len()
            )));
        }
        Ok(())
    }

    /// `phi(w_1, ..., w_k)`
    pub fn evaluate(&self, w: &[f64]) -> Result<f64> {
        self.check_len(w)?;
        Ok(self.value_unchecked(w))
    }

    #[inline]
    pub(crate) fn value_unchecked(&self, w: &[f64]) -> f64 {
        self.profile.value(w.iter().sum()) + self.offset
    }

    /// Markovian shortcut `phi(w)` for a single observation.
    #[inline]
    pub(crate) fn value_scalar(&self, w: f64) -> f64 {
        self.profile.value(w) + self.offset
    }

    /// `D_t xi = sum_{i : t <= t_i} d_i phi(w)`; zero once `t` passes `t_k`.
    pub fn malliavin_derivative(&self, w: &[f64], t: f64) -> Result<f64> {
        self.check_len(w)?;
        let slope = self.profile.derivative(w.iter().sum());
        let alive = self.obs_times.iter().filter(|&&ti| t <= ti).count();
        Ok(alive as f64 * slope)
    }

    fn grid_max(&self, radius: f64, points: usize) -> (f64, f64) {
        let k = self.dimension();
        let node = |i: usize| -radius + 2.0 * radius * i as f64 / (points - 1) as f64;
        let mut idx = vec![0usize; k];
        let mut w = vec![0.0; k];
        let (mut sup, mut mall) = (0.0_f64, 0.0_f64);
        loop {
            for (wi, &ii) in w.iter_mut().zip(&idx) {
                *wi = node(ii);
            }
            let s: f64 = w.iter().sum();
            sup = sup.max((self.profile.value(s) + self.offset).abs());
            // suffix sums over surviving terms: 1..=k of them
            let slope = self.profile.derivative(s).abs();
            mall = mall.max(k as f64 * slope);
            // odometer
            let mut d = 0;
            loop {
                if d == k {
                    return (sup, mall);
                }
                idx[d] += 1;
                if idx[d] < points {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
        }
    }

    /// Grid maxima over `[-radius, radius]^k` with `grid_points` nodes per axis.
    pub fn estimate_bounds(&self, grid_radius: f64, grid_points: usize) -> Result<BoundEstimate> {
        let k = self.dimension();
        if k > MAX_GRID_DIMENSION {
            return Err(Error::Precondition(format!(
                "bound estimation grids are limited to k <= {MAX_GRID_DIMENSION} observation times, got {k}"
            )));
        }
        if !(grid_radius.is_finite() && grid_radius > 0.0) {
            return Err(Error::invalid("grid_radius", format!("must be finite and > 0, got {grid_radius}")));
        }
        if grid_points < 2 {
            return Err(Error::invalid("grid_points", "need at least 2 points per axis"));
        }
        let (sup, mall) = self.grid_max(grid_radius, grid_points);
        let (sup_half, _) = self.grid_max(0.5 * grid_radius, grid_points);
        Ok(BoundEstimate {
            sup_estimate: sup,
            malliavin_estimate: mall,
            grid_spacing: 2.0 * grid_radius / (grid_points - 1) as f64,
            sup_grows_with_radius: sup > sup_half * (1.0 + 1e-3) + 1e-12,
        })
    }

    /// Declared bounds must not fall below the grid estimates minus
    /// `grid_tol`. An absent `sup_bound` claims nothing and always passes.
    pub fn certify(&self, est: &BoundEstimate, grid_tol: f64) -> Result<()> {
        if let Some(b) = self.sup_bound {
            if b < est.sup_estimate - grid_tol {
                return Err(Error::Precondition(format!(
                    "declared sup bound {b} is below the grid estimate {}",
                    est.sup_estimate
                )));
            }
            if est.sup_grows_with_radius {
                return Err(Error::Precondition(format!(
                    "declared sup bound {b} but |xi| grows with the grid radius"
                )));
            }
        }
        if self.malliavin_bound < est.malliavin_estimate - grid_tol {
            return Err(Error::Precondition(format!(
                "declared Malliavin bound {} is below the grid estimate {}",
                self.malliavin_bound, est.malliavin_estimate
            )));
        }
        Ok(())
    }
}

impl fmt::Display for TerminalCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluate_examples() {
        let id = TerminalCondition::parse("identity@T", 1.0).unwrap();
        assert_eq!(id.evaluate(&[0.7]).unwrap(), 0.7);
        let s = TerminalCondition::parse("sin@T", 1.0).unwrap();
        assert_eq!(s.evaluate(&[0.0]).unwrap(), 0.0);
        let th = TerminalCondition::parse("tanh@[T/2,T]", 1.0).unwrap();
        assert_eq!(th.evaluate(&[1.0, -1.0]).unwrap(), 0.0);
        assert!(th.evaluate(&[1.0]).is_err());
    }

    #[test]
    fn parses_times_and_amplitudes() {
        let tc = TerminalCondition::parse("cos(2)@[0.25, 0.5T, 3*T/4 ]", 2.0).unwrap();
        assert_eq!(tc.obs_times(), &[0.25, 1.0, 1.5]);
        assert_eq!(TerminalCondition::parse("sin@[T/3, 2T/3]", 3.0).unwrap().obs_times(), &[1.0, 2.0]);
        assert!(TerminalCondition::parse("sin@[T4]", 1.0).is_err());
        assert!(TerminalCondition::parse("sin@[xT]", 1.0).is_err());
        let tc = TerminalCondition::parse("cos(2)@[0.25, 0.5T, T]", 2.0).unwrap();
        assert_eq!(tc.obs_times(), &[0.25, 1.0, 2.0]);
        assert_eq!(tc.profile(), Profile::Cos(2.0));
        assert!(!tc.is_markovian());
        assert!(TerminalCondition::parse("sin(3)@T", 1.0).unwrap().is_markovian());
        assert!(TerminalCondition::parse("sin@[T, T/2]", 1.0).is_err());
        assert!(TerminalCondition::parse("sin@2", 1.0).is_err());
        assert!(TerminalCondition::parse("bump@T", 1.0).is_err());
        assert!(TerminalCondition::parse("sin", 1.0).is_err());
        assert_eq!(TerminalCondition::parse("const(0.5)@T", 1.0).unwrap().evaluate(&[9.0]).unwrap(), 0.5);
        let shifted = TerminalCondition::parse("sin(1, -0.1)@T", 1.0).unwrap();
        assert_eq!(shifted.evaluate(&[0.0]).unwrap(), -0.1);
        assert_eq!(shifted.sup_bound(), Some(1.1));
        assert!(TerminalCondition::parse("sin(1, 2, 3)@T", 1.0).is_err());
    }

    #[test]
    fn malliavin_examples() {
        let id = TerminalCondition::parse("identity@T", 1.0).unwrap();
        for t in [0.0, 0.3, 1.0] {
            assert_eq!(id.malliavin_derivative(&[0.4], t).unwrap(), 1.0);
        }
        let s = TerminalCondition::parse("sin@T", 1.0).unwrap();
        assert_eq!(s.malliavin_derivative(&[0.4], 0.5).unwrap(), 0.4f64.cos());

        let th = TerminalCondition::parse("tanh@[T/2,T]", 1.0).unwrap();
        let d = th.malliavin_derivative(&[0.3, -0.1], 0.75).unwrap();
        // central finite difference of phi in its second argument
        let h = 1e-5;
        let fd = (th.evaluate(&[0.3, -0.1 + h]).unwrap() - th.evaluate(&[0.3, -0.1 - h]).unwrap()) / (2.0 * h);
        assert!((d - fd).abs() < 1e-9);
        let sech2 = 1.0 / 0.2f64.cosh().powi(2);
        assert!((d - sech2).abs() < 1e-15);
        // both terms before T/2, none after T
        assert!((th.malliavin_derivative(&[0.3, -0.1], 0.25).unwrap() - 2.0 * sech2).abs() < 1e-15);
        assert_eq!(th.malliavin_derivative(&[0.3, -0.1], 1.5).unwrap(), 0.0);
    }

    #[test]
    fn derivative_jumps_only_at_observation_times() {
        let th = TerminalCondition::parse("tanh@[T/2,T]", 1.0).unwrap();
        let w = [0.1, 0.2];
        let at = |t: f64| th.malliavin_derivative(&w, t).unwrap();
        assert_eq!(at(0.1), at(0.49));
        assert_eq!(at(0.5), at(0.1));
        assert_eq!(at(0.5 + 1e-12), at(0.99));
        assert_ne!(at(0.5), at(0.51));
    }

    #[test]
    fn bound_estimates() {
        let s = TerminalCondition::parse("sin@T", 1.0).unwrap();
        let e = s.estimate_bounds(6.0, 1001).unwrap();
        assert!((e.sup_estimate - 1.0).abs() < 1e-4);
        assert!((e.malliavin_estimate - 1.0).abs() < 1e-12);
        assert!(!e.sup_grows_with_radius);
        s.certify(&e, e.grid_spacing).unwrap();

        let id = TerminalCondition::parse("identity@T", 1.0).unwrap();
        let e = id.estimate_bounds(6.0, 1001).unwrap();
        assert_eq!((e.sup_estimate, e.malliavin_estimate), (6.0, 1.0));
        assert!(e.sup_grows_with_radius);
        assert_eq!(id.sup_bound(), None);
        id.certify(&e, 0.0).unwrap();
        let claimed = id.clone().with_sup_bound(Some(10.0)).unwrap();
        assert!(claimed.certify(&e, 0.0).is_err());

        let th = TerminalCondition::parse("tanh@[T/2,T]", 1.0).unwrap();
        let e = th.estimate_bounds(6.0, 401).unwrap();
        assert!((e.sup_estimate - 1.0).abs() < 1e-4);
        assert!((e.malliavin_estimate - 2.0).abs() < 1e-12);
        assert_eq!(th.malliavin_bound(), 2.0);

        let too_tight = th.with_malliavin_bound(1.5).unwrap();
        assert!(too_tight.certify(&e, 1e-3).is_err());

        let four = TerminalCondition::new(1.0, vec![0.25, 0.5, 0.75, 1.0], Profile::Sin(1.0)).unwrap();
        assert!(four.estimate_bounds(1.0, 11).is_err());
    }
}
