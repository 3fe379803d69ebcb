use std::sync::Arc;

use super::{DriverFn, Generator, GrowthClass};
use crate::error::{Error, Result};

/// Splits `name(p1, p2, ...)` into the name and its numeric parameters.
/// A bare `name` yields an empty parameter list.
pub(crate) fn parse_call(input: &str) -> Result<(String, Vec<f64>)> {
    let s = input.trim();
    let parse_err = |reason: &str| Error::Parse {
        what: "call expression",
        input: input.to_string(),
        reason: reason.to_string(),
    };
    match s.find('(') {
        None => {
            if s.is_empty() {
                return Err(parse_err("empty name"));
            }
            Ok((s.to_string(), Vec::new()))
        }
        Some(open) => {
            if !s.ends_with(')') {
                return Err(parse_err("missing closing parenthesis"));
            }
            let name = s[..open].trim();
            if name.is_empty() {
                return Err(parse_err("empty name"));
            }
            let inner = s[open + 1..s.len() - 1].trim();
            let params = if inner.is_empty() {
                Vec::new()
            } else {
                inner
                    .split(',')
                    .map(|p| {
                        p.trim()
                            .parse::<f64>()
                            .map_err(|e| parse_err(&format!("parameter `{}`: {e}", p.trim())))
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            Ok((name.to_string(), params))
        }
    }
}

fn arity(name: &str, params: &[f64], min: usize, max: usize) -> Result<()> {
    if params.len() < min || params.len() > max {
        return Err(Error::Parse {
            what: "generator",
            input: name.to_string(),
            reason: format!("expected {min}..={max} parameters, got {}", params.len()),
        });
    }
    if let Some(bad) = params.iter().find(|p| !p.is_finite()) {
        return Err(Error::invalid("generator parameter", format!("{bad} is not finite")));
    }
    Ok(())
}

/// Largest absolute coefficient, or 1 when all vanish.
fn constant_from(coeffs: &[f64]) -> f64 {
    let m = coeffs.iter().fold(0.0_f64, |acc, c| acc.max(c.abs()));
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Builds a generator from the registry expression, e.g. `quad(1)`,
/// `linear(1, 0.5, 0.2)`, `trig(1, 0)`, `abs`, `softabs`, `pow(1.5, 1)`.
///
/// | name | driver | class | L |
/// |---|---|---|---|
/// | `zero` | 0 | linear | 1 |
/// | `const(c)` | c | linear | \|c\| |
/// | `quad(g[,a[,c]])` | g/2 z^2 + a y + c | quadratic | max(\|g\|/2, \|a\|, \|c\|) |
/// | `linear(a,b,c)` | a y + b z + c | linear | max(\|a\|, \|b\|, \|c\|) |
/// | `abs[(k)]` | k\|z\| | linear | \|k\| |
/// | `trig(a,b)` | a sin z + b y | linear | max(\|a\|, \|b\|) |
/// | `softabs` | sqrt(1+z^2) - 1 | linear | 1 |
/// | `pow(p,k)` | k\|z\|^p, 0 < p <= 2 | quadratic | \|k\| |
///
/// A constant that would come out as zero is replaced by 1.
pub fn parse_generator(expr: &str) -> Result<Generator> {
    let (name, p) = parse_call(expr)?;
    let label = expr.trim().to_string();
    let (growth, lipschitz, k, eval): (GrowthClass, f64, Option<f64>, Arc<DriverFn>) =
        match name.as_str() {
            "zero" => {
                arity(&name, &p, 0, 0)?;
                (GrowthClass::Linear, 1.0, None, Arc::new(|_, _, _| 0.0))
            }
            "const" => {
                arity(&name, &p, 1, 1)?;
                let c = p[0];
                (GrowthClass::Linear, constant_from(&[c]), None, Arc::new(move |_, _, _| c))
            }
            "quad" => {
                arity(&name, &p, 1, 3)?;
                let gamma = p[0];
                let a = p.get(1).copied().unwrap_or(0.0);
                let c = p.get(2).copied().unwrap_or(0.0);
                let half = 0.5 * gamma;
                let k = (half != 0.0).then(|| half.abs());
                (
                    GrowthClass::Quadratic,
                    constant_from(&[half, a, c]),
                    k,
                    Arc::new(move |_, y, z| half * z * z + a * y + c),
                )
            }
            "linear" => {
                arity(&name, &p, 3, 3)?;
                let (a, b, c) = (p[0], p[1], p[2]);
                (
                    GrowthClass::Linear,
                    constant_from(&[a, b, c]),
                    (b != 0.0).then(|| b.abs()),
                    Arc::new(move |_, y, z| a * y + b * z + c),
                )
            }
            "abs" => {
                arity(&name, &p, 0, 1)?;
                let k = p.first().copied().unwrap_or(1.0);
                (
                    GrowthClass::Linear,
                    constant_from(&[k]),
                    (k != 0.0).then(|| k.abs()),
                    Arc::new(move |_, _, z: f64| k * z.abs()),
                )
            }
            "trig" => {
                arity(&name, &p, 2, 2)?;
                let (a, b) = (p[0], p[1]);
                (
                    GrowthClass::Linear,
                    constant_from(&[a, b]),
                    (a != 0.0).then(|| a.abs()),
                    Arc::new(move |_, y, z: f64| a * z.sin() + b * y),
                )
            }
            "softabs" => {
                arity(&name, &p, 0, 0)?;
                (
                    GrowthClass::Linear,
                    1.0,
                    Some(1.0),
                    Arc::new(|_, _, z: f64| (1.0 + z * z).sqrt() - 1.0),
                )
            }
            "pow" => {
                arity(&name, &p, 2, 2)?;
                let (power, k) = (p[0], p[1]);
                if !(power > 0.0 && power <= 2.0) {
                    return Err(Error::invalid("pow exponent", format!("need 0 < p <= 2, got {power}")));
                }
                let z_lip = (power >= 1.0 && k != 0.0).then(|| power * k.abs());
                (
                    GrowthClass::Quadratic,
                    constant_from(&[k]),
                    z_lip,
                    Arc::new(move |_, _, z: f64| k * z.abs().powf(power)),
                )
            }
            _ => {
                return Err(Error::UnknownName {
                    kind: "generator",
                    name,
                })
            }
        };
    Ok(Generator::from_parts(label, growth, lipschitz, k, 1.0, eval))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_calls() {
        assert_eq!(parse_call("abs").unwrap(), ("abs".to_string(), vec![]));
        assert_eq!(
            parse_call(" quad( 1, -0.5 ) ").unwrap(),
            ("quad".to_string(), vec![1.0, -0.5])
        );
        assert!(parse_call("quad(1").is_err());
        assert!(parse_call("quad(x)").is_err());
        assert!(parse_call("(1)").is_err());
    }

    #[test]
    fn registry_values() {
        let q = parse_generator("quad(1)").unwrap();
        assert_eq!(q.eval(0.0, 3.0, 2.0), 2.0);
        assert_eq!(q.growth_class(), GrowthClass::Quadratic);
        assert_eq!(q.lipschitz(), 0.5);

        let q = parse_generator("quad(1, 0.2, -1)").unwrap();
        assert_eq!(q.eval(0.0, 1.0, 2.0), 2.0 + 0.2 - 1.0);
        assert_eq!(q.lipschitz(), 1.0);

        let l = parse_generator("linear(1, 0.5, 0.2)").unwrap();
        assert_eq!(l.eval(0.0, 2.0, 2.0), 3.2);
        assert_eq!(l.local_z_lipschitz(), Some(0.5));

        let s = parse_generator("softabs").unwrap();
        assert!((s.eval(0.0, 0.0, 1.0) - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        assert_eq!(parse_generator("trig(1, 1)").unwrap().eval(0.0, 1.0, 0.0), 1.0);
        assert_eq!(parse_generator("pow(1.5, 1)").unwrap().eval(0.0, 0.0, 4.0), 8.0);
        assert_eq!(parse_generator("zero").unwrap().eval(0.3, 1.0, 9.0), 0.0);
    }

    #[test]
    fn registry_errors() {
        assert!(matches!(
            parse_generator("cubic(1)"),
            Err(Error::UnknownName { .. })
        ));
        assert!(parse_generator("linear(1, 2)").is_err());
        assert!(parse_generator("pow(3, 1)").is_err());
        assert!(parse_generator("quad(inf)").is_err());
    }
}
