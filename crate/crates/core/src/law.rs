//! Conductance laws and the registry of law families used to parse them.
//!
//! A law is written as `name(arg, ...)`, e.g. `exp(1)`, `bernoulli(0.7)`,
//! `uniform(0.5,2)`, `pareto_inverse(3)` or `line(exp(1))`. Each family is a
//! [`LawFamily`] registered by name; [`parse_law`] dispatches on the name.

use std::fmt;

use rand::{Rng, RngCore};

use crate::error::{param, Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub enum LawSpec {
    Constant(f64),
    Exponential { rate: f64 },
    Bernoulli { p: f64 },
    Uniform { low: f64, high: f64 },
    /// `P[w < t] = t^q_tail` on (0, 1]; `E[w^-q]` is finite iff `q < q_tail`.
    ParetoInverse { q_tail: f64 },
    /// One base-law draw per lattice line. With `axis = Some(a)` only edges
    /// parallel to `a` are line-constant (the others are i.i.d.); with `None`
    /// every edge is constant along the line it lies on.
    LineCorrelated { base: Box<LawSpec>, axis: Option<usize> },
}

impl LawSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                param(format!("{name} must be finite and > 0, got {v}"))
            }
        };
        match self {
            LawSpec::Constant(c) => positive("constant conductance", *c),
            LawSpec::Exponential { rate } => positive("exponential rate", *rate),
            LawSpec::Bernoulli { p } => {
                if (0.0..=1.0).contains(p) {
                    Ok(())
                } else {
                    param(format!("bernoulli p must lie in [0, 1], got {p}"))
                }
            }
            LawSpec::Uniform { low, high } => {
                if low.is_finite() && high.is_finite() && *low >= 0.0 && high > low {
                    Ok(())
                } else {
                    param(format!("uniform needs 0 <= a < b, got ({low}, {high})"))
                }
            }
            LawSpec::ParetoInverse { q_tail } => positive("pareto_inverse tail exponent", *q_tail),
            LawSpec::LineCorrelated { base, axis } => {
                if matches!(**base, LawSpec::LineCorrelated { .. }) {
                    return param("line-correlated laws cannot be nested");
                }
                if let Some(a) = axis {
                    if *a >= dim {
                        return param(format!("line axis {a} out of range for d = {dim}"));
                    }
                }
                base.validate(dim)
            }
        }
    }

    /// One draw from the single-edge marginal.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            LawSpec::Constant(c) => *c,
            LawSpec::Exponential { rate } => rng::exponential(rng, *rate),
            LawSpec::Bernoulli { p } => {
                if rng.random::<f64>() < *p {
                    1.0
                } else {
                    0.0
                }
            }
            LawSpec::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            LawSpec::ParetoInverse { q_tail } => rng::open01(rng).powf(1.0 / q_tail),
            LawSpec::LineCorrelated { base, .. } => base.sample(rng),
        }
    }

    /// Whether edges are independent across distinct edges.
    pub fn is_iid(&self) -> bool {
        !matches!(self, LawSpec::LineCorrelated { .. })
    }

    /// Whether every edge is open almost surely.
    pub fn always_open(&self) -> bool {
        match self {
            LawSpec::Bernoulli { p } => *p >= 1.0,
            LawSpec::Uniform { low, .. } => *low > 0.0,
            LawSpec::LineCorrelated { base, .. } => base.always_open(),
            _ => true,
        }
    }

    /// Mean of a single conductance.
    pub fn mean(&self) -> f64 {
        match self {
            LawSpec::Constant(c) => *c,
            LawSpec::Exponential { rate } => 1.0 / rate,
            LawSpec::Bernoulli { p } => *p,
            LawSpec::Uniform { low, high } => 0.5 * (low + high),
            LawSpec::ParetoInverse { q_tail } => q_tail / (q_tail + 1.0),
            LawSpec::LineCorrelated { base, .. } => base.mean(),
        }
    }
}

impl fmt::Display for LawSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LawSpec::Constant(c) => write!(f, "const({c})"),
            LawSpec::Exponential { rate } => write!(f, "exp({rate})"),
            LawSpec::Bernoulli { p } => write!(f, "bernoulli({p})"),
            LawSpec::Uniform { low, high } => write!(f, "uniform({low},{high})"),
            LawSpec::ParetoInverse { q_tail } => write!(f, "pareto_inverse({q_tail})"),
            LawSpec::LineCorrelated { base, axis: None } => write!(f, "line({base})"),
            LawSpec::LineCorrelated { base, axis: Some(a) } => write!(f, "line({base},{a})"),
        }
    }
}

impl std::str::FromStr for LawSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_law(s)
    }
}

/// A named family of conductance laws.
pub trait LawFamily: Sync {
    fn name(&self) -> &'static str;

    fn aliases(&self) -> &'static [&'static str] {
        &[]
    }

    fn usage(&self) -> &'static str;

    fn build(&self, args: &[&str]) -> Result<LawSpec>;
}

fn num(arg: &str) -> Result<f64> {
    arg.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parameter(format!("`{arg}` is not a number")))
}

fn arity(family: &dyn LawFamily, args: &[&str], n: usize) -> Result<()> {
    if args.len() == n {
        Ok(())
    } else {
        param(format!("usage: {}", family.usage()))
    }
}

struct ConstantFamily;
struct ExponentialFamily;
struct BernoulliFamily;
struct UniformFamily;
struct ParetoInverseFamily;
struct LineFamily;

impl LawFamily for ConstantFamily {
    fn name(&self) -> &'static str {
        "const"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["constant"]
    }
    fn usage(&self) -> &'static str {
        "const(c)"
    }
    fn build(&self, args: &[&str]) -> Result<LawSpec> {
        arity(self, args, 1)?;
        Ok(LawSpec::Constant(num(args[0])?))
    }
}

impl LawFamily for ExponentialFamily {
    fn name(&self) -> &'static str {
        "exp"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["exponential"]
    }
    fn usage(&self) -> &'static str {
        "exp(rate)"
    }
    fn build(&self, args: &[&str]) -> Result<LawSpec> {
        arity(self, args, 1)?;
        Ok(LawSpec::Exponential { rate: num(args[0])? })
    }
}

impl LawFamily for BernoulliFamily {
    fn name(&self) -> &'static str {
        "bernoulli"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["bond"]
    }
    fn usage(&self) -> &'static str {
        "bernoulli(p)"
    }
    fn build(&self, args: &[&str]) -> Result<LawSpec> {
        arity(self, args, 1)?;
        Ok(LawSpec::Bernoulli { p: num(args[0])? })
    }
}

impl LawFamily for UniformFamily {
    fn name(&self) -> &'static str {
        "uniform"
    }
    fn usage(&self) -> &'static str {
        "uniform(a,b)"
    }
    fn build(&self, args: &[&str]) -> Result<LawSpec> {
        arity(self, args, 2)?;
        Ok(LawSpec::Uniform {
            low: num(args[0])?,
            high: num(args[1])?,
        })
    }
}

impl LawFamily for ParetoInverseFamily {
    fn name(&self) -> &'static str {
        "pareto_inverse"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["pareto"]
    }
    fn usage(&self) -> &'static str {
        "pareto_inverse(q_tail)"
    }
    fn build(&self, args: &[&str]) -> Result<LawSpec> {
        arity(self, args, 1)?;
        Ok(LawSpec::ParetoInverse { q_tail: num(args[0])? })
    }
}

impl LawFamily for LineFamily {
    fn name(&self) -> &'static str {
        "line"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["line_correlated"]
    }
    fn usage(&self) -> &'static str {
        "line(base) or line(base,axis)"
    }
    fn build(&self, args: &[&str]) -> Result<LawSpec> {
        let axis = match args.len() {
            1 => None,
            2 => Some(args[1].trim().parse::<usize>().map_err(|_| {
                Error::Parameter(format!("line axis `{}` is not an index", args[1]))
            })?),
            _ => return param(format!("usage: {}", self.usage())),
        };
        Ok(LawSpec::LineCorrelated {
            base: Box::new(parse_law(args[0])?),
            axis,
        })
    }
}

static FAMILIES: [&dyn LawFamily; 6] = [
    &ConstantFamily,
    &ExponentialFamily,
    &BernoulliFamily,
    &UniformFamily,
    &ParetoInverseFamily,
    &LineFamily,
];

/// All registered law families.
pub fn families() -> &'static [&'static dyn LawFamily] {
    &FAMILIES
}

pub fn family(name: &str) -> Option<&'static dyn LawFamily> {
    let name = name.trim().to_ascii_lowercase();
    families()
        .iter()
        .copied()
        .find(|f| f.name() == name || f.aliases().contains(&name.as_str()))
}

/// Split `a, f(b, c), d` on top-level commas.
fn split_args(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    let last = s[start..].trim();
    if !last.is_empty() || !out.is_empty() {
        out.push(last);
    }
    out
}

pub fn parse_law(s: &str) -> Result<LawSpec> {
    let s = s.trim();
    let (name, args) = match s.find('(') {
        Some(open) if s.ends_with(')') => (&s[..open], split_args(&s[open + 1..s.len() - 1])),
        Some(_) => return param(format!("malformed law `{s}`")),
        None => (s, Vec::new()),
    };
    let fam = family(name).ok_or_else(|| {
        let known: Vec<_> = families().iter().map(|f| f.usage()).collect();
        Error::Parameter(format!("unknown law `{name}`; known: {}", known.join(", ")))
    })?;
    fam.build(&args)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_family() {
        assert_eq!(parse_law("const(1)").unwrap(), LawSpec::Constant(1.0));
        assert_eq!(parse_law("exp(2)").unwrap(), LawSpec::Exponential { rate: 2.0 });
        assert_eq!(parse_law(" bernoulli( 0.7 )").unwrap(), LawSpec::Bernoulli { p: 0.7 });
        assert_eq!(
            parse_law("uniform(0.5, 2)").unwrap(),
            LawSpec::Uniform { low: 0.5, high: 2.0 }
        );
        assert_eq!(
            parse_law("pareto(3)").unwrap(),
            LawSpec::ParetoInverse { q_tail: 3.0 }
        );
        assert_eq!(
            parse_law("line(exp(1),1)").unwrap(),
            LawSpec::LineCorrelated {
                base: Box::new(LawSpec::Exponential { rate: 1.0 }),
                axis: Some(1)
            }
        );
    }

    #[test]
    fn display_round_trips() {
        for s in ["const(1)", "exp(1)", "bernoulli(0.7)", "uniform(0.5,2)", "pareto_inverse(3)", "line(exp(1))", "line(bernoulli(0.9),0)"] {
            let law = parse_law(s).unwrap();
            assert_eq!(parse_law(&law.to_string()).unwrap(), law);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(parse_law("exp(0)").unwrap().validate(2).is_err());
        assert!(parse_law("bernoulli(1.5)").unwrap().validate(2).is_err());
        assert!(parse_law("uniform(2,1)").unwrap().validate(2).is_err());
        assert!(parse_law("line(exp(1),2)").unwrap().validate(2).is_err());
        assert!(parse_law("line(line(exp(1)))").unwrap().validate(2).is_err());
        assert!(parse_law("gamma(1)").is_err());
        assert!(parse_law("exp(1,2)").is_err());
        assert!(parse_law("exp(x)").is_err());
    }

    #[test]
    fn pareto_inverse_has_power_law_lower_tail() {
        let law = LawSpec::ParetoInverse { q_tail: 2.0 };
        let mut r = crate::rng::substream(5, 0);
        let n = 100_000;
        let below = (0..n).filter(|_| law.sample(&mut r) < 0.5).count() as f64 / n as f64;
        // P[w < 1/2] = 1/4
        assert!((below - 0.25).abs() < 4.0 * (0.25f64 * 0.75 / n as f64).sqrt());
    }
}
