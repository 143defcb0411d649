//! Delay model: codelet durations as polynomials in the tile count, and
//! speedup multipliers for chiplet compute units.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::ResourceClass;

/// Exact rational coefficient.
pub type Coeff = Ratio<i64>;

/// Highest tile-count exponent a cost polynomial may use.
pub const MAX_EXPONENT: u32 = 3;

/// Name of the built-in profiles.
pub const PAPER_CALIBRATED: &str = "paper-calibrated";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DelayError {
    #[error("cost evaluates to {0}, which is negative")]
    NegativeCost(i128),
    #[error("tile count must be at least 1")]
    ZeroTiles,
    #[error("no multiplier for resource class '{0}'")]
    UnknownClass(String),
    #[error("profile has no cost for codelet kind '{0}'")]
    UnknownKind(String),
    #[error("exponent {0} out of range 0..={MAX_EXPONENT}")]
    BadExponent(u32),
    #[error("cannot parse rational '{0}'")]
    BadRational(String),
    #[error("multiplier for '{class}' is {value}; must be >= 1 (and exactly 1 for conventional)")]
    InvalidMultiplier { class: String, value: String },
    #[error("malformed profile file: {0}")]
    Parse(String),
}

/// Parses `"n/d"` or `"n"`.
pub fn parse_rational(s: &str) -> Result<Coeff, DelayError> {
    let bad = || DelayError::BadRational(s.to_string());
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let n: i64 = n.trim().parse().map_err(|_| bad())?;
            let d: i64 = d.trim().parse().map_err(|_| bad())?;
            if d <= 0 {
                return Err(bad());
            }
            Ok(Ratio::new(n, d))
        }
        None => s.parse::<i64>().map(Ratio::from_integer).map_err(|_| bad()),
    }
}

pub fn format_rational(r: &Coeff) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Polynomial in the tile count `T` with exact rational coefficients,
/// exponents `0..=3`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CostPoly {
    terms: BTreeMap<u32, Coeff>,
}

impl CostPoly {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: i64) -> Self {
        let mut p = Self::new();
        p.set(0, Ratio::from_integer(c)).expect("exponent 0");
        p
    }

    /// Builds `Σ numerators[e] / denominator · T^e`, `numerators` indexed by exponent.
    pub fn from_numerators(numerators: &[i64], denominator: i64) -> Result<Self, DelayError> {
        let mut p = Self::new();
        for (e, &n) in numerators.iter().enumerate() {
            p.set(e as u32, Ratio::new(n, denominator))?;
        }
        Ok(p)
    }

    /// Builder form of [`set`](Self::set); panics on a bad exponent.
    pub fn with(mut self, exponent: u32, coeff: Coeff) -> Self {
        self.set(exponent, coeff).expect("exponent in range");
        self
    }

    pub fn set(&mut self, exponent: u32, coeff: Coeff) -> Result<(), DelayError> {
        if exponent > MAX_EXPONENT {
            return Err(DelayError::BadExponent(exponent));
        }
        if coeff == Ratio::from_integer(0) {
            self.terms.remove(&exponent);
        } else {
            self.terms.insert(exponent, coeff);
        }
        Ok(())
    }

    pub fn coeff(&self, exponent: u32) -> Coeff {
        self.terms
            .get(&exponent)
            .copied()
            .unwrap_or_else(|| Ratio::from_integer(0))
    }

    pub fn terms(&self) -> impl Iterator<Item = (u32, Coeff)> + '_ {
        self.terms.iter().map(|(&e, &c)| (e, c))
    }

    pub fn is_nonnegative(&self) -> bool {
        self.terms.values().all(|c| *c >= Ratio::from_integer(0))
    }

    pub fn add(&self, other: &CostPoly) -> CostPoly {
        let mut out = self.clone();
        for (e, c) in other.terms() {
            out.set(e, out.coeff(e) + c).expect("exponent in range");
        }
        out
    }

    pub fn sub(&self, other: &CostPoly) -> CostPoly {
        let mut out = self.clone();
        for (e, c) in other.terms() {
            out.set(e, out.coeff(e) - c).expect("exponent in range");
        }
        out
    }

    /// Exact evaluation, truncated toward zero.
    pub fn eval(&self, tiles: u32) -> Result<u64, DelayError> {
        if tiles == 0 {
            return Err(DelayError::ZeroTiles);
        }
        let t = tiles as i128;
        let sum = self.terms().fold(Ratio::<i128>::from_integer(0), |acc, (e, c)| {
            acc + Ratio::new(*c.numer() as i128, *c.denom() as i128) * t.pow(e)
        });
        let value = sum.to_integer();
        if value < 0 {
            return Err(DelayError::NegativeCost(value));
        }
        Ok(value as u64)
    }
}

impl fmt::Display for CostPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        let mut first = true;
        for (&e, c) in self.terms.iter().rev() {
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            let c = format_rational(c);
            match e {
                0 => write!(f, "{c}")?,
                1 => write!(f, "{c}T")?,
                _ => write!(f, "{c}T^{e}")?,
            }
        }
        Ok(())
    }
}

pub fn eval_cost(poly: &CostPoly, tiles: u32) -> Result<u64, DelayError> {
    poly.eval(tiles)
}

/// Speedup per chiplet class. Conventional units always run at 1x.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Multipliers(BTreeMap<String, Coeff>);

impl Multipliers {
    pub fn new(entries: impl IntoIterator<Item = (String, Coeff)>) -> Result<Self, DelayError> {
        let mut map = BTreeMap::new();
        for (class, value) in entries {
            let conventional = class == ResourceClass::Conventional.as_str();
            if value < Ratio::from_integer(1) || (conventional && value != Ratio::from_integer(1)) {
                return Err(DelayError::InvalidMultiplier {
                    class,
                    value: format_rational(&value),
                });
            }
            if !conventional {
                map.insert(class, value);
            }
        }
        Ok(Multipliers(map))
    }

    /// tpu-like 30x, udp-like 10x.
    pub fn chiplet_defaults() -> Self {
        Multipliers(BTreeMap::from([
            (crate::graph::TPU_LIKE.to_string(), Ratio::from_integer(30)),
            (crate::graph::UDP_LIKE.to_string(), Ratio::from_integer(10)),
        ]))
    }

    pub fn get(&self, class: &ResourceClass) -> Option<Coeff> {
        match class {
            ResourceClass::Conventional => Some(Ratio::from_integer(1)),
            ResourceClass::Chiplet(name) => self.0.get(name).copied(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Coeff)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl Default for Multipliers {
    fn default() -> Self {
        Self::chiplet_defaults()
    }
}

/// Duration of a codelet on a unit of its class. Accelerated durations are
/// rounded up and never drop below 1 for a nonzero base.
pub fn effective_duration(
    base: u64,
    class: &ResourceClass,
    chiplets_enabled: bool,
    multipliers: &Multipliers,
) -> Result<u64, DelayError> {
    if !chiplets_enabled || !class.is_chiplet() {
        return Ok(base);
    }
    let m = multipliers
        .get(class)
        .ok_or_else(|| DelayError::UnknownClass(class.to_string()))?;
    let num = base as u128 * *m.denom() as u128;
    let den = *m.numer() as u128;
    let d = num.div_ceil(den) as u64;
    Ok(if base >= 1 { d.max(1) } else { 0 })
}

/// GEMM decomposition a profile (and generated graph) belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Outer,
    Inner,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Outer, Method::Inner];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Outer => "outer",
            Method::Inner => "inner",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "outer" => Ok(Method::Outer),
            "inner" => Ok(Method::Inner),
            other => Err(format!("unknown method '{other}' (expected outer or inner)")),
        }
    }
}

/// Per-kind costs for one GEMM family, the fixed start/end costs, and the
/// chiplet multipliers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayProfile {
    pub family: Method,
    pub start: u64,
    pub end: u64,
    pub kinds: BTreeMap<String, CostPoly>,
    pub multipliers: Multipliers,
}

fn frac(n: i64, d: i64) -> Coeff {
    Ratio::new(n, d)
}

impl DelayProfile {
    /// The built-in calibrated profile for `family`.
    ///
    /// Outer: start 3, end 2, conv = vmul = 15T, sum = 5T² + 1.
    /// Inner: start 3, end 0, dot = 15/64·T³ + 1/64·T² + T + 1 and
    /// conv = 5/32·T³ − T − 1, so conv + dot = (25T³ + T²)/64.
    pub fn paper_calibrated(family: Method) -> Self {
        let kinds = match family {
            Method::Outer => BTreeMap::from([
                ("conv".to_string(), CostPoly::new().with(1, frac(15, 1))),
                ("vmul".to_string(), CostPoly::new().with(1, frac(15, 1))),
                (
                    "sum".to_string(),
                    CostPoly::new().with(2, frac(5, 1)).with(0, frac(1, 1)),
                ),
            ]),
            Method::Inner => BTreeMap::from([
                (
                    "conv".to_string(),
                    CostPoly::new()
                        .with(3, frac(5, 32))
                        .with(1, frac(-1, 1))
                        .with(0, frac(-1, 1)),
                ),
                (
                    "dot".to_string(),
                    CostPoly::new()
                        .with(3, frac(15, 64))
                        .with(2, frac(1, 64))
                        .with(1, frac(1, 1))
                        .with(0, frac(1, 1)),
                ),
            ]),
        };
        let (start, end) = match family {
            Method::Outer => (3, 2),
            Method::Inner => (3, 0),
        };
        DelayProfile {
            family,
            start,
            end,
            kinds,
            multipliers: Multipliers::chiplet_defaults(),
        }
    }

    pub fn poly(&self, kind: &str) -> Result<&CostPoly, DelayError> {
        self.kinds
            .get(kind)
            .ok_or_else(|| DelayError::UnknownKind(kind.to_string()))
    }

    /// Base cost of a codelet kind at `tiles`. `start` and `end` use the
    /// fixed costs.
    pub fn cost(&self, kind: &str, tiles: u32) -> Result<u64, DelayError> {
        match kind {
            "start" => Ok(self.start),
            "end" => Ok(self.end),
            _ => self.poly(kind)?.eval(tiles),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, DelayError> {
        let file: ProfileFile = serde_json::from_str(text).map_err(|e| DelayError::Parse(e.to_string()))?;
        file.into_profile()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ProfileFile::from_profile(self)).expect("profile serializes")
    }
}

/// JSON form of a [`DelayProfile`]. Coefficients are strings `"n/d"` or
/// `"n"`, keyed by exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileFile {
    pub family: Method,
    pub start: u64,
    pub end: u64,
    pub kinds: BTreeMap<String, BTreeMap<String, String>>,
    pub multipliers: BTreeMap<String, String>,
}

impl ProfileFile {
    pub fn into_profile(self) -> Result<DelayProfile, DelayError> {
        let mut kinds = BTreeMap::new();
        for (kind, terms) in self.kinds {
            let mut poly = CostPoly::new();
            for (exp, coeff) in terms {
                let e: u32 = exp
                    .parse()
                    .map_err(|_| DelayError::Parse(format!("bad exponent key '{exp}'")))?;
                poly.set(e, parse_rational(&coeff)?)?;
            }
            kinds.insert(kind, poly);
        }
        let multipliers = Multipliers::new(
            self.multipliers
                .into_iter()
                .map(|(k, v)| parse_rational(&v).map(|r| (k, r)))
                .collect::<Result<Vec<_>, _>>()?,
        )?;
        Ok(DelayProfile {
            family: self.family,
            start: self.start,
            end: self.end,
            kinds,
            multipliers,
        })
    }

    pub fn from_profile(p: &DelayProfile) -> Self {
        ProfileFile {
            family: p.family,
            start: p.start,
            end: p.end,
            kinds: p
                .kinds
                .iter()
                .map(|(k, poly)| {
                    let terms = (0..=MAX_EXPONENT)
                        .map(|e| (e.to_string(), format_rational(&poly.coeff(e))))
                        .collect();
                    (k.clone(), terms)
                })
                .collect(),
            multipliers: p
                .multipliers
                .iter()
                .map(|(k, v)| (k.to_string(), format_rational(&v)))
                .collect(),
        }
    }
}
