//! Fitting delay profiles to a table of target makespans.
//!
//! The Basic column of an uncontended GEMM run is a closed form in the
//! per-kind costs:
//!
//! * outer: `start + end + chain(T) + log2(T)·sum(T)`
//! * inner: `start + end + chain(T)`
//!
//! where `chain` is conv + vmul (outer) or conv + dot (inner). Stage one
//! searches polynomial numerators for `sum`, `chain` and the constant
//! `start + end` in lexicographic order, exponent-major, highest exponent
//! first, pruning every equation by interval bounds. The first exact fit is
//! the smallest. Stage two uses uncontended Pipelined cells, where every stage
//! runs concurrently right after `start`, to split the constant into start
//! and end and, for inner, to split the chain into conv and dot. If no exact
//! fit exists, a least-squares fit is rounded onto the bounds instead.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delay::{CostPoly, DelayError, DelayProfile, Method, Multipliers, MAX_EXPONENT};
use crate::experiment::run_cell;
use crate::metrics::{Configuration, ResultTable};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CalibrationError {
    #[error("search bounds are empty: {0}")]
    NoFit(String),
    #[error("bad target table: {0}")]
    BadTarget(String),
    #[error(transparent)]
    Delay(#[from] DelayError),
}

/// Search space for [`calibrate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchBounds {
    /// Common denominator of every coefficient.
    pub denominator: i64,
    pub min_numerator: i64,
    pub max_numerator: i64,
    pub max_degree: u32,
    pub min_start: u64,
    pub max_start: u64,
    pub min_end: u64,
    pub max_end: u64,
    /// Compute units the target table was measured with.
    pub cus: u32,
    /// Search nodes visited before giving up on an exact fit.
    pub node_budget: u64,
}

impl SearchBounds {
    /// Integer coefficients for outer, sixty-fourths for inner; numerators
    /// 0..=64, degree ≤ 3, start and end 0..=16, 64 CUs.
    pub fn for_family(family: Method) -> Self {
        SearchBounds {
            denominator: match family {
                Method::Outer => 1,
                Method::Inner => 64,
            },
            min_numerator: 0,
            max_numerator: 64,
            max_degree: MAX_EXPONENT,
            min_start: 0,
            max_start: 16,
            min_end: 0,
            max_end: 16,
            cus: 64,
            node_budget: 50_000_000,
        }
    }

    fn check(&self) -> Result<(), CalibrationError> {
        let empty = |what: &str| Err(CalibrationError::NoFit(what.to_string()));
        if self.denominator <= 0 {
            return empty("denominator must be positive");
        }
        if self.min_numerator > self.max_numerator {
            return empty("numerator range");
        }
        if self.max_degree > MAX_EXPONENT {
            return empty("degree above 3");
        }
        if self.min_start > self.max_start {
            return empty("start range");
        }
        if self.min_end > self.max_end {
            return empty("end range");
        }
        if self.cus == 0 {
            return empty("no compute units");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellResidual {
    pub tiles: u32,
    pub config: Configuration,
    pub target: u64,
    /// None if the fitted profile cannot run this cell.
    pub predicted: Option<u64>,
    pub residual: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CalibrationResult {
    pub profile: DelayProfile,
    /// One entry per target cell, in (tiles, configuration) order.
    pub residuals: Vec<CellResidual>,
    pub bounds: SearchBounds,
    /// The Basic column was fitted exactly rather than by least squares.
    pub exact: bool,
}

impl CalibrationResult {
    pub fn max_abs_residual(&self) -> Option<u64> {
        self.residuals
            .iter()
            .filter_map(|r| r.residual)
            .map(i64::unsigned_abs)
            .max()
    }

    pub fn residual(&self, tiles: u32, config: Configuration) -> Option<i64> {
        self.residuals
            .iter()
            .find(|r| r.tiles == tiles && r.config == config)
            .and_then(|r| r.residual)
    }
}

/// One target equation: `constant + Σ_k mult[k] · trunc(Σ_e x[k][e]·T^e / den)`.
struct Equation {
    powers: [i128; 4],
    mult: Vec<i128>,
    target: i128,
}

/// Integer search over per-kind numerators plus a free constant.
struct ExactSearch<'a> {
    eqs: &'a [Equation],
    kinds: usize,
    degree: u32,
    den: i128,
    lo: i128,
    hi: i128,
    constant: (i128, i128),
    budget: u64,
}

enum SearchOutcome {
    Found(Vec<Vec<i64>>, i128),
    Exhausted,
    OverBudget,
}

impl ExactSearch<'_> {
    /// Unknowns in visiting order: highest exponent first, kinds in order.
    fn order(&self) -> Vec<(usize, usize)> {
        (0..=self.degree as usize)
            .rev()
            .flat_map(|e| (0..self.kinds).map(move |k| (k, e)))
            .collect()
    }

    /// First accepted leaf in lexicographic order.
    fn run(&self, accept: &mut dyn FnMut(&[Vec<i64>], i128) -> bool) -> SearchOutcome {
        let order = self.order();
        // rest[d][j][k] = (min, max) numerator contribution of unknowns d.. for eq j, kind k
        let mut rest = vec![vec![vec![(0i128, 0i128); self.kinds]; self.eqs.len()]; order.len() + 1];
        for d in (0..order.len()).rev() {
            let (k, e) = order[d];
            for (j, eq) in self.eqs.iter().enumerate() {
                let mut r = rest[d + 1][j].clone();
                let p = eq.powers[e];
                r[k].0 += (self.lo * p).min(self.hi * p);
                r[k].1 += (self.lo * p).max(self.hi * p);
                rest[d][j] = r;
            }
        }
        let mut x = vec![vec![0i64; self.degree as usize + 1]; self.kinds];
        let mut partial = vec![vec![0i128; self.kinds]; self.eqs.len()];
        let mut nodes = 0u64;
        self.dfs(0, &order, &rest, &mut x, &mut partial, &mut nodes, accept)
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        &self,
        d: usize,
        order: &[(usize, usize)],
        rest: &[Vec<Vec<(i128, i128)>>],
        x: &mut Vec<Vec<i64>>,
        partial: &mut Vec<Vec<i128>>,
        nodes: &mut u64,
        accept: &mut dyn FnMut(&[Vec<i64>], i128) -> bool,
    ) -> SearchOutcome {
        *nodes += 1;
        if *nodes > self.budget {
            return SearchOutcome::OverBudget;
        }
        for (j, eq) in self.eqs.iter().enumerate() {
            let (mut lo, mut hi) = (self.constant.0, self.constant.1);
            for k in 0..self.kinds {
                let (rmin, rmax) = rest[d][j][k];
                lo += eq.mult[k] * ((partial[j][k] + rmin) / self.den);
                hi += eq.mult[k] * ((partial[j][k] + rmax) / self.den);
            }
            if eq.target < lo || eq.target > hi {
                return SearchOutcome::Exhausted;
            }
        }
        if d == order.len() {
            let value =
                |eq: &Equation, p: &[i128]| -> i128 { (0..self.kinds).map(|k| eq.mult[k] * (p[k] / self.den)).sum() };
            let c = self.eqs[0].target - value(&self.eqs[0], &partial[0]);
            let consistent = self
                .eqs
                .iter()
                .zip(partial.iter())
                .all(|(eq, p)| eq.target - value(eq, p) == c);
            if consistent && (self.constant.0..=self.constant.1).contains(&c) && accept(x, c) {
                return SearchOutcome::Found(x.clone(), c);
            }
            return SearchOutcome::Exhausted;
        }
        let (k, e) = order[d];
        for v in self.lo..=self.hi {
            x[k][e] = v as i64;
            for (j, eq) in self.eqs.iter().enumerate() {
                partial[j][k] += v * eq.powers[e];
            }
            let out = self.dfs(d + 1, order, rest, x, partial, nodes, accept);
            for (j, eq) in self.eqs.iter().enumerate() {
                partial[j][k] -= v * eq.powers[e];
            }
            match out {
                SearchOutcome::Exhausted => {}
                found_or_budget => {
                    x[k][e] = 0;
                    return found_or_budget;
                }
            }
        }
        x[k][e] = 0;
        SearchOutcome::Exhausted
    }
}

/// Least-squares numerators, rounded and clamped to the bounds, then the
/// constant as the clamped mean of what is left over.
fn least_squares(
    eqs: &[Equation],
    kinds: usize,
    bounds: &SearchBounds,
    constant: (i128, i128),
) -> (Vec<Vec<i64>>, i128) {
    let deg = bounds.max_degree as usize + 1;
    let cols = kinds * deg;
    let den = bounds.denominator as f64;
    let a = DMatrix::from_fn(eqs.len(), cols, |j, c| {
        let (k, e) = (c / deg, c % deg);
        eqs[j].mult[k] as f64 * eqs[j].powers[e] as f64 / den
    });
    let b = DVector::from_iterator(eqs.len(), eqs.iter().map(|e| e.target as f64));
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-9)
        .unwrap_or_else(|_| DVector::zeros(cols));
    let (lo, hi) = (bounds.min_numerator as f64, bounds.max_numerator as f64);
    let x: Vec<Vec<i64>> = (0..kinds)
        .map(|k| {
            (0..deg)
                .map(|e| sol[k * deg + e].round().clamp(lo, hi) as i64)
                .collect()
        })
        .collect();
    let leftover: i128 = eqs
        .iter()
        .map(|eq| {
            let value: i128 = (0..kinds)
                .map(|k| {
                    let num: i128 = (0..deg).map(|e| x[k][e] as i128 * eq.powers[e]).sum();
                    eq.mult[k] * (num / bounds.denominator as i128)
                })
                .sum();
            eq.target - value
        })
        .sum();
    let n = eqs.len() as i128;
    let mean = (2 * leftover + n).div_euclid(2 * n);
    (x, mean.clamp(constant.0, constant.1))
}

fn poly(numerators: &[i64], den: i64) -> Result<CostPoly, DelayError> {
    CostPoly::from_numerators(numerators, den)
}

/// Splits `chain` into two halves that add back to it exactly.
fn halves(chain: &CostPoly) -> (CostPoly, CostPoly) {
    let mut first = CostPoly::new();
    for (e, c) in chain.terms() {
        let half = Ratio::new(c.numer().div_euclid(2), *c.denom());
        first.set(e, half).expect("exponent in range");
    }
    let second = chain.sub(&first);
    (first, second)
}

fn level_count(tiles: u32) -> u32 {
    tiles.trailing_zeros()
}

/// Pipelined makespan when every non-terminal codelet fits on the machine at
/// once; None when the cell is contended.
fn pipelined_model(start: u64, end: u64, stages: &[u64], stage_codelets: u32, cus: u32) -> Option<u64> {
    if stage_codelets > cus {
        return None;
    }
    let longest = stages.iter().copied().max().unwrap_or(0);
    let end_at = if stage_codelets < cus {
        end
    } else {
        stages.iter().copied().min().unwrap_or(0) + end
    };
    Some(start + longest.max(end_at))
}

fn stage_codelets(family: Method, tiles: u32) -> u32 {
    match family {
        Method::Outer => 3 * tiles - 1,
        Method::Inner => 2 * tiles,
    }
}

fn build_profile(family: Method, start: u64, end: u64, kinds: BTreeMap<String, CostPoly>) -> DelayProfile {
    DelayProfile {
        family,
        start,
        end,
        kinds,
        multipliers: Multipliers::chiplet_defaults(),
    }
}

/// Fits a delay profile for `family` to `target` within `bounds`.
pub fn calibrate(
    target: &ResultTable,
    family: Method,
    bounds: &SearchBounds,
) -> Result<CalibrationResult, CalibrationError> {
    bounds.check()?;
    for tiles in target.tiles() {
        if tiles < 2 || !tiles.is_power_of_two() {
            return Err(CalibrationError::BadTarget(format!(
                "tile count {tiles} is not a power of two >= 2"
            )));
        }
    }
    let basic: Vec<(u32, u64)> = target
        .column(Configuration::Basic)
        .into_iter()
        .filter(|&(t, _)| t <= bounds.cus)
        .collect();
    if basic.is_empty() {
        return Err(CalibrationError::BadTarget(format!(
            "no Basic cell with tiles <= {} compute units",
            bounds.cus
        )));
    }

    let kinds = match family {
        Method::Outer => 2,
        Method::Inner => 1,
    };
    let eqs: Vec<Equation> = basic
        .iter()
        .map(|&(t, y)| {
            let t128 = t as i128;
            Equation {
                powers: [1, t128, t128 * t128, t128 * t128 * t128],
                mult: match family {
                    Method::Outer => vec![level_count(t) as i128, 1],
                    Method::Inner => vec![1],
                },
                target: y as i128,
            }
        })
        .collect();
    let constant = (
        (bounds.min_start + bounds.min_end) as i128,
        (bounds.max_start + bounds.max_end) as i128,
    );
    let search = ExactSearch {
        eqs: &eqs,
        kinds,
        degree: bounds.max_degree,
        den: bounds.denominator as i128,
        lo: bounds.min_numerator as i128,
        hi: bounds.max_numerator as i128,
        constant,
        budget: bounds.node_budget,
    };
    let (numerators, k, exact) = match search.run(&mut |_, _| true) {
        SearchOutcome::Found(x, c) => (x, c, true),
        SearchOutcome::Exhausted | SearchOutcome::OverBudget => {
            let (x, c) = least_squares(&eqs, kinds, bounds, constant);
            (x, c, false)
        }
    };
    let k = k as u64;
    let chain = poly(numerators.last().expect("at least one kind"), bounds.denominator)?;

    let pipelined: Vec<(u32, u64)> = target
        .column(Configuration::Pipelined)
        .into_iter()
        .filter(|&(t, _)| stage_codelets(family, t) <= bounds.cus)
        .collect();
    let ends: Vec<u64> = (bounds.min_end..=bounds.max_end)
        .filter(|&e| e <= k && (bounds.min_start..=bounds.max_start).contains(&(k - e)))
        .collect();
    let fallback_end = ends.first().copied().unwrap_or(bounds.min_end);

    let profile = match family {
        Method::Outer => {
            let sum = poly(&numerators[0], bounds.denominator)?;
            let (conv, vmul) = halves(&chain);
            let kinds_for = || {
                BTreeMap::from([
                    ("conv".to_string(), conv.clone()),
                    ("vmul".to_string(), vmul.clone()),
                    ("sum".to_string(), sum.clone()),
                ])
            };
            let miss = |end: u64| -> u64 {
                let start = k - end;
                pipelined
                    .iter()
                    .map(|&(t, y)| {
                        let stages = [
                            conv.eval(t).unwrap_or(0),
                            vmul.eval(t).unwrap_or(0),
                            sum.eval(t).unwrap_or(0),
                        ];
                        pipelined_model(start, end, &stages, stage_codelets(family, t), bounds.cus)
                            .map_or(0, |p| p.abs_diff(y))
                    })
                    .sum()
            };
            let end = ends
                .iter()
                .copied()
                .min_by_key(|&e| (miss(e), e))
                .unwrap_or(fallback_end);
            build_profile(family, k.saturating_sub(end), end, kinds_for())
        }
        Method::Inner => {
            let mut chosen = None;
            if !pipelined.is_empty() {
                'ends: for &end in &ends {
                    let start = k - end;
                    let dot_eqs: Vec<Equation> = pipelined
                        .iter()
                        .map(|&(t, y)| {
                            let t = t as i128;
                            Equation {
                                powers: [1, t, t * t, t * t * t],
                                mult: vec![1],
                                target: y as i128 - start as i128,
                            }
                        })
                        .collect();
                    let dot_search = ExactSearch {
                        eqs: &dot_eqs,
                        kinds: 1,
                        degree: bounds.max_degree,
                        den: bounds.denominator as i128,
                        lo: bounds.min_numerator as i128,
                        hi: bounds.max_numerator as i128,
                        constant: (0, 0),
                        budget: bounds.node_budget,
                    };
                    let mut check = |x: &[Vec<i64>], _c: i128| -> bool {
                        let Ok(dot) = poly(&x[0], bounds.denominator) else {
                            return false;
                        };
                        let conv = chain.sub(&dot);
                        basic.iter().chain(pipelined.iter()).all(|&(t, _)| {
                            matches!((conv.eval(t), dot.eval(t)), (Ok(c), Ok(d)) if c + d == chain.eval(t).unwrap_or(u64::MAX))
                        }) && pipelined.iter().all(|&(t, y)| {
                            let stages = [conv.eval(t).unwrap_or(0), dot.eval(t).unwrap_or(0)];
                            pipelined_model(start, end, &stages, stage_codelets(family, t), bounds.cus) == Some(y)
                        })
                    };
                    match dot_search.run(&mut check) {
                        SearchOutcome::Found(x, _) => {
                            let dot = poly(&x[0], bounds.denominator)?;
                            chosen = Some((end, chain.sub(&dot), dot));
                            break 'ends;
                        }
                        SearchOutcome::Exhausted => {}
                        SearchOutcome::OverBudget => break 'ends,
                    }
                }
            }
            let (end, conv, dot) = chosen.unwrap_or_else(|| {
                let (conv, dot) = halves(&chain);
                (fallback_end, conv, dot)
            });
            build_profile(
                family,
                k.saturating_sub(end),
                end,
                BTreeMap::from([("conv".to_string(), conv), ("dot".to_string(), dot)]),
            )
        }
    };

    let residuals = target
        .cells()
        .map(|(tiles, config, y)| {
            let predicted = run_cell(family, tiles, config, bounds.cus, &profile)
                .ok()
                .map(|r| r.makespan);
            CellResidual {
                tiles,
                config,
                target: y,
                predicted,
                residual: predicted.map(|p| p as i64 - y as i64),
            }
        })
        .collect();
    Ok(CalibrationResult {
        profile,
        residuals,
        bounds: bounds.clone(),
        exact,
    })
}

/// Human-readable residual report, one line per cell.
pub fn residual_report(result: &CalibrationResult) -> String {
    let mut out = format!(
        "family {} fit {}\n",
        result.profile.family,
        if result.exact { "exact" } else { "least-squares" }
    );
    for r in &result.residuals {
        let predicted = r.predicted.map_or("-".to_string(), |p| p.to_string());
        let residual = r.residual.map_or("-".to_string(), |d| format!("{d:+}"));
        out.push_str(&format!(
            "{:>4} {:<9} target {:>7} predicted {:>7} residual {}\n",
            r.tiles, r.config, r.target, predicted, residual
        ));
    }
    out
}
