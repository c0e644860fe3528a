//! Learning-rate functions.
//!
//! All thirteen kinds are evaluated through a single formula,
//!
//! ```text
//! lr(t) = |k0 - k1| * g(t) + min(k0, k1)
//! ```
//!
//! where `g(t) ∈ [0, 1]` is the kind-specific shape. Decaying kinds pin
//! `k1 = 0` (so `lr = k0 * g(t)`) and FIX pins `k1 = k0`.
//!
//! | kind   | g(t)                                  | period |
//! |--------|---------------------------------------|--------|
//! | FIX    | -                                     | -      |
//! | STEP   | γ^floor(t/l)                          | -      |
//! | NSTEP  | γ^i, i = #{m ∈ milestones : m ≤ t}    | -      |
//! | EXP    | γ^t                                   | -      |
//! | INV    | (1 + tγ)^-p                           | -      |
//! | POLY   | (1 - t/max_iter)^p                    | -      |
//! | TRI    | (2/π)·|asin(sin(πt / 2l))|            | 2l     |
//! | TRI2   | TRI(t) / 2^floor(t/2l)                | -      |
//! | TRIEXP | γ^t · TRI(t)                          | -      |
//! | SIN    | |sin(πt / 2l)|                        | 2l     |
//! | SIN2   | SIN(t) / 2^floor(t/2l)                | -      |
//! | SINEXP | γ^t · SIN(t)                          | -      |
//! | COS    | ½(1 + cos(2πt / l))                   | l      |
//!
//! Iterations start at `t = 0`; `lr_at(policy, t)` is the rate applied to the
//! update performed during iteration `t`. Every `floor` is an integer
//! division on the exact iteration counts, and the trigonometric shapes are
//! evaluated on `t` reduced modulo their period, so periodic kinds repeat
//! bit-for-bit.

use std::f64::consts::{FRAC_2_PI, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The thirteen learning-rate functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LrKind {
    Fix,
    Step,
    Nstep,
    Exp,
    Inv,
    Poly,
    Tri,
    Tri2,
    Triexp,
    Sin,
    Sin2,
    Sinexp,
    Cos,
}

/// Broad grouping of the kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Fixed,
    Decaying,
    Cyclic,
}

impl LrKind {
    pub const ALL: [LrKind; 13] = [
        LrKind::Fix,
        LrKind::Step,
        LrKind::Nstep,
        LrKind::Exp,
        LrKind::Inv,
        LrKind::Poly,
        LrKind::Tri,
        LrKind::Tri2,
        LrKind::Triexp,
        LrKind::Sin,
        LrKind::Sin2,
        LrKind::Sinexp,
        LrKind::Cos,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LrKind::Fix => "FIX",
            LrKind::Step => "STEP",
            LrKind::Nstep => "NSTEP",
            LrKind::Exp => "EXP",
            LrKind::Inv => "INV",
            LrKind::Poly => "POLY",
            LrKind::Tri => "TRI",
            LrKind::Tri2 => "TRI2",
            LrKind::Triexp => "TRIEXP",
            LrKind::Sin => "SIN",
            LrKind::Sin2 => "SIN2",
            LrKind::Sinexp => "SINEXP",
            LrKind::Cos => "COS",
        }
    }

    pub fn family(self) -> Family {
        match self {
            LrKind::Fix => Family::Fixed,
            LrKind::Step | LrKind::Nstep | LrKind::Exp | LrKind::Inv | LrKind::Poly => {
                Family::Decaying
            }
            _ => Family::Cyclic,
        }
    }

    /// Triangle and sine kinds, which cycle upward from `k0` to `k1`.
    pub fn rises_from_k0(self) -> bool {
        matches!(
            self,
            LrKind::Tri | LrKind::Tri2 | LrKind::Triexp | LrKind::Sin | LrKind::Sin2 | LrKind::Sinexp
        )
    }

    fn uses_gamma(self) -> bool {
        matches!(
            self,
            LrKind::Step
                | LrKind::Nstep
                | LrKind::Exp
                | LrKind::Inv
                | LrKind::Triexp
                | LrKind::Sinexp
        )
    }

    fn uses_p(self) -> bool {
        matches!(self, LrKind::Inv | LrKind::Poly)
    }

    fn uses_l(self) -> bool {
        matches!(self, LrKind::Step) || self.family() == Family::Cyclic
    }
}

impl fmt::Display for LrKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LrKind {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase();
        LrKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == upper)
            .ok_or_else(|| ScheduleError::UnknownKind(s.to_string()))
    }
}

/// A learning-rate function together with concrete parameter values.
///
/// Absent fields are unused by the kind. The serialized form is a flat
/// key/value document with the field names below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrPolicy {
    pub kind: LrKind,
    pub k0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub milestones: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<u64>,
}

impl LrPolicy {
    fn bare(kind: LrKind, k0: f64) -> Self {
        LrPolicy {
            kind,
            k0,
            k1: None,
            gamma: None,
            p: None,
            l: None,
            milestones: None,
            max_iter: None,
        }
    }

    pub fn fix(k0: f64) -> Self {
        Self::bare(LrKind::Fix, k0)
    }

    pub fn step(k0: f64, gamma: f64, l: u64) -> Self {
        LrPolicy { gamma: Some(gamma), l: Some(l), ..Self::bare(LrKind::Step, k0) }
    }

    pub fn nstep(k0: f64, gamma: f64, milestones: Vec<u64>) -> Self {
        LrPolicy {
            gamma: Some(gamma),
            milestones: Some(milestones),
            ..Self::bare(LrKind::Nstep, k0)
        }
    }

    pub fn exp(k0: f64, gamma: f64) -> Self {
        LrPolicy { gamma: Some(gamma), ..Self::bare(LrKind::Exp, k0) }
    }

    pub fn inv(k0: f64, gamma: f64, p: f64) -> Self {
        LrPolicy { gamma: Some(gamma), p: Some(p), ..Self::bare(LrKind::Inv, k0) }
    }

    pub fn poly(k0: f64, p: f64, max_iter: u64) -> Self {
        LrPolicy { p: Some(p), max_iter: Some(max_iter), ..Self::bare(LrKind::Poly, k0) }
    }

    /// A cyclic policy without decay (TRI, TRI2, SIN, SIN2, COS).
    pub fn cyclic(kind: LrKind, k0: f64, k1: f64, l: u64) -> Self {
        LrPolicy { k1: Some(k1), l: Some(l), ..Self::bare(kind, k0) }
    }

    /// A cyclic policy with exponential decay (TRIEXP, SINEXP).
    pub fn cyclic_exp(kind: LrKind, k0: f64, k1: f64, gamma: f64, l: u64) -> Self {
        LrPolicy { gamma: Some(gamma), ..Self::cyclic(kind, k0, k1, l) }
    }

    pub fn tri(k0: f64, k1: f64, l: u64) -> Self {
        Self::cyclic(LrKind::Tri, k0, k1, l)
    }

    pub fn tri2(k0: f64, k1: f64, l: u64) -> Self {
        Self::cyclic(LrKind::Tri2, k0, k1, l)
    }

    pub fn triexp(k0: f64, k1: f64, gamma: f64, l: u64) -> Self {
        Self::cyclic_exp(LrKind::Triexp, k0, k1, gamma, l)
    }

    pub fn sin(k0: f64, k1: f64, l: u64) -> Self {
        Self::cyclic(LrKind::Sin, k0, k1, l)
    }

    pub fn sin2(k0: f64, k1: f64, l: u64) -> Self {
        Self::cyclic(LrKind::Sin2, k0, k1, l)
    }

    pub fn sinexp(k0: f64, k1: f64, gamma: f64, l: u64) -> Self {
        Self::cyclic_exp(LrKind::Sinexp, k0, k1, gamma, l)
    }

    pub fn cos(k0: f64, k1: f64, l: u64) -> Self {
        Self::cyclic(LrKind::Cos, k0, k1, l)
    }

    /// The `k1` that enters the unified formula: `k0` for FIX, `0` for the
    /// decaying kinds.
    pub fn effective_k1(&self) -> f64 {
        match self.kind.family() {
            Family::Fixed => self.k0,
            Family::Decaying => 0.0,
            Family::Cyclic => self.k1.unwrap_or(f64::NAN),
        }
    }

    /// Lower and upper bound of the rate over the policy's domain.
    pub fn bounds(&self) -> (f64, f64) {
        let k1 = self.effective_k1();
        (self.k0.min(k1), self.k0.max(k1))
    }

    pub fn validate(&self) -> Validation {
        validate(self)
    }

    /// Rate applied during iteration `t`.
    pub fn lr_at(&self, t: u64) -> Result<f64, ScheduleError> {
        lr_at(self, t)
    }

    /// Deterministic text form used as the last ranking tie-break and as the
    /// policy column in CSV output.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("policy serialization is infallible")
    }

    /// Parses the command-line literal `kind:k0[:k1[:gamma[:p]]]`.
    ///
    /// Empty positions are skipped, so `step:0.1::0.85` sets `gamma` without
    /// `k1`. A zero `k1` on a decaying kind is dropped. Lengths, milestones
    /// and `max_iter` are supplied separately.
    pub fn from_literal(literal: &str) -> Result<Self, ScheduleError> {
        let bad = || ScheduleError::BadLiteral(literal.to_string());
        let mut parts = literal.split(':');
        let kind: LrKind = parts.next().ok_or_else(bad)?.parse()?;
        let mut nums = Vec::new();
        for part in parts {
            if part.trim().is_empty() {
                nums.push(None);
            } else {
                nums.push(Some(part.trim().parse::<f64>().map_err(|_| bad())?));
            }
        }
        if nums.len() > 4 {
            return Err(bad());
        }
        nums.resize(4, None);
        let mut policy = Self::bare(kind, nums[0].ok_or_else(bad)?);
        policy.k1 = nums[1];
        policy.gamma = nums[2];
        policy.p = nums[3];
        if kind.family() == Family::Decaying && policy.k1 == Some(0.0) {
            policy.k1 = None;
        }
        Ok(policy)
    }
}

impl fmt::Display for LrPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(k0={}", self.kind, self.k0)?;
        if let Some(k1) = self.k1 {
            write!(f, ", k1={k1}")?;
        }
        if let Some(g) = self.gamma {
            write!(f, ", gamma={g}")?;
        }
        if let Some(p) = self.p {
            write!(f, ", p={p}")?;
        }
        if let Some(l) = self.l {
            write!(f, ", l={l}")?;
        }
        if let Some(ms) = &self.milestones {
            let ms: Vec<String> = ms.iter().map(u64::to_string).collect();
            write!(f, ", milestones=[{}]", ms.join(","))?;
        }
        if let Some(m) = self.max_iter {
            write!(f, ", max_iter={m}")?;
        }
        f.write_str(")")
    }
}

/// A single constraint a policy fails to satisfy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    K0OutOfRange,
    K1OutOfRange,
    K1MustEqualK0,
    K1MustBeZero,
    K0BelowK1Required,
    K0AboveK1Required,
    GammaOutOfRange,
    PNotPositive,
    LNotPositive,
    MaxIterNotPositive,
    MilestonesNotIncreasing,
    MilestonesEmpty,
    Missing(&'static str),
    Unused(&'static str),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::K0OutOfRange => f.write_str("k0 ∈ (0,1) required"),
            Violation::K1OutOfRange => f.write_str("k1 ∈ [0,1) required"),
            Violation::K1MustEqualK0 => f.write_str("k1 = k0 required"),
            Violation::K1MustBeZero => f.write_str("k1 = 0 required"),
            Violation::K0BelowK1Required => f.write_str("k0 < k1 required"),
            Violation::K0AboveK1Required => f.write_str("k0 > k1 required"),
            Violation::GammaOutOfRange => f.write_str("γ ∈ (0,1) required"),
            Violation::PNotPositive => f.write_str("p > 0 required"),
            Violation::LNotPositive => f.write_str("l > 0 required"),
            Violation::MaxIterNotPositive => f.write_str("max_iter > 0 required"),
            Violation::MilestonesNotIncreasing => {
                f.write_str("milestones strictly increasing and > 0 required")
            }
            Violation::MilestonesEmpty => f.write_str("at least one milestone required"),
            Violation::Missing(name) => write!(f, "missing parameter `{name}`"),
            Violation::Unused(name) => write!(f, "parameter `{name}` is not used by this kind"),
        }
    }
}

/// Outcome of [`validate`]: empty when the policy is usable.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Validation {
    pub violations: Vec<Violation>,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<(), ScheduleError> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(ScheduleError::Invalid(self.violations))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("invalid policy: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("iteration {t} is past the POLY horizon max_iter = {max_iter}")]
    BeyondHorizon { t: u64, max_iter: u64 },
    #[error("series needs t_end > 0 and stride >= 1 (got t_end = {t_end}, stride = {stride})")]
    BadSeries { t_end: u64, stride: u64 },
    #[error("unknown learning-rate kind `{0}`")]
    UnknownKind(String),
    #[error("malformed policy literal `{0}` (expected kind:k0[:k1[:gamma[:p]]])")]
    BadLiteral(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

fn in_open_unit(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

/// Checks every parameter constraint of the policy's kind.
///
/// FIX accepts any positive finite `k0` (the range test probes values of 1
/// and above to locate divergence); every other kind needs `k0 ∈ (0, 1)`.
pub fn validate(policy: &LrPolicy) -> Validation {
    use Violation::*;
    let kind = policy.kind;
    let mut v = Vec::new();

    let k0_ok = match kind {
        LrKind::Fix => policy.k0 > 0.0 && policy.k0.is_finite(),
        _ => in_open_unit(policy.k0),
    };
    if !k0_ok {
        v.push(K0OutOfRange);
    }

    match kind.family() {
        Family::Fixed => {
            if let Some(k1) = policy.k1 {
                if k1 != policy.k0 {
                    v.push(K1MustEqualK0);
                }
            }
        }
        Family::Decaying => {
            if let Some(k1) = policy.k1 {
                if k1 != 0.0 {
                    v.push(K1MustBeZero);
                }
            }
        }
        Family::Cyclic => match policy.k1 {
            None => v.push(Missing("k1")),
            Some(k1) => {
                if !(0.0..1.0).contains(&k1) {
                    v.push(K1OutOfRange);
                }
                if kind.rises_from_k0() && policy.k0 >= k1 {
                    v.push(K0BelowK1Required);
                }
                if kind == LrKind::Cos && policy.k0 <= k1 {
                    v.push(K0AboveK1Required);
                }
            }
        },
    }

    match (kind.uses_gamma(), policy.gamma) {
        (true, None) => v.push(Missing("gamma")),
        (true, Some(g)) if !in_open_unit(g) => v.push(GammaOutOfRange),
        (false, Some(_)) => v.push(Unused("gamma")),
        _ => {}
    }

    match (kind.uses_p(), policy.p) {
        (true, None) => v.push(Missing("p")),
        (true, Some(p)) if !(p > 0.0 && p.is_finite()) => v.push(PNotPositive),
        (false, Some(_)) => v.push(Unused("p")),
        _ => {}
    }

    match (kind.uses_l(), policy.l) {
        (true, None) => v.push(Missing("l")),
        (true, Some(0)) => v.push(LNotPositive),
        (false, Some(_)) => v.push(Unused("l")),
        _ => {}
    }

    match (kind == LrKind::Nstep, &policy.milestones) {
        (true, None) => v.push(Missing("milestones")),
        (true, Some(ms)) if ms.is_empty() => v.push(MilestonesEmpty),
        (true, Some(ms)) => {
            if ms[0] == 0 || ms.windows(2).any(|w| w[0] >= w[1]) {
                v.push(MilestonesNotIncreasing);
            }
        }
        (false, Some(_)) => v.push(Unused("milestones")),
        _ => {}
    }

    match (kind == LrKind::Poly, policy.max_iter) {
        (true, None) => v.push(Missing("max_iter")),
        (true, Some(0)) => v.push(MaxIterNotPositive),
        (false, Some(_)) => v.push(Unused("max_iter")),
        _ => {}
    }

    Validation { violations: v }
}

// |asin(sin(x))| folds x onto a triangle wave of period π.
fn triangle(r: u64, l: u64) -> f64 {
    let x = PI * r as f64 / (2 * l) as f64;
    FRAC_2_PI * x.sin().asin().abs()
}

fn sine(r: u64, l: u64) -> f64 {
    (PI * r as f64 / (2 * l) as f64).sin().abs()
}

fn halvings(t: u64, l: u64) -> f64 {
    let n = t / (2 * l);
    if n >= 1100 {
        0.0
    } else {
        0.5f64.powi(n as i32)
    }
}

/// Shape `g(t)` of the policy, before scaling by `|k0 - k1|`.
fn shape(policy: &LrPolicy, t: u64) -> Result<f64, ScheduleError> {
    let gamma = || policy.gamma.unwrap_or(f64::NAN);
    let l = || policy.l.unwrap_or(1);
    let g = match policy.kind {
        LrKind::Fix => 0.0,
        LrKind::Step => gamma().powf((t / l()) as f64),
        LrKind::Nstep => {
            let passed = policy
                .milestones
                .as_deref()
                .unwrap_or_default()
                .iter()
                .filter(|&&m| m <= t)
                .count();
            gamma().powi(passed as i32)
        }
        LrKind::Exp => gamma().powf(t as f64),
        LrKind::Inv => {
            let p = policy.p.unwrap_or(f64::NAN);
            (1.0 + t as f64 * gamma()).powf(-p)
        }
        LrKind::Poly => {
            let max_iter = policy.max_iter.unwrap_or(0);
            if t > max_iter {
                return Err(ScheduleError::BeyondHorizon { t, max_iter });
            }
            let p = policy.p.unwrap_or(f64::NAN);
            (1.0 - t as f64 / max_iter as f64).powf(p)
        }
        LrKind::Tri => triangle(t % (2 * l()), l()),
        LrKind::Tri2 => halvings(t, l()) * triangle(t % (2 * l()), l()),
        LrKind::Triexp => gamma().powf(t as f64) * triangle(t % (2 * l()), l()),
        LrKind::Sin => sine(t % (2 * l()), l()),
        LrKind::Sin2 => halvings(t, l()) * sine(t % (2 * l()), l()),
        LrKind::Sinexp => gamma().powf(t as f64) * sine(t % (2 * l()), l()),
        LrKind::Cos => {
            let r = t % l();
            0.5 * (1.0 + (2.0 * PI * r as f64 / l() as f64).cos())
        }
    };
    Ok(g.clamp(0.0, 1.0))
}

/// Evaluates the learning rate of `policy` at iteration `t`.
///
/// Fails when the policy is invalid or, for POLY, when `t > max_iter`.
pub fn lr_at(policy: &LrPolicy, t: u64) -> Result<f64, ScheduleError> {
    validate(policy).into_result()?;
    let g = shape(policy, t)?;
    let k1 = policy.effective_k1();
    let (lo, hi) = (policy.k0.min(k1), policy.k0.max(k1));
    Ok(((policy.k0 - k1).abs() * g + lo).clamp(lo, hi))
}

/// One sample of a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulePoint {
    pub t: u64,
    pub lr: f64,
}

/// Samples `policy` at `t = 0, stride, 2·stride, …` up to and including `t_end`.
pub fn schedule_series(
    policy: &LrPolicy,
    t_end: u64,
    stride: u64,
) -> Result<Vec<SchedulePoint>, ScheduleError> {
    if t_end == 0 || stride == 0 {
        return Err(ScheduleError::BadSeries { t_end, stride });
    }
    validate(policy).into_result()?;
    (0..=t_end)
        .step_by(stride as usize)
        .map(|t| Ok(SchedulePoint { t, lr: lr_at(policy, t)? }))
        .collect()
}

/// Number of tunable parameters of the policy's function.
///
/// POLY counts its horizon as a parameter (4); use
/// [`param_count_for_budget`] when the horizon is the training budget.
pub fn param_count(policy: &LrPolicy) -> usize {
    match policy.kind {
        LrKind::Fix => 1,
        LrKind::Exp => 2,
        LrKind::Step
        | LrKind::Inv
        | LrKind::Tri
        | LrKind::Tri2
        | LrKind::Sin
        | LrKind::Sin2
        | LrKind::Cos => 3,
        LrKind::Triexp | LrKind::Sinexp | LrKind::Poly => 4,
        LrKind::Nstep => policy.milestones.as_ref().map_or(0, Vec::len) + 2,
    }
}

/// Like [`param_count`], but a POLY whose horizon equals the training budget
/// has one parameter fewer.
pub fn param_count_for_budget(policy: &LrPolicy, budget: u64) -> usize {
    match (policy.kind, policy.max_iter) {
        (LrKind::Poly, Some(m)) if m == budget => 3,
        _ => param_count(policy),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rising_tri_policy_validates() {
        assert!(LrPolicy::tri(0.001, 0.006, 2000).validate().is_ok());
    }

    #[test]
    fn tri_with_inverted_bounds_is_rejected() {
        let v = LrPolicy::tri(0.006, 0.001, 2000).validate();
        assert_eq!(v.violations, vec![Violation::K0BelowK1Required]);
        assert_eq!(v.violations[0].to_string(), "k0 < k1 required");
    }

    #[test]
    fn step_gamma_above_one_is_rejected() {
        let v = LrPolicy::step(0.1, 1.5, 5000).validate();
        assert_eq!(v.violations, vec![Violation::GammaOutOfRange]);
        assert_eq!(v.violations[0].to_string(), "γ ∈ (0,1) required");
    }

    #[test]
    fn cos_requires_descending_bounds() {
        let v = LrPolicy::cos(0.001, 0.1, 100).validate();
        assert_eq!(v.violations, vec![Violation::K0AboveK1Required]);
    }

    #[test]
    fn nstep_milestones_must_increase() {
        let v = LrPolicy::nstep(0.01, 0.1, vec![100, 100]).validate();
        assert_eq!(v.violations, vec![Violation::MilestonesNotIncreasing]);
        let v = LrPolicy::nstep(0.01, 0.1, vec![0, 10]).validate();
        assert_eq!(v.violations, vec![Violation::MilestonesNotIncreasing]);
    }

    #[test]
    fn missing_and_unused_parameters_are_reported() {
        let mut p = LrPolicy::tri(0.001, 0.006, 2000);
        p.l = None;
        p.gamma = Some(0.5);
        let v = p.validate().violations;
        assert!(v.contains(&Violation::Missing("l")));
        assert!(v.contains(&Violation::Unused("gamma")));
    }

    #[test]
    fn decaying_kinds_reject_nonzero_k1() {
        let mut p = LrPolicy::exp(0.01, 0.99);
        p.k1 = Some(0.0);
        assert!(p.validate().is_ok());
        p.k1 = Some(0.001);
        assert_eq!(p.validate().violations, vec![Violation::K1MustBeZero]);
    }

    #[test]
    fn fix_accepts_large_probe_values_but_cyclic_kinds_do_not() {
        assert!(LrPolicy::fix(10.0).validate().is_ok());
        assert!(!LrPolicy::fix(0.0).validate().is_ok());
        assert!(!LrPolicy::tri(1.5, 2.0, 10).validate().is_ok());
    }

    #[test]
    fn fix_is_constant() {
        assert_eq!(lr_at(&LrPolicy::fix(0.01), 7341).unwrap(), 0.01);
    }

    #[test]
    fn tri_endpoints_and_midpoint() {
        let p = LrPolicy::tri(0.001, 0.006, 2000);
        assert_eq!(p.lr_at(0).unwrap(), 0.001);
        assert_relative_eq!(p.lr_at(2000).unwrap(), 0.006, max_relative = 1e-15);
        assert_relative_eq!(p.lr_at(1000).unwrap(), 0.0035, max_relative = 1e-15);
    }

    #[test]
    fn step_boundary() {
        let p = LrPolicy::step(0.1, 0.85, 5000);
        assert_eq!(p.lr_at(4999).unwrap(), 0.1);
        assert_relative_eq!(p.lr_at(5000).unwrap(), 0.085, max_relative = 1e-15);
    }

    #[test]
    fn exp_matches_high_precision_value() {
        // 0.01 * 0.99^100 evaluated with 40 significant digits.
        let expected = 0.003_660_323_412_732_295;
        let got = LrPolicy::exp(0.01, 0.99).lr_at(100).unwrap();
        assert_relative_eq!(got, expected, max_relative = 1e-13);
    }

    #[test]
    fn cos_starts_at_k0() {
        assert_eq!(LrPolicy::cos(0.1, 0.001, 1000).lr_at(0).unwrap(), 0.1);
    }

    #[test]
    fn nstep_counts_milestones_half_open() {
        let p = LrPolicy::nstep(0.001, 0.1, vec![60000, 65000]);
        assert_eq!(p.lr_at(59999).unwrap(), 0.001);
        assert_relative_eq!(p.lr_at(60000).unwrap(), 0.0001, max_relative = 1e-15);
        assert_relative_eq!(p.lr_at(65000).unwrap(), 0.00001, max_relative = 1e-15);
    }

    #[test]
    fn poly_reaches_zero_at_horizon_and_errors_beyond() {
        let p = LrPolicy::poly(0.01, 2.0, 100);
        assert_eq!(p.lr_at(0).unwrap(), 0.01);
        assert_eq!(p.lr_at(100).unwrap(), 0.0);
        assert_eq!(
            p.lr_at(101),
            Err(ScheduleError::BeyondHorizon { t: 101, max_iter: 100 })
        );
    }

    #[test]
    fn invalid_policy_is_an_error_for_lr_at() {
        assert!(matches!(
            LrPolicy::step(0.1, 1.5, 10).lr_at(0),
            Err(ScheduleError::Invalid(_))
        ));
    }

    #[test]
    fn series_fix() {
        let s = schedule_series(&LrPolicy::fix(0.01), 10, 5).unwrap();
        let pairs: Vec<_> = s.iter().map(|p| (p.t, p.lr)).collect();
        assert_eq!(pairs, vec![(0, 0.01), (5, 0.01), (10, 0.01)]);
    }

    #[test]
    fn series_sin_hits_extremes() {
        let s = schedule_series(&LrPolicy::sin(0.01, 0.06, 2000), 4000, 2000).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].lr, 0.01);
        assert_relative_eq!(s[1].lr, 0.06, max_relative = 1e-15);
        assert_relative_eq!(s[2].lr, 0.01, max_relative = 1e-13);
    }

    #[test]
    fn tri2_second_cycle_peak_is_halved() {
        let p = LrPolicy::tri2(0.01, 0.06, 2000);
        assert_relative_eq!(p.lr_at(2000).unwrap(), 0.06, max_relative = 1e-15);
        // 0.05 / 2 + 0.01
        assert_relative_eq!(p.lr_at(6000).unwrap(), 0.035, max_relative = 1e-15);
    }

    #[test]
    fn series_rejects_zero_stride() {
        assert_eq!(
            schedule_series(&LrPolicy::fix(0.01), 10, 0),
            Err(ScheduleError::BadSeries { t_end: 10, stride: 0 })
        );
    }

    #[test]
    fn param_counts() {
        assert_eq!(param_count(&LrPolicy::fix(0.01)), 1);
        assert_eq!(param_count(&LrPolicy::nstep(0.01, 0.1, vec![1, 2, 3, 4, 5])), 7);
        assert_eq!(param_count(&LrPolicy::triexp(0.001, 0.006, 0.99994, 2000)), 4);
        let poly = LrPolicy::poly(0.01, 1.0, 500);
        assert_eq!(param_count(&poly), 4);
        assert_eq!(param_count_for_budget(&poly, 500), 3);
        assert_eq!(param_count_for_budget(&poly, 400), 4);
    }

    #[test]
    fn literal_parsing() {
        assert_eq!(LrPolicy::from_literal("fix:0.025").unwrap(), LrPolicy::fix(0.025));
        let p = LrPolicy::from_literal("TRIEXP:0.05:0.3:0.94").unwrap();
        assert_eq!((p.kind, p.k1, p.gamma), (LrKind::Triexp, Some(0.3), Some(0.94)));
        let p = LrPolicy::from_literal("step:0.1::0.85").unwrap();
        assert_eq!((p.k1, p.gamma), (None, Some(0.85)));
        let p = LrPolicy::from_literal("step:0.1:0:0.85").unwrap();
        assert_eq!(p.k1, None);
        assert!(LrPolicy::from_literal("bogus:0.1").is_err());
        assert!(LrPolicy::from_literal("fix:abc").is_err());
        assert!(LrPolicy::from_literal("fix").is_err());
    }

    #[test]
    fn text_format_uses_flat_lowercase_keys() {
        let p = LrPolicy::nstep(0.001, 0.1, vec![60000, 65000]);
        assert_eq!(
            p.canonical(),
            r#"{"kind":"NSTEP","k0":0.001,"gamma":0.1,"milestones":[60000,65000]}"#
        );
        let back: LrPolicy = serde_json::from_str(&p.canonical()).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<LrPolicy>(r#"{"kind":"FIX","k0":0.1,"bogus":1}"#).is_err());
    }
}
