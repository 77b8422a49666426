//! Membership functions and linguistic variables.
//!
//! A [`LinguisticVariable`] names a concept such as "Large Nodule" over a raw
//! measurement column and splits it into labelled terms, each backed by a
//! [`MembershipFunction`]. Most variables in practice are complementary pairs:
//! one explicit membership function for the positive term and its complement
//! `1 - mu(x)` for the negative one.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used for all degree comparisons.
pub const DEGREE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    RectTrapezoid,
    Triangular,
    Trapezoid,
    Gaussian,
    Sigmoid,
}

impl Shape {
    fn param_count(self) -> usize {
        match self {
            Shape::RectTrapezoid | Shape::Gaussian | Shape::Sigmoid => 2,
            Shape::Triangular => 3,
            Shape::Trapezoid => 4,
        }
    }
}

/// A membership function over a raw feature, in that feature's units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MembershipRepr", into = "MembershipRepr")]
pub enum MembershipFunction {
    /// Zero up to `low`, linear up to one at `high`, one afterwards.
    RectTrapezoid { low: f64, high: f64 },
    Triangular { left: f64, peak: f64, right: f64 },
    Trapezoid {
        left: f64,
        left_top: f64,
        right_top: f64,
        right: f64,
    },
    Gaussian { mean: f64, sigma: f64 },
    /// `1 / (1 + exp(-slope * (x - center)))`; a negative slope gives a
    /// decreasing curve.
    Sigmoid { center: f64, slope: f64 },
}

#[derive(Serialize, Deserialize)]
struct MembershipRepr {
    shape: Shape,
    params: Vec<f64>,
}

impl TryFrom<MembershipRepr> for MembershipFunction {
    type Error = Error;

    fn try_from(repr: MembershipRepr) -> Result<Self> {
        MembershipFunction::new(repr.shape, &repr.params)
    }
}

impl From<MembershipFunction> for MembershipRepr {
    fn from(mf: MembershipFunction) -> Self {
        MembershipRepr {
            shape: mf.shape(),
            params: mf.params(),
        }
    }
}

impl MembershipFunction {
    pub fn new(shape: Shape, params: &[f64]) -> Result<Self> {
        if params.len() != shape.param_count() {
            return Err(Error::InvalidMembership(format!(
                "{shape:?} takes {} parameters, got {}",
                shape.param_count(),
                params.len()
            )));
        }
        if let Some(bad) = params.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidMembership(format!(
                "parameters must be finite, got {bad}"
            )));
        }
        let breakpoints_ordered = params.windows(2).all(|w| w[0] <= w[1]);
        let mf = match shape {
            Shape::RectTrapezoid | Shape::Triangular | Shape::Trapezoid
                if !breakpoints_ordered =>
            {
                return Err(Error::InvalidMembership(format!(
                    "breakpoints must be non-decreasing, got {params:?}"
                )));
            }
            Shape::RectTrapezoid => MembershipFunction::RectTrapezoid {
                low: params[0],
                high: params[1],
            },
            Shape::Triangular => MembershipFunction::Triangular {
                left: params[0],
                peak: params[1],
                right: params[2],
            },
            Shape::Trapezoid => MembershipFunction::Trapezoid {
                left: params[0],
                left_top: params[1],
                right_top: params[2],
                right: params[3],
            },
            Shape::Gaussian => {
                if params[1] <= 0.0 {
                    return Err(Error::InvalidMembership(format!(
                        "gaussian sigma must be positive, got {}",
                        params[1]
                    )));
                }
                MembershipFunction::Gaussian {
                    mean: params[0],
                    sigma: params[1],
                }
            }
            Shape::Sigmoid => {
                if params[1] == 0.0 {
                    return Err(Error::InvalidMembership(
                        "sigmoid slope must be non-zero".into(),
                    ));
                }
                MembershipFunction::Sigmoid {
                    center: params[0],
                    slope: params[1],
                }
            }
        };
        Ok(mf)
    }

    pub fn shape(&self) -> Shape {
        match self {
            MembershipFunction::RectTrapezoid { .. } => Shape::RectTrapezoid,
            MembershipFunction::Triangular { .. } => Shape::Triangular,
            MembershipFunction::Trapezoid { .. } => Shape::Trapezoid,
            MembershipFunction::Gaussian { .. } => Shape::Gaussian,
            MembershipFunction::Sigmoid { .. } => Shape::Sigmoid,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            MembershipFunction::RectTrapezoid { low, high } => vec![low, high],
            MembershipFunction::Triangular { left, peak, right } => vec![left, peak, right],
            MembershipFunction::Trapezoid {
                left,
                left_top,
                right_top,
                right,
            } => vec![left, left_top, right_top, right],
            MembershipFunction::Gaussian { mean, sigma } => vec![mean, sigma],
            MembershipFunction::Sigmoid { center, slope } => vec![center, slope],
        }
    }

    /// Degree of membership of `x`, always in `[0, 1]`.
    pub fn evaluate(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::Domain(x));
        }
        let degree = match *self {
            MembershipFunction::RectTrapezoid { low, high } => rising(x, low, high),
            MembershipFunction::Triangular { left, peak, right } => {
                rising(x, left, peak).min(falling(x, peak, right))
            }
            MembershipFunction::Trapezoid {
                left,
                left_top,
                right_top,
                right,
            } => rising(x, left, left_top).min(falling(x, right_top, right)),
            MembershipFunction::Gaussian { mean, sigma } => {
                let z = (x - mean) / sigma;
                (-0.5 * z * z).exp()
            }
            MembershipFunction::Sigmoid { center, slope } => {
                1.0 / (1.0 + (-slope * (x - center)).exp())
            }
        };
        Ok(degree.clamp(0.0, 1.0))
    }

    /// A range covering everything interesting about the curve.
    pub fn span(&self) -> (f64, f64) {
        match *self {
            MembershipFunction::RectTrapezoid { low, high } => (low, high),
            MembershipFunction::Triangular { left, right, .. } => (left, right),
            MembershipFunction::Trapezoid { left, right, .. } => (left, right),
            MembershipFunction::Gaussian { mean, sigma } => {
                (mean - 3.0 * sigma, mean + 3.0 * sigma)
            }
            MembershipFunction::Sigmoid { center, slope } => {
                let half = 6.0 / slope.abs();
                (center - half, center + half)
            }
        }
    }
}

fn rising(x: f64, low: f64, high: f64) -> f64 {
    if x >= high {
        1.0
    } else if x <= low {
        0.0
    } else {
        (x - low) / (high - low)
    }
}

fn falling(x: f64, top: f64, low: f64) -> f64 {
    if x <= top {
        1.0
    } else if x >= low {
        0.0
    } else {
        (low - x) / (low - top)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TermMembership {
    Function(MembershipFunction),
    /// `1 - mu(x)` of the named sibling term.
    ComplementOf(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TermRepr", into = "TermRepr")]
pub struct Term {
    pub label: String,
    pub membership: TermMembership,
}

impl Term {
    pub fn function(label: impl Into<String>, mf: MembershipFunction) -> Self {
        Term {
            label: label.into(),
            membership: TermMembership::Function(mf),
        }
    }

    pub fn complement_of(label: impl Into<String>, of: impl Into<String>) -> Self {
        Term {
            label: label.into(),
            membership: TermMembership::ComplementOf(of.into()),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermRepr {
    label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shape: Option<Shape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    params: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    complement_of: Option<String>,
}

impl TryFrom<TermRepr> for Term {
    type Error = Error;

    fn try_from(repr: TermRepr) -> Result<Self> {
        let membership = match (repr.shape, repr.params, repr.complement_of) {
            (Some(shape), Some(params), None) => {
                TermMembership::Function(MembershipFunction::new(shape, &params)?)
            }
            (None, None, Some(of)) => TermMembership::ComplementOf(of),
            _ => {
                return Err(Error::InvalidMembership(format!(
                    "term `{}` needs either `shape` and `params` or `complement_of`",
                    repr.label
                )))
            }
        };
        Ok(Term {
            label: repr.label,
            membership,
        })
    }
}

impl From<Term> for TermRepr {
    fn from(term: Term) -> Self {
        match term.membership {
            TermMembership::Function(mf) => TermRepr {
                label: term.label,
                shape: Some(mf.shape()),
                params: Some(mf.params()),
                complement_of: None,
            },
            TermMembership::ComplementOf(of) => TermRepr {
                label: term.label,
                shape: None,
                params: None,
                complement_of: Some(of),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutSide {
    /// Values at or above the cut belong to the positive term.
    #[default]
    Above,
    /// Values at or below the cut belong to the positive term.
    Below,
}

/// Crisp threshold used when the variable is projected onto a single term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrispCut {
    pub cut: f64,
    #[serde(default)]
    pub positive_side: CutSide,
}

impl CrispCut {
    pub fn above(cut: f64) -> Self {
        CrispCut {
            cut,
            positive_side: CutSide::Above,
        }
    }

    fn is_positive(&self, x: f64) -> bool {
        match self.positive_side {
            CutSide::Above => x >= self.cut,
            CutSide::Below => x <= self.cut,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinguisticVariable {
    name: String,
    raw_feature: String,
    terms: Vec<Term>,
    complementary: bool,
    positive_term: usize,
    crisp: Option<CrispCut>,
    support: Option<(f64, f64)>,
}

impl LinguisticVariable {
    /// Builds and validates a variable. A `ComplementOf` term forces the
    /// variable to be complementary.
    pub fn new(
        name: impl Into<String>,
        raw_feature: impl Into<String>,
        terms: Vec<Term>,
        complementary: bool,
    ) -> Result<Self> {
        let name = name.into();
        let invalid = |message: String| Error::InvalidVariable {
            variable: name.clone(),
            message,
        };
        if terms.len() < 2 {
            return Err(invalid(format!(
                "needs at least two terms, got {}",
                terms.len()
            )));
        }
        for (i, term) in terms.iter().enumerate() {
            if term.label.is_empty() {
                return Err(invalid("term labels must be non-empty".into()));
            }
            if terms[..i].iter().any(|t| t.label == term.label) {
                return Err(invalid(format!("duplicate term `{}`", term.label)));
            }
        }
        let mut has_complement = false;
        for term in &terms {
            if let TermMembership::ComplementOf(of) = &term.membership {
                has_complement = true;
                match terms.iter().find(|t| &t.label == of) {
                    Some(Term {
                        membership: TermMembership::Function(_),
                        ..
                    }) => {}
                    Some(_) => {
                        return Err(invalid(format!(
                            "term `{}` complements `{of}`, which is itself a complement",
                            term.label
                        )))
                    }
                    None => {
                        return Err(invalid(format!(
                            "term `{}` complements unknown term `{of}`",
                            term.label
                        )))
                    }
                }
            }
        }
        let complementary = complementary || has_complement;
        if complementary && terms.len() != 2 {
            return Err(invalid(format!(
                "a complementary variable has exactly two terms, got {}",
                terms.len()
            )));
        }
        let positive_term = terms
            .iter()
            .position(|t| t.label == "1")
            .unwrap_or(terms.len() - 1);
        let lv = LinguisticVariable {
            name,
            raw_feature: raw_feature.into(),
            terms,
            complementary,
            positive_term,
            crisp: None,
            support: None,
        };
        if complementary && !has_complement {
            lv.check_partition()?;
        }
        Ok(lv)
    }

    /// A two-term variable where `positive` follows `mf` and `negative` is its
    /// complement.
    pub fn complementary_pair(
        name: impl Into<String>,
        raw_feature: impl Into<String>,
        negative: &str,
        positive: &str,
        mf: MembershipFunction,
    ) -> Result<Self> {
        let mut lv = LinguisticVariable::new(
            name,
            raw_feature,
            vec![
                Term::complement_of(negative, positive),
                Term::function(positive, mf),
            ],
            true,
        )?;
        lv.positive_term = 1;
        Ok(lv)
    }

    pub fn with_positive_term(mut self, label: &str) -> Result<Self> {
        self.positive_term = self.term_index(label).ok_or_else(|| Error::InvalidVariable {
            variable: self.name.clone(),
            message: format!("positive term `{label}` is not a term"),
        })?;
        Ok(self)
    }

    pub fn with_crisp_cut(mut self, cut: CrispCut) -> Result<Self> {
        if !cut.cut.is_finite() {
            return Err(Error::InvalidVariable {
                variable: self.name.clone(),
                message: format!("crisp cut must be finite, got {}", cut.cut),
            });
        }
        self.crisp = Some(cut);
        Ok(self)
    }

    pub fn with_support(mut self, low: f64, high: f64) -> Result<Self> {
        if !(low.is_finite() && high.is_finite() && low < high) {
            return Err(Error::InvalidVariable {
                variable: self.name.clone(),
                message: format!("support must satisfy low < high, got [{low}, {high}]"),
            });
        }
        self.support = Some((low, high));
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn raw_feature(&self) -> &str {
        &self.raw_feature
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn term_labels(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(|t| t.label.as_str())
    }

    pub fn is_complementary(&self) -> bool {
        self.complementary
    }

    pub fn positive_term(&self) -> &str {
        &self.terms[self.positive_term].label
    }

    pub fn crisp_cut(&self) -> Option<CrispCut> {
        self.crisp
    }

    pub fn term_index(&self, label: &str) -> Option<usize> {
        self.terms.iter().position(|t| t.label == label)
    }

    /// Degrees for every term, in term order.
    pub fn degrees(&self, x: f64) -> Result<Vec<f64>> {
        if !x.is_finite() {
            return Err(Error::Domain(x));
        }
        self.terms
            .iter()
            .map(|term| self.term_degree(term, x))
            .collect()
    }

    pub fn term_degrees(&self, x: f64) -> Result<Vec<(String, f64)>> {
        let degrees = self.degrees(x)?;
        Ok(self
            .terms
            .iter()
            .zip(degrees)
            .map(|(t, d)| (t.label.clone(), d))
            .collect())
    }

    pub fn degree(&self, label: &str, x: f64) -> Result<f64> {
        let term = self
            .terms
            .iter()
            .find(|t| t.label == label)
            .ok_or_else(|| Error::query(format!("`{}` has no term `{label}`", self.name)))?;
        self.term_degree(term, x)
    }

    fn term_degree(&self, term: &Term, x: f64) -> Result<f64> {
        match &term.membership {
            TermMembership::Function(mf) => mf.evaluate(x),
            TermMembership::ComplementOf(of) => {
                let base = self
                    .terms
                    .iter()
                    .find(|t| &t.label == of)
                    .expect("complement target checked at construction");
                match &base.membership {
                    TermMembership::Function(mf) => Ok(1.0 - mf.evaluate(x)?),
                    TermMembership::ComplementOf(_) => unreachable!("no complement chains"),
                }
            }
        }
    }

    /// Projects `x` onto a single term, emulating a crisp probability tree.
    ///
    /// With a crisp cut the side of the cut decides; without one the positive
    /// term wins when its degree is at least 0.5. Ties go to the positive term.
    pub fn crisp_project(&self, x: f64) -> Result<&str> {
        if !self.complementary {
            return Err(Error::Unsupported {
                variable: self.name.clone(),
                message: "crisp projection needs a complementary two-term variable".into(),
            });
        }
        if !x.is_finite() {
            return Err(Error::Domain(x));
        }
        let positive = match self.crisp {
            Some(cut) => cut.is_positive(x),
            None => degree_selects_positive(self.term_degree(&self.terms[self.positive_term], x)?),
        };
        let index = if positive {
            self.positive_term
        } else {
            1 - self.positive_term
        };
        Ok(&self.terms[index].label)
    }

    /// Plotting range: the declared support, or the breakpoints padded by a
    /// quarter of their span.
    pub fn support(&self) -> (f64, f64) {
        if let Some(support) = self.support {
            return support;
        }
        let (mut low, mut high) = (f64::INFINITY, f64::NEG_INFINITY);
        for term in &self.terms {
            if let TermMembership::Function(mf) = &term.membership {
                let (a, b) = mf.span();
                low = low.min(a);
                high = high.max(b);
            }
        }
        if let Some(cut) = self.crisp {
            low = low.min(cut.cut);
            high = high.max(cut.cut);
        }
        let pad = ((high - low) * 0.25).max(1.0);
        (low - pad, high + pad)
    }

    pub fn declared_support(&self) -> Option<(f64, f64)> {
        self.support
    }

    /// Samples every term's curve at `points` evenly spaced inputs over the
    /// support, endpoints included.
    pub fn sample(&self, points: usize) -> Result<Curves> {
        let (low, high) = self.support();
        let xs: Vec<f64> = match points {
            0 => Vec::new(),
            1 => vec![low],
            n => (0..n)
                .map(|i| low + (high - low) * i as f64 / (n - 1) as f64)
                .collect(),
        };
        let mut terms: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for x in &xs {
            for (label, degree) in self.term_degrees(*x)? {
                terms.entry(label).or_default().push(degree);
            }
        }
        Ok(Curves { x: xs, terms })
    }

    /// Sum-to-one check for complementary pairs given as two explicit curves.
    fn check_partition(&self) -> Result<()> {
        let (low, high) = self
            .terms
            .iter()
            .filter_map(|t| match &t.membership {
                TermMembership::Function(mf) => Some(mf.span()),
                TermMembership::ComplementOf(_) => None,
            })
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| (lo.min(a), hi.max(b)));
        let mut grid: Vec<f64> = (0..=400)
            .map(|i| low + (high - low) * i as f64 / 400.0)
            .collect();
        for term in &self.terms {
            if let TermMembership::Function(mf) = &term.membership {
                grid.extend(mf.params());
            }
        }
        for x in grid {
            let sum: f64 = self.degrees(x)?.iter().sum();
            if (sum - 1.0).abs() > DEGREE_TOLERANCE {
                return Err(Error::InvalidVariable {
                    variable: self.name.clone(),
                    message: format!(
                        "declared complementary but degrees sum to {sum} at x = {x}"
                    ),
                });
            }
        }
        Ok(())
    }
}

/// The 0.5 rule behind degree-based crisp projection.
pub fn degree_selects_positive(positive_degree: f64) -> bool {
    positive_degree >= 0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub x: Vec<f64>,
    pub terms: BTreeMap<String, Vec<f64>>,
}

/// Chooses a linguistic variable per record from another column, e.g.
/// separate anemia sets for male and female patients.
#[derive(Debug, Clone, PartialEq)]
pub struct Selector {
    pub column: String,
    pub cases: BTreeMap<String, LinguisticVariable>,
}

/// A schema variable backed by fuzzy sets over a raw numeric column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BindingRepr", into = "BindingRepr")]
pub struct FuzzyBinding {
    variable: String,
    raw_feature: String,
    default: Option<LinguisticVariable>,
    selector: Option<Selector>,
}

impl FuzzyBinding {
    pub fn single(lv: LinguisticVariable) -> Self {
        FuzzyBinding {
            variable: lv.name.clone(),
            raw_feature: lv.raw_feature.clone(),
            default: Some(lv),
            selector: None,
        }
    }

    pub fn selected(
        variable: impl Into<String>,
        raw_feature: impl Into<String>,
        selector: Selector,
        default: Option<LinguisticVariable>,
    ) -> Result<Self> {
        let binding = FuzzyBinding {
            variable: variable.into(),
            raw_feature: raw_feature.into(),
            default,
            selector: Some(selector),
        };
        binding.validate()?;
        Ok(binding)
    }

    fn validate(&self) -> Result<()> {
        let labels: Vec<Vec<&str>> = self
            .variables()
            .map(|lv| lv.term_labels().collect())
            .collect();
        if labels.is_empty() {
            return Err(Error::InvalidVariable {
                variable: self.variable.clone(),
                message: "no fuzzy sets declared".into(),
            });
        }
        if labels.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::InvalidVariable {
                variable: self.variable.clone(),
                message: "every selector case must declare the same terms".into(),
            });
        }
        Ok(())
    }

    pub fn variable(&self) -> &str {
        &self.variable
    }

    pub fn raw_feature(&self) -> &str {
        &self.raw_feature
    }

    pub fn selector(&self) -> Option<&Selector> {
        self.selector.as_ref()
    }

    pub fn default_variable(&self) -> Option<&LinguisticVariable> {
        self.default.as_ref()
    }

    /// Every linguistic variable this binding may resolve to.
    pub fn variables(&self) -> impl Iterator<Item = &LinguisticVariable> {
        self.default
            .iter()
            .chain(self.selector.iter().flat_map(|s| s.cases.values()))
    }

    pub fn term_labels(&self) -> Vec<String> {
        self.variables()
            .next()
            .map(|lv| lv.term_labels().map(str::to_string).collect())
            .unwrap_or_default()
    }

    pub fn is_complementary(&self) -> bool {
        self.variables().all(LinguisticVariable::is_complementary)
    }

    /// Picks the linguistic variable for a record given its context columns.
    pub fn resolve(&self, context: &BTreeMap<String, String>) -> Result<&LinguisticVariable> {
        if let Some(selector) = &self.selector {
            if let Some(lv) = context
                .get(&selector.column)
                .and_then(|key| selector.cases.get(key))
            {
                return Ok(lv);
            }
        }
        match (&self.default, &self.selector) {
            (Some(lv), _) => Ok(lv),
            (None, Some(selector)) => Err(Error::query(format!(
                "fuzzy sets for `{}` depend on `{}`, which is missing or has no matching case",
                self.variable, selector.column
            ))),
            (None, None) => unreachable!("validated at construction"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VariableRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    terms: Option<Vec<Term>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    positive_term: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    crisp: Option<CrispCut>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    support: Option<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectorRepr {
    column: String,
    cases: BTreeMap<String, VariableRepr>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BindingRepr {
    variable: String,
    raw_feature: String,
    #[serde(flatten)]
    base: VariableRepr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    selector: Option<SelectorRepr>,
}

impl VariableRepr {
    fn build(
        &self,
        name: &str,
        raw_feature: &str,
        parent: Option<&VariableRepr>,
    ) -> Result<Option<LinguisticVariable>> {
        let Some(terms) = self.terms.clone() else {
            return Ok(None);
        };
        let mut lv = LinguisticVariable::new(name, raw_feature, terms, false)?;
        let positive = self
            .positive_term
            .as_ref()
            .or(parent.and_then(|p| p.positive_term.as_ref()));
        if let Some(label) = positive {
            lv = lv.with_positive_term(label)?;
        }
        if let Some(cut) = self.crisp.or(parent.and_then(|p| p.crisp)) {
            lv = lv.with_crisp_cut(cut)?;
        }
        if let Some((low, high)) = self.support.or(parent.and_then(|p| p.support)) {
            lv = lv.with_support(low, high)?;
        }
        Ok(Some(lv))
    }

    fn from_variable(lv: &LinguisticVariable) -> Self {
        VariableRepr {
            terms: Some(lv.terms.clone()),
            positive_term: Some(lv.positive_term().to_string()),
            crisp: lv.crisp,
            support: lv.support,
        }
    }
}

impl TryFrom<BindingRepr> for FuzzyBinding {
    type Error = Error;

    fn try_from(repr: BindingRepr) -> Result<Self> {
        let default = repr.base.build(&repr.variable, &repr.raw_feature, None)?;
        let selector = match &repr.selector {
            None => None,
            Some(sel) => {
                let mut cases = BTreeMap::new();
                for (key, case) in &sel.cases {
                    let lv = case
                        .build(&repr.variable, &repr.raw_feature, Some(&repr.base))?
                        .ok_or_else(|| Error::InvalidVariable {
                            variable: repr.variable.clone(),
                            message: format!("selector case `{key}` declares no terms"),
                        })?;
                    cases.insert(key.clone(), lv);
                }
                Some(Selector {
                    column: sel.column.clone(),
                    cases,
                })
            }
        };
        let binding = FuzzyBinding {
            variable: repr.variable,
            raw_feature: repr.raw_feature,
            default,
            selector,
        };
        binding.validate()?;
        Ok(binding)
    }
}

impl From<FuzzyBinding> for BindingRepr {
    fn from(binding: FuzzyBinding) -> Self {
        let base = match &binding.default {
            Some(lv) => VariableRepr::from_variable(lv),
            None => VariableRepr {
                terms: None,
                positive_term: None,
                crisp: None,
                support: None,
            },
        };
        BindingRepr {
            variable: binding.variable,
            raw_feature: binding.raw_feature,
            base,
            selector: binding.selector.map(|sel| SelectorRepr {
                column: sel.column,
                cases: sel
                    .cases
                    .iter()
                    .map(|(k, lv)| (k.clone(), VariableRepr::from_variable(lv)))
                    .collect(),
            }),
        }
    }
}
