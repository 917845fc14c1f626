//! JSON documents for models and utility fields.
//!
//! Documents hold `f64`; conversion to the solver scalar happens on build.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{
    build_example_market, build_tree, Branch, ExampleMarketSpec, Limits, MarketModel, ModelError, NodeId, NodeSpec,
    TreeSpec,
};
use crate::scalar::Real;
use crate::utility::{UtilityError, UtilityFamily, UtilityField};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid document: {0}")]
    Document(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Utility(#[from] UtilityError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDocument {
    pub id: NodeId,
    pub t: usize,
    pub parent: Option<NodeId>,
    /// Transition probability from the parent (ignored at the root).
    pub prob: f64,
}

/// Explicit tree in the fixed exchange format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub nodes: Vec<NodeDocument>,
    pub prices: BTreeMap<NodeId, Vec<f64>>,
    pub clock: BTreeMap<NodeId, f64>,
    #[serde(rename = "A")]
    pub bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_active: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchDocument {
    pub prob: f64,
    pub factors: Vec<f64>,
}

/// Generated markets, tagged by `"generator"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorDocument {
    /// Independent binomial assets; either `p` or `n` with `p_start`, `p_step`.
    Example {
        #[serde(default)]
        p: Option<Vec<f64>>,
        #[serde(default)]
        n: Option<usize>,
        #[serde(default)]
        p_start: Option<f64>,
        #[serde(default)]
        p_step: Option<f64>,
    },
    /// Every node branches identically; the clock defaults to a unit mass at
    /// the horizon.
    Branching {
        periods: usize,
        branches: Vec<BranchDocument>,
        s0: Vec<f64>,
        #[serde(default)]
        clock_by_time: Option<Vec<f64>>,
        #[serde(default, rename = "A")]
        bound: Option<f64>,
        #[serde(default)]
        n_active: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MarketDocument {
    Tree(ModelDocument),
    Generated(GeneratorDocument),
}

impl ModelDocument {
    pub fn from_spec<T: Real>(spec: &TreeSpec<T>) -> Self {
        let f = |v: &T| v.to_f64_lossy();
        Self {
            nodes: spec
                .nodes
                .iter()
                .map(|n| NodeDocument { id: n.id, t: n.t, parent: n.parent, prob: f(&n.prob) })
                .collect(),
            prices: spec.prices.iter().map(|(&k, p)| (k, p.iter().map(f).collect())).collect(),
            clock: spec.clock.iter().map(|(&k, d)| (k, f(d))).collect(),
            bound: f(&spec.bound),
            n_active: spec.n_active,
        }
    }

    pub fn to_spec<T: Real>(&self) -> TreeSpec<T> {
        TreeSpec {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeSpec { id: n.id, t: n.t, parent: n.parent, prob: T::of(n.prob) })
                .collect(),
            prices: self.prices.iter().map(|(&k, p)| (k, p.iter().map(|&v| T::of(v)).collect())).collect(),
            clock: self.clock.iter().map(|(&k, &d)| (k, T::of(d))).collect(),
            bound: T::of(self.bound),
            n_active: self.n_active,
        }
    }
}

impl GeneratorDocument {
    pub fn example_spec<T: Real>(&self) -> Result<Option<ExampleMarketSpec<T>>, IoError> {
        let Self::Example { p, n, p_start, p_step } = self else {
            return Ok(None);
        };
        let spec = match (p, n, p_start, p_step) {
            (Some(p), None, None, None) => ExampleMarketSpec::new(p.iter().map(|&v| T::of(v)).collect())?,
            (None, Some(n), Some(a), Some(d)) => ExampleMarketSpec::arithmetic(*n, T::of(*a), T::of(*d))?,
            _ => {
                return Err(IoError::Document("example generator takes either `p` or all of `n`, `p_start`, `p_step`".into()));
            }
        };
        Ok(Some(spec))
    }

    pub fn build<T: Real>(&self, limits: &Limits) -> Result<MarketModel<T>, IoError> {
        if let Some(spec) = self.example_spec()? {
            return Ok(build_example_market(&spec, limits)?);
        }
        let Self::Branching { periods, branches, s0, clock_by_time, bound, n_active } = self else {
            unreachable!("example handled above");
        };
        if let Some(b) = branches.iter().find(|b| b.factors.len() != s0.len()) {
            return Err(IoError::Document(format!("branch has {} factors for {} assets", b.factors.len(), s0.len())));
        }
        let br: Vec<Branch<T>> =
            branches.iter().map(|b| Branch { prob: T::of(b.prob), factors: b.factors.iter().map(|&f| T::of(f)).collect() }).collect();
        let s0: Vec<T> = s0.iter().map(|&v| T::of(v)).collect();
        let mut spec = TreeSpec::branching(*periods, &br, &s0);
        if let Some(inc) = clock_by_time {
            let inc: Vec<T> = inc.iter().map(|&v| T::of(v)).collect();
            spec = spec.with_clock_by_time(&inc, T::of(bound.unwrap_or(1.0)));
        } else if let Some(a) = bound {
            spec.bound = T::of(*a);
        }
        if let Some(n) = n_active {
            spec = spec.with_n_active(*n);
        }
        Ok(build_tree(&spec, limits)?)
    }
}

impl MarketDocument {
    pub fn build<T: Real>(&self, limits: &Limits) -> Result<MarketModel<T>, IoError> {
        match self {
            Self::Tree(doc) => Ok(build_tree(&doc.to_spec(), limits)?),
            Self::Generated(g) => g.build(limits),
        }
    }
}

/// Parses either a tree document or a generator document.
pub fn parse_market(json: &str) -> Result<MarketDocument, IoError> {
    let value: serde_json::Value = serde_json::from_str(json)?;
    // untagged enums hide the field-level error; dispatch on the tag instead
    if value.get("generator").is_some() {
        Ok(MarketDocument::Generated(serde_json::from_value(value)?))
    } else {
        Ok(MarketDocument::Tree(serde_json::from_value(value)?))
    }
}

pub fn load_model<T: Real>(json: &str, limits: &Limits) -> Result<MarketModel<T>, IoError> {
    parse_market(json)?.build(limits)
}

pub fn model_to_json<T: Real>(model: &MarketModel<T>) -> String {
    serde_json::to_string_pretty(&ModelDocument::from_spec(&model.to_spec())).expect("documents always serialize")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Log,
    Power,
    Bounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityDocument {
    pub family: FamilyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<BTreeMap<NodeId, f64>>,
}

impl UtilityDocument {
    pub fn build<T: Real>(&self) -> Result<UtilityField<T>, IoError> {
        let need = |v: Option<f64>, name: &str| {
            v.map(T::of).ok_or_else(|| IoError::Document(format!("{:?} family needs `{name}`", self.family).to_lowercase()))
        };
        let family = match self.family {
            FamilyName::Log => UtilityFamily::Log,
            FamilyName::Power => UtilityFamily::Power { gamma: need(self.gamma, "gamma")? },
            FamilyName::Bounded => UtilityFamily::Bounded { alpha: need(self.alpha, "alpha")?, beta: need(self.beta, "beta")? },
        };
        let field = UtilityField::new(family)?;
        match &self.weights {
            Some(w) => Ok(field.with_weights(w.iter().map(|(&k, &v)| (k, T::of(v))).collect())?),
            None => Ok(field),
        }
    }

    pub fn from_field<T: Real>(field: &UtilityField<T>) -> Self {
        let mut doc = Self { family: FamilyName::Log, gamma: None, alpha: None, beta: None, weights: None };
        match field.family() {
            UtilityFamily::Log => {}
            UtilityFamily::Power { gamma } => {
                doc.family = FamilyName::Power;
                doc.gamma = Some(gamma.to_f64_lossy());
            }
            UtilityFamily::Bounded { alpha, beta } => {
                doc.family = FamilyName::Bounded;
                doc.alpha = Some(alpha.to_f64_lossy());
                doc.beta = Some(beta.to_f64_lossy());
            }
        }
        if field.is_weighted() {
            doc.weights = Some(field.weights().iter().map(|(&k, w)| (k, w.to_f64_lossy())).collect());
        }
        doc
    }
}

pub fn load_utility<T: Real>(json: &str) -> Result<UtilityField<T>, IoError> {
    serde_json::from_str::<UtilityDocument>(json)?.build()
}
