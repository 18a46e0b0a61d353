use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kg::{ResourceKind, Severity};

/// Deepest hop count any selector may use: BaseStation to RiPort is 4 hops.
pub const MAX_HOPS: usize = 4;

/// Which nodes, relative to the anchor, a template raises its alarm on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Selector {
    #[serde(rename = "self")]
    Anchor,
    Descendants {
        kind: ResourceKind,
        max_hops: usize,
    },
    Ancestors {
        kind: ResourceKind,
        max_hops: usize,
    },
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::Anchor => f.write_str("self"),
            Selector::Descendants { kind, max_hops } => {
                write!(f, "descendants({kind}, {max_hops})")
            }
            Selector::Ancestors { kind, max_hops } => write!(f, "ancestors({kind}, {max_hops})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlarmTemplate {
    pub code: u32,
    pub title: String,
    pub severity: Severity,
    pub selector: Selector,
}

/// An expert rule: a root cause anchored on one kind of equipment and the
/// alarms it raises across the topology.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CausalRule {
    pub rule_id: String,
    pub cause_description: String,
    pub anchor_kind: ResourceKind,
    pub solution: String,
    pub alarm_templates: Vec<AlarmTemplate>,
}

impl CausalRule {
    /// Template that raises `code`, if any. The first one wins when several do.
    pub fn template_for(&self, code: u32) -> Option<&AlarmTemplate> {
        self.alarm_templates.iter().find(|t| t.code == code)
    }

    fn reaches(&self, selector: &Selector) -> bool {
        let anchor = self.anchor_kind.level();
        match *selector {
            Selector::Anchor => true,
            Selector::Descendants { kind, max_hops } => {
                kind.level() > anchor && kind.level() - anchor <= max_hops
            }
            Selector::Ancestors { kind, max_hops } => {
                kind.level() < anchor && anchor - kind.level() <= max_hops
            }
        }
    }
}

/// Ordered rule list. Order is significant: it is the popularity rank used
/// when sampling root causes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleCatalog {
    pub rules: Vec<CausalRule>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CatalogError {
    #[error("catalog document: {0}")]
    Document(String),
    #[error("catalog has no rules")]
    Empty,
    #[error("rule id `{0}` appears more than once")]
    DuplicateRuleId(String),
    #[error("cause `{0}` is anchored on {1} by more than one rule")]
    DuplicateCause(String, ResourceKind),
    #[error("rule `{0}` has no alarm templates")]
    NoTemplates(String),
    #[error("rule `{rule}` template {code}: max_hops {hops} outside 1..={MAX_HOPS}")]
    HopsOutOfRange {
        rule: String,
        code: u32,
        hops: usize,
    },
    #[error("rule `{0}`: no template reaches the anchor or a reachable node kind")]
    Unreachable(String),
}

impl RuleCatalog {
    pub fn new(rules: Vec<CausalRule>) -> Result<Self, CatalogError> {
        let catalog = RuleCatalog { rules };
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        let catalog: RuleCatalog =
            serde_json::from_str(text).map_err(|e| CatalogError::Document(e.to_string()))?;
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn to_json(&self) -> String {
        crate::kg::to_text(self)
    }

    /// Hash of the canonical serialization.
    pub fn digest(&self) -> String {
        crate::sha256_hex(self.to_json())
    }

    pub fn rule(&self, rule_id: &str) -> Option<&CausalRule> {
        self.rules.iter().find(|r| r.rule_id == rule_id)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn validate(&self) -> Result<(), CatalogError> {
        if self.rules.is_empty() {
            return Err(CatalogError::Empty);
        }
        let mut ids = BTreeSet::new();
        let mut causes = BTreeSet::new();
        for rule in &self.rules {
            if !ids.insert(rule.rule_id.as_str()) {
                return Err(CatalogError::DuplicateRuleId(rule.rule_id.clone()));
            }
            if !causes.insert((rule.cause_description.as_str(), rule.anchor_kind)) {
                return Err(CatalogError::DuplicateCause(
                    rule.cause_description.clone(),
                    rule.anchor_kind,
                ));
            }
            if rule.alarm_templates.is_empty() {
                return Err(CatalogError::NoTemplates(rule.rule_id.clone()));
            }
            for t in &rule.alarm_templates {
                if let Selector::Descendants { max_hops, .. }
                | Selector::Ancestors { max_hops, .. } = t.selector
                {
                    if !(1..=MAX_HOPS).contains(&max_hops) {
                        return Err(CatalogError::HopsOutOfRange {
                            rule: rule.rule_id.clone(),
                            code: t.code,
                            hops: max_hops,
                        });
                    }
                }
            }
            if !rule
                .alarm_templates
                .iter()
                .any(|t| rule.reaches(&t.selector))
            {
                return Err(CatalogError::Unreachable(rule.rule_id.clone()));
            }
        }
        Ok(())
    }
}
