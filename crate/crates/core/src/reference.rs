//! Built-in reference data: the rule catalog, the generator settings for the
//! standard 530-scenario benchmark, and the staged solver programs.

use crate::forge::{GeneratorConfig, RuleCatalog};

pub const CATALOG_JSON: &str = include_str!("../../../data/reference/catalog.json");
pub const GENERATOR_JSON: &str = include_str!("../../../data/reference/generator.json");

pub fn catalog() -> RuleCatalog {
    RuleCatalog::from_json(CATALOG_JSON).expect("built-in catalog is valid")
}

pub fn generator_config() -> GeneratorConfig {
    serde_json::from_str(GENERATOR_JSON).expect("built-in generator config is valid")
}
