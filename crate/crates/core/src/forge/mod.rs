//! Scenario synthesis: topology generation, backward propagation of a root
//! cause to its alarm signature, forward inference of every cause that could
//! explain a signature, grading, and dataset assembly.

mod catalog;
mod dataset;
mod propagate;
mod topology;

pub use catalog::{AlarmTemplate, CatalogError, CausalRule, RuleCatalog, Selector, MAX_HOPS};
pub use dataset::{
    assemble_dataset, check_dataset, draw_seed, load_dataset, read_manifest, scenario_dir,
    write_dataset, CauseFrequency, Dataset, DatasetError, DatasetManifest, GeneratorConfig,
    ManifestEntry, Split, StoredDataset, StoredScenario, ZipfSampler, INPUT_FILE, LABEL_FILE,
    MANIFEST_FILE, NOISE_CODE,
};
pub use propagate::{
    assemble_scenario, backward_propagate, forward_infer, grade, scenario_epoch, AlarmSignature,
    CandidateCause, SignatureEntry,
};
pub use topology::{generate_topology, CountRange, Hierarchy, TopologySpec};

use crate::kg::{NodeId, ResourceKind};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ForgeError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error("anchor `{0}` is not a resource of the graph")]
    UnknownAnchor(NodeId),
    #[error("rule `{rule_id}` anchors on {expected}, but `{anchor}` is a {found}")]
    AnchorKindMismatch {
        rule_id: String,
        anchor: NodeId,
        expected: ResourceKind,
        found: ResourceKind,
    },
    #[error("forward inference does not recover rule `{rule_id}` at `{anchor}`")]
    CycleClosure { rule_id: String, anchor: NodeId },
    #[error("rule `{rule_id}` raises no alarm at `{anchor}`")]
    EmptySignature { rule_id: String, anchor: NodeId },
    #[error("no drawn topology contains a {kind} to anchor rule `{rule_id}`")]
    NoAnchor { rule_id: String, kind: ResourceKind },
    #[error("could not reach {target} simple scenarios (reached {achieved})")]
    MixUnreachable { target: usize, achieved: usize },
    #[error("scenario assembly: {0}")]
    Assembly(String),
}
