use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::catalog::RuleCatalog;
use super::propagate::{assemble_scenario, CandidateCause};
use super::topology::{generate_topology, TopologySpec};
use super::ForgeError;
use crate::exec::Exec;
use crate::kg::{
    parse_input, parse_label, serialize_input, serialize_label, to_text, AlarmNode, Difficulty,
    DocumentError, Edge, EdgeKind, KnowledgeGraph, Node, NodeId, Scenario, Severity,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const INPUT_FILE: &str = "input.json";
pub const LABEL_FILE: &str = "label.json";
pub const MANIFEST_SCHEMA_VERSION: &str = "1";

/// Topology redraws allowed when a drawn topology lacks the rule's anchor kind.
const TOPOLOGY_REDRAWS: usize = 64;

/// Code and title of the unrelated alarms added by the noise pass.
pub const NOISE_CODE: u32 = 9001;
pub const NOISE_TITLE: &str = "Environment Temperature Abnormal";

/// Inverse-CDF sampler over ranks `0..n` with weight `1 / (rank + 1)^s`.
#[derive(Clone, Debug)]
pub struct ZipfSampler {
    cdf: Vec<f64>,
}

impl ZipfSampler {
    pub fn new(n: usize, exponent: f64) -> Result<Self, ForgeError> {
        if n == 0 || !exponent.is_finite() || exponent < 0.0 {
            return Err(ForgeError::InvalidConfig(format!(
                "zipf needs n >= 1 and a finite exponent >= 0 (got n={n}, s={exponent})"
            )));
        }
        let mut acc = 0.0;
        let cdf = (1..=n)
            .map(|k| {
                acc += (k as f64).powf(-exponent);
                acc
            })
            .collect();
        Ok(ZipfSampler { cdf })
    }

    pub fn len(&self) -> usize {
        self.cdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cdf.is_empty()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cdf.last().expect("nonempty");
        let u = rng.random::<f64>() * total;
        self.cdf
            .partition_point(|&c| c <= u)
            .min(self.cdf.len() - 1)
    }
}

/// Seed for draw `attempt` of scenario `index`, independent of scheduling.
pub fn draw_seed(seed: u64, index: u64, attempt: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(splitmix(splitmix(seed) ^ index) ^ attempt.rotate_left(32))
}

fn default_rounds() -> usize {
    64
}

/// Dataset generation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub num_scenarios: usize,
    pub zipf_exponent: f64,
    pub seed: u64,
    /// Exact number of Simple scenarios to reach by rejection resampling;
    /// `None` keeps the natural mix.
    #[serde(default)]
    pub target_simple_count: Option<usize>,
    /// Resampling attempts per scenario before giving up on the target mix.
    #[serde(default = "default_rounds")]
    pub max_rejection_rounds: usize,
    /// Probability that a resource raises one unrelated, non-target alarm.
    #[serde(default)]
    pub noise_rate: f64,
    pub topology: TopologySpec,
    /// Catalog document, relative to the config file. Callers that load
    /// configs from disk resolve it; the built-in catalog is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<PathBuf>,
}

impl GeneratorConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| e.to_string())
    }

    pub fn validate(&self) -> Result<(), ForgeError> {
        let bad = |m: String| Err(ForgeError::InvalidConfig(m));
        if self.num_scenarios == 0 {
            return bad("num_scenarios must be at least 1".into());
        }
        if let Some(t) = self.target_simple_count {
            if t > self.num_scenarios {
                return bad(format!(
                    "target_simple_count {t} exceeds num_scenarios {}",
                    self.num_scenarios
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return bad(format!("noise_rate {} outside [0, 1]", self.noise_rate));
        }
        self.topology.validate().map_err(ForgeError::InvalidConfig)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub simple: usize,
    pub difficult: usize,
    pub difficult_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CauseFrequency {
    pub rule_id: String,
    pub cause_description: String,
    pub total: usize,
    pub simple: usize,
    pub difficult: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub scenario_id: String,
    pub rule_id: String,
    /// Ldn of the anchor resource.
    pub anchor: String,
    pub difficulty: String,
    pub ambiguity: usize,
    /// Draw attempt that produced the kept scenario; 0 means never resampled.
    pub attempt: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: String,
    pub num_scenarios: usize,
    pub seed: u64,
    pub zipf_exponent: f64,
    pub target_simple_count: Option<usize>,
    pub noise_rate: f64,
    pub catalog_hash: String,
    pub topology: TopologySpec,
    pub split: Split,
    pub cause_frequencies: Vec<CauseFrequency>,
    pub scenarios: Vec<ManifestEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub scenarios: Vec<Scenario>,
}

struct Draw {
    scenario: Scenario,
    rule_index: usize,
    anchor_ldn: String,
    attempt: usize,
}

struct Generator<'a> {
    config: &'a GeneratorConfig,
    catalog: &'a RuleCatalog,
    zipf: ZipfSampler,
    width: usize,
}

impl Generator<'_> {
    fn scenario_id(&self, index: usize) -> String {
        format!("{:0w$}", index + 1, w = self.width)
    }

    fn draw(&self, index: usize, attempt: usize) -> Result<Draw, ForgeError> {
        let mut rng =
            ChaCha8Rng::seed_from_u64(draw_seed(self.config.seed, index as u64, attempt as u64));
        let rule_index = self.zipf.sample(&mut rng);
        let rule = &self.catalog.rules[rule_index];
        for _ in 0..TOPOLOGY_REDRAWS {
            let topology = generate_topology(&self.config.topology.with_seed(rng.random()));
            let anchors: Vec<_> = topology
                .resources()
                .filter(|r| r.kind == rule.anchor_kind)
                .collect();
            if anchors.is_empty() {
                continue;
            }
            let anchor = anchors[rng.random_range(0..anchors.len())];
            let truth = CandidateCause::new(rule.rule_id.clone(), anchor.id.clone());
            let scenario =
                assemble_scenario(&topology, &truth, self.catalog, &self.scenario_id(index))?;
            return Ok(Draw {
                scenario,
                rule_index,
                anchor_ldn: anchor.ldn.clone(),
                attempt,
            });
        }
        Err(ForgeError::NoAnchor {
            rule_id: rule.rule_id.clone(),
            kind: rule.anchor_kind,
        })
    }

    /// Redraws scenario `index` until its grade matches `want_simple`.
    fn redraw(&self, index: usize, want_simple: bool) -> Result<Option<Draw>, ForgeError> {
        for attempt in 1..=self.config.max_rejection_rounds {
            let d = self.draw(index, attempt)?;
            if d.scenario.difficulty.is_simple() == want_simple {
                return Ok(Some(d));
            }
        }
        Ok(None)
    }
}

/// Samples a graded dataset: root causes by Zipf rank over the catalog,
/// anchors uniformly among resources of the rule's kind in a freshly drawn
/// topology. With `target_simple_count` set, scenarios are redrawn (surplus
/// Simple beyond the first `target` by index; otherwise Difficult ones in
/// index order) until the Simple count is exact.
///
/// Every draw is seeded from (seed, index, attempt), so output does not
/// depend on `exec`.
pub fn assemble_dataset(
    config: &GeneratorConfig,
    catalog: &RuleCatalog,
    exec: Exec,
) -> Result<Dataset, ForgeError> {
    config.validate()?;
    catalog.validate()?;
    let generator = Generator {
        config,
        catalog,
        zipf: ZipfSampler::new(catalog.len(), config.zipf_exponent)?,
        width: config.num_scenarios.to_string().len().max(4),
    };
    let indices: Vec<usize> = (0..config.num_scenarios).collect();
    let mut draws: Vec<Draw> = exec
        .map(&indices, |&i| generator.draw(i, 0))
        .into_iter()
        .collect::<Result<_, _>>()?;

    if let Some(target) = config.target_simple_count {
        let simple: Vec<usize> = indices
            .iter()
            .copied()
            .filter(|&i| draws[i].scenario.difficulty.is_simple())
            .collect();
        if simple.len() > target {
            let surplus = &simple[target..];
            let redrawn = exec.map(surplus, |&i| generator.redraw(i, false));
            for (&i, r) in surplus.iter().zip(redrawn) {
                match r? {
                    Some(d) => draws[i] = d,
                    None => {
                        return Err(ForgeError::MixUnreachable {
                            target,
                            achieved: count_simple(&draws),
                        })
                    }
                }
            }
        } else if simple.len() < target {
            let mut deficit = target - simple.len();
            let difficult: Vec<usize> = indices
                .iter()
                .copied()
                .filter(|&i| !draws[i].scenario.difficulty.is_simple())
                .collect();
            let batch = (deficit * 4).max(32);
            for chunk in difficult.chunks(batch) {
                let redrawn = exec.map(chunk, |&i| generator.redraw(i, true));
                for (&i, r) in chunk.iter().zip(redrawn) {
                    if deficit == 0 {
                        break;
                    }
                    if let Some(d) = r? {
                        draws[i] = d;
                        deficit -= 1;
                    }
                }
                if deficit == 0 {
                    break;
                }
            }
            if deficit > 0 {
                return Err(ForgeError::MixUnreachable {
                    target,
                    achieved: target - deficit,
                });
            }
        }
    }

    if config.noise_rate > 0.0 {
        for (i, d) in draws.iter_mut().enumerate() {
            add_noise(
                &mut d.scenario,
                config.noise_rate,
                draw_seed(config.seed, i as u64, u64::MAX),
            );
        }
    }

    let manifest = build_manifest(config, catalog, &draws);
    Ok(Dataset {
        manifest,
        scenarios: draws.into_iter().map(|d| d.scenario).collect(),
    })
}

fn count_simple(draws: &[Draw]) -> usize {
    draws
        .iter()
        .filter(|d| d.scenario.difficulty.is_simple())
        .count()
}

/// Adds one non-target alarm to each resource with probability `rate`.
fn add_noise(scenario: &mut Scenario, rate: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = &scenario.graph;
    let time = graph
        .alarms()
        .map(|a| a.report_time)
        .min()
        .unwrap_or_else(|| super::propagate::scenario_epoch(&scenario.scenario_id));
    let mut nodes: Vec<Node> = graph.nodes().cloned().collect();
    let mut edges: Vec<Edge> = graph.edges().to_vec();
    let mut n = 0;
    for r in graph.resources() {
        if rng.random_bool(rate) {
            n += 1;
            let id = NodeId::new(format!("N{n:03}"));
            nodes.push(Node::Alarm(AlarmNode {
                id: id.clone(),
                title: NOISE_TITLE.into(),
                code: NOISE_CODE,
                severity: Severity::Warning,
                report_time: time,
            }));
            edges.push(Edge::new(r.id.clone(), id, EdgeKind::Generate));
        }
    }
    if n > 0 {
        scenario.graph = KnowledgeGraph::new(
            graph.scenario_id(),
            nodes,
            edges,
            graph.target_alarms().to_vec(),
        );
    }
}

fn build_manifest(
    config: &GeneratorConfig,
    catalog: &RuleCatalog,
    draws: &[Draw],
) -> DatasetManifest {
    let mut freq: Vec<CauseFrequency> = catalog
        .rules
        .iter()
        .map(|r| CauseFrequency {
            rule_id: r.rule_id.clone(),
            cause_description: r.cause_description.clone(),
            total: 0,
            simple: 0,
            difficult: 0,
        })
        .collect();
    for d in draws {
        let f = &mut freq[d.rule_index];
        f.total += 1;
        if d.scenario.difficulty.is_simple() {
            f.simple += 1;
        } else {
            f.difficult += 1;
        }
    }
    let simple = count_simple(draws);
    let difficult = draws.len() - simple;
    DatasetManifest {
        schema_version: MANIFEST_SCHEMA_VERSION.into(),
        num_scenarios: draws.len(),
        seed: config.seed,
        zipf_exponent: config.zipf_exponent,
        target_simple_count: config.target_simple_count,
        noise_rate: config.noise_rate,
        catalog_hash: catalog.digest(),
        topology: config.topology.clone(),
        split: Split {
            simple,
            difficult,
            difficult_fraction: difficult as f64 / draws.len() as f64,
        },
        cause_frequencies: freq,
        scenarios: draws
            .iter()
            .map(|d| ManifestEntry {
                scenario_id: d.scenario.scenario_id.clone(),
                rule_id: catalog.rules[d.rule_index].rule_id.clone(),
                anchor: d.anchor_ldn.clone(),
                difficulty: d.scenario.difficulty.name().into(),
                ambiguity: d.scenario.difficulty.ambiguity(),
                attempt: d.attempt,
            })
            .collect(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Document {
        path: PathBuf,
        #[source]
        source: DocumentError,
    },
    #[error("{path}: {message}")]
    Manifest { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_owned(),
        source,
    }
}

pub fn scenario_dir(root: &Path, scenario_id: &str) -> PathBuf {
    root.join(format!("scenario_{scenario_id}"))
}

/// Writes the dataset under `dir`, replacing any scenario directories and
/// manifest left by an earlier run.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        let name = entry.file_name();
        if path.is_dir() && name.to_string_lossy().starts_with("scenario_") {
            fs::remove_dir_all(&path).map_err(io_err(&path))?;
        }
    }
    for s in &dataset.scenarios {
        let sdir = scenario_dir(dir, &s.scenario_id);
        fs::create_dir_all(&sdir).map_err(io_err(&sdir))?;
        let input = sdir.join(INPUT_FILE);
        fs::write(&input, serialize_input(&s.graph)).map_err(io_err(&input))?;
        let label = sdir.join(LABEL_FILE);
        fs::write(&label, serialize_label(&s.label)).map_err(io_err(&label))?;
    }
    let manifest = dir.join(MANIFEST_FILE);
    fs::write(&manifest, to_text(&dataset.manifest)).map_err(io_err(&manifest))
}

/// A scenario loaded from disk together with the path of its input document.
#[derive(Clone, Debug)]
pub struct StoredScenario {
    pub scenario: Scenario,
    pub input_path: PathBuf,
}

#[derive(Clone, Debug)]
pub struct StoredDataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub scenarios: Vec<StoredScenario>,
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest, DatasetError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| DatasetError::Manifest {
        path,
        message: e.to_string(),
    })
}

fn load_entry(dir: &Path, entry: &ManifestEntry) -> Result<StoredScenario, DatasetError> {
    let sdir = scenario_dir(dir, &entry.scenario_id);
    let input_path = sdir.join(INPUT_FILE);
    let text = fs::read_to_string(&input_path).map_err(io_err(&input_path))?;
    let graph = parse_input(&text).map_err(|source| DatasetError::Document {
        path: input_path.clone(),
        source,
    })?;
    let label_path = sdir.join(LABEL_FILE);
    let text = fs::read_to_string(&label_path).map_err(io_err(&label_path))?;
    let label = parse_label(&text).map_err(|source| DatasetError::Document {
        path: label_path.clone(),
        source,
    })?;
    let difficulty = Difficulty::from_ambiguity(entry.ambiguity)
        .filter(|d| d.name() == entry.difficulty)
        .ok_or_else(|| DatasetError::Manifest {
            path: dir.join(MANIFEST_FILE),
            message: format!(
                "scenario {}: grade `{}` with ambiguity {} is inconsistent",
                entry.scenario_id, entry.difficulty, entry.ambiguity
            ),
        })?;
    if graph.scenario_id() != entry.scenario_id || label.scenario_id != entry.scenario_id {
        return Err(DatasetError::Manifest {
            path: sdir,
            message: format!("documents do not belong to scenario {}", entry.scenario_id),
        });
    }
    let scenario =
        Scenario::assemble(graph, label, difficulty).map_err(|source| DatasetError::Document {
            path: label_path,
            source,
        })?;
    Ok(StoredScenario {
        scenario,
        input_path,
    })
}

/// Reads a dataset written by [`write_dataset`], checking each scenario's
/// input and label documents and their agreement.
pub fn load_dataset(dir: &Path) -> Result<StoredDataset, DatasetError> {
    let manifest = read_manifest(dir)?;
    let scenarios = manifest
        .scenarios
        .iter()
        .map(|entry| load_entry(dir, entry))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StoredDataset {
        root: dir.to_owned(),
        manifest,
        scenarios,
    })
}

/// Checks every scenario of the dataset at `dir` and returns all problems
/// found, in scenario order. Fails only when the manifest is unreadable.
pub fn check_dataset(dir: &Path) -> Result<Vec<DatasetError>, DatasetError> {
    let manifest = read_manifest(dir)?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut problems = Vec::new();
    let mut simple = 0;
    for entry in &manifest.scenarios {
        match load_entry(dir, entry) {
            Ok(s) => simple += usize::from(s.scenario.difficulty.is_simple()),
            Err(e) => problems.push(e),
        }
    }
    let listed: BTreeSet<PathBuf> = manifest
        .scenarios
        .iter()
        .map(|e| scenario_dir(dir, &e.scenario_id))
        .collect();
    let mut stray: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .is_some_and(|n| n.to_string_lossy().starts_with("scenario_"))
                && !listed.contains(p)
        })
        .collect();
    stray.sort();
    for path in stray {
        problems.push(DatasetError::Manifest {
            path,
            message: "scenario directory is not listed in the manifest".into(),
        });
    }
    let n = manifest.scenarios.len();
    if manifest.num_scenarios != n {
        problems.push(DatasetError::Manifest {
            path: manifest_path.clone(),
            message: format!(
                "num_scenarios is {} but {n} scenarios are listed",
                manifest.num_scenarios
            ),
        });
    }
    if problems.is_empty()
        && (manifest.split.simple, manifest.split.difficult) != (simple, n - simple)
    {
        problems.push(DatasetError::Manifest {
            path: manifest_path,
            message: format!(
                "split says {} simple / {} difficult, scenarios have {simple} / {}",
                manifest.split.simple,
                manifest.split.difficult,
                n - simple
            ),
        });
    }
    Ok(problems)
}
