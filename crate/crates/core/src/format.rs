//! JSON documents: task specs (with an optional mitigations block),
//! standalone mitigation sets, inference layers and β tables.

use std::path::Path;

use serde::Deserialize;

use crate::error::{invalid, Error, Result};
use crate::extremality::{InferenceLayerSpec, LayerKind};
use crate::maps::BetaMap;
use crate::mitigations::{ConceptSupervision, MitigationSet, MultitaskSpec, WorldSet};
use crate::task::{
    builtin_knowledge, AlphaFamily, Builtin, ConceptSpace, Factor, KnowledgeTable, SupportMode, SupportSet, TaskSpec,
    World,
};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FactorDoc {
    name: String,
    cardinality: u32,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum KnowledgeDoc {
    Builtin(BuiltinDoc),
    Table(TableDoc),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BuiltinDoc {
    builtin: String,
    #[serde(default)]
    modulus: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableDoc {
    table: Vec<Vec<u32>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SupportDoc {
    Keyword(String),
    Include {
        include: Vec<Vec<u32>>,
    },
    Exclude {
        exclude: Vec<Vec<u32>>,
    },
    Product {
        product: Vec<Vec<u32>>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FamilyDoc {
    kind: String,
    #[serde(default)]
    ties: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum WorldsDoc {
    Keyword(String),
    List(Vec<Vec<u32>>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SupervisionDoc {
    factors: Vec<usize>,
    worlds: WorldsDoc,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DistillationDoc {
    worlds: WorldsDoc,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MultitaskDoc {
    knowledge: KnowledgeDoc,
    worlds: WorldsDoc,
    labels: u32,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MitigationsDoc {
    #[serde(default)]
    concept_supervision: Option<SupervisionDoc>,
    #[serde(default)]
    distillation: Option<DistillationDoc>,
    #[serde(default)]
    reconstruction: bool,
    #[serde(default)]
    multitask: Vec<MultitaskDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskDoc {
    concepts: Vec<FactorDoc>,
    labels: u32,
    knowledge: KnowledgeDoc,
    support: SupportDoc,
    alpha_family: FamilyDoc,
    #[serde(default)]
    mitigations: Option<MitigationsDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    kind: String,
    concepts: Vec<FactorDoc>,
    labels: u32,
    rows: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum BetaDoc {
    Builtin(BuiltinDoc),
    Table { labels: u32, table: Vec<Vec<u32>> },
}

fn malformed(e: serde_json::Error) -> Error {
    Error::Malformed(e.to_string())
}

fn space_of(concepts: Vec<FactorDoc>) -> Result<ConceptSpace> {
    ConceptSpace::new(
        concepts
            .into_iter()
            .map(|f| Factor {
                name: f.name,
                cardinality: f.cardinality,
            })
            .collect(),
    )
}

fn world(space: &ConceptSpace, digits: Vec<u32>) -> Result<World> {
    let w = World(digits);
    if !space.contains(&w) {
        return invalid(format!("world {w} is not in the concept space"));
    }
    Ok(w)
}

/// Splits a `[digits…, label]` row.
fn entry(space: &ConceptSpace, mut row: Vec<u32>) -> Result<(World, u32)> {
    if row.len() != space.k() + 1 {
        return Err(Error::Malformed(format!(
            "table row has {} entries, expected {}",
            row.len(),
            space.k() + 1
        )));
    }
    let y = row.pop().unwrap();
    Ok((world(space, row)?, y))
}

fn knowledge(space: &ConceptSpace, labels: u32, doc: KnowledgeDoc) -> Result<KnowledgeTable> {
    match doc {
        KnowledgeDoc::Builtin(b) => {
            let k = builtin_knowledge(Builtin::parse(&b.builtin, b.modulus)?, space)?;
            if labels < k.labels() {
                return invalid(format!(
                    "builtin {} needs {} labels, document declares {labels}",
                    b.builtin,
                    k.labels()
                ));
            }
            k.with_labels(labels)
        }
        KnowledgeDoc::Table(t) => {
            let entries = t.table.into_iter().map(|r| entry(space, r)).collect::<Result<Vec<_>>>()?;
            KnowledgeTable::from_entries(space, labels, entries)
        }
    }
}

fn worlds(space: &ConceptSpace, doc: WorldsDoc) -> Result<WorldSet> {
    match doc {
        WorldsDoc::Keyword(s) if s == "full" => Ok(WorldSet::Full),
        WorldsDoc::Keyword(s) => Err(Error::Malformed(format!("unknown world set `{s}`"))),
        WorldsDoc::List(ws) => Ok(WorldSet::Worlds(
            ws.into_iter().map(|w| world(space, w)).collect::<Result<_>>()?,
        )),
    }
}

fn mitigations(space: &ConceptSpace, doc: MitigationsDoc) -> Result<MitigationSet> {
    let concept_supervision = doc
        .concept_supervision
        .map(|s| {
            Ok::<_, Error>(ConceptSupervision {
                factors: s.factors,
                worlds: worlds(space, s.worlds)?,
            })
        })
        .transpose()?;
    let distillation = doc.distillation.map(|d| worlds(space, d.worlds)).transpose()?;
    let multitask = doc
        .multitask
        .into_iter()
        .map(|m| {
            Ok(MultitaskSpec {
                knowledge: knowledge(space, m.labels, m.knowledge)?,
                worlds: worlds(space, m.worlds)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(MitigationSet {
        concept_supervision,
        distillation,
        reconstruction: doc.reconstruction,
        multitask,
    })
}

/// Parses a task document; the mitigations block is returned separately
/// (`None` when absent).
pub fn parse_task(text: &str) -> Result<(TaskSpec, Option<MitigationSet>)> {
    let doc: TaskDoc = serde_json::from_str(text).map_err(malformed)?;
    let space = space_of(doc.concepts)?;
    let k = knowledge(&space, doc.labels, doc.knowledge)?;
    let mode = match doc.support {
        SupportDoc::Keyword(s) if s == "full" => SupportMode::Full,
        SupportDoc::Keyword(s) => return Err(Error::Malformed(format!("unknown support `{s}`"))),
        SupportDoc::Include { include } => {
            SupportMode::Include(include.into_iter().map(|w| world(&space, w)).collect::<Result<_>>()?)
        }
        SupportDoc::Exclude { exclude } => {
            SupportMode::Exclude(exclude.into_iter().map(|w| world(&space, w)).collect::<Result<_>>()?)
        }
        SupportDoc::Product { product } => SupportMode::Product(product),
    };
    let support = SupportSet::new(&space, mode)?;
    let family = match (doc.alpha_family.kind.as_str(), doc.alpha_family.ties) {
        ("joint", None) => AlphaFamily::Joint,
        ("factorized", ties) => AlphaFamily::factorized(&space, &ties.unwrap_or_default())?,
        (kind, _) => return Err(Error::Malformed(format!("unknown alpha family `{kind}`"))),
    };
    let ms = doc.mitigations.map(|m| mitigations(&space, m)).transpose()?;
    let task = TaskSpec::new(space, k, support, family)?;
    if let Some(ms) = &ms {
        ms.validate(&task)?;
    }
    Ok((task, ms))
}

/// Parses a standalone mitigations document against `task`'s space.
pub fn parse_mitigations(text: &str, task: &TaskSpec) -> Result<MitigationSet> {
    let doc: MitigationsDoc = serde_json::from_str(text).map_err(malformed)?;
    let ms = mitigations(&task.space, doc)?;
    ms.validate(task)?;
    Ok(ms)
}

pub fn parse_layer(text: &str) -> Result<InferenceLayerSpec> {
    let doc: LayerDoc = serde_json::from_str(text).map_err(malformed)?;
    let kind = match doc.kind.as_str() {
        "linear_prob" => LayerKind::LinearProb,
        "softmax_linear" => LayerKind::SoftmaxLinear,
        k => return Err(Error::Malformed(format!("unknown layer kind `{k}`"))),
    };
    InferenceLayerSpec::new(kind, space_of(doc.concepts)?, doc.labels, doc.rows)
}

/// A β table; worlds that are not listed stay free.
pub fn parse_beta(text: &str, space: &ConceptSpace) -> Result<BetaMap> {
    let doc: BetaDoc = serde_json::from_str(text).map_err(malformed)?;
    match doc {
        BetaDoc::Builtin(b) => Ok(BetaMap::from_knowledge(&builtin_knowledge(
            Builtin::parse(&b.builtin, b.modulus)?,
            space,
        )?)),
        BetaDoc::Table { labels, table } => {
            let mut beta = BetaMap::free(space.size(), labels);
            for row in table {
                let (w, y) = entry(space, row)?;
                if y >= labels {
                    return invalid(format!("beta label {y} out of range"));
                }
                beta.set(space.index_of(&w), y);
            }
            Ok(beta)
        }
    }
}

pub(crate) fn read_file(path: &Path, what: &str) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Validation(format!("{what} file not found: {}", path.display())),
        _ => Error::Io(e),
    })
}

pub fn load_task(path: &Path) -> Result<(TaskSpec, Option<MitigationSet>)> {
    parse_task(&read_file(path, "task")?)
}

pub fn load_mitigations(path: &Path, task: &TaskSpec) -> Result<MitigationSet> {
    parse_mitigations(&read_file(path, "mitigations")?, task)
}

pub fn load_layer(path: &Path) -> Result<InferenceLayerSpec> {
    parse_layer(&read_file(path, "layer")?)
}

pub fn load_beta(path: &Path, space: &ConceptSpace) -> Result<BetaMap> {
    parse_beta(&read_file(path, "beta")?, space)
}
