//! File formats: cells CSV, topology/params/ordered/report JSON, truth CSV.
//!
//! Floats are written in Rust's shortest round-trip representation, so a
//! load → save → load cycle reproduces every value bit for bit.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    CellRecord, ConsistencyReport, HmtParams, LineageTopology, OrderedDataset, PseudotimeFrame,
    Rate,
};

/// Column layout of a cells CSV.
#[derive(Debug, Clone)]
pub struct CellSchema {
    pub id: String,
    pub label: String,
    pub image_ref: String,
    /// Feature columns are `{prefix}0 .. {prefix}{d-1}`.
    pub feature_prefix: String,
}

impl Default for CellSchema {
    fn default() -> Self {
        Self {
            id: "id".into(),
            label: "label".into(),
            image_ref: "image_ref".into(),
            feature_prefix: "f".into(),
        }
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Resolve a label cell either as a 1-based index or as a state name.
pub fn parse_label(raw: &str, topology: &LineageTopology) -> std::result::Result<usize, String> {
    let raw = raw.trim();
    if let Some(k) = topology.state_index(raw) {
        return Ok(k);
    }
    match raw.parse::<usize>() {
        Ok(v) if v >= 1 && v <= topology.n_states() => Ok(v - 1),
        Ok(v) => Err(format!(
            "label {v} outside 1..{} of the topology",
            topology.n_states()
        )),
        Err(_) => Err(format!("unknown label {raw:?}")),
    }
}

pub fn load_cells(
    path: impl AsRef<Path>,
    schema: &CellSchema,
    topology: &LineageTopology,
) -> Result<Vec<CellRecord>> {
    let path = path.as_ref();
    let file = File::open(path)?;
    read_cells(file, path, schema, topology)
}

pub fn read_cells<R: Read>(
    reader: R,
    path: &Path,
    schema: &CellSchema,
    topology: &LineageTopology,
) -> Result<Vec<CellRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let id_col = col(&schema.id).ok_or_else(|| parse_err(path, 1, format!("missing column {:?}", schema.id)))?;
    let label_col = col(&schema.label)
        .ok_or_else(|| parse_err(path, 1, format!("missing column {:?}", schema.label)))?;
    let image_col = col(&schema.image_ref);
    let mut feature_cols: Vec<(usize, usize)> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| {
            h.trim()
                .strip_prefix(schema.feature_prefix.as_str())
                .and_then(|rest| rest.parse::<usize>().ok())
                .map(|j| (j, i))
        })
        .collect();
    feature_cols.sort_unstable();
    for (expect, &(j, _)) in feature_cols.iter().enumerate() {
        if j != expect {
            return Err(parse_err(path, 1, format!("feature column {}{expect} missing", schema.feature_prefix)));
        }
    }
    if feature_cols.is_empty() {
        return Err(parse_err(path, 1, "no feature columns"));
    }

    let mut cells = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let id = rec[id_col].trim().to_string();
        if id.is_empty() {
            return Err(parse_err(path, line, "empty id"));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::InvalidCell {
                id,
                message: "duplicate id".into(),
            });
        }
        let observed_label = parse_label(&rec[label_col], topology)
            .map_err(|message| Error::InvalidCell { id: id.clone(), message })?;
        let image_ref = image_col
            .map(|c| rec[c].trim().to_string())
            .filter(|s| !s.is_empty());
        let mut features = Vec::with_capacity(feature_cols.len());
        for &(j, c) in &feature_cols {
            let v: f64 = rec[c].trim().parse().map_err(|_| {
                parse_err(path, line, format!("feature {}{j}: not a number: {:?}", schema.feature_prefix, &rec[c]))
            })?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("feature {}{j} is not finite", schema.feature_prefix)));
            }
            features.push(v);
        }
        cells.push(CellRecord {
            id,
            features,
            observed_label,
            image_ref,
        });
    }
    Ok(cells)
}

pub fn save_cells(path: impl AsRef<Path>, cells: &[CellRecord]) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    write_cells(file, cells)
}

pub fn write_cells<W: Write>(writer: W, cells: &[CellRecord]) -> Result<()> {
    let d = cells.first().map_or(0, |c| c.features.len());
    if let Some(bad) = cells.iter().find(|c| c.features.len() != d) {
        return Err(Error::InvalidCell {
            id: bad.id.clone(),
            message: format!("expected {d} features, found {}", bad.features.len()),
        });
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "label".into(), "image_ref".into()];
    header.extend((0..d).map(|j| format!("f{j}")));
    w.write_record(&header)?;
    for c in cells {
        let mut row = vec![
            c.id.clone(),
            (c.observed_label + 1).to_string(),
            c.image_ref.clone().unwrap_or_default(),
        ];
        row.extend(c.features.iter().map(|v| format!("{v:?}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct TopologyFile {
    states: Vec<String>,
    root: String,
    #[serde(default)]
    edges: Vec<(String, String)>,
}

pub fn parse_topology(json: &str) -> Result<LineageTopology> {
    let file: TopologyFile = serde_json::from_str(json)?;
    let idx = |name: &str| {
        file.states
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::Topology(format!("unknown state {name:?}")))
    };
    let root = idx(&file.root)?;
    let edges = file
        .edges
        .iter()
        .map(|(p, c)| Ok((idx(p)?, idx(c)?)))
        .collect::<Result<Vec<_>>>()?;
    LineageTopology::new(file.states.clone(), root, &edges)
}

pub fn load_topology(path: impl AsRef<Path>) -> Result<LineageTopology> {
    parse_topology(&std::fs::read_to_string(path)?)
}

pub fn topology_to_json(t: &LineageTopology) -> String {
    let file = TopologyFile {
        states: t.states().to_vec(),
        root: t.states()[t.root()].clone(),
        edges: t
            .edges()
            .into_iter()
            .map(|(p, c)| (t.states()[p].clone(), t.states()[c].clone()))
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("topology serializes")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct RateFile {
    p: f64,
    lambda: f64,
}

/// On-disk form of [`HmtParams`]; transitions keyed `"k->l"` with 1-based states.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsFile {
    pi: Vec<f64>,
    #[serde(rename = "B")]
    emission: Vec<Vec<f64>>,
    #[serde(default)]
    trans: BTreeMap<String, RateFile>,
}

impl From<HmtParams> for ParamsFile {
    fn from(p: HmtParams) -> Self {
        ParamsFile {
            pi: p.pi,
            emission: p.emission,
            trans: p
                .trans
                .into_iter()
                .map(|((k, l), r)| {
                    (
                        format!("{}->{}", k + 1, l + 1),
                        RateFile {
                            p: r.p,
                            lambda: r.lambda,
                        },
                    )
                })
                .collect(),
        }
    }
}

impl TryFrom<ParamsFile> for HmtParams {
    type Error = String;

    fn try_from(f: ParamsFile) -> std::result::Result<Self, String> {
        let mut trans = BTreeMap::new();
        for (key, r) in f.trans {
            let (a, b) = key
                .split_once("->")
                .ok_or_else(|| format!("bad transition key {key:?}"))?;
            let parse = |s: &str| -> std::result::Result<usize, String> {
                match s.trim().parse::<usize>() {
                    Ok(v) if v >= 1 => Ok(v - 1),
                    _ => Err(format!("bad state in transition key {key:?}")),
                }
            };
            trans.insert(
                (parse(a)?, parse(b)?),
                Rate {
                    p: r.p,
                    lambda: r.lambda,
                },
            );
        }
        Ok(HmtParams {
            pi: f.pi,
            emission: f.emission,
            trans,
        })
    }
}

/// Emission matrix file: either a bare `[[..]]` matrix or `{"B": [[..]]}`.
pub fn load_emission(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum EmissionFile {
        Bare(Vec<Vec<f64>>),
        Wrapped {
            #[serde(rename = "B")]
            b: Vec<Vec<f64>>,
        },
    }
    let f: EmissionFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    Ok(match f {
        EmissionFile::Bare(b) | EmissionFile::Wrapped { b } => b,
    })
}

/// Start probabilities file: either a bare `[..]` vector or `{"pi": [..]}`.
pub fn load_pi(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum PiFile {
        Bare(Vec<f64>),
        Wrapped { pi: Vec<f64> },
    }
    let f: PiFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    Ok(match f {
        PiFile::Bare(p) | PiFile::Wrapped { pi: p } => p,
    })
}

/// On-disk form of an [`OrderedDataset`]. Labels are 1-based; `parent` holds
/// positions in this ordering (`null` for the root cell).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderedFile {
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
    pub pseudotime: Vec<f64>,
    pub branch_id: Vec<usize>,
    pub parent: Vec<Option<usize>>,
    pub y: Vec<f64>,
    #[serde(default)]
    pub image_ref: Vec<Option<String>>,
    #[serde(default)]
    pub features: Vec<Vec<f64>>,
    pub frame: PseudotimeFrame,
}

impl From<&OrderedDataset> for OrderedFile {
    fn from(o: &OrderedDataset) -> Self {
        OrderedFile {
            ids: o.cells.iter().map(|c| c.id.clone()).collect(),
            labels: o.cells.iter().map(|c| c.observed_label + 1).collect(),
            pseudotime: o.pseudotime.clone(),
            branch_id: o.branch_id.clone(),
            parent: o.parent.clone(),
            y: o.y.clone(),
            image_ref: o.cells.iter().map(|c| c.image_ref.clone()).collect(),
            features: o.cells.iter().map(|c| c.features.clone()).collect(),
            frame: o.frame,
        }
    }
}

impl OrderedFile {
    pub fn into_dataset(self, topology: &LineageTopology) -> Result<OrderedDataset> {
        let n = self.ids.len();
        let lens = [
            self.labels.len(),
            self.pseudotime.len(),
            self.branch_id.len(),
            self.parent.len(),
            self.y.len(),
        ];
        if lens.iter().any(|&l| l != n)
            || (!self.features.is_empty() && self.features.len() != n)
            || (!self.image_ref.is_empty() && self.image_ref.len() != n)
        {
            return Err(Error::LengthMismatch("ordered dataset arrays differ in length".into()));
        }
        let k = topology.n_states();
        let mut cells = Vec::with_capacity(n);
        for i in 0..n {
            let l = self.labels[i];
            if l == 0 || l > k {
                return Err(Error::InvalidCell {
                    id: self.ids[i].clone(),
                    message: format!("label {l} outside 1..{k}"),
                });
            }
            if let Some(p) = self.parent[i] {
                if p >= n {
                    return Err(Error::InvalidCell {
                        id: self.ids[i].clone(),
                        message: format!("parent position {p} out of range"),
                    });
                }
            }
            cells.push(CellRecord {
                id: self.ids[i].clone(),
                features: self.features.get(i).cloned().unwrap_or_default(),
                observed_label: l - 1,
                image_ref: self.image_ref.get(i).cloned().flatten(),
            });
        }
        Ok(OrderedDataset {
            cells,
            pseudotime: self.pseudotime,
            branch_id: self.branch_id,
            parent: self.parent,
            y: self.y,
            frame: self.frame,
        })
    }
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

pub fn save_report(path: impl AsRef<Path>, report: &ConsistencyReport) -> Result<()> {
    write_json(path, report)
}

pub fn load_report(path: impl AsRef<Path>) -> Result<ConsistencyReport> {
    read_json(path)
}

/// Ground-truth CSV `id,true_label,flipped` written alongside simulated cells.
pub fn save_truth(
    path: impl AsRef<Path>,
    ids: &[String],
    truth: &[usize],
    flipped: &[bool],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["id", "true_label", "flipped"])?;
    for ((id, t), f) in ids.iter().zip(truth).zip(flipped) {
        w.write_record([id.as_str(), &(t + 1).to_string(), if *f { "true" } else { "false" }])?;
    }
    w.flush()?;
    Ok(())
}
