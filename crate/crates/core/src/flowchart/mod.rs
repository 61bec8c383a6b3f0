//! Typed block graphs describing an inspection pipeline.
//!
//! Blocks exchange data over explicit, typed ports. The registration
//! transform `T` and each ROI's display transform `D` are not ports: the
//! engine injects them into every tool block at execution time, so they never
//! appear in a graph's connection list.

mod execute;
mod validate;

pub use execute::{execute, BlockFailure, Execution, MeasurementOutcome, RegistrationMode, ToolTrace};
pub use validate::{topo_sort, validate, Diagnostic};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::geometry::Roi;
use crate::tools::{AngleMode, BlobParams, EdgeParams, MeasurementKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("{path}: {reason}")]
    SchemaError { path: String, reason: String },
    #[error("duplicate block id {0:?}")]
    DuplicateId(String),
    #[error("{path}: unknown block kind {kind:?}")]
    UnknownKind { path: String, kind: String },
    #[error("graph has a cycle through {0:?}")]
    CyclicGraph(Vec<String>),
}

fn schema(path: impl Into<String>, reason: impl fmt::Display) -> FlowError {
    FlowError::SchemaError { path: path.into(), reason: reason.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Input,
    Registration,
    ExtractLine,
    MeasureAngle,
    MeasureDistance,
    MeasureIntensity,
    ExtractBlobs,
    ToleranceCheck,
    Output,
}

impl BlockKind {
    pub const ALL: [BlockKind; 9] = [
        BlockKind::Input,
        BlockKind::Registration,
        BlockKind::ExtractLine,
        BlockKind::MeasureAngle,
        BlockKind::MeasureDistance,
        BlockKind::MeasureIntensity,
        BlockKind::ExtractBlobs,
        BlockKind::ToleranceCheck,
        BlockKind::Output,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BlockKind::Input => "input",
            BlockKind::Registration => "registration",
            BlockKind::ExtractLine => "extract_line",
            BlockKind::MeasureAngle => "measure_angle",
            BlockKind::MeasureDistance => "measure_distance",
            BlockKind::MeasureIntensity => "measure_intensity",
            BlockKind::ExtractBlobs => "extract_blobs",
            BlockKind::ToleranceCheck => "tolerance_check",
            BlockKind::Output => "output",
        }
    }

    pub fn from_name(s: &str) -> Option<BlockKind> {
        BlockKind::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn requires_roi(self) -> bool {
        matches!(self, BlockKind::ExtractLine | BlockKind::MeasureIntensity | BlockKind::ExtractBlobs)
    }

    /// Blocks that receive the injected tool context.
    pub fn is_tool(self) -> bool {
        !matches!(self, BlockKind::Input | BlockKind::Registration | BlockKind::Output)
    }

    pub fn inputs(self) -> &'static [PortSpec] {
        use PortType::*;
        match self {
            BlockKind::Input => &[],
            BlockKind::Registration
            | BlockKind::ExtractLine
            | BlockKind::MeasureIntensity
            | BlockKind::ExtractBlobs => &[PortSpec { name: "image", types: &[Image] }],
            BlockKind::MeasureAngle => {
                &[PortSpec { name: "a", types: &[Line] }, PortSpec { name: "b", types: &[Line] }]
            }
            BlockKind::MeasureDistance => {
                &[PortSpec { name: "a", types: &[Line, Point] }, PortSpec { name: "b", types: &[Point] }]
            }
            BlockKind::ToleranceCheck => &[PortSpec { name: "value", types: &[Scalar] }],
            // variadic; see `input_port`
            BlockKind::Output => &[],
        }
    }

    pub fn outputs(self) -> &'static [OutPort] {
        use MeasurementKind as M;
        use PortType::*;
        match self {
            BlockKind::Input => &[OutPort { name: "image", ty: Image, measurement: None }],
            BlockKind::Registration => &[OutPort { name: "score", ty: Scalar, measurement: Some(M::Score) }],
            BlockKind::ExtractLine => &[OutPort { name: "line", ty: Line, measurement: None }],
            BlockKind::MeasureAngle => &[OutPort { name: "angle", ty: Scalar, measurement: Some(M::AngleDeg) }],
            BlockKind::MeasureDistance => &[OutPort { name: "distance", ty: Scalar, measurement: Some(M::DistancePx) }],
            BlockKind::MeasureIntensity => &[
                OutPort { name: "mean", ty: Scalar, measurement: Some(M::IntensityMean) },
                OutPort { name: "min", ty: Scalar, measurement: Some(M::IntensityMin) },
                OutPort { name: "max", ty: Scalar, measurement: Some(M::IntensityMax) },
            ],
            BlockKind::ExtractBlobs => &[
                OutPort { name: "blobs", ty: BlobList, measurement: None },
                OutPort { name: "count", ty: Scalar, measurement: Some(M::BlobCount) },
                OutPort { name: "area", ty: Scalar, measurement: Some(M::BlobAreaPx2) },
                OutPort { name: "centroid", ty: Point, measurement: None },
            ],
            BlockKind::ToleranceCheck => &[OutPort { name: "verdict", ty: Verdict, measurement: None }],
            BlockKind::Output => &[],
        }
    }

    /// Accepted types of an input port, or `None` if the kind has no such port.
    pub fn input_port(self, port: &str) -> Option<&'static [PortType]> {
        if self == BlockKind::Output {
            return valid_port_name(port).then_some(&[PortType::Scalar, PortType::Verdict][..]);
        }
        self.inputs().iter().find(|p| p.name == port).map(|p| p.types)
    }

    pub fn output_port(self, port: &str) -> Option<&'static OutPort> {
        self.outputs().iter().find(|p| p.name == port)
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn valid_port_name(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortType {
    Image,
    /// Never user-visible; listed for completeness of the type system.
    Transform,
    Line,
    Point,
    Scalar,
    BlobList,
    Verdict,
}

impl fmt::Display for PortType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit enum");
        f.write_str(s.as_str().expect("string"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PortSpec {
    pub name: &'static str,
    pub types: &'static [PortType],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutPort {
    pub name: &'static str,
    pub ty: PortType,
    /// Scalar ports are reported as measurements of this kind.
    pub measurement: Option<MeasurementKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct AngleParams {
    pub mode: AngleMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    pub min: f64,
    pub max: f64,
}

impl Band {
    pub fn new(min: f64, max: f64) -> Option<Band> {
        (min.is_finite() && max.is_finite() && min <= max).then_some(Band { min, max })
    }

    /// Inclusive at both ends.
    pub fn contains(&self, v: f64) -> bool {
        self.min <= v && v <= self.max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NoParams {}

/// Typed per-kind parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Input,
    Registration,
    ExtractLine(EdgeParams),
    MeasureAngle(AngleParams),
    MeasureDistance,
    MeasureIntensity,
    ExtractBlobs(BlobParams),
    ToleranceCheck(Band),
    Output,
}

impl Params {
    pub fn kind(&self) -> BlockKind {
        match self {
            Params::Input => BlockKind::Input,
            Params::Registration => BlockKind::Registration,
            Params::ExtractLine(_) => BlockKind::ExtractLine,
            Params::MeasureAngle(_) => BlockKind::MeasureAngle,
            Params::MeasureDistance => BlockKind::MeasureDistance,
            Params::MeasureIntensity => BlockKind::MeasureIntensity,
            Params::ExtractBlobs(_) => BlockKind::ExtractBlobs,
            Params::ToleranceCheck(_) => BlockKind::ToleranceCheck,
            Params::Output => BlockKind::Output,
        }
    }

    pub fn defaults(kind: BlockKind) -> Params {
        match kind {
            BlockKind::Input => Params::Input,
            BlockKind::Registration => Params::Registration,
            BlockKind::ExtractLine => Params::ExtractLine(EdgeParams::default()),
            BlockKind::MeasureAngle => Params::MeasureAngle(AngleParams::default()),
            BlockKind::MeasureDistance => Params::MeasureDistance,
            BlockKind::MeasureIntensity => Params::MeasureIntensity,
            BlockKind::ExtractBlobs => Params::ExtractBlobs(BlobParams::default()),
            BlockKind::ToleranceCheck => Params::ToleranceCheck(Band { min: 0.0, max: 0.0 }),
            BlockKind::Output => Params::Output,
        }
    }

    fn parse(kind: BlockKind, v: Value, path: &str) -> Result<Params, FlowError> {
        fn typed<T: serde::de::DeserializeOwned>(v: Value, path: &str) -> Result<T, FlowError> {
            serde_json::from_value(v).map_err(|e| schema(path, e))
        }
        let p = match kind {
            BlockKind::Input => typed::<NoParams>(v, path).map(|_| Params::Input)?,
            BlockKind::Registration => typed::<NoParams>(v, path).map(|_| Params::Registration)?,
            BlockKind::MeasureDistance => typed::<NoParams>(v, path).map(|_| Params::MeasureDistance)?,
            BlockKind::MeasureIntensity => typed::<NoParams>(v, path).map(|_| Params::MeasureIntensity)?,
            BlockKind::Output => typed::<NoParams>(v, path).map(|_| Params::Output)?,
            BlockKind::ExtractLine => {
                let p: EdgeParams = typed(v, path)?;
                p.validate().map_err(|e| schema(path, e))?;
                Params::ExtractLine(p)
            }
            BlockKind::MeasureAngle => Params::MeasureAngle(typed(v, path)?),
            BlockKind::ExtractBlobs => {
                let p: BlobParams = typed(v, path)?;
                p.validate().map_err(|e| schema(path, e))?;
                Params::ExtractBlobs(p)
            }
            BlockKind::ToleranceCheck => {
                let b: Band = typed(v, path)?;
                Params::ToleranceCheck(Band::new(b.min, b.max).ok_or_else(|| schema(path, "need finite min <= max"))?)
            }
        };
        Ok(p)
    }

    fn to_value(&self) -> Value {
        let v = match self {
            Params::ExtractLine(p) => serde_json::to_value(p),
            Params::MeasureAngle(p) => serde_json::to_value(p),
            Params::ExtractBlobs(p) => serde_json::to_value(p),
            Params::ToleranceCheck(b) => serde_json::to_value(b),
            _ => Ok(Value::Object(Map::new())),
        };
        v.expect("params serialize")
    }
}

/// Layout hint for editors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Display {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    pub id: String,
    pub params: Params,
    /// Source frame.
    pub roi: Option<Roi>,
    pub display: Option<Display>,
}

impl BlockSpec {
    pub fn new(id: impl Into<String>, params: Params) -> Self {
        BlockSpec { id: id.into(), params, roi: None, display: None }
    }

    pub fn with_roi(mut self, roi: Roi) -> Self {
        self.roi = Some(roi);
        self
    }

    pub fn kind(&self) -> BlockKind {
        self.params.kind()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endpoint {
    pub block: String,
    pub port: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Connection {
    pub from: Endpoint,
    pub to: Endpoint,
}

impl Connection {
    pub fn new(from: (&str, &str), to: (&str, &str)) -> Self {
        Connection {
            from: Endpoint { block: from.0.into(), port: from.1.into() },
            to: Endpoint { block: to.0.into(), port: to.1.into() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowGraph {
    pub blocks: Vec<BlockSpec>,
    pub connections: Vec<Connection>,
}

impl FlowGraph {
    pub fn block(&self, id: &str) -> Option<&BlockSpec> {
        self.blocks.iter().find(|b| b.id == id)
    }

    /// The connection feeding `(block, port)`, if any.
    pub fn source_of(&self, block: &str, port: &str) -> Option<&Endpoint> {
        self.connections.iter().find(|c| c.to.block == block && c.to.port == port).map(|c| &c.from)
    }

    /// Name under which an output port is reported: the block id for the
    /// first scalar port, `id.port` for the others.
    pub fn measurement_name(&self, block: &str, port: &str) -> Option<String> {
        let kind = self.block(block)?.kind();
        measurement_name(kind, block, port)
    }

    /// Every measurement a successful run of this graph reports, with kinds.
    pub fn measurement_names(&self) -> BTreeMap<String, MeasurementKind> {
        let mut out = BTreeMap::new();
        for b in &self.blocks {
            for p in b.kind().outputs() {
                if let (Some(kind), Some(name)) = (p.measurement, measurement_name(b.kind(), &b.id, p.name)) {
                    out.insert(name, kind);
                }
            }
        }
        out
    }

    /// `tolerance_check` bands keyed by the measurement they check.
    pub fn check_bands(&self) -> Vec<(String, String, Band)> {
        self.blocks
            .iter()
            .filter_map(|b| match &b.params {
                Params::ToleranceCheck(band) => {
                    let src = self.source_of(&b.id, "value")?;
                    Some((b.id.clone(), self.measurement_name(&src.block, &src.port)?, *band))
                }
                _ => None,
            })
            .collect()
    }

    pub fn parse(text: &str) -> Result<FlowGraph, FlowError> {
        let v: Value = serde_json::from_str(text).map_err(|e| FlowError::Json(e.to_string()))?;
        FlowGraph::from_value(&v, "")
    }

    /// Parses a graph object; `prefix` qualifies error paths.
    pub fn from_value(v: &Value, prefix: &str) -> Result<FlowGraph, FlowError> {
        let at = |s: &str| if prefix.is_empty() { s.to_string() } else { format!("{prefix}.{s}") };
        let obj =
            v.as_object().ok_or_else(|| schema(if prefix.is_empty() { "$" } else { prefix }, "expected an object"))?;
        check_keys(obj, &["blocks", "connections"], prefix)?;
        let blocks_v =
            obj.get("blocks").and_then(Value::as_array).ok_or_else(|| schema(at("blocks"), "expected an array"))?;
        let conns_v = match obj.get("connections") {
            None => &Vec::new(),
            Some(c) => c.as_array().ok_or_else(|| schema(at("connections"), "expected an array"))?,
        };

        let mut blocks = Vec::with_capacity(blocks_v.len());
        let mut ids = BTreeSet::new();
        for (i, b) in blocks_v.iter().enumerate() {
            let path = at(&format!("blocks[{i}]"));
            let block = parse_block(b, &path)?;
            if !ids.insert(block.id.clone()) {
                return Err(FlowError::DuplicateId(block.id));
            }
            blocks.push(block);
        }

        let graph = FlowGraph { blocks, connections: Vec::new() };
        let mut connections = Vec::with_capacity(conns_v.len());
        let mut fed = BTreeSet::new();
        for (i, c) in conns_v.iter().enumerate() {
            let path = at(&format!("connections[{i}]"));
            let conn: Connection = serde_json::from_value(c.clone()).map_err(|e| schema(&path, e))?;
            let from = graph
                .block(&conn.from.block)
                .ok_or_else(|| schema(format!("{path}.from.block"), format!("no block {:?}", conn.from.block)))?;
            if from.kind().output_port(&conn.from.port).is_none() {
                return Err(schema(
                    format!("{path}.from.port"),
                    format!("{} has no output port {:?}", from.kind(), conn.from.port),
                ));
            }
            let to = graph
                .block(&conn.to.block)
                .ok_or_else(|| schema(format!("{path}.to.block"), format!("no block {:?}", conn.to.block)))?;
            if to.kind().input_port(&conn.to.port).is_none() {
                return Err(schema(
                    format!("{path}.to.port"),
                    format!("{} has no input port {:?}", to.kind(), conn.to.port),
                ));
            }
            if !fed.insert(conn.to.clone()) {
                return Err(schema(
                    &path,
                    format!("input {}.{} already has a connection", conn.to.block, conn.to.port),
                ));
            }
            connections.push(conn);
        }
        Ok(FlowGraph { connections, ..graph })
    }

    pub fn to_value(&self) -> Value {
        let blocks: Vec<Value> = self
            .blocks
            .iter()
            .map(|b| {
                let mut m = Map::new();
                m.insert("id".into(), Value::String(b.id.clone()));
                m.insert("kind".into(), Value::String(b.kind().name().into()));
                m.insert("params".into(), b.params.to_value());
                if let Some(roi) = &b.roi {
                    m.insert("roi".into(), serde_json::to_value(roi).expect("roi"));
                }
                if let Some(d) = &b.display {
                    m.insert("display".into(), serde_json::to_value(d).expect("display"));
                }
                Value::Object(m)
            })
            .collect();
        let mut m = Map::new();
        m.insert("blocks".into(), Value::Array(blocks));
        m.insert("connections".into(), serde_json::to_value(&self.connections).expect("connections"));
        Value::Object(m)
    }

    /// Canonical text: sorted keys, shortest round-trip floats, all
    /// parameters spelled out.
    pub fn to_canonical_json(&self) -> String {
        canonical_json(&self.to_value())
    }

    pub fn topo_order(&self) -> Result<Vec<String>, FlowError> {
        let ids: Vec<String> = self.blocks.iter().map(|b| b.id.clone()).collect();
        topo_sort(&ids, &self.execution_edges())
    }

    /// Data connections plus the implicit registration → tool edges.
    pub fn execution_edges(&self) -> Vec<(String, String)> {
        let mut edges: Vec<(String, String)> =
            self.connections.iter().map(|c| (c.from.block.clone(), c.to.block.clone())).collect();
        for r in self.blocks.iter().filter(|b| b.kind() == BlockKind::Registration) {
            for t in self.blocks.iter().filter(|b| b.kind().is_tool()) {
                edges.push((r.id.clone(), t.id.clone()));
            }
        }
        edges
    }
}

fn measurement_name(kind: BlockKind, block: &str, port: &str) -> Option<String> {
    let primary = kind.outputs().iter().find(|p| p.measurement.is_some())?;
    let p = kind.output_port(port)?;
    p.measurement?;
    Some(if p.name == primary.name { block.to_string() } else { format!("{block}.{port}") })
}

fn check_keys(obj: &Map<String, Value>, allowed: &[&str], path: &str) -> Result<(), FlowError> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(schema(if path.is_empty() { k.clone() } else { format!("{path}.{k}") }, "unknown field")),
        None => Ok(()),
    }
}

fn parse_block(v: &Value, path: &str) -> Result<BlockSpec, FlowError> {
    let obj = v.as_object().ok_or_else(|| schema(path, "expected an object"))?;
    check_keys(obj, &["id", "kind", "params", "roi", "display"], path)?;
    let id = match obj.get("id") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        _ => return Err(schema(format!("{path}.id"), "expected a non-empty string")),
    };
    let kind_name =
        obj.get("kind").and_then(Value::as_str).ok_or_else(|| schema(format!("{path}.kind"), "expected a string"))?;
    let kind = BlockKind::from_name(kind_name)
        .ok_or_else(|| FlowError::UnknownKind { path: format!("{path}.kind"), kind: kind_name.into() })?;
    let params = Params::parse(
        kind,
        obj.get("params").cloned().unwrap_or(Value::Object(Map::new())),
        &format!("{path}.params"),
    )?;
    let roi = match obj.get("roi") {
        None | Some(Value::Null) => None,
        Some(r) => Some(serde_json::from_value::<Roi>(r.clone()).map_err(|e| schema(format!("{path}.roi"), e))?),
    };
    match (kind.requires_roi(), roi.is_some()) {
        (true, false) => return Err(schema(format!("{path}.roi"), format!("{kind} blocks require an roi"))),
        (false, true) => return Err(schema(format!("{path}.roi"), format!("{kind} blocks take no roi"))),
        _ => {}
    }
    let display = match obj.get("display") {
        None | Some(Value::Null) => None,
        Some(d) => Some(serde_json::from_value(d.clone()).map_err(|e| schema(format!("{path}.display"), e))?),
    };
    Ok(BlockSpec { id, params, roi, display })
}

/// Pretty-printed JSON with sorted keys and a trailing newline.
pub fn canonical_json(v: &Value) -> String {
    // serde_json's default map is ordered by key
    let mut s = serde_json::to_string_pretty(v).expect("value serializes");
    s.push('\n');
    s
}
