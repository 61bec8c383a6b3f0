//! Graph execution with implicit `T`/`D` propagation.

use std::collections::BTreeMap;

use log::debug;

use super::{BlockKind, BlockSpec, FlowError, FlowGraph, Params};
use crate::geometry::{Point2, Roi, Transform};
use crate::overlay::{Annotation, Shape, Style};
use crate::raster::Image;
use crate::registration::{register, RegistrationError, RegistrationModel, RegistrationResult};
use crate::tools::{
    extract_blobs, extract_line_detailed, measure_angle, measure_distance, measure_intensity, Geometry, LineModel,
    MeasurementKind, ToolContext,
};

/// Where `T` comes from.
#[derive(Debug, Clone, Copy)]
pub enum RegistrationMode<'a> {
    /// Acquire-register-analyze: search for `T`.
    Model(&'a RegistrationModel),
    /// Acquire-analyze: use a fixed `T`, typically the identity.
    Fixed(Transform),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOutcome {
    pub block: String,
    pub name: String,
    pub kind: MeasurementKind,
    pub value: Result<f64, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockFailure {
    pub block: String,
    pub error: String,
}

/// What a tool block was handed by the engine.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolTrace {
    pub block: String,
    pub t: Transform,
    pub d: Transform,
}

#[derive(Debug, Clone)]
pub struct Execution {
    pub registration: Result<RegistrationResult, RegistrationError>,
    /// Measurements in topological block order, then port order.
    pub measurements: Vec<MeasurementOutcome>,
    pub failures: Vec<BlockFailure>,
    pub annotations: Vec<Annotation>,
    pub trace: Vec<ToolTrace>,
    /// `tolerance_check` results by block id.
    pub checks: BTreeMap<String, bool>,
}

#[derive(Debug, Clone)]
enum Value {
    Image,
    Line(LineModel),
    Point(Point2),
    Scalar(f64),
    Blobs,
    Verdict(bool),
}

/// Runs `g` on `target`. The graph is expected to have passed validation;
/// a registration failure ends the run before any tool executes.
pub fn execute(g: &FlowGraph, target: &Image, mode: RegistrationMode<'_>) -> Result<Execution, FlowError> {
    let order = g.topo_order()?;
    let mut ex = Execution {
        registration: Err(RegistrationError::InvalidParams("graph has no registration block".into())),
        measurements: Vec::new(),
        failures: Vec::new(),
        annotations: Vec::new(),
        trace: Vec::new(),
        checks: BTreeMap::new(),
    };
    let mut values: BTreeMap<(String, &'static str), Value> = BTreeMap::new();
    let mut failed: BTreeMap<String, String> = BTreeMap::new();
    let mut t: Option<Transform> = None;

    for id in &order {
        let block = g.block(id).expect("ordered ids come from the graph");
        let kind = block.kind();

        if kind == BlockKind::Registration {
            let result = match mode {
                RegistrationMode::Model(model) => register(model, target),
                RegistrationMode::Fixed(transform) => Ok(RegistrationResult { transform, score: 1.0 }),
            };
            match result {
                Ok(r) => {
                    t = Some(r.transform);
                    values.insert((id.clone(), "score"), Value::Scalar(r.score));
                    ex.measurements.push(MeasurementOutcome {
                        block: id.clone(),
                        name: id.clone(),
                        kind: MeasurementKind::Score,
                        value: Ok(r.score),
                    });
                    if let RegistrationMode::Model(model) = mode {
                        let roi = model.template_roi();
                        let d = r.transform.compose(&roi.to_parent());
                        ex.annotations.push(Annotation::new(id, Shape::RoiOutline { roi: local_rect(roi) }, d));
                        let label = format!("{id} {:.3}", r.score);
                        ex.annotations.push(Annotation::new(
                            id,
                            Shape::Label { text: label, anchor: Point2::new(2.0, 2.0) },
                            d,
                        ));
                    }
                    ex.registration = Ok(r);
                }
                Err(e) => {
                    debug!("registration failed: {e}");
                    ex.annotations.push(Annotation {
                        style: Style::Fail,
                        ..Annotation::new(
                            id,
                            Shape::Label { text: "NO REGISTRATION".into(), anchor: Point2::new(4.0, 4.0) },
                            Transform::identity(),
                        )
                    });
                    ex.registration = Err(e);
                    return Ok(ex);
                }
            }
            continue;
        }

        if kind == BlockKind::Input {
            values.insert((id.clone(), "image"), Value::Image);
            continue;
        }

        // Gather data inputs; an upstream failure fails this block too.
        let mut inputs: BTreeMap<String, Value> = BTreeMap::new();
        let mut upstream_error = None;
        for c in g.connections.iter().filter(|c| c.to.block == *id) {
            if let Some(e) = failed.get(&c.from.block) {
                upstream_error = Some(format!("upstream block {} failed: {e}", c.from.block));
                break;
            }
            let port = g.block(&c.from.block).and_then(|b| b.kind().output_port(&c.from.port)).map(|p| p.name);
            match port.and_then(|p| values.get(&(c.from.block.clone(), p))) {
                Some(v) => {
                    inputs.insert(c.to.port.clone(), v.clone());
                }
                None => {
                    upstream_error = Some(format!("input {} has no value", c.to.port));
                    break;
                }
            }
        }
        if let Some(e) = upstream_error {
            fail(&mut ex, &mut failed, block, e);
            continue;
        }
        if kind == BlockKind::Output {
            continue;
        }

        let Some(transform) = t else {
            fail(&mut ex, &mut failed, block, "no registration transform available".into());
            continue;
        };
        let ctx = ToolContext::new(transform, target);
        let d = block.roi.as_ref().map_or(transform, |roi| ctx.roi_transform(roi));
        if kind.is_tool() {
            ex.trace.push(ToolTrace { block: id.clone(), t: transform, d });
        }
        match run_tool(block, &ctx, d, &inputs, &mut ex.annotations) {
            Ok(outputs) => {
                for (port, value) in outputs {
                    if let Value::Verdict(v) = value {
                        ex.checks.insert(id.clone(), v);
                    }
                    values.insert((id.clone(), port), value);
                }
                for p in kind.outputs() {
                    let Some(mk) = p.measurement else { continue };
                    let name = g.measurement_name(id, p.name).expect("measurement port");
                    let value = match values.get(&(id.clone(), p.name)) {
                        Some(Value::Scalar(v)) => Ok(*v),
                        _ => Err(format!("{} produced no {}", id, p.name)),
                    };
                    ex.measurements.push(MeasurementOutcome { block: id.clone(), name, kind: mk, value });
                }
            }
            Err(e) => fail(&mut ex, &mut failed, block, e),
        }
    }
    Ok(ex)
}

fn fail(ex: &mut Execution, failed: &mut BTreeMap<String, String>, block: &BlockSpec, error: String) {
    debug!("block {} failed: {error}", block.id);
    for p in block.kind().outputs() {
        if let Some(kind) = p.measurement {
            let name = super::measurement_name(block.kind(), &block.id, p.name).expect("measurement port");
            ex.measurements.push(MeasurementOutcome { block: block.id.clone(), name, kind, value: Err(error.clone()) });
        }
    }
    if let Some(roi) = &block.roi {
        if let Ok(r) = &ex.registration {
            let d = r.transform.compose(&roi.to_parent());
            ex.annotations.push(Annotation::new(&block.id, Shape::RoiOutline { roi: local_rect(roi) }, d));
        }
    }
    ex.failures.push(BlockFailure { block: block.id.clone(), error: error.clone() });
    failed.insert(block.id.clone(), error);
}

/// The ROI as a rectangle in its own local frame.
fn local_rect(roi: &Roi) -> Roi {
    Roi { origin: Point2::ORIGIN, width: roi.width, height: roi.height, theta_deg: 0.0 }
}

fn run_tool(
    block: &BlockSpec,
    ctx: &ToolContext<'_>,
    d: Transform,
    inputs: &BTreeMap<String, Value>,
    annotations: &mut Vec<Annotation>,
) -> Result<Vec<(&'static str, Value)>, String> {
    let id = block.id.as_str();
    let line_input = |port: &str| match inputs.get(port) {
        Some(Value::Line(l)) => Ok(*l),
        _ => Err(format!("input {port} is not a line")),
    };
    let source_to_target = ctx.transform;
    let out = match &block.params {
        Params::ExtractLine(p) => {
            let roi = block.roi.as_ref().expect("validated roi");
            let ex = extract_line_detailed(ctx, roi, p).map_err(|e| e.to_string())?;
            annotations.push(Annotation::new(id, Shape::RoiOutline { roi: local_rect(roi) }, d));
            let local = roi.to_parent().invert();
            let line_local =
                LineModel { point: local.apply(ex.line.point), dir: local.apply_vector(ex.line.dir), ..ex.line };
            if let Some((p0, p1)) = line_local.clip_to_roi(&local_rect(roi)) {
                annotations.push(Annotation::new(id, Shape::Segment { p0, p1 }, d));
            }
            for p in &ex.edges_local {
                annotations.push(Annotation::new(id, Shape::Marker { p: *p }, d));
            }
            annotations.push(Annotation::new(id, Shape::Label { text: id.into(), anchor: Point2::new(2.0, 2.0) }, d));
            vec![("line", Value::Line(ex.line))]
        }
        Params::MeasureAngle(p) => {
            let (a, b) = (line_input("a")?, line_input("b")?);
            let m = measure_angle(&a, &b, p.mode);
            let anchor = (a.point + b.point) * 0.5;
            let text = format!("{id} {:.2}", m.value);
            annotations.push(Annotation::new(id, Shape::Label { text, anchor }, source_to_target));
            vec![("angle", Value::Scalar(m.value))]
        }
        Params::MeasureDistance => {
            let a = match inputs.get("a") {
                Some(Value::Line(l)) => Geometry::Line(*l),
                Some(Value::Point(p)) => Geometry::Point(*p),
                _ => return Err("input a is not a line or point".into()),
            };
            let Some(Value::Point(b)) = inputs.get("b") else { return Err("input b is not a point".into()) };
            let m = measure_distance(&a, *b);
            let foot = match a {
                Geometry::Line(l) => l.foot(*b),
                Geometry::Point(p) => p,
            };
            annotations.push(Annotation::new(id, Shape::Segment { p0: foot, p1: *b }, source_to_target));
            let text = format!("{id} {:.2}", m.value);
            annotations.push(Annotation::new(id, Shape::Label { text, anchor: (foot + *b) * 0.5 }, source_to_target));
            vec![("distance", Value::Scalar(m.value))]
        }
        Params::MeasureIntensity => {
            let roi = block.roi.as_ref().expect("validated roi");
            let s = measure_intensity(ctx, roi).map_err(|e| e.to_string())?;
            annotations.push(Annotation::new(id, Shape::RoiOutline { roi: local_rect(roi) }, d));
            let text = format!("{id} {:.3}", s.mean);
            annotations.push(Annotation::new(id, Shape::Label { text, anchor: Point2::new(2.0, 2.0) }, d));
            vec![("mean", Value::Scalar(s.mean)), ("min", Value::Scalar(s.min)), ("max", Value::Scalar(s.max))]
        }
        Params::ExtractBlobs(p) => {
            let roi = block.roi.as_ref().expect("validated roi");
            let blobs = extract_blobs(ctx, roi, p).map_err(|e| e.to_string())?;
            annotations.push(Annotation::new(id, Shape::RoiOutline { roi: local_rect(roi) }, d));
            let local = roi.to_parent().invert();
            for b in &blobs {
                annotations.push(Annotation::new(id, Shape::Marker { p: local.apply(b.centroid) }, d));
            }
            let text = format!("{id} {}", blobs.len());
            annotations.push(Annotation::new(id, Shape::Label { text, anchor: Point2::new(2.0, 2.0) }, d));
            let mut out = vec![("count", Value::Scalar(blobs.len() as f64))];
            if let Some(largest) = blobs.first() {
                out.push(("area", Value::Scalar(largest.area)));
                out.push(("centroid", Value::Point(largest.centroid)));
            }
            out.push(("blobs", Value::Blobs));
            out
        }
        Params::ToleranceCheck(band) => {
            let Some(Value::Scalar(v)) = inputs.get("value") else { return Err("input value is not a scalar".into()) };
            vec![("verdict", Value::Verdict(band.contains(*v)))]
        }
        Params::Input | Params::Registration | Params::Output => Vec::new(),
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::tests::MINIMAL;
    use super::*;

    #[test]
    fn fixed_identity_run() {
        let g = FlowGraph::parse(MINIMAL).unwrap();
        let img = Image::filled(60, 40, 0.5);
        let ex = execute(&g, &img, RegistrationMode::Fixed(Transform::identity())).unwrap();
        let names: Vec<&str> = ex.measurements.iter().map(|m| m.name.as_str()).collect();
        assert_eq!(names, ["reg", "mi", "mi.min", "mi.max"]);
        assert_eq!(ex.measurements[1].value, Ok(0.5));
        assert_eq!(ex.checks.get("tc"), Some(&true));
        assert_eq!(ex.trace.len(), 2);
        let roi = g.block("mi").unwrap().roi.unwrap();
        assert_eq!(ex.trace[0], ToolTrace { block: "mi".into(), t: Transform::identity(), d: roi.to_parent() });
        assert!(ex.failures.is_empty());
    }

    #[test]
    fn tool_failure_propagates_downstream() {
        let g = FlowGraph::parse(MINIMAL).unwrap();
        let img = Image::filled(60, 40, 0.5);
        let far = Transform::translation(100.0, 0.0);
        let ex = execute(&g, &img, RegistrationMode::Fixed(far)).unwrap();
        let blocks: Vec<&str> = ex.failures.iter().map(|f| f.block.as_str()).collect();
        assert_eq!(blocks, ["mi", "tc", "out"]);
        assert!(ex.measurements[1].value.is_err());
        assert!(ex.checks.is_empty());
    }

    #[test]
    fn registration_failure_stops_run() {
        let g = FlowGraph::parse(MINIMAL).unwrap();
        let src = std::sync::Arc::new(crate::synth::textured_source(64, 48, 1));
        let roi = Roi::axis_aligned(16.0, 12.0, 32.0, 24.0).unwrap();
        let model = RegistrationModel::build(src, roi, crate::SearchParams::translation_only()).unwrap();
        let noise = crate::synth::add_noise(&Image::filled(64, 48, 0.5), 0.3, 9);
        let ex = execute(&g, &noise, RegistrationMode::Model(&model)).unwrap();
        assert!(matches!(ex.registration, Err(RegistrationError::RegistrationFailed { .. })));
        assert!(ex.measurements.is_empty() && ex.trace.is_empty());
    }
}
