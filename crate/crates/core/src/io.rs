//! Formation files (JSON), trajectory files (CSV) and offline trace checks.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::bearing::bearings_of;
use crate::control_local::Rotation;
use crate::error::{Error, Result};
use crate::geometry;
use crate::graph::Graph;
use crate::linalg::RANK_TOL;
use crate::sim::{
    compute_metrics, random_positions, random_rotations, rng_from_seed, unstack3, InitialState,
    MetricTolerances, MetricsSummary, Mode, SimConfig, SimulationTrace,
};
use crate::target::{compute_target, BearingConstraints};

/// Bearings further than this from unit length are rejected.
pub const UNIT_REJECT_TOL: f64 = 1e-6;
/// Bearings further than this from unit length are re-normalized with a warning.
pub const UNIT_WARN_TOL: f64 = 1e-9;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    dimension: usize,
    agents: Vec<RawAgent>,
    edges: Vec<[usize; 2]>,
    #[serde(default)]
    bearings: Vec<RawBearing>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgent {
    id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    position: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    orientation: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBearing {
    edge: [usize; 2],
    g: Vec<f64>,
}

/// A validated formation description.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationSpec {
    pub dimension: usize,
    pub graph: Graph,
    /// Stacked positions, when every agent has one.
    pub positions: Option<DVector<f64>>,
    /// Orientations, when every agent has one (`d = 3` only).
    pub orientations: Option<Vec<Rotation>>,
    /// Desired bearings, when the file lists them.
    pub constraints: Option<BearingConstraints>,
}

impl FormationSpec {
    pub fn agent_count(&self) -> usize {
        self.graph.vertex_count()
    }

    pub fn require_positions(&self) -> Result<&DVector<f64>> {
        self.positions
            .as_ref()
            .ok_or_else(|| Error::spec("/agents", "agent positions are required"))
    }

    pub fn require_constraints(&self) -> Result<&BearingConstraints> {
        self.constraints
            .as_ref()
            .ok_or_else(|| Error::spec("/bearings", "bearing constraints are required"))
    }
}

/// Parsed file plus any non-fatal notices (such as re-normalized bearings).
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedSpec {
    pub spec: FormationSpec,
    pub warnings: Vec<String>,
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

pub fn parse_spec(path: impl AsRef<Path>) -> Result<ParsedSpec> {
    let text = fs::read_to_string(path.as_ref())
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_spec_str(&text)
}

pub fn parse_spec_str(text: &str) -> Result<ParsedSpec> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = pointer_of(e.path());
        let inner = e.into_inner();
        let msg = if inner.is_syntax() || inner.is_eof() {
            format!("syntax error: {inner}")
        } else {
            format!("schema violation: {inner}")
        };
        Error::spec(pointer, msg)
    })?;
    validate(raw)
}

fn validate(raw: RawSpec) -> Result<ParsedSpec> {
    let d = raw.dimension;
    if d < 2 {
        return Err(Error::spec(
            "/dimension",
            format!("dimension must be at least 2, got {d}"),
        ));
    }
    let n = raw.agents.len();
    if n < 2 {
        return Err(Error::spec(
            "/agents",
            format!("need at least 2 agents, got {n}"),
        ));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&k| raw.agents[k].id);
    for (rank, &k) in order.iter().enumerate() {
        let id = raw.agents[k].id;
        if id != rank + 1 {
            return Err(Error::spec(
                format!("/agents/{k}/id"),
                format!("agent ids must be unique and contiguous from 1; unexpected id {id}"),
            ));
        }
    }

    let with_pos = raw.agents.iter().filter(|a| a.position.is_some()).count();
    let positions = if with_pos == 0 {
        None
    } else {
        let mut p = DVector::zeros(d * n);
        for (slot, &k) in order.iter().enumerate() {
            let ptr = format!("/agents/{k}/position");
            let pos = raw.agents[k].position.as_ref().ok_or_else(|| {
                Error::spec(&ptr, "positions must be given for all agents or none")
            })?;
            if pos.len() != d {
                return Err(Error::spec(
                    ptr,
                    format!("expected {d} coordinates, found {}", pos.len()),
                ));
            }
            if pos.iter().any(|x| !x.is_finite()) {
                return Err(Error::spec(ptr, "non-finite coordinate"));
            }
            p.rows_mut(d * slot, d).copy_from_slice(pos);
        }
        Some(p)
    };

    let with_rot = raw
        .agents
        .iter()
        .filter(|a| a.orientation.is_some())
        .count();
    let orientations = if with_rot == 0 {
        None
    } else {
        if d != 3 {
            return Err(Error::spec(
                "/agents",
                format!("orientations require dimension 3, got {d}"),
            ));
        }
        let mut rots = Vec::with_capacity(n);
        for &k in &order {
            let ptr = format!("/agents/{k}/orientation");
            let o = raw.agents[k].orientation.as_ref().ok_or_else(|| {
                Error::spec(&ptr, "orientations must be given for all agents or none")
            })?;
            rots.push(Rotation::from_row_slice(o).map_err(|e| Error::spec(ptr, e.to_string()))?);
        }
        Some(rots)
    };

    let mut pairs = Vec::with_capacity(raw.edges.len());
    let mut seen = std::collections::HashSet::new();
    for (k, &[i, j]) in raw.edges.iter().enumerate() {
        let ptr = format!("/edges/{k}");
        if i < 1 || j < 1 || i > n || j > n {
            return Err(Error::spec(
                ptr,
                format!("edge [{i}, {j}] references an agent outside 1..={n}"),
            ));
        }
        if i == j {
            return Err(Error::spec(ptr, format!("self-loop at agent {i}")));
        }
        if !seen.insert((i.min(j), i.max(j))) {
            return Err(Error::spec(ptr, format!("duplicate edge [{i}, {j}]")));
        }
        pairs.push((i, j));
    }
    let graph = Graph::new(n, &pairs).map_err(|e| Error::spec("/edges", e.to_string()))?;

    let mut warnings = Vec::new();
    let constraints = if raw.bearings.is_empty() {
        None
    } else {
        let mut slots: Vec<Option<Vec<f64>>> = vec![None; graph.edge_count()];
        for (b, entry) in raw.bearings.iter().enumerate() {
            let [i, j] = entry.edge;
            let k = (i >= 1 && j >= 1)
                .then(|| graph.edge_index(i - 1, j - 1))
                .flatten()
                .ok_or_else(|| {
                    Error::spec(
                        format!("/bearings/{b}/edge"),
                        format!("[{i}, {j}] is not a declared edge"),
                    )
                })?;
            let ptr = format!("/bearings/{b}/g");
            if entry.g.len() != d {
                return Err(Error::spec(
                    ptr,
                    format!("expected {d} components, found {}", entry.g.len()),
                ));
            }
            let norm = entry.g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !norm.is_finite() || (norm - 1.0).abs() > UNIT_REJECT_TOL {
                return Err(Error::spec(
                    ptr,
                    format!("bearing must be a unit vector, norm is {norm}"),
                ));
            }
            // bearings already unit to rounding are kept verbatim so files round-trip
            let norm = if (norm - 1.0).abs() > UNIT_WARN_TOL {
                warnings.push(format!(
                    "bearing for edge [{i}, {j}] had norm {norm}; re-normalized (at `{ptr}`)"
                ));
                norm
            } else {
                1.0
            };
            let sign = if i < j { 1.0 } else { -1.0 };
            if slots[k].is_some() {
                return Err(Error::spec(
                    format!("/bearings/{b}/edge"),
                    format!("second bearing for edge [{i}, {j}]"),
                ));
            }
            slots[k] = Some(entry.g.iter().map(|x| sign * x / norm).collect());
        }
        let mut stacked = DVector::zeros(d * graph.edge_count());
        for (k, slot) in slots.into_iter().enumerate() {
            let (i, j) = graph.edges()[k].labels();
            let g = slot.ok_or_else(|| {
                Error::spec("/bearings", format!("no bearing given for edge [{i}, {j}]"))
            })?;
            stacked.rows_mut(d * k, d).copy_from_slice(&g);
        }
        Some(
            BearingConstraints::new(&graph, d, stacked)
                .map_err(|e| Error::spec("/bearings", e.to_string()))?,
        )
    };

    Ok(ParsedSpec {
        spec: FormationSpec {
            dimension: d,
            graph,
            positions,
            orientations,
            constraints,
        },
        warnings,
    })
}

/// Canonical JSON: agents by id, edges in canonical order, one bearing per
/// edge oriented from the lower to the higher label.
pub fn write_spec(spec: &FormationSpec) -> String {
    let d = spec.dimension;
    let agents = (0..spec.agent_count())
        .map(|i| RawAgent {
            id: i + 1,
            position: spec
                .positions
                .as_ref()
                .map(|p| p.as_slice()[d * i..d * (i + 1)].to_vec()),
            orientation: spec
                .orientations
                .as_ref()
                .map(|r| r[i].row_major().to_vec()),
        })
        .collect();
    let edges: Vec<[usize; 2]> = spec
        .graph
        .edge_labels()
        .into_iter()
        .map(|(i, j)| [i, j])
        .collect();
    let bearings = spec
        .constraints
        .as_ref()
        .map(|c| {
            edges
                .iter()
                .enumerate()
                .map(|(k, e)| RawBearing {
                    edge: *e,
                    g: c.bearing(k).to_vec(),
                })
                .collect()
        })
        .unwrap_or_default();
    let raw = RawSpec {
        dimension: d,
        agents,
        edges,
        bearings,
    };
    let mut out = serde_json::to_string_pretty(&raw).expect("plain data serializes");
    out.push('\n');
    out
}

pub fn write_spec_file(spec: &FormationSpec, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_spec(spec))?;
    Ok(())
}

/// Half-width of the box random starting positions are drawn from.
pub const RANDOM_BOX: f64 = 1.0;
/// Largest rotation angle of random starting orientations.
pub const RANDOM_MAX_ANGLE: f64 = std::f64::consts::FRAC_PI_3;

/// Starting state for `mode`. Positions and orientations come from the file
/// unless `randomize` is set or the file omits them, in which case they are
/// drawn from `seed`.
pub fn initial_state(
    spec: &FormationSpec,
    mode: Mode,
    seed: u64,
    randomize: bool,
) -> Result<InitialState> {
    let d = spec.dimension;
    let n = spec.agent_count();
    let mut rng = rng_from_seed(seed);
    let p = match (&spec.positions, randomize) {
        (Some(p), false) => p.clone(),
        _ => random_positions(&mut rng, n, d, RANDOM_BOX),
    };
    match mode {
        Mode::Global => Ok(InitialState::Global(p)),
        Mode::Local => {
            if d != 3 {
                return Err(Error::spec(
                    "/dimension",
                    format!("local mode needs dimension 3, got {d}"),
                ));
            }
            let rotations = match (&spec.orientations, randomize) {
                (Some(r), false) => r.iter().map(|q| *q.matrix()).collect(),
                _ => random_rotations(&mut rng, n, RANDOM_MAX_ANGLE),
            };
            Ok(InitialState::Local {
                positions: unstack3(&p),
                rotations,
            })
        }
    }
}

/// CSV column names: `t`, then `p{i}_{a}`, then `q{i}_{rc}` in local mode.
pub fn trace_header(n: usize, d: usize, with_rotations: bool) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for i in 1..=n {
        h.extend((1..=d).map(|a| format!("p{i}_{a}")));
    }
    if with_rotations {
        for i in 1..=n {
            for r in 1..=3 {
                h.extend((1..=3).map(|c| format!("q{i}_{r}{c}")));
            }
        }
    }
    h
}

/// Sibling path for the metrics summary: `run.csv` -> `run.metrics.json`.
pub fn metrics_path(csv: &Path) -> PathBuf {
    csv.with_extension("metrics.json")
}

/// Contents of the metrics file written next to a trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceReport {
    pub config: SimConfig,
    pub summary: MetricsSummary,
    #[serde(with = "crate::serde_util::dvector")]
    pub p_star: DVector<f64>,
    #[serde(with = "crate::serde_util::opt_matrix3")]
    pub q_star: Option<Matrix3<f64>>,
}

fn fmt(x: f64) -> String {
    // shortest text that parses back to the same double
    format!("{x:?}")
}

/// Writes the trajectory CSV and its metrics summary; returns the summary.
pub fn write_trace(
    trace: &SimulationTrace,
    cfg: &SimConfig,
    path: impl AsRef<Path>,
) -> Result<MetricsSummary> {
    let path = path.as_ref();
    if trace.is_empty() {
        return Err(Error::InvalidParameter(
            "cannot write an empty trace".into(),
        ));
    }
    let summary = compute_metrics(trace, &MetricTolerances::default())?;
    let n = trace.agent_count();
    let local = trace.mode == Mode::Local;
    let io = |e: csv::Error| Error::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(trace_header(n, trace.dim, local))
        .map_err(io)?;
    let mut row = Vec::new();
    for (s, t) in trace.times.iter().enumerate() {
        row.clear();
        row.push(fmt(*t));
        row.extend(trace.positions[s].iter().map(|x| fmt(*x)));
        if local {
            for q in &trace.rotations[s] {
                for r in 0..3 {
                    row.extend((0..3).map(|c| fmt(q[(r, c)])));
                }
            }
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush()?;
    let report = TraceReport {
        config: cfg.clone(),
        summary: summary.clone(),
        p_star: trace.p_star.clone(),
        q_star: trace.q_star,
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(metrics_path(path), json + "\n")?;
    Ok(summary)
}

/// A trajectory read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub header: Vec<String>,
    pub times: Vec<f64>,
    pub positions: Vec<DVector<f64>>,
    /// Empty when the file has no orientation columns.
    pub rotations: Vec<Vec<Matrix3<f64>>>,
}

pub fn read_trace(path: impl AsRef<Path>, n: usize, d: usize) -> Result<TraceTable> {
    let path = path.as_ref();
    let io = |e: csv::Error| Error::Io(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(io)?;
    let header: Vec<String> = r
        .headers()
        .map_err(io)?
        .iter()
        .map(str::to_string)
        .collect();
    let local = if header == trace_header(n, d, false) {
        false
    } else if d == 3 && header == trace_header(n, d, true) {
        true
    } else {
        return Err(Error::InvalidParameter(format!(
            "{}: header does not match {n} agents in dimension {d}",
            path.display()
        )));
    };
    let mut table = TraceTable {
        header,
        times: Vec::new(),
        positions: Vec::new(),
        rotations: Vec::new(),
    };
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(io)?;
        let vals = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| {
                Error::InvalidParameter(format!("{}: row {}: {e}", path.display(), line + 1))
            })?;
        if vals.len() != table.header.len() {
            return Err(Error::InvalidParameter(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                line + 1,
                vals.len(),
                table.header.len()
            )));
        }
        table.times.push(vals[0]);
        table
            .positions
            .push(DVector::from_column_slice(&vals[1..1 + n * d]));
        if local {
            let base = 1 + n * d;
            table.rotations.push(
                (0..n)
                    .map(|i| Matrix3::from_row_slice(&vals[base + 9 * i..base + 9 * (i + 1)]))
                    .collect(),
            );
        }
    }
    if table.times.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "{}: trace has no rows",
            path.display()
        )));
    }
    Ok(table)
}

/// One offline invariant check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub samples: usize,
    pub checks: Vec<Check>,
    /// Final `Σ_k ‖g_k - g*_k‖²` (global mode); informational.
    pub final_bearing_error: Option<f64>,
    pub passed: bool,
}

/// Re-checks the invariants of a recorded trajectory: increasing times,
/// constant centroid and scale, orthonormal rotations and, for global-frame
/// runs, the sphere constraint and a non-increasing `V` between samples.
pub fn verify_trace(spec: &FormationSpec, table: &TraceTable, tol: f64) -> Result<VerifyReport> {
    let d = spec.dimension;
    let mut checks = Vec::new();
    let mut push = |name: &str, value: f64, tolerance: f64| {
        checks.push(Check {
            name: name.to_string(),
            value,
            tolerance,
            passed: value <= tolerance,
        })
    };
    let gaps = table
        .times
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(f64::NEG_INFINITY, f64::max);
    push(
        "times_increasing",
        if table.times.len() < 2 { -1.0 } else { gaps },
        0.0,
    );

    let p0 = &table.positions[0];
    let c0 = geometry::centroid(p0, d);
    let s0 = geometry::scale(p0, d);
    let centroid = table
        .positions
        .iter()
        .map(|p| (geometry::centroid(p, d) - &c0).norm())
        .fold(0.0, f64::max);
    let scale = table
        .positions
        .iter()
        .map(|p| (geometry::scale(p, d) - s0).abs())
        .fold(0.0, f64::max);
    push("centroid_drift", centroid, tol);
    push("scale_drift", scale, tol);

    let mut final_bearing_error = None;
    if !table.rotations.is_empty() {
        let ortho = table
            .rotations
            .iter()
            .flatten()
            .map(|q| (q.transpose() * q - Matrix3::identity()).norm())
            .fold(0.0, f64::max);
        push("rotation_orthonormality", ortho, 1e-9);
    } else if let Some(c) = &spec.constraints {
        let target = compute_target(c, &spec.graph, p0, RANK_TOL)?;
        let r_star = geometry::centered(&target.p_star, d);
        let mut sphere: f64 = 0.0;
        let mut rise: f64 = 0.0;
        let mut prev: Option<f64> = None;
        for p in &table.positions {
            let delta = p - &target.p_star;
            sphere = sphere.max(((&delta + &r_star).norm() - r_star.norm()).abs());
            let v = 0.5 * delta.norm_squared();
            if let Some(pv) = prev {
                rise = rise.max(v - pv);
            }
            prev = Some(v);
        }
        push("sphere_residual", sphere, tol);
        push("lyapunov_increase", rise, crate::sim::V_SLACK);
        let last = table.positions.last().expect("non-empty");
        final_bearing_error = bearings_of(&spec.graph, d, last.as_slice()).ok().map(|bs| {
            bs.bearings
                .iter()
                .zip(c.stacked().iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        });
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport {
        samples: table.times.len(),
        checks,
        final_bearing_error,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQUARE: &str = r#"{
        "dimension": 2,
        "agents": [
            {"id": 1, "position": [0.0, 0.0]},
            {"id": 2, "position": [0.0, 1.0]},
            {"id": 3, "position": [1.0, 1.0]},
            {"id": 4, "position": [1.0, 0.0]}
        ],
        "edges": [[1, 2], [2, 3], [3, 4], [4, 1], [1, 3]],
        "bearings": [
            {"edge": [1, 2], "g": [0.0, 1.0]},
            {"edge": [2, 3], "g": [1.0, 0.0]},
            {"edge": [3, 4], "g": [0.0, -1.0]},
            {"edge": [4, 1], "g": [-1.0, 0.0]},
            {"edge": [1, 3], "g": [0.7071067811865476, 0.7071067811865476]}
        ]
    }"#;

    fn pointer(err: Error) -> String {
        match err {
            Error::Spec { pointer, .. } => pointer,
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn parses_square() {
        let parsed = parse_spec_str(SQUARE).unwrap();
        assert!(parsed.warnings.is_empty());
        assert_eq!(parsed.spec.agent_count(), 4);
        assert_eq!(parsed.spec.graph.edge_count(), 5);
        // edge (1, 4) is stored tail-first, so g*_14 = -g*_41
        let c = parsed.spec.constraints.unwrap();
        let k = parsed.spec.graph.edge_index(0, 3).unwrap();
        assert_eq!(c.bearing(k), &[1.0, 0.0]);
    }

    #[test]
    fn rejects_short_bearing() {
        let text = SQUARE.replace("[0.0, 1.0]}", "[0.0, 0.5]}");
        assert_eq!(pointer(parse_spec_str(&text).unwrap_err()), "/bearings/0/g");
    }

    #[test]
    fn rejects_unknown_agent() {
        let text = SQUARE.replace("[1, 3]]", "[1, 9]]");
        assert_eq!(pointer(parse_spec_str(&text).unwrap_err()), "/edges/4");
    }

    #[test]
    fn schema_errors_carry_a_pointer() {
        let text = SQUARE.replace(r#""position": [0.0, 1.0]"#, r#""position": "north""#);
        assert_eq!(
            pointer(parse_spec_str(&text).unwrap_err()),
            "/agents/1/position"
        );
        let err = parse_spec_str("{\"dimension\": 2,").unwrap_err();
        assert!(matches!(err, Error::Spec { ref message, .. } if message.starts_with("syntax")));
    }

    #[test]
    fn slightly_long_bearing_is_renormalized() {
        let text = SQUARE.replace("[1.0, 0.0]}", "[1.0000001, 0.0]}");
        let parsed = parse_spec_str(&text).unwrap();
        assert_eq!(parsed.warnings.len(), 1);
        let c = parsed.spec.constraints.unwrap();
        let k = parsed.spec.graph.edge_index(1, 2).unwrap();
        assert_eq!(c.bearing(k), &[1.0, 0.0]);
    }

    #[test]
    fn canonical_round_trip() {
        let spec = parse_spec_str(SQUARE).unwrap().spec;
        let text = write_spec(&spec);
        let again = parse_spec_str(&text).unwrap();
        assert_eq!(again.spec, spec);
        assert_eq!(write_spec(&again.spec), text);
    }

    #[test]
    fn header_widths() {
        assert_eq!(trace_header(2, 2, false).len(), 5);
        assert_eq!(trace_header(4, 3, true).len(), 1 + 12 + 36);
        assert_eq!(trace_header(1, 3, true)[4], "q1_11");
    }
}
