//! Scenario JSON format and batch manifests.
//!
//! ```json
//! {"version":1,"dt":0.100000,"id":"...","ego_id":0,"adv_id":1,
//!  "agents":[{"id":0,"length":4.500000,"width":2.000000,"points":[[x,y],...],"start_index":0}],
//!  "map":{"lanes":[{"id":0,"width":3.600000,"centerline":[[x,y],...],"successors":[...]}],
//!         "road_edges":[[[x,y],...],...]}}
//! ```
//!
//! Floats are written with exactly six decimals.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AgentTrack, Footprint, Lane, MapInfo, Scenario, Trajectory, DT};
use crate::error::{Error, Result};
use crate::geometry::Vec2;

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioFile {
    version: u32,
    dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    ego_id: u32,
    adv_id: u32,
    agents: Vec<AgentFile>,
    map: MapFile,
}

#[derive(Debug, Serialize, Deserialize)]
struct AgentFile {
    id: u32,
    #[serde(default)]
    length: Option<f64>,
    #[serde(default)]
    width: Option<f64>,
    points: Vec<[f64; 2]>,
    #[serde(default)]
    start_index: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct MapFile {
    lanes: Vec<LaneFile>,
    road_edges: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LaneFile {
    id: u32,
    width: f64,
    centerline: Vec<[f64; 2]>,
    #[serde(default)]
    successors: Vec<u32>,
}

/// serde_json formatter writing every float with six decimals.
struct SixDecimals;

impl serde_json::ser::Formatter for SixDecimals {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        // -0.000000 and 0.000000 must not differ after a round trip
        let v = if value == 0.0 { 0.0 } else { value };
        write!(writer, "{v:.6}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

fn to_pair(p: &Vec2) -> [f64; 2] {
    [p.x, p.y]
}

fn from_pair(p: &[f64; 2]) -> Vec2 {
    Vec2::new(p[0], p[1])
}

/// Serializes a scenario to its canonical JSON text.
pub fn scenario_to_json(s: &Scenario) -> Result<String> {
    s.validate()?;
    let file = ScenarioFile {
        version: SCENARIO_FORMAT_VERSION,
        dt: DT,
        id: Some(s.id.clone()),
        ego_id: s.ego_id,
        adv_id: s.adv_id,
        agents: s
            .agents
            .iter()
            .map(|(id, a)| AgentFile {
                id: *id,
                length: Some(a.footprint.length),
                width: Some(a.footprint.width),
                points: a.trajectory.points().iter().map(to_pair).collect(),
                start_index: a.trajectory.start_index(),
            })
            .collect(),
        map: MapFile {
            lanes: s
                .map
                .lanes()
                .iter()
                .map(|l| LaneFile {
                    id: l.id,
                    width: l.width,
                    centerline: l.centerline.iter().map(to_pair).collect(),
                    successors: l.successors.clone(),
                })
                .collect(),
            road_edges: s
                .map
                .road_edges()
                .iter()
                .map(|e| e.iter().map(to_pair).collect())
                .collect(),
        },
    };
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SixDecimals);
    file.serialize(&mut ser)
        .map_err(|e| Error::Validation(format!("cannot serialize scenario: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn save_scenario(s: &Scenario, path: &Path) -> Result<()> {
    let text = scenario_to_json(s)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_scenario(&text, &stem)
}

pub(crate) fn parse_scenario(text: &str, fallback_id: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::parse(path, e.into_inner().to_string())
    })?;
    if file.version != SCENARIO_FORMAT_VERSION {
        return Err(Error::parse(
            "version",
            format!("unsupported version {}", file.version),
        ));
    }
    if !(file.dt > 0.0) || !file.dt.is_finite() {
        return Err(Error::parse("dt", "dt must be a positive number"));
    }
    let ratio = file.dt / DT;
    let mut agents = BTreeMap::new();
    for (i, a) in file.agents.iter().enumerate() {
        let points: Vec<Vec2> = a.points.iter().map(from_pair).collect();
        let (start, points) = if (ratio - 1.0).abs() < 1e-9 {
            (a.start_index, points)
        } else {
            (
                (a.start_index as f64 * ratio).round() as usize,
                resample(&points, ratio),
            )
        };
        let trajectory = Trajectory::new(start, points)
            .map_err(|e| Error::parse(format!("agents[{i}].points"), e.to_string()))?;
        let d = Footprint::default();
        let footprint = Footprint {
            length: a.length.unwrap_or(d.length),
            width: a.width.unwrap_or(d.width),
        };
        if agents
            .insert(
                a.id,
                AgentTrack {
                    trajectory,
                    footprint,
                },
            )
            .is_some()
        {
            return Err(Error::parse(
                format!("agents[{i}].id"),
                format!("duplicate agent id {}", a.id),
            ));
        }
    }
    let lanes = file
        .map
        .lanes
        .iter()
        .map(|l| Lane {
            id: l.id,
            width: l.width,
            centerline: l.centerline.iter().map(from_pair).collect(),
            successors: l.successors.clone(),
        })
        .collect();
    let edges = file
        .map
        .road_edges
        .iter()
        .map(|e| e.iter().map(from_pair).collect())
        .collect();
    let map = MapInfo::new(lanes, edges)?;
    let id = file.id.unwrap_or_else(|| fallback_id.to_string());
    Scenario::new(id, agents, map, file.ego_id, file.adv_id)
}

/// Linear resampling from a source step of `ratio * DT` onto the `DT` grid.
fn resample(points: &[Vec2], ratio: f64) -> Vec<Vec2> {
    if points.len() < 2 {
        return points.to_vec();
    }
    let span = (points.len() - 1) as f64 * ratio;
    let n = (span + 1e-9).floor() as usize + 1;
    (0..n)
        .map(|k| {
            let u = k as f64 / ratio;
            let i = (u.floor() as usize).min(points.len() - 2);
            points[i].lerp(points[i + 1], u - i as f64)
        })
        .collect()
}

/// Reads a manifest: one scenario path per line, relative to the manifest's directory.
/// Blank lines and `#` comments are ignored.
pub fn load_manifest(path: &Path) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let p = Path::new(l);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        })
        .collect())
}

pub fn save_manifest(path: &Path, entries: &[PathBuf]) -> Result<()> {
    let mut text = String::new();
    for e in entries {
        text.push_str(&e.to_string_lossy());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
