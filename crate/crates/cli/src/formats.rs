//! Text formats for keypoint trajectories, configuration trajectories and
//! contact labels.
//!
//! Every file is a header of `key value...` lines, a line reading `data`,
//! then one whitespace-separated row per frame. Lines starting with `#` are
//! comments. Floats are written with 17 significant digits so a
//! write/read cycle is exact.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use retarget_core::feasibility::ContactSequence;
use retarget_core::kinematics::{Configuration, ConfigurationTrajectory, KeypointSet, KeypointTrajectory};

use crate::{CliError, CliResult};

const KEYPOINTS: &str = "keypoints/1";
const TRAJECTORY: &str = "trajectory/1";
const CONTACTS: &str = "contacts/1";

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn row(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(fmt_f64).collect::<Vec<_>>().join(" ")
}

struct Parsed {
    header: HashMap<String, Vec<String>>,
    rows: Vec<(usize, Vec<String>)>,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn split(path: &Path, text: &str, format: &str) -> CliResult<Parsed> {
    let mut header = HashMap::new();
    let mut rows = Vec::new();
    let mut in_data = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut words = line.split_whitespace().map(str::to_owned);
        if in_data {
            rows.push((i + 1, words.collect()));
            continue;
        }
        let key = words.next().expect("non-empty line");
        if key == "data" {
            in_data = true;
            continue;
        }
        header.insert(key, words.collect::<Vec<_>>());
    }
    match header.get("format").map(|v| v.as_slice()) {
        Some([f]) if f == format => {}
        Some(other) => {
            return Err(parse_err(
                path,
                1,
                format!("expected format {format}, found {}", other.join(" ")),
            ))
        }
        None => return Err(parse_err(path, 1, format!("missing `format {format}` header"))),
    }
    if !in_data {
        return Err(parse_err(path, 0, "missing `data` line"));
    }
    Ok(Parsed { header, rows })
}

impl Parsed {
    fn one(&self, path: &Path, key: &str) -> CliResult<&str> {
        match self.header.get(key).map(|v| v.as_slice()) {
            Some([v]) => Ok(v),
            _ => Err(parse_err(path, 0, format!("header `{key}` needs exactly one value"))),
        }
    }

    fn list(&self, path: &Path, key: &str) -> CliResult<&[String]> {
        self.header
            .get(key)
            .map(|v| v.as_slice())
            .ok_or_else(|| parse_err(path, 0, format!("missing header `{key}`")))
    }

    fn number<T: std::str::FromStr>(&self, path: &Path, key: &str) -> CliResult<T> {
        let v = self.one(path, key)?;
        v.parse()
            .map_err(|_| parse_err(path, 0, format!("header `{key}`: cannot parse `{v}`")))
    }

    fn floats(&self, path: &Path, width: usize) -> CliResult<Vec<Vec<f64>>> {
        let frames: usize = self.number(path, "frames")?;
        if self.rows.len() != frames {
            return Err(parse_err(
                path,
                0,
                format!("header says {frames} frames, found {}", self.rows.len()),
            ));
        }
        self.rows
            .iter()
            .map(|(line, words)| {
                if words.len() != width {
                    return Err(parse_err(
                        path,
                        *line,
                        format!("expected {width} values, found {}", words.len()),
                    ));
                }
                words
                    .iter()
                    .map(|w| {
                        w.parse::<f64>()
                            .ok()
                            .filter(|x| x.is_finite())
                            .ok_or_else(|| parse_err(path, *line, format!("bad number `{w}`")))
                    })
                    .collect()
            })
            .collect()
    }
}

fn dt(p: &Parsed, path: &Path) -> CliResult<f64> {
    let dt: f64 = p.number(path, "dt")?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(parse_err(path, 0, format!("dt {dt} must be > 0")));
    }
    Ok(dt)
}

pub fn keypoints_to_string(x: &KeypointTrajectory) -> String {
    let mut s = String::new();
    writeln!(s, "format {KEYPOINTS}").unwrap();
    writeln!(s, "dt {}", fmt_f64(x.dt)).unwrap();
    writeln!(s, "names {}", x.names.join(" ")).unwrap();
    let edges: Vec<String> = x.adjacency.iter().map(|(a, b)| format!("{a}-{b}")).collect();
    writeln!(s, "edges {}", edges.join(" ")).unwrap();
    writeln!(s, "frames {}", x.len()).unwrap();
    writeln!(s, "data").unwrap();
    for f in &x.frames {
        writeln!(s, "{}", row(f.positions.iter().flat_map(|p| [p.x, p.y, p.z]))).unwrap();
    }
    s
}

pub fn parse_keypoints(path: &Path, text: &str) -> CliResult<KeypointTrajectory> {
    let p = split(path, text, KEYPOINTS)?;
    let names = p.list(path, "names")?.to_vec();
    if names.is_empty() {
        return Err(parse_err(path, 0, "no keypoint names"));
    }
    let adjacency = p
        .list(path, "edges")?
        .iter()
        .map(|e| {
            e.split_once('-')
                .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
                .ok_or_else(|| parse_err(path, 0, format!("bad edge `{e}` (want i-j)")))
        })
        .collect::<CliResult<Vec<(usize, usize)>>>()?;
    let m = names.len();
    let frames = p
        .floats(path, 3 * m)?
        .into_iter()
        .map(|r| KeypointSet {
            positions: r.chunks(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect(),
        })
        .collect();
    let x = KeypointTrajectory {
        names,
        frames,
        dt: dt(&p, path)?,
        adjacency,
    };
    x.check().map_err(|e| parse_err(path, 0, e.to_string()))?;
    Ok(x)
}

pub fn trajectory_to_string(model_name: &str, nq: usize, q: &ConfigurationTrajectory) -> String {
    let mut s = String::new();
    writeln!(s, "format {TRAJECTORY}").unwrap();
    writeln!(s, "model {model_name}").unwrap();
    writeln!(s, "nq {nq}").unwrap();
    writeln!(s, "dt {}", fmt_f64(q.dt)).unwrap();
    writeln!(s, "frames {}", q.len()).unwrap();
    writeln!(s, "# x y z qw qx qy qz joints...").unwrap();
    writeln!(s, "data").unwrap();
    for c in &q.configurations {
        writeln!(s, "{}", row(c.to_row())).unwrap();
    }
    s
}

/// Parsed trajectory file: the model name it was written for and the frames.
pub struct TrajectoryFile {
    pub model: String,
    pub trajectory: ConfigurationTrajectory,
}

pub fn parse_trajectory(path: &Path, text: &str) -> CliResult<TrajectoryFile> {
    let p = split(path, text, TRAJECTORY)?;
    let nq: usize = p.number(path, "nq")?;
    let configurations = p
        .floats(path, 7 + nq)?
        .iter()
        .enumerate()
        .map(|(i, r)| Configuration::from_row(r).map_err(|e| parse_err(path, p.rows[i].0, e.to_string())))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(TrajectoryFile {
        model: p.one(path, "model")?.to_owned(),
        trajectory: ConfigurationTrajectory {
            configurations,
            dt: dt(&p, path)?,
        },
    })
}

pub fn contacts_to_string(c: &ContactSequence) -> String {
    let mut s = String::new();
    writeln!(s, "format {CONTACTS}").unwrap();
    writeln!(s, "dt {}", fmt_f64(c.dt)).unwrap();
    writeln!(s, "groups {}", c.groups.join(" ")).unwrap();
    writeln!(s, "frames {}", c.len()).unwrap();
    writeln!(s, "data").unwrap();
    for r in &c.flags {
        let bits: Vec<&str> = r.iter().map(|&b| if b { "1" } else { "0" }).collect();
        writeln!(s, "{}", bits.join(" ")).unwrap();
    }
    s
}

pub fn parse_contacts(path: &Path, text: &str) -> CliResult<ContactSequence> {
    let p = split(path, text, CONTACTS)?;
    let groups = p.list(path, "groups")?.to_vec();
    let frames: usize = p.number(path, "frames")?;
    if p.rows.len() != frames {
        return Err(parse_err(
            path,
            0,
            format!("header says {frames} frames, found {}", p.rows.len()),
        ));
    }
    let flags = p
        .rows
        .iter()
        .map(|(line, words)| {
            if words.len() != groups.len() {
                return Err(parse_err(path, *line, format!("expected {} flags", groups.len())));
            }
            words
                .iter()
                .map(|w| match w.as_str() {
                    "1" => Ok(true),
                    "0" => Ok(false),
                    _ => Err(parse_err(path, *line, format!("flag `{w}` is not 0 or 1"))),
                })
                .collect()
        })
        .collect::<CliResult<Vec<Vec<bool>>>>()?;
    Ok(ContactSequence {
        groups,
        dt: dt(&p, path)?,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use retarget_core::fixtures::{build, FixtureKind};
    use retarget_core::reference;

    #[test]
    fn keypoints_roundtrip_exactly() {
        let f = build(FixtureKind::Drift, 12, 0.02).unwrap();
        let text = keypoints_to_string(&f.keypoints);
        let back = parse_keypoints(Path::new("k"), &text).unwrap();
        assert_eq!(back, f.keypoints);
        assert_eq!(keypoints_to_string(&back), text);
    }

    #[test]
    fn trajectory_and_contacts_roundtrip_exactly() {
        let model = reference::mini_humanoid();
        let f = build(FixtureKind::OneFoot, 12, 0.02).unwrap();
        let text = trajectory_to_string(&model.name, model.nq(), &f.truth);
        let back = parse_trajectory(Path::new("t"), &text).unwrap();
        assert_eq!(back.trajectory, f.truth);
        assert_eq!(back.model, model.name);
        let c = contacts_to_string(&f.truth_contacts);
        assert_eq!(parse_contacts(Path::new("c"), &c).unwrap(), f.truth_contacts);
    }

    #[test]
    fn malformed_files_name_path_and_line() {
        let f = build(FixtureKind::Squat, 4, 0.02).unwrap();
        let text = keypoints_to_string(&f.keypoints).replacen("data\n", "data\n1 2 3\n", 1);
        let e = parse_keypoints(Path::new("bad.txt"), &text).unwrap_err().to_string();
        assert!(e.contains("bad.txt"), "{e}");
        let full = keypoints_to_string(&f.keypoints);
        let mut lines: Vec<&str> = full.lines().collect();
        let short = lines.pop().unwrap().rsplit_once(' ').unwrap().0.to_owned();
        lines.push(&short);
        let e = parse_keypoints(Path::new("k"), &lines.join("\n"))
            .unwrap_err()
            .to_string();
        assert!(e.starts_with("k:10:") && e.contains("expected 24 values"), "{e}");
        assert!(parse_keypoints(Path::new("k"), "format trajectory/1\ndata\n").is_err());
        assert!(parse_contacts(
            Path::new("c"),
            "format contacts/1\ndt 0.02\ngroups a\nframes 1\ndata\n2\n"
        )
        .is_err());
    }
}
