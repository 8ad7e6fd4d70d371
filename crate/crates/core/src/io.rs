//! Text case files and dataset manifests.
//!
//! A case file starts with `#`-prefixed header lines
//!
//! ```text
//! # case_id=naca_like_0007
//! # vinf=1.25 0.08
//! ```
//!
//! followed by one whitespace-separated row per point:
//! `x y nx ny is_surf d [ux uy p nut]`. The four target columns are
//! all-or-none across the file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::mesh::{MeshCase, Point2};
use crate::{Error, Result};

const BASE_COLS: usize = 6;
const TARGET_COLS: usize = 4;

pub fn load_case(path: impl AsRef<Path>) -> Result<MeshCase> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_case(&text, path)
}

/// Parses case-file text. `origin` is only used in error messages.
pub fn parse_case(text: &str, origin: &Path) -> Result<MeshCase> {
    let perr = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };

    let mut case_id: Option<String> = None;
    let mut vinf: Option<Point2> = None;
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut surface_idx = Vec::new();
    let mut wall_distance = Vec::new();
    let mut targets: Vec<[f64; 4]> = Vec::new();
    let mut has_targets: Option<bool> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('#') {
            let header = header.trim();
            if let Some(v) = header.strip_prefix("case_id=") {
                case_id = Some(v.trim().to_string());
            } else if let Some(v) = header.strip_prefix("vinf=") {
                let vals = parse_floats(v, lineno, &perr)?;
                if vals.len() != 2 {
                    return Err(perr(lineno, "vinf needs two components".into()));
                }
                vinf = Some(Point2::new(vals[0], vals[1]));
            }
            continue;
        }

        let vals = parse_floats(line, lineno, &perr)?;
        let with_targets = match vals.len() {
            BASE_COLS => false,
            n if n == BASE_COLS + TARGET_COLS => true,
            n => {
                return Err(perr(
                    lineno,
                    format!(
                        "expected {BASE_COLS} or {} columns, found {n}",
                        BASE_COLS + TARGET_COLS
                    ),
                ))
            }
        };
        match has_targets {
            None => has_targets = Some(with_targets),
            Some(h) if h != with_targets => {
                return Err(perr(
                    lineno,
                    "target columns must be present on every row or none".into(),
                ))
            }
            _ => {}
        }

        let idx = points.len();
        let p = Point2::new(vals[0], vals[1]);
        let n = Point2::new(vals[2], vals[3]);
        let is_surf = match vals[4] {
            v if v == 0.0 => false,
            v if v == 1.0 => true,
            v => return Err(perr(lineno, format!("is_surf must be 0 or 1, found {v}"))),
        };
        if is_surf {
            if (n.norm() - 1.0).abs() > 1e-9 {
                return Err(perr(lineno, "normal not unit length".into()));
            }
            surface_idx.push(idx);
        } else if n != Point2::ZERO {
            return Err(perr(
                lineno,
                "off-surface point has a nonzero normal".into(),
            ));
        }
        if vals[5] < 0.0 {
            return Err(perr(lineno, "negative wall distance".into()));
        }
        points.push(p);
        normals.push(n);
        wall_distance.push(vals[5]);
        if with_targets {
            targets.push([vals[6], vals[7], vals[8], vals[9]]);
        }
    }

    let case_id = case_id.unwrap_or_else(|| {
        origin
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let vinf = vinf.ok_or_else(|| perr(0, "missing '# vinf=' header".into()))?;
    let targets = has_targets.unwrap_or(false).then_some(targets);
    MeshCase::new(
        case_id,
        points,
        surface_idx,
        normals,
        vinf,
        wall_distance,
        targets,
    )
}

fn parse_floats(
    s: &str,
    lineno: usize,
    perr: &impl Fn(usize, String) -> Error,
) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| perr(lineno, format!("malformed number '{tok}'")))
        })
        .collect()
}

/// Renders a case in the text format. Floats use the shortest
/// representation that parses back to the same bits.
pub fn format_case(case: &MeshCase) -> String {
    let mask = case.surface_mask();
    let mut out = String::with_capacity(case.len() * 96);
    let _ = writeln!(out, "# case_id={}", case.case_id);
    let _ = writeln!(
        out,
        "# vinf={} {}",
        case.inlet_velocity.x, case.inlet_velocity.y
    );
    for i in 0..case.len() {
        let p = case.points[i];
        let n = case.normals[i];
        let _ = write!(
            out,
            "{} {} {} {} {} {}",
            p.x,
            p.y,
            n.x,
            n.y,
            u8::from(mask[i]),
            case.wall_distance[i]
        );
        if let Some(t) = &case.targets {
            let r = t[i];
            let _ = write!(out, " {} {} {} {}", r[0], r[1], r[2], r[3]);
        }
        out.push('\n');
    }
    out
}

pub fn write_case(case: &MeshCase, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_case(case)).map_err(|e| Error::io(path, e))
}

/// Reads a manifest: one case path per line. Relative paths resolve
/// against the manifest's directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let p = PathBuf::from(l);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        })
        .collect())
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[PathBuf]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for e in entries {
        let _ = writeln!(out, "{}", e.display());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_manifest_cases(path: impl AsRef<Path>) -> Result<Vec<MeshCase>> {
    read_manifest(path)?.iter().map(load_case).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIVE: &str = "\
# case_id=five
# vinf=1 0
0 0 -1 0 1 0 1 0 0.5 0
1 0 1 0 1 0 1 0 0.5 0
0.5 1 0 0 0 0.9 1 0 0.1 0
0.5 -1 0 0 0 0.9 1 0 0.1 0
2 0 0 0 0 1 1 0 0 0.2
";

    #[test]
    fn parses_well_formed_file() {
        let c = parse_case(FIVE, Path::new("five.case")).unwrap();
        assert_eq!(c.len(), 5);
        assert_eq!(c.case_id, "five");
        assert_eq!(c.surface_idx, vec![0, 1]);
        assert_eq!(c.targets.as_ref().unwrap()[4], [1.0, 0.0, 0.0, 0.2]);
    }

    #[test]
    fn missing_target_columns_gives_none() {
        let text: String = FIVE
            .lines()
            .map(|l| {
                if l.starts_with('#') {
                    l.to_string()
                } else {
                    l.split_whitespace().take(6).collect::<Vec<_>>().join(" ")
                }
            })
            .collect::<Vec<_>>()
            .join("\n");
        let c = parse_case(&text, Path::new("x")).unwrap();
        assert!(c.targets.is_none());
        assert_eq!(c.len(), 5);
    }

    #[test]
    fn non_unit_normal_reports_row() {
        let text = FIVE.replace("1 0 1 0 1 0 1 0 0.5 0", "1 0 0.6 0.9 1 0 1 0 0.5 0");
        let err = parse_case(&text, Path::new("bad.case")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("normal not unit length"), "{msg}");
        assert!(msg.contains(":4:"), "{msg}");
    }

    #[test]
    fn wrong_column_count_is_parse_error() {
        let text = FIVE.replace("2 0 0 0 0 1 1 0 0 0.2", "2 0 0 0 0 1 1");
        assert!(matches!(
            parse_case(&text, Path::new("x")),
            Err(Error::Parse { line: 7, .. })
        ));
    }

    #[test]
    fn mixed_target_presence_rejected() {
        let text = FIVE.replace("2 0 0 0 0 1 1 0 0 0.2", "2 0 0 0 0 1");
        assert!(parse_case(&text, Path::new("x")).is_err());
    }

    #[test]
    fn format_then_parse_is_exact() {
        let c = parse_case(FIVE, Path::new("x")).unwrap();
        let mut c2 = c.clone();
        c2.points[2].x = 0.1 + 0.2;
        let back = parse_case(&format_case(&c2), Path::new("x")).unwrap();
        assert_eq!(back, c2);
    }
}
