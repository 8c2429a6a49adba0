//! ASCII point-cloud formats: OFF, PLY (ascii, vertex element only) and XYZ rows.
//!
//! Faces and any element other than `vertex` are ignored on read and never
//! written. Floats are written in shortest round-trip form.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::cloud::{Point, PointCloud};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Off,
    PlyAscii,
    Xyz,
}

impl CloudFormat {
    /// Guesses the format from a file extension (`off`, `ply`, `xyz`/`txt`/`pts`).
    pub fn from_path(path: impl AsRef<Path>) -> Option<Self> {
        let ext = path.as_ref().extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "off" => Some(Self::Off),
            "ply" => Some(Self::PlyAscii),
            "xyz" | "txt" | "pts" => Some(Self::Xyz),
            _ => None,
        }
    }
}

impl FromStr for CloudFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "off" => Ok(Self::Off),
            "ply" | "ply-ascii" => Ok(Self::PlyAscii),
            "xyz" => Ok(Self::Xyz),
            other => Err(Error::InvalidInput(format!("unknown cloud format '{other}'"))),
        }
    }
}

pub fn load_cloud(path: impl AsRef<Path>, format: CloudFormat) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cloud(&text, format)
}

/// Loads a cloud, picking the format from the file extension.
pub fn load_cloud_auto(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let format = CloudFormat::from_path(path)
        .ok_or_else(|| Error::InvalidInput(format!("cannot infer cloud format of {}", path.display())))?;
    load_cloud(path, format)
}

pub fn save_cloud(cloud: &PointCloud, path: impl AsRef<Path>, format: CloudFormat) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_cloud(cloud, format)).map_err(|e| Error::io(path, e))
}

pub fn parse_cloud(text: &str, format: CloudFormat) -> Result<PointCloud> {
    match format {
        CloudFormat::Off => parse_off(text),
        CloudFormat::PlyAscii => parse_ply(text),
        CloudFormat::Xyz => parse_xyz(text),
    }
}

pub fn format_cloud(cloud: &PointCloud, format: CloudFormat) -> String {
    let mut out = String::new();
    match format {
        CloudFormat::Off => {
            let _ = writeln!(out, "OFF\n{} 0 0", cloud.len());
            for p in cloud.coords() {
                let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
            }
        }
        CloudFormat::PlyAscii => {
            let normals = cloud.aux_width() == 3;
            let _ = writeln!(out, "ply\nformat ascii 1.0\nelement vertex {}", cloud.len());
            out.push_str("property double x\nproperty double y\nproperty double z\n");
            if normals {
                out.push_str("property double nx\nproperty double ny\nproperty double nz\n");
            }
            out.push_str("end_header\n");
            for (i, p) in cloud.coords().iter().enumerate() {
                let _ = write!(out, "{} {} {}", p.x, p.y, p.z);
                if normals {
                    for v in cloud.aux_row(i).unwrap_or_default() {
                        let _ = write!(out, " {v}");
                    }
                }
                out.push('\n');
            }
        }
        CloudFormat::Xyz => {
            for (i, p) in cloud.coords().iter().enumerate() {
                let _ = write!(out, "{} {} {}", p.x, p.y, p.z);
                for v in cloud.aux_row(i).unwrap_or_default() {
                    let _ = write!(out, " {v}");
                }
                out.push('\n');
            }
        }
    }
    out
}

/// Non-blank, non-comment lines with their 1-based line numbers.
fn content_lines<'a>(text: &'a str, comment: &'a str) -> impl Iterator<Item = (usize, &'a str)> + 'a {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(move |(_, l)| !l.is_empty() && !l.starts_with(comment))
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(line, format!("non-numeric token '{tok}'")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite value '{tok}'")));
    }
    Ok(v)
}

fn parse_count(tok: &str, line: usize) -> Result<usize> {
    tok.parse()
        .map_err(|_| Error::parse(line, format!("expected a count, found '{tok}'")))
}

fn parse_off(text: &str) -> Result<PointCloud> {
    let mut lines = content_lines(text, "#");
    let (hline, header) = lines.next().ok_or_else(|| Error::parse(1, "empty OFF file"))?;
    let rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| Error::parse(hline, "missing OFF header"))?
        .trim();
    // Some exporters glue the counts onto the header line ("OFF1024 0 0").
    let (cline, counts) = if rest.is_empty() {
        lines
            .next()
            .ok_or_else(|| Error::parse(hline + 1, "missing vertex/face counts"))?
    } else {
        (hline, rest)
    };
    let nv = parse_count(
        counts
            .split_whitespace()
            .next()
            .ok_or_else(|| Error::parse(cline, "missing vertex count"))?,
        cline,
    )?;
    let mut coords = Vec::with_capacity(nv);
    let mut last_line = cline;
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| Error::parse(last_line + 1, format!("expected {nv} vertices, found {}", coords.len())))?;
        last_line = ln;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(Error::parse(ln, "vertex line needs 3 coordinates"));
        }
        coords.push(Point::new(
            parse_f64(toks[0], ln)?,
            parse_f64(toks[1], ln)?,
            parse_f64(toks[2], ln)?,
        ));
    }
    PointCloud::new(coords)
}

fn parse_ply(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        Some((ln, _)) => return Err(Error::parse(ln, "missing 'ply' magic")),
        None => return Err(Error::parse(1, "empty PLY file")),
    }

    // Header: find the vertex element and its property layout.
    let mut vertex_count = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    let mut elements_before_vertex = Vec::new();
    let mut header_end = None;
    for (ln, l) in lines.by_ref() {
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", _] => {}
            ["format", other, ..] => {
                return Err(Error::parse(ln, format!("unsupported PLY format '{other}'")));
            }
            ["element", name, count] => {
                let count = parse_count(count, ln)?;
                in_vertex = *name == "vertex";
                if in_vertex {
                    vertex_count = Some(count);
                } else if vertex_count.is_none() {
                    elements_before_vertex.push(count);
                }
            }
            ["property", "list", ..] => {
                if in_vertex {
                    return Err(Error::parse(ln, "list properties on vertices are not supported"));
                }
            }
            ["property", _ty, name] => {
                if in_vertex {
                    props.push((*name).to_string());
                }
            }
            ["end_header"] => {
                header_end = Some(ln);
                break;
            }
            _ => return Err(Error::parse(ln, format!("malformed header line '{l}'"))),
        }
    }
    let header_end = header_end.ok_or_else(|| Error::parse(text.lines().count(), "missing end_header"))?;
    let n = vertex_count.ok_or_else(|| Error::parse(header_end, "no vertex element"))?;
    if !elements_before_vertex.is_empty() {
        return Err(Error::parse(header_end, "vertex element must come first"));
    }

    let find = |name: &str| props.iter().position(|p| p == name);
    let (xi, yi, zi) = match (find("x"), find("y"), find("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(Error::parse(header_end, "vertex element lacks x/y/z properties")),
    };
    let normals = match (find("nx"), find("ny"), find("nz")) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        _ => None,
    };

    let mut coords = Vec::with_capacity(n);
    let mut aux = Vec::new();
    let mut last_line = header_end;
    let mut body = lines.filter(|(_, l)| !l.is_empty());
    for _ in 0..n {
        let (ln, l) = body
            .next()
            .ok_or_else(|| Error::parse(last_line + 1, format!("expected {n} vertices, found {}", coords.len())))?;
        last_line = ln;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != props.len() {
            return Err(Error::parse(
                ln,
                format!("expected {} values per vertex, found {}", props.len(), toks.len()),
            ));
        }
        coords.push(Point::new(
            parse_f64(toks[xi], ln)?,
            parse_f64(toks[yi], ln)?,
            parse_f64(toks[zi], ln)?,
        ));
        if let Some(idx) = normals {
            for i in idx {
                aux.push(parse_f64(toks[i], ln)?);
            }
        }
    }
    let cloud = PointCloud::new(coords)?;
    if normals.is_some() {
        cloud.with_aux(3, aux)
    } else {
        Ok(cloud)
    }
}

fn parse_xyz(text: &str) -> Result<PointCloud> {
    let mut coords = Vec::new();
    let mut aux = Vec::new();
    let mut width = None;
    for (ln, l) in content_lines(text, "#") {
        let toks: Vec<&str> = l
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .collect();
        if toks.len() < 3 {
            return Err(Error::parse(ln, "row needs at least 3 columns"));
        }
        match width {
            None => width = Some(toks.len()),
            Some(w) if w != toks.len() => {
                return Err(Error::parse(ln, format!("expected {w} columns, found {}", toks.len())));
            }
            _ => {}
        }
        coords.push(Point::new(
            parse_f64(toks[0], ln)?,
            parse_f64(toks[1], ln)?,
            parse_f64(toks[2], ln)?,
        ));
        for t in &toks[3..] {
            aux.push(parse_f64(t, ln)?);
        }
    }
    if coords.is_empty() {
        return Err(Error::parse(1, "no points in xyz file"));
    }
    let cloud = PointCloud::new(coords)?;
    match width {
        Some(w) if w > 3 => cloud.with_aux(w - 3, aux),
        _ => Ok(cloud),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_of(err: Error) -> usize {
        match err {
            Error::Parse { line, .. } => line,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn off_basic_and_glued_header() {
        let c = parse_cloud("OFF\n3 0 0\n0 0 0\n1 0 0\n0 1 0\n", CloudFormat::Off).unwrap();
        assert_eq!(c.len(), 3);
        let c = parse_cloud("OFF2 1 0\n0 0 0\n1 2 3\n3 0 1 1\n", CloudFormat::Off).unwrap();
        assert_eq!(c.point(1), &Point::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn off_errors_name_lines() {
        assert_eq!(
            line_of(parse_cloud("OFF\n3 0 0\n0 0 0\n1 x 0\n", CloudFormat::Off).unwrap_err()),
            4
        );
        assert_eq!(
            line_of(parse_cloud("OFF\n3 0 0\n0 0 0\n", CloudFormat::Off).unwrap_err()),
            4
        );
        assert_eq!(line_of(parse_cloud("PLY\n", CloudFormat::Off).unwrap_err()), 1);
    }

    #[test]
    fn xyz_rows_and_aux() {
        let c = parse_cloud("0 0 0\n1 2 3\n", CloudFormat::Xyz).unwrap();
        assert_eq!(c.coords(), &[Point::zeros(), Point::new(1.0, 2.0, 3.0)]);
        assert_eq!(c.aux_width(), 0);
        let c = parse_cloud("0 0 0 9 8\n1 2 3 7 6\n", CloudFormat::Xyz).unwrap();
        assert_eq!(c.aux_row(1), Some(&[7.0, 6.0][..]));
        assert_eq!(line_of(parse_cloud("0 0 0\n1 2\n", CloudFormat::Xyz).unwrap_err()), 2);
        assert_eq!(
            line_of(parse_cloud("0 0 0\n1 2 3 4\n", CloudFormat::Xyz).unwrap_err()),
            2
        );
    }

    #[test]
    fn ply_errors() {
        let bad_count = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n";
        assert_eq!(line_of(parse_cloud(bad_count, CloudFormat::PlyAscii).unwrap_err()), 9);
        let binary = "ply\nformat binary_little_endian 1.0\nend_header\n";
        assert_eq!(line_of(parse_cloud(binary, CloudFormat::PlyAscii).unwrap_err()), 2);
    }

    #[test]
    fn format_round_trip() {
        let c = PointCloud::from_slice(&[[0.1, -2.5, 1.0 / 3.0], [1e-9, 4.0, 5.5]]).unwrap();
        for f in [CloudFormat::Off, CloudFormat::PlyAscii, CloudFormat::Xyz] {
            assert_eq!(parse_cloud(&format_cloud(&c, f), f).unwrap().coords(), c.coords());
        }
        let with_n = c.with_aux(3, vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        let back = parse_cloud(&format_cloud(&with_n, CloudFormat::PlyAscii), CloudFormat::PlyAscii).unwrap();
        assert_eq!(back, with_n);
    }

    #[test]
    fn format_from_path() {
        assert_eq!(CloudFormat::from_path("a/b.OFF"), Some(CloudFormat::Off));
        assert_eq!(CloudFormat::from_path("x.ply"), Some(CloudFormat::PlyAscii));
        assert_eq!(CloudFormat::from_path("x.bin"), None);
        assert_eq!("ply-ascii".parse::<CloudFormat>().unwrap(), CloudFormat::PlyAscii);
    }
}
