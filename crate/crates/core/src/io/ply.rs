//! ASCII PLY with `x y z` and an optional integer `part_id` per vertex.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::geom::{Point3, PointCloud};

pub const PLY_COMMENT: &str = "comment partreg v1";

/// Reals use the shortest representation that parses back to the same bits.
pub fn write_ply(cloud: &PointCloud, mut out: impl Write) -> Result<()> {
    writeln!(out, "ply")?;
    writeln!(out, "format ascii 1.0")?;
    writeln!(out, "{PLY_COMMENT}")?;
    writeln!(out, "element vertex {}", cloud.len())?;
    for axis in ["x", "y", "z"] {
        writeln!(out, "property double {axis}")?;
    }
    if cloud.part_ids.is_some() {
        writeln!(out, "property int part_id")?;
    }
    writeln!(out, "end_header")?;
    for (i, p) in cloud.points.iter().enumerate() {
        match cloud.part_id(i) {
            Some(id) => writeln!(out, "{} {} {} {}", p.x, p.y, p.z, id)?,
            None => writeln!(out, "{} {} {}", p.x, p.y, p.z)?,
        }
    }
    Ok(())
}

pub fn ply_string(cloud: &PointCloud) -> String {
    let mut buf = Vec::new();
    write_ply(cloud, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

#[derive(Clone, Copy, PartialEq)]
enum Column {
    X,
    Y,
    Z,
    PartId,
    Other,
}

const SCALAR_TYPES: [&str; 16] = [
    "char", "uchar", "short", "ushort", "int", "uint", "float", "double", "int8", "uint8", "int16", "uint16",
    "int32", "uint32", "float32", "float64",
];

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Reads an ASCII PLY vertex list. Errors carry 1-based line numbers.
pub fn read_ply(input: impl BufRead) -> Result<PointCloud> {
    let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, Ok(l))) => Ok((n, l)),
            Some((n, Err(e))) => Err(parse_err(n, e.to_string())),
            None => Err(parse_err(0, format!("unexpected end of file, expected {what}"))),
        }
    };
    let (n, magic) = next("magic")?;
    if magic.trim() != "ply" {
        return Err(parse_err(n, "missing 'ply' magic"));
    }
    let mut count: Option<usize> = None;
    let mut in_vertex = false;
    let mut columns: Vec<Column> = Vec::new();
    loop {
        let (n, line) = next("end_header")?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => {}
            ["format", other, ..] => return Err(parse_err(n, format!("unsupported format {other}"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, c] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    count = Some(c.parse().map_err(|_| parse_err(n, format!("bad vertex count {c:?}")))?);
                } else if c.parse::<usize>().map_err(|_| parse_err(n, "bad element count"))? > 0 {
                    return Err(parse_err(n, format!("unsupported element {name}")));
                }
            }
            ["property", "list", ..] if in_vertex => return Err(parse_err(n, "list properties are not supported")),
            ["property", ty, name] if in_vertex => {
                if !SCALAR_TYPES.contains(ty) {
                    return Err(parse_err(n, format!("unknown property type {ty}")));
                }
                columns.push(match *name {
                    "x" => Column::X,
                    "y" => Column::Y,
                    "z" => Column::Z,
                    "part_id" => Column::PartId,
                    _ => Column::Other,
                });
            }
            ["property", ..] => {}
            _ => return Err(parse_err(n, format!("unexpected header line {line:?}"))),
        }
    }
    let count = count.ok_or_else(|| parse_err(0, "no vertex element"))?;
    for c in [Column::X, Column::Y, Column::Z] {
        if !columns.contains(&c) {
            return Err(parse_err(0, "vertex element lacks x, y or z"));
        }
    }
    let labelled = columns.contains(&Column::PartId);
    let mut points = Vec::with_capacity(count);
    let mut ids = Vec::with_capacity(if labelled { count } else { 0 });
    for _ in 0..count {
        let (n, line) = next("vertex")?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != columns.len() {
            return Err(parse_err(n, format!("expected {} values, found {}", columns.len(), tokens.len())));
        }
        let mut p = [0.0; 3];
        for (col, tok) in columns.iter().zip(&tokens) {
            let real = || -> Result<f64> {
                let v: f64 = tok.parse().map_err(|_| parse_err(n, format!("bad number {tok:?}")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_err(n, format!("non-finite value {tok:?}")))
                }
            };
            match col {
                Column::X => p[0] = real()?,
                Column::Y => p[1] = real()?,
                Column::Z => p[2] = real()?,
                Column::PartId => ids.push(tok.parse::<u32>().map_err(|_| parse_err(n, format!("bad part id {tok:?}")))?),
                Column::Other => {}
            }
        }
        points.push(Point3::new(p[0], p[1], p[2]));
    }
    for (n, line) in lines {
        match line {
            Ok(l) if l.trim().is_empty() => {}
            Ok(_) => return Err(parse_err(n, "data after the last vertex")),
            Err(e) => return Err(parse_err(n, e.to_string())),
        }
    }
    if labelled {
        PointCloud::with_part_ids(points, ids)
    } else {
        Ok(PointCloud::new(points))
    }
}

pub fn parse_ply(text: &str) -> Result<PointCloud> {
    read_ply(text.as_bytes())
}
