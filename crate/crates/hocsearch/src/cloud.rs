//! Point clouds as `x y z` text lines.

use std::fmt::Write as _;
use std::path::Path;

use hoc_core::{Point3, PointCloud};

use crate::error::{self, FormatError, Result};

pub fn to_string(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 48);
    for p in cloud.iter() {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    out
}

pub fn parse(path: &Path, text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let here = offset;
        offset += line.len();
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut xyz = [0.0; 3];
        let mut tokens = body.split_whitespace();
        for c in &mut xyz {
            let tok = tokens.next().ok_or_else(|| FormatError::parse(path, here, "expected 3 coordinates"))?;
            *c = tok.parse().map_err(|_| FormatError::parse(path, here, format!("bad coordinate '{tok}'")))?;
        }
        points.push(Point3::new(xyz[0], xyz[1], xyz[2]));
    }
    PointCloud::try_new(points).map_err(|e| FormatError::invalid(path, e))
}

pub fn read(path: &Path) -> Result<PointCloud> {
    parse(path, &error::read_text(path)?)
}

pub fn write(path: &Path, cloud: &PointCloud) -> Result<()> {
    error::write(path, to_string(cloud).as_bytes())
}
