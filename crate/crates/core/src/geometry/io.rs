use std::io::Write;
use std::path::Path;

use super::mask::ElementMask;
use super::polygon::{Point, Polygon};
use crate::error::{Error, Result};

/// Parses polygons from text: one `x y` vertex per line, polygons separated
/// by blank lines, `#` starts a comment.
pub fn parse_polygons(text: &str, source: &str) -> Result<Vec<Polygon>> {
    let mut polygons = Vec::new();
    let mut current: Vec<Point> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if raw.trim().is_empty() {
            if !current.is_empty() {
                polygons.push(Polygon::new(std::mem::take(&mut current))?);
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let coords: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(format!("{source}:{}", lineno + 1), e.to_string()))?;
        if coords.len() != 2 {
            return Err(Error::parse(
                format!("{source}:{}", lineno + 1),
                format!("expected `x y`, got {} numbers", coords.len()),
            ));
        }
        current.push(Point::new(coords[0], coords[1]));
    }
    if !current.is_empty() {
        polygons.push(Polygon::new(current)?);
    }
    Ok(polygons)
}

pub fn read_polygons(path: &Path) -> Result<Vec<Polygon>> {
    let text = std::fs::read_to_string(path)?;
    parse_polygons(&text, &path.display().to_string())
}

/// Writes `element_id,flag` rows.
pub fn write_mask_csv<W: Write>(mask: &ElementMask, mut out: W) -> Result<()> {
    writeln!(out, "element_id,flag")?;
    for (e, f) in mask.flags().iter().enumerate() {
        writeln!(out, "{e},{}", u8::from(*f))?;
    }
    Ok(())
}
