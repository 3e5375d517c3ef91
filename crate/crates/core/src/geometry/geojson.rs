//! GeoJSON ingestion: a FeatureCollection of Polygon/MultiPolygon features,
//! coordinates already projected to metres, ids from the `id` property.

use std::path::Path;

use serde_json::Value;

use super::{Partition, PartitionOptions, Point, Polygon, Region};
use crate::error::{Result, SdaError};

pub fn load_partition(source: &str) -> Result<Partition> {
    parse_partition(source, PartitionOptions::default())
}

pub fn load_partition_file(path: &Path, opts: PartitionOptions) -> Result<Partition> {
    let text = std::fs::read_to_string(path).map_err(|e| SdaError::io(path, e))?;
    parse_partition(&text, opts)
}

pub fn parse_partition(source: &str, opts: PartitionOptions) -> Result<Partition> {
    let doc: Value =
        serde_json::from_str(source).map_err(|e| SdaError::parse("GeoJSON", e.to_string()))?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(SdaError::parse("GeoJSON", "top-level object is not a FeatureCollection"));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| SdaError::parse("GeoJSON", "missing `features` array"))?;

    let mut regions = Vec::with_capacity(features.len());
    for (idx, feature) in features.iter().enumerate() {
        regions.push(parse_feature(idx, feature)?);
    }
    Partition::with_options(regions, opts).map_err(|e| match e {
        SdaError::InvalidGeometry { region, reason } => {
            SdaError::parse(format!("feature `{region}`"), reason)
        }
        other => other,
    })
}

fn parse_feature(idx: usize, feature: &Value) -> Result<Region> {
    let id = match feature.get("properties").and_then(|p| p.get("id")) {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => {
            return Err(SdaError::parse(
                format!("feature #{idx}"),
                "missing `id` property",
            ))
        }
    };
    let ctx = format!("feature `{id}`");
    let geometry = feature
        .get("geometry")
        .ok_or_else(|| SdaError::parse(&ctx, "missing geometry"))?;
    let coords = geometry
        .get("coordinates")
        .ok_or_else(|| SdaError::parse(&ctx, "geometry has no coordinates"))?;
    let parts = match geometry.get("type").and_then(Value::as_str) {
        Some("Polygon") => vec![parse_polygon(&ctx, coords)?],
        Some("MultiPolygon") => coords
            .as_array()
            .ok_or_else(|| SdaError::parse(&ctx, "MultiPolygon coordinates must be an array"))?
            .iter()
            .map(|poly| parse_polygon(&ctx, poly))
            .collect::<Result<Vec<_>>>()?,
        Some(other) => {
            return Err(SdaError::parse(&ctx, format!("unsupported geometry type `{other}`")))
        }
        None => return Err(SdaError::parse(&ctx, "geometry has no type")),
    };
    Region::new(id.clone(), parts).map_err(|e| match e {
        SdaError::InvalidGeometry { reason, .. } => SdaError::parse(&ctx, reason),
        other => other,
    })
}

fn parse_polygon(ctx: &str, value: &Value) -> Result<Polygon> {
    let rings = value
        .as_array()
        .ok_or_else(|| SdaError::parse(ctx, "polygon coordinates must be an array of rings"))?;
    if rings.is_empty() {
        return Err(SdaError::parse(ctx, "polygon has no rings"));
    }
    let mut parsed = rings
        .iter()
        .enumerate()
        .map(|(ri, r)| parse_ring(ctx, ri, r))
        .collect::<Result<Vec<_>>>()?;
    let exterior = parsed.remove(0);
    Ok(Polygon::new(exterior, parsed))
}

fn parse_ring(ctx: &str, ri: usize, value: &Value) -> Result<Vec<Point>> {
    let positions = value
        .as_array()
        .ok_or_else(|| SdaError::parse(ctx, format!("ring {ri} is not an array")))?;
    let mut ring = Vec::with_capacity(positions.len());
    for pos in positions {
        let xy = pos.as_array().filter(|a| a.len() >= 2);
        let (x, y) = match xy.map(|a| (a[0].as_f64(), a[1].as_f64())) {
            Some((Some(x), Some(y))) => (x, y),
            _ => return Err(SdaError::parse(ctx, format!("ring {ri} has a malformed position"))),
        };
        ring.push(Point::new(x, y));
    }
    if ring.len() < 4 {
        return Err(SdaError::parse(
            ctx,
            format!("ring {ri} has {} positions (a closed ring needs >= 4)", ring.len()),
        ));
    }
    if ring.first() != ring.last() {
        return Err(SdaError::parse(ctx, format!("ring {ri} is not closed")));
    }
    Ok(ring)
}
