//! Planar polygon geometry for the regions of a partition.
//!
//! Coordinates are projected metres; no geodesic math happens here.

mod geojson;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdaError};

pub use geojson::{load_partition, load_partition_file, parse_partition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point { x, y }
    }
}

/// Axis-aligned rectangle `[min_x, max_x] × [min_y, max_y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BBox {
    pub fn empty() -> Self {
        BBox {
            min_x: f64::INFINITY,
            min_y: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            max_y: f64::NEG_INFINITY,
        }
    }

    pub fn of_points<'a>(pts: impl IntoIterator<Item = &'a Point>) -> Self {
        let mut b = BBox::empty();
        for p in pts {
            b.expand(*p);
        }
        b
    }

    pub fn expand(&mut self, p: Point) {
        self.min_x = self.min_x.min(p.x);
        self.min_y = self.min_y.min(p.y);
        self.max_x = self.max_x.max(p.x);
        self.max_y = self.max_y.max(p.y);
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            min_x: self.min_x.min(other.min_x),
            min_y: self.min_y.min(other.min_y),
            max_x: self.max_x.max(other.max_x),
            max_y: self.max_y.max(other.max_y),
        }
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.min_x <= other.max_x
            && other.min_x <= self.max_x
            && self.min_y <= other.max_y
            && other.min_y <= self.max_y
    }
}

/// One polygon: an exterior ring plus optional holes. Rings are stored open
/// (the closing vertex is not repeated).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub exterior: Vec<Point>,
    pub holes: Vec<Vec<Point>>,
}

impl Polygon {
    pub fn new(exterior: Vec<Point>, holes: Vec<Vec<Point>>) -> Self {
        Polygon {
            exterior: open_ring(exterior),
            holes: holes.into_iter().map(open_ring).collect(),
        }
    }

    pub fn area(&self) -> f64 {
        ring_signed_area(&self.exterior).abs()
            - self
                .holes
                .iter()
                .map(|h| ring_signed_area(h).abs())
                .sum::<f64>()
    }

    pub fn contains(&self, p: Point) -> bool {
        match ring_locate(&self.exterior, p) {
            RingLocation::Outside => false,
            RingLocation::Boundary => true,
            RingLocation::Inside => !self
                .holes
                .iter()
                .any(|h| ring_locate(h, p) == RingLocation::Inside),
        }
    }

    fn strictly_contains(&self, p: Point) -> bool {
        ring_locate(&self.exterior, p) == RingLocation::Inside
            && self
                .holes
                .iter()
                .all(|h| ring_locate(h, p) == RingLocation::Outside)
    }
}

/// A region of the partition: an id and one or more polygon parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    id: String,
    parts: Vec<Polygon>,
    bbox: BBox,
}

impl Region {
    /// Builds and validates a region. Rings may be given open or closed.
    pub fn new(id: impl Into<String>, parts: Vec<Polygon>) -> Result<Self> {
        let id = id.into();
        let invalid = |reason: String| SdaError::InvalidGeometry {
            region: id.clone(),
            reason,
        };
        if parts.is_empty() {
            return Err(invalid("region has no polygons".into()));
        }
        for (pi, part) in parts.iter().enumerate() {
            for (ri, ring) in std::iter::once(&part.exterior)
                .chain(part.holes.iter())
                .enumerate()
            {
                if ring.len() < 3 {
                    return Err(invalid(format!(
                        "part {pi} ring {ri} has {} distinct vertices (need >= 3)",
                        ring.len()
                    )));
                }
                if ring.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
                    return Err(invalid(format!("part {pi} ring {ri} has non-finite coordinates")));
                }
                if let Some((a, b)) = self_intersection(ring) {
                    return Err(invalid(format!(
                        "part {pi} ring {ri} self-intersects (edges {a} and {b})"
                    )));
                }
            }
            for (hi, hole) in part.holes.iter().enumerate() {
                if hole
                    .iter()
                    .any(|&v| ring_locate(&part.exterior, v) == RingLocation::Outside)
                {
                    return Err(invalid(format!("part {pi} hole {hi} is not inside the outer ring")));
                }
            }
            if !(part.area() > 0.0) {
                return Err(invalid(format!("part {pi} has non-positive area")));
            }
        }
        let bbox = parts
            .iter()
            .map(|p| BBox::of_points(&p.exterior))
            .fold(BBox::empty(), |a, b| a.union(&b));
        Ok(Region { id, parts, bbox })
    }

    /// Convenience constructor for a single polygon without holes.
    pub fn simple(id: impl Into<String>, ring: Vec<Point>) -> Result<Self> {
        Region::new(id, vec![Polygon::new(ring, Vec::new())])
    }

    /// Axis-aligned rectangle region.
    pub fn rect(id: impl Into<String>, min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self> {
        Region::simple(
            id,
            vec![
                Point::new(min_x, min_y),
                Point::new(max_x, min_y),
                Point::new(max_x, max_y),
                Point::new(min_x, max_y),
            ],
        )
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn parts(&self) -> &[Polygon] {
        &self.parts
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    /// Closed-set containment: boundary points count as inside, points on a
    /// hole's boundary too; only points strictly inside a hole are excluded.
    pub fn contains(&self, p: Point) -> bool {
        self.bbox.contains(p) && self.parts.iter().any(|part| part.contains(p))
    }

    /// Interior containment (boundary excluded). Used for the overlap check.
    pub fn strictly_contains(&self, p: Point) -> bool {
        self.bbox.contains(p) && self.parts.iter().any(|part| part.strictly_contains(p))
    }

    /// Shoelace area of all parts, holes subtracted.
    pub fn area(&self) -> f64 {
        self.parts.iter().map(Polygon::area).sum()
    }

    /// Translated copy.
    pub fn translated(&self, dx: f64, dy: f64) -> Region {
        let shift = |r: &Vec<Point>| r.iter().map(|p| Point::new(p.x + dx, p.y + dy)).collect();
        let parts = self
            .parts
            .iter()
            .map(|p| Polygon {
                exterior: shift(&p.exterior),
                holes: p.holes.iter().map(shift).collect(),
            })
            .collect();
        Region {
            id: self.id.clone(),
            parts,
            bbox: BBox {
                min_x: self.bbox.min_x + dx,
                min_y: self.bbox.min_y + dy,
                max_x: self.bbox.max_x + dx,
                max_y: self.bbox.max_y + dy,
            },
        }
    }
}

/// Containment test on a raw ring, for callers holding unvalidated geometry.
pub fn contains(ring: &[Point], p: Point) -> Result<bool> {
    let ring = open_ring(ring.to_vec());
    if ring.len() < 3 {
        return Err(SdaError::InvalidGeometry {
            region: "<ring>".into(),
            reason: format!("ring has {} distinct vertices (need >= 3)", ring.len()),
        });
    }
    Ok(ring_locate(&ring, p) != RingLocation::Outside)
}

/// Area of a raw ring (absolute shoelace value).
pub fn area(ring: &[Point]) -> Result<f64> {
    let ring = open_ring(ring.to_vec());
    let a = ring_signed_area(&ring).abs();
    if ring.len() < 3 || !(a > 0.0) {
        return Err(SdaError::InvalidGeometry {
            region: "<ring>".into(),
            reason: format!("non-positive area {a}"),
        });
    }
    Ok(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RingLocation {
    Inside,
    Boundary,
    Outside,
}

fn open_ring(mut ring: Vec<Point>) -> Vec<Point> {
    while ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    ring
}

fn ring_signed_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    0.5 * s
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    let scale = (b.x - a.x).abs().max((b.y - a.y).abs()).max(1.0);
    cross(a, b, p).abs() <= 1e-12 * scale * scale
        && p.x >= a.x.min(b.x)
        && p.x <= a.x.max(b.x)
        && p.y >= a.y.min(b.y)
        && p.y <= a.y.max(b.y)
}

/// Even-odd ray casting with an explicit boundary check.
fn ring_locate(ring: &[Point], p: Point) -> RingLocation {
    let n = ring.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if on_segment(a, b, p) {
            return RingLocation::Boundary;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    if inside {
        RingLocation::Inside
    } else {
        RingLocation::Outside
    }
}

fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    on_segment(q1, q2, p1) || on_segment(q1, q2, p2) || on_segment(p1, p2, q1) || on_segment(p1, p2, q2)
}

/// First pair of edges that touch or cross anywhere other than a shared vertex.
fn self_intersection(ring: &[Point]) -> Option<(usize, usize)> {
    let n = ring.len();
    for i in 0..n {
        let (a1, a2) = (ring[i], ring[(i + 1) % n]);
        if a1 == a2 {
            return Some((i, i));
        }
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            let (b1, b2) = (ring[j], ring[(j + 1) % n]);
            if adjacent {
                // adjacent edges may only share their common vertex
                let (far_a, far_b) = if j == i + 1 { (a1, b2) } else { (a2, b1) };
                if on_segment(a1, a2, far_b) || on_segment(b1, b2, far_a) {
                    return Some((i, j));
                }
                continue;
            }
            if segments_intersect(a1, a2, b1, b2) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Options for building a [`Partition`].
#[derive(Debug, Clone, Copy)]
pub struct PartitionOptions {
    /// Run the sampled-point interior overlap check.
    pub check_overlap: bool,
    /// Probe points per axis per region for the overlap check.
    pub overlap_probes: usize,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        PartitionOptions {
            check_overlap: true,
            overlap_probes: 8,
        }
    }
}

/// An ordered collection of regions with unique ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    regions: Vec<Region>,
    bbox: BBox,
}

impl Partition {
    pub fn new(regions: Vec<Region>) -> Result<Self> {
        Partition::with_options(regions, PartitionOptions::default())
    }

    pub fn with_options(regions: Vec<Region>, opts: PartitionOptions) -> Result<Self> {
        if regions.is_empty() {
            return Err(SdaError::Config("partition has no regions".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for r in &regions {
            if !seen.insert(r.id()) {
                return Err(SdaError::InvalidGeometry {
                    region: r.id().to_string(),
                    reason: "duplicate region id".into(),
                });
            }
        }
        if opts.check_overlap {
            check_overlap(&regions, opts.overlap_probes)?;
        }
        let bbox = regions
            .iter()
            .map(Region::bbox)
            .fold(BBox::empty(), |a, b| a.union(&b));
        Ok(Partition { regions, bbox })
    }

    /// Regular `nx × ny` partition of square cells, ids `r{row}_{col}` in row-major order.
    pub fn grid(origin: Point, cell: f64, nx: usize, ny: usize) -> Result<Self> {
        let mut regions = Vec::with_capacity(nx * ny);
        for row in 0..ny {
            for col in 0..nx {
                let x0 = origin.x + col as f64 * cell;
                let y0 = origin.y + row as f64 * cell;
                regions.push(Region::rect(format!("r{row}_{col}"), x0, y0, x0 + cell, y0 + cell)?);
            }
        }
        Partition::with_options(
            regions,
            PartitionOptions {
                check_overlap: false,
                ..Default::default()
            },
        )
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn study_area_bbox(&self) -> BBox {
        self.bbox
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.regions.iter().position(|r| r.id() == id)
    }

    /// Index of the first listed region containing `p`.
    pub fn locate(&self, p: Point) -> Option<usize> {
        self.regions.iter().position(|r| r.contains(p))
    }

    pub fn total_area(&self) -> f64 {
        self.regions.iter().map(Region::area).sum()
    }
}

fn check_overlap(regions: &[Region], probes: usize) -> Result<()> {
    let probes = probes.max(1);
    for (i, r) in regions.iter().enumerate() {
        let b = r.bbox();
        for a in 0..probes {
            for c in 0..probes {
                let p = Point::new(
                    b.min_x + (a as f64 + 0.5) / probes as f64 * b.width(),
                    b.min_y + (c as f64 + 0.5) / probes as f64 * b.height(),
                );
                if !r.strictly_contains(p) {
                    continue;
                }
                for (j, other) in regions.iter().enumerate() {
                    if j != i && other.bbox().intersects(&b) && other.strictly_contains(p) {
                        return Err(SdaError::InvalidGeometry {
                            region: r.id().to_string(),
                            reason: format!("interior overlaps region `{}`", other.id()),
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Point> {
        v.iter().map(|&p| p.into()).collect()
    }

    fn unit_square() -> Vec<Point> {
        pts(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])
    }

    fn l_shape() -> Vec<Point> {
        pts(&[(0., 0.), (2., 0.), (2., 1.), (1., 1.), (1., 2.), (0., 2.)])
    }

    #[test]
    fn contains_examples() {
        let sq = unit_square();
        assert!(contains(&sq, Point::new(0.5, 0.5)).unwrap());
        assert!(!contains(&sq, Point::new(2.0, 2.0)).unwrap());
        assert!(!contains(&l_shape(), Point::new(1.5, 1.5)).unwrap());
        assert!(contains(&l_shape(), Point::new(0.5, 1.5)).unwrap());
        assert!(contains(&l_shape(), Point::new(1.5, 0.5)).unwrap());
    }

    #[test]
    fn boundary_counts_as_inside() {
        let r = Region::simple("a", unit_square()).unwrap();
        assert!(r.contains(Point::new(0.0, 0.5)));
        assert!(r.contains(Point::new(1.0, 1.0)));
        assert!(r.contains(Point::new(0.5, 0.0)));
        assert!(!r.strictly_contains(Point::new(0.5, 0.0)));
    }

    #[test]
    fn degenerate_ring_is_rejected() {
        let two = pts(&[(0.0, 0.0), (1.0, 0.0)]);
        assert!(matches!(contains(&two, Point::new(0.0, 0.0)), Err(SdaError::InvalidGeometry { .. })));
        assert!(Region::simple("x", two).is_err());
    }

    #[test]
    fn area_examples() {
        assert_eq!(area(&unit_square()).unwrap(), 1.0);
        assert_eq!(area(&pts(&[(0., 0.), (1., 0.), (0., 1.)])).unwrap(), 0.5);
        let hole = pts(&[(0.25, 0.25), (0.75, 0.25), (0.75, 0.75), (0.25, 0.75)]);
        let r = Region::new("h", vec![Polygon::new(unit_square(), vec![hole])]).unwrap();
        assert!((r.area() - 0.75).abs() < 1e-15);
        assert!(!r.contains(Point::new(0.5, 0.5)));
        // hole boundary belongs to the region
        assert!(r.contains(Point::new(0.25, 0.5)));
        assert!(r.contains(Point::new(0.1, 0.1)));
    }

    #[test]
    fn closed_input_rings_are_normalized() {
        let mut ring = unit_square();
        ring.push(ring[0]);
        let r = Region::simple("c", ring).unwrap();
        assert_eq!(r.parts()[0].exterior.len(), 4);
        assert_eq!(r.area(), 1.0);
    }

    #[test]
    fn self_intersection_is_rejected() {
        let bowtie = pts(&[(0., 0.), (1., 1.), (1., 0.), (0., 1.)]);
        let err = Region::simple("bow", bowtie).unwrap_err();
        assert!(err.to_string().contains("self-intersects"), "{err}");
    }

    #[test]
    fn hole_outside_is_rejected() {
        let hole = pts(&[(2., 2.), (3., 2.), (3., 3.)]);
        assert!(Region::new("h", vec![Polygon::new(unit_square(), vec![hole])]).is_err());
    }

    #[test]
    fn partition_rules() {
        let a = Region::rect("A", 0., 0., 1., 1.).unwrap();
        let b = Region::rect("B", 1., 0., 2., 1.).unwrap();
        let p = Partition::new(vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(p.len(), 2);
        // shared edge goes to the first listed region
        assert_eq!(p.locate(Point::new(1.0, 0.5)), Some(0));
        assert_eq!(p.locate(Point::new(1.5, 0.5)), Some(1));
        assert_eq!(p.locate(Point::new(5.0, 0.5)), None);

        let dup = Region::rect("A", 3., 0., 4., 1.).unwrap();
        assert!(Partition::new(vec![a.clone(), dup]).is_err());

        let overlapping = Region::rect("C", 0.5, 0., 1.5, 1.).unwrap();
        assert!(Partition::new(vec![a.clone(), overlapping.clone()]).is_err());
        let off = PartitionOptions {
            check_overlap: false,
            ..Default::default()
        };
        assert!(Partition::with_options(vec![a, overlapping], off).is_ok());
    }

    #[test]
    fn grid_partition_tiles_the_bbox() {
        let p = Partition::grid(Point::new(0., 0.), 10., 3, 2).unwrap();
        assert_eq!(p.len(), 6);
        assert_eq!(p.regions()[4].id(), "r1_1");
        assert!((p.total_area() - p.study_area_bbox().area()).abs() < 1e-9);
    }

    fn convex_poly(cx: f64, cy: f64, r: f64, k: usize) -> Vec<Point> {
        (0..k)
            .map(|i| {
                let t = i as f64 / k as f64 * std::f64::consts::TAU;
                Point::new(cx + r * t.cos(), cy + r * t.sin())
            })
            .collect()
    }

    proptest! {
        #[test]
        fn contains_translation_invariant(
            px in -3.0f64..3.0, py in -3.0f64..3.0,
            dx in -1e3f64..1e3, dy in -1e3f64..1e3,
        ) {
            let r = Region::simple("l", l_shape()).unwrap();
            let p = Point::new(px, py);
            // avoid points within rounding distance of an edge
            let near_edge = [0.0, 1.0, 2.0].iter().any(|e| (px - e).abs() < 1e-6 || (py - e).abs() < 1e-6);
            prop_assume!(!near_edge);
            prop_assert_eq!(r.contains(p), r.translated(dx, dy).contains(Point::new(px + dx, py + dy)));
        }

        #[test]
        fn area_invariances(
            r in 0.1f64..10.0, k in 3usize..12, c in 0.1f64..5.0,
            dx in -100.0f64..100.0, dy in -100.0f64..100.0,
        ) {
            let ring = convex_poly(1.0, 2.0, r, k);
            let a = area(&ring).unwrap();
            let mut rev = ring.clone();
            rev.reverse();
            prop_assert!((area(&rev).unwrap() - a).abs() <= 1e-9 * a);
            let moved: Vec<Point> = ring.iter().map(|p| Point::new(p.x + dx, p.y + dy)).collect();
            prop_assert!((area(&moved).unwrap() - a).abs() <= 1e-9 * a.max(1.0));
            let scaled: Vec<Point> = ring.iter().map(|p| Point::new(p.x * c, p.y * c)).collect();
            prop_assert!((area(&scaled).unwrap() - c * c * a).abs() <= 1e-9 * c * c * a);
        }

        #[test]
        fn grid_area_bounded_by_bbox(nx in 1usize..6, ny in 1usize..6, cell in 1.0f64..100.0) {
            let p = Partition::grid(Point::new(-5.0, 7.0), cell, nx, ny).unwrap();
            prop_assert!(p.total_area() <= p.study_area_bbox().area() * (1.0 + 1e-12));
        }
    }
}
