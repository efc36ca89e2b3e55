//! Windows, point patterns, base-station ingestion and region sampling.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neighbors::CellIndex;
use crate::rng;

/// Mean Earth radius used by the equirectangular projection, km.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Closed axis-aligned rectangle in planar km coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWindow")]
pub struct Window {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

#[derive(Deserialize)]
struct RawWindow {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl TryFrom<RawWindow> for Window {
    type Error = Error;

    fn try_from(raw: RawWindow) -> Result<Self> {
        Window::new(raw.x_min, raw.y_min, raw.x_max, raw.y_max)
    }
}

impl Window {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidWindow("non-finite bound".into()));
        }
        if !(x_max > x_min && y_max > y_min) {
            return Err(Error::InvalidWindow(format!(
                "empty extent [{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        Ok(Window {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Window `[0, width] x [0, height]`.
    pub fn with_size(width: f64, height: f64) -> Result<Self> {
        Window::new(0.0, 0.0, width, height)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn shorter_side(&self) -> f64 {
        self.width().min(self.height())
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    /// Extends every side by `d >= 0`.
    pub fn dilate(&self, d: f64) -> Result<Self> {
        if !(d >= 0.0) {
            return Err(Error::InvalidParameter(format!("dilation must be >= 0, got {d}")));
        }
        Window::new(self.x_min - d, self.y_min - d, self.x_max + d, self.y_max + d)
    }

    /// Pulls every side in by `d >= 0`; fails if nothing is left.
    pub fn erode(&self, d: f64) -> Result<Self> {
        if !(d >= 0.0) {
            return Err(Error::InvalidParameter(format!("erosion must be >= 0, got {d}")));
        }
        Window::new(self.x_min + d, self.y_min + d, self.x_max - d, self.y_max - d)
    }

    /// Intersection with positive area, if any.
    pub fn intersection(&self, other: &Window) -> Option<Window> {
        Window::new(
            self.x_min.max(other.x_min),
            self.y_min.max(other.y_min),
            self.x_max.min(other.x_max),
            self.y_max.min(other.y_max),
        )
        .ok()
    }

    pub fn contains_window(&self, other: &Window) -> bool {
        other.x_min >= self.x_min
            && other.y_min >= self.y_min
            && other.x_max <= self.x_max
            && other.y_max <= self.y_max
    }

    /// Area of `W ∩ (W + (dx, dy))`.
    pub fn translation_overlap(&self, dx: f64, dy: f64) -> f64 {
        (self.width() - dx.abs()).max(0.0) * (self.height() - dy.abs()).max(0.0)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Window::new(self.x_min * c, self.y_min * c, self.x_max * c, self.y_max * c)
    }

    /// Uniform location inside the window.
    pub fn uniform_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        Point {
            x: self.x_min + rng.random::<f64>() * self.width(),
            y: self.y_min + rng.random::<f64>() * self.height(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_sq(self, other: Point) -> f64 {
        let (dx, dy) = (self.x - other.x, self.y - other.y);
        dx * dx + dy * dy
    }
}

/// Functional BS type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mark {
    Macro,
    Micro,
}

impl Mark {
    pub fn as_str(self) -> &'static str {
        match self {
            Mark::Macro => "macro",
            Mark::Micro => "micro",
        }
    }
}

impl fmt::Display for Mark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "macro" => Ok(Mark::Macro),
            "micro" => Ok(Mark::Micro),
            other => Err(Error::InvalidParameter(format!("unknown kind {other:?}"))),
        }
    }
}

/// Finite set of points observed in a window, optionally marked.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointPattern {
    window: Window,
    points: Vec<Point>,
    marks: Option<Vec<Mark>>,
}

impl PointPattern {
    pub fn new(window: Window, points: Vec<Point>, marks: Option<Vec<Mark>>) -> Result<Self> {
        if let Some(m) = &marks {
            if m.len() != points.len() {
                return Err(Error::InvalidPattern(format!(
                    "{} marks for {} points",
                    m.len(),
                    points.len()
                )));
            }
        }
        for (i, p) in points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::InvalidPattern(format!("point {i} is not finite")));
            }
            if !window.contains(*p) {
                return Err(Error::InvalidPattern(format!(
                    "point {i} ({}, {}) lies outside the window",
                    p.x, p.y
                )));
            }
        }
        Ok(PointPattern {
            window,
            points,
            marks,
        })
    }

    pub fn unmarked(window: Window, points: Vec<Point>) -> Result<Self> {
        PointPattern::new(window, points, None)
    }

    pub fn empty(window: Window) -> Self {
        PointPattern {
            window,
            points: Vec::new(),
            marks: None,
        }
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn marks(&self) -> Option<&[Mark]> {
        self.marks.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Empirical intensity n / |W|.
    pub fn intensity(&self) -> f64 {
        self.len() as f64 / self.window.area()
    }

    /// Points carrying `mark`; empty if the pattern is unmarked.
    pub fn subset(&self, mark: Mark) -> PointPattern {
        let Some(marks) = &self.marks else {
            return PointPattern::empty(self.window);
        };
        let points = self
            .points
            .iter()
            .zip(marks)
            .filter(|(_, &m)| m == mark)
            .map(|(p, _)| *p)
            .collect::<Vec<_>>();
        let n = points.len();
        PointPattern {
            window: self.window,
            points,
            marks: Some(vec![mark; n]),
        }
    }

    pub fn count_mark(&self, mark: Mark) -> usize {
        self.marks
            .as_ref()
            .map_or(0, |m| m.iter().filter(|&&k| k == mark).count())
    }

    /// Scales coordinates and window about the origin.
    pub fn scaled(&self, c: f64) -> Result<PointPattern> {
        let window = self.window.scaled(c)?;
        let points = self.points.iter().map(|p| Point::new(p.x * c, p.y * c)).collect();
        PointPattern::new(window, points, self.marks.clone())
    }
}

/// One row of the base-station table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsRecord {
    pub id: String,
    pub longitude: f64,
    pub latitude: f64,
    pub kind: Mark,
}

impl BsRecord {
    pub fn new(id: impl Into<String>, longitude: f64, latitude: f64, kind: Mark) -> Result<Self> {
        if !(-90.0..=90.0).contains(&latitude) {
            return Err(Error::InvalidParameter(format!("latitude out of range: {latitude}")));
        }
        if !(-180.0..=180.0).contains(&longitude) {
            return Err(Error::InvalidParameter(format!("longitude out of range: {longitude}")));
        }
        Ok(BsRecord {
            id: id.into(),
            longitude,
            latitude,
            kind,
        })
    }
}

/// Reads `id,lon,lat,kind` records from a file.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<BsRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file)
}

/// Reads `id,lon,lat,kind` records; rows are returned in input order.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<BsRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| csv_error(&e, 1))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect::<Vec<_>>();
    if header != ["id", "lon", "lat", "kind"] {
        return Err(Error::Csv {
            line: 1,
            message: format!("expected header id,lon,lat,kind, found {}", header.join(",")),
        });
    }

    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(&e, 0))?;
        let line = row.position().map_or(0, |p| p.line());
        let fail = |message: String| Error::Csv { line, message };
        if row.len() != 4 {
            return Err(fail(format!("expected 4 fields, found {}", row.len())));
        }
        let lon: f64 = row[1]
            .parse()
            .map_err(|_| fail(format!("invalid longitude {:?}", &row[1])))?;
        let lat: f64 = row[2]
            .parse()
            .map_err(|_| fail(format!("invalid latitude {:?}", &row[2])))?;
        let kind: Mark = row[3].parse().map_err(|e: Error| fail(e.to_string()))?;
        out.push(BsRecord::new(&row[0], lon, lat, kind).map_err(|e| fail(e.to_string()))?);
    }
    Ok(out)
}

fn csv_error(e: &csv::Error, fallback_line: u64) -> Error {
    Error::Csv {
        line: e.position().map_or(fallback_line, |p| p.line()),
        message: e.to_string(),
    }
}

/// Mean latitude of the records, the default projection reference.
pub fn mean_latitude(records: &[BsRecord]) -> Option<f64> {
    if records.is_empty() {
        return None;
    }
    Some(records.iter().map(|r| r.latitude).sum::<f64>() / records.len() as f64)
}

/// Extent given to a degenerate bounding-box side (all records share a
/// coordinate), km.
const MIN_EXTENT_KM: f64 = 1e-3;

/// Equirectangular projection onto km coordinates with the origin at the
/// records' minimum longitude/latitude. The window is the bounding box.
pub fn project(records: &[BsRecord], ref_lat: f64) -> Result<PointPattern> {
    if records.is_empty() {
        return Err(Error::Degenerate("cannot project an empty record set".into()));
    }
    let lon0 = records.iter().map(|r| r.longitude).fold(f64::INFINITY, f64::min);
    let lat0 = records.iter().map(|r| r.latitude).fold(f64::INFINITY, f64::min);
    let kx = EARTH_RADIUS_KM * ref_lat.to_radians().cos();
    let points: Vec<Point> = records
        .iter()
        .map(|r| {
            Point::new(
                kx * (r.longitude - lon0).to_radians(),
                EARTH_RADIUS_KM * (r.latitude - lat0).to_radians(),
            )
        })
        .collect();
    let x_max = points.iter().map(|p| p.x).fold(0.0, f64::max).max(MIN_EXTENT_KM);
    let y_max = points.iter().map(|p| p.y).fold(0.0, f64::max).max(MIN_EXTENT_KM);
    let window = Window::new(0.0, 0.0, x_max, y_max)?;
    let marks = records.iter().map(|r| r.kind).collect();
    PointPattern::new(window, points, Some(marks))
}

/// Projection referenced at the records' mean latitude.
pub fn project_records(records: &[BsRecord]) -> Result<PointPattern> {
    let ref_lat = mean_latitude(records)
        .ok_or_else(|| Error::Degenerate("cannot project an empty record set".into()))?;
    project(records, ref_lat)
}

/// Great-circle distance in km.
pub fn haversine_km(lon1: f64, lat1: f64, lon2: f64, lat2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().asin()
}

/// Draws `count` windows of the given size with lower-left corners uniform
/// over the admissible part of `parent`. Region `i` uses its own stream, so
/// the list does not depend on evaluation order.
pub fn sample_regions(parent: &Window, size: (f64, f64), count: usize, seed: u64) -> Result<Vec<Window>> {
    let (w, h) = size;
    if count == 0 {
        return Err(Error::InvalidParameter("region count must be positive".into()));
    }
    if !(w > 0.0 && h > 0.0) {
        return Err(Error::InvalidParameter(format!("region size must be positive, got {w}x{h}")));
    }
    if w > parent.width() || h > parent.height() {
        return Err(Error::InvalidParameter(format!(
            "region {w}x{h} does not fit in parent {}x{}",
            parent.width(),
            parent.height()
        )));
    }
    let (slack_x, slack_y) = (parent.width() - w, parent.height() - h);
    (0..count)
        .map(|i| {
            let mut r = rng::stream(seed, rng::tag::REGIONS, i as u64);
            let x = parent.x_min + r.random::<f64>() * slack_x;
            let y = parent.y_min + r.random::<f64>() * slack_y;
            // keep the exact size when the region spans the whole parent
            let x_max = if slack_x == 0.0 { parent.x_max } else { (x + w).min(parent.x_max) };
            let y_max = if slack_y == 0.0 { parent.y_max } else { (y + h).min(parent.y_max) };
            Window::new(x, y, x_max, y_max)
        })
        .collect()
}

/// Restricts a pattern to `sub`. The result's window is `sub ∩ W`, which is
/// `sub` itself whenever `sub` lies inside the pattern's window. Boundary
/// points are kept.
pub fn clip(pattern: &PointPattern, sub: &Window) -> Result<PointPattern> {
    let window = pattern
        .window
        .intersection(sub)
        .ok_or_else(|| Error::InvalidWindow("clip window does not intersect the pattern window".into()))?;
    let keep: Vec<usize> = (0..pattern.len())
        .filter(|&i| window.contains(pattern.points[i]))
        .collect();
    let points = keep.iter().map(|&i| pattern.points[i]).collect();
    let marks = pattern
        .marks
        .as_ref()
        .map(|m| keep.iter().map(|&i| m[i]).collect());
    Ok(PointPattern {
        window,
        points,
        marks,
    })
}

/// Distance from each point to its nearest other point.
pub fn nn_distances(pattern: &PointPattern) -> Result<Vec<f64>> {
    if pattern.len() < 2 {
        return Err(Error::Degenerate(
            "nearest-neighbour distance undefined for fewer than two points".into(),
        ));
    }
    let pts = pattern.points();
    let cell = (pattern.window.area() / pts.len() as f64).sqrt();
    let index = CellIndex::new(pts, &pattern.window, cell);
    Ok((0..pts.len())
        .map(|i| index.nearest_other(pts, i).map_or(f64::INFINITY, |(_, d)| d))
        .collect())
}

/// Mean nearest-neighbour distance.
pub fn nn_mean_distance(pattern: &PointPattern) -> Result<f64> {
    let d = nn_distances(pattern)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

/// Writes a pattern as `x,y[,kind]` CSV.
pub fn write_pattern_csv<W: Write>(pattern: &PointPattern, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::Config(format!("writing pattern CSV: {e}"));
    match pattern.marks() {
        Some(marks) => {
            w.write_record(["x", "y", "kind"]).map_err(to_err)?;
            for (p, m) in pattern.points().iter().zip(marks) {
                w.write_record([p.x.to_string(), p.y.to_string(), m.to_string()])
                    .map_err(to_err)?;
            }
        }
        None => {
            w.write_record(["x", "y"]).map_err(to_err)?;
            for p in pattern.points() {
                w.write_record([p.x.to_string(), p.y.to_string()]).map_err(to_err)?;
            }
        }
    }
    w.flush().map_err(|e| Error::Config(format!("writing pattern CSV: {e}")))?;
    Ok(())
}

/// Reads an `x,y[,kind]` CSV into a pattern on `window`.
pub fn read_pattern_csv<R: Read>(input: R, window: Window) -> Result<PointPattern> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = rdr.headers().map_err(|e| csv_error(&e, 1))?.clone();
    let marked = match header.iter().collect::<Vec<_>>().as_slice() {
        ["x", "y"] => false,
        ["x", "y", "kind"] => true,
        other => {
            return Err(Error::Csv {
                line: 1,
                message: format!("expected header x,y[,kind], found {}", other.join(",")),
            })
        }
    };
    let mut points = Vec::new();
    let mut marks = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(&e, 0))?;
        let line = row.position().map_or(0, |p| p.line());
        let fail = |message: String| Error::Csv { line, message };
        let x: f64 = row[0].parse().map_err(|_| fail(format!("invalid x {:?}", &row[0])))?;
        let y: f64 = row[1].parse().map_err(|_| fail(format!("invalid y {:?}", &row[1])))?;
        points.push(Point::new(x, y));
        if marked {
            marks.push(row[2].parse::<Mark>().map_err(|e| fail(e.to_string()))?);
        }
    }
    PointPattern::new(window, points, marked.then_some(marks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::simulate_poisson;

    fn unit(side: f64) -> Window {
        Window::with_size(side, side).unwrap()
    }

    #[test]
    fn window_rejects_empty_extent() {
        assert!(Window::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(Window::new(0.0, 2.0, 1.0, 1.0).is_err());
        assert!(Window::new(0.0, 0.0, f64::NAN, 1.0).is_err());
        let w = Window::new(1.0, 2.0, 4.0, 6.0).unwrap();
        assert_eq!(w.area(), 12.0);
        let d = w.dilate(0.5).unwrap();
        assert_eq!((d.x_min, d.y_min, d.x_max, d.y_max), (0.5, 1.5, 4.5, 6.5));
        assert!(w.dilate(-1.0).is_err());
    }

    #[test]
    fn window_json_is_validated() {
        let w: Window = serde_json::from_str(r#"{"x_min":0,"y_min":0,"x_max":6,"y_max":6}"#).unwrap();
        assert_eq!(w.area(), 36.0);
        assert!(serde_json::from_str::<Window>(r#"{"x_min":1,"y_min":0,"x_max":1,"y_max":6}"#).is_err());
    }

    #[test]
    fn pattern_rejects_outside_points_but_keeps_boundary() {
        let w = unit(1.0);
        assert!(PointPattern::unmarked(w, vec![Point::new(1.0, 0.0)]).is_ok());
        assert!(PointPattern::unmarked(w, vec![Point::new(1.01, 0.0)]).is_err());
        assert!(PointPattern::new(w, vec![Point::new(0.5, 0.5)], Some(vec![])).is_err());
    }

    #[test]
    fn parse_rows() {
        let csv = "id,lon,lat,kind\na1,120.1,30.2,macro\nb2,120.2,30.3,MICRO\n";
        let recs = read_csv(csv.as_bytes()).unwrap();
        assert_eq!(recs[0], BsRecord::new("a1", 120.1, 30.2, Mark::Macro).unwrap());
        assert_eq!(recs[1].kind, Mark::Micro);
    }

    #[test]
    fn parse_rejects_bad_latitude_with_line() {
        let csv = "id,lon,lat,kind\na1,120.1,30.2,macro\na2,120.1,95.0,micro\n";
        let err = read_csv(csv.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(err.contains("latitude out of range"), "{err}");
    }

    #[test]
    fn parse_rejects_unknown_kind_and_short_rows() {
        let err = read_csv("id,lon,lat,kind\na,1,2,pico\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("unknown kind"));
        let err = read_csv("id,lon,lat,kind\na,1,2\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(read_csv("id,x,y,kind\n".as_bytes()).is_err());
    }

    #[test]
    fn header_only_is_empty() {
        assert!(read_csv("id,lon,lat,kind\n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn projection_basics() {
        let one = [BsRecord::new("a", 120.0, 30.0, Mark::Macro).unwrap()];
        let p = project(&one, 30.0).unwrap();
        assert_eq!(p.points()[0], Point::new(0.0, 0.0));

        let two = [
            BsRecord::new("a", 120.0, 30.0, Mark::Macro).unwrap(),
            BsRecord::new("b", 120.0, 30.01, Mark::Micro).unwrap(),
        ];
        let p = project(&two, 30.0).unwrap();
        let dy = p.points()[1].y - p.points()[0].y;
        assert!((dy - 6371.0 * 0.01 * std::f64::consts::PI / 180.0).abs() < 1e-9);
        assert!((dy - 1.112).abs() < 1e-3);
        assert_eq!(p.marks().unwrap(), &[Mark::Macro, Mark::Micro]);
        assert!(project(&[], 30.0).is_err());
    }

    #[test]
    fn city_sized_extent_projects_to_city_sized_window() {
        // ~60 x 40 km around 30°N
        let lat0: f64 = 30.0;
        let dlon = 60.0 / (EARTH_RADIUS_KM * lat0.to_radians().cos()) * 180.0 / std::f64::consts::PI;
        let dlat = 40.0 / EARTH_RADIUS_KM * 180.0 / std::f64::consts::PI;
        let recs = [
            BsRecord::new("sw", 120.0, lat0 - dlat / 2.0, Mark::Macro).unwrap(),
            BsRecord::new("ne", 120.0 + dlon, lat0 + dlat / 2.0, Mark::Macro).unwrap(),
        ];
        let p = project_records(&recs).unwrap();
        assert!((p.window().width() - 60.0).abs() < 0.5, "{:?}", p.window());
        assert!((p.window().height() - 40.0).abs() < 0.5);
    }

    #[test]
    fn projection_agrees_with_haversine() {
        let mut r = rng::seeded(3);
        let recs: Vec<BsRecord> = (0..60)
            .map(|i| {
                BsRecord::new(
                    format!("{i}"),
                    119.0 + r.random::<f64>() * 1.8,
                    29.0 + r.random::<f64>() * 1.6,
                    Mark::Macro,
                )
                .unwrap()
            })
            .collect();
        let p = project_records(&recs).unwrap();
        assert_eq!(p.len(), recs.len());
        for i in 0..recs.len() {
            for j in i + 1..recs.len() {
                let h = haversine_km(recs[i].longitude, recs[i].latitude, recs[j].longitude, recs[j].latitude);
                if h < 1.0 {
                    continue;
                }
                let d = p.points()[i].distance(p.points()[j]);
                assert!((d - h).abs() / h < 0.01, "{d} vs {h}");
            }
        }
    }

    #[test]
    fn regions_fit_parent_and_are_deterministic() {
        let parent = unit(200.0);
        let a = sample_regions(&parent, (20.0, 20.0), 5000, 9).unwrap();
        assert_eq!(a.len(), 5000);
        for w in &a {
            assert!(parent.contains_window(w));
            assert!((w.width() - 20.0).abs() < 1e-9 && (w.height() - 20.0).abs() < 1e-9);
        }
        assert_eq!(a, sample_regions(&parent, (20.0, 20.0), 5000, 9).unwrap());
        assert_ne!(a, sample_regions(&parent, (20.0, 20.0), 5000, 10).unwrap());
    }

    #[test]
    fn regions_equal_to_parent_and_oversized() {
        let parent = Window::new(1.0, 2.0, 7.0, 5.0).unwrap();
        for w in sample_regions(&parent, (6.0, 3.0), 4, 1).unwrap() {
            assert_eq!(w, parent);
        }
        assert!(sample_regions(&parent, (7.0, 1.0), 1, 1).is_err());
        assert!(sample_regions(&parent, (1.0, 1.0), 0, 1).is_err());
    }

    #[test]
    fn clip_behaviour() {
        let w = unit(3.0);
        let pts = vec![Point::new(0.5, 0.5), Point::new(1.0, 1.0), Point::new(2.5, 2.5)];
        let marks = vec![Mark::Macro, Mark::Micro, Mark::Micro];
        let p = PointPattern::new(w, pts, Some(marks)).unwrap();
        assert_eq!(clip(&p, &w).unwrap(), p);

        let sub = Window::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let c = clip(&p, &sub).unwrap();
        assert_eq!(c.len(), 2, "boundary point kept");
        assert_eq!(c.marks().unwrap(), &[Mark::Macro, Mark::Micro]);

        let empty = Window::new(1.5, 0.0, 2.0, 0.4).unwrap();
        let c = clip(&p, &empty).unwrap();
        assert!(c.is_empty());
        assert_eq!(*c.window(), empty);

        assert!(clip(&p, &Window::new(5.0, 5.0, 6.0, 6.0).unwrap()).is_err());
    }

    #[test]
    fn mark_subsets_partition_the_pattern() {
        let w = unit(3.0);
        let mut r = rng::seeded(1);
        let points: Vec<Point> = (0..249).map(|_| w.uniform_point(&mut r)).collect();
        let marks: Vec<Mark> = (0..249).map(|i| if i < 84 { Mark::Macro } else { Mark::Micro }).collect();
        let p = PointPattern::new(w, points, Some(marks)).unwrap();
        let macro_ = p.subset(Mark::Macro);
        let micro = p.subset(Mark::Micro);
        assert_eq!(macro_.len(), 84);
        assert_eq!(micro.len(), 165);
        assert_eq!(macro_.len() + micro.len(), 249);
    }

    #[test]
    fn nn_mean_simple_configurations() {
        let w = unit(3.0);
        let p = PointPattern::unmarked(w, vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)]).unwrap();
        assert_eq!(nn_mean_distance(&p).unwrap(), 1.0);
        let sq = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0), Point::new(1.0, 1.0)];
        let p = PointPattern::unmarked(w, sq).unwrap();
        assert_eq!(nn_mean_distance(&p).unwrap(), 1.0);
        let one = PointPattern::unmarked(w, vec![Point::new(1.0, 1.0)]).unwrap();
        let err = nn_mean_distance(&one).unwrap_err().to_string();
        assert!(err.contains("fewer than two points"));
    }

    #[test]
    fn nn_mean_of_poisson_matches_closed_form() {
        // 1/(2 sqrt(λ)) for an unbounded PPP; 500 expected points
        let lambda: f64 = 2.6;
        let side = (500.0 / lambda).sqrt();
        let w = unit(side);
        let mut means = Vec::new();
        for s in 0..20 {
            let p = simulate_poisson(lambda, &w, s).unwrap();
            means.push(nn_mean_distance(&p).unwrap());
        }
        let m = means.iter().sum::<f64>() / means.len() as f64;
        let expect = 1.0 / (2.0 * lambda.sqrt());
        assert!((m - expect).abs() / expect < 0.10, "{m} vs {expect}");
    }

    #[test]
    fn pattern_csv_round_trip() {
        let w = unit(2.0);
        let p = PointPattern::new(
            w,
            vec![Point::new(0.1, 0.25), Point::new(1.5, 1.75)],
            Some(vec![Mark::Micro, Mark::Macro]),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_pattern_csv(&p, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("x,y,kind\n"));
        assert_eq!(read_pattern_csv(buf.as_slice(), w).unwrap(), p);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn clip_composes_with_intersection(
                seed in 0u64..1000,
                a in (0.0f64..5.0, 0.0f64..5.0, 1.0f64..5.0, 1.0f64..5.0),
                b in (0.0f64..5.0, 0.0f64..5.0, 1.0f64..5.0, 1.0f64..5.0),
            ) {
                let w = unit(10.0);
                let p = simulate_poisson(3.0, &w, seed).unwrap();
                let w1 = Window::new(a.0, a.1, a.0 + a.2, a.1 + a.3).unwrap();
                let w2 = Window::new(b.0, b.1, b.0 + b.2, b.1 + b.3).unwrap();
                if let Some(w12) = w1.intersection(&w2) {
                    let twice = clip(&clip(&p, &w1).unwrap(), &w2).unwrap();
                    let once = clip(&p, &w12).unwrap();
                    prop_assert_eq!(twice, once);
                }
            }
        }
    }
}
