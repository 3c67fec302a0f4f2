//! Study regions, point patterns and their CSV representation.
//!
//! Time slices are indexed from 0 in the API and from 1 in files (`t` column).

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    #[inline]
    pub fn dist2(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    #[inline]
    pub fn dist(self, other: Point) -> f64 {
        self.dist2(other).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point { x, y }
    }
}

/// Closed axis-aligned rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainRepr", into = "DomainRepr")]
pub struct Domain {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

#[derive(Serialize, Deserialize)]
struct DomainRepr {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl TryFrom<DomainRepr> for Domain {
    type Error = Error;
    fn try_from(r: DomainRepr) -> Result<Self> {
        Domain::new(r.x_min, r.x_max, r.y_min, r.y_max)
    }
}

impl From<Domain> for DomainRepr {
    fn from(d: Domain) -> Self {
        DomainRepr {
            x_min: d.x_min,
            x_max: d.x_max,
            y_min: d.y_min,
            y_max: d.y_max,
        }
    }
}

impl Domain {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let finite = [x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite());
        if !finite || x_min >= x_max || y_min >= y_max {
            return Err(Error::validation(format!(
                "domain [{x_min}, {x_max}] x [{y_min}, {y_max}] is empty or not finite"
            )));
        }
        Ok(Domain {
            x_min,
            x_max,
            y_min,
            y_max,
        })
    }

    /// `[0, side] x [0, side]`.
    pub fn square(side: f64) -> Result<Self> {
        Domain::new(0.0, side, 0.0, side)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
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

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let u: f64 = rng.gen();
        let v: f64 = rng.gen();
        Point::new(
            self.x_min + u * self.width(),
            self.y_min + v * self.height(),
        )
    }

    /// Affine map of `p` from `self` onto `dst`.
    pub fn map_to(&self, dst: &Domain, p: Point) -> Point {
        Point::new(
            dst.x_min + (p.x - self.x_min) * dst.width() / self.width(),
            dst.y_min + (p.y - self.y_min) * dst.height() / self.height(),
        )
    }
}

/// Observed point pattern, one list of locations per time slice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventSet {
    slices: Vec<Vec<Point>>,
}

impl EventSet {
    pub fn new(slices: Vec<Vec<Point>>) -> Result<Self> {
        if slices.is_empty() {
            return Err(Error::validation(
                "an event set needs at least one time slice",
            ));
        }
        Ok(EventSet { slices })
    }

    pub fn empty(n_slices: usize) -> Result<Self> {
        EventSet::new(vec![Vec::new(); n_slices])
    }

    pub fn n_slices(&self) -> usize {
        self.slices.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.slices.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.slices.iter().map(Vec::len).sum()
    }

    pub fn slice(&self, t: usize) -> &[Point] {
        &self.slices[t]
    }

    pub fn slices(&self) -> &[Vec<Point>] {
        &self.slices
    }

    pub fn into_slices(self) -> Vec<Vec<Point>> {
        self.slices
    }

    /// Checks every point lies in `domain`.
    pub fn validate_within(&self, domain: &Domain) -> Result<()> {
        for (t, slice) in self.slices.iter().enumerate() {
            if let Some(p) = slice.iter().find(|p| !domain.contains(**p)) {
                return Err(Error::validation(format!(
                    "point ({}, {}) in slice {} lies outside the domain",
                    p.x,
                    p.y,
                    t + 1
                )));
            }
        }
        Ok(())
    }
}

/// Column names used to read an events CSV.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub t: String,
    pub x: String,
    pub y: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            t: "t".into(),
            x: "x".into(),
            y: "y".into(),
        }
    }
}

pub fn load_events(
    path: impl AsRef<Path>,
    schema: &CsvSchema,
    n_slices: usize,
) -> Result<EventSet> {
    let file = std::fs::File::open(path.as_ref())?;
    read_events(file, schema, n_slices)
}

pub fn read_events<R: Read>(reader: R, schema: &CsvSchema, n_slices: usize) -> Result<EventSet> {
    if n_slices == 0 {
        return Err(Error::validation("number of time slices must be positive"));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut slices = vec![Vec::new(); n_slices];

    let headers = rdr.headers()?.clone();
    // an entirely empty file has no header row
    if headers.is_empty() {
        return EventSet::new(slices);
    }
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::validation(format!("missing column `{name}` in events CSV")))
    };
    let (ti, xi, yi) = (column(&schema.t)?, column(&schema.x)?, column(&schema.y)?);

    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize, name: &str| -> Result<&str> {
            record.get(i).ok_or_else(|| Error::Parse {
                line,
                message: format!("missing field `{name}`"),
            })
        };
        let t_raw = field(ti, &schema.t)?;
        let t: i64 = t_raw.parse().map_err(|_| Error::Parse {
            line,
            message: format!("time index `{t_raw}` is not an integer"),
        })?;
        let parse_f = |raw: &str, name: &str| -> Result<f64> {
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("`{name}` value `{raw}` is not a finite number"),
                })
        };
        let x = parse_f(field(xi, &schema.x)?, &schema.x)?;
        let y = parse_f(field(yi, &schema.y)?, &schema.y)?;
        if t < 1 || t as u64 > n_slices as u64 {
            return Err(Error::validation(format!(
                "line {line}: time index {t} outside 1..={n_slices}"
            )));
        }
        slices[(t - 1) as usize].push(Point::new(x, y));
    }
    EventSet::new(slices)
}

/// Writes `t,x,y` rows, slices in order. Floats use the shortest representation
/// that parses back to the same value.
pub fn write_events<W: Write>(writer: W, events: &EventSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "x", "y"])?;
    for (t, slice) in events.slices.iter().enumerate() {
        for p in slice {
            w.write_record([(t + 1).to_string(), p.x.to_string(), p.y.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn project_events(raw: &EventSet, src: &Domain, dst: &Domain) -> Result<EventSet> {
    raw.validate_within(src)?;
    let slices = raw
        .slices
        .iter()
        .map(|s| s.iter().map(|&p| src.map_to(dst, p)).collect())
        .collect();
    EventSet::new(slices)
}
