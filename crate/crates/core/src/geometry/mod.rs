//! Planar domains made of a bounded core and attached straight tubes.
//!
//! A [`DomainSpec`] is a planar straight-line graph for the core plus a list of
//! tube descriptors. [`truncate`] cuts every infinite tube at a fixed axial
//! distance and returns the boundary of the resulting bounded region as a new
//! PSLG, with slits and interface facets kept as constrained edges.

mod arrangement;
mod builders;
mod inradius;
mod point;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use arrangement::{compute_r0, region_area, truncate, truncate_with, TruncateOptions};
pub use builders::{
    attach_perturbation_tubes, attach_tubes_at, build_blowup_domain, build_broken_strip, build_diamond,
    build_hersch_pipe, build_infinite_cross, build_polygon, build_slit_disk, broken_strip_triangle,
    perturbation_centers, polya_triangle_bound,
};
pub use inradius::{inradius, inradius_of_spec, Inradius};
pub use point::{dist_point_segment, Point2};
pub(crate) use arrangement::pslg_contains;
pub(crate) use point::orient;

/// Marker attached to a PSLG edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeMarker {
    /// Dirichlet boundary.
    OuterDirichlet,
    /// Crack: Dirichlet on both sides, vertices duplicated by the mesher.
    Slit,
    /// Core edge where tube `id` is glued on.
    TubeMouth(usize),
    /// Interior facet carrying a line source.
    Sigma(usize),
    /// Interior constraint with no boundary meaning (cut lines for nested meshes).
    Interface,
}

impl EdgeMarker {
    pub fn is_dirichlet(self) -> bool {
        matches!(self, EdgeMarker::OuterDirichlet | EdgeMarker::Slit)
    }
}

impl fmt::Display for EdgeMarker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeMarker::OuterDirichlet => write!(f, "OUTER_DIRICHLET"),
            EdgeMarker::Slit => write!(f, "SLIT"),
            EdgeMarker::TubeMouth(i) => write!(f, "TUBE_MOUTH({i})"),
            EdgeMarker::Sigma(i) => write!(f, "SIGMA({i})"),
            EdgeMarker::Interface => write!(f, "INTERFACE"),
        }
    }
}

impl FromStr for EdgeMarker {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let indexed = |prefix: &str| -> Option<usize> {
            s.strip_prefix(prefix)?.strip_suffix(')')?.parse().ok()
        };
        match s {
            "OUTER_DIRICHLET" => Ok(EdgeMarker::OuterDirichlet),
            "SLIT" => Ok(EdgeMarker::Slit),
            "INTERFACE" => Ok(EdgeMarker::Interface),
            _ => {
                if let Some(i) = indexed("TUBE_MOUTH(") {
                    Ok(EdgeMarker::TubeMouth(i))
                } else if let Some(i) = indexed("SIGMA(") {
                    Ok(EdgeMarker::Sigma(i))
                } else {
                    Err(Error::Parameter(format!("unknown edge marker '{s}'")))
                }
            }
        }
    }
}

impl Serialize for EdgeMarker {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for EdgeMarker {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Edge of a PSLG: two vertex indices and a marker. Serialized as `[i, j, marker]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PslgEdge(pub usize, pub usize, pub EdgeMarker);

/// Planar straight-line graph.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pslg {
    pub vertices: Vec<Point2>,
    pub edges: Vec<PslgEdge>,
}

impl Pslg {
    /// Checks indices, degenerate edges and proper crossings.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (k, e) in self.edges.iter().enumerate() {
            if e.0 >= n || e.1 >= n {
                return Err(Error::Geometry(format!("edge {k} references a missing vertex")));
            }
            if self.vertices[e.0].dist(self.vertices[e.1]) == 0.0 {
                return Err(Error::Geometry(format!("edge {k} has zero length")));
            }
        }
        for (a, ea) in self.edges.iter().enumerate() {
            for eb in &self.edges[a + 1..] {
                let shared = [ea.0, ea.1].iter().any(|v| *v == eb.0 || *v == eb.1);
                if shared {
                    continue;
                }
                let (p, q) = (self.vertices[ea.0], self.vertices[ea.1]);
                let (r, s) = (self.vertices[eb.0], self.vertices[eb.1]);
                if point::segments_intersect(p, q, r, s) {
                    return Err(Error::Geometry(format!(
                        "edges ({},{}) and ({},{}) intersect",
                        ea.0, ea.1, eb.0, eb.1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn segment(&self, e: &PslgEdge) -> (Point2, Point2) {
        (self.vertices[e.0], self.vertices[e.1])
    }

    /// Total length of edges carrying `marker`.
    pub fn marked_length(&self, marker: EdgeMarker) -> f64 {
        self.edges
            .iter()
            .filter(|e| e.2 == marker)
            .map(|e| self.vertices[e.0].dist(self.vertices[e.1]))
            .sum()
    }

    pub fn bounding_box(&self) -> (Point2, Point2) {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        (lo, hi)
    }
}

/// Tube length: finite or semi-infinite. Serialized as a number or `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TubeLength {
    Finite(f64),
    Infinite,
}

impl Serialize for TubeLength {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TubeLength::Finite(l) => s.serialize_f64(*l),
            TubeLength::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for TubeLength {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(l) if l > 0.0 => Ok(TubeLength::Finite(l)),
            Raw::Num(l) => Err(serde::de::Error::custom(format!("tube length {l} must be positive"))),
            Raw::Str(s) if s == "inf" => Ok(TubeLength::Infinite),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("bad tube length '{s}'"))),
        }
    }
}

/// Straight tube glued to the core along its mouth segment.
///
/// The tube frame has its origin at the mouth midpoint, axial unit vector `dir`
/// and transverse unit vector along the mouth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TubeSpec {
    pub mouth: [Point2; 2],
    pub dir: Point2,
    pub width: f64,
    pub length: TubeLength,
}

impl TubeSpec {
    pub fn new(mouth: [Point2; 2], dir: Point2, length: TubeLength) -> Self {
        let width = mouth[0].dist(mouth[1]);
        TubeSpec { mouth, dir: dir.normalized(), width, length }
    }

    pub fn origin(&self) -> Point2 {
        self.mouth[0].lerp(self.mouth[1], 0.5)
    }

    pub fn transverse(&self) -> Point2 {
        (self.mouth[1] - self.mouth[0]).normalized()
    }

    /// Axial and transverse coordinates of `p` in the tube frame.
    pub fn frame_coords(&self, p: Point2) -> (f64, f64) {
        let d = p - self.origin();
        (d.dot(self.dir), d.dot(self.transverse()))
    }

    pub fn from_frame(&self, s: f64, t: f64) -> Point2 {
        self.origin() + self.dir * s + self.transverse() * t
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self.length, TubeLength::Infinite)
    }

    /// First Dirichlet eigenvalue of the cross-section.
    pub fn cross_section_eigenvalue(&self) -> f64 {
        std::f64::consts::PI.powi(2) / (self.width * self.width)
    }

    fn validate(&self) -> Result<()> {
        if !(self.width > 0.0) || !self.width.is_finite() {
            return Err(Error::Geometry(format!("tube width {} must be positive", self.width)));
        }
        let mouth_len = self.mouth[0].dist(self.mouth[1]);
        if (mouth_len - self.width).abs() > 1e-9 * self.width.max(1.0) {
            return Err(Error::Geometry(format!(
                "tube width {} differs from mouth length {mouth_len}",
                self.width
            )));
        }
        if (self.dir.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Geometry("tube direction must be a unit vector".into()));
        }
        if self.dir.dot(self.transverse()).abs() > 1e-9 {
            return Err(Error::Geometry("tube direction must be orthogonal to its mouth".into()));
        }
        if let TubeLength::Finite(l) = self.length {
            if !(l > 0.0) {
                return Err(Error::Geometry(format!("tube length {l} must be positive")));
            }
        }
        Ok(())
    }
}

/// Bounded core plus attached tubes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub name: String,
    pub core: Pslg,
    pub tubes: Vec<TubeSpec>,
    /// Polygonization level of curved core boundaries (0 when the core is polygonal).
    #[serde(skip)]
    pub circle_segments: usize,
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        self.core.validate()?;
        for t in &self.tubes {
            t.validate()?;
        }
        arrangement::check_tube_pairs(self).map(|_| ())
    }

    pub fn infinite_tubes(&self) -> impl Iterator<Item = (usize, &TubeSpec)> {
        self.tubes.iter().enumerate().filter(|(_, t)| t.is_infinite())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("domain serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: DomainSpec = serde_json::from_str(s)
            .map_err(|e| Error::Parameter(format!("domain json: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Bounded truncation of a domain.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedDomain {
    pub pslg: Pslg,
    /// Truncation distance along every infinite tube.
    pub r: f64,
    pub r0: f64,
    /// Tubes of the source domain.
    pub tubes: Vec<TubeSpec>,
    /// Meshed length of each tube.
    pub tube_lengths: Vec<f64>,
}

impl TruncatedDomain {
    /// Area of the truncated region.
    pub fn area(&self) -> f64 {
        region_area(&self.pslg)
    }

    /// Whether `p` lies in the open region (slits excluded).
    pub fn contains(&self, p: Point2) -> bool {
        arrangement::pslg_contains(&self.pslg, p)
    }
}

/// Essential-spectrum threshold: minimum cross-section eigenvalue over infinite tubes.
pub fn threshold_energy(spec: &DomainSpec) -> Result<f64> {
    spec.infinite_tubes()
        .map(|(_, t)| {
            if t.width > 0.0 {
                Ok(t.cross_section_eigenvalue())
            } else {
                Err(Error::Parameter("tube width must be positive".into()))
            }
        })
        .try_fold(None::<f64>, |acc, v| {
            let v = v?;
            Ok(Some(acc.map_or(v, |a: f64| a.min(v))))
        })?
        .ok_or_else(|| Error::Inapplicable("domain has no infinite tubes; threshold undefined".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn marker_roundtrip() {
        for m in [
            EdgeMarker::OuterDirichlet,
            EdgeMarker::Slit,
            EdgeMarker::TubeMouth(3),
            EdgeMarker::Sigma(12),
            EdgeMarker::Interface,
        ] {
            assert_eq!(m.to_string().parse::<EdgeMarker>().unwrap(), m);
        }
        assert!("SIGMA(x)".parse::<EdgeMarker>().is_err());
    }

    #[test]
    fn thresholds() {
        assert!((threshold_energy(&build_hersch_pipe(64).unwrap()).unwrap() - PI * PI).abs() < 1e-14);
        assert!((threshold_energy(&build_infinite_cross()).unwrap() - PI * PI / 4.0).abs() < 1e-14);
        let tube = TubeSpec::new(
            [Point2::new(0.0, 0.0), Point2::new(0.0, 0.5)],
            Point2::new(1.0, 0.0),
            TubeLength::Infinite,
        );
        let spec = DomainSpec {
            name: "tube".into(),
            core: Pslg::default(),
            tubes: vec![tube],
            circle_segments: 0,
        };
        assert!((threshold_energy(&spec).unwrap() - 4.0 * PI * PI).abs() < 1e-12);
        assert!(threshold_energy(&build_diamond()).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let h = build_hersch_pipe(32).unwrap();
        let s = h.to_json();
        assert!(s.contains("\"inf\""));
        assert!(s.contains("TUBE_MOUTH(0)"));
        let back = DomainSpec::from_json(&s).unwrap();
        assert_eq!(back.core, h.core);
        assert_eq!(back.tubes, h.tubes);
    }

    #[test]
    fn crossing_edges_rejected() {
        let pslg = Pslg {
            vertices: vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 1.0),
                Point2::new(0.0, 1.0),
                Point2::new(1.0, 0.0),
            ],
            edges: vec![
                PslgEdge(0, 1, EdgeMarker::OuterDirichlet),
                PslgEdge(2, 3, EdgeMarker::OuterDirichlet),
            ],
        };
        assert!(matches!(pslg.validate(), Err(Error::Geometry(_))));
    }
}
