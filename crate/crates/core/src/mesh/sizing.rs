use crate::geometry::{dist_point_segment, Point2};

/// Region around which the target edge length is reduced.
#[derive(Clone, Debug, PartialEq)]
pub enum ZoneShape {
    Point(Point2),
    Segment(Point2, Point2),
    /// Convex polygon, counter-clockwise.
    Polygon(Vec<Point2>),
}

impl ZoneShape {
    fn distance(&self, p: Point2) -> f64 {
        match self {
            ZoneShape::Point(c) => p.dist(*c),
            ZoneShape::Segment(a, b) => dist_point_segment(p, *a, *b),
            ZoneShape::Polygon(poly) => {
                let n = poly.len();
                let inside = (0..n).all(|i| (poly[(i + 1) % n] - poly[i]).cross(p - poly[i]) >= 0.0);
                if inside {
                    0.0
                } else {
                    (0..n)
                        .map(|i| dist_point_segment(p, poly[i], poly[(i + 1) % n]))
                        .fold(f64::INFINITY, f64::min)
                }
            }
        }
    }
}

/// Local refinement zone: edge length `h` on the shape, growing by `grade` per unit distance.
#[derive(Clone, Debug, PartialEq)]
pub struct SizeZone {
    pub shape: ZoneShape,
    pub h: f64,
    pub grade: f64,
}

impl SizeZone {
    pub fn point(p: Point2, h: f64, grade: f64) -> Self {
        SizeZone { shape: ZoneShape::Point(p), h, grade }
    }

    pub fn segment(a: Point2, b: Point2, h: f64, grade: f64) -> Self {
        SizeZone { shape: ZoneShape::Segment(a, b), h, grade }
    }

    /// Axis-aligned rectangle [x0,x1]×[y0,y1].
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64, h: f64, grade: f64) -> Self {
        let p = Point2::new;
        SizeZone {
            shape: ZoneShape::Polygon(vec![p(x0, y0), p(x1, y0), p(x1, y1), p(x0, y1)]),
            h,
            grade,
        }
    }
}

/// Maximum edge length as a function of position.
#[derive(Clone, Debug, PartialEq)]
pub struct SizingField {
    pub h_max: f64,
    pub zones: Vec<SizeZone>,
}

impl SizingField {
    pub fn uniform(h: f64) -> Self {
        SizingField { h_max: h, zones: vec![] }
    }

    pub fn eval(&self, p: Point2) -> f64 {
        self.zones
            .iter()
            .map(|z| z.h + z.grade * z.shape.distance(p))
            .fold(self.h_max, f64::min)
    }

    pub fn h_min(&self) -> f64 {
        self.zones.iter().map(|z| z.h).fold(self.h_max, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_values() {
        let s = SizingField {
            h_max: 0.5,
            zones: vec![
                SizeZone::point(Point2::new(0.0, 0.0), 0.01, 0.2),
                SizeZone::rect(2.0, 0.0, 3.0, 1.0, 0.05, 0.5),
            ],
        };
        assert_eq!(s.eval(Point2::new(0.0, 0.0)), 0.01);
        assert!((s.eval(Point2::new(1.0, 0.0)) - 0.21).abs() < 1e-15);
        assert_eq!(s.eval(Point2::new(2.5, 0.5)), 0.05);
        assert_eq!(s.eval(Point2::new(10.0, 10.0)), 0.5);
        assert_eq!(s.h_min(), 0.01);
    }
}
