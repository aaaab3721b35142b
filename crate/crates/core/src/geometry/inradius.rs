//! Inradius by grid sampling of the distance to the boundary, refined by local zooming.

use super::arrangement::pslg_contains;
use super::{compute_r0, dist_point_segment, truncate, DomainSpec, EdgeMarker, Point2, Pslg};
use crate::error::{Error, Result};

/// Largest inscribed disk.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Inradius {
    pub radius: f64,
    pub center: Point2,
}

const MAX_SEEDS: usize = 4096;
const POLISH: usize = 16;
const FAN: usize = 720;

struct DistanceField {
    segments: Vec<(Point2, Point2)>,
}

impl DistanceField {
    fn eval(&self, p: Point2) -> f64 {
        self.segments
            .iter()
            .map(|&(a, b)| dist_point_segment(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Inradius of the region bounded by `pslg`; slit edges count as boundary.
///
/// The distance is sampled on a grid of spacing `grid_h`; every sample within `grid_h` of the
/// best one is refined by `refine_steps` rounds of a shrinking 5×5 stencil.
pub fn inradius(pslg: &Pslg, grid_h: f64, refine_steps: usize) -> Result<Inradius> {
    if !(grid_h > 0.0) {
        return Err(Error::Parameter(format!("grid_h = {grid_h} must be positive")));
    }
    let field = DistanceField {
        segments: pslg
            .edges
            .iter()
            .filter(|e| {
                matches!(e.2, EdgeMarker::OuterDirichlet | EdgeMarker::Slit | EdgeMarker::TubeMouth(_))
            })
            .map(|e| pslg.segment(e))
            .collect(),
    };
    let value = |p: Point2| {
        if pslg_contains(pslg, p) {
            field.eval(p)
        } else {
            f64::NEG_INFINITY
        }
    };
    let (lo, hi) = pslg.bounding_box();
    let nx = ((hi.x - lo.x) / grid_h).ceil() as usize + 1;
    let ny = ((hi.y - lo.y) / grid_h).ceil() as usize + 1;
    let mut samples: Vec<(f64, Point2)> = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            let p = Point2::new(lo.x + i as f64 * grid_h, lo.y + j as f64 * grid_h);
            let d = value(p);
            if d > 0.0 {
                samples.push((d, p));
            }
        }
    }
    if samples.is_empty() {
        return Err(Error::Geometry("region contains no sample points".into()));
    }
    samples.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    // near-ties matter: perturbations of size O(grid_h^2) can sit on long ridges of equal distance
    let dmax = samples[0].0;
    let mut seeds: Vec<Point2> =
        samples.iter().take_while(|(d, _)| *d >= dmax - grid_h).map(|(_, p)| *p).collect();
    if seeds.len() > MAX_SEEDS {
        let stride = seeds.len().div_ceil(MAX_SEEDS);
        seeds = seeds.into_iter().step_by(stride).collect();
    }
    let scale = (hi.x - lo.x).max(hi.y - lo.y);
    let mut found: Vec<(f64, Point2)> = seeds
        .into_iter()
        .map(|seed| {
            let (mut c, mut v) = (seed, value(seed));
            let mut step = grid_h;
            for _ in 0..refine_steps {
                if step < 1e-15 * scale {
                    break;
                }
                let mut moved = false;
                for i in -2i32..=2 {
                    for j in -2i32..=2 {
                        let q = Point2::new(c.x + i as f64 * step * 0.5, c.y + j as f64 * step * 0.5);
                        let vq = value(q);
                        if vq > v {
                            v = vq;
                            c = q;
                            moved = true;
                        }
                    }
                }
                if !moved {
                    step *= 0.5;
                }
            }
            (v, c)
        })
        .collect();
    found.sort_by(|a, b| b.0.total_cmp(&a.0));
    // where three distances are active the ascent cone can be narrower than the stencil's
    // angular resolution; polish the best distinct candidates with a fine fan of directions
    let mut polished: Vec<Point2> = Vec::new();
    let mut best = Inradius { radius: f64::NEG_INFINITY, center: found[0].1 };
    for &(v0, c0) in &found {
        if polished.len() >= POLISH || v0 < found[0].0 - grid_h {
            break;
        }
        if polished.iter().any(|p| p.dist(c0) < 1e-9 * scale) {
            continue;
        }
        polished.push(c0);
        let (mut c, mut v) = (c0, v0);
        let mut step = grid_h;
        while step > 1e-15 * scale {
            let mut moved = false;
            for k in 0..FAN {
                let t = 2.0 * std::f64::consts::PI * k as f64 / FAN as f64;
                let q = Point2::new(c.x + step * t.cos(), c.y + step * t.sin());
                let vq = value(q);
                if vq > v {
                    v = vq;
                    c = q;
                    moved = true;
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        if v > best.radius {
            best = Inradius { radius: v, center: c };
        }
    }
    Ok(best)
}

/// Inradius of an unbounded domain, evaluated on a truncation long enough that the caps
/// cannot touch the maximal disk.
pub fn inradius_of_spec(spec: &DomainSpec, grid_h: f64, refine_steps: usize) -> Result<Inradius> {
    let r0 = compute_r0(spec)?;
    let wmax = spec.tubes.iter().map(|t| t.width).fold(0.0, f64::max);
    let t = truncate(spec, r0 + 2.0 * wmax + 1.0)?;
    inradius(&t.pslg, grid_h, refine_steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_hersch_pipe, build_polygon, build_slit_disk};
    use std::f64::consts::PI;

    #[test]
    fn hersch_inradius() {
        let h = build_hersch_pipe(64).unwrap();
        let r = inradius_of_spec(&h, 0.02, 30).unwrap();
        assert!((r.radius - 0.5).abs() < 0.02);
    }

    #[test]
    fn disk_polygon() {
        let n = 128;
        let pts = (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                Point2::new(t.cos(), t.sin())
            })
            .collect();
        let d = build_polygon("disk", pts).unwrap();
        let r = inradius(&d.core, 0.05, 30).unwrap();
        assert!((r.radius - (PI / n as f64).cos()).abs() < 1e-6);
    }

    #[test]
    fn slit_counts_as_boundary() {
        let sd = build_slit_disk(128).unwrap();
        let r = inradius(&sd.core, 0.02, 30).unwrap();
        // largest disk avoiding the slit sits on the negative axis with radius 1/2
        assert!((r.radius - 0.5).abs() < 1e-3, "{}", r.radius);
    }

    #[test]
    fn empty_region_errors() {
        assert!(inradius(&Pslg::default(), 0.1, 3).is_err());
    }
}
