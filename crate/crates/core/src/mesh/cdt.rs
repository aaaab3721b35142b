//! Constrained Delaunay triangulation with Ruppert refinement.
//!
//! Triangles are stored with neighbor links; edge `i` of a triangle is the one
//! opposite vertex `i`. Constrained edges carry a nonzero marker id on both sides.
//! Everything runs inside a large enclosing triangle whose vertices are 0, 1, 2.

use std::collections::VecDeque;

use super::sizing::SizingField;
use crate::error::{Error, Result};
use crate::geometry::{orient, Point2};

pub(crate) const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Tri {
    pub v: [u32; 3],
    pub n: [u32; 3],
    pub c: [u16; 3],
    pub inside: bool,
    pub alive: bool,
}

enum Located {
    Inside(u32),
    OnEdge(u32, usize),
    Vertex(u32),
}

enum Walk {
    Reached(u32),
    OnEdge(u32, usize),
    Blocked(u32, usize),
    Vertex,
}

pub(crate) struct Cdt {
    pub pts: Vec<Point2>,
    pub tris: Vec<Tri>,
    input: Vec<bool>,
    free: Vec<u32>,
    vt: Vec<u32>,
    last: u32,
    mark: Vec<u32>,
    stamp: u32,
    rng: u32,
}

struct Boundary {
    a: u32,
    b: u32,
    outer: u32,
    c: u16,
    inside: bool,
}

fn incircle(a: Point2, b: Point2, c: Point2, d: Point2) -> f64 {
    robust::incircle(a.coord(), b.coord(), c.coord(), d.coord())
}

fn circumcenter(a: Point2, b: Point2, c: Point2) -> Point2 {
    let (bx, by) = (b.x - a.x, b.y - a.y);
    let (cx, cy) = (c.x - a.x, c.y - a.y);
    let d = 2.0 * (bx * cy - by * cx);
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    Point2::new(a.x + (cy * b2 - by * c2) / d, a.y + (bx * c2 - cx * b2) / d)
}

impl Cdt {
    /// Empty triangulation whose enclosing triangle contains the box `lo..hi` with a wide margin.
    pub fn new(lo: Point2, hi: Point2) -> Self {
        let c = lo.lerp(hi, 0.5);
        let m = 10.0 * (hi.x - lo.x).max(hi.y - lo.y).max(1.0);
        let pts = vec![
            Point2::new(c.x - 4.0 * m, c.y - 2.0 * m),
            Point2::new(c.x + 4.0 * m, c.y - 2.0 * m),
            Point2::new(c.x, c.y + 4.0 * m),
        ];
        let t = Tri { v: [0, 1, 2], n: [NONE; 3], c: [0; 3], inside: false, alive: true };
        Cdt {
            pts,
            tris: vec![t],
            input: vec![false; 3],
            free: vec![],
            vt: vec![0; 3],
            last: 0,
            mark: vec![0],
            stamp: 0,
            rng: 0x9e37_79b9,
        }
    }

    fn p(&self, v: u32) -> Point2 {
        self.pts[v as usize]
    }

    fn t(&self, t: u32) -> &Tri {
        &self.tris[t as usize]
    }

    fn edge(&self, t: u32, i: usize) -> (u32, u32) {
        let v = self.t(t).v;
        (v[(i + 1) % 3], v[(i + 2) % 3])
    }

    fn next_rand(&mut self) -> u32 {
        self.rng ^= self.rng << 13;
        self.rng ^= self.rng >> 17;
        self.rng ^= self.rng << 5;
        self.rng
    }

    fn locate(&mut self, p: Point2) -> Result<Located> {
        let mut t = self.last;
        if !self.t(t).alive {
            t = self.tris.iter().position(|x| x.alive).expect("live triangle") as u32;
        }
        let limit = 4 * self.tris.len() + 100;
        'walk: for _ in 0..limit {
            let off = (self.next_rand() % 3) as usize;
            for k in 0..3 {
                let i = (k + off) % 3;
                let (a, b) = self.edge(t, i);
                if orient(self.p(a), self.p(b), p) < 0.0 {
                    let nb = self.t(t).n[i];
                    if nb == NONE {
                        return Err(Error::Geometry(format!("point {p:?} outside triangulation")));
                    }
                    t = nb;
                    continue 'walk;
                }
            }
            let tri = *self.t(t);
            for &v in &tri.v {
                if self.p(v) == p {
                    return Ok(Located::Vertex(v));
                }
            }
            for i in 0..3 {
                let (a, b) = self.edge(t, i);
                if orient(self.p(a), self.p(b), p) == 0.0 {
                    return Ok(Located::OnEdge(t, i));
                }
            }
            return Ok(Located::Inside(t));
        }
        Err(Error::Geometry("point location did not terminate".into()))
    }

    fn next_stamp(&mut self) -> u32 {
        self.stamp += 1;
        if self.mark.len() < self.tris.len() {
            self.mark.resize(self.tris.len(), 0);
        }
        self.stamp
    }

    fn marked(&self, t: u32) -> bool {
        self.mark[t as usize] == self.stamp
    }

    /// Triangles whose circumcircle contains `p`, reachable from `seeds` without crossing constraints.
    /// Shrunk until every boundary edge is visible from `p`; `None` if a seed must go.
    fn cavity(&mut self, p: Point2, seeds: &[u32]) -> Option<(Vec<u32>, Vec<Boundary>)> {
        let s = self.next_stamp();
        let mut cav: Vec<u32> = seeds.to_vec();
        for &t in seeds {
            self.mark[t as usize] = s;
        }
        let mut k = 0;
        while k < cav.len() {
            let t = cav[k];
            k += 1;
            let tri = *self.t(t);
            for i in 0..3 {
                let nb = tri.n[i];
                if nb == NONE || tri.c[i] != 0 || self.marked(nb) {
                    continue;
                }
                let v = self.t(nb).v;
                if incircle(self.p(v[0]), self.p(v[1]), self.p(v[2]), p) > 0.0 {
                    self.mark[nb as usize] = s;
                    cav.push(nb);
                }
            }
        }
        loop {
            let mut bnd = Vec::new();
            let mut drop = None;
            'scan: for &t in &cav {
                let tri = *self.t(t);
                for i in 0..3 {
                    let nb = tri.n[i];
                    if nb != NONE && self.marked(nb) {
                        continue;
                    }
                    let (a, b) = self.edge(t, i);
                    if orient(p, self.p(a), self.p(b)) <= 0.0 {
                        drop = Some(t);
                        break 'scan;
                    }
                    bnd.push(Boundary { a, b, outer: nb, c: tri.c[i], inside: tri.inside });
                }
            }
            match drop {
                None => return Some((cav, bnd)),
                Some(t) if seeds.contains(&t) => return None,
                Some(t) => {
                    self.mark[t as usize] = 0;
                    cav.retain(|&x| x != t);
                }
            }
        }
    }

    fn alloc(&mut self, tri: Tri) -> u32 {
        if let Some(t) = self.free.pop() {
            self.tris[t as usize] = tri;
            t
        } else {
            self.tris.push(tri);
            self.mark.push(0);
            (self.tris.len() - 1) as u32
        }
    }

    /// Replaces the cavity by a fan around the new vertex `pv`. Spokes to `split.0`/`split.1`
    /// receive marker `split.2`.
    fn commit(&mut self, pv: u32, cav: &[u32], bnd: &[Boundary], split: Option<(u32, u32, u16)>) -> Vec<u32> {
        for &t in cav {
            self.tris[t as usize].alive = false;
            self.free.push(t);
        }
        let mut made = Vec::with_capacity(bnd.len());
        for e in bnd {
            let t = self.alloc(Tri {
                v: [pv, e.a, e.b],
                n: [e.outer, NONE, NONE],
                c: [e.c, 0, 0],
                inside: e.inside,
                alive: true,
            });
            if e.outer != NONE {
                let o = &mut self.tris[e.outer as usize];
                for j in 0..3 {
                    if o.v[(j + 1) % 3] == e.b && o.v[(j + 2) % 3] == e.a {
                        o.n[j] = t;
                    }
                }
            }
            self.vt[e.a as usize] = t;
            made.push(t);
        }
        // tri (p,a,b): edge 1 is (b,p), shared with the tri starting at b; edge 2 is (p,a)
        for &t in &made {
            let b = self.t(t).v[2];
            if let Some(&u) = made.iter().find(|&&u| self.t(u).v[1] == b) {
                self.tris[t as usize].n[1] = u;
                self.tris[u as usize].n[2] = t;
            }
        }
        if let Some((sa, sb, m)) = split {
            for &t in &made {
                let v = self.t(t).v;
                if v[1] == sa || v[1] == sb {
                    self.tris[t as usize].c[2] = m;
                }
                if v[2] == sa || v[2] == sb {
                    self.tris[t as usize].c[1] = m;
                }
            }
        }
        self.vt[pv as usize] = made[0];
        self.last = made[0];
        made
    }

    fn push_point(&mut self, p: Point2, input: bool) -> u32 {
        self.pts.push(p);
        self.input.push(input);
        self.vt.push(NONE);
        (self.pts.len() - 1) as u32
    }

    /// Inserts `p`; returns the vertex index (an existing one when `p` coincides with it).
    pub fn insert(&mut self, p: Point2, input: bool) -> Result<u32> {
        match self.locate(p)? {
            Located::Vertex(v) => {
                if input {
                    self.input[v as usize] = true;
                }
                Ok(v)
            }
            Located::OnEdge(t, i) if self.t(t).c[i] != 0 => Ok(self.split_at(t, i, p)?.0),
            located => {
                let seeds = match located {
                    Located::Inside(t) => vec![t],
                    Located::OnEdge(t, i) => vec![t, self.t(t).n[i]],
                    Located::Vertex(_) => unreachable!(),
                };
                let (cav, bnd) = self
                    .cavity(p, &seeds)
                    .ok_or_else(|| Error::Geometry(format!("cannot insert {p:?}")))?;
                let v = self.push_point(p, input);
                self.commit(v, &cav, &bnd, None);
                Ok(v)
            }
        }
    }

    /// Splits constrained edge `i` of `t` at `p`, which must lie on it.
    fn split_at(&mut self, t: u32, i: usize, p: Point2) -> Result<(u32, Vec<u32>)> {
        let (a, b) = self.edge(t, i);
        let m = self.t(t).c[i];
        let nb = self.t(t).n[i];
        let seeds: Vec<u32> = if nb == NONE { vec![t] } else { vec![t, nb] };
        let (cav, bnd) = self
            .cavity(p, &seeds)
            .ok_or_else(|| Error::Geometry(format!("cannot split segment at {p:?}")))?;
        let v = self.push_point(p, false);
        let made = self.commit(v, &cav, &bnd, Some((a, b, m)));
        Ok((v, made))
    }

    /// Triangle and local index of edge (a, b), if present.
    pub fn find_edge(&self, a: u32, b: u32) -> Option<(u32, usize)> {
        let start = self.vt[a as usize];
        if start == NONE {
            return None;
        }
        let mut t = start;
        for _ in 0..self.tris.len() {
            let tri = self.t(t);
            let k = tri.v.iter().position(|&x| x == a)?;
            if tri.v[(k + 1) % 3] == b {
                return Some((t, (k + 2) % 3));
            }
            if tri.v[(k + 2) % 3] == b {
                return Some((t, (k + 1) % 3));
            }
            t = tri.n[(k + 1) % 3];
            if t == NONE || t == start {
                return None;
            }
        }
        None
    }

    fn set_constraint(&mut self, t: u32, i: usize, m: u16) {
        self.tris[t as usize].c[i] = m;
        let nb = self.t(t).n[i];
        if nb != NONE {
            let o = &mut self.tris[nb as usize];
            for j in 0..3 {
                if o.n[j] == t {
                    o.c[j] = m;
                }
            }
        }
    }

    /// Forces segment (a, b) into the triangulation by recursive midpoint insertion.
    pub fn insert_segment(&mut self, a: u32, b: u32, m: u16) -> Result<()> {
        let mut stack = vec![(a, b)];
        let mut guard = 0usize;
        while let Some((u, w)) = stack.pop() {
            if let Some((t, i)) = self.find_edge(u, w) {
                self.set_constraint(t, i, m);
                continue;
            }
            guard += 1;
            if guard > 1_000_000 {
                return Err(Error::Geometry("segment recovery did not terminate".into()));
            }
            let mid = self.p(u).lerp(self.p(w), 0.5);
            let v = self.insert(mid, false)?;
            if v == u || v == w {
                return Err(Error::Geometry(format!("degenerate segment near {mid:?}")));
            }
            stack.push((u, v));
            stack.push((v, w));
        }
        Ok(())
    }

    /// Sets the inside flag of every live triangle from a point-membership test on its centroid.
    pub fn classify(&mut self, contains: impl Fn(Point2) -> bool) {
        for k in 0..self.tris.len() {
            let t = self.tris[k];
            if !t.alive {
                continue;
            }
            let inside = t.v.iter().all(|&v| v > 2) && {
                let c = (self.p(t.v[0]) + self.p(t.v[1]) + self.p(t.v[2])) * (1.0 / 3.0);
                contains(c)
            };
            self.tris[k].inside = inside;
        }
    }

    fn walk(&self, mut t: u32, to: Point2) -> Walk {
        let v = self.t(t).v;
        let from = (self.p(v[0]) + self.p(v[1]) + self.p(v[2])) * (1.0 / 3.0);
        for _ in 0..self.tris.len() + 10 {
            let tri = *self.t(t);
            let mut exit = None;
            for i in 0..3 {
                let (a, b) = self.edge(t, i);
                let (pa, pb) = (self.p(a), self.p(b));
                if orient(pa, pb, to) < 0.0 {
                    let straddles = orient(from, to, pa) * orient(from, to, pb) <= 0.0;
                    if straddles || exit.is_none() {
                        exit = Some(i);
                    }
                    if straddles {
                        break;
                    }
                }
            }
            match exit {
                Some(i) if tri.c[i] != 0 || tri.n[i] == NONE => return Walk::Blocked(t, i),
                Some(i) => t = tri.n[i],
                None => {
                    if tri.v.iter().any(|&v| self.p(v) == to) {
                        return Walk::Vertex;
                    }
                    for i in 0..3 {
                        let (a, b) = self.edge(t, i);
                        if orient(self.p(a), self.p(b), to) == 0.0 {
                            return if tri.c[i] != 0 { Walk::Blocked(t, i) } else { Walk::OnEdge(t, i) };
                        }
                    }
                    return Walk::Reached(t);
                }
            }
        }
        Walk::Vertex
    }

    /// Where to split segment (a, b): off-center at a power-of-two distance from an input
    /// endpoint (concentric shells), otherwise the midpoint.
    fn split_point(&self, a: u32, b: u32) -> Point2 {
        let (pa, pb) = (self.p(a), self.p(b));
        let len = pa.dist(pb);
        let (ia, ib) = (self.input[a as usize], self.input[b as usize]);
        if ia != ib {
            let d = 2f64.powf((0.5 * len).log2().round());
            if d > 0.25 * len && d < 0.75 * len {
                let t = if ia { d / len } else { 1.0 - d / len };
                return pa.lerp(pb, t);
            }
        }
        pa.lerp(pb, 0.5)
    }

    fn is_bad(&self, t: u32, cos_bound: f64, size: &SizingField, tiny: f64) -> bool {
        let v = self.t(t).v;
        let (a, b, c) = (self.p(v[0]), self.p(v[1]), self.p(v[2]));
        let mut l = [b.dist(c), c.dist(a), a.dist(b)];
        l.sort_by(|x, y| x.partial_cmp(y).unwrap());
        if l[0] < tiny {
            return false;
        }
        let centroid = (a + b + c) * (1.0 / 3.0);
        if l[2] > size.eval(centroid) {
            return true;
        }
        let cos_min = (l[1] * l[1] + l[2] * l[2] - l[0] * l[0]) / (2.0 * l[1] * l[2]);
        cos_min > cos_bound
    }

    fn encroached(&self, t: u32, i: usize, size: &SizingField) -> bool {
        let (a, b) = self.edge(t, i);
        let (pa, pb) = (self.p(a), self.p(b));
        if pa.dist(pb) > size.eval(pa.lerp(pb, 0.5)) {
            return true;
        }
        let tri = self.t(t);
        let nb = tri.n[i];
        let sides = [Some(t), if nb == NONE { None } else { Some(nb) }];
        sides.into_iter().flatten().any(|s| {
            let st = self.t(s);
            st.inside && {
                let apex = st.v.iter().copied().find(|&x| x != a && x != b).unwrap();
                let pc = self.p(apex);
                (pa - pc).dot(pb - pc) < 0.0
            }
        })
    }

    /// Ruppert refinement of the inside triangles to the angle bound and sizing field.
    pub fn refine(&mut self, min_angle_deg: f64, size: &SizingField, max_vertices: usize) -> Result<()> {
        let cos_bound = min_angle_deg.to_radians().cos();
        let tiny = 1e-3 * size.h_min();
        let mut segq: VecDeque<(u32, u32)> = VecDeque::new();
        let mut triq: VecDeque<(u32, [u32; 3])> = VecDeque::new();
        for t in 0..self.tris.len() as u32 {
            let tri = *self.t(t);
            if !tri.alive || !tri.inside {
                continue;
            }
            triq.push_back((t, tri.v));
            for i in 0..3 {
                if tri.c[i] != 0 && self.encroached(t, i, size) {
                    segq.push_back(self.edge(t, i));
                }
            }
        }
        let mut new_tris: Vec<u32> = Vec::new();
        loop {
            if self.pts.len() > max_vertices {
                return Err(Error::Geometry(format!("mesh exceeds {max_vertices} vertices")));
            }
            new_tris.clear();
            if let Some((a, b)) = segq.pop_front() {
                let Some((t, i)) = self.find_edge(a, b) else { continue };
                if self.t(t).c[i] == 0 || self.p(a).dist(self.p(b)) < tiny {
                    continue;
                }
                let p = self.split_point(a, b);
                new_tris = self.split_at(t, i, p)?.1;
            } else if let Some((t, v)) = triq.pop_front() {
                let tri = *self.t(t);
                if !tri.alive || tri.v != v || !tri.inside || !self.is_bad(t, cos_bound, size, tiny) {
                    continue;
                }
                let (a, b, c) = (self.p(v[0]), self.p(v[1]), self.p(v[2]));
                let cc = circumcenter(a, b, c);
                if !cc.is_finite() {
                    continue;
                }
                match self.walk(t, cc) {
                    Walk::Vertex => continue,
                    Walk::Blocked(t2, i) => {
                        let (sa, sb) = self.edge(t2, i);
                        if self.t(t2).c[i] != 0 && self.p(sa).dist(self.p(sb)) >= tiny {
                            let p = self.split_point(sa, sb);
                            new_tris = self.split_at(t2, i, p)?.1;
                        }
                        triq.push_back((t, v));
                    }
                    walk => {
                        let seeds = match walk {
                            Walk::Reached(t2) => vec![t2],
                            Walk::OnEdge(t2, i) => vec![t2, self.t(t2).n[i]],
                            _ => unreachable!(),
                        };
                        let Some((cav, bnd)) = self.cavity(cc, &seeds) else { continue };
                        let hit: Vec<(u32, u32)> = bnd
                            .iter()
                            .filter(|e| {
                                let (pa, pb) = (self.p(e.a), self.p(e.b));
                                e.c != 0 && (pa - cc).dot(pb - cc) < 0.0 && pa.dist(pb) >= tiny
                            })
                            .map(|e| (e.a, e.b))
                            .collect();
                        if hit.is_empty() {
                            let pv = self.push_point(cc, false);
                            new_tris = self.commit(pv, &cav, &bnd, None);
                        } else {
                            segq.extend(hit);
                            triq.push_back((t, v));
                            continue;
                        }
                    }
                }
            } else {
                break;
            }
            for &t in &new_tris {
                let tri = *self.t(t);
                if !tri.inside {
                    continue;
                }
                triq.push_back((t, tri.v));
                for i in 0..3 {
                    if tri.c[i] != 0 && self.encroached(t, i, size) {
                        segq.push_back(self.edge(t, i));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(cdt: &mut Cdt) -> Vec<u32> {
        [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
            .iter()
            .map(|&(x, y)| cdt.insert(Point2::new(x, y), true).unwrap())
            .collect()
    }

    fn check_links(cdt: &Cdt) {
        for (k, t) in cdt.tris.iter().enumerate().filter(|(_, t)| t.alive) {
            let (a, b, c) = (cdt.p(t.v[0]), cdt.p(t.v[1]), cdt.p(t.v[2]));
            assert!(orient(a, b, c) > 0.0);
            for i in 0..3 {
                let nb = t.n[i];
                if nb == NONE {
                    continue;
                }
                let o = cdt.t(nb);
                assert!(o.alive);
                let j = o.n.iter().position(|&x| x == k as u32).expect("symmetric link");
                assert_eq!(o.c[j], t.c[i]);
            }
        }
    }

    #[test]
    fn delaunay_square_grid() {
        let mut cdt = Cdt::new(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0));
        for i in 0..=4 {
            for j in 0..=4 {
                cdt.insert(Point2::new(i as f64 * 0.25, j as f64 * 0.25), true).unwrap();
            }
        }
        check_links(&cdt);
        // every live triangle is locally Delaunay
        for t in cdt.tris.iter().filter(|t| t.alive) {
            for i in 0..3 {
                if t.n[i] == NONE {
                    continue;
                }
                let o = cdt.t(t.n[i]);
                let far = o.v.iter().copied().find(|x| !t.v.contains(x)).unwrap();
                let v = t.v;
                assert!(incircle(cdt.p(v[0]), cdt.p(v[1]), cdt.p(v[2]), cdt.p(far)) <= 0.0);
            }
        }
    }

    #[test]
    fn segment_recovery_and_refinement() {
        let mut cdt = Cdt::new(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0));
        let v = square(&mut cdt);
        for k in 0..4 {
            cdt.insert_segment(v[k], v[(k + 1) % 4], 1).unwrap();
        }
        let inner = cdt.insert(Point2::new(0.2, 0.5), true).unwrap();
        let inner2 = cdt.insert(Point2::new(0.8, 0.5), true).unwrap();
        cdt.insert_segment(inner, inner2, 2).unwrap();
        check_links(&cdt);
        cdt.classify(|p| p.x > 0.0 && p.x < 1.0 && p.y > 0.0 && p.y < 1.0);
        cdt.refine(25.0, &SizingField::uniform(0.1), 100_000).unwrap();
        check_links(&cdt);
        let area: f64 = cdt
            .tris
            .iter()
            .filter(|t| t.alive && t.inside)
            .map(|t| 0.5 * orient(cdt.p(t.v[0]), cdt.p(t.v[1]), cdt.p(t.v[2])))
            .sum();
        assert!((area - 1.0).abs() < 1e-12);
        let interior_len: f64 = cdt
            .tris
            .iter()
            .filter(|t| t.alive)
            .flat_map(|t| (0..3).filter(|&i| t.c[i] == 2).map(move |i| (t, i)))
            .map(|(t, i)| cdt.p(t.v[(i + 1) % 3]).dist(cdt.p(t.v[(i + 2) % 3])))
            .sum();
        assert!((interior_len - 1.2).abs() < 1e-12, "{interior_len}");
    }
}
