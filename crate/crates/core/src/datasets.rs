//! Synthetic disconnected 2-D datasets.
//!
//! A dataset is a union of `K` closed connected regions with a certified
//! strictly positive minimum pairwise distance. Points are drawn by picking
//! a label from `Cat(π)` and then a uniform point of that region.

use std::f64::consts::TAU;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::networks::validate_weights;

/// Distances below this are treated as touching.
pub const TOUCH_TOLERANCE: f64 = 1e-9;

/// A closed connected region of the plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ComponentSpec {
    Disk {
        center: [f64; 2],
        radius: f64,
    },
    /// Annular sector `inner ≤ ρ ≤ outer`, angle in `[start, start + sweep]`
    /// (radians, `0 < sweep ≤ 2π`).
    AnnulusArc {
        center: [f64; 2],
        inner: f64,
        outer: f64,
        start: f64,
        sweep: f64,
    },
    /// Axis-aligned box.
    Box {
        center: [f64; 2],
        half_width: f64,
        half_height: f64,
    },
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = sub(b, a);
    let ap = sub(p, a);
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    };
    norm([ap[0] - t * ab[0], ap[1] - t * ab[1]])
}

fn polar(center: [f64; 2], r: f64, theta: f64) -> [f64; 2] {
    [center[0] + r * theta.cos(), center[1] + r * theta.sin()]
}

/// A boundary curve parametrized over `[0, 1]`.
#[derive(Clone, Copy, Debug)]
enum Piece {
    Segment([f64; 2], [f64; 2]),
    Arc {
        center: [f64; 2],
        radius: f64,
        start: f64,
        sweep: f64,
    },
}

impl Piece {
    fn at(&self, t: f64) -> [f64; 2] {
        match *self {
            Piece::Segment(a, b) => [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])],
            Piece::Arc {
                center,
                radius,
                start,
                sweep,
            } => polar(center, radius, start + t * sweep),
        }
    }
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn in_sweep(theta: f64, start: f64, sweep: f64) -> bool {
    sweep >= TAU || (theta - start).rem_euclid(TAU) <= sweep
}

fn segments_intersect(a0: [f64; 2], a1: [f64; 2], b0: [f64; 2], b1: [f64; 2]) -> bool {
    let d1 = cross(sub(a1, a0), sub(b0, a0));
    let d2 = cross(sub(a1, a0), sub(b1, a0));
    let d3 = cross(sub(b1, b0), sub(a0, b0));
    let d4 = cross(sub(b1, b0), sub(a1, b0));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

fn point_arc_distance(p: [f64; 2], center: [f64; 2], radius: f64, start: f64, sweep: f64) -> f64 {
    let v = sub(p, center);
    let rho = norm(v);
    if rho == 0.0 || in_sweep(v[1].atan2(v[0]), start, sweep) {
        (rho - radius).abs()
    } else {
        let e0 = norm(sub(p, polar(center, radius, start)));
        let e1 = norm(sub(p, polar(center, radius, start + sweep)));
        e0.min(e1)
    }
}

impl Piece {
    fn endpoints(&self) -> Vec<[f64; 2]> {
        match *self {
            Piece::Arc { sweep, .. } if sweep >= TAU => Vec::new(),
            _ => vec![self.at(0.0), self.at(1.0)],
        }
    }

    fn point_distance(&self, p: [f64; 2]) -> f64 {
        match *self {
            Piece::Segment(a, b) => point_segment_distance(p, a, b),
            Piece::Arc {
                center,
                radius,
                start,
                sweep,
            } => point_arc_distance(p, center, radius, start, sweep),
        }
    }

    fn on_arc(&self, q: [f64; 2]) -> bool {
        match *self {
            Piece::Arc {
                center,
                start,
                sweep,
                ..
            } => {
                let v = sub(q, center);
                in_sweep(v[1].atan2(v[0]), start, sweep)
            }
            Piece::Segment(..) => true,
        }
    }

    /// Exact distance between two boundary curves. The minimum sits at an
    /// endpoint, at a crossing, or on a common normal line.
    fn distance(&self, other: &Piece) -> f64 {
        let mut best = f64::INFINITY;
        for p in self.endpoints() {
            best = best.min(other.point_distance(p));
        }
        for p in other.endpoints() {
            best = best.min(self.point_distance(p));
        }
        match (*self, *other) {
            (Piece::Segment(a0, a1), Piece::Segment(b0, b1)) => {
                if segments_intersect(a0, a1, b0, b1) {
                    best = 0.0;
                }
            }
            (Piece::Segment(a0, a1), arc @ Piece::Arc { center, radius, .. })
            | (arc @ Piece::Arc { center, radius, .. }, Piece::Segment(a0, a1)) => {
                let d = sub(a1, a0);
                let f = sub(a0, center);
                let dd = d[0] * d[0] + d[1] * d[1];
                if dd > 0.0 {
                    let foot_t = -(f[0] * d[0] + f[1] * d[1]) / dd;
                    if (0.0..=1.0).contains(&foot_t) {
                        best = best.min(
                            arc.point_distance([a0[0] + foot_t * d[0], a0[1] + foot_t * d[1]]),
                        );
                    }
                    let b = f[0] * d[0] + f[1] * d[1];
                    let c = f[0] * f[0] + f[1] * f[1] - radius * radius;
                    let disc = b * b - dd * c;
                    if disc >= 0.0 {
                        for t in [(-b - disc.sqrt()) / dd, (-b + disc.sqrt()) / dd] {
                            if (0.0..=1.0).contains(&t)
                                && arc.on_arc([a0[0] + t * d[0], a0[1] + t * d[1]])
                            {
                                best = 0.0;
                            }
                        }
                    }
                }
            }
            (
                Piece::Arc {
                    center: c1,
                    radius: r1,
                    start: s1,
                    sweep: w1,
                },
                Piece::Arc {
                    center: c2,
                    radius: r2,
                    start: s2,
                    sweep: w2,
                },
            ) => {
                let u = sub(c2, c1);
                let dist = norm(u);
                if dist == 0.0 {
                    if in_sweep(s2, s1, w1) || in_sweep(s1, s2, w2) {
                        best = best.min((r1 - r2).abs());
                    }
                } else {
                    let phi = u[1].atan2(u[0]);
                    for ta in [phi, phi + std::f64::consts::PI] {
                        for tb in [phi, phi + std::f64::consts::PI] {
                            if in_sweep(ta, s1, w1) && in_sweep(tb, s2, w2) {
                                best = best.min(norm(sub(polar(c1, r1, ta), polar(c2, r2, tb))));
                            }
                        }
                    }
                    if dist <= r1 + r2 && dist >= (r1 - r2).abs() {
                        let a = (dist * dist + r1 * r1 - r2 * r2) / (2.0 * dist);
                        let h = (r1 * r1 - a * a).max(0.0).sqrt();
                        let e = [u[0] / dist, u[1] / dist];
                        for s in [-1.0, 1.0] {
                            let q = [
                                c1[0] + a * e[0] - s * h * e[1],
                                c1[1] + a * e[1] + s * h * e[0],
                            ];
                            if self.on_arc(q) && other.on_arc(q) {
                                best = 0.0;
                            }
                        }
                    }
                }
            }
        }
        best
    }
}

impl ComponentSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = |vals: &[f64]| vals.iter().all(|v| v.is_finite());
        let ok = match *self {
            ComponentSpec::Disk { center, radius } => {
                finite(&[center[0], center[1], radius]) && radius > 0.0
            }
            ComponentSpec::AnnulusArc {
                center,
                inner,
                outer,
                start,
                sweep,
            } => {
                finite(&[center[0], center[1], inner, outer, start, sweep])
                    && inner >= 0.0
                    && outer > inner
                    && sweep > 0.0
                    && sweep <= TAU
            }
            ComponentSpec::Box {
                center,
                half_width,
                half_height,
            } => {
                finite(&[center[0], center[1], half_width, half_height])
                    && half_width > 0.0
                    && half_height > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::contract(format!(
                "invalid component geometry: {self}"
            )))
        }
    }

    /// Euclidean distance from `p` to the closed region (0 inside).
    pub fn distance(&self, p: [f64; 2]) -> f64 {
        match *self {
            ComponentSpec::Disk { center, radius } => (norm(sub(p, center)) - radius).max(0.0),
            ComponentSpec::Box {
                center,
                half_width,
                half_height,
            } => {
                let dx = ((p[0] - center[0]).abs() - half_width).max(0.0);
                let dy = ((p[1] - center[1]).abs() - half_height).max(0.0);
                dx.hypot(dy)
            }
            ComponentSpec::AnnulusArc {
                center,
                inner,
                outer,
                start,
                sweep,
            } => {
                let v = sub(p, center);
                let rho = norm(v);
                let rel = (v[1].atan2(v[0]) - start).rem_euclid(TAU);
                if rel <= sweep || sweep >= TAU {
                    (inner - rho).max(rho - outer).max(0.0)
                } else {
                    // outside the angular range the nearest point lies on an end edge
                    let e0 = point_segment_distance(
                        p,
                        polar(center, inner, start),
                        polar(center, outer, start),
                    );
                    let end = start + sweep;
                    let e1 = point_segment_distance(
                        p,
                        polar(center, inner, end),
                        polar(center, outer, end),
                    );
                    e0.min(e1)
                }
            }
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.distance(p) == 0.0
    }

    fn boundary(&self) -> Vec<Piece> {
        match *self {
            ComponentSpec::Disk { center, radius } => vec![Piece::Arc {
                center,
                radius,
                start: 0.0,
                sweep: TAU,
            }],
            ComponentSpec::Box {
                center,
                half_width: w,
                half_height: h,
            } => {
                let c = |sx: f64, sy: f64| [center[0] + sx * w, center[1] + sy * h];
                vec![
                    Piece::Segment(c(-1.0, -1.0), c(1.0, -1.0)),
                    Piece::Segment(c(1.0, -1.0), c(1.0, 1.0)),
                    Piece::Segment(c(1.0, 1.0), c(-1.0, 1.0)),
                    Piece::Segment(c(-1.0, 1.0), c(-1.0, -1.0)),
                ]
            }
            ComponentSpec::AnnulusArc {
                center,
                inner,
                outer,
                start,
                sweep,
            } => {
                let mut pieces = vec![Piece::Arc {
                    center,
                    radius: outer,
                    start,
                    sweep,
                }];
                if inner > 0.0 {
                    pieces.push(Piece::Arc {
                        center,
                        radius: inner,
                        start,
                        sweep,
                    });
                }
                if sweep < TAU {
                    for a in [start, start + sweep] {
                        pieces.push(Piece::Segment(
                            polar(center, inner, a),
                            polar(center, outer, a),
                        ));
                    }
                }
                pieces
            }
        }
    }

    /// Distance between two closed regions: closed form when either is a
    /// disk or both are boxes, exact boundary curve distances otherwise.
    pub fn distance_to(&self, other: &ComponentSpec) -> f64 {
        match (*self, *other) {
            (ComponentSpec::Disk { center, radius }, o)
            | (o, ComponentSpec::Disk { center, radius }) => (o.distance(center) - radius).max(0.0),
            (
                ComponentSpec::Box {
                    center: c1,
                    half_width: w1,
                    half_height: h1,
                },
                ComponentSpec::Box {
                    center: c2,
                    half_width: w2,
                    half_height: h2,
                },
            ) => {
                let dx = ((c1[0] - c2[0]).abs() - w1 - w2).max(0.0);
                let dy = ((c1[1] - c2[1]).abs() - h1 - h2).max(0.0);
                dx.hypot(dy)
            }
            _ => {
                let (pa, pb) = (self.boundary(), other.boundary());
                if self.contains(pb[0].at(0.0)) || other.contains(pa[0].at(0.0)) {
                    return 0.0;
                }
                pa.iter()
                    .flat_map(|a| pb.iter().map(move |b| a.distance(b)))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Uniform point of the region.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        loop {
            let p = match *self {
                ComponentSpec::Disk { center, radius } => {
                    let r = radius * rng.random::<f64>().sqrt();
                    polar(center, r, TAU * rng.random::<f64>())
                }
                ComponentSpec::AnnulusArc {
                    center,
                    inner,
                    outer,
                    start,
                    sweep,
                } => {
                    let u: f64 = rng.random();
                    let r = (inner * inner + u * (outer * outer - inner * inner)).sqrt();
                    polar(center, r, start + sweep * rng.random::<f64>())
                }
                ComponentSpec::Box {
                    center,
                    half_width,
                    half_height,
                } => [
                    center[0] + half_width * rng.random_range(-1.0..=1.0),
                    center[1] + half_height * rng.random_range(-1.0..=1.0),
                ],
            };
            // rounding can push a draw a few ulps past the boundary
            if self.contains(p) {
                return p;
            }
        }
    }

    pub fn center(&self) -> [f64; 2] {
        match *self {
            ComponentSpec::Disk { center, .. }
            | ComponentSpec::AnnulusArc { center, .. }
            | ComponentSpec::Box { center, .. } => center,
        }
    }
}

impl fmt::Display for ComponentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComponentSpec::Disk { center, radius } => {
                write!(f, "disk {} {} {}", center[0], center[1], radius)
            }
            ComponentSpec::AnnulusArc {
                center,
                inner,
                outer,
                start,
                sweep,
            } => write!(
                f,
                "arc {} {} {} {} {} {}",
                center[0], center[1], inner, outer, start, sweep
            ),
            ComponentSpec::Box {
                center,
                half_width,
                half_height,
            } => write!(
                f,
                "box {} {} {} {}",
                center[0], center[1], half_width, half_height
            ),
        }
    }
}

impl FromStr for ComponentSpec {
    type Err = Error;

    /// `disk CX CY R`, `arc CX CY INNER OUTER START SWEEP`, `box CX CY HW HH`.
    fn from_str(s: &str) -> Result<Self> {
        let mut it = s.split_whitespace();
        let kind = it.next().unwrap_or("");
        let nums = it
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::parse(format!("bad number `{v}` in `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = match (kind, nums.as_slice()) {
            ("disk", &[x, y, r]) => ComponentSpec::Disk {
                center: [x, y],
                radius: r,
            },
            ("arc", &[x, y, inner, outer, start, sweep]) => ComponentSpec::AnnulusArc {
                center: [x, y],
                inner,
                outer,
                start,
                sweep,
            },
            ("box", &[x, y, w, h]) => ComponentSpec::Box {
                center: [x, y],
                half_width: w,
                half_height: h,
            },
            _ => return Err(Error::parse(format!("unrecognized component `{s}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Certified minimum pairwise distance. Fails on the first touching or
/// overlapping pair.
pub fn certify_separation(components: &[ComponentSpec]) -> Result<f64> {
    if components.is_empty() {
        return Err(Error::contract("dataset needs at least one component"));
    }
    for c in components {
        c.validate()?;
    }
    let mut d = f64::INFINITY;
    for a in 0..components.len() {
        for b in a + 1..components.len() {
            let dist = components[a].distance_to(&components[b]);
            if dist <= TOUCH_TOLERANCE {
                return Err(Error::Overlap {
                    a,
                    b,
                    distance: dist,
                });
            }
            d = d.min(dist);
        }
    }
    Ok(d)
}

/// Draws an index from `Cat(weights)`.
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// `π̂_i = count_i / N`.
pub fn mle_mixture_weights(labels: &[usize], k: usize) -> Result<Vec<f64>> {
    if labels.is_empty() {
        return Err(Error::contract(
            "cannot estimate mixture weights from no labels",
        ));
    }
    let mut counts = vec![0usize; k];
    for &l in labels {
        if l >= k {
            return Err(Error::contract(format!("label {l} outside [0, {k})")));
        }
        counts[l] += 1;
    }
    let n = labels.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// `K` labelled components with certified separation and drawn samples.
#[derive(Clone, Debug, PartialEq)]
pub struct DisconnectedDataset {
    components: Vec<ComponentSpec>,
    weights: Vec<f64>,
    separation: f64,
    seed: u64,
    points: Vec<[f64; 2]>,
    labels: Vec<usize>,
}

impl DisconnectedDataset {
    pub fn build(
        components: Vec<ComponentSpec>,
        weights: Vec<f64>,
        n: usize,
        seed: u64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::contract("dataset size must be positive"));
        }
        validate_weights(&weights)?;
        if weights.len() != components.len() {
            return Err(Error::contract(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        let separation = certify_separation(&components)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let k = sample_categorical(&weights, &mut rng);
            labels.push(k);
            points.push(components[k].sample(&mut rng));
        }
        Ok(DisconnectedDataset {
            components,
            weights,
            separation,
            seed,
            points,
            labels,
        })
    }

    /// Unit disks at `(±3, 0)`, equal weights; separation 4.
    pub fn two_blobs(n: usize, seed: u64) -> Result<Self> {
        DisconnectedDataset::build(
            vec![
                ComponentSpec::Disk {
                    center: [-3.0, 0.0],
                    radius: 1.0,
                },
                ComponentSpec::Disk {
                    center: [3.0, 0.0],
                    radius: 1.0,
                },
            ],
            vec![0.5, 0.5],
            n,
            seed,
        )
    }

    /// `k` equal-weight disks of radius `disk_radius` evenly spaced on a
    /// circle of radius `ring_radius`.
    pub fn ring_of_disks(
        k: usize,
        ring_radius: f64,
        disk_radius: f64,
        n: usize,
        seed: u64,
    ) -> Result<Self> {
        let components = (0..k)
            .map(|i| ComponentSpec::Disk {
                center: polar([0.0, 0.0], ring_radius, TAU * i as f64 / k as f64),
                radius: disk_radius,
            })
            .collect();
        DisconnectedDataset::build(components, vec![1.0 / k as f64; k], n, seed)
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[ComponentSpec] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn separation(&self) -> f64 {
        self.separation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Default out-of-support threshold, `d / 4`.
    pub fn default_threshold(&self) -> f64 {
        self.separation / 4.0
    }

    pub fn class_points(&self, k: usize) -> Vec<[f64; 2]> {
        self.points
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == k)
            .map(|(p, _)| *p)
            .collect()
    }

    /// Distance to the nearest component and its index (lowest on ties).
    pub fn distance_to_support(&self, x: [f64; 2]) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for (k, c) in self.components.iter().enumerate() {
            let d = c.distance(x);
            if d < best.0 {
                best = (d, k);
            }
        }
        best
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x0,x1,label")?;
        for (p, l) in self.points.iter().zip(&self.labels) {
            writeln!(w, "{},{},{}", p[0], p[1], l)?;
        }
        Ok(())
    }

    pub fn write_meta<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k = {}", self.k())?;
        writeln!(w, "n = {}", self.len())?;
        writeln!(w, "seed = {}", self.seed)?;
        writeln!(w, "separation = {}", self.separation)?;
        let ws: Vec<String> = self.weights.iter().map(|v| v.to_string()).collect();
        writeln!(w, "weights = {}", ws.join(" "))?;
        for (i, c) in self.components.iter().enumerate() {
            writeln!(w, "component.{i} = {c}")?;
        }
        Ok(())
    }

    /// Writes `<stem>.csv` and `<stem>.meta`.
    pub fn save(&self, csv_path: &Path, meta_path: &Path) -> Result<()> {
        let mut csv = std::io::BufWriter::new(std::fs::File::create(csv_path)?);
        self.write_csv(&mut csv)?;
        csv.flush()?;
        let mut meta = std::io::BufWriter::new(std::fs::File::create(meta_path)?);
        self.write_meta(&mut meta)?;
        meta.flush()?;
        Ok(())
    }

    /// Reads a CSV + metadata pair, re-certifying separation and sample
    /// membership.
    pub fn read<C: BufRead, M: BufRead>(csv: C, meta: M) -> Result<Self> {
        let mut kv = std::collections::BTreeMap::new();
        for line in meta.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("metadata line without `=`: `{line}`")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |key: &str| -> Result<&String> {
            kv.get(key)
                .ok_or_else(|| Error::parse(format!("metadata missing `{key}`")))
        };
        let parse_num = |key: &str| -> Result<f64> {
            get(key)?
                .parse::<f64>()
                .map_err(|_| Error::parse(format!("bad `{key}`")))
        };
        let k = parse_num("k")? as usize;
        let seed: u64 = get("seed")?
            .parse()
            .map_err(|_| Error::parse("bad `seed`"))?;
        let separation = parse_num("separation")?;
        let weights = get("weights")?
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| Error::parse("bad `weights`")))
            .collect::<Result<Vec<_>>>()?;
        let components = (0..k)
            .map(|i| get(&format!("component.{i}"))?.parse())
            .collect::<Result<Vec<ComponentSpec>>>()?;
        validate_weights(&weights)?;
        if weights.len() != k {
            return Err(Error::parse(format!(
                "{} weights for k = {k}",
                weights.len()
            )));
        }
        let certified = certify_separation(&components)?;
        if (certified - separation).abs() > 1e-9 * separation.max(1.0) {
            return Err(Error::parse(format!(
                "metadata separation {separation} disagrees with certified {certified}"
            )));
        }

        let mut points = Vec::new();
        let mut labels = Vec::new();
        let mut lines = csv.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != "x0,x1,label" {
            return Err(Error::parse(format!("unexpected CSV header `{header}`")));
        }
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let bad = || Error::parse(format!("bad CSV row {}: `{line}`", row + 2));
            if fields.len() != 3 {
                return Err(bad());
            }
            let x0: f64 = fields[0].trim().parse().map_err(|_| bad())?;
            let x1: f64 = fields[1].trim().parse().map_err(|_| bad())?;
            let label: usize = fields[2].trim().parse().map_err(|_| bad())?;
            if label >= k || !components[label].contains([x0, x1]) {
                return Err(Error::parse(format!(
                    "row {} does not lie in its labelled component",
                    row + 2
                )));
            }
            points.push([x0, x1]);
            labels.push(label);
        }
        if let Some(n) = kv.get("n") {
            if n.parse::<usize>().ok() != Some(points.len()) {
                return Err(Error::parse(format!(
                    "metadata n = {n}, CSV has {} rows",
                    points.len()
                )));
            }
        }
        Ok(DisconnectedDataset {
            components,
            weights,
            separation: certified,
            seed,
            points,
            labels,
        })
    }

    pub fn load(csv_path: &Path, meta_path: &Path) -> Result<Self> {
        let csv = std::io::BufReader::new(std::fs::File::open(csv_path)?);
        let meta = std::io::BufReader::new(std::fs::File::open(meta_path)?);
        DisconnectedDataset::read(csv, meta)
    }
}
