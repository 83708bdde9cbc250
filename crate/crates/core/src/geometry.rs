//! Nested-fractal cell and vertex combinatorics.
//!
//! A fractal is generated by `N` planar similitudes `Ψ_i(x) = U x / L + ν_i`
//! with a common contraction `1/L` and a common rotation `U`.  The bounded
//! complex `K^<M> = L^M K^<0>` is subdivided `n` generations into cells of
//! size `L^(M-n)`; two lattice vertices are adjacent when they are corners
//! of a common cell.  Vertex identity is symbolic: every vertex carries the
//! lexicographically least `(cell word, corner)` pair among its containing
//! cells, and geometric coincidence is decided in exact arithmetic.

use crate::exact::{
    interiors_disjoint, rational_to_f64, Exact, Matrix2, Point, RigidMotion,
};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::ops::Neg;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("axiom violated: {0}")]
    AxiomViolation(String),
    #[error("inputs are not planar 2-D similitudes")]
    NotPlanar,
    #[error("rotation angle {0}° is not exactly representable (multiples of 30° only)")]
    NotRepresentable(i64),
    #[error("lattice would have {0} corner slots, exceeding the cap {1}")]
    SizeLimit(usize, usize),
    #[error("vertex or point is not in the enumerated lattice region")]
    OutOfLattice,
    #[error("no walk time-scale τ known for '{0}'; supply one explicitly")]
    MissingTimeScale(String),
}

/// One map of the iterated function system.
#[derive(Clone, Debug)]
pub struct Similitude {
    /// Contraction ratio `1/L`.
    pub inv_scale: BigRational,
    /// Common isometry part, degrees counterclockwise (multiple of 30°).
    pub rotation_degrees: i64,
    /// Translation ν_i; the first map must have ν_1 = 0.
    pub translation: Point,
}

/// Optional extras supplied alongside the raw maps.
#[derive(Clone, Debug, Default)]
pub struct SpecOptions {
    pub name: Option<String>,
    /// Walk renormalization factor τ; overrides the registry.
    pub time_scale: Option<f64>,
}

/// Immutable description of the fractal plus derived constants.
#[derive(Clone, Debug)]
pub struct FractalSpec {
    pub name: String,
    /// Number of maps N.
    pub num_maps: usize,
    /// Linear scale L > 1 (exact).
    pub scale: BigRational,
    pub scale_f64: f64,
    /// Number of essential fixed points k (polygon corners).
    pub k: usize,
    pub rotation_degrees: i64,
    pub translations: Vec<Point>,
    /// Corners of K^<0>, indexed by angular position around the barycenter.
    pub corners: Vec<Point>,
    pub barycenter: Point,
    /// Hausdorff dimension d = log N / log L.
    pub hausdorff_dim: f64,
    /// Maximal vertex rank r_0.
    pub max_rank: usize,
    /// Walk time-scale τ (one subdivision step costs a factor τ in time).
    pub time_scale: f64,
    /// Coefficient c of the spectral decimation map z ↦ z(c - z), when the
    /// fractal has one (the gasket: c = 5).
    pub decimation_coeff: Option<f64>,
}

impl FractalSpec {
    /// Effective walk dimension log τ / log L.
    pub fn walk_dim(&self) -> f64 {
        self.time_scale.ln() / self.scale_f64.ln()
    }

    /// Exact L^e for signed exponents.
    pub fn scale_pow(&self, e: i64) -> BigRational {
        pow_rational(&self.scale, e)
    }

    /// Stable content hash of the defining data.
    pub fn content_hash(&self) -> u64 {
        let mut h = Fnv::new();
        h.write(self.name.as_bytes());
        h.write(&self.num_maps.to_le_bytes());
        h.write(self.scale.to_string().as_bytes());
        h.write(&self.rotation_degrees.to_le_bytes());
        for t in &self.translations {
            h.write(t.x.a.to_string().as_bytes());
            h.write(t.x.b.to_string().as_bytes());
            h.write(t.y.a.to_string().as_bytes());
            h.write(t.y.b.to_string().as_bytes());
        }
        h.finish()
    }

    /// The Sierpiński gasket: N = 3, L = 2, k = 3.
    pub fn gasket() -> Arc<FractalSpec> {
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        let maps = vec![
            Similitude {
                inv_scale: half.clone(),
                rotation_degrees: 0,
                translation: Point::origin(),
            },
            Similitude {
                inv_scale: half.clone(),
                rotation_degrees: 0,
                translation: Point::new(Exact::from_ratio(1, 2), Exact::zero()),
            },
            Similitude {
                inv_scale: half,
                rotation_degrees: 0,
                translation: Point::new(Exact::from_ratio(1, 4), Exact::sqrt3_ratio(1, 4)),
            },
        ];
        Arc::new(
            build_spec(
                &maps,
                &SpecOptions { name: Some("gasket".into()), time_scale: None },
            )
            .expect("gasket registry entry must build"),
        )
    }

    /// The Vicsek cross: N = 5, L = 3, k = 4.
    pub fn vicsek() -> Arc<FractalSpec> {
        let third = BigRational::new(BigInt::one(), BigInt::from(3));
        let t = |x: (i64, i64), y: (i64, i64)| Point::new(Exact::from_ratio(x.0, x.1), Exact::from_ratio(y.0, y.1));
        let maps = vec![
            Similitude { inv_scale: third.clone(), rotation_degrees: 0, translation: Point::origin() },
            Similitude { inv_scale: third.clone(), rotation_degrees: 0, translation: t((2, 3), (0, 1)) },
            Similitude { inv_scale: third.clone(), rotation_degrees: 0, translation: t((2, 3), (2, 3)) },
            Similitude { inv_scale: third.clone(), rotation_degrees: 0, translation: t((0, 1), (2, 3)) },
            Similitude { inv_scale: third, rotation_degrees: 0, translation: t((1, 3), (1, 3)) },
        ];
        Arc::new(
            build_spec(
                &maps,
                &SpecOptions { name: Some("vicsek".into()), time_scale: None },
            )
            .expect("vicsek registry entry must build"),
        )
    }

    pub fn by_name(name: &str) -> Option<Arc<FractalSpec>> {
        match name {
            "gasket" => Some(Self::gasket()),
            "vicsek" => Some(Self::vicsek()),
            _ => None,
        }
    }
}

/// Registry of walk time-scales for the shipped fractals.
fn registry_time_scale(name: &str) -> Option<f64> {
    match name {
        "gasket" => Some(5.0),
        "vicsek" => Some(15.0),
        _ => None,
    }
}

/// Symbolic address of a cell: an `ℓ`-complex at `K^<ℓ> + Σ_t L^(ℓ+t) ν_(w_t)`,
/// digits coarse-to-fine, canonical form strips leading zero digits.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellAddress {
    pub level: i64,
    pub word: Vec<u8>,
}

impl CellAddress {
    pub fn canonical(mut self) -> CellAddress {
        while let Some(&0) = self.word.first() {
            self.word.remove(0);
        }
        self
    }

    pub fn dotted(&self) -> String {
        if self.word.is_empty() {
            "∅".to_string()
        } else {
            self.word.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(".")
        }
    }
}

impl fmt::Debug for CellAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}:{}", self.level, self.dotted())
    }
}

/// Canonical vertex identity: least containing cell plus corner position.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VertexId {
    pub cell: CellAddress,
    pub corner: u8,
}

impl VertexId {
    pub fn stable_key(&self) -> u64 {
        let mut h = Fnv::new();
        h.write(&self.cell.level.to_le_bytes());
        h.write(&self.cell.word);
        h.write(&[self.corner]);
        h.finish()
    }
}

impl fmt::Debug for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}#{}", self.cell, self.corner)
    }
}

#[derive(Clone, Debug)]
pub struct VertexData {
    pub id: VertexId,
    pub position: Point,
    pub xy: (f64, f64),
    /// Number of depth-n cells of this lattice containing the vertex.
    pub rank: usize,
    /// Containing cell indices, ascending.
    pub cells: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct CellData {
    pub address: CellAddress,
    /// Vertex indices by angular corner position 0..k.
    pub corners: Vec<usize>,
    pub barycenter: Point,
}

/// Finite piece of the fractal lattice: `K^<M>` subdivided `n` generations.
#[derive(Clone)]
pub struct LatticeGraph {
    pub spec: Arc<FractalSpec>,
    pub level: i64,
    pub depth: usize,
    pub vertices: Vec<VertexData>,
    pub adjacency: Vec<Vec<usize>>,
    pub edges: Vec<(usize, usize)>,
    pub cells: Vec<CellData>,
    position_index: BTreeMap<Point, usize>,
}

impl LatticeGraph {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn find_position(&self, p: &Point) -> Option<usize> {
        self.position_index.get(p).copied()
    }

    pub fn find_id(&self, id: &VertexId) -> Option<usize> {
        self.vertices.iter().position(|v| &v.id == id)
    }

    /// Corner vertices of `K^<M>` itself (the k outer corners), by position.
    pub fn boundary_corners(&self) -> Vec<usize> {
        let scale = self.spec.scale_pow(self.level);
        self.spec
            .corners
            .iter()
            .map(|c| {
                let p = c.scale(&scale);
                self.find_position(&p).expect("outer corners are lattice vertices")
            })
            .collect()
    }

    /// Level of the finest cells (`M - n`).
    pub fn cell_level(&self) -> i64 {
        self.level - self.depth as i64
    }

    /// Prefix length corresponding to cells of `level` within this lattice.
    fn prefix_len(&self, level: i64) -> Option<usize> {
        if level < self.cell_level() || level > self.level {
            return None;
        }
        Some((self.level - level) as usize)
    }

    /// All level-`level` cell prefixes containing vertex `v`.
    pub fn containing_prefixes(&self, level: i64, v: usize) -> Option<BTreeSet<Vec<u8>>> {
        let len = self.prefix_len(level)?;
        let mut set = BTreeSet::new();
        for &c in &self.vertices[v].cells {
            set.insert(self.cells[c].address.word[..len].to_vec());
        }
        Some(set)
    }

    /// Number of level-`level` complexes meeting at `v` (its rank at that level).
    pub fn rank_at_level(&self, level: i64, v: usize) -> Result<usize, GeometryError> {
        if v >= self.vertices.len() {
            return Err(GeometryError::OutOfLattice);
        }
        let prefixes = self
            .containing_prefixes(level, v)
            .ok_or(GeometryError::OutOfLattice)?;
        Ok(prefixes.len())
    }

    /// Chain distance d_level(x, y): 0 if equal, else the least number of
    /// level-`level` complexes in a chain with consecutive members
    /// intersecting, the first containing x and the last containing y.
    pub fn graph_distance(&self, level: i64, x: usize, y: usize) -> Result<usize, GeometryError> {
        if x >= self.vertices.len() || y >= self.vertices.len() {
            return Err(GeometryError::OutOfLattice);
        }
        if x == y {
            return Ok(0);
        }
        let len = self.prefix_len(level).ok_or(GeometryError::OutOfLattice)?;
        // Group depth-n cells by their level prefix.
        let mut prefix_of_cell: Vec<usize> = Vec::with_capacity(self.cells.len());
        let mut prefix_ids: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
        for cell in &self.cells {
            let key = cell.address.word[..len].to_vec();
            let next = prefix_ids.len();
            let id = *prefix_ids.entry(key).or_insert(next);
            prefix_of_cell.push(id);
        }
        let n_nodes = prefix_ids.len();
        // Vertex -> chain-cells incidence.
        let mut cells_of_vertex: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.vertices.len()];
        for (v, data) in self.vertices.iter().enumerate() {
            for &c in &data.cells {
                cells_of_vertex[v].insert(prefix_of_cell[c]);
            }
        }
        // Chain-cell adjacency through shared vertices.
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_nodes];
        for sets in &cells_of_vertex {
            for &a in sets {
                for &b in sets {
                    if a != b {
                        adj[a].insert(b);
                    }
                }
            }
        }
        let start = &cells_of_vertex[x];
        let goal = &cells_of_vertex[y];
        if start.intersection(goal).next().is_some() {
            return Ok(1);
        }
        let mut dist = vec![usize::MAX; n_nodes];
        let mut q = VecDeque::new();
        for &s in start {
            dist[s] = 1;
            q.push_back(s);
        }
        while let Some(c) = q.pop_front() {
            if goal.contains(&c) {
                return Ok(dist[c]);
            }
            for &nb in &adj[c] {
                if dist[nb] == usize::MAX {
                    dist[nb] = dist[c] + 1;
                    q.push_back(nb);
                }
            }
        }
        Err(GeometryError::OutOfLattice)
    }

    /// Least level m (within this lattice's range) such that x and y lie in
    /// a common m-complex; None if they share no materialized complex.
    pub fn common_cell_level(&self, x: usize, y: usize) -> Option<i64> {
        for level in self.cell_level()..=self.level {
            let len = self.prefix_len(level).unwrap();
            let px = self.containing_prefixes(level, x).unwrap();
            for &c in &self.vertices[y].cells {
                if px.contains(&self.cells[c].address.word[..len].to_vec()) {
                    return Some(level);
                }
            }
        }
        None
    }

    /// Is the vertex a corner of some cell at `level` (i.e. in V_level)?
    pub fn is_level_vertex(&self, level: i64, v: usize) -> bool {
        let Some(len) = self.prefix_len(level) else {
            return false;
        };
        let pos = &self.vertices[v].position;
        let mut seen = BTreeSet::new();
        for &c in &self.vertices[v].cells {
            let prefix = self.cells[c].address.word[..len].to_vec();
            if !seen.insert(prefix.clone()) {
                continue;
            }
            let corners = cell_corner_points(&self.spec, self.level, &prefix);
            if corners.iter().any(|p| p == pos) {
                return true;
            }
        }
        false
    }

    /// Deterministic serialization used by the export interface.
    pub fn export_json(&self) -> serde_json::Value {
        let vertices: Vec<serde_json::Value> = self
            .vertices
            .iter()
            .map(|v| {
                serde_json::json!({
                    "id": format!("{:?}", v.id),
                    "x": v.xy.0,
                    "y": v.xy.1,
                    "rank": v.rank,
                })
            })
            .collect();
        let edges: Vec<[usize; 2]> = self.edges.iter().map(|&(a, b)| [a, b]).collect();
        let cells: Vec<String> = self.cells.iter().map(|c| c.address.dotted()).collect();
        serde_json::json!({
            "spec": {
                "name": self.spec.name,
                "num_maps": self.spec.num_maps,
                "scale": rational_to_f64(&self.spec.scale),
                "k": self.spec.k,
                "hausdorff_dim": self.spec.hausdorff_dim,
            },
            "M": self.level,
            "n": self.depth,
            "vertices": vertices,
            "edges": edges,
            "cells": cells,
        })
    }
}

/// Build and validate a `FractalSpec` from raw similitudes.
pub fn build_spec(maps: &[Similitude], options: &SpecOptions) -> Result<FractalSpec, GeometryError> {
    if maps.len() < 2 {
        return Err(GeometryError::AxiomViolation("need at least two maps".into()));
    }
    let inv_scale = &maps[0].inv_scale;
    let rotation = maps[0].rotation_degrees.rem_euclid(360);
    for m in maps {
        if &m.inv_scale != inv_scale {
            return Err(GeometryError::AxiomViolation("maps must share one contraction ratio".into()));
        }
        if m.rotation_degrees.rem_euclid(360) != rotation {
            return Err(GeometryError::AxiomViolation("maps must share one rotation part".into()));
        }
    }
    if !maps[0].translation.x.is_zero() || !maps[0].translation.y.is_zero() {
        return Err(GeometryError::AxiomViolation("first translation ν_1 must be zero".into()));
    }
    if inv_scale >= &BigRational::one() || inv_scale <= &BigRational::zero() {
        return Err(GeometryError::AxiomViolation("contraction must satisfy 0 < 1/L < 1".into()));
    }
    let scale = inv_scale.recip();
    let rot = Matrix2::rotation_degrees(rotation)
        .ok_or(GeometryError::NotRepresentable(rotation))?;

    // Fixed points: x = (I - U/L)^[-1] ν.
    let fixed_points: Vec<Point> = maps
        .iter()
        .map(|m| fixed_point(&rot, inv_scale, &m.translation))
        .collect();

    // Essential fixed points: x with Ψ_i(x) = Ψ_j(y) for another fixed y, i≠j.
    let apply_map = |m: &Similitude, p: &Point| -> Point {
        rot.apply(p).scale(inv_scale).add(&m.translation)
    };
    let mut essential: Vec<Point> = Vec::new();
    for (xi, x) in fixed_points.iter().enumerate() {
        let mut is_essential = false;
        'outer: for (yi, y) in fixed_points.iter().enumerate() {
            for (i, mi) in maps.iter().enumerate() {
                for (j, mj) in maps.iter().enumerate() {
                    if i == j {
                        continue;
                    }
                    let _ = (xi, yi);
                    if apply_map(mi, x) == apply_map(mj, y) {
                        is_essential = true;
                        break 'outer;
                    }
                }
            }
        }
        if is_essential && !essential.contains(x) {
            essential.push(x.clone());
        }
    }
    if essential.len() < 3 {
        return Err(GeometryError::AxiomViolation("k>=3".into()));
    }
    let k = essential.len();
    if 360 % (k as i64) != 0 || Matrix2::rotation_degrees(360 / k as i64).is_none() {
        return Err(GeometryError::NotRepresentable(360 / k as i64));
    }

    // Barycenter and the regular-polygon check.
    let kk = BigRational::new(BigInt::one(), BigInt::from(k as i64));
    let mut bary = Point::origin();
    for p in &essential {
        bary = bary.add(p);
    }
    let bary = bary.scale(&kk);
    let d0 = essential[0].dist2(&bary);
    for p in &essential {
        if p.dist2(&bary) != d0 {
            return Err(GeometryError::AxiomViolation(
                "essential fixed points are not a regular polygon".into(),
            ));
        }
    }
    let mut corners = essential;
    sort_by_angle(&mut corners, &bary);
    // The k-fold rotation about the barycenter must permute the corners.
    let step = Matrix2::rotation_degrees(360 / k as i64).unwrap();
    for p in &corners {
        let image = step.apply(&p.sub(&bary)).add(&bary);
        if !corners.contains(&image) {
            return Err(GeometryError::AxiomViolation("symmetry".into()));
        }
    }

    let n = maps.len();
    let scale_f64 = rational_to_f64(&scale);
    let hausdorff_dim = (n as f64).ln() / scale_f64.ln();
    let name = options.name.clone().unwrap_or_else(|| "custom".into());
    let time_scale = options
        .time_scale
        .or_else(|| registry_time_scale(&name))
        .ok_or_else(|| GeometryError::MissingTimeScale(name.clone()))?;

    let mut spec = FractalSpec {
        name: name.clone(),
        num_maps: n,
        scale,
        scale_f64,
        k,
        rotation_degrees: rotation,
        translations: maps.iter().map(|m| m.translation.clone()).collect(),
        corners,
        barycenter: bary,
        hausdorff_dim,
        max_rank: 0,
        time_scale,
        decimation_coeff: if name == "gasket" { Some(5.0) } else { None },
    };

    check_open_set_proxy(&spec)?;
    check_nesting(&spec)?;
    check_connectivity(&spec)?;

    // r_0 by brute-force enumeration of ranks three levels up.
    let probe = enumerate_lattice_arc(Arc::new(spec.clone()), 3, 3, 1 << 22)?;
    spec.max_rank = probe.vertices.iter().map(|v| v.rank).max().unwrap_or(1);
    if spec.k >= 4 && spec.max_rank != 2 {
        return Err(GeometryError::AxiomViolation(format!(
            "expected r_0 = 2 for k >= 4, found {}",
            spec.max_rank
        )));
    }
    if spec.k == 3 && !(spec.max_rank == 2 || spec.max_rank == 3) {
        return Err(GeometryError::AxiomViolation(format!(
            "expected r_0 in {{2,3}} for k = 3, found {}",
            spec.max_rank
        )));
    }
    Ok(spec)
}

fn fixed_point(rot: &Matrix2, inv_scale: &BigRational, translation: &Point) -> Point {
    // Solve (I - U/L) x = ν by the 2×2 adjugate.
    let u = rot;
    let s = Exact { a: inv_scale.clone(), b: BigRational::zero() };
    let a11 = &Exact::one() - &(&u.m[0][0] * &s);
    let a12 = (&(&u.m[0][1] * &s)).neg();
    let a21 = (&(&u.m[1][0] * &s)).neg();
    let a22 = &Exact::one() - &(&u.m[1][1] * &s);
    let det = &(&a11 * &a22) - &(&a12 * &a21);
    let det_inv = exact_inverse(&det);
    let x = &(&(&a22 * &translation.x) - &(&a12 * &translation.y)) * &det_inv;
    let y = &(&(&a11 * &translation.y) - &(&a21 * &translation.x)) * &det_inv;
    Point::new(x, y)
}

fn exact_inverse(v: &Exact) -> Exact {
    // (a + b√3)^-1 = (a - b√3) / (a² - 3b²)
    let denom = &v.a * &v.a - &v.b * &v.b * BigRational::from_integer(BigInt::from(3));
    assert!(!denom.is_zero(), "inverting zero element");
    let inv = denom.recip();
    Exact { a: &v.a * &inv, b: -(&v.b * &inv) }
}

fn sort_by_angle(points: &mut [Point], center: &Point) {
    points.sort_by(|p, q| angular_cmp(&p.sub(center), &q.sub(center)));
}

/// Exact counterclockwise angular order in [0, 2π).
fn angular_cmp(u: &Point, v: &Point) -> std::cmp::Ordering {
    let half = |p: &Point| -> u8 {
        // 0 for angle in [0, π), 1 for [π, 2π).
        let sy = p.y.signum();
        if sy > 0 || (sy == 0 && p.x.signum() > 0) {
            0
        } else {
            1
        }
    };
    let hu = half(u);
    let hv = half(v);
    if hu != hv {
        return hu.cmp(&hv);
    }
    // Same half-plane: cross product decides.
    let cross = &(&u.x * &v.y) - &(&u.y * &v.x);
    match cross.signum() {
        1 => std::cmp::Ordering::Less,
        -1 => std::cmp::Ordering::Greater,
        _ => std::cmp::Ordering::Equal,
    }
}

/// Affine image of point `p` under the depth-`word.len()` cell map of
/// `K^<level>`: `F_w(p) = L^(level-j) U^j p + Σ_i L^(level-i+1) U^(i-1) ν_(w_i)`.
fn cell_map(spec: &FractalSpec, level: i64, word: &[u8], p: &Point) -> Point {
    let rot = Matrix2::rotation_degrees(spec.rotation_degrees).unwrap();
    let j = word.len() as i64;
    let mut acc = p.scale(&spec.scale_pow(level - j));
    let mut u_pow = Matrix2::identity();
    for i in 0..word.len() {
        u_pow = if i == 0 { Matrix2::identity() } else { u_pow.mul(&rot) };
        let nu = &spec.translations[word[i] as usize];
        let term = u_pow.apply(nu).scale(&spec.scale_pow(level - i as i64));
        acc = acc.add(&term);
    }
    // Rotation applies to the recentered point as well when U ≠ I.
    if spec.rotation_degrees % 360 != 0 && !word.is_empty() {
        let mut r = Matrix2::identity();
        for _ in 0..word.len() {
            r = r.mul(&rot);
        }
        let rotated = r.apply(p).scale(&spec.scale_pow(level - j));
        let base = p.scale(&spec.scale_pow(level - j));
        acc = acc.sub(&base).add(&rotated);
    }
    acc
}

/// Exact corner positions of the cell of `K^<level>` addressed by `word`,
/// ordered by angular position around the cell barycenter.
pub fn cell_corner_points(spec: &FractalSpec, level: i64, word: &[u8]) -> Vec<Point> {
    let mut pts: Vec<Point> = spec
        .corners
        .iter()
        .map(|c| cell_map(spec, level, word, c))
        .collect();
    let kk = BigRational::new(BigInt::one(), BigInt::from(spec.k as i64));
    let mut bary = Point::origin();
    for p in &pts {
        bary = bary.add(p);
    }
    let bary = bary.scale(&kk);
    sort_by_angle(&mut pts, &bary);
    pts
}

fn check_open_set_proxy(spec: &FractalSpec) -> Result<(), GeometryError> {
    // Depth-2 open cell hulls must have pairwise disjoint interiors.
    let n = spec.num_maps as u8;
    let mut hulls = Vec::new();
    for a in 0..n {
        for b in 0..n {
            hulls.push(cell_corner_points(spec, 0, &[a, b]));
        }
    }
    for i in 0..hulls.len() {
        for j in (i + 1)..hulls.len() {
            if !interiors_disjoint(&hulls[i], &hulls[j]) {
                return Err(GeometryError::AxiomViolation("open-set-condition".into()));
            }
        }
    }
    Ok(())
}

fn check_nesting(spec: &FractalSpec) -> Result<(), GeometryError> {
    // Depth-1 cells meet only at corner points.
    let n = spec.num_maps as u8;
    let cells: Vec<Vec<Point>> = (0..n).map(|i| cell_corner_points(spec, 0, &[i])).collect();
    for i in 0..cells.len() {
        for j in (i + 1)..cells.len() {
            if !interiors_disjoint(&cells[i], &cells[j]) {
                return Err(GeometryError::AxiomViolation("nesting".into()));
            }
            let shared: Vec<&Point> =
                cells[i].iter().filter(|p| cells[j].contains(p)).collect();
            if shared.len() > 1 {
                return Err(GeometryError::AxiomViolation(
                    "nesting: cells share an edge, not just vertices".into(),
                ));
            }
        }
    }
    Ok(())
}

fn check_connectivity(spec: &FractalSpec) -> Result<(), GeometryError> {
    let n = spec.num_maps as u8;
    let cells: Vec<Vec<Point>> = (0..n).map(|i| cell_corner_points(spec, 0, &[i])).collect();
    let mut adj = vec![Vec::new(); cells.len()];
    for i in 0..cells.len() {
        for j in 0..cells.len() {
            if i != j && cells[i].iter().any(|p| cells[j].contains(p)) {
                adj[i].push(j);
            }
        }
    }
    let mut seen = vec![false; cells.len()];
    let mut stack = vec![0usize];
    while let Some(c) = stack.pop() {
        if seen[c] {
            continue;
        }
        seen[c] = true;
        stack.extend(adj[c].iter().copied());
    }
    if seen.iter().all(|&s| s) {
        Ok(())
    } else {
        Err(GeometryError::AxiomViolation("connectivity".into()))
    }
}

/// Enumerate the depth-`n` lattice of `K^<M>`.
pub fn enumerate_lattice(
    spec: &Arc<FractalSpec>,
    level: i64,
    depth: usize,
    cap: usize,
) -> Result<LatticeGraph, GeometryError> {
    enumerate_lattice_arc(Arc::clone(spec), level, depth, cap)
}

fn enumerate_lattice_arc(
    spec: Arc<FractalSpec>,
    level: i64,
    depth: usize,
    cap: usize,
) -> Result<LatticeGraph, GeometryError> {
    let n_cells = spec.num_maps.checked_pow(depth as u32).ok_or(
        GeometryError::SizeLimit(usize::MAX, cap),
    )?;
    let slots = n_cells.saturating_mul(spec.k);
    if slots > cap {
        return Err(GeometryError::SizeLimit(slots, cap));
    }

    // Lexicographic cell words.
    let mut words: Vec<Vec<u8>> = Vec::with_capacity(n_cells);
    let mut word = vec![0u8; depth];
    loop {
        words.push(word.clone());
        let mut i = depth;
        loop {
            if i == 0 {
                break;
            }
            i -= 1;
            if word[i] + 1 < spec.num_maps as u8 {
                word[i] += 1;
                for w in word.iter_mut().skip(i + 1) {
                    *w = 0;
                }
                break;
            } else if i == 0 {
                word.clear();
                break;
            }
        }
        if word.is_empty() || words.len() == n_cells {
            break;
        }
    }
    debug_assert_eq!(words.len(), n_cells);

    let cell_level = level - depth as i64;
    let mut position_index: BTreeMap<Point, usize> = BTreeMap::new();
    let mut vertices: Vec<VertexData> = Vec::new();
    let mut cells: Vec<CellData> = Vec::with_capacity(n_cells);

    for (cell_idx, w) in words.iter().enumerate() {
        let pts = cell_corner_points(&spec, level, w);
        let kk = BigRational::new(BigInt::one(), BigInt::from(spec.k as i64));
        let mut bary = Point::origin();
        for p in &pts {
            bary = bary.add(p);
        }
        let bary = bary.scale(&kk);
        let mut corner_ids = Vec::with_capacity(spec.k);
        for (corner_pos, p) in pts.into_iter().enumerate() {
            let idx = match position_index.get(&p) {
                Some(&idx) => {
                    vertices[idx].rank += 1;
                    vertices[idx].cells.push(cell_idx);
                    idx
                }
                None => {
                    let idx = vertices.len();
                    let id = VertexId {
                        cell: CellAddress { level: cell_level, word: w.clone() }.canonical(),
                        corner: corner_pos as u8,
                    };
                    let xy = p.to_f64();
                    position_index.insert(p.clone(), idx);
                    vertices.push(VertexData {
                        id,
                        position: p,
                        xy,
                        rank: 1,
                        cells: vec![cell_idx],
                    });
                    idx
                }
            };
            corner_ids.push(idx);
        }
        cells.push(CellData {
            address: CellAddress { level: cell_level, word: w.clone() },
            corners: corner_ids,
            barycenter: bary,
        });
    }

    // Edges: all corner pairs within each cell.
    let mut edge_set: BTreeSet<(usize, usize)> = BTreeSet::new();
    for cell in &cells {
        for i in 0..cell.corners.len() {
            for j in (i + 1)..cell.corners.len() {
                let (a, b) = (cell.corners[i], cell.corners[j]);
                let key = if a < b { (a, b) } else { (b, a) };
                edge_set.insert(key);
            }
        }
    }
    let edges: Vec<(usize, usize)> = edge_set.into_iter().collect();
    let mut adjacency = vec![Vec::new(); vertices.len()];
    for &(a, b) in &edges {
        adjacency[a].push(b);
        adjacency[b].push(a);
    }
    for list in &mut adjacency {
        list.sort_unstable();
    }

    Ok(LatticeGraph {
        spec,
        level,
        depth,
        vertices,
        adjacency,
        edges,
        cells,
        position_index,
    })
}

/// Rigid-motion view of a lattice cell used by the folding machinery:
/// maps the reference complex `K^<cell level>` onto the cell.
pub fn cell_motion(spec: &FractalSpec, level: i64, word: &[u8]) -> RigidMotion {
    // For translation-only systems the motion is `x ↦ x + ν_Δ`; with a
    // rotation part it is the full composed map, written as x ↦ R(x-0)+t.
    let origin_image = cell_map(spec, level, word, &Point::origin());
    let rot = if spec.rotation_degrees % 360 == 0 || word.is_empty() {
        Matrix2::identity()
    } else {
        let r = Matrix2::rotation_degrees(spec.rotation_degrees).unwrap();
        let mut acc = Matrix2::identity();
        for _ in 0..word.len() {
            acc = acc.mul(&r);
        }
        acc
    };
    RigidMotion {
        rotation: rot,
        pre_translation: Point::origin(),
        post_translation: origin_image,
    }
}

fn pow_rational(r: &BigRational, e: i64) -> BigRational {
    let mut acc = BigRational::one();
    let base = if e >= 0 { r.clone() } else { r.recip() };
    for _ in 0..e.unsigned_abs() {
        acc *= &base;
    }
    acc
}

/// FNV-1a, used for stable per-vertex RNG keys and content hashes.
pub struct Fnv(u64);

impl Fnv {
    pub fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x1000_0000_01b3);
        }
    }
    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent recursive counter for gasket vertex numbers: gluing the
    /// three sub-lattices identifies the three pairs of touching corners.
    fn gasket_vertex_count_oracle(n: usize) -> usize {
        let mut v = 3usize;
        for _ in 0..n {
            v = 3 * v - 3;
        }
        v
    }

    #[test]
    fn gasket_spec_constants() {
        let spec = FractalSpec::gasket();
        assert_eq!(spec.num_maps, 3);
        assert_eq!(spec.k, 3);
        let d = 3f64.ln() / 2f64.ln();
        assert!((spec.hausdorff_dim - d).abs() < 1e-12);
        assert!((spec.hausdorff_dim - 1.584_962_500_721_156).abs() < 1e-9);
        assert_eq!(spec.max_rank, 2);
        assert_eq!(spec.time_scale, 5.0);
    }

    #[test]
    fn rejects_two_point_systems() {
        // Two maps on a line: only k = 2 essential fixed points.
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        let maps = vec![
            Similitude {
                inv_scale: half.clone(),
                rotation_degrees: 0,
                translation: Point::origin(),
            },
            Similitude {
                inv_scale: half,
                rotation_degrees: 0,
                translation: Point::new(Exact::from_ratio(1, 2), Exact::zero()),
            },
        ];
        match build_spec(&maps, &SpecOptions { name: Some("segment".into()), time_scale: Some(4.0) }) {
            Err(GeometryError::AxiomViolation(msg)) => assert!(msg.contains("k>=3")),
            other => panic!("expected AxiomViolation(k>=3), got {other:?}"),
        }
    }

    #[test]
    fn lattice_small_cases() {
        let spec = FractalSpec::gasket();
        let l00 = enumerate_lattice(&spec, 0, 0, 1 << 20).unwrap();
        assert_eq!(l00.vertex_count(), 3);
        assert_eq!(l00.edges.len(), 3);

        let l01 = enumerate_lattice(&spec, 0, 1, 1 << 20).unwrap();
        assert_eq!(l01.vertex_count(), 6);
        assert_eq!(l01.edges.len(), 9);

        let l20 = enumerate_lattice(&spec, 2, 2, 1 << 20).unwrap();
        assert_eq!(l20.vertex_count(), 15); // brute-force count of V_0 in K^<2>
    }

    #[test]
    fn vertex_counts_match_recursive_oracle() {
        let spec = FractalSpec::gasket();
        for m in 0..=5 {
            let lat = enumerate_lattice(&spec, m, m as usize, 1 << 22).unwrap();
            assert_eq!(lat.vertex_count(), gasket_vertex_count_oracle(m as usize));
            // Closed form (3^(M+1) + 3)/2.
            assert_eq!(lat.vertex_count(), (3usize.pow(m as u32 + 1) + 3) / 2);
        }
    }

    #[test]
    fn vertex_count_sandwich_with_c0() {
        let spec = FractalSpec::gasket();
        let mut c0: f64 = 1.0;
        for m in 0..=5 {
            let lat = enumerate_lattice(&spec, m, m as usize, 1 << 22).unwrap();
            let lmd = spec.scale_f64.powf(m as f64 * spec.hausdorff_dim);
            let count = lat.vertex_count() as f64;
            assert!(lmd <= count + 1e-9);
            c0 = c0.max(count / lmd);
        }
        assert!(c0 >= 1.0 && c0 <= 3.0 + 1e-12);
    }

    #[test]
    fn degree_law_and_edge_count() {
        let spec = FractalSpec::gasket();
        let lat = enumerate_lattice(&spec, 0, 3, 1 << 20).unwrap();
        assert_eq!(lat.cells.len(), 27);
        assert_eq!(lat.edges.len(), 27 * 3);
        for (v, data) in lat.vertices.iter().enumerate() {
            assert_eq!(lat.adjacency[v].len(), (spec.k - 1) * data.rank);
        }
    }

    #[test]
    fn ranks_on_gasket() {
        let spec = FractalSpec::gasket();
        // V_0 in K^<3>: rank ≤ 2 everywhere, with both values attained.
        let lat = enumerate_lattice(&spec, 3, 3, 1 << 20).unwrap();
        let max_rank = lat.vertices.iter().map(|v| v.rank).max().unwrap();
        assert_eq!(max_rank, 2);
        // Extreme corner of K^<M>: exactly one complex at every level.
        let origin = lat.find_position(&Point::origin()).unwrap();
        for level in 0..=3 {
            assert_eq!(lat.rank_at_level(level, origin).unwrap(), 1);
        }
        // An inner junction at level 1 of K^<1>.
        let l1 = enumerate_lattice(&spec, 1, 1, 1 << 20).unwrap();
        let junction = l1
            .vertices
            .iter()
            .position(|v| v.rank == 2)
            .expect("level-1 gasket has junction vertices");
        assert_eq!(l1.rank_at_level(0, junction).unwrap(), 2);
    }

    #[test]
    fn graph_distance_cases() {
        let spec = FractalSpec::gasket();
        let lat = enumerate_lattice(&spec, 1, 1, 1 << 20).unwrap();
        let corners = lat.boundary_corners();
        // Same vertex.
        assert_eq!(lat.graph_distance(0, corners[0], corners[0]).unwrap(), 0);
        // Distinct corners of one 0-complex.
        let cell0 = &lat.cells[0];
        assert_eq!(
            lat.graph_distance(0, cell0.corners[0], cell0.corners[1]).unwrap(),
            1
        );
        // Opposite outer corners of K^<1> at level 0: BFS oracle says 2.
        assert_eq!(lat.graph_distance(0, corners[0], corners[1]).unwrap(), 2);
        assert_eq!(
            lat.graph_distance(0, corners[0], corners[1]).unwrap(),
            bfs_chain_oracle(&lat, 0, corners[0], corners[1]),
        );
    }

    /// Plain breadth-first chain search, kept independent of graph_distance.
    fn bfs_chain_oracle(lat: &LatticeGraph, level: i64, x: usize, y: usize) -> usize {
        use std::collections::HashSet;
        let len = (lat.level - level) as usize;
        let prefixes: Vec<Vec<u8>> = lat
            .cells
            .iter()
            .map(|c| c.address.word[..len].to_vec())
            .collect();
        let uniq: Vec<Vec<u8>> = {
            let mut u: Vec<Vec<u8>> = prefixes.clone();
            u.sort();
            u.dedup();
            u
        };
        let verts_of = |p: &Vec<u8>| -> HashSet<usize> {
            let mut s = HashSet::new();
            for (ci, c) in lat.cells.iter().enumerate() {
                if &prefixes[ci] == p {
                    s.extend(c.corners.iter().copied());
                }
            }
            s
        };
        let sets: Vec<HashSet<usize>> = uniq.iter().map(verts_of).collect();
        let start: Vec<usize> = (0..sets.len()).filter(|&i| sets[i].contains(&x)).collect();
        let mut dist = vec![usize::MAX; sets.len()];
        let mut q: VecDeque<usize> = VecDeque::new();
        for s in start {
            dist[s] = 1;
            q.push_back(s);
        }
        while let Some(c) = q.pop_front() {
            if sets[c].contains(&y) {
                return dist[c];
            }
            for nb in 0..sets.len() {
                if nb != c
                    && dist[nb] == usize::MAX
                    && sets[c].intersection(&sets[nb]).next().is_some()
                {
                    dist[nb] = dist[c] + 1;
                    q.push_back(nb);
                }
            }
        }
        usize::MAX
    }

    #[test]
    fn triangle_inequality_spot_check() {
        use rand::{Rng, SeedableRng};
        let spec = FractalSpec::gasket();
        let lat = enumerate_lattice(&spec, 2, 2, 1 << 20).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let n = lat.vertex_count();
        for _ in 0..2_000 {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            let c = rng.gen_range(0..n);
            for level in [0i64, 1] {
                let dab = lat.graph_distance(level, a, b).unwrap();
                let dbc = lat.graph_distance(level, b, c).unwrap();
                let dac = lat.graph_distance(level, a, c).unwrap();
                assert!(dac <= dab + dbc, "triangle inequality failed at level {level}");
                assert_eq!(dab, lat.graph_distance(level, b, a).unwrap());
            }
        }
    }

    #[test]
    fn deterministic_serialization() {
        let spec = FractalSpec::gasket();
        let a = enumerate_lattice(&spec, 1, 2, 1 << 20).unwrap();
        let b = enumerate_lattice(&spec, 1, 2, 1 << 20).unwrap();
        assert_eq!(
            serde_json::to_string(&a.export_json()).unwrap(),
            serde_json::to_string(&b.export_json()).unwrap()
        );
    }

    #[test]
    fn vicsek_builds_with_k4() {
        let spec = FractalSpec::vicsek();
        assert_eq!(spec.k, 4);
        assert_eq!(spec.num_maps, 5);
        assert_eq!(spec.max_rank, 2);
        let lat = enumerate_lattice(&spec, 1, 1, 1 << 20).unwrap();
        // 5 cells, 4 corners each, 4 shared junctions: 20 - 4 = 16 vertices.
        assert_eq!(lat.vertex_count(), 16);
        assert_eq!(lat.edges.len(), 5 * 6);
    }

    #[test]
    fn size_limit_is_enforced() {
        let spec = FractalSpec::gasket();
        match enumerate_lattice(&spec, 0, 10, 100) {
            Err(GeometryError::SizeLimit(_, 100)) => {}
            other => panic!("expected SizeLimit, got {:?}", other.err()),
        }
    }

    #[test]
    fn zero_prefix_embedding_is_stable() {
        // K^<M> embeds in K^<M+1> as the zero-digit cells with identical
        // coordinates and canonical vertex ids.
        let spec = FractalSpec::gasket();
        let small = enumerate_lattice(&spec, 1, 1, 1 << 20).unwrap();
        let big = enumerate_lattice(&spec, 2, 2, 1 << 20).unwrap();
        for v in &small.vertices {
            let idx = big.find_position(&v.position).expect("embedded vertex present");
            assert_eq!(big.vertices[idx].id, v.id, "canonical id must not depend on the ring");
        }
    }
}
