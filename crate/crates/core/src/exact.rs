//! Exact planar arithmetic over the field Q(√3).
//!
//! Vertex identity in a fractal lattice must be decided exactly: corners
//! shared between cells have to merge, and no floating-point tolerance is
//! safe at every subdivision depth.  All preset fractals here (triangle and
//! square symmetry groups) have vertex coordinates and rotation matrices
//! with entries of the form `a + b·√3`, `a, b ∈ Q`, so a single quadratic
//! extension suffices.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

/// Element of Q(√3): `a + b·√3`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Exact {
    pub a: BigRational,
    pub b: BigRational,
}

impl Exact {
    pub fn zero() -> Self {
        Exact { a: BigRational::zero(), b: BigRational::zero() }
    }

    pub fn one() -> Self {
        Exact { a: BigRational::one(), b: BigRational::zero() }
    }

    pub fn from_int(n: i64) -> Self {
        Exact { a: BigRational::from_integer(BigInt::from(n)), b: BigRational::zero() }
    }

    pub fn from_ratio(num: i64, den: i64) -> Self {
        assert!(den != 0);
        Exact {
            a: BigRational::new(BigInt::from(num), BigInt::from(den)),
            b: BigRational::zero(),
        }
    }

    /// `(num/den)·√3`.
    pub fn sqrt3_ratio(num: i64, den: i64) -> Self {
        assert!(den != 0);
        Exact {
            a: BigRational::zero(),
            b: BigRational::new(BigInt::from(num), BigInt::from(den)),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }

    /// Exact sign of `a + b√3`.
    pub fn signum(&self) -> i32 {
        let sa = sign(&self.a);
        let sb = sign(&self.b);
        if sb == 0 {
            return sa;
        }
        if sa == 0 {
            return sb;
        }
        if sa == sb {
            return sa;
        }
        // Signs differ: compare a² with 3b².
        let a2 = &self.a * &self.a;
        let b23 = &self.b * &self.b * BigRational::from_integer(BigInt::from(3));
        match a2.cmp(&b23) {
            std::cmp::Ordering::Greater => sa,
            std::cmp::Ordering::Less => sb,
            std::cmp::Ordering::Equal => 0,
        }
    }

    pub fn to_f64(&self) -> f64 {
        rational_to_f64(&self.a) + rational_to_f64(&self.b) * 3f64.sqrt()
    }

    pub fn scale(&self, factor: &BigRational) -> Exact {
        Exact { a: &self.a * factor, b: &self.b * factor }
    }
}

fn sign(r: &BigRational) -> i32 {
    if r.is_zero() {
        0
    } else if r.is_positive() {
        1
    } else {
        -1
    }
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        let n = r.numer().to_f64().unwrap_or(f64::NAN);
        let d = r.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

impl fmt::Debug for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.b.is_zero() {
            write!(f, "{}", self.a)
        } else {
            write!(f, "{}+{}√3", self.a, self.b)
        }
    }
}

impl Add for &Exact {
    type Output = Exact;
    fn add(self, rhs: &Exact) -> Exact {
        Exact { a: &self.a + &rhs.a, b: &self.b + &rhs.b }
    }
}

impl Sub for &Exact {
    type Output = Exact;
    fn sub(self, rhs: &Exact) -> Exact {
        Exact { a: &self.a - &rhs.a, b: &self.b - &rhs.b }
    }
}

impl Mul for &Exact {
    type Output = Exact;
    fn mul(self, rhs: &Exact) -> Exact {
        let three = BigRational::from_integer(BigInt::from(3));
        Exact {
            a: &self.a * &rhs.a + (&self.b * &rhs.b) * &three,
            b: &self.a * &rhs.b + &self.b * &rhs.a,
        }
    }
}

impl Neg for &Exact {
    type Output = Exact;
    fn neg(self) -> Exact {
        Exact { a: -self.a.clone(), b: -self.b.clone() }
    }
}

/// Exact planar point.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Point {
    pub x: Exact,
    pub y: Exact,
}

impl Point {
    pub fn origin() -> Self {
        Point { x: Exact::zero(), y: Exact::zero() }
    }

    pub fn new(x: Exact, y: Exact) -> Self {
        Point { x, y }
    }

    pub fn add(&self, other: &Point) -> Point {
        Point { x: &self.x + &other.x, y: &self.y + &other.y }
    }

    pub fn sub(&self, other: &Point) -> Point {
        Point { x: &self.x - &other.x, y: &self.y - &other.y }
    }

    pub fn scale(&self, factor: &BigRational) -> Point {
        Point { x: self.x.scale(factor), y: self.y.scale(factor) }
    }

    pub fn to_f64(&self) -> (f64, f64) {
        (self.x.to_f64(), self.y.to_f64())
    }

    /// Squared Euclidean distance, exact.
    pub fn dist2(&self, other: &Point) -> Exact {
        let dx = &self.x - &other.x;
        let dy = &self.y - &other.y;
        &(&dx * &dx) + &(&dy * &dy)
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:?}, {:?})", self.x, self.y)
    }
}

/// 2×2 matrix with entries in Q(√3); used for the polygon rotations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Matrix2 {
    pub m: [[Exact; 2]; 2],
}

impl Matrix2 {
    pub fn identity() -> Self {
        Matrix2 {
            m: [
                [Exact::one(), Exact::zero()],
                [Exact::zero(), Exact::one()],
            ],
        }
    }

    /// Rotation by `degrees` counterclockwise.  Only multiples of 30° have
    /// exact representations in Q(√3); anything else is rejected.
    pub fn rotation_degrees(degrees: i64) -> Option<Matrix2> {
        let d = degrees.rem_euclid(360);
        if d % 30 != 0 {
            return None;
        }
        let (c, s) = match d {
            0 => (Exact::from_int(1), Exact::from_int(0)),
            30 => (Exact::sqrt3_ratio(1, 2), Exact::from_ratio(1, 2)),
            60 => (Exact::from_ratio(1, 2), Exact::sqrt3_ratio(1, 2)),
            90 => (Exact::from_int(0), Exact::from_int(1)),
            120 => (Exact::from_ratio(-1, 2), Exact::sqrt3_ratio(1, 2)),
            150 => (Exact::sqrt3_ratio(-1, 2), Exact::from_ratio(1, 2)),
            180 => (Exact::from_int(-1), Exact::from_int(0)),
            210 => (Exact::sqrt3_ratio(-1, 2), Exact::from_ratio(-1, 2)),
            240 => (Exact::from_ratio(-1, 2), Exact::sqrt3_ratio(-1, 2)),
            270 => (Exact::from_int(0), Exact::from_int(-1)),
            300 => (Exact::from_ratio(1, 2), Exact::sqrt3_ratio(-1, 2)),
            330 => (Exact::sqrt3_ratio(1, 2), Exact::from_ratio(-1, 2)),
            _ => unreachable!(),
        };
        Some(Matrix2 {
            m: [[c.clone(), (&s).neg()], [s, c]],
        })
    }

    pub fn apply(&self, p: &Point) -> Point {
        Point {
            x: &(&self.m[0][0] * &p.x) + &(&self.m[0][1] * &p.y),
            y: &(&self.m[1][0] * &p.x) + &(&self.m[1][1] * &p.y),
        }
    }

    pub fn mul(&self, other: &Matrix2) -> Matrix2 {
        let mut out = Matrix2::identity();
        for i in 0..2 {
            for j in 0..2 {
                out.m[i][j] = &(&self.m[i][0] * &other.m[0][j]) + &(&self.m[i][1] * &other.m[1][j]);
            }
        }
        out
    }

    /// Transpose; for rotations this is the inverse.
    pub fn transpose(&self) -> Matrix2 {
        Matrix2 {
            m: [
                [self.m[0][0].clone(), self.m[1][0].clone()],
                [self.m[0][1].clone(), self.m[1][1].clone()],
            ],
        }
    }
}

/// Rigid motion `x ↦ R(x − t)` (rotate after recentering); the shape of the
/// folding projection restricted to one cell.
#[derive(Clone, Debug)]
pub struct RigidMotion {
    pub rotation: Matrix2,
    /// Subtracted before rotating.
    pub pre_translation: Point,
    /// Added after rotating.
    pub post_translation: Point,
}

impl RigidMotion {
    pub fn apply(&self, p: &Point) -> Point {
        self.rotation
            .apply(&p.sub(&self.pre_translation))
            .add(&self.post_translation)
    }
}

/// Separating-axis test: do two convex polygons have disjoint interiors?
/// Touching along an edge or at a vertex still counts as disjoint interiors.
pub fn interiors_disjoint(poly_a: &[Point], poly_b: &[Point]) -> bool {
    for (polygon, other) in [(poly_a, poly_b), (poly_b, poly_a)] {
        let n = polygon.len();
        for i in 0..n {
            let p = &polygon[i];
            let q = &polygon[(i + 1) % n];
            // Outward-ish normal of edge pq: (qy-py, px-qx); orientation does
            // not matter because both separation directions are checked.
            let nx = &q.y - &p.y;
            let ny = &p.x - &q.x;
            let project = |pt: &Point| -> Exact { &(&nx * &pt.x) + &(&ny * &pt.y) };
            let mut min_a: Option<Exact> = None;
            let mut max_a: Option<Exact> = None;
            for pt in polygon {
                let v = project(pt);
                if min_a.as_ref().map_or(true, |m| (&v - m).signum() < 0) {
                    min_a = Some(v.clone());
                }
                if max_a.as_ref().map_or(true, |m| (&v - m).signum() > 0) {
                    max_a = Some(v);
                }
            }
            let mut min_b: Option<Exact> = None;
            let mut max_b: Option<Exact> = None;
            for pt in other {
                let v = project(pt);
                if min_b.as_ref().map_or(true, |m| (&v - m).signum() < 0) {
                    min_b = Some(v.clone());
                }
                if max_b.as_ref().map_or(true, |m| (&v - m).signum() > 0) {
                    max_b = Some(v);
                }
            }
            let (min_a, max_a) = (min_a.unwrap(), max_a.unwrap());
            let (min_b, max_b) = (min_b.unwrap(), max_b.unwrap());
            // Open projections disjoint when one interval ends before the
            // other begins (equality = touching, allowed).
            if (&max_a - &min_b).signum() <= 0 || (&max_b - &min_a).signum() <= 0 {
                return true;
            }
        }
    }
    false
}

/// Point-in-convex-polygon test (closed polygon, exact).
pub fn polygon_contains(polygon: &[Point], p: &Point) -> bool {
    let n = polygon.len();
    let mut side = 0i32;
    for i in 0..n {
        let a = &polygon[i];
        let b = &polygon[(i + 1) % n];
        let cross = &(&(&b.x - &a.x) * &(&p.y - &a.y)) - &(&(&b.y - &a.y) * &(&p.x - &a.x));
        let s = cross.signum();
        if s == 0 {
            continue;
        }
        if side == 0 {
            side = s;
        } else if side != s {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt3_sign_is_exact() {
        // 7 - 4√3 ≈ 0.072 > 0 and 7 - 5√3 ≈ -1.66 < 0.
        let a = &Exact::from_int(7) - &Exact::sqrt3_ratio(4, 1);
        let b = &Exact::from_int(7) - &Exact::sqrt3_ratio(5, 1);
        assert_eq!(a.signum(), 1);
        assert_eq!(b.signum(), -1);
        assert_eq!(Exact::zero().signum(), 0);
    }

    #[test]
    fn rotation_by_120_has_order_three() {
        let r = Matrix2::rotation_degrees(120).unwrap();
        let r3 = r.mul(&r).mul(&r);
        assert_eq!(r3, Matrix2::identity());
        assert!(Matrix2::rotation_degrees(45).is_none());
    }

    #[test]
    fn rigid_motion_round_trip() {
        let r = Matrix2::rotation_degrees(90).unwrap();
        let fwd = RigidMotion {
            rotation: r.clone(),
            pre_translation: Point::new(Exact::from_int(2), Exact::from_int(1)),
            post_translation: Point::origin(),
        };
        let back = RigidMotion {
            rotation: r.transpose(),
            pre_translation: Point::origin(),
            post_translation: Point::new(Exact::from_int(2), Exact::from_int(1)),
        };
        let p = Point::new(Exact::from_ratio(5, 3), Exact::sqrt3_ratio(1, 7));
        assert_eq!(back.apply(&fwd.apply(&p)), p);
    }

    #[test]
    fn sat_disjoint_and_touching() {
        let tri = |ox: i64, oy: i64| {
            vec![
                Point::new(Exact::from_int(ox), Exact::from_int(oy)),
                Point::new(Exact::from_int(ox + 2), Exact::from_int(oy)),
                Point::new(Exact::from_int(ox + 1), Exact::from_int(oy + 2)),
            ]
        };
        // Far apart.
        assert!(interiors_disjoint(&tri(0, 0), &tri(10, 0)));
        // Sharing the corner (2,0): still disjoint interiors.
        assert!(interiors_disjoint(&tri(0, 0), &tri(2, 0)));
        // Genuinely overlapping.
        assert!(!interiors_disjoint(&tri(0, 0), &tri(1, 0)));
    }

    #[test]
    fn polygon_contains_boundary_and_interior() {
        let square = vec![
            Point::new(Exact::from_int(0), Exact::from_int(0)),
            Point::new(Exact::from_int(2), Exact::from_int(0)),
            Point::new(Exact::from_int(2), Exact::from_int(2)),
            Point::new(Exact::from_int(0), Exact::from_int(2)),
        ];
        assert!(polygon_contains(&square, &Point::new(Exact::from_int(1), Exact::from_int(1))));
        assert!(polygon_contains(&square, &Point::new(Exact::from_int(2), Exact::from_int(1))));
        assert!(!polygon_contains(&square, &Point::new(Exact::from_int(3), Exact::from_int(1))));
    }
}
