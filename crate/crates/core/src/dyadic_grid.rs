//! Exact geometry of standard and one-third-translated dyadic cubes.
//!
//! A cube of the translated system with parameter `u ∈ {0, 1/3, 2/3}^d` is
//! the half-open set `2^{-j}([0,1)^d + m + (-1)^j u)`. Every corner is a
//! rational with denominator dividing `3 * 2^j`, so containment and measure
//! questions are answered exactly.

use serde::{Deserialize, Serialize};

use crate::rational::{self, floor_int, pow2, Rational};
use crate::{Error, Result};

/// Half-open axis-parallel box `[lower, upper)` with rational corners.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RationalBox {
    #[serde(with = "rational::serde_rational_vec")]
    pub lower: Vec<Rational>,
    #[serde(with = "rational::serde_rational_vec")]
    pub upper: Vec<Rational>,
}

impl RationalBox {
    pub fn new(lower: Vec<Rational>, upper: Vec<Rational>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Dimension(format!(
                "box corners of lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l >= u) {
            return Err(Error::Parameter("box requires lower < upper on every axis".into()));
        }
        Ok(Self { lower, upper })
    }

    /// Cube with the given center and side.
    pub fn cube(center: &[Rational], side: Rational) -> Self {
        let half = side / 2;
        Self {
            lower: center.iter().map(|c| c - half).collect(),
            upper: center.iter().map(|c| c + half).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn side(&self, axis: usize) -> Rational {
        self.upper[axis] - self.lower[axis]
    }

    pub fn measure(&self) -> Rational {
        (0..self.dim()).map(|i| self.side(i)).product()
    }

    pub fn center(&self) -> Vec<Rational> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (l + u) / 2)
            .collect()
    }

    pub fn contains_point(&self, x: &[Rational]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (l, u))| l <= x && x < u)
    }

    pub fn contains_box(&self, other: &RationalBox) -> bool {
        (0..self.dim()).all(|i| self.lower[i] <= other.lower[i] && other.upper[i] <= self.upper[i])
    }

    pub fn intersection(&self, other: &RationalBox) -> Option<RationalBox> {
        let mut lower = Vec::with_capacity(self.dim());
        let mut upper = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let l = self.lower[i].max(other.lower[i]);
            let u = self.upper[i].min(other.upper[i]);
            if l >= u {
                return None;
            }
            lower.push(l);
            upper.push(u);
        }
        Some(RationalBox { lower, upper })
    }

    pub fn overlap_measure(&self, other: &RationalBox) -> Rational {
        self.intersection(other)
            .map(|b| b.measure())
            .unwrap_or_else(|| Rational::from_integer(0))
    }

    /// Box with the same center and every side multiplied by `2^k`.
    pub fn dilate(&self, k: u32) -> RationalBox {
        let factor = pow2(k as i32);
        let c = self.center();
        let lower = (0..self.dim())
            .map(|i| c[i] - self.side(i) * factor / 2)
            .collect();
        let upper = (0..self.dim())
            .map(|i| c[i] + self.side(i) * factor / 2)
            .collect();
        RationalBox { lower, upper }
    }
}

/// A cube `2^{-j}([0,1)^d + m + (-1)^j u)` of the translated dyadic system `D^u`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicCube {
    #[serde(with = "rational::serde_rational_vec")]
    pub u: Vec<Rational>,
    pub j: i32,
    pub m: Vec<i64>,
}

fn valid_translation(u: &[Rational]) -> bool {
    u.iter().all(|t| *t.denom() <= 3 && (*t * 3).is_integer() && {
        let k = (*t * 3).to_integer();
        (0..3).contains(&k)
    })
}

/// All `3^d` translation parameters, in lexicographic order.
pub fn translations(d: usize) -> Vec<Vec<Rational>> {
    let thirds = [Rational::new(0, 1), Rational::new(1, 3), Rational::new(2, 3)];
    let mut out = vec![Vec::new()];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                thirds.iter().map(move |t| {
                    let mut v = prefix.clone();
                    v.push(*t);
                    v
                })
            })
            .collect();
    }
    out
}

impl DyadicCube {
    pub fn new(u: Vec<Rational>, j: i32, m: Vec<i64>) -> Result<Self> {
        if u.len() != m.len() || u.is_empty() {
            return Err(Error::Dimension("translation and position lengths differ".into()));
        }
        if !valid_translation(&u) {
            return Err(Error::Parameter("translation entries must lie in {0, 1/3, 2/3}".into()));
        }
        Ok(Self { u, j, m })
    }

    /// Cube of the standard system `D = D^0`.
    pub fn standard(j: i32, m: Vec<i64>) -> Self {
        let u = vec![Rational::from_integer(0); m.len()];
        Self { u, j, m }
    }

    /// The unique cube of `D^u` at level `j` that contains `x`.
    pub fn containing(u: &[Rational], j: i32, x: &[Rational]) -> Self {
        let scale = pow2(j);
        let sign = if j.rem_euclid(2) == 0 { 1 } else { -1 };
        let m = x
            .iter()
            .zip(u)
            .map(|(xi, ui)| floor_int(*xi * scale - *ui * sign))
            .collect();
        Self { u: u.to_vec(), j, m }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn is_standard(&self) -> bool {
        self.u.iter().all(|t| *t == Rational::from_integer(0))
    }

    pub fn side(&self) -> Rational {
        pow2(-self.j)
    }

    pub fn measure(&self) -> Rational {
        let s = self.side();
        (0..self.dim()).map(|_| s).product()
    }

    pub fn lower(&self) -> Vec<Rational> {
        let side = self.side();
        let sign = if self.j.rem_euclid(2) == 0 { 1 } else { -1 };
        self.m
            .iter()
            .zip(&self.u)
            .map(|(mi, ui)| (Rational::from_integer(*mi) + *ui * sign) * side)
            .collect()
    }

    pub fn to_box(&self) -> RationalBox {
        let lower = self.lower();
        let side = self.side();
        let upper = lower.iter().map(|l| l + side).collect();
        RationalBox { lower, upper }
    }

    pub fn center(&self) -> Vec<Rational> {
        let half = self.side() / 2;
        self.lower().into_iter().map(|l| l + half).collect()
    }

    /// The `2^d` children, ordered with axis 0 most significant.
    pub fn children(&self) -> Vec<DyadicCube> {
        let d = self.dim();
        let lower = self.lower();
        let half = self.side() / 2;
        (0..1usize << d)
            .map(|bits| {
                let corner: Vec<Rational> = (0..d)
                    .map(|i| {
                        let e = (bits >> (d - 1 - i)) & 1;
                        lower[i] + half * (e as i64)
                    })
                    .collect();
                DyadicCube::containing(&self.u, self.j + 1, &corner)
            })
            .collect()
    }

    pub fn parent(&self) -> DyadicCube {
        self.ancestor(1)
    }

    /// The `k`-th dyadic ancestor in the same translated system.
    pub fn ancestor(&self, k: u32) -> DyadicCube {
        if k == 0 {
            return self.clone();
        }
        DyadicCube::containing(&self.u, self.j - k as i32, &self.lower())
    }

    pub fn contains(&self, other: &DyadicCube) -> bool {
        self.to_box().contains_box(&other.to_box())
    }

    pub fn is_disjoint(&self, other: &DyadicCube) -> bool {
        self.to_box().intersection(&other.to_box()).is_none()
    }

    /// The cube `2^k Q` with the same center and side `2^k l_Q`.
    pub fn dilate(&self, k: u32) -> RationalBox {
        self.to_box().dilate(k)
    }
}

/// Finds a translated dyadic cube `R` with `Q ⊂ R`, `2^k Q ⊂ R^{(k)}` and
/// `l_R = 4 l_Q` by exhaustive search over the `3^d` translations.
///
/// Ties are broken by the lexicographically smallest translation; for a fixed
/// translation the cube of side `4 l_Q` containing `Q` is unique.
pub fn shifted_cover(q: &DyadicCube, k: u32) -> Result<(DyadicCube, Vec<Rational>)> {
    if !q.is_standard() {
        return Err(Error::Parameter("shifted cover expects a standard dyadic cube".into()));
    }
    let qbox = q.to_box();
    let dilated = q.dilate(k);
    let corner = q.lower();
    for u in translations(q.dim()) {
        let r = DyadicCube::containing(&u, q.j - 2, &corner);
        if !r.to_box().contains_box(&qbox) {
            continue;
        }
        if r.ancestor(k).to_box().contains_box(&dilated) {
            return Ok((r, u));
        }
    }
    Err(Error::NoShiftedCover {
        side: rational::format(&q.side()),
        k,
    })
}
