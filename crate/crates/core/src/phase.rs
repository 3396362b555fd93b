//! Phase bookkeeping and the small complex 3×3 algebra used by the sweep.
//!
//! Quantities are stored in fixed 3-slot arrays indexed by phase (a, b, c).
//! Slots for phases outside a [`PhaseMask`] are kept at zero and are never
//! used as pivots, so inverses are taken on the present-phase submatrix only.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};
use std::str::FromStr;

use num_complex::Complex;
use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Phase> {
        Phase::ALL.get(i).copied()
    }

    pub fn letter(self) -> char {
        ['A', 'B', 'C'][self.index()]
    }

    fn from_letter(c: char) -> Option<Phase> {
        match c.to_ascii_uppercase() {
            'A' => Some(Phase::A),
            'B' => Some(Phase::B),
            'C' => Some(Phase::C),
            _ => None,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        match (chars.next().and_then(Phase::from_letter), chars.next()) {
            (Some(p), None) => Ok(p),
            _ => Err(format!("invalid phase `{s}`")),
        }
    }
}

impl Serialize for Phase {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Phase {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Non-empty (once validated) subset of {a, b, c}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PhaseMask(u8);

impl PhaseMask {
    pub const ABC: PhaseMask = PhaseMask(0b111);
    pub const EMPTY: PhaseMask = PhaseMask(0);

    pub fn single(p: Phase) -> Self {
        PhaseMask(1 << p.index())
    }

    pub fn from_phases<I: IntoIterator<Item = Phase>>(phases: I) -> Self {
        phases
            .into_iter()
            .fold(PhaseMask::EMPTY, |m, p| m.with(p))
    }

    #[inline]
    pub fn contains(self, p: Phase) -> bool {
        self.0 & (1 << p.index()) != 0
    }

    #[inline]
    pub fn with(self, p: Phase) -> Self {
        PhaseMask(self.0 | (1 << p.index()))
    }

    pub fn union(self, other: PhaseMask) -> Self {
        PhaseMask(self.0 | other.0)
    }

    pub fn is_subset_of(self, other: PhaseMask) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Present phases in a, b, c order.
    pub fn iter(self) -> impl Iterator<Item = Phase> {
        Phase::ALL.into_iter().filter(move |p| self.contains(*p))
    }
}

impl fmt::Display for PhaseMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.iter() {
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

impl FromStr for PhaseMask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut mask = PhaseMask::EMPTY;
        for c in s.chars() {
            let p = Phase::from_letter(c).ok_or_else(|| format!("invalid phase set `{s}`"))?;
            if mask.contains(p) {
                return Err(format!("repeated phase in `{s}`"));
            }
            mask = mask.with(p);
        }
        Ok(mask)
    }
}

impl Serialize for PhaseMask {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PhaseMask {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Three-phase complex vector (voltage or current), indexed by phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseVec<T>(pub [Complex<T>; 3]);

impl<T: Scalar> PhaseVec<T> {
    pub fn zero() -> Self {
        PhaseVec([Complex::zero(); 3])
    }

    /// Balanced positive-sequence set of magnitude `mag`, masked.
    pub fn balanced(mag: T, mask: PhaseMask) -> Self {
        let deg = T::lit(std::f64::consts::PI / 180.0);
        let angles = [T::zero(), T::lit(-120.0) * deg, T::lit(120.0) * deg];
        let mut v = Self::zero();
        for p in mask.iter() {
            v.0[p.index()] = Complex::from_polar(mag, angles[p.index()]);
        }
        v
    }

    pub fn masked(mut self, mask: PhaseMask) -> Self {
        for p in Phase::ALL {
            if !mask.contains(p) {
                self.0[p.index()] = Complex::zero();
            }
        }
        self
    }

    /// Largest entry modulus.
    pub fn norm_inf(&self) -> T {
        self.0.iter().map(|z| z.norm()).fold(T::zero(), T::max)
    }

    /// Σ_φ self_φ · conj(other_φ).
    pub fn dot_conj(&self, other: &Self) -> Complex<T> {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| a * b.conj())
            .fold(Complex::zero(), |acc, z| acc + z)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl<T> Index<Phase> for PhaseVec<T> {
    type Output = Complex<T>;
    fn index(&self, p: Phase) -> &Complex<T> {
        &self.0[p.index()]
    }
}

impl<T> IndexMut<Phase> for PhaseVec<T> {
    fn index_mut(&mut self, p: Phase) -> &mut Complex<T> {
        &mut self.0[p.index()]
    }
}

impl<T: Scalar> Add for PhaseVec<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        PhaseVec(std::array::from_fn(|i| self.0[i] + rhs.0[i]))
    }
}

impl<T: Scalar> Sub for PhaseVec<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        PhaseVec(std::array::from_fn(|i| self.0[i] - rhs.0[i]))
    }
}

impl<T: Scalar> Neg for PhaseVec<T> {
    type Output = Self;
    fn neg(self) -> Self {
        PhaseVec(self.0.map(|z| -z))
    }
}

/// Complex 3×3 matrix indexed by phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseMatrix<T>(pub [[Complex<T>; 3]; 3]);

impl<T: Scalar> PhaseMatrix<T> {
    pub fn zero() -> Self {
        PhaseMatrix([[Complex::zero(); 3]; 3])
    }

    /// Identity on the present phases, zero elsewhere.
    pub fn identity(mask: PhaseMask) -> Self {
        Self::diagonal(std::array::from_fn(|i| {
            if mask.contains(Phase::ALL[i]) {
                T::one()
            } else {
                T::zero()
            }
        }))
    }

    pub fn diagonal(d: [T; 3]) -> Self {
        let mut m = Self::zero();
        for (i, v) in d.into_iter().enumerate() {
            m.0[i][i] = Complex::new(v, T::zero());
        }
        m
    }

    pub fn scale(&self, k: T) -> Self {
        PhaseMatrix(self.0.map(|row| row.map(|z| z * k)))
    }

    pub fn masked(mut self, mask: PhaseMask) -> Self {
        for i in Phase::ALL {
            for j in Phase::ALL {
                if !(mask.contains(i) && mask.contains(j)) {
                    self.0[i.index()][j.index()] = Complex::zero();
                }
            }
        }
        self
    }

    pub fn mul_vec(&self, v: &PhaseVec<T>) -> PhaseVec<T> {
        PhaseVec(std::array::from_fn(|i| {
            (0..3).fold(Complex::zero(), |acc, k| acc + self.0[i][k] * v.0[k])
        }))
    }

    pub fn transpose(&self) -> Self {
        PhaseMatrix(std::array::from_fn(|i| std::array::from_fn(|j| self.0[j][i])))
    }

    /// Real part, as a complex matrix with zero imaginary entries.
    pub fn real_part(&self) -> Self {
        PhaseMatrix(self.0.map(|row| row.map(|z| Complex::new(z.re, T::zero()))))
    }

    pub fn is_zero_on(&self, mask: PhaseMask) -> bool {
        mask.iter()
            .all(|i| mask.iter().all(|j| self.0[i.index()][j.index()].is_zero()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        let mut worst = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                worst = worst.max((self.0[i][j] - other.0[i][j]).norm());
            }
        }
        worst
    }

    /// Inverse of the present-phase submatrix (Gauss-Jordan, partial
    /// pivoting). Absent rows and columns stay zero. `None` if singular.
    pub fn inverse_on(&self, mask: PhaseMask) -> Option<Self> {
        let idx: Vec<usize> = mask.iter().map(Phase::index).collect();
        let n = idx.len();
        let mut a: Vec<Vec<Complex<T>>> = idx
            .iter()
            .map(|&i| idx.iter().map(|&j| self.0[i][j]).collect())
            .collect();
        let mut inv: Vec<Vec<Complex<T>>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { Complex::one() } else { Complex::zero() })
                    .collect()
            })
            .collect();
        let scale = a
            .iter()
            .flatten()
            .map(|z| z.norm())
            .fold(T::zero(), T::max);
        if scale.is_zero() {
            return if n == 0 { Some(Self::zero()) } else { None };
        }
        let tiny = scale * T::epsilon() * T::lit(16.0);
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&r, &s| {
                    a[r][col]
                        .norm()
                        .partial_cmp(&a[s][col].norm())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .expect("non-empty pivot range");
            if a[pivot][col].norm() <= tiny {
                return None;
            }
            a.swap(col, pivot);
            inv.swap(col, pivot);
            let p = a[col][col];
            for j in 0..n {
                a[col][j] /= p;
                inv[col][j] /= p;
            }
            for r in 0..n {
                if r != col {
                    let f = a[r][col];
                    if !f.is_zero() {
                        for j in 0..n {
                            let (ac, ic) = (a[col][j], inv[col][j]);
                            a[r][j] -= f * ac;
                            inv[r][j] -= f * ic;
                        }
                    }
                }
            }
        }
        let mut out = Self::zero();
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                out.0[i][j] = inv[r][c];
            }
        }
        Some(out)
    }
}

impl<T: Scalar> Add for PhaseMatrix<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        PhaseMatrix(std::array::from_fn(|i| {
            std::array::from_fn(|j| self.0[i][j] + rhs.0[i][j])
        }))
    }
}

impl<T: Scalar> Mul for PhaseMatrix<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        PhaseMatrix(std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                (0..3).fold(Complex::zero(), |acc, k| acc + self.0[i][k] * rhs.0[k][j])
            })
        }))
    }
}
