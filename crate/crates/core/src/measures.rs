//! Finite, purely atomic measures on the lead-time axis.
//!
//! Every measure-valued quantity in the system (standard workload, reneging
//! workload, reference workload, queue-length measure) is a finite sum of
//! point masses whose locations all drift left at unit rate. Drift is stored
//! lazily: each atom keeps a fixed stored location and the measure carries a
//! single offset, so the effective location is `stored - offset`.

use std::ops::Bound;

use crate::error::{Error, Result};
use crate::scalar::{fmt_sig17, Scalar};

/// Interval on the lead-time axis with independent endpoint bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct Interval<T> {
    pub lo: Bound<T>,
    pub hi: Bound<T>,
}

impl<T: Scalar> Interval<T> {
    pub fn new(lo: Bound<T>, hi: Bound<T>) -> Self {
        Self { lo, hi }
    }

    /// `(-inf, inf)`
    pub fn all() -> Self {
        Self::new(Bound::Unbounded, Bound::Unbounded)
    }

    /// `(a, inf)`
    pub fn above(a: T) -> Self {
        Self::new(Bound::Excluded(a), Bound::Unbounded)
    }

    /// `(-inf, b]`
    pub fn at_most(b: T) -> Self {
        Self::new(Bound::Unbounded, Bound::Included(b))
    }

    /// `(a, b]`
    pub fn open_closed(a: T, b: T) -> Self {
        Self::new(Bound::Excluded(a), Bound::Included(b))
    }

    /// `(a, b)`
    pub fn open(a: T, b: T) -> Self {
        Self::new(Bound::Excluded(a), Bound::Excluded(b))
    }

    /// `[a, b]`
    pub fn closed(a: T, b: T) -> Self {
        Self::new(Bound::Included(a), Bound::Included(b))
    }

    pub fn contains(&self, y: &T) -> bool {
        let lo_ok = match &self.lo {
            Bound::Unbounded => true,
            Bound::Included(a) => y >= a,
            Bound::Excluded(a) => y > a,
        };
        let hi_ok = match &self.hi {
            Bound::Unbounded => true,
            Bound::Included(b) => y <= b,
            Bound::Excluded(b) => y < b,
        };
        lo_ok && hi_ok
    }
}

/// A finite nonnegative purely atomic measure.
///
/// Invariants: every stored mass is strictly positive (beyond the zero-mass
/// tolerance), atoms are strictly ordered by location, and `total` equals the
/// sum of the masses.
#[derive(Clone, Debug)]
pub struct AtomicMeasure<T = f64> {
    /// `(stored location, mass)`, strictly increasing in stored location.
    atoms: Vec<(T, T)>,
    offset: T,
    total: T,
}

impl<T: Scalar> Default for AtomicMeasure<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> AtomicMeasure<T> {
    pub fn new() -> Self {
        Self {
            atoms: Vec::new(),
            offset: T::zero(),
            total: T::zero(),
        }
    }

    /// Builds a measure from `(location, mass)` pairs; equal locations merge.
    pub fn from_atoms<I>(atoms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (T, T)>,
    {
        let mut m = Self::new();
        for (loc, mass) in atoms {
            m.add_atom(loc, mass)?;
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total(&self) -> T {
        self.total.clone()
    }

    /// Effective `(location, mass)` pairs in increasing location order.
    pub fn atoms(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.atoms
            .iter()
            .map(move |(s, m)| (s.clone() - self.offset.clone(), m.clone()))
    }

    /// Leftmost atom, if any.
    pub fn leftmost(&self) -> Option<(T, T)> {
        self.atoms
            .first()
            .map(|(s, m)| (s.clone() - self.offset.clone(), m.clone()))
    }

    /// Mass of `(-inf, y]`.
    pub fn mass_below(&self, y: &T) -> T {
        let mut acc = T::zero();
        for (s, m) in &self.atoms {
            if s.clone() - self.offset.clone() <= *y {
                acc += m.clone();
            } else {
                break;
            }
        }
        acc
    }

    /// Mass of `(y, inf)`.
    pub fn mass_above(&self, y: &T) -> T {
        self.mass_in(&Interval::above(y.clone()))
    }

    /// Mass of the single point `{y}`.
    pub fn mass_at(&self, y: &T) -> T {
        self.mass_in(&Interval::closed(y.clone(), y.clone()))
    }

    pub fn mass_in(&self, interval: &Interval<T>) -> T {
        let mut acc = T::zero();
        for (loc, m) in self.atoms() {
            if interval.contains(&loc) {
                acc += m;
            }
        }
        acc
    }

    /// Moves every atom left by `dt`.
    pub fn drift(&mut self, dt: T) -> Result<()> {
        if dt < T::zero() {
            return Err(Error::NegativeDrift(dt.to_f64()));
        }
        self.offset += dt;
        Ok(())
    }

    /// Adds `mass` at effective location `location`, merging with an existing
    /// atom at the same location.
    pub fn add_atom(&mut self, location: T, mass: T) -> Result<()> {
        if !(mass > T::zero()) {
            return Err(Error::NonPositiveMass(mass.to_f64()));
        }
        let stored = location + self.offset.clone();
        self.total += mass.clone();
        match self
            .atoms
            .binary_search_by(|(s, _)| s.partial_cmp(&stored).expect("finite location"))
        {
            Ok(i) => self.atoms[i].1 += mass,
            Err(i) => self.atoms.insert(i, (stored, mass)),
        }
        Ok(())
    }

    /// Removes `amount` of mass scanning atoms from the left. A partially
    /// depleted atom keeps its location.
    pub fn remove_leftmost_mass(&mut self, amount: T) -> Result<()> {
        if amount < T::zero() {
            return Err(Error::NonPositiveMass(amount.to_f64()));
        }
        if amount > self.total && !(amount.clone() - self.total.clone()).is_negligible() {
            return Err(Error::InsufficientMass {
                requested: amount.to_f64(),
                available: self.total.to_f64(),
            });
        }
        let mut left = amount;
        let mut drop = 0;
        for (_, m) in self.atoms.iter_mut() {
            if left <= T::zero() {
                break;
            }
            if *m <= left {
                left -= m.clone();
                self.total -= m.clone();
                drop += 1;
            } else {
                *m -= left.clone();
                self.total -= left.clone();
                left = T::zero();
            }
        }
        self.atoms.drain(..drop);
        self.prune();
        Ok(())
    }

    /// Reduces the atom at effective location `location` by `amount`,
    /// clamping at zero and removing it if it vanishes.
    pub fn reduce_atom_at(&mut self, location: &T, amount: T) {
        let stored = location.clone() + self.offset.clone();
        if let Some(i) = self.atoms.iter().position(|(s, _)| *s == stored) {
            let m = &mut self.atoms[i].1;
            if *m <= amount {
                self.total -= m.clone();
                *m = T::zero();
            } else {
                *m -= amount.clone();
                self.total -= amount;
            }
            self.prune();
        }
    }

    /// Removes every atom in `interval` and returns the removed mass.
    pub fn remove_in(&mut self, interval: &Interval<T>) -> T {
        let offset = self.offset.clone();
        let mut removed = T::zero();
        self.atoms.retain(|(s, m)| {
            if interval.contains(&(s.clone() - offset.clone())) {
                removed += m.clone();
                false
            } else {
                true
            }
        });
        self.total -= removed.clone();
        removed
    }

    /// The measure restricted to `interval`.
    pub fn restrict(&self, interval: &Interval<T>) -> Self {
        let atoms: Vec<(T, T)> = self
            .atoms
            .iter()
            .filter(|(s, _)| interval.contains(&(s.clone() - self.offset.clone())))
            .cloned()
            .collect();
        let mut total = T::zero();
        for (_, m) in &atoms {
            total += m.clone();
        }
        Self {
            atoms,
            offset: self.offset.clone(),
            total,
        }
    }

    /// Drops atoms whose mass is zero under the numeric policy.
    pub fn prune(&mut self) {
        let mut removed = T::zero();
        self.atoms.retain(|(_, m)| {
            if m.is_negligible() {
                removed += m.clone();
                false
            } else {
                true
            }
        });
        self.total -= removed;
        if self.atoms.is_empty() {
            self.total = T::zero();
        }
    }

    /// Atom-for-atom equality of effective locations and masses.
    pub fn exactly_equals(&self, other: &Self) -> bool {
        self.len() == other.len()
            && self
                .atoms()
                .zip(other.atoms())
                .all(|((a, m), (b, n))| a == b && m == n)
    }

    /// Largest difference between the two cumulative distribution functions,
    /// probing just right of every atom. Locations closer than `loc_tol` are
    /// treated as the same point.
    pub fn cdf_distance(&self, other: &Self, loc_tol: f64) -> f64 {
        let mut probes: Vec<f64> = self
            .atoms()
            .chain(other.atoms())
            .map(|(l, _)| l.to_f64())
            .collect();
        probes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cdf = |m: &Self, y: f64| -> f64 {
            m.atoms()
                .take_while(|(l, _)| l.to_f64() <= y)
                .map(|(_, w)| w.to_f64())
                .sum()
        };
        let mut worst = (self.total.to_f64() - other.total.to_f64()).abs();
        for y in probes {
            let y = y + loc_tol;
            worst = worst.max((cdf(self, y) - cdf(other, y)).abs());
        }
        worst
    }

    /// `location,mass` rows with a header, locations in effective coordinates.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("location,mass\n");
        for (l, m) in self.atoms() {
            out.push_str(&fmt_sig17(l.to_f64()));
            out.push(',');
            out.push_str(&fmt_sig17(m.to_f64()));
            out.push('\n');
        }
        out
    }
}

impl<T: Scalar> PartialEq for AtomicMeasure<T> {
    fn eq(&self, other: &Self) -> bool {
        self.exactly_equals(other)
    }
}
