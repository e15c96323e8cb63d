//! Box predicates. Boundaries are only ever copied between cells, never
//! recomputed, so shared faces compare exactly equal.

use serde::{Deserialize, Serialize};

use super::HyperRect;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Lower,
    Upper,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Lower, Side::Upper];
}

/// If `b` sits against `a` across a single face, the dimension and the side
/// of `a` it is on. Requires positive overlap along every other dimension.
pub fn face_contact(a: &HyperRect, b: &HyperRect) -> Option<(usize, Side)> {
    let mut contact = None;
    for p in 0..a.dim() {
        if b.lower[p] == a.upper[p] {
            if contact.is_some() {
                return None;
            }
            contact = Some((p, Side::Upper));
        } else if b.upper[p] == a.lower[p] {
            if contact.is_some() {
                return None;
            }
            contact = Some((p, Side::Lower));
        } else if a.upper[p].min(b.upper[p]) <= a.lower[p].max(b.lower[p]) {
            return None;
        }
    }
    contact
}

/// Neighbour relation of the partition graph: closures meet in more than
/// one point. In one dimension two intervals sharing an endpoint count as
/// neighbours, otherwise a 1D partition would have no edges at all.
pub fn closures_adjacent(a: &HyperRect, b: &HyperRect) -> bool {
    let d = a.dim();
    let mut any_positive = false;
    for p in 0..d {
        let overlap = a.upper[p].min(b.upper[p]) - a.lower[p].max(b.lower[p]);
        if overlap < 0.0 {
            return false;
        }
        if overlap > 0.0 {
            any_positive = true;
        }
    }
    if d == 1 {
        // distinct cells of a partition never overlap, so this is a shared endpoint
        return !any_positive;
    }
    // all-positive overlap would mean the cells intersect, which a partition excludes
    any_positive && !(0..d).all(|p| a.upper[p].min(b.upper[p]) > a.lower[p].max(b.lower[p]))
}

pub(crate) fn aspect_ratio(lower: &[f64], upper: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for (l, u) in lower.iter().zip(upper) {
        let s = u - l;
        lo = lo.min(s);
        hi = hi.max(s);
    }
    hi / lo
}

/// Axis-aligned bounds `(lower, upper)`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn of(c: &HyperRect) -> Self {
        Bounds {
            lower: c.lower.clone(),
            upper: c.upper.clone(),
        }
    }

    pub fn extend(&mut self, c: &HyperRect) {
        for p in 0..self.lower.len() {
            self.lower[p] = self.lower[p].min(c.lower[p]);
            self.upper[p] = self.upper[p].max(c.upper[p]);
        }
    }

    /// Positive-volume intersection with `c`.
    pub fn meets_interior(&self, c: &HyperRect) -> bool {
        (0..self.lower.len()).all(|p| self.upper[p].min(c.upper[p]) > self.lower[p].max(c.lower[p]))
    }

    pub fn contains(&self, c: &HyperRect) -> bool {
        (0..self.lower.len()).all(|p| c.lower[p] >= self.lower[p] && c.upper[p] <= self.upper[p])
    }

    pub fn aspect_ratio(&self) -> f64 {
        aspect_ratio(&self.lower, &self.upper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(lo: &[f64], hi: &[f64]) -> HyperRect {
        HyperRect::new(lo.to_vec(), hi.to_vec())
    }

    #[test]
    fn face_contact_sides() {
        let a = b(&[0.0, 0.0], &[0.5, 0.5]);
        assert_eq!(face_contact(&a, &b(&[0.5, 0.0], &[1.0, 0.5])), Some((0, Side::Upper)));
        assert_eq!(face_contact(&a, &b(&[0.0, 0.5], &[0.5, 1.0])), Some((1, Side::Upper)));
        assert_eq!(face_contact(&b(&[0.5, 0.0], &[1.0, 0.5]), &a), Some((0, Side::Lower)));
        // corner only
        assert_eq!(face_contact(&a, &b(&[0.5, 0.5], &[1.0, 1.0])), None);
        // touching plane but no overlap along the face
        assert_eq!(face_contact(&a, &b(&[0.5, 0.6], &[1.0, 1.0])), None);
    }

    #[test]
    fn closure_adjacency_excludes_corners() {
        let a = b(&[0.0, 0.0], &[0.5, 0.5]);
        assert!(closures_adjacent(&a, &b(&[0.5, 0.2], &[1.0, 0.7])));
        assert!(!closures_adjacent(&a, &b(&[0.5, 0.5], &[1.0, 1.0])));
        assert!(!closures_adjacent(&a, &b(&[0.6, 0.0], &[1.0, 1.0])));
        // 3D edge contact: closures share a segment
        let c = b(&[0.0, 0.0, 0.0], &[0.5, 0.5, 1.0]);
        assert!(closures_adjacent(&c, &b(&[0.5, 0.5, 0.0], &[1.0, 1.0, 1.0])));
        // 3D corner contact
        let e = b(&[0.0, 0.0, 0.0], &[0.5, 0.5, 0.5]);
        assert!(!closures_adjacent(&e, &b(&[0.5, 0.5, 0.5], &[1.0, 1.0, 1.0])));
    }

    #[test]
    fn one_dimensional_endpoints() {
        assert!(closures_adjacent(&b(&[0.0], &[0.4]), &b(&[0.4], &[1.0])));
        assert!(!closures_adjacent(&b(&[0.0], &[0.4]), &b(&[0.5], &[1.0])));
    }
}
