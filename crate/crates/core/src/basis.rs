//! Tensor-product B-spline bases over a 2-D bounding box.
//!
//! A basis system holds one clamped, uniformly spaced knot vector per spatial
//! dimension; the 2-D basis is the tensor product of the two 1-D families.
//! Basis index `l` enumerates the k x k grid in row-major order over
//! (u-index, v-index), so serialized coefficient vectors are portable.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned bounding box in location units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bbox {
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Bbox {
    pub fn new(u_min: f64, u_max: f64, v_min: f64, v_max: f64) -> Self {
        Self { u_min, u_max, v_min, v_max }
    }

    /// Smallest box covering `locations`, expanded by `margin` on every side.
    pub fn from_locations(locations: &[(f64, f64)], margin: f64) -> Self {
        let mut b = Self {
            u_min: f64::INFINITY,
            u_max: f64::NEG_INFINITY,
            v_min: f64::INFINITY,
            v_max: f64::NEG_INFINITY,
        };
        for &(u, v) in locations {
            b.u_min = b.u_min.min(u);
            b.u_max = b.u_max.max(u);
            b.v_min = b.v_min.min(v);
            b.v_max = b.v_max.max(v);
        }
        b.u_min -= margin;
        b.u_max += margin;
        b.v_min -= margin;
        b.v_max += margin;
        b
    }

    fn is_degenerate(&self) -> bool {
        !(self.u_min < self.u_max && self.v_min < self.v_max)
            || !self.u_min.is_finite()
            || !self.u_max.is_finite()
            || !self.v_min.is_finite()
            || !self.v_max.is_finite()
    }
}

/// Configuration of a tensor-product basis: `per_dim_count` functions per
/// dimension (total L = per_dim_count^2) of the given polynomial degree.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisConfig {
    pub per_dim_count: usize,
    pub degree: usize,
    pub bbox: Bbox,
}

impl BasisConfig {
    pub fn new(per_dim_count: usize, degree: usize, bbox: Bbox) -> Self {
        Self { per_dim_count, degree, bbox }
    }

    /// Cubic basis over the bounding box of `locations`.
    pub fn cubic_from_locations(per_dim_count: usize, locations: &[(f64, f64)], margin: f64) -> Self {
        Self::new(per_dim_count, 3, Bbox::from_locations(locations, margin))
    }

    /// Total number of tensor-product basis functions.
    pub fn total(&self) -> usize {
        self.per_dim_count * self.per_dim_count
    }

    fn validate(&self) -> Result<()> {
        if self.per_dim_count == 0 || self.per_dim_count < self.degree + 1 {
            return Err(Error::InsufficientBasisFunctions {
                k: self.per_dim_count,
                degree: self.degree,
            });
        }
        if self.bbox.is_degenerate() {
            return Err(Error::DegenerateBbox {
                u_min: self.bbox.u_min,
                u_max: self.bbox.u_max,
                v_min: self.bbox.v_min,
                v_max: self.bbox.v_max,
            });
        }
        Ok(())
    }
}

/// Clamped knot vector: (degree+1)-fold boundary knots with uniformly spaced
/// interior knots. Length is k + degree + 1.
fn clamped_uniform_knots(k: usize, degree: usize, lo: f64, hi: f64) -> Vec<f64> {
    let n_spans = k - degree; // number of nonempty intervals
    let mut knots = Vec::with_capacity(k + degree + 1);
    for _ in 0..=degree {
        knots.push(lo);
    }
    for i in 1..n_spans {
        knots.push(lo + (hi - lo) * i as f64 / n_spans as f64);
    }
    for _ in 0..=degree {
        knots.push(hi);
    }
    knots
}

/// Immutable 2-D tensor-product B-spline basis.
///
/// Evaluation anywhere inside the bounding box yields L nonnegative values
/// summing to one. Points outside the box are clamped to the boundary; each
/// clamp increments [`BasisSystem::clamp_events`].
#[derive(Debug)]
pub struct BasisSystem {
    config: BasisConfig,
    knots_u: Vec<f64>,
    knots_v: Vec<f64>,
    clamp_events: AtomicU64,
}

impl BasisSystem {
    pub fn new(config: BasisConfig) -> Result<Self> {
        config.validate()?;
        let k = config.per_dim_count;
        let d = config.degree;
        Ok(Self {
            config,
            knots_u: clamped_uniform_knots(k, d, config.bbox.u_min, config.bbox.u_max),
            knots_v: clamped_uniform_knots(k, d, config.bbox.v_min, config.bbox.v_max),
            clamp_events: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &BasisConfig {
        &self.config
    }

    /// Total basis count L.
    pub fn len(&self) -> usize {
        self.config.total()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn knots_u(&self) -> &[f64] {
        &self.knots_u
    }

    pub fn knots_v(&self) -> &[f64] {
        &self.knots_v
    }

    /// Number of out-of-box evaluations clamped so far.
    pub fn clamp_events(&self) -> u64 {
        self.clamp_events.load(Ordering::Relaxed)
    }

    /// Evaluate all L basis functions at `(u, v)`.
    pub fn evaluate(&self, u: f64, v: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.len());
        self.evaluate_into(u, v, &mut out);
        out
    }

    /// Evaluate into a caller-provided buffer of length L.
    pub fn evaluate_into(&self, u: f64, v: f64, out: &mut DVector<f64>) {
        debug_assert_eq!(out.len(), self.len());
        out.fill(0.0);
        let k = self.config.per_dim_count;
        let d = self.config.degree;
        let bb = self.config.bbox;

        let (uc, u_clamped) = clamp_coord(u, bb.u_min, bb.u_max);
        let (vc, v_clamped) = clamp_coord(v, bb.v_min, bb.v_max);
        if u_clamped || v_clamped {
            self.clamp_events.fetch_add(1, Ordering::Relaxed);
        }

        let (span_u, vals_u) = eval_dim(&self.knots_u, k, d, uc);
        let (span_v, vals_v) = eval_dim(&self.knots_v, k, d, vc);
        for (iu, &nu) in vals_u.iter().enumerate() {
            let row = span_u - d + iu;
            for (iv, &nv) in vals_v.iter().enumerate() {
                let col = span_v - d + iv;
                out[row * k + col] = nu * nv;
            }
        }
    }

    /// Assemble the n x L design block: row i is the evaluation at location i.
    pub fn design_matrix(&self, locations: &[(f64, f64)]) -> DMatrix<f64> {
        let n = locations.len();
        let l = self.len();
        let mut psi = DMatrix::zeros(n, l);
        let mut buf = DVector::zeros(l);
        for (i, &(u, v)) in locations.iter().enumerate() {
            self.evaluate_into(u, v, &mut buf);
            psi.row_mut(i).copy_from(&buf.transpose());
        }
        psi
    }
}

fn clamp_coord(x: f64, lo: f64, hi: f64) -> (f64, bool) {
    if x < lo {
        (lo, true)
    } else if x > hi {
        (hi, true)
    } else {
        (x, false)
    }
}

/// Knot span index: largest s in [degree, k-1] with knots[s] <= x.
fn find_span(knots: &[f64], k: usize, degree: usize, x: f64) -> usize {
    if x >= knots[k] {
        return k - 1;
    }
    let mut lo = degree;
    let mut hi = k;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if x < knots[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Nonzero B-spline values at x: returns the span and the degree+1 values of
/// functions span-degree ..= span (triangular scheme).
fn eval_dim(knots: &[f64], k: usize, degree: usize, x: f64) -> (usize, Vec<f64>) {
    let span = find_span(knots, k, degree, x);
    let mut vals = vec![0.0; degree + 1];
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    vals[0] = 1.0;
    for j in 1..=degree {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = vals[r] / (right[r + 1] + left[j - r]);
            vals[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        vals[j] = saved;
    }
    (span, vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn unit_config(k: usize, degree: usize) -> BasisConfig {
        BasisConfig::new(k, degree, Bbox::new(0.0, 1.0, 0.0, 1.0))
    }

    #[test]
    fn basis_counts_match_grid() {
        let b = BasisSystem::new(unit_config(4, 3)).unwrap();
        assert_eq!(b.len(), 16);
        let b = BasisSystem::new(unit_config(5, 3)).unwrap();
        assert_eq!(b.len(), 25);
    }

    #[test]
    fn rejects_insufficient_functions() {
        let err = BasisSystem::new(unit_config(4, 4)).unwrap_err();
        assert!(matches!(err, Error::InsufficientBasisFunctions { .. }));
    }

    #[test]
    fn rejects_degenerate_bbox() {
        let cfg = BasisConfig::new(4, 3, Bbox::new(2.0, 2.0, 0.0, 1.0));
        assert!(matches!(
            BasisSystem::new(cfg),
            Err(Error::DegenerateBbox { .. })
        ));
    }

    #[test]
    fn knots_are_clamped_and_nondecreasing() {
        let b = BasisSystem::new(unit_config(6, 3)).unwrap();
        let knots = b.knots_u();
        assert_eq!(knots.len(), 6 + 3 + 1);
        assert!(knots.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(&knots[..4], &[0.0; 4]);
        assert_eq!(&knots[6..], &[1.0; 4]);
    }

    #[test]
    fn partition_of_unity_interior() {
        let mut rng = crate::rng::child_rng(11, &[0]);
        for k in [4usize, 5, 6, 7] {
            let b = BasisSystem::new(unit_config(k, 3)).unwrap();
            for _ in 0..2000 {
                let u: f64 = rng.random();
                let v: f64 = rng.random();
                let vals = b.evaluate(u, v);
                let sum: f64 = vals.iter().sum();
                assert!((sum - 1.0).abs() < 1e-10, "k={k} sum={sum}");
                assert!(vals.iter().all(|&x| x >= 0.0));
            }
        }
    }

    #[test]
    fn corner_evaluates_to_single_one() {
        let b = BasisSystem::new(unit_config(5, 3)).unwrap();
        let vals = b.evaluate(0.0, 0.0);
        assert!((vals[0] - 1.0).abs() < 1e-14);
        for l in 1..vals.len() {
            assert!(vals[l].abs() < 1e-14);
        }
        // Opposite corner lights up the last tensor index.
        let vals = b.evaluate(1.0, 1.0);
        assert!((vals[24] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn degree_zero_is_cell_indicator() {
        let b = BasisSystem::new(unit_config(2, 0)).unwrap();
        let vals = b.evaluate(0.25, 0.25);
        assert_eq!(vals[0], 1.0);
        assert_eq!(vals.iter().filter(|&&x| x != 0.0).count(), 1);
        let vals = b.evaluate(0.75, 0.25);
        assert_eq!(vals[2], 1.0); // u-index 1, v-index 0 -> l = 1*2 + 0
    }

    #[test]
    fn local_support_bound() {
        let mut rng = crate::rng::child_rng(12, &[0]);
        for (k, d) in [(7usize, 3usize), (5, 2), (6, 1)] {
            let b = BasisSystem::new(unit_config(k, d)).unwrap();
            for _ in 0..500 {
                let vals = b.evaluate(rng.random(), rng.random());
                let nonzero = vals.iter().filter(|&&x| x != 0.0).count();
                assert!(nonzero <= (d + 1) * (d + 1));
            }
        }
    }

    #[test]
    fn reflection_symmetry_multiset() {
        let b = BasisSystem::new(unit_config(6, 3)).unwrap();
        let mut rng = crate::rng::child_rng(13, &[0]);
        for _ in 0..200 {
            let (u, v): (f64, f64) = (rng.random(), rng.random());
            let mut a: Vec<f64> = b.evaluate(u, v).iter().copied().collect();
            let mut c: Vec<f64> = b.evaluate(1.0 - u, v).iter().copied().collect();
            a.sort_by(f64::total_cmp);
            c.sort_by(f64::total_cmp);
            for (x, y) in a.iter().zip(&c) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn out_of_box_clamps_and_counts() {
        let b = BasisSystem::new(unit_config(4, 3)).unwrap();
        assert_eq!(b.clamp_events(), 0);
        let outside = b.evaluate(-0.5, 0.3);
        let boundary = b.evaluate(0.0, 0.3);
        assert_eq!(b.clamp_events(), 1);
        for (x, y) in outside.iter().zip(boundary.iter()) {
            assert_eq!(x, y);
        }
        b.evaluate(0.5, 2.0);
        assert_eq!(b.clamp_events(), 2);
    }

    #[test]
    fn design_matrix_rows_match_single_evaluations() {
        let b = BasisSystem::new(unit_config(5, 3)).unwrap();
        let pts = vec![(0.1, 0.9), (0.5, 0.5), (0.99, 0.01)];
        let psi = b.design_matrix(&pts);
        assert_eq!(psi.nrows(), 3);
        assert_eq!(psi.ncols(), 25);
        for (i, &(u, v)) in pts.iter().enumerate() {
            let row = b.evaluate(u, v);
            for l in 0..25 {
                assert_eq!(psi[(i, l)], row[l]);
            }
            let s: f64 = psi.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn single_point_design_is_one_row() {
        let b = BasisSystem::new(unit_config(4, 3)).unwrap();
        let psi = b.design_matrix(&[(0.3, 0.7)]);
        assert_eq!((psi.nrows(), psi.ncols()), (1, 16));
    }
}
