//! Clamped knot vectors and B-spline basis evaluation.
//!
//! Indexing is 0-based throughout: a knot vector with `m` entries and degree
//! `p` carries `n = m - p - 1` basis functions `N_0 .. N_{n-1}`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Knot comparisons below this are treated as equal (repeated knots).
pub(crate) const KNOT_EPS: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKnotVector")]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
}

#[derive(Deserialize)]
struct RawKnotVector {
    degree: usize,
    knots: Vec<f64>,
}

impl TryFrom<RawKnotVector> for KnotVector {
    type Error = GeometryError;

    fn try_from(raw: RawKnotVector) -> Result<Self, Self::Error> {
        KnotVector::new(raw.degree, raw.knots)
    }
}

impl KnotVector {
    /// Validates monotonicity, clamping and the minimum length `2(p+1)`.
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self, GeometryError> {
        let p = degree;
        if knots.len() < 2 * (p + 1) {
            return Err(GeometryError::InvalidKnots(format!(
                "{} knots cannot carry a degree {p} basis (need at least {})",
                knots.len(),
                2 * (p + 1)
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(GeometryError::InvalidKnots("non-finite knot".into()));
        }
        if let Some(i) = knots.windows(2).position(|w| w[1] < w[0]) {
            return Err(GeometryError::InvalidKnots(format!(
                "knots decrease at index {i}: {} > {}",
                knots[i],
                knots[i + 1]
            )));
        }
        let m = knots.len();
        let (a, b) = (knots[0], knots[m - 1]);
        if b - a <= KNOT_EPS {
            return Err(GeometryError::InvalidKnots("empty parameter domain".into()));
        }
        let clamped = knots[..=p].iter().all(|&k| k == a) && knots[m - p - 1..].iter().all(|&k| k == b);
        if !clamped {
            return Err(GeometryError::InvalidKnots(format!("end knots must be repeated {} times", p + 1)));
        }
        for i in p + 1..m - p - 1 {
            let mult = knots.iter().filter(|&&k| (k - knots[i]).abs() <= KNOT_EPS).count();
            if mult > p {
                return Err(GeometryError::InvalidKnots(format!(
                    "interior knot {} has multiplicity {mult} > degree {p}",
                    knots[i]
                )));
            }
        }
        Ok(Self { degree, knots })
    }

    /// Open knot vector on [0,1] with `interior` knots at `j/(interior+1)`.
    pub fn uniform(degree: usize, interior: usize) -> Self {
        let mut knots = vec![0.0; degree + 1];
        knots.extend((1..=interior).map(|j| j as f64 / (interior + 1) as f64));
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Self { degree, knots }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn num_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    pub fn multiplicity(&self, u: f64) -> usize {
        self.knots.iter().filter(|&&k| (k - u).abs() <= KNOT_EPS).count()
    }

    fn check_domain(&self, u: f64) -> Result<(), GeometryError> {
        let (a, b) = self.domain();
        if !(u >= a && u <= b) {
            return Err(GeometryError::OutOfDomain { u, lower: a, upper: b });
        }
        Ok(())
    }

    /// Index `i` with `knots[i] <= u < knots[i+1]`; the right end of the
    /// domain maps to the last non-empty span.
    pub fn find_span(&self, u: f64) -> Result<usize, GeometryError> {
        self.check_domain(u)?;
        let p = self.degree;
        let n = self.num_basis();
        if u >= self.knots[n] {
            return Ok(n - 1);
        }
        // binary search over [p, n)
        let (mut lo, mut hi) = (p, n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if u < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(lo)
    }

    /// Non-zero spans as `(span index, start, end)`.
    pub fn spans(&self) -> Vec<(usize, f64, f64)> {
        let p = self.degree;
        (p..self.num_basis())
            .filter(|&i| self.knots[i + 1] - self.knots[i] > KNOT_EPS)
            .map(|i| (i, self.knots[i], self.knots[i + 1]))
            .collect()
    }

    /// The `p+1` basis functions `N_{span-p} .. N_span` that are non-zero on
    /// `span`, via the triangular recursion.
    pub fn local_basis(&self, span: usize, u: f64) -> Vec<f64> {
        let p = self.degree;
        let k = &self.knots;
        let mut vals = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        vals[0] = 1.0;
        for j in 1..=p {
            left[j] = u - k[span + 1 - j];
            right[j] = k[span + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom == 0.0 { 0.0 } else { vals[r] / denom };
                vals[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            vals[j] = saved;
        }
        vals
    }

    /// Derivatives up to order `order` of the non-zero basis functions on
    /// `span`; row `d` holds the `d`-th derivatives. Orders above the degree
    /// are zero rows.
    pub fn local_derivatives(&self, span: usize, u: f64, order: usize) -> Vec<Vec<f64>> {
        let p = self.degree;
        let k = &self.knots;
        let mut ders = vec![vec![0.0; p + 1]; order + 1];
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = u - k[span + 1 - j];
            right[j] = k[span + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                // lower triangle stores knot differences
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = if ndu[j][r] == 0.0 { 0.0 } else { ndu[r][j - 1] / ndu[j][r] };
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let top = order.min(p);
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for kk in 1..=top {
                let mut d = 0.0;
                let rk = r as isize - kk as isize;
                let pk = p - kk;
                if r >= kk {
                    let den = ndu[pk + 1][rk as usize];
                    a[s2][0] = if den == 0.0 { 0.0 } else { a[s1][0] / den };
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if (r as isize - 1) <= pk as isize { kk - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    let den = ndu[pk + 1][idx];
                    a[s2][j] = if den == 0.0 { 0.0 } else { (a[s1][j] - a[s1][j - 1]) / den };
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    let den = ndu[pk + 1][r];
                    a[s2][kk] = if den == 0.0 { 0.0 } else { -a[s1][kk - 1] / den };
                    d += a[s2][kk] * ndu[r][pk];
                }
                ders[kk][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for (kk, row) in ders.iter_mut().enumerate().take(top + 1).skip(1) {
            for v in row.iter_mut() {
                *v *= factor;
            }
            factor *= (p - kk) as f64;
        }
        ders
    }

    /// All `n` basis function values at `u`.
    pub fn basis_functions(&self, u: f64) -> Result<Vec<f64>, GeometryError> {
        let span = self.find_span(u)?;
        let local = self.local_basis(span, u);
        let mut out = vec![0.0; self.num_basis()];
        out[span - self.degree..=span].copy_from_slice(&local);
        Ok(out)
    }

    /// `n x (order+1)` table: column `d` holds the `d`-th derivatives of all
    /// basis functions.
    pub fn basis_derivatives(&self, u: f64, order: usize) -> Result<DMatrix<f64>, GeometryError> {
        let span = self.find_span(u)?;
        let local = self.local_derivatives(span, u, order);
        let mut out = DMatrix::zeros(self.num_basis(), order + 1);
        let first = span - self.degree;
        for (d, row) in local.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                out[(first + j, d)] = *v;
            }
        }
        Ok(out)
    }

    /// New knot vector with `u` added; validates the insertion.
    pub fn with_knot(&self, u: f64) -> Result<(usize, KnotVector), GeometryError> {
        let (a, b) = self.domain();
        if !(u > a && u < b) {
            return Err(GeometryError::InsertOutOfRange { u, lower: a, upper: b });
        }
        let mult = self.multiplicity(u);
        if mult + 1 > self.degree {
            return Err(GeometryError::Multiplicity { u, multiplicity: mult, degree: self.degree });
        }
        let span = self.find_span(u)?;
        let mut knots = Vec::with_capacity(self.knots.len() + 1);
        knots.extend_from_slice(&self.knots[..=span]);
        knots.push(u);
        knots.extend_from_slice(&self.knots[span + 1..]);
        Ok((span, KnotVector { degree: self.degree, knots }))
    }
}
