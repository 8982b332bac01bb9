//! Independent brute-force propagators used to cross-check the Runge-Kutta
//! pipeline: constant-H matrix exponentials via Hermitian eigendecomposition,
//! path-ordered slice products, and the closed-form two-flavor vacuum
//! survival probability.
//!
//! The eigendecomposition is written out for N ≤ 3 (characteristic-polynomial
//! eigenvalues, nullspace eigenvectors, one Rayleigh/re-orthonormalization
//! polish pass) so this verification path carries no solver dependency of its
//! own.

use num_complex::Complex64;
use thiserror::Error;

use crate::matrix::CMatrix;
use crate::rk::{Hamiltonian, StateVector};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OracleError {
    #[error("matrix is not Hermitian (defect {defect:e} exceeds {limit:e})")]
    NotHermitian { defect: f64, limit: f64 },
    #[error("eigendecomposition implemented for dimensions 1..=3, got {0}")]
    UnsupportedDimension(usize),
    #[error("slice count must be at least 1")]
    NoSlices,
}

const HERMITIAN_LIMIT: f64 = 1e-12;

/// Unitary evolution operator U(t, t₀).
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorMatrix {
    matrix: CMatrix,
}

impl PropagatorMatrix {
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn apply(&self, state: &StateVector) -> StateVector {
        StateVector::new(self.matrix.apply(state.amplitudes())).expect("propagator dim >= 1")
    }

    /// max|U·U† − I|
    pub fn unitarity_defect(&self) -> f64 {
        self.matrix.unitarity_defect()
    }

    /// Ordered composition: `self` applied after `earlier`.
    pub fn after(&self, earlier: &PropagatorMatrix) -> PropagatorMatrix {
        PropagatorMatrix {
            matrix: self.matrix.mul(&earlier.matrix),
        }
    }
}

/// Eigenvalues (ascending) and an orthonormal eigenbasis (columns) of a
/// Hermitian matrix, dimensions 1 through 3.
pub fn hermitian_eigen(h: &CMatrix) -> Result<(Vec<f64>, CMatrix), OracleError> {
    let defect = h.hermiticity_defect();
    if defect >= HERMITIAN_LIMIT {
        return Err(OracleError::NotHermitian {
            defect,
            limit: HERMITIAN_LIMIT,
        });
    }
    let (vals, mut vecs) = match h.dim() {
        1 => (vec![h.get(0, 0).re], CMatrix::identity(1)),
        2 => eigen2(h),
        3 => eigen3(h),
        n => return Err(OracleError::UnsupportedDimension(n)),
    };
    let vals = polish(h, &mut vecs, vals);
    Ok((vals, vecs))
}

/// exp(−i·H·dt) for Hermitian H, computed as Σ_k e^{−iλ_k dt} v_k v_k†.
pub fn hermitian_exponential(h: &CMatrix, dt: f64) -> Result<PropagatorMatrix, OracleError> {
    let (vals, vecs) = hermitian_eigen(h)?;
    let n = h.dim();
    let mut out = CMatrix::zeros(n);
    for (k, lambda) in vals.iter().enumerate() {
        let phase = Complex64::new(0.0, -lambda * dt).exp();
        for i in 0..n {
            for j in 0..n {
                let add = phase * vecs.get(i, k) * vecs.get(j, k).conj();
                out.set(i, j, out.get(i, j) + add);
            }
        }
    }
    Ok(PropagatorMatrix { matrix: out })
}

/// Path-ordered product of constant-H propagators over equal slices of
/// [t1, t2], each slice evaluated at its midpoint; later slices multiply on
/// the left.
pub fn path_ordered_propagator<H: Hamiltonian>(
    ham: &H,
    t1: f64,
    t2: f64,
    n_slices: usize,
) -> Result<PropagatorMatrix, OracleError> {
    if n_slices == 0 {
        return Err(OracleError::NoSlices);
    }
    let n = ham.dim();
    let dt = (t2 - t1) / n_slices as f64;
    let mut total = PropagatorMatrix {
        matrix: CMatrix::identity(n),
    };
    for s in 0..n_slices {
        let mid = t1 + (s as f64 + 0.5) * dt;
        let mut slice = CMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                slice.set(i, j, ham.entry(mid, i, j));
            }
        }
        let u = hermitian_exponential(&slice, dt)?;
        total = u.after(&total);
    }
    Ok(total)
}

/// Closed-form two-flavor vacuum survival probability
/// P_ee = 1 − sin²(2θ)·sin²(Δm²·L/(4E)).
pub fn two_flavor_vacuum_analytic(theta: f64, dm2: f64, energy: f64, length: f64) -> f64 {
    let s2 = (2.0 * theta).sin();
    let phase = dm2 * length / (4.0 * energy);
    1.0 - s2 * s2 * phase.sin() * phase.sin()
}

// --- closed-form eigensolvers -------------------------------------------------

fn eigen2(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    let a = h.get(0, 0).re;
    let d = h.get(1, 1).re;
    let b = h.get(0, 1);
    let scale = a.abs().max(d.abs()).max(b.norm()).max(f64::MIN_POSITIVE);

    if b.norm() <= scale * 1e-15 {
        // Effectively diagonal.
        if a <= d {
            return (vec![a, d], CMatrix::identity(2));
        }
        let mut v = CMatrix::zeros(2);
        v.set(0, 1, Complex64::ONE);
        v.set(1, 0, Complex64::ONE);
        return (vec![d, a], v);
    }

    let mean = 0.5 * (a + d);
    let split = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    let lo = mean - split;
    let hi = mean + split;

    // (H − λI)v = 0 has the explicit solution v ∝ (b, λ − a).
    let mut v = CMatrix::zeros(2);
    for (k, lambda) in [lo, hi].into_iter().enumerate() {
        let v0 = b;
        let v1 = Complex64::new(lambda - a, 0.0);
        let norm = (v0.norm_sqr() + v1.norm_sqr()).sqrt();
        v.set(0, k, v0 / norm);
        v.set(1, k, v1 / norm);
    }
    (vec![lo, hi], v)
}

#[allow(clippy::needless_range_loop)]
fn eigen3(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    let vals = eigenvalues3(h);
    let scale = vals
        .iter()
        .map(|v| v.abs())
        .fold(f64::MIN_POSITIVE, f64::max);

    let g01 = vals[1] - vals[0];
    let g12 = vals[2] - vals[1];
    if g01.max(g12) <= scale * 1e-14 {
        // Fully degenerate: H ≈ λI and any orthonormal basis serves.
        return (vals, CMatrix::identity(3));
    }

    // Resolve the best-separated extremal eigenvalue first, then diagonalize
    // the 2x2 restriction of H to its orthogonal complement.
    let isolated = if g01 >= g12 { 0 } else { 2 };
    let v_iso = nullspace_vector(h, vals[isolated]);
    let (u, w) = orthonormal_complement(&v_iso);

    let mut b = CMatrix::zeros(2);
    let hu = h.apply(&u);
    let hw = h.apply(&w);
    b.set(0, 0, dot(&u, &hu));
    b.set(0, 1, dot(&u, &hw));
    b.set(1, 0, dot(&w, &hu));
    b.set(1, 1, dot(&w, &hw));
    // Symmetrize away rounding noise before the 2x2 solve.
    let sym = CMatrix::from_rows(
        2,
        &[
            Complex64::new(b.get(0, 0).re, 0.0),
            0.5 * (b.get(0, 1) + b.get(1, 0).conj()),
            0.5 * (b.get(1, 0) + b.get(0, 1).conj()),
            Complex64::new(b.get(1, 1).re, 0.0),
        ],
    );
    let (sub_vals, sub_vecs) = eigen2(&sym);

    let mut pairs: Vec<(f64, [Complex64; 3])> = Vec::with_capacity(3);
    pairs.push((vals[isolated], v_iso));
    for k in 0..2 {
        let mut v = [Complex64::ZERO; 3];
        for i in 0..3 {
            v[i] = sub_vecs.get(0, k) * u[i] + sub_vecs.get(1, k) * w[i];
        }
        pairs.push((sub_vals[k], v));
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut vecs = CMatrix::zeros(3);
    let mut out_vals = Vec::with_capacity(3);
    for (k, (lambda, v)) in pairs.into_iter().enumerate() {
        out_vals.push(lambda);
        for i in 0..3 {
            vecs.set(i, k, v[i]);
        }
    }
    (out_vals, vecs)
}

/// Eigenvalues of a 3x3 Hermitian matrix via the trigonometric solution of
/// the characteristic polynomial, ascending.
fn eigenvalues3(h: &CMatrix) -> Vec<f64> {
    let p1 = h.get(0, 1).norm_sqr() + h.get(0, 2).norm_sqr() + h.get(1, 2).norm_sqr();
    let q = h.trace().re / 3.0;
    let d0 = h.get(0, 0).re - q;
    let d1 = h.get(1, 1).re - q;
    let d2 = h.get(2, 2).re - q;
    let p2 = d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * p1;
    if p2 <= 0.0 {
        return vec![q, q, q];
    }
    let p = (p2 / 6.0).sqrt();

    // B = (H − qI)/p; r = det(B)/2 lands in [−1, 1] up to rounding.
    let b = |i: usize, j: usize| -> Complex64 {
        let shift = if i == j {
            Complex64::new(q, 0.0)
        } else {
            Complex64::ZERO
        };
        (h.get(i, j) - shift) / p
    };
    let det = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1))
        - b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0))
        + b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
    let r = (det.re / 2.0).clamp(-1.0, 1.0);

    let phi = r.acos() / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
    let mid = 3.0 * q - hi - lo;
    vec![lo, mid, hi]
}

/// Unit vector spanning the nullspace of (H − λI), taken as the largest
/// bilinear cross product of two rows.
#[allow(clippy::needless_range_loop)]
fn nullspace_vector(h: &CMatrix, lambda: f64) -> [Complex64; 3] {
    let row = |i: usize| -> [Complex64; 3] {
        let mut r = [Complex64::ZERO; 3];
        for j in 0..3 {
            r[j] = h.get(i, j);
            if i == j {
                r[j] -= Complex64::new(lambda, 0.0);
            }
        }
        r
    };
    let rows = [row(0), row(1), row(2)];
    let mut best = [Complex64::ZERO; 3];
    let mut best_norm = 0.0;
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let c = cross(&rows[i], &rows[j]);
        let n2: f64 = c.iter().map(|v| v.norm_sqr()).sum();
        if n2 > best_norm {
            best_norm = n2;
            best = c;
        }
    }
    if best_norm <= 0.0 {
        // (H − λI) vanished entirely; any direction is an eigenvector.
        return [Complex64::ONE, Complex64::ZERO, Complex64::ZERO];
    }
    let norm = best_norm.sqrt();
    best.map(|v| v / norm)
}

fn cross(a: &[Complex64; 3], b: &[Complex64; 3]) -> [Complex64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Two unit vectors completing `v` to an orthonormal basis of C³.
fn orthonormal_complement(v: &[Complex64; 3]) -> ([Complex64; 3], [Complex64; 3]) {
    // Start from the standard basis vector least aligned with v.
    let overlaps = [v[0].norm(), v[1].norm(), v[2].norm()];
    let mut least = 0;
    for k in 1..3 {
        if overlaps[k] < overlaps[least] {
            least = k;
        }
    }
    let mut u = [Complex64::ZERO; 3];
    u[least] = Complex64::ONE;
    let proj = dot(v, &u);
    for i in 0..3 {
        u[i] -= proj * v[i];
    }
    let un: f64 = u.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let u = u.map(|x| x / un);

    // conj(v × u) is orthogonal to both under the Hermitian inner product.
    let w = cross(v, &u).map(|x| x.conj());
    let wn: f64 = w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    (u, w.map(|x| x / wn))
}

/// One refinement pass: re-orthonormalize the eigenbasis (modified
/// Gram-Schmidt) and replace each eigenvalue by its Rayleigh quotient.
#[allow(clippy::needless_range_loop)]
fn polish(h: &CMatrix, vecs: &mut CMatrix, vals: Vec<f64>) -> Vec<f64> {
    let n = h.dim();
    let mut cols: Vec<Vec<Complex64>> = (0..n)
        .map(|k| (0..n).map(|i| vecs.get(i, k)).collect())
        .collect();
    for k in 0..n {
        for prev in 0..k {
            let proj: Complex64 = cols[prev]
                .iter()
                .zip(cols[k].iter())
                .map(|(p, c)| p.conj() * c)
                .sum();
            for i in 0..n {
                let sub = proj * cols[prev][i];
                cols[k][i] -= sub;
            }
        }
        let norm: f64 = cols[k].iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        for x in cols[k].iter_mut() {
            *x /= norm;
        }
    }
    let mut out = Vec::with_capacity(n);
    for (k, col) in cols.iter().enumerate() {
        let hv = h.apply(col);
        let rayleigh: Complex64 = col.iter().zip(hv.iter()).map(|(c, y)| c.conj() * y).sum();
        out.push(rayleigh.re);
        for i in 0..n {
            vecs.set(i, k, col[i]);
        }
    }
    let _ = vals;
    out
}
