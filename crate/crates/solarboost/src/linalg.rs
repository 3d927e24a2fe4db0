//! Dense symmetric eigendecomposition for small matrices.
//!
//! The capacity filter eigendecomposes one K x K sensing matrix per time
//! step (millions of calls per training run at K ~ 15), which is too hot for
//! a general-purpose routine. This is a classic cyclic Jacobi iteration on
//! flat row-major storage: no allocations beyond the outputs, deterministic
//! rotation order, quadratic convergence once nearly diagonal.

/// Eigenvalues (unsorted) and eigenvectors of a symmetric matrix.
/// `vectors` is row-major `k x k`; column `j` is the eigenvector of
/// `values[j]`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
    pub dim: usize,
}

/// Cyclic Jacobi eigendecomposition of the symmetric matrix `a` (row-major,
/// `k x k`). The caller guarantees symmetry; only finite inputs converge.
pub fn sym_eigen(a: &[f64], k: usize) -> SymEigen {
    debug_assert_eq!(a.len(), k * k);
    let mut m = a.to_vec();
    let mut v = vec![0.0; k * k];
    for i in 0..k {
        v[i * k + i] = 1.0;
    }
    if k == 1 {
        return SymEigen { values: vec![m[0]], vectors: v, dim: 1 };
    }

    let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let stop = (norm * 1e-15).max(f64::MIN_POSITIVE);

    for _sweep in 0..50 {
        let mut off = 0.0;
        for p in 0..k {
            for q in (p + 1)..k {
                off += m[p * k + q] * m[p * k + q];
            }
        }
        if (2.0 * off).sqrt() <= stop {
            break;
        }
        for p in 0..k - 1 {
            for q in (p + 1)..k {
                let apq = m[p * k + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * k + p];
                let aqq = m[q * k + q];
                // rotation angle that annihilates a_pq
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                m[p * k + p] = app - t * apq;
                m[q * k + q] = aqq + t * apq;
                m[p * k + q] = 0.0;
                m[q * k + p] = 0.0;
                for r in 0..k {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = m[r * k + p];
                    let arq = m[r * k + q];
                    let new_rp = arp - s * (arq + tau * arp);
                    let new_rq = arq + s * (arp - tau * arq);
                    m[r * k + p] = new_rp;
                    m[p * k + r] = new_rp;
                    m[r * k + q] = new_rq;
                    m[q * k + r] = new_rq;
                }
                for r in 0..k {
                    let vrp = v[r * k + p];
                    let vrq = v[r * k + q];
                    v[r * k + p] = vrp * c - vrq * s;
                    v[r * k + q] = vrp * s + vrq * c;
                }
            }
        }
    }

    let values = (0..k).map(|i| m[i * k + i]).collect();
    SymEigen { values, vectors: v, dim: k }
}

impl SymEigen {
    /// `V f(L) V^T` for a scalar spectral map `f`; the result is exactly
    /// symmetric because only the upper triangle is computed and mirrored.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let k = self.dim;
        // w = V * diag(sqrt(f(l))) is only valid for f >= 0; build the
        // general bilinear form instead: out_ij = sum_m V_im f(l_m) V_jm.
        let fv: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = vec![0.0; k * k];
        for i in 0..k {
            for j in i..k {
                let mut acc = 0.0;
                for m in 0..k {
                    acc += self.vectors[i * k + m] * fv[m] * self.vectors[j * k + m];
                }
                out[i * k + j] = acc;
                out[j * k + i] = acc;
            }
        }
        out
    }
}

/// Floor the eigenvalues of symmetric `a` at `floor` and rebuild the matrix.
pub fn floor_spd(a: &[f64], k: usize, floor: f64) -> Vec<f64> {
    sym_eigen(a, k).spectral_map(|l| l.max(floor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_symmetric(k: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
        let mut a = vec![0.0; k * k];
        for i in 0..k {
            for j in i..k {
                let v = rng.random::<f64>() * 2.0 - 1.0;
                a[i * k + j] = v;
                a[j * k + i] = v;
            }
        }
        a
    }

    #[test]
    fn reconstructs_input_and_matches_nalgebra() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for k in 1..=15 {
            for _ in 0..20 {
                let a = random_symmetric(k, &mut rng);
                let eig = sym_eigen(&a, k);
                // reconstruction A = V L V^T
                let rec = eig.spectral_map(|l| l);
                let scale = a.iter().map(|v| v.abs()).fold(1.0, f64::max);
                for (x, y) in rec.iter().zip(a.iter()) {
                    assert!((x - y).abs() <= 1e-12 * scale, "k={k}: {x} vs {y}");
                }
                // eigenvalues agree with nalgebra (independent oracle)
                let na = DMatrix::from_row_slice(k, k, &a).symmetric_eigen();
                let mut ours = eig.values.clone();
                let mut theirs: Vec<f64> = na.eigenvalues.iter().copied().collect();
                ours.sort_by(f64::total_cmp);
                theirs.sort_by(f64::total_cmp);
                for (x, y) in ours.iter().zip(theirs.iter()) {
                    assert!((x - y).abs() <= 1e-10 * scale.max(1.0), "k={k}: {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn eigenvectors_are_orthonormal() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let k = 9;
        let a = random_symmetric(k, &mut rng);
        let eig = sym_eigen(&a, k);
        for c1 in 0..k {
            for c2 in c1..k {
                let dot: f64 =
                    (0..k).map(|r| eig.vectors[r * k + c1] * eig.vectors[r * k + c2]).sum();
                let expect = if c1 == c2 { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn floor_spd_raises_small_eigenvalues() {
        // rank-1 matrix: one positive eigenvalue, rest zero
        let q = [1.0, 2.0, 3.0];
        let mut a = vec![0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                a[i * 3 + j] = q[i] * q[j];
            }
        }
        let floored = floor_spd(&a, 3, 0.5);
        let eig = sym_eigen(&floored, 3);
        for &l in &eig.values {
            assert!(l >= 0.5 * (1.0 - 1e-12), "eigenvalue {l} below floor");
        }
    }
}
