//! Small dense symmetric-matrix helpers (row-major, `n` at most a handful).

use crate::scalar::Real;

/// Cyclic Jacobi eigen-decomposition. Returns eigenvalues and column
/// eigenvectors (row-major `n x n`).
pub fn sym_eigen<T: Real>(a: &[T], n: usize) -> (Vec<T>, Vec<T>) {
    let mut m = a.to_vec();
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }
    let two = T::lit(2.0);
    for _sweep in 0..64 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        if off <= T::epsilon() * T::epsilon() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let tau = (m[q * n + q] - m[p * n + p]) / (two * apq);
                let t = tau.signum() / (tau.abs() + (T::one() + tau * tau).sqrt());
                let c = (T::one() + t * t).sqrt().recip();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| m[i * n + i]).collect(), v)
}

fn rebuild<T: Real>(vals: &[T], vecs: &[T], n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = (0..n).map(|k| vecs[i * n + k] * vals[k] * vecs[j * n + k]).sum();
        }
    }
    out
}

/// Symmetrizes and clips negative eigenvalues to zero.
pub fn psd_project<T: Real>(a: &[T], n: usize) -> Vec<T> {
    let half = T::lit(0.5);
    let sym: Vec<T> = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            half * (a[i * n + j] + a[j * n + i])
        })
        .collect();
    let (vals, vecs) = sym_eigen(&sym, n);
    if vals.iter().all(|&l| l >= T::zero()) {
        return sym;
    }
    let clipped: Vec<T> = vals.iter().map(|&l| l.max(T::zero())).collect();
    rebuild(&clipped, &vecs, n)
}

/// Principal square root of a symmetric PSD matrix.
pub fn psd_sqrt<T: Real>(a: &[T], n: usize) -> Vec<T> {
    let (vals, vecs) = sym_eigen(a, n);
    let roots: Vec<T> = vals.iter().map(|&l| l.max(T::zero()).sqrt()).collect();
    rebuild(&roots, &vecs, n)
}

/// Determinant of a row-major `n x n` matrix by LU with partial pivoting.
pub fn det<T: Real>(a: &[T], n: usize) -> T {
    let mut m = a.to_vec();
    let mut d = T::one();
    for c in 0..n {
        let pivot = (c..n)
            .max_by(|&i, &j| m[i * n + c].abs().partial_cmp(&m[j * n + c].abs()).expect("finite"))
            .expect("nonempty");
        if m[pivot * n + c] == T::zero() {
            return T::zero();
        }
        if pivot != c {
            for k in 0..n {
                m.swap(c * n + k, pivot * n + k);
            }
            d = -d;
        }
        let p = m[c * n + c];
        d *= p;
        for r in c + 1..n {
            let f = m[r * n + c] / p;
            for k in c..n {
                let v = m[c * n + k];
                m[r * n + k] -= f * v;
            }
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_of_two_by_two() {
        let (vals, _) = sym_eigen::<f64>(&[2.0, 1.0, 1.0, 2.0], 2);
        let mut v = vals.clone();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((v[0] - 1.0).abs() < 1e-12 && (v[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn projection_clips_negative_directions() {
        let p = psd_project::<f64>(&[1.0, 2.0, 2.0, 1.0], 2);
        // eigenvalues 3 and -1 -> keep only the 3 along (1,1)/sqrt2
        for x in &p {
            assert!((x - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn sqrt_squares_back() {
        let a = [4.0, 1.0, 1.0, 3.0];
        let r = psd_sqrt(&a, 2);
        let sq: Vec<f64> = (0..4)
            .map(|k| (0..2).map(|l| r[(k / 2) * 2 + l] * r[l * 2 + k % 2]).sum())
            .collect();
        for (x, y) in sq.iter().zip(&a) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn determinant_with_pivoting() {
        assert!((det::<f64>(&[0.0, 2.0, 3.0, 1.0], 2) + 6.0).abs() < 1e-14);
        let a = [2.0, 0.0, 1.0, 1.0, 3.0, 2.0, 1.0, 1.0, 2.0];
        assert!((det::<f64>(&a, 3) - 6.0).abs() < 1e-13);
        assert_eq!(det::<f64>(&[1.0, 2.0, 2.0, 4.0], 2), 0.0);
    }
}
