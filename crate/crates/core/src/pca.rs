//! Two-component PCA by power iteration with deflation.

use crate::error::{invalid, Result};
use crate::linalg::{dot, normalize_in_place, Matrix};

const MAX_ITERS: usize = 500;
const TOLERANCE: f64 = 1e-12;

/// Coordinates of every row on the two leading principal axes. Each axis is
/// signed so that its largest-magnitude component is positive.
pub fn project_2d(features: &Matrix) -> Result<Matrix> {
    let (n, d) = (features.rows(), features.cols());
    if n == 0 || d < 2 {
        return Err(invalid("projection needs at least one row and two columns"));
    }
    let mut mean = vec![0.0; d];
    for r in features.iter_rows() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n as f64;
        }
    }
    let mut cov = Matrix::zeros(d, d);
    for r in features.iter_rows() {
        let c: Vec<f64> = r.iter().zip(&mean).map(|(v, m)| v - m).collect();
        for i in 0..d {
            let row = cov.row_mut(i);
            for j in 0..d {
                row[j] += c[i] * c[j];
            }
        }
    }
    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(2);
    for k in 0..2 {
        let mut v: Vec<f64> = (0..d).map(|i| 1.0 + ((i + k) % 7) as f64 * 0.1).collect();
        orthogonalize(&mut v, &axes);
        normalize_in_place(&mut v);
        for _ in 0..MAX_ITERS {
            let mut w: Vec<f64> = cov.iter_rows().map(|r| dot(r, &v)).collect();
            orthogonalize(&mut w, &axes);
            if normalize_in_place(&mut w) == 0.0 {
                // no variance left: any orthogonal direction will do
                w = (0..d).map(|i| if i == k { 1.0 } else { 0.0 }).collect();
                orthogonalize(&mut w, &axes);
                normalize_in_place(&mut w);
                v = w;
                break;
            }
            let delta: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = w;
            if delta < TOLERANCE {
                break;
            }
        }
        let lead = v
            .iter()
            .copied()
            .fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        axes.push(v);
    }
    let mut out = Matrix::zeros(n, 2);
    for (i, r) in features.iter_rows().enumerate() {
        let c: Vec<f64> = r.iter().zip(&mean).map(|(v, m)| v - m).collect();
        out.set(i, 0, dot(&c, &axes[0]));
        out.set(i, 1, dot(&c, &axes[1]));
    }
    Ok(out)
}

fn orthogonalize(v: &mut [f64], axes: &[Vec<f64>]) {
    for a in axes {
        let p = dot(v, a);
        v.iter_mut().zip(a).for_each(|(x, y)| *x -= p * y);
    }
}
