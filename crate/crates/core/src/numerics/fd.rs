//! Central finite-difference stencils.

use crate::error::Result;
use crate::numerics::linalg::Matrix;
use crate::Real;

/// Central-difference gradient with step `h`.
pub fn fd_gradient<T, F>(f: F, point: &[T], h: T) -> Result<Vec<T>>
where
    T: Real,
    F: Fn(&[T]) -> Result<T>,
{
    let mut p = point.to_vec();
    let two_h = h + h;
    let mut g = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        p[i] = point[i] + h;
        let fp = f(&p)?;
        p[i] = point[i] - h;
        let fm = f(&p)?;
        p[i] = point[i];
        g.push((fp - fm) / two_h);
    }
    Ok(g)
}

/// Central second differences; the off-diagonal entries use the four-point
/// cross stencil and the result is symmetrized by averaging.
pub fn fd_hessian<T, F>(f: F, point: &[T], h: T) -> Result<Matrix<T>>
where
    T: Real,
    F: Fn(&[T]) -> Result<T>,
{
    fd_hessian_raw(f, point, h).map(|mut m| {
        m.symmetrize();
        m
    })
}

/// Same stencil without the final symmetrization, so that the asymmetry
/// introduced by evaluation noise can be inspected.
pub fn fd_hessian_raw<T, F>(f: F, point: &[T], h: T) -> Result<Matrix<T>>
where
    T: Real,
    F: Fn(&[T]) -> Result<T>,
{
    let n = point.len();
    let mut m = Matrix::zeros(n);
    let mut p = point.to_vec();
    let f0 = f(point)?;
    let h2 = h * h;
    let four_h2 = T::lit(4.0) * h2;
    for i in 0..n {
        p[i] = point[i] + h;
        let fp = f(&p)?;
        p[i] = point[i] - h;
        let fm = f(&p)?;
        p[i] = point[i];
        m[(i, i)] = (fp - (f0 + f0) + fm) / h2;
    }
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            // the (i, j) and (j, i) entries are computed with the two
            // evaluation orders of the cross stencil
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            let mut eval = |di: T, dj: T| -> Result<T> {
                p[a] = point[a] + di;
                p[b] = point[b] + dj;
                let v = f(&p);
                p[a] = point[a];
                p[b] = point[b];
                v
            };
            let v = if i < j {
                (eval(h, h)? - eval(h, -h)? - eval(-h, h)? + eval(-h, -h)?) / four_h2
            } else {
                (eval(-h, -h)? - eval(-h, h)? - eval(h, -h)? + eval(h, h)?) / four_h2
            };
            m[(i, j)] = v;
        }
    }
    Ok(m)
}
