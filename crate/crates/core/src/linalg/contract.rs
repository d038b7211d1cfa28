use num_complex::Complex64 as C64;

use super::{DenseMatrix, TensorVector};
use crate::error::{Error, Result};

/// Per-factor strides that split a full multi-index into a flat index over the
/// `selected` factors (in the order given) and a flat index over the rest (in
/// ascending factor order).
struct Split {
    sel_stride: Vec<usize>,
    rest_stride: Vec<usize>,
    rest_dims: Vec<usize>,
}

impl Split {
    fn new(dims: &[usize], selected: &[usize]) -> Result<Self> {
        let r = dims.len();
        let mut seen = vec![false; r];
        for &f in selected {
            if f >= r || seen[f] {
                return Err(Error::InvalidIndexSet(format!(
                    "{selected:?} over {r} factors"
                )));
            }
            seen[f] = true;
        }

        let mut sel_stride = vec![0; r];
        let mut acc = 1;
        for &f in selected.iter().rev() {
            sel_stride[f] = acc;
            acc *= dims[f];
        }

        let mut rest_stride = vec![0; r];
        let mut rest_dims = Vec::new();
        let mut acc = 1;
        for f in (0..r).rev() {
            if !seen[f] {
                rest_stride[f] = acc;
                acc *= dims[f];
            }
        }
        for f in 0..r {
            if !seen[f] {
                rest_dims.push(dims[f]);
            }
        }
        Ok(Split {
            sel_stride,
            rest_stride,
            rest_dims,
        })
    }

    /// Calls `f(full, sel, rest)` for every full flat index in order.
    fn for_each(&self, dims: &[usize], mut f: impl FnMut(usize, usize, usize)) {
        let total: usize = dims.iter().product();
        let r = dims.len();
        let mut idx = vec![0usize; r];
        let (mut sel, mut rest) = (0usize, 0usize);
        for full in 0..total {
            f(full, sel, rest);
            // odometer increment, rightmost factor fastest
            for p in (0..r).rev() {
                idx[p] += 1;
                sel += self.sel_stride[p];
                rest += self.rest_stride[p];
                if idx[p] < dims[p] {
                    break;
                }
                sel -= self.sel_stride[p] * dims[p];
                rest -= self.rest_stride[p] * dims[p];
                idx[p] = 0;
            }
        }
    }
}

/// Partial inner product `<w | u0>_U` where `U` is the first `prefix_count`
/// factors of `w`. Antilinear in `u0`, linear in `w`:
/// `v[b] = sum_a conj(u0[a]) * w[a, b]`.
pub fn partial_inner_product(
    w: &TensorVector,
    u0: &TensorVector,
    prefix_count: usize,
) -> Result<TensorVector> {
    if prefix_count == 0 || prefix_count > w.dims().len() {
        return Err(Error::InvalidIndexSet(format!(
            "prefix of {prefix_count} factors over {}",
            w.dims().len()
        )));
    }
    let factors: Vec<usize> = (0..prefix_count).collect();
    partial_inner_product_over(w, u0, &factors)
}

/// Partial inner product over an arbitrary set of factors of `w`. `u0`'s
/// factors must match `w`'s dims at `factors`, in that order. The result
/// lives on the remaining factors in their original order.
pub fn partial_inner_product_over(
    w: &TensorVector,
    u0: &TensorVector,
    factors: &[usize],
) -> Result<TensorVector> {
    let split = Split::new(w.dims(), factors)?;
    let expected: Vec<usize> = factors.iter().map(|&f| w.dims()[f]).collect();
    if expected != u0.dims() {
        return Err(Error::DimensionMismatch(format!(
            "held vector has dims {:?}, contracted factors have {:?}",
            u0.dims(),
            expected
        )));
    }
    let rest_dims = if split.rest_dims.is_empty() {
        vec![1]
    } else {
        split.rest_dims.clone()
    };
    let mut out = vec![C64::new(0.0, 0.0); rest_dims.iter().product()];
    let (wd, ud) = (w.data(), u0.data());
    split.for_each(w.dims(), |full, sel, rest| {
        out[rest] += ud[sel].conj() * wd[full];
    });
    TensorVector::new(rest_dims, out)
}

/// Reduced matrix on the `keep` factors (reported in ascending factor order).
pub fn partial_trace(
    rho: &DenseMatrix,
    factor_dims: &[usize],
    keep: &[usize],
) -> Result<DenseMatrix> {
    let dim: usize = factor_dims.iter().product();
    if !rho.is_square() || rho.rows() != dim {
        return Err(Error::DimensionMismatch(format!(
            "{:?} matrix against factor dims {factor_dims:?}",
            rho.shape()
        )));
    }
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    // traced factors play the "selected" role so the kept ones come out in order
    let traced: Vec<usize> = (0..factor_dims.len())
        .filter(|f| !keep_sorted.contains(f))
        .collect();
    if keep_sorted.windows(2).any(|w| w[0] == w[1])
        || keep_sorted.iter().any(|&f| f >= factor_dims.len())
    {
        return Err(Error::InvalidIndexSet(format!(
            "keep {keep:?} over {} factors",
            factor_dims.len()
        )));
    }
    let split = Split::new(factor_dims, &traced)?;
    let kept_dim: usize = keep_sorted.iter().map(|&f| factor_dims[f]).product();
    let traced_dim: usize = traced.iter().map(|&f| factor_dims[f]).product();

    // full index for each (kept, traced) pair
    let mut full_of = vec![0usize; kept_dim * traced_dim];
    split.for_each(factor_dims, |full, t, k| full_of[k * traced_dim + t] = full);

    let mut out = DenseMatrix::zeros(kept_dim, kept_dim);
    for a in 0..kept_dim {
        for b in 0..kept_dim {
            let mut acc = C64::new(0.0, 0.0);
            for t in 0..traced_dim {
                acc += rho[(full_of[a * traced_dim + t], full_of[b * traced_dim + t])];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::re;

    fn bell() -> TensorVector {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        TensorVector::new(vec![2, 2], vec![re(s), re(0.0), re(0.0), re(s)]).unwrap()
    }

    #[test]
    fn pip_product_state() {
        let u = TensorVector::from_slice(&[C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
        let v = TensorVector::from_slice(&[re(1.0), C64::new(-2.0, 0.5), re(3.0)]);
        let got = partial_inner_product(&u.kron(&v), &u, 1).unwrap();
        assert!(got.max_abs_diff(&v) < 1e-15);
    }

    #[test]
    fn pip_bell_slice() {
        let zero = TensorVector::from_slice(&[re(1.0), re(0.0)]);
        let got = partial_inner_product(&bell(), &zero, 1).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!(got.max_abs_diff(&TensorVector::from_slice(&[re(s), re(0.0)])) < 1e-15);
    }

    #[test]
    fn pip_is_antilinear_in_held_vector() {
        let w = TensorVector::new(vec![2, 1], vec![C64::new(1.0, 1.0), re(2.0)]).unwrap();
        let u = TensorVector::from_slice(&[C64::new(0.0, 1.0), re(0.0)]);
        let got = partial_inner_product(&w, &u, 1).unwrap();
        // conj(i) * (1+i) = -i(1+i) = 1 - i
        assert!((got.data()[0] - C64::new(1.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn pip_over_non_prefix_factors() {
        let a = TensorVector::from_slice(&[re(1.0), re(2.0)]);
        let b = TensorVector::from_slice(&[re(0.0), re(1.0), re(0.0)]);
        let c = TensorVector::from_slice(&[re(3.0), C64::new(0.0, 1.0)]);
        let w = a.kron(&b).kron(&c);
        let got = partial_inner_product_over(&w, &b, &[1]).unwrap();
        assert!(got.max_abs_diff(&a.kron(&c)) < 1e-15);

        // held vector given in reversed factor order
        let ca = c.kron(&a);
        let got = partial_inner_product_over(&w, &ca, &[2, 0]).unwrap();
        let expect = b.scale(re(ca.norm().powi(2)));
        assert!(got.max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn pip_errors() {
        let w = bell();
        let u = TensorVector::from_slice(&[re(1.0), re(0.0), re(0.0)]);
        assert!(matches!(
            partial_inner_product(&w, &u, 1),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(partial_inner_product(&w, &u, 0).is_err());
        assert!(partial_inner_product_over(&w, &bell(), &[0, 0]).is_err());
    }

    #[test]
    fn partial_trace_product_and_bell() {
        let ra = DenseMatrix::from_real(2, 2, &[0.7, 0.1, 0.1, 0.3]).scale(re(2.0));
        let rb = DenseMatrix::from_vec(
            3,
            3,
            vec![
                re(0.5),
                C64::new(0.1, 0.2),
                re(0.0),
                C64::new(0.1, -0.2),
                re(0.3),
                re(0.05),
                re(0.0),
                re(0.05),
                re(0.2),
            ],
        )
        .unwrap();
        let got = partial_trace(&ra.kron(&rb), &[2, 3], &[1]).unwrap();
        assert!(got.max_abs_diff(&rb.scale(ra.trace())) < 1e-14);
        let got = partial_trace(&ra.kron(&rb), &[2, 3], &[0]).unwrap();
        assert!(got.max_abs_diff(&ra.scale(rb.trace())) < 1e-14);

        let rho = bell().projector();
        let got = partial_trace(&rho, &[2, 2], &[1]).unwrap();
        assert!(got.max_abs_diff(&DenseMatrix::identity(2).scale(re(0.5))) < 1e-15);
    }

    #[test]
    fn partial_trace_errors() {
        let rho = DenseMatrix::identity(4);
        assert!(matches!(
            partial_trace(&rho, &[2, 3], &[0]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            partial_trace(&rho, &[2, 2], &[2]),
            Err(Error::InvalidIndexSet(_))
        ));
        assert!(partial_trace(&rho, &[2, 2], &[1, 1]).is_err());
    }

    #[test]
    fn partial_trace_keep_nothing_and_everything() {
        let rho = DenseMatrix::from_real(2, 2, &[0.25, 0.1, 0.1, 0.75]);
        let all = partial_trace(&rho, &[2], &[0]).unwrap();
        assert_eq!(all, rho);
        let none = partial_trace(&rho, &[2], &[]).unwrap();
        assert_eq!(none.shape(), (1, 1));
        assert!((none[(0, 0)] - re(1.0)).norm() < 1e-15);
    }
}
