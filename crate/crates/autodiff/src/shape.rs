//! Shape helpers: broadcasting plans and axis decomposition.

use crate::error::{AutodiffError, Result};

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Splits `shape` around `axis` into (outer, extent, inner) element counts.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(AutodiffError::Axis {
            op,
            axis,
            shape: shape.to_vec(),
        });
    }
    Ok(())
}

/// Index mapping for a numpy-style broadcast of two operands.
#[derive(Debug, Clone)]
pub(crate) struct Broadcast {
    pub out_shape: Vec<usize>,
    a_strides: Vec<usize>,
    b_strides: Vec<usize>,
}

fn strides_for(shape: &[usize], ndim: usize, out: &[usize]) -> Vec<usize> {
    let pad = ndim - shape.len();
    let mut strides = vec![0; ndim];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        strides[pad + i] = if shape[i] == 1 && out[pad + i] != 1 {
            0
        } else {
            acc
        };
        acc *= shape[i];
    }
    strides
}

impl Broadcast {
    pub fn new(op: &'static str, a: &[usize], b: &[usize]) -> Result<Self> {
        let ndim = a.len().max(b.len());
        let mut out = vec![0; ndim];
        for i in 0..ndim {
            let da = if i < ndim - a.len() { 1 } else { a[i - (ndim - a.len())] };
            let db = if i < ndim - b.len() { 1 } else { b[i - (ndim - b.len())] };
            out[i] = if da == db || db == 1 {
                da
            } else if da == 1 {
                db
            } else {
                return Err(AutodiffError::Shape {
                    op,
                    lhs: a.to_vec(),
                    rhs: b.to_vec(),
                });
            };
        }
        let a_strides = strides_for(a, ndim, &out);
        let b_strides = strides_for(b, ndim, &out);
        Ok(Self {
            out_shape: out,
            a_strides,
            b_strides,
        })
    }

    /// Calls `f(out_index, a_index, b_index)` for every output element in
    /// row-major order.
    pub fn for_each(&self, mut f: impl FnMut(usize, usize, usize)) {
        let ndim = self.out_shape.len();
        if ndim == 0 {
            f(0, 0, 0);
            return;
        }
        if numel(&self.out_shape) == 0 {
            return;
        }
        let last = ndim - 1;
        let n_last = self.out_shape[last];
        let (sa, sb) = (self.a_strides[last], self.b_strides[last]);
        let mut counter = vec![0usize; ndim];
        let (mut ia, mut ib, mut o) = (0usize, 0usize, 0usize);
        loop {
            for j in 0..n_last {
                f(o, ia + j * sa, ib + j * sb);
                o += 1;
            }
            let mut d = last;
            loop {
                if d == 0 {
                    return;
                }
                d -= 1;
                counter[d] += 1;
                ia += self.a_strides[d];
                ib += self.b_strides[d];
                if counter[d] < self.out_shape[d] {
                    break;
                }
                ia -= self.a_strides[d] * self.out_shape[d];
                ib -= self.b_strides[d] * self.out_shape[d];
                counter[d] = 0;
            }
        }
    }
}
