use crate::element::Element;
use crate::error::{AutodiffError, Result};
use crate::graph::{Graph, Grads, MatMulLayout, Node, Op, Var};
use crate::shape::Broadcast;

/// `c[p×r] += a[p×q] · b[q×r]`
pub(crate) fn gemm_nn<E: Element>(a: &[E], b: &[E], c: &mut [E], p: usize, q: usize, r: usize) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was detected at runtime.
        return unsafe { wide::gemm_nn(a, b, c, p, q, r) };
    }
    gemm_nn_body(a, b, c, p, q, r)
}

#[inline(always)]
fn gemm_nn_body<E: Element>(a: &[E], b: &[E], c: &mut [E], p: usize, q: usize, r: usize) {
    for i in 0..p {
        let crow = &mut c[i * r..(i + 1) * r];
        axpy_rows(crow, &a[i * q..(i + 1) * q], b, r);
    }
}

/// `c[p×q] += g[p×r] · b[q×r]ᵀ`
pub(crate) fn gemm_nt<E: Element>(g: &[E], b: &[E], c: &mut [E], p: usize, q: usize, r: usize) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was detected at runtime.
        return unsafe { wide::gemm_nt(g, b, c, p, q, r) };
    }
    gemm_nt_body(g, b, c, p, q, r)
}

#[inline(always)]
fn gemm_nt_body<E: Element>(g: &[E], b: &[E], c: &mut [E], p: usize, q: usize, r: usize) {
    for i in 0..p {
        let grow = &g[i * r..(i + 1) * r];
        let crow = &mut c[i * q..(i + 1) * q];
        for (ck, brow) in crow.iter_mut().zip(b.chunks_exact(r)) {
            *ck = *ck + dot(grow, brow);
        }
    }
}

/// `c[q×r] += a[p×q]ᵀ · g[p×r]`
pub(crate) fn gemm_tn<E: Element>(a: &[E], g: &[E], c: &mut [E], p: usize, q: usize, r: usize) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was detected at runtime.
        return unsafe { wide::gemm_tn(a, g, c, p, q, r) };
    }
    gemm_tn_body(a, g, c, p, q, r)
}

#[inline(always)]
fn gemm_tn_body<E: Element>(a: &[E], g: &[E], c: &mut [E], p: usize, q: usize, r: usize) {
    // walk four rows of a/g at a time so each row of c is loaded once per block
    let mut i = 0;
    while i + 4 <= p {
        let (g0, g1, g2, g3) = (
            &g[i * r..(i + 1) * r],
            &g[(i + 1) * r..(i + 2) * r],
            &g[(i + 2) * r..(i + 3) * r],
            &g[(i + 3) * r..(i + 4) * r],
        );
        for k in 0..q {
            let (a0, a1, a2, a3) = (a[i * q + k], a[(i + 1) * q + k], a[(i + 2) * q + k], a[(i + 3) * q + k]);
            let crow = &mut c[k * r..(k + 1) * r];
            for j in 0..r {
                crow[j] = crow[j] + a0 * g0[j] + a1 * g1[j] + a2 * g2[j] + a3 * g3[j];
            }
        }
        i += 4;
    }
    for i in i..p {
        let grow = &g[i * r..(i + 1) * r];
        for k in 0..q {
            let aik = a[i * q + k];
            let crow = &mut c[k * r..(k + 1) * r];
            for (cj, &gj) in crow.iter_mut().zip(grow) {
                *cj = *cj + aik * gj;
            }
        }
    }
}

/// `crow += Σ_k arow[k] · b[k, :]`, four rows of `b` per pass.
#[inline(always)]
fn axpy_rows<E: Element>(crow: &mut [E], arow: &[E], b: &[E], r: usize) {
    let q = arow.len();
    let mut k = 0;
    while k + 4 <= q {
        let (a0, a1, a2, a3) = (arow[k], arow[k + 1], arow[k + 2], arow[k + 3]);
        let b0 = &b[k * r..(k + 1) * r];
        let b1 = &b[(k + 1) * r..(k + 2) * r];
        let b2 = &b[(k + 2) * r..(k + 3) * r];
        let b3 = &b[(k + 3) * r..(k + 4) * r];
        for j in 0..r {
            crow[j] = crow[j] + a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
        }
        k += 4;
    }
    for k in k..q {
        let ak = arow[k];
        for (cj, &bj) in crow.iter_mut().zip(&b[k * r..(k + 1) * r]) {
            *cj = *cj + ak * bj;
        }
    }
}

#[inline(always)]
fn dot<E: Element>(x: &[E], y: &[E]) -> E {
    let mut acc = [E::zero(); 4];
    let (xc, yc) = (x.chunks_exact(4), y.chunks_exact(4));
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (a, b) in xc.zip(yc) {
        acc[0] = acc[0] + a[0] * b[0];
        acc[1] = acc[1] + a[1] * b[1];
        acc[2] = acc[2] + a[2] * b[2];
        acc[3] = acc[3] + a[3] * b[3];
    }
    let tail = xr.iter().zip(yr).fold(E::zero(), |s, (&a, &b)| s + a * b);
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// The same kernels compiled with AVX2 enabled.
#[cfg(target_arch = "x86_64")]
mod wide {
    use super::*;

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn gemm_nn<E: Element>(a: &[E], b: &[E], c: &mut [E], p: usize, q: usize, r: usize) {
        gemm_nn_body(a, b, c, p, q, r)
    }

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn gemm_nt<E: Element>(g: &[E], b: &[E], c: &mut [E], p: usize, q: usize, r: usize) {
        gemm_nt_body(g, b, c, p, q, r)
    }

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn gemm_tn<E: Element>(a: &[E], g: &[E], c: &mut [E], p: usize, q: usize, r: usize) {
        gemm_tn_body(a, g, c, p, q, r)
    }
}

impl<E: Element> Graph<E> {
    /// Matrix product over the last two axes with broadcast batch axes:
    /// `[.., p, q] · [.., q, r] -> [.., p, r]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, nb) = (self.node(a), self.node(b));
        let shape_err = || AutodiffError::Shape {
            op: "matmul",
            lhs: na.shape.clone(),
            rhs: nb.shape.clone(),
        };
        if na.shape.len() < 2 || nb.shape.len() < 2 {
            return Err(shape_err());
        }
        let (ra, rb) = (na.shape.len(), nb.shape.len());
        let (p, q) = (na.shape[ra - 2], na.shape[ra - 1]);
        let (q2, r) = (nb.shape[rb - 2], nb.shape[rb - 1]);
        if q != q2 {
            return Err(shape_err());
        }
        let rg = na.requires_grad || nb.requires_grad;
        let (batch_a, batch_b) = (&na.shape[..ra - 2], &nb.shape[..rb - 2]);
        if batch_b.is_empty() {
            let rows = batch_a.iter().product::<usize>() * p;
            let mut out = vec![E::zero(); rows * r];
            gemm_nn(&na.value, &nb.value, &mut out, rows, q, r);
            let mut shape = batch_a.to_vec();
            shape.extend([p, r]);
            let op = Op::MatMul {
                a,
                b,
                p,
                q,
                r,
                layout: MatMulLayout::SharedRhs,
            };
            return Ok(self.push(shape, out, op, rg));
        }
        let plan = Broadcast::new("matmul", batch_a, batch_b).map_err(|_| shape_err())?;
        let mut pairs = Vec::new();
        plan.for_each(|_, ia, ib| pairs.push((ia, ib)));
        let mut out = vec![E::zero(); pairs.len() * p * r];
        for (o, &(ia, ib)) in pairs.iter().enumerate() {
            gemm_nn(
                &na.value[ia * p * q..(ia + 1) * p * q],
                &nb.value[ib * q * r..(ib + 1) * q * r],
                &mut out[o * p * r..(o + 1) * p * r],
                p,
                q,
                r,
            );
        }
        let mut shape = plan.out_shape.clone();
        shape.extend([p, r]);
        let op = Op::MatMul {
            a,
            b,
            p,
            q,
            r,
            layout: MatMulLayout::Pairs(pairs),
        };
        Ok(self.push(shape, out, op, rg))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let n = self.node(a);
        let nd = n.shape.len();
        if nd < 2 {
            return Err(AutodiffError::Axis {
                op: "transpose",
                axis: 1,
                shape: n.shape.clone(),
            });
        }
        let (m, k) = (n.shape[nd - 2], n.shape[nd - 1]);
        let out = transpose_blocks(&n.value, m, k);
        let mut shape = n.shape.clone();
        shape.swap(nd - 2, nd - 1);
        let rg = n.requires_grad;
        Ok(self.push(shape, out, Op::Transpose { a }, rg))
    }
}

fn transpose_blocks<E: Element>(v: &[E], m: usize, k: usize) -> Vec<E> {
    let block = m * k;
    let mut out = vec![E::zero(); v.len()];
    if block == 0 {
        return out;
    }
    for (src, dst) in v.chunks(block).zip(out.chunks_mut(block)) {
        for i in 0..m {
            for j in 0..k {
                dst[j * m + i] = src[i * k + j];
            }
        }
    }
    out
}

pub(crate) fn matmul_backward<E: Element>(
    nodes: &[Node<E>],
    grads: &mut Grads<'_, E>,
    a: Var,
    b: Var,
    (p, q, r): (usize, usize, usize),
    layout: &MatMulLayout,
    g: &[E],
) {
    let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
    let (wa, wb) = (grads.wants(a), grads.wants(b));
    match layout {
        MatMulLayout::SharedRhs => {
            let rows = g.len() / r.max(1);
            if wa {
                let ga = grads.slot(a);
                gemm_nt(g, bv, ga, rows, q, r);
            }
            if wb {
                let gb = grads.slot(b);
                gemm_tn(av, g, gb, rows, q, r);
            }
        }
        MatMulLayout::Pairs(pairs) => {
            if wa {
                let ga = grads.slot(a);
                for (o, &(ia, ib)) in pairs.iter().enumerate() {
                    gemm_nt(
                        &g[o * p * r..(o + 1) * p * r],
                        &bv[ib * q * r..(ib + 1) * q * r],
                        &mut ga[ia * p * q..(ia + 1) * p * q],
                        p,
                        q,
                        r,
                    );
                }
            }
            if wb {
                let gb = grads.slot(b);
                for (o, &(ia, ib)) in pairs.iter().enumerate() {
                    gemm_tn(
                        &av[ia * p * q..(ia + 1) * p * q],
                        &g[o * p * r..(o + 1) * p * r],
                        &mut gb[ib * q * r..(ib + 1) * q * r],
                        p,
                        q,
                        r,
                    );
                }
            }
        }
    }
}

pub(crate) fn transpose_backward<E: Element>(nodes: &[Node<E>], grads: &mut Grads<'_, E>, a: Var, g: &[E]) {
    if !grads.wants(a) {
        return;
    }
    let shape = &nodes[a.0].shape;
    let nd = shape.len();
    let (m, k) = (shape[nd - 2], shape[nd - 1]);
    // g has the transposed layout [.., k, m]
    let back = transpose_blocks(g, k, m);
    grads.add_owned(a, back);
}
