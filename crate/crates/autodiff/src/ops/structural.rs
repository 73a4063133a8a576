use crate::element::Element;
use crate::error::{AutodiffError, Result};
use crate::graph::{Graph, Grads, Node, Op, Var};
use crate::shape::{check_axis, numel, split_axis, Broadcast};

impl<E: Element> Graph<E> {
    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let n = self.node(a);
        if numel(&shape) != n.value.len() {
            return Err(AutodiffError::Shape {
                op: "reshape",
                lhs: n.shape.clone(),
                rhs: shape,
            });
        }
        let (value, rg) = (n.value.clone(), n.requires_grad);
        Ok(self.push(shape, value, Op::Reshape { a }, rg))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let Some(&first) = inputs.first() else {
            return Err(AutodiffError::Invalid {
                op: "concat",
                reason: "no inputs".into(),
            });
        };
        let base = self.node(first).shape.clone();
        check_axis("concat", &base, axis)?;
        let mut total = 0;
        let mut rg = false;
        for &v in inputs {
            let s = &self.node(v).shape;
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(AutodiffError::Shape {
                    op: "concat",
                    lhs: base.clone(),
                    rhs: s.clone(),
                });
            }
            total += s[axis];
            rg |= self.node(v).requires_grad;
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut out = Vec::with_capacity(numel(&shape));
        for o in 0..outer {
            for &v in inputs {
                let n = self.node(v);
                let block = n.shape[axis] * inner;
                out.extend_from_slice(&n.value[o * block..(o + 1) * block]);
            }
        }
        let op = Op::Concat {
            inputs: inputs.to_vec(),
            axis,
        };
        Ok(self.push(shape, out, op, rg))
    }

    /// Takes `len` entries starting at `start` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let n = self.node(a);
        check_axis("slice", &n.shape, axis)?;
        if start + len > n.shape[axis] {
            return Err(AutodiffError::Invalid {
                op: "slice",
                reason: format!("range {start}..{} exceeds extent {} of {:?}", start + len, n.shape[axis], n.shape),
            });
        }
        let (outer, ext, inner) = split_axis(&n.shape, axis);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let from = (o * ext + start) * inner;
            out.extend_from_slice(&n.value[from..from + len * inner]);
        }
        let mut shape = n.shape.clone();
        shape[axis] = len;
        let rg = n.requires_grad;
        Ok(self.push(shape, out, Op::Slice { a, axis, start }, rg))
    }

    /// Replaces entries where `mask` is true by `fill`. The mask broadcasts
    /// against `a`; blocked entries pass no gradient.
    pub fn where_mask(&mut self, a: Var, mask: &[bool], mask_shape: &[usize], fill: E) -> Result<Var> {
        let n = self.node(a);
        if numel(mask_shape) != mask.len() {
            return Err(AutodiffError::DataLength {
                len: mask.len(),
                shape: mask_shape.to_vec(),
            });
        }
        let plan = Broadcast::new("where_mask", &n.shape, mask_shape)?;
        if plan.out_shape != n.shape {
            return Err(AutodiffError::Shape {
                op: "where_mask",
                lhs: n.shape.clone(),
                rhs: mask_shape.to_vec(),
            });
        }
        let mut out = n.value.clone();
        plan.for_each(|o, _, im| {
            if mask[im] {
                out[o] = fill;
            }
        });
        let (shape, rg) = (n.shape.clone(), n.requires_grad);
        let op = Op::WhereMask {
            a,
            mask: mask.to_vec(),
            mask_shape: mask_shape.to_vec(),
        };
        Ok(self.push(shape, out, op, rg))
    }

    /// Picks one entry per lane of the last axis: `out[..] = a[.., indices[..]]`.
    pub fn gather_last(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let n = self.node(a);
        let Some((&k, lead)) = n.shape.split_last() else {
            return Err(AutodiffError::Axis {
                op: "gather_last",
                axis: 0,
                shape: n.shape.clone(),
            });
        };
        if numel(lead) != indices.len() || indices.iter().any(|&i| i >= k) {
            return Err(AutodiffError::Invalid {
                op: "gather_last",
                reason: format!("{} indices for lanes of shape {:?}", indices.len(), n.shape),
            });
        }
        let out = indices.iter().enumerate().map(|(row, &i)| n.value[row * k + i]).collect();
        let (shape, rg) = (lead.to_vec(), n.requires_grad);
        let op = Op::Gather {
            a,
            indices: indices.to_vec(),
        };
        Ok(self.push(shape, out, op, rg))
    }
}

pub(crate) fn concat_backward<E: Element>(
    nodes: &[Node<E>],
    grads: &mut Grads<'_, E>,
    out: &Node<E>,
    inputs: &[Var],
    axis: usize,
    g: &[E],
) {
    let (outer, total, inner) = split_axis(&out.shape, axis);
    let mut offset = 0;
    for &v in inputs {
        let ext = nodes[v.0].shape[axis];
        if grads.wants(v) {
            let gv = grads.slot(v);
            for o in 0..outer {
                let src = (o * total + offset) * inner;
                let dst = o * ext * inner;
                for (d, &s) in gv[dst..dst + ext * inner].iter_mut().zip(&g[src..src + ext * inner]) {
                    *d = *d + s;
                }
            }
        }
        offset += ext;
    }
}

pub(crate) fn slice_backward<E: Element>(
    nodes: &[Node<E>],
    grads: &mut Grads<'_, E>,
    out: &Node<E>,
    a: Var,
    axis: usize,
    start: usize,
    g: &[E],
) {
    if !grads.wants(a) {
        return;
    }
    let (outer, ext, inner) = split_axis(&nodes[a.0].shape, axis);
    let len = out.shape[axis];
    let ga = grads.slot(a);
    for o in 0..outer {
        let dst = (o * ext + start) * inner;
        let src = o * len * inner;
        for (d, &s) in ga[dst..dst + len * inner].iter_mut().zip(&g[src..src + len * inner]) {
            *d = *d + s;
        }
    }
}

pub(crate) fn where_mask_backward<E: Element>(
    nodes: &[Node<E>],
    grads: &mut Grads<'_, E>,
    a: Var,
    mask: &[bool],
    mask_shape: &[usize],
    g: &[E],
) {
    if !grads.wants(a) {
        return;
    }
    let plan = Broadcast::new("where_mask", &nodes[a.0].shape, mask_shape).expect("validated in forward");
    let ga = grads.slot(a);
    plan.for_each(|o, _, im| {
        if !mask[im] {
            ga[o] = ga[o] + g[o];
        }
    });
}

pub(crate) fn gather_backward<E: Element>(
    nodes: &[Node<E>],
    grads: &mut Grads<'_, E>,
    a: Var,
    indices: &[usize],
    g: &[E],
) {
    if !grads.wants(a) {
        return;
    }
    let k = *nodes[a.0].shape.last().expect("validated in forward");
    let ga = grads.slot(a);
    for (row, &i) in indices.iter().enumerate() {
        ga[row * k + i] = ga[row * k + i] + g[row];
    }
}

#[cfg(test)]
mod tests {
    use crate::Graph;

    #[test]
    fn concat_then_slice_recovers_parts() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(vec![2, 1], vec![1.0, 2.0]).unwrap();
        let b = g.constant(vec![2, 2], vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let c = g.concat(&[a, b], 1).unwrap();
        assert_eq!(g.value(c), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let s = g.slice(c, 1, 1, 2).unwrap();
        assert_eq!(g.value(s), g.value(b));
    }

    #[test]
    fn slice_out_of_range_rejected() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(vec![3], vec![0.0; 3]).unwrap();
        assert!(g.slice(a, 0, 2, 2).is_err());
    }

    #[test]
    fn where_mask_blocks_gradient() {
        let mut g = Graph::<f64>::new();
        let a = g.variable(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = g.where_mask(a, &[false, true], &[2], -9.0).unwrap();
        assert_eq!(g.value(m), &[1.0, -9.0, 3.0, -9.0]);
        let s = g.sum(m);
        g.backward(s).unwrap();
        assert_eq!(g.grad(a).unwrap(), &[1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn gather_picks_entries() {
        let mut g = Graph::<f64>::new();
        let a = g.variable(vec![2, 3], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let p = g.gather_last(a, &[2, 0]).unwrap();
        assert_eq!(g.value(p), &[2.0, 3.0]);
        let s = g.sum(p);
        g.backward(s).unwrap();
        assert_eq!(g.grad(a).unwrap(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    }
}
