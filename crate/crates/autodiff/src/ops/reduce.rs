use crate::element::Element;
use crate::error::Result;
use crate::graph::{Graph, Grads, Node, Op, Var};
use crate::shape::{check_axis, split_axis};

/// Visits each 1-D lane along an axis as (start offset, stride, length).
fn lanes(shape: &[usize], axis: usize, mut f: impl FnMut(usize, usize, usize, usize)) {
    let (outer, n, inner) = split_axis(shape, axis);
    let mut lane = 0;
    for o in 0..outer {
        for i in 0..inner {
            f(lane, o * n * inner + i, inner, n);
            lane += 1;
        }
    }
}

fn keepdim(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    s[axis] = 1;
    s
}

fn lane_max<E: Element>(v: &[E], start: usize, stride: usize, n: usize) -> E {
    let mut m = E::neg_infinity();
    for k in 0..n {
        let x = v[start + k * stride];
        if x > m {
            m = x;
        }
    }
    if m == E::neg_infinity() {
        E::zero()
    } else {
        m
    }
}

impl<E: Element> Graph<E> {
    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let n = self.node(a);
        let s = n.value.iter().fold(E::zero(), |acc, &x| acc + x);
        let rg = n.requires_grad;
        self.push(Vec::new(), vec![s], Op::Sum { a }, rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let count = self.node(a).value.len().max(1);
        let s = self.sum(a);
        self.scale(s, E::one() / E::of(count as f64))
    }

    /// Sums along `axis`, keeping it with extent 1.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let n = self.node(a);
        check_axis("sum_axis", &n.shape, axis)?;
        let shape = keepdim(&n.shape, axis);
        let mut out = vec![E::zero(); shape.iter().product()];
        lanes(&n.shape, axis, |lane, start, stride, len| {
            let mut s = E::zero();
            for k in 0..len {
                s = s + n.value[start + k * stride];
            }
            out[lane] = s;
        });
        let rg = n.requires_grad;
        Ok(self.push(shape, out, Op::SumAxis { a, axis }, rg))
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let s = self.sum_axis(a, axis)?;
        let count = self.node(a).shape[axis].max(1);
        Ok(self.scale(s, E::one() / E::of(count as f64)))
    }

    /// Softmax along `axis`, using max subtraction.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let n = self.node(a);
        check_axis("softmax", &n.shape, axis)?;
        let mut out = vec![E::zero(); n.value.len()];
        lanes(&n.shape, axis, |_, start, stride, len| {
            let m = lane_max(&n.value, start, stride, len);
            let mut s = E::zero();
            for k in 0..len {
                let e = (n.value[start + k * stride] - m).exp();
                out[start + k * stride] = e;
                s = s + e;
            }
            for k in 0..len {
                out[start + k * stride] = out[start + k * stride] / s;
            }
        });
        let (shape, rg) = (n.shape.clone(), n.requires_grad);
        Ok(self.push(shape, out, Op::Softmax { a, axis }, rg))
    }

    pub fn log_softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let n = self.node(a);
        check_axis("log_softmax", &n.shape, axis)?;
        let mut out = vec![E::zero(); n.value.len()];
        lanes(&n.shape, axis, |_, start, stride, len| {
            let m = lane_max(&n.value, start, stride, len);
            let mut s = E::zero();
            for k in 0..len {
                s = s + (n.value[start + k * stride] - m).exp();
            }
            let lse = m + s.ln();
            for k in 0..len {
                out[start + k * stride] = n.value[start + k * stride] - lse;
            }
        });
        let (shape, rg) = (n.shape.clone(), n.requires_grad);
        Ok(self.push(shape, out, Op::LogSoftmax { a, axis }, rg))
    }

    /// `ln Σ exp(x)` along `axis`, keeping it with extent 1.
    pub fn logsumexp(&mut self, a: Var, axis: usize) -> Result<Var> {
        let n = self.node(a);
        check_axis("logsumexp", &n.shape, axis)?;
        let shape = keepdim(&n.shape, axis);
        let mut out = vec![E::zero(); shape.iter().product()];
        lanes(&n.shape, axis, |lane, start, stride, len| {
            let m = lane_max(&n.value, start, stride, len);
            let mut s = E::zero();
            for k in 0..len {
                s = s + (n.value[start + k * stride] - m).exp();
            }
            out[lane] = m + s.ln();
        });
        let rg = n.requires_grad;
        Ok(self.push(shape, out, Op::LogSumExp { a, axis }, rg))
    }
}

pub(crate) fn sum_backward<E: Element>(grads: &mut Grads<'_, E>, a: Var, g: &[E]) {
    if !grads.wants(a) {
        return;
    }
    let g0 = g[0];
    grads.slot(a).iter_mut().for_each(|x| *x = *x + g0);
}

pub(crate) fn sum_axis_backward<E: Element>(nodes: &[Node<E>], grads: &mut Grads<'_, E>, a: Var, axis: usize, g: &[E]) {
    if !grads.wants(a) {
        return;
    }
    let shape = nodes[a.0].shape.clone();
    let ga = grads.slot(a);
    lanes(&shape, axis, |lane, start, stride, len| {
        for k in 0..len {
            ga[start + k * stride] = ga[start + k * stride] + g[lane];
        }
    });
}

pub(crate) fn softmax_backward<E: Element>(grads: &mut Grads<'_, E>, out: &Node<E>, a: Var, axis: usize, g: &[E]) {
    if !grads.wants(a) {
        return;
    }
    let y = &out.value;
    let ga = grads.slot(a);
    lanes(&out.shape, axis, |_, start, stride, len| {
        let mut dot = E::zero();
        for k in 0..len {
            let i = start + k * stride;
            dot = dot + g[i] * y[i];
        }
        for k in 0..len {
            let i = start + k * stride;
            ga[i] = ga[i] + y[i] * (g[i] - dot);
        }
    });
}

pub(crate) fn log_softmax_backward<E: Element>(grads: &mut Grads<'_, E>, out: &Node<E>, a: Var, axis: usize, g: &[E]) {
    if !grads.wants(a) {
        return;
    }
    let y = &out.value;
    let ga = grads.slot(a);
    lanes(&out.shape, axis, |_, start, stride, len| {
        let mut total = E::zero();
        for k in 0..len {
            total = total + g[start + k * stride];
        }
        for k in 0..len {
            let i = start + k * stride;
            ga[i] = ga[i] + g[i] - y[i].exp() * total;
        }
    });
}

pub(crate) fn logsumexp_backward<E: Element>(
    nodes: &[Node<E>],
    grads: &mut Grads<'_, E>,
    out: &Node<E>,
    a: Var,
    axis: usize,
    g: &[E],
) {
    if !grads.wants(a) {
        return;
    }
    let x = &nodes[a.0].value;
    let shape = nodes[a.0].shape.clone();
    let ga = grads.slot(a);
    lanes(&shape, axis, |lane, start, stride, len| {
        let lse = out.value[lane];
        for k in 0..len {
            let i = start + k * stride;
            ga[i] = ga[i] + g[lane] * (x[i] - lse).exp();
        }
    });
}

#[cfg(test)]
mod tests {
    use crate::Graph;

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(vec![2], vec![0.0, 0.0]).unwrap();
        let y = g.softmax(x, 0).unwrap();
        assert_eq!(g.value(y), &[0.5, 0.5]);
    }

    #[test]
    fn logsumexp_does_not_overflow() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(vec![2], vec![1000.0, 1000.0]).unwrap();
        let y = g.logsumexp(x, 0).unwrap();
        assert!((g.value(y)[0] - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn logsumexp_matches_naive_on_small_inputs() {
        let mut g = Graph::<f64>::new();
        let vals = vec![0.3, -1.2, 2.5, 0.0];
        let naive = vals.iter().map(|v: &f64| v.exp()).sum::<f64>().ln();
        let x = g.constant(vec![4], vals).unwrap();
        let y = g.logsumexp(x, 0).unwrap();
        let got = g.value(y)[0];
        let ulp = f64::EPSILON * naive.abs();
        assert!((got - naive).abs() <= 2.0 * ulp, "{got} vs {naive}");
    }

    #[test]
    fn softmax_along_inner_axis() {
        let mut g = Graph::<f64>::new();
        // shape [2, 2]: softmax along axis 0 normalizes columns
        let x = g.constant(vec![2, 2], vec![0.0, 1.0, 0.0, 3.0]).unwrap();
        let y = g.softmax(x, 0).unwrap();
        let v = g.value(y);
        assert!((v[0] - 0.5).abs() < 1e-15 && (v[2] - 0.5).abs() < 1e-15);
        assert!((v[1] + v[3] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn masked_lane_with_neg_infinity_gets_zero_weight() {
        let mut g = Graph::<f64>::new();
        let x = g.variable(vec![3], vec![0.2, f64::NEG_INFINITY, -0.4]).unwrap();
        let y = g.softmax(x, 0).unwrap();
        assert_eq!(g.value(y)[1], 0.0);
        let w = g.constant(vec![3], vec![1.0, 5.0, -2.0]).unwrap();
        let p = g.mul(y, w).unwrap();
        let s = g.sum(p);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap()[1], 0.0);
    }

    #[test]
    fn axis_out_of_range_is_an_error() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(vec![2], vec![0.0, 0.0]).unwrap();
        assert!(g.softmax(x, 1).is_err());
    }
}
