use rand::Rng;

use crate::element::Element;
use crate::error::{AutodiffError, Result};
use crate::graph::{Graph, Grads, Node, Op, Var};

impl<E: Element> Graph<E> {
    /// Normalizes over the last axis then applies `gain` and `shift`
    /// (both shaped like that axis).
    pub fn layer_norm(&mut self, x: Var, gain: Var, shift: Var, eps: E) -> Result<Var> {
        let nx = self.node(x);
        let h = *nx.shape.last().ok_or_else(|| AutodiffError::Axis {
            op: "layer_norm",
            axis: 0,
            shape: nx.shape.clone(),
        })?;
        let (ng, ns) = (self.node(gain), self.node(shift));
        if ng.value.len() != h || ns.value.len() != h {
            return Err(AutodiffError::Shape {
                op: "layer_norm",
                lhs: nx.shape.clone(),
                rhs: ng.shape.clone(),
            });
        }
        let rows = if h == 0 { 0 } else { nx.value.len() / h };
        let hn = E::of(h as f64);
        let mut xhat = vec![E::zero(); nx.value.len()];
        let mut rstd = vec![E::zero(); rows];
        let mut out = vec![E::zero(); nx.value.len()];
        for r in 0..rows {
            let row = &nx.value[r * h..(r + 1) * h];
            let mean = row.iter().fold(E::zero(), |a, &v| a + v) / hn;
            let var = row.iter().fold(E::zero(), |a, &v| a + (v - mean) * (v - mean)) / hn;
            let rs = E::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for k in 0..h {
                let xh = (row[k] - mean) * rs;
                xhat[r * h + k] = xh;
                out[r * h + k] = xh * ng.value[k] + ns.value[k];
            }
        }
        let rg = nx.requires_grad || ng.requires_grad || ns.requires_grad;
        let shape = nx.shape.clone();
        let op = Op::LayerNorm {
            x,
            gain,
            shift,
            xhat,
            rstd,
        };
        Ok(self.push(shape, out, op, rg))
    }

    /// Inverted dropout: zeroes each entry with probability `p` and scales
    /// survivors by `1/(1-p)`. The mask is kept on the tape for backward.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(AutodiffError::Invalid {
                op: "dropout",
                reason: format!("probability {p} outside [0, 1)"),
            });
        }
        if p == 0.0 {
            return Ok(a);
        }
        let n = self.node(a);
        let keep = E::of(1.0 / (1.0 - p));
        let mask: Vec<E> = (0..n.value.len())
            .map(|_| if rng.random::<f64>() < p { E::zero() } else { keep })
            .collect();
        let out = n.value.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let (shape, rg) = (n.shape.clone(), n.requires_grad);
        Ok(self.push(shape, out, Op::Dropout { a, mask }, rg))
    }

    /// Forward value is `hard`; gradient flows to `soft` unchanged.
    pub fn straight_through(&mut self, soft: Var, hard: Vec<E>) -> Result<Var> {
        let n = self.node(soft);
        if hard.len() != n.value.len() {
            return Err(AutodiffError::DataLength {
                len: hard.len(),
                shape: n.shape.clone(),
            });
        }
        let (shape, rg) = (n.shape.clone(), n.requires_grad);
        Ok(self.push(shape, hard, Op::StraightThrough { soft }, rg))
    }

    /// Mean of the Gaussian-mixture kernel `Σ_j exp(-‖x_a − y_b‖² / σ_j²)`
    /// over all row pairs of `x [n, d]` and `y [m, d]`. With
    /// `exclude_diagonal` the `a == b` pairs are skipped (requires n == m).
    ///
    /// Squared distances are computed once per pair and shared by every
    /// bandwidth; no Gram matrix is materialized.
    pub fn kernel_mean(&mut self, x: Var, y: Var, bandwidths: &[E], exclude_diagonal: bool) -> Result<Var> {
        let (nx, ny) = (self.node(x), self.node(y));
        if nx.shape.len() != 2 || ny.shape.len() != 2 || nx.shape[1] != ny.shape[1] {
            return Err(AutodiffError::Shape {
                op: "kernel_mean",
                lhs: nx.shape.clone(),
                rhs: ny.shape.clone(),
            });
        }
        let (n, m, d) = (nx.shape[0], ny.shape[0], nx.shape[1]);
        let count = pair_count(n, m, exclude_diagonal).ok_or_else(|| AutodiffError::Invalid {
            op: "kernel_mean",
            reason: format!("no pairs for sizes {n} and {m} (exclude_diagonal={exclude_diagonal})"),
        })?;
        if bandwidths.is_empty() || bandwidths.iter().any(|&b| b <= E::zero()) {
            return Err(AutodiffError::Invalid {
                op: "kernel_mean",
                reason: "bandwidths must be non-empty and positive".into(),
            });
        }
        let kernel = Kernel::new(bandwidths);
        let mut total = E::zero();
        if x == y {
            // Each unordered pair once; k(x, x) = number of bandwidths.
            for a in 0..n {
                let xa = &nx.value[a * d..(a + 1) * d];
                let mut row = E::zero();
                for b in a + 1..n {
                    row = row + kernel.value(sq_dist(xa, &nx.value[b * d..(b + 1) * d]));
                }
                total = total + row;
            }
            total = total + total;
            if !exclude_diagonal {
                total = total + E::of((n * bandwidths.len()) as f64);
            }
        } else {
            for a in 0..n {
                let xa = &nx.value[a * d..(a + 1) * d];
                let mut row = E::zero();
                for b in 0..m {
                    if exclude_diagonal && a == b {
                        continue;
                    }
                    row = row + kernel.value(sq_dist(xa, &ny.value[b * d..(b + 1) * d]));
                }
                total = total + row;
            }
        }
        let value = total / E::of(count as f64);
        let rg = nx.requires_grad || ny.requires_grad;
        let op = Op::KernelMean {
            x,
            y,
            bandwidths: bandwidths.to_vec(),
            exclude_diagonal,
        };
        Ok(self.push(Vec::new(), vec![value], op, rg))
    }
}

fn pair_count(n: usize, m: usize, exclude_diagonal: bool) -> Option<usize> {
    if exclude_diagonal {
        (n == m && n >= 2).then(|| n * (n - 1))
    } else {
        (n >= 1 && m >= 1).then(|| n * m)
    }
}

/// Gaussian-mixture kernel terms. When every `1/σ_j²` is the smallest one
/// times a power of two (up to 2^10), one exponential per distance is
/// squared up the chain instead of one exponential per term.
struct Kernel<E: Element> {
    inv: Vec<E>,
    base: E,
    /// `(squarings since previous term, 1/σ²)`, ascending in `1/σ²`.
    chain: Option<Vec<(u32, E)>>,
}

impl<E: Element> Kernel<E> {
    fn new(bandwidths: &[E]) -> Self {
        let inv: Vec<E> = bandwidths.iter().map(|&b| E::one() / (b * b)).collect();
        let base = inv.iter().copied().fold(E::infinity(), E::min);
        let mut exps: Vec<(u32, E)> = Vec::with_capacity(inv.len());
        for &w in &inv {
            let ratio = w / base;
            let l = ratio.log2().round();
            let exact = (ratio - E::of(2.0).powf(l)).abs() <= E::of(1e-12) * ratio;
            if !exact || l > E::of(10.0) {
                return Kernel { inv, base, chain: None };
            }
            exps.push((l.as_f64() as u32, w));
        }
        exps.sort_by_key(|e| e.0);
        let mut prev = 0;
        let chain = exps
            .into_iter()
            .map(|(l, w)| {
                let step = l - prev;
                prev = l;
                (step, w)
            })
            .collect();
        Kernel { inv, base, chain: Some(chain) }
    }

    #[inline]
    fn value(&self, d2: E) -> E {
        match &self.chain {
            Some(c) => {
                let mut e = (-d2 * self.base).exp();
                let mut acc = E::zero();
                for &(s, _) in c {
                    for _ in 0..s {
                        e = e * e;
                    }
                    acc = acc + e;
                }
                acc
            }
            None => self.inv.iter().fold(E::zero(), |acc, &w| acc + (-d2 * w).exp()),
        }
    }

    /// `−dk/d(‖x − y‖²)`.
    #[inline]
    fn slope(&self, d2: E) -> E {
        match &self.chain {
            Some(c) => {
                let mut e = (-d2 * self.base).exp();
                let mut acc = E::zero();
                for &(s, w) in c {
                    for _ in 0..s {
                        e = e * e;
                    }
                    acc = acc + w * e;
                }
                acc
            }
            None => self.inv.iter().fold(E::zero(), |acc, &w| acc + w * (-d2 * w).exp()),
        }
    }
}

#[inline]
pub(crate) fn sq_dist<E: Element>(a: &[E], b: &[E]) -> E {
    a.iter().zip(b).fold(E::zero(), |acc, (&u, &v)| acc + (u - v) * (u - v))
}

pub(crate) fn layer_norm_backward<E: Element>(
    grads: &mut Grads<'_, E>,
    x: Var,
    gain: Var,
    shift: Var,
    xhat: &[E],
    rstd: &[E],
    g: &[E],
) {
    let rows = rstd.len();
    if rows == 0 {
        return;
    }
    let h = xhat.len() / rows;
    if grads.wants(shift) {
        let gs = grads.slot(shift);
        for r in 0..rows {
            for k in 0..h {
                gs[k] = gs[k] + g[r * h + k];
            }
        }
    }
    if grads.wants(gain) {
        let gg = grads.slot(gain);
        for r in 0..rows {
            for k in 0..h {
                gg[k] = gg[k] + g[r * h + k] * xhat[r * h + k];
            }
        }
    }
    if grads.wants(x) {
        let gain_v: Vec<E> = grads_value(grads, gain);
        let hn = E::of(h as f64);
        let mut gx = vec![E::zero(); xhat.len()];
        for r in 0..rows {
            let mut mean_g = E::zero();
            let mut mean_gx = E::zero();
            for k in 0..h {
                let gh = g[r * h + k] * gain_v[k];
                mean_g = mean_g + gh;
                mean_gx = mean_gx + gh * xhat[r * h + k];
            }
            mean_g = mean_g / hn;
            mean_gx = mean_gx / hn;
            for k in 0..h {
                let gh = g[r * h + k] * gain_v[k];
                gx[r * h + k] = rstd[r] * (gh - mean_g - xhat[r * h + k] * mean_gx);
            }
        }
        grads.add_owned(x, gx);
    }
}

fn grads_value<E: Element>(grads: &Grads<'_, E>, v: Var) -> Vec<E> {
    grads.value(v).to_vec()
}

pub(crate) fn dropout_backward<E: Element>(grads: &mut Grads<'_, E>, a: Var, mask: &[E], g: &[E]) {
    if !grads.wants(a) {
        return;
    }
    let ga: Vec<E> = g.iter().zip(mask).map(|(&g, &m)| g * m).collect();
    grads.add_owned(a, ga);
}

pub(crate) fn kernel_mean_backward<E: Element>(
    nodes: &[Node<E>],
    grads: &mut Grads<'_, E>,
    x: Var,
    y: Var,
    bandwidths: &[E],
    exclude_diagonal: bool,
    g: &[E],
) {
    let (wx, wy) = (grads.wants(x), grads.wants(y));
    if !wx && !wy {
        return;
    }
    let (nx, ny) = (&nodes[x.0], &nodes[y.0]);
    let (n, m, d) = (nx.shape[0], ny.shape[0], nx.shape[1]);
    let count = pair_count(n, m, exclude_diagonal).expect("validated in forward");
    let scale = g[0] / E::of(count as f64);
    let two = E::of(2.0);
    let kernel = Kernel::new(bandwidths);
    if x == y {
        // Both arguments are the same node: every unordered pair contributes
        // twice, diagonal pairs not at all.
        let mut gx = vec![E::zero(); n * d];
        for a in 0..n {
            let xa = &nx.value[a * d..(a + 1) * d];
            for b in a + 1..n {
                let xb = &nx.value[b * d..(b + 1) * d];
                let coef = scale * two * two * kernel.slope(sq_dist(xa, xb));
                for k in 0..d {
                    let diff = coef * (xa[k] - xb[k]);
                    gx[a * d + k] = gx[a * d + k] - diff;
                    gx[b * d + k] = gx[b * d + k] + diff;
                }
            }
        }
        grads.add_owned(x, gx);
        return;
    }
    let mut gx = vec![E::zero(); if wx { n * d } else { 0 }];
    let mut gy = vec![E::zero(); if wy { m * d } else { 0 }];
    for a in 0..n {
        let xa = &nx.value[a * d..(a + 1) * d];
        for b in 0..m {
            if exclude_diagonal && a == b {
                continue;
            }
            let yb = &ny.value[b * d..(b + 1) * d];
            let coef = scale * two * kernel.slope(sq_dist(xa, yb));
            for k in 0..d {
                let diff = coef * (xa[k] - yb[k]);
                if wx {
                    gx[a * d + k] = gx[a * d + k] - diff;
                }
                if wy {
                    gy[b * d + k] = gy[b * d + k] + diff;
                }
            }
        }
    }
    if wx {
        grads.add_owned(x, gx);
    }
    if wy {
        grads.add_owned(y, gy);
    }
}
