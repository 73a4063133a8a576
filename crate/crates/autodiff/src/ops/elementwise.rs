use crate::element::Element;
use crate::error::Result;
use crate::graph::{BinaryKind, Graph, Grads, Node, Op, UnaryKind, Var};
use crate::shape::Broadcast;

#[inline]
fn apply<E: Element>(kind: BinaryKind, x: E, y: E) -> E {
    match kind {
        BinaryKind::Add => x + y,
        BinaryKind::Sub => x - y,
        BinaryKind::Mul => x * y,
        BinaryKind::Div => x / y,
    }
}

#[inline]
pub(crate) fn sigmoid<E: Element>(x: E) -> E {
    if x >= E::zero() {
        E::one() / (E::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (E::one() + e)
    }
}

#[inline]
pub(crate) fn softplus<E: Element>(x: E) -> E {
    if x > E::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl<E: Element> Graph<E> {
    fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var> {
        let (na, nb) = (self.node(a), self.node(b));
        let rg = na.requires_grad || nb.requires_grad;
        if na.shape == nb.shape {
            let value = na.value.iter().zip(&nb.value).map(|(&x, &y)| apply(kind, x, y)).collect();
            let shape = na.shape.clone();
            return Ok(self.push(shape, value, Op::Binary { kind, a, b }, rg));
        }
        let plan = Broadcast::new(op_name(kind), &na.shape, &nb.shape)?;
        let mut value = vec![E::zero(); plan.out_shape.iter().product()];
        plan.for_each(|o, ia, ib| value[o] = apply(kind, na.value[ia], nb.value[ib]));
        Ok(self.push(plan.out_shape, value, Op::Binary { kind, a, b }, rg))
    }

    /// Broadcasting addition.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Div, a, b)
    }

    fn unary(&mut self, kind: UnaryKind<E>, a: Var) -> Var {
        let n = self.node(a);
        let f: fn(E, E) -> E = match kind {
            UnaryKind::Neg => |x, _| -x,
            UnaryKind::Exp => |x, _| x.exp(),
            UnaryKind::Log => |x, _| x.ln(),
            UnaryKind::Tanh => |x, _| x.tanh(),
            UnaryKind::Sigmoid => |x, _| sigmoid(x),
            UnaryKind::Softplus => |x, _| softplus(x),
            UnaryKind::Square => |x, _| x * x,
            UnaryKind::Sqrt => |x, _| x.sqrt(),
            UnaryKind::Relu => |x, _| if x > E::zero() { x } else { E::zero() },
            UnaryKind::Scale(_) => |x, c| x * c,
            UnaryKind::AddScalar(_) => |x, c| x + c,
        };
        let c = match kind {
            UnaryKind::Scale(c) | UnaryKind::AddScalar(c) => c,
            _ => E::zero(),
        };
        let value: Vec<E> = n.value.iter().map(|&x| f(x, c)).collect();
        let (shape, rg) = (n.shape.clone(), n.requires_grad);
        if self.trap_enabled() {
            let domain = match kind {
                UnaryKind::Log => n.value.iter().find(|&&x| x <= E::zero()),
                UnaryKind::Sqrt => n.value.iter().find(|&&x| x < E::zero()),
                _ => None,
            };
            if let Some(bad) = domain {
                let reason = format!("input {bad} outside the domain");
                let name = Op::<E>::Unary { kind, a }.name();
                self.trip(name, reason);
            }
        }
        self.push(shape, value, Op::Unary { kind, a }, rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Neg, a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Exp, a)
    }

    /// Natural log. Non-positive inputs yield NaN/-inf; with the trap enabled
    /// they are reported by [`Graph::check`].
    pub fn log(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Log, a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Tanh, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Sigmoid, a)
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Softplus, a)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Square, a)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Sqrt, a)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Relu, a)
    }

    pub fn scale(&mut self, a: Var, c: E) -> Var {
        self.unary(UnaryKind::Scale(c), a)
    }

    pub fn add_scalar(&mut self, a: Var, c: E) -> Var {
        self.unary(UnaryKind::AddScalar(c), a)
    }
}

fn op_name(kind: BinaryKind) -> &'static str {
    match kind {
        BinaryKind::Add => "add",
        BinaryKind::Sub => "sub",
        BinaryKind::Mul => "mul",
        BinaryKind::Div => "div",
    }
}

pub(crate) fn binary_backward<E: Element>(
    nodes: &[Node<E>],
    grads: &mut Grads<'_, E>,
    out: &Node<E>,
    kind: BinaryKind,
    a: Var,
    b: Var,
    g: &[E],
) {
    let (na, nb) = (&nodes[a.0], &nodes[b.0]);
    let (wa, wb) = (grads.wants(a), grads.wants(b));
    if na.shape == nb.shape {
        if wa {
            let ga: Vec<E> = match kind {
                BinaryKind::Add | BinaryKind::Sub => g.to_vec(),
                BinaryKind::Mul => g.iter().zip(&nb.value).map(|(&g, &y)| g * y).collect(),
                BinaryKind::Div => g.iter().zip(&nb.value).map(|(&g, &y)| g / y).collect(),
            };
            grads.add_owned(a, ga);
        }
        if wb {
            let gb: Vec<E> = match kind {
                BinaryKind::Add => g.to_vec(),
                BinaryKind::Sub => g.iter().map(|&g| -g).collect(),
                BinaryKind::Mul => g.iter().zip(&na.value).map(|(&g, &x)| g * x).collect(),
                BinaryKind::Div => g
                    .iter()
                    .zip(&out.value)
                    .zip(&nb.value)
                    .map(|((&g, &o), &y)| -g * o / y)
                    .collect(),
            };
            grads.add_owned(b, gb);
        }
        return;
    }
    let plan = Broadcast::new("backward", &na.shape, &nb.shape).expect("shapes validated in forward");
    let mut ga = if wa { vec![E::zero(); na.value.len()] } else { Vec::new() };
    let mut gb = if wb { vec![E::zero(); nb.value.len()] } else { Vec::new() };
    plan.for_each(|o, ia, ib| {
        let go = g[o];
        match kind {
            BinaryKind::Add => {
                if wa {
                    ga[ia] = ga[ia] + go;
                }
                if wb {
                    gb[ib] = gb[ib] + go;
                }
            }
            BinaryKind::Sub => {
                if wa {
                    ga[ia] = ga[ia] + go;
                }
                if wb {
                    gb[ib] = gb[ib] - go;
                }
            }
            BinaryKind::Mul => {
                if wa {
                    ga[ia] = ga[ia] + go * nb.value[ib];
                }
                if wb {
                    gb[ib] = gb[ib] + go * na.value[ia];
                }
            }
            BinaryKind::Div => {
                if wa {
                    ga[ia] = ga[ia] + go / nb.value[ib];
                }
                if wb {
                    gb[ib] = gb[ib] - go * out.value[o] / nb.value[ib];
                }
            }
        }
    });
    if wa {
        grads.add_owned(a, ga);
    }
    if wb {
        grads.add_owned(b, gb);
    }
}

pub(crate) fn unary_backward<E: Element>(
    nodes: &[Node<E>],
    grads: &mut Grads<'_, E>,
    out: &Node<E>,
    kind: UnaryKind<E>,
    a: Var,
    g: &[E],
) {
    if !grads.wants(a) {
        return;
    }
    let x = &nodes[a.0].value;
    let y = &out.value;
    let two = E::of(2.0);
    let ga: Vec<E> = match kind {
        UnaryKind::Neg => g.iter().map(|&g| -g).collect(),
        UnaryKind::Exp => g.iter().zip(y).map(|(&g, &y)| g * y).collect(),
        UnaryKind::Log => g.iter().zip(x).map(|(&g, &x)| g / x).collect(),
        UnaryKind::Tanh => g.iter().zip(y).map(|(&g, &y)| g * (E::one() - y * y)).collect(),
        UnaryKind::Sigmoid => g.iter().zip(y).map(|(&g, &y)| g * y * (E::one() - y)).collect(),
        UnaryKind::Softplus => g.iter().zip(x).map(|(&g, &x)| g * sigmoid(x)).collect(),
        UnaryKind::Square => g.iter().zip(x).map(|(&g, &x)| g * two * x).collect(),
        UnaryKind::Sqrt => g.iter().zip(y).map(|(&g, &y)| g / (two * y)).collect(),
        UnaryKind::Relu => g
            .iter()
            .zip(x)
            .map(|(&g, &x)| if x > E::zero() { g } else { E::zero() })
            .collect(),
        UnaryKind::Scale(c) => g.iter().map(|&g| g * c).collect(),
        UnaryKind::AddScalar(_) => g.to_vec(),
    };
    grads.add_owned(a, ga);
}
