use crate::element::Element;
use crate::error::{AutodiffError, Result};

/// Dense row-major n-dimensional array with an optional gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<E: Element = f64> {
    shape: Vec<usize>,
    values: Vec<E>,
    requires_grad: bool,
    grad: Option<Vec<E>>,
}

impl<E: Element> Tensor<E> {
    pub fn new(shape: Vec<usize>, values: Vec<E>) -> Result<Self> {
        if shape.iter().product::<usize>() != values.len() {
            return Err(AutodiffError::DataLength {
                len: values.len(),
                shape,
            });
        }
        Ok(Self {
            shape,
            values,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            values: vec![E::zero(); n],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn filled(shape: Vec<usize>, v: E) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            values: vec![v; n],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(v: E) -> Self {
        Self {
            shape: Vec::new(),
            values: vec![v],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn with_requires_grad(mut self, flag: bool) -> Self {
        self.requires_grad = flag;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[E] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [E] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<E> {
        self.values
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
    }

    pub fn grad(&self) -> Option<&[E]> {
        self.grad.as_deref()
    }

    /// Adds `g` into the gradient accumulator, allocating it on first use.
    pub fn accumulate_grad(&mut self, g: &[E]) -> Result<()> {
        if g.len() != self.values.len() {
            return Err(AutodiffError::DataLength {
                len: g.len(),
                shape: self.shape.clone(),
            });
        }
        match &mut self.grad {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b),
            None => self.grad = Some(g.to_vec()),
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.values.len() {
            return Err(AutodiffError::DataLength {
                len: self.values.len(),
                shape,
            });
        }
        self.shape = shape;
        Ok(self)
    }
}
