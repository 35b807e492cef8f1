//! Reverse-mode differentiation over the primitives in [`crate::tensor`].
//!
//! A [`GradTape`] records each primitive together with the values it needs for
//! its backward rule. Kernels are borrowed, not copied, and are identified by a
//! caller-chosen parameter index so gradients can be routed back to the model.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{self, ConvKernel, KernelGrad, TimeMatrix};

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<'k> {
    Leaf,
    Conv {
        input: Var,
        kernel: &'k ConvKernel,
        param: usize,
        padding: usize,
    },
    Relu(Var),
    Sigmoid(Var),
    Hadamard(Var, Var),
    Add(Var, Var),
    Dropout {
        input: Var,
        mask: Vec<f64>,
    },
}

struct Node<'k> {
    value: TimeMatrix,
    op: Op<'k>,
}

#[derive(Default)]
pub struct GradTape<'k> {
    nodes: Vec<Node<'k>>,
}

/// Result of a backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    params: Vec<Option<KernelGrad>>,
    values: Vec<Option<TimeMatrix>>,
}

impl Gradients {
    /// Gradient for the kernel recorded under `param`, if it took part in the graph.
    pub fn param(&self, param: usize) -> Option<&KernelGrad> {
        self.params.get(param).and_then(Option::as_ref)
    }

    pub fn into_params(self) -> Vec<Option<KernelGrad>> {
        self.params
    }

    /// Gradient with respect to any recorded value (inputs included).
    pub fn wrt(&self, var: Var) -> Option<&TimeMatrix> {
        self.values.get(var.0).and_then(Option::as_ref)
    }
}

impl<'k> GradTape<'k> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &TimeMatrix {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: TimeMatrix, op: Op<'k>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: TimeMatrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn conv1d_dilated(
        &mut self,
        input: Var,
        kernel: &'k ConvKernel,
        param: usize,
        padding: usize,
    ) -> Result<Var> {
        let y = tensor::conv1d_dilated(self.value(input), kernel, padding)?;
        Ok(self.push(
            y,
            Op::Conv {
                input,
                kernel,
                param,
                padding,
            },
        ))
    }

    pub fn pointwise_conv(&mut self, input: Var, kernel: &'k ConvKernel, param: usize) -> Result<Var> {
        let y = tensor::pointwise_conv(self.value(input), kernel)?;
        Ok(self.push(
            y,
            Op::Conv {
                input,
                kernel,
                param,
                padding: 0,
            },
        ))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let y = tensor::relu(self.value(input));
        self.push(y, Op::Relu(input))
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        let y = tensor::sigmoid(self.value(input));
        self.push(y, Op::Sigmoid(input))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = tensor::hadamard(self.value(a), self.value(b))?;
        Ok(self.push(y, Op::Hadamard(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = tensor::add(self.value(a), self.value(b))?;
        Ok(self.push(y, Op::Add(a, b)))
    }

    pub fn dropout<R: Rng + ?Sized>(&mut self, input: Var, p: f64, training: bool, rng: &mut R) -> Result<Var> {
        let (y, mask) = tensor::dropout(self.value(input), p, training, rng)?;
        Ok(self.push(y, Op::Dropout { input, mask }))
    }

    /// Propagates `upstream = dL/d(root)` back through every recorded op.
    pub fn backward(&self, root: Var, upstream: &TimeMatrix) -> Result<Gradients> {
        if root.0 >= self.nodes.len() {
            return Err(Error::Tape(
                "backward called before the forward pass recorded its output".into(),
            ));
        }
        let root_value = &self.nodes[root.0].value;
        if root_value.shape() != upstream.shape() {
            return Err(Error::shape(
                "backward",
                format!("seed {:?} vs output {:?}", upstream.shape(), root_value.shape()),
            ));
        }

        let mut values: Vec<Option<TimeMatrix>> = vec![None; self.nodes.len()];
        let mut params: Vec<Option<KernelGrad>> = Vec::new();
        values[root.0] = Some(upstream.clone());

        for idx in (0..=root.0).rev() {
            let Some(grad) = values[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Conv {
                    input,
                    kernel,
                    param,
                    padding,
                } => {
                    let (dx, dk) =
                        tensor::conv1d_backward(self.value(*input), kernel, *padding, &grad)?;
                    accumulate(&mut values, *input, dx);
                    if params.len() <= *param {
                        params.resize(*param + 1, None);
                    }
                    match &mut params[*param] {
                        Some(acc) => acc.add_assign(&dk),
                        slot => *slot = Some(dk),
                    }
                }
                Op::Relu(input) => {
                    let dx = tensor::relu_backward(self.value(*input), &grad);
                    accumulate(&mut values, *input, dx);
                }
                Op::Sigmoid(input) => {
                    let dx = tensor::sigmoid_backward(&node.value, &grad);
                    accumulate(&mut values, *input, dx);
                }
                Op::Hadamard(a, b) => {
                    let da = tensor::hadamard(&grad, self.value(*b))?;
                    let db = tensor::hadamard(&grad, self.value(*a))?;
                    accumulate(&mut values, *a, da);
                    accumulate(&mut values, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut values, *a, grad.clone());
                    accumulate(&mut values, *b, grad.clone());
                }
                Op::Dropout { input, mask } => {
                    let mut dx = grad.clone();
                    for (g, m) in dx.as_mut_slice().iter_mut().zip(mask) {
                        *g *= m;
                    }
                    accumulate(&mut values, *input, dx);
                }
            }
            values[idx] = Some(grad);
        }
        Ok(Gradients { params, values })
    }
}

fn accumulate(values: &mut [Option<TimeMatrix>], var: Var, grad: TimeMatrix) {
    match &mut values[var.0] {
        Some(acc) => acc.add_assign(&grad),
        slot => *slot = Some(grad),
    }
}
