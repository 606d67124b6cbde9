use super::{ParamId, ParamStore, Result, Shape, Tensor, TensorError};

/// Backward rule of a recorded op.
///
/// Receives the input values, the op's output and the upstream gradient, and
/// returns one gradient per input. Entries whose `needs` flag is false may be
/// `None`.
pub(crate) trait Function {
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>>;
}

/// Handle to a value recorded in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

enum Source {
    Constant,
    Leaf,
    Param(ParamId),
    Op(Box<dyn Function>),
}

struct Node {
    value: Tensor,
    inputs: Vec<Var>,
    source: Source,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// Tape of one forward computation.
///
/// Borrows the parameter store mutably: batch norm updates its running
/// statistics during training forwards, and [`Graph::backward`] accumulates
/// into the parameters' gradient buffers.
pub struct Graph<'s> {
    pub(crate) store: &'s mut ParamStore,
    nodes: Vec<Node>,
    mode: Mode,
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s mut ParamStore, mode: Mode) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            mode,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    /// Constant input; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Vec::new(), Source::Constant, false)
    }

    /// Input whose gradient is collected by [`Graph::backward`].
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Vec::new(), Source::Leaf, true)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let p = self.store.get(id);
        let value = p.value.clone();
        let trainable = p.is_trainable();
        self.push(value, Vec::new(), Source::Param(id), trainable)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a [`Graph::leaf`] input.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn apply(&mut self, inputs: &[Var], value: Tensor, func: impl Function + 'static) -> Var {
        let requires_grad = inputs.iter().any(|&v| self.nodes[v.0].requires_grad);
        let source = if requires_grad {
            Source::Op(Box::new(func))
        } else {
            Source::Constant
        };
        self.push(value, inputs.to_vec(), source, requires_grad)
    }

    fn push(&mut self, value: Tensor, inputs: Vec<Var>, source: Source, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            inputs,
            source,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Reverse sweep from a scalar loss. Parameter gradients accumulate in
    /// the store; leaf gradients accumulate on the graph. Calling twice adds
    /// the gradients twice.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.shape(loss);
        if !shape.is_scalar() {
            return Err(TensorError::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            match &self.nodes[i].source {
                Source::Constant => {}
                Source::Leaf => match &mut self.nodes[i].grad {
                    Some(acc) => acc.accumulate(&g),
                    slot => *slot = Some(g),
                },
                Source::Param(id) => {
                    let id = *id;
                    self.store.get_mut(id).grad.accumulate(&g);
                }
                Source::Op(func) => {
                    let node = &self.nodes[i];
                    let inputs: Vec<&Tensor> = node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
                    let needs: Vec<bool> = node.inputs.iter().map(|v| self.nodes[v.0].requires_grad).collect();
                    let input_grads = func.backward(&inputs, &node.value, &g, &needs);
                    debug_assert_eq!(input_grads.len(), node.inputs.len());
                    for ((v, ig), need) in node.inputs.iter().zip(input_grads).zip(needs) {
                        let Some(ig) = ig else { continue };
                        if !need {
                            continue;
                        }
                        match &mut grads[v.0] {
                            Some(acc) => acc.accumulate(&ig),
                            slot => *slot = Some(ig),
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
