//! Reverse-mode differentiation over [`Tensor5`] values.
//!
//! A [`Tape`] owns every value produced during a forward pass. Each recorded
//! node keeps handles to its inputs and a [`BackwardOp`] that maps the
//! gradient of its output to gradients of its inputs. [`Tape::backward`]
//! walks the nodes in reverse recording order and adds the final gradients
//! into the `grad` slot of every leaf created with `requires_grad`.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::conv::{self, ConvGeometry};
use crate::error::{Error, Result};
use crate::tensor::{Shape5, Tensor5};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Gradient rule of one recorded operation.
pub trait BackwardOp {
    fn name(&self) -> &'static str;

    /// Returns one entry per input. Entries whose `wanted` flag is false may
    /// be `None`; a `None` for a wanted input means a zero gradient.
    fn backward(
        &self,
        inputs: &[&Tensor5],
        output: &Tensor5,
        grad_output: &[f64],
        wanted: &[bool],
    ) -> Vec<Option<Vec<f64>>>;
}

struct Node {
    value: Tensor5,
    inputs: Vec<Var>,
    op: Option<Box<dyn BackwardOp>>,
    needs_grad: bool,
}

/// Recording of a forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    fault: Option<&'static str>,
}

impl core::fmt::Debug for Tape {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Tape").field("nodes", &self.nodes.len()).finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Test hook: scales every gradient produced by ops named `op` by 1.5.
    #[doc(hidden)]
    pub fn inject_fault(&mut self, op: &'static str) {
        self.fault = Some(op);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds an input tensor. Its `requires_grad` flag decides whether
    /// [`Tape::backward`] fills its gradient slot.
    pub fn leaf(&mut self, value: Tensor5) -> Var {
        let needs_grad = value.requires_grad();
        self.push(Node {
            value,
            inputs: Vec::new(),
            op: None,
            needs_grad,
        })
    }

    /// Adds a trainable leaf.
    pub fn param(&mut self, value: Tensor5) -> Var {
        self.leaf(value.with_requires_grad(true))
    }

    /// Adds a constant leaf.
    pub fn constant(&mut self, value: Tensor5) -> Var {
        self.leaf(value.with_requires_grad(false))
    }

    /// Records an operation computed outside the tape.
    pub fn record(&mut self, inputs: &[Var], value: Tensor5, op: Box<dyn BackwardOp>) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.push(Node {
            value,
            inputs: inputs.to_vec(),
            op: Some(op),
            needs_grad,
        })
    }

    fn push(&mut self, node: Node) -> Var {
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &Tensor5 {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> Shape5 {
        self.nodes[var.0].value.shape()
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, var: Var) -> Option<&[f64]> {
        self.nodes[var.0].value.grad()
    }

    pub fn zero_grad(&mut self) {
        self.nodes.iter_mut().for_each(|n| n.value.zero_grad());
    }

    /// Propagates `d loss / d leaf` into every gradient-requiring leaf.
    /// Repeated calls accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let loss_shape = self.shape(loss);
        if loss_shape.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_shape.dims()
            )));
        }
        let mut pending: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        pending[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(grad) = pending[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(op) = &node.op else {
                self.nodes[idx].value.accumulate_grad(&grad);
                continue;
            };
            let inputs: Vec<&Tensor5> = node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let wanted: Vec<bool> = node.inputs.iter().map(|v| self.nodes[v.0].needs_grad).collect();
            let mut grads = op.backward(&inputs, &node.value, &grad, &wanted);
            if self.fault == Some(op.name()) {
                grads.iter_mut().flatten().flat_map(|g| g.iter_mut()).for_each(|g| *g *= 1.5);
            }
            for ((input, g), want) in node.inputs.iter().zip(grads).zip(wanted) {
                let (Some(g), true) = (g, want) else {
                    continue;
                };
                match &mut pending[input.0] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    /// 3D cross-correlation of `input` with `weight` plus per-channel `bias`.
    pub fn conv3d(&mut self, input: Var, weight: Var, bias: Var, geometry: ConvGeometry) -> Result<Var> {
        if geometry.transposed {
            return Err(Error::Contract("Tape::conv3d needs a non-transposed geometry".into()));
        }
        self.conv(input, weight, bias, geometry)
    }

    /// Transposed 3D convolution; weights are `(c_in, c_out, k_l, k_h, k_w)`.
    pub fn conv3d_transposed(&mut self, input: Var, weight: Var, bias: Var, geometry: ConvGeometry) -> Result<Var> {
        if !geometry.transposed {
            return Err(Error::Contract("Tape::conv3d_transposed needs a transposed geometry".into()));
        }
        self.conv(input, weight, bias, geometry)
    }

    fn conv(&mut self, input: Var, weight: Var, bias: Var, geometry: ConvGeometry) -> Result<Var> {
        let out = conv::forward(
            self.value(input),
            self.value(weight),
            self.value(bias).data(),
            &geometry,
        )?;
        Ok(self.record(&[input, weight, bias], out, Box::new(ConvOp { geometry })))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let out = Tensor5::from_vec(x.shape(), data).expect("shape preserved");
        self.record(&[input], out, Box::new(ReluOp))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        ta.shape().check_same(&tb.shape(), "add")?;
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor5::from_vec(ta.shape(), data)?;
        Ok(self.record(&[a, b], out, Box::new(AddOp)))
    }

    /// Multiplies every element by a constant.
    pub fn scale(&mut self, input: Var, factor: f64) -> Var {
        let x = self.value(input);
        let data = x.data().iter().map(|v| v * factor).collect();
        let out = Tensor5::from_vec(x.shape(), data).expect("shape preserved");
        self.record(&[input], out, Box::new(ScaleOp { factor }))
    }

    /// Concatenates along the channel axis, in list order.
    pub fn concat_channels(&mut self, inputs: &[Var]) -> Result<Var> {
        let Some(&first) = inputs.first() else {
            return Err(Error::Contract("concat_channels needs at least one input".into()));
        };
        let base = self.shape(first);
        let mut channels = Vec::with_capacity(inputs.len());
        for &v in inputs {
            let s = self.shape(v);
            let probe = Shape5 { c: base.c, ..s };
            base.check_same(&probe, "concat_channels")?;
            channels.push(s.c);
        }
        let total: usize = channels.iter().sum();
        let out_shape = Shape5 { c: total, ..base };
        let vol = base.volume();
        let mut data = Vec::with_capacity(out_shape.numel());
        for n in 0..base.n {
            for (&v, &c) in inputs.iter().zip(&channels) {
                let t = self.value(v);
                let from = n * c * vol;
                data.extend_from_slice(&t.data()[from..from + c * vol]);
            }
        }
        let out = Tensor5::from_vec(out_shape, data)?;
        Ok(self.record(inputs, out, Box::new(ConcatOp { channels })))
    }

    /// Channels `start..start + count` of `input`.
    pub fn slice_channels(&mut self, input: Var, start: usize, count: usize) -> Result<Var> {
        let out = self.value(input).slice_channels(start, count)?;
        Ok(self.record(&[input], out, Box::new(SliceOp { start, count })))
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, input: Var) -> Var {
        let total = self.value(input).data().iter().sum();
        self.record(&[input], Tensor5::scalar(total), Box::new(SumOp))
    }
}

struct ConvOp {
    geometry: ConvGeometry,
}

impl BackwardOp for ConvOp {
    fn name(&self) -> &'static str {
        if self.geometry.transposed { "conv3d_transposed" } else { "conv3d" }
    }

    fn backward(&self, inputs: &[&Tensor5], output: &Tensor5, grad_output: &[f64], wanted: &[bool]) -> Vec<Option<Vec<f64>>> {
        let g = conv::backward(
            inputs[0],
            inputs[1],
            &self.geometry,
            output.shape(),
            grad_output,
            [wanted[0], wanted[1], wanted[2]],
        );
        vec![g.input, g.weight, g.bias]
    }
}

struct ReluOp;

impl BackwardOp for ReluOp {
    fn name(&self) -> &'static str {
        "relu"
    }

    fn backward(&self, inputs: &[&Tensor5], _output: &Tensor5, grad_output: &[f64], _wanted: &[bool]) -> Vec<Option<Vec<f64>>> {
        let g = inputs[0]
            .data()
            .iter()
            .zip(grad_output)
            .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
            .collect();
        vec![Some(g)]
    }
}

struct AddOp;

impl BackwardOp for AddOp {
    fn name(&self) -> &'static str {
        "add"
    }

    fn backward(&self, _inputs: &[&Tensor5], _output: &Tensor5, grad_output: &[f64], wanted: &[bool]) -> Vec<Option<Vec<f64>>> {
        wanted.iter().map(|&w| w.then(|| grad_output.to_vec())).collect()
    }
}

struct ScaleOp {
    factor: f64,
}

impl BackwardOp for ScaleOp {
    fn name(&self) -> &'static str {
        "scale"
    }

    fn backward(&self, _inputs: &[&Tensor5], _output: &Tensor5, grad_output: &[f64], _wanted: &[bool]) -> Vec<Option<Vec<f64>>> {
        vec![Some(grad_output.iter().map(|g| g * self.factor).collect())]
    }
}

struct ConcatOp {
    channels: Vec<usize>,
}

impl BackwardOp for ConcatOp {
    fn name(&self) -> &'static str {
        "concat_channels"
    }

    fn backward(&self, inputs: &[&Tensor5], output: &Tensor5, grad_output: &[f64], wanted: &[bool]) -> Vec<Option<Vec<f64>>> {
        let s = output.shape();
        let vol = s.volume();
        let mut offset = 0;
        let mut grads = Vec::with_capacity(inputs.len());
        for (&c, &want) in self.channels.iter().zip(wanted) {
            if want {
                let mut g = Vec::with_capacity(s.n * c * vol);
                for n in 0..s.n {
                    let from = s.index(n, offset, 0, 0, 0);
                    g.extend_from_slice(&grad_output[from..from + c * vol]);
                }
                grads.push(Some(g));
            } else {
                grads.push(None);
            }
            offset += c;
        }
        grads
    }
}

struct SliceOp {
    start: usize,
    count: usize,
}

impl BackwardOp for SliceOp {
    fn name(&self) -> &'static str {
        "slice_channels"
    }

    fn backward(&self, inputs: &[&Tensor5], _output: &Tensor5, grad_output: &[f64], _wanted: &[bool]) -> Vec<Option<Vec<f64>>> {
        let s = inputs[0].shape();
        let vol = s.volume();
        let mut g = vec![0.0; s.numel()];
        for n in 0..s.n {
            let dst = s.index(n, self.start, 0, 0, 0);
            let src = n * self.count * vol;
            g[dst..dst + self.count * vol].copy_from_slice(&grad_output[src..src + self.count * vol]);
        }
        vec![Some(g)]
    }
}

struct SumOp;

impl BackwardOp for SumOp {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn backward(&self, inputs: &[&Tensor5], _output: &Tensor5, grad_output: &[f64], _wanted: &[bool]) -> Vec<Option<Vec<f64>>> {
        vec![Some(vec![grad_output[0]; inputs[0].shape().numel()])]
    }
}
