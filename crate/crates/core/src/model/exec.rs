//! The networks are written once against [`Exec`] and run either on a
//! [`Graph`] or symbolically, on shapes alone, to trace activations of the
//! full-size profile without allocating it.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::numerics::{conv2d_output_shape, lstm, maxpool2d_output_shape, Graph, LstmParams, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Branch {
    Face,
    Pose,
    /// Layers after the two modalities meet, or after the LSTM of a single-stream model.
    Head,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Face => "face",
            Branch::Pose => "pose",
            Branch::Head => "head",
        })
    }
}

/// One layer application: its kind as printed in layer tables (`Conv*`
/// is a convolution followed by LeakyReLU) and its input and output shapes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceRow {
    pub branch: Branch,
    pub layer: &'static str,
    pub input: Vec<usize>,
    pub output: Vec<usize>,
}

impl fmt::Display for TraceRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<5} {:<8} {:?} -> {:?}", self.branch, self.layer, self.input, self.output)
    }
}

pub(crate) trait Exec {
    type V: Copy;

    fn shape(&self, x: Self::V) -> Vec<usize>;
    /// Parameters `{layer}.weight` and `{layer}.bias`.
    fn conv2d(&mut self, x: Self::V, layer: &str) -> Result<Self::V>;
    fn maxpool2d(&mut self, x: Self::V, kernel: (usize, usize), stride: (usize, usize)) -> Result<Self::V>;
    fn linear(&mut self, x: Self::V, layer: &str) -> Result<Self::V>;
    fn leaky_relu(&mut self, x: Self::V) -> Self::V;
    fn reshape(&mut self, x: Self::V, shape: &[usize]) -> Result<Self::V>;
    fn concat(&mut self, xs: &[Self::V], axis: usize) -> Result<Self::V>;
    fn repeat(&mut self, x: Self::V, times: usize, axis: usize) -> Result<Self::V>;
    /// Last hidden state of the LSTM with parameters `{layer}.w_ih` etc.
    fn lstm(&mut self, x: Self::V, layer: &str) -> Result<Self::V>;
    fn log_softmax(&mut self, x: Self::V) -> Result<Self::V>;
    fn note(&mut self, _row: TraceRow) {}
}

/// Shape-only execution against a table of parameter shapes.
pub(crate) struct ShapeExec {
    params: HashMap<String, Vec<usize>>,
    shapes: Vec<Vec<usize>>,
    pub trace: Vec<TraceRow>,
}

impl ShapeExec {
    pub fn new(params: impl IntoIterator<Item = (String, Vec<usize>)>) -> Self {
        ShapeExec { params: params.into_iter().collect(), shapes: Vec::new(), trace: Vec::new() }
    }

    pub fn input(&mut self, shape: Vec<usize>) -> usize {
        self.shapes.push(shape);
        self.shapes.len() - 1
    }

    fn param(&self, name: &str) -> Result<&[usize]> {
        self.params.get(name).map(Vec::as_slice).ok_or_else(|| Error::shape(format!("no parameter named {name}")))
    }
}

impl Exec for ShapeExec {
    type V = usize;

    fn shape(&self, x: usize) -> Vec<usize> {
        self.shapes[x].clone()
    }

    fn conv2d(&mut self, x: usize, layer: &str) -> Result<usize> {
        let w = self.param(&format!("{layer}.weight"))?;
        let out = conv2d_output_shape(&self.shapes[x], w, (1, 1))?;
        Ok(self.input(out))
    }

    fn maxpool2d(&mut self, x: usize, kernel: (usize, usize), stride: (usize, usize)) -> Result<usize> {
        let out = maxpool2d_output_shape(&self.shapes[x], kernel, stride)?;
        Ok(self.input(out))
    }

    fn linear(&mut self, x: usize, layer: &str) -> Result<usize> {
        let w = self.param(&format!("{layer}.weight"))?.to_vec();
        let s = &self.shapes[x];
        if s.len() != 2 || s[1] != w[1] {
            return Err(Error::shape(format!("{layer}: input {s:?} does not fit weight {w:?}")));
        }
        let out = vec![s[0], w[0]];
        Ok(self.input(out))
    }

    fn leaky_relu(&mut self, x: usize) -> usize {
        x
    }

    fn reshape(&mut self, x: usize, shape: &[usize]) -> Result<usize> {
        if self.shapes[x].iter().product::<usize>() != shape.iter().product::<usize>() {
            return Err(Error::shape(format!("cannot reshape {:?} to {shape:?}", self.shapes[x])));
        }
        Ok(self.input(shape.to_vec()))
    }

    fn concat(&mut self, xs: &[usize], axis: usize) -> Result<usize> {
        let mut out = self.shapes[xs[0]].clone();
        for &x in &xs[1..] {
            let s = &self.shapes[x];
            let compatible =
                s.len() == out.len() && s.iter().zip(&out).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::shape(format!("cannot concatenate {s:?} with {out:?} on axis {axis}")));
            }
            out[axis] += s[axis];
        }
        Ok(self.input(out))
    }

    fn repeat(&mut self, x: usize, times: usize, axis: usize) -> Result<usize> {
        let mut out = self.shapes[x].clone();
        out[axis] *= times;
        Ok(self.input(out))
    }

    fn lstm(&mut self, x: usize, layer: &str) -> Result<usize> {
        let w = self.param(&format!("{layer}.w_ih"))?.to_vec();
        let s = self.shapes[x].clone();
        if s.len() != 3 || s[2] != w[1] {
            return Err(Error::shape(format!("{layer}: input {s:?} does not fit weight {w:?}")));
        }
        Ok(self.input(vec![s[0], w[0] / 4]))
    }

    fn log_softmax(&mut self, x: usize) -> Result<usize> {
        Ok(x)
    }

    fn note(&mut self, row: TraceRow) {
        self.trace.push(row);
    }
}

/// Execution on a differentiation graph with parameters bound by name.
pub(crate) struct GraphExec<'g> {
    pub g: &'g mut Graph,
    pub params: HashMap<&'g str, Var>,
    pub slope: f64,
}

impl GraphExec<'_> {
    fn param(&self, name: &str) -> Result<Var> {
        self.params.get(name).copied().ok_or_else(|| Error::shape(format!("no parameter named {name}")))
    }
}

impl Exec for GraphExec<'_> {
    type V = Var;

    fn shape(&self, x: Var) -> Vec<usize> {
        self.g.shape(x).to_vec()
    }

    fn conv2d(&mut self, x: Var, layer: &str) -> Result<Var> {
        let w = self.param(&format!("{layer}.weight"))?;
        let b = self.param(&format!("{layer}.bias"))?;
        self.g.conv2d(x, w, b, (1, 1))
    }

    fn maxpool2d(&mut self, x: Var, kernel: (usize, usize), stride: (usize, usize)) -> Result<Var> {
        self.g.maxpool2d(x, kernel, stride)
    }

    fn linear(&mut self, x: Var, layer: &str) -> Result<Var> {
        let w = self.param(&format!("{layer}.weight"))?;
        let b = self.param(&format!("{layer}.bias"))?;
        self.g.linear(x, w, Some(b))
    }

    fn leaky_relu(&mut self, x: Var) -> Var {
        self.g.leaky_relu(x, self.slope)
    }

    fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.g.reshape(x, shape)
    }

    fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        self.g.concat(xs, axis)
    }

    fn repeat(&mut self, x: Var, times: usize, axis: usize) -> Result<Var> {
        self.g.repeat(x, times, axis)
    }

    fn lstm(&mut self, x: Var, layer: &str) -> Result<Var> {
        let p = LstmParams {
            w_ih: self.param(&format!("{layer}.w_ih"))?,
            w_hh: self.param(&format!("{layer}.w_hh"))?,
            b_ih: self.param(&format!("{layer}.b_ih"))?,
            b_hh: self.param(&format!("{layer}.b_hh"))?,
        };
        Ok(lstm(self.g, x, &p, None, None)?.last_hidden)
    }

    fn log_softmax(&mut self, x: Var) -> Result<Var> {
        self.g.log_softmax(x)
    }
}
