//! Small differentiable encoder: affine layers with `tanh` between them and
//! an L2 normalisation on the output.
//!
//! Parameters are exposed as one flat vector (layer by layer, weights in
//! row-major `d_in × d_out` order, then bias) so the optimiser can treat them
//! uniformly.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand_distr::{Distribution, Normal};

use crate::binio::{BinReader, BinWriter};
use crate::data::RandomSeed;
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, Matrix};

const ENCODER_MAGIC: &[u8; 4] = b"CAPE";

#[derive(Debug, Clone, PartialEq)]
struct Affine {
    /// `d_in × d_out`
    w: Matrix,
    b: Vec<f64>,
}

impl Affine {
    fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = x.matmul(&self.w).expect("layer shapes checked on construction");
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(&self.b) {
                *o += b;
            }
        }
        out
    }

    fn num_params(&self) -> usize {
        self.w.rows() * self.w.cols() + self.b.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    layers: Vec<Affine>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of every affine layer; entries after the first are `tanh`
    /// outputs.
    inputs: Vec<Matrix>,
    norms: Vec<f64>,
    output: Matrix,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        &self.output
    }
}

impl Encoder {
    pub fn identity(d: usize) -> Self {
        Self::linear(Matrix::identity(d), vec![0.0; d]).expect("square identity")
    }

    pub fn linear(w: Matrix, b: Vec<f64>) -> Result<Self> {
        Self::from_layers(vec![(w, b)])
    }

    /// Layers as `(W, b)` pairs; consecutive layers must chain.
    pub fn from_layers(layers: Vec<(Matrix, Vec<f64>)>) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("encoder needs at least one layer"));
        }
        for (l, (w, b)) in layers.iter().enumerate() {
            if w.cols() != b.len() {
                return Err(Error::Shape(format!(
                    "layer {l}: {} outputs but bias of length {}",
                    w.cols(),
                    b.len()
                )));
            }
            if l > 0 && layers[l - 1].0.cols() != w.rows() {
                return Err(Error::Shape(format!("layer {l} does not chain")));
            }
            if let Some((row, col)) = w.find_non_finite() {
                return Err(Error::NonFinite { row, col });
            }
        }
        Ok(Self {
            layers: layers.into_iter().map(|(w, b)| Affine { w, b }).collect(),
        })
    }

    /// Gaussian weights with standard deviation `1/√fan_in`, zero biases.
    /// `hidden` adds one `tanh` layer of that width.
    pub fn random(d_in: usize, d_out: usize, hidden: Option<usize>, seed: RandomSeed) -> Self {
        let mut rng = seed.rng();
        let mut dims = vec![d_in];
        dims.extend(hidden);
        dims.push(d_out);
        let layers = dims
            .windows(2)
            .map(|w| {
                let normal = Normal::new(0.0, 1.0 / (w[0] as f64).sqrt()).expect("positive std");
                let data = (0..w[0] * w[1]).map(|_| normal.sample(&mut rng)).collect();
                (
                    Matrix::from_vec(w[0], w[1], data).expect("sized"),
                    vec![0.0; w[1]],
                )
            })
            .collect();
        Self::from_layers(layers).expect("dimensions chain")
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").w.cols()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn weights(&self, layer: usize) -> &Matrix {
        &self.layers[layer].w
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        &self.layers[layer].b
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Affine::num_params).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.w.as_slice());
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "{} parameters for an encoder with {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.w.as_slice().len();
            l.w.as_mut_slice().copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input dimension {} for an encoder expecting {}",
                x.cols(),
                self.input_dim()
            )));
        }
        if let Some((row, col)) = x.find_non_finite() {
            return Err(Error::NonFinite { row, col });
        }
        let mut inputs = vec![x.clone()];
        let mut h = self.layers[0].apply(x);
        for layer in &self.layers[1..] {
            h.as_mut_slice().iter_mut().for_each(|v| *v = v.tanh());
            let next = layer.apply(&h);
            inputs.push(h);
            h = next;
        }
        let mut norms = Vec::with_capacity(h.rows());
        for r in 0..h.rows() {
            let row = h.row_mut(r);
            let n = dot(row, row).sqrt();
            if n.is_nan() || n <= 0.0 {
                return Err(Error::ZeroNorm { row: r });
            }
            row.iter_mut().for_each(|v| *v /= n);
            norms.push(n);
        }
        Ok((
            h.clone(),
            ForwardCache {
                inputs,
                norms,
                output: h,
            },
        ))
    }

    /// Unit-norm embeddings of `x`.
    pub fn embed(&self, x: &Matrix) -> Result<Matrix> {
        self.forward(x).map(|(out, _)| out)
    }

    /// Returns the flat parameter gradient (same layout as [`Self::params`])
    /// and the gradient with respect to the input.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Matrix) -> Result<(Vec<f64>, Matrix)> {
        let u = &cache.output;
        if grad_out.rows() != u.rows() || grad_out.cols() != u.cols() {
            return Err(Error::Shape("gradient does not match the forward output".into()));
        }
        // through the normalisation: (I - u uᵀ) g / ‖v‖
        let mut g = grad_out.clone();
        for r in 0..g.rows() {
            let ur = u.row(r);
            let radial = dot(ur, g.row(r));
            let n = cache.norms[r];
            for (gv, uv) in g.row_mut(r).iter_mut().zip(ur) {
                *gv = (*gv - radial * uv) / n;
            }
        }
        let mut per_layer = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[l];
            let gw = input.transpose().matmul(&g)?;
            let mut gb = vec![0.0; layer.b.len()];
            for row in g.iter_rows() {
                for (a, v) in gb.iter_mut().zip(row) {
                    *a += v;
                }
            }
            let mut gin = g.matmul(&layer.w.transpose())?;
            if l > 0 {
                // input is tanh(pre): d tanh = 1 - tanh²
                for (gv, hv) in gin.as_mut_slice().iter_mut().zip(input.as_slice()) {
                    *gv *= 1.0 - hv * hv;
                }
            }
            per_layer.push((gw, gb));
            g = gin;
        }
        let mut flat = Vec::with_capacity(self.num_params());
        for (gw, gb) in per_layer.into_iter().rev() {
            flat.extend(gw.into_vec());
            flat.extend(gb);
        }
        Ok((flat, g))
    }

    /// `CAPE`, version, layer count, then per layer d_in, d_out (u64),
    /// row-major weights and the bias.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BinWriter::new(BufWriter::new(File::create(path)?), ENCODER_MAGIC)?;
        w.u64(self.layers.len() as u64)?;
        for l in &self.layers {
            w.u64(l.w.rows() as u64)?;
            w.u64(l.w.cols() as u64)?;
            w.f64s(l.w.as_slice())?;
            w.f64s(&l.b)?;
        }
        w.finish()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BinReader::new(BufReader::new(File::open(path)?), ENCODER_MAGIC, "encoder")?;
        let n = r.usize()?;
        let mut layers = Vec::with_capacity(n);
        for _ in 0..n {
            let rows = r.usize()?;
            let cols = r.usize()?;
            let w = Matrix::from_vec(rows, cols, r.f64s(rows * cols)?)?;
            let b = r.f64s(cols)?;
            layers.push((w, b));
        }
        r.expect_end()?;
        Self::from_layers(layers)
    }
}
