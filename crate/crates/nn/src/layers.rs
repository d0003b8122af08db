//! Dense and 2-D convolution layers, ReLU and the two losses.

use mdfeat_core::rng::Rng;
use mdfeat_core::{Error, Real, Result};
use ndarray::{s, Array1, Array2, ArrayView2, Axis, Ix1, Ix2, Ix4};

use crate::param::{Param, ParamRef, Parameters};

fn shape_err<T>(what: &str, got: &[usize], want: &[usize]) -> Result<T> {
    Err(Error::Input(format!("{what}: got shape {got:?}, expected {want:?}")))
}

/// Fully connected layer acting on row-major batches, `y = x Wᵀ + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    /// `out x in`.
    pub w: Param<T, Ix2>,
    pub b: Param<T, Ix1>,
}

impl<T: Real> Dense<T> {
    pub fn new(inputs: usize, outputs: usize, bound: f64, rng: &mut Rng) -> Self {
        Self { w: Param::uniform((outputs, inputs), bound, rng), b: Param::zeros(outputs) }
    }

    pub fn inputs(&self) -> usize {
        self.w.value.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.w.value.nrows()
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        if x.ncols() != self.inputs() {
            return shape_err("dense input", x.shape(), &[x.nrows(), self.inputs()]);
        }
        Ok(x.dot(&self.w.value.t()) + &self.b.value)
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, x: ArrayView2<T>, dy: ArrayView2<T>) -> Result<Array2<T>> {
        if dy.nrows() != x.nrows() || dy.ncols() != self.outputs() {
            return shape_err("dense output gradient", dy.shape(), &[x.nrows(), self.outputs()]);
        }
        self.w.grad += &dy.t().dot(&x);
        self.b.grad += &dy.sum_axis(Axis(0));
        Ok(dy.dot(&self.w.value))
    }
}

/// Stride-1 convolution with zero "same" padding and an odd square kernel.
/// Feature maps are stored as `channels x (height * width)` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    /// `out x in x k x k`.
    pub w: Param<T, Ix4>,
    pub b: Param<T, Ix1>,
}

impl<T: Real> Conv2d<T> {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, bound: f64, rng: &mut Rng) -> Self {
        assert!(kernel % 2 == 1, "kernel size must be odd");
        Self { w: Param::uniform((out_ch, in_ch, kernel, kernel), bound, rng), b: Param::zeros(out_ch) }
    }

    pub fn in_channels(&self) -> usize {
        self.w.value.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.w.value.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.w.value.shape()[2]
    }

    fn weight_matrix(&self) -> ArrayView2<'_, T> {
        let s = self.w.value.shape();
        self.w.value.view().into_shape_with_order((s[0], s[1] * s[2] * s[3])).expect("contiguous weights")
    }

    /// Unrolls every `k x k` neighbourhood into a column.
    fn im2col(&self, x: ArrayView2<T>, h: usize, w: usize) -> Array2<T> {
        let (c, k) = (self.in_channels(), self.kernel());
        let p = k / 2;
        let mut cols = Array2::from_elem((c * k * k, h * w), T::zero());
        for ch in 0..c {
            let img = x.row(ch);
            for ki in 0..k {
                for kj in 0..k {
                    let mut row = cols.row_mut((ch * k + ki) * k + kj);
                    for i in 0..h {
                        let si = i + ki;
                        if si < p || si - p >= h {
                            continue;
                        }
                        let src = (si - p) * w;
                        for j in 0..w {
                            let sj = j + kj;
                            if sj >= p && sj - p < w {
                                row[i * w + j] = img[src + sj - p];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &Array2<T>, h: usize, w: usize) -> Array2<T> {
        let (c, k) = (self.in_channels(), self.kernel());
        let p = k / 2;
        let mut x = Array2::from_elem((c, h * w), T::zero());
        for ch in 0..c {
            let mut img = x.row_mut(ch);
            for ki in 0..k {
                for kj in 0..k {
                    let row = cols.row((ch * k + ki) * k + kj);
                    for i in 0..h {
                        let si = i + ki;
                        if si < p || si - p >= h {
                            continue;
                        }
                        let dst = (si - p) * w;
                        for j in 0..w {
                            let sj = j + kj;
                            if sj >= p && sj - p < w {
                                img[dst + sj - p] += row[i * w + j];
                            }
                        }
                    }
                }
            }
        }
        x
    }

    fn check_input(&self, x: ArrayView2<T>, h: usize, w: usize) -> Result<()> {
        if x.nrows() != self.in_channels() || x.ncols() != h * w {
            return shape_err("conv input", x.shape(), &[self.in_channels(), h * w]);
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<T>, h: usize, w: usize) -> Result<Array2<T>> {
        Ok(self.forward_cached(x, h, w)?.0)
    }

    /// Output together with the unrolled input needed by `backward`.
    pub fn forward_cached(&self, x: ArrayView2<T>, h: usize, w: usize) -> Result<(Array2<T>, Array2<T>)> {
        self.check_input(x, h, w)?;
        let cols = self.im2col(x, h, w);
        let mut y = self.weight_matrix().dot(&cols);
        for (mut row, &b) in y.rows_mut().into_iter().zip(self.b.value.iter()) {
            row.mapv_inplace(|v| v + b);
        }
        Ok((y, cols))
    }

    /// Accumulates parameter gradients; returns `dL/dx` when `need_dx`.
    pub fn backward(
        &mut self,
        cols: &Array2<T>,
        dy: ArrayView2<T>,
        h: usize,
        w: usize,
        need_dx: bool,
    ) -> Result<Option<Array2<T>>> {
        if dy.nrows() != self.out_channels() || dy.ncols() != h * w {
            return shape_err("conv output gradient", dy.shape(), &[self.out_channels(), h * w]);
        }
        let dw = dy.dot(&cols.t());
        {
            let s = self.w.grad.shape().to_vec();
            let mut g = self.w.grad.view_mut().into_shape_with_order((s[0], s[1] * s[2] * s[3])).expect("contiguous");
            g += &dw;
        }
        self.b.grad += &dy.sum_axis(Axis(1));
        if !need_dx {
            return Ok(None);
        }
        let dcols = self.weight_matrix().t().dot(&dy);
        Ok(Some(self.col2im(&dcols, h, w)))
    }
}

pub fn relu_inplace<T: Real>(x: &mut Array2<T>) {
    x.mapv_inplace(|v| v.max(T::zero()));
}

/// Masks `dy` where the ReLU output `y` was zero.
pub fn relu_backward<T: Real>(y: ArrayView2<T>, dy: &mut Array2<T>) {
    ndarray::Zip::from(dy).and(y).for_each(|d, &v| {
        if v <= T::zero() {
            *d = T::zero();
        }
    });
}

/// Row-wise softmax.
pub fn softmax_rows<T: Real>(logits: ArrayView2<T>) -> Array2<T> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Mean cross-entropy of row-wise softmax against class labels, with its
/// gradient with respect to the logits.
pub fn softmax_xent<T: Real>(logits: ArrayView2<T>, labels: &[usize]) -> Result<(T, Array2<T>)> {
    if logits.nrows() != labels.len() || logits.nrows() == 0 {
        return Err(Error::Input(format!("{} logit rows for {} labels", logits.nrows(), labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= logits.ncols()) {
        return Err(Error::Input(format!("label {bad} out of range for {} classes", logits.ncols())));
    }
    let n = T::lit(labels.len() as f64);
    let mut grad = softmax_rows(logits);
    let mut loss = T::zero();
    for (i, &l) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        loss = loss + lse - row[l];
        grad[[i, l]] -= T::one();
    }
    grad.mapv_inplace(|g| g / n);
    Ok((loss / n, grad))
}

/// Mean over all entries of the squared error, with its gradient.
pub fn mse<T: Real>(pred: ArrayView2<T>, target: ArrayView2<T>) -> Result<(T, Array2<T>)> {
    if pred.shape() != target.shape() || pred.is_empty() {
        return shape_err("mse target", target.shape(), pred.shape());
    }
    let n = T::lit(pred.len() as f64);
    let diff = &pred - &target;
    let loss = diff.iter().map(|&d| d * d).sum::<T>() / n;
    Ok((loss, diff.mapv(|d| T::lit(2.0) * d / n)))
}

/// Stack of dense layers with ReLU between them and a linear last layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Dense<T>>,
}

/// Inputs of every layer, kept for the backward pass.
pub struct MlpCache<T> {
    inputs: Vec<Array2<T>>,
}

impl<T: Real> Mlp<T> {
    /// Widths `[in, hidden..., out]`.
    pub fn new(widths: &[usize], rng: &mut Rng) -> Self {
        assert!(widths.len() >= 2);
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let bound = if i == last { crate::param::linear_bound(w[0]) } else { crate::param::relu_bound(w[0]) };
                Dense::new(w[0], w[1], bound, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().expect("non-empty").outputs()
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: ArrayView2<T>) -> Result<(Array2<T>, MlpCache<T>)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(h.view())?;
            if i + 1 < self.layers.len() {
                relu_inplace(&mut y);
            }
            inputs.push(h);
            h = y;
        }
        Ok((h, MlpCache { inputs }))
    }

    pub fn backward(&mut self, cache: &MlpCache<T>, dy: ArrayView2<T>) -> Result<Array2<T>> {
        let mut d = dy.to_owned();
        for i in (0..self.layers.len()).rev() {
            d = self.layers[i].backward(cache.inputs[i].view(), d.view())?;
            if i > 0 {
                relu_backward(cache.inputs[i].view(), &mut d);
            }
        }
        Ok(d)
    }

    pub fn zero_last_layer(&mut self) {
        let last = self.layers.last_mut().expect("non-empty");
        last.w.value.fill(T::zero());
        last.b.value.fill(T::zero());
    }
}

/// Copies row `i` of a batch into a standalone matrix of shape `rows x cols`.
pub fn row_as_matrix<T: Real>(batch: ArrayView2<T>, i: usize, rows: usize, cols: usize) -> Array2<T> {
    batch.slice(s![i, ..]).to_owned().into_shape_with_order((rows, cols)).expect("row length matches")
}

pub fn vec_to_row<T: Real>(v: Array1<T>) -> Array2<T> {
    let n = v.len();
    v.into_shape_with_order((1, n)).expect("1-D")
}

impl<T: Real> Parameters<T> for Dense<T> {
    fn params(&mut self) -> Vec<ParamRef<'_, T>> {
        vec![self.w.view_mut(), self.b.view_mut()]
    }
}

impl<T: Real> Parameters<T> for Conv2d<T> {
    fn params(&mut self) -> Vec<ParamRef<'_, T>> {
        vec![self.w.view_mut(), self.b.view_mut()]
    }
}

impl<T: Real> Parameters<T> for Mlp<T> {
    fn params(&mut self) -> Vec<ParamRef<'_, T>> {
        self.layers.iter_mut().flat_map(|l| l.params()).collect()
    }
}
