//! Gated self-attention over the columns of a `32 x L` feature map.
//!
//! `A = softmax_col((Wq X)ᵀ (Wk X))` (softmax down each column), `O = Wz (Wv X) A`, `Y = ω O + X`.

use mdfeat_core::rng::Rng;
use mdfeat_core::{Error, Real, Result};
use ndarray::{Array2, ArrayView2, Axis, Ix1, Ix2, Zip};

use crate::param::{linear_bound, Param, ParamRef, Parameters};

pub const CHANNELS: usize = 32;
pub const KEY_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct SelfAttention<T> {
    pub wq: Param<T, Ix2>,
    pub wk: Param<T, Ix2>,
    pub wv: Param<T, Ix2>,
    pub wz: Param<T, Ix2>,
    /// Scalar gate, starts at zero.
    pub omega: Param<T, Ix1>,
}

/// Intermediates kept for the backward pass. The attention map is stored
/// transposed, one softmax column per row.
pub struct AttentionCache<T> {
    pub q: Array2<T>,
    pub k: Array2<T>,
    pub v: Array2<T>,
    pub a_t: Array2<T>,
    /// `V A`.
    pub p: Array2<T>,
    pub o: Array2<T>,
}

impl<T> AttentionCache<T> {
    /// The attention map `A`.
    pub fn map(&self) -> ArrayView2<'_, T> {
        self.a_t.t()
    }
}

const LANES: usize = 8;

/// Max and dot product with independent accumulators, so the reductions do
/// not serialize on one register.
fn lane_max<T: Real>(xs: &[T]) -> T {
    let mut acc = [T::neg_infinity(); LANES];
    let chunks = xs.chunks_exact(LANES);
    let tail = chunks.remainder();
    for c in chunks {
        for (a, &x) in acc.iter_mut().zip(c) {
            *a = if x > *a { x } else { *a };
        }
    }
    tail.iter().chain(&acc).copied().fold(T::neg_infinity(), T::max)
}

fn lane_dot<T: Real>(xs: &[T], ys: &[T]) -> T {
    let mut acc = [T::zero(); LANES];
    let (cx, cy) = (xs.chunks_exact(LANES), ys.chunks_exact(LANES));
    let tail: T = cx.remainder().iter().zip(cy.remainder()).map(|(&x, &y)| x * y).sum();
    for (a, b) in cx.zip(cy) {
        for ((s, &x), &y) in acc.iter_mut().zip(a).zip(b) {
            *s += x * y;
        }
    }
    acc.iter().copied().sum::<T>() + tail
}

fn lane_sum<T: Real>(xs: &[T]) -> T {
    let mut acc = [T::zero(); LANES];
    let chunks = xs.chunks_exact(LANES);
    let tail: T = chunks.remainder().iter().copied().sum();
    for c in chunks {
        for (s, &x) in acc.iter_mut().zip(c) {
            *s += x;
        }
    }
    acc.iter().copied().sum::<T>() + tail
}

/// Softmax over every row of a standard-layout matrix, in place.
pub fn softmax_rows_in_place<T: Real>(s: &mut Array2<T>) {
    let n = s.ncols();
    let data = s.as_slice_mut().expect("standard layout");
    for row in data.chunks_exact_mut(n) {
        let max = lane_max(row);
        for v in row.iter_mut() {
            *v -= max;
        }
        T::exp_in_place(row);
        let inv = T::one() / lane_sum(row);
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
}

impl<T: Real> SelfAttention<T> {
    pub fn new(rng: &mut Rng) -> Self {
        let b = linear_bound(CHANNELS);
        Self {
            wq: Param::uniform((KEY_DIM, CHANNELS), b, rng),
            wk: Param::uniform((KEY_DIM, CHANNELS), b, rng),
            wv: Param::uniform((KEY_DIM, CHANNELS), b, rng),
            wz: Param::uniform((CHANNELS, KEY_DIM), linear_bound(KEY_DIM), rng),
            omega: Param::zeros(1),
        }
    }

    pub fn omega(&self) -> T {
        self.omega.value[0]
    }

    fn check(&self, x: ArrayView2<T>) -> Result<()> {
        if x.nrows() != CHANNELS || x.ncols() == 0 {
            return Err(Error::Input(format!("attention input has shape {:?}, expected {CHANNELS} x L", x.shape())));
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: ArrayView2<T>) -> Result<(Array2<T>, AttentionCache<T>)> {
        self.check(x)?;
        let q = self.wq.value.dot(&x);
        let k = self.wk.value.dot(&x);
        let v = self.wv.value.dot(&x);
        let mut a_t = k.t().dot(&q);
        softmax_rows_in_place(&mut a_t);
        let p = v.dot(&a_t.t());
        let o = self.wz.value.dot(&p);
        let w = self.omega();
        let mut y = x.to_owned();
        Zip::from(&mut y).and(&o).for_each(|y, &o| *y = w * o + *y);
        Ok((y, AttentionCache { q, k, v, a_t, p, o }))
    }

    /// Accumulates parameter gradients and returns `dL/dX`.
    pub fn backward(&mut self, x: ArrayView2<T>, cache: &AttentionCache<T>, dy: ArrayView2<T>) -> Result<Array2<T>> {
        if dy.shape() != x.shape() {
            return Err(Error::Input(format!("attention gradient shape {:?} vs input {:?}", dy.shape(), x.shape())));
        }
        let w = self.omega();
        let domega = Zip::from(&dy).and(&cache.o).fold(T::zero(), |acc, &d, &o| acc + d * o);
        self.omega.grad[0] += domega;

        let d_o = dy.mapv(|d| d * w);
        self.wz.grad += &d_o.dot(&cache.p.t());
        let dp = self.wz.value.t().dot(&d_o);
        let dv = dp.dot(&cache.a_t);
        // row j of ds_t is column j of dS: a ⊙ (da - <a, da>)
        let mut ds_t = dp.t().dot(&cache.v);
        let n = ds_t.ncols();
        let a = cache.a_t.as_slice().expect("standard layout");
        let d = ds_t.as_slice_mut().expect("standard layout");
        for (ra, rd) in a.chunks_exact(n).zip(d.chunks_exact_mut(n)) {
            let c = lane_dot(ra, rd);
            for (d, &a) in rd.iter_mut().zip(ra) {
                *d = a * (*d - c);
            }
        }
        let dq = cache.k.dot(&ds_t);
        let dk = cache.q.dot(&ds_t.t());
        self.wq.grad += &dq.dot(&x.t());
        self.wk.grad += &dk.dot(&x.t());
        self.wv.grad += &dv.dot(&x.t());
        let mut dx = dy.to_owned();
        dx += &self.wq.value.t().dot(&dq);
        dx += &self.wk.value.t().dot(&dk);
        dx += &self.wv.value.t().dot(&dv);
        Ok(dx)
    }
}

/// Largest `|column sum - 1|` of an attention map.
pub fn column_sum_error<T: Real>(a: ArrayView2<T>) -> f64 {
    a.sum_axis(Axis(0)).iter().map(|&s| (s - T::one()).abs().to_f64_lossy()).fold(0.0, f64::max)
}

impl<T: Real> Parameters<T> for SelfAttention<T> {
    fn params(&mut self) -> Vec<ParamRef<'_, T>> {
        vec![self.wq.view_mut(), self.wk.view_mut(), self.wv.view_mut(), self.wz.view_mut(), self.omega.view_mut()]
    }
}
