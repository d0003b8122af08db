//! Output heads, labels and the interface shared by trainable models.

use mdfeat_core::rng::{derive_seed, rng_from_seed, tag};
use mdfeat_core::{Error, Real, Result};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::layers::{mse, softmax_rows, softmax_xent, Mlp};
use crate::param::{ParamRef, Parameters};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Head {
    /// Softmax over zones.
    Classification { zones: usize },
    /// Linear 3-D coordinates.
    Regression,
}

impl Head {
    pub fn width(&self) -> usize {
        match *self {
            Head::Classification { zones } => zones,
            Head::Regression => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Label<T> {
    pub zone: usize,
    pub coords: [T; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction<T> {
    Zone { zone: usize, probs: Vec<T> },
    Coords([T; 3]),
}

impl<T: Real> Prediction<T> {
    pub fn zone(&self) -> Option<usize> {
        match self {
            Prediction::Zone { zone, .. } => Some(*zone),
            Prediction::Coords(_) => None,
        }
    }

    pub fn coords(&self) -> Option<[T; 3]> {
        match self {
            Prediction::Zone { .. } => None,
            Prediction::Coords(c) => Some(*c),
        }
    }
}

/// Mean loss of raw head outputs and its gradient.
pub fn head_loss<T: Real>(head: Head, out: ArrayView2<T>, labels: &[&Label<T>]) -> Result<(T, Array2<T>)> {
    match head {
        Head::Classification { .. } => {
            let zones: Vec<usize> = labels.iter().map(|l| l.zone).collect();
            softmax_xent(out, &zones)
        }
        Head::Regression => {
            let mut target = Array2::from_elem((labels.len(), 3), T::zero());
            for (mut row, l) in target.rows_mut().into_iter().zip(labels) {
                row.assign(&Array1::from(l.coords.to_vec()));
            }
            mse(out, target.view())
        }
    }
}

/// Turns raw head outputs into predictions. Ties in the argmax go to the
/// smaller zone.
pub fn decode<T: Real>(head: Head, out: ArrayView2<T>) -> Vec<Prediction<T>> {
    match head {
        Head::Classification { .. } => softmax_rows(out)
            .rows()
            .into_iter()
            .map(|r| {
                let zone = r.iter().enumerate().fold(0, |best, (i, &p)| if p > r[best] { i } else { best });
                Prediction::Zone { zone, probs: r.to_vec() }
            })
            .collect(),
        Head::Regression => out.rows().into_iter().map(|r| Prediction::Coords([r[0], r[1], r[2]])).collect(),
    }
}

pub trait Model<T: Real>: Parameters<T> {
    type Input;

    fn head(&self) -> Head;

    /// Raw head outputs, one row per input.
    fn outputs(&self, inputs: &[&Self::Input]) -> Result<Array2<T>>;

    /// Forward and backward pass over a batch. Gradients of the mean loss are
    /// added to the parameter gradients; the mean loss is returned.
    fn accumulate(&mut self, inputs: &[&Self::Input], labels: &[&Label<T>]) -> Result<T>;

    fn predict(&self, inputs: &[&Self::Input]) -> Result<Vec<Prediction<T>>> {
        Ok(decode(self.head(), self.outputs(inputs)?.view()))
    }
}

/// Fully connected baseline: three 50-unit ReLU layers and the head.
#[derive(Debug, Clone, PartialEq)]
pub struct Fcl<T> {
    pub mlp: Mlp<T>,
    pub head: Head,
}

pub const FCL_HIDDEN: [usize; 3] = [50, 50, 50];

impl<T: Real> Fcl<T> {
    pub fn new(inputs: usize, head: Head, seed: u64) -> Self {
        let mut widths = vec![inputs];
        widths.extend(FCL_HIDDEN);
        widths.push(head.width());
        let mut rng = rng_from_seed(derive_seed(seed, &[tag::MODEL_INIT]));
        Self { mlp: Mlp::new(&widths, &mut rng), head }
    }

    fn stack(&self, inputs: &[&Array1<T>]) -> Result<Array2<T>> {
        let d = self.mlp.inputs();
        if inputs.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        if let Some(x) = inputs.iter().find(|x| x.len() != d) {
            return Err(Error::Input(format!("feature length {} but the model expects {d}", x.len())));
        }
        let views: Vec<_> = inputs.iter().map(|x| x.view().insert_axis(Axis(0))).collect();
        Ok(ndarray::concatenate(Axis(0), &views).expect("equal widths"))
    }
}

impl<T: Real> Parameters<T> for Fcl<T> {
    fn params(&mut self) -> Vec<ParamRef<'_, T>> {
        self.mlp.params()
    }
}

impl<T: Real> Model<T> for Fcl<T> {
    type Input = Array1<T>;

    fn head(&self) -> Head {
        self.head
    }

    fn outputs(&self, inputs: &[&Array1<T>]) -> Result<Array2<T>> {
        self.mlp.forward(self.stack(inputs)?.view())
    }

    fn accumulate(&mut self, inputs: &[&Array1<T>], labels: &[&Label<T>]) -> Result<T> {
        let x = self.stack(inputs)?;
        let (out, cache) = self.mlp.forward_cached(x.view())?;
        let (loss, d) = head_loss(self.head, out.view(), labels)?;
        self.mlp.backward(&cache, d.view())?;
        Ok(loss)
    }
}
