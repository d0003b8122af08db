//! The positioning network: a sparse-image branch with optional
//! self-attention, two small convolutional branches over the power and bin
//! matrices, and a fully connected head over their concatenation.

use mdfeat_core::features::{build_matrices, build_sparse_image, FeatureSet, NormalizationStats};
use mdfeat_core::rng::{derive_seed, rng_from_seed, tag, Rng};
use mdfeat_core::{Error, Real, Result};
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::attention::{AttentionCache, SelfAttention, CHANNELS};
use crate::layers::{relu_backward, relu_inplace, Conv2d, Mlp};
use crate::model::{head_loss, Head, Label, Model};
use crate::param::{relu_bound, ParamRef, Parameters};

/// Which branches are present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Branches {
    /// Power and bin matrices.
    pub dp: bool,
    /// Sparse image.
    pub si: bool,
    /// Self-attention on the sparse-image branch.
    pub sa: bool,
}

impl Branches {
    pub const ALL: Self = Self { dp: true, si: true, sa: true };

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.dp {
            parts.push("DP");
        }
        if self.si {
            parts.push("SI");
        }
        if self.sa {
            parts.push("SA");
        }
        parts.join("+")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnnConfig {
    pub sensors: usize,
    pub bins: usize,
    pub f: usize,
    pub head: Head,
    pub branches: Branches,
    pub si_channels: [usize; 2],
    pub dp_channels: [usize; 2],
    pub kernel: usize,
    pub hidden: Vec<usize>,
}

impl PnnConfig {
    pub fn new(sensors: usize, bins: usize, f: usize, head: Head) -> Self {
        Self {
            sensors,
            bins,
            f,
            head,
            branches: Branches::ALL,
            si_channels: [16, CHANNELS],
            dp_channels: [8, 16],
            kernel: 3,
            hidden: vec![128, 64],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.sensors == 0 || self.bins == 0 || self.f == 0 || self.f > self.bins {
            return bad(format!(
                "need 1 <= F <= N_b and M >= 1, got M={} N_b={} F={}",
                self.sensors, self.bins, self.f
            ));
        }
        if !self.branches.dp && !self.branches.si {
            return bad("at least one of the DP and SI branches must be enabled".into());
        }
        if self.branches.sa && !self.branches.si {
            return bad("self-attention needs the SI branch".into());
        }
        if self.si_channels[1] != CHANNELS {
            return bad(format!("the last sparse-image conv must have {CHANNELS} channels"));
        }
        if self.kernel.is_multiple_of(2) {
            return bad("kernel size must be odd".into());
        }
        if let Head::Classification { zones } = self.head {
            if zones < 2 {
                return bad("classification needs at least two zones".into());
            }
        }
        Ok(())
    }

    fn si_len(&self) -> usize {
        if self.branches.si {
            CHANNELS * self.sensors * self.bins
        } else {
            0
        }
    }

    fn dp_len(&self) -> usize {
        if self.branches.dp {
            self.dp_channels[1] * self.sensors * self.f
        } else {
            0
        }
    }

    pub fn concat_len(&self) -> usize {
        self.si_len() + 2 * self.dp_len()
    }
}

/// One sample as seen by the network.
#[derive(Debug, Clone, PartialEq)]
pub struct PnnInput<T> {
    /// `M x N_b` sparse image.
    pub image: Array2<T>,
    /// `M x F` powers.
    pub e: Array2<T>,
    /// `M x F` bins.
    pub b: Array2<T>,
}

impl<T: Real> PnnInput<T> {
    pub fn from_features(fs: &FeatureSet<T>, stats: &NormalizationStats<T>) -> Self {
        let (e, b) = build_matrices(fs, stats);
        Self { image: build_sparse_image(fs, stats), e, b }
    }
}

/// Two convolutions with ReLU on a single-channel map.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvStack<T> {
    pub c1: Conv2d<T>,
    pub c2: Conv2d<T>,
}

struct StackCache<T> {
    cols1: Array2<T>,
    h1: Array2<T>,
    cols2: Array2<T>,
    h2: Array2<T>,
}

impl<T: Real> ConvStack<T> {
    fn new(channels: [usize; 2], kernel: usize, rng1: &mut Rng, rng2: &mut Rng) -> Self {
        Self {
            c1: Conv2d::new(1, channels[0], kernel, relu_bound(kernel * kernel), rng1),
            c2: Conv2d::new(channels[0], channels[1], kernel, relu_bound(channels[0] * kernel * kernel), rng2),
        }
    }

    fn forward(&self, x: ArrayView2<T>, h: usize, w: usize) -> Result<Array2<T>> {
        let mut h1 = self.c1.forward(x, h, w)?;
        relu_inplace(&mut h1);
        let mut h2 = self.c2.forward(h1.view(), h, w)?;
        relu_inplace(&mut h2);
        Ok(h2)
    }

    fn forward_cached(&self, x: ArrayView2<T>, h: usize, w: usize) -> Result<StackCache<T>> {
        let (mut h1, cols1) = self.c1.forward_cached(x, h, w)?;
        relu_inplace(&mut h1);
        let (mut h2, cols2) = self.c2.forward_cached(h1.view(), h, w)?;
        relu_inplace(&mut h2);
        Ok(StackCache { cols1, h1, cols2, h2 })
    }

    fn backward(&mut self, cache: &StackCache<T>, mut dy: Array2<T>, h: usize, w: usize) -> Result<()> {
        relu_backward(cache.h2.view(), &mut dy);
        let mut d1 = self.c2.backward(&cache.cols2, dy.view(), h, w, true)?.expect("requested");
        relu_backward(cache.h1.view(), &mut d1);
        self.c1.backward(&cache.cols1, d1.view(), h, w, false)?;
        Ok(())
    }

    fn params(&mut self) -> Vec<ParamRef<'_, T>> {
        let mut p = self.c1.params();
        p.extend(self.c2.params());
        p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pnn<T> {
    pub config: PnnConfig,
    pub si: Option<ConvStack<T>>,
    pub attention: Option<SelfAttention<T>>,
    pub e_path: Option<ConvStack<T>>,
    pub b_path: Option<ConvStack<T>>,
    pub head: Mlp<T>,
}

/// Every layer draws its initial weights from its own stream, so toggling a
/// branch leaves the remaining weights unchanged.
mod layer_id {
    pub const SI1: u64 = 1;
    pub const SI2: u64 = 2;
    pub const ATTN: u64 = 3;
    pub const E1: u64 = 4;
    pub const E2: u64 = 5;
    pub const B1: u64 = 6;
    pub const B2: u64 = 7;
    pub const HEAD: u64 = 8;
}

/// Samples whose activations are held at once during training.
const CHUNK: usize = 16;

struct SampleCache<T> {
    si: Option<StackCache<T>>,
    attn: Option<AttentionCache<T>>,
    e: Option<StackCache<T>>,
    b: Option<StackCache<T>>,
}

impl<T: Real> Pnn<T> {
    pub fn new(config: PnnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let rng = |id: u64| rng_from_seed(derive_seed(seed, &[tag::MODEL_INIT, id]));
        let br = config.branches;
        let stack = |ch, a, b| ConvStack::new(ch, config.kernel, &mut rng(a), &mut rng(b));
        let si = br.si.then(|| stack(config.si_channels, layer_id::SI1, layer_id::SI2));
        let attention = br.sa.then(|| SelfAttention::new(&mut rng(layer_id::ATTN)));
        let e_path = br.dp.then(|| stack(config.dp_channels, layer_id::E1, layer_id::E2));
        let b_path = br.dp.then(|| stack(config.dp_channels, layer_id::B1, layer_id::B2));
        let mut widths = vec![config.concat_len()];
        widths.extend(&config.hidden);
        widths.push(config.head.width());
        let head = Mlp::new(&widths, &mut rng(layer_id::HEAD));
        Ok(Self { config, si, attention, e_path, b_path, head })
    }

    fn check(&self, x: &PnnInput<T>) -> Result<()> {
        let c = &self.config;
        if x.image.dim() != (c.sensors, c.bins) {
            return Err(Error::Input(format!(
                "sparse image is {:?}, model expects {}x{}",
                x.image.dim(),
                c.sensors,
                c.bins
            )));
        }
        if x.e.dim() != (c.sensors, c.f) || x.b.dim() != (c.sensors, c.f) {
            return Err(Error::Input(format!(
                "feature matrices are {:?} and {:?}, model expects {}x{} (F = {})",
                x.e.dim(),
                x.b.dim(),
                c.sensors,
                c.f,
                c.f
            )));
        }
        Ok(())
    }

    fn flat(m: &Array2<T>) -> ArrayView2<'_, T> {
        m.view().into_shape_with_order((1, m.len())).expect("contiguous")
    }

    /// Concatenated branch outputs for one sample.
    pub fn embed(&self, x: &PnnInput<T>) -> Result<Array1<T>> {
        self.check(x)?;
        let c = &self.config;
        let mut out = Vec::with_capacity(c.concat_len());
        if let Some(si) = &self.si {
            let mut h = si.forward(Self::flat(&x.image), c.sensors, c.bins)?;
            if let Some(att) = &self.attention {
                h = att.forward(h.view())?;
            }
            out.extend(h.iter().copied());
        }
        if let (Some(ep), Some(bp)) = (&self.e_path, &self.b_path) {
            out.extend(ep.forward(Self::flat(&x.e), c.sensors, c.f)?.iter().copied());
            out.extend(bp.forward(Self::flat(&x.b), c.sensors, c.f)?.iter().copied());
        }
        Ok(Array1::from(out))
    }

    fn embed_cached(&self, x: &PnnInput<T>) -> Result<(Array1<T>, SampleCache<T>)> {
        self.check(x)?;
        let c = &self.config;
        let mut out = Vec::with_capacity(c.concat_len());
        let mut cache = SampleCache { si: None, attn: None, e: None, b: None };
        if let Some(si) = &self.si {
            let sc = si.forward_cached(Self::flat(&x.image), c.sensors, c.bins)?;
            if let Some(att) = &self.attention {
                let (y, ac) = att.forward_cached(sc.h2.view())?;
                out.extend(y.iter().copied());
                cache.attn = Some(ac);
            } else {
                out.extend(sc.h2.iter().copied());
            }
            cache.si = Some(sc);
        }
        if let (Some(ep), Some(bp)) = (&self.e_path, &self.b_path) {
            let ec = ep.forward_cached(Self::flat(&x.e), c.sensors, c.f)?;
            let bc = bp.forward_cached(Self::flat(&x.b), c.sensors, c.f)?;
            out.extend(ec.h2.iter().copied());
            out.extend(bc.h2.iter().copied());
            cache.e = Some(ec);
            cache.b = Some(bc);
        }
        Ok((Array1::from(out), cache))
    }

    fn embed_backward(&mut self, cache: &SampleCache<T>, d: ArrayView1<T>) -> Result<()> {
        let c = self.config.clone();
        let (si_len, dp_len) = (c.si_len(), c.dp_len());
        let block = |from: usize, len: usize, rows: usize| {
            d.slice(s![from..from + len]).to_owned().into_shape_with_order((rows, len / rows)).expect("block size")
        };
        if let (Some(si), Some(sc)) = (self.si.as_mut(), cache.si.as_ref()) {
            let mut dh = block(0, si_len, CHANNELS);
            if let (Some(att), Some(ac)) = (self.attention.as_mut(), cache.attn.as_ref()) {
                dh = att.backward(sc.h2.view(), ac, dh.view())?;
            }
            si.backward(sc, dh, c.sensors, c.bins)?;
        }
        if let (Some(ep), Some(ec)) = (self.e_path.as_mut(), cache.e.as_ref()) {
            ep.backward(ec, block(si_len, dp_len, c.dp_channels[1]), c.sensors, c.f)?;
        }
        if let (Some(bp), Some(bc)) = (self.b_path.as_mut(), cache.b.as_ref()) {
            bp.backward(bc, block(si_len + dp_len, dp_len, c.dp_channels[1]), c.sensors, c.f)?;
        }
        Ok(())
    }

    fn embed_batch(&self, inputs: &[&PnnInput<T>]) -> Result<Array2<T>> {
        if inputs.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        let mut z = Array2::from_elem((inputs.len(), self.config.concat_len()), T::zero());
        for (mut row, x) in z.rows_mut().into_iter().zip(inputs) {
            row.assign(&self.embed(x)?);
        }
        Ok(z)
    }

    /// Class probabilities or coordinates for one sample.
    pub fn forward(&self, x: &PnnInput<T>) -> Result<Array1<T>> {
        let out = self.outputs(&[x])?;
        Ok(match self.config.head {
            Head::Classification { .. } => crate::layers::softmax_rows(out.view()).row(0).to_owned(),
            Head::Regression => out.row(0).to_owned(),
        })
    }
}

impl<T: Real> Parameters<T> for Pnn<T> {
    fn params(&mut self) -> Vec<ParamRef<'_, T>> {
        let mut p = Vec::new();
        if let Some(si) = self.si.as_mut() {
            p.extend(si.params());
        }
        if let Some(att) = self.attention.as_mut() {
            p.extend(att.params());
        }
        if let Some(ep) = self.e_path.as_mut() {
            p.extend(ep.params());
        }
        if let Some(bp) = self.b_path.as_mut() {
            p.extend(bp.params());
        }
        p.extend(self.head.params());
        p
    }
}

impl<T: Real> Model<T> for Pnn<T> {
    type Input = PnnInput<T>;

    fn head(&self) -> Head {
        self.config.head
    }

    fn outputs(&self, inputs: &[&PnnInput<T>]) -> Result<Array2<T>> {
        self.head.forward(self.embed_batch(inputs)?.view())
    }

    /// The batch runs in chunks so that only a few samples' branch
    /// activations are alive at once. Per-sample head gradients do not
    /// interact, so chunking only changes the summation order.
    fn accumulate(&mut self, inputs: &[&PnnInput<T>], labels: &[&Label<T>]) -> Result<T> {
        if inputs.is_empty() || inputs.len() != labels.len() {
            return Err(Error::Input(format!("{} inputs for {} labels", inputs.len(), labels.len())));
        }
        let total = T::lit(inputs.len() as f64);
        let mut loss = T::zero();
        for (xs, ys) in inputs.chunks(CHUNK).zip(labels.chunks(CHUNK)) {
            let mut z = Array2::from_elem((xs.len(), self.config.concat_len()), T::zero());
            let mut caches = Vec::with_capacity(xs.len());
            for (mut row, x) in z.rows_mut().into_iter().zip(xs) {
                let (e, c) = self.embed_cached(x)?;
                row.assign(&e);
                caches.push(c);
            }
            let (out, hc) = self.head.forward_cached(z.view())?;
            let (l, mut d) = head_loss(self.config.head, out.view(), ys)?;
            let share = T::lit(xs.len() as f64) / total;
            loss += l * share;
            d.mapv_inplace(|v| v * share);
            let dz = self.head.backward(&hc, d.view())?;
            for (cache, dzi) in caches.iter().zip(dz.axis_iter(Axis(0))) {
                self.embed_backward(cache, dzi)?;
            }
        }
        Ok(loss)
    }
}
