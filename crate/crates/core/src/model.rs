//! Patch-wise point predictor and its training loop.
//!
//! Every scatter region sees the `3D x 3D` window of the image centered on
//! it (zero-padded at the border). One tanh hidden layer feeds two affine
//! heads: `N` objectness logits and `N` 2D offsets from the region center.
//! Gradients are computed by hand and checked against finite differences in
//! the tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convert::{filter_by_score, group_by_region, mask_to_points};
use crate::error::{Error, Result};
use crate::losses::{
    assign_and_loss, sigmoid, LossBreakdown, LossParams, RegionGrad, RegionPrediction,
};
use crate::types::{BinaryMask, Point, RegionGrid, ScoreMap, ScoredPoint};

/// Shape of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub downsample: usize,
    pub slots: usize,
    pub hidden: usize,
}

impl ModelShape {
    /// Side of the square context window.
    pub fn window(&self) -> usize {
        3 * self.downsample
    }

    pub fn inputs(&self) -> usize {
        self.window() * self.window()
    }

    fn offsets(&self) -> Layout {
        let (i, h, n) = (self.inputs(), self.hidden, self.slots);
        let w1 = 0;
        let b1 = w1 + h * i;
        let w_obj = b1 + h;
        let b_obj = w_obj + n * h;
        let w_loc = b_obj + n;
        let b_loc = w_loc + 2 * n * h;
        let end = b_loc + 2 * n;
        Layout {
            w1,
            b1,
            w_obj,
            b_obj,
            w_loc,
            b_loc,
            end,
        }
    }

    pub fn num_params(&self) -> usize {
        self.offsets().end
    }
}

/// Offsets of each tensor inside the flat parameter vector. Matrices are
/// row-major with one row per output unit.
#[derive(Debug, Clone, Copy)]
struct Layout {
    w1: usize,
    b1: usize,
    w_obj: usize,
    b_obj: usize,
    w_loc: usize,
    b_loc: usize,
    end: usize,
}

/// Weights of the predictor, stored flat in the order
/// `w1 (hidden x inputs), b1, w_obj (N x hidden), b_obj, w_loc (2N x hidden), b_loc`.
/// Offset rows `2j` and `2j + 1` are the row and column displacement of slot `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    shape: ModelShape,
    values: Vec<f64>,
}

/// Gradient with the same layout as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub values: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(shape: ModelShape) -> Result<Self> {
        if shape.hidden == 0 || shape.slots == 0 || shape.downsample == 0 {
            return Err(Error::Parameter(format!(
                "model shape must be positive, got {shape:?}"
            )));
        }
        Ok(Self {
            shape,
            values: vec![0.0; shape.num_params()],
        })
    }

    pub fn from_values(shape: ModelShape, values: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(shape)?;
        if values.len() != p.values.len() {
            return Err(Error::Dimension(format!(
                "{} parameter values for a shape needing {}",
                values.len(),
                p.values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("non-finite parameter value".into()));
        }
        p.values = values;
        Ok(p)
    }

    pub fn shape(&self) -> ModelShape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Order-sensitive hash of the parameter bits; ties a forward pass to
    /// the exact weights that produced it.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.values {
            h ^= v.to_bits();
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

/// Initial objectness prior; biases start at `logit(0.1)`.
pub const INITIAL_SCORE: f64 = 0.1;

/// Uniform `+-1/sqrt(fan_in)` weights, zero offset biases, and objectness
/// biases at the initial score prior.
pub fn init_params(
    seed: u64,
    downsample: usize,
    slots: usize,
    hidden: usize,
) -> Result<ModelParams> {
    let shape = ModelShape {
        downsample,
        slots,
        hidden,
    };
    let mut p = ModelParams::zeros(shape)?;
    let l = shape.offsets();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fill = |values: &mut [f64], fan_in: usize| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        for v in values {
            *v = rng.gen_range(-bound..bound);
        }
    };
    fill(&mut p.values[l.w1..l.b1], shape.inputs());
    fill(&mut p.values[l.w_obj..l.b_obj], hidden);
    fill(&mut p.values[l.w_loc..l.b_loc], hidden);
    let prior = (INITIAL_SCORE / (1.0 - INITIAL_SCORE)).ln();
    p.values[l.b_obj..l.w_loc].fill(prior);
    Ok(p)
}

/// Cached activations of one forward pass over an image.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    grid: RegionGrid,
    fingerprint: u64,
    /// Per region: the context window, row-major.
    inputs: Vec<Vec<f64>>,
    /// Per region: tanh activations.
    hidden: Vec<Vec<f64>>,
    pub predictions: Vec<RegionPrediction>,
}

impl ForwardPass {
    pub fn grid(&self) -> &RegionGrid {
        &self.grid
    }

    /// All predicted points with their scores, region-major.
    pub fn scored_points(&self) -> Vec<ScoredPoint> {
        self.predictions
            .iter()
            .flat_map(|p| {
                p.points.iter().zip(&p.logits).map(|(pt, &z)| ScoredPoint {
                    point: *pt,
                    score: sigmoid(z),
                })
            })
            .collect()
    }
}

fn context_window(image: &ScoreMap, grid: &RegionGrid, row: usize, col: usize, out: &mut Vec<f64>) {
    let d = grid.downsample() as isize;
    let (r0, c0) = (row as isize * d - d, col as isize * d - d);
    out.clear();
    for r in r0..r0 + 3 * d {
        for c in c0..c0 + 3 * d {
            out.push(image.get_padded(r, c));
        }
    }
}

fn affine(weights: &[f64], bias: &[f64], x: &[f64], out: &mut Vec<f64>) {
    out.clear();
    for (row, &b) in weights.chunks_exact(x.len()).zip(bias) {
        out.push(b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>());
    }
}

pub fn forward(params: &ModelParams, image: &ScoreMap, grid: &RegionGrid) -> Result<ForwardPass> {
    if image.height() != grid.image_height() || image.width() != grid.image_width() {
        return Err(Error::Dimension(format!(
            "image {}x{} does not match grid {}x{}",
            image.height(),
            image.width(),
            grid.image_height(),
            grid.image_width()
        )));
    }
    if grid.downsample() != params.shape.downsample {
        return Err(Error::Dimension(format!(
            "grid downsample {} does not match model downsample {}",
            grid.downsample(),
            params.shape.downsample
        )));
    }
    let l = params.shape.offsets();
    let v = &params.values;
    let n = params.shape.slots;
    let regions = grid.num_regions();
    let mut pass = ForwardPass {
        grid: *grid,
        fingerprint: params.fingerprint(),
        inputs: Vec::with_capacity(regions),
        hidden: Vec::with_capacity(regions),
        predictions: Vec::with_capacity(regions),
    };
    let mut offsets = Vec::with_capacity(2 * n);
    for idx in grid.regions() {
        let mut x = Vec::with_capacity(params.shape.inputs());
        context_window(image, grid, idx.row, idx.col, &mut x);
        let mut hid = Vec::with_capacity(params.shape.hidden);
        affine(&v[l.w1..l.b1], &v[l.b1..l.w_obj], &x, &mut hid);
        for a in &mut hid {
            *a = a.tanh();
        }
        let mut logits = Vec::with_capacity(n);
        affine(
            &v[l.w_obj..l.b_obj],
            &v[l.b_obj..l.w_loc],
            &hid,
            &mut logits,
        );
        affine(&v[l.w_loc..l.b_loc], &v[l.b_loc..l.end], &hid, &mut offsets);
        let center = grid.region_center(idx)?;
        let points = offsets
            .chunks_exact(2)
            .map(|o| Point::new(center.x + o[0], center.y + o[1]))
            .collect();
        pass.inputs.push(x);
        pass.hidden.push(hid);
        pass.predictions.push(RegionPrediction { logits, points });
    }
    Ok(pass)
}

/// Accumulates the parameter gradient of one forward pass into `grads`.
pub fn backward_into(
    params: &ModelParams,
    pass: &ForwardPass,
    loss_grads: &[RegionGrad],
    grads: &mut ParamGrads,
) -> Result<()> {
    if pass.fingerprint != params.fingerprint() {
        return Err(Error::Contract(
            "forward pass was computed with different parameters".into(),
        ));
    }
    let n = params.shape.slots;
    if loss_grads.len() != pass.predictions.len()
        || loss_grads
            .iter()
            .any(|g| g.logits.len() != n || g.points.len() != n)
    {
        return Err(Error::Contract(
            "loss gradients do not match the forward pass".into(),
        ));
    }
    if grads.values.len() != params.values.len() {
        return Err(Error::Dimension(
            "gradient buffer has the wrong size".into(),
        ));
    }
    let l = params.shape.offsets();
    let v = &params.values;
    let h = params.shape.hidden;
    let inputs = params.shape.inputs();
    let g = &mut grads.values;
    let mut d_hidden = vec![0.0; h];
    let mut d_offsets = vec![0.0; 2 * n];
    for ((x, hid), lg) in pass.inputs.iter().zip(&pass.hidden).zip(loss_grads) {
        for (j, p) in lg.points.iter().enumerate() {
            d_offsets[2 * j] = p[0];
            d_offsets[2 * j + 1] = p[1];
        }
        if lg.logits.iter().all(|&v| v == 0.0) && d_offsets.iter().all(|&v| v == 0.0) {
            continue;
        }
        d_hidden.fill(0.0);
        for (o, &dz) in lg.logits.iter().enumerate() {
            if dz == 0.0 {
                continue;
            }
            g[l.b_obj + o] += dz;
            let row = l.w_obj + o * h;
            for k in 0..h {
                g[row + k] += dz * hid[k];
                d_hidden[k] += dz * v[row + k];
            }
        }
        for (o, &dz) in d_offsets.iter().enumerate() {
            if dz == 0.0 {
                continue;
            }
            g[l.b_loc + o] += dz;
            let row = l.w_loc + o * h;
            for k in 0..h {
                g[row + k] += dz * hid[k];
                d_hidden[k] += dz * v[row + k];
            }
        }
        for k in 0..h {
            let da = d_hidden[k] * (1.0 - hid[k] * hid[k]);
            if da == 0.0 {
                continue;
            }
            g[l.b1 + k] += da;
            let row = l.w1 + k * inputs;
            for (gw, xi) in g[row..row + inputs].iter_mut().zip(x) {
                *gw += da * xi;
            }
        }
    }
    Ok(())
}

pub fn backward(
    params: &ModelParams,
    pass: &ForwardPass,
    loss_grads: &[RegionGrad],
) -> Result<ParamGrads> {
    let mut grads = ParamGrads {
        values: vec![0.0; params.values.len()],
    };
    backward_into(params, pass, loss_grads, &mut grads)?;
    Ok(grads)
}

/// Forward pass and score filtering: every point scoring at least
/// `threshold`, region-major.
pub fn predict(
    params: &ModelParams,
    image: &ScoreMap,
    grid: &RegionGrid,
    threshold: f64,
) -> Result<Vec<ScoredPoint>> {
    let pass = forward(params, image, grid)?;
    Ok(filter_by_score(&pass.scored_points(), threshold))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub downsample: usize,
    pub points_per_region: usize,
    pub hidden: usize,
    pub loss: LossParams,
    pub inference_threshold: f64,
    pub learning_rate: f64,
    /// Decay the learning rate to zero along a half cosine over `iterations`.
    pub cosine_schedule: bool,
    pub momentum: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            downsample: 4,
            points_per_region: 16,
            hidden: 32,
            loss: LossParams::default(),
            inference_threshold: 0.1,
            learning_rate: 0.02,
            cosine_schedule: true,
            momentum: 0.9,
            iterations: 3000,
            batch_size: 4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.downsample == 0 || self.points_per_region == 0 || self.hidden == 0 {
            return Err(Error::Parameter("model sizes must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch size must be positive".into()));
        }
        if self.learning_rate.is_nan()
            || self.learning_rate < 0.0
            || !(0.0..1.0).contains(&self.momentum)
        {
            return Err(Error::Parameter(format!(
                "learning rate {} / momentum {} out of range",
                self.learning_rate, self.momentum
            )));
        }
        if !(0.0..=1.0).contains(&self.inference_threshold) {
            return Err(Error::Parameter(
                "inference threshold outside [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// One training image with its target mask (tube mask or centerline).
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub image: ScoreMap,
    pub target: BinaryMask,
}

/// A training sample with its target already split into regions.
#[derive(Debug, Clone)]
struct PreparedSample {
    image: ScoreMap,
    gts: Vec<Vec<Point>>,
}

/// Stateful SGD-with-momentum trainer; [`train`] drives it to completion.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    grid: RegionGrid,
    params: ModelParams,
    velocity: Vec<f64>,
    data: Vec<PreparedSample>,
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
    step: usize,
}

impl Trainer {
    pub fn new(dataset: &[TrainSample], config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let first = dataset
            .first()
            .ok_or_else(|| Error::Parameter("empty training set".into()))?;
        let grid = RegionGrid::new(first.image.height(), first.image.width(), config.downsample)?;
        let n = config.points_per_region;
        let mut data = Vec::with_capacity(dataset.len());
        for (i, s) in dataset.iter().enumerate() {
            if s.image.height() != grid.image_height()
                || s.image.width() != grid.image_width()
                || !(s.target.height() == s.image.height() && s.target.width() == s.image.width())
            {
                return Err(Error::Dimension(format!("sample {i} has a different size")));
            }
            let sets = group_by_region(&mask_to_points(&s.target), &grid)?;
            for idx in grid.regions() {
                let k = sets.get(idx).len();
                if k > n {
                    return Err(Error::Capacity(format!(
                        "sample {i} region ({}, {}) has {k} points but only {n} slots",
                        idx.row, idx.col
                    )));
                }
            }
            data.push(PreparedSample {
                image: s.image.clone(),
                gts: sets.regions().to_vec(),
            });
        }
        let params = init_params(config.seed, config.downsample, n, config.hidden)?;
        let velocity = vec![0.0; params.values.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x05ee_d0fb_a7c4);
        let mut order: Vec<usize> = (0..data.len()).collect();
        shuffle(&mut order, &mut rng);
        Ok(Self {
            config: *config,
            grid,
            params,
            velocity,
            data,
            order,
            cursor: 0,
            rng,
            step: 0,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn grid(&self) -> &RegionGrid {
        &self.grid
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    fn next_batch(&mut self) -> Vec<usize> {
        let mut batch = Vec::with_capacity(self.config.batch_size);
        while batch.len() < self.config.batch_size.min(self.data.len()) {
            if self.cursor == self.order.len() {
                shuffle(&mut self.order, &mut self.rng);
                self.cursor = 0;
            }
            batch.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        batch
    }

    /// Loss and gradient of the current parameters on the given samples,
    /// normalized by their GT points together.
    fn loss_and_grad(&self, batch: &[usize]) -> Result<(LossBreakdown, ParamGrads)> {
        let mut passes = Vec::with_capacity(batch.len());
        let mut gts = Vec::new();
        let mut preds = Vec::new();
        for &i in batch {
            let pass = forward(&self.params, &self.data[i].image, &self.grid)?;
            gts.extend(self.data[i].gts.iter().cloned());
            preds.extend(pass.predictions.iter().cloned());
            passes.push(pass);
        }
        let out = assign_and_loss(&gts, &preds, &self.config.loss)?;
        let mut grads = ParamGrads {
            values: vec![0.0; self.params.values.len()],
        };
        let regions = self.grid.num_regions();
        for (b, pass) in passes.iter().enumerate() {
            let lg = &out.grads[b * regions..(b + 1) * regions];
            backward_into(&self.params, pass, lg, &mut grads)?;
        }
        Ok((out.breakdown, grads))
    }

    /// One SGD step on the next batch.
    pub fn step(&mut self) -> Result<LossBreakdown> {
        let batch = self.next_batch();
        let (loss, grads) = self.loss_and_grad(&batch)?;
        if !loss.total.is_finite() || grads.values.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence(format!(
                "non-finite loss or gradient at step {} (objectness {}, regression {})",
                self.step, loss.objectness, loss.regression
            )));
        }
        let (lr, mu) = (self.learning_rate(), self.config.momentum);
        for ((p, v), g) in self
            .params
            .values
            .iter_mut()
            .zip(&mut self.velocity)
            .zip(&grads.values)
        {
            *v = mu * *v + g;
            *p -= lr * *v;
        }
        self.step += 1;
        Ok(loss)
    }

    /// Learning rate used by the next step.
    pub fn learning_rate(&self) -> f64 {
        let base = self.config.learning_rate;
        if !self.config.cosine_schedule || self.config.iterations == 0 {
            return base;
        }
        let t = (self.step as f64 / self.config.iterations as f64).min(1.0);
        0.5 * base * (1.0 + (std::f64::consts::PI * t).cos())
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }
}

/// Fisher-Yates with the trainer's generator.
fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}

/// Trains for `config.iterations` steps; returns the final parameters and
/// the loss of every step.
pub fn train(
    dataset: &[TrainSample],
    config: &TrainConfig,
) -> Result<(ModelParams, Vec<LossBreakdown>)> {
    let mut trainer = Trainer::new(dataset, config)?;
    let mut history = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        history.push(trainer.step()?);
    }
    Ok((trainer.into_params(), history))
}

/// Serialized model: `b"PSCMODEL"`, `u32` LE format version, `u32` LE
/// header length, UTF-8 JSON header, then every parameter as `f64` LE in
/// the flat layout order.
pub const MODEL_MAGIC: &[u8; 8] = b"PSCMODEL";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub version: u32,
    pub downsample: usize,
    pub slots: usize,
    pub hidden: usize,
    pub window: usize,
    pub num_params: usize,
    pub layout: Vec<String>,
}

impl ModelParams {
    pub fn header(&self) -> ModelHeader {
        let s = self.shape;
        ModelHeader {
            version: MODEL_FORMAT_VERSION,
            downsample: s.downsample,
            slots: s.slots,
            hidden: s.hidden,
            window: s.window(),
            num_params: s.num_params(),
            layout: vec![
                format!("w1:{}x{}", s.hidden, s.inputs()),
                format!("b1:{}", s.hidden),
                format!("w_obj:{}x{}", s.slots, s.hidden),
                format!("b_obj:{}", s.slots),
                format!("w_loc:{}x{}", 2 * s.slots, s.hidden),
                format!("b_loc:{}", 2 * s.slots),
            ],
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header()).expect("header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + 8 * self.values.len());
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Parameter(format!("malformed model file: {m}"));
        if bytes.len() < 16 || &bytes[..8] != MODEL_MAGIC {
            return Err(bad("missing magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != MODEL_FORMAT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let header_len = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
        let body = 16 + header_len;
        if bytes.len() < body {
            return Err(bad("truncated header"));
        }
        let header: ModelHeader =
            serde_json::from_slice(&bytes[16..body]).map_err(|e| bad(&e.to_string()))?;
        let shape = ModelShape {
            downsample: header.downsample,
            slots: header.slots,
            hidden: header.hidden,
        };
        if header.num_params != shape.num_params() || header.window != shape.window() {
            return Err(bad("header shape is inconsistent"));
        }
        let payload = &bytes[body..];
        if payload.len() != 8 * header.num_params {
            return Err(bad("parameter payload has the wrong length"));
        }
        let values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Self::from_values(shape, values)
    }
}
