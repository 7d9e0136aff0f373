//! Fully-connected residual network `u_DNN(t, x, p; θ)`.
//!
//! Hidden layer 1 is a plain dense layer. After it, every group of `block_size`
//! hidden layers forms a building block whose last layer adds the block input
//! before its activation:
//!
//! ```text
//! y(i) = σ( y(i-1) W_i + b_i + y(i-r) [W_s] )      for block-closing layers i
//! ```
//!
//! With `r = 2` the shortcuts connect hidden layers 1→3, 3→5, ... Trailing layers
//! that do not fill a whole block are plain dense layers. The output layer is
//! affine with no activation. A projection `W_s` is allocated only when the two
//! widths joined by a shortcut differ.
//!
//! `num_layers` counts hidden layers only; the input and output maps are extra.
//!
//! Two evaluation paths share one flat parameter vector:
//! * [`forward`] / [`forward_jet`] evaluate one point with plain loops, the jet path
//!   reproducing the value path bit for bit;
//! * [`forward_batch`] evaluates a batch of points together with first and
//!   second derivatives along a set of input coordinates, stacked as extra rows of
//!   one matrix so each layer is a single matrix product, and keeps the
//!   intermediates needed by [`BatchCache::backward`] to pull output adjoints
//!   back to parameter gradients.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{GradientMap, Jet2};
use crate::error::{Error, Result};

/// Element-wise nonlinearity of the hidden layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sin,
    /// Piecewise linear: its second derivative vanishes, so it cannot represent
    /// second-order operators.
    Relu,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sin => "sin",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "tanh" => Ok(Activation::Tanh),
            "sin" => Ok(Activation::Sin),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::config(format!("unknown activation '{other}'"))),
        }
    }

    /// Whether second derivatives through the activation carry information.
    pub fn is_smooth(&self) -> bool {
        !matches!(self, Activation::Relu)
    }

    #[inline]
    fn value(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sin => z.sin(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// `(σ, σ', σ'', σ''')` at `z`.
    #[inline]
    fn derivatives(self, z: f64) -> [f64; 4] {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                let s1 = 1.0 - t * t;
                [t, s1, -2.0 * t * s1, s1 * (6.0 * t * t - 2.0)]
            }
            Activation::Sin => {
                let (s, c) = z.sin_cos();
                [s, c, -s, -c]
            }
            Activation::Relu => {
                if z > 0.0 {
                    [z, 1.0, 0.0, 0.0]
                } else {
                    [0.0, 0.0, 0.0, 0.0]
                }
            }
        }
    }

    #[inline]
    fn jet(self, z: Jet2<f64>) -> Jet2<f64> {
        let [s0, s1, s2, _] = self.derivatives(z.v);
        // value component goes through `value` so it agrees bitwise with `forward`
        let v = self.value(z.v);
        debug_assert!(v == s0 || v.is_nan());
        z.chain(v, s1, s2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    /// Length of the input vector: time (transient problems), space, then the `d` random parameters.
    pub input_dim: usize,
    /// Width of each hidden layer; its length is the number of hidden layers.
    pub widths: Vec<usize>,
    /// Hidden layers per building block (`r`).
    pub block_size: usize,
    pub activation: Activation,
}

impl NetworkConfig {
    /// `num_layers` hidden layers of equal width, `r = 2`, Tanh.
    pub fn uniform(input_dim: usize, width: usize, num_layers: usize) -> Self {
        NetworkConfig {
            input_dim,
            widths: vec![width; num_layers],
            block_size: 2,
            activation: Activation::Tanh,
        }
    }

    pub fn with_block_size(mut self, r: usize) -> Self {
        self.block_size = r;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("network input dimension must be positive"));
        }
        if self.widths.is_empty() {
            return Err(Error::config("network needs at least one hidden layer"));
        }
        if self.widths.contains(&0) {
            return Err(Error::config("hidden layer widths must be positive"));
        }
        if self.block_size == 0 {
            return Err(Error::config("block size must be positive"));
        }
        Ok(())
    }

    /// Hidden layer (1-based) whose output feeds the shortcut into `layer`, if any.
    pub fn shortcut_source(&self, layer: usize) -> Option<usize> {
        let r = self.block_size;
        if layer > r && layer <= self.num_layers() && (layer - 1).is_multiple_of(r) {
            Some(layer - r)
        } else {
            None
        }
    }

    /// Parameter count from widths alone, without building a layout.
    pub fn param_count(&self) -> usize {
        let mut count = 0;
        let mut fan_in = self.input_dim;
        for (i, &w) in self.widths.iter().enumerate() {
            count += (fan_in + 1) * w;
            if let Some(src) = self.shortcut_source(i + 1) {
                let src_w = self.widths[src - 1];
                if src_w != w {
                    count += src_w * w;
                }
            }
            fan_in = w;
        }
        count + fan_in + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Block2 {
    offset: usize,
    rows: usize,
    cols: usize,
}

impl Block2 {
    fn len(&self) -> usize {
        self.rows * self.cols
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LayerLayout {
    weight: Block2,
    bias: usize,
    /// `(source layer index (0-based), projection block if widths differ)`
    shortcut: Option<(usize, Option<Block2>)>,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    layers: Vec<LayerLayout>,
    out_weight: usize,
    out_bias: usize,
    len: usize,
}

impl Layout {
    fn new(config: &NetworkConfig) -> Self {
        let mut offset = 0;
        let mut layers = Vec::with_capacity(config.num_layers());
        let mut fan_in = config.input_dim;
        for (i, &w) in config.widths.iter().enumerate() {
            let weight = Block2 {
                offset,
                rows: fan_in,
                cols: w,
            };
            offset += weight.len();
            let bias = offset;
            offset += w;
            let shortcut = config.shortcut_source(i + 1).map(|src| {
                let src_w = config.widths[src - 1];
                let proj = (src_w != w).then(|| {
                    let b = Block2 {
                        offset,
                        rows: src_w,
                        cols: w,
                    };
                    offset += b.len();
                    b
                });
                (src - 1, proj)
            });
            layers.push(LayerLayout { weight, bias, shortcut });
            fan_in = w;
        }
        let out_weight = offset;
        offset += fan_in;
        let out_bias = offset;
        offset += 1;
        Layout {
            layers,
            out_weight,
            out_bias,
            len: offset,
        }
    }
}

/// One dense hidden layer in structured form.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub projection: Option<Array2<f64>>,
}

/// All network parameters as separate matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredParams {
    pub layers: Vec<DenseLayer>,
    pub output_weight: Array1<f64>,
    pub output_bias: f64,
}

/// The parameter vector θ with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    config: NetworkConfig,
    layout: Layout,
    flat: Vec<f64>,
}

impl NetworkParams {
    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let flat = vec![0.0; layout.len];
        Ok(NetworkParams { config, layout, flat })
    }

    pub fn from_flat(config: NetworkConfig, flat: Vec<f64>) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        if flat.len() != params.flat.len() {
            return Err(Error::usage(format!(
                "expected {} parameters, got {}",
                params.flat.len(),
                flat.len()
            )));
        }
        params.flat = flat;
        Ok(params)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.flat
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    fn block(&self, b: Block2) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((b.rows, b.cols), &self.flat[b.offset..b.offset + b.len()])
            .expect("layout block inside parameter vector")
    }

    /// Weight of hidden layer `layer` (0-based), shaped `fan_in x width`.
    pub fn weight(&self, layer: usize) -> ArrayView2<'_, f64> {
        self.block(self.layout.layers[layer].weight)
    }

    pub fn bias(&self, layer: usize) -> ArrayView1<'_, f64> {
        let l = &self.layout.layers[layer];
        ArrayView1::from(&self.flat[l.bias..l.bias + l.weight.cols])
    }

    pub fn projection(&self, layer: usize) -> Option<ArrayView2<'_, f64>> {
        match self.layout.layers[layer].shortcut {
            Some((_, Some(b))) => Some(self.block(b)),
            _ => None,
        }
    }

    pub fn output_weight(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.flat[self.layout.out_weight..self.layout.out_bias])
    }

    pub fn output_bias(&self) -> f64 {
        self.flat[self.layout.out_bias]
    }

    /// Flat index range of hidden layer `layer`'s weights, bias and projection.
    pub fn layer_ranges(&self, layer: usize) -> Vec<std::ops::Range<usize>> {
        let l = &self.layout.layers[layer];
        let mut ranges = vec![
            l.weight.offset..l.weight.offset + l.weight.len(),
            l.bias..l.bias + l.weight.cols,
        ];
        if let Some((_, Some(b))) = l.shortcut {
            ranges.push(b.offset..b.offset + b.len());
        }
        ranges
    }

    /// Flat index of the output bias.
    pub fn output_bias_index(&self) -> usize {
        self.layout.out_bias
    }

    pub fn structured(&self) -> StructuredParams {
        let layers = (0..self.config.num_layers())
            .map(|i| DenseLayer {
                weight: self.weight(i).to_owned(),
                bias: self.bias(i).to_owned(),
                projection: self.projection(i).map(|p| p.to_owned()),
            })
            .collect();
        StructuredParams {
            layers,
            output_weight: self.output_weight().to_owned(),
            output_bias: self.output_bias(),
        }
    }

    pub fn from_structured(config: NetworkConfig, s: &StructuredParams) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        if s.layers.len() != params.layout.layers.len() {
            return Err(Error::usage("layer count does not match the configuration"));
        }
        let mismatch = || Error::usage("structured parameter shapes do not match the configuration");
        for (l, layer) in params.layout.layers.clone().iter().zip(&s.layers) {
            if layer.weight.dim() != (l.weight.rows, l.weight.cols) || layer.bias.len() != l.weight.cols {
                return Err(mismatch());
            }
            copy_into(&mut params.flat, l.weight.offset, layer.weight.iter());
            copy_into(&mut params.flat, l.bias, layer.bias.iter());
            match (l.shortcut, &layer.projection) {
                (Some((_, Some(b))), Some(p)) if p.dim() == (b.rows, b.cols) => {
                    copy_into(&mut params.flat, b.offset, p.iter())
                }
                (Some((_, Some(_))), _) | (_, Some(_)) => return Err(mismatch()),
                _ => {}
            }
        }
        if s.output_weight.len() != params.layout.out_bias - params.layout.out_weight {
            return Err(mismatch());
        }
        let ow = params.layout.out_weight;
        copy_into(&mut params.flat, ow, s.output_weight.iter());
        let ob = params.layout.out_bias;
        params.flat[ob] = s.output_bias;
        Ok(params)
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.config.input_dim {
            return Err(Error::usage(format!(
                "network expects {} inputs, got {len}",
                self.config.input_dim
            )));
        }
        Ok(())
    }
}

fn copy_into<'a>(dst: &mut [f64], offset: usize, src: impl Iterator<Item = &'a f64>) {
    for (d, s) in dst[offset..].iter_mut().zip(src) {
        *d = *s;
    }
}

/// Glorot-uniform weights `U(-√(6/(fan_in+fan_out)), +√(...))`, zero biases.
pub fn init_params(config: &NetworkConfig, seed: u64) -> Result<NetworkParams> {
    let mut params = NetworkParams::zeros(config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks: Vec<Block2> = Vec::new();
    for l in &params.layout.layers {
        blocks.push(l.weight);
        if let Some((_, Some(b))) = l.shortcut {
            blocks.push(b);
        }
    }
    let last = *config.widths.last().expect("validated");
    blocks.push(Block2 {
        offset: params.layout.out_weight,
        rows: last,
        cols: 1,
    });
    for b in blocks {
        let limit = (6.0 / (b.rows + b.cols) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        for w in &mut params.flat[b.offset..b.offset + b.len()] {
            *w = dist.sample(&mut rng);
        }
    }
    Ok(params)
}

/// Minimal arithmetic needed by the single-point evaluator.
trait Lane: Copy {
    fn constant(c: f64) -> Self;
    fn mul_add_weight(self, x: Self, w: f64) -> Self;
    fn plus(self, other: Self) -> Self;
    fn activate(self, act: Activation) -> Self;
}

impl Lane for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    #[inline]
    fn mul_add_weight(self, x: Self, w: f64) -> Self {
        self + x * w
    }
    fn plus(self, other: Self) -> Self {
        self + other
    }
    fn activate(self, act: Activation) -> Self {
        act.value(self)
    }
}

impl Lane for Jet2<f64> {
    fn constant(c: f64) -> Self {
        Jet2::constant(c)
    }
    #[inline]
    fn mul_add_weight(self, x: Self, w: f64) -> Self {
        Jet2 {
            v: self.v + x.v * w,
            d1: self.d1 + x.d1 * w,
            d2: self.d2 + x.d2 * w,
        }
    }
    fn plus(self, other: Self) -> Self {
        self + other
    }
    fn activate(self, act: Activation) -> Self {
        act.jet(self)
    }
}

fn forward_lanes<T: Lane>(params: &NetworkParams, input: Vec<T>) -> T {
    let act = params.config.activation;
    let mut outputs: Vec<Vec<T>> = Vec::with_capacity(params.config.num_layers());
    let mut y = input;
    for (i, l) in params.layout.layers.iter().enumerate() {
        let w = params.weight(i);
        let b = params.bias(i);
        let mut z: Vec<T> = b.iter().map(|&bi| T::constant(bi)).collect();
        for (r, &yr) in y.iter().enumerate() {
            for (c, zc) in z.iter_mut().enumerate() {
                *zc = zc.mul_add_weight(yr, w[[r, c]]);
            }
        }
        if let Some((src, proj)) = l.shortcut {
            let s = &outputs[src];
            match proj {
                None => {
                    for (zc, sc) in z.iter_mut().zip(s) {
                        *zc = zc.plus(*sc);
                    }
                }
                Some(_) => {
                    let p = params.projection(i).expect("projection present");
                    let mut shortcut = vec![T::constant(0.0); z.len()];
                    for (r, &sr) in s.iter().enumerate() {
                        for (c, pc) in shortcut.iter_mut().enumerate() {
                            *pc = pc.mul_add_weight(sr, p[[r, c]]);
                        }
                    }
                    for (zc, pc) in z.iter_mut().zip(shortcut) {
                        *zc = zc.plus(pc);
                    }
                }
            }
        }
        let a: Vec<T> = z.into_iter().map(|zc| zc.activate(act)).collect();
        outputs.push(a.clone());
        y = a;
    }
    let wo = params.output_weight();
    let mut u = T::constant(params.output_bias());
    for (r, &yr) in y.iter().enumerate() {
        u = u.mul_add_weight(yr, wo[r]);
    }
    u
}

/// Network output at one input point.
pub fn forward(params: &NetworkParams, input: &[f64]) -> Result<f64> {
    params.check_input(input.len())?;
    Ok(forward_lanes(params, input.to_vec()))
}

/// Network output with first and second derivatives along input coordinate `direction`.
///
/// The value component equals [`forward`] exactly.
pub fn forward_jet(params: &NetworkParams, input: &[f64], direction: usize) -> Result<Jet2<f64>> {
    params.check_input(input.len())?;
    if direction >= input.len() {
        return Err(Error::usage(format!(
            "direction {direction} outside an input of length {}",
            input.len()
        )));
    }
    let lanes = input
        .iter()
        .enumerate()
        .map(|(i, &x)| Jet2::coordinate(x, i == direction))
        .collect();
    Ok(forward_lanes(params, lanes))
}

/// An input coordinate along which derivatives are propagated in batch mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Direction {
    pub coord: usize,
    /// Also propagate the second derivative along this coordinate.
    pub second_order: bool,
}

impl Direction {
    pub fn first(coord: usize) -> Self {
        Direction {
            coord,
            second_order: false,
        }
    }

    pub fn second(coord: usize) -> Self {
        Direction {
            coord,
            second_order: true,
        }
    }
}

/// Row-block layout of a batch jet stack.
///
/// Component 0 holds values, components `1..=K` first derivatives along each
/// direction, then one component per second-order direction.
#[derive(Debug, Clone, PartialEq)]
pub struct JetLayout {
    pub n: usize,
    pub directions: Vec<Direction>,
    /// Direction index of each second-derivative component.
    second: Vec<usize>,
}

impl JetLayout {
    pub fn new(n: usize, directions: &[Direction]) -> Self {
        let second = directions
            .iter()
            .enumerate()
            .filter(|(_, d)| d.second_order)
            .map(|(k, _)| k)
            .collect();
        JetLayout {
            n,
            directions: directions.to_vec(),
            second,
        }
    }

    pub fn components(&self) -> usize {
        1 + self.directions.len() + self.second.len()
    }

    pub fn rows(&self) -> usize {
        self.components() * self.n
    }

    /// Stack row of the value of sample `j`.
    pub fn value_row(&self, j: usize) -> usize {
        j
    }

    /// Stack row of the first derivative along direction `k` for sample `j`.
    pub fn d1_row(&self, k: usize, j: usize) -> usize {
        (1 + k) * self.n + j
    }

    /// Stack row of the second derivative along direction `k`, if propagated.
    pub fn d2_row(&self, k: usize, j: usize) -> Option<usize> {
        self.second
            .iter()
            .position(|&s| s == k)
            .map(|m| (1 + self.directions.len() + m) * self.n + j)
    }
}

/// Intermediates of a batched jet evaluation.
#[derive(Debug, Clone)]
pub struct BatchCache<'p> {
    params: &'p NetworkParams,
    layout: JetLayout,
    input: Array2<f64>,
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
    output: Vec<f64>,
}

/// Evaluates the network on the rows of `inputs` (`n x input_dim`), propagating
/// derivatives along `directions`.
pub fn forward_batch<'p>(
    params: &'p NetworkParams,
    inputs: ArrayView2<'_, f64>,
    directions: &[Direction],
) -> Result<BatchCache<'p>> {
    let config = &params.config;
    params.check_input(inputs.ncols())?;
    if let Some(d) = directions.iter().find(|d| d.coord >= config.input_dim) {
        return Err(Error::usage(format!("direction {} outside the input", d.coord)));
    }
    if directions.iter().any(|d| d.second_order) && !config.activation.is_smooth() {
        return Err(Error::config(format!(
            "second derivatives requested through a {} network",
            config.activation.name()
        )));
    }
    let n = inputs.nrows();
    let layout = JetLayout::new(n, directions);
    let rows = layout.rows();
    let mut input = Array2::<f64>::zeros((rows, config.input_dim));
    input.slice_mut(ndarray::s![..n, ..]).assign(&inputs);
    for (k, d) in directions.iter().enumerate() {
        for j in 0..n {
            input[[layout.d1_row(k, j), d.coord]] = 1.0;
        }
    }

    let mut pre: Vec<Array2<f64>> = Vec::with_capacity(config.num_layers());
    let mut post: Vec<Array2<f64>> = Vec::with_capacity(config.num_layers());
    for (i, l) in params.layout.layers.iter().enumerate() {
        let y = if i == 0 { &input } else { &post[i - 1] };
        let mut z = Array2::<f64>::zeros((rows, l.weight.cols));
        general_mat_mul(1.0, y, &params.weight(i), 0.0, &mut z);
        {
            let b = params.bias(i);
            for mut row in z.slice_mut(ndarray::s![..n, ..]).rows_mut() {
                row += &b;
            }
        }
        if let Some((src, proj)) = l.shortcut {
            match proj {
                None => z += &post[src],
                Some(_) => {
                    let p = params.projection(i).expect("projection present");
                    general_mat_mul(1.0, &post[src], &p, 1.0, &mut z);
                }
            }
        }
        let a = activate_stack(config.activation, &layout, &z);
        pre.push(z);
        post.push(a);
    }
    let last = post.last().expect("at least one layer");
    let mut output = last.dot(&params.output_weight()).to_vec();
    let ob = params.output_bias();
    for u in &mut output[..n] {
        *u += ob;
    }
    Ok(BatchCache {
        params,
        layout,
        input,
        pre,
        post,
        output,
    })
}

fn activate_stack(act: Activation, layout: &JetLayout, z: &Array2<f64>) -> Array2<f64> {
    let n = layout.n;
    let width = z.ncols();
    let k_dirs = layout.directions.len();
    let zs = z.as_slice().expect("standard layout");
    let mut a = Array2::<f64>::zeros(z.raw_dim());
    let av = a.as_slice_mut().expect("standard layout");
    let comp = |c: usize, j: usize, u: usize| (c * n + j) * width + u;
    for j in 0..n {
        for u in 0..width {
            let [s0, s1, s2, _] = act.derivatives(zs[comp(0, j, u)]);
            av[comp(0, j, u)] = s0;
            for k in 0..k_dirs {
                av[comp(1 + k, j, u)] = s1 * zs[comp(1 + k, j, u)];
            }
            for (m, &k) in layout.second.iter().enumerate() {
                let c2 = 1 + k_dirs + m;
                let z1 = zs[comp(1 + k, j, u)];
                av[comp(c2, j, u)] = s2 * z1 * z1 + s1 * zs[comp(c2, j, u)];
            }
        }
    }
    a
}

impl<'p> BatchCache<'p> {
    pub fn layout(&self) -> &JetLayout {
        &self.layout
    }

    pub fn params(&self) -> &'p NetworkParams {
        self.params
    }

    /// Output stack, indexed by [`JetLayout`] rows.
    pub fn outputs(&self) -> &[f64] {
        &self.output
    }

    pub fn value(&self, j: usize) -> f64 {
        self.output[self.layout.value_row(j)]
    }

    pub fn d1(&self, k: usize, j: usize) -> f64 {
        self.output[self.layout.d1_row(k, j)]
    }

    pub fn d2(&self, k: usize, j: usize) -> Option<f64> {
        self.layout.d2_row(k, j).map(|r| self.output[r])
    }

    /// Jet of sample `j` along direction `k`; `d2` is zero when not propagated.
    pub fn jet(&self, k: usize, j: usize) -> Jet2<f64> {
        Jet2::new(self.value(j), self.d1(k, j), self.d2(k, j).unwrap_or(0.0))
    }

    /// Pulls adjoints of the output stack back to the parameters.
    pub fn backward(&self, output_adjoint: &[f64]) -> Result<GradientMap> {
        let params = self.params;
        let layout = &self.layout;
        if output_adjoint.len() != layout.rows() {
            return Err(Error::usage(format!(
                "output adjoint has {} rows, stack has {}",
                output_adjoint.len(),
                layout.rows()
            )));
        }
        if output_adjoint.iter().any(|a| !a.is_finite()) {
            return Err(Error::numeric("non-finite output adjoint"));
        }
        let mut grad = vec![0.0; params.len()];
        let n = layout.n;
        let nl = params.config.num_layers();
        let ubar = ArrayView1::from(output_adjoint);

        // output layer
        let last = &self.post[nl - 1];
        {
            let gw = last.t().dot(&ubar);
            let ow = params.layout.out_weight;
            copy_into(&mut grad, ow, gw.iter());
            grad[params.layout.out_bias] = output_adjoint[..n].iter().sum();
        }
        let mut adj: Vec<Array2<f64>> = self.post.iter().map(|a| Array2::<f64>::zeros(a.raw_dim())).collect();
        {
            let wo = params.output_weight();
            let ubar_col = ubar.view().insert_axis(ndarray::Axis(1));
            let wo_row = wo.view().insert_axis(ndarray::Axis(0));
            general_mat_mul(1.0, &ubar_col, &wo_row, 0.0, &mut adj[nl - 1]);
        }

        for i in (0..nl).rev() {
            let l = &params.layout.layers[i];
            let zbar = self.activation_backward(i, &adj[i]);
            let y = if i == 0 { &self.input } else { &self.post[i - 1] };
            {
                let b = l.weight;
                let mut gw = ArrayViewMut2::from_shape((b.rows, b.cols), &mut grad[b.offset..b.offset + b.len()])
                    .expect("layout block");
                general_mat_mul(1.0, &y.t(), &zbar, 0.0, &mut gw);
                let gb = zbar.slice(ndarray::s![..n, ..]).sum_axis(ndarray::Axis(0));
                copy_into(&mut grad, l.bias, gb.iter());
            }
            if let Some((src, proj)) = l.shortcut {
                match proj {
                    None => adj[src] += &zbar,
                    Some(b) => {
                        let mut gp =
                            ArrayViewMut2::from_shape((b.rows, b.cols), &mut grad[b.offset..b.offset + b.len()])
                                .expect("layout block");
                        general_mat_mul(1.0, &self.post[src].t(), &zbar, 0.0, &mut gp);
                        let p = params.projection(i).expect("projection present");
                        general_mat_mul(1.0, &zbar, &p.t(), 1.0, &mut adj[src]);
                    }
                }
            }
            if i > 0 {
                general_mat_mul(1.0, &zbar, &params.weight(i).t(), 1.0, &mut adj[i - 1]);
            }
        }
        let grad = GradientMap(grad);
        if !grad.is_finite() {
            return Err(Error::numeric("non-finite parameter gradient"));
        }
        Ok(grad)
    }

    /// Adjoint of the pre-activation stack of layer `i` given the adjoint of its output.
    fn activation_backward(&self, i: usize, abar: &Array2<f64>) -> Array2<f64> {
        let layout = &self.layout;
        let act = self.params.config.activation;
        let z = &self.pre[i];
        let n = layout.n;
        let width = z.ncols();
        let k_dirs = layout.directions.len();
        let zs = z.as_slice().expect("standard layout");
        let abs = abar.as_slice().expect("standard layout");
        let mut zbar = Array2::<f64>::zeros(z.raw_dim());
        let zb = zbar.as_slice_mut().expect("standard layout");
        let comp = |c: usize, j: usize, u: usize| (c * n + j) * width + u;
        for j in 0..n {
            for u in 0..width {
                let [_, s1, s2, s3] = act.derivatives(zs[comp(0, j, u)]);
                let mut z0bar = abs[comp(0, j, u)] * s1;
                for k in 0..k_dirs {
                    let idx = comp(1 + k, j, u);
                    z0bar += abs[idx] * s2 * zs[idx];
                    zb[idx] = abs[idx] * s1;
                }
                for (m, &k) in layout.second.iter().enumerate() {
                    let i2 = comp(1 + k_dirs + m, j, u);
                    let i1 = comp(1 + k, j, u);
                    let a2 = abs[i2];
                    let z1 = zs[i1];
                    z0bar += a2 * (s3 * z1 * z1 + s2 * zs[i2]);
                    zb[i1] += a2 * 2.0 * s2 * z1;
                    zb[i2] = a2 * s1;
                }
                zb[comp(0, j, u)] = z0bar;
            }
        }
        zbar
    }
}
