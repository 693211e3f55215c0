//! Fully connected MLPs with snake activation, Xavier initialization, and
//! exact input derivatives.
//!
//! Physics residuals consume `u_t`, `u_x`, `u_xx` of the network output, and
//! training needs the gradient of those quantities with respect to every
//! weight, bias and snake frequency. Both are computed exactly:
//!
//! - the forward pass propagates first/second-order input jets through each
//!   layer (value, `d/dt`, `d/dx`, `d2/dx2` channels), and
//! - the backward pass is reverse-mode differentiation of that jet
//!   computation, derived per layer, accumulating into a flat gradient with
//!   the same layout as the parameter vector.
//!
//! Finite differences appear only in tests.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_chacha::ChaCha8Rng;

use crate::domain::{DerivativeSet, ModelEval};
use crate::{Error, Result};

/// Smallest usable snake frequency magnitude; `sin^2(ax)/a` divides by `a`.
pub const MIN_SNAKE_FREQ: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Snake,
    Tanh,
}

impl Activation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Activation::Snake => "snake",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "snake" => Ok(Activation::Snake),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::InvalidArgument(format!(
                "unknown activation \"{other}\" (expected snake or tanh)"
            ))),
        }
    }
}

/// Snake activation `x + sin^2(a x) / a`.
pub fn snake(x: f64, a: f64) -> Result<f64> {
    if a == 0.0 {
        return Err(Error::ZeroSnakeFrequency);
    }
    let s = (a * x).sin();
    Ok(x + s * s / a)
}

/// Shape of a fully connected network: `hidden_layers` equal-width hidden
/// layers between an affine input and an affine (activation-free) output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub activation: Activation,
}

impl MlpArchitecture {
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        hidden_layers: usize,
        hidden_width: usize,
        activation: Activation,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden_layers == 0 || hidden_width == 0 {
            return Err(Error::InvalidArgument(format!(
                "architecture dimensions must all be >= 1 \
                 (in={input_dim}, out={output_dim}, layers={hidden_layers}, width={hidden_width})"
            )));
        }
        Ok(Self {
            input_dim,
            output_dim,
            hidden_layers,
            hidden_width,
            activation,
        })
    }

    /// `[input, width, ..., width, output]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_layers + 2);
        dims.push(self.input_dim);
        dims.extend(std::iter::repeat(self.hidden_width).take(self.hidden_layers));
        dims.push(self.output_dim);
        dims
    }

    /// Total flat-parameter length: weights and biases of every affine layer
    /// plus one snake frequency per hidden layer.
    pub fn parameter_count(&self) -> usize {
        let dims = self.layer_dims();
        let affine: usize = dims.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        let freqs = match self.activation {
            Activation::Snake => self.hidden_layers,
            Activation::Tanh => 0,
        };
        affine + freqs
    }
}

/// Flat parameter vector: `W_0, b_0, W_1, b_1, ..., a_0, ..., a_{H-1}`,
/// weights row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    values: Vec<f64>,
}

impl ParameterVector {
    pub fn new(arch: &MlpArchitecture, values: Vec<f64>) -> Result<Self> {
        if values.len() != arch.parameter_count() {
            return Err(Error::DimensionMismatch {
                expected: arch.parameter_count(),
                got: values.len(),
                context: "parameter vector".into(),
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "parameter vector contains non-finite entry {bad}"
            )));
        }
        Ok(Self { values })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

/// Xavier initialization: layer weights drawn from a normal law with
/// variance `2 / (fan_in + fan_out)`, biases zero, snake frequencies one.
pub fn xavier_init(arch: &MlpArchitecture, seed: u64) -> ParameterVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = arch.layer_dims();
    let mut values = Vec::with_capacity(arch.parameter_count());
    for w in dims.windows(2) {
        let (d_in, d_out) = (w[0], w[1]);
        let std = (2.0 / (d_in + d_out) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        for _ in 0..d_in * d_out {
            values.push(normal.sample(&mut rng));
        }
        values.extend(std::iter::repeat(0.0).take(d_out));
    }
    if arch.activation == Activation::Snake {
        values.extend(std::iter::repeat(1.0).take(arch.hidden_layers));
    }
    ParameterVector::new(arch, values).expect("layout is consistent by construction")
}

/// Borrowed views of one affine layer inside a flat parameter slice.
struct LayerView<'a> {
    w: ArrayView2<'a, f64>,
    b: ArrayView1<'a, f64>,
}

fn layer_views<'a>(arch: &MlpArchitecture, theta: &'a [f64]) -> (Vec<LayerView<'a>>, &'a [f64]) {
    let dims = arch.layer_dims();
    let mut offset = 0;
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for w in dims.windows(2) {
        let (d_in, d_out) = (w[0], w[1]);
        let wv = ArrayView2::from_shape((d_out, d_in), &theta[offset..offset + d_out * d_in])
            .expect("weight shape");
        offset += d_out * d_in;
        let bv = ArrayView1::from(&theta[offset..offset + d_out]);
        offset += d_out;
        layers.push(LayerView { w: wv, b: bv });
    }
    (layers, &theta[offset..])
}

/// Offsets of `(W_k, b_k)` blocks and frequency block inside the flat layout.
fn layer_offsets(arch: &MlpArchitecture) -> (Vec<(usize, usize, usize, usize)>, usize) {
    let dims = arch.layer_dims();
    let mut offset = 0;
    let mut blocks = Vec::new();
    for w in dims.windows(2) {
        let (d_in, d_out) = (w[0], w[1]);
        blocks.push((offset, d_out * d_in, offset + d_out * d_in, d_out));
        offset += d_out * (d_in + 1);
    }
    (blocks, offset)
}

fn effective_freq(a: f64) -> f64 {
    if a >= 0.0 {
        a.max(MIN_SNAKE_FREQ)
    } else {
        a.min(-MIN_SNAKE_FREQ)
    }
}

/// Which input columns carry the time and space coordinates.
#[derive(Debug, Clone, Copy, Default)]
pub struct InputLayout {
    pub t_index: Option<usize>,
    pub x_index: Option<usize>,
}

/// Jet channels over a batch: value plus the active input derivatives.
/// Shapes are `(batch, dim)`; `dx` is populated whenever `dxx` is carried.
#[derive(Debug, Clone)]
pub struct Jets {
    pub val: Array2<f64>,
    pub dt: Option<Array2<f64>>,
    pub dx: Option<Array2<f64>>,
    pub dxx: Option<Array2<f64>>,
}

impl Jets {
    pub fn zeros_like_shape(n: usize, dim: usize, wanted: DerivativeSet) -> Self {
        let mk = || Array2::zeros((n, dim));
        Jets {
            val: mk(),
            dt: wanted.dt.then(mk),
            dx: wanted.needs_dx_channel().then(mk),
            dxx: wanted.dxx.then(mk),
        }
    }

    fn affine(&self, layer: &LayerView) -> Jets {
        let wt = layer.w.t();
        let mut val = self.val.dot(&wt);
        val += &layer.b;
        Jets {
            val,
            dt: self.dt.as_ref().map(|m| m.dot(&wt)),
            dx: self.dx.as_ref().map(|m| m.dot(&wt)),
            dxx: self.dxx.as_ref().map(|m| m.dot(&wt)),
        }
    }
}

/// Per-hidden-layer activation record kept for the reverse pass.
struct ActRecord {
    /// snake: `sin(2 a z)`; tanh: `tanh(z)`.
    s: Array2<f64>,
    /// snake: `cos(2 a z)`; tanh: unused.
    c: Option<Array2<f64>>,
}

/// Forward tape: everything the reverse pass needs.
pub struct JetTape {
    wanted: DerivativeSet,
    /// Input jets to affine layer `k`, for `k = 0..=hidden_layers`.
    layer_inputs: Vec<Jets>,
    /// Pre-activation jets at each hidden layer.
    preacts: Vec<Jets>,
    records: Vec<ActRecord>,
}

/// Result of a jet forward pass, optionally with its tape.
pub struct JetEval {
    pub out: Jets,
    pub tape: Option<JetTape>,
}

/// Batched forward pass carrying the requested input-derivative jets.
///
/// `inputs` is `(batch, input_dim)`; derivative seeds are placed on the
/// columns named by `layout`. With `want_tape` the returned tape supports
/// [`backward_jets`].
pub fn forward_jets(
    arch: &MlpArchitecture,
    theta: &[f64],
    inputs: &Array2<f64>,
    layout: InputLayout,
    wanted: DerivativeSet,
    want_tape: bool,
) -> Result<JetEval> {
    if inputs.ncols() != arch.input_dim {
        return Err(Error::DimensionMismatch {
            expected: arch.input_dim,
            got: inputs.ncols(),
            context: "network input columns".into(),
        });
    }
    if theta.len() != arch.parameter_count() {
        return Err(Error::DimensionMismatch {
            expected: arch.parameter_count(),
            got: theta.len(),
            context: "parameter vector".into(),
        });
    }
    if wanted.dt && layout.t_index.is_none() {
        return Err(Error::DerivativeUnavailable { which: "d/dt" });
    }
    if wanted.needs_dx_channel() && layout.x_index.is_none() {
        return Err(Error::DerivativeUnavailable { which: "d/dx" });
    }

    let n = inputs.nrows();
    let (layers, freqs) = layer_views(arch, theta);

    let mut jets = Jets {
        val: inputs.clone(),
        dt: wanted.dt.then(|| {
            let mut m = Array2::zeros((n, arch.input_dim));
            m.column_mut(layout.t_index.unwrap()).fill(1.0);
            m
        }),
        dx: wanted.needs_dx_channel().then(|| {
            let mut m = Array2::zeros((n, arch.input_dim));
            m.column_mut(layout.x_index.unwrap()).fill(1.0);
            m
        }),
        dxx: wanted.dxx.then(|| Array2::zeros((n, arch.input_dim))),
    };

    let mut tape = want_tape.then(|| JetTape {
        wanted,
        layer_inputs: Vec::with_capacity(arch.hidden_layers + 1),
        preacts: Vec::with_capacity(arch.hidden_layers),
        records: Vec::with_capacity(arch.hidden_layers),
    });

    for (k, layer) in layers.iter().enumerate() {
        let z = jets.affine(layer);
        if let Some(t) = tape.as_mut() {
            // move, not clone: the pre-affine jets are only needed for the
            // reverse pass from here on
            t.layer_inputs.push(std::mem::replace(
                &mut jets,
                Jets {
                    val: Array2::zeros((0, 0)),
                    dt: None,
                    dx: None,
                    dxx: None,
                },
            ));
        }
        if k < arch.hidden_layers {
            let freq = match arch.activation {
                Activation::Snake => effective_freq(freqs[k]),
                Activation::Tanh => 0.0,
            };
            let (activated, record) = apply_activation(arch.activation, freq, &z, wanted);
            if let Some(t) = tape.as_mut() {
                t.preacts.push(z);
                t.records.push(record);
            }
            jets = activated;
        } else {
            jets = z;
        }
    }

    Ok(JetEval { out: jets, tape })
}

fn apply_activation(
    activation: Activation,
    freq: f64,
    z: &Jets,
    wanted: DerivativeSet,
) -> (Jets, ActRecord) {
    let n = z.val.nrows();
    let dim = z.val.ncols();
    let len = n * dim;
    let zv = z.val.as_slice().expect("standard layout");

    let mut s = Array2::zeros((n, dim));
    let mut c = matches!(activation, Activation::Snake).then(|| Array2::<f64>::zeros((n, dim)));
    let mut out = Jets::zeros_like_shape(n, dim, wanted);

    {
        let s_s = s.as_slice_mut().unwrap();
        let ov = out.val.as_slice_mut().unwrap();
        match activation {
            Activation::Snake => {
                let a = freq;
                let c_s = c.as_mut().unwrap().as_slice_mut().unwrap();
                for i in 0..len {
                    let (sv, cv) = (2.0 * a * zv[i]).sin_cos();
                    s_s[i] = sv;
                    c_s[i] = cv;
                    ov[i] = zv[i] + (1.0 - cv) / (2.0 * a);
                }
            }
            Activation::Tanh => {
                for i in 0..len {
                    let th = zv[i].tanh();
                    s_s[i] = th;
                    ov[i] = th;
                }
            }
        }
    }

    // sigma'(z) once; the first-order channels are then plain array products
    // and auto-vectorize.
    let mut sig1 = vec![0.0; len];
    {
        let s_s = s.as_slice().unwrap();
        match activation {
            Activation::Snake => {
                for i in 0..len {
                    sig1[i] = 1.0 + s_s[i];
                }
            }
            Activation::Tanh => {
                for i in 0..len {
                    sig1[i] = 1.0 - s_s[i] * s_s[i];
                }
            }
        }
    }

    if let (Some(zdt), Some(odt)) = (&z.dt, &mut out.dt) {
        let zdt = zdt.as_slice().unwrap();
        let odt = odt.as_slice_mut().unwrap();
        for i in 0..len {
            odt[i] = sig1[i] * zdt[i];
        }
    }
    if let (Some(zdx), Some(odx)) = (&z.dx, &mut out.dx) {
        let zdx = zdx.as_slice().unwrap();
        let odx = odx.as_slice_mut().unwrap();
        for i in 0..len {
            odx[i] = sig1[i] * zdx[i];
        }
    }
    if let (Some(zdxx), Some(odxx)) = (&z.dxx, &mut out.dxx) {
        // o_xx = sigma''(z) z_x^2 + sigma'(z) z_xx
        let zdx = z.dx.as_ref().unwrap().as_slice().unwrap();
        let zdxx = zdxx.as_slice().unwrap();
        let odxx = odxx.as_slice_mut().unwrap();
        let s_s = s.as_slice().unwrap();
        match activation {
            Activation::Snake => {
                let a = freq;
                let c_s = c.as_ref().unwrap().as_slice().unwrap();
                for i in 0..len {
                    let sig2 = 2.0 * a * c_s[i];
                    odxx[i] = sig2 * zdx[i] * zdx[i] + sig1[i] * zdxx[i];
                }
            }
            Activation::Tanh => {
                for i in 0..len {
                    let sig2 = -2.0 * s_s[i] * sig1[i];
                    odxx[i] = sig2 * zdx[i] * zdx[i] + sig1[i] * zdxx[i];
                }
            }
        }
    }

    (out, ActRecord { s, c })
}

/// Reverse pass over a taped jet forward: accumulates
/// `d(sum of adjoint-weighted outputs)/d(theta)` into `grad` (same layout as
/// the parameter vector; entries are added, not overwritten).
pub fn backward_jets(
    arch: &MlpArchitecture,
    theta: &[f64],
    tape: &JetTape,
    adjoints: &Jets,
    grad: &mut [f64],
) {
    assert_eq!(grad.len(), arch.parameter_count(), "gradient layout");
    let (layers, freqs) = layer_views(arch, theta);
    let (blocks, freq_offset) = layer_offsets(arch);
    let wanted = tape.wanted;

    let mut bar = adjoints.clone();
    for k in (0..layers.len()).rev() {
        // Affine backward: Wbar += sum_ch zbar_ch^T y_ch, bbar += col-sum of
        // zbar_val, ybar_ch = zbar_ch W.
        let y = &tape.layer_inputs[k];
        let (w_off, w_len, b_off, b_len) = blocks[k];
        {
            let layer = &layers[k];
            let d_out = layer.w.nrows();
            let d_in = layer.w.ncols();
            let mut wbar =
                ArrayView2::from_shape((d_out, d_in), &grad[w_off..w_off + w_len])
                    .expect("weight grad shape")
                    .to_owned();
            wbar += &bar.val.t().dot(&y.val);
            if let (Some(zb), Some(yc)) = (&bar.dt, &y.dt) {
                wbar += &zb.t().dot(yc);
            }
            if let (Some(zb), Some(yc)) = (&bar.dx, &y.dx) {
                wbar += &zb.t().dot(yc);
            }
            if let (Some(zb), Some(yc)) = (&bar.dxx, &y.dxx) {
                wbar += &zb.t().dot(yc);
            }
            grad[w_off..w_off + w_len].copy_from_slice(wbar.as_slice().unwrap());

            let bbar = bar.val.sum_axis(Axis(0));
            for (g, v) in grad[b_off..b_off + b_len].iter_mut().zip(bbar.iter()) {
                *g += v;
            }

            bar = Jets {
                val: bar.val.dot(&layer.w),
                dt: bar.dt.as_ref().map(|m| m.dot(&layer.w)),
                dx: bar.dx.as_ref().map(|m| m.dot(&layer.w)),
                dxx: bar.dxx.as_ref().map(|m| m.dot(&layer.w)),
            };
        }

        if k == 0 {
            break;
        }

        // Activation backward at hidden layer k-1.
        let h = k - 1;
        let z = &tape.preacts[h];
        let rec = &tape.records[h];
        let freq = match arch.activation {
            Activation::Snake => effective_freq(freqs[h]),
            Activation::Tanh => 0.0,
        };
        let mut freq_grad = 0.0;
        activation_backward(arch.activation, freq, z, rec, &mut bar, wanted, &mut freq_grad);
        if arch.activation == Activation::Snake {
            grad[freq_offset + h] += freq_grad;
        }
    }
}

/// In-place: converts adjoints of the activation output into adjoints of the
/// pre-activation jets, accumulating the frequency gradient.
///
/// Structured as straight-line slice passes: the frequency-gradient
/// reductions run first (they read original adjoints), then each channel is
/// rewritten after every read of its original value.
fn activation_backward(
    activation: Activation,
    a: f64,
    z: &Jets,
    rec: &ActRecord,
    bar: &mut Jets,
    wanted: DerivativeSet,
    freq_grad: &mut f64,
) {
    let len = z.val.len();
    let zv = z.val.as_slice().unwrap();
    let s_s = rec.s.as_slice().unwrap();

    let has_dt = wanted.dt;
    let has_dx = wanted.needs_dx_channel();
    let has_dxx = wanted.dxx;

    if activation == Activation::Snake {
        let c_s = rec.c.as_ref().unwrap().as_slice().unwrap();
        let mut fg = 0.0;
        {
            let bv = bar.val.as_slice().unwrap();
            for i in 0..len {
                // d sigma / da
                fg += bv[i] * (zv[i] * s_s[i] / a - (1.0 - c_s[i]) / (2.0 * a * a));
            }
        }
        if has_dt {
            let ob = bar.dt.as_ref().unwrap().as_slice().unwrap();
            let zd = z.dt.as_ref().unwrap().as_slice().unwrap();
            for i in 0..len {
                // d sigma' / da = 2 z cos(2az)
                fg += ob[i] * 2.0 * zv[i] * c_s[i] * zd[i];
            }
        }
        if has_dx && !has_dxx {
            let ob = bar.dx.as_ref().unwrap().as_slice().unwrap();
            let zd = z.dx.as_ref().unwrap().as_slice().unwrap();
            for i in 0..len {
                fg += ob[i] * 2.0 * zv[i] * c_s[i] * zd[i];
            }
        }
        if has_dxx {
            let obx = bar.dx.as_ref().unwrap().as_slice().unwrap();
            let obxx = bar.dxx.as_ref().unwrap().as_slice().unwrap();
            let zdx = z.dx.as_ref().unwrap().as_slice().unwrap();
            let zdxx = z.dxx.as_ref().unwrap().as_slice().unwrap();
            for i in 0..len {
                let dsig1_da = 2.0 * zv[i] * c_s[i];
                // d sigma'' / da = 2 cos(2az) - 4 a z sin(2az)
                let dsig2_da = 2.0 * c_s[i] - 4.0 * a * zv[i] * s_s[i];
                fg += obx[i] * dsig1_da * zdx[i]
                    + obxx[i] * (dsig2_da * zdx[i] * zdx[i] + dsig1_da * zdxx[i]);
            }
        }
        *freq_grad += fg;
    }

    // zbar accumulation into the value channel, reading each channel's
    // original adjoint before rewriting it.
    let c_snake = rec.c.as_ref().map(|m| m.as_slice().unwrap());

    {
        let bv = bar.val.as_slice_mut().unwrap();
        match activation {
            Activation::Snake => {
                for i in 0..len {
                    bv[i] *= 1.0 + s_s[i];
                }
            }
            Activation::Tanh => {
                for i in 0..len {
                    bv[i] *= 1.0 - s_s[i] * s_s[i];
                }
            }
        }
    }

    // shared pattern for the first-order channels dt and plain dx
    let mut first_order =
        |channel: &mut Option<Array2<f64>>, zd: &Array2<f64>, bval: &mut Array2<f64>| {
            let zd = zd.as_slice().unwrap();
            let ob = channel.as_mut().unwrap().as_slice_mut().unwrap();
            let bv = bval.as_slice_mut().unwrap();
            match activation {
                Activation::Snake => {
                    let c_s = c_snake.unwrap();
                    for i in 0..len {
                        bv[i] += ob[i] * 2.0 * a * c_s[i] * zd[i];
                        ob[i] *= 1.0 + s_s[i];
                    }
                }
                Activation::Tanh => {
                    for i in 0..len {
                        let th = s_s[i];
                        let sig1 = 1.0 - th * th;
                        bv[i] += ob[i] * (-2.0 * th * sig1) * zd[i];
                        ob[i] *= sig1;
                    }
                }
            }
        };

    if has_dt {
        let zd = z.dt.as_ref().unwrap();
        let mut dt = bar.dt.take();
        first_order(&mut dt, zd, &mut bar.val);
        bar.dt = dt;
    }
    if has_dx && !has_dxx {
        let zd = z.dx.as_ref().unwrap();
        let mut dx = bar.dx.take();
        first_order(&mut dx, zd, &mut bar.val);
        bar.dx = dx;
    }
    if has_dxx {
        let zdx = z.dx.as_ref().unwrap().as_slice().unwrap();
        let zdxx = z.dxx.as_ref().unwrap().as_slice().unwrap();
        let mut dx = bar.dx.take().unwrap();
        let mut dxx = bar.dxx.take().unwrap();
        {
            let bv = bar.val.as_slice_mut().unwrap();
            let obx = dx.as_slice_mut().unwrap();
            let obxx = dxx.as_slice_mut().unwrap();
            match activation {
                Activation::Snake => {
                    let c_s = c_snake.unwrap();
                    for i in 0..len {
                        let sig1 = 1.0 + s_s[i];
                        let sig2 = 2.0 * a * c_s[i];
                        let sig3 = -4.0 * a * a * s_s[i];
                        bv[i] += obx[i] * sig2 * zdx[i]
                            + obxx[i] * (sig3 * zdx[i] * zdx[i] + sig2 * zdxx[i]);
                        obx[i] = obx[i] * sig1 + obxx[i] * 2.0 * sig2 * zdx[i];
                        obxx[i] *= sig1;
                    }
                }
                Activation::Tanh => {
                    for i in 0..len {
                        let th = s_s[i];
                        let sig1 = 1.0 - th * th;
                        let sig2 = -2.0 * th * sig1;
                        let sig3 = -2.0 * sig1 * (1.0 - 3.0 * th * th);
                        bv[i] += obx[i] * sig2 * zdx[i]
                            + obxx[i] * (sig3 * zdx[i] * zdx[i] + sig2 * zdxx[i]);
                        obx[i] = obx[i] * sig1 + obxx[i] * 2.0 * sig2 * zdx[i];
                        obxx[i] *= sig1;
                    }
                }
            }
        }
        bar.dx = Some(dx);
        bar.dxx = Some(dxx);
    }
}

/// Plain forward pass on a single input vector.
pub fn forward(arch: &MlpArchitecture, theta: &ParameterVector, input: &[f64]) -> Result<Vec<f64>> {
    if input.len() != arch.input_dim {
        return Err(Error::DimensionMismatch {
            expected: arch.input_dim,
            got: input.len(),
            context: "network input".into(),
        });
    }
    let inputs = Array2::from_shape_vec((1, input.len()), input.to_vec()).expect("shape");
    let eval = forward_jets(
        arch,
        theta.as_slice(),
        &inputs,
        InputLayout::default(),
        DerivativeSet::NONE,
        false,
    )?;
    Ok(eval.out.val.row(0).to_vec())
}

/// Single-point evaluation with exact input derivatives; scalar-output
/// networks only.
pub fn forward_with_input_derivatives(
    arch: &MlpArchitecture,
    theta: &ParameterVector,
    input: &[f64],
    layout: InputLayout,
    wanted: DerivativeSet,
) -> Result<ModelEval> {
    if arch.output_dim != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: arch.output_dim,
            context: "scalar model output".into(),
        });
    }
    if input.len() != arch.input_dim {
        return Err(Error::DimensionMismatch {
            expected: arch.input_dim,
            got: input.len(),
            context: "network input".into(),
        });
    }
    let inputs = Array2::from_shape_vec((1, input.len()), input.to_vec()).expect("shape");
    let eval = forward_jets(arch, theta.as_slice(), &inputs, layout, wanted, false)?;
    Ok(ModelEval {
        u: eval.out.val[[0, 0]],
        u_t: eval.out.dt.as_ref().map_or(0.0, |m| m[[0, 0]]),
        u_x: wanted.dx.then(|| eval.out.dx.as_ref().unwrap()[[0, 0]]),
        u_xx: wanted.dxx.then(|| eval.out.dxx.as_ref().unwrap()[[0, 0]]),
    })
}

const CHECKPOINT_PREFIX: &str = "arch: ";

/// Writes `arch: in,out,layers,width,activation\n` followed by the flat
/// parameter vector as little-endian 64-bit floats.
pub fn save_checkpoint(
    path: &Path,
    arch: &MlpArchitecture,
    theta: &ParameterVector,
) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    let header = format!(
        "{CHECKPOINT_PREFIX}{},{},{},{},{}\n",
        arch.input_dim,
        arch.output_dim,
        arch.hidden_layers,
        arch.hidden_width,
        arch.activation.as_str()
    );
    file.write_all(header.as_bytes())?;
    let mut bytes = Vec::with_capacity(theta.len() * 8);
    for v in theta.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    file.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(MlpArchitecture, ParameterVector)> {
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    let newline = data
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::CheckpointFormat("missing header line".into()))?;
    let header = std::str::from_utf8(&data[..newline])
        .map_err(|_| Error::CheckpointFormat("header is not utf-8".into()))?;
    let fields = header
        .strip_prefix(CHECKPOINT_PREFIX)
        .ok_or_else(|| Error::CheckpointFormat(format!("bad header \"{header}\"")))?;
    let parts: Vec<&str> = fields.split(',').collect();
    if parts.len() != 5 {
        return Err(Error::CheckpointFormat(format!(
            "expected 5 header fields, got {}",
            parts.len()
        )));
    }
    let parse = |s: &str| -> Result<usize> {
        s.trim()
            .parse()
            .map_err(|_| Error::CheckpointFormat(format!("bad integer \"{s}\"")))
    };
    let arch = MlpArchitecture::new(
        parse(parts[0])?,
        parse(parts[1])?,
        parse(parts[2])?,
        parse(parts[3])?,
        Activation::parse(parts[4].trim())?,
    )?;
    let body = &data[newline + 1..];
    if body.len() != arch.parameter_count() * 8 {
        return Err(Error::CheckpointFormat(format!(
            "expected {} parameter bytes, got {}",
            arch.parameter_count() * 8,
            body.len()
        )));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((arch, ParameterVector::new(&arch, values)?))
}
