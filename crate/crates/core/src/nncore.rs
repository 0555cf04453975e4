//! Dense layers, initialization and the partitioned Q-network.
//!
//! A [`QNetwork`] is split into an encoder (never perturbed) that produces
//! the hidden representation `h(s)`, and a head whose parameters are the
//! ones exploration noise is applied to. Gradients are derived by hand per
//! layer and accumulated into the `grad_*` fields.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::noisy::{SaneModule, SigmaLayer};
use crate::numkit::{Mat, Rng};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LinearLayer {
    /// `outputs x inputs`
    pub w: Mat,
    /// `outputs x 1`
    pub b: Mat,
    pub grad_w: Mat,
    pub grad_b: Mat,
}

impl LinearLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        LinearLayer {
            w: Mat::zeros(outputs, inputs),
            b: Mat::zeros(outputs, 1),
            grad_w: Mat::zeros(outputs, inputs),
            grad_b: Mat::zeros(outputs, 1),
        }
    }

    pub fn from_parts(w: Mat, b: Mat) -> Result<Self> {
        b.ensure_shape("LinearLayer bias", (w.rows(), 1))?;
        let (o, i) = w.shape();
        Ok(LinearLayer {
            w,
            b,
            grad_w: Mat::zeros(o, i),
            grad_b: Mat::zeros(o, 1),
        })
    }

    #[inline]
    pub fn inputs(&self) -> usize {
        self.w.cols()
    }

    #[inline]
    pub fn outputs(&self) -> usize {
        self.w.rows()
    }

    pub fn zero_grad(&mut self) {
        self.grad_w.fill(0.0);
        self.grad_b.fill(0.0);
    }

    pub fn forward(&self, x: &Mat) -> Result<Mat> {
        x.ensure_shape("LinearLayer::forward", (self.inputs(), 1))?;
        Ok(Mat::column(&affine(self, x.as_slice())))
    }

    /// Adds `delta x^T` to `grad_w` and `delta` to `grad_b`.
    pub(crate) fn accumulate(&mut self, x: &[f64], delta: &[f64]) {
        let cols = self.inputs();
        let gw = self.grad_w.as_mut_slice();
        for (i, &d) in delta.iter().enumerate() {
            let row = &mut gw[i * cols..(i + 1) * cols];
            for (g, &xj) in row.iter_mut().zip(x) {
                *g += d * xj;
            }
        }
        for (g, &d) in self.grad_b.as_mut_slice().iter_mut().zip(delta) {
            *g += d;
        }
    }
}

/// W entries i.i.d. uniform on `±sqrt(6 / (in + out))`, bias zeroed.
pub fn glorot_uniform_init(rng: &mut Rng, mut layer: LinearLayer) -> LinearLayer {
    let limit = libm::sqrt(6.0 / (layer.inputs() + layer.outputs()) as f64);
    for w in layer.w.as_mut_slice() {
        *w = rng.uniform(-limit, limit);
    }
    layer.b.fill(0.0);
    layer
}

/// W entries i.i.d. `N(0, 2 / in)`, bias zeroed.
pub fn he_normal_init(rng: &mut Rng, mut layer: LinearLayer) -> LinearLayer {
    let scale = libm::sqrt(2.0 / layer.inputs() as f64);
    rng.fill_standard_normal(layer.w.as_mut_slice());
    for w in layer.w.as_mut_slice() {
        *w *= scale;
    }
    layer.b.fill(0.0);
    layer
}

// ---------------------------------------------------------------------------
// Dense stack engine shared by clean, NoisyNet and SANE passes.

pub(crate) trait Dense {
    fn inputs(&self) -> usize;
    fn weights(&self) -> &[f64];
    fn bias(&self) -> &[f64];
}

impl Dense for LinearLayer {
    fn inputs(&self) -> usize {
        self.w.cols()
    }
    fn weights(&self) -> &[f64] {
        self.w.as_slice()
    }
    fn bias(&self) -> &[f64] {
        self.b.as_slice()
    }
}

#[inline]
pub(crate) fn affine<L: Dense + ?Sized>(layer: &L, x: &[f64]) -> Vec<f64> {
    let cols = layer.inputs();
    let w = layer.weights();
    layer
        .bias()
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let mut acc = b;
            for (wij, xj) in w[i * cols..(i + 1) * cols].iter().zip(x) {
                acc += wij * xj;
            }
            acc
        })
        .collect()
}

/// Inputs and pre-activations of every layer in a stack.
#[derive(Clone, Debug, Default)]
pub(crate) struct Trace {
    pub inputs: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
    /// Smallest `|z|` over all rectified pre-activations.
    pub margin: f64,
}

#[inline]
fn rectified(k: usize, n: usize, relu_last: bool) -> bool {
    k + 1 < n || relu_last
}

pub(crate) fn dense_forward<L: Dense>(layers: &[L], x: &[f64], relu_last: bool, trace: &mut Trace) -> Vec<f64> {
    trace.inputs.clear();
    trace.pre.clear();
    trace.margin = f64::INFINITY;
    let n = layers.len();
    let mut a = x.to_vec();
    for (k, layer) in layers.iter().enumerate() {
        let z = affine(layer, &a);
        let out = if rectified(k, n, relu_last) {
            for &v in &z {
                let m = libm::fabs(v);
                if m < trace.margin {
                    trace.margin = m;
                }
            }
            z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
        } else {
            z.clone()
        };
        trace.inputs.push(a);
        trace.pre.push(z);
        a = out;
    }
    a
}

/// Returns per-layer output deltas (after the activation derivative) and the
/// gradient with respect to the stack input.
pub(crate) fn dense_backward<L: Dense>(
    layers: &[L],
    trace: &Trace,
    dy: &[f64],
    relu_last: bool,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = layers.len();
    let mut deltas = vec![Vec::new(); n];
    let mut grad = dy.to_vec();
    for k in (0..n).rev() {
        let layer = &layers[k];
        if rectified(k, n, relu_last) {
            for (g, &z) in grad.iter_mut().zip(&trace.pre[k]) {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        let cols = layer.inputs();
        let w = layer.weights();
        let mut dx = vec![0.0; cols];
        for (i, &d) in grad.iter().enumerate() {
            for (dxj, wij) in dx.iter_mut().zip(&w[i * cols..(i + 1) * cols]) {
                *dxj += wij * d;
            }
        }
        deltas[k] = core::mem::replace(&mut grad, dx);
    }
    (deltas, grad)
}

/// Cached intermediate values of [`mlp_forward`].
#[derive(Clone, Debug)]
pub struct MlpCache {
    pub(crate) trace: Trace,
    relu_last: bool,
}

fn check_chain(layers: &[LinearLayer], width: usize, context: &'static str) -> Result<()> {
    let mut w = width;
    for l in layers {
        if l.inputs() != w {
            return Err(Error::ShapeMismatch {
                context,
                expected: (w, 1),
                found: (l.inputs(), 1),
            });
        }
        w = l.outputs();
    }
    Ok(())
}

/// `L_n(ReLU(... ReLU(L_1(x))))`, no activation after the last layer.
pub fn mlp_forward(layers: &[LinearLayer], x: &Mat, store_cache: bool) -> Result<(Mat, Option<MlpCache>)> {
    mlp_forward_with(layers, x, false, store_cache)
}

fn mlp_forward_with(
    layers: &[LinearLayer],
    x: &Mat,
    relu_last: bool,
    store_cache: bool,
) -> Result<(Mat, Option<MlpCache>)> {
    if x.cols() != 1 {
        return Err(Error::ShapeMismatch {
            context: "mlp_forward",
            expected: (x.rows(), 1),
            found: x.shape(),
        });
    }
    check_chain(layers, x.rows(), "mlp_forward")?;
    let mut trace = Trace::default();
    let y = dense_forward(layers, x.as_slice(), relu_last, &mut trace);
    let cache = store_cache.then_some(MlpCache { trace, relu_last });
    Ok((Mat::column(&y), cache))
}

/// Accumulates parameter gradients for `dy` into the layers and returns
/// the gradient with respect to the input.
pub fn mlp_backward(layers: &mut [LinearLayer], cache: &MlpCache, dy: &Mat) -> Result<Mat> {
    let out = layers.last().map_or(cache.trace.inputs.first().map_or(0, Vec::len), |l| l.outputs());
    dy.ensure_shape("mlp_backward", (out, 1))?;
    if cache.trace.inputs.len() != layers.len() {
        return Err(Error::InvalidArgument("cache does not belong to these layers".to_string()));
    }
    let (deltas, dx) = dense_backward(layers, &cache.trace, dy.as_slice(), cache.relu_last);
    for (k, layer) in layers.iter_mut().enumerate() {
        layer.accumulate(&cache.trace.inputs[k], &deltas[k]);
    }
    Ok(Mat::column(&dx))
}

// ---------------------------------------------------------------------------
// Q-network.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Plain,
    EpsilonGreedy,
    NoisyNet,
    SimpleSane,
    QSane,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Plain,
        Strategy::EpsilonGreedy,
        Strategy::NoisyNet,
        Strategy::SimpleSane,
        Strategy::QSane,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Plain => "plain",
            Strategy::EpsilonGreedy => "epsilon_greedy",
            Strategy::NoisyNet => "noisynet",
            Strategy::SimpleSane => "simple_sane",
            Strategy::QSane => "q_sane",
        }
    }

    pub fn is_sane(self) -> bool {
        matches!(self, Strategy::SimpleSane | Strategy::QSane)
    }

    /// Strategies that explore through parameter noise.
    pub fn is_noisy(self) -> bool {
        matches!(self, Strategy::NoisyNet | Strategy::SimpleSane | Strategy::QSane)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::UnknownStrategy(s.to_string()))
    }
}

/// Layer widths of a Q-network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetShape {
    pub obs_width: usize,
    /// Encoder layer widths; every encoder layer is followed by ReLU.
    pub encoder: Vec<usize>,
    /// Hidden widths of the head before the action-value layer.
    pub head_hidden: Vec<usize>,
    pub actions: usize,
    pub sane_hidden: usize,
    /// NoisyNet initial noise scale, divided by `sqrt(fan_in)`.
    pub noisy_sigma0: f64,
}

impl NetShape {
    pub fn new(obs_width: usize, actions: usize) -> Self {
        NetShape {
            obs_width,
            encoder: vec![32],
            head_hidden: vec![32],
            actions,
            sane_hidden: 256,
            noisy_sigma0: 0.5,
        }
    }

    fn head_widths(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::new();
        let mut w = self.encoder.last().copied().unwrap_or(self.obs_width);
        for &h in self.head_hidden.iter().chain(core::iter::once(&self.actions)) {
            widths.push((w, h));
            w = h;
        }
        widths
    }
}

/// Strategy-specific exploration parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseParams {
    None,
    /// One learned sigma layer per head layer (the head holds the means).
    NoisyNet(Vec<SigmaLayer>),
    Sane(SaneModule),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    Encoder,
    Head,
    NoisySigma,
    Sane,
}

/// Stable name of one parameter array, e.g. `head.1.w` or `sane.0.b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId {
    pub group: ParamGroup,
    pub layer: usize,
    pub bias: bool,
}

impl ParamId {
    pub fn is_noise(&self) -> bool {
        matches!(self.group, ParamGroup::NoisySigma | ParamGroup::Sane)
    }
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let group = match self.group {
            ParamGroup::Encoder => "encoder",
            ParamGroup::Head => "head",
            ParamGroup::NoisySigma => "sigma",
            ParamGroup::Sane => "sane",
        };
        write!(f, "{group}.{}.{}", self.layer, if self.bias { "b" } else { "w" })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QNetwork {
    pub strategy: Strategy,
    /// Encoder parameters, producing `h(s)`.
    pub encoder: Vec<LinearLayer>,
    /// Perturbable head parameters (NoisyNet means).
    pub head: Vec<LinearLayer>,
    pub noise: NoiseParams,
}

impl QNetwork {
    /// Randomly initialized network.
    ///
    /// Encoder and head use Glorot uniform, except NoisyNet heads which use
    /// the factored NoisyNet scheme (means uniform on `±1/sqrt(in)`, sigmas
    /// constant `sigma0/sqrt(in)`). The SANE module uses `N(0, 2/in)`.
    pub fn init(strategy: Strategy, shape: &NetShape, rng: &mut Rng) -> Result<Self> {
        if shape.obs_width == 0 || shape.actions == 0 || shape.encoder.contains(&0) || shape.head_hidden.contains(&0) {
            return Err(Error::InvalidConfig("network widths must be positive".to_string()));
        }
        let mut encoder = Vec::new();
        let mut w = shape.obs_width;
        for &out in &shape.encoder {
            encoder.push(glorot_uniform_init(rng, LinearLayer::zeros(w, out)));
            w = out;
        }
        let hidden_width = w;
        let mut head = Vec::new();
        let mut sigmas = Vec::new();
        for (i, o) in shape.head_widths() {
            if strategy == Strategy::NoisyNet {
                let bound = 1.0 / libm::sqrt(i as f64);
                let mut layer = LinearLayer::zeros(i, o);
                for v in layer.w.as_mut_slice().iter_mut().chain(layer.b.as_mut_slice()) {
                    *v = rng.uniform(-bound, bound);
                }
                head.push(layer);
                sigmas.push(SigmaLayer::constant(i, o, shape.noisy_sigma0 * bound));
            } else {
                head.push(glorot_uniform_init(rng, LinearLayer::zeros(i, o)));
            }
        }
        let noise = match strategy {
            Strategy::Plain | Strategy::EpsilonGreedy => NoiseParams::None,
            Strategy::NoisyNet => NoiseParams::NoisyNet(sigmas),
            Strategy::SimpleSane => NoiseParams::Sane(SaneModule::he_init(rng, hidden_width, shape.sane_hidden)),
            Strategy::QSane => NoiseParams::Sane(SaneModule::he_init(
                rng,
                hidden_width + shape.actions,
                shape.sane_hidden,
            )),
        };
        QNetwork::from_parts(strategy, encoder, head, noise)
    }

    pub fn from_parts(
        strategy: Strategy,
        encoder: Vec<LinearLayer>,
        head: Vec<LinearLayer>,
        noise: NoiseParams,
    ) -> Result<Self> {
        let first = encoder.first().or(head.first()).ok_or_else(|| {
            Error::InvalidConfig("network needs at least one head layer".to_string())
        })?;
        if head.is_empty() {
            return Err(Error::InvalidConfig("network needs at least one head layer".to_string()));
        }
        let obs = first.inputs();
        check_chain(&encoder, obs, "QNetwork encoder")?;
        let hidden = encoder.last().map_or(obs, LinearLayer::outputs);
        check_chain(&head, hidden, "QNetwork head")?;
        let actions = head.last().map(LinearLayer::outputs).unwrap_or(0);
        match (&noise, strategy) {
            (NoiseParams::None, Strategy::Plain | Strategy::EpsilonGreedy) => {}
            (NoiseParams::NoisyNet(sig), Strategy::NoisyNet) => {
                if sig.len() != head.len() {
                    return Err(Error::InvalidConfig("one sigma layer per head layer".to_string()));
                }
                for (s, h) in sig.iter().zip(&head) {
                    s.sigma_w.ensure_shape("NoisyNet sigma_w", h.w.shape())?;
                    s.sigma_b.ensure_shape("NoisyNet sigma_b", h.b.shape())?;
                }
            }
            (NoiseParams::Sane(module), Strategy::SimpleSane | Strategy::QSane) => {
                let expected = if strategy == Strategy::QSane { hidden + actions } else { hidden };
                if module.input_width() != expected {
                    return Err(Error::ShapeMismatch {
                        context: "SANE module input",
                        expected: (expected, 1),
                        found: (module.input_width(), 1),
                    });
                }
            }
            _ => {
                return Err(Error::InvalidConfig(alloc::format!(
                    "noise parameters do not match strategy {strategy}"
                )))
            }
        }
        Ok(QNetwork {
            strategy,
            encoder,
            head,
            noise,
        })
    }

    /// Same encoder and head under another strategy, with every noise scale
    /// zero (NoisyNet sigmas and all SANE module parameters).
    pub fn with_strategy(&self, strategy: Strategy, sane_hidden: usize) -> Result<Self> {
        let noise = match strategy {
            Strategy::Plain | Strategy::EpsilonGreedy => NoiseParams::None,
            Strategy::NoisyNet => NoiseParams::NoisyNet(
                self.head
                    .iter()
                    .map(|l| SigmaLayer::constant(l.inputs(), l.outputs(), 0.0))
                    .collect(),
            ),
            Strategy::SimpleSane => NoiseParams::Sane(SaneModule::zeros(self.hidden_width(), sane_hidden)),
            Strategy::QSane => NoiseParams::Sane(SaneModule::zeros(self.hidden_width() + self.actions(), sane_hidden)),
        };
        let mut net = QNetwork::from_parts(strategy, self.encoder.clone(), self.head.clone(), noise)?;
        net.zero_grad();
        Ok(net)
    }

    pub fn obs_width(&self) -> usize {
        self.encoder.first().unwrap_or(&self.head[0]).inputs()
    }

    /// Width of `h(s)`.
    pub fn hidden_width(&self) -> usize {
        self.encoder.last().map_or(self.obs_width(), LinearLayer::outputs)
    }

    pub fn actions(&self) -> usize {
        self.head.last().map_or(0, LinearLayer::outputs)
    }

    pub fn sane_module(&self) -> Option<&SaneModule> {
        match &self.noise {
            NoiseParams::Sane(m) => Some(m),
            _ => None,
        }
    }

    /// Sets every exploration noise scale to zero.
    pub fn zero_noise(&mut self) {
        self.visit_mut(|id, p, _| {
            if id.is_noise() {
                p.fill(0.0);
            }
        });
    }

    pub fn zero_grad(&mut self) {
        self.visit_mut(|_, _, g| g.fill(0.0));
    }

    /// Visits `(name, parameter, gradient)` in a fixed order: encoder, head,
    /// then noise parameters; weights before biases within a layer.
    pub fn visit<F: FnMut(ParamId, &Mat, &Mat)>(&self, mut f: F) {
        let id = |group, layer, bias| ParamId { group, layer, bias };
        for (k, l) in self.encoder.iter().enumerate() {
            f(id(ParamGroup::Encoder, k, false), &l.w, &l.grad_w);
            f(id(ParamGroup::Encoder, k, true), &l.b, &l.grad_b);
        }
        for (k, l) in self.head.iter().enumerate() {
            f(id(ParamGroup::Head, k, false), &l.w, &l.grad_w);
            f(id(ParamGroup::Head, k, true), &l.b, &l.grad_b);
        }
        match &self.noise {
            NoiseParams::None => {}
            NoiseParams::NoisyNet(sig) => {
                for (k, s) in sig.iter().enumerate() {
                    f(id(ParamGroup::NoisySigma, k, false), &s.sigma_w, &s.grad_w);
                    f(id(ParamGroup::NoisySigma, k, true), &s.sigma_b, &s.grad_b);
                }
            }
            NoiseParams::Sane(m) => {
                for (k, l) in [&m.hidden, &m.output].into_iter().enumerate() {
                    f(id(ParamGroup::Sane, k, false), &l.w, &l.grad_w);
                    f(id(ParamGroup::Sane, k, true), &l.b, &l.grad_b);
                }
            }
        }
    }

    pub fn visit_mut<F: FnMut(ParamId, &mut Mat, &mut Mat)>(&mut self, mut f: F) {
        let id = |group, layer, bias| ParamId { group, layer, bias };
        for (k, l) in self.encoder.iter_mut().enumerate() {
            f(id(ParamGroup::Encoder, k, false), &mut l.w, &mut l.grad_w);
            f(id(ParamGroup::Encoder, k, true), &mut l.b, &mut l.grad_b);
        }
        for (k, l) in self.head.iter_mut().enumerate() {
            f(id(ParamGroup::Head, k, false), &mut l.w, &mut l.grad_w);
            f(id(ParamGroup::Head, k, true), &mut l.b, &mut l.grad_b);
        }
        match &mut self.noise {
            NoiseParams::None => {}
            NoiseParams::NoisyNet(sig) => {
                for (k, s) in sig.iter_mut().enumerate() {
                    f(id(ParamGroup::NoisySigma, k, false), &mut s.sigma_w, &mut s.grad_w);
                    f(id(ParamGroup::NoisySigma, k, true), &mut s.sigma_b, &mut s.grad_b);
                }
            }
            NoiseParams::Sane(m) => {
                for (k, l) in [&mut m.hidden, &mut m.output].into_iter().enumerate() {
                    f(id(ParamGroup::Sane, k, false), &mut l.w, &mut l.grad_w);
                    f(id(ParamGroup::Sane, k, true), &mut l.b, &mut l.grad_b);
                }
            }
        }
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(|_, p, _| n += p.len());
        n
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit(|_, p, _| out.extend_from_slice(p.as_slice()));
        out
    }

    pub fn grads_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit(|_, _, g| out.extend_from_slice(g.as_slice()));
        out
    }

    /// One flag per flat coordinate, true for exploration-noise parameters.
    pub fn noise_mask(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit(|id, p, _| out.extend(core::iter::repeat(id.is_noise()).take(p.len())));
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.param_count();
        if flat.len() != n {
            return Err(Error::ShapeMismatch {
                context: "set_params_flat",
                expected: (n, 1),
                found: (flat.len(), 1),
            });
        }
        let mut at = 0;
        self.visit_mut(|_, p, _| {
            let len = p.len();
            p.as_mut_slice().copy_from_slice(&flat[at..at + len]);
            at += len;
        });
        Ok(())
    }
}

/// `h(s)`: the encoder output, rectified after every layer.
pub fn encoder_forward(params: &QNetwork, s: &Mat) -> Result<Mat> {
    s.ensure_shape("encoder_forward", (params.obs_width(), 1))?;
    let mut trace = Trace::default();
    Ok(Mat::column(&dense_forward(&params.encoder, s.as_slice(), true, &mut trace)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::finite_diff_grad;

    fn layer(w: &[&[f64]], b: &[f64]) -> LinearLayer {
        LinearLayer::from_parts(Mat::from_rows(w), Mat::column(b)).unwrap()
    }

    #[test]
    fn glorot_unit_layer_bound() {
        let l = glorot_uniform_init(&mut Rng::new(1), LinearLayer::zeros(1, 1));
        assert!(l.w.get(0, 0).abs() <= 3f64.sqrt());
        assert_eq!(l.b.get(0, 0), 0.0);
    }

    #[test]
    fn glorot_variance_matches_uniform_oracle() {
        // Var(U(-a, a)) = (2a)^2 / 12 = 2 / (in + out).
        let mut rng = Rng::new(5);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| glorot_uniform_init(&mut rng, LinearLayer::zeros(300, 300)).w.get(0, 0))
            .take(n)
            .collect::<Vec<_>>();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let expected = 1.0 / 300.0;
        assert!((var - expected).abs() / expected < 0.05, "{var}");
    }

    #[test]
    fn he_normal_variance_and_shape() {
        let mut rng = Rng::new(6);
        let n = 100_000;
        let mut xs = Vec::with_capacity(n);
        while xs.len() < n {
            let l = he_normal_init(&mut rng, LinearLayer::zeros(2, 1000));
            xs.extend_from_slice(l.w.as_slice());
        }
        let var = xs[..n].iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((var - 1.0).abs() < 0.05, "{var}");

        let l = he_normal_init(&mut Rng::new(7), LinearLayer::zeros(8, 1));
        assert_eq!(l.w.len(), 8);
        assert!(l.w.is_finite());
        assert_eq!(l.b.as_slice(), &[0.0]);
    }

    #[test]
    fn init_is_reproducible() {
        let a = glorot_uniform_init(&mut Rng::new(3), LinearLayer::zeros(4, 5));
        let b = glorot_uniform_init(&mut Rng::new(3), LinearLayer::zeros(4, 5));
        assert_eq!(a, b);
        let a = he_normal_init(&mut Rng::new(3), LinearLayer::zeros(4, 5));
        let b = he_normal_init(&mut Rng::new(3), LinearLayer::zeros(4, 5));
        assert_eq!(a, b);
    }

    #[test]
    fn mlp_hand_examples() {
        let (y, _) = mlp_forward(&[layer(&[&[2.0]], &[1.0])], &Mat::column(&[3.0]), false).unwrap();
        assert_eq!(y.as_slice(), &[7.0]);

        let layers = [layer(&[&[1.0], &[-1.0]], &[0.0, 0.0]), layer(&[&[1.0, 1.0]], &[0.0])];
        let (y, _) = mlp_forward(&layers, &Mat::column(&[2.0]), false).unwrap();
        assert_eq!(y.as_slice(), &[2.0]);

        assert!(mlp_forward(&layers, &Mat::column(&[2.0, 1.0]), false).is_err());
    }

    fn flat(layers: &[LinearLayer]) -> Vec<f64> {
        layers
            .iter()
            .flat_map(|l| l.w.as_slice().iter().chain(l.b.as_slice()).copied())
            .collect()
    }

    fn unflat(layers: &mut [LinearLayer], p: &[f64]) {
        let mut at = 0;
        for l in layers {
            for v in l.w.as_mut_slice().iter_mut().chain(l.b.as_mut_slice()) {
                *v = p[at];
                at += 1;
            }
        }
    }

    #[test]
    fn mlp_backward_matches_finite_differences() {
        let mut rng = Rng::new(11);
        let mut checked = 0;
        while checked < 100 {
            let mut layers: Vec<LinearLayer> = [(3, 4), (4, 3), (3, 2)]
                .iter()
                .map(|&(i, o)| {
                    let mut l = glorot_uniform_init(&mut rng, LinearLayer::zeros(i, o));
                    for b in l.b.as_mut_slice() {
                        *b = rng.uniform(-0.5, 0.5);
                    }
                    l
                })
                .collect();
            let x = Mat::column(&[rng.normal(), rng.normal(), rng.normal()]);
            let target = [rng.normal(), rng.normal()];
            let (_, cache) = mlp_forward(&layers, &x, true).unwrap();
            let cache = cache.unwrap();
            if cache.trace.margin < 1e-3 {
                continue;
            }
            let loss = |layers: &[LinearLayer]| {
                let (y, _) = mlp_forward(layers, &x, false).unwrap();
                y.as_slice().iter().zip(&target).map(|(a, t)| (a - t) * (a - t)).sum::<f64>()
            };
            let (y, _) = mlp_forward(&layers, &x, false).unwrap();
            let dy: Vec<f64> = y.as_slice().iter().zip(&target).map(|(a, t)| 2.0 * (a - t)).collect();
            mlp_backward(&mut layers, &cache, &Mat::column(&dy)).unwrap();
            let analytic: Vec<f64> = layers
                .iter()
                .flat_map(|l| l.grad_w.as_slice().iter().chain(l.grad_b.as_slice()).copied())
                .collect();
            let base = flat(&layers);
            let mut scratch = layers.clone();
            let numeric = finite_diff_grad(
                |p| {
                    unflat(&mut scratch, p);
                    loss(&scratch)
                },
                &base,
                1e-5,
            )
            .unwrap();
            for (a, n) in analytic.iter().zip(&numeric) {
                let diff = (a - n).abs();
                assert!(diff <= 1e-7 || diff <= 1e-4 * a.abs().max(n.abs()), "{a} vs {n}");
            }
            checked += 1;
        }
    }

    #[test]
    fn encoder_examples() {
        let s = Mat::column(&[1.0, -1.0]);
        let zero = QNetwork::from_parts(
            Strategy::Plain,
            vec![layer(&[&[0.0, 0.0], &[0.0, 0.0]], &[0.5, -0.5])],
            vec![LinearLayer::zeros(2, 2)],
            NoiseParams::None,
        )
        .unwrap();
        assert_eq!(encoder_forward(&zero, &s).unwrap().as_slice(), &[0.5, 0.0]);

        let ident = QNetwork::from_parts(
            Strategy::Plain,
            vec![layer(&[&[1.0, 0.0], &[0.0, 1.0]], &[0.0, 0.0])],
            vec![LinearLayer::zeros(2, 2)],
            NoiseParams::None,
        )
        .unwrap();
        assert_eq!(encoder_forward(&ident, &s).unwrap().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn encoder_output_nonnegative() {
        let mut rng = Rng::new(2);
        let net = QNetwork::init(Strategy::Plain, &NetShape::new(3, 2), &mut rng).unwrap();
        for _ in 0..50 {
            let s = Mat::column(&[rng.normal(), rng.normal(), rng.normal()]);
            assert!(encoder_forward(&net, &s).unwrap().as_slice().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn flat_round_trip_and_mask() {
        let mut rng = Rng::new(4);
        for st in Strategy::ALL {
            let mut shape = NetShape::new(3, 2);
            shape.sane_hidden = 5;
            let mut net = QNetwork::init(st, &shape, &mut rng).unwrap();
            let p = net.params_flat();
            assert_eq!(p.len(), net.param_count());
            let doubled: Vec<f64> = p.iter().map(|v| v * 2.0).collect();
            net.set_params_flat(&doubled).unwrap();
            assert_eq!(net.params_flat(), doubled);
            let noisy = net.noise_mask().iter().filter(|&&m| m).count();
            assert_eq!(noisy > 0, st.is_noisy());
        }
    }

    #[test]
    fn strategy_names_round_trip() {
        for st in Strategy::ALL {
            assert_eq!(st.name().parse::<Strategy>().unwrap(), st);
        }
        assert!("boltzmann".parse::<Strategy>().is_err());
    }

    #[test]
    fn from_parts_rejects_mismatched_noise() {
        let head = vec![LinearLayer::zeros(2, 2)];
        assert!(QNetwork::from_parts(Strategy::NoisyNet, vec![], head.clone(), NoiseParams::None).is_err());
        let bad = SaneModule::zeros(3, 4);
        assert!(QNetwork::from_parts(Strategy::SimpleSane, vec![], head, NoiseParams::Sane(bad)).is_err());
    }
}
