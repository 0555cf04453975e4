//! Exploration noise: factored Gaussian sampling, NoisyNet layers and the
//! state-aware perturbation module.
//!
//! Every noisy forward pass draws one [`FactoredNoise`] per head layer, in
//! head order, each as `l` input draws followed by `m` output draws. SANE
//! strategies compute the single noise scale `σ(h(s))` before any draw and
//! share it across all head layers.

use alloc::vec;
use alloc::vec::Vec;

use crate::nncore::{affine, dense_backward, dense_forward, Dense, LinearLayer, NoiseParams, QNetwork, Strategy, Trace};
use crate::numkit::{standard_normal, Mat, Rng};
use crate::{Error, Result};

/// `sgn(x) * sqrt(|x|)`.
pub fn z_transform(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        libm::copysign(libm::sqrt(libm::fabs(x)), x)
    }
}

/// Rank-one noise for an `m x l` layer.
#[derive(Clone, Debug, PartialEq)]
pub struct FactoredNoise {
    /// `eps_w[i][j] = z(raw_m[i]) * z(raw_l[j])`
    pub eps_w: Mat,
    /// `eps_b[i] = z(raw_m[i])`
    pub eps_b: Mat,
    pub raw_l: Vec<f64>,
    pub raw_m: Vec<f64>,
}

impl FactoredNoise {
    /// Panics if either raw vector is empty.
    pub fn from_raw(raw_l: Vec<f64>, raw_m: Vec<f64>) -> Self {
        let zl: Vec<f64> = raw_l.iter().map(|&x| z_transform(x)).collect();
        let zm: Vec<f64> = raw_m.iter().map(|&x| z_transform(x)).collect();
        let mut eps_w = Mat::zeros(zm.len(), zl.len());
        for (i, &a) in zm.iter().enumerate() {
            for (j, &b) in zl.iter().enumerate() {
                eps_w.set(i, j, a * b);
            }
        }
        FactoredNoise {
            eps_w,
            eps_b: Mat::column(&zm),
            raw_l,
            raw_m,
        }
    }

    pub fn inputs(&self) -> usize {
        self.raw_l.len()
    }

    pub fn outputs(&self) -> usize {
        self.raw_m.len()
    }

    fn check(&self, context: &'static str, inputs: usize, outputs: usize) -> Result<()> {
        if self.inputs() != inputs || self.outputs() != outputs {
            return Err(Error::ShapeMismatch {
                context,
                expected: (outputs, inputs),
                found: (self.outputs(), self.inputs()),
            });
        }
        Ok(())
    }
}

/// Draws `l` then `m` standard normals. Panics if `l` or `m` is zero.
pub fn sample_factored(rng: &mut Rng, l: usize, m: usize) -> FactoredNoise {
    let raw_l = standard_normal(rng, l);
    let raw_m = standard_normal(rng, m);
    FactoredNoise::from_raw(raw_l, raw_m)
}

/// Learned per-parameter noise scales of one NoisyNet layer.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaLayer {
    pub sigma_w: Mat,
    pub sigma_b: Mat,
    pub grad_w: Mat,
    pub grad_b: Mat,
}

impl SigmaLayer {
    pub fn constant(inputs: usize, outputs: usize, value: f64) -> Self {
        let mut sigma_w = Mat::zeros(outputs, inputs);
        let mut sigma_b = Mat::zeros(outputs, 1);
        sigma_w.fill(value);
        sigma_b.fill(value);
        SigmaLayer {
            sigma_w,
            sigma_b,
            grad_w: Mat::zeros(outputs, inputs),
            grad_b: Mat::zeros(outputs, 1),
        }
    }

    fn accumulate(&mut self, x: &[f64], delta: &[f64], noise: &FactoredNoise) {
        let cols = x.len();
        let eps = noise.eps_w.as_slice();
        let gw = self.grad_w.as_mut_slice();
        for (i, &d) in delta.iter().enumerate() {
            for j in 0..cols {
                gw[i * cols + j] += d * x[j] * eps[i * cols + j];
            }
        }
        for ((g, &d), &e) in self.grad_b.as_mut_slice().iter_mut().zip(delta).zip(noise.eps_b.as_slice()) {
            *g += d * e;
        }
    }
}

/// Perturbation module: one ReLU hidden layer and a single linear output
/// read directly as the noise scale.
#[derive(Clone, Debug, PartialEq)]
pub struct SaneModule {
    pub hidden: LinearLayer,
    pub output: LinearLayer,
}

impl SaneModule {
    pub fn he_init(rng: &mut Rng, input_width: usize, hidden: usize) -> Self {
        use crate::nncore::he_normal_init;
        let h = he_normal_init(rng, LinearLayer::zeros(input_width, hidden));
        let o = he_normal_init(rng, LinearLayer::zeros(hidden, 1));
        SaneModule { hidden: h, output: o }
    }

    pub fn zeros(input_width: usize, hidden: usize) -> Self {
        SaneModule {
            hidden: LinearLayer::zeros(input_width, hidden),
            output: LinearLayer::zeros(hidden, 1),
        }
    }

    pub fn from_layers(hidden: LinearLayer, output: LinearLayer) -> Result<Self> {
        if output.outputs() != 1 || output.inputs() != hidden.outputs() {
            return Err(Error::ShapeMismatch {
                context: "SaneModule output",
                expected: (1, hidden.outputs()),
                found: output.w.shape(),
            });
        }
        Ok(SaneModule { hidden, output })
    }

    pub fn input_width(&self) -> usize {
        self.hidden.inputs()
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden.outputs()
    }

    fn layers(&self) -> [&LinearLayer; 2] {
        [&self.hidden, &self.output]
    }
}

impl<T: Dense + ?Sized> Dense for &T {
    fn inputs(&self) -> usize {
        (**self).inputs()
    }
    fn weights(&self) -> &[f64] {
        (**self).weights()
    }
    fn bias(&self) -> &[f64] {
        (**self).bias()
    }
}

/// Materialized perturbed weights `W~`, `b~` of one head layer.
#[derive(Clone, Debug)]
pub(crate) struct EffectiveLayer {
    inputs: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

impl EffectiveLayer {
    fn noisynet(mu: &LinearLayer, s: &SigmaLayer, n: &FactoredNoise) -> Self {
        let w = mu
            .w
            .as_slice()
            .iter()
            .zip(s.sigma_w.as_slice())
            .zip(n.eps_w.as_slice())
            .map(|((m, s), e)| m + s * e)
            .collect();
        let b = mu
            .b
            .as_slice()
            .iter()
            .zip(s.sigma_b.as_slice())
            .zip(n.eps_b.as_slice())
            .map(|((m, s), e)| m + s * e)
            .collect();
        EffectiveLayer {
            inputs: mu.inputs(),
            w,
            b,
        }
    }

    fn sane(layer: &LinearLayer, sigma: f64, n: &FactoredNoise) -> Self {
        let w = layer
            .w
            .as_slice()
            .iter()
            .zip(n.eps_w.as_slice())
            .map(|(w, e)| w + sigma * e)
            .collect();
        let b = layer
            .b
            .as_slice()
            .iter()
            .zip(n.eps_b.as_slice())
            .map(|(b, e)| b + sigma * e)
            .collect();
        EffectiveLayer {
            inputs: layer.inputs(),
            w,
            b,
        }
    }
}

impl Dense for EffectiveLayer {
    fn inputs(&self) -> usize {
        self.inputs
    }
    fn weights(&self) -> &[f64] {
        &self.w
    }
    fn bias(&self) -> &[f64] {
        &self.b
    }
}

fn column_input(x: &Mat, width: usize, context: &'static str) -> Result<()> {
    x.ensure_shape(context, (width, 1))
}

/// `y = (mu_w + sigma_w ⊙ eps_w) x + (mu_b + sigma_b ⊙ eps_b)`.
pub fn noisy_linear_forward(mu: &LinearLayer, sigma: &SigmaLayer, noise: &FactoredNoise, x: &Mat) -> Result<Mat> {
    sigma.sigma_w.ensure_shape("noisy_linear_forward sigma_w", mu.w.shape())?;
    sigma.sigma_b.ensure_shape("noisy_linear_forward sigma_b", mu.b.shape())?;
    noise.check("noisy_linear_forward noise", mu.inputs(), mu.outputs())?;
    column_input(x, mu.inputs(), "noisy_linear_forward input")?;
    let eff = EffectiveLayer::noisynet(mu, sigma, noise);
    Ok(Mat::column(&affine(&eff, x.as_slice())))
}

/// Accumulates gradients of mu and sigma for output gradient `dy`; returns
/// the input gradient.
pub fn noisy_linear_backward(
    mu: &mut LinearLayer,
    sigma: &mut SigmaLayer,
    noise: &FactoredNoise,
    x: &Mat,
    dy: &Mat,
) -> Result<Mat> {
    noisy_linear_forward(mu, sigma, noise, x)?;
    dy.ensure_shape("noisy_linear_backward dy", (mu.outputs(), 1))?;
    let eff = EffectiveLayer::noisynet(mu, sigma, noise);
    let dx = transpose_times(&eff, dy.as_slice());
    mu.accumulate(x.as_slice(), dy.as_slice());
    sigma.accumulate(x.as_slice(), dy.as_slice(), noise);
    Ok(Mat::column(&dx))
}

fn transpose_times<L: Dense>(layer: &L, dy: &[f64]) -> Vec<f64> {
    let cols = layer.inputs();
    let w = layer.weights();
    let mut dx = vec![0.0; cols];
    for (i, &d) in dy.iter().enumerate() {
        for (dxj, wij) in dx.iter_mut().zip(&w[i * cols..(i + 1) * cols]) {
            *dxj += wij * d;
        }
    }
    dx
}

fn sane_input(module: &SaneModule, h: &Mat, extra: Option<&Mat>) -> Result<Vec<f64>> {
    let mut input = h.as_slice().to_vec();
    if let Some(e) = extra {
        input.extend_from_slice(e.as_slice());
    }
    if h.cols() != 1 || extra.is_some_and(|e| e.cols() != 1) || input.len() != module.input_width() {
        return Err(Error::ShapeMismatch {
            context: "sane_sigma input",
            expected: (module.input_width(), 1),
            found: (input.len(), 1),
        });
    }
    Ok(input)
}

/// Raw module output for `concat(h, extra)`. The sign carries no meaning;
/// only `|σ|` affects the perturbation distribution.
pub fn sane_sigma(module: &SaneModule, h: &Mat, extra: Option<&Mat>) -> Result<f64> {
    let input = sane_input(module, h, extra)?;
    let mut trace = Trace::default();
    Ok(dense_forward(&module.layers(), &input, false, &mut trace)[0])
}

/// Accumulates module gradients for `d loss / d σ` and returns the gradient
/// with respect to `concat(h, extra)`.
pub fn sane_sigma_backward(module: &mut SaneModule, h: &Mat, extra: Option<&Mat>, dsigma: f64) -> Result<Mat> {
    let input = sane_input(module, h, extra)?;
    let mut trace = Trace::default();
    dense_forward(&module.layers(), &input, false, &mut trace);
    let (deltas, dx) = dense_backward(&module.layers(), &trace, &[dsigma], false);
    module.hidden.accumulate(&trace.inputs[0], &deltas[0]);
    module.output.accumulate(&trace.inputs[1], &deltas[1]);
    Ok(Mat::column(&dx))
}

/// `y = (W + σ eps_w) x + (b + σ eps_b)`.
pub fn sane_perturbed_forward(layer: &LinearLayer, sigma: f64, noise: &FactoredNoise, x: &Mat) -> Result<Mat> {
    noise.check("sane_perturbed_forward noise", layer.inputs(), layer.outputs())?;
    column_input(x, layer.inputs(), "sane_perturbed_forward input")?;
    let eff = EffectiveLayer::sane(layer, sigma, noise);
    Ok(Mat::column(&affine(&eff, x.as_slice())))
}

/// Accumulates `W`, `b` gradients and returns `(d loss / d x, d loss / d σ)`.
pub fn sane_perturbed_backward(
    layer: &mut LinearLayer,
    sigma: f64,
    noise: &FactoredNoise,
    x: &Mat,
    dy: &Mat,
) -> Result<(Mat, f64)> {
    sane_perturbed_forward(layer, sigma, noise, x)?;
    dy.ensure_shape("sane_perturbed_backward dy", (layer.outputs(), 1))?;
    let eff = EffectiveLayer::sane(layer, sigma, noise);
    let dx = transpose_times(&eff, dy.as_slice());
    layer.accumulate(x.as_slice(), dy.as_slice());
    Ok((Mat::column(&dx), sigma_gradient(x.as_slice(), dy.as_slice(), noise)))
}

/// `sum_ij dy_i x_j eps_w[i][j] + sum_i dy_i eps_b[i]`.
fn sigma_gradient(x: &[f64], dy: &[f64], noise: &FactoredNoise) -> f64 {
    let cols = x.len();
    let eps = noise.eps_w.as_slice();
    let eb = noise.eps_b.as_slice();
    let mut g = 0.0;
    for (i, &d) in dy.iter().enumerate() {
        let mut row = eb[i];
        for j in 0..cols {
            row += eps[i * cols + j] * x[j];
        }
        g += d * row;
    }
    g
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForwardMode {
    /// Unperturbed head.
    Clean,
    /// Strategy-dispatched perturbation; no-op for plain and ε-greedy.
    Noisy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QOutput {
    pub q: Mat,
    /// `|σ(h(s))|` when a SANE network ran in noisy mode.
    pub sigma: Option<f64>,
}

/// State of a single SANE noise-scale evaluation.
#[derive(Clone, Debug)]
pub(crate) struct SanePass {
    pub sigma: f64,
    trace: Trace,
    /// Q-SANE: clean head over the σ-source representation.
    clean: Option<Trace>,
    /// Encoder trace when σ is computed from a different state.
    source: Option<Trace>,
}

/// Everything a backward pass over one example needs.
#[derive(Clone, Debug)]
pub(crate) struct ExamplePass {
    enc: Trace,
    head_eff: Option<Vec<EffectiveLayer>>,
    noises: Vec<FactoredNoise>,
    head: Trace,
    pub sane: Option<SanePass>,
    pub q: Vec<f64>,
}

impl ExamplePass {
    /// Smallest distance of any rectified pre-activation from the kink.
    pub fn relu_margin(&self) -> f64 {
        let mut m = self.enc.margin.min(self.head.margin);
        if let Some(sp) = &self.sane {
            m = m.min(sp.trace.margin);
            if let Some(c) = &sp.clean {
                m = m.min(c.margin);
            }
            if let Some(s) = &sp.source {
                m = m.min(s.margin);
            }
        }
        m
    }
}

/// Forward pass for one observation. `sigma_state`, when given, is the state
/// whose representation feeds the SANE module instead of `s`.
///
/// Widths are assumed valid; public callers check them first.
pub(crate) fn forward_example(
    net: &QNetwork,
    s: &[f64],
    sigma_state: Option<&[f64]>,
    mode: ForwardMode,
    rng: &mut Rng,
) -> ExamplePass {
    let mut enc = Trace::default();
    let h = dense_forward(&net.encoder, s, true, &mut enc);
    let mut head = Trace::default();
    match (mode, &net.noise) {
        (ForwardMode::Clean, _) | (_, NoiseParams::None) => {
            let q = dense_forward(&net.head, &h, false, &mut head);
            ExamplePass {
                enc,
                head_eff: None,
                noises: Vec::new(),
                head,
                sane: None,
                q,
            }
        }
        (ForwardMode::Noisy, NoiseParams::NoisyNet(sigmas)) => {
            let mut noises = Vec::with_capacity(net.head.len());
            let mut eff = Vec::with_capacity(net.head.len());
            for (mu, sig) in net.head.iter().zip(sigmas) {
                let n = sample_factored(rng, mu.inputs(), mu.outputs());
                eff.push(EffectiveLayer::noisynet(mu, sig, &n));
                noises.push(n);
            }
            let q = dense_forward(&eff, &h, false, &mut head);
            ExamplePass {
                enc,
                head_eff: Some(eff),
                noises,
                head,
                sane: None,
                q,
            }
        }
        (ForwardMode::Noisy, NoiseParams::Sane(module)) => {
            let (src_h, source) = match sigma_state {
                Some(s2) => {
                    let mut t = Trace::default();
                    (dense_forward(&net.encoder, s2, true, &mut t), Some(t))
                }
                None => (h.clone(), None),
            };
            let (input, clean) = if net.strategy == Strategy::QSane {
                let mut ct = Trace::default();
                let qc = dense_forward(&net.head, &src_h, false, &mut ct);
                let mut input = src_h;
                input.extend_from_slice(&qc);
                (input, Some(ct))
            } else {
                (src_h, None)
            };
            let mut mt = Trace::default();
            let sigma = dense_forward(&module.layers(), &input, false, &mut mt)[0];
            let mut noises = Vec::with_capacity(net.head.len());
            let mut eff = Vec::with_capacity(net.head.len());
            for layer in &net.head {
                let n = sample_factored(rng, layer.inputs(), layer.outputs());
                eff.push(EffectiveLayer::sane(layer, sigma, &n));
                noises.push(n);
            }
            let q = dense_forward(&eff, &h, false, &mut head);
            ExamplePass {
                enc,
                head_eff: Some(eff),
                noises,
                head,
                sane: Some(SanePass {
                    sigma,
                    trace: mt,
                    clean,
                    source,
                }),
                q,
            }
        }
    }
}

/// Accumulates every parameter gradient of `net` for `d loss / d q = dq`.
pub(crate) fn backward_example(net: &mut QNetwork, pass: &ExamplePass, dq: &[f64]) {
    let hidden_width = net.hidden_width();
    let QNetwork {
        encoder, head, noise, ..
    } = net;
    let (deltas, mut dh) = match &pass.head_eff {
        Some(eff) => dense_backward(eff, &pass.head, dq, false),
        None => dense_backward(head.as_slice(), &pass.head, dq, false),
    };
    let mut dsigma = 0.0;
    for (k, layer) in head.iter_mut().enumerate() {
        let x = &pass.head.inputs[k];
        layer.accumulate(x, &deltas[k]);
        if pass.head_eff.is_some() {
            match noise {
                NoiseParams::NoisyNet(sig) => sig[k].accumulate(x, &deltas[k], &pass.noises[k]),
                NoiseParams::Sane(_) => dsigma += sigma_gradient(x, &deltas[k], &pass.noises[k]),
                NoiseParams::None => {}
            }
        }
    }
    if let (Some(sp), NoiseParams::Sane(module)) = (&pass.sane, noise) {
        let (md, dinput) = dense_backward(&module.layers(), &sp.trace, &[dsigma], false);
        module.hidden.accumulate(&sp.trace.inputs[0], &md[0]);
        module.output.accumulate(&sp.trace.inputs[1], &md[1]);
        let mut dsrc = dinput[..hidden_width].to_vec();
        if let Some(ct) = &sp.clean {
            let (cd, dhc) = dense_backward(head.as_slice(), ct, &dinput[hidden_width..], false);
            for (k, layer) in head.iter_mut().enumerate() {
                layer.accumulate(&ct.inputs[k], &cd[k]);
            }
            for (a, b) in dsrc.iter_mut().zip(&dhc) {
                *a += b;
            }
        }
        match &sp.source {
            Some(src) => backward_encoder(encoder, src, &dsrc),
            None => {
                for (a, b) in dh.iter_mut().zip(&dsrc) {
                    *a += b;
                }
            }
        }
    }
    backward_encoder(encoder, &pass.enc, &dh);
}

fn backward_encoder(encoder: &mut [LinearLayer], trace: &Trace, dh: &[f64]) {
    if encoder.is_empty() {
        return;
    }
    let (deltas, _) = dense_backward(&*encoder, trace, dh, true);
    for (k, layer) in encoder.iter_mut().enumerate() {
        layer.accumulate(&trace.inputs[k], &deltas[k]);
    }
}

/// Action values for `s`. Noisy mode draws fresh factored noise per head
/// layer; Q-SANE feeds `concat(h, Q_clean(s))` to its module.
pub fn q_forward(params: &QNetwork, s: &Mat, rng: &mut Rng, mode: ForwardMode) -> Result<QOutput> {
    s.ensure_shape("q_forward", (params.obs_width(), 1))?;
    let pass = forward_example(params, s.as_slice(), None, mode, rng);
    Ok(QOutput {
        q: Mat::column(&pass.q),
        sigma: pass.sane.as_ref().map(|sp| libm::fabs(sp.sigma)),
    })
}

/// Raw noise scale a SANE network assigns to `s`. No noise is drawn.
pub fn state_sigma(params: &QNetwork, s: &Mat) -> Result<f64> {
    let module = params.sane_module().ok_or(Error::NotSane)?;
    s.ensure_shape("state_sigma", (params.obs_width(), 1))?;
    let mut trace = Trace::default();
    let mut input = dense_forward(&params.encoder, s.as_slice(), true, &mut trace);
    if params.strategy == Strategy::QSane {
        let q = dense_forward(&params.head, &input, false, &mut trace);
        input.extend_from_slice(&q);
    }
    Ok(dense_forward(&module.layers(), &input, false, &mut trace)[0])
}
