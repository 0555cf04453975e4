use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::replay::Transition;
use crate::envs::argmax;
use crate::nncore::{QNetwork, Strategy};
use crate::noisy::{backward_example, forward_example, q_forward, ForwardMode};
use crate::numkit::{Mat, Rng};
use crate::{Error, Result};

/// `r` for terminal transitions, otherwise `r + γ max_a Q_target(s', a)`.
///
/// The target network runs in noisy mode, so NoisyNet and SANE targets see
/// freshly perturbed head parameters; plain and ε-greedy targets are clean.
pub fn td_target(t: &Transition, target: &QNetwork, rng: &mut Rng, gamma: f64) -> Result<f64> {
    if t.done {
        return Ok(t.r);
    }
    let out = q_forward(target, &t.s_next, rng, ForwardMode::Noisy)?;
    let best = out.q.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(t.r + gamma * best)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LossOptions {
    /// Feed `h(s')` rather than `h(s)` to the Q-network's noise module.
    pub sigma_from_next_state: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchOutcome {
    pub loss: f64,
    /// `|σ|` of the Q-network pass for every example (SANE only).
    pub abs_sigmas: Vec<f64>,
    /// Smallest distance of a rectified pre-activation from zero over every
    /// Q-network pass; finite differences are unreliable when tiny.
    pub relu_margin: f64,
}

impl BatchOutcome {
    pub fn mean_abs_sigma(&self) -> Option<f64> {
        if self.abs_sigmas.is_empty() {
            None
        } else {
            Some(self.abs_sigmas.iter().sum::<f64>() / self.abs_sigmas.len() as f64)
        }
    }
}

fn check(q: &QNetwork, t: &Transition) -> Result<()> {
    t.s.ensure_shape("transition state", (q.obs_width(), 1))?;
    t.s_next.ensure_shape("transition next state", (q.obs_width(), 1))?;
    if t.a >= q.actions() {
        return Err(Error::InvalidArgument(format!("action {} out of range", t.a)));
    }
    Ok(())
}

/// Mean squared TD error over the batch. Gradients with respect to every
/// Q-network parameter (encoder, head, NoisyNet sigmas, SANE module) replace
/// the previous contents of the `grad_*` fields.
///
/// Per example, the Q-network draws its noise first and the target network
/// second, both from `rng`.
pub fn batch_loss_and_grads(
    q: &mut QNetwork,
    target: &QNetwork,
    batch: &[&Transition],
    rng: &mut Rng,
    gamma: f64,
    opts: LossOptions,
) -> Result<BatchOutcome> {
    run_batch(q, target, batch, rng, gamma, opts, true)
}

/// The loss of [`batch_loss_and_grads`] without touching gradients.
pub fn batch_loss(
    q: &QNetwork,
    target: &QNetwork,
    batch: &[&Transition],
    rng: &mut Rng,
    gamma: f64,
    opts: LossOptions,
) -> Result<f64> {
    let mut scratch = q.clone();
    Ok(run_batch(&mut scratch, target, batch, rng, gamma, opts, false)?.loss)
}

fn run_batch(
    q: &mut QNetwork,
    target: &QNetwork,
    batch: &[&Transition],
    rng: &mut Rng,
    gamma: f64,
    opts: LossOptions,
    grads: bool,
) -> Result<BatchOutcome> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    for t in batch {
        check(q, t)?;
    }
    if grads {
        q.zero_grad();
    }
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut abs_sigmas = Vec::new();
    let mut margin = f64::INFINITY;
    let mut dq = vec![0.0; q.actions()];
    for t in batch {
        let sigma_state = opts.sigma_from_next_state.then(|| t.s_next.as_slice());
        let pass = forward_example(q, t.s.as_slice(), sigma_state, ForwardMode::Noisy, rng);
        let y = td_target(t, target, rng, gamma)?;
        let diff = pass.q[t.a] - y;
        loss += diff * diff;
        if let Some(sp) = &pass.sane {
            abs_sigmas.push(libm::fabs(sp.sigma));
        }
        margin = margin.min(pass.relu_margin());
        if grads {
            dq.fill(0.0);
            dq[t.a] = 2.0 * diff * scale;
            backward_example(q, &pass, &dq);
        }
    }
    Ok(BatchOutcome {
        loss: loss * scale,
        abs_sigmas,
        relu_margin: margin,
    })
}

/// Greedy action under the strategy's exploration rule. NoisyNet and SANE
/// act greedily on freshly perturbed values; ε-greedy takes a uniformly
/// random action with probability `epsilon`, otherwise the clean argmax.
/// Ties go to the lowest index.
pub fn select_action(q: &QNetwork, s: &Mat, rng: &mut Rng, epsilon: f64) -> Result<usize> {
    match q.strategy {
        Strategy::EpsilonGreedy => {
            if rng.next_f64() < epsilon {
                s.ensure_shape("select_action", (q.obs_width(), 1))?;
                Ok(rng.below(q.actions()))
            } else {
                Ok(argmax(q_forward(q, s, rng, ForwardMode::Clean)?.q.as_slice()))
            }
        }
        _ => Ok(argmax(q_forward(q, s, rng, ForwardMode::Noisy)?.q.as_slice())),
    }
}

/// Deep copy of every parameter, noise parameters included.
pub fn target_sync(q: &QNetwork) -> QNetwork {
    q.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::{LinearLayer, NetShape, NoiseParams};
    use crate::numkit::finite_diff_grad;

    fn layer(w: &[&[f64]], b: &[f64]) -> LinearLayer {
        LinearLayer::from_parts(Mat::from_rows(w), Mat::column(b)).unwrap()
    }

    fn single_weight(w: f64) -> QNetwork {
        QNetwork::from_parts(Strategy::Plain, vec![], vec![layer(&[&[w]], &[0.0])], NoiseParams::None).unwrap()
    }

    fn tr(s: &[f64], a: usize, r: f64, s2: &[f64], done: bool) -> Transition {
        Transition {
            s: Mat::column(s),
            a,
            r,
            s_next: Mat::column(s2),
            done,
        }
    }

    #[test]
    fn terminal_target_is_reward() {
        let net = single_weight(3.0);
        let t = tr(&[1.0], 0, 0.5, &[1.0], true);
        assert_eq!(td_target(&t, &net, &mut Rng::new(0), 0.99).unwrap(), 0.5);
        let t = tr(&[1.0], 0, 0.25, &[1.0], false);
        assert_eq!(td_target(&t, &net, &mut Rng::new(0), 0.0).unwrap(), 0.25);
    }

    #[test]
    fn two_state_target_by_hand() {
        // one-hot states, Q(s) = W s with W = [[1, 2], [3, -1]]
        let net = QNetwork::from_parts(
            Strategy::Plain,
            vec![],
            vec![layer(&[&[1.0, 2.0], &[3.0, -1.0]], &[0.0, 0.0])],
            NoiseParams::None,
        )
        .unwrap();
        let t = tr(&[1.0, 0.0], 1, 0.1, &[0.0, 1.0], false);
        // Q(s1) = (2, -1) so T = 0.1 + 0.9 * 2
        let y = td_target(&t, &net, &mut Rng::new(0), 0.9).unwrap();
        assert!((y - 1.9).abs() < 1e-15);
    }

    #[test]
    fn single_weight_loss_and_gradient() {
        let mut net = single_weight(0.0);
        let target = net.clone();
        let t = tr(&[1.0], 0, 1.0, &[1.0], true);
        let out = batch_loss_and_grads(&mut net, &target, &[&t], &mut Rng::new(0), 0.99, LossOptions::default())
            .unwrap();
        assert_eq!(out.loss, 1.0);
        assert_eq!(net.head[0].grad_w.as_slice(), &[-2.0]);
        assert_eq!(out.mean_abs_sigma(), None);
    }

    #[test]
    fn fixed_point_has_zero_loss_and_gradient() {
        let mut rng = Rng::new(3);
        for st in Strategy::ALL {
            let mut shape = NetShape::new(2, 2);
            shape.sane_hidden = 4;
            let mut net = QNetwork::init(st, &shape, &mut rng).unwrap();
            net.zero_noise();
            let target = net.clone();
            let batch: Vec<Transition> = (0..4)
                .map(|k| {
                    let s = [rng.normal(), rng.normal()];
                    let q = q_forward(&net, &Mat::column(&s), &mut rng, ForwardMode::Clean).unwrap();
                    tr(&s, k % 2, q.q.as_slice()[k % 2], &s, true)
                })
                .collect();
            let refs: Vec<&Transition> = batch.iter().collect();
            let out = batch_loss_and_grads(&mut net, &target, &refs, &mut rng, 0.99, LossOptions::default()).unwrap();
            assert_eq!(out.loss, 0.0, "{st}");
            assert!(net.grads_flat().iter().all(|&g| g == 0.0), "{st}");
        }
    }

    fn random_batch(rng: &mut Rng, n: usize, width: usize, actions: usize) -> Vec<Transition> {
        (0..n)
            .map(|_| {
                let s: Vec<f64> = (0..width).map(|_| rng.normal()).collect();
                let s2: Vec<f64> = (0..width).map(|_| rng.normal()).collect();
                let a = rng.below(actions);
                tr(&s, a, rng.uniform(-1.0, 1.0), &s2, rng.next_f64() < 0.3)
            })
            .collect()
    }

    #[test]
    fn sane_gradients_match_finite_differences() {
        let mut rng = Rng::new(12);
        let mut checked = 0;
        for opts in [LossOptions::default(), LossOptions { sigma_from_next_state: true }] {
            for st in [Strategy::SimpleSane, Strategy::QSane] {
                let mut done = 0;
                while done < 10 {
                    let mut shape = NetShape::new(3, 2);
                    shape.encoder = vec![4];
                    shape.head_hidden = vec![3];
                    shape.sane_hidden = 5;
                    let mut net = QNetwork::init(st, &shape, &mut rng).unwrap();
                    net.visit_mut(|id, p, _| {
                        if id.bias {
                            for v in p.as_mut_slice() {
                                *v = 0.3 * rng.normal();
                            }
                        }
                    });
                    let target = QNetwork::init(st, &shape, &mut rng).unwrap();
                    let batch = random_batch(&mut rng, 4, 3, 2);
                    let refs: Vec<&Transition> = batch.iter().collect();
                    let seed = rng.next_u64();
                    let out =
                        batch_loss_and_grads(&mut net, &target, &refs, &mut Rng::new(seed), 0.9, opts).unwrap();
                    if out.relu_margin < 1e-3 {
                        continue;
                    }
                    let analytic = net.grads_flat();
                    let mut probe = net.clone();
                    let numeric = finite_diff_grad(
                        |p| {
                            probe.set_params_flat(p).unwrap();
                            batch_loss(&probe, &target, &refs, &mut Rng::new(seed), 0.9, opts).unwrap()
                        },
                        &net.params_flat(),
                        1e-5,
                    )
                    .unwrap();
                    for (a, n) in analytic.iter().zip(&numeric) {
                        let d = (a - n).abs();
                        assert!(d <= 1e-7 || d <= 1e-4 * a.abs().max(n.abs()), "{st}: {a} vs {n}");
                    }
                    done += 1;
                    checked += 1;
                }
            }
        }
        assert_eq!(checked, 40);
    }

    #[test]
    fn plain_argmax() {
        let net = QNetwork::from_parts(
            Strategy::Plain,
            vec![],
            vec![layer(&[&[0.1], &[0.9], &[0.3]], &[0.0, 0.0, 0.0])],
            NoiseParams::None,
        )
        .unwrap();
        assert_eq!(select_action(&net, &Mat::column(&[1.0]), &mut Rng::new(0), 0.0).unwrap(), 1);
    }

    #[test]
    fn full_epsilon_is_uniform() {
        let net = QNetwork::init(Strategy::EpsilonGreedy, &NetShape::new(2, 4), &mut Rng::new(1)).unwrap();
        let s = Mat::column(&[0.5, 0.5]);
        let mut rng = Rng::new(5);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[select_action(&net, &s, &mut rng, 1.0).unwrap()] += 1;
        }
        let se = (0.25f64 * 0.75 / n as f64).sqrt();
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() <= 3.0 * se, "{counts:?}");
        }
    }

    #[test]
    fn zeroed_sane_matches_clean_argmax() {
        let mut rng = Rng::new(6);
        for st in [Strategy::SimpleSane, Strategy::QSane, Strategy::NoisyNet] {
            let mut net = QNetwork::init(st, &NetShape::new(3, 4), &mut rng).unwrap();
            net.zero_noise();
            for _ in 0..50 {
                let s = Mat::column(&[rng.normal(), rng.normal(), rng.normal()]);
                let clean = argmax(q_forward(&net, &s, &mut rng, ForwardMode::Clean).unwrap().q.as_slice());
                assert_eq!(select_action(&net, &s, &mut rng, 0.0).unwrap(), clean);
            }
        }
    }

    #[test]
    fn target_sync_is_deep_copy() {
        let mut rng = Rng::new(8);
        let mut q = QNetwork::init(Strategy::QSane, &NetShape::new(3, 2), &mut rng).unwrap();
        let target = target_sync(&q);
        assert_eq!(target, q);
        assert_eq!(target_sync(&target), target);
        let before = target.params_flat();
        let doubled: Vec<f64> = q.params_flat().iter().map(|v| v * 2.0).collect();
        q.set_params_flat(&doubled).unwrap();
        assert_eq!(target.params_flat(), before);
    }
}
