use alloc::vec::Vec;

use crate::agent::{batch_loss, batch_loss_and_grads, LossOptions, Transition};
use crate::nncore::{NetShape, ParamGroup, QNetwork, Strategy};
use crate::numkit::{finite_diff_grad, Mat, Rng, DEFAULT_FD_STEP};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckOptions {
    pub nets_per_strategy: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Networks with a rectified pre-activation closer than this to zero
    /// are redrawn, since central differences straddling the kink are
    /// meaningless.
    pub min_relu_margin: f64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            nets_per_strategy: 100,
            batch_size: 4,
            seed: 0,
            step: DEFAULT_FD_STEP,
            rel_tol: 1e-4,
            abs_tol: 1e-7,
            min_relu_margin: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub strategy: Strategy,
    pub nets: usize,
    /// Networks redrawn because of a near-kink activation.
    pub redrawn: usize,
    pub coords: usize,
    pub failures: usize,
    /// Largest relative error among coordinates above the absolute floor.
    pub worst_rel: f64,
}

impl GradcheckReport {
    pub fn passed(&self, opts: &GradcheckOptions) -> bool {
        self.failures == 0 && self.nets == opts.nets_per_strategy
    }
}

fn tiny_net(strategy: Strategy, rng: &mut Rng) -> Result<QNetwork> {
    let mut shape = NetShape::new(3, 2);
    shape.encoder = alloc::vec![4];
    shape.head_hidden = alloc::vec![3];
    shape.sane_hidden = 5;
    let mut net = QNetwork::init(strategy, &shape, rng)?;
    // non-zero biases so the checks see every gradient term
    net.visit_mut(|id, p, _| {
        if id.bias && id.group != ParamGroup::NoisySigma {
            for v in p.as_mut_slice() {
                *v = 0.3 * rng.normal();
            }
        }
    });
    Ok(net)
}

fn random_batch(rng: &mut Rng, n: usize) -> Vec<Transition> {
    (0..n)
        .map(|_| Transition {
            s: Mat::column(&[rng.normal(), rng.normal(), rng.normal()]),
            a: rng.below(2),
            r: rng.uniform(-1.0, 1.0),
            s_next: Mat::column(&[rng.normal(), rng.normal(), rng.normal()]),
            done: rng.next_f64() < 0.25,
        })
        .collect()
}

/// Compares analytic batch-loss gradients with central differences on
/// random tiny networks, all noise draws frozen by reseeding.
pub fn gradcheck_suite(strategies: &[Strategy], opts: &GradcheckOptions) -> Result<Vec<GradcheckReport>> {
    if opts.nets_per_strategy == 0 || opts.batch_size == 0 {
        return Err(Error::InvalidArgument("gradcheck needs at least one network and example".into()));
    }
    let mut rng = Rng::new(opts.seed);
    let mut reports = Vec::new();
    for &strategy in strategies {
        let mut report = GradcheckReport {
            strategy,
            nets: 0,
            redrawn: 0,
            coords: 0,
            failures: 0,
            worst_rel: 0.0,
        };
        let max_attempts = opts.nets_per_strategy * 20;
        while report.nets < opts.nets_per_strategy && report.nets + report.redrawn < max_attempts {
            let mut net = tiny_net(strategy, &mut rng)?;
            let target = tiny_net(strategy, &mut rng)?;
            let batch = random_batch(&mut rng, opts.batch_size);
            let refs: Vec<&Transition> = batch.iter().collect();
            let seed = rng.next_u64();
            let lo = LossOptions::default();
            let out = batch_loss_and_grads(&mut net, &target, &refs, &mut Rng::new(seed), 0.9, lo)?;
            if out.relu_margin < opts.min_relu_margin {
                report.redrawn += 1;
                continue;
            }
            let analytic = net.grads_flat();
            let mut probe = net.clone();
            let numeric = finite_diff_grad(
                |p| match probe.set_params_flat(p) {
                    Ok(()) => batch_loss(&probe, &target, &refs, &mut Rng::new(seed), 0.9, lo).unwrap_or(f64::NAN),
                    Err(_) => f64::NAN,
                },
                &net.params_flat(),
                opts.step,
            )?;
            for (a, n) in analytic.iter().zip(&numeric) {
                let err = libm::fabs(a - n);
                report.coords += 1;
                if err <= opts.abs_tol {
                    continue;
                }
                let rel = err / libm::fmax(libm::fabs(*a), libm::fabs(*n));
                report.worst_rel = libm::fmax(report.worst_rel, rel);
                if rel > opts.rel_tol {
                    report.failures += 1;
                }
            }
            report.nets += 1;
        }
        reports.push(report);
    }
    Ok(reports)
}
