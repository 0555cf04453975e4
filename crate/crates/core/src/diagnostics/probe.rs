use alloc::vec::Vec;

use crate::envs::{ProbeState, RiskLabel};
use crate::nncore::QNetwork;
use crate::noisy::state_sigma;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SigmaRecord {
    pub state: usize,
    pub label: RiskLabel,
    pub abs_sigma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SigmaProbeReport {
    pub records: Vec<SigmaRecord>,
}

impl SigmaProbeReport {
    /// Mean `|σ|` over states carrying `label`, if any.
    pub fn mean_for(&self, label: RiskLabel) -> Option<f64> {
        let (sum, n) = self
            .records
            .iter()
            .filter(|r| r.label == label)
            .fold((0.0, 0usize), |(s, n), r| (s + r.abs_sigma, n + 1));
        (n > 0).then(|| sum / n as f64)
    }
}

/// Noise-free `|σ(s)|` for each state.
pub fn sigma_probe(params: &QNetwork, states: &[ProbeState]) -> Result<SigmaProbeReport> {
    if !params.strategy.is_sane() {
        return Err(Error::NotSane);
    }
    let records = states
        .iter()
        .map(|p| {
            Ok(SigmaRecord {
                state: p.id,
                label: p.label,
                abs_sigma: libm::fabs(state_sigma(params, &p.observation)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SigmaProbeReport { records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_env, Environment};
    use crate::nncore::{encoder_forward, LinearLayer, NetShape, NoiseParams, Strategy};
    use crate::noisy::{sane_sigma, SaneModule};
    use crate::numkit::{Mat, Rng};
    use alloc::vec;

    #[test]
    fn zeroed_module_probes_zero() {
        let env = make_env("cliff_bridge").unwrap();
        let mut net = QNetwork::init(Strategy::SimpleSane, &NetShape::new(4, 4), &mut Rng::new(1)).unwrap();
        net.zero_noise();
        let report = sigma_probe(&net, &env.probe_states()).unwrap();
        assert!(report.records.iter().all(|r| r.abs_sigma == 0.0));
        assert_eq!(report.mean_for(RiskLabel::HighRisk), Some(0.0));
        assert_eq!(report.mean_for(RiskLabel::LowRisk), Some(0.0));
    }

    #[test]
    fn one_dimensional_composition() {
        let enc = LinearLayer::from_parts(Mat::from_rows(&[&[2.0]]), Mat::column(&[-0.5])).unwrap();
        let head = LinearLayer::from_parts(Mat::from_rows(&[&[1.0], &[-1.0]]), Mat::zeros(2, 1)).unwrap();
        let module = SaneModule::from_layers(
            LinearLayer::from_parts(Mat::from_rows(&[&[1.5]]), Mat::column(&[0.1])).unwrap(),
            LinearLayer::from_parts(Mat::from_rows(&[&[-2.0]]), Mat::column(&[0.3])).unwrap(),
        )
        .unwrap();
        let net = QNetwork::from_parts(Strategy::SimpleSane, vec![enc], vec![head], NoiseParams::Sane(module.clone())).unwrap();
        let states: Vec<ProbeState> = [0.0, 0.4, 1.0]
            .iter()
            .enumerate()
            .map(|(i, &x)| ProbeState {
                id: i,
                label: if i == 2 { RiskLabel::HighRisk } else { RiskLabel::LowRisk },
                observation: Mat::column(&[x]),
            })
            .collect();
        let report = sigma_probe(&net, &states).unwrap();
        for (p, r) in states.iter().zip(&report.records) {
            let h = encoder_forward(&net, &p.observation).unwrap();
            let manual = sane_sigma(&module, &h, None).unwrap().abs();
            assert_eq!(r.abs_sigma, manual);
        }
        // x = 1: h = 1.5, hidden = 2.35, σ = -4.4
        assert!((report.records[2].abs_sigma - 4.4).abs() < 1e-12);
        assert_eq!(report.mean_for(RiskLabel::HighRisk), Some(report.records[2].abs_sigma));
        assert_eq!(sigma_probe(&net, &states).unwrap(), report);
    }

    #[test]
    fn rejects_non_sane() {
        let net = QNetwork::init(Strategy::NoisyNet, &NetShape::new(4, 4), &mut Rng::new(1)).unwrap();
        assert_eq!(sigma_probe(&net, &[]), Err(Error::NotSane));
    }
}
