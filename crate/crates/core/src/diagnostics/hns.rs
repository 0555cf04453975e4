use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::{Error, Result};

/// Games whose high- and low-risk states make up the eight-game sub-suite.
pub const RISK_SUBSUITE: [&str; 8] = [
    "Asterix",
    "Atlantis",
    "Enduro",
    "IceHockey",
    "Qbert",
    "Riverraid",
    "RoadRunner",
    "Seaquest",
];

/// `(agent - random) / (human - random)`.
pub fn hns(agent_score: f64, human: f64, random: f64) -> Result<f64> {
    let denom = human - random;
    if denom == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok((agent_score - random) / denom)
}

/// Human and random reference scores per game.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BaselineTable {
    entries: BTreeMap<String, (f64, f64)>,
}

impl BaselineTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, game: &str, human: f64, random: f64) -> Result<()> {
        if human == random {
            return Err(Error::InvalidArgument(format!("{game}: human and random scores are equal")));
        }
        self.entries.insert(game.to_string(), (human, random));
        Ok(())
    }

    /// `(human, random)`.
    pub fn get(&self, game: &str) -> Option<(f64, f64)> {
        self.entries.get(game).copied()
    }

    pub fn games(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn game_hns(&self, game: &str, score: f64) -> Result<f64> {
        let (human, random) = self.get(game).ok_or_else(|| Error::MissingGame(game.to_string()))?;
        hns(score, human, random)
    }
}

/// Mean of per-game scores over `subset`.
pub fn mean_hns(scores: &BTreeMap<String, f64>, baselines: &BaselineTable, subset: &[&str]) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::InvalidArgument("empty game subset".into()));
    }
    let per_game = subset
        .iter()
        .map(|&g| {
            let score = *scores.get(g).ok_or_else(|| Error::MissingGame(g.to_string()))?;
            baselines.game_hns(g, score)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_game.iter().sum::<f64>() / per_game.len() as f64)
}
