//! Score, baseline and subset files for human-normalized scoring.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sanex_core::diagnostics::{mean_hns, BaselineTable};

use crate::CliError;

/// Human and random reference scores for 11 Atari games (`game,human,random`).
pub const DEFAULT_BASELINES: &str = include_str!("../data/baselines.csv");
/// Per-game mean scores of the four agents on the same 11 games.
pub const ATARI_AGENT_MEANS: &str = include_str!("../data/atari_agent_means.csv");
/// Previously published suite means (`agent,games,value`), shown for comparison.
pub const REPORTED_SUITE_MEANS: &str = include_str!("../data/reported_suite_means.csv");
/// The 8 games with clearly separated high- and low-risk states.
pub const RISK_SUBSUITE_FILE: &str = include_str!("../data/risk_subsuite.txt");

/// Published suite means keyed by `(agent, number of games)`.
pub type ReportedMeans = BTreeMap<(String, usize), f64>;

/// Scores for one or more agents. The file is CSV with a `game` column
/// followed by one column per agent; the single-agent form is `game,score`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    pub agents: Vec<String>,
    /// Games in file order.
    pub games: Vec<String>,
    /// `scores[a][game]`
    pub scores: Vec<BTreeMap<String, f64>>,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn records(text: &str, path: &Path) -> Result<(Vec<String>, Vec<(usize, Vec<String>)>), CliError> {
    let mut rd = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = rd
        .headers()
        .map_err(|e| CliError::format(path, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            CliError::format(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok((header, rows))
}

fn number(s: &str, path: &Path, line: usize) -> Result<f64, CliError> {
    s.parse()
        .map_err(|_| CliError::format(path, line, format!("`{s}` is not a number")))
}

pub fn parse_scores(text: &str, path: &Path) -> Result<ScoreTable, CliError> {
    let (header, rows) = records(text, path)?;
    if header.len() < 2 || header[0] != "game" {
        return Err(CliError::format(path, 1, "header must be `game,<agent>...`"));
    }
    let agents: Vec<String> = header[1..].to_vec();
    let mut table = ScoreTable {
        scores: vec![BTreeMap::new(); agents.len()],
        agents,
        games: Vec::new(),
    };
    for (line, rec) in rows {
        let game = rec[0].clone();
        if table.games.contains(&game) {
            return Err(CliError::format(path, line, format!("duplicate game `{game}`")));
        }
        for (a, v) in rec[1..].iter().enumerate() {
            table.scores[a].insert(game.clone(), number(v, path, line)?);
        }
        table.games.push(game);
    }
    Ok(table)
}

pub fn parse_baselines(text: &str, path: &Path) -> Result<BaselineTable, CliError> {
    let (header, rows) = records(text, path)?;
    if header != ["game", "human", "random"] {
        return Err(CliError::format(path, 1, "header must be `game,human,random`"));
    }
    let mut table = BaselineTable::new();
    for (line, rec) in rows {
        let human = number(&rec[1], path, line)?;
        let random = number(&rec[2], path, line)?;
        table
            .insert(&rec[0], human, random)
            .map_err(|e| CliError::format(path, line, format!("{}: {e}", rec[0])))?;
    }
    Ok(table)
}

pub fn parse_reported(text: &str, path: &Path) -> Result<ReportedMeans, CliError> {
    let (header, rows) = records(text, path)?;
    if header != ["agent", "games", "value"] {
        return Err(CliError::format(path, 1, "header must be `agent,games,value`"));
    }
    let mut out = BTreeMap::new();
    for (line, rec) in rows {
        let games = rec[1]
            .parse()
            .map_err(|_| CliError::format(path, line, "bad game count"))?;
        out.insert((rec[0].clone(), games), number(&rec[2], path, line)?);
    }
    Ok(out)
}

/// One game name per line; blank lines and `#` comments are skipped.
pub fn parse_subset(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn load_scores(path: &Path) -> Result<ScoreTable, CliError> {
    parse_scores(&read(path)?, path)
}

pub fn load_baselines(path: Option<&Path>) -> Result<BaselineTable, CliError> {
    match path {
        Some(p) => parse_baselines(&read(p)?, p),
        None => parse_baselines(DEFAULT_BASELINES, Path::new("<builtin baselines>")),
    }
}

pub fn load_reported(path: Option<&Path>) -> Result<ReportedMeans, CliError> {
    match path {
        Some(p) => parse_reported(&read(p)?, p),
        None => parse_reported(REPORTED_SUITE_MEANS, Path::new("<builtin reported means>")),
    }
}

pub fn load_subset(path: &Path) -> Result<Vec<String>, CliError> {
    Ok(parse_subset(&read(path)?))
}

/// Per-game normalized scores and suite means for every agent in a table.
#[derive(Clone, Debug, PartialEq)]
pub struct HnsReport {
    pub agents: Vec<String>,
    /// `(game, one value per agent)` in score-file order.
    pub per_game: Vec<(String, Vec<f64>)>,
    /// Games averaged into `means`.
    pub subset: Vec<String>,
    pub means: Vec<f64>,
}

pub fn hns_report(
    scores: &ScoreTable,
    baselines: &BaselineTable,
    subset: Option<&[String]>,
) -> Result<HnsReport, CliError> {
    let mut per_game = Vec::new();
    for game in &scores.games {
        let vals = scores
            .scores
            .iter()
            .map(|s| baselines.game_hns(game, s[game]))
            .collect::<Result<Vec<_>, _>>()?;
        per_game.push((game.clone(), vals));
    }
    let subset: Vec<String> = subset.map(<[String]>::to_vec).unwrap_or_else(|| scores.games.clone());
    let names: Vec<&str> = subset.iter().map(String::as_str).collect();
    let means = scores
        .scores
        .iter()
        .map(|s| mean_hns(s, baselines, &names))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(HnsReport {
        agents: scores.agents.clone(),
        per_game,
        subset,
        means,
    })
}

impl HnsReport {
    /// CSV body with a `mean` row, followed by `#` comment lines comparing
    /// each mean with any reported value for the same agent and game count.
    pub fn render(&self, reported: &ReportedMeans) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "game,{}", self.agents.join(","));
        let row = |out: &mut String, name: &str, vals: &[f64]| {
            let vals: Vec<String> = vals.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{name},{}", vals.join(","));
        };
        for (game, vals) in &self.per_game {
            row(&mut out, game, vals);
        }
        row(&mut out, "mean", &self.means);
        let n = self.subset.len();
        for (agent, mean) in self.agents.iter().zip(&self.means) {
            if let Some(r) = reported.get(&(agent.clone(), n)) {
                let _ = writeln!(
                    out,
                    "# {agent} mean over {n} games: computed {mean:.4}, reported {r}, difference {:+.4}",
                    mean - r
                );
            }
        }
        out
    }
}
