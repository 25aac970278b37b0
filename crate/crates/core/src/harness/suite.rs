use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::episode::{run_episode, EpisodeConfig, EpisodeMetrics, FailureReason, Perturbation};
use crate::error::{Error, Result};
use crate::models::{ModelSpec, ModelWeights};
use crate::pilots::{CommandLimits, ExpertConfig, ExpertPilot, NeuralPilot, Pilot};
use crate::simworld::{LineColor, RoadColor, Track, TrackVariation};

/// A driving agent description from which fresh pilots are built per episode.
#[derive(Clone, Debug)]
pub enum Brain {
    Expert(ExpertConfig),
    Neural {
        spec: ModelSpec,
        weights: ModelWeights,
    },
}

impl Brain {
    pub fn label(&self) -> String {
        match self {
            Brain::Expert(_) => "expert".into(),
            Brain::Neural { spec, .. } => spec.name.to_string(),
        }
    }

    pub fn pilot(
        &self,
        variation: &TrackVariation,
        limits: CommandLimits,
    ) -> Box<dyn Pilot + Send> {
        match self {
            Brain::Expert(cfg) => {
                Box::new(ExpertPilot::new(cfg.clone(), limits, variation.line_color))
            }
            Brain::Neural { spec, weights } => {
                Box::new(NeuralPilot::new(spec.clone(), weights.clone(), limits))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub label: String,
    pub variation: TrackVariation,
    pub perturbation: Perturbation,
}

/// The six appearance variations: (red, grey, walls), (red, white, walls), (white, grey, walls),
/// (none, grey, walls), (none, white, walls), (none, grey, no walls).
pub fn generalization_conditions() -> Vec<Condition> {
    use LineColor as L;
    use RoadColor as R;
    [
        (L::Red, R::Grey, true),
        (L::Red, R::White, true),
        (L::White, R::Grey, true),
        (L::None, R::Grey, true),
        (L::None, R::White, true),
        (L::None, R::Grey, false),
    ]
    .into_iter()
    .map(|(l, r, w)| {
        let variation = TrackVariation::new(l, r, w);
        Condition {
            label: variation.label(),
            variation,
            perturbation: Perturbation::default(),
        }
    })
    .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobustnessMagnitudes {
    /// Meters of lateral camera displacement.
    pub lateral: f64,
    /// Radians of extra downward pitch.
    pub pitch_down: f64,
    pub noise: Vec<f64>,
}

impl Default for RobustnessMagnitudes {
    fn default() -> Self {
        RobustnessMagnitudes {
            lateral: 0.5,
            pitch_down: 0.15,
            noise: vec![0.2, 0.4, 0.6],
        }
    }
}

/// Baseline, camera moved left, camera moved right, camera rotated down, then one column
/// per noise probability; all on the red-line, grey-road, walled variation.
pub fn robustness_conditions(m: &RobustnessMagnitudes) -> Vec<Condition> {
    let variation = TrackVariation::default();
    let cond = |label: String, perturbation| Condition {
        label,
        variation,
        perturbation,
    };
    let mut out = vec![
        cond("baseline".into(), Perturbation::default()),
        cond(
            "camera_left".into(),
            Perturbation {
                camera_lateral: -m.lateral,
                ..Default::default()
            },
        ),
        cond(
            "camera_right".into(),
            Perturbation {
                camera_lateral: m.lateral,
                ..Default::default()
            },
        ),
        cond(
            "camera_down".into(),
            Perturbation {
                extra_pitch_down: m.pitch_down,
                ..Default::default()
            },
        ),
    ];
    for &p in &m.noise {
        out.push(cond(
            format!("noise_{p}"),
            Perturbation {
                noise_p: p,
                ..Default::default()
            },
        ));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub repeats: usize,
    /// Repeat `r` runs with seed `seed + r`, identical across brains and conditions.
    pub seed: u64,
    /// Base episode settings; variation and perturbation come from each condition.
    pub episode: EpisodeConfig,
    pub limits: CommandLimits,
    pub magnitudes: RobustnessMagnitudes,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            repeats: 3,
            seed: 0,
            episode: EpisodeConfig::default(),
            limits: CommandLimits::default(),
            magnitudes: RobustnessMagnitudes::default(),
        }
    }
}

/// Averaged repeats of one (brain, condition) pair. The cell counts as completed only
/// when every repeat completed; times are averaged over those repeats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteCell {
    pub brain: String,
    pub condition: String,
    pub completed: bool,
    pub completed_runs: usize,
    pub lap_seconds: Option<f64>,
    pub position_deviation_mae: f64,
    pub average_speed: f64,
    pub episodes: Vec<EpisodeMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub circuit: String,
    pub repeats: usize,
    pub seeds: Vec<u64>,
    pub brains: Vec<String>,
    pub conditions: Vec<Condition>,
    /// Row-major: brain, then condition.
    pub cells: Vec<SuiteCell>,
}

impl SuiteReport {
    pub fn cell(&self, brain: &str, condition: &str) -> Option<&SuiteCell> {
        self.cells
            .iter()
            .find(|c| c.brain == brain && c.condition == condition)
    }
}

fn summarize(brain: String, condition: String, episodes: Vec<EpisodeMetrics>) -> SuiteCell {
    let n = episodes.len() as f64;
    let done: Vec<&EpisodeMetrics> = episodes.iter().filter(|e| e.completed).collect();
    let completed = !episodes.is_empty() && done.len() == episodes.len();
    SuiteCell {
        brain,
        condition,
        completed,
        completed_runs: done.len(),
        lap_seconds: completed.then(|| done.iter().filter_map(|e| e.lap_seconds).sum::<f64>() / n),
        position_deviation_mae: episodes
            .iter()
            .map(|e| e.position_deviation_mae)
            .sum::<f64>()
            / n,
        average_speed: episodes.iter().map(|e| e.average_speed).sum::<f64>() / n,
        episodes,
    }
}

/// Runs every (brain, condition, repeat) episode, in parallel, and assembles the grid in a
/// fixed order.
pub fn run_suite(
    name: &str,
    brains: &[Brain],
    track: &Track,
    conditions: &[Condition],
    config: &SuiteConfig,
) -> Result<SuiteReport> {
    if config.repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..config.repeats as u64)
        .map(|r| config.seed + r)
        .collect();
    let jobs: Vec<(usize, usize, u64)> = (0..brains.len())
        .flat_map(|b| {
            (0..conditions.len())
                .flat_map(move |c| (0..config.repeats).map(move |r| (b, c, r as u64)))
        })
        .collect();
    let results: Vec<EpisodeMetrics> = jobs
        .par_iter()
        .map(|&(b, c, r)| {
            let cond = &conditions[c];
            let ep = EpisodeConfig {
                variation: cond.variation,
                perturbation: cond.perturbation,
                seed: config.seed + r,
                ..config.episode.clone()
            };
            let mut pilot = brains[b].pilot(&cond.variation, config.limits);
            run_episode(pilot.as_mut(), track, &ep)
        })
        .collect::<Result<_>>()?;
    let mut it = results.into_iter();
    let mut cells = Vec::with_capacity(brains.len() * conditions.len());
    for brain in brains {
        for cond in conditions {
            let eps: Vec<EpisodeMetrics> = it.by_ref().take(config.repeats).collect();
            cells.push(summarize(brain.label(), cond.label.clone(), eps));
        }
    }
    Ok(SuiteReport {
        suite: name.into(),
        circuit: track.name().into(),
        repeats: config.repeats,
        seeds,
        brains: brains.iter().map(Brain::label).collect(),
        conditions: conditions.to_vec(),
        cells,
    })
}

pub fn generalization_suite(
    brains: &[Brain],
    track: &Track,
    config: &SuiteConfig,
) -> Result<SuiteReport> {
    run_suite(
        "generalization",
        brains,
        track,
        &generalization_conditions(),
        config,
    )
}

pub fn robustness_suite(
    brains: &[Brain],
    track: &Track,
    config: &SuiteConfig,
) -> Result<SuiteReport> {
    run_suite(
        "robustness",
        brains,
        track,
        &robustness_conditions(&config.magnitudes),
        config,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Ok(ReportFormat::Json),
            Some("csv") => Ok(ReportFormat::Csv),
            _ => Err(Error::InvalidArgument(format!(
                "{}: report must end in .json or .csv",
                path.display()
            ))),
        }
    }
}

/// Brains as rows; two columns per condition (lap seconds, deviation), `-` where the cell failed.
pub fn report_csv(report: &SuiteReport) -> String {
    let mut out = String::from("brain");
    for c in &report.conditions {
        write!(out, ",{} lap_s,{} deviation_m", c.label, c.label).expect("write to String");
    }
    out.push('\n');
    for (b, brain) in report.brains.iter().enumerate() {
        out.push_str(brain);
        for cell in &report.cells[b * report.conditions.len()..(b + 1) * report.conditions.len()] {
            match cell.lap_seconds {
                Some(t) if cell.completed => {
                    write!(out, ",{t:.2},{:.2}", cell.position_deviation_mae)
                }
                _ => write!(out, ",-,-"),
            }
            .expect("write to String");
        }
        out.push('\n');
    }
    out
}

pub fn report_json(report: &SuiteReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)? + "\n")
}

pub fn emit_report(
    report: &SuiteReport,
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<()> {
    let text = match format {
        ReportFormat::Json => report_json(report)?,
        ReportFormat::Csv => report_csv(report),
    };
    fs::write(path, text)?;
    Ok(())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<SuiteReport> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Failure reason shared by every repeat of a cell, if there is one.
pub fn common_failure(cell: &SuiteCell) -> Option<FailureReason> {
    let first = cell.episodes.first()?.failure_reason;
    cell.episodes
        .iter()
        .all(|e| e.failure_reason == first)
        .then_some(first)
}
