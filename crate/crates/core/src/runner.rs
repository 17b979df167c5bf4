//! End-to-end run: characterize the initial trap, transport it, summarize,
//! and write the data files.

use std::path::PathBuf;
use std::time::Instant;

use log::{info, warn};
use nalgebra::Vector3;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{initial_currents, load_layout, reference_layout, ChipLayout, CurrentVector};
use crate::inverse::{run_transport, MaskOrder, SolverConfig};
use crate::report::{summarize, write_outputs, Manifest, SummaryReport};
use crate::schedule::{minimum_step_count, ScheduleKind, TransportPlan};
use crate::trap::TrapModel;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum LayoutSource {
    Builtin,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub layout: LayoutSource,
    /// Defaults to the reference currents when `None`.
    pub initial_currents: Option<Vec<f64>>,
    /// Starting guess for the initial minimum, m.
    pub guess: Vector3<f64>,
    /// Transport distance along x, m.
    pub distance: f64,
    pub steps: usize,
    pub schedule: ScheduleKind,
    /// s
    pub durations: Vec<f64>,
    pub lambda: f64,
    /// m
    pub threshold: f64,
    pub optimize_channels: Vec<usize>,
    /// Replaces the layout's shifting/guiding clip limits, A.
    pub clip_shifting: Option<f64>,
    pub clip_guiding: Option<f64>,
    /// m
    pub solve_unit: f64,
    pub mask_order: MaskOrder,
    pub out_dir: PathBuf,
    /// Recorded for provenance; the pipeline itself draws no random numbers.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            layout: LayoutSource::Builtin,
            initial_currents: None,
            guess: Vector3::new(0.0, 0.0, 0.33e-3),
            distance: 2.4e-3,
            steps: 2500,
            schedule: ScheduleKind::Smoothstep,
            durations: vec![2.0, 3.0, 4.0, 5.0],
            lambda: 1e-2,
            threshold: 1e-9,
            optimize_channels: (0..6).collect(),
            clip_shifting: None,
            clip_guiding: None,
            solve_unit: 1e-6,
            mask_order: MaskOrder::ReduceThenSolve,
            out_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: SummaryReport,
    pub manifest: Manifest,
    pub wall_seconds: f64,
}

impl RunConfig {
    fn layout(&self) -> Result<ChipLayout> {
        let mut layout = match &self.layout {
            LayoutSource::Builtin => reference_layout(),
            LayoutSource::File(path) => load_layout(path)?,
        };
        if let Some(l) = self.clip_shifting {
            layout.clip_limits.shifting = l;
        }
        if let Some(l) = self.clip_guiding {
            layout.clip_limits.guiding = l;
        }
        Ok(layout)
    }

    fn solver(&self, layout: &ChipLayout) -> Result<SolverConfig> {
        let n = layout.channel_count();
        if let Some(&k) = self.optimize_channels.iter().find(|&&k| k >= n) {
            return Err(Error::Config {
                field: "optimize-channels",
                message: format!("channel {k} does not exist (layout has {n})"),
            });
        }
        let config = SolverConfig {
            base_regularization: self.lambda,
            forward_threshold: self.threshold,
            mask: (0..n).map(|k| self.optimize_channels.contains(&k)).collect(),
            length_unit: self.solve_unit,
            mask_order: self.mask_order,
            ..SolverConfig::for_layout(layout)
        };
        config.validate(layout)?;
        Ok(config)
    }

    fn check(&self) -> Result<()> {
        let bad = |field, message: String| Err(Error::Config { field, message });
        if !(self.distance > 0.0) {
            return bad("distance", format!("must be positive, got {} m", self.distance));
        }
        if self.steps == 0 {
            return bad("steps", "must be at least 1".into());
        }
        if self.durations.is_empty() {
            return bad("durations", "at least one duration is needed".into());
        }
        if let Some(t) = self.durations.iter().find(|t| !(**t > 0.0)) {
            return bad("durations", format!("durations must be positive, got {t}"));
        }
        Ok(())
    }
}

/// Runs the whole pipeline. On trap loss the partial tables are still
/// written before the error is returned.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    let started = Instant::now();
    config.check()?;
    let layout = config.layout()?;
    let solver = config.solver(&layout)?;
    let currents = match &config.initial_currents {
        Some(c) => CurrentVector(c.clone()),
        None => initial_currents(),
    };
    currents.check(&layout)?;

    let model = TrapModel::default();
    let initial = model.characterize(&layout, &currents, &config.guess)?;
    let axial = initial.axial_index();
    info!(
        "initial trap at ({:.4e}, {:.4e}, {:.4e}) m, frequencies {:.2?} Hz",
        initial.r_min.x,
        initial.r_min.y,
        initial.r_min.z,
        initial.freq_hz.as_slice()
    );
    let needed = minimum_step_count(config.distance, initial.r_tf[axial], 1.0)?;
    if config.steps < needed {
        warn!(
            "{} steps move the trap more than one axial Thomas-Fermi radius per step; at least {needed} are needed",
            config.steps
        );
    }

    let plan = TransportPlan {
        start: initial.r_min,
        displacement: Vector3::new(config.distance, 0.0, 0.0),
        step_count: config.steps,
        kind: config.schedule,
        durations: config.durations.clone(),
    };
    let result = match run_transport(&model, &layout, &currents, &plan, &solver) {
        Ok(r) => r,
        Err(failure) => {
            if !failure.partial.records.is_empty() {
                write_outputs(&failure.partial, None, &config.out_dir)?;
            }
            return Err(failure.error);
        }
    };
    let report = summarize(&result, &config.durations)?;
    let manifest = write_outputs(&result, Some(&report), &config.out_dir)?;
    Ok(RunOutcome {
        report,
        manifest,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Parses channel lists such as `0-5` or `0,2,4-5`.
pub fn parse_channel_list(text: &str) -> Result<Vec<usize>> {
    let bad = |message: String| Error::Config {
        field: "optimize-channels",
        message,
    };
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let parse = |s: &str| s.trim().parse::<usize>().map_err(|e| bad(format!("`{s}`: {e}")));
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (parse(a)?, parse(b)?);
                if a > b {
                    return Err(bad(format!("empty range `{part}`")));
                }
                out.extend(a..=b);
            }
            None => out.push(parse(part)?),
        }
    }
    if out.is_empty() {
        return Err(bad("no channels given".into()));
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Parses a comma-separated list of numbers, naming `field` on failure.
pub fn parse_float_list(text: &str, field: &'static str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<f64>().map_err(|e| Error::Config {
                field,
                message: format!("`{p}`: {e}"),
            })
        })
        .collect()
}
