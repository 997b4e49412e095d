//! Hyperparameter grids and selection on validation reconstruction error.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{Scheme, TrainPlan, Trainer};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::StackParams;
use crate::objectives::{reconstruction_error, CorruptionKind, RegularizerSpec};
use crate::rng::derive_seed;

pub const STANDARD_LEARNING_RATES: [f64; 4] = [0.001, 0.005, 0.01, 0.02];
pub const STANDARD_NOISE_LEVELS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
pub const STANDARD_CONTRACTION_LEVELS: [f64; 5] = [0.01, 0.05, 0.15, 0.3, 0.6];

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub learning_rates: Vec<f64>,
    /// Corruption levels; empty keeps the base plan's corruption.
    pub noise_levels: Vec<f64>,
    /// Contractive penalty weights; empty keeps the base plan's regularizers.
    pub contraction_levels: Vec<f64>,
    /// Corruption kind used when the base plan has none.
    pub noise_kind: CorruptionKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub id: usize,
    pub learning_rate: f64,
    pub noise: Option<f64>,
    pub contraction: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridRow {
    pub point: GridPoint,
    pub seed: u64,
    /// Validation reconstruction error in input space, or the failure.
    pub outcome: core::result::Result<f64, String>,
}

#[derive(Clone, Debug)]
pub struct GridReport {
    pub rows: Vec<GridRow>,
    pub best: usize,
}

impl GridReport {
    pub fn best_row(&self) -> &GridRow {
        &self.rows[self.best]
    }
}

impl Grid {
    pub fn standard_dae() -> Self {
        Grid {
            learning_rates: STANDARD_LEARNING_RATES.to_vec(),
            noise_levels: STANDARD_NOISE_LEVELS.to_vec(),
            contraction_levels: Vec::new(),
            noise_kind: CorruptionKind::Masking,
        }
    }

    pub fn standard_cae() -> Self {
        Grid {
            learning_rates: STANDARD_LEARNING_RATES.to_vec(),
            noise_levels: Vec::new(),
            contraction_levels: STANDARD_CONTRACTION_LEVELS.to_vec(),
            noise_kind: CorruptionKind::Masking,
        }
    }

    pub fn single(learning_rate: f64) -> Self {
        Grid {
            learning_rates: alloc::vec![learning_rate],
            noise_levels: Vec::new(),
            contraction_levels: Vec::new(),
            noise_kind: CorruptionKind::Masking,
        }
    }

    /// Points in row-major order: learning rate, then noise, then contraction.
    pub fn points(&self) -> Result<Vec<GridPoint>> {
        if self.learning_rates.is_empty() {
            return Err(Error::Config("grid has no learning rates".into()));
        }
        let opt = |v: &[f64]| -> Vec<Option<f64>> {
            if v.is_empty() {
                alloc::vec![None]
            } else {
                v.iter().copied().map(Some).collect()
            }
        };
        let mut points = Vec::new();
        for &lr in &self.learning_rates {
            for noise in opt(&self.noise_levels) {
                for contraction in opt(&self.contraction_levels) {
                    points.push(GridPoint {
                        id: points.len(),
                        learning_rate: lr,
                        noise,
                        contraction,
                    });
                }
            }
        }
        Ok(points)
    }

    /// The base plan with this point's values and a seed derived from the
    /// base seed and the point id.
    pub fn apply(&self, point: &GridPoint, base: &TrainPlan) -> TrainPlan {
        let mut plan = base.clone();
        plan.optimizer.learning_rate = point.learning_rate;
        plan.seed = derive_seed(base.seed, point.id as u64);
        if let Some(level) = point.noise {
            for c in &mut plan.objective.corruption {
                if c.kind == CorruptionKind::None {
                    c.kind = self.noise_kind;
                }
                c.level = level;
            }
        }
        if let Some(lambda) = point.contraction {
            for r in &mut plan.objective.regularizers {
                *r = RegularizerSpec::contractive(lambda);
            }
        }
        plan
    }
}

/// Trains one grid point from `init` and returns its validation error.
pub fn run_point(grid: &Grid, point: &GridPoint, init: &StackParams, dataset: &Dataset, base: &TrainPlan, scheme: Scheme) -> GridRow {
    let plan = grid.apply(point, base);
    let outcome = (|| {
        let out = Trainer::new(&plan).run(scheme, init.clone(), dataset)?;
        reconstruction_error(&out.stack, &dataset.valid.x, plan.objective.loss)
    })();
    GridRow {
        point: point.clone(),
        seed: plan.seed,
        outcome: outcome.map_err(|e| format!("{e}")),
    }
}

/// Lowest validation error wins; ties go to the earlier row. Failed rows
/// are never selected.
pub fn select_best(rows: &[GridRow]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, row) in rows.iter().enumerate() {
        if let Ok(v) = row.outcome {
            if v.is_finite() && best.is_none_or(|(_, b)| v < b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::Contract("every grid point failed".into()))
}

/// Runs every point in order. Validation data must be present.
pub fn grid_search(grid: &Grid, init: &StackParams, dataset: &Dataset, base: &TrainPlan, scheme: Scheme) -> Result<GridReport> {
    if dataset.valid.is_empty() {
        return Err(Error::Config("grid search needs a validation split".into()));
    }
    let rows: Vec<GridRow> = grid
        .points()?
        .iter()
        .map(|p| run_point(grid, p, init, dataset, base, scheme))
        .collect();
    let best = select_best(&rows)?;
    Ok(GridReport { rows, best })
}
