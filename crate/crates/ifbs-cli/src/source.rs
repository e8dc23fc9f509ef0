//! Model input handling: built-in benchmarks, user model files, and the
//! belief-set scheme each one implies.
//!
//! A model file is JSON in one of two shapes, told apart by a marker field:
//! an explicit MDP carries a `transition` tensor, a gridworld config carries
//! a `width`. Gridworlds expand to their MDP and pair with the local blur
//! posterior set; every other model pairs with the simplex-grid set at the
//! requested spacing.

use std::fs;
use std::path::Path;

use ifbs_core::belief::{build_local_blur_set, BeliefSets};
use ifbs_core::model::{build_gridworld, mars_default, three_state};
use ifbs_core::{GridworldConfig, PerceptionMdp};

use crate::CliError;

/// Names accepted by `--builtin`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Builtin {
    /// Three-state benchmark (two cycling actions and a near-reliable stay).
    ThreeState,
    /// 12x12 rover gridworld with a rock field splitting the two routes.
    Mars,
}

/// A loaded model plus the gridworld config it came from, when it came from
/// one. The config decides the posterior scheme and names the start cell.
#[derive(Debug)]
pub struct ModelSource {
    pub model: PerceptionMdp,
    pub grid: Option<GridworldConfig>,
    /// Provenance string recorded in the manifest.
    pub origin: String,
}

/// Reads and classifies a model file without yet validating the semantics.
/// Syntax errors and unrecognizable shapes are usage errors (exit 2);
/// semantic violations surface later through validation (exit 1).
pub fn load_model_file(path: &Path) -> Result<ModelSource, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{} is not valid JSON: {e}", path.display())))?;
    let origin = format!("file:{}", path.display());
    if value.get("transition").is_some() {
        let model: PerceptionMdp = serde_json::from_value(value).map_err(|e| {
            CliError::Usage(format!("{} does not parse as an MDP: {e}", path.display()))
        })?;
        Ok(ModelSource {
            model,
            grid: None,
            origin,
        })
    } else if value.get("width").is_some() {
        let grid: GridworldConfig = serde_json::from_value(value).map_err(|e| {
            CliError::Usage(format!(
                "{} does not parse as a gridworld config: {e}",
                path.display()
            ))
        })?;
        let model = build_gridworld(&grid)?;
        Ok(ModelSource {
            model,
            grid: Some(grid),
            origin,
        })
    } else {
        Err(CliError::Usage(format!(
            "{} is neither an MDP (no `transition` tensor) nor a gridworld config (no `width`)",
            path.display()
        )))
    }
}

/// Resolves `--model`/`--builtin` into a model, applying `--gamma`/`--beta`
/// overrides. Exactly one source is present (clap enforces the group).
pub fn resolve(
    model_path: Option<&Path>,
    builtin: Option<Builtin>,
    gamma: Option<f64>,
    beta: Option<f64>,
) -> Result<ModelSource, CliError> {
    let mut source = match (model_path, builtin) {
        (Some(path), None) => load_model_file(path)?,
        (None, Some(Builtin::ThreeState)) => ModelSource {
            model: three_state(),
            grid: None,
            origin: "builtin:three-state".into(),
        },
        (None, Some(Builtin::Mars)) => {
            let grid = mars_default();
            ModelSource {
                model: build_gridworld(&grid)?,
                grid: Some(grid),
                origin: "builtin:mars".into(),
            }
        }
        _ => return Err(CliError::Usage("give exactly one of --model/--builtin".into())),
    };
    if let Some(g) = gamma {
        source.model.gamma = g;
        if let Some(grid) = source.grid.as_mut() {
            grid.gamma = g;
        }
    }
    if let Some(b) = beta {
        source.model.beta = b;
        if let Some(grid) = source.grid.as_mut() {
            grid.beta = b;
        }
    }
    source.model.ensure_valid()?;
    Ok(source)
}

impl ModelSource {
    /// Builds the posterior/prior sets for this model: the local blur family
    /// for gridworlds, the simplex grid at `spacing` otherwise.
    pub fn build_sets(&self, spacing: f64) -> Result<BeliefSets, CliError> {
        match &self.grid {
            Some(grid) => {
                let posteriors = build_local_blur_set(grid)?;
                Ok(BeliefSets::build(posteriors, &self.model)?)
            }
            None => Ok(BeliefSets::from_grid(&self.model, spacing)?),
        }
    }

    /// Manifest name of the posterior scheme.
    pub fn scheme(&self) -> &'static str {
        if self.grid.is_some() {
            "local-blur"
        } else {
            "simplex-grid"
        }
    }

}
