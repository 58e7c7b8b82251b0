//! Versioned model file: the fitted model plus the column layout needed to
//! apply it to a new CSV.

use std::collections::BTreeSet;
use std::path::Path;

use figs::{FigsEnsemble, FigsModel, GFigsModel, Task};
use serde::{Deserialize, Serialize};

use crate::error::{compute, CliError, CliResult};
use crate::table::Table;

pub const MODEL_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Figs,
    Cart,
    Gfigs,
    Bagging,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Figs => "figs",
            Method::Cart => "cart",
            Method::Gfigs => "gfigs",
            Method::Bagging => "bagging",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnyModel {
    Figs(FigsModel),
    Ensemble(FigsEnsemble),
    Gfigs(GFigsModel),
}

impl AnyModel {
    pub fn task(&self) -> Task {
        match self {
            AnyModel::Figs(m) => m.task(),
            AnyModel::Ensemble(e) => e.task(),
            AnyModel::Gfigs(g) => g.per_group.values().next().map_or(Task::Regression, FigsModel::task),
        }
    }

    /// Every tree-sum inside the model.
    pub fn structures(&self) -> Vec<&FigsModel> {
        match self {
            AnyModel::Figs(m) => vec![m],
            AnyModel::Ensemble(e) => e.members.iter().collect(),
            AnyModel::Gfigs(g) => g.per_group.values().collect(),
        }
    }

    pub fn split_features(&self) -> BTreeSet<usize> {
        self.structures().iter().flat_map(|m| m.split_features()).collect()
    }

    /// Raw scores and reported outputs for every row of `table`.
    pub fn score(&self, table: &Table) -> CliResult<(Vec<f64>, Vec<f64>)> {
        let data = &table.dataset;
        let mut raw = Vec::with_capacity(data.n_samples());
        let mut out = Vec::with_capacity(data.n_samples());
        match self {
            AnyModel::Figs(m) => {
                for x in data.rows() {
                    let r = m.predict_raw(x).map_err(compute)?;
                    raw.push(r);
                    out.push(m.output_scale(r));
                }
            }
            AnyModel::Ensemble(e) => {
                for x in data.rows() {
                    raw.push(e.predict_raw(x).map_err(compute)?);
                    out.push(e.predict(x).map_err(compute)?);
                }
            }
            AnyModel::Gfigs(g) => {
                let groups = table.groups.as_ref().ok_or_else(|| CliError::input("input has no group column"))?;
                for (x, grp) in data.rows().zip(groups) {
                    let m = g.model(grp)?;
                    let r = m.predict_raw(x).map_err(compute)?;
                    raw.push(r);
                    out.push(m.output_scale(r));
                }
            }
        }
        Ok((raw, out))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub method: Method,
    pub target_column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_column: Option<String>,
    pub feature_names: Vec<String>,
    pub model: AnyModel,
}

impl ModelFile {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let file: ModelFile = serde_json::from_str(&text)?;
        if file.format_version != MODEL_FILE_VERSION {
            return Err(CliError::input(format!("unsupported model file version {}", file.format_version)));
        }
        Ok(file)
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }
}
