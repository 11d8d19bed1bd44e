//! Loading experiment data and reading user files against a trained model.

use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;
use spectre::dataset::{generate_toy, load_csv, CsvOptions, Dataset};

use crate::config::{DataSource, ExperimentConfig};
use crate::error::{at, CliError, CliResult, Kind};

/// One sensitive attribute as group ids per row plus the id names.
#[derive(Debug, Clone, PartialEq)]
pub struct Attribute {
    pub name: String,
    pub ids: Vec<usize>,
    pub group_names: Vec<String>,
}

impl Attribute {
    pub fn subset(&self, rows: &[usize]) -> Attribute {
        Attribute {
            name: self.name.clone(),
            ids: rows.iter().map(|&i| self.ids[i]).collect(),
            group_names: self.group_names.clone(),
        }
    }
}

pub struct Loaded {
    pub ds: Dataset,
    /// Each sensitive column on its own, then their intersection when there
    /// are several.
    pub attributes: Vec<Attribute>,
}

fn data_error(message: impl Into<String>) -> CliError {
    CliError::new(Kind::Data, "load", message)
}

/// Ids by first appearance.
fn intern(values: &[String]) -> (Vec<usize>, Vec<String>) {
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut ids = Vec::with_capacity(values.len());
    for v in values {
        let next = index.len();
        let id = *index.entry(v.as_str()).or_insert_with(|| {
            names.push(v.clone());
            next
        });
        ids.push(id);
    }
    (ids, names)
}

/// Raw string cells of the named columns, one vector per column.
pub fn read_columns(path: &Path, names: &[String]) -> CliResult<Vec<Vec<String>>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| data_error(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(|e| data_error(e.to_string()))?.clone();
    let idx: Vec<usize> = names
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h.trim() == n)
                .ok_or_else(|| data_error(format!("{}: column `{n}` not found", path.display())))
        })
        .collect::<CliResult<_>>()?;
    let mut out = vec![Vec::new(); names.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| data_error(format!("row {}: {e}", row + 1)))?;
        for (k, &j) in idx.iter().enumerate() {
            out[k].push(rec.get(j).unwrap_or("").trim().to_string());
        }
    }
    Ok(out)
}

fn attributes_from_columns(names: &[String], columns: Vec<Vec<String>>) -> Vec<Attribute> {
    let mut attrs: Vec<Attribute> = names
        .iter()
        .zip(&columns)
        .map(|(name, col)| {
            let (ids, group_names) = intern(col);
            Attribute {
                name: name.clone(),
                ids,
                group_names,
            }
        })
        .collect();
    if names.len() > 1 {
        let n = columns[0].len();
        let joined: Vec<String> = (0..n)
            .map(|i| columns.iter().map(|c| c[i].as_str()).collect::<Vec<_>>().join("|"))
            .collect();
        let (ids, group_names) = intern(&joined);
        attrs.push(Attribute {
            name: names.join("&"),
            ids,
            group_names,
        });
    }
    attrs
}

/// Dataset described by the config's data section.
pub fn load_experiment(cfg: &ExperimentConfig) -> CliResult<Loaded> {
    match cfg.data.source {
        DataSource::Toy => {
            let ds = generate_toy(cfg.data.n, cfg.seed).map_err(at("load"))?;
            let attr = Attribute {
                name: "s".into(),
                ids: ds.sensitive().expect("toy data has groups").to_vec(),
                group_names: ds.group_names().to_vec(),
            };
            Ok(Loaded { ds, attributes: vec![attr] })
        }
        DataSource::Csv => {
            let path = cfg.data.path.as_deref().expect("validated");
            let opts = CsvOptions {
                label_column: cfg.data.label_column.clone(),
                sensitive_columns: cfg.data.sensitive_columns.clone(),
                exclude_columns: cfg.data.exclude_columns.clone(),
            };
            let ds = load_csv(path, &opts).map_err(at("load"))?;
            let columns = read_columns(path, &cfg.data.sensitive_columns)?;
            Ok(Loaded {
                ds,
                attributes: attributes_from_columns(&cfg.data.sensitive_columns, columns),
            })
        }
    }
}

/// A user file read against a model's feature and label names.
pub struct ModelInput {
    /// Raw (unstandardized) features in the model's column order.
    pub features: Array2<f64>,
    /// Label ids in the model's numbering, when a label column was given.
    pub labels: Option<Vec<usize>>,
    pub attributes: Vec<Attribute>,
}

/// Reads the model's feature columns by name (other columns are ignored),
/// the optional label column and the sensitive columns of `path`.
pub fn read_for_model(
    path: &Path,
    feature_names: &[String],
    label_names: &[String],
    label_column: Option<&str>,
    sensitive_columns: &[String],
) -> CliResult<ModelInput> {
    let cells = read_columns(path, feature_names)?;
    let n = cells.first().map_or(0, Vec::len);
    if n == 0 {
        return Err(data_error(format!("{}: file contains no data rows", path.display())));
    }
    let mut features = Array2::zeros((n, feature_names.len()));
    for (j, col) in cells.iter().enumerate() {
        for (i, cell) in col.iter().enumerate() {
            features[[i, j]] = cell.parse::<f64>().map_err(|_| {
                data_error(format!(
                    "row {}, column `{}`: non-numeric value `{cell}`",
                    i + 1,
                    feature_names[j]
                ))
            })?;
        }
    }
    let labels = match label_column {
        None => None,
        Some(name) => {
            let col = read_columns(path, &[name.to_string()])?.remove(0);
            let ids: HashMap<&str, usize> = label_names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
            let mapped = col
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    ids.get(v.as_str()).copied().ok_or_else(|| {
                        data_error(format!(
                            "row {}, column `{name}`: label `{v}` is not one of the model's labels {label_names:?}",
                            i + 1
                        ))
                    })
                })
                .collect::<CliResult<Vec<usize>>>()?;
            Some(mapped)
        }
    };
    let columns = read_columns(path, sensitive_columns)?;
    Ok(ModelInput {
        features,
        labels,
        attributes: attributes_from_columns(sensitive_columns, columns),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intersections_follow_first_appearance() {
        let names = vec!["race".to_string(), "sex".to_string()];
        let cols = vec![
            vec!["a".into(), "b".into(), "a".into()],
            vec!["m".into(), "m".into(), "f".into()],
        ];
        let attrs = attributes_from_columns(&names, cols);
        assert_eq!(attrs.len(), 3);
        assert_eq!(attrs[0].ids, vec![0, 1, 0]);
        assert_eq!(attrs[2].name, "race&sex");
        assert_eq!(attrs[2].group_names, vec!["a|m", "b|m", "a|f"]);
    }
}
