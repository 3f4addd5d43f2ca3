//! Model persistence: a directory of RFM1 matrices plus a JSON metadata file.
//!
//! Layout: `v.rfm`, `h.rfm`, `q_<idx>.rfm` and `sigma_<idx>.rfm` (k×1) per
//! group, and `model.json` carrying rank, fit, iterations, convergence flag,
//! solver options and group ids in slice order.

use super::{Parafac2Error, Parafac2Model, SolverOptions};
use crate::model_io::{read_matrix, write_matrix, ReprMatrix};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelMeta {
    pub group_ids: Vec<String>,
    pub options: SolverOptions,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelJson {
    rank: usize,
    fit: f64,
    iterations: usize,
    converged: bool,
    seed: u64,
    options: SolverOptions,
    group_ids: Vec<String>,
    #[serde(default)]
    error_history: Vec<f64>,
}

fn matrix_file(values: DMatrix<f64>) -> Result<ReprMatrix, Parafac2Error> {
    ReprMatrix::new(values).map_err(Parafac2Error::Matrix)
}

pub fn save_model(
    dir: impl AsRef<Path>,
    model: &Parafac2Model,
    meta: &ModelMeta,
) -> Result<(), Parafac2Error> {
    if meta.group_ids.len() != model.group_count() {
        return Err(Parafac2Error::Metadata(format!(
            "{} group ids for {} groups",
            meta.group_ids.len(),
            model.group_count()
        )));
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;

    write_matrix(&matrix_file(model.v.clone())?, dir.join("v.rfm"))?;
    write_matrix(&matrix_file(model.h.clone())?, dir.join("h.rfm"))?;
    for (idx, q) in model.q.iter().enumerate() {
        write_matrix(&matrix_file(q.clone())?, dir.join(format!("q_{idx:03}.rfm")))?;
    }
    for (idx, s) in model.sigma.iter().enumerate() {
        let column = DMatrix::from_column_slice(s.len(), 1, s.as_slice());
        write_matrix(&matrix_file(column)?, dir.join(format!("sigma_{idx:03}.rfm")))?;
    }

    let json = ModelJson {
        rank: model.rank,
        fit: model.fit,
        iterations: model.iterations,
        converged: model.converged,
        seed: meta.options.seed,
        options: meta.options,
        group_ids: meta.group_ids.clone(),
        error_history: model.error_history.clone(),
    };
    let text = serde_json::to_string_pretty(&json)
        .map_err(|e| Parafac2Error::Metadata(e.to_string()))?;
    fs::write(dir.join("model.json"), text + "\n")?;
    Ok(())
}

pub fn load_model(dir: impl AsRef<Path>) -> Result<(Parafac2Model, ModelMeta), Parafac2Error> {
    let dir = dir.as_ref();
    let text = fs::read_to_string(dir.join("model.json"))?;
    let json: ModelJson =
        serde_json::from_str(&text).map_err(|e| Parafac2Error::Metadata(e.to_string()))?;

    let v = read_matrix(dir.join("v.rfm"))?.values;
    let h = read_matrix(dir.join("h.rfm"))?.values;
    let mut q = Vec::with_capacity(json.group_ids.len());
    let mut sigma = Vec::with_capacity(json.group_ids.len());
    for idx in 0..json.group_ids.len() {
        q.push(read_matrix(dir.join(format!("q_{idx:03}.rfm")))?.values);
        let col = read_matrix(dir.join(format!("sigma_{idx:03}.rfm")))?.values;
        if col.ncols() != 1 {
            return Err(Parafac2Error::Metadata(format!(
                "sigma_{idx:03}.rfm is not a column vector"
            )));
        }
        sigma.push(DVector::from_column_slice(col.as_slice()));
    }

    let model = Parafac2Model {
        rank: json.rank,
        v,
        h,
        q,
        sigma,
        fit: json.fit,
        iterations: json.iterations,
        converged: json.converged,
        error_history: json.error_history,
    };
    let meta = ModelMeta {
        group_ids: json.group_ids,
        options: json.options,
    };
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::CovarianceSlice;
    use crate::parafac2::{decompose, InitStrategy};
    use nalgebra::DMatrix;
    use tempfile::tempdir;

    #[test]
    fn save_load_round_trips_bit_exactly() {
        let slices = vec![
            CovarianceSlice {
                group_id: "a".into(),
                omega: DMatrix::from_fn(5, 6, |r, c| ((r * 6 + c) as f64).sin()),
                m: 10,
            },
            CovarianceSlice {
                group_id: "b".into(),
                omega: DMatrix::from_fn(4, 6, |r, c| ((r * 6 + c) as f64).cos()),
                m: 10,
            },
        ];
        let options = SolverOptions {
            rank: 2,
            max_sweeps: 50,
            rel_tol: 1e-10,
            seed: 3,
            init: InitStrategy::Random,
        };
        let model = decompose(&slices, &options).unwrap();
        let meta = ModelMeta {
            group_ids: vec!["a".into(), "b".into()],
            options,
        };

        let dir = tempdir().unwrap();
        save_model(dir.path(), &model, &meta).unwrap();
        let (loaded, loaded_meta) = load_model(dir.path()).unwrap();

        assert_eq!(loaded.v, model.v);
        assert_eq!(loaded.h, model.h);
        assert_eq!(loaded.q, model.q);
        assert_eq!(loaded.sigma, model.sigma);
        assert_eq!(loaded.fit, model.fit);
        assert_eq!(loaded.iterations, model.iterations);
        assert_eq!(loaded.converged, model.converged);
        assert_eq!(loaded_meta.group_ids, meta.group_ids);
    }

    #[test]
    fn group_id_count_must_match() {
        let slices = vec![CovarianceSlice {
            group_id: "a".into(),
            omega: DMatrix::from_fn(4, 4, |r, c| (r + c) as f64 + 1.0),
            m: 5,
        }];
        let options = SolverOptions {
            rank: 1,
            max_sweeps: 10,
            rel_tol: 1e-8,
            seed: 0,
            init: InitStrategy::Random,
        };
        let model = decompose(&slices, &options).unwrap();
        let meta = ModelMeta {
            group_ids: vec!["a".into(), "phantom".into()],
            options,
        };
        let dir = tempdir().unwrap();
        match save_model(dir.path(), &model, &meta) {
            Err(Parafac2Error::Metadata(_)) => {}
            other => panic!("expected Metadata error, got {other:?}"),
        }
    }
}
