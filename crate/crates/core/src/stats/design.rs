//! Fixed-effect design matrices: intercept, one treatment-coded factor and
//! any number of numeric covariates.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::linalg::Matrix;
use crate::error::{invalid, Error, Result};

pub const INTERCEPT: &str = "(Intercept)";

/// Treatment coding of a categorical factor: one indicator column per
/// non-reference level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorCoding {
    pub name: String,
    /// All levels, sorted.
    pub levels: Vec<String>,
    pub reference: String,
}

impl FactorCoding {
    /// Name of the indicator column for `level`; `None` for the reference.
    pub fn column_name(&self, level: &str) -> Option<String> {
        (level != self.reference).then(|| format!("{}[{}]", self.name, level))
    }

    pub fn has_level(&self, level: &str) -> bool {
        self.levels.iter().any(|l| l == level)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariate {
    pub name: String,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    pub matrix: Matrix,
    pub factor: Option<FactorCoding>,
    pub covariates: Vec<Covariate>,
}

impl Design {
    pub fn builder(n: usize) -> DesignBuilder {
        DesignBuilder {
            n,
            names: vec![INTERCEPT.to_string()],
            columns: vec![vec![1.0; n]],
            factor: None,
            covariates: Vec::new(),
            error: None,
        }
    }

    /// Wraps an arbitrary matrix with column names.
    pub fn from_matrix(matrix: Matrix, names: Vec<String>) -> Result<Self> {
        if names.len() != matrix.cols() {
            return Err(invalid!("{} names for {} columns", names.len(), matrix.cols()));
        }
        Ok(Design {
            names,
            matrix,
            factor: None,
            covariates: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    pub fn p(&self) -> usize {
        self.matrix.cols()
    }

    /// Covariates at their grand means, the default EMM evaluation point.
    pub fn covariate_means(&self) -> Vec<(String, f64)> {
        self.covariates.iter().map(|c| (c.name.clone(), c.mean)).collect()
    }
}

pub struct DesignBuilder {
    n: usize,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    factor: Option<FactorCoding>,
    covariates: Vec<Covariate>,
    error: Option<Error>,
}

impl DesignBuilder {
    fn fail(&mut self, e: Error) {
        self.error.get_or_insert(e);
    }

    pub fn factor<S: AsRef<str>>(mut self, name: &str, labels: &[S], reference: &str) -> Self {
        if self.factor.is_some() {
            self.fail(invalid!("only one factor is supported"));
            return self;
        }
        if labels.len() != self.n {
            self.fail(invalid!("factor {name:?} has {} labels for {} rows", labels.len(), self.n));
            return self;
        }
        let mut levels: Vec<String> = labels.iter().map(|l| l.as_ref().to_string()).collect();
        levels.sort();
        levels.dedup();
        if !levels.iter().any(|l| l == reference) {
            self.fail(Error::UnknownLevel(reference.to_string()));
            return self;
        }
        let coding = FactorCoding {
            name: name.to_string(),
            levels,
            reference: reference.to_string(),
        };
        for level in &coding.levels {
            if let Some(col) = coding.column_name(level) {
                self.columns.push(
                    labels
                        .iter()
                        .map(|l| if l.as_ref() == level { 1.0 } else { 0.0 })
                        .collect(),
                );
                self.names.push(col);
            }
        }
        self.factor = Some(coding);
        self
    }

    pub fn covariate(mut self, name: &str, values: &[f64]) -> Self {
        if values.len() != self.n {
            self.fail(invalid!("covariate {name:?} has {} values for {} rows", values.len(), self.n));
            return self;
        }
        if values.iter().any(|v| !v.is_finite()) {
            self.fail(invalid!("covariate {name:?} has non-finite values"));
            return self;
        }
        let mean = values.iter().sum::<f64>() / self.n.max(1) as f64;
        self.covariates.push(Covariate {
            name: name.to_string(),
            mean,
        });
        self.names.push(name.to_string());
        self.columns.push(values.to_vec());
        self
    }

    pub fn build(self) -> Result<Design> {
        if let Some(e) = self.error {
            return Err(e);
        }
        let p = self.columns.len();
        let mut matrix = Matrix::zeros(self.n, p);
        for (j, col) in self.columns.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                matrix[(i, j)] = *v;
            }
        }
        Ok(Design {
            names: self.names,
            matrix,
            factor: self.factor,
            covariates: self.covariates,
        })
    }
}
