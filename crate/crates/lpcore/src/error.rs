use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("variable `{var}` has invalid bounds [{lower}, {upper}]")]
    InvalidBounds { var: String, lower: f64, upper: f64 },
    #[error("binary variable `{0}` must have bounds within [0, 1]")]
    BinaryDomain(String),
    #[error("variable index {index} referenced by `{context}` does not exist")]
    UnknownVariable { index: usize, context: String },
    #[error("constraint index {0} referenced by a bilinear term does not exist")]
    UnknownRow(usize),
    #[error("non-finite coefficient in `{0}`")]
    NonFinite(String),
    #[error("variable `{0}` needs finite bounds for a binary product")]
    UnboundedFactor(String),
    #[error("variable `{0}` is not binary")]
    NotBinary(String),
    #[error("model contains binary variables; use the MILP solver")]
    HasBinaries,
    #[error("model contains {0} bilinear terms; only model_json export supports them")]
    Bilinear(usize),
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("MPS cannot represent bilinear terms ({0} present); export as model_json instead")]
    BilinearInMps(usize),
    #[error("model_json: {0}")]
    Json(#[from] serde_json::Error),
}
