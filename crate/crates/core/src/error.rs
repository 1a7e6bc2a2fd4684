use thiserror::Error;

/// A configuration value that violates its documented range.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Prefix the field path, e.g. `rate` becomes `source.rate`.
    pub fn nested(self, parent: &str) -> Self {
        Self {
            field: format!("{parent}.{}", self.field),
            message: self.message,
        }
    }
}

pub(crate) fn require(cond: bool, field: &str, message: &str) -> Result<(), ConfigError> {
    if cond {
        Ok(())
    } else {
        Err(ConfigError::new(field, message))
    }
}

pub(crate) fn require_probability(value: f64, field: &str) -> Result<(), ConfigError> {
    require(
        (0.0..=1.0).contains(&value),
        field,
        "must be a probability in [0, 1]",
    )
}

pub(crate) fn require_positive(value: f64, field: &str) -> Result<(), ConfigError> {
    require(value.is_finite() && value > 0.0, field, "must be finite and > 0")
}

pub(crate) fn require_nonnegative(value: f64, field: &str) -> Result<(), ConfigError> {
    require(value.is_finite() && value >= 0.0, field, "must be finite and >= 0")
}
