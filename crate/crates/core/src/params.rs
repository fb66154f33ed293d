//! Named parameter vectors with box bounds and freeze flags.
//!
//! [`ParamSpace`] is the common currency between the least-squares solver
//! (which treats bounds through smooth reparameterizations) and the
//! replica-exchange sampler (which reads them as a uniform prior box).
//! A parameter is *pinned* when frozen or when its bounds coincide; pinned
//! coordinates keep their value and drop out of optimization and sampling.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("duplicate parameter name {0:?}")]
    DuplicateName(String),
    #[error("parameter {name:?}: invalid bounds [{lower}, {upper}]")]
    InvalidBounds { name: String, lower: f64, upper: f64 },
    #[error("parameter {name:?}: initial value {init} outside [{lower}, {upper}]")]
    InitOutOfBounds { name: String, init: f64, lower: f64, upper: f64 },
    #[error("parameter {name:?}: initial value must be finite, got {init}")]
    NonFiniteInit { name: String, init: f64 },
    #[error("unknown parameter {0:?}")]
    UnknownParameter(String),
}

/// One named coordinate: initial value, box bounds, freeze flag.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub init: f64,
    pub lower: f64,
    pub upper: f64,
    pub frozen: bool,
}

impl ParamSpec {
    /// Unbounded free parameter.
    pub fn free(name: impl Into<String>, init: f64) -> Self {
        Self { name: name.into(), init, lower: f64::NEG_INFINITY, upper: f64::INFINITY, frozen: false }
    }

    /// Free parameter with box bounds (either side may be infinite).
    pub fn bounded(name: impl Into<String>, init: f64, lower: f64, upper: f64) -> Self {
        Self { name: name.into(), init, lower, upper, frozen: false }
    }

    /// Frozen parameter: participates in the model, not in the search.
    pub fn fixed(name: impl Into<String>, value: f64) -> Self {
        Self { name: name.into(), init: value, lower: value, upper: value, frozen: true }
    }

    fn validate(&self) -> Result<(), ParamError> {
        if !self.init.is_finite() {
            return Err(ParamError::NonFiniteInit { name: self.name.clone(), init: self.init });
        }
        if self.lower.is_nan() || self.upper.is_nan() || self.lower > self.upper {
            return Err(ParamError::InvalidBounds {
                name: self.name.clone(),
                lower: self.lower,
                upper: self.upper,
            });
        }
        if self.init < self.lower || self.init > self.upper {
            return Err(ParamError::InitOutOfBounds {
                name: self.name.clone(),
                init: self.init,
                lower: self.lower,
                upper: self.upper,
            });
        }
        Ok(())
    }

    /// Pinned coordinates keep their value during fits and sampling.
    pub fn is_pinned(&self) -> bool {
        self.frozen || self.lower == self.upper
    }
}

/// An ordered collection of [`ParamSpec`]s with unique names.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpace {
    specs: Vec<ParamSpec>,
}

impl ParamSpace {
    pub fn new(specs: Vec<ParamSpec>) -> Result<Self, ParamError> {
        for (i, spec) in specs.iter().enumerate() {
            spec.validate()?;
            if specs[..i].iter().any(|other| other.name == spec.name) {
                return Err(ParamError::DuplicateName(spec.name.clone()));
            }
        }
        Ok(Self { specs })
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.specs.iter().map(|s| s.name.clone()).collect()
    }

    pub fn init_values(&self) -> Vec<f64> {
        self.specs.iter().map(|s| s.init).collect()
    }

    /// Indices of coordinates that actually vary.
    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.specs.len()).filter(|&i| !self.specs[i].is_pinned()).collect()
    }

    pub fn free_count(&self) -> usize {
        self.specs.iter().filter(|s| !s.is_pinned()).count()
    }

    /// Replaces the initial value of `name`, keeping it inside the bounds.
    pub fn set_init(&mut self, name: &str, value: f64) -> Result<(), ParamError> {
        let i = self
            .index_of(name)
            .ok_or_else(|| ParamError::UnknownParameter(name.to_string()))?;
        let mut spec = self.specs[i].clone();
        spec.init = value;
        spec.validate()?;
        self.specs[i] = spec;
        Ok(())
    }

    /// Pins `name` at `value` (bounds collapse onto the value).
    pub fn freeze(&mut self, name: &str, value: f64) -> Result<(), ParamError> {
        let i = self
            .index_of(name)
            .ok_or_else(|| ParamError::UnknownParameter(name.to_string()))?;
        if !value.is_finite() {
            return Err(ParamError::NonFiniteInit { name: name.to_string(), init: value });
        }
        self.specs[i] = ParamSpec::fixed(name, value);
        Ok(())
    }

    /// Multiplies every free initial value by `1 + fraction·u`, u ~ U(-1, 1),
    /// clipping back into the bounds. Useful for perturbed restarts.
    pub fn perturb_inits<R: Rng>(&mut self, fraction: f64, rng: &mut R) {
        for spec in &mut self.specs {
            if spec.is_pinned() {
                continue;
            }
            let u: f64 = rng.gen_range(-1.0..1.0);
            let mut v = spec.init * (1.0 + fraction * u);
            if spec.init == 0.0 {
                // Relative perturbation is a no-op at zero; nudge absolutely
                // on the scale of the bounds when they are finite.
                if spec.lower.is_finite() && spec.upper.is_finite() {
                    v = fraction * u * 0.5 * (spec.upper - spec.lower);
                }
            }
            spec.init = v.clamp(spec.lower, spec.upper);
        }
    }
}
