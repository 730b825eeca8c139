//! Concrete evolution models and sampled checks of their hypotheses.

mod conditions;
mod evolution;
mod maps;
mod spec;

pub use conditions::{
    check_condition, check_named_condition, Condition, ConditionReport, HypothesisConstants, SamplerConfig,
    Verdict, Witness, PASS_THRESHOLD,
};
pub use evolution::{apply_lambda, Evolution};
pub use maps::{Flux, Reaction, ScalarFlux};
pub use spec::{ConstantOverrides, ModelSpec, DEFAULT_RADIUS, DEFAULT_U_MAX};
