#![allow(dead_code)]

pub mod metrics_oracle;
pub mod nn_oracle;
pub mod texture_oracle;
