//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

pub mod baseline;
pub mod cfg_oracle;
pub mod programs;
pub mod pattern_oracle;
