//! Sound whole-program approximation of elementary function calls.

#![cfg_attr(test, allow(clippy::approx_constant))]

pub mod analysis;
pub mod approxgen;
pub mod bench;
pub mod budget;
pub mod codegen;
pub mod expr;
pub mod format;
pub mod frontend;
pub mod hexfloat;
pub mod numerics;
pub mod pipeline;
