#![allow(dead_code)]

pub mod kernel_oracle;
pub mod oracles;
pub mod quadrature;
pub mod toy;
