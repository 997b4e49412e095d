#![allow(dead_code)]

use deepstack_core::data::{synth_bars, Dataset};
use deepstack_core::{Matrix, RngState, StackParams};

pub fn random_unit(rows: usize, cols: usize, seed: u64) -> Matrix {
    RngState::new(seed).uniform_matrix(rows, cols, 0.05, 0.95)
}

pub fn stack(input: usize, widths: &[usize], tied: bool, seed: u64) -> StackParams {
    StackParams::init(input, widths, tied, &mut RngState::new(seed)).unwrap()
}

/// 8×8 bars split 300/100/100.
pub fn bars(seed: u64) -> Dataset {
    let d = synth_bars(500, 8, &mut RngState::new(seed)).unwrap();
    d.with_split(300, 100).unwrap()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    deepstack_core::gradcheck::relative_error(a, b)
}
