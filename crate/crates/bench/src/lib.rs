//! Shared fixtures for the benchmark targets.

use std::collections::BTreeMap;

use langevin_exit::landscape::THREE_WELL_TIE_RADIUS;
use langevin_exit::pde::{boundary_data, WeightedOperator};
use langevin_exit::sde::SimConfig;
use langevin_exit::{build_grid, DomainGeometry, GridDiscretization, PotentialField};

pub fn double_well(tilt: f64) -> PotentialField {
    PotentialField::builtin("double_well_1d", &BTreeMap::from([("tilt".to_string(), tilt)])).unwrap()
}

/// A batch of 1D paths that all exit within a few time units.
pub fn euler_maruyama_1d() -> (PotentialField, DomainGeometry, SimConfig) {
    let f = double_well(0.1);
    let dom = DomainGeometry::interval(-1.5, 1.5).unwrap();
    let cfg = SimConfig::new(0.8, 2e-3, 64, 1, vec![-0.5]);
    (f, dom, cfg)
}

/// Dirichlet problem on the disk double well with indicator data on the left half.
pub fn harmonic_disk(spacing: f64, h: f64) -> (WeightedOperator, Vec<f64>) {
    let params = BTreeMap::from([("c".to_string(), 2.0)]);
    let f = PotentialField::builtin("double_well_2d", &params).unwrap();
    let dom = DomainGeometry::disk(&[0.0, 0.0], 1.5).unwrap();
    let grid = build_grid(&dom, &[spacing]).unwrap();
    let data = boundary_data(&grid, &|z: &[f64]| if z[0] < 0.0 { 1.0 } else { 0.0 });
    (WeightedOperator::assemble(&f, &grid, h).unwrap(), data)
}

/// Three-well potential on the disk where two boundary levels tie.
pub fn three_well(spacing: f64) -> (PotentialField, DomainGeometry, GridDiscretization) {
    let f = PotentialField::builtin("three_well_2d", &BTreeMap::new()).unwrap();
    let dom = DomainGeometry::disk(&[0.0, 0.0], THREE_WELL_TIE_RADIUS).unwrap();
    let grid = build_grid(&dom, &[spacing]).unwrap();
    (f, dom, grid)
}
