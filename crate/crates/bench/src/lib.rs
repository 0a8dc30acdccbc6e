//! Fixed problem instances shared by the benchmarks.

use asyrgs_core::testkit::{random_vector, unit_system, MatrixRecipe};
use asyrgs_core::UnitDiagonalSystem;

/// A unit-diagonal system built from `recipe` with a seeded right-hand side.
pub fn problem(recipe: &MatrixRecipe) -> UnitDiagonalSystem {
    unit_system(recipe, &random_vector(recipe.dim(), 0xbe9c)).expect("benchmark recipes are valid")
}

/// The recipes timed by `benches/solvers.rs`.
pub fn recipes() -> Vec<MatrixRecipe> {
    vec![
        MatrixRecipe::laplacian_grid(64),
        MatrixRecipe::banded_spd(4096, 4, 1),
        MatrixRecipe::skewed(4096, 64, 2),
    ]
}
