//! Hyperparameter grid search and LASSO variable selection.

mod grid;
mod lasso;

pub use grid::{grid_search, BatchSize, GridEvaluator, GridResult, GridScore, HyperChoice, HyperGrid};
pub use lasso::{lambda_grid, lasso_fit, lasso_path, lasso_select, LassoFit, LassoPath, LassoSelection};
