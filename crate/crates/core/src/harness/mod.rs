//! Experiments, error measurement, oracles, file output and the command line.

pub mod cli;
pub mod config;
pub mod errors;
pub mod fracnorm;
pub mod oracle;
pub mod output;

pub use cli::{cli_main, exit_code};
pub use config::{ExperimentKind, RunConfig};
pub use errors::{
    convergence_study, lifted_surface_pencil, manufactured_source, measure_errors, run_sphere_flow,
    solve_manufactured_robin, solve_robin_on_sphere, ErrorReport, ErrorRow, ExactField, Experiment, Norm, StudyConfig, TauScaling,
};
pub use fracnorm::{derivative_battery, fracnorm_check, fracnorm_check_with, Check, FracnormOptions, FracnormReport};
pub use oracle::{integrate_scalar, radial_oracle, RadialOracle};
pub use output::{lattice_subcells, write_csv, write_fracnorm_csv, write_vtk, VTK_HEADER};
