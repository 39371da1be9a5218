//! Entanglement harvesting between Unruh-DeWitt detectors coupled to a
//! massless Dirac field, with a Klein-Gordon baseline.
//!
//! All internal work is done in units of the interaction time `T`.

pub mod entanglement;
pub mod experiments;
pub mod kernels;
pub mod quadrature;
pub mod windows;

pub use entanglement::{
    assemble_pt, leading_order_negativity, leading_order_negativity_err, peres_test,
    EntanglementError, EntanglementReport, PTMatrix,
};
pub use experiments::{
    ablation_study, evaluate_params, fit_decay, fit_sweep, gaussian_reference, kg_baseline,
    optimize_grid, optimize_window, sweep_negativity, AblationReport, Candidate, DecayFit,
    ExperimentError, Objective, OptimizeResult, SweepSpec, SweepTable, TemplateFamily,
    WindowParams,
};
pub use kernels::{
    amplitudes, condition_margin, cross_emission, emission_norm2, exchange_amplitude,
    expanded_condition, AmplitudeReport, AmplitudeSet, DetectorSpec, DualPath, Estimate, EvalPaths,
    ExpandedCondition, FieldModel, GeometrySpec, KernelError, KernelOptions,
};
pub use num_complex::Complex64;
pub use quadrature::{IntegrationSpec, QuadratureError, QuadratureResult};
pub use windows::{
    synthesize_superosc, OscTarget, SuperoscParams, WindowError, WindowProfile, WindowShape,
};
