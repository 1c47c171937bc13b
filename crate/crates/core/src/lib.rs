//! Self-triggered sampling for nonlinear sampled-data control loops.
//!
//! Given a plant, a feedback law and a Lyapunov certificate, the crate
//! computes state-dependent next-sampling times and delay budgets, simulates
//! the sampled closed loop under zero-order hold with actuation delays, and
//! checks the resulting stability and safety claims against brute-force
//! oracles.

// Negated comparisons are used on purpose: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classk;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod integrate;
pub mod linalg;
pub mod lyapunov;
pub mod oracle;
pub mod region;
pub mod sim;
pub mod summary;
pub mod systems;
pub mod trigger;
pub mod verify;

pub use classk::{ClassKForm, ClassKFunction};
pub use config::{MonitorSpec, Resolved, SamplerKind, ScenarioConfig};
pub use dynamics::{BoxSet, ControlVector, FeedbackLaw, JacobianBundle, StateVector, SystemModel};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use lyapunov::{
    compose_chain, quadratic_certificate, solve_lyapunov_equation, symmetric_eigen_bounds, Alpha4Factor,
    CertificateReport, LyapunovCertificate, QuadraticForm,
};
pub use oracle::{oracle_hold_time, oracle_max_norm, oracle_root, HoldCriterion, OracleHold};
pub use region::Region;
pub use trigger::{
    Admissibility, BoundConfig, DelayBudgetRule, M2Mode, Precomputed, TriggerBudget, TriggerEval, TriggerMode, TriggerPolicy,
};
pub use sim::{
    check_lyapunov_decrease, check_safety, run_scenario, trace_stats, DelayModel, DisturbanceModel, Sampler,
    SampleEvent, Scenario, Signal, Trace, TraceStats,
};
pub use summary::{simulate, BoundsSummary, MonitorSummary, RunSummary};
pub use verify::{verify, VerifyOptions, VerifyReport};
