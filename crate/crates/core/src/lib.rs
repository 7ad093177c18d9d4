//! Two-stage congestion management: day-ahead clearing followed by AC
//! re-dispatch co-optimized with series/shunt FACTS setpoints and
//! interruptible demand response.

pub mod dr;
pub mod error;
pub mod facts;
pub mod ipm;
pub mod jet;
pub mod market;
pub mod netmodel;
pub mod powerflow;
pub mod redispatch;
pub mod uncertainty;

pub use error::{Error, Result};
pub use market::{ClearingResult, OfferSet};
pub use netmodel::{build_rts24, load_case, validate_case, SystemCase};
pub use powerflow::{AdmittanceMatrix, PowerFlowSolution};
pub use redispatch::{solve_cmp, CmpConfig, LmpVector, RedispatchDecision, Scenario};
pub use uncertainty::{PemEstimate, PowerCurve};
