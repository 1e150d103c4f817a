//! Synthetic brace data: the cyclic loading protocol and a degrading
//! hysteresis law driven by it.

mod bouc_wen;
pub mod io;
mod protocol;

pub use bouc_wen::{
    finite_difference_velocity, simulate, simulate_detailed, BoucWenParams, HystereticResponse,
};
pub use protocol::{generate_protocol, LoadingProtocol, DEFAULT_AMPLITUDE_FACTORS};

use crate::error::Result;
use crate::series::BraceRecord;

/// Protocol plus simulated response in one record.
pub fn generate_record(protocol: &LoadingProtocol, params: &BoucWenParams) -> Result<BraceRecord> {
    let disp = generate_protocol(protocol)?;
    let force = simulate(params, &disp)?;
    BraceRecord::new(disp, force)
}
