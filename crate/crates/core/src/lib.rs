//! Power-grid optimization laboratory.
//!
//! Economic dispatch, DC optimal power flow, Newton-Raphson AC power flow and
//! an interior-point AC optimal power flow, all on dense per-unit network
//! models, plus the analysis layer in [`feasgap`] that checks why a lossless
//! DC dispatch can never satisfy the AC balance equations.
//!
//! Sign convention: a bus injection is generation minus load everywhere in
//! this crate, `P_i(V, θ) = Σ pg − p_load`.

pub mod acopf;
pub mod acpf;
pub mod dcopf;
mod error;
pub mod feasgap;
pub mod io;
pub mod netmodel;

pub use error::{Error, Result};

/// Directory holding the bundled case fixtures.
pub fn fixture_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Loads one of the bundled fixtures by stem (`"case14"`, `"case3"`, ...).
pub fn load_fixture(name: &str) -> Result<netmodel::NetworkCase> {
    let path = fixture_dir().join(format!("{name}.m"));
    netmodel::read_case(&path)
}
