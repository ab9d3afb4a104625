//! Spin transfer functions of excitation-conserving spin networks whose sites
//! each couple to an independent bath of spins.
//!
//! The crate evaluates the transfer amplitude `f_{m,n}(t) = <m,0| e^{-iHt} |n,0>`
//! in the first excitation sector through several routes:
//!
//! * [`dynamics::bare_transfer`]: the isolated network;
//! * [`dynamics::exact_transfer`]: the closed-form solution for a homogeneous
//!   effective bath coupling `G`;
//! * [`dynamics::weak_corrected_transfer`]: bare amplitude plus the `O(G^2)` term;
//! * [`dynamics::strong_coupling_transfer`]: `cos(Gt) f^0(t/2)`;
//! * [`oracle::oracle_transfer`]: brute-force propagation of the full sector
//!   with individually specified bath spins.
//!
//! [`optimize`] searches chain couplings for high transfer peaks and [`cli`]
//! holds the command-line front end.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod optimize;
pub mod oracle;
pub mod spectra;

pub use error::{Error, Result};

/// Complex amplitude type used throughout.
pub type C64 = num_complex::Complex64;
