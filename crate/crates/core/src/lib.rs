//! Continuity-method solver for coupled Kähler-Einstein equations.
//!
//! The coupled system is solved in its Monge-Ampère form
//!
//! ```text
//! (theta_i + i ddbar phi_i)^n = C_i exp(sigma * sum_j t_j phi_j) omega_0^n,   i = 1..k
//! ```
//!
//! along the path `t: 0 -> 1`, on either a closed triangle mesh (complex
//! dimension one) or the rotationally invariant model of `P^n`. Monitors
//! track the a priori estimate quantities and the spectrum of the
//! linearized operator along the path.

pub mod cli_io;
pub mod continuity;
pub mod error;
pub mod estimates;
pub mod geometry;
pub mod linalg;
pub mod linear_analysis;
pub mod system;

pub use error::{Error, Result};
pub use geometry::{
    build_radial_geometry, build_surface_geometry, load_off_mesh, BackgroundSplit,
    DiscreteGeometry, Sign, TriangleMesh,
};
pub use system::CoupledState;
