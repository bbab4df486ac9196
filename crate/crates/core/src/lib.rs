//! Equilibrium engine for networked energy-sharing markets among prosumers.
//!
//! Prosumers submit bids `b_i` to a platform that clears prices `λ_i` and
//! quantities `q_i = -a·λ_i + b_i` subject to energy balance and DC line-flow
//! limits. On top of the clearing rule the crate computes:
//!
//! * the social optimum and the price-taking benchmark,
//! * the unique equilibrium of the price-regulated mechanism (via its
//!   central convex program), the variational equilibrium and efficiency
//!   diagnostics (price of anarchy, Pareto check, price structure, net payment),
//! * the distributed bidding protocol with convergence diagnostics,
//! * a best-response laboratory for the unregulated game.
//!
//! Module map:
//!
//! | module        | contents                                               |
//! |---------------|--------------------------------------------------------|
//! | [`network`]   | buses, lines, distribution factors, DC flow oracle     |
//! | [`qp`]        | dense strictly convex QP solver with multipliers       |
//! | [`market`]    | scenarios, clearing, price regulation, payments        |
//! | [`equilibrium`] | social optimum, regulated equilibrium, VE, PoA       |
//! | [`bidding`]   | iterative bidding protocol                             |
//! | [`brlab`]     | best responses of the unregulated game                 |
//! | [`scenario`]  | versioned scenario file format and generator           |
//! | [`cli`]       | command dispatch used by the `eshare` binary           |

pub mod bidding;
pub mod brlab;
pub mod cli;
pub mod equilibrium;
mod error;
pub mod market;
pub mod network;
pub mod qp;
pub mod scenario;

pub use error::{Error, Result};
pub use market::{ClearingOutcome, Prosumer, Scenario};
pub use network::{LineSpec, NetworkModel};
