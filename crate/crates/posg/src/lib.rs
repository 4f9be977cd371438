//! Tabular planning and learning for partially observable stochastic games
//! (POSGs) with information sharing among agents.
//!
//! The library models a finite-horizon POSG `(H, S, {A_i}, {O_i}, T, O, mu_1, {r_i})`
//! in which a hidden state evolves under joint actions, every agent receives a
//! private observation each step, and rewards are functions of the joint
//! observation. Agents share part of their history according to a fixed
//! information-sharing structure, which splits each history into *common*
//! information `c_h` (known to everyone) and per-agent *private* information
//! `p_{i,h}`.
//!
//! On top of that model the crate provides:
//!
//! * exact and finite-memory belief filtering over states ([`beliefs`]),
//! * the five supported sharing structures with their strategy-independent
//!   common-information beliefs ([`info`]),
//! * stage games in prescription space with NE/CE/CCE solvers ([`equilibrium`]),
//! * compressed common-information Markov games ([`approx`]),
//! * backward-induction planners and exact policy evaluation ([`planning`]),
//! * sample-based model estimation and the full learning loop ([`learning`]),
//! * benchmark instance constructors ([`bench`]) and a text file format ([`fileio`]).
//!
//! # Conventions
//!
//! Steps `h` are 1-based throughout, matching the dynamic-programming
//! recursions: transitions exist for `h in 1..=H`, emissions for
//! `h in 1..=H+1` and rewards for `h in 2..=H+1`. A trajectory starts with
//! the first action; there is no step-1 observation in any history. Histories
//! are passed as `(actions, observations)` slices where `actions[k]` is the
//! joint action `a_{k+1}` and `observations[k]` is the joint observation
//! `o_{k+2}`.
//!
//! Joint actions and observations are mixed-radix encoded with agent 0 most
//! significant; see [`model::encode_joint`].

pub mod approx;
pub mod bench;
pub mod beliefs;
pub mod equilibrium;
pub mod fileio;
pub mod info;
pub mod learning;
pub mod model;
pub mod planning;

pub use model::{GeneralPolicy, JointPolicy, PosgModel, Trajectory};
