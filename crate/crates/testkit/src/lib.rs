// SPDX-License-Identifier: Apache-2.0

//! Test support: the payfix fixture, planted proposals, and seeded random
//! histories, graphs and proposals for property tests.

pub mod oracle;
pub mod payfix;
pub mod random;
