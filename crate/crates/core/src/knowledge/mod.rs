// SPDX-License-Identifier: Apache-2.0

//! Knowledge layer: extraction units, assembly and cards.

pub mod assemble;
pub mod card;
pub mod evidence;
pub mod lexicon;
pub mod units;
