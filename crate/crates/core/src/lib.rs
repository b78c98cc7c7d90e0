// SPDX-License-Identifier: Apache-2.0

pub mod canonical;
pub mod codemap;
pub mod context;
pub mod curation;
pub mod extractors;
pub mod facts;
pub mod history;
pub mod knowledge;
pub mod model;
pub mod query;
pub mod store;
pub mod text;
pub mod validate;
pub mod writeback;
