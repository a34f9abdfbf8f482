//! Token-level byte-pair encoding for SQL query corpora.
//!
//! Queries are sequences of whole SQL tokens. Training learns an ordered list
//! of pair merges from a training corpus, refusing merges that would leave
//! validation tokens under-represented in training and stopping after a fixed
//! number of such refusals ([`bpetrain`]). An optional mode restricts merges to
//! runs of sibling nodes in a lightweight SQL parse tree ([`sqlast`]).
//! Learned tables encode and decode corpora ([`codec`]), and [`metrics`]
//! reports vocabulary, OOV, compression and query-pattern statistics.
//!
//! ```
//! use sqlbpe::bpetrain::{train, TrainerConfig};
//! use sqlbpe::codec::{decode, encode};
//! use sqlbpe::corpus::{Corpus, Role};
//!
//! let tr = Corpus::from_texts(&["SELECT NAME FROM CITY ;", "SELECT NAME FROM STATE ;"], Role::Train).unwrap();
//! let va = Corpus::from_texts(&["SELECT NAME FROM CITY ;"], Role::Valid).unwrap();
//! let config = TrainerConfig { min_count: 1, ..TrainerConfig::default() };
//! let out = train(&tr, &va, &config, None).unwrap();
//!
//! let encoded = encode(&va, &out.table);
//! assert!(encoded.total_tokens() < va.total_tokens());
//! assert_eq!(decode(&encoded, &out.table).unwrap(), va);
//! ```

pub mod bpetrain;
pub mod cli;
pub mod codec;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod sqlast;

pub use error::{Error, Result};
