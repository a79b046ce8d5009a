//! Home of the `acceptance` test target; the crate itself is empty.
//!
//! ```text
//! cargo test -p validation --test acceptance
//! ```
