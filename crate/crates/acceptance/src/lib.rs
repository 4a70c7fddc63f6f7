//! Acceptance-suite support crate; see tests/acceptance.rs.
