//! C ABI surface; see build.rs for header generation.
