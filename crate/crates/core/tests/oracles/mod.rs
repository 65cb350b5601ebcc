//! Brute-force reference implementations shared by the property tests and
//! the acceptance suite.
#![allow(dead_code)]

pub mod compose;
pub mod skeleton;
