//! Scenario files shipped with the crate.

pub const FIG2: &str = include_str!("../scenarios/fig2.scenario");
pub const FIG3: &str = include_str!("../scenarios/fig3.scenario");

/// `(file name, contents)` of every bundled scenario.
pub const ALL: [(&str, &str); 2] = [("fig2.scenario", FIG2), ("fig3.scenario", FIG3)];
