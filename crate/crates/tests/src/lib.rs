//! Oracles, fixtures and helpers shared by the workspace test suites.

pub mod golden;
pub mod oracle;

use std::path::PathBuf;
use std::process::Command;

/// Path of the `masort` binary, building it first if needed.
pub fn masort_bin() -> PathBuf {
    let exe = std::env::current_exe().expect("test executable path");
    let dir = exe.parent().and_then(|d| d.parent()).expect("target directory");
    let bin = dir.join(format!("masort{}", std::env::consts::EXE_SUFFIX));
    if !bin.exists() {
        let status = Command::new(env!("CARGO"))
            .args(["build", "-p", "masort-cli", "--bin", "masort"])
            .status()
            .expect("run cargo build");
        assert!(status.success(), "building masort failed");
    }
    bin
}
