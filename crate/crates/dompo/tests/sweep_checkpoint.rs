// Copyright 2026 Dompo Contributors
// SPDX-License-Identifier: Apache-2.0

//! An interrupted checkpointed sweep resumes to the same bytes as an
//! uninterrupted one.

use dompo::sweep::{self, Axis, Backend, PointOptions, SweepSpec, CHUNK};
use dompo::SystemParams;

fn spec() -> SweepSpec {
    SweepSpec {
        base: SystemParams::headline(1.0, 0.5).unwrap(),
        axes: vec!["x=0.1:0.98:12".parse::<Axis>().unwrap(), "Delta=1:150:15".parse::<Axis>().unwrap()],
        backend: Backend::Semiclassical,
        options: PointOptions::default(),
    }
}

fn reference() -> Vec<u8> {
    let rows = sweep::run_sweep(&spec(), 2).unwrap();
    let mut buf = Vec::new();
    sweep::write_csv(&mut buf, &rows, true).unwrap();
    buf
}

#[test]
fn resume_after_truncation_matches_full_run() {
    let full = reference();
    let dir = tempfile::tempdir().unwrap();
    let cp = dir.path().join("cp.csv");
    let out = dir.path().join("out.csv");
    assert_eq!(sweep::run_sweep_checkpointed(&spec(), 2, &cp, Some(&out)).unwrap(), 180);
    assert_eq!(std::fs::read(&out).unwrap(), full);

    // keep the header and one full chunk, as if killed mid-run
    let text = String::from_utf8(full.clone()).unwrap();
    let kept: String = text.lines().take(1 + CHUNK).map(|l| format!("{l}\n")).collect();
    std::fs::write(&cp, kept).unwrap();
    assert_eq!(sweep::read_indices(&cp).unwrap().len(), CHUNK);
    assert_eq!(sweep::run_sweep_checkpointed(&spec(), 3, &cp, Some(&out)).unwrap(), 180);
    assert_eq!(std::fs::read(&out).unwrap(), full);
    assert_eq!(sweep::read_indices(&out).unwrap(), (0..180).collect::<Vec<_>>());
}

#[test]
fn finished_checkpoint_is_left_alone() {
    let dir = tempfile::tempdir().unwrap();
    let cp = dir.path().join("cp.csv");
    sweep::run_sweep_checkpointed(&spec(), 1, &cp, None).unwrap();
    let before = std::fs::read(&cp).unwrap();
    assert_eq!(sweep::run_sweep_checkpointed(&spec(), 1, &cp, None).unwrap(), 180);
    assert_eq!(std::fs::read(&cp).unwrap(), before);
}

#[test]
fn foreign_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cp = dir.path().join("cp.csv");
    std::fs::write(&cp, "a,b,c\n1,2,3\n").unwrap();
    assert!(sweep::run_sweep_checkpointed(&spec(), 1, &cp, None).is_err());
}
