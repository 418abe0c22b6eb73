//! Running the binary and comparing its outputs with `tests/golden/`.
//!
//! Set `UPDATE_GOLDENS=1` to rewrite the goldens from the current build.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

pub type Files = BTreeMap<String, Vec<u8>>;

pub struct Case {
    pub name: &'static str,
    pub args: &'static [&'static str],
    pub code: i32,
    /// Slow cases run once; the golden comparison still pins the bytes.
    pub once: bool,
}

/// One case per CLI command and input mode.
pub const CASES: &[Case] = &[
    Case { name: "analyze_torus", args: &["analyze", "--config", "scenarios/torus.json", "--plot"], code: 0, once: false },
    Case { name: "analyze_sphere", args: &["analyze", "--config", "scenarios/sphere.json"], code: 0, once: false },
    Case { name: "analyze_degenerate", args: &["analyze", "--config", "scenarios/degenerate.json"], code: 1, once: false },
    Case {
        name: "analyze_from_json",
        args: &["analyze", "--config", "scenarios/torus.json", "--from-json", "tests/fixtures/torus_complex.json"],
        code: 0,
        once: false,
    },
    Case { name: "continue_identity", args: &["continue", "--config", "scenarios/identity_continue.json"], code: 0, once: false },
    Case {
        name: "continue_from_json",
        args: &["continue", "--config", "scenarios/identity_continue.json", "--from-json", "tests/fixtures/identity_stepmap.json"],
        code: 0,
        once: false,
    },
    Case { name: "graft_shear", args: &["graft", "--config", "scenarios/graft_shear.json", "--plot"], code: 0, once: false },
    Case { name: "square_constant", args: &["square", "--config", "scenarios/square_constant.json"], code: 0, once: true },
    Case { name: "relative_cap", args: &["relative", "--config", "scenarios/relative_cap.json"], code: 0, once: false },
    Case { name: "relative_max_min_neg", args: &["relative", "--config", "scenarios/relative_max_min_neg.json"], code: 0, once: false },
    Case {
        name: "relative_max_min_from_json",
        args: &["relative", "--config", "scenarios/relative_max_min_slab.json", "--from-json", "tests/fixtures/max_min_profile.json"],
        code: 0,
        once: true,
    },
];

pub fn case(name: &str) -> &'static Case {
    CASES.iter().find(|c| c.name == name).unwrap_or_else(|| panic!("no case {name}"))
}

pub fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn run(args: &[&str], out: &Path) -> i32 {
    let output = Command::new(env!("CARGO_BIN_EXE_morse-pi1"))
        .args(args)
        .arg("--out")
        .arg(out)
        .current_dir(root())
        .env("MORSE_PI1_THREADS", "1")
        .output()
        .expect("binary runs");
    output.status.code().expect("exited normally")
}

pub fn read_dir(dir: &Path) -> Files {
    std::fs::read_dir(dir)
        .map(|rd| {
            rd.map(|e| {
                let e = e.expect("dir entry");
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).expect("readable"))
            })
            .collect()
        })
        .unwrap_or_default()
}

/// Runs the case (twice unless `once`) and checks the exit code, byte
/// equality between runs and against the golden directory.
pub fn check_golden(c: &Case) -> Result<Files, String> {
    let tmp = || tempfile::tempdir().map_err(|e| e.to_string());
    let a = tmp()?;
    let code = run(c.args, a.path());
    if code != c.code {
        return Err(format!("{}: exit {code}, expected {}", c.name, c.code));
    }
    let first = read_dir(a.path());
    if first.is_empty() {
        return Err(format!("{}: no outputs", c.name));
    }
    if !c.once {
        let b = tmp()?;
        run(c.args, b.path());
        if first != read_dir(b.path()) {
            return Err(format!("{}: reruns differ", c.name));
        }
    }
    let dir = root().join("tests/golden").join(c.name);
    if std::env::var_os("UPDATE_GOLDENS").is_some() {
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        for (f, body) in &first {
            std::fs::write(dir.join(f), body).map_err(|e| e.to_string())?;
        }
    }
    let frozen = read_dir(&dir);
    if frozen.keys().ne(first.keys()) {
        return Err(format!("{}: files {:?}, golden {:?}", c.name, first.keys().collect::<Vec<_>>(), frozen.keys().collect::<Vec<_>>()));
    }
    for (f, body) in &first {
        if frozen[f] != *body {
            return Err(format!("{}/{f} differs from golden", c.name));
        }
    }
    Ok(first)
}
