#![allow(dead_code)]

use std::path::{Path, PathBuf};

use radvid_cli::cli;
use radvid_cli::demo::{write_demo, DemoFiles, Scenario};

pub struct Run {
    pub code: i32,
    pub stdout: String,
}

/// Run the CLI in-process.
pub fn run(args: &[&str]) -> Run {
    let mut argv = vec!["radvid"];
    argv.extend_from_slice(args);
    let mut out = Vec::new();
    let code = cli::run(argv, &mut out);
    Run {
        code,
        stdout: String::from_utf8(out).unwrap(),
    }
}

pub fn demo(dir: &Path, scenario: Scenario) -> DemoFiles {
    write_demo(dir, scenario).unwrap()
}

/// Demo with a small frame size, for tests that do not look at pixels.
pub fn small_demo(dir: &Path, scenario: Scenario) -> DemoFiles {
    let f = write_demo(dir, scenario).unwrap();
    append(&f.config, "\n[storyboard]\nresolution = [320, 180]\n");
    f
}

pub fn append(path: &Path, text: &str) {
    let mut s = std::fs::read_to_string(path).unwrap();
    s.push_str(text);
    std::fs::write(path, s).unwrap();
}

pub fn cfg(f: &DemoFiles) -> &str {
    f.config.to_str().unwrap()
}

pub fn out(f: &DemoFiles) -> PathBuf {
    f.dir.join("out")
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}
