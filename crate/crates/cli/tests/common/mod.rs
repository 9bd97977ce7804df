//! Fixture directories shared by the CLI test targets.

#![allow(dead_code)]

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use proxforge::depth::write_pfm;
use proxforge::synthetic::synthetic_scene;
use proxforge::SceneRecord;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_proxforge"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("PROXFORGE_SEED").output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

/// `n` synthetic scenes written as `scenes.json` plus one PFM disparity file
/// per image under `depth/`.
pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub records: Vec<SceneRecord>,
}

impl Fixture {
    pub fn synthetic(seed: u64, n: usize, width: u32, height: u32) -> Fixture {
        let dir = tempfile::tempdir().expect("temp dir");
        let depth = dir.path().join("depth");
        fs::create_dir_all(&depth).unwrap();
        let mut records = Vec::with_capacity(n);
        for i in 0..n {
            let scene = synthetic_scene(seed, i, width, height);
            let d = &scene.disparity;
            fs::write(
                depth.join(format!("{}.pfm", scene.record.image_id)),
                write_pfm(d.width(), d.height(), d.values()),
            )
            .unwrap();
            records.push(scene.record);
        }
        fs::write(dir.path().join("scenes.json"), serde_json::to_vec(&records).unwrap()).unwrap();
        Fixture { dir, records }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn arg(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }
}
