#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

const GENDERS: [&str; 3] = ["Female", "Male", "Other"];
const WORK: [&str; 5] = ["Govt_job", "Never_worked", "Private", "Self-employed", "children"];
const SMOKING: [&str; 4] = ["formerly smoked", "never smoked", "smokes", "Unknown"];

/// A stroke-shaped CSV with `n` rows, roughly `stroke_rate` positives whose
/// age and glucose run higher, and a few missing `bmi` and
/// `smoking_status` cells.
pub fn synthetic_csv(n: usize, stroke_rate: f64, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from(
        "id,gender,age,hypertension,heart_disease,ever_married,work_type,Residence_type,avg_glucose_level,bmi,smoking_status,stroke\n",
    );
    for id in 0..n {
        let stroke = rng.gen_bool(stroke_rate);
        let age: f64 = if stroke { rng.gen_range(50.0..90.0) } else { rng.gen_range(1.0..80.0) };
        let glucose: f64 = if stroke { rng.gen_range(90.0..260.0) } else { rng.gen_range(55.0..200.0) };
        let hyper = rng.gen_bool(if stroke { 0.3 } else { 0.08 }) as u8;
        let heart = rng.gen_bool(if stroke { 0.2 } else { 0.04 }) as u8;
        let bmi = if rng.gen_bool(0.03) {
            String::new()
        } else {
            format!("{:.1}", rng.gen_range(15.0..45.0))
        };
        let smoking = if rng.gen_bool(0.1) {
            ""
        } else {
            SMOKING[rng.gen_range(0..SMOKING.len())]
        };
        writeln!(
            out,
            "{id},{},{age:.0},{hyper},{heart},{},{},{},{glucose:.2},{bmi},{smoking},{}",
            GENDERS[rng.gen_range(0..if id % 50 == 7 { 3 } else { 2 })],
            if age > 25.0 { "Yes" } else { "No" },
            WORK[rng.gen_range(0..WORK.len())],
            if rng.gen_bool(0.5) { "Urban" } else { "Rural" },
            stroke as u8,
        )
        .unwrap();
    }
    out
}

pub fn write_synthetic(dir: &Path, n: usize, stroke_rate: f64, seed: u64) -> PathBuf {
    let path = dir.join("synthetic.csv");
    std::fs::write(&path, synthetic_csv(n, stroke_rate, seed)).unwrap();
    path
}
