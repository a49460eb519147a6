#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const HEADER: &str = "subject#,age,sex,test_time,motor_UPDRS,total_UPDRS,Jitter(%),Jitter(Abs),Jitter:RAP,\
Jitter:PPQ5,Jitter:DDP,Shimmer,Shimmer(dB),Shimmer:APQ3,Shimmer:APQ5,Shimmer:APQ11,Shimmer:DDA,NHR,HNR,RPDE,DFA,PPE";

/// A telemonitoring-shaped CSV: per-subject linear score trends sampled
/// several times a day, with every fourth recording day on a whole score.
pub fn synthetic_csv(subjects: u32, per_subject: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = format!("{HEADER}\n");
    for s in 1..=subjects {
        let age = rng.gen_range(40..80);
        let base = f64::from(rng.gen_range(8..30));
        let slope = rng.gen_range(-0.02..0.06);
        let j0 = rng.gen_range(0.002..0.01);
        let s0 = rng.gen_range(0.01..0.05);
        for k in 0..per_subject {
            let day = (k / 4) as f64 * 7.0;
            let t = day + rng.gen_range(0.0..0.9);
            let motor = if (k / 4) % 4 == 0 { base } else { base + slope * t + 0.3 * (t * 0.1).sin() };
            let jitter = j0 * (1.0 + 0.01 * motor) * rng.gen_range(0.8..1.2);
            let shimmer = s0 * (1.0 + 0.01 * motor) * rng.gen_range(0.8..1.2);
            let cells = [
                f64::from(s),
                f64::from(age),
                f64::from(s % 2),
                t,
                motor,
                motor * 1.3,
                jitter,
                jitter * 5e-5,
                jitter * 0.5,
                jitter * 0.55,
                jitter * 1.5,
                shimmer,
                shimmer * 9.0,
                shimmer * 0.5,
                shimmer * 0.6,
                shimmer * 0.8,
                shimmer * 1.5,
                rng.gen_range(0.0..0.1),
                rng.gen_range(15.0..30.0) - 0.05 * motor,
                rng.gen_range(0.3..0.7),
                rng.gen_range(0.5..0.8),
                rng.gen_range(0.05..0.4) + 0.002 * motor,
            ];
            let line: Vec<String> = cells.iter().map(f64::to_string).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
    }
    out
}

pub fn write_synthetic(dir: &Path, subjects: u32, per_subject: usize, seed: u64) -> PathBuf {
    let path = dir.join("synthetic.csv");
    std::fs::write(&path, synthetic_csv(subjects, per_subject, seed)).unwrap();
    path
}

pub fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_updrs-bench")).args(args).output().unwrap()
}
