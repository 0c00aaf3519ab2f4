//! Synthetic records in the raw NSL-KDD layout (41 features, label,
//! difficulty), for smoke tests and demos when the benchmark files are not at
//! hand. Classes are separable with noise; nothing about the real traffic
//! distribution is implied.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::sub_seed;

const PROTOCOLS: [&str; 3] = ["tcp", "udp", "icmp"];
const SERVICES: [&str; 8] = [
    "http", "private", "ftp_data", "smtp", "ecr_i", "telnet", "domain_u", "ftp",
];
const FLAGS: [&str; 5] = ["SF", "S0", "REJ", "RSTR", "SH"];

/// Raw label per class index (DoS, Probe, R2L, U2R, normal), two each.
const LABELS: [[&str; 2]; 5] = [
    ["neptune", "smurf"],
    ["satan", "ipsweep"],
    ["guess_passwd", "warezclient"],
    ["buffer_overflow", "rootkit"],
    ["normal", "normal"],
];

/// Class mix: DoS, Probe, R2L, U2R, normal.
const CLASS_WEIGHTS: [f64; 5] = [0.30, 0.12, 0.06, 0.02, 0.50];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    /// Share of records whose service is replaced by one never used in
    /// training data (`"sctp_svc"`).
    pub unseen_service_rate: f64,
    /// Standard deviation-like spread of the numeric noise, in [0, 1].
    pub noise: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            unseen_service_rate: 0.0,
            noise: 0.25,
        }
    }
}

fn pick_class(rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (c, w) in CLASS_WEIGHTS.iter().enumerate() {
        acc += w;
        if u < acc {
            return c;
        }
    }
    4
}

/// Per-class centre of numeric column `j`, fixed for all seeds.
fn centre(class: usize, j: usize) -> f64 {
    let h = sub_seed(class as u64 * 1000 + j as u64, 0xC0FFEE);
    (h % 1000) as f64 / 1000.0
}

/// One raw CSV line (no trailing newline).
fn record(rng: &mut ChaCha8Rng, class: usize, opts: &SynthOptions) -> String {
    let mut f: Vec<String> = Vec::with_capacity(43);
    let noisy = |rng: &mut ChaCha8Rng, c: f64| {
        (c + opts.noise * (rng.random::<f64>() - 0.5)).clamp(0.0, 1.0)
    };

    f.push(format!("{}", (noisy(rng, centre(class, 0)) * 20.0).round()));
    let proto = if rng.random::<f64>() < 0.8 {
        class % 3
    } else {
        rng.random_range(0..3)
    };
    f.push(PROTOCOLS[proto].to_string());
    let service = if rng.random::<f64>() < opts.unseen_service_rate {
        "sctp_svc".to_string()
    } else if rng.random::<f64>() < 0.7 {
        SERVICES[(class * 3) % SERVICES.len()].to_string()
    } else {
        SERVICES[rng.random_range(0..SERVICES.len())].to_string()
    };
    f.push(service);
    let flag = if rng.random::<f64>() < 0.75 {
        class % FLAGS.len()
    } else {
        rng.random_range(0..FLAGS.len())
    };
    f.push(FLAGS[flag].to_string());
    f.push(format!(
        "{}",
        (noisy(rng, centre(class, 4)) * 5000.0).round()
    ));
    f.push(format!(
        "{}",
        (noisy(rng, centre(class, 5)) * 8000.0).round()
    ));
    for j in 6..41 {
        let v = noisy(rng, centre(class, j));
        // mix of count-like and rate-like columns
        if j % 4 == 0 {
            f.push(format!("{}", (v * 255.0).round()));
        } else {
            f.push(format!("{:.2}", v));
        }
    }
    f.push(LABELS[class][rng.random_range(0..2)].to_string());
    f.push(format!("{}", rng.random_range(0..22)));
    f.join(",")
}

/// `n` newline-terminated records, deterministic per seed.
pub fn nsl_kdd_like_csv(n: usize, seed: u64, opts: &SynthOptions) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for _ in 0..n {
        let class = pick_class(&mut rng);
        out.push_str(&record(&mut rng, class, opts));
        out.push('\n');
    }
    out
}
