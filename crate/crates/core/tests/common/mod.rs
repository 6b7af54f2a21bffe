#![allow(dead_code)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wpmec::model::{ChannelRealization, SystemParams, TaskArrivals};
use wpmec::Instance;

/// Single-antenna instance with `|h|² = h2` and uplink gain `g` everywhere.
pub fn scalar_instance(users: usize, arrivals: Vec<Vec<f64>>, h2: f64, g: f64) -> Instance {
    let slots = arrivals[0].len();
    let params = SystemParams::uniform(1, users, slots, 0.1, 2e6, 1e-9, 1e-29, 1e3, 0.3, 1e-28, 1e3);
    Instance {
        params,
        channels: ChannelRealization {
            h: vec![vec![vec![Complex64::new(h2.sqrt(), 0.0)]; slots]; users],
            g: vec![vec![g; slots]; users],
        },
        tasks: TaskArrivals { arrivals },
    }
}

/// Uniform-entry channels around the default path loss at 4 m.
pub fn random_instance(seed: u64, users: usize, slots: usize, antennas: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = SystemParams::uniform(antennas, users, slots, 0.1, 2e6, 1e-9, 1e-29, 1e3, 0.3, 1e-28, 1e3);
    let scale = 10f64.powf(-3.2) / 64.0;
    let h = (0..users)
        .map(|_| {
            (0..slots)
                .map(|_| {
                    (0..antennas)
                        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale.sqrt())
                        .collect()
                })
                .collect()
        })
        .collect();
    let g = (0..users)
        .map(|_| (0..slots).map(|_| scale * rng.gen_range(0.2..2.0)).collect())
        .collect();
    let arrivals = (0..users)
        .map(|_| (0..slots).map(|_| rng.gen_range(1e4..1e5)).collect())
        .collect();
    Instance { params, channels: ChannelRealization { h, g }, tasks: TaskArrivals { arrivals } }
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
