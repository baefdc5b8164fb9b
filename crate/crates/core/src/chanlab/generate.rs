use std::f64::consts::PI;

use num_complex::{Complex32, Complex64};
use rand::Rng;
use rand_distr::{Distribution, Exp, Exp1, StandardNormal};

use super::{check_dims, CsiDataset, CsiMatrix, CsiPair, ScenarioConfig};
use crate::error::{Error, Result};
use crate::rng::indexed_rng;

pub const GENERATOR_VERSION: &str = "geometric-multipath-1";

/// Half-width of the sector the cluster centre is drawn from.
const SECTOR_HALF_WIDTH: f64 = PI / 3.0;

struct Path {
    amplitude: f64,
    delay: f64,
    sin_angle: f64,
    phase_v: f64,
    phase_h: f64,
}

fn draw_paths<R: Rng>(scenario: &ScenarioConfig, rng: &mut R) -> Vec<Path> {
    let delay_dist = Exp::new(1.0 / scenario.delay_spread).expect("delay spread validated positive");
    let mut delays: Vec<f64> = (0..scenario.n_paths).map(|_| delay_dist.sample(rng)).collect();
    let first = delays.iter().cloned().fold(f64::INFINITY, f64::min);
    for d in &mut delays {
        *d -= first;
    }
    delays.sort_by(|a, b| a.total_cmp(b));

    let profile: Vec<f64> = delays.iter().map(|d| (-d / scenario.delay_spread).exp()).collect();
    let total: f64 = profile.iter().sum();
    let centre = rng.random_range(-SECTOR_HALF_WIDTH..SECTOR_HALF_WIDTH);
    let kappa = scenario.kappa;

    delays
        .into_iter()
        .zip(profile)
        .map(|(delay, power)| {
            let fading: f64 = Exp1.sample(rng);
            let offset: f64 = StandardNormal.sample(rng);
            let phase_v = rng.random_range(0.0..2.0 * PI);
            let independent = rng.random_range(0.0..2.0 * PI);
            let phase_h = (kappa * phase_v + (1.0 - kappa) * independent).rem_euclid(2.0 * PI);
            Path {
                amplitude: (power / total * fading).sqrt(),
                delay,
                sin_angle: (centre + scenario.angle_spread * offset).sin(),
                phase_v,
                phase_h,
            }
        })
        .collect()
}

/// Draws one sample from the scenario using `rng`.
pub fn generate_pair<R: Rng>(scenario: &ScenarioConfig, n_s: usize, n_t: usize, rng: &mut R) -> Result<CsiPair> {
    check_dims(n_s, n_t)?;
    scenario.validate()?;
    let width = n_t / 2;
    let paths = draw_paths(scenario, rng);

    let mut h_v = vec![Complex64::new(0.0, 0.0); n_s * width];
    let mut h_h = h_v.clone();
    for p in &paths {
        let gain_v = Complex64::from_polar(p.amplitude, p.phase_v);
        let gain_h = Complex64::from_polar(p.amplitude, p.phase_h);
        for k in 0..n_s {
            let freq = Complex64::from_polar(1.0, -2.0 * PI * k as f64 * p.delay / n_s as f64);
            for n in 0..width {
                let steer = Complex64::from_polar(1.0, -PI * n as f64 * p.sin_angle);
                let base = freq * steer;
                h_v[k * width + n] += gain_v * base;
                h_h[k * width + n] += gain_h * base;
            }
        }
    }
    let narrow = |v: Vec<Complex64>| -> Vec<Complex32> { v.into_iter().map(|z| Complex32::new(z.re as f32, z.im as f32)).collect() };
    CsiPair::new(
        CsiMatrix::from_vec(n_s, width, narrow(h_v))?,
        CsiMatrix::from_vec(n_s, width, narrow(h_h))?,
    )
}

/// Generates `count` samples. Sample `i` uses its own stream derived from
/// `(seed, i)`, so the dataset is independent of generation order.
pub fn generate_dataset(scenario: &ScenarioConfig, count: usize, n_s: usize, n_t: usize, seed: u64) -> Result<CsiDataset> {
    if count == 0 {
        return Err(Error::Dimension("sample count must be at least 1".into()));
    }
    let mut ds = CsiDataset::new(n_s, n_t, scenario.clone())?;
    scenario.validate()?;
    ds.seed = Some(seed);
    ds.samples.reserve(count);
    for i in 0..count {
        let mut rng = indexed_rng(seed, i as u64);
        ds.samples.push(generate_pair(scenario, n_s, n_t, &mut rng)?);
    }
    Ok(ds)
}
