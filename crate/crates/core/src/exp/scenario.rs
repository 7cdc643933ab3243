//! Seeded initial-data generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::dist;

const MAX_TRIES: usize = 100_000;

/// Positions uniform in `[-box, box]^d` (optionally at least `min_sep` apart)
/// and momenta uniform in `[-p_scale, p_scale]^d`.
pub fn uniform_box(
    n: usize,
    d: usize,
    box_size: f64,
    p_scale: f64,
    min_sep: Option<f64>,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(box_size > 0.0) || !(p_scale >= 0.0) {
        return Err(Error::Config("box must be positive and p_scale nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<f64> = Vec::with_capacity(n * d);
    for i in 0..n {
        let mut tries = 0;
        loop {
            let cand: Vec<f64> = (0..d).map(|_| rng.gen_range(-box_size..=box_size)).collect();
            let ok = match min_sep {
                Some(sep) => (0..i).all(|j| dist(&q[j * d..(j + 1) * d], &cand) >= sep),
                None => true,
            };
            if ok {
                q.extend(cand);
                break;
            }
            tries += 1;
            if tries > MAX_TRIES {
                return Err(Error::Config("could not place agents with the requested min_separation".into()));
            }
        }
    }
    let p = (0..n * d).map(|_| if p_scale > 0.0 { rng.gen_range(-p_scale..=p_scale) } else { 0.0 }).collect();
    Ok((q, p))
}

/// Two groups: the first `⌈N/2⌉` agents scattered within `spread` of the
/// origin with mean momentum `−momentum·e₁`, the rest around
/// `separation·e₁` with `+momentum·e₁`; momenta get uniform noise of size `noise`.
pub fn two_cluster(
    n: usize,
    d: usize,
    separation: f64,
    spread: f64,
    momentum: f64,
    noise: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if n < 2 {
        return Err(Error::Config("two_cluster needs at least two agents".into()));
    }
    if !(spread >= 0.0 && noise >= 0.0 && separation > 2.0 * spread) {
        return Err(Error::Config("two_cluster needs separation > 2·spread and nonnegative spread/noise".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = n.div_ceil(2);
    let mut q = Vec::with_capacity(n * d);
    let mut p = Vec::with_capacity(n * d);
    let jitter = |rng: &mut ChaCha8Rng, s: f64| if s > 0.0 { rng.gen_range(-s..=s) } else { 0.0 };
    for i in 0..n {
        let (center, mean) = if i < first { (0.0, -momentum) } else { (separation, momentum) };
        for a in 0..d {
            let base_q = if a == 0 { center } else { 0.0 };
            let base_p = if a == 0 { mean } else { 0.0 };
            q.push(base_q + jitter(&mut rng, spread));
            p.push(base_p + jitter(&mut rng, noise));
        }
    }
    Ok((q, p))
}
