#![allow(dead_code)]

pub mod props;

use hbn_cce::model::{cluster_dimension, BathSpin, SpinSpecies};
use hbn_cce::tensor::Tensor3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest Hilbert space a random test bath may reach.
pub const RANDOM_BATH_DIM_CAP: usize = 384;

fn random_species(rng: &mut ChaCha8Rng) -> SpinSpecies {
    match rng.gen_range(0..4) {
        0 => SpinSpecies::b11(),
        1 => SpinSpecies::b10(),
        2 => SpinSpecies::n15(),
        _ => SpinSpecies::n14(rng.gen_range(-3.0..3.0)),
    }
}

/// `n` spins of mixed species 2–6 Å from the defect with general (not
/// symmetric) hyperfine tensors of a few MHz. Species are swapped for ¹⁵N
/// until the bath fits [`RANDOM_BATH_DIM_CAP`].
pub fn random_bath(n: usize, seed: u64) -> Vec<BathSpin> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bath: Vec<BathSpin> = (0..n)
        .map(|_| {
            let dir: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let len = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt().max(1e-3);
            let r = rng.gen_range(2.0..6.0);
            let pos = [dir[0] / len * r, dir[1] / len * r, dir[2] / len * r];
            let mut a = [0.0; 9];
            for v in &mut a {
                *v = rng.gen_range(-4.0..4.0);
            }
            BathSpin::new(pos, random_species(&mut rng), Tensor3::from_row_major(a))
        })
        .collect();
    let mut k = 0;
    while cluster_dimension(&bath) > RANDOM_BATH_DIM_CAP {
        let h = bath[k].hyperfine;
        bath[k] = BathSpin::new(bath[k].position, SpinSpecies::n15(), h);
        k += 1;
    }
    bath
}

pub fn max_abs_deviation(a: &[hbn_cce::c64], b: &[hbn_cce::c64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn max_magnitude_deviation(a: &[hbn_cce::c64], b: &[hbn_cce::c64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.norm() - y.norm()).abs()).fold(0.0, f64::max)
}
