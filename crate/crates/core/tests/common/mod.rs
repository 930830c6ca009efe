//! Brute-force oracles and random inputs shared by the integration tests.
#![allow(dead_code)]

use anatomy_guide::{Coord, Dims, Mask, ScalarGrid, Spacing};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_dims(rng: &mut impl Rng, max: usize) -> Dims {
    Dims::new(
        rng.random_range(1..=max),
        rng.random_range(1..=max),
        rng.random_range(1..=max),
    )
    .unwrap()
}

pub fn random_mask(rng: &mut impl Rng, dims: Dims, spacing: Spacing) -> Mask {
    let p = rng.random_range(0.05..0.6);
    let data = (0..dims.len()).map(|_| rng.random_bool(p)).collect();
    Mask::new(dims, spacing, data).unwrap()
}

pub fn random_probs(rng: &mut impl Rng, dims: Dims) -> ScalarGrid {
    let data = (0..dims.len()).map(|_| rng.random_range(0.0..1.0)).collect();
    ScalarGrid::new(dims, Spacing::isotropic(), data).unwrap()
}

pub fn phys_dist(a: Coord, b: Coord, s: Spacing) -> f64 {
    let dz = (a.z as f64 - b.z as f64) * s.sz();
    let dy = (a.y as f64 - b.y as f64) * s.sy();
    let dx = (a.x as f64 - b.x as f64) * s.sx();
    (dz * dz + dy * dy + dx * dx).sqrt()
}

pub fn true_coords(mask: &Mask) -> Vec<Coord> {
    let d = mask.dims();
    (0..d.len()).filter(|&i| mask.data()[i]).map(|i| d.coord(i)).collect()
}

/// O(n^2) distance transform.
pub fn brute_edt(mask: &Mask, s: Spacing) -> Vec<f64> {
    let d = mask.dims();
    let sites = true_coords(mask);
    (0..d.len())
        .map(|i| {
            let c = d.coord(i);
            sites.iter().map(|&q| phys_dist(c, q, s)).fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Foreground voxels with a face neighbour outside the mask or the grid.
pub fn brute_surface(mask: &Mask) -> Vec<Coord> {
    let d = mask.dims();
    true_coords(mask)
        .into_iter()
        .filter(|c| {
            [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]]
                .iter()
                .any(
                    |o| match d.index_signed(c.z as i64 + o[0], c.y as i64 + o[1], c.x as i64 + o[2]) {
                        Some(j) => !mask.data()[j],
                        None => true,
                    },
                )
        })
        .collect()
}

fn directed(from: &[Coord], to: &[Coord], s: Spacing) -> Vec<f64> {
    from.iter()
        .map(|&a| to.iter().map(|&b| phys_dist(a, b, s)).fold(f64::INFINITY, f64::min))
        .collect()
}

fn p95(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let rank = (0.95 * v.len() as f64).ceil() as usize;
    v[rank.max(1) - 1]
}

/// (NSD, HD95) from all pairs of surface voxels; both masks non-empty.
pub fn all_pairs_nsd_hd95(gt: &Mask, pred: &Mask, tol: f64) -> (f64, f64) {
    let s = gt.spacing();
    let (sg, sp) = (brute_surface(gt), brute_surface(pred));
    let (a, b) = (directed(&sp, &sg, s), directed(&sg, &sp, s));
    let within = a.iter().chain(&b).filter(|&&x| x <= tol).count();
    let nsd = within as f64 / (a.len() + b.len()) as f64;
    (nsd, p95(a).max(p95(b)))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}
