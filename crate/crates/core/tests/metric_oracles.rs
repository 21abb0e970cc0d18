//! Quality metrics against fixed values and naive reimplementations.

mod support;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ssr3d_core::{psnr, sam, ssim};
use support::{naive_psnr, naive_sam_degrees, naive_ssim, random_cube, tensor};

#[test]
fn psnr_uniform_tenth_is_twenty_db() {
    let hr = tensor(4, 9, 7, |b, r, c| 0.05 * b as f64 + 0.01 * (r + c) as f64);
    let sr = tensor(4, 9, 7, |b, r, c| 0.05 * b as f64 + 0.01 * (r + c) as f64 + 0.1);
    let v = psnr(&sr, &hr, 1.0).unwrap();
    assert!((v - 20.0).abs() <= 1e-9, "{v}");
}

#[test]
fn sam_forty_five_degrees() {
    let a = tensor(2, 1, 1, |b, _, _| if b == 0 { 1.0 } else { 0.0 });
    let b = tensor(2, 1, 1, |_, _, _| 1.0);
    let v = sam(&a, &b).unwrap().degrees;
    assert!((v - 45.0).abs() <= 1e-9, "{v}");
}

#[test]
fn ssim_identical_is_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (h, w) in [(8, 8), (16, 12), (32, 32)] {
        let c = random_cube(&mut rng, 3, h, w);
        let v = ssim(&c, &c, 1.0).unwrap();
        assert!((v - 1.0).abs() <= 1e-12, "{h}x{w}: {v}");
    }
}

#[test]
fn random_cubes_match_naive_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for (h, w) in [(8, 8), (8, 8), (8, 8), (13, 15)] {
        let a = random_cube(&mut rng, 4, h, w);
        let b = random_cube(&mut rng, 4, h, w);
        let dp = (psnr(&a, &b, 1.0).unwrap() - naive_psnr(&a, &b, 1.0)).abs();
        let ds = (ssim(&a, &b, 1.0).unwrap() - naive_ssim(&a, &b, 1.0)).abs();
        let da = (sam(&a, &b).unwrap().degrees - naive_sam_degrees(&a, &b)).abs();
        assert!(dp <= 1e-8 && ds <= 1e-8 && da <= 1e-8, "{h}x{w}: {dp} {ds} {da}");
    }
}
