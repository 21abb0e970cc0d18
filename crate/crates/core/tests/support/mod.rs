//! Independent reference definitions shared by the oracle tests.
#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssr3d_core::metrics::{ssim_window_side, SSIM_SIGMA};
use ssr3d_core::{conv3d, conv3d_transposed, Conv3dParams, ConvGeometry, HsiCube, Shape5, Tensor5};

pub fn random(rng: &mut ChaCha8Rng, shape: Shape5) -> Tensor5 {
    let data = (0..shape.numel()).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor5::from_vec(shape, data).unwrap()
}

/// out[n,o,z,y,x] = b[o] + Σ w[o,i,a,b,c] · in[n,i,z·s−p+a, y·s−p+b, x·s−p+c]
fn conv_oracle(input: &Tensor5, w: &Tensor5, bias: &[f64], g: &ConvGeometry) -> Tensor5 {
    let (is, ws) = (input.shape(), w.shape());
    let out_dim = |i: usize, k: usize, ax: usize| (i + 2 * g.padding[ax] - k) / g.stride[ax] + 1;
    let os = Shape5::new(is.n, ws.n, out_dim(is.l, ws.l, 0), out_dim(is.h, ws.h, 1), out_dim(is.w, ws.w, 2));
    let mut out = Tensor5::zeros(os);
    for n in 0..os.n {
        for o in 0..os.c {
            for z in 0..os.l {
                for y in 0..os.h {
                    for x in 0..os.w {
                        let mut acc = bias[o];
                        for i in 0..is.c {
                            for a in 0..ws.l {
                                for b in 0..ws.h {
                                    for c in 0..ws.w {
                                        let zz = (z * g.stride[0] + a) as isize - g.padding[0] as isize;
                                        let yy = (y * g.stride[1] + b) as isize - g.padding[1] as isize;
                                        let xx = (x * g.stride[2] + c) as isize - g.padding[2] as isize;
                                        if zz < 0 || yy < 0 || xx < 0 || zz >= is.l as isize || yy >= is.h as isize || xx >= is.w as isize {
                                            continue;
                                        }
                                        acc += w.at(o, i, a, b, c) * input.at(n, i, zz as usize, yy as usize, xx as usize);
                                    }
                                }
                            }
                        }
                        let idx = os.index(n, o, z, y, x);
                        out.data_mut()[idx] = acc;
                    }
                }
            }
        }
    }
    out
}

/// Scatter definition: every input element spreads `in · w[i,o,t]` to
/// output position `x·s − p + t`; bias added everywhere.
fn transposed_oracle(input: &Tensor5, w: &Tensor5, bias: &[f64], g: &ConvGeometry) -> Tensor5 {
    let (is, ws) = (input.shape(), w.shape());
    let out_dim = |i: usize, k: usize, ax: usize| (i - 1) * g.stride[ax] + k + g.output_padding[ax] - 2 * g.padding[ax];
    let os = Shape5::new(is.n, ws.c, out_dim(is.l, ws.l, 0), out_dim(is.h, ws.h, 1), out_dim(is.w, ws.w, 2));
    let mut out = Tensor5::zeros(os);
    for n in 0..os.n {
        for o in 0..os.c {
            for z in 0..os.l {
                for y in 0..os.h {
                    for x in 0..os.w {
                        let idx = os.index(n, o, z, y, x);
                        out.data_mut()[idx] = bias[o];
                    }
                }
            }
        }
        for i in 0..is.c {
            for z in 0..is.l {
                for y in 0..is.h {
                    for x in 0..is.w {
                        let v = input.at(n, i, z, y, x);
                        for o in 0..os.c {
                            for a in 0..ws.l {
                                for b in 0..ws.h {
                                    for c in 0..ws.w {
                                        let zz = (z * g.stride[0] + a) as isize - g.padding[0] as isize;
                                        let yy = (y * g.stride[1] + b) as isize - g.padding[1] as isize;
                                        let xx = (x * g.stride[2] + c) as isize - g.padding[2] as isize;
                                        if zz < 0 || yy < 0 || xx < 0 || zz >= os.l as isize || yy >= os.h as isize || xx >= os.w as isize {
                                            continue;
                                        }
                                        let idx = os.index(n, o, zz as usize, yy as usize, xx as usize);
                                        out.data_mut()[idx] += v * w.at(i, o, a, b, c);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn max_diff(a: &Tensor5, b: &Tensor5) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

struct Case {
    input: Shape5,
    c_out: usize,
    kernel: [usize; 3],
    forward: ConvGeometry,
}

fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let kernel = [rng.random_range(1..=3), rng.random_range(1..=4), rng.random_range(1..=3)];
    let stride = [rng.random_range(1..=2), rng.random_range(1..=3), rng.random_range(1..=2)];
    let padding = [rng.random_range(0..=kernel[0] / 2), rng.random_range(0..=kernel[1] / 2), rng.random_range(0..=kernel[2] / 2)];
    let dims: Vec<usize> = (0..3).map(|ax| rng.random_range(kernel[ax]..kernel[ax] + 4)).collect();
    Case {
        input: Shape5::new(rng.random_range(1..=2), rng.random_range(1..=3), dims[0], dims[1], dims[2]),
        c_out: rng.random_range(1..=3),
        kernel,
        forward: ConvGeometry {
            stride,
            padding,
            output_padding: [0; 3],
            transposed: false,
        },
    }
}

/// Largest deviation of `conv3d` from the nested-loop definition.
pub fn forward_worst(seed: u64, cases: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let case = random_case(&mut rng);
        let [kl, kh, kw] = case.kernel;
        let w = random(&mut rng, Shape5::new(case.c_out, case.input.c, kl, kh, kw));
        let bias: Vec<f64> = (0..case.c_out).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = random(&mut rng, case.input);
        let params = Conv3dParams::new(w.clone(), bias.clone(), case.forward).unwrap();
        let fast = conv3d(&x, &params).unwrap();
        worst = worst.max(max_diff(&fast, &conv_oracle(&x, &w, &bias, &case.forward)));
    }
    worst
}

/// Largest deviation of `conv3d_transposed` from the scatter definition,
/// and how many random geometries were valid.
pub fn transposed_worst(seed: u64, cases: usize) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut tested = 0;
    for _ in 0..cases {
        let case = random_case(&mut rng);
        let [kl, kh, kw] = case.kernel;
        let g = case.forward;
        let op = [
            rng.random_range(0..g.stride[0]),
            rng.random_range(0..g.stride[1]),
            rng.random_range(0..g.stride[2]),
        ];
        let geom = ConvGeometry::transposed(g.stride, g.padding, op);
        let c_in = case.input.c;
        let w = random(&mut rng, Shape5::new(c_in, case.c_out, kl, kh, kw));
        let bias: Vec<f64> = (0..case.c_out).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = random(&mut rng, case.input);
        let Ok(params) = Conv3dParams::new(w.clone(), bias.clone(), geom) else { continue };
        let Ok(fast) = conv3d_transposed(&x, &params) else { continue };
        worst = worst.max(max_diff(&fast, &transposed_oracle(&x, &w, &bias, &geom)));
        tested += 1;
    }
    (worst, tested)
}

/// Largest relative gap in `<A x, y> = <x, Aᵀ y>`.
pub fn adjoint_worst(seed: u64, cases: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let case = random_case(&mut rng);
        let [kl, kh, kw] = case.kernel;
        let g = case.forward;
        let w = random(&mut rng, Shape5::new(case.c_out, case.input.c, kl, kh, kw));
        let x = random(&mut rng, case.input);
        let fwd = Conv3dParams::new(w.clone(), vec![0.0; case.c_out], g).unwrap();
        let ax = conv3d(&x, &fwd).unwrap();
        let y = random(&mut rng, ax.shape());
        // output padding recovers the exact input extent
        let ys = ax.shape();
        let dims = [(case.input.l, ys.l), (case.input.h, ys.h), (case.input.w, ys.w)];
        let mut op = [0; 3];
        for a in 0..3 {
            op[a] = dims[a].0 + 2 * g.padding[a] - ((dims[a].1 - 1) * g.stride[a] + case.kernel[a]);
        }
        // the transposed layout (c_in, c_out, k…) of the adjoint is w itself
        let adj = Conv3dParams::new(w, vec![0.0; case.input.c], ConvGeometry::transposed(g.stride, g.padding, op)).unwrap();
        let aty = conv3d_transposed(&y, &adj).unwrap();
        assert_eq!(aty.shape(), x.shape());
        let lhs = ax.dot(&y).unwrap();
        let rhs = x.dot(&aty).unwrap();
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1.0));
    }
    worst
}

/// Max gap between a spectral-then-spatial cascade and the single k³
/// convolution with the outer-product kernel.
pub fn cascade_vs_full(seed: u64, c_in: usize, c_mid: usize, c_out: usize, k: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spectral = random(&mut rng, Shape5::new(c_mid, c_in, k, 1, 1));
    let spatial = random(&mut rng, Shape5::new(c_out, c_mid, 1, k, k));
    let x = random(&mut rng, Shape5::new(2, c_in, 6, 5, 7));

    let p1 = Conv3dParams::new(spectral.clone(), vec![0.0; c_mid], ConvGeometry::preserving([k, 1, 1])).unwrap();
    let p2 = Conv3dParams::new(spatial.clone(), vec![0.0; c_out], ConvGeometry::preserving([1, k, k])).unwrap();
    let cascade = conv3d(&conv3d(&x, &p1).unwrap(), &p2).unwrap();

    // K[o,i,z,y,x] = Σ_m spatial[o,m,y,x] · spectral[m,i,z]
    let ks = Shape5::new(c_out, c_in, k, k, k);
    let mut kernel = Tensor5::zeros(ks);
    for o in 0..c_out {
        for i in 0..c_in {
            for z in 0..k {
                for y in 0..k {
                    for xx in 0..k {
                        let v: f64 = (0..c_mid).map(|m| spatial.at(o, m, 0, y, xx) * spectral.at(m, i, z, 0, 0)).sum();
                        kernel.data_mut()[ks.index(o, i, z, y, xx)] = v;
                    }
                }
            }
        }
    }
    let full = conv3d(&x, &Conv3dParams::new(kernel, vec![0.0; c_out], ConvGeometry::preserving([k, k, k])).unwrap()).unwrap();
    cascade.data().iter().zip(full.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

pub fn tensor(l: usize, h: usize, w: usize, f: impl Fn(usize, usize, usize) -> f64) -> Tensor5 {
    let mut data = Vec::with_capacity(l * h * w);
    for b in 0..l {
        for r in 0..h {
            for c in 0..w {
                data.push(f(b, r, c));
            }
        }
    }
    Tensor5::from_vec(Shape5::new(1, 1, l, h, w), data).unwrap()
}

pub fn random_cube(rng: &mut ChaCha8Rng, l: usize, h: usize, w: usize) -> HsiCube {
    HsiCube::from_fn(l, h, w, |_, _, _| rng.random_range(0.0..1.0)).unwrap()
}

pub fn naive_psnr(a: &HsiCube, b: &HsiCube, peak: f64) -> f64 {
    let (l, h, w) = a.dims();
    let mut sum = 0.0;
    for band in 0..l {
        let mut se = 0.0;
        for r in 0..h {
            for c in 0..w {
                let d = f64::from(a.at(band, r, c)) - f64::from(b.at(band, r, c));
                se += d * d;
            }
        }
        sum += 10.0 * (peak * peak / (se / (h * w) as f64)).log10();
    }
    sum / l as f64
}

/// Direct 2D Gaussian window, no separability.
pub fn naive_ssim(a: &HsiCube, b: &HsiCube, peak: f64) -> f64 {
    let (l, h, w) = a.dims();
    let k = ssim_window_side(h, w);
    let half = (k / 2) as f64;
    let mut win = vec![vec![0.0; k]; k];
    let mut norm = 0.0;
    for (i, row) in win.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - half, j as f64 - half);
            *v = (-(di * di + dj * dj) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            norm += *v;
        }
    }
    let (c1, c2) = ((0.01 * peak).powi(2), (0.03 * peak).powi(2));
    let mut total = 0.0;
    for band in 0..l {
        let mut acc = 0.0;
        let mut n = 0;
        for r0 in 0..=h - k {
            for c0 in 0..=w - k {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..k {
                    for j in 0..k {
                        let g = win[i][j] / norm;
                        let x = f64::from(a.at(band, r0 + i, c0 + j));
                        let y = f64::from(b.at(band, r0 + i, c0 + j));
                        mx += g * x;
                        my += g * y;
                        sxx += g * x * x;
                        syy += g * y * y;
                        sxy += g * x * y;
                    }
                }
                let (vx, vy, cov) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
                acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                n += 1;
            }
        }
        total += acc / n as f64;
    }
    total / l as f64
}

pub fn naive_sam_degrees(a: &HsiCube, b: &HsiCube) -> f64 {
    let (l, h, w) = a.dims();
    let mut total = 0.0;
    for r in 0..h {
        for c in 0..w {
            let x: Vec<f64> = (0..l).map(|band| f64::from(a.at(band, r, c))).collect();
            let y: Vec<f64> = (0..l).map(|band| f64::from(b.at(band, r, c))).collect();
            let dot: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
            let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            total += (dot / (nx * ny)).clamp(-1.0, 1.0).acos();
        }
    }
    (total / (h * w) as f64).to_degrees()
}
