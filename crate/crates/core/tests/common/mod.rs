#![allow(dead_code)]

use pixrec::image::QuantizedImage;
use pixrec::model::{ModelConfig, ModelKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 2x2 -> 4x4, K = 4.
pub fn tiny(kind: ModelKind, channels: usize) -> ModelConfig {
    ModelConfig {
        kind,
        channels,
        levels: 4,
        in_h: 2,
        in_w: 2,
        upsample_stages: 1,
        cond_width: 4,
        cond_blocks: 1,
        prior_width: 2 * channels,
        prior_blocks: 2,
        prior_first_kernel: 3,
        prior_kernel: 3,
        prior_head: 2 * channels,
        inject: true,
        residual_bicubic: true,
        loss_mean: true,
    }
}

pub fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize, k: usize) -> QuantizedImage {
    let data = (0..h * w * c).map(|_| rng.random_range(0..k as u16)).collect();
    QuantizedImage::new(h, w, c, k, data).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Weights with std 0.5 and nonzero biases, so gradients are well above
/// finite-difference noise and no ReLU sits exactly on its kink.
pub fn gradient_fixture(cfg: &ModelConfig, seed: u64) -> pixrec::model::ModelBundle {
    let mut b = pixrec::train::init_params_with(cfg, seed, 0.5).unwrap();
    let mut r = rng(seed ^ 0xb1a5);
    let names: Vec<String> = b.params.names().map(str::to_string).collect();
    for n in names.iter().filter(|n| n.ends_with(".b")) {
        for v in b.params.get_mut(n).unwrap().data_mut() {
            *v = r.random_range(-0.3..0.3);
        }
    }
    b
}

/// One gradient-check case per differentiable op and layer type.
pub fn gradient_cases() -> Vec<(&'static str, f64)> {
    use pixrec::nn::{Conv, ConvTranspose, GatedBlock, MaskKind, ParamStore, ResNetBlock};
    use pixrec::tensor::{grad_check, Graph, Padding, Tensor, Var};
    use pixrec::Result;

    let mut r = rng(0x9c);
    let mut t = |shape: &[usize], scale: f64| {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| r.random_range(-scale..scale)).collect()).unwrap()
    };
    // Weighted sum so that no gradient is uniform across entries.
    fn probe(g: &mut Graph, v: Var, seed: u64) -> Result<Var> {
        let n = g.value(v).len();
        let w = Tensor::new(g.shape(v).to_vec(), (0..n).map(|i| (i as f64 * 0.731 + seed as f64).sin()).collect())?;
        let w = g.constant(w);
        let m = g.mul(v, w)?;
        Ok(g.sum(m))
    }
    let check = |f: &dyn Fn(&mut Graph, &[Var]) -> Result<Var>, ps: &[Tensor]| grad_check(f, ps, 1e-5, None).unwrap();

    let mut out = Vec::new();
    let x = t(&[2, 5, 4, 3], 1.0);
    let k = t(&[3, 3, 3, 4], 0.5);
    out.push(("conv2d same", check(&|g, v| { let y = g.conv2d(v[0], v[1], 1, Padding::Same, None)?; probe(g, y, 1) }, &[x.clone(), k.clone()])));
    out.push(("conv2d stride 2", check(&|g, v| { let y = g.conv2d(v[0], v[1], 2, Padding::Same, None)?; probe(g, y, 2) }, &[x.clone(), k.clone()])));
    out.push(("conv2d valid", check(&|g, v| { let y = g.conv2d(v[0], v[1], 1, Padding::Valid, None)?; probe(g, y, 3) }, &[x.clone(), k.clone()])));
    for kind in [MaskKind::A, MaskKind::B] {
        let m = std::sync::Arc::new(pixrec::nn::build_mask(&pixrec::nn::MaskSpec::new(kind, 3, 3, 6, 3)).unwrap());
        let km = t(&[3, 3, 3, 6], 0.5);
        let name = if kind == MaskKind::A { "masked conv A" } else { "masked conv B" };
        out.push((name, check(&|g, v| { let y = g.conv2d(v[0], v[1], 1, Padding::Same, Some(m.clone()))?; probe(g, y, 4) }, &[x.clone(), km])));
    }
    let kt = t(&[3, 3, 2, 3], 0.5);
    out.push(("transposed conv", check(&|g, v| { let y = g.transposed_conv2d(v[0], v[1], 2)?; probe(g, y, 5) }, &[x.clone(), kt])));
    let a = t(&[3, 4], 1.0);
    let b = t(&[4, 5], 1.0);
    out.push(("matmul", check(&|g, v| { let y = g.matmul(v[0], v[1])?; probe(g, y, 6) }, &[a, b])));
    let z = t(&[6, 5], 2.0);
    out.push(("tanh", check(&|g, v| { let y = g.tanh(v[0]); probe(g, y, 7) }, &[z.clone()])));
    out.push(("sigmoid", check(&|g, v| { let y = g.sigmoid(v[0]); probe(g, y, 8) }, &[z.clone()])));
    let zr = Tensor::new(vec![30], z.data().iter().map(|v| if v.abs() < 0.05 { v + 0.2 } else { *v }).collect()).unwrap();
    out.push(("relu", check(&|g, v| { let y = g.relu(v[0]); probe(g, y, 9) }, &[zr])));
    out.push(("softmax", check(&|g, v| { let y = g.softmax(v[0]); probe(g, y, 10) }, &[z.clone()])));
    out.push(("logsumexp", check(&|g, v| { let y = g.log_sum_exp(v[0]); probe(g, y, 11) }, &[z.clone()])));
    out.push(("cross entropy", check(&|g, v| g.cross_entropy(v[0], &[0, 4, 2, 1, 3, 3]), &[z.clone()])));
    let z2 = t(&[6, 5], 1.0);
    out.push(("mse", check(&|g, v| g.mse(v[0], v[1]), &[z.clone(), z2.clone()])));
    out.push(("mul/add/sub", check(&|g, v| { let m = g.mul(v[0], v[1])?; let s = g.sub(m, v[1])?; let a = g.add(s, v[0])?; probe(g, a, 12) }, &[z.clone(), z2.clone()])));
    let bias = t(&[5], 1.0);
    out.push(("add bias", check(&|g, v| { let y = g.add_bias(v[0], v[1])?; probe(g, y, 13) }, &[z.clone(), bias])));
    out.push(("slice/concat", check(&|g, v| { let a = g.slice_last(v[0], 1, 3)?; let c = g.concat_last(&[a, v[1]])?; probe(g, c, 14) }, &[z.clone(), z2])));

    // Layers: parameters are the graph leaves, input fixed.
    let layer = |store: &ParamStore, fwd: &dyn Fn(&mut Graph, &pixrec::nn::Bound) -> Result<Var>, seed: u64| {
        let ps: Vec<Tensor> = store.iter().map(|(_, t)| t.clone()).collect();
        grad_check(
            |g, v| {
                let p = store.bind_vars(v)?;
                let y = fwd(g, &p)?;
                probe(g, y, seed)
            },
            &ps,
            1e-5,
            None,
        )
        .unwrap()
    };
    let mut fill = |store: &mut ParamStore| {
        let names: Vec<String> = store.names().map(str::to_string).collect();
        for n in names {
            let shape = store.get(&n).unwrap().shape().to_vec();
            store.set(&n, t(&shape, 0.6)).unwrap();
        }
    };
    let h = Tensor::new(vec![1, 4, 4, 6], (0..96).map(|i| (i as f64 * 1.37).sin()).collect()).unwrap();
    let c = Tensor::new(vec![1, 4, 4, 2], (0..32).map(|i| (i as f64 * 0.57 + 1.0).cos()).collect()).unwrap();

    let mut s = ParamStore::new();
    let conv = Conv::register(&mut s, "c", 3, 6, 6, true, Some((MaskKind::B, 3))).unwrap();
    fill(&mut s);
    out.push(("Conv layer", layer(&s, &|g, p| { let x = g.constant(h.clone()); conv.forward(g, p, x) }, 15)));

    let mut s = ParamStore::new();
    let up = ConvTranspose::register(&mut s, "u", 3, 6, 4, 2).unwrap();
    fill(&mut s);
    out.push(("ConvTranspose layer", layer(&s, &|g, p| { let x = g.constant(h.clone()); up.forward(g, p, x) }, 16)));

    let mut s = ParamStore::new();
    let gated = GatedBlock::register(&mut s, "g", 6, 3, 3, Some(2)).unwrap();
    fill(&mut s);
    out.push(("GatedBlock layer", layer(&s, &|g, p| { let x = g.constant(h.clone()); let cc = g.constant(c.clone()); gated.forward(g, p, x, Some(cc)) }, 17)));

    let mut s = ParamStore::new();
    let res = ResNetBlock::register(&mut s, "r", 6, 3).unwrap();
    fill(&mut s);
    out.push(("ResNetBlock layer", layer(&s, &|g, p| { let x = g.constant(h.clone()); res.forward(g, p, x) }, 18)));
    out
}

/// Direct-definition SSIM of one channel: 2-D Gaussian weights evaluated
/// per window, no separable filtering.
pub fn oracle_ssim_channel(a: &QuantizedImage, b: &QuantizedImage, c: usize, window: usize) -> (f64, f64) {
    let sigma = 1.5f64;
    let half = (window as f64 - 1.0) / 2.0;
    let mut w2 = vec![0.0; window * window];
    for i in 0..window {
        for j in 0..window {
            let (dy, dx) = (i as f64 - half, j as f64 - half);
            w2[i * window + j] = (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp();
        }
    }
    let total: f64 = w2.iter().sum();
    w2.iter_mut().for_each(|v| *v /= total);
    let peak = (a.levels - 1) as f64;
    let (c1, c2) = ((0.01 * peak).powi(2), (0.03 * peak).powi(2));
    let (mut s, mut cs, mut n) = (0.0, 0.0, 0.0);
    for y0 in 0..=a.height - window {
        for x0 in 0..=a.width - window {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..window {
                for j in 0..window {
                    let w = w2[i * window + j];
                    ma += w * a.at(y0 + i, x0 + j, c) as f64;
                    mb += w * b.at(y0 + i, x0 + j, c) as f64;
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..window {
                for j in 0..window {
                    let w = w2[i * window + j];
                    let da = a.at(y0 + i, x0 + j, c) as f64 - ma;
                    let db = b.at(y0 + i, x0 + j, c) as f64 - mb;
                    va += w * da * da;
                    vb += w * db * db;
                    cov += w * da * db;
                }
            }
            let con = (2.0 * cov + c2) / (va + vb + c2);
            s += (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1) * con;
            cs += con;
            n += 1.0;
        }
    }
    (s / n, cs / n)
}

pub fn oracle_ssim(a: &QuantizedImage, b: &QuantizedImage) -> f64 {
    (0..a.channels).map(|c| oracle_ssim_channel(a, b, c, 11).0).sum::<f64>() / a.channels as f64
}

/// Brute-force MS-SSIM: pooled copies are rebuilt as quantized-valued
/// images of doubles by explicit loops.
pub fn oracle_ms_ssim(a: &QuantizedImage, b: &QuantizedImage) -> f64 {
    let weights = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
    let mut scales = 0;
    while scales < 5 && a.height.min(a.width) >> scales >= 8 {
        scales += 1;
    }
    let wsum: f64 = weights[..scales].iter().sum();
    let peak = (a.levels - 1) as f64;
    let mut acc = 0.0;
    for c in 0..a.channels {
        let mut pa: Vec<Vec<f64>> = (0..a.height).map(|y| (0..a.width).map(|x| a.at(y, x, c) as f64).collect()).collect();
        let mut pb: Vec<Vec<f64>> = (0..b.height).map(|y| (0..b.width).map(|x| b.at(y, x, c) as f64).collect()).collect();
        let mut value = 1.0;
        for s in 0..scales {
            let (h, w) = (pa.len(), pa[0].len());
            let mut win = 11.min(h.min(w));
            if win % 2 == 0 {
                win -= 1;
            }
            let (ssim, cs) = plane_oracle(&pa, &pb, win, peak);
            let term = if s + 1 == scales { ssim } else { cs };
            value *= if scales == 1 { term } else { term.max(0.0).powf(weights[s] / wsum) };
            let pool = |p: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
                (0..h / 2)
                    .map(|y| (0..w / 2).map(|x| (p[2 * y][2 * x] + p[2 * y][2 * x + 1] + p[2 * y + 1][2 * x] + p[2 * y + 1][2 * x + 1]) / 4.0).collect())
                    .collect()
            };
            pa = pool(&pa);
            pb = pool(&pb);
        }
        acc += value;
    }
    acc / a.channels as f64
}

fn plane_oracle(a: &[Vec<f64>], b: &[Vec<f64>], window: usize, peak: f64) -> (f64, f64) {
    let half = (window as f64 - 1.0) / 2.0;
    let mut w2 = vec![vec![0.0; window]; window];
    let mut total = 0.0;
    for (i, row) in w2.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (i as f64 - half, j as f64 - half);
            *v = (-(dy * dy + dx * dx) / 4.5).exp();
            total += *v;
        }
    }
    let (c1, c2) = ((0.01 * peak).powi(2), (0.03 * peak).powi(2));
    let (h, w) = (a.len(), a[0].len());
    let (mut s, mut cs, mut n) = (0.0, 0.0, 0.0);
    for y0 in 0..=h - window {
        for x0 in 0..=w - window {
            let mut m = [0.0; 5];
            for i in 0..window {
                for j in 0..window {
                    let wt = w2[i][j] / total;
                    let (p, q) = (a[y0 + i][x0 + j], b[y0 + i][x0 + j]);
                    m[0] += wt * p;
                    m[1] += wt * q;
                    m[2] += wt * p * p;
                    m[3] += wt * q * q;
                    m[4] += wt * p * q;
                }
            }
            let (va, vb, cov) = (m[2] - m[0] * m[0], m[3] - m[1] * m[1], m[4] - m[0] * m[1]);
            let con = (2.0 * cov + c2) / (va + vb + c2);
            s += (2.0 * m[0] * m[1] + c1) / (m[0] * m[0] + m[1] * m[1] + c1) * con;
            cs += con;
            n += 1.0;
        }
    }
    (s / n, cs / n)
}

/// Two-pass pSNR: mean first, then the log ratio.
pub fn oracle_psnr(a: &QuantizedImage, b: &QuantizedImage) -> f64 {
    let n = a.data.len() as f64;
    let mut mse = 0.0;
    for i in 0..a.data.len() {
        mse += (a.data[i] as f64 - b.data[i] as f64).powi(2) / n;
    }
    if mse == 0.0 {
        return f64::INFINITY;
    }
    20.0 * ((a.levels - 1) as f64).log10() - 10.0 * mse.log10()
}

/// Natural-looking random image: a few smooth blobs.
pub fn blob_image(r: &mut ChaCha8Rng, h: usize, w: usize, c: usize, k: usize) -> QuantizedImage {
    let blobs: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| (r.random_range(0.0..h as f64), r.random_range(0.0..w as f64), r.random_range(2.0..6.0), r.random_range(0.3..1.0)))
        .collect();
    let mut data = Vec::with_capacity(h * w * c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let v: f64 = blobs
                    .iter()
                    .map(|&(cy, cx, s, a)| a * (-((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)) / (2.0 * s * s)).exp())
                    .sum::<f64>()
                    * (1.0 - 0.2 * ch as f64);
                data.push(((v.clamp(0.0, 0.999)) * k as f64) as u16);
            }
        }
    }
    QuantizedImage::new(h, w, c, k, data).unwrap()
}
