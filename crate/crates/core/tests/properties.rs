use std::sync::Arc;

use pixrec::data::{dequantize, quantize};
use pixrec::eval::{psnr, ssim};
use pixrec::image::QuantizedImage;
use pixrec::model::Checkpoint;
use pixrec::nn::{build_mask, MaskKind, MaskSpec};
use pixrec::sampler::{argmax, temper};
use pixrec::tensor::{log_sum_exp_slice, softmax_slice, Graph, Padding, Tensor};
use proptest::prelude::*;

fn logits(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-20.0f64..20.0, n)
}

fn dist(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn image(h: usize, w: usize, c: usize, k: usize) -> impl Strategy<Value = QuantizedImage> {
    prop::collection::vec(0..k as u16, h * w * c).prop_map(move |d| QuantizedImage::new(h, w, c, k, d).unwrap())
}

/// `<f(x), y>` against `<x, f^T(y)>` for a linear map `f` given as a graph
/// function of its input, with `f^T` taken from the backward pass.
fn adjoint_gap(f: &dyn Fn(&mut Graph, pixrec::tensor::Var) -> pixrec::tensor::Var, x: &Tensor, y_seed: u64) -> (f64, f64) {
    let mut g = Graph::new();
    let xv = g.param(x.clone());
    let out = f(&mut g, xv);
    let n = g.value(out).len();
    let y = Tensor::new(
        g.shape(out).to_vec(),
        (0..n).map(|i| ((i as u64 * 2654435761 + y_seed) % 1000) as f64 / 500.0 - 1.0).collect(),
    )
    .unwrap();
    let lhs = g.value(out).dot(&y).unwrap();
    let yc = g.constant(y);
    let prod = g.mul(out, yc).unwrap();
    let s = g.sum(prod);
    g.backward(s).unwrap();
    let rhs: f64 = g.grad(xv).unwrap().iter().zip(x.data()).map(|(a, b)| a * b).sum();
    (lhs, rhs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_and_lse_shift(v in logits(1..12), c in -50.0f64..50.0) {
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let (p, q) = (softmax_slice(&v), softmax_slice(&shifted));
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!((log_sum_exp_slice(&shifted) - log_sum_exp_slice(&v) - c).abs() < 1e-9);
    }

    #[test]
    fn temper_keeps_argmax_and_sharpens(p in dist(2..10), tau in 0.05f64..3.0) {
        let q = temper(&p, tau).unwrap();
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let top = p.iter().cloned().fold(0.0, f64::max);
        let ties = p.iter().filter(|&&v| top - v < 1e-12).count();
        if ties == 1 {
            prop_assert_eq!(argmax(&q), argmax(&p));
            let qtop = q[argmax(&p)];
            if tau < 1.0 { prop_assert!(qtop >= top - 1e-12); }
            if tau > 1.0 { prop_assert!(qtop <= top + 1e-12); }
        }
        // Order is preserved pairwise.
        for i in 0..p.len() {
            for j in 0..p.len() {
                if p[i] < p[j] - 1e-12 { prop_assert!(q[i] <= q[j]); }
            }
        }
    }

    #[test]
    fn masked_conv_is_linear_with_its_adjoint(
        x in prop::collection::vec(-1.0f64..1.0, 2 * 5 * 4 * 3),
        k in prop::collection::vec(-1.0f64..1.0, 3 * 3 * 3 * 6),
        stride in 1usize..3,
        masked in any::<bool>(),
    ) {
        let x = Tensor::new(vec![2, 5, 4, 3], x).unwrap();
        let k = Tensor::new(vec![3, 3, 3, 6], k).unwrap();
        let mask = masked.then(|| Arc::new(build_mask(&MaskSpec::new(MaskKind::B, 3, 3, 6, 3)).unwrap()));
        let f = |g: &mut Graph, v| {
            let kc = g.constant(k.clone());
            g.conv2d(v, kc, stride, Padding::Same, mask.clone()).unwrap()
        };
        let (lhs, rhs) = adjoint_gap(&f, &x, 7);
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn transposed_conv_adjoint(
        x in prop::collection::vec(-1.0f64..1.0, 3 * 3 * 2),
        k in prop::collection::vec(-1.0f64..1.0, 3 * 3 * 4 * 2),
    ) {
        let x = Tensor::new(vec![1, 3, 3, 2], x).unwrap();
        let k = Tensor::new(vec![3, 3, 4, 2], k).unwrap();
        let f = |g: &mut Graph, v| {
            let kc = g.constant(k.clone());
            g.transposed_conv2d(v, kc, 2).unwrap()
        };
        let (lhs, rhs) = adjoint_gap(&f, &x, 3);
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn metrics_are_symmetric(a in image(12, 12, 2, 16), b in image(12, 12, 2, 16)) {
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(ssim(&a, &b).unwrap() <= 1.0 + 1e-12);
        prop_assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn quantize_dequantize_roundtrip(q in image(3, 5, 3, 7)) {
        prop_assert_eq!(quantize(&dequantize(&q), q.levels).unwrap(), q);
    }

    #[test]
    fn checkpoint_bytes_roundtrip(
        config in "[a-z_]{1,8}=[0-9]{1,4}\n",
        vals in prop::collection::vec(any::<f64>(), 0..20),
    ) {
        let mut tensors = indexmap::IndexMap::new();
        tensors.insert("t".to_string(), Tensor::new(vec![vals.len()], vals.clone()).unwrap());
        let ck = Checkpoint { config, tensors };
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        prop_assert_eq!(&back.config, &ck.config);
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back.tensors["t"]), bits(&ck.tensors["t"]));
    }
}
