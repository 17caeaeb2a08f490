use msmae::data::build_scale_pyramid;
use msmae::gradcheck::{all_entries, max_relative_error, DEFAULT_STEP};
use msmae::model::{Grouping, MaskedAutoencoder, ModelConfig, RGB_SPLIT};
use msmae::multiscale::{multiscale_forward, LossWeights, MultiscaleHead};
use msmae::rng::{stream, stream_at, Stream};
use msmae::{Result, Tensor};
use rand::Rng;

fn random(shape: &[usize], seed: u64, requires_grad: bool) -> Tensor {
    let mut rng = stream_at(seed, 55);
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    if requires_grad {
        Tensor::param(data, shape).unwrap()
    } else {
        Tensor::from_vec(data, shape).unwrap()
    }
}

fn zero(t: &Tensor) {
    t.data_mut().iter_mut().for_each(|v| *v = 0.0);
}

#[test]
fn lift_shape_linearity_and_gradient() {
    let head = MultiscaleHead::new(3, 5, 2, 1).unwrap();
    let f = random(&[3, 4, 4], 1, true);
    assert_eq!(head.lift_to_features(&f).unwrap().shape(), &[5, 4, 4]);
    let w = random(&[5, 4, 4], 2, false);
    let err = max_relative_error(
        &|| Ok(head.lift_to_features(&f)?.mul(&w)?.sum()),
        &all_entries(&[&f]),
        DEFAULT_STEP,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");

    zero(&head.lift.weight);
    assert!(head.lift_to_features(&f).unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn project_is_affine_and_bias_only_on_zero_input() {
    let head = MultiscaleHead::new(4, 6, 3, 2).unwrap();
    let (a, b) = (random(&[4, 3, 3], 3, false), random(&[4, 3, 3], 4, false));
    let lp = |x: &Tensor| head.project_to_image(&head.lift_to_features(x).unwrap(), 1).unwrap();
    // affine maps satisfy g(a + b) = g(a) + g(b) - g(0)
    let lhs = lp(&a.add(&b).unwrap());
    let rhs = lp(&a).add(&lp(&b)).unwrap().sub(&lp(&Tensor::zeros(&[4, 3, 3]))).unwrap();
    for (x, y) in lhs.data().iter().zip(rhs.data().iter()) {
        assert!((x - y).abs() < 1e-12);
    }
    let bias = [0.1, 0.2, 0.3, 0.4];
    head.project[0].bias.data_mut().copy_from_slice(&bias);
    let out = head.project_to_image(&Tensor::zeros(&[6, 2, 2]), 0).unwrap();
    assert_eq!(out.shape(), &[4, 2, 2]);
    for (c, b) in bias.iter().enumerate() {
        assert!(out.data()[c * 4..(c + 1) * 4].iter().all(|v| v == b));
    }
}

#[test]
fn zero_residual_block_is_post_activation_upsample() {
    let head = MultiscaleHead::new(3, 4, 2, 3).unwrap();
    let block = &head.blocks[0];
    zero(&block.res2.weight);
    zero(&block.res2.bias);
    let x = random(&[1, 4, 3, 3], 5, false);
    assert_eq!(block.forward(&x).unwrap().to_vec(), block.upsample(&x).unwrap().to_vec());
}

#[test]
fn tiny_block_gradient_check() {
    let head = MultiscaleHead::new(1, 2, 2, 4).unwrap();
    let block = &head.blocks[0];
    let x = random(&[1, 2, 2, 2], 6, true);
    let w = random(&[1, 2, 4, 4], 7, false);
    let params: Vec<&Tensor> = std::iter::once(&x).chain(head.params.iter().map(|(_, t)| t)).collect();
    let err = max_relative_error(
        &|| Ok(block.forward(&x)?.mul(&w)?.sum()),
        &all_entries(&params),
        DEFAULT_STEP,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

fn pyramid(seed: u64) -> msmae::data::ScalePyramid {
    let src = random(&[3, 32, 32], seed, false).add_scalar(1.0).scale(0.5);
    build_scale_pyramid(&src, 3).unwrap()
}

#[test]
fn shape_chain_and_decomposition() {
    let head = MultiscaleHead::new(3, 4, 3, 5).unwrap();
    let pyr = pyramid(8);
    let f = random(&[3, 8, 8], 9, true);
    let out = multiscale_forward(&head, &f, &pyr, LossWeights([1.0, 1.0, 1.0]), 3, false).unwrap();
    assert_eq!(out.f_hat.as_ref().unwrap().shape(), &[3, 16, 16]);
    assert_eq!(out.f_bar.as_ref().unwrap().shape(), &[3, 32, 32]);

    // independent recomputation of each part
    let l1 = f.data().iter().zip(pyr.base.data().iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 192.0;
    let mad = |a: &Tensor, b: &Tensor| {
        a.data().iter().zip(b.data().iter()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.numel() as f64
    };
    let l2 = mad(out.f_hat.as_ref().unwrap(), &pyr.mid);
    let l3 = mad(out.f_bar.as_ref().unwrap(), pyr.top.as_ref().unwrap());
    assert!((out.part(0).unwrap() - l1).abs() < 1e-12);
    assert!((out.part(1).unwrap() - l2).abs() < 1e-12);
    assert!((out.part(2).unwrap() - l3).abs() < 1e-12);
    assert!((out.loss.item() - (l1 + l2 + l3)).abs() < 1e-9);

    let w = LossWeights([0.5, 2.0, 0.25]);
    let out = multiscale_forward(&head, &f, &pyr, w, 3, false).unwrap();
    let parts: Vec<f64> = (0..3).map(|i| out.part(i).unwrap()).collect();
    let dot: f64 = parts.iter().zip(w.0).map(|(p, a)| p * a).sum();
    assert!((out.loss.item() - dot).abs() < 1e-12);
}

#[test]
fn exact_base_reconstruction_has_zero_loss() {
    let head = MultiscaleHead::new(3, 4, 3, 6).unwrap();
    let pyr = pyramid(10);
    let out = multiscale_forward(&head, &pyr.base, &pyr, LossWeights([1.0, 0.0, 0.0]), 3, false).unwrap();
    assert_eq!(out.loss.item(), 0.0);
}

#[test]
fn rejects_missing_levels() {
    let head = MultiscaleHead::new(3, 4, 2, 7).unwrap();
    let pyr = pyramid(11);
    let f = random(&[3, 8, 8], 12, false);
    assert!(multiscale_forward(&head, &f, &pyr, LossWeights::default(), 3, false).is_err());
    let two = build_scale_pyramid(&random(&[3, 16, 16], 13, false), 2).unwrap();
    let head3 = MultiscaleHead::new(3, 4, 3, 7).unwrap();
    assert!(multiscale_forward(&head3, &f, &two, LossWeights::default(), 3, false).is_err());
    assert!(multiscale_forward(&head, &random(&[3, 4, 4], 14, false), &pyr, LossWeights::default(), 2, false).is_err());
}

#[test]
fn every_head_parameter_gets_gradient() {
    let head = MultiscaleHead::new(3, 4, 3, 8).unwrap();
    let pyr = pyramid(15);
    let f = random(&[3, 8, 8], 16, true);
    let out = multiscale_forward(&head, &f, &pyr, LossWeights::default(), 3, false).unwrap();
    out.loss.backward().unwrap();
    for (name, p) in head.params.iter() {
        assert!(p.grad().unwrap().iter().any(|&g| g != 0.0), "{name}");
    }
}

fn tiny_cfg() -> ModelConfig {
    ModelConfig {
        patch_size: 4,
        embed_dim: 16,
        depth: 1,
        heads: 2,
        mlp_ratio: 2,
        decoder_dim: 8,
        decoder_depth: 1,
        decoder_heads: 2,
        mask_ratio: 0.75,
        grouping: Grouping::RgbSingleGroup { channels: 3 },
        input_size: 8,
        enc_split: RGB_SPLIT,
        feat_ch: 4,
    }
}

#[test]
fn zero_upscale_weights_match_single_scale_gradients() {
    let pyr = pyramid(17);
    let grads = |levels: usize, alpha: LossWeights| -> Result<Vec<Vec<f64>>> {
        let model = MaskedAutoencoder::new(tiny_cfg(), 18)?;
        let head = MultiscaleHead::new(3, 4, levels, 18)?;
        let plan = model.sample_mask(&mut stream(18, Stream::Mask))?;
        let f = model.forward(&pyr.base, &plan)?;
        multiscale_forward(&head, &f, &pyr, alpha, levels, false)?.loss.backward()?;
        Ok(model.params.iter().map(|(_, t)| t.grad().unwrap()).collect())
    };
    let base = grads(1, LossWeights([1.0, 0.0, 0.0])).unwrap();
    let multi = grads(3, LossWeights([1.0, 0.0, 0.0])).unwrap();
    for (a, b) in base.iter().zip(&multi) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}
