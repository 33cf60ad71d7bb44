//! Decoder pipeline around the Gaussian attention family: embedding stacks
//! are pooled over time, passed through a configurable attention module,
//! refined by a small convolution stack, and classified. Includes the
//! training loop, evaluation, and binary checkpoints.

pub mod checkpoint;
pub mod conv;
pub mod embed;
pub mod error;
pub mod loss;
pub mod model;
pub mod train;

pub use checkpoint::{load, save, LoadedCheckpoint, CHECKPOINT_MAGIC};
pub use conv::{global_average_pool, ConvLayer, ConvStack, KERNEL};
pub use embed::EmbeddingStack;
pub use error::{DecoderError, Result};
pub use loss::{cross_entropy, focal_loss, log_softmax, LossKind};
pub use model::{
    AttentionKind, DecoderConfig, GatDecoder, BLOCK_LAYERS, GQ_KV_HEADS, GQ_QUERY_HEADS,
    MIXTURE_COMPONENTS, WIDE_HEADS,
};
pub use train::{
    evaluate, metrics_to_csv, train, EpochMetrics, Evaluation, TrainConfig, TrainOutcome,
};

#[cfg(test)]
mod tests {
    use super::*;
    use tensor_core::{grad_check, grad_check_multi, DenseTensor, RngState, TensorError};

    fn tc<T>(r: Result<T>) -> tensor_core::Result<T> {
        r.map_err(|e| match e {
            DecoderError::Tensor(t) => t,
            other => TensorError::Contract(other.to_string()),
        })
    }

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} differ by {}", (a - b).abs());
    }

    fn scalar(t: &DenseTensor) -> f64 {
        assert_eq!(t.len(), 1, "expected a scalar, got shape {:?}", t.shape());
        t.to_vec()[0]
    }

    fn small_config(kind: AttentionKind) -> DecoderConfig {
        DecoderConfig {
            attention: kind,
            num_layers: 3,
            dim: 8,
            num_classes: 2,
            conv_channels: (2, 3),
        }
    }

    fn toy_stack(num_layers: usize, time_steps: usize, dim: usize, label: u32, fill: f32) -> EmbeddingStack {
        let values = vec![fill; num_layers * time_steps * dim];
        EmbeddingStack::new(values, num_layers, time_steps, dim, label).unwrap()
    }

    fn varied_stack(
        num_layers: usize,
        time_steps: usize,
        dim: usize,
        label: u32,
        rng: &mut RngState,
    ) -> EmbeddingStack {
        let values: Vec<f32> = rng
            .uniform_vec(num_layers * time_steps * dim, -1.5, 1.5)
            .into_iter()
            .map(|v| v as f32)
            .collect();
        EmbeddingStack::new(values, num_layers, time_steps, dim, label).unwrap()
    }

    // ---- embedding stacks ----

    #[test]
    fn mean_pooling_averages_each_feature_over_time() {
        let stack = EmbeddingStack::new(
            vec![1.0, 2.0, 3.0, 4.0, 10.0, 20.0, 30.0, 40.0],
            2,
            2,
            2,
            0,
        )
        .unwrap();
        let pooled = stack.mean_pool_time().unwrap();
        assert_eq!(pooled.shape(), [2, 2]);
        assert_eq!(pooled.to_vec(), vec![2.0, 3.0, 20.0, 30.0]);
    }

    #[test]
    fn layer_retention_copies_the_selected_planes_in_order() {
        let values: Vec<f32> = (0..3 * 2 * 2).map(|v| v as f32).collect();
        let mut stack = EmbeddingStack::new(values, 3, 2, 2, 7).unwrap();
        stack.source = 42;
        let subset = stack.retain_layers(&[2, 0]).unwrap();
        assert_eq!(subset.num_layers(), 2);
        assert_eq!(subset.values(), &[8.0, 9.0, 10.0, 11.0, 0.0, 1.0, 2.0, 3.0]);
        assert_eq!(subset.label, 7);
        assert_eq!(subset.source, 42);
        assert!(stack.retain_layers(&[3]).is_err());
        assert!(stack.retain_layers(&[]).is_err());
    }

    #[test]
    fn stacks_reject_bad_extents_lengths_and_values() {
        assert!(EmbeddingStack::new(vec![1.0], 0, 1, 1, 0).is_err());
        assert!(EmbeddingStack::new(vec![1.0, 2.0], 1, 1, 1, 0).is_err());
        assert!(EmbeddingStack::new(vec![f32::NAN], 1, 1, 1, 0).is_err());
    }

    // ---- convolution stage ----

    #[test]
    fn uniform_kernel_counts_live_neighbors_on_a_flat_image() {
        let weight = DenseTensor::parameter(vec![1.0; 9], &[1, 9]).unwrap();
        let bias = DenseTensor::parameter(vec![0.0], &[1, 1]).unwrap();
        let layer = ConvLayer::from_params(weight, bias, 1, 1).unwrap();
        let image = DenseTensor::from_vec(vec![1.0; 25], &[1, 25]).unwrap();
        let out = layer.forward(&image, 5, 5).unwrap();
        assert_eq!(out.shape(), [1, 25]);
        let v = out.to_vec();
        for row in 0..5 {
            for col in 0..5 {
                let edges = usize::from(row == 0 || row == 4) + usize::from(col == 0 || col == 4);
                let expected = match edges {
                    2 => 4.0,
                    1 => 6.0,
                    _ => 9.0,
                };
                assert_eq!(v[row * 5 + col], expected, "cell ({row}, {col})");
            }
        }
    }

    #[test]
    fn delta_kernel_reproduces_the_input_image() {
        let mut w = vec![0.0; 9];
        w[4] = 1.0;
        let weight = DenseTensor::parameter(w, &[1, 9]).unwrap();
        let bias = DenseTensor::parameter(vec![0.0], &[1, 1]).unwrap();
        let layer = ConvLayer::from_params(weight, bias, 1, 1).unwrap();
        let data: Vec<f64> = (0..12).map(|v| v as f64 - 5.0).collect();
        let image = DenseTensor::from_vec(data.clone(), &[1, 12]).unwrap();
        let out = layer.forward(&image, 3, 4).unwrap();
        assert_eq!(out.to_vec(), data);
    }

    #[test]
    fn convolution_matches_a_naive_sliding_window() {
        let mut rng = RngState::new(11);
        let (h, w, cin, cout) = (4, 5, 2, 3);
        let x = DenseTensor::from_vec(rng.uniform_vec(cin * h * w, -1.0, 1.0), &[cin, h * w]).unwrap();
        let weight =
            DenseTensor::parameter(rng.uniform_vec(cout * cin * 9, -1.0, 1.0), &[cout, cin * 9])
                .unwrap();
        let bias = DenseTensor::parameter(rng.uniform_vec(cout, -1.0, 1.0), &[cout, 1]).unwrap();
        let layer = ConvLayer::from_params(weight.clone(), bias.clone(), cin, cout).unwrap();
        let got = layer.forward(&x, h, w).unwrap().to_vec();

        let xv = x.to_vec();
        let wv = weight.to_vec();
        let bv = bias.to_vec();
        for oc in 0..cout {
            for row in 0..h as i64 {
                for col in 0..w as i64 {
                    let mut acc = bv[oc];
                    for ic in 0..cin {
                        for kr in -1..=1i64 {
                            for kc in -1..=1i64 {
                                let (r, c) = (row + kr, col + kc);
                                if r < 0 || r >= h as i64 || c < 0 || c >= w as i64 {
                                    continue;
                                }
                                let pix = xv[ic * h * w + (r * w as i64 + c) as usize];
                                let k = wv[oc * cin * 9
                                    + ic * 9
                                    + ((kr + 1) * 3 + kc + 1) as usize];
                                acc += pix * k;
                            }
                        }
                    }
                    approx(got[oc * h * w + (row * w as i64 + col) as usize], acc, 1e-10);
                }
            }
        }
    }

    #[test]
    fn zero_kernels_leave_only_the_bias() {
        let weight = DenseTensor::parameter(vec![0.0; 9], &[1, 9]).unwrap();
        let bias = DenseTensor::parameter(vec![2.5], &[1, 1]).unwrap();
        let layer = ConvLayer::from_params(weight, bias, 1, 1).unwrap();
        let image = DenseTensor::from_vec(vec![3.0; 6], &[1, 6]).unwrap();
        assert_eq!(layer.forward(&image, 2, 3).unwrap().to_vec(), vec![2.5; 6]);
    }

    #[test]
    fn global_average_pooling_reduces_each_channel_to_its_mean() {
        let feat = DenseTensor::from_vec(vec![1.0, 2.0, 3.0, 4.0, 10.0, 10.0, 10.0, 30.0], &[2, 4])
            .unwrap();
        let pooled = global_average_pool(&feat).unwrap();
        assert_eq!(pooled.shape(), [1, 2]);
        assert_eq!(pooled.to_vec(), vec![2.5, 15.0]);
    }

    // ---- losses ----

    #[test]
    fn cross_entropy_on_uniform_logits_is_the_log_class_count() {
        let logits = DenseTensor::from_vec(vec![0.0; 4], &[1, 4]).unwrap();
        let loss = cross_entropy(&logits, &[2]).unwrap();
        approx(scalar(&loss), 4.0f64.ln(), 1e-12);
    }

    #[test]
    fn cross_entropy_ignores_a_constant_logit_shift() {
        let base = DenseTensor::from_vec(vec![2.0, -1.0, 0.5, 0.0, 1.0, -2.0], &[2, 3]).unwrap();
        let shifted = base.add_scalar(1000.0).unwrap();
        let a = scalar(&cross_entropy(&base, &[0, 2]).unwrap());
        let b = scalar(&cross_entropy(&shifted, &[0, 2]).unwrap());
        approx(a, b, 1e-9);
    }

    #[test]
    fn cross_entropy_matches_a_manual_computation() {
        let logits = DenseTensor::from_vec(vec![1.0, 2.0, 3.0, 0.5, -0.5, 0.0], &[2, 3]).unwrap();
        let loss = scalar(&cross_entropy(&logits, &[2, 0]).unwrap());
        let lse0 = (1.0f64.exp() + 2.0f64.exp() + 3.0f64.exp()).ln();
        let lse1 = (0.5f64.exp() + (-0.5f64).exp() + 1.0).ln();
        approx(loss, ((lse0 - 3.0) + (lse1 - 0.5)) / 2.0, 1e-12);
    }

    #[test]
    fn focal_loss_matches_a_hand_computed_two_class_case() {
        let logits = DenseTensor::from_vec(vec![0.0, 0.0], &[1, 2]).unwrap();
        let loss = scalar(&focal_loss(&logits, &[0], 2.5).unwrap());
        approx(loss, 0.5f64.powf(2.5) * 2.0f64.ln(), 1e-12);
    }

    #[test]
    fn zero_exponent_focal_loss_collapses_to_cross_entropy() {
        let logits =
            DenseTensor::from_vec(vec![1.2, -0.3, 0.4, -2.0, 0.9, 0.1], &[2, 3]).unwrap();
        let labels = [1, 2];
        let f = scalar(&focal_loss(&logits, &labels, 0.0).unwrap());
        let ce = scalar(&cross_entropy(&logits, &labels).unwrap());
        approx(f, ce, 1e-9);
    }

    #[test]
    fn confident_correct_predictions_contribute_no_focal_loss() {
        let logits = DenseTensor::from_vec(vec![1000.0, 0.0], &[1, 2]).unwrap();
        let loss = scalar(&focal_loss(&logits, &[0], 2.0).unwrap());
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn losses_reject_bad_labels_and_exponents() {
        let logits = DenseTensor::from_vec(vec![0.0; 6], &[2, 3]).unwrap();
        assert!(cross_entropy(&logits, &[0, 3]).is_err());
        assert!(cross_entropy(&logits, &[0]).is_err());
        assert!(focal_loss(&logits, &[0, 1], -1.0).is_err());
        assert!(focal_loss(&logits, &[0, 1], f64::NAN).is_err());
    }

    #[test]
    fn loss_gradients_match_numeric_derivatives() {
        let logits =
            DenseTensor::from_vec(vec![0.8, -0.2, 0.3, -1.1, 0.6, 0.05], &[2, 3]).unwrap();
        let labels = [2, 0];
        let ce_err = grad_check(
            |l| tc(cross_entropy(l, &labels)),
            &logits,
            tensor_core::GRAD_CHECK_STEP,
        )
        .unwrap();
        assert!(ce_err <= 1e-4, "cross-entropy gradient error {ce_err}");
        let focal_err = grad_check(
            |l| tc(focal_loss(l, &labels, 2.5)),
            &logits,
            tensor_core::GRAD_CHECK_STEP,
        )
        .unwrap();
        assert!(focal_err <= 1e-4, "focal gradient error {focal_err}");
    }

    // ---- model assembly ----

    #[test]
    fn registered_parameters_follow_the_declared_layout_for_every_kind() {
        for kind in AttentionKind::ALL {
            let config = small_config(kind);
            let mut rng = RngState::new(5);
            let model = GatDecoder::new(&config, &mut rng).unwrap();
            let layout = config.param_layout();
            let registered: Vec<(String, Vec<usize>)> = model
                .store()
                .iter()
                .map(|(name, t)| (name.to_string(), t.shape().to_vec()))
                .collect();
            assert_eq!(registered, layout, "layout for {}", kind.name());
            assert_eq!(
                model.param_count(),
                layout.iter().map(|(_, s)| s.iter().product::<usize>() as u64).sum::<u64>()
            );
        }
    }

    #[test]
    fn attention_parameter_counts_follow_the_architecture() {
        let count = |kind, dim| {
            let config = DecoderConfig {
                attention: kind,
                num_layers: 3,
                dim,
                num_classes: 2,
                conv_channels: (2, 3),
            };
            let mut rng = RngState::new(1);
            GatDecoder::new(&config, &mut rng).unwrap().attention_param_count()
        };
        assert_eq!(count(AttentionKind::GaamV2, 64), 128);
        assert_eq!(count(AttentionKind::GaamV1, 64), 1024);
        assert_eq!(count(AttentionKind::Mha, 16), 1024);
        assert_eq!(count(AttentionKind::Gqgaam, 8), 320);
        assert_eq!(count(AttentionKind::Mixture, 16), 96);
        assert_eq!(count(AttentionKind::GaussianBlock, 16), 192);
        assert_eq!(count(AttentionKind::Gct, 16), 1);
    }

    #[test]
    fn explicit_parameter_lists_are_validated_against_the_layout() {
        let config = small_config(AttentionKind::GaamV2);
        let mut rng = RngState::new(3);
        let model = GatDecoder::new(&config, &mut rng).unwrap();
        let rebuild = |snapshot: Vec<(String, Vec<f64>)>| -> Result<GatDecoder> {
            let layout = config.param_layout();
            let params = snapshot
                .into_iter()
                .zip(&layout)
                .map(|((name, values), (_, shape))| {
                    Ok((name, DenseTensor::parameter(values, shape)?))
                })
                .collect::<Result<Vec<_>>>()?;
            GatDecoder::from_named_params(&config, params)
        };

        let good = rebuild(model.snapshot()).unwrap();
        assert_eq!(good.param_count(), model.param_count());

        let mut swapped = model.snapshot();
        swapped.swap(0, 1);
        assert!(rebuild(swapped).is_err());

        let mut short = model.snapshot();
        short.pop();
        assert!(rebuild(short).is_err());

        let mut misshaped = model.snapshot();
        misshaped[0].1.push(0.0);
        let layout = config.param_layout();
        let bad = DenseTensor::parameter(misshaped[0].1.clone(), &[config.dim + 1]).unwrap();
        let mut params: Vec<(String, DenseTensor)> = Vec::new();
        params.push((misshaped[0].0.clone(), bad));
        for ((name, values), (_, shape)) in misshaped.into_iter().zip(&layout).skip(1) {
            params.push((name, DenseTensor::parameter(values, shape).unwrap()));
        }
        assert!(GatDecoder::from_named_params(&config, params).is_err());
    }

    #[test]
    fn forward_yields_one_logit_row_per_stack_and_keeps_sources() {
        let config = small_config(AttentionKind::GaamV2);
        let mut rng = RngState::new(9);
        let model = GatDecoder::new(&config, &mut rng).unwrap();
        let mut a = varied_stack(3, 4, 8, 0, &mut rng);
        let mut b = varied_stack(3, 4, 8, 1, &mut rng);
        a.source = 17;
        b.source = 99;
        let (logits, maps) = model.forward_batch(&[&a, &b]).unwrap();
        assert_eq!(logits.shape(), [2, 2]);
        assert_eq!(maps.len(), 2);
        assert_eq!(maps[0].source, 17);
        assert_eq!(maps[1].source, 99);
        assert_eq!(maps[0].num_layers, 3);

        let (again, _) = model.forward_batch(&[&a, &b]).unwrap();
        assert_eq!(logits.to_vec(), again.to_vec());

        let wrong = varied_stack(2, 4, 8, 0, &mut rng);
        assert!(model.forward_stack(&wrong).is_err());
    }

    #[test]
    fn invalid_architectures_are_rejected() {
        let mut rng = RngState::new(2);
        let bad_mha = DecoderConfig::new(AttentionKind::Mha, 3, 12, 2);
        assert!(GatDecoder::new(&bad_mha, &mut rng).is_err());
        let bad_gq = DecoderConfig::new(AttentionKind::Gqgaam, 3, 6, 2);
        assert!(GatDecoder::new(&bad_gq, &mut rng).is_err());
        let one_class = DecoderConfig::new(AttentionKind::GaamV2, 3, 8, 1);
        assert!(GatDecoder::new(&one_class, &mut rng).is_err());
        let no_layers = DecoderConfig::new(AttentionKind::GaamV2, 0, 8, 2);
        assert!(GatDecoder::new(&no_layers, &mut rng).is_err());

        assert!(AttentionKind::parse("nonsense").is_err());
        for kind in AttentionKind::ALL {
            assert_eq!(AttentionKind::parse(kind.name()).unwrap(), kind);
            assert_eq!(AttentionKind::from_index(kind.index()).unwrap(), kind);
        }
        assert!(AttentionKind::from_index(7).is_err());
    }

    #[test]
    fn every_attention_kind_backpropagates_through_the_whole_decoder() {
        for kind in AttentionKind::ALL {
            let config = small_config(kind);
            let mut rng = RngState::new(31);
            let model = GatDecoder::new(&config, &mut rng).unwrap();
            let pooled_a =
                DenseTensor::from_vec(rng.uniform_vec(3 * 8, -1.5, 1.5), &[3, 8]).unwrap();
            let pooled_b =
                DenseTensor::from_vec(rng.uniform_vec(3 * 8, -1.5, 1.5), &[3, 8]).unwrap();
            let layout = config.param_layout();
            let inputs: Vec<DenseTensor> = model
                .snapshot()
                .into_iter()
                .zip(&layout)
                .map(|((_, values), (_, shape))| DenseTensor::from_vec(values, shape).unwrap())
                .collect();

            let err = grad_check_multi(
                |probes| {
                    let params = probes
                        .iter()
                        .zip(&layout)
                        .map(|(t, (name, _))| {
                            let t = if t.requires_grad() {
                                t.clone()
                            } else {
                                DenseTensor::parameter(t.to_vec(), t.shape())?
                            };
                            Ok((name.clone(), t))
                        })
                        .collect::<tensor_core::Result<Vec<_>>>()?;
                    let model = tc(GatDecoder::from_named_params(&config, params))?;
                    let (la, _) = tc(model.forward_pooled(&pooled_a))?;
                    let (lb, _) = tc(model.forward_pooled(&pooled_b))?;
                    let logits = tensor_core::concat(&[la, lb], 0)?;
                    tc(cross_entropy(&logits, &[0, 1]))
                },
                &inputs,
                tensor_core::GRAD_CHECK_STEP,
            )
            .unwrap();
            assert!(
                err <= 1e-4,
                "gradient error {err} for attention kind {}",
                kind.name()
            );
        }
    }

    // ---- training and evaluation ----

    fn easy_dataset(n_per_class: usize) -> Vec<EmbeddingStack> {
        let mut out = Vec::new();
        for i in 0..n_per_class {
            let jitter = i as f32 * 0.01;
            let mut lo = toy_stack(2, 2, 4, 0, 2.0 + jitter);
            lo.source = (2 * i) as u32;
            out.push(lo);
            let mut hi = toy_stack(2, 2, 4, 1, -2.0 - jitter);
            hi.source = (2 * i + 1) as u32;
            out.push(hi);
        }
        out
    }

    fn easy_config() -> DecoderConfig {
        DecoderConfig {
            attention: AttentionKind::GaamV2,
            num_layers: 2,
            dim: 4,
            num_classes: 2,
            conv_channels: (2, 3),
        }
    }

    #[test]
    fn a_zero_learning_rate_leaves_parameters_untouched() {
        let data = easy_dataset(3);
        let config = easy_config();
        let tcfg = TrainConfig {
            epochs: 2,
            learning_rate: 0.0,
            weight_decay: 0.1,
            batch_size: 4,
            loss: LossKind::CrossEntropy,
            seed: 8,
        };
        let outcome = train(&data, &data, &config, &tcfg).unwrap();
        assert_eq!(outcome.history.len(), 2);
        assert!(outcome.aborted_at.is_none());

        let mut rng = RngState::new(8);
        let fresh = GatDecoder::new(&config, &mut rng).unwrap();
        assert_eq!(outcome.model.snapshot(), fresh.snapshot());
    }

    #[test]
    fn equal_seeds_reproduce_identical_runs() {
        let data = easy_dataset(4);
        let config = easy_config();
        let mut tcfg = TrainConfig::new(21);
        tcfg.epochs = 3;
        tcfg.batch_size = 3;
        let first = train(&data, &data, &config, &tcfg).unwrap();
        let second = train(&data, &data, &config, &tcfg).unwrap();
        assert_eq!(first.history, second.history);
        assert_eq!(first.model.snapshot(), second.model.snapshot());

        tcfg.seed = 22;
        let third = train(&data, &data, &config, &tcfg).unwrap();
        assert_ne!(first.model.snapshot(), third.model.snapshot());
    }

    #[test]
    fn training_separates_an_easy_two_class_problem() {
        let data = easy_dataset(4);
        let config = easy_config();
        let tcfg = TrainConfig {
            epochs: 25,
            learning_rate: 0.05,
            weight_decay: 0.0,
            batch_size: 4,
            loss: LossKind::CrossEntropy,
            seed: 13,
        };
        let outcome = train(&data, &data, &config, &tcfg).unwrap();
        assert!(outcome.aborted_at.is_none());
        let eval = evaluate(&outcome.model, &data).unwrap();
        assert_eq!(eval.accuracy, 1.0, "history: {:?}", outcome.history);
        let last = outcome.history.last().unwrap();
        let first = outcome.history.first().unwrap();
        assert!(last.train_loss < first.train_loss);
    }

    #[test]
    fn a_runaway_learning_rate_aborts_and_rolls_back() {
        let data = easy_dataset(3);
        let config = easy_config();
        let tcfg = TrainConfig {
            epochs: 5,
            learning_rate: 1e160,
            weight_decay: 0.0,
            batch_size: 8,
            loss: LossKind::CrossEntropy,
            seed: 4,
        };
        let outcome = train(&data, &data, &config, &tcfg).unwrap();
        assert_eq!(outcome.aborted_at, Some(1));
        assert!(outcome.history.is_empty());

        let mut rng = RngState::new(4);
        let fresh = GatDecoder::new(&config, &mut rng).unwrap();
        assert_eq!(outcome.model.snapshot(), fresh.snapshot());
    }

    #[test]
    fn evaluation_reports_exact_fractions_and_keeps_sources() {
        let config = easy_config();
        let mut rng = RngState::new(6);
        let model = GatDecoder::new(&config, &mut rng).unwrap();
        let mut data: Vec<EmbeddingStack> = (0..5)
            .map(|i| {
                let mut s = varied_stack(2, 3, 4, 0, &mut rng);
                s.source = 100 + i;
                s
            })
            .collect();
        let eval = evaluate(&model, &data).unwrap();
        assert_eq!(eval.predictions.len(), 5);
        assert_eq!(eval.maps.len(), 5);
        for (i, map) in eval.maps.iter().enumerate() {
            assert_eq!(map.source, 100 + i as u32);
        }

        // Relabel three samples to the model's own predictions and the
        // other two away from them: accuracy must be exactly 3/5.
        for (i, stack) in data.iter_mut().enumerate() {
            stack.label = if i < 3 {
                eval.predictions[i]
            } else {
                1 - eval.predictions[i]
            };
        }
        let again = evaluate(&model, &data).unwrap();
        assert_eq!(again.accuracy, 0.6);
        assert_eq!(again.predictions, eval.predictions);
    }

    #[test]
    fn metrics_render_as_csv_with_a_fixed_header() {
        let history = vec![
            EpochMetrics {
                epoch: 1,
                train_loss: 0.75,
                val_accuracy: 0.5,
            },
            EpochMetrics {
                epoch: 2,
                train_loss: 0.256789123,
                val_accuracy: 1.0,
            },
        ];
        let csv = metrics_to_csv(&history);
        assert_eq!(
            csv,
            "epoch,train_loss,val_accuracy\n1,0.750000,0.500000\n2,0.256789,1.000000\n"
        );
    }

    #[test]
    fn training_rejects_inconsistent_datasets() {
        let config = easy_config();
        let tcfg = TrainConfig::new(1);
        let data = easy_dataset(2);
        assert!(train(&[], &data, &config, &tcfg).is_err());

        let mut bad_label = easy_dataset(2);
        bad_label[0].label = 9;
        assert!(train(&bad_label, &data, &config, &tcfg).is_err());

        let wrong_dim = vec![toy_stack(2, 2, 5, 0, 1.0)];
        assert!(train(&wrong_dim, &data, &config, &tcfg).is_err());

        let mut bad_batch = tcfg;
        bad_batch.batch_size = 0;
        assert!(train(&data, &data, &config, &bad_batch).is_err());
    }

    // ---- checkpoints ----

    #[test]
    fn checkpoints_round_trip_architecture_settings_and_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let config = small_config(AttentionKind::Gqgaam);
        let mut rng = RngState::new(77);
        let model = GatDecoder::new(&config, &mut rng).unwrap();
        let tcfg = TrainConfig {
            epochs: 35,
            learning_rate: 0.25,
            weight_decay: 0.5,
            batch_size: 8,
            loss: LossKind::Focal { gamma: 2.5 },
            seed: 0xfedc_ba98_7654_3210,
        };
        checkpoint::save(&model, &tcfg, &path).unwrap();

        let loaded = checkpoint::load(&path).unwrap();
        assert_eq!(loaded.model.config(), &config);
        assert_eq!(loaded.train_config, tcfg);

        let original = model.snapshot();
        let restored = loaded.model.snapshot();
        assert_eq!(original.len(), restored.len());
        for ((name_a, values_a), (name_b, values_b)) in original.iter().zip(&restored) {
            assert_eq!(name_a, name_b);
            let narrowed: Vec<f64> = values_a.iter().map(|&v| v as f32 as f64).collect();
            assert_eq!(&narrowed, values_b, "values for {name_a}");
        }
    }

    #[test]
    fn checkpoint_bytes_are_stable_across_a_reload_cycle() {
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("a.ckpt");
        let second = dir.path().join("b.ckpt");
        let config = small_config(AttentionKind::Mixture);
        let mut rng = RngState::new(15);
        let model = GatDecoder::new(&config, &mut rng).unwrap();
        let tcfg = TrainConfig::new(99);
        checkpoint::save(&model, &tcfg, &first).unwrap();
        let loaded = checkpoint::load(&first).unwrap();
        checkpoint::save(&loaded.model, &loaded.train_config, &second).unwrap();
        assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
    }

    fn load_error(path: &std::path::Path) -> String {
        match checkpoint::load(path) {
            Ok(_) => panic!("expected loading {} to fail", path.display()),
            Err(e) => e.to_string(),
        }
    }

    #[test]
    fn corrupt_checkpoints_are_rejected_with_byte_offsets() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let config = easy_config();
        let mut rng = RngState::new(3);
        let model = GatDecoder::new(&config, &mut rng).unwrap();
        checkpoint::save(&model, &TrainConfig::new(5), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let scrambled = path.with_file_name("scrambled.ckpt");
        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&scrambled, &bad).unwrap();
        let err = load_error(&scrambled);
        assert!(err.contains("magic"), "unexpected error: {err}");

        let truncated = path.with_file_name("truncated.ckpt");
        std::fs::write(&truncated, &bytes[..bytes.len() / 2]).unwrap();
        let err = load_error(&truncated);
        assert!(
            err.contains(&format!("truncated at byte {}", bytes.len() / 2)),
            "unexpected error: {err}"
        );

        let padded = path.with_file_name("padded.ckpt");
        let mut extra = bytes.clone();
        extra.push(0);
        std::fs::write(&padded, &extra).unwrap();
        let err = load_error(&padded);
        assert!(err.contains("trailing"), "unexpected error: {err}");
    }
}
