use scumwatch_core::augment::AugmentPolicy;
use scumwatch_core::evalkit::{evaluate_classifier, generate_synthetic_dataset, metrics, SynthSceneSpec};
use scumwatch_core::model::{train, TrainConfig};
use scumwatch_core::rng::seeded;
use std::time::Instant;

#[test]
fn calibrate() {
    let train_set = generate_synthetic_dataset(&SynthSceneSpec::with_seed(101), 100).unwrap();
    let test_set = generate_synthetic_dataset(&SynthSceneSpec::with_seed(202), 20).unwrap();
    for lr in [0.2, 0.5, 1.0] {
        for policy in AugmentPolicy::ALL {
            let cfg = TrainConfig {
                epochs: 10,
                batch_size: 16,
                learning_rate: lr,
                seed: 42,
                augment_policy: policy,
                ..TrainConfig::default()
            };
            let t0 = Instant::now();
            let (net, report) = train(&train_set, &cfg, &mut seeded(cfg.seed)).unwrap();
            let dt = t0.elapsed().as_secs_f64();
            let cm = evaluate_classifier(&net, &test_set).unwrap();
            let m = metrics(&cm).unwrap();
            println!(
                "lr={lr} policy={:>8} acc={:.3} loss(first->last)={:.3}->{:.3} time={dt:.1}s",
                policy.name(),
                m.accuracy,
                report.epoch_loss.first().unwrap(),
                report.epoch_loss.last().unwrap()
            );
        }
    }
}
