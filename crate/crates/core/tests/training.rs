use freqflow_core::data::{fit_standardize, split_and_window, synth_generate, SeriesWindow, SynthSpec};
use freqflow_core::metrics::mse;
use freqflow_core::model::FlowDraw;
use freqflow_core::optim::{adam_step, AdamState};
use freqflow_core::rng::{normal, SeedStreams};
use freqflow_core::train::{batch_gradients, flow_regularizer, total_loss, train, validation_mse};
use freqflow_core::{Graph, LpfConfig, Model, ModelConfig, Preset, TrainConfig};
use proptest::prelude::*;

fn small_config() -> ModelConfig {
    ModelConfig {
        n_heads: 2,
        flow_hidden: 8,
        lpf: LpfConfig::explicit(6),
        ..ModelConfig::preset(Preset::Shallow, 4, 24, 24)
    }
}

fn windows() -> [Vec<SeriesWindow>; 3] {
    let spec = SynthSpec { n_vars: 4, length: 600, periods: vec![12.0, 24.0], ..Default::default() };
    let (ds, _) = fit_standardize(&synth_generate(&spec).unwrap()).unwrap();
    split_and_window(&ds, 24, 24, 6).unwrap().map(|w| w.windows)
}

fn draws(model: &Model, seed: u64, n: usize) -> Vec<Vec<FlowDraw>> {
    let mut rng = SeedStreams::new(seed).stream("draws");
    (0..n).map(|_| model.draw_flow(&mut rng, 1)).collect()
}

fn perturbed(cfg: ModelConfig, seed: u64) -> Model {
    let mut model = Model::new(cfg, seed).unwrap();
    let mut rng = SeedStreams::new(seed).stream("perturb");
    for p in model.store.iter_mut() {
        p.value.flat_mut().iter_mut().for_each(|v| *v += 0.05 * normal(&mut rng));
    }
    model
}

proptest! {
    #[test]
    fn total_is_linear_in_components(recon in 0.0f64..10.0, flow in 0.0f64..10.0, seed in 0u64..100) {
        let model = perturbed(small_config(), seed);
        let cfg = TrainConfig::default();
        let b = total_loss(recon, flow, &model.store, &cfg).unwrap();
        let brute: f64 = model.flow.param_ids().map(|id| model.store.get(id).value.flat().iter().map(|w| w * w).sum::<f64>()).sum();
        prop_assert!((b.reg - brute).abs() <= 1e-10 * brute.max(1.0));
        prop_assert!((b.total - (0.276 * recon + 0.721 * flow + 1e-6 * brute)).abs() < 1e-12);
    }
}

#[test]
fn regularizer_covers_only_the_flow_head() {
    let mut model = perturbed(small_config(), 3);
    let before = flow_regularizer(&model.store);
    for p in model.store.iter_mut().filter(|p| !p.name.starts_with("flow.")) {
        p.value.flat_mut().iter_mut().for_each(|v| *v *= 3.0);
    }
    assert_eq!(flow_regularizer(&model.store), before);
}

#[test]
fn small_step_decreases_loss() {
    let [train_w, _, _] = windows();
    let batch: Vec<&SeriesWindow> = train_w.iter().take(8).collect();
    let cfg = TrainConfig { lr: 1e-4, ..Default::default() };
    let mut failures = 0;
    for seed in 0..20 {
        let mut model = perturbed(small_config(), seed);
        let d = draws(&model, seed, batch.len());
        let before = batch_gradients(&mut model, &batch, &d, &cfg).unwrap();
        let mut adam = AdamState::new(&model.store);
        adam_step(&mut adam, &mut model.store, cfg.lr, cfg.weight_decay).unwrap();
        let after = batch_gradients(&mut model, &batch, &d, &cfg).unwrap();
        if after.total >= before.total {
            failures += 1;
        }
    }
    assert!(failures <= 1, "{failures} of 20 steps did not decrease the loss");
}

#[test]
fn disabled_flow_gets_no_gradient() {
    let [train_w, _, _] = windows();
    let batch: Vec<&SeriesWindow> = train_w.iter().take(4).collect();
    let mut model = perturbed(ModelConfig { use_flow: false, ..small_config() }, 1);
    let d = draws(&model, 1, batch.len());
    let loss = batch_gradients(&mut model, &batch, &d, &TrainConfig::default()).unwrap();
    assert_eq!((loss.flow, loss.reg), (0.0, 0.0));
    for id in model.flow.param_ids() {
        let p = model.store.get(id);
        assert!(!p.trainable);
        assert!(p.gradient.flat().iter().all(|&g| g == 0.0), "{}", p.name);
    }
}

#[test]
fn backcast_off_ignores_backcast_segment() {
    let [train_w, _, _] = windows();
    let model = perturbed(ModelConfig { use_backcast: false, use_flow: false, ..small_config() }, 2);
    for w in train_w.iter().take(5) {
        let mut g = Graph::new();
        let ex = model.example_losses(&mut g, w, &[]).unwrap();
        let direct = mse(&model.forecast(w).unwrap(), &w.horizon).unwrap();
        assert_eq!(g.scalar(ex.recon), direct);
    }
    let with = perturbed(ModelConfig { use_flow: false, ..small_config() }, 2);
    let w = &train_w[0];
    let mut g = Graph::new();
    let full = with.example_losses(&mut g, w, &[]).unwrap();
    assert_ne!(g.scalar(full.recon), mse(&with.forecast(w).unwrap(), &w.horizon).unwrap());
}

#[test]
fn batch_gradient_is_mean_of_examples() {
    let [train_w, _, _] = windows();
    let batch: Vec<&SeriesWindow> = train_w.iter().take(5).collect();
    let cfg = TrainConfig { lambda_reg: 0.0, ..Default::default() };
    let mut model = perturbed(small_config(), 4);
    let d = draws(&model, 4, batch.len());
    let whole = batch_gradients(&mut model, &batch, &d, &cfg).unwrap();
    let grads = |m: &Model| m.store.iter().flat_map(|(_, p)| p.gradient.flat().to_vec()).collect::<Vec<_>>();
    let batch_grad = grads(&model);
    let mut mean = vec![0.0; batch_grad.len()];
    let (mut recon, mut flow) = (0.0, 0.0);
    for (w, dw) in batch.iter().zip(&d) {
        let one = batch_gradients(&mut model, &[*w], std::slice::from_ref(dw), &cfg).unwrap();
        recon += one.recon / batch.len() as f64;
        flow += one.flow / batch.len() as f64;
        mean.iter_mut().zip(grads(&model)).for_each(|(m, g)| *m += g / batch.len() as f64);
    }
    assert!((whole.recon - recon).abs() < 1e-10);
    assert!((whole.flow - flow).abs() < 1e-10);
    for (a, b) in batch_grad.iter().zip(&mean) {
        assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
    }
}

fn quick() -> TrainConfig {
    TrainConfig { max_epochs: 6, patience: 3, batch_size: 8, seed: 11, ..Default::default() }
}

#[test]
fn training_is_seed_deterministic() {
    let [tr, va, _] = windows();
    let mut a = Model::new(small_config(), 5).unwrap();
    let mut b = Model::new(small_config(), 5).unwrap();
    let ra = train(&mut a, &tr, &va, &quick(), &mut ()).unwrap();
    let rb = train(&mut b, &tr, &va, &quick(), &mut ()).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(a.store, b.store);
}

#[test]
fn early_stopping_restores_best() {
    let [tr, va, _] = windows();
    for lr in [1e-3, 3e-2] {
        let mut model = Model::new(small_config(), 6).unwrap();
        let report = train(&mut model, &tr, &va, &TrainConfig { lr, ..quick() }, &mut ()).unwrap();
        let restored = validation_mse(&model, &va).unwrap();
        assert_eq!(restored, report.best_val_mse);
        assert!(report.history.iter().all(|r| restored <= r.val_mse));
    }
}

#[test]
fn deep_correction_survives_only_if_it_helps() {
    let [tr, va, _] = windows();
    let cfg = ModelConfig { flow_depth: 4, flow_correction: true, ..small_config() };
    let mut model = Model::new(cfg, 7).unwrap();
    let report = train(&mut model, &tr, &va, &quick(), &mut ()).unwrap();
    let kept = validation_mse(&model, &va).unwrap();
    assert!(kept <= report.best_val_mse);
    assert_eq!(model.config.flow_correction, report.flow_correction);
}
