use inceptoformer_core::data::{segment, synth_dataset, SynthSpec};
use inceptoformer_core::model::{InceptoFormer, ModelConfig};
use inceptoformer_core::train::{evaluate, train_with_evaluator, TrainConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let filters: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(2);
    let epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(200);
    let spec = SynthSpec { n_subjects_per_class: 1, n_timesteps: 850, noise_std: 0.0, seed: 1 };
    let segs: Vec<_> = synth_dataset(&spec)
        .unwrap()
        .iter()
        .flat_map(|r| segment(r, 100, 0.5).unwrap())
        .collect();
    let refs: Vec<&_> = segs.iter().collect();
    let model_config = ModelConfig {
        filters_per_stream: filters,
        ..ModelConfig::default()
    };
    let mut model: InceptoFormer<f64> = InceptoFormer::new(&model_config, 42).unwrap();
    println!("segments={} params={}", segs.len(), model.param_count());
    let tc = TrainConfig {
        max_epochs: epochs,
        batch_size: 64,
        learning_rate: 1e-4,
        dropout: 0.2,
        early_stop_patience: epochs,
        seed: 7,
        ..Default::default()
    };
    let start = Instant::now();
    let out = train_with_evaluator(&mut model, &refs, &tc, |_, _| Ok((0.0, 0.0))).unwrap();
    let reached = out.history.iter().find(|h| h.train_acc >= 1.0).map(|h| h.epoch);
    let final_eval = evaluate(&mut model, &refs, 64).unwrap();
    println!(
        "epochs={} first-100%={:?} final_trainmode_acc={:.3} evalmode_acc(current)={:.3} elapsed={:.0?}",
        out.history.len(),
        reached,
        out.history.last().unwrap().train_acc,
        final_eval.accuracy,
        start.elapsed()
    );
    for h in out.history.iter().step_by(10) {
        println!("  epoch {:3}  loss {:.4}  acc {:.3}", h.epoch, h.train_loss, h.train_acc);
    }
}
