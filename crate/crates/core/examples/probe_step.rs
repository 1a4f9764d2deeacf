use inceptoformer_core::data::{segment, segments_to_batch, synth_dataset, SynthSpec};
use inceptoformer_core::model::{InceptoFormer, ModelConfig};
use inceptoformer_core::nn::Mode;
use inceptoformer_core::tensor::Tape;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let spec = SynthSpec { n_subjects_per_class: 1, n_timesteps: 850, noise_std: 0.0, seed: 1 };
    let segs: Vec<_> = synth_dataset(&spec)
        .unwrap()
        .iter()
        .flat_map(|r| segment(r, 100, 0.5).unwrap())
        .collect();
    let refs: Vec<&_> = segs.iter().collect();
    let model_config = ModelConfig {
        filters_per_stream: 4,
        reduced_dim: 8,
        classifier_widths: vec![32, 16],
        ..ModelConfig::default()
    };
    let mut model: InceptoFormer<f64> = InceptoFormer::new(&model_config, 42).unwrap();
    let labels: Vec<usize> = refs.iter().map(|s| s.label).collect();
    let batch: Vec<f64> = segments_to_batch(&refs);
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    for round in 0..3 {
        let t0 = Instant::now();
        let tape = Tape::new();
        let x = tape.constant(batch.clone(), &[64, 18, 100]).unwrap();
        let out = model.forward(&tape, &x, Mode::Train, &mut rng).unwrap();
        let loss = out.logits.cross_entropy(&labels).unwrap();
        let t1 = Instant::now();
        loss.backward().unwrap();
        let t2 = Instant::now();
        println!(
            "round {round}: fwd {:.2?} bwd {:.2?} nodes {} values {}",
            t1 - t0,
            t2 - t1,
            tape.n_nodes(),
            tape.n_values()
        );
    }
}
