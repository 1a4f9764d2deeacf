//! End-to-end gradient checks of the assembled model at the tiny scale.
//!
//! Fixture values are chosen to keep every pre-activation away from the
//! SeLU kink: central differences straddling a non-C1 point would measure
//! the wrong slope regardless of backward correctness.

use inceptoformer_core::model::{
    ablation_variant, gradcheck_model, AblationVariant, InceptoFormer, ModelConfig,
};

fn tiny_config() -> ModelConfig {
    ModelConfig {
        n_signals: 2,
        segment_len: 10,
        filters_per_stream: 4,
        reduced_dim: 8,
        classifier_widths: vec![16, 8],
        ..ModelConfig::default()
    }
}

fn fixture_batch(n: usize) -> Vec<f64> {
    (0..n).map(|i| ((i * 7 % 13) as f64 - 5.9) / 3.1).collect()
}

#[test]
fn full_tiny_model_passes_gradcheck() {
    let mut model: InceptoFormer<f64> = InceptoFormer::new(&tiny_config(), 11).unwrap();
    let report =
        gradcheck_model(&mut model, &fixture_batch(3 * 2 * 10), 3, &[0, 2, 1], 1e-5, 1e-4).unwrap();
    assert!(
        report.pass,
        "max rel {} over {} params",
        report.max_rel_error, report.n_checked
    );
}

#[test]
fn ablation_variants_pass_gradcheck() {
    for v in [AblationVariant::Model1, AblationVariant::Model2] {
        let config = ablation_variant(&tiny_config(), v);
        let mut model: InceptoFormer<f64> = InceptoFormer::new(&config, 11).unwrap();
        let report =
            gradcheck_model(&mut model, &fixture_batch(3 * 2 * 10), 3, &[0, 2, 1], 1e-5, 1e-4)
                .unwrap();
        assert!(report.pass, "{v:?}: max rel {}", report.max_rel_error);
    }
}
