//! The standard gradient-check suite: every layer type plus the end-to-end
//! tiny model, against the central finite-difference oracle.
//!
//! Fixture values keep pre-activations away from the SeLU kink (the
//! activation is not C1 at zero, where central differences measure a blend
//! of both slopes regardless of backward correctness).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{
    ablation_variant, gradcheck_model, AblationVariant, InceptoFormer, ModelConfig,
};
use crate::nn::{
    describe_worst, gradcheck_module, BatchNorm1D, Conv1D, Dense, FeedForward, InceptionBlock1D,
    LayerNorm, MultiHeadAttention, Params, TransformerEncoderBlock,
};
use crate::tensor::gradcheck::{gradcheck, GradCheckReport};

pub struct CheckOutcome {
    pub name: String,
    pub report: GradCheckReport,
    pub worst: String,
}

fn fixture(n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|i| ((i * 7 % 13) as f64 - 5.9) / scale).collect()
}

fn module_check<F>(name: &str, params: &mut Params<f64>, build: F, eps: f64, tol: f64) -> Result<CheckOutcome>
where
    F: FnMut(&mut crate::nn::Forward<f64>) -> Result<crate::tensor::Tensor<f64>>,
{
    let report = gradcheck_module(params, build, eps, tol)?;
    let worst = describe_worst(params, &report);
    Ok(CheckOutcome { name: name.to_string(), report, worst })
}

/// Run every layer-level check plus the full tiny model; one outcome each.
pub fn run_standard_suite(eps: f64, tol: f64) -> Result<Vec<CheckOutcome>> {
    let mut outcomes = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1234);

    // selu: no parameters of its own, so check d loss / d input directly
    {
        let mut theta = vec![fixture(12, 3.1)];
        let report = gradcheck(
            &mut theta,
            |tape, th| {
                let x = tape.leaf(th[0].clone(), &[12], true)?;
                let w = tape.constant((0..12).map(|i| 0.2 + (i % 4) as f64 * 0.15).collect(), &[12])?;
                Ok((x.selu()?.mul(&w)?.sum()?, vec![x]))
            },
            eps,
            tol,
        )?;
        outcomes.push(CheckOutcome {
            name: "selu".to_string(),
            report: report.clone(),
            worst: report
                .worst
                .as_ref()
                .map(|w| format!("input[{}]: analytic {:.6e} vs numeric {:.6e}", w.index, w.analytic, w.numeric))
                .unwrap_or_default(),
        });
    }

    // softmax + cross-entropy chain, input gradient
    {
        let mut theta = vec![fixture(8, 3.1)];
        let report = gradcheck(
            &mut theta,
            |tape, th| {
                let x = tape.leaf(th[0].clone(), &[2, 4], true)?;
                Ok((x.cross_entropy(&[0, 3])?, vec![x]))
            },
            eps,
            tol,
        )?;
        outcomes.push(CheckOutcome {
            name: "softmax_cross_entropy".to_string(),
            report,
            worst: String::new(),
        });
    }

    for k in [1usize, 3, 5] {
        let mut params: Params<f64> = Params::new();
        let layer = Conv1D::new(&mut params, &mut rng, "conv", 2, 2, k)?;
        outcomes.push(module_check(
            &format!("conv1d_k{k}"),
            &mut params,
            |fwd| {
                let x = fwd.tape.constant(fixture(2 * 2 * 6, 3.1), &[2, 2, 6])?;
                let y = layer.forward(fwd, &x)?.selu()?;
                y.reshape(&[2, 12])?
                    .matmul(&fwd.tape.constant((0..24).map(|i| 0.1 + (i % 5) as f64 * 0.1).collect(), &[12, 2])?)?
                    .cross_entropy(&[1, 0])
            },
            eps,
            tol,
        )?);
    }

    {
        let mut params: Params<f64> = Params::new();
        let layer = Dense::new(&mut params, &mut rng, "dense", 4, 3);
        outcomes.push(module_check(
            "dense",
            &mut params,
            |fwd| {
                let x = fwd.tape.constant(fixture(2 * 4, 3.1), &[2, 4])?;
                layer.forward(fwd, &x)?.cross_entropy(&[0, 2])
            },
            eps,
            tol,
        )?);
    }

    {
        let mut params: Params<f64> = Params::new();
        let bn = BatchNorm1D::new(&mut params, "bn", 2);
        outcomes.push(module_check(
            "batchnorm_deterministic",
            &mut params,
            |fwd| {
                let x = fwd.tape.constant(fixture(3 * 2 * 2, 3.1), &[3, 2, 2])?;
                bn.forward(fwd, &x)?.reshape(&[3, 4])?.cross_entropy(&[0, 3, 1])
            },
            eps,
            tol,
        )?);
    }

    {
        let mut params: Params<f64> = Params::new();
        let ln = LayerNorm::new(&mut params, "ln", 4);
        outcomes.push(module_check(
            "layer_norm",
            &mut params,
            |fwd| {
                let x = fwd.tape.constant(fixture(2 * 4, 3.1), &[2, 4])?;
                ln.forward(fwd, &x)?.cross_entropy(&[2, 0])
            },
            eps,
            tol,
        )?);
    }

    {
        let mut params: Params<f64> = Params::new();
        let mha = MultiHeadAttention::new(&mut params, &mut rng, "attn", 4, 2)?;
        outcomes.push(module_check(
            "attention_two_heads",
            &mut params,
            |fwd| {
                let x = fwd.tape.constant(fixture(3 * 4, 3.1), &[3, 4])?;
                mha.forward(fwd, &x)?.reshape(&[3, 4])?.cross_entropy(&[0, 2, 1])
            },
            eps,
            tol,
        )?);
    }

    {
        let mut params: Params<f64> = Params::new();
        let ffn = FeedForward::new(&mut params, &mut rng, "ffn", 4, 16);
        outcomes.push(module_check(
            "feed_forward",
            &mut params,
            |fwd| {
                let x = fwd.tape.constant(fixture(3 * 4, 3.1), &[3, 4])?;
                ffn.forward(fwd, &x)?.cross_entropy(&[0, 2, 3])
            },
            eps,
            tol,
        )?);
    }

    {
        let mut params: Params<f64> = Params::new();
        let block = TransformerEncoderBlock::new(&mut params, &mut rng, "block", 8, 2, 0.2)?;
        outcomes.push(module_check(
            "transformer_block",
            &mut params,
            |fwd| {
                let x = fwd.tape.constant(fixture(4 * 8, 3.1), &[4, 8])?;
                block.forward(fwd, &x)?.reshape(&[4, 8])?.cross_entropy(&[0, 3, 5, 1])
            },
            eps,
            tol,
        )?);
    }

    {
        let mut params: Params<f64> = Params::new();
        let block = InceptionBlock1D::new(&mut params, &mut rng, "inception", 1, 2, &[1, 3, 5])?;
        outcomes.push(module_check(
            "inception_block",
            &mut params,
            |fwd| {
                let x = fwd.tape.constant(fixture(2 * 4, 3.1), &[2, 1, 4])?;
                let y = block.forward(fwd, &x)?;
                y.reshape(&[2, 24])?
                    .matmul(&fwd.tape.constant((0..48).map(|i| (i % 5) as f64 / 5.0 - 0.4).collect(), &[24, 2])?)?
                    .cross_entropy(&[0, 1])
            },
            eps,
            tol,
        )?);
    }

    let tiny = ModelConfig {
        n_signals: 2,
        segment_len: 10,
        filters_per_stream: 4,
        reduced_dim: 8,
        classifier_widths: vec![16, 8],
        ..ModelConfig::default()
    };
    for (name, variant) in [
        ("full_tiny_model", AblationVariant::Model3),
        ("tiny_model1_inception_only", AblationVariant::Model1),
        ("tiny_model2_transformers_only", AblationVariant::Model2),
    ] {
        let config = ablation_variant(&tiny, variant);
        let mut model: InceptoFormer<f64> = InceptoFormer::new(&config, 11)?;
        let report = gradcheck_model(&mut model, &fixture(3 * 2 * 10, 3.1), 3, &[0, 2, 1], eps, tol)?;
        let worst = describe_worst(model.params(), &report);
        outcomes.push(CheckOutcome { name: name.to_string(), report, worst });
    }

    Ok(outcomes)
}
