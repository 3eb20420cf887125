use super::metrics::{binarize, dice};
use super::report::{EvalReport, SampleScore};
use crate::data::{Batch, LoadedSample};
use crate::error::{Error, Result};
use crate::model::MbaNet;
use crate::nn::ParamStore;
use crate::tensor::{Graph, Tensor};

/// Samples per forward pass during evaluation.
pub const EVAL_BATCH: usize = 4;

/// Sigmoid probability maps `[x_c, x_c]` for `[x_c, x_c]` images.
pub fn predict(model: &MbaNet, store: &ParamStore<f32>, images: &[Tensor<f32>]) -> Result<Vec<Tensor<f32>>> {
    let c = model.config.x_c;
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(EVAL_BATCH) {
        let masks = vec![Tensor::zeros([c, c]); chunk.len()];
        let batch = Batch::new(chunk, &masks, model.config.x_s);
        let graph = Graph::inference();
        let p = store.bind(&graph);
        let probs = model.forward(&p, graph.constant(batch.high), graph.constant(batch.low))?.sigmoid().value();
        if !probs.all_finite() {
            return Err(Error::Numeric("model produced non-finite logits".into()));
        }
        out.extend(probs.data().chunks_exact(c * c).map(|d| Tensor::new([c, c], d.to_vec()).expect("prediction shape")));
    }
    Ok(out)
}

/// Score binary predictions against the samples' masks.
pub fn score(samples: &[LoadedSample], predictions: &[Tensor<f32>]) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Data("no samples to evaluate".into()));
    }
    if samples.len() != predictions.len() {
        return Err(Error::Data(format!("{} predictions for {} samples", predictions.len(), samples.len())));
    }
    let scores = samples
        .iter()
        .zip(predictions)
        .map(|(s, p)| {
            Ok(SampleScore { id: s.id.clone(), class: s.class, domain: s.domain, dice: dice(p, &s.mask)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_scores(scores))
}

/// Predict, binarise and score.
pub fn evaluate(model: &MbaNet, store: &ParamStore<f32>, samples: &[LoadedSample]) -> Result<EvalReport> {
    let images: Vec<_> = samples.iter().map(|s| s.image.clone()).collect();
    let preds: Vec<_> = predict(model, store, &images)?.iter().map(binarize).collect();
    score(samples, &preds)
}
