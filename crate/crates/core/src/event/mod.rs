//! Base event extraction model.

pub mod crf;
mod graph;
mod model;
mod schema;

pub use crf::{crf_negative_log_likelihood, log_partition, sequence_score, viterbi};
pub use graph::{
    global_loss, global_score, EventGraphPrediction, FeatureTemplate, GlobalFeatureConfig,
    PredictedArgument, PredictedTrigger,
};
pub use model::{
    BatchLoss, EventModel, ExtractorConfig, LossComponents, SentenceLoss, SentenceTarget,
    ENCODER_PREFIX,
};
pub use schema::{BioTagset, LabelSchema, NULL_ROLE};

/// Arithmetic mean of `reps[span]`.
pub fn span_representation(
    reps: &crate::tensor::Tensor,
    span: crate::amr::TokenSpan,
) -> crate::Result<Vec<f64>> {
    span.check(reps.rows)?;
    let mut out = vec![0.0; reps.cols];
    for r in span.start..span.end {
        for (o, x) in out.iter_mut().zip(reps.row(r)) {
            *o += x;
        }
    }
    let k = span.len() as f64;
    out.iter_mut().for_each(|x| *x /= k);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amr::TokenSpan;
    use crate::tensor::Tensor;
    use crate::Error;

    #[test]
    fn span_mean_examples() {
        let reps = Tensor::from_vec(3, 2, vec![0., 2., 2., 0., 2., 0.]);
        assert_eq!(span_representation(&reps, TokenSpan::new(0, 1)).unwrap(), vec![0., 2.]);
        assert_eq!(span_representation(&reps, TokenSpan::new(1, 3)).unwrap(), vec![2., 0.]);
        assert_eq!(span_representation(&reps, TokenSpan::new(0, 2)).unwrap(), vec![1., 1.]);
        assert!(matches!(
            span_representation(&reps, TokenSpan::new(1, 1)),
            Err(Error::EmptySpan)
        ));
        assert!(matches!(
            span_representation(&reps, TokenSpan::new(2, 4)),
            Err(Error::OutOfBounds { .. })
        ));
    }
}
