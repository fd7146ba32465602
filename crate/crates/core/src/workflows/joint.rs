use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::inference::{fit, summarize, McmcConfig, PosteriorDraws, PosteriorSummary};
use crate::model::{DistalMode, ModelSpec};

/// Posterior of the measurement and distal models sampled together.
#[derive(Debug, Clone, PartialEq)]
pub struct JointFit {
    pub draws: PosteriorDraws,
    pub summary: PosteriorSummary,
}

/// Samples one posterior over the hyperparameters, step difficulties, latent
/// traits and the free distal coefficients.
///
/// Which of `b0..b9` appear in the summary follows the distal form of
/// `spec`: without interactions `b7..b9` are absent, in the exchangeable
/// form the tied pairs are reported once as `b1=b2`, `b3=b4`, `b5=b6`.
pub fn fit_joint(spec: &ModelSpec, data: &Dataset, config: &McmcConfig) -> Result<JointFit> {
    if spec.distal != DistalMode::Joint {
        return Err(Error::invalid("fit_joint needs a model with distal = \"joint\""));
    }
    if data.distal.as_ref().is_none_or(|d| d.is_empty()) {
        return Err(Error::invalid("fit_joint needs distal outcomes"));
    }
    let draws = fit(spec, data, config)?;
    let summary = summarize(&draws)?;
    Ok(JointFit { draws, summary })
}
