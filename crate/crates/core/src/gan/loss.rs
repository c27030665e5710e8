use serde::{Deserialize, Serialize};
use thermsynth_autograd::{Graph, Tensor, Var};

use crate::perceptual::FeatureExtractor;
use crate::{Error, Result};

pub const REAL_LABEL: f64 = 1.0;
pub const FAKE_LABEL: f64 = 0.0;

/// The generator objective split into its three summed parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanLossTerms {
    pub adversarial: f64,
    pub mae: f64,
    pub perceptual: f64,
    pub total: f64,
}

impl GanLossTerms {
    /// Name of the first non-finite term, if any.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        [
            ("adversarial", self.adversarial),
            ("mae", self.mae),
            ("perceptual", self.perceptual),
            ("total", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

/// Graph handles of every generator loss term.
pub struct GeneratorLoss<'g> {
    pub adversarial: Var<'g>,
    pub mae: Var<'g>,
    pub perceptual: Var<'g>,
    pub total: Var<'g>,
}

impl GeneratorLoss<'_> {
    pub fn terms(&self) -> GanLossTerms {
        GanLossTerms {
            adversarial: self.adversarial.value().item(),
            mae: self.mae.value().item(),
            perceptual: self.perceptual.value().item(),
            total: self.total.value().item(),
        }
    }
}

/// `½ · mean((score − label)²)`, per map, averaged over maps.
fn least_squares<'g>(scores: &[Var<'g>], label: f64) -> Result<Var<'g>> {
    let (first, rest) = scores
        .split_first()
        .ok_or_else(|| Error::Shape("no score maps".into()))?;
    let mut acc = first.add_scalar(-label).square().mean();
    for s in rest {
        acc = acc.add(s.add_scalar(-label).square().mean())?;
    }
    Ok(acc.scale(0.5 / scores.len() as f64))
}

/// Least-squares discriminator objective.
pub fn discriminator_loss<'g>(
    real_scores: &[Var<'g>],
    fake_scores: &[Var<'g>],
    real_label: f64,
    fake_label: f64,
) -> Result<Var<'g>> {
    if real_scores.len() != fake_scores.len() {
        return Err(Error::Shape(format!(
            "{} real score maps vs {} fake score maps",
            real_scores.len(),
            fake_scores.len()
        )));
    }
    for (r, f) in real_scores.iter().zip(fake_scores) {
        if r.shape() != f.shape() {
            return Err(Error::Shape(format!(
                "score map shapes differ: {:?} vs {:?}",
                r.shape(),
                f.shape()
            )));
        }
    }
    Ok(least_squares(real_scores, real_label)?.add(least_squares(fake_scores, fake_label)?)?)
}

/// Adversarial + L1 + perceptual generator objective, summed without weights.
/// With `phi = None` the perceptual term is a constant zero.
pub fn generator_loss<'g>(
    fake_scores: &[Var<'g>],
    real_thermal: Var<'g>,
    fake_thermal: Var<'g>,
    phi: Option<&FeatureExtractor>,
    target_label: f64,
) -> Result<GeneratorLoss<'g>> {
    if real_thermal.shape() != fake_thermal.shape() {
        return Err(Error::Shape(format!(
            "real thermal {:?} and fake thermal {:?} differ",
            real_thermal.shape(),
            fake_thermal.shape()
        )));
    }
    let graph: &'g Graph = real_thermal.graph();
    let adversarial = least_squares(fake_scores, target_label)?;
    let mae = real_thermal.sub(fake_thermal)?.abs().mean();
    let perceptual = match phi {
        Some(phi) => phi.perceptual_loss(real_thermal, fake_thermal)?,
        None => graph.constant(Tensor::scalar(0.0)),
    };
    let total = adversarial.add(mae)?.add(perceptual)?;
    let loss = GeneratorLoss {
        adversarial,
        mae,
        perceptual,
        total,
    };
    if let Some(term) = loss.terms().non_finite_term() {
        return Err(Error::Numeric(format!("generator loss term `{term}` is not finite")));
    }
    Ok(loss)
}
