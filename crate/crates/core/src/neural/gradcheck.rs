use super::model::{cross_entropy, Mode, Network};
use crate::error::Result;

/// Step for central differences.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub max_abs_grad: f64,
    pub checked: usize,
}

/// Summed cross-entropy of a training-mode pass.
pub fn batch_loss(net: &Network<f64>, input: &[f64], labels: &[u8]) -> Result<f64> {
    let trace = net.run(input, labels.len(), Mode::Train)?;
    Ok(cross_entropy(&trace.logits, labels, 4).0)
}

/// Analytic gradient of [`batch_loss`].
pub fn batch_gradient(net: &Network<f64>, input: &[f64], labels: &[u8]) -> Result<Vec<f64>> {
    let trace = net.run(input, labels.len(), Mode::Train)?;
    let (_, dlogits) = cross_entropy(&trace.logits, labels, 4);
    Ok(net.backward(&trace, &dlogits))
}

/// Compares backpropagated gradients with central finite differences on
/// every parameter. Relative error is `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn grad_check(net: &Network<f64>, input: &[f64], labels: &[u8]) -> Result<GradCheck> {
    let analytic = batch_gradient(net, input, labels)?;
    let mut probe = net.clone();
    let mut max_rel_err: f64 = 0.0;
    for i in 0..probe.params.len() {
        let orig = probe.params[i];
        probe.params[i] = orig + FD_STEP;
        let up = batch_loss(&probe, input, labels)?;
        probe.params[i] = orig - FD_STEP;
        let down = batch_loss(&probe, input, labels)?;
        probe.params[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        max_rel_err = max_rel_err.max(rel);
    }
    Ok(GradCheck {
        max_rel_err,
        max_abs_grad: analytic.iter().fold(0.0, |m, v| m.max(v.abs())),
        checked: analytic.len(),
    })
}
