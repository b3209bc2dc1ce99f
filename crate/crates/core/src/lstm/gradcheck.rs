use super::{loss, loss_and_gradient, LstmParams};
use crate::alignment::TensorBatch;
use crate::error::Result;

/// Largest relative discrepancy between the BPTT gradient and central
/// finite differences, `|g_a − g_fd| / max(1e-8, |g_a| + |g_fd|)`.
///
/// Inputs are used as given (no standardization).
pub fn gradient_check(params: &LstmParams, batch: &TensorBatch, epsilon: f64) -> Result<f64> {
    let (_, analytic) = loss_and_gradient(params, batch)?;
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let orig = probe.data[i];
        probe.data[i] = orig + epsilon;
        let up = loss(&probe, batch)?;
        probe.data[i] = orig - epsilon;
        let down = loss(&probe, batch)?;
        probe.data[i] = orig;
        let fd = (up - down) / (2.0 * epsilon);
        let ga = analytic[i];
        let rel = (ga - fd).abs() / (ga.abs() + fd.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
