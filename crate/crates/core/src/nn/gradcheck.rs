//! Central finite-difference verification of analytic gradients.

use crate::dropout::DropoutMask;
use crate::error::{Error, Result};
use crate::nn::network::{DropoutPass, Network};
use crate::nn::ops::softmax_cross_entropy;
use crate::tensor::Tensor;

/// Denominator floor of the relative error, so parameters whose true
/// gradient is (numerically) zero are compared in absolute terms.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// How many times the step is divided by 10 when a perturbation flips a
/// ReLU sign or a max-pool winner.
pub const KINK_RETRIES: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(parameter index, element index)` of the worst element.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    /// Elements whose difference quotient needed a smaller step.
    pub shrunk: usize,
    /// Elements where every step tried still crossed a kink.
    pub kinked: usize,
}

/// `|a - n| / max(|a|, |n|, REL_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares backward against central differences for every parameter
/// element. Dropout masks are frozen to `masks` (one per dropout layer);
/// pass an empty slice for a network without dropout layers.
///
/// The loss is only piecewise smooth. When `±eps` changes which ReLU units
/// are active or which max-pool input wins, the step is shrunk tenfold (up to
/// [`KINK_RETRIES`] times) so the quotient stays on one smooth piece.
pub fn check_gradients(
    net: &mut Network,
    x: &Tensor,
    labels: &[usize],
    masks: &[DropoutMask],
    eps: f64,
) -> Result<GradCheckReport> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Input(format!("finite-difference step {eps} outside [1e-7, 1e-3]")));
    }
    let (_, _, analytic) = net.loss_and_gradients(x, labels, DropoutPass::Frozen(masks))?;

    // Layers before the perturbed one see unchanged inputs, so each
    // perturbed loss only reruns the network from the owning layer.
    let acts = net.frozen_activations(x, masks)?;
    let owners = net.param_layers();
    let loss_at = |net: &Network, layer: usize| -> Result<(f64, u64)> {
        let (logits, pattern) = net.frozen_tail(layer, acts[layer].clone(), masks)?;
        Ok((softmax_cross_entropy(&logits, labels)?.0, pattern))
    };
    let mut base_patterns = vec![None; acts.len()];

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
        shrunk: 0,
        kinked: 0,
    };
    for (p, grad) in analytic.iter().enumerate() {
        let layer = owners[p];
        let base = match base_patterns[layer] {
            Some(b) => b,
            None => *base_patterns[layer].insert(loss_at(net, layer)?.1),
        };
        for e in 0..grad.len() {
            let original = net.params()[p].data()[e];
            let mut step = eps;
            let mut numeric = 0.0;
            for attempt in 0..=KINK_RETRIES {
                net.params_mut()[p].data_mut()[e] = original + step;
                let (plus, pat_plus) = loss_at(net, layer)?;
                net.params_mut()[p].data_mut()[e] = original - step;
                let (minus, pat_minus) = loss_at(net, layer)?;
                net.params_mut()[p].data_mut()[e] = original;
                numeric = (plus - minus) / (2.0 * step);
                if pat_plus == base && pat_minus == base {
                    if attempt > 0 {
                        report.shrunk += 1;
                    }
                    break;
                }
                if attempt == KINK_RETRIES {
                    report.kinked += 1;
                }
                step /= 10.0;
            }

            let a = grad.data()[e];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.checked == 1 {
                report.max_rel_error = err;
                report.worst = (p, e);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
