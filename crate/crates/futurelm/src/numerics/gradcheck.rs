//! Finite-difference gradient checking.

use crate::error::{Error, Result};
use crate::numerics::params::ParamSet;
use crate::numerics::tape::{NodeId, Tape};

/// Compare reverse-mode gradients against central finite differences.
///
/// `build_loss` must rebuild the full forward graph from scratch for the
/// given parameters and return the scalar loss node. It must be
/// deterministic (dropout disabled or its mask frozen); two forward
/// passes that disagree are reported as a check error.
///
/// Returns the max over all scalar parameters of
/// `|analytic - cd| / max(|analytic|, |cd|, 1e-6)`; the floor keeps
/// components below finite-difference measurement noise from dominating.
pub fn grad_check<F>(params: &ParamSet, eps: f64, build_loss: F) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamSet) -> Result<NodeId>,
{
    let loss_of = |ps: &ParamSet| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = build_loss(&mut tape, ps)?;
        Ok(tape.value(loss).scalar_value())
    };

    let l0 = loss_of(params)?;
    let l1 = loss_of(params)?;
    if l0.to_bits() != l1.to_bits() {
        return Err(Error::Contract(format!(
            "non-deterministic loss closure: {l0} vs {l1}"
        )));
    }

    // analytic gradients
    let mut tape = Tape::new();
    let loss = build_loss(&mut tape, params)?;
    let grads = tape.backward(loss)?;
    // the closure leafs parameters in ParamSet order starting at node 0
    let analytic: Vec<Vec<f64>> = (0..params.len())
        .map(|i| {
            let (_, t) = params.at(i);
            grads.wrt(NodeId(i), t).data().to_vec()
        })
        .collect();

    let mut max_rel = 0.0f64;
    let mut perturbed = params.clone();
    for i in 0..params.len() {
        for j in 0..params.at(i).1.len() {
            let orig = perturbed.at(i).1.data()[j];
            perturbed.tensor_mut(i).data_mut()[j] = orig + eps;
            let lp = loss_of(&perturbed)?;
            perturbed.tensor_mut(i).data_mut()[j] = orig - eps;
            let lm = loss_of(&perturbed)?;
            perturbed.tensor_mut(i).data_mut()[j] = orig;
            let cd = (lp - lm) / (2.0 * eps);
            let a = analytic[i][j];
            let rel = (a - cd).abs() / a.abs().max(cd.abs()).max(1e-6);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}
