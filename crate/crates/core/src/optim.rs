//! Classical momentum SGD: `v' = μ·v + g`, `θ' = θ − lr·v'`.

use crate::error::{Result, ScganError};
use crate::networks::{Group, Network, ParameterSet};
use crate::types::Mat;

/// One scalar step; returns `(param', buffer')`.
pub fn momentum_step(param: f64, grad: f64, buffer: f64, lr: f64, momentum: f64) -> (f64, f64) {
    let buffer = momentum * buffer + grad;
    (param - lr * buffer, buffer)
}

/// In-place update of one tensor and its buffer.
pub fn momentum_sgd_update(param: &mut Mat, grad: &Mat, buffer: &mut Mat, lr: f64, momentum: f64) {
    assert_eq!(param.raw_dim(), grad.raw_dim(), "gradient shape");
    assert_eq!(param.raw_dim(), buffer.raw_dim(), "buffer shape");
    ndarray::Zip::from(param).and(grad).and(buffer).for_each(|p, &g, v| {
        let (np, nv) = momentum_step(*p, g, *v, lr, momentum);
        *p = np;
        *v = nv;
    });
}

/// Applies a group gradient. A non-finite gradient aborts before anything
/// is written and names the group.
pub fn apply_group(params: &mut ParameterSet, group: Group, grad: &Network, lr: f64, momentum: f64) -> Result<()> {
    if grad.tensors().any(|t| t.iter().any(|x| !x.is_finite())) {
        return Err(ScganError::NonFinite(format!("gradient of parameter group {}", group.name())));
    }
    let (net, buf) = params.net_and_momentum_mut(group);
    for ((p, v), g) in net.tensors_mut().zip(buf.tensors_mut()).zip(grad.tensors()) {
        momentum_sgd_update(p, g, v, lr, momentum);
    }
    Ok(())
}

/// Applies every `(group, gradient)` pair, all-or-nothing on non-finite input.
pub fn apply_all(params: &mut ParameterSet, grads: &[(Group, Network)], lr: f64, momentum: f64) -> Result<()> {
    if let Some((g, _)) = grads.iter().find(|(_, n)| n.tensors().any(|t| t.iter().any(|x| !x.is_finite()))) {
        return Err(ScganError::NonFinite(format!("gradient of parameter group {}", g.name())));
    }
    for (g, grad) in grads {
        apply_group(params, *g, grad, lr, momentum)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::init_parameters;
    use crate::types::RunConfig;
    use ndarray::array;

    #[test]
    fn first_step_is_plain_sgd() {
        let (p, v) = momentum_step(2.0, 0.5, 0.0, 0.1, 0.9);
        assert_eq!(v, 0.5);
        assert!((p - 1.95).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_decays_the_buffer_geometrically() {
        let (mut p, mut v) = (0.0, 1.0);
        for k in 1..=5 {
            (p, v) = momentum_step(p, 0.0, v, 0.01, 0.9);
            assert!((v - 0.9f64.powi(k)).abs() < 1e-15);
        }
        assert!(p < 0.0);
    }

    #[test]
    fn hand_evaluated_recurrence() {
        let (p, v) = momentum_step(1.0, 0.2, 0.5, 0.1, 0.9);
        assert!((v - 0.65).abs() < 1e-15);
        assert!((p - 0.935).abs() < 1e-15);
        let mut param = array![[1.0]];
        let mut buf = array![[0.5]];
        momentum_sgd_update(&mut param, &array![[0.2]], &mut buf, 0.1, 0.9);
        assert!((param[[0, 0]] - 0.935).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_rejected_untouched() {
        let mut params = init_parameters(&RunConfig::default(), 0);
        let before = params.clone();
        let mut grad = params.net(Group::Classifier).clone();
        grad.layers[0].weight[[0, 0]] = f64::NAN;
        let err = apply_group(&mut params, Group::Classifier, &grad, 0.01, 0.9).unwrap_err();
        assert!(err.to_string().contains("group C"), "{err}");
        assert_eq!(params, before);
    }
}
