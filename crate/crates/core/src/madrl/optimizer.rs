//! Parameter update rules.

use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, MlpNetwork};
use super::MadrlError;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind<T> {
    Sgd,
    Adam { beta1: T, beta2: T, epsilon: T },
}

impl<T: Scalar> OptimizerKind<T> {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
        }
    }
}

/// Optimizer with its per-parameter moments (empty for SGD).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer<T> {
    pub kind: OptimizerKind<T>,
    pub learning_rate: T,
    pub steps: u64,
    pub first_moment: Vec<Vec<T>>,
    pub second_moment: Vec<Vec<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind<T>, learning_rate: T, net: &MlpNetwork<T>) -> Self {
        let moments = || match kind {
            OptimizerKind::Sgd => Vec::new(),
            OptimizerKind::Adam { .. } => net
                .parameter_shapes()
                .into_iter()
                .map(|n| vec![T::zero(); n])
                .collect(),
        };
        Optimizer {
            kind,
            learning_rate,
            steps: 0,
            first_moment: moments(),
            second_moment: moments(),
        }
    }

    pub fn apply(&mut self, net: &mut MlpNetwork<T>, grads: &Gradients<T>) -> Result<(), MadrlError> {
        if !grads.is_finite() {
            return Err(MadrlError::NonFinite("gradient"));
        }
        self.steps += 1;
        let lr = self.learning_rate;
        let flat = grads.layers.iter().flat_map(|(w, b)| [w, b]);
        match self.kind {
            OptimizerKind::Sgd => {
                for (param, g) in net.parameters_mut().zip(flat) {
                    for (p, &gi) in param.iter_mut().zip(g) {
                        *p -= lr * gi;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                let t = self.steps as i32;
                let c1 = T::one() - beta1.powi(t);
                let c2 = T::one() - beta2.powi(t);
                let blocks = net
                    .parameters_mut()
                    .zip(flat)
                    .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()));
                for ((param, g), (m, v)) in blocks {
                    for (((p, &gi), mi), vi) in param.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *mi = beta1 * *mi + (T::one() - beta1) * gi;
                        *vi = beta2 * *vi + (T::one() - beta2) * gi * gi;
                        let m_hat = *mi / c1;
                        let v_hat = *vi / c2;
                        *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
                    }
                }
            }
        }
        if net.is_finite() {
            Ok(())
        } else {
            Err(MadrlError::NonFinite("parameters"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::madrl::mlp::{Activation, Sample};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fits_single_transition(kind: OptimizerKind<f64>, lr: f64, steps: usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut net = MlpNetwork::<f64>::new(&[4, 16, 8, 3], Activation::Linear, &mut rng).unwrap();
        let mut opt = Optimizer::new(kind, lr, &net);
        let x = [0.5, -0.3, 0.1, 0.8];
        let batch = [Sample { input: &x, action: 2, target: 1.7 }];
        for _ in 0..steps {
            let (_, g) = net.gradients(&batch).unwrap();
            opt.apply(&mut net, &g).unwrap();
        }
        assert!((net.forward(&x).unwrap()[2] - 1.7).abs() < 1e-3);
    }

    #[test]
    fn sgd_converges_to_target() {
        fits_single_transition(OptimizerKind::Sgd, 0.05, 2000);
    }

    #[test]
    fn adam_converges_to_target() {
        fits_single_transition(OptimizerKind::adam(), 0.01, 2000);
    }

    #[test]
    fn small_step_lowers_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut net = MlpNetwork::<f64>::new(&[3, 6, 4], Activation::Linear, &mut rng).unwrap();
        let xs = [[0.1, 0.2, 0.3], [-0.5, 0.4, 0.0], [0.9, -0.9, 0.2]];
        let batch: Vec<_> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| Sample { input: x, action: i, target: i as f64 - 1.0 })
            .collect();
        let before = net.loss(&batch).unwrap();
        let (_, g) = net.gradients(&batch).unwrap();
        Optimizer::new(OptimizerKind::Sgd, 1e-3, &net).apply(&mut net, &g).unwrap();
        assert!(net.loss(&batch).unwrap() < before);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut net = MlpNetwork::<f64>::new(&[3, 5, 2], Activation::Linear, &mut rng).unwrap();
        let x = [0.3, 0.3, -0.1];
        let q = net.forward(&x).unwrap();
        let (_, g) = net.gradients(&[Sample { input: &x, action: 0, target: q[0] }]).unwrap();
        let before = net.clone();
        Optimizer::new(OptimizerKind::Sgd, 0.1, &net).apply(&mut net, &g).unwrap();
        assert_eq!(net, before);
    }
}
