use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::layers::{Layer, LayerSpec, Mode};
use crate::optim::Adam;
use crate::tensor::Tensor;
use crate::NnError;

/// A chain of layers applied in order.
#[derive(Debug, Clone)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn build(specs: &[LayerSpec], rng: &mut ChaCha8Rng) -> Self {
        Self {
            layers: specs.iter().map(|s| Layer::build(s, rng)).collect(),
        }
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        let mut cur = x.clone();
        for layer in &mut self.layers {
            cur = layer.forward(&cur, mode)?;
        }
        Ok(cur)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        let mut cur = dy.clone();
        for layer in self.layers.iter_mut().rev() {
            cur = layer.backward(&cur)?;
        }
        Ok(cur)
    }

    pub fn params_mut(&mut self) -> Vec<(&mut Tensor, &Tensor)> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }
}

/// A shared trunk optionally followed by several independent heads.
///
/// With no heads the network has a single output, the trunk's. With heads,
/// every head consumes the trunk output and contributes one output; their
/// gradients are summed into the trunk during the backward pass.
#[derive(Debug, Clone)]
pub struct Network {
    pub trunk: Sequential,
    pub heads: Vec<Sequential>,
}

impl Network {
    pub fn sequential(specs: &[LayerSpec], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            trunk: Sequential::build(specs, &mut rng),
            heads: Vec::new(),
        }
    }

    pub fn forked(trunk: &[LayerSpec], heads: &[Vec<LayerSpec>], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trunk = Sequential::build(trunk, &mut rng);
        let heads = heads
            .iter()
            .map(|h| Sequential::build(h, &mut rng))
            .collect();
        Self { trunk, heads }
    }

    pub fn num_outputs(&self) -> usize {
        self.heads.len().max(1)
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Vec<Tensor>, NnError> {
        let shared = self.trunk.forward(x, mode)?;
        if self.heads.is_empty() {
            return Ok(vec![shared]);
        }
        self.heads
            .iter_mut()
            .map(|h| h.forward(&shared, mode))
            .collect()
    }

    /// Inference-mode forward pass.
    pub fn predict(&mut self, x: &Tensor) -> Result<Vec<Tensor>, NnError> {
        self.forward(x, Mode::Infer)
    }

    /// Backpropagate one upstream gradient per output; returns the gradient
    /// with respect to the network input.
    pub fn backward(&mut self, grads: &[Tensor]) -> Result<Tensor, NnError> {
        if grads.len() != self.num_outputs() {
            return Err(NnError::Shape(format!(
                "{} output gradients for {} outputs",
                grads.len(),
                self.num_outputs()
            )));
        }
        if self.heads.is_empty() {
            return self.trunk.backward(&grads[0]);
        }
        let mut total: Option<Tensor> = None;
        for (head, g) in self.heads.iter_mut().zip(grads) {
            let d = head.backward(g)?;
            match &mut total {
                None => total = Some(d),
                Some(t) => t
                    .data_mut()
                    .iter_mut()
                    .zip(d.data())
                    .for_each(|(a, b)| *a += b),
            }
        }
        self.trunk.backward(&total.expect("at least one head"))
    }

    pub fn params_mut(&mut self) -> Vec<(&mut Tensor, &Tensor)> {
        let mut out = self.trunk.params_mut();
        for h in &mut self.heads {
            out.extend(h.params_mut());
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.trunk.param_count()
            + self
                .heads
                .iter()
                .map(Sequential::param_count)
                .sum::<usize>()
    }

    /// Evaluate the summed MSE of all outputs in inference mode.
    pub fn eval_loss(&mut self, x: &Tensor, targets: &[Tensor]) -> Result<f64, NnError> {
        let preds = self.predict(x)?;
        let mut total = 0.0;
        for (p, t) in preds.iter().zip(targets) {
            total += mse(p, t)?.0;
        }
        Ok(total)
    }

    /// One optimizer step on a mini-batch. The loss is the sum over outputs of
    /// each output's mean squared error. Returns the pre-step loss.
    pub fn train_step(
        &mut self,
        opt: &mut Adam,
        x: &Tensor,
        targets: &[Tensor],
    ) -> Result<f64, NnError> {
        let preds = self.forward(x, Mode::Train)?;
        if preds.len() != targets.len() {
            return Err(NnError::Shape(format!(
                "{} targets for {} outputs",
                targets.len(),
                preds.len()
            )));
        }
        let mut loss = 0.0;
        let mut grads = Vec::with_capacity(preds.len());
        for (p, t) in preds.iter().zip(targets) {
            let (l, g) = mse(p, t)?;
            loss += l;
            grads.push(g);
        }
        if !loss.is_finite() {
            return Err(NnError::NonFinite("training loss"));
        }
        self.backward(&grads)?;
        let params = self.params_mut();
        if !params.iter().all(|(_, g)| g.all_finite()) {
            return Err(NnError::NonFinite("parameter gradient"));
        }
        opt.step(params);
        Ok(loss)
    }
}

/// Mean squared error over all elements and its gradient.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor), NnError> {
    if pred.len() != target.len() {
        return Err(NnError::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.len() as f64;
    let mut grad = Tensor::zeros(pred.shape());
    let mut loss = 0.0;
    for ((g, p), t) in grad
        .data_mut()
        .iter_mut()
        .zip(pred.data())
        .zip(target.data())
    {
        let d = p - t;
        loss += d * d;
        *g = 2.0 * d / n;
    }
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::AdamConfig;

    #[test]
    fn mse_value_and_gradient() {
        let p = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let t = Tensor::new(vec![2, 2], vec![1.0, 0.0, 3.0, 5.0]).unwrap();
        let (l, g) = mse(&p, &t).unwrap();
        assert_eq!(l, 5.0 / 4.0);
        assert_eq!(g.data(), &[0.0, 1.0, 0.0, -0.5]);
    }

    #[test]
    fn perfect_fit_is_a_fixed_point() {
        let specs = [
            LayerSpec::Dense {
                inputs: 3,
                outputs: 4,
            },
            LayerSpec::Relu,
            LayerSpec::Dense {
                inputs: 4,
                outputs: 2,
            },
        ];
        let mut net = Network::sequential(&specs, 3);
        let x = Tensor::new(vec![2, 3], vec![0.1, -0.2, 0.3, 0.5, 0.4, -0.6]).unwrap();
        let target = net.predict(&x).unwrap();
        let before = net.clone();
        let mut opt = Adam::new(AdamConfig::default());
        let loss = net.train_step(&mut opt, &x, &target).unwrap();
        assert_eq!(loss, 0.0);
        for (a, b) in net.trunk.layers.iter().zip(&before.trunk.layers) {
            for ((_, ta), (_, tb)) in a.state().iter().zip(b.state()) {
                assert_eq!(ta.data(), tb.data());
            }
        }
    }

    #[test]
    fn forked_outputs_and_gradient_sum() {
        let trunk = [LayerSpec::Dense {
            inputs: 2,
            outputs: 3,
        }];
        let head = vec![LayerSpec::Dense {
            inputs: 3,
            outputs: 1,
        }];
        let mut net = Network::forked(&trunk, &[head.clone(), head], 9);
        let x = Tensor::new(vec![1, 2], vec![0.3, -0.7]).unwrap();
        let outs = net.forward(&x, Mode::Train).unwrap();
        assert_eq!(outs.len(), 2);
        let ones = Tensor::filled(&[1, 1], 1.0);
        let dx = net.backward(&[ones.clone(), ones]).unwrap();
        // d(out0 + out1)/dx = W_t (w_h0 + w_h1)
        let wt = net.trunk.layers[0].state()[0].1.data().to_vec();
        let w0 = net.heads[0].layers[0].state()[0].1.data().to_vec();
        let w1 = net.heads[1].layers[0].state()[0].1.data().to_vec();
        for i in 0..2 {
            let want: f64 = (0..3).map(|j| wt[i * 3 + j] * (w0[j] + w1[j])).sum();
            assert!((dx.data()[i] - want).abs() < 1e-14);
        }
        assert!(net.backward(&[Tensor::filled(&[1, 1], 1.0)]).is_err());
    }
}
