use std::ops::Range;

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::nn::{dense_forward, Activation, DenseLayer, LayerGrads};
use crate::scalar::Scalar;

/// A stack of dense layers applied in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<DenseLayer<T>>,
}

/// Activations recorded by [`Mlp::forward_batch`], needed for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    pub input: Array2<T>,
    pub outputs: Vec<Array2<T>>,
}

impl<T> ForwardCache<T> {
    pub fn output(&self) -> &Array2<T> {
        self.outputs.last().unwrap_or(&self.input)
    }
}

impl<T: Scalar> Mlp<T> {
    pub fn from_layers(layers: Vec<DenseLayer<T>>) -> Result<Self> {
        for pair in layers.windows(2) {
            check_len(pair[0].outputs(), pair[1].inputs())?;
        }
        Ok(Self { layers })
    }

    /// Glorot-initialised stack. `sizes` has one more entry than `activations`.
    pub fn glorot<R: Rng + ?Sized>(sizes: &[usize], activations: &[Activation], rng: &mut R) -> Result<Self> {
        if sizes.len() != activations.len() + 1 {
            return Err(Error::Invalid(format!(
                "{} sizes need {} activations, got {}",
                sizes.len(),
                sizes.len().saturating_sub(1),
                activations.len()
            )));
        }
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &a)| DenseLayer::glorot(w[0], w[1], a, rng))
            .collect();
        Ok(Self { layers })
    }

    /// Input width followed by each layer's output width.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.layers.len() + 1);
        if let Some(first) = self.layers.first() {
            dims.push(first.inputs());
        }
        dims.extend(self.layers.iter().map(DenseLayer::outputs));
        dims
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, DenseLayer::inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::outputs)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(DenseLayer::is_finite)
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        self.forward_range(x, 0..self.layers.len())
    }

    /// Apply only the layers in `range` to a single vector.
    pub fn forward_range(&self, x: &[T], range: Range<usize>) -> Result<Vec<T>> {
        let mut h = x.to_vec();
        for layer in &self.layers[range] {
            h = dense_forward(layer, &h)?;
        }
        Ok(h)
    }

    /// Apply the layers in `range` to every row of `x`.
    pub fn forward_range_batch(&self, x: ArrayView2<'_, T>, range: Range<usize>) -> Result<Array2<T>> {
        let mut h = x.to_owned();
        for layer in &self.layers[range] {
            h = layer.forward_batch(h.view())?;
        }
        Ok(h)
    }

    pub fn forward_batch(&self, x: ArrayView2<'_, T>) -> Result<ForwardCache<T>> {
        let input = x.as_standard_layout().into_owned();
        let mut outputs: Vec<Array2<T>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let h = layer.forward_batch(outputs.last().unwrap_or(&input).view())?;
            outputs.push(h);
        }
        Ok(ForwardCache { input, outputs })
    }

    /// Backpropagate `d_out` (gradient of the loss with respect to the final
    /// output) through the cached forward pass.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache<T>,
        d_out: ArrayView2<'_, T>,
        want_input_grad: bool,
    ) -> Result<(Vec<LayerGrads<T>>, Option<Array2<T>>)> {
        check_len(self.layers.len(), cache.outputs.len())?;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = d_out.to_owned();
        let mut input_grad = None;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = if i == 0 { &cache.input } else { &cache.outputs[i - 1] };
            let need_dx = i > 0 || want_input_grad;
            let (g, dx) = layer.backward_batch(x.view(), cache.outputs[i].view(), upstream.view(), need_dx)?;
            grads.push(g);
            match dx {
                Some(dx) if i > 0 => upstream = dx,
                dx => input_grad = dx,
            }
        }
        grads.reverse();
        Ok((grads, input_grad))
    }

    /// Flatten all parameters (weights row-major then bias, layer by layer).
    pub fn flat_params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.weight.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[T]) -> Result<()> {
        check_len(self.param_count(), flat.len())?;
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            for w in l.weight.iter_mut() {
                *w = it.next().expect("length checked");
            }
            for b in l.bias.iter_mut() {
                *b = it.next().expect("length checked");
            }
        }
        Ok(())
    }
}

pub(crate) fn flatten_grads<T: Scalar>(grads: &[LayerGrads<T>]) -> Vec<T> {
    let mut out = Vec::new();
    for g in grads {
        out.extend(g.weight.iter().copied());
        out.extend(g.bias.iter().copied());
    }
    out
}
