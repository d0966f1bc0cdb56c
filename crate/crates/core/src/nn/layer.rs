use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{check_len, Error, Result};
use crate::scalar::{all_finite, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Linear),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }

    #[inline]
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Linear => z,
            Activation::Relu => z.max(T::zero()),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    ///
    /// For ReLU `y > 0` iff the pre-activation is positive; the kink at zero
    /// takes derivative 0.
    #[inline]
    pub fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Linear => T::one(),
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
        }
    }
}

/// `activation(W x + b)` with `W` stored as `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn new(weight: Array2<T>, bias: Array1<T>, activation: Activation) -> Result<Self> {
        check_len(weight.nrows(), bias.len())?;
        let layer = Self {
            weight: weight.as_standard_layout().into_owned(),
            bias,
            activation,
        };
        if !layer.is_finite() {
            return Err(Error::NonFinite("layer parameters".into()));
        }
        Ok(layer)
    }

    /// Uniform `[-sqrt(6/(in+out)), sqrt(6/(in+out))]` weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let bound = (6.0 / (inputs + outputs) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let weight = Array2::from_shape_simple_fn((outputs, inputs), || T::of(dist.sample(rng)));
        Self {
            weight,
            bias: Array1::zeros(outputs),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn is_finite(&self) -> bool {
        self.weight.iter().all(|w| w.is_finite()) && self.bias.iter().all(|b| b.is_finite())
    }

    /// Batched forward over the rows of `x` (`batch x in`).
    pub fn forward_batch(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        check_len(self.inputs(), x.ncols())?;
        let mut z = x.dot(&self.weight.t());
        z += &self.bias;
        let act = self.activation;
        z.mapv_inplace(|v| act.apply(v));
        Ok(z)
    }

    /// Batched backward. `y` is this layer's output for input `x`; `dy` the
    /// upstream gradient. Returns parameter gradients summed over the batch
    /// and, when requested, the gradient with respect to `x`.
    pub fn backward_batch(
        &self,
        x: ArrayView2<'_, T>,
        y: ArrayView2<'_, T>,
        dy: ArrayView2<'_, T>,
        want_input_grad: bool,
    ) -> Result<(LayerGrads<T>, Option<Array2<T>>)> {
        check_len(self.inputs(), x.ncols())?;
        check_len(self.outputs(), y.ncols())?;
        if y.dim() != dy.dim() || x.nrows() != y.nrows() {
            return Err(Error::Invalid("backward: batch shapes disagree".into()));
        }
        let act = self.activation;
        let mut dz = dy.to_owned();
        dz.zip_mut_with(&y, |g, &out| *g = *g * act.derivative_from_output(out));
        let weight = dz.t().dot(&x);
        let bias = dz.sum_axis(Axis(0));
        let dx = want_input_grad.then(|| dz.dot(&self.weight));
        Ok((LayerGrads { weight, bias }, dx))
    }
}

pub fn dense_forward<T: Scalar>(layer: &DenseLayer<T>, x: &[T]) -> Result<Vec<T>> {
    check_len(layer.inputs(), x.len())?;
    if !all_finite(x) {
        return Err(Error::NonFinite("dense input".into()));
    }
    let out = layer
        .weight
        .rows()
        .into_iter()
        .zip(layer.bias.iter())
        .map(|(row, &b)| {
            let z = row.iter().zip(x).fold(b, |acc, (&w, &xi)| acc + w * xi);
            layer.activation.apply(z)
        })
        .collect();
    Ok(out)
}

/// Exact gradients of `activation(W x + b)` for one input vector.
pub fn dense_backward<T: Scalar>(
    layer: &DenseLayer<T>,
    x: &[T],
    upstream: &[T],
) -> Result<(LayerGrads<T>, Vec<T>)> {
    check_len(layer.outputs(), upstream.len())?;
    let y = dense_forward(layer, x)?;
    let dz: Vec<T> = y
        .iter()
        .zip(upstream)
        .map(|(&yi, &g)| g * layer.activation.derivative_from_output(yi))
        .collect();
    let weight = Array2::from_shape_fn(layer.weight.dim(), |(o, i)| dz[o] * x[i]);
    let bias = Array1::from(dz.clone());
    let mut dx = vec![T::zero(); layer.inputs()];
    for (row, &g) in layer.weight.rows().into_iter().zip(&dz) {
        for (d, &w) in dx.iter_mut().zip(row.iter()) {
            *d = *d + g * w;
        }
    }
    Ok((LayerGrads { weight, bias }, dx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use ndarray::{arr1, arr2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_linear_layer() {
        let layer = DenseLayer::new(Array2::<f64>::eye(3), Array1::zeros(3), Activation::Linear).unwrap();
        assert_eq!(dense_forward(&layer, &[1.0, -2.0, 3.5]).unwrap(), vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn relu_clips_negative() {
        let layer = DenseLayer::new(arr2(&[[1.0, 1.0]]), arr1(&[-3.0]), Activation::Relu).unwrap();
        assert_eq!(dense_forward(&layer, &[1.0, 1.0]).unwrap(), vec![0.0]);
        let (g, dx) = dense_backward(&layer, &[1.0, 1.0], &[1.0]).unwrap();
        assert!(g.weight.iter().all(|&w| w == 0.0));
        assert_eq!(g.bias[0], 0.0);
        assert_eq!(dx, vec![0.0, 0.0]);
    }

    #[test]
    fn tanh_of_zero() {
        let layer = DenseLayer::new(arr2(&[[0.0]]), arr1(&[0.0]), Activation::Tanh).unwrap();
        assert_eq!(dense_forward(&layer, &[42.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn shape_mismatch() {
        let layer = DenseLayer::new(arr2(&[[1.0, 1.0]]), arr1(&[0.0]), Activation::Linear).unwrap();
        assert!(dense_forward(&layer, &[1.0]).is_err());
        assert!(dense_backward(&layer, &[1.0, 2.0], &[1.0, 1.0]).is_err());
        assert!(DenseLayer::new(arr2(&[[1.0]]), arr1(&[0.0, 1.0]), Activation::Linear).is_err());
    }

    #[test]
    fn scalar_linear_backward() {
        let layer = DenseLayer::new(arr2(&[[2.5]]), arr1(&[0.1]), Activation::Linear).unwrap();
        let (g, dx) = dense_backward(&layer, &[-1.5], &[1.0]).unwrap();
        assert_eq!(g.weight[[0, 0]], -1.5);
        assert_eq!(dx, vec![2.5]);
    }

    #[test]
    fn batch_and_single_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for act in [Activation::Linear, Activation::Relu, Activation::Tanh] {
            let layer = DenseLayer::<f64>::glorot(4, 3, act, &mut rng);
            let x = arr2(&[[0.3, -0.2, 0.9, 0.1], [1.0, 0.5, -0.5, 0.0]]);
            let y = layer.forward_batch(x.view()).unwrap();
            let dy = arr2(&[[1.0, -1.0, 0.5], [0.2, 0.3, -0.7]]);
            let (g, dx) = layer.backward_batch(x.view(), y.view(), dy.view(), true).unwrap();
            let mut gw = Array2::zeros((3, 4));
            for r in 0..2 {
                let single = dense_forward(&layer, x.row(r).as_slice().unwrap()).unwrap();
                for (a, b) in single.iter().zip(y.row(r)) {
                    assert!((a - b).abs() < 1e-12);
                }
                let (gs, dxs) =
                    dense_backward(&layer, x.row(r).as_slice().unwrap(), dy.row(r).as_slice().unwrap()).unwrap();
                gw += &gs.weight;
                for (a, b) in dxs.iter().zip(dx.as_ref().unwrap().row(r)) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
            assert!((&gw - &g.weight).iter().all(|d| d.abs() < 1e-12));
        }
    }

    #[test]
    fn random_layer_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for act in [Activation::Linear, Activation::Tanh, Activation::Relu] {
            let layer = DenseLayer::<f64>::glorot(5, 4, act, &mut rng);
            let x = [0.4, -0.3, 0.8, 0.15, -0.6];
            let up = [0.7, -1.1, 0.25, 0.9];
            let (g, dx) = dense_backward(&layer, &x, &up).unwrap();
            let z: Vec<f64> = dense_forward(
                &DenseLayer::new(layer.weight.clone(), layer.bias.clone(), Activation::Linear).unwrap(),
                &x,
            )
            .unwrap();
            // stay away from the ReLU kink
            assert!(z.iter().all(|v| v.abs() > 1e-3));
            let obj = |l: &DenseLayer<f64>, x: &[f64]| -> f64 {
                dense_forward(l, x).unwrap().iter().zip(&up).map(|(a, b)| a * b).sum()
            };
            let err = grad_check(|p: &[f64]| Ok(obj(&layer, p)), &dx, &x, 1e-5).unwrap();
            assert!(err < 1e-4, "{act:?} input grad err {err}");
            let flat: Vec<f64> = layer.weight.iter().copied().collect();
            let err = grad_check(
                |p: &[f64]| {
                    let mut l = layer.clone();
                    l.weight.as_slice_mut().unwrap().copy_from_slice(p);
                    Ok(obj(&l, &x))
                },
                g.weight.as_slice().unwrap(),
                &flat,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "{act:?} weight grad err {err}");
        }
    }
}
