//! Three-weight-layer MLP with explicit forward, backward and SGD.
//!
//! `input → hidden → hidden → classes`, rectifiers on both hidden layers and
//! identity on the output. The second hidden activation is the feature
//! vector Φ(x); the last affine layer is the classifier.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_HIDDEN_WIDTH: usize = 256;

/// Affine layer `y = x · W + b` with `W` stored as `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl DenseLayer {
    fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        DenseLayer {
            weight: Tensor::from_vec(&[fan_in, fan_out], data).expect("sized above"),
            bias: Tensor::zeros(&[fan_out]),
        }
    }

    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        DenseLayer {
            weight: Tensor::zeros(&[fan_in, fan_out]),
            bias: Tensor::zeros(&[fan_out]),
        }
    }

    fn affine(&self, x: &Tensor) -> Result<Tensor> {
        let mut z = x.matmul(&self.weight)?;
        z.add_row_vector(&self.bias)?;
        Ok(z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: [DenseLayer; 3],
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub input: Tensor,
    pub pre1: Tensor,
    pub hidden1: Tensor,
    pub pre2: Tensor,
    /// Φ(x): post-activation output of the second hidden layer.
    pub features: Tensor,
    pub logits: Tensor,
}

impl MlpModel {
    /// Glorot-uniform weights and zero biases, drawn layer by layer.
    pub fn new<R: Rng + ?Sized>(
        input_width: usize,
        hidden_width: usize,
        num_classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        check_widths(input_width, hidden_width, num_classes)?;
        Ok(MlpModel {
            layers: [
                DenseLayer::glorot(input_width, hidden_width, rng),
                DenseLayer::glorot(hidden_width, hidden_width, rng),
                DenseLayer::glorot(hidden_width, num_classes, rng),
            ],
        })
    }

    pub fn zeros(input_width: usize, hidden_width: usize, num_classes: usize) -> Result<Self> {
        check_widths(input_width, hidden_width, num_classes)?;
        Ok(MlpModel {
            layers: [
                DenseLayer::zeros(input_width, hidden_width),
                DenseLayer::zeros(hidden_width, hidden_width),
                DenseLayer::zeros(hidden_width, num_classes),
            ],
        })
    }

    /// Assembles a model from explicit layers; widths must chain.
    pub fn from_layers(layers: [DenseLayer; 3]) -> Result<Self> {
        for (i, l) in layers.iter().enumerate() {
            if l.weight.shape().len() != 2 || l.bias.len() != l.weight.cols() {
                return Err(Error::dim(
                    "MlpModel::from_layers",
                    format!("bias of length {} for layer {i}", l.weight.cols()),
                    l.bias.len(),
                ));
            }
        }
        for i in 0..2 {
            if layers[i].weight.cols() != layers[i + 1].weight.rows() {
                return Err(Error::dim(
                    "MlpModel::from_layers",
                    layers[i].weight.cols(),
                    layers[i + 1].weight.rows(),
                ));
            }
        }
        Ok(MlpModel { layers })
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn hidden_width(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.layers[2].weight.cols()
    }

    pub fn layers(&self) -> &[DenseLayer; 3] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer; 3] {
        &mut self.layers
    }

    /// Parameter tensors in declaration order: W1, b1, W2, b2, W3, b3.
    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn num_params(&self) -> usize {
        self.params().map(Tensor::len).sum()
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        if batch.shape().len() != 2 || batch.cols() != self.input_width() {
            return Err(Error::dim(
                "MlpModel::forward (input width)",
                self.input_width(),
                format!("{:?}", batch.shape()),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, batch: &Tensor) -> Result<ForwardPass> {
        self.check_batch(batch)?;
        let pre1 = self.layers[0].affine(batch)?;
        let hidden1 = pre1.map(relu);
        let pre2 = self.layers[1].affine(&hidden1)?;
        let features = pre2.map(relu);
        let logits = self.layers[2].affine(&features)?;
        Ok(ForwardPass {
            input: batch.clone(),
            pre1,
            hidden1,
            pre2,
            features,
            logits,
        })
    }

    /// Φ(x) only; skips the classifier.
    pub fn features(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_batch(batch)?;
        let h1 = self.layers[0].affine(batch)?.map(relu);
        Ok(self.layers[1].affine(&h1)?.map(relu))
    }

    pub fn logits(&self, batch: &Tensor) -> Result<Tensor> {
        let f = self.features(batch)?;
        self.layers[2].affine(&f)
    }

    /// Gradients of a scalar loss given its derivatives w.r.t. the logits and,
    /// optionally, the features. Runs a fresh forward pass.
    pub fn backward(
        &self,
        batch: &Tensor,
        logit_grad: &Tensor,
        feature_grad: Option<&Tensor>,
    ) -> Result<GradientSet> {
        let pass = self.forward(batch)?;
        self.backward_from(&pass, Some(logit_grad), feature_grad)
    }

    /// Backward from a cached forward pass. Either upstream path may be absent.
    pub fn backward_from(
        &self,
        pass: &ForwardPass,
        logit_grad: Option<&Tensor>,
        feature_grad: Option<&Tensor>,
    ) -> Result<GradientSet> {
        let n = pass.input.rows();
        let hidden = self.hidden_width();
        let classes = self.num_classes();
        let mut grads = GradientSet::zeros_like(self);

        let mut g_feat = match feature_grad {
            Some(g) => {
                if g.shape() != [n, hidden] {
                    return Err(Error::dim(
                        "MlpModel::backward (feature grad)",
                        format!("[{n}, {hidden}]"),
                        format!("{:?}", g.shape()),
                    ));
                }
                g.clone()
            }
            None => Tensor::zeros(&[n, hidden]),
        };
        if let Some(g) = logit_grad {
            if g.shape() != [n, classes] {
                return Err(Error::dim(
                    "MlpModel::backward (logit grad)",
                    format!("[{n}, {classes}]"),
                    format!("{:?}", g.shape()),
                ));
            }
            grads.layers[2].weight = pass.features.t_matmul(g)?;
            grads.layers[2].bias = g.sum_rows();
            g_feat.axpy(1.0, &g.matmul_t(&self.layers[2].weight)?)?;
        }

        let g_pre2 = relu_mask(&g_feat, &pass.pre2);
        grads.layers[1].weight = pass.hidden1.t_matmul(&g_pre2)?;
        grads.layers[1].bias = g_pre2.sum_rows();

        let g_h1 = g_pre2.matmul_t(&self.layers[1].weight)?;
        let g_pre1 = relu_mask(&g_h1, &pass.pre1);
        grads.layers[0].weight = pass.input.t_matmul(&g_pre1)?;
        grads.layers[0].bias = g_pre1.sum_rows();
        Ok(grads)
    }

    /// Plain SGD: `p ← p − lr·g`. `lr = 0` leaves the model untouched.
    pub fn sgd_step(&mut self, grads: &GradientSet, lr: f64) -> Result<()> {
        if !lr.is_finite() || lr < 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be finite and non-negative, got {lr}"
            )));
        }
        grads.check_matches(self)?;
        if lr == 0.0 {
            return Ok(());
        }
        for (p, g) in self.params_mut().zip(grads.params()) {
            p.axpy(-lr, g)?;
        }
        Ok(())
    }

    pub fn snapshot(&self) -> TeacherSnapshot {
        TeacherSnapshot {
            model: self.clone(),
        }
    }

    /// Class predictions, ties resolved toward the lowest class index.
    pub fn predict(&self, batch: &Tensor) -> Result<Vec<usize>> {
        let logits = self.logits(batch)?;
        Ok((0..logits.rows()).map(|i| argmax(logits.row(i))).collect())
    }
}

fn check_widths(input: usize, hidden: usize, classes: usize) -> Result<()> {
    if input == 0 || hidden == 0 || classes == 0 {
        return Err(Error::Config(format!(
            "layer widths must be positive (input {input}, hidden {hidden}, classes {classes})"
        )));
    }
    Ok(())
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

fn relu_mask(grad: &Tensor, pre: &Tensor) -> Tensor {
    let mut out = grad.clone();
    for (g, &z) in out.data_mut().iter_mut().zip(pre.data()) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
    out
}

/// First index of the maximum.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// One gradient tensor per model parameter, same layout as [`MlpModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    layers: [DenseLayer; 3],
}

impl GradientSet {
    pub fn zeros_like(model: &MlpModel) -> Self {
        let l = &model.layers;
        GradientSet {
            layers: [0, 1, 2].map(|i| DenseLayer::zeros(l[i].weight.rows(), l[i].weight.cols())),
        }
    }

    pub fn layers(&self) -> &[DenseLayer; 3] {
        &self.layers
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn add_assign(&mut self, other: &GradientSet) -> Result<()> {
        for (a, b) in self.params_mut().zip(other.params()) {
            a.axpy(1.0, b)?;
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.params().all(|t| t.data().iter().all(|&v| v == 0.0))
    }

    fn check_matches(&self, model: &MlpModel) -> Result<()> {
        for (g, p) in self.params().zip(model.params()) {
            if g.shape() != p.shape() {
                return Err(Error::dim(
                    "GradientSet",
                    format!("{:?}", p.shape()),
                    format!("{:?}", g.shape()),
                ));
            }
        }
        Ok(())
    }
}

/// Frozen copy of a model taken at a task boundary.
///
/// There is no mutable access to the wrapped parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherSnapshot {
    model: MlpModel,
}

impl TeacherSnapshot {
    pub fn model(&self) -> &MlpModel {
        &self.model
    }

    pub fn snapshot(&self) -> TeacherSnapshot {
        self.clone()
    }

    pub fn forward(&self, batch: &Tensor) -> Result<ForwardPass> {
        self.model.forward(batch)
    }

    pub fn features(&self, batch: &Tensor) -> Result<Tensor> {
        self.model.features(batch)
    }
}
