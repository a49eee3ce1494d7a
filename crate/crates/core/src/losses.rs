//! Training objectives.
//!
//! Each loss has a plain evaluation on tensors (accumulated in `f64`) and a
//! graph version that records an analytic backward pass. All graph losses
//! return a `[1]` scalar.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::layers::Trace;
use crate::model::{discriminator_forward, ModelConfig};
use crate::nn::{Bound, Var};
use crate::tensor::{Float, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// Hinge tolerance of the heatmap reconstruction, in normalized units.
    pub epsilon: f32,
    pub lambda_rec: f32,
    pub lambda_gp: f32,
    pub lambda_inv: f32,
    /// Adds an L1 match of pooled discriminator features to the inversion loss.
    pub feature_matching: bool,
    pub lambda_fm: f32,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { epsilon: 0.1, lambda_rec: 1.0, lambda_gp: 10.0, lambda_inv: 1.0, feature_matching: false, lambda_fm: 1.0 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f32| v.is_finite() && v >= 0.0;
        if !ok(self.epsilon) {
            return Err(Error::Config(format!("epsilon must be finite and >= 0, got {}", self.epsilon)));
        }
        for (name, v) in
            [("lambda_rec", self.lambda_rec), ("lambda_gp", self.lambda_gp), ("lambda_inv", self.lambda_inv), ("lambda_fm", self.lambda_fm)]
        {
            if !ok(v) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

fn same_shape<T: Float>(what: &str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{what}: shapes {:?} and {:?} differ", a.shape(), b.shape())));
    }
    Ok(())
}

fn batch_of<T: Float>(t: &Tensor<T>) -> usize {
    t.shape().first().copied().unwrap_or(1).max(1)
}

/// Masked hinge-L1 heatmap reconstruction.
///
/// Per sample, `Σ_ij 1[m̂_ij = 1] · max(0, |h_ij − ĥ_ij| − ε)`; the batch
/// (leading dimension) is averaged. Cells with `m̂ = 0` are skipped outright,
/// so their `ĥ` values cannot influence the result.
pub fn masked_hinge_l1<T: Float>(h: &Tensor<T>, h_hat: &Tensor<T>, mask: &Tensor<T>, epsilon: f64) -> Result<f64> {
    same_shape("masked_hinge_l1 (h, ĥ)", h, h_hat)?;
    same_shape("masked_hinge_l1 (h, m̂)", h, mask)?;
    let mut total = 0.0;
    for ((&t, &r), &m) in h.data().iter().zip(h_hat.data()).zip(mask.data()) {
        if m != T::zero() {
            total += ((t.as_f64() - r.as_f64()).abs() - epsilon).max(0.0);
        }
    }
    Ok(total / batch_of(h) as f64)
}

/// `∂/∂ĥ` of [`masked_hinge_l1`].
pub fn masked_hinge_l1_grad<T: Float>(h: &Tensor<T>, h_hat: &Tensor<T>, mask: &Tensor<T>, epsilon: f64) -> Result<Tensor<T>> {
    same_shape("masked_hinge_l1 (h, ĥ)", h, h_hat)?;
    same_shape("masked_hinge_l1 (h, m̂)", h, mask)?;
    let inv_n = 1.0 / batch_of(h) as f64;
    let data = h
        .data()
        .iter()
        .zip(h_hat.data())
        .zip(mask.data())
        .map(|((&t, &r), &m)| {
            let d = r.as_f64() - t.as_f64();
            if m == T::zero() || d.abs() <= epsilon {
                T::zero()
            } else {
                T::from_f64(d.signum() * inv_n)
            }
        })
        .collect();
    Tensor::from_vec(h.shape(), data)
}

/// Graph version of [`masked_hinge_l1`] with `h` and `m̂` as constants.
pub fn masked_hinge_l1_var<'g, T: Float>(h_hat: &Var<'g, T>, h: &Tensor<T>, mask: &Tensor<T>, epsilon: f64) -> Result<Var<'g, T>> {
    let value = masked_hinge_l1(h, h_hat.value(), mask, epsilon)?;
    let grad = masked_hinge_l1_grad(h, h_hat.value(), mask, epsilon)?;
    Ok(h_hat.graph().push(
        Tensor::from_vec(&[1], vec![T::from_f64(value)])?,
        &[h_hat],
        Box::new(move |g, _| vec![Some(grad.scale(g.data()[0]))]),
    ))
}

/// Hinge adversarial losses `(L_D, L_G)` from raw scores:
/// `L_D = mean(max(0, 1 − s_real)) + mean(max(0, 1 + s_fake))`, `L_G = −mean(s_fake)`.
pub fn adversarial_losses(s_real: &[f64], s_fake: &[f64]) -> (f64, f64) {
    let mean = |v: &[f64], f: &dyn Fn(f64) -> f64| if v.is_empty() { 0.0 } else { v.iter().map(|&x| f(x)).sum::<f64>() / v.len() as f64 };
    let d = mean(s_real, &|s| (1.0 - s).max(0.0)) + mean(s_fake, &|s| (1.0 + s).max(0.0));
    let g = -mean(s_fake, &|s| s);
    (d, g)
}

/// `mean(max(0, 1 + sign·s))`, the building block of the hinge losses.
fn hinge_mean<'g, T: Float>(s: &Var<'g, T>, sign: f64) -> Var<'g, T> {
    let n = s.value().numel().max(1) as f64;
    let vals: Vec<f64> = s.value().data().iter().map(|v| v.as_f64()).collect();
    let value = vals.iter().map(|&v| (1.0 + sign * v).max(0.0)).sum::<f64>() / n;
    let shape = s.shape().to_vec();
    s.graph().push(
        Tensor::from_vec(&[1], vec![T::from_f64(value)]).unwrap(),
        &[s],
        Box::new(move |g, _| {
            let g0 = g.data()[0].as_f64();
            let data = vals.iter().map(|&v| T::from_f64(if 1.0 + sign * v > 0.0 { sign * g0 / n } else { 0.0 })).collect();
            vec![Some(Tensor::from_vec(&shape, data).unwrap())]
        }),
    )
}

/// Scalar mean over every element.
pub fn mean<'g, T: Float>(x: &Var<'g, T>) -> Var<'g, T> {
    let n = x.value().numel().max(1);
    let value = x.value().sum() / n as f64;
    let shape = x.shape().to_vec();
    x.graph().push(
        Tensor::from_vec(&[1], vec![T::from_f64(value)]).unwrap(),
        &[x],
        Box::new(move |g, _| vec![Some(Tensor::full(&shape, g.data()[0] / T::from_f64(n as f64)))]),
    )
}

pub fn d_hinge_loss<'g, T: Float>(s_real: &Var<'g, T>, s_fake: &Var<'g, T>) -> Var<'g, T> {
    crate::nn::ops::add(&hinge_mean(s_real, -1.0), &hinge_mean(s_fake, 1.0))
}

pub fn g_hinge_loss<'g, T: Float>(s_fake: &Var<'g, T>) -> Var<'g, T> {
    crate::nn::ops::scale(&mean(s_fake), -T::one())
}

/// Mean absolute error between two equally shaped tensors.
pub fn inversion_reconstruction<T: Float>(x: &Tensor<T>, x_hat: &Tensor<T>) -> Result<f64> {
    same_shape("inversion_reconstruction", x, x_hat)?;
    let n = x.numel().max(1) as f64;
    Ok(x.data().iter().zip(x_hat.data()).map(|(a, b)| (a.as_f64() - b.as_f64()).abs()).sum::<f64>() / n)
}

/// Graph version of [`inversion_reconstruction`] with `x` constant.
pub fn l1_mean_var<'g, T: Float>(x_hat: &Var<'g, T>, x: &Tensor<T>) -> Result<Var<'g, T>> {
    let value = inversion_reconstruction(x, x_hat.value())?;
    let n = x.numel().max(1) as f64;
    let sign: Tensor<T> = x_hat.value().zip_map(x, |r, t| T::from_f64((r - t).as_f64().signum() * (r != t) as u8 as f64 / n));
    Ok(x_hat.graph().push(
        Tensor::from_vec(&[1], vec![T::from_f64(value)])?,
        &[x_hat],
        Box::new(move |g, _| vec![Some(sign.scale(g.data()[0]))]),
    ))
}

/// A realness scorer whose forward pass can be recorded and replayed as a
/// linear map (see [`Trace`]).
pub trait Scorer<T: Float> {
    /// Scores `[N, 1]` for a batch `x`.
    fn score<'g>(&self, p: &Bound<'g, T>, x: &Var<'g, T>, trace: &mut Trace<T>) -> Result<Var<'g, T>>;
}

/// The realness head of the discriminator.
pub struct DiscriminatorScorer<'a>(pub &'a ModelConfig);

impl<T: Float> Scorer<T> for DiscriminatorScorer<'_> {
    fn score<'g>(&self, p: &Bound<'g, T>, x: &Var<'g, T>, trace: &mut Trace<T>) -> Result<Var<'g, T>> {
        Ok(discriminator_forward(self.0, p, x, trace)?.score)
    }
}

/// R1 gradient penalty on one batch.
pub struct GradientPenalty<'g, T: Float> {
    /// `λ/2 · mean_n ‖∇ₓ s_n‖²`.
    pub value: f64,
    /// Per-sample gradient norms `‖∇ₓ s_n‖`.
    pub grad_norms: Vec<f64>,
    root: Var<'g, T>,
    seed: Tensor<T>,
}

impl<'g, T: Float> GradientPenalty<'g, T> {
    /// Root and seed to include when backpropagating into the scorer's
    /// parameters.
    pub fn root(&self) -> (&Var<'g, T>, Tensor<T>) {
        (&self.root, self.seed.clone())
    }
}

/// R1 penalty `λ/2 · mean_n ‖∇ₓ s(x_n)‖²` for a piecewise-linear scorer.
///
/// With `g = ∇ₓ s` held fixed, `∂‖g‖²/∂θ = 2 ∂⟨J_θ, g⟩/∂θ`, where `⟨J_θ, g⟩`
/// is the scorer replayed on input `g` with its activation pattern frozen.
/// Seeding that replay with `λ/N` therefore yields the exact parameter
/// gradient of the penalty without second-order differentiation.
pub fn gradient_penalty<'g, T: Float, S: Scorer<T>>(
    scorer: &S,
    p: &Bound<'g, T>,
    x_real: &Tensor<T>,
    lambda: f64,
) -> Result<GradientPenalty<'g, T>> {
    let graph = p.graph();
    let n = batch_of(x_real);
    let x = graph.leaf(x_real.clone());
    let mut trace = Trace::Record(Vec::new());
    let s = scorer.score(p, &x, &mut trace)?;
    let ones = Tensor::full(s.shape(), T::one());
    let g = graph.backward(&[(&s, ones)], &[&x]).remove(0);

    let per = g.numel() / n;
    let grad_norms: Vec<f64> =
        g.data().chunks(per).map(|c| c.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt()).collect();
    let value = lambda / 2.0 * grad_norms.iter().map(|v| v * v).sum::<f64>() / n as f64;

    let mut replay = Trace::replay(trace.into_slopes());
    let root = scorer.score(p, &graph.leaf(g), &mut replay)?;
    let seed = Tensor::full(root.shape(), T::from_f64(lambda / n as f64));
    Ok(GradientPenalty { value, grad_norms, root, seed })
}
