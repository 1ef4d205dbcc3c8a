use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::rng::SeededRng;
use crate::error::{Error, Result};

/// Log clamp applied to probabilities inside [`bce_loss`].
pub const BCE_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
    LeakyRelu { slope: f64 },
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::LeakyRelu { slope } => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
        }
    }

    /// Derivative at input `x`, given the forward output `y`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::LeakyRelu { slope } => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
        }
    }

    pub fn name(self) -> String {
        match self {
            Activation::Tanh => "tanh".into(),
            Activation::Relu => "relu".into(),
            Activation::Sigmoid => "sigmoid".into(),
            Activation::LeakyRelu { slope } => format!("leaky_relu({slope})"),
        }
    }
}

/// Elementwise activation.
pub fn activation(x: &Matrix, kind: Activation) -> Matrix {
    x.map(|v| kind.apply(v))
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean unweighted binary cross-entropy with probabilities clamped to
/// `[BCE_EPS, 1 - BCE_EPS]`.
pub fn bce_loss(p: &[f64], y: &[f64]) -> Result<f64> {
    if p.len() != y.len() {
        return Err(Error::dim("bce_loss", p.len(), y.len()));
    }
    if p.is_empty() {
        return Err(Error::Validation("bce_loss on empty input".into()));
    }
    let total: f64 = p
        .iter()
        .zip(y)
        .map(|(&pi, &yi)| {
            let c = pi.clamp(BCE_EPS, 1.0 - BCE_EPS);
            -(yi * c.ln() + (1.0 - yi) * (1.0 - c).ln())
        })
        .sum();
    Ok(total / p.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for one parameter matrix.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Matrix,
    pub v: Matrix,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize, config: AdamConfig) -> Self {
        Self {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            t: 0,
            config,
        }
    }

    pub fn for_param(param: &Matrix, config: AdamConfig) -> Self {
        Self::new(param.rows(), param.cols(), config)
    }
}

/// One bias-corrected Adam update of `param` in place.
pub fn adam_step(param: &mut Matrix, grad: &Matrix, state: &mut AdamState) -> Result<()> {
    param.check_same_shape(grad, "adam_step")?;
    param.check_same_shape(&state.m, "adam_step")?;
    let step = state.t + 1;
    if !grad.is_finite() {
        return Err(Error::Divergence(format!(
            "adam step {step}: non-finite gradient"
        )));
    }
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    state.t = step;
    let bc1 = 1.0 - beta1.powi(step as i32);
    let bc2 = 1.0 - beta2.powi(step as i32);
    let m = state.m.data_mut();
    let v = state.v.data_mut();
    for (((p, &g), mi), vi) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(m.iter_mut())
        .zip(v.iter_mut())
    {
        *mi = beta1 * *mi + (1.0 - beta1) * g;
        *vi = beta2 * *vi + (1.0 - beta2) * g * g;
        let m_hat = *mi / bc1;
        let v_hat = *vi / bc2;
        *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
    }
    Ok(())
}

/// Glorot bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> Result<f64> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::Validation(format!(
            "glorot fans must be positive (fan_in={fan_in}, fan_out={fan_out})"
        )));
    }
    Ok((6.0 / (fan_in + fan_out) as f64).sqrt())
}

/// Uniform Glorot initialization.
pub fn glorot_init(
    rows: usize,
    cols: usize,
    fan_in: usize,
    fan_out: usize,
    rng: &mut SeededRng,
) -> Result<Matrix> {
    let bound = glorot_bound(fan_in, fan_out)?;
    let data = (0..rows * cols)
        .map(|_| rng.uniform_range(-bound, bound))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activation_values() {
        assert_eq!(Activation::Tanh.apply(0.0), 0.0);
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        assert_eq!(Activation::LeakyRelu { slope: 0.2 }.apply(-1.0), -0.2);
        assert_eq!(Activation::Relu.apply(-3.0), 0.0);
    }

    #[test]
    fn activation_derivatives_match_finite_differences() {
        let kinds = [
            Activation::Tanh,
            Activation::Relu,
            Activation::Sigmoid,
            Activation::LeakyRelu { slope: 0.2 },
        ];
        let h = 1e-5;
        for kind in kinds {
            for &x in &[-2.3, -0.7, 0.4, 1.9] {
                let fd = (kind.apply(x + h) - kind.apply(x - h)) / (2.0 * h);
                let an = kind.derivative(x, kind.apply(x));
                assert!((fd - an).abs() < 1e-8, "{kind:?} at {x}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
    }

    #[test]
    fn bce_examples() {
        let half = bce_loss(&[0.5], &[1.0]).unwrap();
        assert!((half - std::f64::consts::LN_2).abs() < 1e-12);
        let perfect = bce_loss(&[1.0 - BCE_EPS], &[1.0]).unwrap();
        assert!(perfect <= 1.1e-7);
        let pair = bce_loss(&[0.9, 0.1], &[1.0, 0.0]).unwrap();
        assert!((pair - 0.105_360_515_657_826_3).abs() < 1e-12);
        // saturated probabilities stay finite
        assert!(bce_loss(&[0.0, 1.0], &[1.0, 0.0]).unwrap().is_finite());
        assert!(matches!(
            bce_loss(&[0.5], &[1.0, 0.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn adam_first_step() {
        let mut p = Matrix::zeros(1, 1);
        let g = Matrix::filled(1, 1, 1.0);
        let mut st = AdamState::for_param(&p, AdamConfig::default());
        adam_step(&mut p, &g, &mut st).unwrap();
        assert!((p[(0, 0)] + 1e-3).abs() < 1e-8);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn adam_zero_gradient_leaves_param() {
        let mut p = Matrix::from_rows(&[vec![0.3, -1.2]]);
        let before = p.clone();
        let g = Matrix::zeros(1, 2);
        let mut st = AdamState::for_param(&p, AdamConfig::default());
        for _ in 0..50 {
            adam_step(&mut p, &g, &mut st).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(st.t, 50);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut p = Matrix::zeros(1, 1);
        let g = Matrix::filled(1, 1, f64::NAN);
        let mut st = AdamState::for_param(&p, AdamConfig::default());
        let err = adam_step(&mut p, &g, &mut st).unwrap_err();
        assert!(err.to_string().contains("step 1"));
    }

    #[test]
    fn glorot_bounds_and_determinism() {
        let bound = glorot_bound(30, 20).unwrap();
        let a = glorot_init(30, 20, 30, 20, &mut SeededRng::new(5)).unwrap();
        let b = glorot_init(30, 20, 30, 20, &mut SeededRng::new(5)).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|x| x.abs() <= bound));
        assert!(glorot_init(2, 2, 0, 3, &mut SeededRng::new(1)).is_err());
    }

    #[test]
    fn glorot_mean_is_centered() {
        // Uniform(-b, b) has sd b/sqrt(3); the mean of n draws has se b/sqrt(3n).
        let n = 100_000;
        let m = glorot_init(n, 1, 1, 1, &mut SeededRng::new(11)).unwrap();
        let bound = glorot_bound(1, 1).unwrap();
        let se = bound / (3.0 * n as f64).sqrt();
        let mean = m.sum() / n as f64;
        assert!(mean.abs() < 3.0 * se, "mean {mean} se {se}");
    }
}
