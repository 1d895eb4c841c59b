/// The iterate `z = (v, m, x)`.
///
/// Variants without a second-moment or momentum component keep the
/// corresponding vector empty: `v` is empty for Nesterov dynamics, `m` is
/// empty for the momentum-free adaptive variant.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub v: Vec<f64>,
    pub m: Vec<f64>,
    pub x: Vec<f64>,
}

impl IterateState {
    pub fn new(v: Vec<f64>, m: Vec<f64>, x: Vec<f64>) -> Self {
        Self { v, m, x }
    }

    /// `(0, 0, x)`.
    pub fn at_rest(x: Vec<f64>) -> Self {
        let d = x.len();
        Self {
            v: vec![0.0; d],
            m: vec![0.0; d],
            x,
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Euclidean norm of the concatenated state.
    pub fn norm(&self) -> f64 {
        self.v
            .iter()
            .chain(&self.m)
            .chain(&self.x)
            .map(|c| c * c)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().chain(&self.m).chain(&self.x).all(|c| c.is_finite())
    }

    pub fn v_nonnegative(&self) -> bool {
        self.v.iter().all(|&c| c >= 0.0)
    }
}
