use rand::Rng as _;

use crate::matrix::Matrix;
use crate::util::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Test,
}

/// Inverted dropout. In train mode each entry survives with probability
/// `1 − p` and is scaled by `1/(1 − p)`; test mode is the identity.
///
/// Returns the output and the multiplicative mask that produced it.
pub fn dropout_apply(x: &Matrix, p: f64, mode: Mode, rng: &mut Rng) -> (Matrix, Matrix) {
    assert!((0.0..1.0).contains(&p), "dropout probability {p} outside [0, 1)");
    let (n, d) = x.shape();
    if mode == Mode::Test || p == 0.0 {
        return (x.clone(), Matrix::from_fn(n, d, |_, _| 1.0));
    }
    let keep = 1.0 / (1.0 - p);
    let mask = Matrix::from_fn(n, d, |_, _| if rng.random::<f64>() < p { 0.0 } else { keep });
    let mut y = x.clone();
    for (v, m) in y.as_mut_slice().iter_mut().zip(mask.as_slice()) {
        *v *= m;
    }
    (y, mask)
}
