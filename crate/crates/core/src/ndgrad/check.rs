use crate::scalar::Real;

use super::{GradError, Tape, Tensor, Var};

/// Compares the tape gradient of `f` at `x` against central differences
/// with step `h`, returning the worst per-coordinate relative error
/// `|auto - fd| / (|fd| + 1e-8)`.
pub fn finite_diff_check<T, E, F>(f: F, x: &Tensor<T>, h: T) -> Result<T, E>
where
    T: Real,
    E: From<GradError>,
    F: for<'t> Fn(Var<'t, T>) -> Result<Var<'t, T>, E>,
{
    let auto = {
        let tape = Tape::new();
        let xv = tape.param(x.clone());
        let out = f(xv)?;
        tape.gradients(out, &[xv]).map_err(E::from)?.remove(0)
    };
    let eval = |point: Tensor<T>| -> Result<T, E> {
        let tape = Tape::new();
        let xv = tape.param(point);
        let out = f(xv)?;
        if out.value().len() != 1 {
            return Err(GradError::NonScalar(out.shape()).into());
        }
        Ok(out.item())
    };

    let mut worst = T::zero();
    let two_h = h + h;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] = plus.data()[i] + h;
        let mut minus = x.clone();
        minus.data_mut()[i] = minus.data()[i] - h;
        let fd = (eval(plus)? - eval(minus)?) / two_h;
        let err = (auto.data()[i] - fd).abs() / (fd.abs() + T::lit(1e-8));
        worst = worst.max(err);
    }
    Ok(worst)
}
