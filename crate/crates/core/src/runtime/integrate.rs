use super::RuntimeError;
use crate::model::DynSystem;

/// One classical fourth-order Runge-Kutta step of `dx/dt = f(x)`, in place.
pub fn rk4_step<F>(f: &mut F, x: &mut [f64], dt: f64)
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    f(x, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    f(&tmp, &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    f(&tmp, &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    f(&tmp, &mut k4);
    for i in 0..n {
        x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Zero-order hold: `u` is held for `eta` seconds, split into `substeps` RK4
/// steps. `observe` sees the state after every substep (index from 1) and may
/// stop the period early by returning `false`. Returns the last state
/// reached and how many substeps ran.
pub fn integrate_period_observed<O>(
    sys: &DynSystem,
    x: &[f64],
    u: &[f64],
    eta: f64,
    substeps: usize,
    mut observe: O,
) -> Result<(Vec<f64>, usize), RuntimeError>
where
    O: FnMut(usize, &[f64]) -> bool,
{
    if substeps == 0 {
        return Err(RuntimeError::ZeroSubsteps);
    }
    let k = x.len();
    let mut point = vec![0.0; k + u.len()];
    point[k..].copy_from_slice(u);
    let mut f = |s: &[f64], out: &mut [f64]| {
        point[..k].copy_from_slice(s);
        sys.eval_field(&point, out);
    };
    let dt = eta / substeps as f64;
    let mut state = x.to_vec();
    for j in 1..=substeps {
        rk4_step(&mut f, &mut state, dt);
        if state.iter().any(|v| !v.is_finite()) {
            return Err(RuntimeError::BlowUp { substep: j });
        }
        if !observe(j, &state) {
            return Ok((state, j));
        }
    }
    Ok((state, substeps))
}

pub fn integrate_period(sys: &DynSystem, x: &[f64], u: &[f64], eta: f64, substeps: usize) -> Result<Vec<f64>, RuntimeError> {
    integrate_period_observed(sys, x, u, eta, substeps, |_, _| true).map(|r| r.0)
}
