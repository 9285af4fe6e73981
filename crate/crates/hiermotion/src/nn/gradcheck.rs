//! Central finite-difference verification of the autodiff engine.

use super::graph::{Graph, Var};
use super::NnError;
use ndarray::ArrayD;

/// Compares reverse-mode gradients of a scalar-valued function against
/// central finite differences at h = 1e-5 and returns the maximum relative
/// error over all components of all inputs.
///
/// The closure must build the same computation for any values of the inputs
/// it is given.
pub fn grad_check<Builder>(build: Builder, inputs: &[ArrayD<f64>]) -> Result<f64, NnError>
where
    Builder: Fn(&mut Graph<f64>, &[Var]) -> Var,
{
    const H: f64 = 1e-5;

    let eval = |points: &[ArrayD<f64>]| -> Result<f64, NnError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = points.iter().map(|p| g.leaf(p.clone())).collect();
        let out = build(&mut g, &vars);
        if g.value(out).len() != 1 {
            return Err(NnError::NonScalarOutput);
        }
        Ok(g.scalar_value(out))
    };

    // analytic gradients
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|p| g.leaf_grad(p.clone())).collect();
    let out = build(&mut g, &vars);
    if g.value(out).len() != 1 {
        return Err(NnError::NonScalarOutput);
    }
    g.backward(out);
    let analytic: Vec<ArrayD<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, x)| {
            g.grad(*v)
                .cloned()
                .unwrap_or_else(|| ArrayD::zeros(x.raw_dim()))
        })
        .collect();

    let mut max_rel = 0.0f64;
    let mut work: Vec<ArrayD<f64>> = inputs.to_vec();
    for (ti, input) in inputs.iter().enumerate() {
        for idx in 0..input.len() {
            let orig = work[ti].as_slice_mut().expect("standard layout")[idx];
            work[ti].as_slice_mut().unwrap()[idx] = orig + H;
            let plus = eval(&work)?;
            work[ti].as_slice_mut().unwrap()[idx] = orig - H;
            let minus = eval(&work)?;
            work[ti].as_slice_mut().unwrap()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * H);
            let a = analytic[ti].as_slice().unwrap()[idx];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}
