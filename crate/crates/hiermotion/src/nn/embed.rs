//! Sinusoidal timestep embedding.

use super::NnError;

/// Interleaved sin/cos embedding with frequency base 10000:
/// out[2i] = sin(t · w_i), out[2i+1] = cos(t · w_i), w_i = 10000^(-2i/dim).
pub fn sinusoidal_embed(t: u64, dim: usize) -> Result<Vec<f64>, NnError> {
    if dim % 2 != 0 || dim == 0 {
        return Err(NnError::OddEmbedDim(dim));
    }
    let mut out = Vec::with_capacity(dim);
    for i in 0..dim / 2 {
        let freq = 10000f64.powf(-2.0 * i as f64 / dim as f64);
        let arg = t as f64 * freq;
        out.push(arg.sin());
        out.push(arg.cos());
    }
    Ok(out)
}
