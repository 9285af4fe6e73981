//! Float abstraction so training can run in f32 while verification runs in
//! f64.

use ndarray::NdFloat;

pub trait Scalar:
    NdFloat + num_traits::FloatConst + num_traits::FromPrimitive + std::iter::Sum
{
    const DTYPE: &'static str;

    fn cast_from(v: f64) -> Self;
    fn cast_f64(self) -> f64;

    fn to_le_bytes_vec(self) -> Vec<u8>;
    fn from_le_slice(bytes: &[u8]) -> Self;
    /// Bytes per element in the checkpoint payload.
    const WIDTH: usize;
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
    const WIDTH: usize = 4;

    fn cast_from(v: f64) -> Self {
        v as f32
    }

    fn cast_f64(self) -> f64 {
        self as f64
    }

    fn to_le_bytes_vec(self) -> Vec<u8> {
        self.to_le_bytes().to_vec()
    }

    fn from_le_slice(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
    const WIDTH: usize = 8;

    fn cast_from(v: f64) -> Self {
        v
    }

    fn cast_f64(self) -> f64 {
        self
    }

    fn to_le_bytes_vec(self) -> Vec<u8> {
        self.to_le_bytes().to_vec()
    }

    fn from_le_slice(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}
