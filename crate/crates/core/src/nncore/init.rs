use rand::Rng;

use crate::linalg::Matrix;

/// Glorot/Xavier uniform: `U[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-limit..=limit))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("length matches shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn within_limit_and_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = glorot_uniform(4, 8, &mut rng);
        let limit = 0.5f64.sqrt();
        assert!(m.as_slice().iter().all(|x| x.abs() <= limit));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(glorot_uniform(4, 8, &mut rng), m);
    }
}
