use ndarray::Array2;

fn frequency(i: usize, dim: usize) -> f64 {
    1.0 / 10000f64.powf((2 * i) as f64 / dim as f64)
}

/// Sinusoidal encoding of positions `0..len`; channel `2i` is a sine and
/// channel `2i + 1` the matching cosine. `dim` must be even.
pub fn sinusoidal_1d(len: usize, dim: usize) -> Array2<f64> {
    assert!(dim % 2 == 0, "dim must be even");
    Array2::from_shape_fn((len, dim), |(pos, c)| {
        let a = pos as f64 * frequency(c / 2, dim);
        if c % 2 == 0 {
            a.sin()
        } else {
            a.cos()
        }
    })
}

/// 2-D encoding for a `rows x cols` grid in row-major order. The first half
/// of the channels encodes the row index, the second half the column index.
/// `dim` must be divisible by 4.
pub fn sinusoidal_2d(rows: usize, cols: usize, dim: usize) -> Array2<f64> {
    assert!(dim % 4 == 0, "dim must be divisible by 4");
    let half = dim / 2;
    let pr = sinusoidal_1d(rows, half);
    let pc = sinusoidal_1d(cols, half);
    Array2::from_shape_fn((rows * cols, dim), |(t, c)| {
        let (r, k) = (t / cols, t % cols);
        if c < half {
            pr[[r, c]]
        } else {
            pc[[k, c - half]]
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_position_is_sin_zero_cos_one() {
        let pe = sinusoidal_1d(3, 6);
        assert_eq!(pe.row(0).to_vec(), vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert!((pe[[1, 0]] - 1f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn grid_rows_are_distinct() {
        let pe = sinusoidal_2d(4, 4, 16);
        for a in 0..16 {
            for b in a + 1..16 {
                let d: f64 = (&pe.row(a) - &pe.row(b)).iter().map(|x| x.abs()).sum();
                assert!(d > 1e-3, "{a} {b}");
            }
        }
    }
}
