use alloc::vec;

use super::Tensor;
use crate::math;
use crate::rng::DetRng;

/// Random `[rows, cols]` matrix with orthonormal rows or columns (whichever are fewer), scaled
/// by `gain`. Built by modified Gram-Schmidt on a Gaussian matrix.
pub fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut DetRng) -> Tensor {
    let (tall, short) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    // Column-major `tall × short` basis.
    let mut q = vec![0.0; tall * short];
    for c in 0..short {
        loop {
            let col = &mut q[c * tall..(c + 1) * tall];
            col.iter_mut().for_each(|v| *v = rng.normal());
            for prev in 0..c {
                let (done, cur) = q.split_at_mut(c * tall);
                let p = &done[prev * tall..(prev + 1) * tall];
                let cur = &mut cur[..tall];
                let dot: f64 = p.iter().zip(cur.iter()).map(|(a, b)| a * b).sum();
                cur.iter_mut().zip(p).for_each(|(x, y)| *x -= dot * y);
            }
            let col = &mut q[c * tall..(c + 1) * tall];
            let norm = math::sqrt(col.iter().map(|v| v * v).sum());
            if norm > 1e-8 {
                col.iter_mut().for_each(|v| *v /= norm);
                break;
            }
        }
    }
    let mut data = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let v = if rows >= cols { q[c * tall + r] } else { q[r * tall + c] };
            data[r * cols + c] = gain * v;
        }
    }
    Tensor::matrix(rows, cols, data).expect("sized above")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gram(t: &Tensor, by_cols: bool) -> std::vec::Vec<f64> {
        let (r, c) = t.dims2().unwrap();
        let n = if by_cols { c } else { r };
        let mut out = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                out[a * n + b] = if by_cols {
                    (0..r).map(|i| t.data()[i * c + a] * t.data()[i * c + b]).sum()
                } else {
                    (0..c).map(|j| t.data()[a * c + j] * t.data()[b * c + j]).sum()
                };
            }
        }
        out
    }

    #[test]
    fn tall_and_wide_are_orthonormal() {
        let mut rng = DetRng::new(3, 0);
        for (r, c, by_cols) in [(7, 3, true), (3, 7, false), (5, 5, true)] {
            let t = orthogonal(r, c, 1.0, &mut rng);
            let g = gram(&t, by_cols);
            let n = r.min(c);
            for a in 0..n {
                for b in 0..n {
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((g[a * n + b] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn gain_scales() {
        let mut rng = DetRng::new(3, 0);
        let t = orthogonal(4, 2, 0.01, &mut rng);
        let col0: f64 = (0..4).map(|i| t.data()[i * 2] * t.data()[i * 2]).sum();
        assert!((col0 - 1e-4).abs() < 1e-15);
    }
}
