//! Strided matrix products backed by `matrixmultiply`.

use super::Precision;

/// Operand layout: `false` reads a row-major `rows × cols` block,
/// `true` reads the transpose of a row-major `cols × rows` block.
#[derive(Debug, Clone, Copy)]
pub struct Operand<'a> {
    pub data: &'a [f64],
    pub transposed: bool,
}

impl<'a> Operand<'a> {
    pub fn plain(data: &'a [f64]) -> Self {
        Operand {
            data,
            transposed: false,
        }
    }

    pub fn t(data: &'a [f64]) -> Self {
        Operand {
            data,
            transposed: true,
        }
    }
}

/// `c = a·b + beta·c` with `a: m×k`, `b: k×n`, `c: m×n` (row-major).
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    precision: Precision,
    m: usize,
    k: usize,
    n: usize,
    a: Operand<'_>,
    b: Operand<'_>,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.data.len(), m * k);
    debug_assert_eq!(b.data.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c.iter_mut() {
            *v *= beta;
        }
        return;
    }
    let (rsa, csa) = if a.transposed { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b.transposed { (1, k as isize) } else { (n as isize, 1) };
    match precision {
        Precision::F64 => unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.data.as_ptr(),
                rsa,
                csa,
                b.data.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        },
        Precision::F32 => {
            let a32: Vec<f32> = a.data.iter().map(|&v| v as f32).collect();
            let b32: Vec<f32> = b.data.iter().map(|&v| v as f32).collect();
            let mut c32: Vec<f32> = if beta == 0.0 {
                vec![0.0; m * n]
            } else {
                c.iter().map(|&v| v as f32).collect()
            };
            unsafe {
                matrixmultiply::sgemm(
                    m,
                    k,
                    n,
                    1.0,
                    a32.as_ptr(),
                    rsa,
                    csa,
                    b32.as_ptr(),
                    rsb,
                    csb,
                    beta as f32,
                    c32.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
            for (dst, src) in c.iter_mut().zip(c32) {
                *dst = src as f64;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn transpose(rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; x.len()];
        for i in 0..rows {
            for j in 0..cols {
                t[j * rows + i] = x[i * cols + j];
            }
        }
        t
    }

    #[test]
    fn transposed_operands_match_naive() {
        let (m, k, n) = (4, 3, 5);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.91).cos()).collect();
        let want = naive(m, k, n, &a, &b);
        let at = transpose(m, k, &a);
        let bt = transpose(k, n, &b);
        for (ao, bo) in [
            (Operand::plain(&a), Operand::plain(&b)),
            (Operand::t(&at), Operand::plain(&b)),
            (Operand::plain(&a), Operand::t(&bt)),
            (Operand::t(&at), Operand::t(&bt)),
        ] {
            let mut c = vec![0.0; m * n];
            gemm(Precision::F64, m, k, n, ao, bo, 0.0, &mut c);
            for (x, y) in c.iter().zip(&want) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn beta_accumulates() {
        let a = [1.0, 2.0];
        let b = [3.0, 4.0];
        let mut c = [10.0];
        gemm(Precision::F32, 1, 2, 1, Operand::plain(&a), Operand::plain(&b), 1.0, &mut c);
        assert_eq!(c[0], 21.0);
    }
}
