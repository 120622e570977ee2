use super::{check_shapes, combine, BlasError, GemmProblem, Matrix};

/// Naive `C = alpha*A*B + beta*C` in i-j-l order. Every other kernel is
/// checked against this one.
pub fn gemm_reference(
    problem: &GemmProblem,
    a: &Matrix,
    b: &Matrix,
    c: &Matrix,
) -> Result<Matrix, BlasError> {
    check_shapes(problem, a, b, c)?;
    let mut out = c.clone();
    for i in 0..problem.m {
        for j in 0..problem.n {
            let mut sum = 0.0;
            if problem.alpha != 0.0 {
                for l in 0..problem.k {
                    sum += a.get(i, l) * b.get(l, j);
                }
            }
            out.set(i, j, combine(problem.alpha, sum, problem.beta, c.get(i, j)));
        }
    }
    Ok(out)
}

/// Largest per-element relative error of `actual` against `expected`.
/// Elements that compare equal contribute zero, so exact zeros are fine.
pub fn max_relative_error(actual: &Matrix, expected: &Matrix) -> f64 {
    assert_eq!((actual.rows(), actual.cols()), (expected.rows(), expected.cols()));
    let mut worst: f64 = 0.0;
    for j in 0..expected.cols() {
        for (x, y) in actual.col(j).iter().zip(expected.col(j)) {
            if x == y {
                continue;
            }
            let err = (x - y).abs() / y.abs().max(f64::MIN_POSITIVE);
            worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
        }
    }
    worst
}
