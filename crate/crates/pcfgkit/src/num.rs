//! Shared numeric primitives: log-space accumulation, dense linear algebra for
//! closure matrices, and a small Nelder–Mead simplex.

/// log(exp(a) + exp(b)) without leaving log space.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// log Σ exp(x) over a slice.
pub fn log_sum(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = values.iter().map(|&v| (v - m).exp()).sum();
    m + s.ln()
}

/// Row-major square matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    pub n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.n + col] = value;
    }

    #[inline]
    pub fn add_to(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.n + col] += value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.n..(row + 1) * self.n]
    }

    /// self · other
    pub fn matmul(&self, other: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    /// Largest-magnitude eigenvalue estimate by power iteration. For the
    /// nonnegative one-step matrices used here this is the spectral radius.
    pub fn spectral_radius(&self, iterations: usize) -> f64 {
        let n = self.n;
        if n == 0 {
            return 0.0;
        }
        let mut v = vec![1.0 / n as f64; n];
        let mut lambda = 0.0;
        for _ in 0..iterations {
            let mut next = vec![0.0; n];
            for i in 0..n {
                let row = self.row(i);
                let mut acc = 0.0;
                for j in 0..n {
                    acc += row[j] * v[j];
                }
                next[i] = acc;
            }
            let norm: f64 = next.iter().map(|x| x.abs()).sum();
            if norm == 0.0 {
                return 0.0;
            }
            lambda = norm;
            for x in &mut next {
                *x /= norm;
            }
            v = next;
        }
        lambda
    }
}

#[derive(Debug, thiserror::Error)]
#[error("closure iteration diverged: one-step matrix has spectral radius {radius:.6} >= 1")]
pub struct DivergentClosure {
    pub radius: f64,
}

/// Reflexive–transitive closure Σ_k U^k = (I − U)^{-1} of a nonnegative
/// one-step matrix, by Gaussian elimination with partial pivoting.
///
/// The system must be subcritical (spectral radius < 1); a supercritical
/// matrix makes the geometric series diverge even though (I − U) may still be
/// invertible, so the radius is checked first and the fixpoint residual
/// `C = I + U·C` is verified to 1e-12 afterwards.
pub fn transitive_closure(one_step: &SquareMatrix) -> Result<SquareMatrix, DivergentClosure> {
    let n = one_step.n;
    if n == 0 {
        return Ok(SquareMatrix::zeros(0));
    }
    let radius = one_step.spectral_radius(200);
    if radius >= 1.0 - 1e-12 {
        return Err(DivergentClosure { radius });
    }

    // Solve (I - U) X = I.
    let mut a = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let v = if i == j { 1.0 } else { 0.0 } - one_step.get(i, j);
            a.set(i, j, v);
        }
    }
    let mut x = SquareMatrix::identity(n);
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a.get(row, col).abs() > a.get(pivot, col).abs() {
                pivot = row;
            }
        }
        if a.get(pivot, col).abs() < 1e-300 {
            return Err(DivergentClosure { radius: 1.0 });
        }
        if pivot != col {
            for j in 0..n {
                let tmp = a.get(col, j);
                a.set(col, j, a.get(pivot, j));
                a.set(pivot, j, tmp);
                let tmp = x.get(col, j);
                x.set(col, j, x.get(pivot, j));
                x.set(pivot, j, tmp);
            }
        }
        let diag = a.get(col, col);
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = a.get(row, col) / diag;
            if factor == 0.0 {
                continue;
            }
            for j in 0..n {
                a.add_to(row, j, -factor * a.get(col, j));
                x.add_to(row, j, -factor * x.get(col, j));
            }
        }
    }
    for row in 0..n {
        let diag = a.get(row, row);
        for j in 0..n {
            let v = x.get(row, j) / diag;
            x.set(row, j, v);
        }
    }

    // Fixpoint residual check: X = I + U·X elementwise to 1e-12,
    // and closure weights must be nonnegative.
    let ux = one_step.matmul(&x);
    for i in 0..n {
        for j in 0..n {
            let expect = if i == j { 1.0 } else { 0.0 } + ux.get(i, j);
            if (x.get(i, j) - expect).abs() > 1e-12 * expect.abs().max(1.0) || x.get(i, j) < -1e-12 {
                return Err(DivergentClosure { radius });
            }
        }
    }
    Ok(x)
}

/// Nelder–Mead simplex minimizer over R^2 with a parameter-space stopping
/// rule: iteration ends when the simplex diameter falls below `tol`.
pub fn nelder_mead_2d<F>(f: F, start: [f64; 2], tol: f64, max_iter: usize) -> ([f64; 2], f64)
where
    F: Fn(&[f64; 2]) -> f64,
{
    let step = |s: &[f64; 2], i: usize| {
        let mut p = *s;
        p[i] += if p[i].abs() > 1e-3 { 0.1 * p[i].abs() } else { 0.1 };
        p
    };
    let mut simplex = vec![start, step(&start, 0), step(&start, 1)];
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();

    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        simplex = order.iter().map(|&i| simplex[i]).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let diameter = (0..2)
            .map(|d| {
                let lo = simplex.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min);
                let hi = simplex.iter().map(|p| p[d]).fold(f64::NEG_INFINITY, f64::max);
                hi - lo
            })
            .fold(0.0, f64::max);
        if diameter < tol {
            break;
        }

        let centroid = [
            (simplex[0][0] + simplex[1][0]) / 2.0,
            (simplex[0][1] + simplex[1][1]) / 2.0,
        ];
        let reflect = |c: &[f64; 2], w: &[f64; 2], k: f64| {
            [c[0] + k * (c[0] - w[0]), c[1] + k * (c[1] - w[1])]
        };

        let xr = reflect(&centroid, &simplex[2], 1.0);
        let fr = f(&xr);
        if fr < values[0] {
            let xe = reflect(&centroid, &simplex[2], 2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[2] = xe;
                values[2] = fe;
            } else {
                simplex[2] = xr;
                values[2] = fr;
            }
        } else if fr < values[1] {
            simplex[2] = xr;
            values[2] = fr;
        } else {
            let (xc, fc) = if fr < values[2] {
                let xc = reflect(&centroid, &simplex[2], 0.5);
                (xc, f(&xc))
            } else {
                let xc = [
                    centroid[0] + 0.5 * (simplex[2][0] - centroid[0]),
                    centroid[1] + 0.5 * (simplex[2][1] - centroid[1]),
                ];
                (xc, f(&xc))
            };
            if fc < values[2].min(fr) {
                simplex[2] = xc;
                values[2] = fc;
            } else {
                // shrink toward best
                for i in 1..3 {
                    simplex[i] = [
                        simplex[0][0] + 0.5 * (simplex[i][0] - simplex[0][0]),
                        simplex[0][1] + 0.5 * (simplex[i][1] - simplex[0][1]),
                    ];
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }

    let best = (0..3)
        .min_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap())
        .unwrap();
    (simplex[best], values[best])
}
