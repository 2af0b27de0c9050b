//! Small numerical kernels shared across modules: accurate complex
//! `log(1 + t)` / `exp(w) - 1`, compensated summation and a dense complex
//! linear solver for the tiny Newton systems that appear in inversion.

use num_complex::Complex64;

pub type C64 = Complex64;

/// `log(1 + t)` on the principal branch, accurate for small `|t|`.
pub fn log1p(t: C64) -> C64 {
    let modulus_sq_minus_one = 2.0 * t.re + t.norm_sqr();
    C64::new(0.5 * modulus_sq_minus_one.ln_1p(), t.im.atan2(1.0 + t.re))
}

/// `exp(w) - 1`, accurate for small `|w|`.
pub fn expm1(w: C64) -> C64 {
    let (s, c) = w.im.sin_cos();
    let half = (0.5 * w.im).sin();
    C64::new(w.re.exp_m1() * c - 2.0 * half * half, w.re.exp() * s)
}

/// Integer power that accepts negative exponents.
pub fn powi(z: C64, e: i64) -> C64 {
    if e >= 0 {
        z.powi(e as i32)
    } else {
        z.powi((-e) as i32).inv()
    }
}

/// Neumaier (improved Kahan) summation over complex numbers.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: C64,
    comp: C64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: C64) {
        let (re, cre) = two_sum_step(self.sum.re, x.re);
        let (im, cim) = two_sum_step(self.sum.im, x.im);
        self.sum = C64::new(re, im);
        self.comp += C64::new(cre, cim);
    }

    pub fn value(&self) -> C64 {
        self.sum + self.comp
    }
}

fn two_sum_step(sum: f64, x: f64) -> (f64, f64) {
    let t = sum + x;
    let c = if sum.abs() >= x.abs() {
        (sum - t) + x
    } else {
        (x - t) + sum
    };
    (t, c)
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` for a (numerically) singular matrix.
pub fn solve_linear(mut a: Vec<Vec<C64>>, mut b: Vec<C64>) -> Option<Vec<C64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))?;
        if a[pivot][col].norm() == 0.0 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == C64::new(0.0, 0.0) {
                continue;
            }
            for k in col..n {
                let v = a[col][k];
                a[row][k] -= factor * v;
            }
            let v = b[col];
            b[row] -= factor * v;
        }
    }
    let mut x = vec![C64::new(0.0, 0.0); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(phi: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = phi.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

pub fn max_abs(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log1p_matches_ln_for_moderate_arguments() {
        let t = C64::new(0.3, -0.2);
        assert!((log1p(t) - (C64::new(1.0, 0.0) + t).ln()).norm() < 1e-15);
    }

    #[test]
    fn log1p_keeps_relative_accuracy_for_tiny_arguments() {
        let t = C64::new(1e-20, 3e-21);
        let l = log1p(t);
        assert!((l - t).norm() / t.norm() < 1e-15);
    }

    #[test]
    fn expm1_inverts_log1p() {
        for t in [
            C64::new(1e-12, -4e-13),
            C64::new(0.1, 0.2),
            C64::new(-0.4, 0.0),
        ] {
            assert!((expm1(log1p(t)) - t).norm() <= 1e-15 * t.norm().max(1e-300) * 4.0);
        }
    }

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let mut s = CompensatedSum::new();
        s.add(C64::new(1e16, 0.0));
        s.add(C64::new(1.0, 1.0));
        s.add(C64::new(-1e16, 0.0));
        assert_eq!(s.value(), C64::new(1.0, 1.0));
    }

    #[test]
    fn solve_linear_small_system() {
        let a = vec![
            vec![C64::new(2.0, 0.0), C64::new(1.0, 1.0)],
            vec![C64::new(0.0, 1.0), C64::new(3.0, 0.0)],
        ];
        let x_true = vec![C64::new(1.0, -1.0), C64::new(0.5, 2.0)];
        let b: Vec<C64> = a
            .iter()
            .map(|row| row.iter().zip(&x_true).map(|(p, q)| p * q).sum())
            .collect();
        let x = solve_linear(a, b).unwrap();
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).norm() < 1e-14);
        }
    }

    #[test]
    fn singular_system_is_rejected() {
        let a = vec![vec![C64::new(1.0, 0.0); 2]; 2];
        assert!(solve_linear(a, vec![C64::new(1.0, 0.0); 2]).is_none());
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
    }
}
