//! Unrestarted GMRES for the real linear systems of the profile solver.

pub struct GmresOutcome {
    pub solution: Vec<f64>,
    /// `‖b - A x‖ / ‖b‖` from the Hessenberg least-squares estimate.
    pub relative_residual: f64,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` starting from `x = 0`. `project` is applied to `b` and to
/// every new Krylov vector, which keeps the iteration inside an invariant
/// subspace (e.g. even functions) despite roundoff; the residual refers to
/// the projected `b`.
pub fn gmres<A, P>(apply: A, project: P, b: &[f64], tol: f64, max_iter: usize) -> GmresOutcome
where
    A: Fn(&[f64]) -> Vec<f64>,
    P: Fn(&mut [f64]),
{
    let n = b.len();
    let mut b = b.to_vec();
    project(&mut b);
    let beta = norm(&b);
    if beta == 0.0 {
        return GmresOutcome {
            solution: vec![0.0; n],
            relative_residual: 0.0,
            iterations: 0,
        };
    }
    let mut basis: Vec<Vec<f64>> = vec![b.iter().map(|x| x / beta).collect()];
    let mut hess: Vec<Vec<f64>> = Vec::new();
    let mut cs: Vec<f64> = Vec::new();
    let mut sn: Vec<f64> = Vec::new();
    let mut g = vec![beta];
    let mut iterations = 0;

    for j in 0..max_iter {
        let mut w = apply(&basis[j]);
        project(&mut w);
        let mut h = vec![0.0; j + 2];
        // modified Gram–Schmidt, twice for safety
        for _ in 0..2 {
            for (i, v) in basis.iter().enumerate() {
                let c = dot(&w, v);
                h[i] += c;
                for (wk, vk) in w.iter_mut().zip(v) {
                    *wk -= c * vk;
                }
            }
        }
        h[j + 1] = norm(&w);
        for i in 0..j {
            let t = cs[i] * h[i] + sn[i] * h[i + 1];
            h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1];
            h[i] = t;
        }
        let r = h[j].hypot(h[j + 1]);
        let (c, s) = if r == 0.0 { (1.0, 0.0) } else { (h[j] / r, h[j + 1] / r) };
        let sub = h[j + 1];
        h[j] = r;
        h[j + 1] = 0.0;
        cs.push(c);
        sn.push(s);
        g.push(-s * g[j]);
        g[j] *= c;
        hess.push(h);
        iterations = j + 1;
        if g[j + 1].abs() <= tol * beta || sub == 0.0 {
            break;
        }
        basis.push(w.iter().map(|x| x / sub).collect());
    }

    // back substitution on the triangularized Hessenberg matrix
    let k = iterations;
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut acc = g[i];
        for (l, yl) in y.iter().enumerate().skip(i + 1) {
            acc -= hess[l][i] * yl;
        }
        y[i] = acc / hess[i][i];
    }
    let mut x = vec![0.0; n];
    for (yi, v) in y.iter().zip(&basis) {
        for (xk, vk) in x.iter_mut().zip(v) {
            *xk += yi * vk;
        }
    }
    GmresOutcome {
        solution: x,
        relative_residual: g[k].abs() / beta,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_nonsymmetric_system() {
        let a = [[4.0, 1.0, 0.0], [2.0, 5.0, 1.0], [0.0, -1.0, 3.0]];
        let apply = |x: &[f64]| (0..3).map(|i| dot(&a[i], x)).collect::<Vec<_>>();
        let b = [1.0, -2.0, 0.5];
        let out = gmres(apply, |_| {}, &b, 1e-14, 10);
        let ax = apply(&out.solution);
        for (l, r) in ax.iter().zip(&b) {
            assert!((l - r).abs() < 1e-12);
        }
        assert!(out.iterations <= 3);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let out = gmres(|x: &[f64]| x.to_vec(), |_| {}, &[0.0; 4], 1e-12, 5);
        assert_eq!(out.solution, vec![0.0; 4]);
        assert_eq!(out.iterations, 0);
    }
}
