/// A quadrature rule on the reference simplex.
///
/// Points are barycentric coordinates (`dim + 1` entries each) and weights
/// are relative to the simplex volume, so they sum to one and
/// `∫_T f ≈ |T| Σ_q w_q f(x_q)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    degree: usize,
}

impl QuadratureRule {
    /// Grundmann–Möller rule with parameter `s`, exact for polynomials of
    /// degree `2s + 1` on the `dim`-simplex.
    ///
    /// Some weights are negative for `s ≥ 1`; this is harmless for the
    /// polynomial integrands it is used on.
    pub fn grundmann_moller(dim: usize, s: usize) -> Self {
        assert!((1..=3).contains(&dim), "dimension {dim} is not supported");
        let degree = 2 * s + 1;
        let n = dim as i32;
        let d = degree as i32;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let dim_factorial: f64 = (1..=dim).map(|k| k as f64).product();
        for i in 0..=s {
            let denom = (d + n - 2 * i as i32) as f64;
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let weight = sign * 2f64.powi(-2 * s as i32) * denom.powi(d)
                / (factorial(i) * factorial((d + n) as usize - i))
                * dim_factorial;
            for beta in compositions(s - i, dim + 1) {
                points.extend(beta.iter().map(|&b| (2 * b + 1) as f64 / denom));
                weights.push(weight);
            }
        }
        Self {
            dim,
            points,
            weights,
            degree,
        }
    }

    /// The cheapest Grundmann–Möller rule exact to at least `degree`.
    pub fn with_degree(dim: usize, degree: usize) -> Self {
        Self::grundmann_moller(dim, degree.saturating_sub(1).div_ceil(2))
    }

    /// Degree-5 rule: integrates P1 quartics such as `|u_h|⁴` exactly.
    pub fn default_for(dim: usize) -> Self {
        Self::with_degree(dim, 4)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn exactness_degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn point(&self, q: usize) -> &[f64] {
        let k = self.dim + 1;
        &self.points[q * k..(q + 1) * k]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points.chunks_exact(self.dim + 1).zip(self.weights.iter().copied())
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// All vectors of `parts` non-negative integers summing to `total`.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in (0..=total).rev() {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Mean of `∏ λ_k^{a_k}` over a simplex: `dim! ∏ a_k! / (dim + |a|)!`.
    fn monomial_mean(exponents: &[usize]) -> f64 {
        let dim = exponents.len() - 1;
        let total: usize = exponents.iter().sum();
        factorial(dim) * exponents.iter().map(|&a| factorial(a)).product::<f64>() / factorial(dim + total)
    }

    #[test]
    fn weights_sum_to_one() {
        for dim in 1..=3 {
            for s in 0..=3 {
                let q = QuadratureRule::grundmann_moller(dim, s);
                let sum: f64 = q.weights().iter().sum();
                assert!((sum - 1.0).abs() < 1e-13, "dim {dim} s {s}: {sum}");
                for (p, _) in q.iter() {
                    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn exact_on_monomial_table() {
        for dim in 1..=3 {
            for s in 0..=3 {
                let q = QuadratureRule::grundmann_moller(dim, s);
                for total in 0..=q.exactness_degree() {
                    for exps in compositions(total, dim + 1) {
                        let approx: f64 = q
                            .iter()
                            .map(|(p, w)| w * p.iter().zip(&exps).map(|(l, &a)| l.powi(a as i32)).product::<f64>())
                            .sum();
                        let exact = monomial_mean(&exps);
                        assert!(
                            (approx - exact).abs() < 1e-13,
                            "dim {dim} s {s} {exps:?}: {approx} vs {exact}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn not_exact_beyond_degree() {
        let q = QuadratureRule::grundmann_moller(2, 1);
        let exps = [4, 0, 0];
        let approx: f64 = q.iter().map(|(p, w)| w * p[0].powi(4)).sum();
        assert!((approx - monomial_mean(&exps)).abs() > 1e-6);
    }

    #[test]
    fn degree_selection() {
        assert_eq!(QuadratureRule::with_degree(3, 4).exactness_degree(), 5);
        assert_eq!(QuadratureRule::with_degree(2, 2).exactness_degree(), 3);
        assert_eq!(QuadratureRule::with_degree(1, 1).exactness_degree(), 1);
        assert_eq!(QuadratureRule::default_for(3).len(), 15);
    }
}
