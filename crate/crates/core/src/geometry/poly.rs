/// Dense univariate polynomial, coefficients in ascending degree.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn constant(c: f64) -> Self {
        Poly(vec![c])
    }

    /// `a + b·t`
    pub fn linear(a: f64, b: f64) -> Self {
        Poly(vec![a, b])
    }

    pub fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.0.len() <= 1 {
            return Poly::constant(0.0);
        }
        Poly(self.0.iter().enumerate().skip(1).map(|(i, c)| c * i as f64).collect())
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.0.len().max(other.0.len());
        Poly(
            (0..n)
                .map(|i| self.0.get(i).copied().unwrap_or(0.0) + other.0.get(i).copied().unwrap_or(0.0))
                .collect(),
        )
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, k: f64) -> Poly {
        Poly(self.0.iter().map(|c| c * k).collect())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.0.is_empty() || other.0.is_empty() {
            return Poly(Vec::new());
        }
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    /// Drops leading coefficients that are negligible relative to the largest.
    fn trimmed(&self) -> Poly {
        let max = self.0.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let mut c = self.0.clone();
        while c.len() > 1 && c.last().is_some_and(|l| l.abs() <= 1e-14 * max) {
            c.pop();
        }
        Poly(c)
    }

    /// Bound on the magnitude of every root (Cauchy).
    pub fn root_bound(&self) -> f64 {
        let c = self.trimmed();
        let n = c.degree();
        if n == 0 {
            return 0.0;
        }
        let lead = c.0[n].abs();
        1.0 + c.0[..n].iter().fold(0.0f64, |m, a| m.max(a.abs() / lead))
    }

    /// Real roots in `[lo, hi]`, found by recursive isolation: the roots of
    /// the derivative split the interval into monotone pieces that are
    /// bisected. Critical points where the polynomial nearly vanishes are
    /// reported too, so even-multiplicity roots are not lost; callers are
    /// expected to verify candidates.
    pub fn real_roots_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        let p = self.trimmed();
        if !(lo <= hi) {
            return Vec::new();
        }
        p.isolate(lo, hi)
    }

    fn magnitude_at(&self, t: f64) -> f64 {
        let at = t.abs();
        self.0.iter().rev().fold(0.0, |acc, c| acc * at + c.abs())
    }

    fn isolate(&self, lo: f64, hi: f64) -> Vec<f64> {
        let n = self.degree();
        if n == 0 {
            return Vec::new();
        }
        if n == 1 {
            let r = -self.0[0] / self.0[1];
            return if r >= lo && r <= hi { vec![r] } else { Vec::new() };
        }
        let crit = self.derivative().trimmed().isolate(lo, hi);
        let mut knots = Vec::with_capacity(crit.len() + 2);
        knots.push(lo);
        knots.extend(crit.iter().copied());
        knots.push(hi);

        let mut roots = Vec::new();
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (fa, fb) = (self.eval(a), self.eval(b));
            if fa == 0.0 {
                roots.push(a);
            } else if fa.signum() != fb.signum() && fb != 0.0 {
                roots.push(self.bisect(a, b, fa));
            }
        }
        if self.eval(hi) == 0.0 {
            roots.push(hi);
        }
        for c in crit {
            if self.eval(c).abs() <= 1e-9 * self.magnitude_at(c) {
                roots.push(c);
            }
        }
        roots.sort_by(|a, b| a.total_cmp(b));
        roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + a.abs()));
        roots
    }

    fn bisect(&self, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
        loop {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                return if self.eval(a).abs() <= self.eval(b).abs() { a } else { b };
            }
            let fm = self.eval(m);
            if fm == 0.0 {
                return m;
            }
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_roots(roots: &[f64]) -> Poly {
        roots
            .iter()
            .fold(Poly::constant(1.0), |p, r| p.mul(&Poly::linear(-r, 1.0)))
    }

    #[test]
    fn recovers_real_roots_of_octic() {
        let roots = [-3.0, -1.5, -0.2, 0.1, 0.7, 1.9, 2.5, 4.0];
        let p = from_roots(&roots).scale(3.7);
        assert_eq!(p.degree(), 8);
        let got = p.real_roots_in(-p.root_bound(), p.root_bound());
        assert_eq!(got.len(), 8);
        for (g, r) in got.iter().zip(roots.iter()) {
            assert!((g - r).abs() < 1e-10, "{g} vs {r}");
        }
    }

    #[test]
    fn complex_pairs_are_excluded() {
        // (t² + 1)(t − 2)
        let p = Poly(vec![1.0, 0.0, 1.0]).mul(&Poly::linear(-2.0, 1.0));
        let got = p.real_roots_in(-10.0, 10.0);
        assert_eq!(got.len(), 1);
        assert!((got[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn negligible_leading_terms_are_trimmed() {
        let mut p = from_roots(&[1.0, 2.0]);
        p.0.push(1e-20);
        let got = p.real_roots_in(-p.root_bound(), p.root_bound());
        assert_eq!(got.len(), 2);
        assert!((got[0] - 1.0).abs() < 1e-12 && (got[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn double_roots_are_reported() {
        let p = from_roots(&[1.0, 1.0, 3.0]);
        let got = p.real_roots_in(0.0, 5.0);
        assert!(got.iter().any(|r| (r - 1.0).abs() < 1e-7));
        assert!(got.iter().any(|r| (r - 3.0).abs() < 1e-12));
    }

    #[test]
    fn interval_restricts_roots() {
        let p = from_roots(&[-2.0, 0.5, 2.0]);
        let got = p.real_roots_in(0.0, 1.0);
        assert_eq!(got.len(), 1);
        assert!((got[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn arithmetic() {
        let a = Poly(vec![1.0, 2.0]);
        let b = Poly(vec![0.0, 1.0, 3.0]);
        assert_eq!(a.mul(&b).0, vec![0.0, 1.0, 5.0, 6.0]);
        assert_eq!(a.add(&b).0, vec![1.0, 3.0, 3.0]);
        assert_eq!(b.derivative().0, vec![1.0, 6.0]);
        assert_eq!(b.eval(2.0), 14.0);
    }
}
