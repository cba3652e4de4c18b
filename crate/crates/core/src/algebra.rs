//! Finite-dimensional matrix Lie algebras.
//!
//! An algebra is stored through its structure constants `c[k][i][j]`, defined
//! by `[e_i, e_j] = Σ_k c[k][i][j] e_k` in a fixed basis. The inner product is
//! the identity Gram matrix in that basis; brackets are multiplied by
//! [`LieAlgebra::scale`] so that `|[X, Y]| ≤ |X| |Y|` for every pair.

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Which algebra a descriptor realises.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AlgebraLabel {
    /// `R^d` with the zero bracket.
    Abelian(usize),
    /// Antisymmetric `m × m` matrices.
    So(usize),
    /// Matrices with `Xᵀ I_{p,q} = −I_{p,q} X`.
    SoIndefinite(usize, usize),
}

impl AlgebraLabel {
    pub fn dim(&self) -> usize {
        match *self {
            AlgebraLabel::Abelian(d) => d,
            AlgebraLabel::So(m) => m * (m - 1) / 2,
            AlgebraLabel::SoIndefinite(p, q) => (p + q) * (p + q - 1) / 2,
        }
    }
}

impl fmt::Display for AlgebraLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlgebraLabel::Abelian(d) => write!(f, "abelian:{d}"),
            AlgebraLabel::So(m) => write!(f, "so:{m}"),
            AlgebraLabel::SoIndefinite(p, q) => write!(f, "so:{p},{q}"),
        }
    }
}

impl FromStr for AlgebraLabel {
    type Err = Error;

    /// Parses `abelian:d`, `so:m` or `so:p,q`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown algebra label `{s}`"));
        let (kind, args) = s.trim().split_once(':').ok_or_else(bad)?;
        let nums: Vec<usize> = args
            .split(',')
            .map(|a| a.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        match (kind, nums.as_slice()) {
            ("abelian", &[d]) if d >= 1 => Ok(AlgebraLabel::Abelian(d)),
            ("so", &[m]) if m >= 2 => Ok(AlgebraLabel::So(m)),
            ("so", &[p, q]) if p + q >= 2 => Ok(AlgebraLabel::SoIndefinite(p, q)),
            _ => Err(bad()),
        }
    }
}

/// Coefficients of an algebra element in the descriptor's basis.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraElement(pub Vec<f64>);

impl AlgebraElement {
    pub fn zero(dim: usize) -> Self {
        AlgebraElement(vec![0.0; dim])
    }

    /// The `i`-th basis vector.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        AlgebraElement(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Euclidean norm of the coefficients (the Gram matrix is the identity).
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl Add for &AlgebraElement {
    type Output = AlgebraElement;
    fn add(self, rhs: &AlgebraElement) -> AlgebraElement {
        AlgebraElement(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &AlgebraElement {
    type Output = AlgebraElement;
    fn sub(self, rhs: &AlgebraElement) -> AlgebraElement {
        AlgebraElement(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Mul<&AlgebraElement> for f64 {
    type Output = AlgebraElement;
    fn mul(self, rhs: &AlgebraElement) -> AlgebraElement {
        AlgebraElement(rhs.0.iter().map(|a| self * a).collect())
    }
}

/// Nonzero structure constant, already multiplied by the scale.
#[derive(Clone, Copy, Debug)]
struct Term {
    k: usize,
    i: usize,
    j: usize,
    c: f64,
}

/// Immutable description of a Lie algebra.
#[derive(Clone, Debug)]
pub struct LieAlgebra {
    label: AlgebraLabel,
    dim: usize,
    /// `c[(k * d + i) * d + j]`, unscaled.
    constants: Vec<f64>,
    scale: f64,
    terms: Vec<Term>,
    basis: Vec<DMatrix<f64>>,
}

impl PartialEq for LieAlgebra {
    fn eq(&self, other: &Self) -> bool {
        self.label == other.label
    }
}

impl LieAlgebra {
    /// Builds the algebra named by `label`.
    pub fn new(label: AlgebraLabel) -> Result<Self> {
        let (basis, constants) = match label {
            AlgebraLabel::Abelian(0) => {
                return Err(Error::Config("abelian algebra needs d >= 1".into()))
            }
            AlgebraLabel::Abelian(d) => (Vec::new(), vec![0.0; d * d * d]),
            AlgebraLabel::So(m) if m < 2 => return Err(Error::Config("so(m) needs m >= 2".into())),
            AlgebraLabel::So(3) => so3_hat(),
            AlgebraLabel::So(m) => so_lexicographic(m),
            AlgebraLabel::SoIndefinite(p, q) if p + q < 2 => {
                return Err(Error::Config("so(p,q) needs p+q >= 2".into()))
            }
            AlgebraLabel::SoIndefinite(p, q) => so_indefinite(p, q),
        };
        let dim = label.dim();
        let bound = bracket_bound(dim, &constants);
        let scale = if bound > 0.0 { (1.0 / bound).min(1.0) } else { 1.0 };
        let mut terms = Vec::new();
        for k in 0..dim {
            for i in 0..dim {
                for j in 0..dim {
                    let c = constants[(k * dim + i) * dim + j];
                    if c != 0.0 {
                        terms.push(Term { k, i, j, c: c * scale });
                    }
                }
            }
        }
        Ok(LieAlgebra {
            label,
            dim,
            constants,
            scale,
            terms,
            basis,
        })
    }

    /// Parses a label and builds the algebra.
    pub fn from_label(s: &str) -> Result<Self> {
        Self::new(s.parse()?)
    }

    pub fn label(&self) -> AlgebraLabel {
        self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_abelian(&self) -> bool {
        self.terms.is_empty()
    }

    /// Unscaled structure constant `c[k][i][j]`.
    pub fn structure_constant(&self, k: usize, i: usize, j: usize) -> f64 {
        self.constants[(k * self.dim + i) * self.dim + j]
    }

    /// Matrix realisation of the basis (empty for abelian algebras).
    pub fn basis_matrices(&self) -> &[DMatrix<f64>] {
        &self.basis
    }

    /// Gram matrix of the inner product (the identity).
    pub fn gram(&self) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim)
    }

    fn check(&self, x: &AlgebraElement) -> Result<()> {
        if x.dim() != self.dim {
            return Err(Error::Argument(format!(
                "element has {} coefficients, algebra {} has dimension {}",
                x.dim(),
                self.label,
                self.dim
            )));
        }
        Ok(())
    }

    /// Scaled Lie bracket.
    pub fn bracket(&self, x: &AlgebraElement, y: &AlgebraElement) -> Result<AlgebraElement> {
        self.check(x)?;
        self.check(y)?;
        let mut out = vec![0.0; self.dim];
        self.bracket_acc(&x.0, &y.0, 1.0, &mut out);
        Ok(AlgebraElement(out))
    }

    /// `out += coef · [x, y]` on raw coefficient slices; the hot path of the
    /// form-level bracket.
    #[inline]
    pub fn bracket_acc(&self, x: &[f64], y: &[f64], coef: f64, out: &mut [f64]) {
        for t in &self.terms {
            out[t.k] += coef * t.c * x[t.i] * y[t.j];
        }
    }

    pub fn inner(&self, x: &AlgebraElement, y: &AlgebraElement) -> Result<f64> {
        self.check(x)?;
        self.check(y)?;
        Ok(x.0.iter().zip(&y.0).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self, x: &AlgebraElement) -> f64 {
        x.norm()
    }

    /// `|[x,[y,z]] + [y,[z,x]] + [z,[x,y]]|`.
    pub fn jacobi_residual(
        &self,
        x: &AlgebraElement,
        y: &AlgebraElement,
        z: &AlgebraElement,
    ) -> Result<f64> {
        let a = self.bracket(x, &self.bracket(y, z)?)?;
        let b = self.bracket(y, &self.bracket(z, x)?)?;
        let c = self.bracket(z, &self.bracket(x, y)?)?;
        Ok((&(&a + &b) + &c).norm())
    }

    /// Matrix of the element in the basis realisation.
    pub fn to_matrix(&self, x: &AlgebraElement) -> Option<DMatrix<f64>> {
        let first = self.basis.first()?;
        let mut m = DMatrix::zeros(first.nrows(), first.ncols());
        for (c, b) in x.0.iter().zip(&self.basis) {
            m += b * *c;
        }
        Some(m)
    }
}

fn elementary(m: usize, a: usize, b: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(m, m);
    e[(a, b)] = 1.0;
    e[(b, a)] = -1.0;
    e
}

fn pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m)
        .flat_map(|a| (a + 1..m).map(move |b| (a, b)))
        .collect()
}

/// so(m) in the lexicographic basis `E_ab = e_a⊗e_b − e_b⊗e_a`, `a < b`,
/// with constants from `[E_ab, E_cd] = δ_bc E_ad − δ_ac E_bd − δ_bd E_ac + δ_ad E_bc`.
fn so_lexicographic(m: usize) -> (Vec<DMatrix<f64>>, Vec<f64>) {
    let idx = pairs(m);
    let d = idx.len();
    let position = |a: usize, b: usize| -> (usize, f64) {
        if a < b {
            (idx.iter().position(|&p| p == (a, b)).unwrap(), 1.0)
        } else {
            (idx.iter().position(|&p| p == (b, a)).unwrap(), -1.0)
        }
    };
    let mut c = vec![0.0; d * d * d];
    for (i, &(a, b)) in idx.iter().enumerate() {
        for (j, &(cc, dd)) in idx.iter().enumerate() {
            let mut add = |p: usize, q: usize, s: f64| {
                if p != q {
                    let (k, sign) = position(p, q);
                    c[(k * d + i) * d + j] += s * sign;
                }
            };
            if b == cc {
                add(a, dd, 1.0);
            }
            if a == cc {
                add(b, dd, -1.0);
            }
            if b == dd {
                add(a, cc, -1.0);
            }
            if a == dd {
                add(b, cc, 1.0);
            }
        }
    }
    let basis = idx.iter().map(|&(a, b)| elementary(m, a, b)).collect();
    (basis, c)
}

/// so(3) in the hat-map basis, so that `[e1,e2] = e3` cyclically.
fn so3_hat() -> (Vec<DMatrix<f64>>, Vec<f64>) {
    let basis = vec![
        -elementary(3, 1, 2),
        elementary(3, 0, 2),
        -elementary(3, 0, 1),
    ];
    let mut c = vec![0.0; 27];
    for (i, j, k) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
        c[(k * 3 + i) * 3 + j] = 1.0;
        c[(k * 3 + j) * 3 + i] = -1.0;
    }
    (basis, c)
}

/// so(p,q) with basis `I_{p,q} E_ab`; constants read off matrix commutators.
fn so_indefinite(p: usize, q: usize) -> (Vec<DMatrix<f64>>, Vec<f64>) {
    let m = p + q;
    let signature = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(m, |i, _| {
        if i < p {
            1.0
        } else {
            -1.0
        }
    }));
    let idx = pairs(m);
    let d = idx.len();
    let basis: Vec<_> = idx
        .iter()
        .map(|&(a, b)| &signature * elementary(m, a, b))
        .collect();
    let mut c = vec![0.0; d * d * d];
    for i in 0..d {
        for j in 0..d {
            let comm = &basis[i] * &basis[j] - &basis[j] * &basis[i];
            // X = I S with S antisymmetric; coefficients are S[a][b].
            let s = &signature * comm;
            for (k, &(a, b)) in idx.iter().enumerate() {
                c[(k * d + i) * d + j] = s[(a, b)];
            }
        }
    }
    (basis, c)
}

/// Upper estimate of `sup |[x,y]| / (|x||y|)` for the unscaled constants.
///
/// Alternates top singular vectors of `ad_x` and `ad_y` from every basis
/// vector and a few seeded random starts, then takes the max with the
/// basis-pair ratios.
fn bracket_bound(d: usize, c: &[f64]) -> f64 {
    let at = |k: usize, i: usize, j: usize| c[(k * d + i) * d + j];
    let mut pair_max: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let r = (0..d).map(|k| at(k, i, j).powi(2)).sum::<f64>().sqrt();
            pair_max = pair_max.max(r);
        }
    }
    if pair_max == 0.0 {
        return 0.0;
    }
    let mut best = pair_max;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut starts: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let mut v = vec![0.0; d];
            v[i] = 1.0;
            v
        })
        .collect();
    for _ in 0..8 {
        starts.push((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect());
    }
    for x0 in starts {
        let mut x = nalgebra::DVector::from_vec(x0);
        x /= x.norm();
        for _ in 0..60 {
            // ad_x as a map y -> [x, y]
            let adx = DMatrix::from_fn(d, d, |k, j| (0..d).map(|i| at(k, i, j) * x[i]).sum());
            let svd = adx.svd(false, true);
            let (s, y) = top_singular(&svd);
            best = best.max(s);
            // y fixed: x -> [x, y]
            let ady = DMatrix::from_fn(d, d, |k, i| (0..d).map(|j| at(k, i, j) * y[j]).sum());
            let svd = ady.svd(false, true);
            let (s2, xn) = top_singular(&svd);
            best = best.max(s2);
            if (s2 - s).abs() <= 1e-14 * s2 {
                break;
            }
            x = xn;
        }
    }
    if best <= pair_max * (1.0 + 1e-12) {
        pair_max
    } else {
        best * (1.0 + 1e-9)
    }
}

fn top_singular(svd: &nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>) -> (f64, nalgebra::DVector<f64>) {
    let (imax, smax) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc });
    let vt = svd.v_t.as_ref().expect("requested v_t");
    (smax, vt.row(imax).transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(d: usize, i: usize) -> AlgebraElement {
        AlgebraElement::basis(d, i)
    }

    fn random_element(rng: &mut ChaCha8Rng, d: usize) -> AlgebraElement {
        AlgebraElement((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn labels_round_trip() {
        for s in ["abelian:4", "so:3", "so:5", "so:2,1", "so:1,1"] {
            let l: AlgebraLabel = s.parse().unwrap();
            assert_eq!(l.to_string(), s);
        }
        for s in ["su:2", "so:1", "abelian:0", "so:0,1", "so", "so:x"] {
            assert!(matches!(s.parse::<AlgebraLabel>(), Err(Error::Config(_))), "{s}");
        }
    }

    #[test]
    fn abelian_has_zero_bracket() {
        let g = LieAlgebra::from_label("abelian:1").unwrap();
        assert!(g.is_abelian());
        let g = LieAlgebra::from_label("abelian:4").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_element(&mut rng, 4);
        let y = random_element(&mut rng, 4);
        assert_eq!(g.bracket(&x, &y).unwrap(), AlgebraElement::zero(4));
        let g = LieAlgebra::from_label("abelian:2").unwrap();
        let v = g
            .inner(&AlgebraElement(vec![1.0, 2.0]), &AlgebraElement(vec![3.0, 4.0]))
            .unwrap();
        assert_eq!(v, 11.0);
    }

    #[test]
    fn so3_cyclic_brackets() {
        let g = LieAlgebra::from_label("so:3").unwrap();
        assert_eq!(g.scale(), 1.0);
        let b = |i, j| g.bracket(&e(3, i), &e(3, j)).unwrap();
        assert_eq!(b(0, 1), e(3, 2));
        assert_eq!(b(1, 2), e(3, 0));
        assert_eq!(b(2, 0), e(3, 1));
        assert_eq!(b(0, 0), AlgebraElement::zero(3));
        assert_eq!(g.inner(&e(3, 0), &e(3, 0)).unwrap(), 1.0);
    }

    #[test]
    fn so3_matches_hand_commutators() {
        // Standard generators of rotations about the axes.
        let lx = DMatrix::from_row_slice(3, 3, &[0., 0., 0., 0., 0., -1., 0., 1., 0.]);
        let ly = DMatrix::from_row_slice(3, 3, &[0., 0., 1., 0., 0., 0., -1., 0., 0.]);
        let lz = DMatrix::from_row_slice(3, 3, &[0., -1., 0., 1., 0., 0., 0., 0., 0.]);
        assert_eq!(&lx * &ly - &ly * &lx, lz);
        let g = LieAlgebra::from_label("so:3").unwrap();
        assert_eq!(g.basis_matrices(), &[lx, ly, lz]);
    }

    #[test]
    fn so1_1_is_abelian() {
        let g = LieAlgebra::from_label("so:1,1").unwrap();
        assert_eq!(g.dim(), 1);
        assert!(g.is_abelian());
    }

    #[test]
    fn dimension_mismatch_is_an_argument_error() {
        let g = LieAlgebra::from_label("so:3").unwrap();
        let r = g.bracket(&e(3, 0), &e(2, 0));
        assert!(matches!(r, Err(Error::Argument(_))));
        assert!(matches!(g.inner(&e(4, 0), &e(3, 0)), Err(Error::Argument(_))));
    }

    /// Commutes the explicit basis matrices and reads off coefficients by
    /// least squares against the basis, independent of the closed formula.
    fn brute_force_constants(g: &LieAlgebra) -> Vec<f64> {
        let basis = g.basis_matrices();
        let d = basis.len();
        let flat = DMatrix::from_fn(basis[0].len(), d, |r, c| basis[c].as_slice()[r]);
        let mut out = vec![0.0; d * d * d];
        for i in 0..d {
            for j in 0..d {
                let comm = &basis[i] * &basis[j] - &basis[j] * &basis[i];
                let rhs = nalgebra::DVector::from_column_slice(comm.as_slice());
                let coef = flat.clone().svd(true, true).solve(&rhs, 1e-12).unwrap();
                for k in 0..d {
                    out[(k * d + i) * d + j] = coef[k];
                }
            }
        }
        out
    }

    #[test]
    fn structure_constants_match_matrix_commutators() {
        for label in ["so:2", "so:3", "so:4", "so:5", "so:2,1", "so:2,2", "so:3,1"] {
            let g = LieAlgebra::from_label(label).unwrap();
            let oracle = brute_force_constants(&g);
            let d = g.dim();
            for k in 0..d {
                for i in 0..d {
                    for j in 0..d {
                        let diff = (g.structure_constant(k, i, j) - oracle[(k * d + i) * d + j]).abs();
                        assert!(diff < 1e-12, "{label} c[{k}][{i}][{j}]");
                    }
                }
            }
        }
    }

    #[test]
    fn indefinite_basis_satisfies_defining_relation() {
        for (p, q) in [(1, 1), (2, 1), (2, 2), (3, 1)] {
            let g = LieAlgebra::new(AlgebraLabel::SoIndefinite(p, q)).unwrap();
            let m = p + q;
            let ipq = DMatrix::from_fn(m, m, |r, c| match (r == c, r < p) {
                (true, true) => 1.0,
                (true, false) => -1.0,
                _ => 0.0,
            });
            for x in g.basis_matrices() {
                let lhs = x.transpose() * &ipq + &ipq * x;
                assert!(lhs.norm() == 0.0);
            }
        }
    }

    #[test]
    fn random_triples_satisfy_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for label in ["abelian:3", "so:3", "so:4", "so:5", "so:2,1", "so:3,1"] {
            let g = LieAlgebra::from_label(label).unwrap();
            let d = g.dim();
            for _ in 0..1000 {
                let x = random_element(&mut rng, d);
                let y = random_element(&mut rng, d);
                let z = random_element(&mut rng, d);
                let norms = x.norm() * y.norm() * z.norm();
                // Antisymmetry and Jacobi.
                let xy = g.bracket(&x, &y).unwrap();
                let yx = g.bracket(&y, &x).unwrap();
                assert!((&xy + &yx).norm() <= 1e-14 * x.norm() * y.norm());
                assert!(g.jacobi_residual(&x, &y, &z).unwrap() <= 1e-12 * norms);
                // Submultiplicativity after rescaling.
                assert!(xy.norm() <= x.norm() * y.norm() * (1.0 + 1e-12), "{label}");
                // Ad-invariance holds for the compact algebras.
                if !matches!(g.label(), AlgebraLabel::SoIndefinite(..)) {
                    let lhs = g.inner(&xy, &z).unwrap();
                    let rhs = g.inner(&x, &g.bracket(&y, &z).unwrap()).unwrap();
                    assert!((lhs - rhs).abs() <= 1e-12 * norms, "{label}");
                }
            }
        }
    }

    #[test]
    fn so4_is_rescaled_below_one() {
        let g = LieAlgebra::from_label("so:4").unwrap();
        assert!(g.scale() < 0.75 && g.scale() > 0.7, "{}", g.scale());
    }
}
